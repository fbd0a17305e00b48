import csv
import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_ensemble
from landau_particles import (
    ModelParams,
    ParticleEnsemble,
    ScoreLattice,
    StepConfig,
    dissipation,
    entropy,
    eta_min,
    eta_trend_report,
    integrate,
    moments,
    momentum,
    score_field,
    velocity_field,
    wasserstein_2,
    wasserstein_inf,
)
from landau_particles.core import mollifier_norm
from landau_particles.diagnostics import (
    csv_header,
    eta_min_envelope,
    sliced_wasserstein_2,
    write_diagnostics_csv,
)
from landau_particles.exceptions import (
    IncompatibleDimension,
    SingleParticle,
    UnsupportedWeightsWarning,
)

# -- moments -------------------------------------------------------------------


def test_moments_examples():
    e = ParticleEnsemble.from_positions([[1.0, 0.0], [0.0, 2.0]], [0.25, 0.75])
    assert moments(e, 0) == 1.0
    assert moments(e, 2) == pytest.approx(0.25 * 2 + 0.75 * 5, rel=1e-15)
    assert moments(e, 1) == pytest.approx(0.25 * math.sqrt(2) + 0.75 * math.sqrt(5), rel=1e-15)
    np.testing.assert_allclose(momentum(e), [0.25, 1.5], rtol=1e-15)


# -- entropy -------------------------------------------------------------------


@pytest.mark.parametrize("eps", [0.5, 1.0])
def test_entropy_single_particle_closed_form(eps):
    # int G log G with G = C eps^-2 e^-<v/eps>; E_G <v/eps> = 5/2 in two dimensions
    p = ModelParams(eps, 0.0, 2)
    e = ParticleEnsemble.from_positions([[0.3, -0.2]])
    expected = math.log(mollifier_norm(2) / eps**2) - 2.5
    assert entropy(e, p) == pytest.approx(expected, abs=1e-6)


def test_entropy_translation_invariant(rng):
    p = ModelParams(0.5, 0.0, 2)
    e = random_ensemble(rng, 10)
    f = e.with_positions(e.positions + np.array([3.1, -7.3]), 0.0)
    assert entropy(f, p) == pytest.approx(entropy(e, p), abs=1e-7)


def test_entropy_decreases_when_spreading(rng):
    p = ModelParams(0.5, 0.0, 2)
    e = random_ensemble(rng, 20)
    values = [entropy(e.with_positions(c * e.positions, 0.0), p) for c in (0.5, 1.0, 2.0, 4.0)]
    assert all(a > b for a, b in zip(values, values[1:]))


# -- dissipation -----------------------------------------------------------------


def test_dissipation_nonnegative(rng):
    for k in range(1000):
        n = int(rng.integers(1, 7))
        gamma = float(rng.uniform(-2.9, 0.0))
        p = ModelParams(float(rng.uniform(0.3, 2.0)), gamma, 2)
        e = random_ensemble(rng, n, equal=bool(k % 2))
        s = score_field(e, p)
        assert dissipation(e, s, p) >= 0.0


def test_dissipation_single_particle(params):
    e = ParticleEnsemble.from_positions([[0.0, 0.0]])
    assert dissipation(e, score_field(e, params), params) == 0.0


def test_dissipation_matches_pair_formula(rng):
    p = ModelParams(0.7, -1.5, 2)
    e = random_ensemble(rng, 5, equal=False)
    s = score_field(e, p)
    ref = 0.0
    for i, j in itertools.product(range(5), repeat=2):
        if i == j:
            continue
        z = e.positions[i] - e.positions[j]
        r = np.linalg.norm(z)
        ds = s.values[i] - s.values[j]
        perp = ds - (ds @ z) / (r * r) * z
        ref += 0.5 * e.weights[i] * e.weights[j] * r ** (2 + p.gamma) * (perp @ perp)
    assert dissipation(e, s, p) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("gamma", [0.0, -2.0, -2.5])
def test_entropy_chain_rule(rng, gamma):
    # dH/dt along the particle velocity equals minus the dissipation
    p = ModelParams(0.5, gamma, 2)
    e = random_ensemble(rng, 12)
    lat = ScoreLattice.around(e, p)
    s = score_field(e, p, None, lat)
    u = velocity_field(e, s, p)
    h = 1e-5
    Hp = entropy(e.with_positions(e.positions + h * u.values, 0.0), p, lattice=lat)
    Hm = entropy(e.with_positions(e.positions - h * u.values, 0.0), p, lattice=lat)
    dH = (Hp - Hm) / (2 * h)
    D = dissipation(e, s, p)
    assert D > 1e-6
    assert dH == pytest.approx(-D, rel=0.02)


# -- eta_min -------------------------------------------------------------------


def test_eta_min_examples():
    e = ParticleEnsemble.from_positions([[0.0, 0.0], [3.0, 4.0], [3.0, 4.5]])
    assert eta_min(e) == 0.5
    with pytest.raises(SingleParticle):
        eta_min(ParticleEnsemble.from_positions([[0.0, 0.0]]))


def test_eta_min_matches_brute_force(rng):
    e = random_ensemble(rng, 40, dim=3)
    d = np.linalg.norm(e.positions[:, None] - e.positions[None], axis=-1)
    d[np.diag_indices(40)] = np.inf
    assert eta_min(e) == pytest.approx(d.min(), rel=1e-15)


def test_eta_min_envelope():
    t = np.linspace(0, 1, 11)
    C, env = eta_min_envelope(t, 0.2 * np.exp(-0.3 * t))
    assert C == pytest.approx(0.3, rel=1e-9)
    assert env == pytest.approx(0.3, rel=1e-9)
    assert eta_min_envelope(t, np.full(11, 0.2)) == (pytest.approx(0.0, abs=1e-12), 0.0)
    assert eta_min_envelope(t, np.r_[0.2, np.zeros(10)])[1] == math.inf


# -- transport metrics -------------------------------------------------------------


def _oracle(a, b):
    best_inf, best_2 = math.inf, math.inf
    for perm in itertools.permutations(range(len(a))):
        d = np.linalg.norm(a - b[list(perm)], axis=1)
        best_inf = min(best_inf, d.max())
        best_2 = min(best_2, np.mean(d**2))
    return best_inf, math.sqrt(best_2)


def test_winf_half_example():
    a = ParticleEnsemble.from_positions([[0.0, 0.0], [1.0, 0.0]])
    b = ParticleEnsemble.from_positions([[0.5, 0.0], [1.5, 0.0]])
    r = wasserstein_inf(a, b)
    assert r.cost == 0.5
    assert r.mode == "exact"
    assert wasserstein_2(a, b).cost == pytest.approx(0.5, rel=1e-15)


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_metrics_match_permutation_oracle(n, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, n, 2))
    ea, eb = ParticleEnsemble.from_positions(a), ParticleEnsemble.from_positions(b)
    oi, o2 = _oracle(a, b)
    assert abs(wasserstein_inf(ea, eb).cost - oi) <= 1e-12
    assert abs(wasserstein_2(ea, eb).cost - o2) <= 1e-12


@given(st.integers(0, 2**32 - 1))
def test_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (ParticleEnsemble.from_positions(x) for x in rng.standard_normal((3, 7, 2)))
    for f in (lambda x, y: wasserstein_inf(x, y).cost, lambda x, y: wasserstein_2(x, y).cost):
        assert f(a, a) == 0.0
        assert f(a, b) == pytest.approx(f(b, a), abs=1e-14)
        assert f(a, c) <= f(a, b) + f(b, c) + 1e-12


def test_translation_distance(rng):
    e = random_ensemble(rng, 9)
    shift = np.array([0.3, -0.4])
    f = e.with_positions(e.positions + shift, 0.0)
    assert wasserstein_inf(e, f).cost == pytest.approx(0.5, rel=1e-12)
    assert wasserstein_2(e, f).cost == pytest.approx(0.5, rel=1e-12)


def test_matching_is_permutation(rng):
    a, b = random_ensemble(rng, 8), random_ensemble(rng, 8)
    for r in (wasserstein_inf(a, b), wasserstein_2(a, b)):
        assert sorted(r.matching) == list(range(8))
        d = json.loads(r.to_json())
        assert d["matching_size"] == 8 and d["value"] == r.cost


def test_unequal_sizes_fall_back_to_sliced(rng):
    a, b = random_ensemble(rng, 5), random_ensemble(rng, 7)
    with pytest.warns(UnsupportedWeightsWarning):
        r = wasserstein_inf(a, b)
    assert r.mode == "sliced" and r.matching is None
    r2 = wasserstein_2(a, b)
    assert r2.metric == "sliced_w2"
    with pytest.raises(ValueError):
        wasserstein_2(a, b, mode="exact")
    with pytest.raises(ValueError):
        wasserstein_2(a, b, mode="bogus")


def test_sliced_w2_below_exact(rng):
    for _ in range(20):
        a, b = random_ensemble(rng, 10), random_ensemble(rng, 10, scale=2.0)
        assert sliced_wasserstein_2(a, b) <= wasserstein_2(a, b).cost + 1e-12


def test_sliced_w2_one_dimensional_exact():
    # along a line every direction sees a scaled copy of the same 1-d problem
    a = ParticleEnsemble.from_positions([[0.0, 0.0], [1.0, 0.0]], [0.5, 0.5])
    b = ParticleEnsemble.from_positions([[2.0, 0.0]])
    d = sliced_wasserstein_2(a, b, n_directions=2000)
    # exact W2 = sqrt((4 + 1) / 2); the mean of cos^2 over directions is 1/2
    assert d == pytest.approx(math.sqrt(2.5 * 0.5), rel=0.05)


def test_dimension_mismatch():
    a = ParticleEnsemble.from_positions([[0.0, 0.0]])
    b = ParticleEnsemble.from_positions([[0.0, 0.0, 0.0]])
    with pytest.raises(IncompatibleDimension):
        wasserstein_inf(a, b)
    with pytest.raises(IncompatibleDimension):
        wasserstein_2(a, b)


# -- trend report and csv ------------------------------------------------------------


def test_eta_trend_identical_runs(rng):
    p = ModelParams(0.5, 0.0, 2)
    e = random_ensemble(rng, 8)
    traj = integrate(e, p, cfg=StepConfig(dt=0.01, t_end=0.05)).ensembles
    rep = eta_trend_report(traj, traj)
    assert np.all(rep.eta == 0.0)
    assert rep.eta_metric == "winf"
    assert rep.envelope_holds


def test_eta_trend_perturbed_runs(rng):
    p = ModelParams(0.5, 0.0, 2)
    e = random_ensemble(rng, 8)
    f = e.with_positions(e.positions + 1e-3 * rng.standard_normal((8, 2)), 0.0)
    cfg = StepConfig(dt=0.01, t_end=0.1)
    ta, tb = integrate(e, p, cfg=cfg).ensembles, integrate(f, p, cfg=cfg).ensembles
    rep = eta_trend_report(ta, tb, metric="w2")
    assert rep.eta_metric == "w2"
    assert np.all(rep.eta > 0)
    assert math.isfinite(rep.eta_growth_rate)
    assert math.isfinite(rep.envelope_rate_a)


def test_eta_trend_mismatched_grids(rng):
    p = ModelParams(0.5, 0.0, 2)
    e = random_ensemble(rng, 4)
    ta = integrate(e, p, cfg=StepConfig(dt=0.01, t_end=0.03)).ensembles
    tb = integrate(e, p, cfg=StepConfig(dt=0.01, t_end=0.02)).ensembles
    with pytest.raises(ValueError):
        eta_trend_report(ta, tb)


def test_csv_roundtrip(tmp_path, rng, params):
    e = random_ensemble(rng, 4)
    traj = integrate(e, params, cfg=StepConfig(dt=0.01, t_end=0.03))
    path = tmp_path / "d.csv"
    write_diagnostics_csv(path, traj.records, 2)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == csv_header(2) == [
        "t", "mass", "px", "py", "energy", "entropy", "dissipation", "eta_min", "max_speed"
    ]
    assert [float(x) for x in rows[1]] == traj.records[0].as_row()
    times = [float(r[0]) for r in rows[1:]]
    assert all(a < b for a, b in zip(times, times[1:]))
