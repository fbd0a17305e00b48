import json
import math

import numpy as np
import pytest

from landau_particles import InitialCondition, ModelParams
from landau_particles.exceptions import BadSpec
from landau_particles.sweep import default_p, mean_field_sweep, xi


def test_default_p():
    assert default_p(-1.0, 2) is None
    assert default_p(-2.5, 2) == pytest.approx(2 / 1.5 + 0.1)
    # the exponent makes (2 + gamma) p / (p - 1) > -d
    for gamma in (-2.1, -2.5, -2.9):
        for d in (2, 3):
            p = default_p(gamma, d)
            assert (2 + gamma) * p / (p - 1) > -d


def test_xi_values():
    assert xi(0.25, 0.5, -2.5, 2, math.inf) == pytest.approx(0.25**2 * 0.5**-1.5)
    p = 3.0
    assert xi(0.25, 0.5, -2.5, 2, p) == pytest.approx(0.25 ** (2 / 1.5) * 0.5**-1.5)
    assert xi(0.0, 0.5, -2.5, 2, p) == 0.0
    assert xi(0.1, 0.0, -2.5, 2, p) == math.inf


def test_argument_checks():
    p = ModelParams(0.5, 0.0, 2)
    with pytest.raises(BadSpec):
        mean_field_sweep(p, InitialCondition(), [64, 16], n_ref=128)
    with pytest.raises(BadSpec):
        mean_field_sweep(p, InitialCondition(), [16, 64], n_ref=32)


def test_member_equal_to_reference_has_zero_distance():
    p = ModelParams(0.5, 0.0, 2)
    rep = mean_field_sweep(p, InitialCondition(), [8, 16], n_ref=16, t_end=0.03, dt=0.01)
    assert rep.members[1].sup_distance == 0.0
    assert rep.members[0].sup_distance > 0.0
    assert rep.times == pytest.approx([0.0, 0.01, 0.02, 0.03])
    assert rep.metric == "sliced_w2"
    assert rep.members[0].eta0_kind == "sliced_winf_to_reference"
    assert rep.members[0].xi_p_inf is None


def test_report_json_roundtrip():
    p = ModelParams(0.5, -2.5, 2)
    rep = mean_field_sweep(p, InitialCondition("grid_from_density"), [4, 16], n_ref=64, t_end=0.02, dt=0.01)
    d = json.loads(rep.to_json())
    assert d["n_list"] == [4, 16]
    assert d["strictly_decreasing"] == rep.strictly_decreasing
    assert d["p_default"] == pytest.approx(default_p(-2.5, 2))
    m = rep.members[0]
    assert m.eta0_kind == "cell_half_diagonal"
    # 2 x 2 grid on [-5, 5]^2: cells of width 5
    assert m.eta0 == pytest.approx(0.5 * math.hypot(5.0, 5.0))
    assert m.xi_p_inf == pytest.approx(xi(m.eta0, m.eta_m0, -2.5, 2, math.inf))


def test_workers_do_not_change_results():
    p = ModelParams(0.5, 0.0, 2)
    kw = dict(n_ref=32, t_end=0.02, dt=0.01, seed=3)
    a = mean_field_sweep(p, InitialCondition(), [8, 16], workers=1, **kw)
    b = mean_field_sweep(p, InitialCondition(), [8, 16], workers=2, **kw)
    assert a.sup_distances == b.sup_distances
    assert [m.distances for m in a.members] == [m.distances for m in b.members]


def test_small_sweep_decreases():
    p = ModelParams(0.5, 0.0, 2)
    rep = mean_field_sweep(p, InitialCondition(), [4, 16, 64], n_ref=256, t_end=0.05, dt=0.01, seed=7)
    assert rep.strictly_decreasing
    assert np.all(np.isfinite(rep.sup_distances))
