"""Conserved quantities, entropy and dissipation, and transport metrics."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching
from scipy.spatial.distance import cdist

from . import _kernels
from .core import DiagnosticsRecord, ModelParams, ParticleEnsemble, ScoreField
from .exceptions import IncompatibleDimension, SingleParticle, UnsupportedWeightsWarning
from .mollifier import QuadratureRule, ScoreLattice, lattice_entropy

EXACT_W2_MAX_N = 512
EXACT_WINF_MAX_N = 2048
SLICED_DIRECTIONS = 64
ENTROPY_MARGIN = 24.0


def moments(e: ParticleEnsemble, order: float) -> float:
    """M_p = sum_i m_i <v_i>^p."""
    br2 = 1.0 + np.sum(e.positions**2, axis=1)
    if order == 0:
        return math.fsum(e.weights)
    if order == 2:
        return math.fsum(e.weights * br2)
    return math.fsum(e.weights * br2 ** (order / 2.0))


def momentum(e: ParticleEnsemble) -> np.ndarray:
    return np.array([math.fsum(e.weights * e.positions[:, c]) for c in range(e.dim)])


def entropy(
    e: ParticleEnsemble,
    p: ModelParams,
    q: QuadratureRule | None = None,
    lattice: ScoreLattice | None = None,
    margin: float = ENTROPY_MARGIN,
) -> float:
    """Regularized entropy H = int rho log rho with rho = mu * G^eps.

    Trapezoidal quadrature on a lattice covering the particles inflated by
    ``margin * eps``, unless an explicit ``lattice`` is supplied.
    """
    if lattice is None:
        lattice = ScoreLattice.around(e, p, q, slack=0.0, radius=margin)
    return lattice_entropy(e, p, lattice)


def dissipation(e: ParticleEnsemble, s: ScoreField, p: ModelParams) -> float:
    """D = 1/2 sum_{i,j} m_i m_j |v_i - v_j|^(2+gamma) |Pi[v_i - v_j](s_i - s_j)|^2."""
    if e.n < 2:
        return 0.0
    _, diss = _kernels.pair_velocity(
        np.ascontiguousarray(e.positions),
        np.ascontiguousarray(s.values),
        e.weights,
        2.0 + p.gamma,
    )
    return float(diss)


def eta_min(e: ParticleEnsemble) -> float:
    """Minimum inter-particle distance."""
    if e.n < 2:
        raise SingleParticle("eta_min needs at least two particles")
    return float(_kernels.min_pair_distance(np.ascontiguousarray(e.positions)))


def make_record(e, s, u, p, entropy_value=None) -> DiagnosticsRecord:
    """Diagnostics for one state; ``u`` is the velocity field at that state."""
    H = s.entropy if entropy_value is None else entropy_value
    diss = u.dissipation if u.dissipation is not None else dissipation(e, s, p)
    speeds = np.linalg.norm(u.values, axis=1)
    return DiagnosticsRecord(
        time=e.time,
        mass=math.fsum(e.weights),
        momentum=tuple(float(x) for x in momentum(e)),
        energy=moments(e, 2),
        entropy=float(H),
        dissipation=float(diss),
        eta_min=eta_min(e) if e.n > 1 else math.inf,
        max_speed=float(speeds.max()) if speeds.size else 0.0,
    )


def csv_header(dim: int) -> list:
    names = ["px", "py", "pz"] if dim <= 3 else [f"p{c + 1}" for c in range(dim)]
    return ["t", "mass", *names[:dim], "energy", "entropy", "dissipation", "eta_min", "max_speed"]


def write_diagnostics_csv(path, records, dim: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(csv_header(dim))
        for r in records:
            w.writerow([repr(float(x)) for x in r.as_row()])


# -- transport metrics -------------------------------------------------------


@dataclass(frozen=True)
class TransportPlanResult:
    """``matching[i]`` is the partner in ``b`` of particle ``i`` of ``a``
    (dense exact mode only, else ``None``)."""

    cost: float
    matching: np.ndarray | None
    metric: str
    mode: str

    def to_json(self) -> str:
        size = 0 if self.matching is None else int(len(self.matching))
        return json.dumps(
            {"metric": self.metric, "value": self.cost, "matching_size": size, "mode": self.mode}
        )


def _check_dims(a, b):
    if a.dim != b.dim:
        raise IncompatibleDimension(f"dimensions differ: {a.dim} vs {b.dim}")


def _uniform_pair(a, b) -> bool:
    if a.n != b.n:
        return False
    u = 1.0 / a.n
    return bool(np.allclose(a.weights, u, rtol=1e-12, atol=0) and np.allclose(b.weights, u, rtol=1e-12, atol=0))


def _quantile_steps(x, wx, y, wy):
    """Paired quantiles of two weighted 1-d measures and the step widths."""
    ix = np.argsort(x, kind="stable")
    iy = np.argsort(y, kind="stable")
    cx = np.cumsum(wx[ix])
    cy = np.cumsum(wy[iy])
    cx /= cx[-1]
    cy /= cy[-1]
    levels = np.unique(np.concatenate([[0.0], cx, cy]))
    levels = levels[levels <= 1.0]
    mids = 0.5 * (levels[:-1] + levels[1:])
    widths = np.diff(levels)
    kx = np.minimum(np.searchsorted(cx, mids), len(cx) - 1)
    ky = np.minimum(np.searchsorted(cy, mids), len(cy) - 1)
    return x[ix][kx], y[iy][ky], widths


def _directions(dim, n, seed):
    rng = np.random.default_rng(seed)
    th = rng.normal(size=(n, dim))
    return th / np.linalg.norm(th, axis=1, keepdims=True)


def sliced_wasserstein_2(a, b, n_directions=SLICED_DIRECTIONS, seed=0) -> float:
    """sqrt of the mean over random directions of the squared 1-d W2.

    Exact per direction for arbitrary weights and sizes.
    """
    _check_dims(a, b)
    acc = 0.0
    for th in _directions(a.dim, n_directions, seed):
        xa, xb, w = _quantile_steps(a.positions @ th, a.weights, b.positions @ th, b.weights)
        acc += float(np.sum(w * (xa - xb) ** 2))
    return math.sqrt(acc / n_directions)


def sliced_wasserstein_inf(a, b, n_directions=SLICED_DIRECTIONS, seed=0) -> float:
    """max over random directions of the 1-d W_inf; a lower bound on W_inf."""
    _check_dims(a, b)
    best = 0.0
    for th in _directions(a.dim, n_directions, seed):
        xa, xb, w = _quantile_steps(a.positions @ th, a.weights, b.positions @ th, b.weights)
        gap = np.abs(xa - xb)[w > 0]
        if gap.size:
            best = max(best, float(gap.max()))
    return best


def _perfect_matching(D, r):
    graph = csr_matrix(D <= r)
    match = maximum_bipartite_matching(graph, perm_type="column")
    return match if np.all(match >= 0) else None


def wasserstein_inf(a: ParticleEnsemble, b: ParticleEnsemble) -> TransportPlanResult:
    """Bottleneck assignment: min over bijections of the largest displacement.

    Binary search over the sorted pairwise distances, with a perfect
    bipartite matching as feasibility test.  Unequal sizes or weights fall
    back to a sliced lower bound with a warning.
    """
    _check_dims(a, b)
    if not _uniform_pair(a, b) or a.n > EXACT_WINF_MAX_N:
        warnings.warn(
            "exact W_inf needs equal sizes and equal weights (and N <= "
            f"{EXACT_WINF_MAX_N}); returning a sliced lower bound",
            UnsupportedWeightsWarning,
            stacklevel=2,
        )
        return TransportPlanResult(sliced_wasserstein_inf(a, b), None, "winf", "sliced")
    D = cdist(a.positions, b.positions)
    cand = np.unique(D)
    lo, hi = 0, len(cand) - 1
    best = _perfect_matching(D, cand[hi])
    while lo < hi:
        mid = (lo + hi) // 2
        m = _perfect_matching(D, cand[mid])
        if m is None:
            lo = mid + 1
        else:
            hi, best = mid, m
    return TransportPlanResult(float(cand[lo]), np.asarray(best), "winf", "exact")


def wasserstein_2(
    a: ParticleEnsemble,
    b: ParticleEnsemble,
    mode: str = "auto",
    n_directions: int = SLICED_DIRECTIONS,
    seed: int = 0,
) -> TransportPlanResult:
    """W2 between two empirical measures.

    ``exact`` solves the quadratic-cost assignment problem (equal sizes and
    equal weights); ``sliced`` averages 1-d projections and accepts any
    sizes.  ``auto`` picks exact when it applies and N <= 512.
    """
    _check_dims(a, b)
    if mode not in ("auto", "exact", "sliced"):
        raise ValueError(f"unknown mode {mode!r}")
    exact_ok = _uniform_pair(a, b)
    if mode == "exact" and not exact_ok:
        raise ValueError("exact W2 needs equal sizes and equal weights")
    if mode == "exact" or (mode == "auto" and exact_ok and a.n <= EXACT_W2_MAX_N):
        C = cdist(a.positions, b.positions, "sqeuclidean")
        rows, cols = linear_sum_assignment(C)
        cost = math.sqrt(math.fsum(C[rows, cols]) / a.n)
        return TransportPlanResult(cost, cols, "w2", "exact")
    cost = sliced_wasserstein_2(a, b, n_directions, seed)
    return TransportPlanResult(cost, None, "sliced_w2", "sliced")


# -- eta / eta_m monitoring ---------------------------------------------------


@dataclass(frozen=True)
class EtaTrendReport:
    """Distance between two trajectories and their collision margins.

    ``eta`` is a particle-to-particle proxy: when one trajectory stands in
    for a continuum solution it upper-bounds nothing by itself and is
    labelled accordingly through ``eta_metric``.
    """

    times: np.ndarray
    eta: np.ndarray
    eta_metric: str
    eta_min_a: np.ndarray
    eta_min_b: np.ndarray
    eta_growth_rate: float
    decay_rate_a: float
    decay_rate_b: float
    envelope_rate_a: float
    envelope_rate_b: float
    envelope_holds: bool


def _decay_fit(t, em):
    """Least-squares decay rate of log eta_m and the smallest envelope rate.

    The envelope rate is the least C with eta_m(t) >= eta_m(0) exp(-C t) at
    every sample; it is infinite if eta_m ever reaches zero.
    """
    if np.any(~(em > 0)):
        return math.inf, math.inf
    y = np.log(em)
    if len(t) < 2 or np.ptp(t) == 0:
        return 0.0, 0.0
    slope = np.polyfit(t, y, 1)[0]
    pos = t > t[0]
    env = np.max((y[0] - y[pos]) / (t[pos] - t[0])) if np.any(pos) else 0.0
    return float(-slope), float(max(env, 0.0))


def eta_min_envelope(times, eta_mins) -> tuple:
    """(least-squares decay rate, envelope rate) of an eta_m time series."""
    return _decay_fit(np.asarray(times, float), np.asarray(eta_mins, float))


def eta_trend_report(traj_a, traj_b, metric: str = "winf") -> EtaTrendReport:
    """Compare two trajectories sampled on the same time grid."""
    ta = np.array([e.time for e in traj_a])
    tb = np.array([e.time for e in traj_b])
    if ta.shape != tb.shape or not np.allclose(ta, tb, rtol=0, atol=1e-12):
        raise ValueError("trajectories must share a time grid")
    eta, label = [], metric
    for ea, eb in zip(traj_a, traj_b):
        if metric == "winf" and _uniform_pair(ea, eb):
            eta.append(wasserstein_inf(ea, eb).cost)
        else:
            r = wasserstein_2(ea, eb)
            label = r.metric
            eta.append(r.cost)
    eta = np.array(eta)

    def ems(traj):
        return np.array([eta_min(e) if e.n > 1 else math.inf for e in traj])

    ema, emb = ems(traj_a), ems(traj_b)
    growth = 0.0
    if np.all(eta > 0) and len(ta) > 1:
        growth = float(np.polyfit(ta, np.log(eta), 1)[0])
    ra, ca = _decay_fit(ta, ema) if np.all(np.isfinite(ema)) else (0.0, 0.0)
    rb, cb = _decay_fit(tb, emb) if np.all(np.isfinite(emb)) else (0.0, 0.0)
    holds = math.isfinite(ca) and math.isfinite(cb)
    return EtaTrendReport(ta, eta, label, ema, emb, growth, ra, rb, ca, cb, holds)
