"""Projection matrix, interaction kernel, and the particle velocity field."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import ModelParams, ParticleEnsemble, ScoreField
from .exceptions import StaleScore, ZeroVector
from .mollifier import QuadratureRule, ScoreLattice, score

# separations at or below this count as coincident: K(v, v) := 0
COINCIDENT = 1e-300


@dataclass(frozen=True, eq=False)
class VelocityField:
    values: np.ndarray
    source_time: float
    dissipation: float | None = None


def projection(z) -> np.ndarray:
    """I - z z^T / |z|^2, the orthogonal projector onto {z}^perp."""
    z = np.asarray(z, dtype=np.float64)
    nz = np.linalg.norm(z)
    if not nz > 0:
        raise ZeroVector("projection of the zero vector is undefined")
    n = z / nz
    return np.eye(z.shape[0]) - np.outer(n, n)


def kernel_eval(p: ModelParams, v, w, s_v, s_w) -> np.ndarray:
    """K(v, w) = -|v - w|^(2+gamma) Pi[v - w] (s_v - s_w).

    Broadcasts over leading axes.  Coincident points give the zero vector.
    """
    v, w, s_v, s_w = (np.asarray(a, dtype=np.float64) for a in (v, w, s_v, s_w))
    dv = v - w
    b = s_v - s_w
    # scale first so tiny separations do not underflow in the norm
    scale = np.max(np.abs(dv), axis=-1, keepdims=True)
    safe = np.where(scale > 0, scale, 1.0)
    r = scale[..., 0] * np.linalg.norm(dv / safe, axis=-1)
    coincident = ~(r > COINCIDENT)
    n = dv / np.where(coincident, 1.0, r)[..., None]
    proj = b - np.sum(n * b, axis=-1, keepdims=True) * n
    pref = np.where(coincident, 0.0, np.where(coincident, 1.0, r) ** (2.0 + p.gamma))
    return -pref[..., None] * proj


def velocity_field(e: ParticleEnsemble, s: ScoreField, p: ModelParams) -> VelocityField:
    """U_i = sum_{j != i} m_j K(v_i, v_j) by symmetric pair accumulation.

    Each unordered pair is evaluated once and contributes to both
    particles, so the weighted momentum of the field cancels pairwise.
    """
    if s.source_time != e.time:
        raise StaleScore(
            f"score computed at t={s.source_time!r}, ensemble is at t={e.time!r}"
        )
    P = np.ascontiguousarray(e.positions)
    S = np.ascontiguousarray(s.values)
    U, diss = _kernels.pair_velocity(P, S, e.weights, 2.0 + p.gamma)
    return VelocityField(U, e.time, diss)


def velocity_at(
    e: ParticleEnsemble,
    s: ScoreField,
    p: ModelParams,
    points,
    q: QuadratureRule | None = None,
    lattice: ScoreLattice | None = None,
) -> np.ndarray:
    """U^eps[mu](x) at arbitrary points, scoring the points on ``lattice``.

    ``s`` must come from the same lattice for the result to be consistent
    with :func:`velocity_field`.
    """
    pts = np.asarray(points, dtype=np.float64)
    flat = np.ascontiguousarray(pts.reshape(-1, p.dim))
    sx = score(e, p, q, flat, lattice)
    U = _kernels.point_velocity(
        flat,
        np.ascontiguousarray(sx),
        np.ascontiguousarray(e.positions),
        np.ascontiguousarray(s.values),
        e.weights,
        2.0 + p.gamma,
    )
    return U.reshape(pts.shape)


@dataclass(frozen=True)
class HolderReport:
    slope: float
    intercept: float
    expected_exponent: float
    threshold: float
    separations: np.ndarray
    differences: np.ndarray
    passed: bool


def kernel_holder_check(
    p: ModelParams,
    e: ParticleEnsemble,
    s: ScoreField | None = None,
    samples: int = 200,
    separations=(1e-4, 1e-2),
    slack: float = 0.15,
    q: QuadratureRule | None = None,
    lattice: ScoreLattice | None = None,
    rng=None,
) -> HolderReport:
    """Log-log slope of |U(v1) - U(v2)| against |v1 - v2|.

    ``v1`` is placed on particles (where the kernel singularity lives) and
    ``v2 = v1 + delta * direction`` with ``delta`` log-uniform in
    ``separations``.  Passes if the fitted slope is at least
    ``3 + gamma - slack``.
    """
    if not (-3.0 < p.gamma <= -2.0):
        raise ValueError("the Hoelder check applies to gamma in (-3, -2]")
    rng = np.random.default_rng(rng)
    if lattice is None:
        lattice = ScoreLattice.around(e, p, q)
    if s is None:
        from .mollifier import score_field

        s = score_field(e, p, q, lattice)
    idx = rng.integers(0, e.n, size=samples)
    v1 = e.positions[idx]
    direction = rng.normal(size=(samples, p.dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    lo, hi = np.log(separations[0]), np.log(separations[1])
    delta = np.exp(rng.uniform(lo, hi, size=samples))
    v2 = v1 + delta[:, None] * direction
    U = velocity_at(e, s, p, np.vstack([v1, v2]), q, lattice)
    diff = np.linalg.norm(U[:samples] - U[samples:], axis=1)
    sep = np.linalg.norm(v2 - v1, axis=1)
    keep = diff > 0
    slope, intercept = np.polyfit(np.log(sep[keep]), np.log(diff[keep]), 1)
    expected = 3.0 + p.gamma
    thr = expected - slack
    return HolderReport(
        float(slope), float(intercept), expected, thr, sep, diff, bool(slope >= thr)
    )
