"""Mollifier, mollified log-density, and the score field.

The score ``s(v) = grad G^eps * log(mu * G^eps)(v)`` is discretized with a
uniform (trapezoidal) lattice rule.  All particles share one lattice of nodes
``anchor + h k``, so the log-density is evaluated once per node and reused by
every particle; the node set only changes when a :class:`ScoreLattice` is
rebuilt.  On a fixed lattice the discrete score is the exact gradient of the
lattice entropy ``sum_k h^d rho_k log rho_k`` with respect to particle
positions (divided by the particle weight).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .core import ModelParams, ParticleEnsemble, ScoreField, mollifier_norm
from .exceptions import QuadratureUnderResolved

MAX_LATTICE_NODES = 4_000_000


_END_WEIGHTS = np.array([17.0, 59.0, 43.0, 49.0]) / 48.0


def _bracket(x):
    return np.sqrt(1.0 + np.sum(np.square(x), axis=-1))


def moll_value(p: ModelParams, z) -> np.ndarray:
    """G^eps(z) = C eps^-d exp(-<z / eps>), broadcasting over leading axes."""
    z = np.asarray(z, dtype=np.float64)
    return np.exp(p.log_norm - _bracket(z / p.epsilon))


def moll_grad(p: ModelParams, z) -> np.ndarray:
    """grad G^eps(z) = -(1/eps) <z/eps>^-1 G^eps(z) z/eps."""
    z = np.asarray(z, dtype=np.float64)
    x = z / p.epsilon
    br = _bracket(x)
    g = np.exp(p.log_norm - br)
    return -(g / (p.epsilon * br))[..., None] * x


def log_density(e: ParticleEnsemble, p: ModelParams, u) -> np.ndarray:
    """log (mu * G^eps)(u), evaluated with a guarded log-sum-exp.

    Finite for every finite ``u`` no matter how far it lies from the
    particles.
    """
    u = np.asarray(u, dtype=np.float64)
    flat = np.ascontiguousarray(u.reshape(-1, p.dim) / p.epsilon)
    P = np.ascontiguousarray(e.positions / p.epsilon)
    out = _kernels.log_mixture(flat, P, e.weights, np.log(e.weights))
    return (p.log_norm + out).reshape(u.shape[:-1])


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor trapezoidal rule on ``[-radius, radius]^dim``.

    Nodes and spacing are in mollifier-scaled units (multiples of epsilon).
    The default radius, ``16 + 4 (dim - 2)``, keeps the truncated mass of G
    below 1e-6 (about 7e-7 in two and 3e-8 in three dimensions).
    """

    spacing: float = 0.5
    radius: float | None = None
    dim: int = 2

    def __post_init__(self):
        if self.radius is None:
            object.__setattr__(self, "radius", 16.0 + 4.0 * (self.dim - 2))
        if not (self.spacing > 0 and self.radius > 0):
            raise ValueError("spacing and radius must be positive")
        if self.dim < 1:
            raise ValueError("dim must be positive")

    @property
    def half_width(self) -> int:
        return int(math.floor(self.radius / self.spacing + 1e-9))

    @cached_property
    def nodes(self) -> np.ndarray:
        k = np.arange(-self.half_width, self.half_width + 1) * self.spacing
        grids = np.meshgrid(*([k] * self.dim), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    @cached_property
    def weights(self) -> np.ndarray:
        return np.full(self.nodes.shape[0], self.spacing**self.dim)

    def mollifier_mass(self) -> float:
        """sum_k w_k G(node_k); should be 1 up to quadrature error."""
        g = mollifier_norm(self.dim) * np.exp(-_bracket(self.nodes))
        return float(self.weights @ g)

    def refined(self) -> "QuadratureRule":
        """Same radius, twice the nodes per axis."""
        return QuadratureRule(self.spacing / 2.0, self.radius, self.dim)


@dataclass(frozen=True, eq=False)
class ScoreLattice:
    """Shared node set ``anchor + step * k`` with ``lo <= k <= hi``.

    ``step`` is in velocity units (``rule.spacing * epsilon``).  The lattice
    is anchored at the weighted mean of the ensemble it was built for, which
    makes lattice quantities translation-equivariant; the mean is conserved
    by the dynamics so a trajectory can keep one lattice throughout.
    """

    anchor: np.ndarray
    step: float
    lo: np.ndarray
    hi: np.ndarray
    rule: QuadratureRule
    epsilon: float

    @classmethod
    def around(
        cls,
        e: ParticleEnsemble,
        p: ModelParams,
        q: QuadratureRule | None = None,
        points=None,
        slack: float = 2.0,
        radius: float | None = None,
    ) -> "ScoreLattice":
        """Lattice covering the particles (and ``points``) with margin.

        The margin is ``(radius + slack) * epsilon``; ``radius`` defaults to
        the rule radius.
        """
        q = q or QuadratureRule(dim=p.dim)
        radius = q.radius if radius is None else radius
        pts = e.positions
        if points is not None:
            pts = np.vstack([pts, np.asarray(points, dtype=np.float64).reshape(-1, p.dim)])
        anchor = e.mean()
        step = q.spacing * p.epsilon
        pad = (radius + slack) * p.epsilon
        lo = np.floor((pts.min(axis=0) - pad - anchor) / step).astype(np.int64)
        hi = np.ceil((pts.max(axis=0) + pad - anchor) / step).astype(np.int64)
        n_nodes = int(np.prod(hi - lo + 1))
        if n_nodes > MAX_LATTICE_NODES:
            raise QuadratureUnderResolved(
                f"score lattice would need {n_nodes} nodes; ensemble too spread "
                f"for epsilon={p.epsilon}"
            )
        return cls(anchor.copy(), step, lo, hi, q, p.epsilon)

    @property
    def shape(self) -> tuple:
        return tuple(int(x) for x in (self.hi - self.lo + 1))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def nodes(self) -> np.ndarray:
        axes = [
            self.anchor[c] + self.step * np.arange(self.lo[c], self.hi[c] + 1)
            for c in range(self.anchor.shape[0])
        ]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.ascontiguousarray(np.stack([g.ravel() for g in grids], axis=-1))

    @property
    def cell_volume(self) -> float:
        return self.step ** self.anchor.shape[0]

    @cached_property
    def node_weights(self) -> np.ndarray:
        """Quadrature weights relative to ``cell_volume``.

        Per axis the composite rule with end weights 17/48, 59/48, 43/48,
        49/48 (fourth order, all positive), so refining the lattice shrinks
        the box-edge error by about 16 rather than 2.
        """
        w = np.ones(1)
        for n in self.shape:
            axis = np.ones(n)
            if n >= 8:
                axis[:4] = axis[-4:][::-1] = _END_WEIGHTS
            elif n > 1:
                axis[[0, -1]] = 0.5
            w = np.multiply.outer(w, axis)
        return np.ascontiguousarray(w.ravel())

    def covers(self, points, margin: float | None = None) -> bool:
        """True if every point sits at least ``margin`` inside the lattice.

        ``margin`` defaults to the rule radius times epsilon.
        """
        margin = self.rule.radius * self.epsilon if margin is None else margin
        pts = np.asarray(points).reshape(-1, self.anchor.shape[0])
        lo = self.anchor + self.step * self.lo + margin
        hi = self.anchor + self.step * self.hi - margin
        return bool(np.all(pts >= lo) and np.all(pts <= hi))


def _sweep(e, p, lattice, targets, reuse):
    eps = p.epsilon
    U = lattice.nodes / eps
    P = np.ascontiguousarray(e.positions / eps)
    X = P if reuse else np.ascontiguousarray(targets / eps)
    shift = p.log_norm + 1.0
    logmix, acc = _kernels.lattice_pass(
        U, lattice.node_weights, P, e.weights, np.log(e.weights), shift, X, reuse
    )
    scale = -p.moll_norm * lattice.rule.spacing**p.dim / eps
    return logmix, scale * acc


def _lattice_entropy(p, lattice, logmix):
    log_rho = logmix + p.log_norm
    return float(lattice.cell_volume * np.sum(lattice.node_weights * np.exp(log_rho) * log_rho))


def score(
    e: ParticleEnsemble,
    p: ModelParams,
    q: QuadratureRule | None = None,
    v=None,
    lattice: ScoreLattice | None = None,
) -> np.ndarray:
    """Score at arbitrary point(s) ``v`` (shape ``(d,)`` or ``(..., d)``).

    Without an explicit ``lattice`` one is built around the particles and
    the query points.
    """
    v = np.asarray(v, dtype=np.float64)
    flat = v.reshape(-1, p.dim)
    if lattice is None:
        lattice = ScoreLattice.around(e, p, q, points=flat)
    _, s = _sweep(e, p, lattice, flat, reuse=False)
    return s.reshape(v.shape)


def score_field(
    e: ParticleEnsemble,
    p: ModelParams,
    q: QuadratureRule | None = None,
    lattice: ScoreLattice | None = None,
    check_tol: float | None = None,
) -> ScoreField:
    """Score at every particle plus the lattice entropy, in one sweep.

    ``values[i]`` equals ``score(e, p, q, positions[i], lattice)`` bit for
    bit.  With ``check_tol`` set the computation is repeated on a lattice
    with half the spacing and :class:`QuadratureUnderResolved` is raised if
    the two disagree by more than ``check_tol`` (max-norm).
    """
    if lattice is None:
        lattice = ScoreLattice.around(e, p, q)
    logmix, s = _sweep(e, p, lattice, None, reuse=True)
    if check_tol is not None:
        fine = refine_lattice(lattice)
        _, s_fine = _sweep(e, p, fine, None, reuse=True)
        diff = float(np.max(np.abs(s_fine - s))) if s.size else 0.0
        if diff > check_tol:
            raise QuadratureUnderResolved(
                f"score changed by {diff:.3e} under lattice refinement "
                f"(tolerance {check_tol:.1e})"
            )
    return ScoreField(s, e.time, _lattice_entropy(p, lattice, logmix))


def refine_lattice(lattice: ScoreLattice) -> ScoreLattice:
    """Same extent and anchor, half the spacing."""
    return ScoreLattice(
        lattice.anchor,
        lattice.step / 2.0,
        2 * lattice.lo,
        2 * lattice.hi,
        lattice.rule.refined(),
        lattice.epsilon,
    )


def lattice_entropy(e: ParticleEnsemble, p: ModelParams, lattice: ScoreLattice) -> float:
    """Weighted sum of rho log rho over the lattice nodes."""
    U = lattice.nodes / p.epsilon
    P = np.ascontiguousarray(e.positions / p.epsilon)
    logmix = _kernels.log_mixture(U, P, e.weights, np.log(e.weights))
    return _lattice_entropy(p, lattice, logmix)


@dataclass(frozen=True)
class LipschitzReport:
    max_quotient: float
    bound: float
    n_pairs: int
    passed: bool


def score_lipschitz_check(
    e: ParticleEnsemble,
    p: ModelParams,
    q: QuadratureRule | None = None,
    samples: int = 1000,
    rng=None,
    max_separation: float | None = None,
    rtol: float = 1e-6,
) -> LipschitzReport:
    """Largest ``|s(v1) - s(v2)| / |v1 - v2|`` over random pairs.

    Points are drawn around the ensemble; the quotient of a coincident pair
    counts as 0.  Passes when the maximum stays below ``4 / eps^2``.
    """
    rng = np.random.default_rng(rng)
    max_separation = 2.0 * p.epsilon if max_separation is None else max_separation
    lo = e.positions.min(axis=0) - 2 * p.epsilon
    hi = e.positions.max(axis=0) + 2 * p.epsilon
    v1 = rng.uniform(lo, hi, size=(samples, p.dim))
    direction = rng.normal(size=(samples, p.dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    sep = max_separation * rng.uniform(0.0, 1.0, size=samples) ** 2
    v2 = v1 + sep[:, None] * direction
    lattice = ScoreLattice.around(e, p, q, points=np.vstack([v1, v2]))
    s = score(e, p, q, np.vstack([v1, v2]), lattice)
    ds = np.linalg.norm(s[:samples] - s[samples:], axis=1)
    dv = np.linalg.norm(v1 - v2, axis=1)
    quot = np.divide(ds, dv, out=np.zeros_like(ds), where=dv > 0)
    bound = 4.0 / p.epsilon**2
    worst = float(quot.max()) if samples else 0.0
    return LipschitzReport(worst, bound, samples, worst <= bound * (1 + rtol))
