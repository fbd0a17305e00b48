"""Shared value types, validation, and the snapshot file format."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate, special

from .exceptions import (
    BadDimension,
    CoincidentParticles,
    EmptyEnsemble,
    FileFormatError,
    GammaOutOfRange,
    NonFiniteCoordinate,
    NonNormalizedWeights,
    NonPositiveEpsilon,
)

WEIGHT_SUM_TOL = 1e-12
MOLL_NORM_RTOL = 1e-10


def _readonly(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@lru_cache(maxsize=None)
def mollifier_norm(dim: int) -> float:
    """Constant C with ``C * integral exp(-<v>) dv = 1`` over R^dim.

    Computed by radial quadrature; for ``dim == 2`` the closed form is
    ``e / (4 pi)``.
    """
    sphere = 2.0 * math.pi ** (dim / 2.0) / special.gamma(dim / 2.0)
    radial, _ = integrate.quad(
        lambda r: r ** (dim - 1) * math.exp(-math.sqrt(1.0 + r * r)),
        0.0,
        np.inf,
        epsabs=0.0,
        epsrel=1e-13,
        limit=200,
    )
    return 1.0 / (sphere * radial)


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the regularized collision operator.

    Parameters
    ----------
    epsilon : float
        Mollifier width (velocity units), must be positive.
    gamma : float
        Potential exponent in (-3, 0].
    dim : int
        Velocity-space dimension, at least 2.
    moll_norm : float, optional
        Mollifier normalization.  Computed from ``dim`` when omitted and
        checked against the quadrature value when given.
    """

    epsilon: float
    gamma: float
    dim: int = 2
    moll_norm: float | None = None

    def __post_init__(self):
        validate_params(self, _check_norm=False)
        exact = mollifier_norm(int(self.dim))
        if self.moll_norm is None:
            object.__setattr__(self, "moll_norm", exact)
        elif abs(self.moll_norm - exact) > MOLL_NORM_RTOL * exact:
            raise ValueError(
                f"moll_norm={self.moll_norm!r} does not normalize the mollifier "
                f"(expected {exact!r})"
            )

    @property
    def log_norm(self) -> float:
        """log of the prefactor ``moll_norm * epsilon**-dim`` of G^eps."""
        return math.log(self.moll_norm) - self.dim * math.log(self.epsilon)


def validate_params(p: ModelParams, _check_norm: bool = True) -> ModelParams:
    if not (isinstance(p.dim, (int, np.integer)) and p.dim >= 2):
        raise BadDimension(f"dim must be an integer >= 2, got {p.dim!r}")
    if not (math.isfinite(p.epsilon) and p.epsilon > 0):
        raise NonPositiveEpsilon(f"epsilon must be positive, got {p.epsilon!r}")
    if not (-3.0 < p.gamma <= 0.0):
        raise GammaOutOfRange(f"gamma must lie in (-3, 0], got {p.gamma!r}")
    if _check_norm:
        exact = mollifier_norm(int(p.dim))
        if abs(p.moll_norm - exact) > MOLL_NORM_RTOL * exact:
            raise ValueError("moll_norm inconsistent with dim")
    return p


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Weighted empirical measure ``sum_i w_i delta_{x_i}`` at a given time.

    Arrays are copied and frozen on construction.  Use
    :func:`validate_ensemble` (or :meth:`from_positions`) to enforce the
    weight and finiteness invariants.
    """

    positions: np.ndarray
    weights: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=np.float64))
        object.__setattr__(self, "positions", _readonly(pos))
        object.__setattr__(self, "weights", _readonly(np.ravel(self.weights)))
        object.__setattr__(self, "time", float(self.time))

    @classmethod
    def from_positions(cls, positions, weights=None, time=0.0):
        """Equal weights unless ``weights`` is given; validates the result."""
        positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
        if weights is None:
            n = positions.shape[0]
            weights = np.full(n, 1.0 / n) if n else np.empty(0)
        return validate_ensemble(cls(positions, weights, time))

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def with_positions(self, positions, time) -> "ParticleEnsemble":
        # weights are shared, never recomputed, so mass is exactly preserved
        new = object.__new__(ParticleEnsemble)
        object.__setattr__(new, "positions", _readonly(positions))
        object.__setattr__(new, "weights", self.weights)
        object.__setattr__(new, "time", float(time))
        return new

    def shifted(self, offset) -> "ParticleEnsemble":
        return self.with_positions(self.positions + np.asarray(offset), self.time)

    def mean(self) -> np.ndarray:
        return self.weights @ self.positions


def validate_ensemble(e: ParticleEnsemble, params: ModelParams | None = None):
    """Return ``e`` unchanged if its invariants hold, raise otherwise.

    With ``params`` given and ``gamma <= -2`` coincident particles are also
    rejected, since the kernel prefactor is singular there.
    """
    pos, w = e.positions, e.weights
    if pos.size == 0 or pos.shape[0] == 0:
        raise EmptyEnsemble("ensemble has no particles")
    if w.shape != (pos.shape[0],):
        raise NonNormalizedWeights(
            f"{w.shape[0]} weights for {pos.shape[0]} particles"
        )
    if not np.all(np.isfinite(pos)):
        raise NonFiniteCoordinate("positions contain non-finite values")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise NonNormalizedWeights("weights must be finite and positive")
    if abs(math.fsum(w) - 1.0) > WEIGHT_SUM_TOL:
        raise NonNormalizedWeights(f"weights sum to {math.fsum(w)!r}, not 1")
    if params is not None:
        if pos.shape[1] != params.dim:
            raise BadDimension(
                f"ensemble dimension {pos.shape[1]} != model dimension {params.dim}"
            )
        if params.gamma <= -2.0 and pos.shape[0] > 1:
            from ._kernels import min_pair_distance

            if min_pair_distance(np.ascontiguousarray(pos)) == 0.0:
                raise CoincidentParticles(
                    "coincident particles are not allowed for gamma <= -2"
                )
    return e


@dataclass(frozen=True, eq=False)
class ScoreField:
    """Score values ``grad G^eps * log(mu * G^eps)`` at every particle.

    ``entropy`` is the lattice-quadrature regularized entropy of the same
    ensemble when it was produced by the lattice sweep, else ``None``.
    """

    values: np.ndarray
    source_time: float
    entropy: float | None = None


@dataclass(frozen=True)
class DiagnosticsRecord:
    time: float
    mass: float
    momentum: tuple
    energy: float
    entropy: float
    dissipation: float
    eta_min: float
    max_speed: float
    extra: dict = field(default_factory=dict, compare=False)

    def as_row(self) -> list:
        return [
            self.time,
            self.mass,
            *self.momentum,
            self.energy,
            self.entropy,
            self.dissipation,
            self.eta_min,
            self.max_speed,
        ]


# -- snapshot files ----------------------------------------------------------


def write_snapshot(path, e: ParticleEnsemble) -> None:
    """Header ``d N time`` then one ``w v_1 ... v_d`` line per particle."""
    lines = [f"{e.dim} {e.n} {e.time:.17g}"]
    for w, v in zip(e.weights, e.positions):
        lines.append(" ".join(f"{x:.17g}" for x in (w, *v)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_snapshot(path) -> ParticleEnsemble:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FileFormatError(f"cannot read snapshot {path}: {exc}") from exc
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 3:
        raise FileFormatError(f"{path}: bad header")
    try:
        d, n, t = int(rows[0][0]), int(rows[0][1]), float(rows[0][2])
        body = np.array([[float(x) for x in r] for r in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    if body.shape != (n, d + 1):
        raise FileFormatError(
            f"{path}: expected {n} rows of {d + 1} values, got shape {body.shape}"
        )
    return validate_ensemble(ParticleEnsemble(body[:, 1:], body[:, 0], t))
