"""Initial ensembles: Maxwellian samples, cell-averaged grids, snapshot files."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .core import ParticleEnsemble, read_snapshot, validate_ensemble
from .exceptions import BadSpec

KINDS = ("maxwellian", "bimaxwellian_anisotropic", "grid_from_density", "file")


@dataclass(frozen=True)
class InitialCondition:
    """Description of the initial measure.

    Parameters
    ----------
    kind : str
        One of ``maxwellian``, ``bimaxwellian_anisotropic``,
        ``grid_from_density`` or ``file``.
    mean : sequence of float, optional
        Bulk velocity ``u``; zero when omitted.
    temperature : float
        Isotropic temperature ``T`` (variance per axis).
    temperatures : sequence of float, optional
        Per-axis temperatures for the anisotropic kind, and for grids of an
        anisotropic density.
    extent : float
        Grid half-width in thermal units ``sqrt(T_c)`` per axis.
    density : float
        Total mass ``rho``.  Ensembles are probability measures, so this
        only has to be positive; it is kept for completeness.
    path : str, optional
        Snapshot file for ``kind="file"``.
    """

    kind: str = "maxwellian"
    mean: tuple | None = None
    temperature: float = 1.0
    temperatures: tuple | None = None
    extent: float = 5.0
    density: float = 1.0
    path: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BadSpec(f"unknown initial condition kind {self.kind!r}; expected one of {KINDS}")
        if not (self.density > 0):
            raise BadSpec("density must be positive")
        if self.kind == "file" and not self.path:
            raise BadSpec("kind 'file' needs a path")
        if self.kind == "bimaxwellian_anisotropic" and self.temperatures is None:
            raise BadSpec("bimaxwellian_anisotropic needs per-axis temperatures")
        if not (self.extent > 0):
            raise BadSpec("extent must be positive")

    def axis_temperatures(self, d: int) -> np.ndarray:
        if self.temperatures is not None:
            t = np.asarray(self.temperatures, dtype=np.float64)
            if t.shape != (d,):
                raise BadSpec(f"need {d} temperatures, got {t.size}")
        else:
            t = np.full(d, float(self.temperature))
        if not np.all(t > 0):
            raise BadSpec("temperatures must be positive")
        return t

    def bulk_velocity(self, d: int) -> np.ndarray:
        if self.mean is None:
            return np.zeros(d)
        u = np.asarray(self.mean, dtype=np.float64)
        if u.shape != (d,):
            raise BadSpec(f"mean must have {d} components, got {u.size}")
        return u


def grid_side(n: int, d: int) -> int:
    """Cells per axis of a grid with ``n`` cells, or raise :class:`BadSpec`."""
    k = int(round(n ** (1.0 / d)))
    for c in (k - 1, k, k + 1):
        if c > 0 and c**d == n:
            return c
    raise BadSpec(f"grid initial data needs N to be a perfect {d}-th power, got {n}")


def maxwellian_grid(u, temps, side: int, extent: float) -> ParticleEnsemble:
    """Cell centres and cell masses of a product Gaussian on a box.

    Each axis covers ``u_c +- extent * sqrt(T_c)`` with ``side`` cells; cell
    masses are exact Gaussian CDF differences, renormalized to sum to one.
    """
    d = len(u)
    centres, masses = [], []
    for c in range(d):
        sd = math.sqrt(temps[c])
        edges = np.linspace(-extent, extent, side + 1)
        centres.append(u[c] + sd * 0.5 * (edges[:-1] + edges[1:]))
        masses.append(np.diff(ndtr(edges)))
    grids = np.meshgrid(*centres, indexing="ij")
    pos = np.stack([g.ravel() for g in grids], axis=-1)
    w = masses[0]
    for m in masses[1:]:
        w = np.multiply.outer(w, m)
    w = np.ravel(w)
    w = w / math.fsum(w)
    return validate_ensemble(ParticleEnsemble(pos, w))


def sample_initial(ic: InitialCondition, n: int, d: int, seed: int | None = 0) -> ParticleEnsemble:
    """Build the initial ensemble described by ``ic``.

    Random kinds draw ``n`` iid samples with equal weights from
    ``numpy.random.default_rng(seed)``; the same seed gives the same
    ensemble bit for bit.  ``grid_from_density`` is deterministic and needs
    ``n = side**d``.
    """
    if ic.kind == "file":
        e = read_snapshot(Path(ic.path))
        if e.dim != d:
            raise BadSpec(f"{ic.path}: dimension {e.dim}, expected {d}")
        if n is not None and e.n != n:
            raise BadSpec(f"{ic.path}: holds {e.n} particles, expected {n}")
        return e
    if n is None or n < 1:
        raise BadSpec(f"number of particles must be positive, got {n!r}")
    u = ic.bulk_velocity(d)
    temps = ic.axis_temperatures(d)
    if ic.kind == "grid_from_density":
        return maxwellian_grid(u, temps, grid_side(n, d), ic.extent)
    rng = np.random.default_rng(seed)
    pos = u + np.sqrt(temps) * rng.standard_normal((n, d))
    return ParticleEnsemble.from_positions(pos)


def nested_initial(ic: InitialCondition, sizes, d: int, seed: int | None = 0) -> dict:
    """Initial ensembles for several N sharing one construction.

    Random kinds take the first N points of a single master draw of size
    ``max(sizes)``; grids are successive refinements of the same box.
    """
    sizes = sorted(set(int(s) for s in sizes))
    if ic.kind == "grid_from_density" or ic.kind == "file":
        return {n: sample_initial(ic, n, d, seed) for n in sizes}
    master = sample_initial(ic, sizes[-1], d, seed)
    return {n: ParticleEnsemble.from_positions(master.positions[:n]) for n in sizes}
