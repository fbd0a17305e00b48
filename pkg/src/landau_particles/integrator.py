"""Explicit time stepping of the particle system dv_i/dt = U^eps[mu^N](v_i)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import ModelParams, ParticleEnsemble, validate_ensemble
from .diagnostics import eta_min, make_record
from .exceptions import StepUnderflow
from .kernel import VelocityField, velocity_field
from .mollifier import QuadratureRule, ScoreLattice, score_field

log = logging.getLogger(__name__)

SCHEMES = ("euler", "rk4")


@dataclass(frozen=True)
class StepConfig:
    """Time-stepping settings.

    ``dt=None`` selects adaptive steps: ``dt = theta * eta_m / max|U|``,
    capped by ``dt_max``.  ``record_every`` and ``keep_every`` thin the
    diagnostics and the stored ensembles; the final state is always kept.
    """

    scheme: str = "rk4"
    dt: float | None = 1e-3
    theta: float = 0.1
    t_end: float = 1.0
    dt_max: float = 0.05
    record_every: int = 1
    keep_every: int = 1
    lattice_slack: float = 2.0
    quad_check_tol: float | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if not self.t_end >= 0:
            raise ValueError("t_end must be nonnegative")
        if self.record_every < 1 or self.keep_every < 1:
            raise ValueError("record_every and keep_every must be >= 1")


class _Evaluator:
    """Right-hand side with a lattice that is kept fixed between rebuilds."""

    def __init__(self, p, q, lattice=None, slack=2.0, quad_check_tol=None):
        self.p = p
        self.q = q or QuadratureRule(dim=p.dim)
        self.lattice = lattice
        self.slack = slack
        self.quad_check_tol = quad_check_tol
        self.rebuilds = 0

    def ensure_lattice(self, e):
        if self.lattice is None:
            self.lattice = ScoreLattice.around(e, self.p, self.q, slack=self.slack)
        elif not self.lattice.covers(e.positions):
            self.lattice = ScoreLattice.around(e, self.p, self.q, slack=self.slack)
            self.rebuilds += 1
            log.info("score lattice rebuilt at t=%g (%d nodes)", e.time, self.lattice.size)

    def __call__(self, e, check=False):
        tol = self.quad_check_tol if check else None
        s = score_field(e, self.p, self.q, self.lattice, check_tol=tol)
        return s, velocity_field(e, s, self.p)


def rhs(
    e: ParticleEnsemble,
    p: ModelParams,
    q: QuadratureRule | None = None,
    lattice: ScoreLattice | None = None,
) -> VelocityField:
    """Score field followed by the pairwise velocity field."""
    ev = _Evaluator(p, q, lattice)
    ev.ensure_lattice(e)
    return ev(e)[1]


def _stage(e, h, k, c):
    return e.with_positions(e.positions + h * k, e.time + c)


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _increment(ev, e, h, k1, scheme):
    if scheme == "euler":
        return h * k1
    k2 = ev(_stage(e, 0.5 * h, k1, 0.5 * h))[1].values
    k3 = ev(_stage(e, 0.5 * h, k2, 0.5 * h))[1].values
    k4 = ev(_stage(e, h, k3, h))[1].values
    return h * ((k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0)


def _advance(ev, e, h, k1, scheme, t_new, residual=None):
    """New ensemble and the rounding residual of its positions.

    With ``residual`` given, the update is compensated: the part of the
    increment lost when rounding the new positions is carried to the next
    step instead of accumulating as drift.
    """
    inc = _increment(ev, e, h, k1, scheme)
    if residual is None:
        return e.with_positions(e.positions + inc, t_new), None
    pos, res = _two_sum(e.positions, inc + residual)
    return e.with_positions(pos, t_new), res


def _adaptive_dt(e, u, p, cfg, remaining):
    speed = float(np.max(np.linalg.norm(u, axis=1))) if u.size else 0.0
    em = eta_min(e) if e.n > 1 else math.inf
    dt = cfg.dt_max if speed == 0.0 else min(cfg.dt_max, cfg.theta * em / speed)
    if dt < 1e-14 * p.epsilon:
        raise StepUnderflow(f"adaptive step {dt:.3e} underflowed at t={e.time!r}", e.time)
    return min(dt, remaining)


def step(
    e: ParticleEnsemble,
    p: ModelParams,
    q: QuadratureRule | None = None,
    cfg: StepConfig = StepConfig(),
    lattice: ScoreLattice | None = None,
) -> ParticleEnsemble:
    """One explicit step; weights are carried over untouched."""
    ev = _Evaluator(p, q, lattice, cfg.lattice_slack)
    ev.ensure_lattice(e)
    k1 = ev(e)[1].values
    h = cfg.dt if cfg.dt is not None else _adaptive_dt(e, k1, p, cfg, math.inf)
    return _advance(ev, e, h, k1, cfg.scheme, e.time + h)[0]


@dataclass
class Trajectory:
    """Stored ensembles and diagnostics of one run.

    ``residuals[k]`` is the rounding residual carried by the compensated
    update at ``ensembles[k]``; ``positions + residuals`` is the state to
    about twice working precision.
    """

    ensembles: list
    records: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    lattice_rebuilds: int = 0
    steps: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.array([e.time for e in self.ensembles])

    @property
    def final(self) -> ParticleEnsemble:
        return self.ensembles[-1]


def integrate(
    e0: ParticleEnsemble,
    p: ModelParams,
    q: QuadratureRule | None = None,
    cfg: StepConfig = StepConfig(),
    diagnostics_sink=None,
    lattice: ScoreLattice | None = None,
) -> Trajectory:
    """Advance ``e0`` to ``cfg.t_end``.

    ``diagnostics_sink(ensemble, record)`` is called for every recorded
    state, starting with the initial one.  A :class:`StepUnderflow` carries
    the partial trajectory.  The score lattice is built once and only
    rebuilt when a particle comes within the rule radius of its edge.
    """
    validate_ensemble(e0, p)
    ev = _Evaluator(p, q, lattice, cfg.lattice_slack, cfg.quad_check_tol)
    traj = Trajectory([e0], residuals=[np.zeros_like(e0.positions)])
    e = e0
    res = traj.residuals[0]
    t_end = e0.time + cfg.t_end
    n = 0
    while True:
        ev.ensure_lattice(e)
        s, u = ev(e, check=(n == 0))
        done = e.time >= t_end
        if n % cfg.record_every == 0 or done:
            rec = make_record(e, s, u, p)
            traj.records.append(rec)
            if diagnostics_sink is not None:
                diagnostics_sink(e, rec)
        if done:
            break
        remaining = t_end - e.time
        try:
            if cfg.dt is None:
                h = _adaptive_dt(e, u.values, p, cfg, remaining)
            else:
                h = cfg.dt
            if h >= remaining * (1.0 - 1e-9):
                h, t_new = remaining, t_end
            else:
                t_new = e.time + h if cfg.dt is None else e0.time + (n + 1) * cfg.dt
            nxt, res = _advance(ev, e, h, u.values, cfg.scheme, t_new, res)
        except StepUnderflow as exc:
            exc.trajectory = traj
            raise
        if not np.all(np.isfinite(nxt.positions)):
            raise StepUnderflow(f"state became non-finite after t={e.time!r}", e.time, traj)
        e = nxt
        n += 1
        if n % cfg.keep_every == 0 or e.time >= t_end:
            traj.ensembles.append(e)
            traj.residuals.append(res)
    traj.lattice_rebuilds = ev.rebuilds
    traj.steps = n
    return traj
