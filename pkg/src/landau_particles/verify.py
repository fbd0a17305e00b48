"""Randomized checks of the explicit-constant estimates.

Every check draws its own sample set from one seeded generator, evaluates
an observed quantity and its bound, and counts violations of
``observed <= bound * (1 + rtol)``.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import ModelParams, ParticleEnsemble, validate_ensemble
from .diagnostics import wasserstein_inf
from .kernel import kernel_eval, velocity_at
from .mollifier import QuadratureRule, ScoreLattice, log_density, score, score_field

KERNEL_GAMMAS = (0.0, -0.5, -1.0, -1.5, -2.0, -2.5, -2.9)


@dataclass(frozen=True)
class BoundCheck:
    name: str
    bound: str
    samples: int
    violations: int
    worst_ratio: float
    worst_observed: float
    passed: bool


@dataclass
class VerifyReport:
    epsilon: float
    dim: int
    seed: int
    rtol: float
    checks: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


class _Tally:
    def __init__(self, name, bound, rtol):
        self.name, self.bound, self.rtol = name, bound, rtol
        self.n = self.bad = 0
        self.ratio = self.worst = 0.0

    def add(self, observed, bound):
        observed = np.asarray(observed, dtype=np.float64).ravel()
        bound = np.broadcast_to(np.asarray(bound, dtype=np.float64), observed.shape)
        self.n += observed.size
        self.bad += int(np.sum(~(observed <= bound * (1.0 + self.rtol))))
        if observed.size:
            r = np.divide(observed, bound, out=np.zeros_like(observed), where=bound > 0)
            # a non-finite observation counts as an unbounded ratio
            r[~np.isfinite(observed)] = np.inf
            self.ratio = max(self.ratio, float(r.max()))
            self.worst = max(self.worst, float(np.nanmax(np.where(np.isnan(observed), np.inf, observed))))

    def result(self) -> BoundCheck:
        return BoundCheck(
            self.name, self.bound, self.n, self.bad, self.ratio, self.worst, self.bad == 0
        )


def random_ensemble(rng, dim: int, epsilon: float, max_n: int = 24, equal: bool | None = None):
    """Small random ensemble, sometimes with unequal weights or a cluster."""
    n = int(rng.integers(1, max_n + 1))
    spread = epsilon * 10 ** rng.uniform(-1.0, 0.6)
    pos = spread * rng.standard_normal((n, dim))
    if n > 3 and rng.random() < 0.3:
        # a tight cluster, where the log-density varies fastest
        k = n // 3
        pos[:k] = pos[0] + 0.05 * epsilon * rng.standard_normal((k, dim))
    equal = rng.random() < 0.5 if equal is None else equal
    w = np.full(n, 1.0 / n) if equal else rng.dirichlet(np.ones(n))
    w = w / math.fsum(w)
    return validate_ensemble(ParticleEnsemble(pos, w))


def _around(rng, e, epsilon, n, pad=4.0):
    lo = e.positions.min(axis=0) - pad * epsilon
    hi = e.positions.max(axis=0) + pad * epsilon
    return rng.uniform(lo, hi, size=(n, e.dim))


def _unit(rng, n, dim):
    d = rng.standard_normal((n, dim))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _fd_jacobian(f, x, h):
    """Central-difference Jacobian of ``f`` (batched) at ``x``, shape (n, d, d)."""
    n, d = x.shape
    J = np.empty((n, d, d))
    for c in range(d):
        step = np.zeros(d)
        step[c] = 1.0
        xp = x + h[:, None] * step
        xm = x - h[:, None] * step
        J[:, :, c] = (f(xp) - f(xm)) / (2.0 * h[:, None])
    return J


def verify_bounds(
    epsilon: float = 1.0,
    dim: int = 2,
    samples: int = 10_000,
    seed: int = 0,
    rtol: float = 1e-6,
    q: QuadratureRule | None = None,
    n_ensembles: int = 20,
) -> VerifyReport:
    """Run the full inequality suite at one mollifier width.

    Bounds checked (``r = |v - w|``):

    * ``|s(v)| <= 1/eps``
    * ``|s(v1) - s(v2)| <= 4/eps^2 |v1 - v2|``
    * ``|K(v, w)| <= min(4/eps^2 r^(3+gamma), 2/eps r^(2+gamma))``
    * at ``gamma = -2``: ``|U| <= 2/eps``, ``|grad_v K| <= 28/eps^2`` and
      ``|grad U| <= 28/eps^2`` (central differences, Frobenius norm)
    * ``|log rho_a - log rho_b| <= W_inf(a, b) / eps``
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    q = q or QuadratureRule(dim=dim)
    eps = float(epsilon)
    p0 = ModelParams(eps, 0.0, dim)
    p2 = ModelParams(eps, -2.0, dim)
    per = max(1, samples // n_ensembles)
    counts = [per] * n_ensembles
    counts[-1] += samples - per * n_ensembles

    t_score = _Tally("score_bound", "|s| <= 1/eps", rtol)
    t_lip = _Tally("score_lipschitz", "|ds| <= 4/eps^2 |dv|", rtol)
    t_k = _Tally("kernel_bound", "|K| <= min(4/eps^2 r^(3+g), 2/eps r^(2+g))", rtol)
    t_u2 = _Tally("velocity_bound_gamma_-2", "|U| <= 2/eps", rtol)
    t_gk = _Tally("kernel_gradient_gamma_-2", "|grad_v K| <= 28/eps^2", rtol)
    t_gu = _Tally("velocity_gradient_gamma_-2", "|grad U| <= 28/eps^2", rtol)
    t_log = _Tally("log_density_difference", "|log rho_a - log rho_b| <= W_inf/eps", rtol)

    for m in counts:
        e = random_ensemble(rng, dim, eps)

        # points for the score, Lipschitz and kernel checks
        v_s = _around(rng, e, eps, m)
        v1 = _around(rng, e, eps, m)
        v2 = v1 + (eps * 10 ** rng.uniform(-4.0, 0.5, m))[:, None] * _unit(rng, m, dim)
        kv = _around(rng, e, eps, m)
        kw = kv + (eps * 10 ** rng.uniform(-3.0, 1.0, m))[:, None] * _unit(rng, m, dim)
        # gamma = -2 gradient checks: pairs at moderate separation
        gv = _around(rng, e, eps, m)
        gw = gv + (eps * 10 ** rng.uniform(-2.0, 1.0, m))[:, None] * _unit(rng, m, dim)
        gh = 1e-5 * np.minimum(np.linalg.norm(gv - gw, axis=1), eps)
        fd = [gv + s * gh[:, None] * np.eye(dim)[c] for c in range(dim) for s in (1, -1)]
        uv = _around(rng, e, eps, m)

        pts = np.vstack([v_s, v1, v2, kv, kw, gw, *fd])
        lat = ScoreLattice.around(e, p0, q, points=np.vstack([pts, uv, gv]), slack=2.0)
        s = score(e, p0, q, pts, lat)
        blocks = np.split(s, np.cumsum([m] * (len(pts) // m))[:-1])
        s_s, s1, s2, skv, skw, sgw, *sfd = blocks

        t_score.add(np.linalg.norm(s_s, axis=1), 1.0 / eps)
        dv = np.linalg.norm(v1 - v2, axis=1)
        ds = np.linalg.norm(s1 - s2, axis=1)
        t_lip.add(np.divide(ds, dv, out=np.zeros_like(ds), where=dv > 0), 4.0 / eps**2)

        gam = rng.choice(KERNEL_GAMMAS, size=m)
        r = np.linalg.norm(kv - kw, axis=1)
        for g in KERNEL_GAMMAS:
            sel = gam == g
            if not np.any(sel):
                continue
            pg = ModelParams(eps, float(g), dim)
            K = kernel_eval(pg, kv[sel], kw[sel], skv[sel], skw[sel])
            rr = r[sel]
            bound = np.minimum(4.0 / eps**2 * rr ** (3.0 + g), 2.0 / eps * rr ** (2.0 + g))
            t_k.add(np.linalg.norm(K, axis=1), bound)

        # d/dv K(v, w) at gamma = -2 with s(v) moving along
        J = np.empty((m, dim, dim))
        for c in range(dim):
            kp = kernel_eval(p2, fd[2 * c], gw, sfd[2 * c], sgw)
            km = kernel_eval(p2, fd[2 * c + 1], gw, sfd[2 * c + 1], sgw)
            J[:, :, c] = (kp - km) / (2.0 * gh[:, None])
        t_gk.add(np.linalg.norm(J, axis=(1, 2)), 28.0 / eps**2)

        # U at gamma = -2, at particles and at free points
        sf = score_field(e, p2, q, lat)
        U = velocity_at(e, sf, p2, np.vstack([e.positions, uv]), q, lat)
        t_u2.add(np.linalg.norm(U, axis=1), 2.0 / eps)
        # keep finite differences away from the particles themselves
        dmin = np.min(np.linalg.norm(uv[:, None, :] - e.positions[None], axis=2), axis=1)
        uh = 1e-5 * np.minimum(dmin, eps)
        JU = _fd_jacobian(lambda x: velocity_at(e, sf, p2, x, q, lat), uv, uh)
        t_gu.add(np.linalg.norm(JU, axis=(1, 2)), 28.0 / eps**2)

        # measure-wise log-density difference under a bounded displacement
        delta = eps * rng.uniform(0.01, 2.0)
        b = e.with_positions(e.positions + delta * _unit(rng, e.n, dim), e.time)
        w_inf = delta
        if np.allclose(e.weights, e.weights[0], rtol=1e-14, atol=0):
            w_inf = min(delta, wasserstein_inf(e, b).cost)
        u = _around(rng, e, eps, m, pad=6.0)
        diff = np.abs(log_density(e, p0, u) - log_density(b, p0, u))
        t_log.add(diff, w_inf / eps)

    rep = VerifyReport(eps, dim, seed, rtol)
    rep.checks = [t.result() for t in (t_score, t_lip, t_k, t_u2, t_gk, t_gu, t_log)]
    rep.seconds = time.perf_counter() - t0
    return rep
