"""Command-line front end.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure
(step underflow or unresolved quadrature), 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .core import read_snapshot, write_snapshot
from .diagnostics import wasserstein_2, wasserstein_inf, write_diagnostics_csv
from .exceptions import LandauError, NumericalError, ValidationError
from .initial import sample_initial
from .integrator import integrate
from .mollifier import QuadratureRule, ScoreLattice, refine_lattice, score_field
from .sweep import mean_field_sweep
from .verify import verify_bounds

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4

log = logging.getLogger("landau_particles")


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed {text} is not an unsigned 64-bit integer")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _out_dir(args, cfg) -> Path:
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj, out: Path | None, name: str) -> None:
    text = json.dumps(obj, indent=2)
    if out is not None:
        (out / name).write_text(text + "\n")
    print(text)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
    out = _out_dir(args, cfg)
    p = cfg.params
    e0 = sample_initial(cfg.init, cfg.n, p.dim, cfg.seed)
    step = cfg.step
    if args.quad_check:
        step = replace(step, quad_check_tol=cfg.check_tol)
    snaps = out / "snapshots"
    snaps.mkdir(exist_ok=True)
    count = {"k": 0}

    def sink(e, rec):
        k = count["k"]
        if k % cfg.snapshot_every == 0:
            write_snapshot(snaps / f"snap_{k:06d}.txt", e)
        count["k"] += 1

    try:
        traj = integrate(e0, p, cfg.quad, step, sink)
    except NumericalError as exc:
        partial = getattr(exc, "trajectory", None)
        if partial is not None:
            write_diagnostics_csv(out / "diagnostics.csv", partial.records, p.dim)
        raise
    write_diagnostics_csv(out / "diagnostics.csv", traj.records, p.dim)
    write_snapshot(out / "final.txt", traj.final)
    summary = {
        "steps": traj.steps,
        "t_final": traj.final.time,
        "records": len(traj.records),
        "lattice_rebuilds": traj.lattice_rebuilds,
        "config_hash": cfg.config_hash(),
        "code_version": __version__,
    }
    _emit(summary, out, "summary.json")
    return EXIT_OK


def cmd_mean_field_sweep(args) -> int:
    cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
    out = _out_dir(args, cfg)
    sw = cfg.sweep
    n_list = args.n_list or list(sw.n_list)
    rep = mean_field_sweep(
        cfg.params,
        cfg.init,
        n_list,
        n_ref=sw.n_ref,
        t_end=sw.t_end,
        dt=sw.dt,
        q=cfg.quad,
        seed=cfg.seed,
        directions=sw.directions,
        workers=args.workers,
        record_every=sw.record_every,
        p_exponent=sw.p,
    )
    rep.config_hash = cfg.config_hash()
    rep.code_version = __version__
    _emit(rep.to_dict(), out, "sweep.json")
    return EXIT_OK


def cmd_verify_bounds(args) -> int:
    cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
    out = _out_dir(args, cfg) if args.out else None
    v = cfg.verify
    rep = verify_bounds(
        cfg.params.epsilon, cfg.params.dim, v.samples, cfg.seed, v.rtol, cfg.quad, v.ensembles
    )
    _emit(rep.to_dict(), out, "verify.json")
    return EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_metrics(args) -> int:
    a = read_snapshot(args.file_a)
    b = read_snapshot(args.file_b)
    if args.metric == "winf":
        res = wasserstein_inf(a, b)
    elif args.metric == "w2":
        res = wasserstein_2(a, b, mode="auto")
    else:
        res = wasserstein_2(a, b, mode="sliced")
    print(res.to_json())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(res.to_json() + "\n")
    return EXIT_OK


def quad_check(e, p, q: QuadratureRule, tol: float, levels: int = 3) -> dict:
    """Score changes under successive halvings of the lattice spacing.

    Passes when the finest change is within ``tol`` and every change is at
    least four times smaller than the previous one (or already at roundoff).
    """
    lat = ScoreLattice.around(e, p, q)
    fields, masses = [], []
    rule = q
    for _ in range(levels + 1):
        fields.append(score_field(e, p, rule, lat).values)
        masses.append(rule.mollifier_mass())
        lat, rule = refine_lattice(lat), rule.refined()
    diffs = [float(np.max(np.abs(b - a))) for a, b in zip(fields, fields[1:])]
    floor = 1e-13 * max(1.0, 1.0 / p.epsilon)
    ratios_ok = all(b <= a / 4.0 or b <= floor for a, b in zip(diffs, diffs[1:]))
    return {
        "spacing": q.spacing,
        "radius": q.radius,
        "changes": diffs,
        "mollifier_mass_error": [m - 1.0 for m in masses],
        "tolerance": tol,
        "converging": ratios_ok,
        "passed": bool(diffs[0] <= tol and ratios_ok),
    }


def cmd_quad_check(args) -> int:
    cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
    out = _out_dir(args, cfg) if args.out else None
    e0 = sample_initial(cfg.init, cfg.n, cfg.params.dim, cfg.seed)
    rep = quad_check(e0, cfg.params, cfg.quad, cfg.check_tol)
    _emit(rep, out, "quad_check.json")
    return EXIT_OK if rep["passed"] else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", metavar="U64", type=_u64, help="override the config seed")
    common.add_argument("--workers", metavar="K", type=_positive_int, default=1,
                        help="concurrent member runs (sweeps only)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="landau-particles", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="integrate one particle system")
    s.add_argument("--quad-check", action="store_true",
                   help="verify the score quadrature by refinement at t=0")
    s.set_defaults(func=cmd_simulate, needs_config=True)

    s = sub.add_parser("mean-field-sweep", parents=[common], help="distances to a large-N reference")
    s.add_argument("--n-list", type=_positive_int, nargs="+", metavar="N")
    s.set_defaults(func=cmd_mean_field_sweep, needs_config=True)

    s = sub.add_parser("verify-bounds", parents=[common], help="randomized inequality suite")
    s.set_defaults(func=cmd_verify_bounds, needs_config=True)

    s = sub.add_parser("metrics", parents=[common], help="transport distance between snapshots")
    s.add_argument("file_a")
    s.add_argument("file_b")
    s.add_argument("--metric", choices=("winf", "w2", "sliced_w2"), default="winf")
    s.set_defaults(func=cmd_metrics, needs_config=False)

    s = sub.add_parser("quad-check", parents=[common], help="score quadrature refinement check")
    s.set_defaults(func=cmd_quad_check, needs_config=True)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.needs_config and not args.config:
        ap.error(f"{args.command} needs --config PATH")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        t = getattr(exc, "time", None)
        where = f" (reached t={t!r})" if t is not None else ""
        print(f"numerical failure: {exc}{where}", file=sys.stderr)
        return EXIT_NUMERIC
    except LandauError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
