"""Run configuration read from TOML.

Example::

    seed = 7

    [params]
    epsilon = 0.5
    gamma = 0.0
    dim = 2

    [init]
    kind = "maxwellian"      # bimaxwellian_anisotropic, grid_from_density, file
    n = 64
    mean = [0.0, 0.0]
    temperature = 1.0

    [step]
    scheme = "rk4"
    dt = 1e-3                # or "adaptive"
    t_end = 1.0

    [quad]
    spacing = 0.5
    radius = 16.0

    [output]
    snapshot_every = 100

    [sweep]
    n_list = [16, 64, 256]
    n_ref = 4096

Unknown tables or keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .core import ModelParams
from .exceptions import BadSpec
from .initial import InitialCondition
from .integrator import StepConfig
from .mollifier import QuadratureRule

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

_SCHEMA = {
    "params": {"epsilon", "gamma", "dim"},
    "init": {"kind", "n", "mean", "temperature", "temperatures", "extent", "density", "path"},
    "step": {"scheme", "dt", "theta", "t_end", "dt_max", "record_every"},
    "quad": {"spacing", "radius", "check_tol"},
    "output": {"dir", "snapshot_every"},
    "sweep": {"n_list", "n_ref", "t_end", "dt", "directions", "p", "record_every"},
    "verify": {"samples", "rtol", "ensembles"},
}
_TOP = {"seed", *_SCHEMA}


@dataclass(frozen=True)
class SweepSettings:
    n_list: tuple = (16, 64, 256)
    n_ref: int = 4096
    t_end: float = 0.5
    dt: float = 0.01
    directions: int = 64
    p: float | None = None
    record_every: int = 1


@dataclass(frozen=True)
class VerifySettings:
    samples: int = 10_000
    rtol: float = 1e-6
    ensembles: int = 20


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    init: InitialCondition
    n: int | None
    step: StepConfig
    quad: QuadratureRule
    check_tol: float
    out_dir: str
    snapshot_every: int
    seed: int
    sweep: SweepSettings = field(default_factory=SweepSettings)
    verify: VerifySettings = field(default_factory=VerifySettings)
    raw: dict = field(default_factory=dict, compare=False)

    def config_hash(self) -> str:
        """sha256 of the canonical JSON form of the effective settings."""
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()


def _table(raw, name):
    t = raw.get(name, {})
    if not isinstance(t, dict):
        raise BadSpec(f"[{name}] must be a table")
    extra = set(t) - _SCHEMA[name]
    if extra:
        raise BadSpec(f"unknown keys in [{name}]: {sorted(extra)}")
    return t


def _num(t, key, default, kind=float):
    v = t.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise BadSpec(f"{key} must be a number, got {v!r}")
    if kind is int and not float(v).is_integer():
        raise BadSpec(f"{key} must be an integer, got {v!r}")
    return kind(v)


def parse_config(raw: dict, seed: int | None = None, out_dir: str | None = None) -> RunConfig:
    """Build a :class:`RunConfig` from a parsed TOML document.

    ``seed`` and ``out_dir`` override the file's values (command-line flags).
    All errors surface as :class:`BadSpec` or another validation error.
    """
    extra = set(raw) - _TOP
    if extra:
        raise BadSpec(f"unknown top-level keys: {sorted(extra)}")
    raw = json.loads(json.dumps(raw, default=str))
    if seed is not None:
        raw["seed"] = int(seed)
    if out_dir is not None:
        raw.setdefault("output", {})["dir"] = str(out_dir)
    seed_v = raw.get("seed", 0)
    if isinstance(seed_v, bool) or not isinstance(seed_v, int) or not 0 <= seed_v < 2**64:
        raise BadSpec(f"seed must be an unsigned 64-bit integer, got {seed_v!r}")

    pt = _table(raw, "params")
    if "epsilon" not in pt or "gamma" not in pt:
        raise BadSpec("[params] needs epsilon and gamma")
    try:
        params = ModelParams(_num(pt, "epsilon", None), _num(pt, "gamma", None), _num(pt, "dim", 2, int))
    except ValueError as exc:
        raise BadSpec(str(exc)) from exc

    it = _table(raw, "init")
    try:
        init = InitialCondition(
            kind=it.get("kind", "maxwellian"),
            mean=tuple(it["mean"]) if "mean" in it else None,
            temperature=_num(it, "temperature", 1.0),
            temperatures=tuple(it["temperatures"]) if "temperatures" in it else None,
            extent=_num(it, "extent", 5.0),
            density=_num(it, "density", 1.0),
            path=it.get("path"),
        )
    except TypeError as exc:
        raise BadSpec(f"[init]: {exc}") from exc
    n = _num(it, "n", None, int)

    st = _table(raw, "step")
    dt = st.get("dt", 1e-3)
    if dt == "adaptive":
        dt = None
    elif isinstance(dt, str):
        raise BadSpec(f"dt must be a number or 'adaptive', got {dt!r}")
    try:
        step = StepConfig(
            scheme=st.get("scheme", "rk4"),
            dt=None if dt is None else _num({"dt": dt}, "dt", None),
            theta=_num(st, "theta", 0.1),
            t_end=_num(st, "t_end", 1.0),
            dt_max=_num(st, "dt_max", 0.05),
            record_every=_num(st, "record_every", 1, int),
        )
        qt = _table(raw, "quad")
        quad = QuadratureRule(_num(qt, "spacing", 0.5), _num(qt, "radius", None), params.dim)
    except ValueError as exc:
        raise BadSpec(str(exc)) from exc

    ot = _table(raw, "output")
    snap = _num(ot, "snapshot_every", 100, int)
    if snap < 1:
        raise BadSpec("snapshot_every must be >= 1")

    sw = _table(raw, "sweep")
    n_list = tuple(int(x) for x in sw.get("n_list", (16, 64, 256)))
    if not n_list or list(n_list) != sorted(n_list) or min(n_list) < 1:
        raise BadSpec("sweep n_list must be ascending positive integers")
    sweep = SweepSettings(
        n_list=n_list,
        n_ref=_num(sw, "n_ref", 4096, int),
        t_end=_num(sw, "t_end", 0.5),
        dt=_num(sw, "dt", 0.01),
        directions=_num(sw, "directions", 64, int),
        p=_num(sw, "p", None),
        record_every=_num(sw, "record_every", 1, int),
    )
    if sweep.n_ref < n_list[-1]:
        raise BadSpec("sweep n_ref must be at least max(n_list)")
    if not sweep.dt > 0 or not sweep.t_end >= 0:
        raise BadSpec("sweep dt must be positive and t_end nonnegative")

    vt = _table(raw, "verify")
    verify = VerifySettings(
        _num(vt, "samples", 10_000, int), _num(vt, "rtol", 1e-6), _num(vt, "ensembles", 20, int)
    )
    qt = raw.get("quad", {})
    return RunConfig(
        params=params,
        init=init,
        n=n,
        step=step,
        quad=quad,
        check_tol=_num(qt, "check_tol", 1e-5),
        out_dir=str(ot.get("dir", "out")),
        snapshot_every=snap,
        seed=seed_v,
        sweep=sweep,
        verify=verify,
        raw=raw,
    )


def load_config(path, seed: int | None = None, out_dir: str | None = None) -> RunConfig:
    try:
        with open(Path(path), "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise BadSpec(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise BadSpec(f"{path}: {exc}") from exc
    init = raw.get("init")
    if isinstance(init, dict) and isinstance(init.get("path"), str):
        # snapshot paths are relative to the config file
        init["path"] = str(Path(path).parent / init["path"])
    try:
        return parse_config(raw, seed=seed, out_dir=out_dir)
    except BadSpec:
        raise
    except (TypeError, ValueError) as exc:
        raise BadSpec(f"{path}: {exc}") from exc
