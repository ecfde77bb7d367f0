"""Command-line front end: ``mfpicture run | verify | catalog``.

Exit codes: 0 success, 1 tolerance failure, 2 configuration error,
3 runtime/engine error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import ConfigError, MFPictureError, ParseError, ValidationError
from .freespace import MODES, FreeFlow
from .numeric import METHODS, IntegratorConfig
from .pictures import PICTURES, EquivalenceReport, Trajectory, equivalence_report
from .systems import CATALOG, SplitSystem, SystemSpec, load_system
from .verify import VerifyContext, run_suites

log = logging.getLogger("mfpicture")

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
SEED_ENV = "MFPICTURE_SEED"

_TOP_KEYS = {"system", "x0", "t0", "t_end", "samples", "integrator", "pictures", "tolerance",
             "output_dir", "formats", "seed", "flow_mode"}
_INTEGRATOR_KEYS = {"method", "dt", "atol", "rtol", "max_steps"}


@dataclass(frozen=True)
class RunConfig:
    system: SystemSpec
    x0: tuple
    t_end: float
    t0: float = 0.0
    samples: int = 1001
    integrator: IntegratorConfig = IntegratorConfig()
    pictures: tuple = PICTURES
    tolerance: float = 1e-6
    output_dir: str = "out"
    formats: tuple = ("csv",)
    seed: int = 0
    flow_mode: str = "auto"
    # normalized settings, used for the provenance hash
    canonical: dict = field(default_factory=dict, compare=False)

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.canonical, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# configuration


def _number(raw, key, positive=False):
    if isinstance(raw, bool) or not isinstance(raw, (int, float)) or not math.isfinite(raw):
        raise ValidationError(key, "must be a finite number")
    if positive and raw <= 0:
        raise ValidationError(key, "must be positive")
    return float(raw)


def _strict(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ValidationError(where, "must be an object")
    for key in obj:
        if key not in allowed:
            raise ValidationError(f"{where}.{key}" if where else key, "unknown key")


def _terms(raw, key, n):
    if not isinstance(raw, list):
        raise ValidationError(key, "must be a list of [coefficient, exponents] pairs")
    terms = []
    for i, term in enumerate(raw):
        if (not isinstance(term, list) or len(term) != 2 or not isinstance(term[1], list)
                or len(term[1]) != 2 * n
                or not all(isinstance(e, int) and not isinstance(e, bool) and e >= 0 for e in term[1])):
            raise ValidationError(f"{key}[{i}]", f"expected [coefficient, {2 * n} non-negative integer exponents]")
        terms.append((_number(term[0], f"{key}[{i}]"), tuple(term[1])))
    return tuple(terms)


def _system_spec(raw) -> SystemSpec:
    if isinstance(raw, str):
        spec = SystemSpec(id=raw)
    elif isinstance(raw, dict) and "id" in raw:
        _strict(raw, {"id", "params"}, "system")
        params = raw.get("params", {})
        if not isinstance(params, dict):
            raise ValidationError("system.params", "must be an object")
        spec = SystemSpec(id=raw["id"], params={k: _number(v, f"system.params.{k}") for k, v in params.items()})
    elif isinstance(raw, dict):
        _strict(raw, {"n", "free", "interaction"}, "system")
        n = raw.get("n")
        if isinstance(n, bool) or not isinstance(n, int) or n <= 0:
            raise ValidationError("system.n", "must be a positive integer")
        spec = SystemSpec(n=n, free_terms=_terms(raw.get("free"), "system.free", n),
                          interaction_terms=_terms(raw.get("interaction", []), "system.interaction", n))
    else:
        raise ValidationError("system", "must be a catalog id or an object")
    if spec.id is not None and spec.id not in CATALOG:
        raise ValidationError("system", f"unknown catalog id {spec.id!r}")
    return spec


def config_from_dict(raw: dict) -> RunConfig:
    _strict(raw, _TOP_KEYS, "")
    if "system" not in raw:
        raise ValidationError("system", "required")
    spec = _system_spec(raw["system"])
    try:
        system = load_system(spec)
    except MFPictureError as exc:
        raise ValidationError("system", str(exc)) from exc
    if spec.id is not None:
        for key in spec.params:
            if key not in system.params:
                raise ValidationError(f"system.params.{key}", "unknown parameter")

    if "x0" in raw:
        x0 = raw["x0"]
        if not isinstance(x0, list):
            raise ValidationError("x0", "must be a list [q_1..q_n, p_1..p_n]")
        x0 = tuple(_number(v, "x0") for v in x0)
    elif system.default_x0 is not None:
        x0 = tuple(system.default_x0)
    else:
        raise ValidationError("x0", "required for this system")
    if len(x0) != 2 * system.n:
        raise ValidationError("x0", f"expected {2 * system.n} values")

    if "t_end" not in raw:
        raise ValidationError("t_end", "required")
    t0 = _number(raw.get("t0", 0.0), "t0")
    t_end = _number(raw["t_end"], "t_end")
    if t_end == t0:
        raise ValidationError("t_end", "must differ from t0")

    samples = raw.get("samples", 1001)
    if isinstance(samples, bool) or not isinstance(samples, int) or samples < 2:
        raise ValidationError("samples", "must be an integer >= 2")

    integ = raw.get("integrator", {})
    _strict(integ, _INTEGRATOR_KEYS, "integrator")
    method = integ.get("method", "rk4-fixed")
    if method not in METHODS:
        raise ValidationError("integrator.method", f"must be one of {', '.join(METHODS)}")
    max_steps = integ.get("max_steps", 100_000_000)
    if isinstance(max_steps, bool) or not isinstance(max_steps, int) or max_steps < 1:
        raise ValidationError("integrator.max_steps", "must be a positive integer")
    cfg = IntegratorConfig(
        method,
        _number(integ.get("dt", 1e-3), "integrator.dt", positive=True),
        _number(integ.get("atol", 1e-10), "integrator.atol", positive=True),
        _number(integ.get("rtol", 1e-10), "integrator.rtol", positive=True),
        max_steps,
    )

    pictures = raw.get("pictures", list(PICTURES))
    if (not isinstance(pictures, list) or not pictures
            or any(p not in PICTURES for p in pictures)):
        raise ValidationError("pictures", f"must be a non-empty subset of {', '.join(PICTURES)}")
    formats = raw.get("formats", ["csv"])
    if not isinstance(formats, list) or not formats or any(f not in ("csv", "json") for f in formats):
        raise ValidationError("formats", "must be a non-empty subset of csv, json")
    tolerance = _number(raw.get("tolerance", 1e-6), "tolerance", positive=True)
    output_dir = raw.get("output_dir", "out")
    if not isinstance(output_dir, str) or not output_dir:
        raise ValidationError("output_dir", "must be a path string")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ValidationError("seed", "must be an integer")
    flow_mode = raw.get("flow_mode", "auto")
    if flow_mode not in MODES:
        raise ValidationError("flow_mode", f"must be one of {', '.join(MODES)}")
    if flow_mode == "closed-form" and not system.free_is_quadratic:
        raise ValidationError("flow_mode", "closed-form needs a quadratic free Hamiltonian")

    pictures = tuple(p for p in PICTURES if p in pictures)
    formats = tuple(f for f in ("csv", "json") if f in formats)
    canonical = {
        "system": raw["system"], "x0": list(x0), "t0": t0, "t_end": t_end, "samples": samples,
        "integrator": {"method": cfg.method, "dt": cfg.dt, "atol": cfg.atol, "rtol": cfg.rtol,
                       "max_steps": cfg.max_steps},
        "pictures": list(pictures), "tolerance": tolerance, "formats": list(formats),
        "seed": seed, "flow_mode": flow_mode,
    }
    return RunConfig(spec, x0, t_end, t0, samples, cfg, pictures, tolerance, output_dir,
                     formats, seed, flow_mode, canonical)


def parse_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from exc
    return config_from_dict(raw)


def _with_seed_override(config: RunConfig) -> RunConfig:
    env = os.environ.get(SEED_ENV)
    if env is None:
        return config
    try:
        seed = int(env)
    except ValueError:
        raise ValidationError(SEED_ENV, "must be an integer") from None
    canonical = dict(config.canonical, seed=seed)
    return RunConfig(config.system, config.x0, config.t_end, config.t0, config.samples,
                     config.integrator, config.pictures, config.tolerance, config.output_dir,
                     config.formats, seed, config.flow_mode, canonical)


# ---------------------------------------------------------------------------
# output


def fmt(value) -> str:
    """Shortest round-trip decimal (at most 17 significant digits)."""
    return repr(float(value))


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_json_safe(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def trajectory_columns(traj: Trajectory) -> list[str]:
    n = traj.n
    cols = ["t"] + [f"q_{a + 1}" for a in range(n)] + [f"p_{a + 1}" for a in range(n)] + ["H", "H0", "H1"]
    if traj.mf_coords is not None:
        cols += [f"mf_q_{a + 1}" for a in range(n)] + [f"mf_p_{a + 1}" for a in range(n)]
    return cols


def trajectory_rows(traj: Trajectory):
    d = traj.diagnostics
    for i, t in enumerate(traj.times):
        row = [t, *traj.states[i], d["H"][i], d["H0"][i], d["H1"][i]]
        if traj.mf_coords is not None:
            row += list(traj.mf_coords[i])
        yield row


def trajectory_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trajectory_columns(traj))
    for row in trajectory_rows(traj):
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def trajectory_json(traj: Trajectory) -> str:
    doc = {"picture": traj.picture, "columns": trajectory_columns(traj),
           "rows": [[float(v) for v in row] for row in trajectory_rows(traj)]}
    if traj.mf_t_ref is not None:
        doc["mf_chart_time"] = traj.mf_t_ref
    if traj.fixed_state is not None:
        doc["fixed_state"] = {"x0": list(traj.fixed_state[0]), "t0": traj.fixed_state[1]}
    return dumps(doc)


def provenance(config: RunConfig) -> dict:
    return {"config_hash": config.config_hash, "mfpicture": __version__, "numpy": np.__version__}


def report_document(config: RunConfig, report: EquivalenceReport) -> dict:
    doc = report.to_dict()
    doc["pictures"] = {
        "direct": "phase space: the state moves along the integral curve of X_H",
        "heisenberg": "space of motions: fixed state, time-dependent observables q o tau_t, p o tau_t",
        "interaction": "free-solution space: state moves along X of the pulled-back H1; "
                       "measured values Pi_t m(t)",
    }
    doc["requested"] = list(config.pictures)
    if report.skipped:
        doc["note"] = "comparisons skipped: no picture other than direct was requested"
    doc["provenance"] = provenance(config)
    return doc


def _write_files(out_dir: Path, files: dict[str, str]):
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in sorted(files):
        (out_dir / name).write_text(files[name])


# ---------------------------------------------------------------------------
# commands


def _build(config: RunConfig):
    system = load_system(config.system)
    flow_cfg = config.integrator
    flow = FreeFlow(system, config.flow_mode, flow_cfg)
    return system, flow


def run(config: RunConfig, out_dir: Optional[str] = None) -> int:
    out = Path(out_dir or config.output_dir)
    system, flow = _build(config)
    report = equivalence_report(system, np.array(config.x0), config.t0, config.t_end,
                                config.integrator, config.samples, config.tolerance, flow=flow,
                                pictures=config.pictures)
    files = {}
    for name, traj in report.trajectories.items():
        if "csv" in config.formats:
            files[f"{name}.csv"] = trajectory_csv(traj)
        if "json" in config.formats:
            files[f"{name}.json"] = trajectory_json(traj)
    files["report.json"] = dumps(report_document(config, report))
    _write_files(out, files)

    for name, c in report.comparisons.items():
        status = "pass" if c.passed else "FAIL"
        print(f"{name:12s} vs reference  max deviation {c.max_deviation:.3e}  (tol {config.tolerance:g})  {status}")
    if report.skipped:
        print("comparisons skipped: only the direct picture was requested")
    for name, msg in report.errors.items():
        print(f"error in {name}: {msg}", file=sys.stderr)
    if report.errors:
        return EXIT_RUNTIME
    return EXIT_OK if report.passed else EXIT_TOLERANCE


def verify(config: RunConfig, out_dir: Optional[str] = None) -> int:
    system, flow = _build(config)
    ctx = VerifyContext(system, flow, np.array(config.x0), config.t0, config.t_end, config.integrator,
                        config.samples, config.tolerance, np.random.default_rng(config.seed))
    results = run_suites(ctx)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "skip" if r.skipped else ("pass" if r.passed else "FAIL")
        value = "" if r.skipped else f"{r.value:.3e}"
        print(f"{r.name:{width}s}  {status:4s}  {value:>10s}  {r.detail}")
    ok = all(r.passed for r in results)
    if out_dir is not None:
        _write_files(Path(out_dir), {"verify.json": dumps({
            "system": system.name, "seed": config.seed, "passed": ok,
            "suites": [r.to_dict() for r in results], "provenance": provenance(config)})})
    return EXIT_OK if ok else EXIT_TOLERANCE


def catalog() -> int:
    for key, factory in CATALOG.items():
        s: SplitSystem = factory({})
        tag = "  [test fixture]" if s.fixture else ""
        params = ", ".join(f"{k}={v:g}" for k, v in s.params.items())
        print(f"{key:22s} n={s.n}  {s.description}  ({params}){tag}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mfpicture",
                                 description="Phase-space, motion-space and free-solution-space "
                                             "(interaction-like) evolution of classical systems")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="evolve the configured system in the selected pictures")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (overrides output_dir)")
    v = sub.add_parser("verify", help="run the invariant suites against the configured system")
    v.add_argument("--config", required=True)
    v.add_argument("--out", help="also write verify.json here")
    sub.add_parser("catalog", help="list built-in systems")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "catalog":
        return catalog()
    try:
        config = _with_seed_override(parse_config(args.config))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "run":
            return run(config, args.out)
        return verify(config, args.out)
    except (MFPictureError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
