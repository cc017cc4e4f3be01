"""Command-line runner: ``sphere-fheat {validate,run,suite}``.

Exit codes: 0 success, 2 config error, 3 precondition violation,
4 numerical failure, 5 assertion failure.  Outputs are staged in a hidden
directory and moved into place only when the experiment finishes; the
manifest is written last and atomically, and only after a passing run.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path

from . import __version__
from .acceptance import CRITERIA, TOLERANCE_ARGS
from .config import load_config, resolve, validate
from .errors import (
    ConfigError,
    DomainError,
    FactorizationError,
    PreconditionError,
    QuadratureError,
    SphereFheatError,
    SymmetryError,
)
from .experiments import Table, jsonable, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_NUMERICAL = 4
EXIT_ASSERTION = 5


class CheckFailed(SphereFheatError):
    """The experiment completed but one of its assertions failed."""


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _dump_json(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


def _publish(files: dict, out: Path) -> dict:
    """Write ``files`` into a staging directory, then move them into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    try:
        for name, content in files.items():
            text = content.to_csv() if isinstance(content, Table) else content
            (stage / name).write_text(text)
        sums = {name: _sha256(stage / name) for name in sorted(files)}
        for name in files:
            os.replace(stage / name, out / name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return sums


def _write_manifest(out: Path, manifest: dict) -> None:
    tmp = out / ".manifest.json.tmp"
    tmp.write_text(_dump_json(manifest))
    os.replace(tmp, out / "manifest.json")


def run_config(cfg: dict, out, seed=None, workers=None, tolerance_scale=None) -> dict:
    """Validate, run and publish one experiment; returns the manifest.

    Raises ``ConfigError``, ``PreconditionError``, a numerical error, or
    ``CheckFailed`` (after publishing the report, without a manifest).
    """
    t0 = time.perf_counter()
    cfg = dict(cfg)
    if seed is not None:
        cfg["seed"] = seed
    errors, pre = validate(cfg)
    if errors:
        raise ConfigError("; ".join(errors))
    if pre:
        raise PreconditionError("; ".join(pre))
    full = resolve(cfg, seed, workers, tolerance_scale)
    out = Path(out)
    stale = out / "manifest.json"
    if stale.exists():
        stale.unlink()
    result = run_experiment(full)
    report = {"experiment": full["experiment"], "passed": result.passed, "result": result.report}
    files = {"report.json": _dump_json(report), **result.tables}
    sums = _publish(files, out)
    if result.passed is False:
        raise CheckFailed(f"{full['experiment']}: assertion failed (see {out / 'report.json'})")
    manifest = {"toolkit": "sphere_fheat", "version": __version__, "config": full, "files": sums,
                "wall_time_seconds": time.perf_counter() - t0}
    _write_manifest(out, manifest)
    return manifest


def run_suite(out, seed=None, workers: int = 1, tolerance_scale: float = 1.0, only=None, echo=print) -> dict:
    """Run the acceptance battery; raises ``CheckFailed`` if any criterion fails."""
    t0 = time.perf_counter()
    out = Path(out)
    stale = out / "manifest.json"
    if stale.exists():
        stale.unlink()
    results = []
    for fn in CRITERIA:
        cid = int(fn.__name__.rsplit("_", 1)[1])
        if only and cid not in only:
            continue
        kw = {}
        for name, default in TOLERANCE_ARGS[cid].items():
            kw[name] = default * tolerance_scale
        code = fn.__code__
        args = code.co_varnames[: code.co_argcount]
        if seed is not None and "seed" in args:
            kw["seed"] = int(seed) + cid
        if "workers" in args:
            kw["workers"] = workers
        res = fn(**kw)
        echo(res.line())
        results.append(res)
    summary = Table(("criterion", "name", "passed", "seconds"),
                    [[r.id for r in results], [r.name for r in results], [r.passed for r in results],
                     [r.seconds for r in results]])
    report = {"suite": "acceptance", "passed": all(r.passed for r in results), "criteria": [r.to_dict() for r in results]}
    sums = _publish({"report.json": _dump_json(report), "acceptance.csv": summary}, out)
    if not report["passed"]:
        failed = ", ".join(str(r.id) for r in results if not r.passed)
        raise CheckFailed(f"acceptance criteria failed: {failed}")
    manifest = {"toolkit": "sphere_fheat", "version": __version__,
                "config": {"suite": "acceptance", "seed": seed, "workers": workers, "tolerance_scale": tolerance_scale,
                           "criteria": [r.id for r in results]},
                "files": sums, "wall_time_seconds": time.perf_counter() - t0}
    _write_manifest(out, manifest)
    return manifest


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sphere-fheat", description="Spectral simulation and verification runs.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required):
        sp.add_argument("--config", required=config_required, help="YAML or JSON experiment config")
        sp.add_argument("--seed", type=int, help="overrides the config seed (unsigned 64-bit)")
        sp.add_argument("--out", default="out", help="output directory (default: ./out)")
        sp.add_argument("--workers", type=int, help="worker processes for replicate sampling")
        sp.add_argument("--tolerance-scale", type=float, help="multiplies every assertion tolerance")

    v = sub.add_parser("validate", help="check a config against every precondition without running")
    v.add_argument("--config", required=True)
    v.add_argument("--seed", type=int)
    r = sub.add_parser("run", help="run one experiment")
    common(r, config_required=False)
    r.add_argument("--suite", choices=["acceptance"], help="run the acceptance battery instead of --config")
    s = sub.add_parser("suite", help="run the acceptance battery")
    common(s, config_required=False)
    s.add_argument("--criteria", type=int, nargs="+", help="subset of criterion numbers")
    return p


def _fail(code: int, msg: str) -> int:
    print(f"sphere-fheat: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg["seed"] = args.seed
            errors, pre = validate(cfg)
            for e in errors:
                print(f"config error: {e}", file=sys.stderr)
            for e in pre:
                print(f"precondition: {e}", file=sys.stderr)
            if errors:
                return EXIT_CONFIG
            if pre:
                return EXIT_PRECONDITION
            print("OK")
            return EXIT_OK
        suite = args.command == "suite" or getattr(args, "suite", None) == "acceptance"
        if suite:
            run_suite(args.out, args.seed, args.workers or 1, args.tolerance_scale or 1.0, getattr(args, "criteria", None))
            return EXIT_OK
        if not args.config:
            return _fail(EXIT_CONFIG, "run needs --config or --suite acceptance")
        cfg = load_config(args.config)
        manifest = run_config(cfg, args.out, args.seed, args.workers, args.tolerance_scale)
        print(f"wrote {len(manifest['files'])} files and manifest.json to {args.out}")
        return EXIT_OK
    except (ConfigError, FileNotFoundError) as exc:
        return _fail(EXIT_CONFIG, f"config error: {exc}")
    except (PreconditionError, DomainError) as exc:
        return _fail(EXIT_PRECONDITION, f"precondition violated: {exc}")
    except (QuadratureError, FactorizationError, SymmetryError, FloatingPointError, ArithmeticError) as exc:
        return _fail(EXIT_NUMERICAL, f"numerical failure: {exc}")
    except CheckFailed as exc:
        return _fail(EXIT_ASSERTION, f"assertion failed: {exc}")


if __name__ == "__main__":
    sys.exit(main())
