"""Command-line entry points: ``composeflow``, ``pargen``, ``sfocu`` and ``flashtest``."""
from __future__ import annotations

import argparse
import logging
import shutil
import sys
from pathlib import Path

from composeflow import __version__
from composeflow import io as fio
from composeflow.composer import (
    APP_ROOT,
    CompositionError,
    UnitTree,
    default_source_tree,
    emit_manifest,
    parse_manifest,
    parse_setup_args,
    resolve,
)
from composeflow.params import ParameterError, generate_parfile, parse_parfile, validate

MANIFEST = "setup.manifest"


def _tree(source: str | None) -> UnitTree:
    return UnitTree.from_directory(source) if source else default_source_tree()


def _source_root(source: str | None) -> Path:
    if source:
        return Path(source)
    from composeflow.flashtest import source_root
    return source_root()


def _load_manifest(objdir: Path):
    path = objdir / MANIFEST
    if not path.is_file():
        raise SystemExit(f"error: {path} not found; run 'composeflow setup' first")
    return parse_manifest(path.read_bytes())


# -- composeflow setup / run ------------------------------------------------------

def cmd_setup(args) -> int:
    request = parse_setup_args(args.setup)
    manifest = resolve(_tree(args.source), request)
    objdir = Path(args.object)
    objdir.mkdir(parents=True, exist_ok=True)
    (objdir / MANIFEST).write_bytes(emit_manifest(manifest))
    # runtime inputs shipped with the application (parfile, heater files, ...)
    app = _source_root(args.source) / APP_ROOT / request.application
    copied = []
    for f in sorted(app.iterdir()):
        if f.is_file() and f.name != "Config" and f.suffix != ".impl":
            shutil.copyfile(f, objdir / f.name)
            copied.append(f.name)
    print(f"resolved {len(manifest.resolved_units)} units for {manifest.application}")
    for key, unit in sorted(manifest.implementation_bindings.items()):
        print(f"  {key:<20} {unit}")
    print(f"wrote {objdir / MANIFEST}" + (f" and {', '.join(copied)}" if copied else ""))
    return 0


def cmd_run(args) -> int:
    from composeflow import driver

    objdir = Path(args.object)
    manifest = _load_manifest(objdir)
    par = Path(args.par)
    if not par.is_absolute() and not par.exists():
        par = objdir / par
    raw = parse_parfile(par.read_text())
    params = validate(raw, manifest.schema(), source=str(par))
    restart = Path(args.restart) if args.restart else None
    if restart is not None and not restart.is_absolute() and not restart.exists():
        restart = objdir / restart
    sim, report = driver.run(manifest, params, nthreads=args.np, outdir=objdir, workdir=objdir,
                             restart_from=restart)
    print(report.to_toml(), end="")
    return 0


def composeflow_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="composeflow", description="compose and run flow simulations")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)
    s = sub.add_parser("setup", help="resolve an application into an object directory")
    s.add_argument("--object", default="object")
    s.add_argument("--source", help="unit tree root (default: the shipped tree)")
    s.add_argument("setup", nargs=argparse.REMAINDER, help="application path followed by setup flags")
    r = sub.add_parser("run", help="run a simulation from an object directory")
    r.add_argument("--object", default="object")
    r.add_argument("--par", default="flash.par")
    r.add_argument("--np", type=int, default=None, help="worker threads (default: dr_nthreads)")
    r.add_argument("--restart", help="checkpoint file to continue from")
    return p


def main(argv=None) -> int:
    args = composeflow_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.cmd == "setup":
            if not args.setup:
                raise SystemExit("error: setup needs an application path")
            return cmd_setup(args)
        return cmd_run(args)
    except (CompositionError, ParameterError, fio.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


# -- pargen --------------------------------------------------------------------------

def pargen_main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="pargen", description="turn per-unit TOML tables into a parfile")
    p.add_argument("--toml", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest", help="setup.manifest (or an object directory holding one)")
    src.add_argument("--setup", help="setup line to resolve instead of reading a manifest")
    p.add_argument("--source", default=None, help="unit tree root used with --setup")
    p.add_argument("--out", default=None, help="output parfile (default: stdout)")
    args = p.parse_args(argv)
    try:
        if args.manifest:
            path = Path(args.manifest)
            manifest = _load_manifest(path) if path.is_dir() else parse_manifest(path.read_bytes())
        else:
            manifest = resolve(_tree(args.source), parse_setup_args(args.setup.split()))
        data = generate_parfile(Path(args.toml).read_text(), manifest.parameter_schema, manifest.resolved_units)
    except (CompositionError, ParameterError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.out:
        Path(args.out).write_bytes(data)
    else:
        sys.stdout.write(data.decode())
    return 0


# -- sfocu ---------------------------------------------------------------------------

def sfocu_main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="sfocu", description="compare two checkpoint files")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--tol", type=float, default=0.0)
    args = p.parse_args(argv)
    try:
        report = fio.compare_files(args.a, args.b, args.tol)
    except (fio.CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(report.format())
    return 0 if report.ok else 1


# -- flashtest -------------------------------------------------------------------------

def flashtest_main(argv=None) -> int:
    from composeflow import flashtest as ft

    p = argparse.ArgumentParser(prog="flashtest", description="regression tests against approved benchmarks")
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run-suite")
    r.add_argument("suite")
    r.add_argument("--benchmark-dir", required=True)
    r.add_argument("--output-dir", default="flashtest_output")
    r.add_argument("--summary", default=None, help="write the TOML summary here as well")
    r.add_argument("--source", default=None)
    a = sub.add_parser("approve", help="promote a test's outputs to a dated benchmark")
    a.add_argument("node")
    a.add_argument("--date", required=True)
    a.add_argument("--benchmark-dir", required=True)
    a.add_argument("--output-dir", default="flashtest_output")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")

    if args.cmd == "run-suite":
        try:
            report = ft.run_suite(Path(args.suite).read_text(), ft.BenchmarkStore(args.benchmark_dir),
                                  args.output_dir, _source_root(args.source))
        except (ft.HarnessError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        text = report.to_toml()
        print(text, end="")
        if args.summary:
            Path(args.summary).write_text(text)
        return report.exit_status

    try:
        ft._check_date(args.date, 0)
    except ft.SuiteSyntaxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    produced = Path(args.output_dir) / args.node
    files = {}
    for f in sorted(produced.rglob("*chk_[0-9][0-9][0-9][0-9]")):
        files[f.name] = f  # a restart's copy of a shared checkpoint is identical
    if not files:
        print(f"error: no checkpoints under {produced}", file=sys.stderr)
        return 2
    try:
        dest = ft.BenchmarkStore(args.benchmark_dir).approve(args.date, args.node, files.values())
    except ft.HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"approved {len(files)} files into {dest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
