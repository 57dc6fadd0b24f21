"""Regression tests against dated, approved benchmark files.

A test is declared in an application's ``tests/tests.yaml`` under a node
path such as ``Comparison/incompFlow/ChannelFlow/2d/uniform``. A suite file
lists which tests to run and against which benchmark dates::

    incompFlow/ChannelFlow -t "Comparison/incompFlow/ChannelFlow/2d/uniform" -np 2 -cbase 2024-01-15
    incompFlow/ChannelFlow -t "Composite/incompFlow/ChannelFlow/2d/uniform" -np 1 -cbase 2024-01-15 -rbase 2024-01-15

Verdicts: PASS (files agree within tolerance), FAIL (they do not) and
ERROR (the test could not be run or compared at all).
"""
from __future__ import annotations

import datetime as _dt
import hashlib
import logging
import shlex
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from composeflow import driver
from composeflow import io as fio
from composeflow.composer import APP_ROOT, UnitTree, parse_setup_args, resolve
from composeflow.params import parse_parfile, validate

logger = logging.getLogger(__name__)

KINDS = ("Comparison", "Composite")
HASH_FILE = "MANIFEST.sha256"


class HarnessError(ValueError):
    pass


class TestSpecError(HarnessError):
    pass


class SuiteSyntaxError(HarnessError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"suite line {lineno}: {msg}")
        self.lineno = lineno


class MissingBenchmark(HarnessError):
    pass


class BenchmarkExists(HarnessError):
    pass


class CorruptBenchmark(HarnessError):
    pass


# -- declarations ----------------------------------------------------------------

@dataclass(frozen=True)
class TestSpec:
    node: str
    setup_options: str
    parfiles: tuple = ()
    transfers: tuple = ()

    __test__ = False  # not a pytest class

    @property
    def kind(self) -> str:
        return self.node.split("/", 1)[0]


def _as_list(value) -> tuple:
    if value is None:
        return ()
    if isinstance(value, str):
        return tuple(value.split())
    return tuple(str(v) for v in value)


def parse_tests_yaml(text: str) -> list[TestSpec]:
    doc = yaml.safe_load(text)
    if doc is None:
        return []
    if not isinstance(doc, dict):
        raise TestSpecError("tests.yaml must be a mapping from test node to its settings")
    specs = []
    for node, body in doc.items():
        node = str(node)
        if node.split("/", 1)[0] not in KINDS or "/" not in node:
            raise TestSpecError(f"test node {node!r} must start with Comparison/ or Composite/")
        if not isinstance(body, dict) or "setupOptions" not in body:
            raise TestSpecError(f"test node {node!r} has no setupOptions")
        unknown = set(body) - {"setupOptions", "parfiles", "transfers"}
        if unknown:
            raise TestSpecError(f"test node {node!r}: unknown keys {sorted(unknown)}")
        specs.append(TestSpec(node, str(body["setupOptions"]), _as_list(body.get("parfiles")),
                              _as_list(body.get("transfers"))))
    return specs


@dataclass(frozen=True)
class SuiteEntry:
    application: str
    node: str
    workers: int = 1
    cbase: str = ""
    rbase: str = ""
    tol: float = 0.0


def _check_date(text: str, lineno: int) -> str:
    try:
        _dt.date.fromisoformat(text)
    except ValueError:
        raise SuiteSyntaxError(lineno, f"bad date {text!r}, expected yyyy-mm-dd") from None
    if len(text) != 10:
        raise SuiteSyntaxError(lineno, f"bad date {text!r}, expected yyyy-mm-dd")
    return text


def parse_suite(text: str) -> list[SuiteEntry]:
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            toks = shlex.split(line, comments=True)
        except ValueError as exc:
            raise SuiteSyntaxError(lineno, str(exc)) from None
        if not toks:
            continue
        app, rest = toks[0], toks[1:]
        opts = {}
        i = 0
        while i < len(rest):
            flag = rest[i]
            if flag not in ("-t", "-np", "-cbase", "-rbase", "-tol"):
                raise SuiteSyntaxError(lineno, f"unknown option {flag!r}")
            if i + 1 >= len(rest):
                raise SuiteSyntaxError(lineno, f"{flag} needs a value")
            opts[flag] = rest[i + 1]
            i += 2
        if "-t" not in opts:
            raise SuiteSyntaxError(lineno, "missing -t <test node>")
        if "-cbase" not in opts:
            raise SuiteSyntaxError(lineno, "missing -cbase <date>")
        try:
            workers = int(opts.get("-np", 1))
            tol = float(opts.get("-tol", 0.0))
        except ValueError as exc:
            raise SuiteSyntaxError(lineno, str(exc)) from None
        if workers < 1:
            raise SuiteSyntaxError(lineno, "-np must be positive")
        if tol < 0.0:
            raise SuiteSyntaxError(lineno, "-tol must be nonnegative")
        node = opts["-t"]
        rbase = _check_date(opts["-rbase"], lineno) if "-rbase" in opts else ""
        if node.startswith("Composite/") and not rbase:
            raise SuiteSyntaxError(lineno, "composite tests need -rbase <date>")
        entries.append(SuiteEntry(app, node, workers, _check_date(opts["-cbase"], lineno), rbase, tol))
    return entries


# -- benchmark store ---------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class BenchmarkStore:
    """``root/<date>/<test node>/`` directories of approved files, each with a hash manifest."""

    def __init__(self, root):
        self.root = Path(root)

    def path(self, date: str, node: str) -> Path:
        return self.root / date / node

    def has(self, date: str, node: str) -> bool:
        return (self.path(date, node) / HASH_FILE).is_file()

    def approve(self, date: str, node: str, files) -> Path:
        dest = self.path(date, node)
        if dest.exists():
            raise BenchmarkExists(f"benchmark {date}/{node} already exists and is immutable")
        files = [Path(f) for f in files]
        if not files:
            raise HarnessError("nothing to approve")
        dest.mkdir(parents=True)
        lines = []
        for f in sorted(files, key=lambda p: p.name):
            shutil.copyfile(f, dest / f.name)
            lines.append(f"{_sha256(dest / f.name)}  {f.name}\n")
        (dest / HASH_FILE).write_text("".join(lines))
        return dest

    def file(self, date: str, node: str, name: str) -> Path:
        if not self.has(date, node):
            raise MissingBenchmark(f"no benchmark for {node} dated {date}")
        base = self.path(date, node)
        recorded = {}
        for line in (base / HASH_FILE).read_text().splitlines():
            digest, _, fname = line.partition("  ")
            recorded[fname] = digest
        if name not in recorded:
            raise MissingBenchmark(f"benchmark {date}/{node} has no file {name}")
        target = base / name
        if not target.is_file() or _sha256(target) != recorded[name]:
            raise CorruptBenchmark(f"benchmark file {date}/{node}/{name} does not match its recorded hash")
        return target


# -- running -----------------------------------------------------------------------

@dataclass
class TestResult:
    node: str
    verdict: str                 # PASS | FAIL | ERROR
    max_error: float = 0.0
    seconds: float = 0.0
    message: str = ""
    reports: list = field(default_factory=list)
    outputs: list = field(default_factory=list)

    __test__ = False


def source_root() -> Path:
    return Path(driver.__file__).parent / "source"


def app_dir(root: Path, application: str) -> Path:
    return Path(root) / APP_ROOT / application


def load_tests(root: Path, application: str) -> dict[str, TestSpec]:
    path = app_dir(root, application) / "tests" / "tests.yaml"
    if not path.is_file():
        raise TestSpecError(f"{application} has no tests/tests.yaml")
    return {s.node: s for s in parse_tests_yaml(path.read_text())}


def _prepare(spec: TestSpec, entry: SuiteEntry, root: Path, tree: UnitTree, rundir: Path):
    request = parse_setup_args([entry.application, *shlex.split(spec.setup_options)])
    manifest = resolve(tree, request)
    if not spec.parfiles:
        raise TestSpecError(f"{spec.node} lists no parfiles")
    tests_dir = app_dir(root, entry.application) / "tests"
    values = {}
    for name in spec.parfiles:
        par = tests_dir / name
        if not par.is_file():
            raise TestSpecError(f"parfile {par} does not exist")
        values.update(parse_parfile(par.read_text()).values)
    params = validate(values, manifest.schema(), source=str(spec.parfiles))
    rundir.mkdir(parents=True, exist_ok=True)
    for t in spec.transfers:
        src = Path(root).parent / t
        if not src.is_file():
            raise TestSpecError(f"transfer {t} does not exist")
        shutil.copyfile(src, rundir / src.name)
    return manifest, params


def _compare(store: BenchmarkStore, date: str, node: str, produced: Path, tol: float):
    bench = store.file(date, node, produced.name)
    return fio.compare_files(produced, bench, tol)


def run_comparison(spec: TestSpec, entry: SuiteEntry, store: BenchmarkStore, outdir,
                   root=None, tree: UnitTree | None = None) -> TestResult:
    """Run the test and compare its last checkpoint with the approved one.

    The simulation runs even when the benchmark is missing, so its outputs
    can be inspected and approved; the verdict is then ERROR.
    """
    root = Path(root) if root is not None else source_root()
    t0 = time.perf_counter()
    res = TestResult(spec.node, "ERROR")
    try:
        tree = tree or UnitTree.from_directory(root)
        rundir = Path(outdir) / spec.node
        manifest, params = _prepare(spec, entry, root, tree, rundir)
        sim, _ = driver.run(manifest, params, nthreads=entry.workers, outdir=rundir, workdir=rundir)
        final = rundir / sim.state.checkpoints[-1]
        res.outputs = [rundir / n for n in sim.state.checkpoints]
        rep = _compare(store, entry.cbase, spec.node, final, entry.tol)
        res.reports.append(rep)
        res.max_error = rep.max_error
        res.verdict = "PASS" if rep.ok else "FAIL"
    except Exception as exc:  # anything that stops the test from producing a comparison
        res.message = f"{type(exc).__name__}: {exc}"
        logger.error("%s: %s", spec.node, res.message)
    res.seconds = time.perf_counter() - t0
    return res


def run_composite(spec: TestSpec, entry: SuiteEntry, store: BenchmarkStore, outdir,
                  root=None, tree: UnitTree | None = None) -> TestResult:
    """Run to the first checkpoint, compare, restart from it, run to the end, compare."""
    root = Path(root) if root is not None else source_root()
    t0 = time.perf_counter()
    res = TestResult(spec.node, "ERROR")
    try:
        tree = tree or UnitTree.from_directory(root)
        rundir = Path(outdir) / spec.node
        manifest, params = _prepare(spec, entry, root, tree, rundir)
        every = int(params.get("checkpointFileIntervalStep", 0))
        if every <= 0 or every >= int(params["nend"]):
            raise TestSpecError("composite tests need 0 < checkpointFileIntervalStep < nend")
        first_dir, second_dir = rundir / "first", rundir / "restart"
        sim1, _ = driver.run(manifest, params.replace(nend=every), nthreads=entry.workers,
                             outdir=first_dir, workdir=rundir)
        mid = first_dir / sim1.state.checkpoints[-1]
        res.outputs = [first_dir / n for n in sim1.state.checkpoints]
        sim2, _ = driver.run(manifest, params, nthreads=entry.workers, outdir=second_dir,
                             workdir=rundir, restart_from=mid)
        final = second_dir / sim2.state.checkpoints[-1]
        res.outputs += [second_dir / n for n in sim2.state.checkpoints]
        rep1 = _compare(store, entry.cbase, spec.node, mid, entry.tol)
        res.reports.append(rep1)
        rep2 = _compare(store, entry.rbase, spec.node, final, entry.tol)
        res.reports.append(rep2)
        res.max_error = max(rep1.max_error, rep2.max_error)
        res.verdict = "PASS" if rep1.ok and rep2.ok else "FAIL"
    except Exception as exc:
        res.message = f"{type(exc).__name__}: {exc}"
        logger.error("%s: %s", spec.node, res.message)
    res.seconds = time.perf_counter() - t0
    return res


def run_entry(entry: SuiteEntry, store: BenchmarkStore, outdir, root=None, tree=None) -> TestResult:
    root = Path(root) if root is not None else source_root()
    try:
        spec = load_tests(root, entry.application).get(entry.node)
        if spec is None:
            raise TestSpecError(f"{entry.application} declares no test {entry.node!r}")
    except Exception as exc:
        return TestResult(entry.node, "ERROR", message=f"{type(exc).__name__}: {exc}")
    runner = run_composite if spec.kind == "Composite" else run_comparison
    return runner(spec, entry, store, outdir, root, tree)


def produce_benchmark(entry: SuiteEntry, outdir, root=None, tree=None) -> list[Path]:
    """Run a test's simulation uninterrupted and return every checkpoint it wrote.

    For a composite test these include the intermediate checkpoint, so one
    approval serves as both ``-cbase`` and ``-rbase``.
    """
    root = Path(root) if root is not None else source_root()
    spec = load_tests(root, entry.application)[entry.node]
    tree = tree or UnitTree.from_directory(root)
    rundir = Path(outdir) / spec.node
    manifest, params = _prepare(spec, entry, root, tree, rundir)
    sim, _ = driver.run(manifest, params, nthreads=entry.workers, outdir=rundir, workdir=rundir)
    return [rundir / n for n in sim.state.checkpoints]


@dataclass
class SuiteReport:
    results: list

    @property
    def exit_status(self) -> int:
        return 0 if all(r.verdict == "PASS" for r in self.results) else 1

    def rows(self) -> list[dict]:
        rows = []
        for r in self.results:
            row = {"test": r.node, "verdict": r.verdict, "max_error": float(r.max_error),
                   "seconds": float(r.seconds)}
            if r.message:
                row["message"] = r.message
            rows.append(row)
        return rows

    def to_toml(self) -> str:
        import tomli_w
        return tomli_w.dumps({"result": self.rows()})


def run_suite(text: str, store: BenchmarkStore, outdir, root=None) -> SuiteReport:
    """Parse every entry first, then run them one after another."""
    entries = parse_suite(text)
    root = Path(root) if root is not None else source_root()
    tree = UnitTree.from_directory(root) if entries else None
    results = [run_entry(e, store, outdir, root, tree) for e in entries]
    return SuiteReport(results)
