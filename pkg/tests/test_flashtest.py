import cases
import pytest

from composeflow import flashtest as ft

COMP, COMPOSITE = cases.CHANNEL_NODES


@pytest.fixture(scope="module")
def store(tmp_path_factory):
    s = ft.BenchmarkStore(tmp_path_factory.mktemp("bench"))
    cases.approve_channel_benchmarks(s, tmp_path_factory.mktemp("gen"))
    return s


# -- tests.yaml ---------------------------------------------------------------------

def test_parse_tests_yaml():
    specs = ft.parse_tests_yaml(
        "Comparison/a/b:\n  setupOptions: -auto -2d\n  parfiles: [x.par, y.par]\n  transfers: heater.toml\n")
    assert specs == [ft.TestSpec("Comparison/a/b", "-auto -2d", ("x.par", "y.par"), ("heater.toml",))]
    assert specs[0].kind == "Comparison"
    assert ft.parse_tests_yaml("") == []


@pytest.mark.parametrize("text", ["- a\n- b\n", "Unit/a:\n  setupOptions: x\n", "Comparison/a: {}\n",
                                  "Comparison/a:\n  setupOptions: x\n  extra: 1\n"])
def test_bad_tests_yaml(text):
    with pytest.raises(ft.TestSpecError):
        ft.parse_tests_yaml(text)


def test_shipped_applications_declare_tests():
    root = ft.source_root()
    for app in ("ChannelFlow", "FlowBoiling", "StaticDrop"):
        assert ft.load_tests(root, f"incompFlow/{app}")


# -- suite files --------------------------------------------------------------------

def test_parse_suite():
    entries = ft.parse_suite("# header\n\n" + cases.channel_suite(workers=3)
                             + 'incompFlow/X -t "Comparison/x" -cbase 2023-02-01 -tol 1e-12  # trailing\n')
    assert entries[0] == ft.SuiteEntry("incompFlow/ChannelFlow", COMP, 3, "2024-01-15")
    assert entries[1].rbase == "2024-01-15"
    assert entries[2].tol == 1e-12 and entries[2].workers == 1


@pytest.mark.parametrize("line", [
    "app -t Comparison/x",                                   # no -cbase
    "app -cbase 2024-01-01",                                 # no -t
    "app -t Comparison/x -cbase 2024-13-01",
    "app -t Comparison/x -cbase 2024-1-5",
    "app -t Comparison/x -cbase 2024-01-01 -np 0",
    "app -t Comparison/x -cbase 2024-01-01 -tol -1",
    "app -t Comparison/x -cbase 2024-01-01 -bogus 1",
    "app -t Comparison/x -cbase",
    "app -t Composite/x -cbase 2024-01-01",                  # composite without -rbase
    'app -t "Comparison/x -cbase 2024-01-01',
])
def test_bad_suite_lines(line):
    with pytest.raises(ft.SuiteSyntaxError) as info:
        ft.parse_suite("# ok\n" + line)
    assert "line 2" in str(info.value)


# -- benchmark store ------------------------------------------------------------------

def test_store_is_immutable_and_hashed(tmp_path):
    f = tmp_path / "run_chk_0000"
    f.write_bytes(b"abc")
    s = ft.BenchmarkStore(tmp_path / "store")
    s.approve("2024-02-02", COMP, [f])
    assert s.file("2024-02-02", COMP, "run_chk_0000").read_bytes() == b"abc"
    with pytest.raises(ft.BenchmarkExists):
        s.approve("2024-02-02", COMP, [f])
    with pytest.raises(ft.MissingBenchmark):
        s.file("2024-02-02", COMP, "other")
    with pytest.raises(ft.MissingBenchmark):
        s.file("2024-02-03", COMP, "run_chk_0000")
    (s.path("2024-02-02", COMP) / "run_chk_0000").write_bytes(b"abd")
    with pytest.raises(ft.CorruptBenchmark):
        s.file("2024-02-02", COMP, "run_chk_0000")
    with pytest.raises(ft.HarnessError):
        s.approve("2024-02-04", COMP, [])


# -- running --------------------------------------------------------------------------

def test_suite_passes_against_its_own_benchmarks(store, tmp_path):
    rep = ft.run_suite(cases.channel_suite(), store, tmp_path)
    assert [r.verdict for r in rep.results] == ["PASS", "PASS"]
    assert rep.exit_status == 0
    assert len(rep.results[1].reports) == 2          # before and after the restart
    assert "verdict = \"PASS\"" in rep.to_toml()


def test_changed_physics_fails(store, tmp_path):
    root = cases.mutated_source(tmp_path / "src")
    rep = ft.run_suite(cases.channel_suite(), store, tmp_path / "out", root=root)
    assert [r.verdict for r in rep.results] == ["FAIL", "FAIL"]
    assert rep.exit_status == 1
    assert all(r.max_error > 0.0 for r in rep.results)


def test_missing_benchmark_keeps_outputs(store, tmp_path):
    rep = ft.run_suite(cases.channel_suite(date="2030-01-01"), store, tmp_path)
    res = rep.results[0]
    assert res.verdict == "ERROR" and "MissingBenchmark" in res.message
    assert res.outputs and all(p.exists() for p in res.outputs)
    assert rep.rows()[0]["message"] == res.message


def test_unknown_test_node(store, tmp_path):
    rep = ft.run_suite('incompFlow/ChannelFlow -t "Comparison/nope" -cbase 2024-01-15\n', store, tmp_path)
    assert rep.results[0].verdict == "ERROR" and rep.exit_status == 1


def test_syntax_errors_stop_before_running(store, tmp_path):
    with pytest.raises(ft.SuiteSyntaxError):
        ft.run_suite(cases.channel_suite() + "broken line\n", store, tmp_path)
    assert not any(tmp_path.iterdir())
