from pathlib import Path

import cases
import pytest

from composeflow import cli
from composeflow import flashtest as ft

FIXTURES = Path(__file__).parent / "fixtures"
SHORT_PAR = """
nblockx = 2
nblocky = 2
xl_boundary_type = "inflow_ins"
xr_boundary_type = "outflow_ins"
yl_boundary_type = "noslip_ins"
yr_boundary_type = "noslip_ins"
xl_inflow_value = 1.0
dr_dtInit = 0.005
nend = 4
basenm = "cli_"
checkpointFileIntervalStep = 2
"""


@pytest.fixture
def objdir(tmp_path, capsys):
    obj = tmp_path / "obj"
    rc = cli.main(["setup", "--object", str(obj), "incompFlow/ChannelFlow", "-auto", "-2d",
                   "-nxb=8", "-nyb=8", "+incomp"])
    assert rc == 0
    assert "evolve" in capsys.readouterr().out
    return obj


def test_setup_then_run(objdir, tmp_path, capsys):
    assert (objdir / cli.MANIFEST).is_file()
    par = tmp_path / "short.par"
    par.write_text(SHORT_PAR)
    assert cli.main(["run", "--object", str(objdir), "--par", str(par)]) == 0
    out = capsys.readouterr().out
    assert "final_step = 4" in out
    assert (objdir / "cli_chk_0002").is_file()
    # restart from the middle checkpoint, relative to the object directory
    assert cli.main(["run", "--object", str(objdir), "--par", str(par), "--restart", "cli_chk_0001"]) == 0
    assert "steps = 2" in capsys.readouterr().out


def test_run_reports_bad_parameters(objdir, tmp_path, capsys):
    par = tmp_path / "bad.par"
    par.write_text("nend = 4\nno_such_parameter = 1\n")
    assert cli.main(["run", "--object", str(objdir), "--par", str(par)]) == 2
    assert "no_such_parameter" in capsys.readouterr().err


def test_setup_rejects_unknown_application(tmp_path, capsys):
    assert cli.main(["setup", "--object", str(tmp_path / "o"), "incompFlow/Nope", "-auto"]) == 2
    assert "error" in capsys.readouterr().err


def test_pargen(objdir, tmp_path, capsys):
    out = tmp_path / "flash.par"
    toml = FIXTURES / "multiphase_channel.toml"
    assert cli.pargen_main(["--toml", str(toml), "--setup", "incompFlow/FlowBoiling -auto -2d +incomp",
                            "--out", str(out)]) == 0
    first = out.read_bytes()
    assert b"nblockx = 10" in first
    # the same manifest, read back from disk, gives the same bytes
    m = cases.manifest("incompFlow/FlowBoiling -auto -2d +incomp")
    from composeflow.composer import emit_manifest
    (tmp_path / "fb.manifest").write_bytes(emit_manifest(m))
    assert cli.pargen_main(["--toml", str(toml), "--manifest", str(tmp_path / "fb.manifest")]) == 0
    assert capsys.readouterr().out.encode() == first
    bad = tmp_path / "bad.toml"
    bad.write_text("[Grid]\nno_such = 1\n")
    assert cli.pargen_main(["--toml", str(bad), "--manifest", str(objdir)]) == 2


def test_sfocu(objdir, tmp_path, capsys):
    par = tmp_path / "short.par"
    par.write_text(SHORT_PAR)
    cli.main(["run", "--object", str(objdir), "--par", str(par)])
    a, b = objdir / "cli_chk_0001", objdir / "cli_chk_0002"
    assert cli.sfocu_main([str(a), str(a)]) == 0
    assert cli.sfocu_main([str(a), str(b)]) == 1
    assert cli.sfocu_main([str(a), str(tmp_path / "missing")]) == 2
    assert "FAILURE" in capsys.readouterr().out


def test_flashtest_run_then_approve(tmp_path, capsys):
    suite = tmp_path / "suite.txt"
    suite.write_text(cases.channel_suite())
    bench, outdir = str(tmp_path / "bench"), str(tmp_path / "out")
    args = ["run-suite", str(suite), "--benchmark-dir", bench, "--output-dir", outdir,
            "--summary", str(tmp_path / "summary.toml")]
    assert cli.flashtest_main(args) == 1
    assert "ERROR" in (tmp_path / "summary.toml").read_text()
    for node in cases.CHANNEL_NODES:
        assert cli.flashtest_main(["approve", node, "--date", "2024-01-15", "--benchmark-dir", bench,
                                   "--output-dir", outdir]) == 0
    assert cli.flashtest_main(["approve", cases.CHANNEL_NODES[0], "--date", "2024-01-15",
                               "--benchmark-dir", bench, "--output-dir", outdir]) == 2
    assert cli.flashtest_main(["approve", "Comparison/none", "--date", "2024-01-15",
                               "--benchmark-dir", bench, "--output-dir", outdir]) == 2
    assert cli.flashtest_main(["approve", cases.CHANNEL_NODES[0], "--date", "15-01-2024",
                               "--benchmark-dir", bench, "--output-dir", outdir]) == 2
    assert cli.flashtest_main(args) == 0
    assert ft.BenchmarkStore(bench).has("2024-01-15", cases.CHANNEL_NODES[1])
    capsys.readouterr()
