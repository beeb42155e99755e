"""
Integration tests for the smtrt command line.

Every command is driven through cli.main() with small equilibrium
configurations from tests/fixtures/configs, so runs finish in seconds.
"""
import json
import logging
import sys
from pathlib import Path

import pandas as pd
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from smtrt import cli
from smtrt.errors import ConvergenceError
from tests.conftest import FIXTURES_DIR

CONFIGS = FIXTURES_DIR / "configs"
STUDY_CONFIG = CONFIGS / "equilibrium_study.json"


@pytest.fixture(autouse=True)
def reset_package_logger():
    """Drop the CLI handler after each test so output does not leak between tests."""
    yield
    pkg = logging.getLogger("smtrt")
    for handler in list(pkg.handlers):
        pkg.removeHandler(handler)
    pkg.setLevel(logging.NOTSET)


def _main(*args) -> int:
    return cli.main([str(a) for a in args])


class TestRunCommand:
    """Test `smtrt run`."""

    @pytest.mark.timeout(60)
    def test_writes_outputs(self, tmp_path):
        """Test exit code 0 and the snapshot, probe and summary files."""
        out = tmp_path / "out"
        assert _main("run", "--config", STUDY_CONFIG, "--out", out) == cli.EXIT_OK
        assert (out / "snapshot_0.csv").is_file()
        assert (out / "snapshot_1.csv").is_file()
        probes = pd.read_csv(out / "probes.csv")
        assert list(probes.columns) == ["t", "T(x=0.01)", "T(x=0.04)"]
        assert len(probes) == 3
        summary = json.loads((out / "summary.json").read_text())
        assert summary["problem"] == "equilibrium"
        assert summary["steps"] == 2
        assert summary["floors"] == 0

    @pytest.mark.timeout(120)
    def test_repeat_runs_are_byte_identical(self, tmp_path):
        """Test that two runs of one configuration write identical files."""
        first, second = tmp_path / "a", tmp_path / "b"
        assert _main("run", "--config", STUDY_CONFIG, "--out", first) == cli.EXIT_OK
        assert _main("run", "--config", STUDY_CONFIG, "--out", second) == cli.EXIT_OK
        names = sorted(p.name for p in first.iterdir())
        assert names == sorted(p.name for p in second.iterdir())
        for name in names:
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

    @pytest.mark.timeout(60)
    def test_method_and_snapshot_overrides(self, tmp_path):
        """Test that --method and --snapshots replace the configured values."""
        out = tmp_path / "out"
        code = _main("run", "--config", STUDY_CONFIG, "--out", out,
                     "--method", "unaccelerated", "--snapshots", "0.002,0.004,0.008")
        assert code == cli.EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["method"] == "unaccelerated"
        assert (out / "snapshot_2.csv").is_file()
        assert summary["steps"] == 3

    @pytest.mark.timeout(60)
    def test_solver_failure_exit_code(self, tmp_path, mocker, caplog):
        """Test that a solver failure exits 1 with the message logged."""
        mocker.patch("smtrt.cli.run", side_effect=ConvergenceError("step 1: outer iteration did not converge"))
        with caplog.at_level(logging.ERROR, logger="smtrt"):
            code = _main("run", "--config", STUDY_CONFIG, "--out", tmp_path / "out")
        assert code == cli.EXIT_SOLVER
        assert "did not converge" in caplog.text


class TestConfigErrors:
    """Test how bad configurations are reported."""

    def test_schema_violations_itemized(self, tmp_path, caplog):
        """Test exit code 2 and one logged line per violation."""
        path = CONFIGS / "invalid_schema.json"
        with caplog.at_level(logging.ERROR, logger="smtrt"):
            code = _main("run", "--config", path, "--out", tmp_path)
        assert code == cli.EXIT_USAGE
        assert "dt must be positive" in caplog.text
        assert "method" in caplog.text
        assert "elements" in caplog.text

    def test_truncated_json(self, tmp_path, caplog):
        """Test that a syntax error is reported with its position."""
        with caplog.at_level(logging.ERROR, logger="smtrt"):
            code = _main("run", "--config", CONFIGS / "truncated.json", "--out", tmp_path)
        assert code == cli.EXIT_USAGE
        assert "truncated.json:" in caplog.text

    def test_missing_config(self, tmp_path):
        """Test that a missing file is a usage error."""
        assert _main("run", "--config", tmp_path / "absent.json") == cli.EXIT_USAGE

    def test_unwritable_output(self, tmp_path):
        """Test that an output path occupied by a file fails before computing."""
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert _main("run", "--config", STUDY_CONFIG, "--out", blocker) == cli.EXIT_USAGE

    def test_invalid_threads(self):
        """Test that --threads 0 is rejected by the parser."""
        with pytest.raises(SystemExit) as exc_info:
            _main("converge", "--config", STUDY_CONFIG, "--threads", "0")
        assert exc_info.value.code == 2

    def test_command_required(self):
        """Test that a subcommand is mandatory."""
        with pytest.raises(SystemExit):
            _main()


class TestStudyCommands:
    """Test `smtrt reference`, `converge` and `compare`."""

    def test_converge_without_reference(self, tmp_path, caplog):
        """Test exit code 2 and the instruction to create the reference."""
        with caplog.at_level(logging.ERROR, logger="smtrt"):
            code = _main("converge", "--config", STUDY_CONFIG, "--out", tmp_path)
        assert code == cli.EXIT_USAGE
        assert "smtrt reference" in caplog.text

    @pytest.mark.timeout(180)
    def test_reference_then_converge(self, tmp_path):
        """Test the two-stage study and the convergence table."""
        out = tmp_path / "study"
        assert _main("reference", "--config", STUDY_CONFIG, "--out", out) == cli.EXIT_OK
        assert (out / "reference.json").is_file()
        assert _main("converge", "--config", STUDY_CONFIG, "--out", out) == cli.EXIT_OK
        table = pd.read_csv(out / "convergence.csv")
        assert sorted(table["method"].unique()) == ["consistent", "independent"]
        assert len(table) == 8
        assert (table["l2_error"] < 1e-12).all()

    @pytest.mark.timeout(240)
    def test_threads_do_not_change_tables(self, tmp_path):
        """Test that --threads leaves the convergence table byte-identical."""
        ref = tmp_path / "reference.json"
        assert _main("reference", "--config", STUDY_CONFIG, "--out", tmp_path, "--reference", ref) == cli.EXIT_OK
        serial, threaded = tmp_path / "serial", tmp_path / "threaded"
        assert _main("converge", "--config", STUDY_CONFIG, "--out", serial,
                     "--reference", ref) == cli.EXIT_OK
        assert _main("converge", "--config", STUDY_CONFIG, "--out", threaded,
                     "--reference", ref, "--threads", "3") == cli.EXIT_OK
        assert (serial / "convergence.csv").read_bytes() == (threaded / "convergence.csv").read_bytes()

    @pytest.mark.timeout(120)
    def test_compare_on_equilibrium(self, tmp_path):
        """Test a speedup of one and no wall-clock columns in deterministic mode."""
        assert _main("compare", "--config", STUDY_CONFIG, "--out", tmp_path) == cli.EXIT_OK
        table = pd.read_csv(tmp_path / "compare.csv")
        assert set(table["method"]) == {"consistent", "independent", "unaccelerated"}
        assert table["sweep_ratio"].tolist() == pytest.approx([1.0, 1.0, 1.0])
        assert "wall_time" not in table.columns


class TestLogging:
    """Test the CLI logging setup."""

    def test_single_handler_after_reconfiguration(self):
        """Test that configuring twice leaves one CLI handler."""
        cli.configure_logging()
        cli.configure_logging(verbose=1)
        pkg = logging.getLogger("smtrt")
        assert len(pkg.handlers) == 1
        assert pkg.level == logging.DEBUG

    def test_quiet(self):
        """Test that --quiet raises the threshold to warnings."""
        cli.configure_logging(quiet=True)
        assert logging.getLogger("smtrt").level == logging.WARNING
