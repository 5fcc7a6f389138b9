"""Test cases for the __main__ module."""

import json
import logging
import math
import shutil
import sys
import tempfile
from pathlib import Path
from typing import Any
from typing import List
from unittest.mock import patch

import pytest

from kslab import __main__
from kslab.dynamics import SimConfig


TINY_RUN = [
    "--n",
    "32",
    "--half-width",
    "8",
    "--dt",
    "0.01",
    "--t-end",
    "0.02",
    "--record-every",
    "1",
]


def test_main_help(capfd: Any) -> None:
    """It prints help and exits successfully."""
    with patch.object(sys, "argv", ["kslab", "--help"]):
        try:
            __main__.main()
        except SystemExit as e:
            # --help exits with code 0, which is expected
            assert e.code == 0

    out, err = capfd.readouterr()
    output = out + err
    assert "usage:" in output
    assert "Simulate and verify the 2D Keller-Segel system" in output


def test_main_version(capfd: Any) -> None:
    """It prints version and exits successfully."""
    with patch.object(sys, "argv", ["kslab", "--version"]):
        try:
            __main__.main()
        except SystemExit as e:
            assert e.code == 0

    out, err = capfd.readouterr()
    assert "0.1.0" in out + err


def test_main_no_args(capfd: Any) -> None:
    """It shows error when no command is provided."""
    with patch.object(sys, "argv", ["kslab"]):
        try:
            __main__.main()
        except SystemExit as e:
            # Should exit with error code 2 (argparse error)
            assert e.code == 2

    out, err = capfd.readouterr()
    output = out + err
    assert (
        "required: command" in output
        or "the following arguments are required" in output
    )


def test_main_profile_missing_mass() -> None:
    """It exits with an argparse error when profile has no mass."""
    with patch.object(sys, "argv", ["kslab", "profile"]):
        with pytest.raises(SystemExit) as info:
            __main__.main()
    assert info.value.code == 2


class TestParsing:
    """Test cases for argument parsing and configuration layering."""

    def test_verbosity(self) -> None:
        """Test the -v count mapping to logging levels."""
        assert __main__.parse_command_line(["simulate"])["verbosity"] == 30
        assert __main__.parse_command_line(["-vv", "simulate"])["verbosity"] == 10

    def test_setup_logging(self) -> None:
        """Test that logging setup accepts the mapped level."""
        __main__.setup_logging(20)
        assert logging.getLevelName(20) == "INFO"

    def test_output_root_precedence(self, monkeypatch: Any) -> None:
        """Test --out, then configured, then the environment, then out."""
        monkeypatch.delenv(__main__.OUT_ENV, raising=False)
        assert __main__.output_root(None) == Path("out")
        monkeypatch.setenv(__main__.OUT_ENV, "from_env")
        assert __main__.output_root(None) == Path("from_env")
        assert __main__.output_root(None, "configured") == Path("configured")
        assert __main__.output_root("flag", "configured") == Path("flag")

    def test_build_sim_config(self) -> None:
        """Test that flags override defaults and set the regime."""
        args = __main__.parse_command_line(["rescaled", "--mass", "2.5", "--n", "64"])
        config = __main__.build_sim_config(args, "rescaled")
        assert config.mass == 2.5
        assert config.n == 64
        assert config.regime == "rescaled"
        assert config.dt == SimConfig().dt


class TestCommands:
    """Test cases running each subcommand on tiny settings."""

    def setup_method(self) -> None:
        """Set up a scratch output directory."""
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self) -> None:
        """Clean up after each test method."""
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def _main(self, argv: List[str]) -> int:
        with patch.object(sys, "argv", ["kslab"] + argv):
            return __main__.main()

    def _write(self, name: str, data: Any) -> str:
        path = Path(self.temp_dir) / name
        path.write_text(json.dumps(data))
        return str(path)

    def test_simulate(self, capsys: Any) -> None:
        """Test a short physical run and its files."""
        out = Path(self.temp_dir) / "sim"
        result = self._main(["simulate", *TINY_RUN, "--no-plot", "-o", str(out)])
        assert result == 0
        assert (out / "trajectory.csv").exists()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["config"]["regime"] == "physical"
        assert "Run: physical" in capsys.readouterr().out

    def test_simulate_jobs(self) -> None:
        """Test FFT threads for a single run and the zero-thread error."""
        out = Path(self.temp_dir) / "jobs"
        argv = ["simulate", *TINY_RUN, "--no-plot", "-o", str(out)]
        assert self._main(argv + ["--jobs", "2"]) == 0
        assert (out / "summary.json").exists()
        assert self._main(argv + ["--jobs", "0"]) == 1
        assert __main__.parse_command_line(["rescaled", "--jobs", "3"])["jobs"] == 3
        config = __main__.build_sim_config({"jobs": 3}, "physical")
        assert "jobs" not in config.to_dict()

    def test_rescaled_with_plots(self) -> None:
        """Test a short rescaled run with figures."""
        out = Path(self.temp_dir) / "resc"
        assert self._main(["rescaled", *TINY_RUN, "-o", str(out)]) == 0
        assert (out / "trajectory.png").exists()
        assert (out / "final_density.png").exists()

    def test_simulate_config_file(self) -> None:
        """Test that flags override the config file."""
        config = self._write("run.json", {"n": 32, "mass": 3.0, "t_end": 0.02})
        out = Path(self.temp_dir) / "cfg"
        argv = ["simulate", "-c", config, "--mass", "2.0", "--dt", "0.01"]
        assert self._main(argv + ["--no-plot", "-o", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["config"]["mass"] == 2.0
        assert summary["config"]["n"] == 32

    def test_simulate_invalid_config(self) -> None:
        """Test that a schema violation returns 1."""
        config = self._write("bad.json", {"n": 30})
        assert self._main(["simulate", "-c", config, "-o", self.temp_dir]) == 1

    def test_simulate_scenario_file_rejected(self) -> None:
        """Test that a scenario file is not a run configuration."""
        config = self._write("s.json", {"scenario": "moment-bound"})
        assert self._main(["simulate", "-c", config, "-o", self.temp_dir]) == 1

    def test_profile(self, capsys: Any) -> None:
        """Test a single profile with its JSON and dump."""
        out = Path(self.temp_dir) / "prof"
        argv = ["profile", "--mass", "1.0", "--nodes", "128", "--r-max", "10"]
        assert self._main(argv + ["--tol", "1e-8", "--no-plot", "-o", str(out)]) == 0
        data = json.loads((out / "profile_1.json").read_text())
        assert data["mass"] == 1.0
        assert data["envelope"]["eps"] == 0.1
        assert (out / "profile_1_G.bin").exists()
        assert "Profile: M=1" in capsys.readouterr().out

    def test_profile_ladder(self) -> None:
        """Test a mass ladder with the profile figure."""
        out = Path(self.temp_dir) / "ladder"
        argv = ["profile", "--mass", "1.0", "2.5", "--nodes", "128"]
        assert self._main(argv + ["--tol", "1e-8", "-o", str(out)]) == 0
        assert (out / "profile_2p5.json").exists()
        assert (out / "profile.png").exists()

    def test_profile_out_of_range(self) -> None:
        """Test that a mass at 8 pi returns 1."""
        argv = ["profile", "--mass", "25.2", "--nodes", "64", "-o", self.temp_dir]
        assert self._main(argv) == 1

    def test_spectrum(self, capsys: Any) -> None:
        """Test the spectrum command on a coarse grid."""
        out = Path(self.temp_dir) / "spec"
        argv = ["spectrum", "--mass", "1.0", "--modes", "0,1", "--count", "2"]
        assert self._main(argv + ["--nodes", "128", "--no-plot", "-o", str(out)]) == 0
        data = json.loads((out / "spectrum.json").read_text())
        assert [entry["mode"] for entry in data] == [0, 1]
        assert (out / "eigvec_m1_0.bin").exists()
        assert "Mode 1" in capsys.readouterr().out

    def test_spectrum_bad_modes(self) -> None:
        """Test that malformed modes return 1."""
        argv = ["spectrum", "--mass", "1.0", "--modes=a", "-o", self.temp_dir]
        assert self._main(argv) == 1

    def test_verify_gaussian(self) -> None:
        """Test the inequality checks on a Gaussian."""
        out = Path(self.temp_dir) / "verify"
        argv = ["verify-inequalities", "--mass", "1.0", "--sigma", "1.0"]
        assert self._main(argv + ["-o", str(out)]) == 0
        reports = json.loads((out / "inequalities.json").read_text())
        assert len(reports) == 12
        assert all(r["passed"] for r in reports)

    def test_verify_mixtures(self) -> None:
        """Test the inequality checks on random mixtures."""
        out = Path(self.temp_dir) / "mix"
        argv = ["verify-inequalities", "--mixtures", "2", "--seed", "3"]
        assert self._main(argv + ["-o", str(out)]) == 0
        reports = json.loads((out / "inequalities.json").read_text())
        assert len(reports) == 24

    def test_scenario(self, capsys: Any) -> None:
        """Test a small second-moment scenario driven by a config file."""
        config = self._write(
            "scenario.json",
            {
                "n": 64,
                "half_width": 10.0,
                "kernel": "spectral",
                "dt": 1e-3,
                "t_end": 0.05,
                "record_every": 10,
                "parameters": {"masses": [4.0 * math.pi]},
            },
        )
        argv = ["scenario", "second-moment-law", "-c", config, "--no-plot"]
        assert self._main(argv + ["-o", self.temp_dir]) == 0
        summary = Path(self.temp_dir) / "second-moment-law" / "summary.json"
        assert json.loads(summary.read_text())["passed"]
        assert "PASSED" in capsys.readouterr().out

    def test_scenario_name_mismatch(self) -> None:
        """Test that a config naming another scenario returns 1."""
        config = self._write("other.json", {"scenario": "stationarity"})
        argv = ["scenario", "moment-bound", "-c", config, "-o", self.temp_dir]
        assert self._main(argv) == 1
