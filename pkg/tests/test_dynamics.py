"""Test cases for the dynamics module."""

import json
import math
import pickle
import shutil
import tempfile
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pandas as pd
import pytest

from kslab.dynamics import COEFFICIENT_CACHE
from kslab.dynamics import EDGE_TAPER
from kslab.dynamics import TRAJECTORY_COLUMNS
from kslab.dynamics import BlowupOrInstability
from kslab.dynamics import ConfigError
from kslab.dynamics import KellerSegelIntegrator
from kslab.dynamics import SimConfig
from kslab.dynamics import SimState
from kslab.dynamics import TrajectoryRecord
from kslab.dynamics import diagnostics
from kslab.dynamics import edge_window
from kslab.dynamics import make_state
from kslab.dynamics import physical_time
from kslab.dynamics import physical_to_rescaled
from kslab.dynamics import rescaled_time
from kslab.dynamics import run
from kslab.dynamics import save_summary
from kslab.dynamics import short_time_l43
from kslab.dynamics import step_physical
from kslab.dynamics import step_rescaled
from kslab.fields import Field2D
from kslab.fields import gaussian_datum
from kslab.fields import integrate
from kslab.fields import lp_norm
from kslab.fields import make_grid
from kslab.fields import save_field
from kslab.functionals import c1_constant
from kslab.functionals import rescaled_second_moment_limit


class TestSimConfig:
    """Test cases for run configuration and validation."""

    def test_defaults_valid(self) -> None:
        """Test that the default configuration validates."""
        config = SimConfig().validate()
        assert config.n == 128
        assert config.mass == pytest.approx(4 * math.pi)
        assert config.kernel == "hockney"
        assert config.regime == "physical"

    def test_negative_mass(self) -> None:
        """Test the field-level message for a negative mass."""
        with pytest.raises(ConfigError) as info:
            SimConfig.from_dict({"mass": -1})
        assert "mass: must be positive, got -1.0" in info.value.errors

    def test_bad_cell_count(self) -> None:
        """Test the field-level message for n = 100."""
        with pytest.raises(ConfigError, match="n: must be a power of two >= 16"):
            SimConfig.from_dict({"n": 100})

    def test_all_problems_reported(self) -> None:
        """Test that every problem is collected into one error."""
        with pytest.raises(ConfigError) as info:
            SimConfig.from_dict(
                {"n": 100, "dt": 0, "regime": "warp", "colour": "red"}
            )
        errors = info.value.errors
        assert "colour: unknown key" in errors
        assert any(e.startswith("n:") for e in errors)
        assert any(e.startswith("dt:") for e in errors)
        assert any(e.startswith("regime:") for e in errors)

    def test_is_value_error(self) -> None:
        """Test that configuration errors are value errors."""
        assert issubclass(ConfigError, ValueError)

    def test_center_margin(self) -> None:
        """Test that the datum must stay six widths inside the box."""
        with pytest.raises(ConfigError, match="center: leaves margin"):
            SimConfig.from_dict({"center": [5.0, 0.0], "half_width": 8.0})

    def test_missing_init_path(self) -> None:
        """Test that an initial dump must exist."""
        with pytest.raises(ConfigError, match="init_path: no dump sidecar"):
            SimConfig.from_dict({"init_path": "/nonexistent/field"})

    def test_json_conversions(self) -> None:
        """Test whole-number floats and center lists from JSON."""
        config = SimConfig.from_dict({"half_width": 10, "center": [1, 0]})
        assert isinstance(config.half_width, float)
        assert config.center == (1, 0)
        assert config.to_dict()["center"] == [1, 0]

    def test_replace_validates(self) -> None:
        """Test that replace re-validates the result."""
        assert SimConfig().replace(dt=1e-4).dt == 1e-4
        with pytest.raises(ConfigError):
            SimConfig().replace(kernel="direct")

    def test_error_pickles(self) -> None:
        """Test that configuration errors survive process boundaries."""
        error = pickle.loads(pickle.dumps(ConfigError(["n: bad"])))
        assert error.errors == ["n: bad"]


class TestIntegrator:
    """Test cases for single time steps."""

    def setup_method(self) -> None:
        """Set up a Gaussian on a modest grid."""
        self.grid = make_grid(64, 8.0)
        self.f = gaussian_datum(self.grid, 4 * math.pi, 1.0)

    def test_heat_equation_exact(self) -> None:
        """Test that pure diffusion reproduces the heat kernel."""
        grid = make_grid(128, 12.0)
        state = make_state(gaussian_datum(grid, 1.0, 1.0))
        for _ in range(10):
            state = step_physical(state, 0.05, attraction=False)
        expected = gaussian_datum(grid, 1.0, math.sqrt(2.0))
        assert state.t == pytest.approx(0.5)
        assert state.steps == 10
        np.testing.assert_allclose(state.f.values, expected.values, atol=1e-12)

    def test_rescaled_heat_profile_stationary(self) -> None:
        """Test that the unit Gaussian is stationary without attraction."""
        grid = make_grid(64, 10.0)
        f = gaussian_datum(grid, 2.0, 1.0)
        state = make_state(f, regime="rescaled", kernel="spectral")
        for _ in range(100):
            state = step_rescaled(state, 0.005, attraction=False)
        np.testing.assert_allclose(state.f.values, f.values, atol=1e-9)

    def test_mass_conserved(self) -> None:
        """Test mass conservation of the coupled step."""
        state = make_state(self.f)
        mass = state.mass
        for _ in range(20):
            state = step_physical(state, 1e-3)
        assert state.mass == pytest.approx(mass, rel=1e-12)

    def test_regime_mismatch(self) -> None:
        """Test that each stepper accepts only its own regime."""
        physical = make_state(self.f)
        rescaled = make_state(self.f, regime="rescaled")
        with pytest.raises(ValueError, match="needs a rescaled state"):
            step_rescaled(physical, 1e-3)
        with pytest.raises(ValueError, match="needs a physical state"):
            step_physical(rescaled, 1e-3)

    def test_invalid_arguments(self) -> None:
        """Test regime, kernel and step validation."""
        with pytest.raises(ValueError, match="regime must be one of"):
            make_state(self.f, regime="sideways")
        with pytest.raises(ValueError, match="kernel must be one of"):
            KellerSegelIntegrator(self.grid, kernel="direct")
        integrator = KellerSegelIntegrator(self.grid)
        with pytest.raises(ValueError, match="dt must be positive"):
            integrator.step(make_state(self.f), 0.0)

    def test_cfl_violation(self) -> None:
        """Test that a step beyond the CFL bound is refused."""
        state = make_state(self.f)
        with pytest.raises(BlowupOrInstability) as info:
            step_physical(state, 10.0)
        assert info.value.reason == "cfl"
        assert info.value.state is state

    def test_stability_bound(self) -> None:
        """Test the advective CFL bound and the drift-free case."""
        integrator = KellerSegelIntegrator(self.grid, attraction=False)
        assert integrator.stability_bound(make_state(self.f).potential) == math.inf
        coupled = KellerSegelIntegrator(self.grid)
        pot = make_state(self.f).potential
        expected = 0.5 * self.grid.spacing / float(np.max(pot.speed))
        assert coupled.stability_bound(pot) == pytest.approx(expected)

    def test_coefficients_cached(self) -> None:
        """Test the ETD coefficients at the zero mode."""
        integrator = KellerSegelIntegrator(self.grid)
        expo, phi1, phi2 = integrator.coefficients(1e-3)
        assert expo[0, 0] == pytest.approx(1.0)
        assert phi1[0, 0] == pytest.approx(1.0)
        assert phi2[0, 0] == pytest.approx(0.5)
        assert integrator.coefficients(1e-3)[0] is expo

    def test_coefficients_cache_bounded(self) -> None:
        """Test that many step sizes keep only the most recent coefficients."""
        integrator = KellerSegelIntegrator(self.grid)
        first = integrator.coefficients(1e-3)[0]
        for j in range(3 * COEFFICIENT_CACHE):
            integrator.coefficients(1e-3 / 2 ** (j + 1))
        assert len(integrator._coefficients) == COEFFICIENT_CACHE
        assert integrator.coefficients(1e-3)[0] is not first
        assert len(integrator._coefficients) == COEFFICIENT_CACHE

    def test_edge_window(self) -> None:
        """Test that the drift vanishes at the seam and is untouched inside."""
        window = edge_window(self.grid)
        assert window.shape == (self.grid.n, self.grid.n)
        assert window.max() == pytest.approx(1.0)
        assert np.all(window[[0, -1], :] < 0.05)
        assert np.all(window[:, [0, -1]] < 0.05)
        inner = np.abs(self.grid.centers) < (1 - EDGE_TAPER) * self.grid.half_width
        np.testing.assert_array_equal(window[np.ix_(inner, inner)], 1.0)
        with pytest.raises(ValueError, match="taper must lie in"):
            edge_window(self.grid, taper=1.5)


class TestRun:
    """Test cases for full runs and trajectory records."""

    def setup_method(self) -> None:
        """Set up test fixtures before each test method."""
        self.temp_dir = tempfile.mkdtemp()
        self.config = SimConfig(
            n=64, half_width=8.0, mass=4 * math.pi, dt=1e-2, t_end=0.1, record_every=5
        )

    def teardown_method(self) -> None:
        """Clean up after each test method."""
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_sampling(self) -> None:
        """Test samples at steps 0, 5 and 10 and the final state."""
        record = run(self.config)
        assert len(record) == 3
        np.testing.assert_allclose(record.column("t"), [0.0, 0.05, 0.1], atol=1e-12)
        assert record.blowup_time is None
        assert record.final_state is not None
        assert record.final_state.steps == 10

    def test_observer(self) -> None:
        """Test that the observer sees every sample."""
        seen = []
        run(self.config, observer=lambda s: seen.append(s.t))
        assert len(seen) == 3

    def test_free_energy_decreases(self) -> None:
        """Test monotone free energy and conserved mass along a run."""
        record = run(self.config.replace(record_every=1))
        F = record.column("F")
        assert np.all(np.diff(F) <= 1e-8)
        mass = record.column("mass")
        assert np.max(np.abs(mass - mass[0])) < 1e-10 * mass[0]

    def test_second_moment_law(self) -> None:
        """Test dM2/dt = 4M (1 - M / 8 pi) for a subcritical Gaussian."""
        config = SimConfig(
            n=64, half_width=10.0, kernel="spectral", dt=1e-3, t_end=0.2
        )
        record = run(config)
        slope = np.polyfit(record.column("t"), record.column("m2"), 1)[0]
        assert slope == pytest.approx(c1_constant(config.mass), rel=1e-3)

    def test_rescaled_second_moment(self) -> None:
        """Test relaxation of M2 toward 2M (1 - M / 8 pi) in the rescaled regime."""
        config = SimConfig(
            n=64,
            half_width=10.0,
            kernel="spectral",
            regime="rescaled",
            dt=1e-3,
            t_end=0.5,
            record_every=100,
        )
        record = run(config)
        limit = rescaled_second_moment_limit(config.mass)
        m2_0 = 2.0 * config.mass
        expected = limit + (m2_0 - limit) * math.exp(-2.0 * 0.5)
        assert record.column("m2")[-1] == pytest.approx(expected, rel=1e-3)

    @pytest.mark.parametrize(
        "dt, kernel", [(2e-3, "hockney"), (4e-3, "hockney"), (4e-3, "spectral")]
    )
    def test_rescaled_off_center_coarse_grid(self, dt: float, kernel: str) -> None:
        """Test that no mass collects at the box edge on a coarse rescaled grid."""
        config = SimConfig(
            n=64,
            half_width=8.0,
            center=(0.5, 0.0),
            regime="rescaled",
            kernel=kernel,
            dt=dt,
            t_end=1.0,
            record_every=50,
        )
        record = run(config)
        assert record.blowup_time is None
        assert record.final_state is not None
        values = record.final_state.f.values
        edge = max(np.abs(values[[0, -1], :]).max(), np.abs(values[:, [0, -1]]).max())
        assert edge < 1e-9 * values.max()
        mass = record.column("mass")
        assert np.max(np.abs(mass - mass[0])) < 1e-10 * mass[0]

    def test_rescaled_energy_decreases(self) -> None:
        """Test that E(g(t)) is non-increasing along a rescaled run."""
        config = SimConfig(
            n=64,
            half_width=8.0,
            sigma=1.5,
            regime="rescaled",
            dt=5e-3,
            t_end=1.0,
            record_every=5,
        )
        E = run(config).column("E")
        assert np.all(np.diff(E) <= 1e-8 * max(1.0, abs(E[0])))
        assert E[-1] < E[0]

    def test_heat_flow_entropy_dissipation(self) -> None:
        """Test dH/dt = -I along the heat flow."""
        config = SimConfig(
            n=128,
            half_width=12.0,
            mass=1.0,
            attraction=False,
            dt=1e-2,
            t_end=0.5,
            record_every=1,
        )
        frame = run(config).to_frame()
        slope = np.gradient(frame["H"].to_numpy(), frame["t"].to_numpy())
        np.testing.assert_allclose(
            slope[1:-1], -frame["I"].to_numpy()[1:-1], rtol=2e-3
        )

    def test_time_step_refinement(self) -> None:
        """Test second-order convergence of f(T) as dt is halved."""
        finals = []
        for dt in (0.02, 0.01, 0.005):
            record = run(self.config.replace(dt=dt, t_end=0.2, record_every=100))
            assert record.final_state is not None
            finals.append(record.final_state.f)
        coarse = lp_norm(finals[0] - finals[1], 2.0)
        fine = lp_norm(finals[1] - finals[2], 2.0)
        assert coarse / fine >= 3.5

    def test_supercritical_blowup_recorded(self) -> None:
        """Test that concentration above 8 pi ends the run with a recorded time."""
        config = SimConfig(
            n=128,
            half_width=3.0,
            mass=10 * math.pi,
            sigma=0.5,
            dt=1e-3,
            t_end=0.6,
            neg_tol=1e-4,
            adaptive_dt=True,
            blowup_linf_factor=3.0,
        )
        record = run(config)
        assert record.blowup_time is not None
        assert record.blowup_reason in {"linf", "cfl"}
        assert record.blowup_time < config.t_end
        assert record.rows[-1]["t"] <= record.blowup_time

    def test_supercritical_negativity_raises(self) -> None:
        """Test that an undershoot above 8 pi is an error, not a blow-up."""

        def undershoot(
            integrator: KellerSegelIntegrator, state: SimState, dt: float
        ) -> None:
            raise BlowupOrInstability("negativity", state, 0.5, "undershoot")

        config = SimConfig(
            n=32, half_width=4.0, mass=10 * math.pi, sigma=0.5, dt=1e-3, t_end=0.01
        )
        with patch.object(
            KellerSegelIntegrator, "step", autospec=True, side_effect=undershoot
        ):
            with pytest.raises(BlowupOrInstability) as info:
                run(config)
        assert info.value.reason == "negativity"

    def test_subcritical_instability_raises(self) -> None:
        """Test that instability below 8 pi is an error."""
        config = SimConfig(n=64, half_width=4.0, sigma=0.5, dt=1.0, t_end=2.0)
        with pytest.raises(BlowupOrInstability, match="cfl"):
            run(config)

    def test_dumps_and_restart(self) -> None:
        """Test field dumps and a restart from the last one."""
        config = self.config.replace(dump_every=5)
        run(config, out_dir=self.temp_dir)
        names = sorted(p.name for p in Path(self.temp_dir).glob("field_*.bin"))
        assert names == [
            "field_0000000.bin",
            "field_0000005.bin",
            "field_0000010.bin",
        ]
        restart = self.config.replace(
            init_path=str(Path(self.temp_dir) / "field_0000010")
        )
        record = run(restart)
        assert record.column("t")[0] == pytest.approx(0.1)
        assert record.column("t")[-1] == pytest.approx(0.2)

    def test_initial_density(self) -> None:
        """Test an explicit initial density and its grid check."""
        grid = make_grid(64, 8.0)
        f = gaussian_datum(grid, 2.0, 1.5)
        record = run(self.config, initial=f)
        assert record.column("mass")[0] == pytest.approx(2.0)
        with pytest.raises(ConfigError, match="initial"):
            run(self.config, initial=gaussian_datum(make_grid(32, 8.0), 2.0, 1.0))

    def test_restart_grid_mismatch(self) -> None:
        """Test that a dump on another grid is rejected."""
        path = Path(self.temp_dir) / "other"
        save_field(gaussian_datum(make_grid(32, 8.0), 1.0, 1.0), path)
        with pytest.raises(ConfigError, match="init_path: dump grid"):
            run(self.config.replace(init_path=str(path)))

    def test_csv_and_summary(self) -> None:
        """Test the trajectory table and JSON summary."""
        record = run(self.config)
        csv_path = record.to_csv(Path(self.temp_dir) / "trajectory.csv")
        frame = pd.read_csv(csv_path)
        assert list(frame.columns) == TRAJECTORY_COLUMNS
        assert len(frame) == 3

        summary_path = save_summary(record, Path(self.temp_dir) / "summary.json")
        with open(summary_path) as fh:
            summary = json.load(fh)
        assert summary["samples"] == 3
        assert summary["blowup_time"] is None
        assert summary["config"]["n"] == 64
        assert summary["mass_drift"] < 1e-10

    def test_short_time_l43(self) -> None:
        """Test the t^1/4 L4/3 series of a physical run."""
        frame = short_time_l43(self.config)
        assert list(frame.columns) == ["t", "t14l43"]
        assert frame["t14l43"].iloc[0] == 0.0
        with pytest.raises(ValueError, match="physical regime"):
            short_time_l43(self.config.replace(regime="rescaled"))


class TestTrajectoryRecord:
    """Test cases for the trajectory container."""

    def _row(self, t: float) -> dict:
        row = {name: 1.0 for name in TRAJECTORY_COLUMNS}
        row["t"] = t
        return row

    def test_times_increase(self) -> None:
        """Test that sample times must increase strictly."""
        record = TrajectoryRecord()
        record.append(self._row(0.0))
        with pytest.raises(ValueError, match="does not exceed previous"):
            record.append(self._row(0.0))

    def test_missing_columns(self) -> None:
        """Test that incomplete samples are rejected."""
        with pytest.raises(ValueError, match="missing columns"):
            TrajectoryRecord().append({"t": 0.0})

    def test_unknown_column(self) -> None:
        """Test column lookup validation."""
        with pytest.raises(ValueError, match="unknown trajectory column"):
            TrajectoryRecord().column("temperature")

    def test_empty_summary(self) -> None:
        """Test the summary of an empty record."""
        summary = TrajectoryRecord().summary()
        assert summary["samples"] == 0
        assert "final" not in summary


class TestDiagnostics:
    """Test cases for per-sample diagnostics and the time maps."""

    def test_columns(self) -> None:
        """Test that one sample holds every trajectory column."""
        f = gaussian_datum(make_grid(64, 8.0), 1.0, 1.0)
        row = diagnostics(make_state(f, kernel="spectral"))
        assert set(row) == set(TRAJECTORY_COLUMNS)
        assert row["m2"] == pytest.approx(2.0, rel=1e-8)
        assert row["I"] == pytest.approx(2.0, rel=1e-5)
        assert row["t14l43"] == 0.0

    def test_zero_density(self) -> None:
        """Test the sample of an empty density."""
        row = diagnostics(make_state(Field2D.zeros(make_grid(16, 1.0)), t=0.5))
        assert row["t"] == 0.5
        assert row["mass"] == 0.0

    def test_time_maps_inverse(self) -> None:
        """Test s = log(1 + 2t) / 2 and its inverse."""
        assert rescaled_time(physical_time(0.7)) == pytest.approx(0.7)
        assert physical_time(0.5) == pytest.approx((math.e - 1.0) / 2.0)

    def test_physical_to_rescaled_exact(self) -> None:
        """Test that the heat Gaussian maps onto the unit Gaussian."""
        t = 0.5
        R = math.sqrt(1.0 + 2.0 * t)
        physical = gaussian_datum(make_grid(64, 8.0 * R), 3.0, R)
        target = make_grid(64, 8.0)
        g = physical_to_rescaled(physical, t, target)
        expected = gaussian_datum(target, 3.0, 1.0)
        np.testing.assert_allclose(g.values, expected.values, atol=1e-13)
        assert integrate(g) == pytest.approx(3.0)

    def test_physical_to_rescaled_interpolated(self) -> None:
        """Test the interpolating path on unmatched grids."""
        t = 0.5
        R = math.sqrt(1.0 + 2.0 * t)
        physical = gaussian_datum(make_grid(128, 12.0), 3.0, R)
        target = make_grid(64, 8.0)
        g = physical_to_rescaled(physical, t, target)
        expected = gaussian_datum(target, 3.0, 1.0)
        np.testing.assert_allclose(g.values, expected.values, atol=1e-4)
