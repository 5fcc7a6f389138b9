"""Test cases for the profile module."""

import math
import pickle

import numpy as np
import pytest

from kslab.dynamics import make_state
from kslab.dynamics import step_rescaled
from kslab.fields import RadialGrid
from kslab.fields import integrate
from kslab.fields import make_grid
from kslab.fields import radial_to_2d
from kslab.functionals import rescaled_second_moment_limit
from kslab.profile import ProfileConvergenceError
from kslab.profile import center_values_increasing
from kslab.profile import d_profile_dM
from kslab.profile import envelope_check
from kslab.profile import profile_gradient
from kslab.profile import profile_ladder
from kslab.profile import radial_rescaled_dissipation
from kslab.profile import radial_rescaled_energy
from kslab.profile import solve_profile
from kslab.profile import stationary_residual


FOUR_PI = 4.0 * math.pi


@pytest.fixture(scope="module")
def rgrid() -> RadialGrid:
    """Coarse radial grid wide enough for masses up to 4 pi."""
    return RadialGrid(r_max=16.0, size=512)


@pytest.fixture(scope="module")
def profile_4pi(rgrid):
    """Converged profile at M = 4 pi."""
    return solve_profile(FOUR_PI, rgrid)


class TestSolveProfile:
    """Test cases for the damped Picard solver."""

    def test_converged(self, profile_4pi) -> None:
        """Test the stopping criterion and the positivity of G."""
        assert profile_4pi.converged
        assert profile_4pi.residual_l1 < 1e-10
        assert profile_4pi.picard_iters == len(profile_4pi.residual_history)
        assert np.all(profile_4pi.G.values > 0)

    def test_mass_exact(self, profile_4pi) -> None:
        """Test that normalization keeps the mass."""
        assert integrate(profile_4pi.G) == pytest.approx(FOUR_PI, rel=1e-10)

    def test_second_moment(self, profile_4pi) -> None:
        """Test M2(G) = 2M (1 - M / 8 pi) = 4 pi at M = 4 pi."""
        assert profile_4pi.m2 == pytest.approx(FOUR_PI, rel=1e-3)
        assert profile_4pi.m2 == pytest.approx(
            rescaled_second_moment_limit(FOUR_PI), rel=1e-3
        )

    def test_stationary(self, profile_4pi) -> None:
        """Test the stationary PDE residual and the vanishing dissipation."""
        assert profile_4pi.stationary_residual < 1e-2
        assert radial_rescaled_dissipation(profile_4pi.G) < 1e-8

    def test_stationary_residual_refines(self) -> None:
        """Test that halving dr shrinks the PDE residual at second order."""
        coarse = solve_profile(FOUR_PI, RadialGrid(16.0, 256), tol=1e-12)
        fine = solve_profile(FOUR_PI, RadialGrid(16.0, 512), tol=1e-12)
        assert coarse.stationary_residual / fine.stationary_residual > 2.0

    def test_energy_minimizer(self, profile_4pi) -> None:
        """Test that mass-preserving perturbations raise E."""
        G = profile_4pi.G
        r = G.rgrid.nodes
        base = radial_rescaled_energy(G)
        rng = np.random.default_rng(7)
        for _ in range(20):
            k, phase = rng.uniform(0.5, 3.0), rng.uniform(0, 2 * math.pi)
            shape = np.cos(k * r + phase)
            shape -= np.dot(G.rgrid.weights, G.values * shape) / FOUR_PI
            perturbed = G.with_values(G.values * (1.0 + 0.05 * shape))
            assert integrate(perturbed) == pytest.approx(FOUR_PI, rel=1e-12)
            assert radial_rescaled_energy(perturbed) > base

    def test_small_mass_gaussian(self) -> None:
        """Test the Gaussian limit at M = 1e-3."""
        mass = 1e-3
        result = solve_profile(mass)
        r = result.rgrid.nodes
        gauss = mass * np.exp(-0.5 * r**2) / (2 * math.pi)
        error = np.dot(result.rgrid.weights, np.abs(result.G.values - gauss))
        assert error / mass <= 1e-3

    def test_gradient(self, profile_4pi) -> None:
        """Test G' from the implicit equation against finite differences."""
        r = profile_4pi.rgrid.nodes
        numeric = np.gradient(profile_4pi.G.values, r, edge_order=2)
        slope = profile_gradient(profile_4pi).values
        np.testing.assert_allclose(slope, numeric, atol=1e-2)
        assert np.all(slope < 0)

    def test_summary(self, profile_4pi) -> None:
        """Test the JSON view of a result."""
        summary = profile_4pi.summary()
        assert summary["mass"] == FOUR_PI
        assert summary["nodes"] == 512
        assert summary["r_max"] == 16.0
        assert summary["center_value"] == profile_4pi.G.values[0]
        assert {"Z", "picard_iters", "residual_l1", "m2"} <= set(summary)

    def test_stationary_residual_function(self, profile_4pi) -> None:
        """Test that the stored residual matches the helper."""
        assert stationary_residual(profile_4pi.G) == pytest.approx(
            profile_4pi.stationary_residual
        )

    def test_no_convergence(self, rgrid) -> None:
        """Test that the iteration cap raises with the history."""
        with pytest.raises(ProfileConvergenceError, match="no convergence") as info:
            solve_profile(FOUR_PI, rgrid, max_iters=2)
        assert len(info.value.residual_history) == 2
        restored = pickle.loads(pickle.dumps(info.value))
        assert restored.residual_history == info.value.residual_history

    @pytest.mark.parametrize(
        "kwargs,message",
        [
            ({"mass": 8 * math.pi}, "profile mass must lie"),
            ({"mass": 0.0}, "profile mass must lie"),
            ({"mass": 1.0, "omega": 0.0}, "omega must lie"),
            ({"mass": 1.0, "tol": 0.0}, "tol must be positive"),
            ({"mass": 1.0, "max_iters": 0}, "max_iters must be at least 1"),
        ],
    )
    def test_validation(self, kwargs, message: str) -> None:
        """Test argument validation."""
        with pytest.raises(ValueError, match=message):
            solve_profile(**kwargs)


class TestEnvelope:
    """Test cases for the Gaussian envelope check."""

    def test_envelope_4pi(self, profile_4pi) -> None:
        """Test finite fitted constants at M = 4 pi."""
        report = envelope_check(profile_4pi, 0.2)
        assert report.passed
        assert math.isfinite(report.c_lower) and math.isfinite(report.c_upper)
        assert report.c_lower <= report.c_upper
        assert report.to_dict()["eps"] == 0.2

    def test_envelope_small_mass(self) -> None:
        """Test C2 close to log(M / 2 pi) in the Gaussian limit."""
        mass = 1e-3
        report = envelope_check(solve_profile(mass), 0.1)
        assert report.passed
        expected = math.log(mass / (2 * math.pi))
        assert report.c_upper == pytest.approx(expected, abs=1e-2)

    @pytest.mark.parametrize("eps", [0.0, 1.0, -0.5])
    def test_eps_range(self, profile_4pi, eps: float) -> None:
        """Test that eps outside (0, 1) is rejected."""
        with pytest.raises(ValueError, match="eps must lie"):
            envelope_check(profile_4pi, eps)


class TestMassDerivative:
    """Test cases for dG/dM."""

    def test_unit_mass(self, rgrid) -> None:
        """Test that h00 carries unit mass."""
        h00 = d_profile_dM(FOUR_PI, 1e-2, rgrid)
        assert integrate(h00) == pytest.approx(1.0, abs=1e-6)

    def test_small_mass_limit(self) -> None:
        """Test h00 close to the unit Gaussian near M = 0."""
        h00 = d_profile_dM(1e-3, 1e-4)
        r = h00.rgrid.nodes
        gauss = np.exp(-0.5 * r**2) / (2 * math.pi)
        np.testing.assert_allclose(h00.values, gauss, atol=1e-4)

    def test_second_order(self, rgrid) -> None:
        """Test Richardson scaling of the central difference."""
        mass = math.pi
        wide = d_profile_dM(mass, 0.2, rgrid)
        mid = d_profile_dM(mass, 0.1, rgrid)
        narrow = d_profile_dM(mass, 0.05, rgrid)
        ratio = np.max(np.abs(wide.values - mid.values)) / np.max(
            np.abs(mid.values - narrow.values)
        )
        assert 3.0 < ratio < 5.0

    def test_validation(self) -> None:
        """Test the step and range checks."""
        with pytest.raises(ValueError, match="dM must be positive"):
            d_profile_dM(1.0, 0.0)
        with pytest.raises(ValueError, match="must lie in"):
            d_profile_dM(1.0, 2.0)


class TestLadder:
    """Test cases for profile ladders."""

    def test_center_increases(self, rgrid) -> None:
        """Test G_M(0) grows with M."""
        results = profile_ladder([math.pi, 2 * math.pi, FOUR_PI], rgrid, tol=1e-9)
        assert [res.mass for res in results] == [math.pi, 2 * math.pi, FOUR_PI]
        assert center_values_increasing(results)

    @pytest.mark.slow
    def test_parallel_matches_serial(self, rgrid) -> None:
        """Test the process pool against the serial ladder."""
        masses = [math.pi, 2 * math.pi]
        serial = profile_ladder(masses, rgrid, tol=1e-9)
        parallel = profile_ladder(masses, rgrid, jobs=2, tol=1e-9)
        for a, b in zip(serial, parallel):
            np.testing.assert_allclose(a.G.values, b.G.values, rtol=1e-12)


class TestDynamicsConsistency:
    """Test cases tying the profile to the rescaled evolution."""

    def test_profile_nearly_stationary(self, profile_4pi) -> None:
        """Test that the sampled profile barely moves under step_rescaled."""
        grid = make_grid(64, 10.0)
        f = radial_to_2d(profile_4pi.G, grid, outside=0.0)
        state = make_state(f, regime="rescaled", kernel="spectral")
        for _ in range(20):
            state = step_rescaled(state, 0.005)
        change = np.max(np.abs(state.f.values - f.values))
        assert change / np.max(f.values) < 1e-2
