"""Self-similar profile of the rescaled system below the critical mass.

The profile solves the implicit equation::

    G = M exp(-kappa*G - r^2/2) / int exp(-kappa*G - r^2/2)

by damped Picard iteration on a radial grid, with the radial convolution
of :func:`kslab.potential.radial_log_potential`.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np

from .fields import FloatArray
from .fields import RadialField
from .fields import RadialGrid
from .fields import integrate
from .fields import make_radial_grid
from .fields import moment
from .functionals import entropy
from .potential import CRITICAL_MASS
from .potential import radial_attraction
from .potential import radial_log_potential


log = logging.getLogger(__name__)

DEFAULT_OMEGA = 0.5
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITERS = 100_000
LOG_EVERY = 100


class ProfileConvergenceError(RuntimeError):
    """Picard iteration did not reach the tolerance; carries the residual history."""

    def __init__(self, message: str, residual_history: Sequence[float]) -> None:
        """Keep the history for inspection."""
        self.residual_history = list(residual_history)
        super().__init__(message)

    def __reduce__(self) -> Tuple[Any, ...]:
        return (self.__class__, (str(self), self.residual_history))


@dataclass(frozen=True, eq=False)
class ProfileResult:
    """Converged profile ``G``, its potential ``U = -kappa*G`` and diagnostics."""

    mass: float
    G: RadialField
    U: RadialField
    Z: float
    picard_iters: int
    residual_l1: float
    stationary_residual: float
    m2: float
    residual_history: Tuple[float, ...]
    omega: float
    tol: float
    potential_far_field: float

    @property
    def rgrid(self) -> RadialGrid:
        return self.G.rgrid

    @property
    def converged(self) -> bool:
        return self.residual_l1 <= self.tol

    def summary(self) -> Dict[str, Any]:
        """Every scalar of the result, JSON-ready."""
        return {
            "mass": self.mass,
            "Z": self.Z,
            "picard_iters": self.picard_iters,
            "residual_l1": self.residual_l1,
            "stationary_residual": self.stationary_residual,
            "m2": self.m2,
            "center_value": float(self.G.values[0]),
            "omega": self.omega,
            "tol": self.tol,
            "potential_far_field": self.potential_far_field,
            "r_max": self.rgrid.r_max,
            "nodes": self.rgrid.size,
        }


def _picard_map(G: RadialField, mass: float) -> RadialField:
    r = G.rgrid.nodes
    exponent = -radial_log_potential(G).values - 0.5 * r**2
    shift = float(exponent.max())
    weights = np.exp(exponent - shift)
    total = float(np.dot(G.rgrid.weights, weights))
    return G.with_values(mass * weights / total)


def _l1(values: FloatArray, rgrid: RadialGrid) -> float:
    return float(np.dot(rgrid.weights, np.abs(values)))


def stationary_residual(G: RadialField) -> float:
    """L1 norm of ``div(grad G + x G + G K*G)`` for a radial ``G``.

    The radial flux ``J = G' + r G + G m(r) / (2 pi r)`` is differentiated with
    second-order differences and the divergence ``(r J)' / r`` measured in L1.
    """
    r = G.rgrid.nodes
    slope = np.gradient(G.values, r, edge_order=2)
    flux = slope + r * G.values + G.values * radial_attraction(G).values
    divergence = np.gradient(r * flux, r, edge_order=2) / r
    return _l1(divergence, G.rgrid)


def solve_profile(
    mass: float,
    rgrid: Optional[RadialGrid] = None,
    omega: float = DEFAULT_OMEGA,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> ProfileResult:
    """Compute the self-similar profile of mass ``M`` by damped Picard iteration.

    Starts from the mass-``M`` Gaussian and iterates
    ``G <- (1 - omega) G + omega T(G)`` until the undamped residual
    ``||T(G) - G||_1`` drops below ``tol``.

    Args:
        mass: Total mass, in ``(0, 8 pi)``
        rgrid: Radial grid; defaults to ``r_max = 8 + 2 sqrt(M)`` with 2048 nodes
        omega: Damping in ``(0, 1]``
        tol: L1 stopping tolerance
        max_iters: Iteration cap

    Returns:
        The converged profile

    Raises:
        ValueError: If the mass or the iteration parameters are out of range
        ProfileConvergenceError: If ``max_iters`` is reached first
    """
    if not 0 < mass < CRITICAL_MASS:
        raise ValueError(f"profile mass must lie in (0, 8 pi), got {mass}")
    if not 0 < omega <= 1:
        raise ValueError(f"omega must lie in (0, 1], got {omega}")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if max_iters < 1:
        raise ValueError(f"max_iters must be at least 1, got {max_iters}")
    rgrid = rgrid or make_radial_grid(mass)
    r = rgrid.nodes
    gauss = np.exp(-0.5 * r**2)
    G = RadialField(rgrid, mass * gauss / np.dot(rgrid.weights, gauss), f"G_{mass:.6g}")

    history: List[float] = []
    for iteration in range(1, max_iters + 1):
        T = _picard_map(G, mass)
        residual = _l1(T.values - G.values, rgrid)
        history.append(residual)
        if iteration % LOG_EVERY == 0:
            log.debug(f"Picard {iteration}: residual {residual:.3e}")
        if residual < tol:
            break
        if not math.isfinite(residual):
            raise ProfileConvergenceError(
                f"Picard iteration diverged at step {iteration}", history
            )
        G = G.with_values((1.0 - omega) * G.values + omega * T.values)
    else:
        raise ProfileConvergenceError(
            f"no convergence for M={mass:.6g} in {max_iters} iterations "
            f"(last residual {history[-1]:.3e})",
            history,
        )

    U = -radial_log_potential(G)
    Z = float(np.dot(rgrid.weights, np.exp(U.values - 0.5 * r**2)))
    far_field = float(
        np.max(np.abs(U.values + mass / (2.0 * math.pi) * np.log(np.maximum(r, 1.0))))
    )
    result = ProfileResult(
        mass=mass,
        G=G,
        U=U.with_values(U.values, f"U_{mass:.6g}"),
        Z=Z,
        picard_iters=len(history),
        residual_l1=history[-1],
        stationary_residual=stationary_residual(G),
        m2=moment(G, 2),
        residual_history=tuple(history),
        omega=omega,
        tol=tol,
        potential_far_field=far_field,
    )
    log.info(
        f"Profile M={mass:.6g}: {result.picard_iters} iterations, "
        f"residual {result.residual_l1:.2e}, M2={result.m2:.8g}"
    )
    return result


def profile_gradient(result: ProfileResult) -> RadialField:
    """``G'(r) = -(r + m(r) / (2 pi r)) G`` from the implicit equation."""
    G = result.G
    slope = -(G.rgrid.nodes + radial_attraction(G).values) * G.values
    return G.with_values(slope, f"dG/dr_{result.mass:.6g}")


def radial_rescaled_energy(G: RadialField) -> float:
    """``E(G) = int G (1 + log G) + M2 / 2 + (1/2) int G kappa*G`` on a radial field."""
    interaction = 0.5 * float(
        np.dot(G.rgrid.weights, G.values * radial_log_potential(G).values)
    )
    return entropy(G) + integrate(G) + 0.5 * moment(G, 2) + interaction


def radial_rescaled_dissipation(G: RadialField) -> float:
    """``D_E(G) = int G |d/dr (log G + r^2/2 + kappa*G)|^2`` for positive ``G``."""
    if np.any(G.values <= 0):
        raise ValueError("radial dissipation needs a strictly positive field")
    r = G.rgrid.nodes
    psi = np.log(G.values) + 0.5 * r**2 + radial_log_potential(G).values
    slope = np.gradient(psi, r, edge_order=2)
    return float(np.dot(G.rgrid.weights, G.values * slope**2))


@dataclass(frozen=True)
class EnvelopeReport:
    """Fitted constants of the two-sided Gaussian envelope of ``G``.

    ``exp(-(1+eps) r^2/2 + C1) <= G <= exp(-(1-eps) r^2/2 + C2)``.
    """

    eps: float
    c_lower: float
    c_upper: float
    r_lower: float
    r_upper: float
    passed: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "eps": self.eps,
            "c_lower": self.c_lower,
            "c_upper": self.c_upper,
            "r_lower": self.r_lower,
            "r_upper": self.r_upper,
            "passed": self.passed,
        }


def envelope_check(result: ProfileResult, eps: float) -> EnvelopeReport:
    """Fit the Gaussian envelope constants of a profile.

    ``C1`` is the minimum of ``log G + (1 + eps) r^2 / 2`` and ``C2`` the maximum of
    ``log G + (1 - eps) r^2 / 2``. The check passes when both are finite and neither
    extremum sits on the outer node, where it would reflect truncation.

    Raises:
        ValueError: If ``eps`` is outside ``(0, 1)``
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    r = result.rgrid.nodes
    log_g = np.log(np.maximum(result.G.values, 1e-300))
    lower = log_g + 0.5 * (1.0 + eps) * r**2
    upper = log_g + 0.5 * (1.0 - eps) * r**2
    i_low, i_up = int(np.argmin(lower)), int(np.argmax(upper))
    c_lower, c_upper = float(lower[i_low]), float(upper[i_up])
    last = r.size - 1
    passed = (
        math.isfinite(c_lower)
        and math.isfinite(c_upper)
        and i_low != last
        and i_up != last
    )
    return EnvelopeReport(
        eps, c_lower, c_upper, float(r[i_low]), float(r[i_up]), passed
    )


def d_profile_dM(
    mass: float,
    dM: float,
    rgrid: Optional[RadialGrid] = None,
    tol: float = 1e-12,
    omega: float = DEFAULT_OMEGA,
) -> RadialField:
    """Central difference ``(G_{M+dM} - G_{M-dM}) / (2 dM)`` on one radial grid."""
    if dM <= 0:
        raise ValueError(f"dM must be positive, got {dM}")
    if not 0 < mass - dM or not mass + dM < CRITICAL_MASS:
        raise ValueError(
            f"[M - dM, M + dM] must lie in (0, 8 pi), got M={mass}, dM={dM}"
        )
    rgrid = rgrid or make_radial_grid(mass)
    upper = solve_profile(mass + dM, rgrid, omega=omega, tol=tol)
    lower = solve_profile(mass - dM, rgrid, omega=omega, tol=tol)
    values = (upper.G.values - lower.G.values) / (2.0 * dM)
    return RadialField(rgrid, values, f"dG/dM_{mass:.6g}")


def _solve_one(
    args: Tuple[float, Optional[RadialGrid], Dict[str, Any]]
) -> ProfileResult:
    mass, rgrid, options = args
    return solve_profile(mass, rgrid, **options)


def profile_ladder(
    masses: Sequence[float],
    rgrid: Optional[RadialGrid] = None,
    jobs: int = 1,
    **options: Any,
) -> List[ProfileResult]:
    """Solve profiles for several masses, in parallel processes when ``jobs > 1``.

    Results come back in the order of ``masses``; a warning is logged when the
    center value does not increase with the mass.
    """
    tasks = [(float(m), rgrid, options) for m in masses]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_solve_one, tasks))
    else:
        results = [_solve_one(task) for task in tasks]
    if not center_values_increasing(results):
        log.warning("Profile center value is not increasing along the mass ladder")
    return results


def center_values_increasing(results: Sequence[ProfileResult]) -> bool:
    """Whether ``G_M(0)`` grows with ``M`` along a set of profiles."""
    ordered = sorted(results, key=lambda res: res.mass)
    centers = [float(res.G.evaluate(0.0)) for res in ordered]
    return all(b > a for a, b in zip(centers, centers[1:]))
