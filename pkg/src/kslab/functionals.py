"""Entropies, free energies, dissipations and the functional-inequality validators.

All functionals are quadratures on the grid of their argument. ``log f`` uses the
floor ``max(f, 1e-300)``; the dissipation and Fisher integrands are masked where
``f < 1e-14 ||f||_inf``.
"""

import logging
import math
from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import field
from typing import Any
from typing import Dict
from typing import List
from typing import Optional

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid

from .fields import Density
from .fields import Field2D
from .fields import FloatArray
from .fields import integrate
from .fields import linf_norm
from .fields import lp_norm
from .fields import moment
from .fields import quadrature
from .fields import spectral_gradient
from .potential import CRITICAL_MASS
from .potential import PotentialPair


log = logging.getLogger(__name__)

LOG_FLOOR = 1e-300
VACUUM_FRACTION = 1e-14
REPORT_TOLERANCE = 1e-8


def _log(values: FloatArray) -> FloatArray:
    return np.asarray(np.log(np.maximum(values, LOG_FLOOR)), dtype=np.float64)


def _occupied(f: Density) -> FloatArray:
    """Boolean mask of cells outside vacuum."""
    threshold = VACUUM_FRACTION * linf_norm(f)
    return np.asarray(f.values > threshold)


def _masked_ratio(numerator: FloatArray, f: Density) -> FloatArray:
    mask = _occupied(f)
    safe = np.where(mask, f.values, 1.0)
    return np.where(mask, numerator / safe, 0.0)


def entropy(f: Density) -> float:
    """Boltzmann entropy ``H = int f log f``."""
    values = np.maximum(f.values, 0.0)
    return quadrature(f, values * _log(values))


def positive_entropy(f: Density) -> float:
    """``H+ = int f (log f)_+``."""
    values = np.maximum(f.values, 0.0)
    return quadrature(f, values * np.maximum(_log(values), 0.0))


def h2_functional(f: Density) -> float:
    """``H2 = int f (log~ f)^2`` with ``log~ u`` = 1 up to ``e``, ``log u`` above."""
    values = np.maximum(f.values, 0.0)
    tilde = np.where(values <= math.e, 1.0, _log(values))
    return quadrature(f, values * tilde**2)


def fisher_information(f: Field2D) -> float:
    """Fisher information ``I = int |grad f|^2 / f`` with spectral gradients."""
    g1, g2 = spectral_gradient(f)
    return quadrature(f, _masked_ratio(g1**2 + g2**2, f))


def gradient_l1(f: Field2D) -> float:
    g1, g2 = spectral_gradient(f)
    return quadrature(f, np.hypot(g1, g2))


def gradient_l2(f: Field2D) -> float:
    g1, g2 = spectral_gradient(f)
    return math.sqrt(quadrature(f, g1**2 + g2**2))


def _check_pair(f: Field2D, pot: PotentialPair) -> None:
    if pot.grid != f.grid:
        raise ValueError("potential was computed on a different grid than the field")
    mass = integrate(f)
    if abs(pot.source_mass - mass) > 1e-9 * max(1.0, abs(mass)):
        raise ValueError(
            f"potential source mass {pot.source_mass:.12g} does not match field mass "
            f"{mass:.12g}"
        )


def interaction_energy(f: Field2D, pot: PotentialPair) -> float:
    """``(1/2) int f (kappa * f)``."""
    _check_pair(f, pot)
    return 0.5 * quadrature(f, f.values * pot.potential.values)


def free_energy(f: Field2D, pot: PotentialPair) -> float:
    """Free energy ``F = H + (1/2) int f (kappa * f)``."""
    return entropy(f) + interaction_energy(f, pot)


def _flux_dissipation(f: Field2D, drift_x: Any, drift_y: Any) -> float:
    g1, g2 = spectral_gradient(f)
    j1 = g1 + f.values * drift_x
    j2 = g2 + f.values * drift_y
    return quadrature(f, _masked_ratio(j1**2 + j2**2, f))


def free_energy_dissipation(f: Field2D, pot: PotentialPair) -> float:
    """``D_F = int f |grad log f + K * f|^2``, as ``|grad f + f K*f|^2 / f``."""
    _check_pair(f, pot)
    return _flux_dissipation(f, pot.velocity_x.values, pot.velocity_y.values)


def rescaled_energy(g: Field2D, pot: PotentialPair) -> float:
    """``E = int g (1 + log g) + M2 / 2 + (1/2) int g (kappa * g)``."""
    return (
        entropy(g)
        + integrate(g)
        + 0.5 * moment(g, 2)
        + interaction_energy(g, pot)
    )


def rescaled_dissipation(g: Field2D, pot: PotentialPair) -> float:
    """``D_E = int g |grad(log g + |x|^2 / 2 + kappa * g)|^2``."""
    _check_pair(g, pot)
    x1, x2 = g.grid.mesh
    return _flux_dissipation(
        g, pot.velocity_x.values + x1, pot.velocity_y.values + x2
    )


def c1_constant(mass: float) -> float:
    """Second-moment growth rate ``4M (1 - M / 8 pi)``."""
    return 4.0 * mass * (1.0 - mass / CRITICAL_MASS)


def c2_constant(mass: float) -> float:
    return mass * (1.0 + math.log(math.pi) - math.log(mass))


def c3_constant(mass: float) -> float:
    if mass >= CRITICAL_MASS:
        raise ValueError(f"C3 is defined below 8 pi only, got mass {mass}")
    return 1.0 / (1.0 - mass / CRITICAL_MASS)


def c4_constant(mass: float) -> float:
    return c3_constant(mass) * c2_constant(mass) * mass / CRITICAL_MASS


def c5_constant(mass: float) -> float:
    return 2.0 * mass * math.log(2.0 * math.pi) + 2.0 / math.e


def c7_constant(mass: float) -> float:
    return c4_constant(mass) + c5_constant(mass)


def second_moment_vanish_time(mass: float, m2_0: float) -> float:
    """Time at which the linear second-moment law reaches zero, for ``M > 8 pi``.

    Equals ``2 pi M2_0 / [M (M - 8 pi)]``, i.e. ``M2_0 / |C1(M)|``.
    """
    if mass <= CRITICAL_MASS:
        raise ValueError(f"the second moment only vanishes above 8 pi, got {mass}")
    return 2.0 * math.pi * m2_0 / (mass * (mass - CRITICAL_MASS))


def rescaled_second_moment_limit(mass: float) -> float:
    """Equilibrium ``2M (1 - M / 8 pi)`` of ``dM2/dt = 4M - M^2 / 2 pi - 2 M2``."""
    return 2.0 * mass * (1.0 - mass / CRITICAL_MASS)


@dataclass
class InequalityReport:
    """Outcome of one functional inequality on one density.

    ``kind`` is ``"bound"`` (slack is the signed margin, positive when the inequality
    holds), ``"ratio"`` (slack is the measured ratio of an unspecified-constant bound)
    or ``"skipped"``.
    """

    name: str
    lhs: float
    rhs: float
    slack: float
    kind: str
    passed: bool
    witness: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        """JSON-ready view; NaN becomes ``None``."""
        out = asdict(self)
        for key in ("lhs", "rhs", "slack"):
            value = out[key]
            out[key] = None if value is None or not math.isfinite(value) else value
        return out


def _bound(
    name: str,
    lhs: float,
    rhs: float,
    witness: Dict[str, Any],
    lower: bool = False,
) -> InequalityReport:
    slack = lhs - rhs if lower else rhs - lhs
    tol = REPORT_TOLERANCE * max(1.0, abs(lhs), abs(rhs))
    passed = bool(math.isfinite(slack) and slack >= -tol)
    return InequalityReport(name, lhs, rhs, slack, "bound", passed, dict(witness))


def _ratio(
    name: str, numerator: float, denominator: float, witness: Dict[str, Any]
) -> InequalityReport:
    value = numerator / denominator if denominator > 0 else math.nan
    passed = bool(math.isfinite(value) and value > 0)
    return InequalityReport(
        name, numerator, denominator, value, "ratio", passed, dict(witness)
    )


def _skipped(name: str, reason: str, witness: Dict[str, Any]) -> InequalityReport:
    meta = dict(witness)
    meta["reason"] = reason
    return InequalityReport(name, math.nan, math.nan, math.nan, "skipped", True, meta)


def check_inequalities(
    f: Field2D, pot: PotentialPair, label: Optional[str] = None
) -> List[InequalityReport]:
    """Evaluate the entropy chain and the Gagliardo-Nirenberg type ratios on ``f``.

    Bounds: log-HLS, ``H <= C3 F + C4``, ``H+ <= H + M2/4 + C5``,
    ``F <= H + M M2 / pi``, ``H + M2/2 <= C3 E + C4``, ``H+ + M2/4 <= C3 E + C7``,
    ``int |grad f + f K*f| <= sqrt(M D_F)`` and ``||grad f||_1 <= sqrt(M I)``.
    Ratios: ``||K*f||_4 / ||f||_4/3``, ``||f||_2 / sqrt(M I)``,
    ``||f||_3 / (M^1/3 ||grad f||_2^2/3)`` and the Nash quotient.

    Args:
        f: Nonnegative density
        pot: Potential pair computed from ``f``
        label: Provenance recorded in every witness

    Returns:
        One report per inequality; the ``C3`` chain is skipped at or above 8 pi
    """
    _check_pair(f, pot)
    mass = integrate(f)
    if mass <= 0:
        raise ValueError(f"inequalities need a positive mass, got {mass}")
    witness = {
        "label": label or f.label,
        "mass": mass,
        "n": f.grid.n,
        "L": f.grid.half_width,
        "kernel": pot.kernel,
        "log_floor": LOG_FLOOR,
        "vacuum_fraction": VACUUM_FRACTION,
    }
    H = entropy(f)
    Hplus = positive_entropy(f)
    m2 = moment(f, 2)
    inter = interaction_energy(f, pot)
    F = H + inter
    E = H + mass + 0.5 * m2 + inter
    DF = free_energy_dissipation(f, pot)
    fisher = fisher_information(f)
    grad_l1 = gradient_l1(f)
    grad_l2 = gradient_l2(f)
    g1, g2 = spectral_gradient(f)
    flux_l1 = quadrature(
        f,
        np.hypot(
            g1 + f.values * pot.velocity_x.values,
            g2 + f.values * pot.velocity_y.values,
        ),
    )

    # int int f f log|x - y| = 2 pi int f (kappa * f) = 4 pi * interaction
    log_hls = H + (2.0 / mass) * 4.0 * math.pi * inter
    reports = [
        _bound("log-HLS", log_hls, -c2_constant(mass), witness, lower=True),
    ]
    subcritical = mass < CRITICAL_MASS
    if subcritical:
        c3, c4 = c3_constant(mass), c4_constant(mass)
        reports.append(_bound("entropy-by-free-energy", H, c3 * F + c4, witness))
    else:
        reports.append(
            _skipped("entropy-by-free-energy", "mass at or above 8 pi", witness)
        )
    reports.append(
        _bound(
            "positive-entropy", Hplus, H + 0.25 * m2 + c5_constant(mass), witness
        )
    )
    reports.append(
        _bound("free-energy-by-entropy", F, H + mass * m2 / math.pi, witness)
    )
    speed = f.with_values(pot.speed)
    reports.append(
        _ratio("hls-critical", lp_norm(speed, 4.0), lp_norm(f, 4.0 / 3.0), witness)
    )
    reports.append(
        _ratio("lp-by-fisher", lp_norm(f, 2.0), math.sqrt(mass * fisher), witness)
    )
    reports.append(
        _ratio(
            "gagliardo-nirenberg",
            lp_norm(f, 3.0),
            mass ** (1.0 / 3.0) * grad_l2 ** (2.0 / 3.0),
            witness,
        )
    )
    reports.append(
        _ratio("nash", lp_norm(f, 2.0) ** 2, mass * grad_l2, witness)
    )
    if subcritical:
        reports.append(
            _bound("entropy-moment-by-energy", H + 0.5 * m2, c3 * E + c4, witness)
        )
        reports.append(
            _bound(
                "positive-entropy-by-energy",
                Hplus + 0.25 * m2,
                c3 * E + c7_constant(mass),
                witness,
            )
        )
    else:
        for name in ("entropy-moment-by-energy", "positive-entropy-by-energy"):
            reports.append(_skipped(name, "mass at or above 8 pi", witness))
    reports.append(
        _bound("flux-by-dissipation", flux_l1, math.sqrt(mass * DF), witness)
    )
    reports.append(
        _bound("gradient-by-fisher", grad_l1, math.sqrt(mass * fisher), witness)
    )
    failed = [r.name for r in reports if not r.passed]
    if failed:
        log.warning(f"Inequalities failed on '{witness['label']}': {failed}")
    return reports


def check_a_priori_estimate(frame: pd.DataFrame, mass: float) -> InequalityReport:
    """Verify the a priori bound along a recorded trajectory.

    At every sample ``H+(t) + M2(t) + C3 int_0^t D_F`` must stay below
    ``C3 F0 + (5/4) M2_0 + 2 C1 t + C4 + C5``; the report carries the worst sample.

    Args:
        frame: Trajectory table with columns ``t, Hplus, m2, F, DF``
        mass: Total mass, below 8 pi

    Returns:
        The report at the sample of smallest slack
    """
    missing = {"t", "Hplus", "m2", "F", "DF"} - set(frame.columns)
    if missing:
        raise ValueError(f"trajectory is missing columns {sorted(missing)}")
    if len(frame) < 2:
        raise ValueError("a priori estimate needs at least two samples")
    witness: Dict[str, Any] = {"mass": mass, "samples": len(frame)}
    if mass >= CRITICAL_MASS:
        return _skipped("a-priori-estimate", "mass at or above 8 pi", witness)
    t = frame["t"].to_numpy(dtype=float)
    dissipated = cumulative_trapezoid(frame["DF"].to_numpy(dtype=float), t, initial=0.0)
    c3 = c3_constant(mass)
    lhs = frame["Hplus"].to_numpy() + frame["m2"].to_numpy() + c3 * dissipated
    rhs = (
        c3 * frame["F"].iloc[0]
        + 1.25 * frame["m2"].iloc[0]
        + 2.0 * c1_constant(mass) * (t - t[0])
        + c4_constant(mass)
        + c5_constant(mass)
    )
    worst = int(np.argmin(rhs - lhs))
    witness["worst_time"] = float(t[worst])
    return _bound("a-priori-estimate", float(lhs[worst]), float(rhs[worst]), witness)
