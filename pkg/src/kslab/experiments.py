"""Verification scenarios, configuration files and decay-rate fitting.

A scenario runs one or more simulations, compares the outcome with a closed-form
constant or a derived oracle, and writes CSV tables, a JSON summary and figures
into ``<out_dir>/<name>/``.
"""

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from dataclasses import field
from pathlib import Path
from typing import Any
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple
from typing import Union

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from .dynamics import BlowupOrInstability
from .dynamics import ConfigError
from .dynamics import SimConfig
from .dynamics import SimState
from .dynamics import TrajectoryRecord
from .dynamics import physical_time
from .dynamics import physical_to_rescaled
from .dynamics import run
from .dynamics import save_summary
from .dynamics import short_time_l43
from .fields import GAUSSIAN_MARGIN
from .fields import Field2D
from .fields import FloatArray
from .fields import Grid2D
from .fields import gaussian_mixture
from .fields import integrate
from .fields import lp_norm
from .fields import make_grid
from .fields import make_radial_grid
from .fields import moment
from .fields import radial_to_2d
from .functionals import c1_constant
from .functionals import check_a_priori_estimate
from .functionals import check_inequalities
from .functionals import rescaled_second_moment_limit
from .functionals import second_moment_vanish_time
from .potential import CRITICAL_MASS
from .potential import log_kernel_convolve
from .profile import ProfileResult
from .profile import radial_rescaled_dissipation
from .profile import solve_profile
from .visualization import KSVisualizer


__all__ = [
    "ConfigError",
    "ConvergenceReport",
    "DecayFit",
    "SCENARIO_NAMES",
    "Scenario",
    "ScenarioCheck",
    "ScenarioOutcome",
    "ScenarioRunner",
    "fit_decay_rate",
    "load_scenario",
    "mass_tag",
    "parse_config",
    "random_mixture",
    "run_many",
    "run_scenario",
]

log = logging.getLogger(__name__)

SCENARIO_NAMES = (
    "subcritical-convergence",
    "supercritical-blowup",
    "moment-bound",
    "inequality-suite",
    "stationarity",
    "rescale-consistency",
    "short-time-l43",
    "semigroup-decay",
    "second-moment-law",
)
CLOSED_FORM = "closed-form"
ORACLE = "oracle"
MIN_FIT_SAMPLES = 5
WEIGHT_EXPONENT = 1.6
SCENARIO_KEYS = ("scenario", "out_dir", "seed", "jobs", "parameters")
SUBCRITICAL = (
    "subcritical-convergence",
    "moment-bound",
    "stationarity",
    "semigroup-decay",
)

FOUR_PI = 4.0 * math.pi

# (SimConfig defaults, scenario parameters) per scenario
_DEFAULTS: Dict[str, Tuple[Dict[str, Any], Dict[str, Any]]] = {
    "subcritical-convergence": (
        {
            "regime": "rescaled",
            "mass": FOUR_PI,
            "center": (0.5, 0.0),
            "n": 128,
            "half_width": 8.0,
            "kernel": "spectral",
            "dt": 2e-3,
            "t_end": 6.0,
            "record_every": 25,
        },
        {
            "window": [2.0, 6.0],
            "rate": -1.0,
            "rate_tolerance": 0.05,
            "nodes": 2048,
            "weight": WEIGHT_EXPONENT,
        },
    ),
    "supercritical-blowup": (
        {
            "regime": "physical",
            "mass": 10.0 * math.pi,
            "n": 256,
            "half_width": 2.0,
            "kernel": "hockney",
            "adaptive_dt": True,
            "dt": 1e-4,
            "record_every": 5,
            "neg_tol": 1e-4,
            "blowup_linf_factor": 12.0,
        },
        {
            "margin": 0.2,
            "slope_tolerance": 0.02,
            "fit_fraction": 0.3,
            "linf_growth": 10.0,
        },
    ),
    "moment-bound": (
        {
            "regime": "rescaled",
            "mass": FOUR_PI,
            "n": 128,
            "half_width": 8.0,
            "dt": 2e-3,
            "t_end": 5.0,
            "record_every": 25,
        },
        {
            "orders": [2, 3, 4],
            "slack": 0.01,
            "bump_fraction": 0.1,
            "bump_sigma": 0.5,
            "spread": 2.0,
        },
    ),
    "inequality-suite": (
        {"n": 128, "half_width": 12.0},
        {
            "mixtures": 100,
            "spread": 3.0,
            "sigma_range": [0.6, 1.5],
            "mass_fraction": [0.1, 0.95],
            "max_components": 3,
            "ratio_spread": 10.0,
        },
    ),
    "stationarity": (
        {
            "regime": "rescaled",
            "mass": FOUR_PI,
            "n": 128,
            "half_width": 8.0,
            "kernel": "spectral",
            "dt": 1e-3,
            "t_end": 0.1,
            "record_every": 10,
        },
        {"tolerance": 1e-6, "nodes": 2048, "moment_tolerance": 1e-3},
    ),
    "rescale-consistency": (
        {
            "regime": "rescaled",
            "mass": FOUR_PI,
            "sigma": 1.0,
            "n": 128,
            "half_width": 8.0,
            "kernel": "spectral",
            "dt": 1e-3,
            "t_end": 1.0,
            "record_every": 50,
        },
        {"times": [0.5, 1.0], "tolerance": 1e-4, "physical_dt": 1e-3},
    ),
    "short-time-l43": (
        {
            "regime": "physical",
            "mass": FOUR_PI,
            "sigma": 0.05,
            "n": 256,
            "half_width": 2.0,
            "kernel": "hockney",
            "dt": 2.5e-5,
            "t_end": 0.064,
            "record_every": 10,
        },
        {"times": [1e-3, 4e-3, 1.6e-2, 6.4e-2]},
    ),
    "semigroup-decay": (
        {
            "regime": "rescaled",
            "mass": FOUR_PI,
            "n": 128,
            "half_width": 8.0,
            "kernel": "spectral",
            "dt": 2e-3,
            "t_end": 4.0,
            "record_every": 25,
        },
        {"epsilon": 1e-4, "window": [1.0, 4.0], "rate_bound": -1.05, "nodes": 2048},
    ),
    "second-moment-law": (
        {
            "regime": "physical",
            "sigma": 1.0,
            "n": 256,
            "half_width": 12.0,
            "kernel": "hockney",
            "dt": 2e-4,
            "t_end": 0.5,
            "record_every": 25,
        },
        {
            "masses": [2.0 * math.pi, FOUR_PI, 6.0 * math.pi],
            "slope_tolerance": 0.01,
            "mass_drift": 1e-8,
            "monotone_tolerance": 1e-6,
            "identity_mass": FOUR_PI,
            "identity_tolerance": 0.02,
        },
    ),
}


def _finite(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


@dataclass(frozen=True)
class DecayFit:
    """Least-squares line through ``(t, log d)`` inside a window."""

    rate: float
    intercept: float
    residual: float
    window: Tuple[float, float]
    samples: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rate": self.rate,
            "intercept": self.intercept,
            "residual": self.residual,
            "window": list(self.window),
            "samples": self.samples,
        }


def fit_decay_rate(
    times: Sequence[float],
    distances: Sequence[float],
    window: Tuple[float, float] = (2.0, 6.0),
) -> DecayFit:
    """Fit ``log d(t) = intercept + rate * t`` over ``window``.

    Args:
        times: Sample times
        distances: Distances at those times
        window: Closed interval of times used by the fit

    Returns:
        Rate, intercept and root-mean-square residual of the log fit

    Raises:
        ValueError: If fewer than five samples fall in the window, or a distance
            inside it is not positive
    """
    t = np.asarray(times, dtype=np.float64)
    d = np.asarray(distances, dtype=np.float64)
    if t.shape != d.shape or t.ndim != 1:
        raise ValueError(
            f"times and distances must be aligned 1D series, got {t.shape}, {d.shape}"
        )
    start, stop = (float(w) for w in window)
    if not start < stop:
        raise ValueError(f"fit window must be increasing, got {window}")
    inside = (t >= start) & (t <= stop)
    count = int(inside.sum())
    if count < MIN_FIT_SAMPLES:
        raise ValueError(
            f"fit needs at least {MIN_FIT_SAMPLES} samples in {window}, got {count}"
        )
    if np.any(~np.isfinite(d[inside])) or np.any(d[inside] <= 0):
        raise ValueError(f"distances in the fit window {window} must be positive")
    log_d = np.log(d[inside])
    rate, intercept = np.polyfit(t[inside], log_d, 1)
    residual = float(np.sqrt(np.mean((log_d - (intercept + rate * t[inside])) ** 2)))
    return DecayFit(float(rate), float(intercept), residual, (start, stop), count)


@dataclass
class ConvergenceReport:
    """Distances of a rescaled run to its profile and the fitted decay."""

    times: FloatArray
    distances: FloatArray
    weighted_distances: FloatArray
    fit: DecayFit
    weighted_fit: DecayFit
    weight: float = WEIGHT_EXPONENT

    @classmethod
    def from_series(
        cls,
        times: Sequence[float],
        distances: Sequence[float],
        weighted_distances: Sequence[float],
        window: Tuple[float, float],
        weight: float = WEIGHT_EXPONENT,
    ) -> "ConvergenceReport":
        """Fit both series over ``window``, which must lie within the samples."""
        t = np.asarray(times, dtype=np.float64)
        if t.size == 0:
            raise ValueError("convergence report needs samples")
        slack = 1e-9 * max(1.0, float(np.abs(t).max()))
        if window[0] < t.min() - slack or window[1] > t.max() + slack:
            raise ValueError(
                f"fit window {tuple(window)} exceeds the recorded times "
                f"[{t.min():.6g}, {t.max():.6g}]"
            )
        d = np.asarray(distances, dtype=np.float64)
        dk = np.asarray(weighted_distances, dtype=np.float64)
        return cls(
            t,
            d,
            dk,
            fit_decay_rate(t, d, window),
            fit_decay_rate(t, dk, window),
            weight,
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": self.times,
                "l43": self.distances,
                "l43_weighted": self.weighted_distances,
            }
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "weight": self.weight,
            "l43": self.fit.to_dict(),
            "l43_weighted": self.weighted_fit.to_dict(),
        }


@dataclass
class ScenarioCheck:
    """One asserted quantity with its target and the origin of the target."""

    name: str
    value: float
    target: float
    tolerance: float
    passed: bool
    provenance: str
    detail: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "value": _finite(self.value),
            "target": _finite(self.target),
            "tolerance": self.tolerance,
            "passed": self.passed,
            "provenance": self.provenance,
            "detail": self.detail,
        }


@dataclass
class ScenarioOutcome:
    """Checks, written files and timing of one scenario run."""

    name: str
    checks: List[ScenarioCheck] = field(default_factory=list)
    files: List[str] = field(default_factory=list)
    elapsed: float = 0.0
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failed_checks(self) -> List[Dict[str, Any]]:
        return [check.to_dict() for check in self.checks if not check.passed]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.name,
            "passed": self.passed,
            "elapsed": self.elapsed,
            "checks": [check.to_dict() for check in self.checks],
            "files": list(self.files),
            **self.details,
        }


@dataclass
class Scenario:
    """A named verification run with configuration overrides.

    ``overrides`` replace fields of the scenario's default :class:`SimConfig`;
    ``parameters`` replace the scenario's own settings (fit windows, tolerances,
    sample counts).
    """

    name: str
    overrides: Dict[str, Any] = field(default_factory=dict)
    parameters: Dict[str, Any] = field(default_factory=dict)
    out_dir: str = "out"
    seed: int = 0
    jobs: int = 1
    plot: bool = True

    @property
    def output_dir(self) -> Path:
        return Path(self.out_dir) / self.name

    def settings(self) -> Dict[str, Any]:
        """Default parameters of the scenario updated with ``parameters``."""
        merged = dict(_DEFAULTS[self.name][1])
        merged.update(self.parameters)
        return merged

    def config(self) -> SimConfig:
        """The scenario's default configuration with ``overrides`` applied.

        The convergence datum takes ``sigma = sqrt(1 - M / 8 pi)`` and the blow-up
        datum ``sigma = M^-1/2`` (second moment 2) unless ``sigma`` is overridden;
        the blow-up run ends after the second-moment vanish time plus the margin.
        """
        data = dict(_DEFAULTS[self.name][0])
        data.update(self.overrides)
        data["seed"] = self.seed
        mass = data.get("mass", SimConfig.mass)
        if isinstance(mass, bool) or not isinstance(mass, (int, float)):
            return SimConfig.from_dict(data)
        if "sigma" not in self.overrides:
            if self.name == "subcritical-convergence" and 0 < mass < CRITICAL_MASS:
                data["sigma"] = math.sqrt(1.0 - mass / CRITICAL_MASS)
            elif self.name == "supercritical-blowup" and mass > 0:
                data["sigma"] = 1.0 / math.sqrt(mass)
        if self.name == "supercritical-blowup" and "t_end" not in self.overrides:
            if mass > CRITICAL_MASS:
                sigma = float(data.get("sigma", SimConfig.sigma))
                vanish = second_moment_vanish_time(mass, 2.0 * mass * sigma**2)
                data["t_end"] = (1.0 + self.settings()["margin"]) * vanish
        return SimConfig.from_dict(data)

    def errors(self) -> List[str]:
        """Every problem with the scenario, as ``"field: message"``."""
        if self.name not in SCENARIO_NAMES:
            return [f"scenario: unknown scenario '{self.name}'"]
        problems: List[str] = []
        if not isinstance(self.jobs, int) or self.jobs < 1:
            problems.append(f"jobs: must be a positive integer, got {self.jobs!r}")
        known = _DEFAULTS[self.name][1]
        for key in sorted(set(self.parameters) - set(known)):
            problems.append(f"parameters.{key}: unknown key")
        try:
            config = self.config()
        except ConfigError as exc:
            return problems + exc.errors
        if self.name in SUBCRITICAL and not config.mass < CRITICAL_MASS:
            problems.append(f"mass: must be below 8 pi here, got {config.mass}")
        if self.name == "supercritical-blowup" and not config.mass > CRITICAL_MASS:
            problems.append(f"mass: must exceed 8 pi here, got {config.mass}")
        if self.name == "rescale-consistency":
            times = self.settings()["times"]
            if not times or max(times) > config.t_end:
                problems.append(
                    f"parameters.times: must be nonempty and within t_end, got {times}"
                )
        return problems

    def validate(self) -> "Scenario":
        problems = self.errors()
        if problems:
            raise ConfigError(problems)
        return self

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Scenario":
        """Build from a JSON object carrying a ``scenario`` key."""
        parameters = data.get("parameters", {})
        if not isinstance(parameters, dict):
            raise ConfigError(["parameters: must be a JSON object"])
        overrides = {k: v for k, v in data.items() if k not in SCENARIO_KEYS}
        scenario = cls(
            name=str(data["scenario"]),
            overrides=overrides,
            parameters=dict(parameters),
            out_dir=str(data.get("out_dir", "out")),
            seed=data.get("seed", 0),
            jobs=data.get("jobs", 1),
        )
        return scenario.validate()


def _read_json(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError([f"config: file not found: {path}"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config: malformed JSON in {path} ({exc})"]) from None
    if not isinstance(data, dict):
        raise ConfigError([f"config: top level of {path} must be a JSON object"])
    return data


def parse_config(path: Union[str, Path]) -> Union[SimConfig, Scenario]:
    """Read a JSON configuration file.

    A plain object yields a validated :class:`SimConfig`; an object with a
    ``scenario`` key yields a :class:`Scenario` whose other keys are
    ``out_dir``, ``seed``, ``jobs``, ``parameters`` or configuration overrides.

    Raises:
        ConfigError: On a missing file, malformed JSON or any schema violation
    """
    data = _read_json(path)
    if "scenario" in data:
        return Scenario.from_dict(data)
    return SimConfig.from_dict(data)


def load_scenario(name: str, path: Optional[Union[str, Path]] = None) -> Scenario:
    """Scenario ``name`` with the overrides of an optional JSON file.

    The file may omit the ``scenario`` key; when present it must equal ``name``.

    Raises:
        ConfigError: On a name mismatch or any schema violation
    """
    data: Dict[str, Any] = {} if path is None else _read_json(path)
    declared = data.setdefault("scenario", name)
    if declared != name:
        raise ConfigError(
            [f"scenario: config file names '{declared}', command names '{name}'"]
        )
    return Scenario.from_dict(data)


def mass_tag(mass: float) -> str:
    """File-name safe rendering of a mass, e.g. ``12p5664``."""
    return f"{mass:.6g}".replace(".", "p")


def random_mixture(
    grid: Grid2D,
    rng: np.random.Generator,
    spread: float = 3.0,
    sigma_range: Sequence[float] = (0.6, 1.5),
    mass_fraction: Sequence[float] = (0.1, 0.95),
    max_components: int = 3,
    label: Optional[str] = None,
) -> Field2D:
    """Draw a Gaussian mixture of total mass below 8 pi.

    Centers are uniform in ``[-spread, spread]^2``, clipped so that every component
    keeps six standard deviations inside the box.
    """
    count = int(rng.integers(1, max_components + 1))
    total = rng.uniform(*mass_fraction) * CRITICAL_MASS
    masses = total * rng.dirichlet(np.ones(count))
    sigmas = rng.uniform(*sigma_range, size=count)
    reach = min(spread, grid.half_width - GAUSSIAN_MARGIN * float(sigmas.max()))
    if reach < 0:
        raise ValueError(
            f"half width {grid.half_width} cannot hold sigma {sigmas.max():.4g}"
        )
    centers = rng.uniform(-reach, reach, size=(count, 2))
    f = gaussian_mixture(grid, masses.tolist(), sigmas.tolist(), centers.tolist())
    return f.with_values(f.values, label or f.label)


def run_many(configs: Sequence[SimConfig], jobs: int = 1) -> List[TrajectoryRecord]:
    """Run independent configurations, in parallel processes when ``jobs > 1``."""
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(configs))) as pool:
            return list(pool.map(run, configs))
    return [run(config) for config in configs]


def _final_state(record: TrajectoryRecord) -> SimState:
    if record.final_state is None:
        raise RuntimeError("run finished without a final state")
    return record.final_state


def _heat_l43(mass: float, variance: float) -> float:
    # ||f||_p of a Gaussian of the given variance, p = 4/3
    p = 4.0 / 3.0
    scale = 2.0 * math.pi * variance
    return mass / scale * (scale / p) ** (1.0 / p)


class ScenarioRunner:
    """Executes one scenario and collects its checks and files."""

    def __init__(self, scenario: Scenario):
        """Validate the scenario and prepare its output directory.

        Raises:
            ConfigError: If the scenario is invalid or its directory not writable
        """
        self.scenario = scenario.validate()
        self.config = scenario.config()
        self.params = scenario.settings()
        self.out = scenario.output_dir
        self.log = logging.getLogger(__name__)
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError([f"out_dir: {self.out} is not writable ({exc})"]) from exc
        self.visualizer = (
            KSVisualizer(output_dir=str(self.out)) if scenario.plot else None
        )
        self.outcome = ScenarioOutcome(scenario.name)

    def run(self) -> ScenarioOutcome:
        """Run the scenario, write ``summary.json`` and return the outcome."""
        name = self.scenario.name
        self.log.info(f"Scenario {name} started")
        start = time.perf_counter()
        getattr(self, "_" + name.replace("-", "_"))()
        self.outcome.elapsed = time.perf_counter() - start
        self.outcome.details.update(
            {"config": self.config.to_dict(), "parameters": self.params}
        )
        path = self.out / "summary.json"
        self._note(path)
        with open(path, "w") as fh:
            json.dump(self.outcome.to_dict(), fh, indent=2)
        status = "passed" if self.outcome.passed else "FAILED"
        self.log.info(
            f"Scenario {name} {status} in {self.outcome.elapsed:.1f} s; "
            f"summary: {path}"
        )
        for check in self.outcome.checks:
            if not check.passed:
                self.log.warning(
                    f"Check {check.name} failed: {check.value} vs {check.target}"
                )
        return self.outcome

    # recording

    def _note(self, path: Path) -> None:
        self.outcome.files.append(str(path))

    def _check(
        self,
        name: str,
        value: float,
        target: float,
        tolerance: float,
        passed: bool,
        provenance: str,
        detail: str = "",
    ) -> ScenarioCheck:
        check = ScenarioCheck(
            name,
            float(value),
            float(target),
            float(tolerance),
            bool(passed),
            provenance,
            detail,
        )
        self.outcome.checks.append(check)
        self.log.debug(f"Check {name}: value={value:.6g} target={target:.6g}")
        return check

    def _close(
        self,
        name: str,
        value: float,
        target: float,
        tolerance: float,
        provenance: str,
        detail: str = "",
        relative: bool = False,
    ) -> ScenarioCheck:
        bound = tolerance * abs(target) if relative else tolerance
        passed = math.isfinite(value) and abs(value - target) <= bound
        return self._check(name, value, target, tolerance, passed, provenance, detail)

    def _below(
        self,
        name: str,
        value: float,
        limit: float,
        provenance: str,
        detail: str = "",
        strict: bool = False,
    ) -> ScenarioCheck:
        if not math.isfinite(value):
            passed = False
        else:
            passed = value < limit if strict else value <= limit
        return self._check(name, value, limit, 0.0, passed, provenance, detail)

    def _above(
        self, name: str, value: float, limit: float, provenance: str, detail: str = ""
    ) -> ScenarioCheck:
        passed = math.isfinite(value) and value >= limit
        return self._check(name, value, limit, 0.0, passed, provenance, detail)

    def _frame(self, frame: pd.DataFrame, filename: str) -> Path:
        path = self.out / filename
        frame.to_csv(path, index=False, float_format="%.17g")
        self._note(path)
        self.log.info(f"Table saved: {path}")
        return path

    def _trajectory(
        self, record: TrajectoryRecord, stem: str = "trajectory"
    ) -> TrajectoryRecord:
        self._note(record.to_csv(self.out / f"{stem}.csv"))
        if self.visualizer is not None and len(record):
            columns = (
                ("m2", "E", "DE")
                if record.config.get("regime") == "rescaled"
                else ("m2", "F", "linf")
            )
            self._note(
                self.visualizer.plot_trajectory(
                    record.to_frame(),
                    name=stem,
                    columns=columns,
                    blowup_time=record.blowup_time,
                )
            )
        return record

    def _profile(self) -> ProfileResult:
        mass = self.config.mass
        rgrid = make_radial_grid(mass, size=int(self.params["nodes"]))
        profile = solve_profile(mass, rgrid)
        self.outcome.details["profile"] = profile.summary()
        return profile

    def _grid(self) -> Grid2D:
        return make_grid(self.config.n, self.config.half_width)

    # scenarios

    def _subcritical_convergence(self) -> None:
        profile = self._profile()
        target = radial_to_2d(profile.G, self._grid(), outside=0.0, label="G")
        weight = float(self.params["weight"])
        times: List[float] = []
        plain: List[float] = []
        weighted: List[float] = []

        def observe(state: SimState) -> None:
            diff = state.f - target
            times.append(state.t)
            plain.append(lp_norm(diff, 4.0 / 3.0))
            weighted.append(lp_norm(diff, 4.0 / 3.0, k=weight))

        self._trajectory(run(self.config, observer=observe))
        window = (float(self.params["window"][0]), float(self.params["window"][1]))
        report = ConvergenceReport.from_series(times, plain, weighted, window, weight)
        self._frame(report.to_frame(), "convergence.csv")
        self.outcome.details["convergence"] = report.to_dict()
        self._close(
            "l43-decay-rate",
            report.fit.rate,
            float(self.params["rate"]),
            float(self.params["rate_tolerance"]),
            CLOSED_FORM,
            f"fit of log ||g - G||_4/3 over {window}; intercept "
            f"{report.fit.intercept:.4g} reported only",
        )
        if self.visualizer is not None:
            self._note(
                self.visualizer.plot_decay(
                    report.times,
                    report.distances,
                    report.fit.rate,
                    report.fit.intercept,
                    window,
                    name="convergence",
                )
            )

    def _supercritical_blowup(self) -> None:
        config = self.config
        try:
            record = self._trajectory(run(config))
        except BlowupOrInstability as exc:
            m2_0 = 2.0 * config.mass * config.sigma**2
            self._check(
                "blowup-detection",
                exc.time,
                second_moment_vanish_time(config.mass, m2_0),
                0.0,
                False,
                CLOSED_FORM,
                f"run stopped on {exc.reason} before any blow-up indicator: {exc}",
            )
            self.outcome.details["blowup"] = {"time": exc.time, "reason": exc.reason}
            return
        frame = record.to_frame()
        vanish = second_moment_vanish_time(config.mass, float(frame["m2"].iloc[0]))
        deadline = (1.0 + float(self.params["margin"])) * vanish
        early = frame[frame["t"] <= float(self.params["fit_fraction"]) * vanish]
        slope = (
            float(np.polyfit(early["t"], early["m2"], 1)[0])
            if len(early) >= 2
            else math.nan
        )
        self._close(
            "second-moment-slope",
            slope,
            c1_constant(config.mass),
            float(self.params["slope_tolerance"]),
            CLOSED_FORM,
            f"dM2/dt = 4M(1 - M/8pi) over {len(early)} resolved samples",
            relative=True,
        )
        blowup = math.nan if record.blowup_time is None else record.blowup_time
        self._below(
            "blowup-time",
            blowup,
            deadline,
            CLOSED_FORM,
            f"reason {record.blowup_reason}; vanish time {vanish:.6g}",
        )
        growth = float(frame["linf"].max() / frame["linf"].iloc[0])
        self._above(
            "peak-growth", growth, float(self.params["linf_growth"]), ORACLE
        )
        self.outcome.details["vanish_time"] = vanish
        self.outcome.details["blowup"] = {
            "time": record.blowup_time,
            "reason": record.blowup_reason,
        }
        if self.visualizer is not None and record.final_state is not None:
            self._note(
                self.visualizer.plot_density(
                    record.final_state.f, name="final_density"
                )
            )

    def _moment_bound(self) -> None:
        config = self.config
        rng = np.random.default_rng(config.seed)
        bump = float(self.params["bump_fraction"]) * config.mass
        bump_sigma = float(self.params["bump_sigma"])
        spread = float(self.params["spread"])
        initial = gaussian_mixture(
            self._grid(),
            [config.mass - 2.0 * bump, bump, bump],
            [config.sigma, bump_sigma, bump_sigma],
            [config.center]
            + [tuple(rng.uniform(-spread, spread, size=2)) for _ in range(2)],
        )
        orders = [int(k) for k in self.params["orders"]]
        rows: List[Dict[str, float]] = []

        def observe(state: SimState) -> None:
            row = {"t": state.t}
            row.update({f"m{k}": moment(state.f, k) for k in orders})
            rows.append(row)

        self._trajectory(run(config, observer=observe, initial=initial))
        frame = pd.DataFrame(rows)
        self._frame(frame, "moments.csv")
        slack = 1.0 + float(self.params["slack"])
        for k in orders:
            initial_moment = float(frame[f"m{k}"].iloc[0])
            bound = max((k - 1) ** (k / 2.0) * config.mass, initial_moment) * slack
            self._below(
                f"moment-{k}",
                float(frame[f"m{k}"].max()),
                bound,
                CLOSED_FORM,
                f"sup_t M_{k} <= max((k-1)^(k/2) M, M_{k}(g0)) x {slack:g}",
            )

    def _inequality_suite(self) -> None:
        config = self.config
        grid = self._grid()
        rng = np.random.default_rng(config.seed)
        rows: List[Dict[str, Any]] = []
        failures: List[str] = []
        ratios: Dict[str, List[float]] = {"hls-critical": [], "nash": []}
        for index in range(int(self.params["mixtures"])):
            label = f"mixture-{index}"
            f = random_mixture(
                grid,
                rng,
                spread=float(self.params["spread"]),
                sigma_range=self.params["sigma_range"],
                mass_fraction=self.params["mass_fraction"],
                max_components=int(self.params["max_components"]),
                label=label,
            )
            pot = log_kernel_convolve(f, config.kernel)
            for report in check_inequalities(f, pot, label=label):
                data = report.to_dict()
                rows.append(
                    {
                        "sample": index,
                        "mass": data["witness"]["mass"],
                        **{k: data[k] for k in ("name", "kind", "lhs", "rhs")},
                        "slack": data["slack"],
                        "passed": data["passed"],
                    }
                )
                if report.kind == "bound" and not report.passed:
                    failures.append(f"{label}:{report.name}")
                if report.name in ratios:
                    ratios[report.name].append(report.slack)
        self._frame(pd.DataFrame(rows), "inequalities.csv")
        self._below(
            "bound-failures",
            float(len(failures)),
            0.0,
            CLOSED_FORM,
            ", ".join(failures[:10]),
        )
        for name, values in ratios.items():
            spread = math.inf
            if values and min(values) > 0:
                spread = max(values) / min(values)
            self._below(
                f"{name}-ratio-spread",
                spread,
                float(self.params["ratio_spread"]),
                ORACLE,
                "max/min of the measured ratio across the mixtures",
                strict=True,
            )

    def _stationarity(self) -> None:
        profile = self._profile()
        initial = radial_to_2d(profile.G, self._grid(), outside=0.0, label="G")
        record = self._trajectory(run(self.config, initial=initial))
        final = _final_state(record)
        drift = lp_norm(final.f - initial, 1.0)
        self._below(
            "l1-drift",
            drift,
            float(self.params["tolerance"]),
            ORACLE,
            f"{final.steps} rescaled steps from the sampled profile",
        )
        self._close(
            "profile-second-moment",
            profile.m2,
            rescaled_second_moment_limit(self.config.mass),
            float(self.params["moment_tolerance"]),
            ORACLE,
            "moment balance 2M(1 - M/8pi)",
            relative=True,
        )
        self._below(
            "profile-dissipation",
            radial_rescaled_dissipation(profile.G),
            1e-8 * max(1.0, profile.m2),
            CLOSED_FORM,
            "rescaled dissipation vanishes at the profile",
        )
        if self.visualizer is not None:
            self._note(self.visualizer.plot_profile([profile], name="profile"))
            self._note(self.visualizer.plot_density(initial, name="profile_density"))

    def _rescale_consistency(self) -> None:
        config = self.config
        grid = self._grid()
        times = sorted(float(s) for s in self.params["times"])
        captured: Dict[float, Field2D] = {}

        def observe(state: SimState) -> None:
            for s in times:
                if abs(state.t - s) <= 1e-9 * max(1.0, s):
                    captured[s] = state.f

        self._trajectory(run(config, observer=observe))
        physical = [
            config.replace(
                regime="physical",
                half_width=math.exp(s) * config.half_width,
                t_end=physical_time(s),
                dt=float(self.params["physical_dt"]),
                record_every=100,
            )
            for s in times
        ]
        rows = []
        for s, record in zip(times, run_many(physical, self.scenario.jobs)):
            tau = physical_time(s)
            mapped = physical_to_rescaled(_final_state(record).f, tau, grid)
            reference = captured.get(s)
            distance = (
                lp_norm(mapped - reference, 1.0) if reference is not None else math.nan
            )
            rows.append({"s": s, "tau": tau, "l1": distance})
            self._below(
                f"l1-distance-s{s:g}",
                distance,
                float(self.params["tolerance"]),
                ORACLE,
                f"physical run to tau = {tau:.6g} on half width "
                f"{math.exp(s) * config.half_width:.6g}",
            )
        self._frame(pd.DataFrame(rows), "consistency.csv")

    def _short_time_l43(self) -> None:
        config = self.config
        frame = short_time_l43(config)
        sigma2 = config.sigma**2
        frame["heat"] = [
            t**0.25 * _heat_l43(config.mass, sigma2 + 2.0 * t) for t in frame["t"]
        ]
        self._frame(frame, "short_time.csv")
        t = frame["t"].to_numpy()
        spacing = 0.5 * config.dt * config.record_every
        values: Dict[float, float] = {}
        for target in (float(x) for x in self.params["times"]):
            index = int(np.argmin(np.abs(t - target)))
            hit = abs(t[index] - target) <= spacing
            values[target] = float(frame["t14l43"].iloc[index]) if hit else math.nan
        targets = sorted(values)
        for early, late in zip(targets, targets[1:]):
            self._below(
                f"l43-ratio-{early:g}-{late:g}",
                values[early] / values[late],
                1.0,
                ORACLE,
                "t^1/4 ||f||_4/3 decreases as t -> 0",
                strict=True,
            )
        self.outcome.details["t14l43"] = {
            f"{k:g}": _finite(v) for k, v in values.items()
        }
        if self.visualizer is not None:
            self._note(
                self.visualizer.plot_trajectory(
                    frame, name="short_time", columns=("t14l43", "heat")
                )
            )

    def _semigroup_decay(self) -> None:
        config = self.config
        profile = self._profile()
        grid = self._grid()
        base = radial_to_2d(profile.G, grid, outside=0.0, label="G")
        x1, x2 = grid.mesh
        spread = moment(base, 2) / integrate(base)
        shape = (x1**2 - x2**2) + (x1**2 + x2**2 - spread)
        eps = float(self.params["epsilon"])
        perturbation = base.with_values(shape * base.values, "perturbation")
        initial = base.with_values(
            base.values + eps * perturbation.values, "G + eps h"
        )
        self.outcome.details["perturbation"] = {
            "epsilon": eps,
            "mass": integrate(perturbation),
            "first_moment": [
                float(np.sum(x1 * perturbation.values) * grid.cell_area),
                float(np.sum(x2 * perturbation.values) * grid.cell_area),
            ],
        }
        reference: Dict[int, Field2D] = {}

        def remember(state: SimState) -> None:
            reference[state.steps] = state.f

        run(config, observer=remember, initial=base)
        times: List[float] = []
        distances: List[float] = []

        def observe(state: SimState) -> None:
            ref = reference.get(state.steps)
            if ref is not None:
                times.append(state.t)
                distances.append(lp_norm(state.f - ref, 4.0 / 3.0))

        self._trajectory(run(config, observer=observe, initial=initial))
        window = (float(self.params["window"][0]), float(self.params["window"][1]))
        fit = fit_decay_rate(times, distances, window)
        self._frame(pd.DataFrame({"t": times, "l43": distances}), "decay.csv")
        self.outcome.details["decay"] = fit.to_dict()
        self._below(
            "decay-rate",
            fit.rate,
            float(self.params["rate_bound"]),
            ORACLE,
            "zero-mass, zero-first-moment perturbation decays faster than e^-t",
        )
        if self.visualizer is not None:
            self._note(
                self.visualizer.plot_decay(
                    times, distances, fit.rate, fit.intercept, window, name="decay"
                )
            )

    def _second_moment_law(self) -> None:
        masses = [float(m) for m in self.params["masses"]]
        configs = [self.config.replace(mass=mass) for mass in masses]
        records = run_many(configs, self.scenario.jobs)
        identity_mass = float(self.params["identity_mass"])
        for mass, record in zip(masses, records):
            tag = "M" + mass_tag(mass / math.pi) + "pi"
            self._trajectory(record, stem=f"trajectory_{tag}")
            self._note(save_summary(record, self.out / f"summary_{tag}.json"))
            frame = record.to_frame()
            t = frame["t"].to_numpy()
            slope = float(np.polyfit(t, frame["m2"], 1)[0])
            self._close(
                f"second-moment-slope-{tag}",
                slope,
                c1_constant(mass),
                float(self.params["slope_tolerance"]),
                CLOSED_FORM,
                "dM2/dt = 4M(1 - M/8pi)",
                relative=True,
            )
            mass0 = float(frame["mass"].iloc[0])
            drift = float(np.max(np.abs(frame["mass"] - mass0)) / mass0)
            self._below(
                f"mass-drift-{tag}", drift, float(self.params["mass_drift"]), ORACLE
            )
            F = frame["F"].to_numpy()
            rise = float(np.max(np.diff(F))) if F.size > 1 else 0.0
            self._below(
                f"free-energy-monotone-{tag}",
                rise,
                float(self.params["monotone_tolerance"]) * abs(F[0]),
                CLOSED_FORM,
                "largest sample-to-sample increase of F",
            )
            estimate = check_a_priori_estimate(frame, mass)
            self._check(
                f"a-priori-estimate-{tag}",
                estimate.lhs,
                estimate.rhs,
                0.0,
                estimate.passed,
                CLOSED_FORM,
                f"worst sample t = {estimate.witness.get('worst_time')}",
            )
            if math.isclose(mass, identity_mass, rel_tol=1e-9):
                dissipated = float(trapezoid(frame["DF"].to_numpy(), t))
                gap = abs(F[-1] + dissipated - F[0]) / abs(F[0])
                self._below(
                    f"free-energy-identity-{tag}",
                    gap,
                    float(self.params["identity_tolerance"]),
                    CLOSED_FORM,
                    "|F(t) + int D_F - F0| / |F0| at t_end",
                )


def run_scenario(s: Scenario) -> ScenarioOutcome:
    """Run a scenario; the outcome's ``passed`` is true iff every check passed."""
    return ScenarioRunner(s).run()
