"""Time integration of the physical and self-similar rescaled Keller-Segel systems.

Physical regime::

    df/dt = lap f + div(f K*f)

Rescaled regime::

    dg/dt = lap g + div(g (x + K*g))

Diffusion is integrated exactly in Fourier space; the divergence-form transport
(with confinement in the rescaled regime) is advanced by second-order exponential
time differencing. The zero Fourier mode is never touched, so mass is conserved to
roundoff.
"""

import dataclasses
import json
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from dataclasses import field
from functools import lru_cache
from pathlib import Path
from typing import Any
from typing import Callable
from typing import Dict
from typing import List
from typing import Optional
from typing import Tuple
from typing import Union

import numpy as np
import pandas as pd
from scipy import fft as sp_fft

from .fields import GAUSSIAN_MARGIN
from .fields import MIN_CELLS
from .fields import Field2D
from .fields import FloatArray
from .fields import Grid2D
from .fields import derivative_wavenumbers
from .fields import gaussian_datum
from .fields import integrate
from .fields import laplacian_symbol
from .fields import linf_norm
from .fields import load_field
from .fields import lp_norm
from .fields import make_grid
from .fields import moment
from .fields import save_field
from .functionals import entropy
from .functionals import fisher_information
from .functionals import free_energy_dissipation
from .functionals import h2_functional
from .functionals import interaction_energy
from .functionals import positive_entropy
from .functionals import rescaled_dissipation
from .potential import CRITICAL_MASS
from .potential import KERNELS
from .potential import PotentialPair
from .potential import log_kernel_convolve


log = logging.getLogger(__name__)

REGIMES = ("physical", "rescaled")
CFL_SAFETY = 0.5
MIN_STABLE_DT = 1e-12
CONTOUR_POINTS = 32
COEFFICIENT_CACHE = 8
EDGE_TAPER = 0.125

TRAJECTORY_COLUMNS = [
    "t",
    "mass",
    "m2",
    "m4",
    "H",
    "Hplus",
    "H2",
    "F",
    "DF",
    "I",
    "E",
    "DE",
    "l43",
    "l2",
    "l3",
    "linf",
    "t14l43",
]


class ConfigError(ValueError):
    """Invalid simulation or scenario configuration.

    ``errors`` lists every problem as ``"field: message"``.
    """

    def __init__(self, errors: List[str]) -> None:
        """Store the field-level messages."""
        self.errors = list(errors)
        super().__init__("invalid configuration: " + "; ".join(self.errors))

    def __reduce__(self) -> Tuple[Any, ...]:
        return (self.__class__, (self.errors,))


class BlowupOrInstability(RuntimeError):
    """Integration stopped on a non-finite, negative, concentrating or CFL-bound state.

    ``state`` is the last valid state, ``reason`` one of ``nan``, ``negativity``,
    ``linf`` or ``cfl`` and ``time`` the time at which the condition was detected.
    """

    def __init__(self, reason: str, state: "SimState", time: float, detail: str = ""):
        """Record the stopping condition."""
        self.reason = reason
        self.state = state
        self.time = time
        self.detail = detail
        message = f"{reason} at t = {time:.6g}"
        super().__init__(f"{message}: {detail}" if detail else message)

    def __reduce__(self) -> Tuple[Any, ...]:
        return (self.__class__, (self.reason, self.state, self.time, self.detail))


@dataclass(frozen=True, eq=False)
class SimState:
    """Density at one instant together with its cached potential pair."""

    f: Field2D
    t: float
    steps: int
    potential: PotentialPair
    regime: str

    @property
    def mass(self) -> float:
        return integrate(self.f)


def make_state(
    f: Field2D,
    regime: str = "physical",
    kernel: str = "hockney",
    t: float = 0.0,
    steps: int = 0,
) -> SimState:
    """Wrap a density into a state, computing its potential pair."""
    if regime not in REGIMES:
        raise ValueError(f"regime must be one of {REGIMES}, got '{regime}'")
    return SimState(f, t, steps, log_kernel_convolve(f, kernel), regime)


@dataclass
class SimConfig:
    """Parameters of one run; JSON keys are the field names."""

    n: int = 128
    half_width: float = 8.0
    mass: float = 4.0 * math.pi
    sigma: float = 1.0
    center: Tuple[float, float] = (0.0, 0.0)
    init_path: Optional[str] = None
    dt: float = 1e-3
    t_end: float = 1.0
    regime: str = "physical"
    record_every: int = 10
    neg_tol: float = 1e-8
    blowup_linf_factor: float = 1e3
    kernel: str = "hockney"
    attraction: bool = True
    adaptive_dt: bool = False
    dump_every: int = 0
    seed: int = 0

    def errors(self) -> List[str]:
        """Collect every field-level problem."""
        problems = []

        def positive(name: str) -> None:
            value = getattr(self, name)
            if (
                not isinstance(value, (int, float))
                or not value > 0
                or not math.isfinite(value)
            ):
                problems.append(f"{name}: must be positive, got {value}")

        def count(name: str, minimum: int) -> None:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
                problems.append(f"{name}: must be an integer >= {minimum}, got {value}")

        n = self.n
        if (
            isinstance(n, bool)
            or not isinstance(n, int)
            or n < MIN_CELLS
            or n & (n - 1)
        ):
            problems.append(f"n: must be a power of two >= {MIN_CELLS}, got {n}")
        for name in (
            "half_width",
            "mass",
            "sigma",
            "dt",
            "t_end",
            "blowup_linf_factor",
        ):
            positive(name)
        if isinstance(self.neg_tol, bool) or not (
            isinstance(self.neg_tol, (int, float)) and self.neg_tol >= 0
        ):
            problems.append(f"neg_tol: must be nonnegative, got {self.neg_tol}")
        count("record_every", 1)
        count("dump_every", 0)
        count("seed", 0)
        if self.regime not in REGIMES:
            problems.append(
                f"regime: must be one of {list(REGIMES)}, got '{self.regime}'"
            )
        if self.kernel not in KERNELS:
            problems.append(
                f"kernel: must be one of {list(KERNELS)}, got '{self.kernel}'"
            )
        for name in ("attraction", "adaptive_dt"):
            if not isinstance(getattr(self, name), bool):
                problems.append(f"{name}: must be a boolean, got {getattr(self, name)}")
        center = self.center
        if (
            not isinstance(center, (tuple, list))
            or len(center) != 2
            or not all(isinstance(c, (int, float)) for c in center)
        ):
            problems.append(f"center: must be a pair of numbers, got {center}")
        elif self.init_path is None and not problems:
            margin = self.half_width - max(abs(c) for c in center)
            if margin < GAUSSIAN_MARGIN * self.sigma:
                problems.append(
                    f"center: leaves margin {margin:.4g} below {GAUSSIAN_MARGIN} sigma"
                )
        if self.init_path is not None and not Path(self.init_path).with_suffix(
            ".json"
        ).exists():
            problems.append(f"init_path: no dump sidecar at {self.init_path}")
        return problems

    def validate(self) -> "SimConfig":
        """Raise :class:`ConfigError` listing every problem, else return ``self``."""
        problems = self.errors()
        if problems:
            raise ConfigError(problems)
        return self

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SimConfig":
        """Build a validated config from JSON-like data, rejecting unknown keys."""
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        problems = [f"{key}: unknown key" for key in unknown]
        values = {key: value for key, value in data.items() if key in known}
        # JSON has no int/float distinction for whole numbers
        for key in ("half_width", "mass", "sigma", "dt", "t_end", "neg_tol"):
            if isinstance(values.get(key), int) and not isinstance(values[key], bool):
                values[key] = float(values[key])
        if isinstance(values.get("center"), list):
            values["center"] = tuple(values["center"])
        config = cls(**values)
        problems.extend(config.errors())
        if problems:
            raise ConfigError(problems)
        return config

    def to_dict(self) -> Dict[str, Any]:
        out = dataclasses.asdict(self)
        out["center"] = list(self.center)
        return out

    def replace(self, **changes: Any) -> "SimConfig":
        return dataclasses.replace(self, **changes).validate()


def _contour_mean(z: FloatArray, fn: Callable[[np.ndarray], np.ndarray]) -> FloatArray:
    # roots on the upper half circle; real symbols make the lower half the conjugate
    roots = np.exp(1j * np.pi * (np.arange(CONTOUR_POINTS) + 0.5) / CONTOUR_POINTS)
    lr = z[..., None] + roots
    return np.asarray(fn(lr).mean(axis=-1).real, dtype=np.float64)


def edge_window(grid: Grid2D, taper: float = EDGE_TAPER) -> FloatArray:
    """Product of per-axis ramps: 1 inside, ``cos^2`` to 0 over the outer band.

    The band is ``taper * half_width`` wide on each side. Drifts multiplied by
    the window vanish at the periodic seam, where ``x`` and ``K*f`` jump.
    """
    if not 0 < taper < 1:
        raise ValueError(f"taper must lie in (0, 1), got {taper}")
    band = taper * grid.half_width
    depth = np.clip((np.abs(grid.centers) - (grid.half_width - band)) / band, 0, 1)
    ramp = np.cos(0.5 * np.pi * depth) ** 2
    return np.asarray(np.outer(ramp, ramp))


class KellerSegelIntegrator:
    """Second-order exponential time differencing for one grid and regime.

    With ``L = -|k|^2`` and ``N`` the divergence-form transport::

        a   = exp(dt L) u + dt phi1(dt L) N(u)
        u+  = a + dt phi2(dt L) (N(a) - N(u))

    A discrete steady state ``L u + N(u) = 0`` is reproduced exactly.
    """

    def __init__(
        self,
        grid: Grid2D,
        regime: str = "physical",
        kernel: str = "hockney",
        attraction: bool = True,
        neg_tol: float = 1e-8,
    ) -> None:
        """Precompute the symbols of the grid."""
        if regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}, got '{regime}'")
        if kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}, got '{kernel}'")
        self.log = logging.getLogger(__name__)
        self.grid = grid
        self.regime = regime
        self.kernel = kernel
        self.attraction = attraction
        self.neg_tol = neg_tol
        self.k1, self.k2 = derivative_wavenumbers(grid)
        self.symbol = -laplacian_symbol(grid)
        self.window = edge_window(grid)
        self._coefficients: "OrderedDict[float, Tuple[FloatArray, ...]]" = (
            OrderedDict()
        )

    def coefficients(self, dt: float) -> Tuple[FloatArray, ...]:
        """``exp(dt L)``, ``phi1(dt L)`` and ``phi2(dt L)``.

        The last ``COEFFICIENT_CACHE`` step sizes are kept.
        """
        if dt in self._coefficients:
            self._coefficients.move_to_end(dt)
            return self._coefficients[dt]
        z = dt * self.symbol
        phi1 = _contour_mean(z, lambda lr: (np.exp(lr) - 1.0) / lr)
        phi2 = _contour_mean(z, lambda lr: (np.exp(lr) - 1.0 - lr) / lr**2)
        self._coefficients[dt] = (np.exp(z), phi1, phi2)
        if len(self._coefficients) > COEFFICIENT_CACHE:
            self._coefficients.popitem(last=False)
        self.log.debug(f"ETD coefficients built for dt={dt:.4g}")
        return self._coefficients[dt]

    def drift(self, pot: PotentialPair) -> Tuple[FloatArray, FloatArray]:
        """Field ``w`` in ``div(f w)``: ``K*f`` (optional) plus ``x`` when rescaled.

        Both components are tapered to zero at the box edge by ``edge_window``.
        """
        if self.attraction:
            w1 = np.array(pot.velocity_x.values)
            w2 = np.array(pot.velocity_y.values)
        else:
            w1 = np.zeros((self.grid.n, self.grid.n))
            w2 = np.zeros((self.grid.n, self.grid.n))
        if self.regime == "rescaled":
            x1, x2 = self.grid.mesh
            w1 += x1
            w2 += x2
        return w1 * self.window, w2 * self.window

    def stability_bound(self, pot: PotentialPair) -> float:
        """Advective CFL bound ``0.5 h / max|w|``."""
        w1, w2 = self.drift(pot)
        speed = float(np.max(np.hypot(w1, w2)))
        return math.inf if speed == 0 else CFL_SAFETY * self.grid.spacing / speed

    def transport(self, values: FloatArray, pot: PotentialPair) -> np.ndarray:
        """Spectrum of ``div(f w)``."""
        w1, w2 = self.drift(pot)
        flux1 = sp_fft.rfft2(values * w1)
        flux2 = sp_fft.rfft2(values * w2)
        return np.asarray(1j * (self.k1 * flux1 + self.k2 * flux2))

    @staticmethod
    def _require_finite(values: FloatArray, state: SimState, time: float) -> None:
        if not np.all(np.isfinite(values)):
            raise BlowupOrInstability("nan", state, time, "non-finite density")

    def step(self, state: SimState, dt: float) -> SimState:
        """Advance ``state`` by ``dt``.

        Raises:
            ValueError: If the state belongs to another grid or regime, or ``dt <= 0``
            BlowupOrInstability: On CFL violation, non-finite values or negativity
                beyond ``neg_tol``
        """
        if state.regime != self.regime or state.f.grid != self.grid:
            raise ValueError(
                f"integrator for {self.regime} on n={self.grid.n} cannot step a "
                f"{state.regime} state on n={state.f.grid.n}"
            )
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        time = state.t + dt
        bound = self.stability_bound(state.potential)
        if dt > bound:
            raise BlowupOrInstability(
                "cfl",
                state,
                state.t,
                f"dt = {dt:.4g} exceeds the CFL bound {bound:.4g}",
            )
        shape = (self.grid.n, self.grid.n)
        expo, phi1, phi2 = self.coefficients(dt)
        u = state.f.values
        u_hat = sp_fft.rfft2(u)
        n_u = self.transport(u, state.potential)
        a_hat = expo * u_hat + dt * phi1 * n_u
        a = sp_fft.irfft2(a_hat, s=shape)
        self._require_finite(a, state, time)
        stage = log_kernel_convolve(Field2D(self.grid, a), self.kernel)
        n_a = self.transport(a, stage)
        new = sp_fft.irfft2(a_hat + dt * phi2 * (n_a - n_u), s=shape)
        self._require_finite(new, state, time)
        new = self._enforce_positivity(new, state, time)
        f = Field2D(self.grid, new, state.f.label)
        return SimState(
            f, time, state.steps + 1, log_kernel_convolve(f, self.kernel), self.regime
        )

    def _enforce_positivity(
        self, values: FloatArray, state: SimState, time: float
    ) -> FloatArray:
        low = float(values.min())
        if low >= 0:
            return values
        peak = float(np.max(np.abs(values)))
        if low < -self.neg_tol * peak:
            raise BlowupOrInstability(
                "negativity",
                state,
                time,
                f"min = {low:.3e} below -{self.neg_tol:g} * linf "
                f"= {-self.neg_tol * peak:.3e}",
            )
        if low < -0.5 * self.neg_tol * peak:
            self.log.warning(f"Clipping undershoot {low:.3e} at t = {time:.6g}")
        prior = float(np.sum(state.f.values))
        clipped = np.maximum(values, 0.0)
        total = float(np.sum(clipped))
        if total > 0 and prior > 0:
            clipped *= prior / total
        return np.asarray(clipped)


@lru_cache(maxsize=16)
def _integrator(
    grid: Grid2D, regime: str, kernel: str, attraction: bool, neg_tol: float
) -> KellerSegelIntegrator:
    return KellerSegelIntegrator(grid, regime, kernel, attraction, neg_tol)


def step_physical(
    s: SimState, dt: float, attraction: bool = True, neg_tol: float = 1e-8
) -> SimState:
    """One step of the physical system with the kernel of the cached potential."""
    if s.regime != "physical":
        raise ValueError(f"step_physical needs a physical state, got '{s.regime}'")
    integrator = _integrator(
        s.f.grid, "physical", s.potential.kernel, attraction, neg_tol
    )
    return integrator.step(s, dt)


def step_rescaled(
    s: SimState, dt: float, attraction: bool = True, neg_tol: float = 1e-8
) -> SimState:
    """One step of the rescaled system; confinement is part of the transport."""
    if s.regime != "rescaled":
        raise ValueError(f"step_rescaled needs a rescaled state, got '{s.regime}'")
    integrator = _integrator(
        s.f.grid, "rescaled", s.potential.kernel, attraction, neg_tol
    )
    return integrator.step(s, dt)


def diagnostics(state: SimState) -> Dict[str, float]:
    """One trajectory sample: every column of :data:`TRAJECTORY_COLUMNS`."""
    f, pot = state.f, state.potential
    mass = integrate(f)
    if mass <= 0:
        row = {name: 0.0 for name in TRAJECTORY_COLUMNS}
        row["t"] = state.t
        return row
    H = entropy(f)
    m2 = moment(f, 2)
    inter = interaction_energy(f, pot)
    l43 = lp_norm(f, 4.0 / 3.0)
    return {
        "t": state.t,
        "mass": mass,
        "m2": m2,
        "m4": moment(f, 4),
        "H": H,
        "Hplus": positive_entropy(f),
        "H2": h2_functional(f),
        "F": H + inter,
        "DF": free_energy_dissipation(f, pot),
        "I": fisher_information(f),
        "E": H + mass + 0.5 * m2 + inter,
        "DE": rescaled_dissipation(f, pot),
        "l43": l43,
        "l2": lp_norm(f, 2.0),
        "l3": lp_norm(f, 3.0),
        "linf": linf_norm(f),
        "t14l43": max(state.t, 0.0) ** 0.25 * l43,
    }


@dataclass
class TrajectoryRecord:
    """Recorded diagnostics of one run plus its outcome."""

    config: Dict[str, Any] = field(default_factory=dict)
    rows: List[Dict[str, float]] = field(default_factory=list)
    blowup_time: Optional[float] = None
    blowup_reason: Optional[str] = None
    final_state: Optional[SimState] = None

    def append(self, row: Dict[str, float]) -> None:
        """Add a sample; times must increase strictly."""
        missing = set(TRAJECTORY_COLUMNS) - set(row)
        if missing:
            raise ValueError(f"sample is missing columns {sorted(missing)}")
        if self.rows and not row["t"] > self.rows[-1]["t"]:
            raise ValueError(
                f"sample time {row['t']} does not exceed previous {self.rows[-1]['t']}"
            )
        self.rows.append({name: float(row[name]) for name in TRAJECTORY_COLUMNS})

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> FloatArray:
        if name not in TRAJECTORY_COLUMNS:
            raise ValueError(f"unknown trajectory column '{name}'")
        return np.array([row[name] for row in self.rows], dtype=np.float64)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=TRAJECTORY_COLUMNS)

    def to_csv(self, path: Union[str, Path]) -> Path:
        """Write the samples with the fixed column header."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        log.info(f"Trajectory saved: {path}")
        return path

    def summary(self) -> Dict[str, Any]:
        """JSON-ready digest: config, outcome and first and last samples."""
        out: Dict[str, Any] = {
            "config": self.config,
            "samples": len(self.rows),
            "blowup_time": self.blowup_time,
            "blowup_reason": self.blowup_reason,
        }
        if self.rows:
            first, last = self.rows[0], self.rows[-1]
            out["initial"] = first
            out["final"] = last
            if first["mass"] > 0:
                out["mass_drift"] = abs(last["mass"] - first["mass"]) / first["mass"]
        return out


def _initial_field(config: SimConfig) -> Tuple[Field2D, float]:
    if config.init_path is not None:
        f, time = load_field(config.init_path)
        if f.grid != make_grid(config.n, config.half_width):
            raise ConfigError(
                [
                    f"init_path: dump grid (n={f.grid.n}, L={f.grid.half_width}) "
                    f"differs from config (n={config.n}, L={config.half_width})"
                ]
            )
        return f, 0.0 if time is None else time
    grid = make_grid(config.n, config.half_width)
    return gaussian_datum(grid, config.mass, config.sigma, config.center), 0.0


def _advance(
    state: SimState, dt: float, config: SimConfig, integrator: KellerSegelIntegrator
) -> SimState:
    if not config.adaptive_dt:
        return integrator.step(state, dt)
    bound = integrator.stability_bound(state.potential)
    if bound < MIN_STABLE_DT:
        raise BlowupOrInstability(
            "cfl", state, state.t, f"CFL bound {bound:.3e} below {MIN_STABLE_DT:g}"
        )
    step = dt
    while step > bound:
        step *= 0.5
    if step < dt:
        log.debug(f"Step reduced to {step:.4g} at t = {state.t:.6g}")
    return integrator.step(state, step)


def _is_blowup(exc: BlowupOrInstability, config: SimConfig) -> bool:
    # adaptive steps never exceed the bound, so their cfl stop is the vanishing bound
    if exc.reason == "linf":
        return True
    return exc.reason == "cfl" and config.adaptive_dt


def run(
    config: SimConfig,
    observer: Optional[Callable[[SimState], None]] = None,
    out_dir: Optional[Union[str, Path]] = None,
    initial: Optional[Field2D] = None,
) -> TrajectoryRecord:
    """Integrate from the configured datum to ``t_end`` or blow-up.

    Args:
        config: Validated run parameters
        observer: Called with the state at every recorded sample
        out_dir: Destination of field dumps when ``dump_every > 0``
        initial: Density overriding the configured datum, on the configured grid

    Returns:
        The trajectory; when the mass exceeds 8 pi a detected blow-up ends the run
        and is reported in ``blowup_time`` and ``blowup_reason``

    Raises:
        ConfigError: On invalid parameters
        BlowupOrInstability: On any stop at subcritical or critical mass, and on
            non-finite values, negativity or a fixed step above the CFL bound at
            any mass
    """
    config.validate()
    if initial is None:
        f0, t0 = _initial_field(config)
    else:
        if initial.grid != make_grid(config.n, config.half_width):
            raise ConfigError(["initial: density grid differs from config"])
        f0, t0 = initial, 0.0
    integrator = _integrator(
        f0.grid, config.regime, config.kernel, config.attraction, config.neg_tol
    )
    state = make_state(f0, config.regime, config.kernel, t=t0)
    record = TrajectoryRecord(config=config.to_dict())
    mass0 = state.mass
    linf0 = linf_norm(f0)
    t_end = t0 + config.t_end
    dump_dir = Path(out_dir) if out_dir is not None and config.dump_every else None
    log.info(
        f"Run start: {config.regime}, M={mass0:.6g}, n={config.n}, "
        f"L={config.half_width}, "
        f"dt={config.dt:g}, t_end={config.t_end:g}, kernel={config.kernel}"
    )

    def sample(s: SimState) -> None:
        record.append(diagnostics(s))
        if observer is not None:
            observer(s)

    def dump(s: SimState) -> None:
        if dump_dir is not None:
            save_field(s.f, dump_dir / f"field_{s.steps:07d}", time=s.t)

    sample(state)
    dump(state)
    try:
        while t_end - state.t > 1e-12 * max(1.0, t_end):
            dt = min(config.dt, t_end - state.t)
            state = _advance(state, dt, config, integrator)
            if linf0 > 0 and linf_norm(state.f) > config.blowup_linf_factor * linf0:
                raise BlowupOrInstability(
                    "linf",
                    state,
                    state.t,
                    f"linf grew beyond {config.blowup_linf_factor:g} x initial",
                )
            last = t_end - state.t <= 1e-12 * max(1.0, t_end)
            if state.steps % config.record_every == 0 or last:
                sample(state)
            if config.dump_every and state.steps % config.dump_every == 0:
                dump(state)
    except BlowupOrInstability as exc:
        if mass0 <= CRITICAL_MASS:
            log.error(f"Instability at subcritical mass: {exc}")
            raise
        if not _is_blowup(exc, config):
            log.error(f"Instability before blow-up: {exc}")
            raise
        log.info(f"Blow-up detected ({exc.reason}) at t = {exc.time:.6g}")
        record.blowup_time = exc.time
        record.blowup_reason = exc.reason
        state = exc.state
        if not record.rows or state.t > record.rows[-1]["t"]:
            sample(state)
    record.final_state = state
    log.info(f"Run end: t={state.t:.6g}, steps={state.steps}, samples={len(record)}")
    return record


def short_time_l43(config: SimConfig) -> pd.DataFrame:
    """Series ``(t, t^(1/4) ||f(t)||_4/3)`` of a physical run."""
    if config.regime != "physical":
        raise ValueError("short_time_l43 needs the physical regime")
    frame = run(config).to_frame()
    return frame[["t", "t14l43"]].reset_index(drop=True)


def rescaled_time(t: float) -> float:
    """``s = log(1 + 2 t) / 2`` for physical time ``t``."""
    return 0.5 * math.log1p(2.0 * t)


def physical_time(s: float) -> float:
    """``t = (exp(2 s) - 1) / 2`` for rescaled time ``s``."""
    return 0.5 * math.expm1(2.0 * s)


def physical_to_rescaled(f: Field2D, t: float, grid: Grid2D) -> Field2D:
    """Map a physical density at time ``t`` to ``g(x) = R^2 f(R x)``.

    The scale is ``R = sqrt(1 + 2t)``.

    When ``f`` lives on a grid of half width ``R L`` with the target ``n``, cell centers
    correspond exactly and no interpolation is used.
    """
    R = math.sqrt(1.0 + 2.0 * t)
    label = f"rescaled({f.label}, t={t:.6g})"
    if f.grid.n == grid.n and math.isclose(
        f.grid.half_width, R * grid.half_width, rel_tol=1e-12
    ):
        return Field2D(grid, R * R * f.values, label)
    x1, x2 = grid.mesh
    return Field2D(grid, R * R * f.sample(R * x1, R * x2), label)


def save_summary(record: TrajectoryRecord, path: Union[str, Path]) -> Path:
    """Write :meth:`TrajectoryRecord.summary` as JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(record.summary(), fh, indent=2)
    log.info(f"Summary saved: {path}")
    return path
