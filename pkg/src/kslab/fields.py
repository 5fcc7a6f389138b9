"""Grids, sampled densities, quadrature and weighted Lebesgue norms.

Everything here is an immutable value. Planar fields live on the cell centers of a
uniform square grid on ``[-L, L]^2``; radial fields live on uniform nodes
``r_i = i * dr`` with composite Simpson weights for ``int phi(r) 2 pi r dr``.
"""

import json
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from functools import lru_cache
from pathlib import Path
from typing import Any
from typing import Dict
from typing import Optional
from typing import Sequence
from typing import Tuple
from typing import Union

import numpy as np
from numpy.typing import NDArray
from scipy import fft as sp_fft
from scipy.interpolate import CubicSpline
from scipy.ndimage import map_coordinates


log = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
ComplexArray = NDArray[np.complex128]

MIN_CELLS = 16
GAUSSIAN_MARGIN = 6.0
DEFAULT_RADIAL_NODES = 2048


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _frozen(values: Any) -> FloatArray:
    array = np.array(values, dtype=np.float64)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Grid2D:
    """Uniform ``n x n`` cell grid on ``[-L, L]^2``.

    Axis 0 of every sampled array is ``x_1`` and axis 1 is ``x_2``.
    """

    n: int
    half_width: float

    def __post_init__(self) -> None:
        """Validate the grid contract."""
        if (
            isinstance(self.n, bool)
            or int(self.n) != self.n
            or self.n < MIN_CELLS
            or not _is_power_of_two(int(self.n))
        ):
            raise ValueError(f"n must be a power of two >= {MIN_CELLS}, got {self.n}")
        if not math.isfinite(self.half_width) or self.half_width <= 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "half_width", float(self.half_width))

    @property
    def spacing(self) -> float:
        """Cell width h = 2L/n."""
        return 2.0 * self.half_width / self.n

    @property
    def cell_area(self) -> float:
        return self.spacing**2

    @cached_property
    def centers(self) -> FloatArray:
        """One-dimensional cell-center coordinates."""
        h = self.spacing
        return _frozen(-self.half_width + (np.arange(self.n) + 0.5) * h)

    @cached_property
    def mesh(self) -> Tuple[FloatArray, FloatArray]:
        x1, x2 = np.meshgrid(self.centers, self.centers, indexing="ij")
        return _frozen(x1), _frozen(x2)

    @cached_property
    def radius(self) -> FloatArray:
        x1, x2 = self.mesh
        return _frozen(np.hypot(x1, x2))

    def bracket(self, k: float) -> FloatArray:
        """Weight ``<x>^k = (1 + |x|^2)^(k/2)`` at the cell centers."""
        r = self.radius
        return np.asarray((1.0 + r**2) ** (0.5 * k), dtype=np.float64)


def make_grid(n: int, L: float) -> Grid2D:
    """Build a validated grid with ``n`` cells per side on ``[-L, L]^2``.

    Args:
        n: Cells per side, a power of two not below 16
        L: Half width of the square

    Returns:
        The grid

    Raises:
        ValueError: If ``n`` is not an admissible power of two or ``L <= 0``
    """
    return Grid2D(n=n, half_width=L)


@dataclass(frozen=True, eq=False)
class Field2D:
    """Real samples of a planar function at the cell centers of a grid."""

    grid: Grid2D
    values: FloatArray
    label: str = ""

    def __post_init__(self) -> None:
        """Copy, freeze and validate the samples."""
        values = np.array(self.values, dtype=np.float64)
        shape = (self.grid.n, self.grid.n)
        if values.shape != shape:
            raise ValueError(
                f"field values must have shape {shape}, got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError(f"field '{self.label}' has non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid2D, label: str = "zero") -> "Field2D":
        return cls(grid, np.zeros((grid.n, grid.n)), label)

    def with_values(self, values: Any, label: Optional[str] = None) -> "Field2D":
        """Return a field on the same grid with new samples."""
        return Field2D(self.grid, values, self.label if label is None else label)

    def _operand(self, other: Union["Field2D", float]) -> Any:
        if isinstance(other, Field2D):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            return other.values
        return float(other)

    def __add__(self, other: Union["Field2D", float]) -> "Field2D":
        return self.with_values(self.values + self._operand(other))

    def __radd__(self, other: float) -> "Field2D":
        return self.__add__(other)

    def __sub__(self, other: Union["Field2D", float]) -> "Field2D":
        return self.with_values(self.values - self._operand(other))

    def __mul__(self, other: Union["Field2D", float]) -> "Field2D":
        return self.with_values(self.values * self._operand(other))

    def __rmul__(self, other: float) -> "Field2D":
        return self.__mul__(other)

    def __truediv__(self, other: float) -> "Field2D":
        return self.with_values(self.values / float(other))

    def __neg__(self) -> "Field2D":
        return self.with_values(-self.values)

    def sample(self, x1: Any, x2: Any, order: int = 3) -> FloatArray:
        """Spline-interpolate the field at arbitrary points, zero outside the box."""
        h = self.grid.spacing
        rows = (np.asarray(x1, dtype=np.float64) + self.grid.half_width) / h - 0.5
        cols = (np.asarray(x2, dtype=np.float64) + self.grid.half_width) / h - 0.5
        coords = np.stack([rows.ravel(), cols.ravel()])
        out = map_coordinates(
            self.values, coords, order=order, mode="grid-constant", cval=0.0
        )
        return np.asarray(out, dtype=np.float64).reshape(rows.shape)


@dataclass(frozen=True)
class RadialGrid:
    """Uniform radial nodes ``r_i = i * r_max / size`` for ``i = 1..size``.

    The weights integrate ``phi(r) 2 pi r`` over ``(0, r_max]`` by composite Simpson
    on the node set extended with ``r = 0``, where the integrand vanishes.
    """

    r_max: float
    size: int = DEFAULT_RADIAL_NODES

    def __post_init__(self) -> None:
        """Validate the node count and the radius."""
        if not math.isfinite(self.r_max) or self.r_max <= 0:
            raise ValueError(f"r_max must be positive, got {self.r_max}")
        if int(self.size) != self.size or self.size < 4 or self.size % 2:
            raise ValueError(f"size must be an even count >= 4, got {self.size}")
        object.__setattr__(self, "r_max", float(self.r_max))
        object.__setattr__(self, "size", int(self.size))

    @property
    def spacing(self) -> float:
        return self.r_max / self.size

    @cached_property
    def nodes(self) -> FloatArray:
        return _frozen(self.spacing * np.arange(1, self.size + 1))

    @cached_property
    def weights(self) -> FloatArray:
        index = np.arange(1, self.size + 1)
        simpson = np.where(index % 2 == 1, 4.0, 2.0)
        simpson[-1] = 1.0
        return _frozen(self.spacing / 3.0 * simpson * 2.0 * math.pi * self.nodes)


def make_radial_grid(
    mass: Optional[float] = None,
    r_max: Optional[float] = None,
    size: int = DEFAULT_RADIAL_NODES,
) -> RadialGrid:
    """Radial grid reaching ``8 + 2 sqrt(M)`` unless ``r_max`` is given."""
    if r_max is None:
        r_max = 8.0 + 2.0 * math.sqrt(max(mass or 0.0, 0.0))
    return RadialGrid(r_max=r_max, size=size)


@dataclass(frozen=True, eq=False)
class RadialField:
    """Samples of a radial function at the nodes of a radial grid."""

    rgrid: RadialGrid
    values: FloatArray
    label: str = ""

    def __post_init__(self) -> None:
        """Copy, freeze and validate the samples."""
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (self.rgrid.size,):
            raise ValueError(
                f"radial values must have shape ({self.rgrid.size},), "
                f"got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError(f"radial field '{self.label}' has non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def nodes(self) -> FloatArray:
        return self.rgrid.nodes

    def with_values(self, values: Any, label: Optional[str] = None) -> "RadialField":
        return RadialField(self.rgrid, values, self.label if label is None else label)

    def _operand(self, other: Union["RadialField", float]) -> Any:
        if isinstance(other, RadialField):
            if other.rgrid != self.rgrid:
                raise ValueError("radial fields live on different grids")
            return other.values
        return float(other)

    def __add__(self, other: Union["RadialField", float]) -> "RadialField":
        return self.with_values(self.values + self._operand(other))

    def __sub__(self, other: Union["RadialField", float]) -> "RadialField":
        return self.with_values(self.values - self._operand(other))

    def __mul__(self, other: Union["RadialField", float]) -> "RadialField":
        return self.with_values(self.values * self._operand(other))

    def __rmul__(self, other: float) -> "RadialField":
        return self.__mul__(other)

    def __truediv__(self, other: float) -> "RadialField":
        return self.with_values(self.values / float(other))

    def __neg__(self) -> "RadialField":
        return self.with_values(-self.values)

    @cached_property
    def _spline(self) -> CubicSpline:
        # even extension through r = 0 keeps the spline regular at the origin
        r = self.rgrid.nodes
        x = np.concatenate((-r[::-1], r))
        y = np.concatenate((self.values[::-1], self.values))
        return CubicSpline(x, y)

    def evaluate(self, r: Any, outside: Optional[float] = None) -> FloatArray:
        """Cubic interpolation in ``r``.

        Args:
            r: Radii (any shape, nonnegative)
            outside: Fill value beyond ``r_max``; ``None`` makes that an error

        Returns:
            Interpolated values with the shape of ``r``

        Raises:
            ValueError: If some radius exceeds ``r_max`` and no fill value is given
        """
        radii = np.abs(np.asarray(r, dtype=np.float64))
        beyond = radii > self.rgrid.r_max * (1.0 + 1e-12)
        if np.any(beyond) and outside is None:
            raise ValueError(
                f"radius {float(radii.max()):.4g} is beyond "
                f"r_max = {self.rgrid.r_max:.4g}"
            )
        out = np.asarray(self._spline(np.minimum(radii, self.rgrid.r_max)))
        if outside is not None:
            out = np.where(beyond, outside, out)
        return np.asarray(out, dtype=np.float64)


Density = Union[Field2D, RadialField]


def quadrature(f: Density, values: Any) -> float:
    """Integrate samples living on the nodes of ``f`` with the grid's rule."""
    if isinstance(f, Field2D):
        return float(f.grid.cell_area * np.sum(values))
    return float(np.dot(f.rgrid.weights, values))


def _radius(f: Density) -> FloatArray:
    if isinstance(f, Field2D):
        return f.grid.radius
    return f.rgrid.nodes


def integrate(f: Density) -> float:
    """Mass ``int f`` by cell-center (planar) or Simpson (radial) quadrature."""
    return quadrature(f, f.values)


def moment(f: Density, k: float) -> float:
    """Moment ``int f |x|^k``."""
    if k < 0:
        raise ValueError(f"moment exponent must be nonnegative, got {k}")
    return quadrature(f, f.values * _radius(f) ** k)


def lp_norm(f: Density, p: float, k: float = 0.0) -> float:
    """Weighted norm ``|| f <x>^k ||_p`` for ``1 <= p < inf``."""
    if not 1.0 <= p < math.inf:
        raise ValueError(f"p must lie in [1, inf), got {p}")
    if k < 0:
        raise ValueError(f"weight exponent must be nonnegative, got {k}")
    weighted = np.abs(f.values) * (1.0 + _radius(f) ** 2) ** (0.5 * k)
    return quadrature(f, weighted**p) ** (1.0 / p)


def linf_norm(f: Density) -> float:
    return float(np.max(np.abs(f.values)))


def gaussian_datum(
    grid: Grid2D,
    M: float,
    sigma: float,
    center: Sequence[float] = (0.0, 0.0),
    label: Optional[str] = None,
) -> Field2D:
    """Samples of ``M (2 pi sigma^2)^-1 exp(-|x - c|^2 / 2 sigma^2)``.

    Raises:
        ValueError: If ``M`` or ``sigma`` is not positive, or the center sits closer
            than six standard deviations to the edge of the box
    """
    if M <= 0:
        raise ValueError(f"mass must be positive, got {M}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    c1, c2 = (float(c) for c in center)
    margin = grid.half_width - max(abs(c1), abs(c2))
    if margin < GAUSSIAN_MARGIN * sigma:
        raise ValueError(
            f"center ({c1}, {c2}) leaves margin {margin:.4g} < {GAUSSIAN_MARGIN} sigma "
            f"= {GAUSSIAN_MARGIN * sigma:.4g}"
        )
    x1, x2 = grid.mesh
    r2 = (x1 - c1) ** 2 + (x2 - c2) ** 2
    values = M / (2.0 * math.pi * sigma**2) * np.exp(-r2 / (2.0 * sigma**2))
    return Field2D(grid, values, label or f"gaussian(M={M:.6g}, sigma={sigma:.6g})")


def gaussian_mixture(
    grid: Grid2D,
    masses: Sequence[float],
    sigmas: Sequence[float],
    centers: Sequence[Sequence[float]],
) -> Field2D:
    """Sum of Gaussian data, each subject to the margin rule."""
    if not len(masses) == len(sigmas) == len(centers) or not masses:
        raise ValueError("masses, sigmas and centers must be nonempty and aligned")
    total = Field2D.zeros(grid)
    for M, sigma, center in zip(masses, sigmas, centers):
        total = total + gaussian_datum(grid, M, sigma, center)
    return total.with_values(total.values, f"mixture({len(masses)})")


def radial_to_2d(
    g: RadialField,
    grid: Grid2D,
    outside: Optional[float] = None,
    label: Optional[str] = None,
) -> Field2D:
    """Sample a radial function at the cell centers of ``grid`` (cubic in ``r``)."""
    values = g.evaluate(grid.radius, outside=outside)
    return Field2D(grid, values, label or g.label)


def radial_project(
    f: Field2D,
    rgrid: RadialGrid,
    mode: int = 0,
    angles: int = 128,
    order: int = 5,
) -> RadialField:
    """Angular Fourier coefficient of a planar field on circles of radius ``r_i``.

    ``mode = 0`` gives the angular average; ``mode = m >= 1`` gives
    ``(1/pi) int f(r, theta) cos(m theta) d theta``. Circles leaving the box see zeros.
    """
    if mode < 0:
        raise ValueError(f"mode must be nonnegative, got {mode}")
    theta = 2.0 * math.pi * np.arange(angles) / angles
    r = rgrid.nodes[:, None]
    samples = f.sample(r * np.cos(theta), r * np.sin(theta), order=order)
    if mode == 0:
        values = samples.mean(axis=1)
    else:
        values = 2.0 * (samples * np.cos(mode * theta)).mean(axis=1)
    return RadialField(rgrid, values, f"{f.label}|mode{mode}")


@lru_cache(maxsize=16)
def derivative_wavenumbers(grid: Grid2D) -> Tuple[FloatArray, FloatArray]:
    """Wavenumbers for spectral first derivatives on the periodic box.

    Shapes ``(n, 1)`` and ``(1, n//2 + 1)`` match ``rfft2`` output; the Nyquist modes
    are zeroed so odd derivatives of real data stay real.
    """
    n, h = grid.n, grid.spacing
    k1 = 2.0 * math.pi * np.fft.fftfreq(n, d=h)
    k2 = 2.0 * math.pi * np.fft.rfftfreq(n, d=h)
    k1[n // 2] = 0.0
    k2[-1] = 0.0
    return _frozen(k1[:, None]), _frozen(k2[None, :])


@lru_cache(maxsize=16)
def laplacian_symbol(grid: Grid2D) -> FloatArray:
    """``|k|^2`` on the ``rfft2`` layout, Nyquist modes included."""
    n, h = grid.n, grid.spacing
    k1 = 2.0 * math.pi * np.fft.fftfreq(n, d=h)
    k2 = 2.0 * math.pi * np.fft.rfftfreq(n, d=h)
    return _frozen(k1[:, None] ** 2 + k2[None, :] ** 2)


def spectral_gradient(f: Field2D) -> Tuple[FloatArray, FloatArray]:
    """Fourier-collocation gradient of a field on the periodic box."""
    k1, k2 = derivative_wavenumbers(f.grid)
    spectrum = sp_fft.rfft2(f.values)
    shape = f.values.shape
    g1 = sp_fft.irfft2(1j * k1 * spectrum, s=shape)
    g2 = sp_fft.irfft2(1j * k2 * spectrum, s=shape)
    return np.asarray(g1, dtype=np.float64), np.asarray(g2, dtype=np.float64)


def _write_dump(values: FloatArray, path: Path, meta: Dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    bin_path = path.with_suffix(".bin")
    np.ascontiguousarray(values, dtype="<f8").tofile(bin_path)
    with open(path.with_suffix(".json"), "w") as fh:
        json.dump(meta, fh, indent=2)
    log.debug(f"Dump written: {bin_path}")
    return bin_path


def save_field(
    f: Field2D, path: Union[str, Path], time: Optional[float] = None
) -> Path:
    """Write ``<path>.bin`` (little-endian float64, row-major) and ``<path>.json``."""
    meta = {"n": f.grid.n, "L": f.grid.half_width, "label": f.label, "time": time}
    return _write_dump(f.values, Path(path), meta)


def load_field(path: Union[str, Path]) -> Tuple[Field2D, Optional[float]]:
    """Read a planar dump written by :func:`save_field`.

    Returns:
        The field and its recorded time (``None`` when absent)
    """
    path = Path(path)
    with open(path.with_suffix(".json")) as fh:
        meta = json.load(fh)
    grid = make_grid(int(meta["n"]), float(meta["L"]))
    values = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
    if values.size != grid.n**2:
        raise ValueError(
            f"dump {path} holds {values.size} values, expected {grid.n ** 2}"
        )
    time = meta.get("time")
    field = Field2D(grid, values.reshape(grid.n, grid.n), str(meta.get("label", "")))
    return field, None if time is None else float(time)


def save_radial(g: RadialField, path: Union[str, Path]) -> Path:
    meta = {"size": g.rgrid.size, "r_max": g.rgrid.r_max, "label": g.label}
    return _write_dump(g.values, Path(path), meta)


def load_radial(path: Union[str, Path]) -> RadialField:
    path = Path(path)
    with open(path.with_suffix(".json")) as fh:
        meta = json.load(fh)
    rgrid = RadialGrid(r_max=float(meta["r_max"]), size=int(meta["size"]))
    values = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
    return RadialField(rgrid, values, str(meta.get("label", "")))
