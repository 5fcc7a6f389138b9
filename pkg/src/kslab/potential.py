"""Free-space logarithmic-kernel convolution and its radial closed forms.

The planar log kernel is ``kappa(z) = log|z| / 2 pi`` and its gradient
``K(z) = z / (2 pi |z|^2)``. For a density ``f`` this module returns the potential
``kappa * f`` and the field ``K * f``; the chemical concentration is ``c = -kappa * f``
so ``K * f = -grad c``.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy import fft as sp_fft
from scipy.integrate import cumulative_simpson
from scipy.special import j0
from scipy.special import j1

from .fields import Field2D
from .fields import FloatArray
from .fields import Grid2D
from .fields import RadialField
from .fields import integrate


log = logging.getLogger(__name__)

CRITICAL_MASS = 8.0 * math.pi

# average of log|z| over the unit square centered at the origin
KERNEL_ORIGIN_OFFSET = math.pi / 4.0 - 1.5 - 0.5 * math.log(2.0)

KERNELS = ("hockney", "spectral")

# spectral path: padding factor and truncation radius in units of L
SPECTRAL_PADDING = 3
TRUNCATION_FACTOR = 2.0 * math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class PotentialPair:
    """Potential ``kappa * f`` and the components of ``K * f`` on the grid of ``f``."""

    potential: Field2D
    velocity_x: Field2D
    velocity_y: Field2D
    kernel: str
    source_mass: float

    @property
    def grid(self) -> Grid2D:
        return self.potential.grid

    @property
    def speed(self) -> FloatArray:
        """Pointwise magnitude ``|K * f|``."""
        return np.asarray(
            np.hypot(self.velocity_x.values, self.velocity_y.values), dtype=np.float64
        )


def origin_cell_average(h: float) -> float:
    """Mean of ``log|z| / 2 pi`` over the ``h x h`` cell centered at the origin."""
    return (math.log(h) + KERNEL_ORIGIN_OFFSET) / (2.0 * math.pi)


@lru_cache(maxsize=8)
def _hockney_spectra(grid: Grid2D) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, h = grid.n, grid.spacing
    m = 2 * n
    offsets = np.fft.fftfreq(m, d=1.0 / m) * h
    z1, z2 = np.meshgrid(offsets, offsets, indexing="ij")
    r2 = z1**2 + z2**2
    r2[0, 0] = 1.0
    kappa = np.log(r2) / (4.0 * math.pi)
    kappa[0, 0] = origin_cell_average(h)
    k1 = z1 / (2.0 * math.pi * r2)
    k2 = z2 / (2.0 * math.pi * r2)
    k1[0, 0] = 0.0
    k2[0, 0] = 0.0
    scale = h * h
    spectra = tuple(scale * sp_fft.rfft2(kernel) for kernel in (kappa, k1, k2))
    log.debug(f"Hockney kernels built for n={n}, h={h:.4g}")
    return spectra[0], spectra[1], spectra[2]


@lru_cache(maxsize=8)
def _spectral_symbols(grid: Grid2D) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, h = grid.n, grid.spacing
    m = SPECTRAL_PADDING * n
    radius = TRUNCATION_FACTOR * grid.half_width
    q1 = 2.0 * math.pi * np.fft.fftfreq(m, d=h)
    q2 = 2.0 * math.pi * np.fft.rfftfreq(m, d=h)
    k1, k2 = np.meshgrid(q1, q2, indexing="ij")
    k = np.hypot(k1, k2)
    safe = np.where(k > 0, k, 1.0)
    kr = safe * radius
    symbol = radius * math.log(radius) * j1(kr) / safe + (j0(kr) - 1.0) / safe**2
    symbol[0, 0] = 0.5 * radius**2 * (math.log(radius) - 0.5)
    d1 = k1.copy()
    d2 = k2.copy()
    d1[m // 2, :] = 0.0
    d2[:, -1] = 0.0
    log.debug(f"Truncated log-kernel symbol built for n={n}, R={radius:.4g}")
    return symbol, 1j * d1 * symbol, 1j * d2 * symbol


def log_kernel_convolve(f: Field2D, kernel: str = "hockney") -> PotentialPair:
    """Free-space convolution of ``f`` with the log kernel and its gradient.

    ``"hockney"`` zero-pads to ``(2n)^2`` and convolves with the sampled kernel, the
    origin cell carrying the cell average of the log. ``"spectral"`` zero-pads to
    ``(3n)^2`` and multiplies by the exact transform of the kernel truncated at
    radius ``2 sqrt(2) L``, which covers every pair of points in the box.

    Args:
        f: Source density
        kernel: ``"hockney"`` or ``"spectral"``

    Returns:
        The potential ``kappa * f`` and the field ``K * f``

    Raises:
        ValueError: If ``kernel`` is unknown or ``f`` holds non-finite samples
    """
    if kernel not in KERNELS:
        raise ValueError(f"kernel must be one of {KERNELS}, got '{kernel}'")
    if not np.all(np.isfinite(f.values)):
        raise ValueError("cannot convolve a field with non-finite values")

    grid = f.grid
    n = grid.n
    if kernel == "hockney":
        spectra = _hockney_spectra(grid)
        size = 2 * n
    else:
        spectra = _spectral_symbols(grid)
        size = SPECTRAL_PADDING * n

    padded = np.zeros((size, size))
    padded[:n, :n] = f.values
    source = sp_fft.rfft2(padded)
    shape = (size, size)
    outputs = [
        sp_fft.irfft2(spectrum * source, s=shape)[:n, :n]
        for spectrum in spectra
    ]
    return PotentialPair(
        potential=Field2D(grid, outputs[0], f"kappa*{f.label}"),
        velocity_x=Field2D(grid, outputs[1], f"K1*{f.label}"),
        velocity_y=Field2D(grid, outputs[2], f"K2*{f.label}"),
        kernel=kernel,
        source_mass=integrate(f),
    )


def enclosed_mass(g: RadialField) -> FloatArray:
    """Cumulative mass ``m(r_i) = int_{|x| < r_i} g`` at every node."""
    r = np.concatenate(([0.0], g.rgrid.nodes))
    integrand = np.concatenate(([0.0], 2.0 * math.pi * r[1:] * g.values))
    cum = cumulative_simpson(integrand, x=r, initial=0.0)
    return np.asarray(cum[1:], dtype=np.float64)


def radial_log_potential(g: RadialField) -> RadialField:
    """Radial potential of ``g``.

    ``(kappa * g)(r) = [log r m(r) + int_r^inf log s g 2 pi s ds] / 2 pi``.
    """
    r = np.concatenate(([0.0], g.rgrid.nodes))
    inner = enclosed_mass(g)
    # s log s -> 0 at the origin
    tail_integrand = np.zeros_like(r)
    tail_integrand[1:] = 2.0 * math.pi * r[1:] * np.log(r[1:]) * g.values
    cum = cumulative_simpson(tail_integrand, x=r, initial=0.0)[1:]
    values = (np.log(g.rgrid.nodes) * inner + (cum[-1] - cum)) / (2.0 * math.pi)
    return RadialField(g.rgrid, values, f"kappa*{g.label}")


def radial_attraction(g: RadialField) -> RadialField:
    """Radial component of ``K * g``, namely ``m(r) / (2 pi r)``."""
    values = enclosed_mass(g) / (2.0 * math.pi * g.rgrid.nodes)
    return RadialField(g.rgrid, values, f"K*{g.label}")
