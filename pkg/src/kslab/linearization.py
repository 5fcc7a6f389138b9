"""Linearized rescaled operator around a self-similar profile, per angular mode.

Around ``G`` the linearization reads::

    Lambda h = div(G grad(h / G + kappa*h))

For ``h = h_m(r) cos(m theta)`` this is discretized by finite volumes on the nodes of
the profile's radial grid. Cells are annuli ``[r_i - dr/2, r_i + dr/2]`` of volume
``2 pi r_i dr``; mode 0 adds the centre disk of radius ``dr/2``. Face values of ``G``
are geometric means, and the outer boundary is Dirichlet.
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
from typing import Union

import numpy as np
import scipy.linalg

from .fields import Field2D
from .fields import FloatArray
from .fields import RadialField
from .fields import RadialGrid
from .fields import integrate
from .fields import radial_to_2d
from .potential import radial_log_potential
from .profile import ProfileResult
from .profile import d_profile_dM
from .profile import profile_gradient


log = logging.getLogger(__name__)

IMAG_TOLERANCE = 1e-6
DEFAULT_DM_FRACTION = 1e-3


class EigenSolveError(RuntimeError):
    """The dense eigen-solver failed."""


def _mode_kernel(
    targets: FloatArray, nodes: FloatArray, m: int, dr: float
) -> FloatArray:
    """Matrix of ``-(1/2m) (r_< / r_>)^m s ds`` mapping node values to ``targets``."""
    t = targets[:, None]
    s = nodes[None, :]
    ratio = np.minimum(t, s) / np.maximum(t, s)
    return np.asarray(-(ratio**m) * s * dr / (2.0 * m), dtype=np.float64)


def mode_potential(h: RadialField, m: int) -> RadialField:
    """Angular mode ``m`` of ``kappa * (h(r) cos(m theta))`` over ``cos(m theta)``.

    Mode 0 is the radial potential; for ``m >= 1`` the coefficient is
    ``-(1/2m) int (r_< / r_>)^m h(s) s ds``.
    """
    if m < 0:
        raise ValueError(f"mode must be nonnegative, got {m}")
    if m == 0:
        return radial_log_potential(h)
    nodes = h.rgrid.nodes
    values = _mode_kernel(nodes, nodes, m, h.rgrid.spacing) @ h.values
    return RadialField(h.rgrid, values, f"kappa_{m}*{h.label}")


@dataclass(frozen=True, eq=False)
class LinearizedOperator:
    """Dense matrix of the mode-``m`` operator acting on cell values of ``h``."""

    mode: int
    mass: float
    matrix: FloatArray
    radii: FloatArray
    volumes: FloatArray
    profile_values: FloatArray
    rgrid: RadialGrid

    @property
    def size(self) -> int:
        return int(self.matrix.shape[0])

    def cell_values(self, h: Union[RadialField, FloatArray]) -> FloatArray:
        """Values of ``h`` on the cells; mode 0 adds the centre value."""
        if isinstance(h, RadialField):
            if h.rgrid != self.rgrid:
                raise ValueError(
                    "radial field lives on a different grid than the operator"
                )
            values = np.asarray(h.values)
            if self.mode == 0:
                values = np.concatenate(([float(h.evaluate(0.0))], values))
            return values
        values = np.asarray(h, dtype=np.float64)
        if values.shape != (self.size,):
            raise ValueError(f"expected {self.size} cell values, got {values.shape}")
        return values

    def apply(self, h: Union[RadialField, FloatArray]) -> FloatArray:
        return np.asarray(self.matrix @ self.cell_values(h))

    def weighted_norm(self, v: Union[RadialField, FloatArray]) -> float:
        """Norm of ``L^2(G^-1)``: ``sqrt(sum V v^2 / G)``."""
        values = self.cell_values(v)
        return math.sqrt(float(np.sum(self.volumes * values**2 / self.profile_values)))

    def similarity(self) -> FloatArray:
        """Diagonal ``D = sqrt(G / V)`` that symmetrizes the local part."""
        return np.asarray(np.sqrt(self.profile_values / self.volumes))

    def symmetrized(self) -> Tuple[FloatArray, FloatArray]:
        """``S = D^-1 A D`` and ``D``."""
        d = self.similarity()
        return self.matrix * d[None, :] / d[:, None], d

    def to_radial(self, v: FloatArray, label: str = "") -> RadialField:
        """Drop the centre cell (mode 0) and wrap node values as a radial field."""
        values = np.asarray(v)
        if self.mode == 0:
            values = values[1:]
        return RadialField(self.rgrid, values, label)


def assemble_linearized(profile: ProfileResult, m: int) -> LinearizedOperator:
    """Finite-volume matrix of the linearized operator in angular mode ``m``.

    Mode 0 carries the nonlocal term as the Gauss flux ``G m_h(r)`` of the enclosed
    mass of ``h``. Modes ``m >= 1`` carry it through the potential
    ``U = h / G + (kappa * h)_m`` and the angular term ``-m^2 G U / r^2``.

    Raises:
        ValueError: If ``m < 0`` or the profile did not converge
    """
    if m < 0:
        raise ValueError(f"mode must be nonnegative, got {m}")
    if not profile.converged:
        raise ValueError(
            f"profile residual {profile.residual_l1:.3e} exceeds tol {profile.tol:.3e}"
        )
    rgrid = profile.rgrid
    dr = rgrid.spacing
    r = rgrid.nodes
    G = profile.G.values
    n = r.size
    log_g = np.log(G)
    g_center = math.exp((4.0 * log_g[0] - log_g[1]) / 3.0)
    g_ghost = math.exp(2.0 * log_g[-1] - log_g[-2])
    g_nodes = np.concatenate(([g_center], G, [g_ghost]))
    g_faces = np.sqrt(g_nodes[:-1] * g_nodes[1:])
    faces = (np.arange(n + 1) + 0.5) * dr
    conductance = 2.0 * math.pi * faces * g_faces / dr

    if m == 0:
        radii = np.concatenate(([0.0], r))
        volumes = np.concatenate(([math.pi * (0.5 * dr) ** 2], 2.0 * math.pi * r * dr))
        cells = g_nodes[:-1]
        size = n + 1
        difference = np.zeros((size, size))
        idx = np.arange(size)
        difference[idx, idx] = -1.0
        difference[idx[:-1], idx[:-1] + 1] = 1.0
        local = conductance[:, None] * difference / cells[None, :]
        enclosed = np.tril(np.ones((size, size))) * volumes[None, :]
        flux = local + g_faces[:, None] * enclosed
        divergence = flux.copy()
        divergence[1:] -= flux[:-1]
        matrix = divergence / volumes[:, None]
    else:
        radii = r
        volumes = 2.0 * math.pi * r * dr
        cells = G
        targets = np.concatenate((r, [r[-1] + dr]))
        kernel = _mode_kernel(targets, r, m, dr)
        potential = np.zeros((n + 2, n))
        potential[1 : n + 1] = np.diag(1.0 / G) + kernel[:n]
        potential[n + 1] = kernel[n]
        flux = conductance[:, None] * (potential[1:] - potential[:-1])
        matrix = (flux[1:] - flux[:-1]) / volumes[:, None]
        matrix -= (m * m * G / r**2)[:, None] * potential[1 : n + 1]

    if not np.all(np.isfinite(matrix)):
        raise ValueError(f"mode-{m} operator has non-finite entries")
    return LinearizedOperator(
        mode=m,
        mass=profile.mass,
        matrix=np.asarray(matrix, dtype=np.float64),
        radii=np.asarray(radii, dtype=np.float64),
        volumes=np.asarray(volumes, dtype=np.float64),
        profile_values=np.asarray(cells, dtype=np.float64),
        rgrid=rgrid,
    )


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    """Rightmost eigenpairs of one mode, sorted by descending real part."""

    mode: int
    mass: float
    eigenvalues: FloatArray
    imaginary_parts: FloatArray
    eigenvectors: Tuple[RadialField, ...]
    residuals: FloatArray

    @property
    def max_imag(self) -> float:
        if not self.imaginary_parts.size:
            return 0.0
        return float(np.max(np.abs(self.imaginary_parts)))

    def summary(self) -> Dict[str, Any]:
        return {
            "mode": self.mode,
            "mass": self.mass,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "imaginary_parts": [float(v) for v in self.imaginary_parts],
            "residuals": [float(v) for v in self.residuals],
            "max_imag": self.max_imag,
            "nodes": self.eigenvectors[0].rgrid.size if self.eigenvectors else 0,
        }


def eigen_spectrum(op: LinearizedOperator, count: int = 6) -> SpectrumResult:
    """The ``count`` rightmost eigenpairs by a dense solve of ``S = D^-1 A D``.

    Eigenvectors come back as ``v = D y`` with ``||y|| = 1``, so their
    ``L^2(G^-1)`` norm is one; the residual is ``||S y - lambda y||``.

    Raises:
        ValueError: If ``count`` is not positive
        EigenSolveError: If the dense solver fails
    """
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    S, d = op.symmetrized()
    try:
        values, vectors = scipy.linalg.eig(S)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise EigenSolveError(f"mode-{op.mode} eigen-solve failed: {exc}") from exc
    order = np.argsort(-values.real)[: min(count, values.size)]
    values = values[order]
    vectors = vectors[:, order]
    residuals = np.linalg.norm(S @ vectors - vectors * values[None, :], axis=0)
    residuals /= np.linalg.norm(vectors, axis=0)
    imag = np.asarray(values.imag, dtype=np.float64)
    if imag.size and np.max(np.abs(imag)) > IMAG_TOLERANCE:
        log.warning(
            f"Mode {op.mode}: eigenvalues with imaginary parts up to "
            f"{np.max(np.abs(imag)):.2e}"
        )
    eigenvectors = []
    for j in range(values.size):
        y = vectors[:, j].real
        y = y / np.linalg.norm(y)
        # sign convention: largest component positive
        if y[np.argmax(np.abs(y))] < 0:
            y = -y
        eigenvectors.append(op.to_radial(d * y, f"mode{op.mode}_eig{j}"))
    log.info(
        f"Mode {op.mode} spectrum (M={op.mass:.6g}): "
        + ", ".join(f"{v:.6f}" for v in values.real)
    )
    return SpectrumResult(
        mode=op.mode,
        mass=op.mass,
        eigenvalues=np.asarray(values.real, dtype=np.float64),
        imaginary_parts=imag,
        eigenvectors=tuple(eigenvectors),
        residuals=np.asarray(residuals, dtype=np.float64),
    )


def _mode_spectrum(args: Tuple[ProfileResult, int, int]) -> SpectrumResult:
    profile, m, count = args
    return eigen_spectrum(assemble_linearized(profile, m), count)


def spectrum_for_modes(
    profile: ProfileResult, modes: Sequence[int], count: int = 6, jobs: int = 1
) -> List[SpectrumResult]:
    """Spectra of several modes, in parallel processes when ``jobs > 1``."""
    tasks = [(profile, int(m), count) for m in modes]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_mode_spectrum, tasks))
    return [_mode_spectrum(task) for task in tasks]


Perturbation = Union[Field2D, RadialField]


def _on_grid_of(h: Perturbation, g: RadialField, label: str) -> Perturbation:
    if isinstance(h, Field2D):
        return radial_to_2d(g, h.grid, outside=0.0, label=label)
    if h.rgrid == g.rgrid:
        return g.with_values(g.values, label)
    return RadialField(h.rgrid, g.evaluate(h.rgrid.nodes, outside=0.0), label)


def project_pi0(
    h: Perturbation, profile: ProfileResult, h00: Optional[RadialField] = None
) -> Perturbation:
    """Projection on the kernel: ``(int h / int h00) h00`` on the grid of ``h``.

    ``h00 = dG/dM`` is computed by central differences when not supplied.
    """
    if h00 is None:
        h00 = d_profile_dM(
            profile.mass, DEFAULT_DM_FRACTION * profile.mass, profile.rgrid
        )
    base = _on_grid_of(h, h00, "h00")
    return base * (integrate(h) / integrate(base))


def _first_moment(h: Field2D, axis: int) -> float:
    return float(h.grid.cell_area * np.sum(h.values * h.grid.mesh[axis]))


def project_pi1(h: Perturbation, profile: ProfileResult) -> Perturbation:
    """Projection on ``span(G'(r) x_i / r)`` matching the first moments of ``h``.

    Solves ``sum_j (int h1_j x_i) c_j = int h x_i``; a radial ``h`` has no first
    moments and projects to zero.
    """
    if isinstance(h, RadialField):
        return h.with_values(np.zeros_like(h.values), "pi1")
    slope = radial_to_2d(profile_gradient(profile), h.grid, outside=0.0)
    x1, x2 = h.grid.mesh
    r = h.grid.radius
    safe = np.where(r > 0, r, 1.0)
    basis = [
        slope.with_values(slope.values * x / safe, f"h1{i + 1}")
        for i, x in enumerate((x1, x2))
    ]
    gram = np.array([[_first_moment(b, i) for b in basis] for i in range(2)])
    rhs = np.array([_first_moment(h, i) for i in range(2)])
    coeffs = np.linalg.solve(gram, rhs)
    return Field2D(
        h.grid, coeffs[0] * basis[0].values + coeffs[1] * basis[1].values, "pi1"
    )
