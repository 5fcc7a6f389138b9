"""Figures for trajectories, densities, profiles, spectra and decay fits."""

import logging
from pathlib import Path
from typing import Any
from typing import Optional
from typing import Sequence
from typing import Tuple

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from .fields import Field2D


class KSVisualizer:
    """Writes PNG figures of simulation and verification results."""

    def __init__(self, output_dir: str = "out", dpi: int = 600):
        """Initialize the KSVisualizer.

        Args:
            output_dir: Directory for saving plots
            dpi: Resolution of saved figures
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.dpi = dpi
        self.log = logging.getLogger(__name__)

        self.plot_params = {
            "t": {"label": "t", "unit": "Time"},
            "mass": {"label": "Mass", "unit": "Mass"},
            "m2": {"label": "M2", "unit": "Second moment"},
            "m4": {"label": "M4", "unit": "Fourth moment"},
            "H": {"label": "H", "unit": "Entropy"},
            "F": {"label": "F", "unit": "Free energy"},
            "DF": {"label": "D_F", "unit": "Free-energy dissipation"},
            "E": {"label": "E", "unit": "Rescaled energy"},
            "DE": {"label": "D_E", "unit": "Rescaled dissipation"},
            "linf": {"label": "max f", "unit": "Peak density"},
            "l43": {"label": "||f||_4/3", "unit": "L4/3 norm"},
            "t14l43": {"label": "t^1/4 ||f||_4/3", "unit": "t^1/4 L4/3 norm"},
        }

    def _create_base_figure(self) -> Tuple[Any, Any]:
        """Create base figure with styling."""
        figsize = 4
        hwratio = 4.0 / 3.0
        fig = plt.figure(figsize=(figsize * hwratio, figsize), dpi=self.dpi)
        ax = fig.add_subplot(111)

        fig.patch.set_facecolor("none")
        ax.set_facecolor("none")

        for spine in ax.spines.values():
            spine.set_edgecolor("black")
            spine.set_linewidth(1.0)

        ax.tick_params(colors="black", which="both")
        ax.xaxis.label.set_color("black")
        ax.yaxis.label.set_color("black")

        return fig, ax

    def _setup_legend(self, ax: Any) -> None:
        """Setup legend with styling."""
        legend = ax.legend(frameon=True, bbox_to_anchor=(1.05, 1), loc="upper left")
        legend.get_frame().set_facecolor("none")
        legend.get_frame().set_edgecolor("black")

    def _save(self, fig: Any, filename: str, transparent: bool = True) -> Path:
        plot_path = self.output_dir / filename
        fig.savefig(
            plot_path, bbox_inches="tight", dpi=self.dpi, transparent=transparent
        )
        plt.close(fig)
        self.log.info(f"Plot saved: {plot_path}")
        return plot_path

    def plot_trajectory(
        self,
        frame: pd.DataFrame,
        name: str = "trajectory",
        columns: Sequence[str] = ("m2", "F", "linf"),
        blowup_time: Optional[float] = None,
    ) -> Path:
        """Plot recorded diagnostics against time, one panel per column.

        Args:
            frame: Trajectory table with a ``t`` column
            name: File stem
            columns: Diagnostics to draw
            blowup_time: Marked with a vertical line when given

        Returns:
            Path of the saved figure
        """
        if frame.empty:
            raise ValueError("cannot plot an empty trajectory")
        self.log.debug(f"Plotting trajectory {name}")
        fig, axes = plt.subplots(1, len(columns), figsize=(5 * len(columns), 5))
        axes = np.atleast_1d(axes)
        for ax, column in zip(axes, columns):
            ax.plot(frame["t"], frame[column], "o-", linewidth=2, markersize=3)
            if blowup_time is not None:
                ax.axvline(blowup_time, color="red", linestyle="--", alpha=0.7)
            ax.set_xlabel(self.plot_params["t"]["unit"])
            params = self.plot_params.get(column, {"unit": column})
            ax.set_ylabel(params["unit"])
            ax.grid(True, alpha=0.3)
        plt.tight_layout()
        return self._save(fig, f"{name}.png", transparent=False)

    def plot_density(self, f: Field2D, name: str = "density") -> Path:
        """Heat map of a density on its grid."""
        self.log.debug(f"Plotting density {f.label}")
        fig, ax = self._create_base_figure()
        L = f.grid.half_width
        image = ax.imshow(
            f.values.T,
            origin="lower",
            extent=(-L, L, -L, L),
            cmap=sns.color_palette("rocket", as_cmap=True),
        )
        fig.colorbar(image, ax=ax, label="Density")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        return self._save(fig, f"{name}.png")

    def plot_profile(self, results: Sequence[Any], name: str = "profile") -> Path:
        """Radial profiles ``G_M`` on a log scale, one line per mass."""
        fig, ax = self._create_base_figure()
        for result in results:
            r = result.rgrid.nodes
            label = f"M = {result.mass:.4g}"
            ax.semilogy(r, result.G.values, linewidth=1.5, label=label)
        ax.set_xlabel("r")
        ax.set_ylabel("G(r)")
        self._setup_legend(ax)
        return self._save(fig, f"{name}.png")

    def plot_spectrum(self, spectra: Sequence[Any], name: str = "spectrum") -> Path:
        """Rightmost eigenvalues against the angular mode."""
        fig, ax = self._create_base_figure()
        palette = sns.color_palette("deep", len(spectra))
        for color, spectrum in zip(palette, spectra):
            modes = np.full(spectrum.eigenvalues.size, spectrum.mode)
            ax.scatter(
                modes,
                spectrum.eigenvalues,
                s=40,
                marker="o",
                color=color,
                label=f"m = {spectrum.mode}",
            )
        ax.axhline(-1.0, color="black", linestyle="--", linewidth=1.0, alpha=0.7)
        ax.set_xlabel("Angular mode")
        ax.set_ylabel("Eigenvalue")
        self._setup_legend(ax)
        return self._save(fig, f"{name}.png")

    def plot_decay(
        self,
        times: Sequence[float],
        distances: Sequence[float],
        rate: float,
        intercept: float,
        window: Tuple[float, float],
        name: str = "decay",
    ) -> Path:
        """Distances on a log scale together with the fitted exponential."""
        t = np.asarray(times, dtype=float)
        d = np.asarray(distances, dtype=float)
        fig, ax = self._create_base_figure()
        ax.semilogy(t, d, "o", markersize=3, label="Distance")
        inside = (t >= window[0]) & (t <= window[1])
        ax.semilogy(
            t[inside],
            np.exp(intercept + rate * t[inside]),
            "r--",
            linewidth=1.5,
            label=f"Fit: rate = {rate:.4f}",
        )
        ax.set_xlabel(self.plot_params["t"]["unit"])
        ax.set_ylabel("Distance")
        self._setup_legend(ax)
        return self._save(fig, f"{name}.png")
