"""kslab: 2D Keller-Segel simulation and verification toolkit."""

# Set global plotting style
import matplotlib.pyplot as plt
import seaborn as sns

from .dynamics import BlowupOrInstability
from .dynamics import ConfigError
from .dynamics import SimConfig
from .dynamics import SimState
from .dynamics import TrajectoryRecord
from .dynamics import run
from .experiments import Scenario
from .experiments import fit_decay_rate
from .experiments import parse_config
from .experiments import run_scenario
from .fields import Field2D
from .fields import Grid2D
from .fields import RadialField
from .fields import RadialGrid
from .fields import make_grid
from .fields import make_radial_grid
from .functionals import InequalityReport
from .functionals import check_inequalities
from .linearization import SpectrumResult
from .linearization import assemble_linearized
from .linearization import eigen_spectrum
from .potential import CRITICAL_MASS
from .potential import log_kernel_convolve
from .profile import ProfileResult
from .profile import solve_profile
from .visualization import KSVisualizer


__version__ = "0.1.0"

__all__ = [
    "BlowupOrInstability",
    "CRITICAL_MASS",
    "ConfigError",
    "Field2D",
    "Grid2D",
    "InequalityReport",
    "KSVisualizer",
    "ProfileResult",
    "RadialField",
    "RadialGrid",
    "Scenario",
    "SimConfig",
    "SimState",
    "SpectrumResult",
    "TrajectoryRecord",
    "assemble_linearized",
    "check_inequalities",
    "eigen_spectrum",
    "fit_decay_rate",
    "log_kernel_convolve",
    "make_grid",
    "make_radial_grid",
    "parse_config",
    "run",
    "run_scenario",
    "solve_profile",
    "__version__",
]

# Set global seaborn style
sns.set_style("whitegrid")
plt.style.use("seaborn-v0_8-whitegrid")
