"""Test cases for the __init__ module."""

import math

import matplotlib.pyplot as plt
import pytest
import seaborn as sns

import kslab
from kslab import CRITICAL_MASS
from kslab import KSVisualizer
from kslab import SimConfig
from kslab import __version__
from kslab import solve_profile


class TestInitModule:
    """Test cases for package initialization."""

    def test_version(self) -> None:
        """Test that version is defined."""
        assert __version__ == "0.1.0"

    def test_imports(self) -> None:
        """Test that main classes can be imported."""
        assert KSVisualizer is not None
        assert SimConfig is not None
        assert callable(solve_profile)

    def test_exports(self) -> None:
        """Test that every exported name resolves."""
        for name in kslab.__all__:
            assert hasattr(kslab, name), name

    def test_critical_mass(self) -> None:
        """Test the exported critical mass."""
        assert CRITICAL_MASS == pytest.approx(8.0 * math.pi)

    def test_matplotlib_style_set(self) -> None:
        """Test that matplotlib style is properly configured."""
        current_style = plt.rcParams
        assert current_style is not None

        assert sns.axes_style() is not None
