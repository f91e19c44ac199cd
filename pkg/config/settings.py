"""
Global configuration for planefold.

This module contains all numeric defaults used throughout the library and CLI.
Modify values here to adjust behavior without changing code.
"""
import os
from pathlib import Path
from typing import Optional

import psutil


class Settings:
    """Global application settings - class-level constants for easy access."""

    # Application metadata
    APP_NAME = "planefold"
    VERSION = "1.0.0"

    # Field evaluation
    FIELD_SINGULARITY_EPS = 1e-9  # |eta(p)| below this is a field singularity
    ALLOWED_FUNCTIONS = {
        "sin": 1, "cos": 1, "tan": 1, "exp": 1, "log": 1,
        "sqrt": 1, "abs": 1, "atan2": 2,
    }

    # Pointwise geometry
    UMBILIC_REL_TOL = 1e-7
    REDUCED_FORM_MIN_ETA1 = 1e-8
    ZERO_DIRECTION_EPS = 1e-14

    # Tracing
    TRACE_STEP = 5e-3
    TRACE_ARC_BUDGET = 20.0
    DOMAIN_BOX = 10.0  # half-width of the admissible cube
    UMBILIC_STOP_REL_TOL = 1e-5

    # Cycle search
    CYCLE_RETURN_TOL = 1e-10
    CYCLE_CLOSURE_REL_TOL = 1e-8
    CYCLE_MAX_TURNS = 5
    CYCLE_MAX_ITERATIONS = 12
    CYCLE_SECTION_RADIUS = 0.5
    CYCLE_MIN_RETURN_ARC = 0.5  # section crossings before this arc are not returns
    CYCLE_FD_OFFSET = 1e-6
    CYCLE_DAMPING = 1e-10

    # Tubular chart
    CHART_SAMPLES = 2048
    CHART_DELTA_SCALE = 0.2
    INTEGRABLE_TOL = 1e-6

    # Return map
    RETURN_STEPS = 4096
    RETURN_TOL = 1e-9
    RETURN_MAX_DOUBLINGS = 4
    HYPERBOLIC_TOL = 1e-6
    MARGINAL_TOL = 1e-9
    FD_STEP = 1e-3
    DEGENERATE_DET_TOL = 1e-8

    # Control
    BRACKET_SAMPLES = 4096
    RANK_REL_TOL = 1e-8
    HYPERBOLIZE_BUDGET = 0.05
    HYPERBOLIZE_LEVELS = 6
    HYPERBOLIZE_SWEEPS = 2
    CERTIFY_MARGIN = 1e-4
    TORSION_FLOOR = 1e-4

    # Reports
    REPORT_SCHEMA = 1
    OUTPUT_DIR = "planefold_out"
    LOG_FILE_NAME = "session.log"
    CHART_EXPORT_STRIDE = 32

    # Concurrency
    THREADS_ENV = "PLANEFOLD_THREADS"

    @classmethod
    def get_thread_count(cls) -> int:
        """Worker cap: PLANEFOLD_THREADS if set, else the physical CPU count."""
        raw = os.environ.get(cls.THREADS_ENV, "").strip()
        if raw:
            try:
                return max(1, int(raw))
            except ValueError:
                pass
        count = psutil.cpu_count(logical=False) or psutil.cpu_count() or 1
        return max(1, int(count))

    @classmethod
    def get_output_dir(cls, override: Optional[str] = None) -> Path:
        """Get the report directory, creating nothing."""
        return Path(override) if override else Path.cwd() / cls.OUTPUT_DIR

    @classmethod
    def get_umbilic_tol(cls, k1: float, k2: float) -> float:
        """Relative umbilic tolerance at curvatures k1, k2."""
        return cls.UMBILIC_REL_TOL * (1.0 + abs(k1) + abs(k2))

    @classmethod
    def get_umbilic_stop_tol(cls, k1: float, k2: float) -> float:
        """Gap below which tracing stops on umbilic approach."""
        return cls.UMBILIC_STOP_REL_TOL * (1.0 + abs(k1) + abs(k2))


class _ConfigProxy:
    """
    Read-only view of `Settings` exposed as the `CONFIG` object used across the codebase.

    Forwards attribute reads to `Settings` and exposes the helper classmethods.
    """

    def __getattr__(self, name):
        if hasattr(Settings, name):
            return getattr(Settings, name)
        raise AttributeError(f"CONFIG has no attribute '{name}'")

    def __setattr__(self, name, value):
        raise AttributeError("CONFIG is read-only; change Settings instead")


CONFIG = _ConfigProxy()
