"""Exception hierarchy shared by the numerical core and the experiment pipeline."""
from __future__ import annotations

from typing import Optional

import numpy as np


class LabError(Exception):
    """Base class for all laboratory errors."""


class KernelError(LabError, ValueError):
    """Malformed kernel: asymmetric atoms, unknown family, non-finite parameters."""


class GridError(LabError, ValueError):
    """Invalid grid, mismatched grids or an out-of-range operator argument."""


class ConfigError(LabError, ValueError):
    """Run configuration could not be read or validated."""


class TrajectoryError(LabError, LookupError):
    """Requested time is not covered by the stored trajectory."""


class FitError(LabError, ValueError):
    """Slope fit needs at least three strictly positive values."""


class BlowUpError(LabError, RuntimeError):
    """Integrator state became non-finite or exceeded the blow-up threshold."""

    def __init__(self, step: int, time: float, last_finite: Optional[np.ndarray] = None,
                 reason: str = "non-finite state"):
        super().__init__(f"blow-up at step {step} (t={time:.6g}): {reason}")
        self.step = step
        self.time = time
        self.last_finite = last_finite
        self.reason = reason
