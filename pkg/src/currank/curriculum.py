"""The curriculum weight schedule and the weighted loss.

For difficulty D in [0, 1] and 0-based training iteration i, the sample
weight ramps linearly from D at i=0 to 1 at i=m:

    W(D, i) = D + (i/m) * (1 - D)   for i < m
    W(D, i) = 1                     for i >= m

``m = inf`` disables the ramp and uses D itself forever (static
weighting). The weighted loss is simply W * L; the weight is constant
with respect to the model parameters, so it scales the gradient by the
same factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .difficulty import DifficultyConfig
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class CurriculumSchedule:
    m: float  # positive integer, or math.inf for static weighting
    difficulty: DifficultyConfig | None = None

    def __post_init__(self):
        if math.isinf(self.m):
            if self.m < 0:
                raise ConfigError("m must be a positive integer or inf")
            return
        if self.m != int(self.m) or self.m < 1:
            raise ConfigError(f"m must be a positive integer or inf, got {self.m}")


def parse_m(value) -> float:
    """Parse an ``m`` config value: positive integer or the string ``inf``."""
    if isinstance(value, str) and value.strip().lower() == "inf":
        return math.inf
    if isinstance(value, float) and math.isinf(value):
        return math.inf
    try:
        m = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad curriculum m value {value!r}") from None
    if m < 1:
        raise ConfigError(f"curriculum m must be >= 1, got {m}")
    return m


def weight(schedule: CurriculumSchedule, difficulty_value: float, i: int) -> float:
    """Iteration-informed sample weight; see the module docstring."""
    if not 0.0 <= difficulty_value <= 1.0:
        raise DataError(f"difficulty value {difficulty_value} outside [0, 1]")
    if i < 0:
        raise DataError(f"iteration index must be >= 0, got {i}")
    if math.isinf(schedule.m):
        return difficulty_value
    if i >= schedule.m:
        return 1.0
    return difficulty_value + (i / schedule.m) * (1.0 - difficulty_value)


def weight_array(schedule: CurriculumSchedule, difficulty_values: np.ndarray, i: int) -> np.ndarray:
    """Vectorized :func:`weight` for a batch of difficulty values."""
    d = np.asarray(difficulty_values, dtype=np.float64)
    if d.size and (d.min() < 0.0 or d.max() > 1.0):
        raise DataError("difficulty values outside [0, 1]")
    if i < 0:
        raise DataError(f"iteration index must be >= 0, got {i}")
    if math.isinf(schedule.m):
        return d.copy()
    if i >= schedule.m:
        return np.ones_like(d)
    return d + (i / schedule.m) * (1.0 - d)


def weighted_loss(
    schedule: CurriculumSchedule, difficulty_value: float, i: int, base_loss_value: float
) -> float:
    """W(D, i) * L. Non-finite base losses are rejected early."""
    if not math.isfinite(base_loss_value):
        raise DataError(f"non-finite base loss {base_loss_value}")
    return weight(schedule, difficulty_value, i) * base_loss_value
