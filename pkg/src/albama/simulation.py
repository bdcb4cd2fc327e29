"""Synthetic level-shift scenarios: gradual ramp, abrupt break, and ramp followed by a break.

Formulas use a 1-based time index ``t = 1..T``; returned arrays are 0-based,
so ``signal(spec)[t - 1]`` is the value at ``t``. Noise is Gaussian, drawn
with numpy's ziggurat ``standard_normal`` from a Philox (counter-based)
stream keyed by the seed, so a given seed yields the same draw on every
platform and numpy release that keeps these bit generators stable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .series import TimeSeries, month_range


class Scenario(str, enum.Enum):
    GRADUAL = "gradual"
    ABRUPT = "abrupt"
    COMBINED = "combined"


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: Scenario = Scenario.COMBINED
    T: int = 300
    sigma: float = 0.5
    seed: int = 42
    start: str = "2000-01"

    def __post_init__(self) -> None:
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        if int(self.T) < 2:
            raise DataError(f"T must be >= 2, got {self.T}")
        if not self.sigma >= 0:
            raise DataError(f"sigma must be >= 0, got {self.sigma}")
        if self.scenario is not Scenario.GRADUAL and self.T % 2:
            raise DataError(f"scenario {self.scenario.value} needs an even T, got {self.T}")


def signal(spec: ScenarioSpec) -> np.ndarray:
    """Noiseless level path, length ``T``."""
    T = spec.T
    t = np.arange(1, T + 1, dtype=float)
    if spec.scenario is Scenario.GRADUAL:
        return (2 * t - T) / T
    half = T // 2
    if spec.scenario is Scenario.ABRUPT:
        return np.where(t <= half, -1.0, 1.0)
    return np.where(t <= half, (2 * t - half) / half, -1.0)


def noise(spec: ScenarioSpec, size: int | None = None) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(spec.seed))
    return spec.sigma * gen.standard_normal(spec.T if size is None else size)


def generate(spec: ScenarioSpec) -> TimeSeries:
    """Signal plus iid ``N(0, sigma^2)`` noise on consecutive synthetic months."""
    values = signal(spec) + noise(spec)
    return TimeSeries(month_range(spec.start, spec.T), values, spec.scenario.value)
