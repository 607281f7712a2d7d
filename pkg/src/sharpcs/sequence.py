"""Confidence sequences and the sequential tests dual to them.

At time ``t`` the open interval is ``mean +/- sigma_hat * c * b_t(m; rho)``.
Tests reject on the closed complement, so ``mu0`` is rejected exactly when
it is not inside the open interval.  Both are decided by comparing ``mu0``
with the same computed endpoints, which keeps the duality exact in floating
point.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .boundary import BoundaryShape, boundary_width
from .estimators import StreamState
from .quantiles import CriticalValue, Sided


class Direction(str, enum.Enum):
    TWO_SIDED = "two"
    RIGHT = "right"
    LEFT = "left"


class BatteryMode(str, enum.Enum):
    RIGHT_ONLY = "right"
    LEFT_ONLY = "left"
    BOTH = "both"


@dataclass(frozen=True)
class IntervalRecord:
    t: int
    mean: float
    sigma: float
    half_width: float
    lower: float
    upper: float

    def contains(self, mu: float) -> bool:
        return self.lower < mu < self.upper


@dataclass(frozen=True)
class TestVerdict:
    __test__ = False  # keep pytest from collecting this class

    t: int
    mu0: float
    direction: Direction
    reject: bool


def _require(c: CriticalValue, sided: Sided) -> float:
    if not isinstance(c, CriticalValue):
        raise TypeError("expected a CriticalValue")
    if c.sided is not sided:
        raise ValueError(f"a {sided.value}-sided critical value is required, got {c.sided.value}-sided")
    return c.value


def _sigma_and_half_width(state: StreamState, shape: BoundaryShape, c_value: float):
    if state.t < 1:
        raise ValueError("no observations yet")
    sigma = state.sigma_hat()
    if state.t <= state.l_m or math.isinf(sigma):
        return sigma, math.inf
    width = boundary_width(shape, state.m, state.t)
    if math.isinf(width):
        return sigma, math.inf
    return sigma, sigma * c_value * width


def half_width(state: StreamState, shape: BoundaryShape, c_value: float) -> float:
    """``sigma_hat * c * b_t``; ``inf`` while suppressed or degenerate."""
    return _sigma_and_half_width(state, shape, c_value)[1]


def _record(state: StreamState, shape: BoundaryShape, c_value: float) -> IntervalRecord:
    sigma, hw = _sigma_and_half_width(state, shape, c_value)
    if math.isinf(hw):
        return IntervalRecord(state.t, state.mean, sigma, math.inf, -math.inf, math.inf)
    return IntervalRecord(state.t, state.mean, sigma, hw, state.mean - hw, state.mean + hw)


def interval(state: StreamState, shape: BoundaryShape, c: CriticalValue) -> IntervalRecord:
    """Open interval at the current time; the whole line when undetermined."""
    value = _require(c, Sided.TWO)
    return _record(state, shape, value)


def test_two_sided(state: StreamState, shape: BoundaryShape, c: CriticalValue, mu0: float) -> TestVerdict:
    rec = interval(state, shape, c)
    return TestVerdict(state.t, float(mu0), Direction.TWO_SIDED, not rec.contains(mu0))


def _one_sided(state, shape, value, mu0, direction) -> TestVerdict:
    rec = _record(state, shape, value)
    if direction is Direction.RIGHT:
        reject = bool(mu0 <= rec.lower)
    elif direction is Direction.LEFT:
        reject = bool(mu0 >= rec.upper)
    else:
        raise ValueError("one-sided tests need direction RIGHT or LEFT")
    return TestVerdict(state.t, float(mu0), direction, reject)


def test_one_sided(
    state: StreamState, shape: BoundaryShape, c_o: CriticalValue, mu0: float, direction
) -> TestVerdict:
    """Right: reject ``mu_X <= mu0`` when ``mean - mu0 >= sigma c b_t``.
    Left: reject ``mu_X >= mu0`` when ``mean - mu0 <= -sigma c b_t``."""
    value = _require(c_o, Sided.ONE)
    return _one_sided(state, shape, value, mu0, Direction(direction))


def hierarchical_battery(
    state: StreamState, shape: BoundaryShape, c: CriticalValue, mus, mode
) -> list[TestVerdict]:
    """One-sided tests over an increasing grid of null values.

    ``RIGHT_ONLY``/``LEFT_ONLY`` take a one-sided critical value; ``BOTH``
    takes the two-sided one and returns a right and a left verdict per grid
    point (right first).
    """
    mode = BatteryMode(mode)
    mus = [float(m) for m in mus]
    if any(b <= a for a, b in zip(mus, mus[1:])):
        raise ValueError("mus must be strictly increasing")
    value = _require(c, Sided.TWO if mode is BatteryMode.BOTH else Sided.ONE)
    dirs = {
        BatteryMode.RIGHT_ONLY: (Direction.RIGHT,),
        BatteryMode.LEFT_ONLY: (Direction.LEFT,),
        BatteryMode.BOTH: (Direction.RIGHT, Direction.LEFT),
    }[mode]
    return [_one_sided(state, shape, value, mu, d) for mu in mus for d in dirs]


def half_widths(shape: BoundaryShape, m: int, l_m: int, sigma: np.ndarray, c_value: float) -> np.ndarray:
    """Vectorized half-widths for ``t = 1..len(sigma)`` (simulation helper)."""
    t = np.arange(1, sigma.size + 1)
    width = boundary_width(shape, m, t)
    with np.errstate(invalid="ignore"):
        hw = sigma * c_value * width
    hw[~np.isfinite(hw)] = math.inf
    hw[: min(l_m, sigma.size)] = math.inf
    return hw


# library functions, not pytest tests
test_two_sided.__test__ = False
test_one_sided.__test__ = False
