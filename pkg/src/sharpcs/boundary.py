"""Boundary weight functions and the boundary widths they induce.

A boundary shape is a nonnegative weight ``rho`` on ``(0, inf)``.  The
confidence sequence at time ``t`` with burn-in scale ``m`` has half-width
``sigma_hat * c * sqrt(m) / (t * rho(t / m))``.  The canonical family

    rho(s) = (1 + s) ** (g1 + g2 - 1) / s ** g1,    0 <= g1, g2 < 1/2

is the one with a Brownian-bridge representation of its critical values.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

DEFAULT_CAP = 1e6


class ShapeError(ValueError):
    """A boundary shape violates its exponent or sign constraints."""


class ShapeValidationError(ShapeError):
    """A custom shape failed the probe-grid boundedness check."""


def _check_exponent(name: str, g: float) -> float:
    g = float(g)
    if not (0.0 <= g < 0.5) or not math.isfinite(g):
        raise ShapeError(f"{name}={g!r} outside [0, 1/2)")
    return g


def _fmt(x: float) -> str:
    r = repr(float(x))
    return r[:-2] if r.endswith(".0") else r


@dataclass(frozen=True)
class BoundaryShape:
    """Weight function ``rho`` with its declared tail exponents.

    Use :meth:`canonical` or :meth:`custom` rather than the constructor.
    A custom ``evaluator`` receives a float array of positive arguments and
    returns an array of the same shape.
    """

    gamma1: float
    gamma2: float
    evaluator: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)
    e_rho: float = math.inf
    name: str = "canonical"
    a2_bound: float | None = None

    def __post_init__(self):
        _check_exponent("g1", self.gamma1)
        _check_exponent("g2", self.gamma2)
        if not self.e_rho > 0:
            raise ShapeError(f"e_rho={self.e_rho!r} must be positive")
        if self.evaluator is None and self.e_rho != math.inf:
            raise ShapeError("canonical shapes have e_rho = inf")

    @classmethod
    def canonical(cls, gamma1: float = 0.0, gamma2: float = 0.0) -> "BoundaryShape":
        return cls(float(gamma1), float(gamma2))

    @classmethod
    def custom(
        cls,
        evaluator: Callable[[np.ndarray], np.ndarray],
        gamma1: float,
        gamma2: float,
        e_rho: float = math.inf,
        name: str = "custom",
        a2_bound: float | None = None,
    ) -> "BoundaryShape":
        if not re.fullmatch(r"[A-Za-z0-9_.-]+", name) or name == "canonical":
            raise ShapeError(f"invalid custom shape name {name!r}")
        return cls(float(gamma1), float(gamma2), evaluator, float(e_rho), name, a2_bound)

    @property
    def is_canonical(self) -> bool:
        return self.evaluator is None

    @property
    def key(self) -> str:
        """Canonical text form, used in cache keys and on the command line."""
        base = f"g1={_fmt(self.gamma1)},g2={_fmt(self.gamma2)}"
        if self.is_canonical:
            return f"canonical:{base}"
        return f"{self.name}:{base},e={_fmt(self.e_rho)}"

    def __call__(self, s):
        return rho_eval(self, s)


def parse_shape(text: str) -> BoundaryShape:
    """Parse ``canonical:g1=<f>,g2=<f>``.

    Raises :class:`ShapeError` naming the offending field.
    """
    kind, sep, rest = text.strip().partition(":")
    if kind != "canonical" or not sep:
        raise ShapeError(f"shape kind: expected 'canonical:g1=..,g2=..', got {text!r}")
    values: dict[str, float] = {}
    for item in rest.split(","):
        k, eq, v = item.partition("=")
        k = k.strip()
        if k not in ("g1", "g2"):
            raise ShapeError(f"unknown shape field {k!r} in {text!r}")
        if not eq:
            raise ShapeError(f"{k}: missing value in {text!r}")
        try:
            values[k] = float(v)
        except ValueError:
            raise ShapeError(f"{k}: not a number: {v!r}") from None
    for k in ("g1", "g2"):
        if k not in values:
            raise ShapeError(f"{k}: missing from {text!r}")
    return BoundaryShape.canonical(values["g1"], values["g2"])


def rho_eval(shape: BoundaryShape, s):
    """Evaluate ``rho(s)``; scalar in, scalar out, arrays elementwise.

    Zero beyond the endpoint ``e_rho``.
    """
    if shape.is_canonical and isinstance(s, (int, float)):
        # scalar fast path for the streaming monitor
        if not math.isfinite(s) or s <= 0:
            raise ValueError("rho argument must be finite and positive")
        return (1.0 + s) ** (shape.gamma1 + shape.gamma2 - 1.0) / s**shape.gamma1
    arr = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("rho argument must be finite")
    if np.any(arr <= 0):
        raise ValueError("rho argument must be positive")
    if shape.is_canonical:
        out = (1.0 + arr) ** (shape.gamma1 + shape.gamma2 - 1.0) / arr**shape.gamma1
    else:
        out = np.asarray(shape.evaluator(arr), dtype=float)
        if out.shape != arr.shape:
            out = np.array([float(shape.evaluator(v)) for v in arr.ravel()]).reshape(arr.shape)
        out = np.where(arr > shape.e_rho, 0.0, out)
    return float(out) if np.ndim(s) == 0 else out


@dataclass
class ValidationReport:
    ok: bool
    sup_small: float  # sup of s**g1 * rho(s) over the small-s probes
    sup_large: float  # sup of s**(1 - g2) * rho(s) over the large-s probes
    min_rho: float
    cap: float
    messages: list[str] = field(default_factory=list)


def default_probe_grid(per_decade: int = 25) -> np.ndarray:
    return np.logspace(-12, 12, 24 * per_decade + 1)


def validate_shape(
    shape: BoundaryShape, probe_grid=None, cap: float = DEFAULT_CAP, strict: bool = False
) -> ValidationReport:
    """Probe the growth conditions of ``rho`` near 0 and near infinity on a geometric grid.

    Scaled values ``s**g1 * rho(s)`` (for ``s <= 1``) and
    ``s**(1 - g2) * rho(s)`` (for ``s >= 1``) must stay below ``cap``.
    Negative values of ``rho`` raise :class:`ShapeError`.  With
    ``strict=True`` a failed probe raises :class:`ShapeValidationError`.

    The limsup conditions are not decidable from samples; this only catches
    declared exponents that are inconsistent at machine scale.
    """
    _check_exponent("g1", shape.gamma1)
    _check_exponent("g2", shape.gamma2)
    grid = default_probe_grid() if probe_grid is None else np.sort(np.asarray(probe_grid, float))
    if grid.size == 0 or grid[0] <= 0:
        raise ValueError("probe grid must be non-empty and positive")
    lo_needed, hi_needed = 1e-6, min(1e6, shape.e_rho)
    if grid[0] > lo_needed or grid[-1] < hi_needed:
        raise ValueError("probe grid must span [1e-6, 1e6] within (0, e_rho)")
    grid = grid[grid < shape.e_rho] if math.isfinite(shape.e_rho) else grid
    values = np.asarray(rho_eval(shape, grid))
    min_rho = float(values.min())
    if min_rho < 0 or np.any(np.isnan(values)):
        raise ShapeError(f"{shape.key}: rho takes negative or NaN values (min {min_rho!r})")
    small = grid <= 1.0
    # the large-s condition is vacuous for a finite endpoint
    large = (grid >= 1.0) & (not math.isfinite(shape.e_rho))
    with np.errstate(over="ignore"):
        sup_small = float(np.max(grid[small] ** shape.gamma1 * values[small])) if small.any() else 0.0
        sup_large = (
            float(np.max(grid[large] ** (1.0 - shape.gamma2) * values[large])) if large.any() else 0.0
        )
    msgs = []
    if not sup_small <= cap:
        msgs.append(f"small-s probe sup of s^g1*rho(s) = {sup_small:.6g} exceeds cap {cap:g}")
    if not sup_large <= cap:
        msgs.append(f"large-s probe sup of s^(1-g2)*rho(s) = {sup_large:.6g} exceeds cap {cap:g}")
    report = ValidationReport(not msgs, sup_small, sup_large, min_rho, cap, msgs)
    if strict and not report.ok:
        raise ShapeValidationError(f"{shape.key}: " + "; ".join(msgs))
    return report


def boundary_width(shape: BoundaryShape, m: int, t):
    """``sqrt(m) / (t * rho(t / m))``; ``inf`` where ``rho`` vanishes.

    ``t`` may be an integer array.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if isinstance(t, (int, float)):
        if t < 1:
            raise ValueError("t must be >= 1")
        r = rho_eval(shape, t / m)
        return math.sqrt(m) / (t * r) if r > 0 else math.inf
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 1):
        raise ValueError("t must be >= 1")
    r = np.asarray(rho_eval(shape, tt / m))
    with np.errstate(divide="ignore"):
        out = np.where(r > 0, math.sqrt(m) / (tt * np.where(r > 0, r, 1.0)), math.inf)
    return float(out) if np.ndim(t) == 0 else out
