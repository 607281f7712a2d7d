"""Monte Carlo critical values for the boundary-crossing supremum.

Critical values are quantiles of ``Z = sup_{y>0} |rho(y) W(y)|`` (two-sided)
or ``sup_{y>0} rho(y) W(y)`` (one-sided).  For canonical shapes the time
change ``x = y / (1 + y)`` turns ``(1 - x) W(x / (1 - x))`` into a Brownian
bridge, so

    Z = sup_{0<x<1} |B(x)| / (x**g1 * (1 - x)**g2)

and only the unit interval has to be discretized.  Other shapes are handled
by simulating ``W`` directly on a truncated grid.

One-sided samples are antithetic: every simulated path contributes the
supremum of the process and of its reflection, so a one-sided sample built
from ``n`` paths holds ``2 n`` values.  That makes the quantile sandwich
``c1(alpha) <= c2(alpha) <= c1(alpha / 2)`` hold exactly on shared paths.
"""

from __future__ import annotations

import enum
import math
import os
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from pathlib import Path

import numpy as np

from . import rng
from .boundary import BoundaryShape, ShapeError, rho_eval, validate_shape

DEFAULT_PATHS = 100_000
DEFAULT_GRID_N = 8192
CLUSTER_POINTS = 64
CLUSTER_RATIO = 0.8
CLUSTER_INNERMOST = 1e-10
_BATCH = 256


class Sided(str, enum.Enum):
    TWO = "two"
    ONE = "one"

    @classmethod
    def coerce(cls, value) -> "Sided":
        if isinstance(value, cls):
            return value
        aliases = {"two": cls.TWO, "two-sided": cls.TWO, "one": cls.ONE, "one-sided": cls.ONE}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"sided must be 'two' or 'one', got {value!r}") from None


@dataclass(frozen=True, eq=False)
class PathGrid:
    """Abscissae in (0, 1) with their distances to 1 kept separately.

    ``tails[i] == 1 - points[i]`` but is stored exactly for points clustered
    near 1, where the subtraction would lose most significant digits.
    """

    points: np.ndarray
    tails: np.ndarray
    grid_n: int

    def __post_init__(self):
        p = self.points
        if p.ndim != 1 or p.size == 0:
            raise ValueError("grid needs at least one point")
        if not (p[0] > 0 and p[-1] < 1 and np.all(np.diff(p) > 0)):
            raise ValueError("grid points must be strictly increasing inside (0, 1)")
        p.setflags(write=False)
        self.tails.setflags(write=False)

    @property
    def n_points(self) -> int:
        return int(self.points.size)

    @classmethod
    def default(
        cls,
        grid_n: int = DEFAULT_GRID_N,
        cluster_points: int = CLUSTER_POINTS,
        ratio: float = CLUSTER_RATIO,
        innermost: float = CLUSTER_INNERMOST,
    ) -> "PathGrid":
        """Uniform grid ``k / grid_n`` plus geometric clusters at both ends."""
        if grid_n < 2:
            raise ValueError("grid_n must be >= 2")
        k = np.arange(1, grid_n)
        uni = k / grid_n
        uni_tail = (grid_n - k) / grid_n
        cl = innermost * ratio ** (-np.arange(cluster_points, dtype=float))
        cl = cl[cl < 0.5]
        x = np.concatenate([uni, cl, 1.0 - cl])
        tail = np.concatenate([uni_tail, 1.0 - cl, cl])
        order = np.argsort(x, kind="stable")
        x, tail = x[order], tail[order]
        keep = np.concatenate([[True], np.diff(x) > 0])
        return cls(x[keep], tail[keep], grid_n)

    @classmethod
    def from_points(cls, points) -> "PathGrid":
        x = np.array(points, dtype=float)
        return cls(x, 1.0 - x, int(x.size))

    def spacings(self) -> np.ndarray:
        """Lengths of the cells [0, x1], [x1, x2], ..., [xn, 1]."""
        x, tail = self.points, self.tails
        # differences of tails keep precision in the upper half
        inner = np.where(x[:-1] < 0.5, np.diff(x), tail[:-1] - tail[1:])
        return np.concatenate([[x[0]], inner, [tail[-1]]])


@dataclass
class SupSample:
    """Independent (two-sided) or pairwise-antithetic (one-sided) sup draws."""

    values: np.ndarray
    sided: Sided = Sided.TWO
    _sorted: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return int(self.values.size)

    def sorted(self) -> np.ndarray:
        if self._sorted is None:
            self._sorted = np.sort(self.values)
        return self._sorted

    def quantile(self, alpha: float) -> tuple[float, float]:
        return empirical_quantile(self.sorted(), alpha, presorted=True)


@dataclass(frozen=True)
class CriticalValue:
    alpha: float
    sided: Sided
    shape_key: str
    value: float
    mc_paths: int
    grid_n: int
    seed: int
    std_error: float

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("critical value must be positive")

    @classmethod
    def fixed(cls, value: float, sided="two", alpha: float = math.nan, shape_key: str = "manual"):
        """A user-supplied critical value without Monte Carlo provenance."""
        return cls(alpha, Sided.coerce(sided), shape_key, float(value), 0, 0, 0, 0.0)


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha={alpha!r} outside (0, 1)")
    return alpha


def order_index(n: int, alpha: float) -> int:
    """1-based index ``ceil((1 - alpha) * n)`` computed without float drift."""
    k = math.ceil(n * (1 - Fraction(repr(float(alpha)))))
    return min(max(k, 1), n)


def empirical_quantile(values, alpha: float, presorted: bool = False) -> tuple[float, float]:
    """Upper order statistic at ``ceil((1 - alpha) n)`` and its standard error.

    The standard error is half the distance between the order statistics at
    ``n p -/+ sqrt(n p (1 - p))``, ``p = 1 - alpha`` (binomial bracket, no
    density estimate needed).
    """
    alpha = _check_alpha(alpha)
    x = np.asarray(values, dtype=float)
    n = x.size
    if n == 0:
        raise ValueError("quantile of an empty sample")
    if not presorted:
        x = np.sort(x)
    k = order_index(n, alpha)
    p = 1.0 - alpha
    half = math.sqrt(n * p * (1 - p))
    lo = min(max(math.ceil(n * p - half), 1), n)
    hi = min(max(math.ceil(n * p + half), 1), n)
    return float(x[k - 1]), float(x[hi - 1] - x[lo - 1]) / 2.0


# --- samplers ---------------------------------------------------------------


def _sup_rows(weighted: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # the one-sided sup over (0, 1) is >= 0 because the weighted path vanishes at 0
    plus = np.maximum(weighted.max(axis=1), 0.0)
    minus = np.maximum(-weighted.min(axis=1), 0.0)
    return np.maximum(plus, minus), plus, minus


def _bridge_block(gamma1, gamma2, grid, seed, start, stop):
    x = grid.points
    scale = np.sqrt(grid.spacings())
    weight = x**-gamma1 * grid.tails**-gamma2
    n = x.size
    out = [np.empty(stop - start) for _ in range(3)]
    for a in range(start, stop, _BATCH):
        b = min(a + _BATCH, stop)
        z = np.empty((b - a, n + 1))
        for r, i in enumerate(range(a, b)):
            rng.substream(seed, i, rng.BRIDGE).standard_normal(out=z[r])
        z *= scale
        np.cumsum(z, axis=1, out=z)
        bridge = z[:, :-1] - x * z[:, -1:]
        bridge *= weight
        for dst, src in zip(out, _sup_rows(bridge)):
            dst[a - start : b - start] = src
    return out


def _wiener_block(rho_values, y, seed, start, stop):
    scale = np.sqrt(np.diff(np.concatenate([[0.0], y])))
    n = y.size
    out = [np.empty(stop - start) for _ in range(3)]
    for a in range(start, stop, _BATCH):
        b = min(a + _BATCH, stop)
        z = np.empty((b - a, n))
        for r, i in enumerate(range(a, b)):
            rng.substream(seed, i, rng.WIENER).standard_normal(out=z[r])
        z *= scale
        np.cumsum(z, axis=1, out=z)
        z *= rho_values
        for dst, src in zip(out, _sup_rows(z)):
            dst[a - start : b - start] = src
    return out


def _collect(parts) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    two = rng.concat([p[0] for p in parts])
    plus = rng.concat([p[1] for p in parts])
    minus = rng.concat([p[2] for p in parts])
    for a in (two, plus, minus):
        a.setflags(write=False)
    return two, plus, minus


def _to_sample(draws, sided: Sided) -> SupSample:
    two, plus, minus = draws
    if sided is Sided.TWO:
        return SupSample(two, Sided.TWO)
    return SupSample(np.column_stack([plus, minus]).ravel(), Sided.ONE)


_MEMO: dict[tuple, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
_MEMO_MAX = 16


def _memo_get(key, compute):
    if key in _MEMO:
        return _MEMO[key]
    value = compute()
    if len(_MEMO) >= _MEMO_MAX:
        _MEMO.pop(next(iter(_MEMO)))
    _MEMO[key] = value
    return value


def clear_memo() -> None:
    _MEMO.clear()


def bridge_draws(gamma1, gamma2, grid: PathGrid, n_paths: int, seed: int, workers: int = 1):
    """Raw per-path arrays ``(two_sided, plus, minus)`` for the bridge functional."""
    BoundaryShape.canonical(gamma1, gamma2)  # exponent validation
    if n_paths < 0:
        raise ValueError("n_paths must be >= 0")
    key = ("bridge", float(gamma1), float(gamma2), grid.points.tobytes(), n_paths, seed)
    func = partial(_bridge_block, float(gamma1), float(gamma2), grid, int(seed))
    return _memo_get(key, lambda: _collect(rng.map_ranges(func, n_paths, workers)))


def sample_bridge_sup(
    gamma1: float,
    gamma2: float,
    grid: PathGrid | None = None,
    n_paths: int = DEFAULT_PATHS,
    seed: int = 0,
    sided="two",
    workers: int = 1,
) -> SupSample:
    """Draws of ``sup_x |B(x)| / (x**g1 (1 - x)**g2)`` (or the signed version).

    Each path: Gaussian increments with variances equal to the grid cells,
    ``W`` by cumulative summation, ``B(x) = W(x) - x W(1)``.  Path ``i``
    uses substream ``i`` of ``seed``, so the result does not depend on
    ``workers``.
    """
    grid = PathGrid.default() if grid is None else grid
    return _to_sample(bridge_draws(gamma1, gamma2, grid, n_paths, seed, workers), Sided.coerce(sided))


def default_y_max(shape: BoundaryShape, eps: float = 1e-3, cap: float = 1e6) -> float:
    """Truncation point for the direct Wiener sampler.

    Smallest ``V`` with ``3 * A * V**(g2 - 1/2) < eps`` where ``A`` bounds
    ``s**(1 - g2) rho(s)`` at large ``s``; capped at ``cap`` and at the
    shape's endpoint.
    """
    if math.isfinite(shape.e_rho):
        return min(shape.e_rho, cap)
    a2 = shape.a2_bound
    if a2 is None:
        a2 = validate_shape(shape).sup_large
    if a2 <= 0:
        return 1.0
    v = (3.0 * a2 / eps) ** (1.0 / (0.5 - shape.gamma2))
    return float(min(v * (1 + 1e-12), cap))


def wiener_grid(shape: BoundaryShape, y_max: float, grid_n: int = DEFAULT_GRID_N) -> np.ndarray:
    """Points of ``(0, y_max]`` for the direct sampler.

    The bridge grid is mapped through ``y = x / (1 - x)``: geometric towards
    0 and infinity, fine around ``y = 1``.  ``y_max`` and a finite
    ``e_rho`` below it are always included.
    """
    if not y_max > 0 or not math.isfinite(y_max):
        raise ValueError(f"y_max={y_max!r} must be positive and finite")
    g = PathGrid.default(grid_n)
    y = g.points / g.tails
    extra = [y_max]
    if math.isfinite(shape.e_rho) and shape.e_rho < y_max:
        extra.append(shape.e_rho)
    y = np.unique(np.concatenate([y[y < y_max], extra]))
    return y


def wiener_draws(
    shape: BoundaryShape, y_max: float, grid_n: int, n_paths: int, seed: int, workers: int = 1
):
    if n_paths < 0:
        raise ValueError("n_paths must be >= 0")
    y = wiener_grid(shape, y_max, grid_n)
    rho_values = np.asarray(rho_eval(shape, y), dtype=float)
    if np.any(rho_values < 0):
        raise ShapeError(f"{shape.key}: negative rho on the sampling grid")
    ident = shape.key if shape.is_canonical else (shape.key, id(shape.evaluator))
    key = ("wiener", ident, float(y_max), grid_n, n_paths, seed)
    func = partial(_wiener_block, rho_values, y, int(seed))
    return _memo_get(key, lambda: _collect(rng.map_ranges(func, n_paths, workers)))


def sample_wiener_sup(
    shape: BoundaryShape,
    y_max: float | None = None,
    grid_n: int = DEFAULT_GRID_N,
    n_paths: int = DEFAULT_PATHS,
    seed: int = 0,
    sided="two",
    workers: int = 1,
) -> SupSample:
    """Draws of ``sup_{0<y<=y_max} |rho(y) W(y)|`` by direct simulation of ``W``."""
    y_max = default_y_max(shape) if y_max is None else float(y_max)
    draws = wiener_draws(shape, y_max, grid_n, n_paths, seed, workers)
    return _to_sample(draws, Sided.coerce(sided))


# --- critical values --------------------------------------------------------


class QuantileCache:
    """Line-oriented store of computed critical values.

    Record format::

        v1 <shape_key> <alpha> <sided> <grid_n> <n_paths> <seed> <value> <std_error>

    Writes replace the whole file atomically.
    """

    VERSION = "v1"

    def __init__(self, path):
        self.path = Path(path)

    @staticmethod
    def _key(shape_key, alpha, sided, grid_n, n_paths, seed):
        return (shape_key, repr(float(alpha)), Sided.coerce(sided).value, int(grid_n), int(n_paths), int(seed))

    def _load(self) -> dict[tuple, tuple[float, float]]:
        records = {}
        if not self.path.exists():
            return records
        for line in self.path.read_text().splitlines():
            parts = line.split()
            if len(parts) != 9 or parts[0] != self.VERSION:
                continue
            _, shape_key, alpha, sided, grid_n, n_paths, seed, value, se = parts
            try:
                key = self._key(shape_key, float(alpha), sided, grid_n, n_paths, seed)
                records[key] = (float(value), float(se))
            except ValueError:
                continue
        return records

    def get(self, shape_key, alpha, sided, grid_n, n_paths, seed) -> CriticalValue | None:
        key = self._key(shape_key, alpha, sided, grid_n, n_paths, seed)
        hit = self._load().get(key)
        if hit is None:
            return None
        return CriticalValue(float(alpha), Sided.coerce(sided), shape_key, hit[0], int(n_paths), int(grid_n), int(seed), hit[1])

    def put(self, cv: CriticalValue) -> None:
        records = self._load()
        key = self._key(cv.shape_key, cv.alpha, cv.sided, cv.grid_n, cv.mc_paths, cv.seed)
        records[key] = (cv.value, cv.std_error)
        lines = [
            f"{self.VERSION} {k[0]} {k[1]} {k[2]} {k[3]} {k[4]} {k[5]} {v!r} {se!r}"
            for k, (v, se) in sorted(records.items())
        ]
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=".quantiles-")
        with os.fdopen(fd, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp, self.path)


def critical_value(
    shape: BoundaryShape,
    alpha: float = 0.05,
    sided="two",
    n_paths: int = DEFAULT_PATHS,
    grid_n: int = DEFAULT_GRID_N,
    seed: int = 0,
    cache: QuantileCache | None = None,
    workers: int = 1,
) -> CriticalValue:
    """The ``1 - alpha`` quantile of the (one- or two-sided) sup functional.

    Canonical shapes use the bridge sampler, custom shapes the truncated
    Wiener sampler.
    """
    alpha = _check_alpha(alpha)
    sided = Sided.coerce(sided)
    if cache is not None:
        hit = cache.get(shape.key, alpha, sided, grid_n, n_paths, seed)
        if hit is not None:
            return hit
    if shape.is_canonical:
        sample = sample_bridge_sup(
            shape.gamma1, shape.gamma2, PathGrid.default(grid_n), n_paths, seed, sided, workers
        )
    else:
        sample = sample_wiener_sup(shape, None, grid_n, n_paths, seed, sided, workers)
    value, se = sample.quantile(alpha)
    cv = CriticalValue(alpha, sided, shape.key, value, n_paths, grid_n, seed, se)
    if cache is not None:
        cache.put(cv)
    return cv


def kolmogorov_series_quantile(alpha: float, sided="two", terms: int = 100, tol: float = 1e-8) -> float:
    """Analytic ``1 - alpha`` point of the unweighted bridge supremum.

    Two-sided: Kolmogorov's series ``1 - 2 sum (-1)**(k+1) exp(-2 k**2 x**2)``.
    One-sided: ``1 - exp(-2 x**2)``.  Solved by bisection.
    """
    alpha = _check_alpha(alpha)
    sided = Sided.coerce(sided)
    k = np.arange(1, terms + 1)
    signs = np.where(k % 2 == 1, 1.0, -1.0)

    def cdf(x):
        if sided is Sided.ONE:
            return 1.0 - math.exp(-2.0 * x * x)
        return 1.0 - 2.0 * float(np.sum(signs * np.exp(-2.0 * k**2 * x * x)))

    lo, hi = 1e-3, 10.0
    target = 1.0 - alpha
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if cdf(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
