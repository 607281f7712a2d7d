"""Online mean and scale estimation for a single data stream.

Two variance methods are available:

* :class:`IidSample` -- the unbiased sample variance (Welford recurrence).
* :class:`BartlettLongRun` -- a Bartlett-kernel long-run variance for
  stationary dependent data, with bandwidth ``floor(t ** (1/3))`` by default.

Until the variance estimate is strictly positive, ``sigma_hat`` is ``inf``,
which makes every interval the whole real line.

The array functions :func:`running_mean` and :func:`running_sigma` compute
the same quantities for every prefix of a recorded stream at once; the
simulation harness uses them.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

DEFAULT_MAX_LAG = 256


@dataclass(frozen=True)
class IidSample:
    pass


@dataclass(frozen=True)
class BartlettLongRun:
    """Bartlett long-run variance.

    ``bandwidth`` is ``"cuberoot"`` (``H = floor(t ** (1/3))``) or a fixed
    non-negative integer.  The bandwidth is clamped to ``max_lag``, which
    also bounds the memory held by a stream.
    """

    bandwidth: str | int = "cuberoot"
    max_lag: int = DEFAULT_MAX_LAG

    def __post_init__(self):
        if self.bandwidth != "cuberoot" and not (
            isinstance(self.bandwidth, int) and self.bandwidth >= 0
        ):
            raise ValueError(f"bandwidth must be 'cuberoot' or an int >= 0, got {self.bandwidth!r}")
        if self.max_lag < 0:
            raise ValueError("max_lag must be >= 0")

    def lag(self, t: int) -> int:
        if self.bandwidth == "cuberoot":
            h = icbrt(t)
        else:
            h = self.bandwidth
        return min(h, self.max_lag)


def icbrt(t: int) -> int:
    """``floor(t ** (1/3))`` for non-negative integers, exact."""
    if t <= 0:
        return 0
    h = int(round(t ** (1.0 / 3.0)))
    while h**3 > t:
        h -= 1
    while (h + 1) ** 3 <= t:
        h += 1
    return h


def resolve_l_m(preset, m: int) -> int:
    """Suppression horizon from an integer or a preset name ('log', 'sqrt')."""
    if isinstance(preset, str):
        if preset == "log":
            return max(1, math.ceil(math.log(m)))
        if preset == "sqrt":
            return math.ceil(math.sqrt(m))
        try:
            preset = int(preset)
        except ValueError:
            raise ValueError(f"l_m must be an integer, 'log' or 'sqrt', got {preset!r}") from None
    if preset < 0:
        raise ValueError("l_m must be >= 0")
    return int(preset)


@dataclass
class StreamState:
    """Sufficient statistics of one stream after ``t`` observations.

    ``m`` is the burn-in scale of the boundary and ``l_m`` the number of
    initial time points whose intervals are reported as the whole line.
    Updates mutate the state in place; a state has a single writer.
    """

    m: int = 1
    l_m: int = 1
    var_method: IidSample | BartlettLongRun = field(default_factory=IidSample)
    t: int = 0
    mean: float = 0.0
    m2: float = 0.0
    # Bartlett bookkeeping on data shifted by the first observation
    _shift: float = field(default=0.0, repr=False)
    _sum: float = field(default=0.0, repr=False)
    _head: list = field(default_factory=list, repr=False)
    _recent: deque = field(default=None, repr=False)
    _cross: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        self.l_m = resolve_l_m(self.l_m, self.m)
        if isinstance(self.var_method, BartlettLongRun):
            k = self.var_method.max_lag + 1
            self._recent = deque(maxlen=k)
            self._cross = np.zeros(k)

    def update(self, x: float) -> "StreamState":
        x = float(x)
        if not math.isfinite(x):
            raise ValueError(f"observation must be finite, got {x!r}")
        self.t += 1
        delta = x - self.mean
        self.mean += delta / self.t
        self.m2 += delta * (x - self.mean)
        if self._cross is not None:
            self._bartlett_update(x)
        return self

    def extend(self, xs) -> "StreamState":
        for x in xs:
            self.update(x)
        return self

    def _bartlett_update(self, x: float) -> None:
        if self.t == 1:
            self._shift = x
        y = x - self._shift
        self._recent.appendleft(y)
        self._sum += y
        if len(self._head) < self._cross.size:
            self._head.append(y)
        k = len(self._recent)
        # _cross[h] = sum_{i > h} y_i * y_{i-h}
        self._cross[:k] += y * np.fromiter(self._recent, float, k)

    def autocovariances(self, max_h: int) -> np.ndarray:
        """``gamma_hat(h)`` for ``h = 0..max_h`` with the full-sample mean plugged in.

        Only available under :class:`BartlettLongRun`.
        """
        if self._cross is None:
            raise ValueError("autocovariances need the BartlettLongRun method")
        t = self.t
        if max_h >= min(t, self._cross.size):
            raise ValueError("lag exceeds the data or the retained buffer")
        h = np.arange(max_h + 1)
        ybar = self._sum / t
        recent = np.fromiter(self._recent, float, len(self._recent))
        head = np.asarray(self._head)
        # sum of y_1..y_{t-h} and of y_{h+1}..y_t
        last = np.concatenate([[0.0], np.cumsum(recent[:max_h])])
        first = np.concatenate([[0.0], np.cumsum(head[:max_h])])
        lead = self._sum - last
        trail = self._sum - first
        return (self._cross[: max_h + 1] - ybar * (lead + trail) + (t - h) * ybar * ybar) / t

    def variance(self) -> float:
        """The raw variance estimate (may be zero or negative for Bartlett)."""
        if isinstance(self.var_method, IidSample):
            return self.m2 / (self.t - 1) if self.t >= 2 else math.nan
        big_h = self.var_method.lag(self.t)
        if self.t <= big_h + 1:
            return math.nan
        g = self.autocovariances(big_h)
        w = 1.0 - np.arange(1, big_h + 1) / (big_h + 1)
        return float(g[0] + 2.0 * np.dot(w, g[1:]))

    def sigma_hat(self) -> float:
        """Scale estimate, ``inf`` until the variance estimate is positive."""
        v = self.variance()
        if not v > 0:
            return math.inf
        return math.sqrt(v)


def update(state: StreamState, x: float) -> StreamState:
    return state.update(x)


def sigma_hat(state: StreamState) -> float:
    return state.sigma_hat()


# --- whole-prefix versions ----------------------------------------------------


def running_mean(x: np.ndarray) -> np.ndarray:
    t = np.arange(1, x.size + 1)
    return x[0] + np.cumsum(x - x[0]) / t


def running_sigma(x: np.ndarray, method=IidSample()) -> np.ndarray:
    """``sigma_hat`` after each prefix of ``x`` (``inf`` where undefined)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n == 0:
        return np.empty(0)
    y = x - x[0]
    t = np.arange(1, n + 1, dtype=float)
    s1 = np.cumsum(y)
    if isinstance(method, IidSample):
        s2 = np.cumsum(y * y)
        with np.errstate(invalid="ignore", divide="ignore"):
            var = (s2 - s1 * s1 / t) / (t - 1)
        var[0] = math.nan
    else:
        var = _running_bartlett(y, s1, t, method)
    pos = var > 0  # NaN compares False
    out = np.full(n, math.inf)
    out[pos] = np.sqrt(var[pos])
    return out


def bandwidths(n: int, method: BartlettLongRun) -> np.ndarray:
    if method.bandwidth == "cuberoot":
        t = np.arange(1, n + 1)
        h = np.floor(np.cbrt(t)).astype(int)
        h -= (h**3 > t).astype(int)
        h += ((h + 1) ** 3 <= t).astype(int)
    else:
        h = np.full(n, method.bandwidth)
    return np.minimum(h, method.max_lag)


def _running_bartlett(y, s1, t, method: BartlettLongRun) -> np.ndarray:
    # With kernel c_0 = 1, c_h = 2 (1 - h / (H + 1)), P_h(t) = sum_{i>h} y_i y_{i-h}
    # and S the prefix sums,
    #   t * lrv(t) = sum_h c_h P_h(t) - ybar (sum_h c_h S(t-h) + C S(t) - sum_h c_h S(h))
    #                + ybar**2 (t C - sum_h h c_h),     C = sum_h c_h.
    # H is constant between consecutive cubes, so inside such a block every
    # lag sum is a convolution with the fixed kernel c.
    n = y.size
    big_h = bandwidths(n, method)
    h_max = int(big_h.max(initial=0))
    ypad = np.concatenate([np.zeros(h_max), y])
    spad = np.concatenate([np.zeros(h_max + 1), s1])  # spad[h_max + t] = S(t)
    ybar = s1 / t
    lrv = np.empty(n)
    lagged = np.zeros(h_max + 1)  # P_h at the start of the current block
    edges = np.flatnonzero(np.diff(big_h)) + 1
    for a, b in zip(np.concatenate([[0], edges]), np.concatenate([edges, [n]])):
        big = int(big_h[a])
        h = np.arange(big + 1)
        c = np.where(h == 0, 1.0, 2.0 * (1.0 - h / (big + 1.0)))
        # rows a..b-1 hold t = a+1..b; ypad[h_max + i - 1] = y_i
        v = np.convolve(ypad[h_max + a - big : h_max + b], c, mode="valid")
        q = np.dot(c, lagged[: big + 1]) + np.cumsum(y[a:b] * v)
        lead = np.convolve(spad[h_max + 1 + a - big : h_max + 1 + b], c, mode="valid")
        s_at_lags = spad[h_max + h]
        tt = t[a:b]
        ccum = c.sum()
        lrv[a:b] = (
            q
            - ybar[a:b] * (lead + ccum * s1[a:b] - np.dot(c, s_at_lags))
            + ybar[a:b] ** 2 * (tt * ccum - np.dot(h, c))
        ) / tt
        for k in range(h_max + 1):
            lagged[k] += np.dot(ypad[h_max + a : h_max + b], ypad[h_max + a - k : h_max + b - k])
    lrv[t <= big_h + 1] = math.nan
    return lrv
