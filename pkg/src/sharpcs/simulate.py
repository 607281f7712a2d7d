"""Monte Carlo experiments checking the asymptotic guarantees at finite scale.

Every replication ``r`` draws its data from substream ``r`` of the run seed,
so reports are reproducible bit for bit and do not depend on how
replications are spread over worker processes.

Horizons are truncations: a crossing after the horizon is never seen, so
reported non-coverage and rejection rates are lower bounds for the
open-ended procedure.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, is_dataclass
from functools import partial
from typing import Sequence

import numpy as np
from scipy.signal import lfilter
from scipy.stats import ks_2samp

from . import rng
from .boundary import BoundaryShape
from .estimators import BartlettLongRun, IidSample, resolve_l_m, running_mean, running_sigma
from .quantiles import (
    DEFAULT_GRID_N,
    DEFAULT_PATHS,
    CriticalValue,
    PathGrid,
    Sided,
    critical_value,
    kolmogorov_series_quantile,
    order_index,
    sample_bridge_sup,
    sample_wiener_sup,
)
from .sequence import BatteryMode, half_widths

# --- data generating processes ----------------------------------------------


@dataclass(frozen=True)
class IidNormal:
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError("IidNormal needs finite mu and sigma > 0")

    @property
    def mean(self) -> float:
        return self.mu

    @property
    def variance(self) -> float:
        return self.sigma**2

    long_run_variance = variance

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        return self.mu + self.sigma * gen.standard_normal(n)


@dataclass(frozen=True)
class IidCenteredExponential:
    """Exponential(rate) shifted to have mean ``mu``; a skewed stress case."""

    rate: float = 1.0
    mu: float = 0.0

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate) and math.isfinite(self.mu)):
            raise ValueError("IidCenteredExponential needs rate > 0 and finite mu")

    @property
    def mean(self) -> float:
        return self.mu

    @property
    def variance(self) -> float:
        return 1.0 / self.rate**2

    long_run_variance = variance

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        scale = 1.0 / self.rate
        return gen.standard_exponential(n) * scale - scale + self.mu


@dataclass(frozen=True)
class AR1:
    """Stationary Gaussian AR(1): ``x_t - mu = phi (x_{t-1} - mu) + eps_t``."""

    phi: float
    sigma: float = 1.0
    mu: float = 0.0

    def __post_init__(self):
        if not abs(self.phi) < 1:
            raise ValueError("AR1 needs |phi| < 1")
        if not (self.sigma > 0 and math.isfinite(self.sigma) and math.isfinite(self.mu)):
            raise ValueError("AR1 needs sigma > 0 and finite mu")

    @property
    def mean(self) -> float:
        return self.mu

    @property
    def variance(self) -> float:
        return self.sigma**2 / (1.0 - self.phi**2)

    @property
    def long_run_variance(self) -> float:
        return self.sigma**2 / (1.0 - self.phi) ** 2

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        eps = self.sigma * gen.standard_normal(n)
        if n == 0:
            return eps
        start = eps[0] / math.sqrt(1.0 - self.phi**2)
        out = np.empty(n)
        out[0] = start
        if n > 1:
            out[1:], _ = lfilter([1.0], [1.0, -self.phi], eps[1:], zi=[self.phi * start])
        return out + self.mu


DGP = IidNormal | IidCenteredExponential | AR1


# --- reports ------------------------------------------------------------------


def _plain(value):
    if isinstance(value, BoundaryShape):
        return value.key
    if is_dataclass(value) and not isinstance(value, type):
        d = {"kind": type(value).__name__}
        d.update({k: _plain(v) for k, v in asdict(value).items()})
        return d
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if hasattr(value, "value") and isinstance(value.value, str):  # enums
        return value.value
    return value


@dataclass
class SimReport:
    experiment: str
    n_reps: int
    horizon: int
    estimate: float
    binomial_se: float
    stopping_time_quantiles: dict | None = None
    passed: bool | None = None
    details: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _plain({k: getattr(self, k) for k in self.__dataclass_fields__})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_text(self) -> str:
        return _kv_lines(self.to_dict())


@dataclass
class CheckReport:
    """Outcome of a table-valued check (one row per configuration)."""

    experiment: str
    passed: bool
    rows: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _plain({k: getattr(self, k) for k in self.__dataclass_fields__})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_text(self) -> str:
        return _kv_lines(self.to_dict())


def _kv_lines(d: dict, prefix: str = "") -> str:
    lines = []
    for k in sorted(d):
        v = d[k]
        name = f"{prefix}{k}"
        if isinstance(v, dict):
            lines.append(_kv_lines(v, name + "."))
        elif isinstance(v, list) and v and isinstance(v[0], dict):
            for i, row in enumerate(v):
                lines.append(_kv_lines(row, f"{name}.{i}."))
        else:
            lines.append(f"{name}={json.dumps(v)}")
    return "\n".join(x for x in lines if x)


def binomial_se(p: float, n: int) -> float:
    return math.sqrt(p * (1 - p) / n) if n > 0 else math.nan


def ks_threshold(n1: int, n2: int, level: float = 0.01) -> float:
    """Asymptotic two-sample KS critical distance at ``level``."""
    return kolmogorov_series_quantile(level) * math.sqrt((n1 + n2) / (n1 * n2))


# --- shared machinery ------------------------------------------------------------


@dataclass(frozen=True)
class _Setup:
    dgp: DGP
    m: int
    horizon: int
    shape: BoundaryShape
    c_value: float
    l_m: int
    var_method: object
    seed: int


def _validate(m: int, horizon: int, n_reps: int) -> None:
    if m < 1:
        raise ValueError("m must be >= 1")
    if horizon < m:
        raise ValueError("horizon must be >= m")
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")


def _resolve_c(c, shape, alpha, sided: Sided) -> CriticalValue:
    if c is None:
        return critical_value(shape, alpha, sided)
    if isinstance(c, CriticalValue):
        if c.sided is not sided:
            raise ValueError(f"expected a {sided.value}-sided critical value")
        return c
    return CriticalValue.fixed(float(c), sided, alpha, shape.key)


def _bounds(setup: _Setup, r: int):
    """Running mean and interval endpoints of replication ``r``."""
    x = setup.dgp.sample(rng.substream(setup.seed, r, rng.DATA), setup.horizon)
    mean = running_mean(x)
    sigma = running_sigma(x, setup.var_method)
    hw = half_widths(setup.shape, setup.m, setup.l_m, sigma, setup.c_value)
    return mean, mean - hw, mean + hw


def _run(func, setup: _Setup, n_reps: int, workers: int) -> np.ndarray:
    parts = rng.map_ranges(partial(func, setup), n_reps, workers)
    return np.concatenate(parts) if parts else np.empty(0)


def _config(**kw) -> dict:
    return _plain(kw)


# --- coverage ---------------------------------------------------------------------


def _coverage_block(setup: _Setup, start: int, stop: int) -> np.ndarray:
    out = np.empty(stop - start, dtype=bool)
    mu = setup.dgp.mean
    for j, r in enumerate(range(start, stop)):
        _, lower, upper = _bounds(setup, r)
        out[j] = bool(np.all((lower < mu) & (mu < upper)))
    return out


def simulate_coverage(
    dgp: DGP,
    m: int,
    horizon: int,
    shape: BoundaryShape,
    alpha: float = 0.05,
    c=None,
    n_reps: int = 2000,
    seed: int = 0,
    l_m=1,
    var_method=IidSample(),
    workers: int = 1,
) -> SimReport:
    """Rate of replications whose true mean stays inside every interval up to ``horizon``."""
    _validate(m, horizon, n_reps)
    cv = _resolve_c(c, shape, alpha, Sided.TWO)
    setup = _Setup(dgp, m, horizon, shape, cv.value, resolve_l_m(l_m, m), var_method, seed)
    covered = _run(_coverage_block, setup, n_reps, workers)
    n_cov = int(covered.sum())
    est = n_cov / n_reps
    lo = 1 - alpha - 0.02
    return SimReport(
        "coverage",
        n_reps,
        horizon,
        est,
        binomial_se(est, n_reps),
        passed=bool(lo <= est <= 1 - alpha + 0.02),
        details={"covered": n_cov, "not_covered": n_reps - n_cov, "c": cv.value},
        config=_config(dgp=dgp, m=m, shape=shape, alpha=alpha, l_m=setup.l_m, var_method=var_method, seed=seed),
    )


# --- rejection / stopping ---------------------------------------------------------


def _stopping_block(setup: _Setup, mu0: float, start: int, stop: int) -> np.ndarray:
    out = np.empty(stop - start)
    for j, r in enumerate(range(start, stop)):
        _, lower, upper = _bounds(setup, r)
        reject = ~((lower < mu0) & (mu0 < upper))
        out[j] = float(np.argmax(reject) + 1) if reject.any() else math.inf
    return out


def stopping_times(setup: _Setup, mu0: float, n_reps: int, workers: int = 1) -> np.ndarray:
    parts = rng.map_ranges(partial(_stopping_block, setup, float(mu0)), n_reps, workers)
    return np.concatenate(parts)


def _order_quantiles(values: np.ndarray, probs=(0.1, 0.5, 0.9)) -> dict:
    s = np.sort(values)
    return {f"q{int(round(p * 100)):02d}": float(s[order_index(s.size, 1 - p) - 1]) for p in probs}


def simulate_rejection(
    dgp: DGP,
    mu0: float,
    m: int,
    horizon: int,
    shape: BoundaryShape,
    alpha: float = 0.05,
    c=None,
    n_reps: int = 1000,
    seed: int = 0,
    l_m=1,
    var_method=IidSample(),
    workers: int = 1,
) -> SimReport:
    """Rejection-by-horizon rate of the two-sided test of ``mu0`` and its stopping times.

    Non-rejecting replications enter the stopping-time quantiles as ``inf``.
    """
    _validate(m, horizon, n_reps)
    cv = _resolve_c(c, shape, alpha, Sided.TWO)
    setup = _Setup(dgp, m, horizon, shape, cv.value, resolve_l_m(l_m, m), var_method, seed)
    tau = stopping_times(setup, mu0, n_reps, workers)
    rejected = np.isfinite(tau)
    est = float(rejected.mean())
    se = binomial_se(est, n_reps)
    null = mu0 == dgp.mean
    passed = est <= alpha + 3 * se if null else est >= 0.995
    return SimReport(
        "rejection",
        n_reps,
        horizon,
        est,
        se,
        stopping_time_quantiles=_order_quantiles(tau),
        passed=bool(passed),
        details={
            "rejected": int(rejected.sum()),
            "null_true": bool(null),
            "mean_stopping_time": float(tau[rejected].mean()) if rejected.any() else math.inf,
            "c": cv.value,
        },
        config=_config(dgp=dgp, mu0=mu0, m=m, shape=shape, alpha=alpha, l_m=setup.l_m, var_method=var_method, seed=seed),
    )


# --- family-wise error over hierarchical nulls ------------------------------------


def _fwer_block(setup: _Setup, mus: np.ndarray, mode: BatteryMode, start: int, stop: int) -> np.ndarray:
    # columns: any false rejection, closest-null event, prefix violations
    out = np.zeros((stop - start, 3), dtype=np.int64)
    mu_x = setup.dgp.mean
    right = mode in (BatteryMode.RIGHT_ONLY, BatteryMode.BOTH)
    left = mode in (BatteryMode.LEFT_ONLY, BatteryMode.BOTH)
    above = np.flatnonzero(mus >= mu_x)
    below = np.flatnonzero(mus <= mu_x)
    for j, r in enumerate(range(start, stop)):
        _, lower, upper = _bounds(setup, r)
        any_false = False
        closest = False
        violations = 0
        if right:
            rej = mus[None, :] <= lower[:, None]
            violations += int(np.count_nonzero(np.diff(rej.astype(np.int8), axis=1) > 0))
            if above.size:
                any_false |= bool(rej[:, above].any())
                closest |= bool(rej[:, above[0]].any())
        if left:
            rej = mus[None, :] >= upper[:, None]
            violations += int(np.count_nonzero(np.diff(rej.astype(np.int8), axis=1) < 0))
            if below.size:
                any_false |= bool(rej[:, below].any())
                closest |= bool(rej[:, below[-1]].any())
        out[j] = (any_false, closest, violations)
    return out


def simulate_fwer(
    dgp: DGP,
    mus: Sequence[float],
    mode,
    m: int,
    horizon: int,
    shape: BoundaryShape,
    alpha: float = 0.05,
    c=None,
    n_reps: int = 1000,
    seed: int = 0,
    l_m=1,
    var_method=IidSample(),
    workers: int = 1,
) -> SimReport:
    """Probability of any false rejection over the grid and all times up to ``horizon``.

    Also records, per replication, whether the any-false-rejection event
    equals the rejection event of the true null closest to the mean, and
    counts rejection patterns that are not a prefix (right) or suffix
    (left) of the grid.
    """
    mode = BatteryMode(mode)
    _validate(m, horizon, n_reps)
    mus = np.asarray(sorted(float(x) for x in mus))
    if np.any(np.diff(mus) <= 0):
        raise ValueError("mus must be distinct")
    sided = Sided.TWO if mode is BatteryMode.BOTH else Sided.ONE
    cfg = _config(dgp=dgp, mus=mus, mode=mode, m=m, shape=shape, alpha=alpha, var_method=var_method, seed=seed)
    if mus.size == 0:
        return SimReport("fwer", n_reps, horizon, 0.0, 0.0, passed=True,
                         details={"false_rejections": 0, "event_mismatches": 0, "prefix_violations": 0},
                         config=cfg)
    cv = _resolve_c(c, shape, alpha, sided)
    setup = _Setup(dgp, m, horizon, shape, cv.value, resolve_l_m(l_m, m), var_method, seed)
    res = rng.map_ranges(partial(_fwer_block, setup, mus, mode), n_reps, workers)
    res = np.concatenate(res)
    n_false = int(res[:, 0].sum())
    mismatches = int(np.count_nonzero(res[:, 0] != res[:, 1]))
    violations = int(res[:, 2].sum())
    est = n_false / n_reps
    se = binomial_se(est, n_reps)
    cfg["l_m"] = setup.l_m
    return SimReport(
        "fwer",
        n_reps,
        horizon,
        est,
        se,
        passed=bool(est <= alpha + 3 * se and mismatches == 0 and violations == 0),
        details={
            "false_rejections": n_false,
            "event_mismatches": mismatches,
            "prefix_violations": violations,
            "c": cv.value,
        },
        config=cfg,
    )


# --- limit theorem checks -----------------------------------------------------------


def _supstat_block(setup: _Setup, start: int, stop: int) -> np.ndarray:
    out = np.empty(stop - start)
    m, mu = setup.m, setup.dgp.mean
    t = np.arange(1, setup.horizon + 1)
    weight = np.asarray(setup.shape(t / m)) / math.sqrt(m)
    for j, r in enumerate(range(start, stop)):
        x = setup.dgp.sample(rng.substream(setup.seed, r, rng.DATA), setup.horizon)
        sigma = running_sigma(x, setup.var_method)
        stat = np.abs(weight * np.cumsum(x - mu)) / sigma  # 1 / inf = 0
        out[j] = float(stat[setup.l_m :].max(initial=0.0))
    return out


def sup_statistics(
    dgp: DGP,
    m: int,
    shape: BoundaryShape,
    n_reps: int,
    seed: int,
    var_method=IidSample(),
    horizon_factor: int = 100,
    l_m=1,
    workers: int = 1,
) -> np.ndarray:
    """Finite-sample ``sup_{l_m < t <= horizon} |rho(t/m) S_t / (sqrt(m) sigma_hat_t)|`` per replication."""
    setup = _Setup(dgp, m, horizon_factor * m, shape, math.nan, resolve_l_m(l_m, m), var_method, seed)
    return _run(_supstat_block, setup, n_reps, workers)


def limit_sample(shape: BoundaryShape, n_paths: int = DEFAULT_PATHS, grid_n: int = DEFAULT_GRID_N,
                 seed: int = 0, workers: int = 1) -> np.ndarray:
    """Draws of ``Z = sup_y |rho(y) W(y)|``."""
    if shape.is_canonical:
        return sample_bridge_sup(shape.gamma1, shape.gamma2, PathGrid.default(grid_n), n_paths, seed,
                                 "two", workers).values
    return sample_wiener_sup(shape, None, grid_n, n_paths, seed, "two", workers).values


def check_sup_statistic(
    dgp: DGP,
    m_list: Sequence[int],
    shape: BoundaryShape,
    n_reps: int = 2000,
    seed: int = 0,
    var_method=IidSample(),
    horizon_factor: int = 100,
    l_m=1,
    z_paths: int = DEFAULT_PATHS,
    z_seed: int = 7,
    grid_n: int = DEFAULT_GRID_N,
    workers: int = 1,
) -> CheckReport:
    """KS distance between the finite-sample sup statistic and draws of its limit.

    Passes when the distance at the largest ``m`` is below the 1% two-sample
    KS threshold and the distances decrease strictly in ``m``.
    """
    z = limit_sample(shape, z_paths, grid_n, z_seed, workers)
    rows = []
    for m in sorted(m_list):
        stats = sup_statistics(dgp, m, shape, n_reps, seed, var_method, horizon_factor, l_m, workers)
        ks = ks_2samp(stats, z)
        rows.append(
            {
                "m": m,
                "ks_distance": float(ks.statistic),
                "p_value": float(ks.pvalue),
                "threshold_1pct": ks_threshold(n_reps, z.size),
            }
        )
    dists = [r["ks_distance"] for r in rows]
    decreasing = all(b < a for a, b in zip(dists, dists[1:]))
    passed = bool(rows and dists[-1] < rows[-1]["threshold_1pct"] and decreasing)
    return CheckReport(
        "supstat",
        passed,
        rows,
        _config(dgp=dgp, shape=shape, n_reps=n_reps, seed=seed, var_method=var_method,
                horizon_factor=horizon_factor, l_m=l_m, z_paths=z_paths, z_seed=z_seed, grid_n=grid_n,
                decreasing=decreasing),
    )


def _hr_block(dgp, m, gammas, side, v, horizon_factor, seed, start, stop) -> np.ndarray:
    gammas = np.asarray(gammas)
    out = np.empty((stop - start, gammas.size))
    if side == "prem":
        t = np.arange(1, m, dtype=float)
        scale = 1.0 / (m ** (0.5 - gammas)[:, None] * t[None, :] ** gammas[:, None])
        n = m - 1
    else:
        mv = m * v
        k0 = math.floor(mv)
        t = np.arange(k0 + 1, horizon_factor * k0 + 1, dtype=float)
        scale = mv ** (0.5 - gammas)[:, None] / t[None, :] ** (1.0 - gammas)[:, None]
        n = t.size
    for j, r in enumerate(range(start, stop)):
        gen = rng.substream(seed, r, rng.DATA)
        if side == "prem":
            x = dgp.sample(gen, n)
        else:
            # only the increments after floor(mV) enter the statistic
            x = dgp.sample(gen, k0 + n)[k0:]
        s = np.abs(np.cumsum(x - dgp.mean))
        out[j] = (scale * s[None, :]).max(axis=1, initial=0.0)
    return out


def check_hajek_renyi(
    gamma_tilde,
    m: int,
    c_list: Sequence[float],
    n_reps: int = 5000,
    seed: int = 0,
    side: str = "prem",
    dgp: DGP = IidNormal(),
    v: float = 1.0,
    horizon_factor: int = 100,
    workers: int = 1,
) -> CheckReport:
    """Empirical exceedance of the weighted partial-sum suprema against their bounds.

    ``side="prem"``:  ``P(sup_{t<m} |S_t| / (m**(1/2-g) t**g) > C) <= s2 / (C**2 (1-2g))``.
    ``side="postmv"``: ``P(sup_{t>mV} (mV)**(1/2-g) |S_t - S_mV| / t**(1-g) > C)
    <= s2 (1 + 1/(1-2g)) / C**2``, the supremum truncated at
    ``horizon_factor * mV``.  ``gamma_tilde`` may be a list; all values share
    the same simulated paths.
    """
    side = side.lower()
    if side not in ("prem", "postmv"):
        raise ValueError("side must be 'prem' or 'postmv'")
    gammas = np.atleast_1d(np.asarray(gamma_tilde, dtype=float))
    if np.any((gammas < 0) | (gammas >= 0.5)):
        raise ValueError("gamma_tilde must lie in [0, 1/2)")
    if m < 2:
        raise ValueError("m must be >= 2")
    func = partial(_hr_block, dgp, m, tuple(gammas), side, v, horizon_factor, seed)
    sups = np.concatenate(rng.map_ranges(func, n_reps, workers))
    s2 = dgp.variance
    rows = []
    for gi, g in enumerate(gammas):
        for c in c_list:
            if side == "prem":
                bound = s2 / (c * c * (1 - 2 * g))
            else:
                bound = s2 * (1 + 1 / (1 - 2 * g)) / (c * c)
            est = float(np.mean(sups[:, gi] > c))
            se = binomial_se(est, n_reps)
            rows.append(
                {"gamma": float(g), "C": float(c), "m": m, "exceedance": est, "se": se, "bound": bound,
                 "ok": bool(est <= bound + 3 * se)}
            )
    return CheckReport(
        "hajekrenyi",
        all(r["ok"] for r in rows),
        rows,
        _config(side=side, dgp=dgp, n_reps=n_reps, seed=seed, v=v, horizon_factor=horizon_factor),
    )


def check_prop43(
    gamma1: float,
    gamma2: float,
    n_paths: int = DEFAULT_PATHS,
    grid_n: int = DEFAULT_GRID_N,
    bridge_seed: int = 0,
    wiener_seed: int = 1,
    y_max: float | None = None,
    workers: int = 1,
) -> CheckReport:
    """Two-sample KS comparison of the bridge and direct Wiener samplers."""
    shape = BoundaryShape.canonical(gamma1, gamma2)
    b = sample_bridge_sup(gamma1, gamma2, PathGrid.default(grid_n), n_paths, bridge_seed, "two", workers)
    w = sample_wiener_sup(shape, y_max, grid_n, n_paths, wiener_seed, "two", workers)
    ks = ks_2samp(b.values, w.values)
    thr = ks_threshold(n_paths, n_paths)
    row = {
        "g1": float(gamma1),
        "g2": float(gamma2),
        "ks_distance": float(ks.statistic),
        "p_value": float(ks.pvalue),
        "threshold_1pct": thr,
        "bridge_q95": b.quantile(0.05)[0],
        "wiener_q95": w.quantile(0.05)[0],
    }
    return CheckReport(
        "prop43",
        bool(ks.statistic < thr),
        [row],
        _config(n_paths=n_paths, grid_n=grid_n, bridge_seed=bridge_seed, wiener_seed=wiener_seed,
                y_max=y_max),
    )
