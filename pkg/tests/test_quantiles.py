import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sharpcs import quantiles as q
from sharpcs.boundary import BoundaryShape, ShapeError

SMALL = q.PathGrid.default(1024)


@pytest.fixture(autouse=True)
def _fresh_memo():
    q.clear_memo()
    yield
    q.clear_memo()


# --- oracle ------------------------------------------------------------------------


def _kolmogorov_cdf(x, terms=200):
    k = np.arange(1, terms + 1)
    return 1 - 2 * np.sum((-1.0) ** (k + 1) * np.exp(-2 * k**2 * x**2))


@pytest.mark.parametrize("alpha", [0.01, 0.05, 0.1, 0.5])
def test_kolmogorov_two_sided_solves_series(alpha):
    x = q.kolmogorov_series_quantile(alpha, "two")
    assert _kolmogorov_cdf(x) == pytest.approx(1 - alpha, abs=1e-7)


def test_kolmogorov_reference_points():
    assert q.kolmogorov_series_quantile(0.05, "two") == pytest.approx(1.35810, abs=1e-5)
    assert q.kolmogorov_series_quantile(0.05, "one") == pytest.approx(1.22387, abs=1e-5)
    assert q.kolmogorov_series_quantile(0.5, "one") == pytest.approx(0.58871, abs=1e-5)


@given(st.floats(1e-4, 0.99))
def test_kolmogorov_one_sided_closed_form(alpha):
    assert q.kolmogorov_series_quantile(alpha, "one") == pytest.approx(
        math.sqrt(-math.log(alpha) / 2), abs=1e-7
    )


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2, 1.5])
def test_alpha_range(alpha):
    with pytest.raises(ValueError):
        q.kolmogorov_series_quantile(alpha)
    with pytest.raises(ValueError):
        q.critical_value(BoundaryShape.canonical(0, 0), alpha, n_paths=10, grid_n=16)


# --- empirical quantile ------------------------------------------------------------


def test_order_index_exact():
    # (1 - 0.05) * 100 is 95.00000000000001 in floats
    assert q.order_index(100, 0.05) == 95
    assert q.order_index(100, 0.1) == 90
    assert q.order_index(7, 0.5) == 4
    assert q.order_index(1, 0.99) == 1


def test_empirical_quantile_is_order_statistic():
    vals = np.arange(1.0, 101.0)[::-1]
    value, se = q.empirical_quantile(vals, 0.05)
    assert value == 95.0
    assert se > 0


def test_empirical_quantile_empty():
    with pytest.raises(ValueError):
        q.empirical_quantile([], 0.05)


@given(st.lists(st.floats(0, 10), min_size=1, max_size=200), st.floats(0.001, 0.999), st.floats(0.001, 0.999))
def test_quantile_monotone_in_alpha(values, a, b):
    lo, hi = sorted((a, b))
    assert q.empirical_quantile(values, lo)[0] >= q.empirical_quantile(values, hi)[0]


# --- grid --------------------------------------------------------------------------


def test_default_grid_structure():
    g = q.PathGrid.default()
    assert g.n_points == 8191 + 2 * 64
    assert g.points[0] == pytest.approx(1e-10)
    assert g.tails[-1] == pytest.approx(1e-10)
    assert np.all(np.diff(g.points) > 0)
    np.testing.assert_allclose(g.points + g.tails, 1.0, rtol=0, atol=1e-15)
    sp = g.spacings()
    assert sp.size == g.n_points + 1
    assert np.all(sp > 0)
    assert sp.sum() == pytest.approx(1.0, abs=1e-12)


def test_grid_validation():
    with pytest.raises(ValueError):
        q.PathGrid.from_points([0.5, 0.2])
    with pytest.raises(ValueError):
        q.PathGrid.from_points([0.0, 0.5])
    with pytest.raises(ValueError):
        q.PathGrid.default(1)


# --- bridge sampler ----------------------------------------------------------------


def test_bridge_deterministic_single_path():
    a = q.sample_bridge_sup(0.2, 0.1, SMALL, 1, 42).values
    q.clear_memo()
    b = q.sample_bridge_sup(0.2, 0.1, SMALL, 1, 42).values
    assert a.tobytes() == b.tobytes()


def test_bridge_workers_identical():
    a = q.sample_bridge_sup(0.25, 0.25, SMALL, 600, 9, workers=1).values.copy()
    q.clear_memo()
    b = q.sample_bridge_sup(0.25, 0.25, SMALL, 600, 9, workers=3).values
    assert a.tobytes() == b.tobytes()


def test_bridge_prefix_consistent():
    # path i depends only on (seed, i)
    a = q.sample_bridge_sup(0, 0, SMALL, 300, 1).values
    b = q.sample_bridge_sup(0, 0, SMALL, 700, 1).values
    np.testing.assert_array_equal(a, b[:300])


def test_bridge_rejects_bad_gamma():
    with pytest.raises(ShapeError):
        q.sample_bridge_sup(0.5, 0, SMALL, 10)


def test_bridge_matches_manual_construction():
    from sharpcs import rng

    g1, g2 = 0.1, 0.3
    got = q.bridge_draws(g1, g2, SMALL, 5, 3)
    x, tail = SMALL.points, SMALL.tails
    for i in range(5):
        z = rng.substream(3, i, rng.BRIDGE).standard_normal(SMALL.n_points + 1)
        w = np.cumsum(z * np.sqrt(SMALL.spacings()))
        b = (w[:-1] - x * w[-1]) / (x**g1 * tail**g2)
        assert got[0][i] == pytest.approx(np.abs(b).max(), rel=1e-14)
        assert got[1][i] == pytest.approx(max(b.max(), 0.0), rel=1e-14)
        assert got[2][i] == pytest.approx(max(-b.min(), 0.0), rel=1e-14)


def test_one_sided_sample_is_pooled_antithetic():
    two = q.sample_bridge_sup(0, 0, SMALL, 50, 2, "two")
    one = q.sample_bridge_sup(0, 0, SMALL, 50, 2, "one")
    assert len(one) == 2 * len(two)
    pairs = one.values.reshape(-1, 2)
    np.testing.assert_array_equal(pairs.max(axis=1), two.values)


def test_grid_refinement_never_lowers_sup():
    # same Brownian path: W on the fine grid restricted to a subset of its points
    fine = q.PathGrid.default(512)
    keep = np.arange(0, fine.n_points, 3)
    gen = np.random.default_rng(5)
    for _ in range(50):
        w = np.cumsum(gen.standard_normal(fine.n_points + 1) * np.sqrt(fine.spacings()))
        b = w[:-1] - fine.points * w[-1]
        weighted = np.abs(b) / (fine.points**0.25 * fine.tails**0.25)
        assert weighted[keep].max() <= weighted.max()


@pytest.mark.parametrize("sided,oracle", [("two", 1.35810), ("one", 1.22387)])
def test_bridge_quantile_near_oracle(sided, oracle):
    s = q.sample_bridge_sup(0, 0, q.PathGrid.default(2048), 20_000, 0, sided)
    value, se = s.quantile(0.05)
    # the grid bias lowers the sup by about 0.58 / sqrt(grid_n)
    assert abs(value - oracle) <= 3 * se + 0.6 / math.sqrt(2048)


def _shared_path_sups(grid_n, g1, g2, n_paths, seed=0):
    # Brownian paths on the 2 * grid_n grid; the grid_n grid is a subset of it
    fine = q.PathGrid.default(2 * grid_n)
    coarse = q.PathGrid.default(grid_n)
    idx = np.searchsorted(fine.points, coarse.points)
    assert np.array_equal(fine.points[idx], coarse.points)
    weight = fine.points**-g1 * fine.tails**-g2
    scale = np.sqrt(fine.spacings())
    gen = np.random.default_rng(seed)
    out_f, out_c = [], []
    for _ in range(n_paths // 500):
        w = np.cumsum(gen.standard_normal((500, fine.n_points + 1)) * scale, axis=1)
        b = np.abs(w[:, :-1] - fine.points * w[:, -1:]) * weight
        out_f.append(b.max(axis=1))
        out_c.append(b[:, idx].max(axis=1))
    return np.concatenate(out_c), np.concatenate(out_f)


@pytest.mark.parametrize("g1,g2", [(0.0, 0.0), (0.25, 0.25), (0.4, 0.4)])
def test_grid_doubling_stability(g1, g2):
    coarse, fine = _shared_path_sups(q.DEFAULT_GRID_N, g1, g2, 5000)
    assert np.all(fine >= coarse)
    shift = q.empirical_quantile(fine, 0.05)[0] - q.empirical_quantile(coarse, 0.05)[0]
    assert 0 <= shift < 0.01


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 0.49), st.floats(0, 0.49), st.sampled_from([0.01, 0.05, 0.1]))
def test_sandwich_on_shared_paths(g1, g2, alpha):
    two = q.sample_bridge_sup(g1, g2, q.PathGrid.default(128), 400, 0, "two")
    one = q.sample_bridge_sup(g1, g2, q.PathGrid.default(128), 400, 0, "one")
    assert one.quantile(alpha)[0] <= two.quantile(alpha)[0] <= one.quantile(alpha / 2)[0]


def test_quantile_strictly_decreasing_on_fixed_sample():
    s = q.sample_bridge_sup(0, 0.25, SMALL, 5000, 0)
    vals = [s.quantile(a)[0] for a in (0.01, 0.05, 0.1, 0.5)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


# --- Wiener sampler ----------------------------------------------------------------


def test_wiener_grid_contains_endpoints():
    shape = BoundaryShape.custom(lambda s: np.ones_like(s), 0, 0, e_rho=1.0, name="box")
    y = q.wiener_grid(shape, 2.0, 256)
    assert y[-1] == 2.0
    assert 1.0 in y
    assert np.all(np.diff(y) > 0)


@pytest.mark.parametrize("y_max", [0.0, -1.0, math.inf])
def test_wiener_bad_y_max(y_max):
    with pytest.raises(ValueError):
        q.sample_wiener_sup(BoundaryShape.canonical(0, 0), y_max, 64, 5)


def test_wiener_zero_region_does_not_matter():
    shape = BoundaryShape.custom(lambda s: 1.0 / (1.0 + s), 0, 0, e_rho=1.0, name="cut")
    a = q.sample_wiener_sup(shape, 1.0, 512, 500, 4).values.copy()
    b = q.sample_wiener_sup(shape, 2.0, 512, 500, 4).values
    # y_max = 2 adds grid points only where rho vanishes
    np.testing.assert_array_equal(a, b)


def test_wiener_empty_sample():
    s = q.sample_wiener_sup(BoundaryShape.canonical(0, 0), 10.0, 64, 0)
    assert len(s) == 0
    with pytest.raises(ValueError):
        s.quantile(0.05)


def test_wiener_close_to_bridge():
    shape = BoundaryShape.canonical(0, 0)
    w = q.sample_wiener_sup(shape, 1e4, 2048, 20_000, 1).quantile(0.05)[0]
    b = q.sample_bridge_sup(0, 0, q.PathGrid.default(2048), 20_000, 0).quantile(0.05)[0]
    assert abs(w - b) < 0.02


def test_default_y_max_rule():
    shape = BoundaryShape.custom(lambda s: 1.0 / (1.0 + s), 0, 0, name="k", a2_bound=0.01)
    v = q.default_y_max(shape)
    # smallest V with 3 * A * V**(g2 - 1/2) < 1e-3, here (3 * 0.01 / 1e-3) ** 2 = 900
    assert v == pytest.approx(900.0, rel=1e-9)
    assert 3 * 0.01 * v**-0.5 < 1e-3
    assert q.default_y_max(BoundaryShape.canonical(0, 0.45)) == 1e6
    box = BoundaryShape.custom(lambda s: np.ones_like(s), 0, 0, e_rho=3.0, name="box")
    assert q.default_y_max(box) == 3.0


# --- critical values and cache -----------------------------------------------------


def test_critical_value_provenance(tmp_path):
    cache = q.QuantileCache(tmp_path / "q.tsv")
    shape = BoundaryShape.canonical(0, 0)
    cv = q.critical_value(shape, 0.05, "two", 2000, 256, 5, cache)
    assert (cv.mc_paths, cv.grid_n, cv.seed, cv.shape_key) == (2000, 256, 5, shape.key)
    assert cv.std_error > 0
    line = (tmp_path / "q.tsv").read_text().strip()
    assert line.split()[:7] == ["v1", shape.key, "0.05", "two", "256", "2000", "5"]
    q.clear_memo()
    again = q.critical_value(shape, 0.05, "two", 2000, 256, 5, cache)
    assert again == cv


def test_cache_ignores_foreign_lines(tmp_path):
    path = tmp_path / "q.tsv"
    path.write_text("garbage\nv0 a b c\n")
    cache = q.QuantileCache(path)
    assert cache.get("canonical:g1=0,g2=0", 0.05, "two", 1, 1, 0) is None
    cache.put(q.CriticalValue(0.05, q.Sided.TWO, "k", 1.5, 10, 8, 0, 0.1))
    assert cache.get("k", 0.05, "two", 8, 10, 0).value == 1.5


def test_custom_shape_uses_wiener_sampler():
    shape = BoundaryShape.custom(lambda s: 1.0 / (1.0 + s), 0, 0, name="kolm", a2_bound=1.0)
    cv = q.critical_value(shape, 0.05, "two", 4000, 1024, 0)
    assert abs(cv.value - 1.3581) < 0.05


def test_critical_value_positive():
    with pytest.raises(ValueError):
        q.CriticalValue(0.05, q.Sided.TWO, "k", 0.0, 1, 1, 0, 0.0)
