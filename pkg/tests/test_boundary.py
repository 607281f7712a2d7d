import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sharpcs.boundary import (
    BoundaryShape,
    ShapeError,
    ShapeValidationError,
    boundary_width,
    parse_shape,
    rho_eval,
    validate_shape,
)

gammas = st.floats(0.0, 0.49)


def test_rho_canonical_values():
    assert rho_eval(BoundaryShape.canonical(0, 0), 1.0) == 0.5
    assert rho_eval(BoundaryShape.canonical(0.25, 0.25), 1.0) == pytest.approx(2**-0.5, rel=1e-15)


def test_rho_tail_limit():
    shape = BoundaryShape.canonical(0, 0.4)
    vals = [rho_eval(shape, s) * s**0.6 for s in (1e2, 1e4, 1e6)]
    # (s / (1 + s)) ** 0.6 -> 1 from below
    assert vals[0] < vals[1] < vals[2] < 1
    assert vals[2] == pytest.approx(1.0, abs=1e-6)


def test_rho_scalar_and_array_agree():
    shape = BoundaryShape.canonical(0.1, 0.3)
    s = np.array([1e-3, 0.5, 2.0, 1e5])
    arr = rho_eval(shape, s)
    assert isinstance(rho_eval(shape, 2.0), float)
    # numpy's vectorized pow and libm's scalar pow may differ in the last bit
    np.testing.assert_allclose(arr, [rho_eval(shape, float(v)) for v in s], rtol=4e-16)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_rho_rejects_bad_argument(bad):
    with pytest.raises(ValueError):
        rho_eval(BoundaryShape.canonical(0, 0), bad)


def test_custom_shape_vanishes_beyond_endpoint():
    shape = BoundaryShape.custom(lambda s: np.ones_like(s), 0.0, 0.0, e_rho=2.0, name="box")
    assert rho_eval(shape, 2.0) == 1.0
    assert rho_eval(shape, 2.5) == 0.0
    assert boundary_width(shape, 10, 30) == math.inf
    assert boundary_width(shape, 10, 20) == pytest.approx(math.sqrt(10) / 20)


@pytest.mark.parametrize("g", [-0.1, 0.5, 0.7, math.nan])
def test_exponent_range(g):
    with pytest.raises(ShapeError):
        BoundaryShape.canonical(g, 0.0)
    with pytest.raises(ShapeError):
        BoundaryShape.canonical(0.0, g)


def test_boundary_width_values():
    shape = BoundaryShape.canonical(0, 0)
    assert boundary_width(shape, 100, 100) == pytest.approx(0.2, rel=1e-15)
    assert boundary_width(shape, 100, 1) == pytest.approx(10.1, rel=1e-15)


def test_boundary_width_shrinks_with_g2():
    shape = BoundaryShape.canonical(0, 0.4)
    b = [boundary_width(shape, 100, t) for t in (100, 10_000, 1_000_000)]
    assert b[2] < b[1] < b[0]


@pytest.mark.parametrize("m,t", [(0, 1), (1, 0)])
def test_boundary_width_input_errors(m, t):
    with pytest.raises(ValueError):
        boundary_width(BoundaryShape.canonical(0, 0), m, t)


@settings(max_examples=200, deadline=None)
@given(gammas, st.floats(0.01, 0.49), st.integers(1, 10_000))
def test_width_strictly_decreasing_late(g1, g2, m):
    shape = BoundaryShape.canonical(g1, g2)
    t = np.unique(np.geomspace(10 * m, 1000 * m, 200).astype(np.int64))
    w = boundary_width(shape, m, t)
    assert np.all(np.diff(w) < 0)


@settings(max_examples=300, deadline=None)
@given(gammas, gammas, st.integers(1, 10**6), st.integers(1, 10**8))
def test_scale_identity(g1, g2, m, t):
    shape = BoundaryShape.canonical(g1, g2)
    r = rho_eval(shape, t / m)
    got = boundary_width(shape, m, t) * t * r
    assert abs(got - math.sqrt(m)) <= 4 * np.spacing(math.sqrt(m))


@settings(max_examples=300, deadline=None)
@given(gammas, gammas, st.floats(1e-8, 1e8))
def test_rho_closed_form_identity(g1, g2, s):
    shape = BoundaryShape.canonical(g1, g2)
    val = rho_eval(shape, s) * s**g1 * (1 + s) ** (1 - g1 - g2)
    assert val == pytest.approx(1.0, rel=1e-13)


def test_validate_examples():
    rep = validate_shape(BoundaryShape.canonical(0.25, 0.25))
    assert rep.ok
    # s**g1 rho(s) = (1 + s)**(g1 + g2 - 1) -> 1 as s -> 0
    assert rep.sup_small == pytest.approx(1.0, abs=1e-9)
    assert validate_shape(BoundaryShape.canonical(0, 0)).ok


def test_validate_rejects_inconsistent_exponent():
    shape = BoundaryShape.custom(lambda s: 1.0 / s, 0.4, 0.0, name="inv")
    rep = validate_shape(shape)
    assert not rep.ok
    assert any(msg.startswith("small-s") for msg in rep.messages)
    with pytest.raises(ShapeValidationError):
        validate_shape(shape, strict=True)


def test_validate_negative_rho():
    shape = BoundaryShape.custom(lambda s: np.sin(s), 0.0, 0.0, name="sine")
    with pytest.raises(ShapeError):
        validate_shape(shape)


def test_validate_probe_grid_must_span():
    with pytest.raises(ValueError):
        validate_shape(BoundaryShape.canonical(0, 0), probe_grid=np.geomspace(1e-3, 1e3, 50))


def test_shape_text_roundtrip():
    shape = BoundaryShape.canonical(0.25, 0)
    assert shape.key == "canonical:g1=0.25,g2=0"
    assert parse_shape(shape.key) == shape


@settings(max_examples=100)
@given(gammas, gammas)
def test_shape_text_roundtrip_property(g1, g2):
    shape = BoundaryShape.canonical(g1, g2)
    assert parse_shape(shape.key) == shape


@pytest.mark.parametrize(
    "text,field",
    [
        ("canonical:g1=0.6,g2=0", "g1"),
        ("canonical:g1=0,g2=abc", "g2"),
        ("canonical:g1=0", "g2"),
        ("circle:g1=0,g2=0", "kind"),
    ],
)
def test_parse_shape_names_bad_field(text, field):
    with pytest.raises(ShapeError, match=field):
        parse_shape(text)
