import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dcls.gradcheck import suite_weight_fn
from dcls.interpolation import InterpKind, d_weight_dsigma, d_weight_dx, weight


def test_sigma0_values():
    assert InterpKind.GAUSS.sigma0 == 0.27
    assert InterpKind.TRIANGLE.sigma0 == 1.0
    assert InterpKind.parse("Gauss") is InterpKind.GAUSS
    with pytest.raises(ValueError):
        InterpKind.parse("cubic")


def test_bilinear_is_unit_hat():
    np.testing.assert_allclose(weight("bilinear", [0.0, 0.25, 1.0, -0.5]), [1.0, 0.75, 0.0, 0.5])
    assert np.all(d_weight_dsigma("bilinear", np.linspace(-2, 2, 9), 0.3) == 0)


def test_gauss_uses_sigma0_plus_abs_sigma():
    x, s = 0.7, -0.4
    scale = 0.27 + 0.4
    assert weight("gauss", x, s) == pytest.approx(math.exp(-0.5 * (x / scale) ** 2))
    # sign(sigma) enters the sigma derivative
    assert d_weight_dsigma("gauss", x, s) == pytest.approx(-(x**2) / scale**3 * math.exp(-0.5 * (x / scale) ** 2))


def test_triangle_support():
    assert weight("triangle", 1.9, 1.0) == pytest.approx(0.1)
    assert weight("triangle", 2.1, 1.0) == 0.0


def test_sigma_derivative_at_zero_is_right_sided():
    assert d_weight_dsigma("gauss", 0.5, 0.0) > 0
    assert d_weight_dsigma("triangle", 0.5, 0.0) == 1.0


def test_scalar_derivatives_match_finite_differences():
    report = suite_weight_fn(instances=400, seed=3)
    assert report.passed, report.line()


@given(st.floats(-4, 4), st.floats(-3, 3), st.sampled_from(["gauss", "triangle", "bilinear"]))
def test_weights_are_bounded_and_even(x, s, kind):
    w = weight(kind, x, s)
    assert w >= 0
    assert w == pytest.approx(weight(kind, -x, s))
    if kind == "gauss":
        assert w <= 1.0
    scale = 1.0 if kind == "bilinear" else InterpKind.parse(kind).sigma0 + abs(s)
    if x != 0 and abs(abs(x) - scale) > 1e-9:  # away from kinks the slope is odd
        assert d_weight_dx(kind, x, s) == pytest.approx(-d_weight_dx(kind, -x, s))
