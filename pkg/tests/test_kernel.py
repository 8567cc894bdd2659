import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dcls import gradcheck
from dcls.interpolation import InterpKind
from dcls.kernel import DclsParams, clamp_positions, position_bounds


def single(p, size, w=1.0, kind="bilinear", sigma=None):
    p = np.asarray(p, dtype=float).reshape(len(size), 1, 1, 1)
    s = None if sigma is None else np.full(p.shape, sigma)
    return DclsParams(np.full((1, 1, 1), w), p, size, s, kind).construct()[0, 0]


def test_integer_position_hits_one_cell():
    k = single([0.0, 0.0], (5, 5), w=2.0)
    assert k[2, 2] == 2.0 and k.sum() == 2.0


def test_fractional_position_spreads_over_four_cells():
    k = single([0.25, -0.5], (5, 5))
    expected = np.zeros((5, 5))
    expected[2, 1] = 0.75 * 0.5
    expected[2, 2] = 0.75 * 0.5
    expected[3, 1] = 0.25 * 0.5
    expected[3, 2] = 0.25 * 0.5
    np.testing.assert_allclose(k, expected, atol=1e-15)


def test_1d_and_3d_bilinear():
    np.testing.assert_allclose(single([0.5], (4,)), [0, 0, 0.5, 0.5])
    lo, hi = position_bounds((4,))
    assert (lo[0], hi[0]) == (-2.0, 1.0)
    k3 = single([0.5, 0.5, 0.5], (3, 3, 3))
    assert np.count_nonzero(k3) == 8
    np.testing.assert_allclose(k3[1:, 1:, 1:], np.full((2, 2, 2), 0.125))


def test_upper_edge_position_keeps_full_weight():
    k = single([2.0], (5,))
    assert k[4] == 1.0 and k.sum() == 1.0


def test_bounds_even_size():
    lo, hi = position_bounds((6, 7))
    np.testing.assert_array_equal(lo, [-3, -3])
    np.testing.assert_array_equal(hi, [2, 3])


def test_out_of_bounds_raises():
    with pytest.raises(ValueError, match="clamp"):
        single([3.0], (5,))


def test_shape_mismatch_raises():
    with pytest.raises(ValueError):
        DclsParams(np.ones((1, 1, 2)), np.zeros((2, 1, 1, 3)), (5, 5))
    with pytest.raises(ValueError):
        DclsParams(np.ones((1, 1, 2)), np.zeros((2, 1, 1, 2)), (5, 5), np.zeros((2, 1, 1, 3)), "gauss")


def test_gauss_element_is_normalised():
    k = single([0.3, -1.2], (7, 7), kind="gauss", sigma=0.4)
    assert 1 - 1e-6 < k.sum() < 1
    assert np.unravel_index(k.argmax(), k.shape) == (3, 2)


@given(st.integers(1, 3), st.integers(3, 9), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_bilinear_sum_equals_weight_sum(ndim, s, m, seed):
    rng = np.random.default_rng(seed)
    size = (s,) * ndim
    lo, hi = position_bounds(size)
    p = np.stack([rng.uniform(lo[a], hi[a], (2, 3, m)) for a in range(ndim)])
    w = rng.standard_normal((2, 3, m))
    k = DclsParams(w, p, size).construct()
    np.testing.assert_allclose(k.sum(axis=tuple(range(2, 2 + ndim))), w.sum(-1), atol=1e-12, rtol=0)


@given(st.integers(1, 3), st.integers(3, 9), st.sampled_from(["gauss", "triangle"]), st.integers(0, 2**31 - 1))
def test_normalised_element_mass_in_open_unit_interval(ndim, s, kind, seed):
    rng = np.random.default_rng(seed)
    size = (s,) * ndim
    lo, hi = position_bounds(size)
    p = np.stack([rng.uniform(lo[a], hi[a], (1, 1, 1)) for a in range(ndim)])
    sig = rng.uniform(-1.0, 1.0, p.shape)
    mass = DclsParams(np.ones((1, 1, 1)), p, size, sig, kind).construct().sum()
    assert 1 - 1e-6 < mass < 1


@given(st.integers(0, 2**31 - 1), st.floats(-50, 50))
def test_clamp_keeps_positions_constructible(seed, shift):
    rng = np.random.default_rng(seed)
    size = (5, 6)
    p = rng.normal(shift, 10.0, (2, 2, 2, 3))
    clamp_positions(p, size, out=p)
    lo, hi = position_bounds(size)
    assert np.all(p >= lo.reshape(-1, 1, 1, 1)) and np.all(p <= hi.reshape(-1, 1, 1, 1))
    DclsParams(np.ones((2, 2, 3)), p, size).construct()


@pytest.mark.parametrize("ndim", [1, 2, 3])
def test_bilinear_gradients_small_sweep(ndim):
    report = gradcheck.suite_dcls(ndim, instances=25, seed=11)
    assert report.passed, report.line()


def test_interp_gradients_small_sweep():
    report = gradcheck.suite_interp(instances=24, seed=5)
    assert report.passed, report.line()


def test_corrupted_backward_is_caught():
    def bad(G, params):
        gw, gp, gs = params.backward(G)
        return gw, gp * 1.01, gs

    report = gradcheck.suite_dcls(2, instances=5, seed=0, backward=bad)
    assert not report.passed


def test_gradient_wrt_sigma_for_triangle_kind():
    rng = np.random.default_rng(2)
    params = gradcheck.random_dcls_instance(rng, 2, InterpKind.TRIANGLE)
    assert gradcheck.check_dcls(params, rng) < 1e-6
