import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dcls import conv, gradcheck
from dcls.conv import ConvSpec

IMAGE = np.arange(1, 17, dtype=np.float64).reshape(1, 1, 4, 4)  # im_1 .. im_16


def test_output_shape_formula():
    spec = ConvSpec((3, 3), stride=(2, 1), dilation=(1, 2), padding=(1, 0))
    # floor((H + 2P - D(K-1) - 1) / S) + 1
    assert conv.output_shape((9, 9), spec) == (5, 5)


def test_kernel_larger_than_padded_input():
    with pytest.raises(ValueError, match="kernel larger than padded input"):
        conv.output_shape((3, 3), ConvSpec((3, 3), dilation=(2, 2)))


def test_invalid_spec():
    with pytest.raises(ValueError):
        ConvSpec((0, 3))
    with pytest.raises(ValueError):
        ConvSpec((3,), padding=-1)


def test_groups_must_divide_channels():
    x = np.zeros((1, 3, 5))
    with pytest.raises(ValueError):
        conv.conv_forward(x, np.zeros((2, 1, 3)), spec=ConvSpec((3,), groups=2))


def test_im2col_minimal_example_columns():
    cols = conv.im2col(IMAGE, ConvSpec((2, 2)))
    assert cols.shape == (4, 9)
    np.testing.assert_array_equal(cols[:, 0], [1, 2, 5, 6])
    np.testing.assert_array_equal(cols[:, -1], [11, 12, 15, 16])


def test_col2im_is_adjoint_of_im2col(rng):
    spec = ConvSpec((2, 3), stride=(2, 1), dilation=(1, 2), padding=(1, 1))
    x = rng.standard_normal((2, 3, 6, 7))
    cols = conv.im2col(x, spec)
    c = rng.standard_normal(cols.shape)
    lhs = (cols * c).sum()
    rhs = (x * conv.col2im(c, x.shape, spec)).sum()
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_col2im_accumulates_overlaps():
    spec = ConvSpec((2, 2))
    counts = conv.col2im(np.ones((4, 9)), (1, 1, 4, 4), spec)[0, 0]
    np.testing.assert_array_equal(counts, [[1, 2, 2, 1], [2, 4, 4, 2], [2, 4, 4, 2], [1, 2, 2, 1]])


def test_depthwise_matches_per_channel_convs(rng):
    x = rng.standard_normal((2, 3, 8))
    w = rng.standard_normal((3, 1, 3))
    spec = ConvSpec((3,), padding=1, groups=3)
    y = conv.conv_forward(x, w, spec=spec)
    for c in range(3):
        yc = conv.conv_forward(x[:, c : c + 1], w[c : c + 1], spec=ConvSpec((3,), padding=1))
        np.testing.assert_allclose(y[:, c : c + 1], yc, atol=1e-14)


def test_oracle_sweep_f64():
    rng = np.random.default_rng(7)
    worst = 0.0
    for i in range(60):
        x, w, spec = gradcheck.random_conv_case(rng, 1 + i % 2)
        b = rng.standard_normal(w.shape[0])
        worst = max(worst, np.max(np.abs(conv.conv_forward(x, w, b, spec) - conv.conv_direct(x, w, b, spec))))
    assert worst < 1e-10


def test_f32_close_to_f64_oracle(rng):
    x, w, spec = gradcheck.random_conv_case(rng, 2)
    y32 = conv.conv_forward(x.astype(np.float32), w.astype(np.float32), spec=spec)
    assert y32.dtype == np.float32
    np.testing.assert_allclose(y32, conv.conv_direct(x, w, spec=spec), atol=1e-4)


def test_backward_gradients_small_sweep():
    report = gradcheck.suite_conv(instances=30, seed=4)
    assert report.passed, report.line()


@given(st.lists(st.integers(1, 3), min_size=1, max_size=2), st.lists(st.integers(1, 3), min_size=2, max_size=2),
       st.integers(0, 2**31 - 1))
def test_dilation_equals_inflated_kernel(k, df, seed):
    d = len(k)
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((2, 3) + tuple(k))
    assert conv.dilated_equivalence_check(w, tuple(df[:d]), rng=rng)


def test_inflate_kernel_layout():
    w = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    np.testing.assert_array_equal(conv.inflate_kernel(w, 2)[0, 0], [[1, 0, 2], [0, 0, 0], [3, 0, 4]])
