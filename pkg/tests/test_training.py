import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dcls import nn
from dcls.kernel import clamp_positions, position_bounds
from dcls.training import (Adam, ParamGroup, SharedPositionStore, SigmaSchedule, adam_reference, clamp_range,
                           cosine_annealing, init_positions, one_cycle, position_group, position_speed)


def loss_and_backward(model, x):
    y = model.forward(x)
    model.backward(np.ones_like(y))
    return float(y.sum())


@given(st.floats(-5, 5), st.lists(st.floats(-3, 3), min_size=1, max_size=20), st.floats(1e-4, 0.1))
def test_adam_matches_longhand_reference(theta, grads, lr):
    p = nn.Param(np.array([theta]))
    opt = Adam([ParamGroup([p], lr=lr)])
    for g, expected in zip(grads, adam_reference(theta, grads, lr)):
        p.grad[:] = g
        opt.step()
        assert p.data[0] == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_negative_lr_rejected():
    with pytest.raises(ValueError):
        Adam([ParamGroup([nn.Param(np.zeros(1))], lr=-1.0)])


def test_position_group_defaults():
    g = position_group([], lr=0.01)
    assert g.lr_scale == 5.0 and g.weight_decay == 0.0


def test_zero_position_lr_freezes_positions_bitwise():
    rng = np.random.default_rng(0)
    layer = nn.DclsConv(2, 3, 4, 7, "gauss", rng=rng, dtype=np.float64)
    p0 = layer.positions.data.copy()
    w0 = layer.weight.data.copy()
    opt = Adam([ParamGroup([layer.weight, layer.bias], lr=1e-2, weight_decay=1e-4),
                position_group([layer.positions, layer.sigmas], lr=1e-2, lr_scale=0.0)])
    x = rng.standard_normal((2, 2, 9, 9))
    for _ in range(5):
        opt.zero_grad()
        loss_and_backward(layer, x)
        opt.step()
    assert layer.positions.data.tobytes() == p0.tobytes()
    assert not np.array_equal(layer.weight.data, w0)


def test_zero_gradient_positions_do_not_move():
    p = nn.Param(np.array([0.3, -1.2]))
    opt = Adam([position_group([p], lr=0.1)])
    for _ in range(10):
        opt.zero_grad()
        opt.step()
    np.testing.assert_array_equal(p.data, [0.3, -1.2])


def test_clamp_applied_after_adversarial_step():
    size = (5, 5)
    lo, hi = position_bounds(size)
    p = nn.Param(np.zeros((2, 1, 1, 3)))
    opt = Adam([position_group([p], lr=100.0, clamp=lambda a: clamp_positions(a, size, out=a))])
    p.grad[:] = -1.0
    opt.step()
    assert np.all(p.data == hi[0])
    p.grad[:] = 1.0
    for _ in range(50):
        opt.step()
    assert np.all(p.data >= lo[0]) and np.all(p.data <= hi[0])


def test_clamp_range():
    a = np.array([-3.0, 0.5, 9.0])
    clamp_range(0, 4)(a)
    np.testing.assert_array_equal(a, [0, 0.5, 4])


def test_shared_positions_accumulate_gradients_from_every_layer():
    rng = np.random.default_rng(3)
    store = SharedPositionStore()

    def factory():
        p, s = init_positions("image", (2, 2, 2, 3), "gauss", rng)
        return nn.Param(clamp_positions(p, (5, 5))), nn.Param(s)

    layers = []
    for _ in range(2):
        p, s = store.get("stage0", factory)
        layers.append(nn.DclsConv(2, 2, 3, 5, "gauss", rng=rng, dtype=np.float64, positions=p, sigmas=s))
    assert layers[0].positions is layers[1].positions
    assert len(store.params()) == 2

    x = rng.standard_normal((1, 2, 7, 7))
    model = nn.Sequential(*layers)
    loss_and_backward(model, x)
    total = layers[0].positions.grad.copy()

    # Same gradient, computed layer by layer with independent copies.
    separate = 0
    h = x
    outs = []
    for layer in layers:
        outs.append(h)
        h = layer.forward(h)
    g = np.ones_like(h)
    for layer, inp in zip(reversed(layers), reversed(outs)):
        layer.positions.grad[...] = 0
        layer.forward(inp)
        gi = layer.backward(g)
        separate = separate + layer.positions.grad.copy()
        g = gi
    np.testing.assert_allclose(total, separate, rtol=1e-12, atol=1e-12)

    opt = Adam([position_group(store.params(), lr=0.01)])
    opt.step()
    assert layers[0].positions.data.tobytes() == layers[1].positions.data.tobytes()


def test_one_cycle_peaks_at_pct_start():
    total = 100
    lrs = [one_cycle(t, total, 1.0, pct_start=0.3) for t in range(total + 1)]
    assert int(np.argmax(lrs)) == 30
    assert lrs[30] == pytest.approx(1.0)
    assert lrs[0] == pytest.approx(1 / 25)
    assert lrs[-1] == pytest.approx(1 / 25 / 1e4)


def test_cosine_endpoints_and_monotone():
    vals = [cosine_annealing(t, 50, 0.1, 0.001) for t in range(51)]
    assert vals[0] == pytest.approx(0.1) and vals[-1] == pytest.approx(0.001)
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_sigma_schedule():
    s = SigmaSchedule(12.5, 0.5, 10)
    assert s.value(0) == pytest.approx(12.5)
    assert s.value(10) == pytest.approx(0.5)
    assert s.value(25) == pytest.approx(0.5)
    vals = [s.value(e) for e in range(11)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    # geometric: constant ratio
    ratios = np.array(vals[1:]) / np.array(vals[:-1])
    np.testing.assert_allclose(ratios, ratios[0])
    with pytest.raises(ValueError):
        SigmaSchedule(0.1, 0.5, 10)


def test_position_speed():
    assert position_speed(np.array([1.0, 2.0]), np.array([0.0, 4.0])) == 1.5


def test_init_positions_modes():
    rng = np.random.default_rng(0)
    p, s = init_positions("image", (2, 4, 3, 5), "gauss", rng)
    assert p.shape == s.shape == (2, 4, 3, 5) and np.all(s == 0.23)
    p, s = init_positions("image-uniform", (2, 8, 8, 8), "triangle", rng, size=(7, 5))
    lo, hi = position_bounds((7, 5))
    assert np.all(s == 0)
    for a in range(2):
        assert p[a].min() >= lo[a] and p[a].max() <= hi[a]
    d, s = init_positions("snn", (10, 20), rng=rng, max_delay=24)
    assert s is None and d.min() >= 0 and d.max() <= 24
    with pytest.raises(ValueError):
        init_positions("snn", (2, 2), rng=rng)
    with pytest.raises(ValueError):
        init_positions("image-uniform", (2, 1, 1, 1), rng=rng)
    with pytest.raises(ValueError):
        init_positions("random", (1,), rng=rng)
