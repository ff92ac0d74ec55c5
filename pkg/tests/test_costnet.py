import numpy as np
import pytest

from fairtwin.costnet import (
    CostNet,
    eval_latent_cost,
    forward,
    forward_batch,
    gradient_check,
    hinge_loss,
    init_costnet,
    latent_values,
    load_costnet,
    loss_and_grads,
    save_costnet,
)


def zero_net(r=4, hidden=(6, 6, 6)):
    net = init_costnet(r, hidden=hidden, seed=0)
    net.weights = [(np.zeros_like(W), np.zeros_like(b)) for W, b in net.weights]
    return net


def smooth_pair(net, rng, delta, want_active):
    """Draw a pair strictly inside the hinge's smooth region (and off ReLU kinks)."""
    for _ in range(200):
        x0 = float(rng.uniform(0.05, 0.95))
        zp = rng.normal(size=net.latent_dim) * 2
        zo = rng.normal(size=net.latent_dim) * 2
        S, q_z, (acts, pre) = forward_batch(net, [x0])
        if any(np.min(np.abs(p)) < 1e-3 for p in pre[:-1]):
            continue
        fp, _ = latent_values(S, q_z, zp.reshape(1, -1))
        fo, _ = latent_values(S, q_z, zo.reshape(1, -1))
        margin = float(fp[0] - fo[0]) + delta
        if want_active and margin > 1e-2:
            return (x0, zp, zo)
        if not want_active and margin < -1e-2:
            return (x0, zp, zo)
    raise AssertionError("could not draw a smooth-region pair")


def test_zero_net_outputs_zero():
    net = zero_net()
    S, q_z = forward(net, 0.5)
    assert np.array_equal(S, np.zeros((4, 4)))
    assert np.array_equal(q_z, np.zeros(4))


def test_factor_curvature_is_psd():
    for seed in range(5):
        net = init_costnet(5, seed=seed, head_scale=1.0)
        S, _ = forward(net, 0.7)
        H = S @ S.T
        assert np.linalg.eigvalsh(H)[0] >= -1e-10


def test_gauge_invariance():
    net = init_costnet(4, seed=2, head_scale=1.0)
    rng = np.random.default_rng(0)
    S, q_z = forward(net, 0.3)
    Q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    for _ in range(20):
        z = rng.normal(size=4) * 5
        f1 = 0.5 * z @ (S @ S.T) @ z + q_z @ z
        S2 = S @ Q
        f2 = 0.5 * z @ (S2 @ S2.T) @ z + q_z @ z
        assert abs(f1 - f2) <= 1e-8 * max(1.0, abs(f1))


def test_eval_latent_cost_basics():
    net = init_costnet(3, seed=1)
    assert eval_latent_cost(net, np.zeros(3), 0.5) == 0.0
    with pytest.raises(Exception):
        eval_latent_cost(net, np.zeros(2), 0.5)
    # closed-form check with identity factor
    vals, _ = latent_values(np.eye(3)[None], np.zeros((1, 3)), np.eye(3)[0].reshape(1, -1))
    assert vals[0] == pytest.approx(0.5)


def test_eval_two_path_agreement():
    net = init_costnet(4, seed=3, head_scale=1.0)
    rng = np.random.default_rng(4)
    for _ in range(20):
        x0 = float(rng.uniform(0, 1))
        z = rng.normal(size=4) * 3
        S, q_z = forward(net, x0)
        dense = 0.5 * z @ (S @ S.T) @ z + q_z @ z
        assert eval_latent_cost(net, z, x0) == pytest.approx(dense, rel=1e-12, abs=1e-12)


def test_hinge_arithmetic():
    # hinge contributions on crafted pairs: inactive, tie, violated
    net = zero_net(r=2)
    delta = 1.0
    # zero net: f identical on both sides -> contribution = delta each
    batch = [(0.5, np.ones(2), np.zeros(2))]
    assert hinge_loss(net, batch, delta) == pytest.approx(delta)
    assert hinge_loss(net, batch, 0.3) == pytest.approx(0.3)
    # analytic cases through latent_values arithmetic
    fp, fo = -1.1, 0.0   # f_pref - f_other = -delta - 0.1 -> 0
    assert max(0.0, fp - fo + 1.0) == 0.0
    fp, fo = 1.0, 0.0    # violation by 1 with delta 1 -> 2
    assert max(0.0, fp - fo + 1.0) == 2.0


def test_gradient_check_smooth_region():
    rng = np.random.default_rng(5)
    net = init_costnet(3, hidden=(5, 5, 5), seed=6, head_scale=0.5)
    pair = smooth_pair(net, rng, delta=0.5, want_active=True)
    assert gradient_check(net, pair, delta=0.5, l2=1e-4) <= 1e-4


def test_gradient_of_l2_term_vanishes_at_zero():
    net = zero_net()
    pair_batch = (np.array([0.5]), np.ones((1, 4)), np.zeros((1, 4)))
    _, _, with_l2 = loss_and_grads(net, *pair_batch, delta=1.0, l2=1e-3)
    _, _, without = loss_and_grads(net, *pair_batch, delta=1.0, l2=0.0)
    for (gw1, gb1), (gw0, gb0) in zip(with_l2, without):
        assert np.array_equal(gw1, gw0)
        assert np.array_equal(gb1, gb0)


def test_satisfied_margin_gives_zero_gradient():
    rng = np.random.default_rng(7)
    net = init_costnet(3, hidden=(5, 5, 5), seed=8, head_scale=0.5)
    x0, zp, zo = smooth_pair(net, rng, delta=0.1, want_active=False)
    _, hinge, grads = loss_and_grads(
        net, np.array([x0]), zp.reshape(1, -1), zo.reshape(1, -1), delta=0.1, l2=0.0
    )
    assert hinge == 0.0
    for gw, gb in grads:
        assert np.all(gw == 0.0) and np.all(gb == 0.0)


def test_output_head_convention():
    # first r*r outputs fill the factor row-major, the rest the linear term
    net = zero_net(r=2, hidden=(3, 3, 3))
    W, b = net.weights[-1]
    b = b.copy()
    b[:] = np.arange(6, dtype=float)
    net.weights[-1] = (W, b)
    S, q_z = forward(net, 0.5)
    assert np.array_equal(S, np.array([[0.0, 1.0], [2.0, 3.0]]))
    assert np.array_equal(q_z, np.array([4.0, 5.0]))


def test_save_load_round_trip(tmp_path):
    net = init_costnet(4, seed=9, latent_map_hash="deadbeef")
    net.pair_scale = 3.25
    path = tmp_path / "net.json"
    save_costnet(net, path)
    loaded = load_costnet(path)
    assert loaded.latent_map_hash == "deadbeef"
    assert loaded.pair_scale == 3.25
    for (W1, b1), (W2, b2) in zip(net.weights, loaded.weights):
        assert np.array_equal(W1, W2) and np.array_equal(b1, b2)
    assert loaded.content_hash() == net.content_hash()


def test_init_deterministic():
    a = init_costnet(5, seed=4)
    b = init_costnet(5, seed=4)
    for (W1, b1), (W2, b2) in zip(a.weights, b.weights):
        assert np.array_equal(W1, W2) and np.array_equal(b1, b2)
