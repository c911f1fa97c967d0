"""Network unit tests: forward/backward oracles, Adam, copies, snapshots."""

import numpy as np
import pytest

from cavdn import network as nn


def relu(x):
    return np.maximum(x, 0.0)


def forward_oracle(net, x):
    """Straightforward matrix-chain evaluation, independent of nn.forward."""
    h = np.asarray(x, dtype=float)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i < len(net.weights) - 1:
            h = relu(h)
    return h


def finite_difference_grad(net, x, dout, h=1e-5):
    """Central differences of loss = dot(dout, forward(x)) w.r.t. theta."""
    grad = np.zeros_like(net.theta)
    for k in range(net.theta.size):
        orig = net.theta[k]
        net.theta[k] = orig + h
        up = float(np.dot(dout, nn.forward(net, x)))
        net.theta[k] = orig - h
        down = float(np.dot(dout, nn.forward(net, x)))
        net.theta[k] = orig
        grad[k] = (up - down) / (2 * h)
    return grad


def make_safe_net(rng, dims, x, margin=1e-3):
    """A random net whose hidden preactivations stay away from the ReLU kink."""
    for _ in range(100):
        net = nn.create_mlp(dims, rng)
        net.theta += rng.normal(scale=0.3, size=net.theta.shape)
        h = np.asarray(x, dtype=float)
        ok = True
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            h = h @ w + b
            if i < len(net.weights) - 1:
                if np.min(np.abs(h)) < margin:
                    ok = False
                    break
                h = relu(h)
        if ok:
            return net
    raise AssertionError("could not build a kink-free net")


class TestForward:
    def test_zero_network_gives_zero_output(self):
        net = nn.Mlp((6, 4, 3), np.zeros(nn.num_parameters((6, 4, 3))))
        out = nn.forward(net, np.random.default_rng(0).normal(size=6))
        assert np.array_equal(out, np.zeros(3))

    def test_identity_path_propagates_nonnegative_input(self):
        # one-unit chain of identity weights: ReLU acts as identity on x >= 0
        net = nn.Mlp((1, 1, 1), np.zeros(nn.num_parameters((1, 1, 1))))
        net.weights[0][...] = 1.0
        net.weights[1][...] = 1.0
        for x in (0.0, 0.5, 3.75):
            assert nn.forward(net, np.array([x]))[0] == pytest.approx(x)

    def test_matches_independent_matrix_chain(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            dims = tuple(rng.integers(1, 9, size=rng.integers(2, 5)))
            net = nn.create_mlp(dims, rng)
            x = rng.normal(size=dims[0])
            np.testing.assert_allclose(nn.forward(net, x), forward_oracle(net, x), rtol=1e-12)

    def test_batch_forward_matches_per_row(self):
        rng = np.random.default_rng(3)
        net = nn.create_mlp((5, 8, 4), rng)
        batch = rng.normal(size=(6, 5))
        out = nn.forward(net, batch)
        for i in range(6):
            np.testing.assert_allclose(out[i], nn.forward(net, batch[i]), rtol=1e-12)

    def test_forward_deterministic(self):
        rng = np.random.default_rng(11)
        net = nn.create_mlp((68, 128, 128, 5), rng)
        x = rng.normal(size=68)
        first = nn.forward(net, x)
        for _ in range(5):
            assert np.array_equal(nn.forward(net, x), first)

    def test_relu_region_linearity(self):
        rng = np.random.default_rng(5)
        net = nn.create_mlp((4, 6, 3), rng)
        for w in net.weights:
            np.abs(w, out=w)  # non-negative weights keep preactivations >= 0
        x = np.abs(rng.normal(size=4))
        base = nn.forward(net, x)
        for c in (0.0, 0.5, 2.0, 7.5):
            np.testing.assert_allclose(nn.forward(net, c * x), c * base, rtol=1e-12, atol=1e-14)

    def test_dimension_mismatch_rejected(self):
        net = nn.create_mlp((4, 3), np.random.default_rng(0))
        with pytest.raises(nn.NetworkError):
            nn.forward(net, np.zeros(5))


class TestBackward:
    def test_zero_output_grad_gives_zero_gradients(self):
        rng = np.random.default_rng(2)
        net = nn.create_mlp((5, 7, 3), rng)
        grad = nn.backward(net, rng.normal(size=5), np.zeros(3))
        assert np.array_equal(grad, np.zeros_like(net.theta))

    def test_single_linear_layer_gradient_is_input(self):
        # loss = output[0] of a bias-free linear map: d/dw[i,0] = x[i]
        rng = np.random.default_rng(4)
        net = nn.create_mlp((6, 2), rng)
        x = rng.normal(size=6)
        dout = np.array([1.0, 0.0])
        grad = nn.backward(net, x, dout)
        dw = grad[: 6 * 2].reshape(6, 2)
        db = grad[6 * 2 :]
        np.testing.assert_allclose(dw[:, 0], x, rtol=1e-12)
        np.testing.assert_allclose(dw[:, 1], np.zeros(6), atol=0)
        np.testing.assert_allclose(db, dout, atol=0)

    @pytest.mark.parametrize("case", range(12))
    def test_gradient_matches_central_finite_differences(self, case):
        rng = np.random.default_rng(100 + case)
        dims = (3, 5, 4, 2) if case % 2 else (4, 6, 3)
        x = rng.normal(size=dims[0])
        net = make_safe_net(rng, dims, x)
        dout = rng.normal(size=dims[-1])
        analytic = nn.backward(net, x, dout)
        numeric = finite_difference_grad(net, x, dout)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-8)

    def test_shape_mismatch_rejected(self):
        net = nn.create_mlp((4, 3), np.random.default_rng(0))
        with pytest.raises(nn.NetworkError):
            nn.backward(net, np.zeros(4), np.zeros(2))


class TestAdam:
    def test_zero_gradient_leaves_parameters_unchanged(self):
        rng = np.random.default_rng(8)
        net = nn.create_mlp((3, 4, 2), rng)
        before = net.theta.copy()
        opt = nn.AdamState()
        nn.adam_step(net, np.zeros_like(net.theta), opt)
        assert np.array_equal(net.theta, before)
        assert opt.step == 1

    def test_single_step_matches_hand_computed_update(self):
        # p = 0, grad = 1, defaults: after one bias-corrected step p ~= -lr
        net = nn.Mlp((1, 1), np.zeros(2))
        grad = np.array([1.0, 0.0])
        nn.adam_step(net, grad, nn.AdamState())
        assert net.theta[0] == pytest.approx(-0.001, abs=1e-9)
        assert net.theta[1] == 0.0

    def test_repeated_identical_gradients_move_monotonically(self):
        net = nn.Mlp((1, 1), np.zeros(2))
        opt = nn.AdamState()
        grad = np.array([1.0, 0.0])
        values = [net.theta[0]]
        for _ in range(5):
            nn.adam_step(net, grad, opt)
            values.append(net.theta[0])
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_step_counter_increments(self):
        net = nn.Mlp((1, 1), np.zeros(2))
        opt = nn.AdamState()
        for expected in (1, 2, 3):
            nn.adam_step(net, np.ones(2), opt)
            assert opt.step == expected

    def test_non_finite_gradient_names_layer(self):
        net = nn.create_mlp((3, 4, 2), np.random.default_rng(0))
        grad = np.zeros_like(net.theta)
        grad[-1] = np.nan  # last layer's bias block
        with pytest.raises(nn.NetworkError, match="layer 1"):
            nn.adam_step(net, grad, nn.AdamState())


class TestCopyAndSnapshots:
    def test_copy_makes_forward_identical(self):
        rng = np.random.default_rng(9)
        src = nn.create_mlp((5, 6, 3), rng)
        dst = nn.create_mlp((5, 6, 3), rng)
        nn.copy_parameters(src, dst)
        x = rng.normal(size=5)
        assert np.array_equal(nn.forward(src, x), nn.forward(dst, x))

    def test_copy_isolates_source_updates(self):
        rng = np.random.default_rng(10)
        src = nn.create_mlp((5, 6, 3), rng)
        dst = nn.create_mlp((5, 6, 3), rng)
        nn.copy_parameters(src, dst)
        snapshot = dst.theta.copy()
        nn.adam_step(src, np.ones_like(src.theta), nn.AdamState())
        assert np.array_equal(dst.theta, snapshot)

    def test_copy_zero_network(self):
        src = nn.Mlp((3, 2), np.zeros(nn.num_parameters((3, 2))))
        dst = nn.create_mlp((3, 2), np.random.default_rng(1))
        nn.copy_parameters(src, dst)
        assert np.array_equal(dst.theta, np.zeros_like(dst.theta))

    def test_copy_rejects_architecture_mismatch(self):
        a = nn.create_mlp((3, 2), np.random.default_rng(0))
        b = nn.create_mlp((3, 4, 2), np.random.default_rng(0))
        with pytest.raises(nn.NetworkError):
            nn.copy_parameters(a, b)

    def test_snapshot_round_trip(self, tmp_path):
        rng = np.random.default_rng(12)
        net = nn.create_mlp((68, 128, 128, 5), rng)
        path = tmp_path / "net.npz"
        nn.save_params(net, path)
        loaded = nn.load_params(path)
        assert loaded.layer_dims == net.layer_dims
        assert np.array_equal(loaded.theta, net.theta)
