import time

import numpy as np
import pytest

from mmsmo.nn import Adam, DenseNet, NonFiniteLossError, load_checkpoint, save_checkpoint, sync_target, train_step
from oracles import fd_gradient


def _batch(net, rng, n=16):
    x = rng.normal(size=(n, net.sizes[0]))
    a = rng.integers(0, net.sizes[-1], n)
    y = rng.normal(size=n)
    return x, a, y


class TestForward:
    def test_zero_weights(self):
        net = DenseNet([3, 4, 2])
        net.set_flat(np.zeros(net.n_params))
        assert np.array_equal(net(np.ones(3)), np.zeros(2))

    def test_affine(self):
        net = DenseNet([1, 1])
        net.weights[0][:] = 2.0
        net.biases[0][:] = 1.0
        assert net(np.array([3.0])).tolist() == [7.0]

    def test_rectifier_clamps(self):
        net = DenseNet([1, 1, 1])
        net.weights[0][:] = 1.0
        net.biases[0][:] = -8.0  # pre-activation -5 for input 3
        net.weights[1][:] = 10.0
        net.biases[1][:] = 0.5
        assert net(np.array([3.0])).tolist() == [0.5]

    def test_batch_and_single_agree(self):
        net = DenseNet([5, 8, 3], np.random.default_rng(0))
        x = np.random.default_rng(1).normal(size=(4, 5))
        assert np.allclose(net(x)[2], net(x[2]))

    def test_wrong_width(self):
        with pytest.raises(ValueError):
            DenseNet([5, 2])(np.zeros(4))

    def test_agent_parameter_count(self):
        assert DenseNet.for_agent(132).n_params == 113_830


class TestTraining:
    def test_zero_residual_only_decays(self):
        rng = np.random.default_rng(0)
        net = DenseNet([4, 6, 2], rng)
        x = rng.normal(size=(8, 4))
        a = rng.integers(0, 2, 8)
        y = net(x)[np.arange(8), a]
        mse, obj, grads = net.loss_and_grads(x, a, y, l2=0.1)
        assert mse == 0.0
        for g, w in zip(grads[0::2], net.weights):
            assert np.allclose(g, 0.1 * w)
        assert all(np.allclose(g, 0) for g in grads[1::2])

    def test_first_adam_step_is_sign(self):
        p = [np.array([1.0])]
        Adam(lr=1e-3, l2=0.0).step(p, [np.array([0.37])])
        assert p[0][0] == pytest.approx(1.0 - 1e-3, abs=1e-9)

    def test_loss_decreases(self):
        rng = np.random.default_rng(0)
        net = DenseNet([6, 16, 2], rng)
        x, a, y = _batch(net, rng, 64)
        opt = Adam(lr=1e-2)
        first = train_step(net, opt, x, a, y)
        for _ in range(200):
            last = train_step(net, opt, x, a, y)
        assert last < 0.2 * first

    def test_non_finite_target(self):
        net = DenseNet([2, 2])
        with pytest.raises(NonFiniteLossError):
            train_step(net, Adam(), np.zeros((1, 2)), [0], [np.nan])

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            train_step(DenseNet([2, 2]), Adam(), np.zeros((0, 2)), [], [])

    @pytest.mark.parametrize("sizes", [[3, 5, 2], [6, 7, 4, 2]])
    def test_gradient_small_nets_every_parameter(self, sizes):
        rng = np.random.default_rng(len(sizes))
        net = DenseNet(sizes, rng)
        x, a, y = _batch(net, rng, 5)
        _, _, grads = net.loss_and_grads(x, a, y, l2=1e-2)
        bp = np.concatenate([g.ravel() for g in grads])
        fd = fd_gradient(net, x, a, y, 1e-2, np.arange(net.n_params))
        rel = np.abs(fd - bp) / np.maximum(np.maximum(np.abs(fd), np.abs(bp)), 1e-12)
        assert rel.max() < 1e-4


class TestTargetAndCheckpoint:
    def test_sync_is_independent_copy(self):
        net = DenseNet([3, 4, 2], np.random.default_rng(0))
        tgt = sync_target(net)
        assert np.array_equal(tgt.get_flat(), net.get_flat())
        net.weights[0][0, 0] += 1.0
        assert not np.array_equal(tgt.get_flat(), net.get_flat())

    def test_roundtrip(self, tmp_path):
        net = DenseNet.for_agent(132, rng=np.random.default_rng(3))
        save_checkpoint(net, tmp_path / "a.bin")
        back = load_checkpoint(tmp_path / "a.bin")
        assert back.sizes == net.sizes
        assert np.array_equal(back.get_flat(), net.get_flat())

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "junk.bin"
        p.write_bytes(b"not a checkpoint at all")
        with pytest.raises(ValueError):
            load_checkpoint(p)
