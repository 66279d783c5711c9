import numpy as np
import pytest

import sparsect.autodiff as ad
from sparsect.numerics import Rng
from sparsect.net import (NetworkParams, TrainConfig, layer_specs, init_params,
                          forward_net, backward_net, train)
from sparsect import formats


class TestAutodiffOps:
    def test_conv2d_matches_scipy(self):
        from scipy.signal import correlate2d
        rng = Rng(0)
        x = rng.normal((2, 9, 9))
        w = rng.normal((3, 2, 3, 3))
        b = rng.normal(3)
        out = ad.conv2d(ad.Var(x), ad.Var(w), ad.Var(b)).value
        for oc in range(3):
            expected = b[oc] + sum(
                correlate2d(x[ic], w[oc, ic], mode="same") for ic in range(2))
            assert np.allclose(out[oc], expected, atol=1e-12)

    def test_conv2d_gradients_finite_difference(self):
        rng = Rng(1)
        x = rng.normal((2, 6, 6))
        w = rng.normal((2, 2, 3, 3))
        b = rng.normal(2)
        seed = rng.normal((2, 6, 6))

        def loss(xv, wv, bv):
            return np.sum(ad.conv2d(ad.Var(xv), ad.Var(wv), ad.Var(bv)).value * seed)

        xv, wv, bv = ad.Var(x), ad.Var(w), ad.Var(b)
        out = ad.conv2d(xv, wv, bv)
        ad.backward(out, seed)
        eps = 1e-6
        for var, arr in ((xv, x), (wv, w), (bv, b)):
            flat = arr.ravel()
            for idx in range(0, flat.size, max(1, flat.size // 7)):
                orig = flat[idx]
                flat[idx] = orig + eps
                up = loss(x, w, b)
                flat[idx] = orig - eps
                dn = loss(x, w, b)
                flat[idx] = orig
                fd = (up - dn) / (2 * eps)
                assert abs(var.grad.ravel()[idx] - fd) < 1e-6 * max(1, abs(fd))

    def test_maxpool_upsample_shapes_and_grads(self):
        x = ad.Var(Rng(2).normal((3, 8, 8)))
        pooled = ad.maxpool2(x)
        assert pooled.value.shape == (3, 4, 4)
        up = ad.upsample2(pooled)
        assert up.value.shape == (3, 8, 8)
        ad.backward(up, np.ones_like(up.value))
        # each kept element receives the 2x2 block sum (=4) routed to the argmax
        assert np.sum(x.grad) == pytest.approx(3 * 4 * 4 * 4)
        assert np.count_nonzero(x.grad) == 3 * 4 * 4

    def test_relu_and_concat(self):
        a = ad.Var(np.array([[[-1.0, 2.0]]]))
        r = ad.relu(a)
        assert np.array_equal(r.value, [[[0.0, 2.0]]])
        b = ad.Var(np.ones((2, 1, 2)))
        cat = ad.concat_channels(a, b)
        assert cat.value.shape == (3, 1, 2)
        ad.backward(cat, np.ones_like(cat.value))
        assert np.array_equal(a.grad, np.ones((1, 1, 2)))
        assert np.array_equal(b.grad, np.ones((2, 1, 2)))

    def test_shared_node_grads_accumulate(self):
        x = ad.Var(np.ones((1, 2, 2)))
        y = ad.add(x, x)
        ad.backward(y, np.ones_like(y.value))
        assert np.array_equal(x.grad, 2 * np.ones((1, 2, 2)))


class TestNetwork:
    def test_layer_specs_channels(self):
        specs = dict((n, (oc, ic)) for n, oc, ic, _, _ in layer_specs(2, 4))
        assert specs["enc0_conv1"] == (4, 1)
        assert specs["enc1_conv1"] == (8, 4)
        assert specs["mid_conv1"] == (16, 8)
        assert specs["dec1_up"] == (8, 16)
        assert specs["dec1_conv1"] == (8, 16)   # after skip concat
        assert specs["final"] == (1, 4)

    def test_zero_init_is_identity(self):
        params = init_params(2, 4, Rng(0))
        for k in params.weights:
            params.weights[k][:] = 0.0
        x = Rng(1).normal((16, 16)).astype(np.float32)
        assert np.array_equal(forward_net(params, x), x)

    def test_final_layer_zero_by_default(self):
        assert not init_params(2, 4, Rng(0)).weights["final.w"].any()
        assert init_params(2, 4, Rng(0), zero_final=False).weights["final.w"].any()

    def test_depth_zero_network(self):
        params = init_params(0, 4, Rng(2), zero_final=False)
        x = Rng(3).normal((8, 8)).astype(np.float32)
        out = forward_net(params, x)
        w = params.weights["final.w"][0, 0, 0, 0]
        b = params.weights["final.b"][0]
        assert np.allclose(out, x + (w * x + b), atol=1e-6)

    def test_gradient_check_subset(self):
        params = init_params(1, 2, Rng(4), dtype=np.float64, zero_final=False)
        x = Rng(5).normal((8, 8))
        seed = Rng(6).normal((8, 8))
        grads = backward_net(params, x, seed)
        eps = 1e-6
        for name in ("enc0_conv1.w", "dec0_up.w", "final.b"):
            arr = params.weights[name]
            flat = arr.ravel()
            for idx in range(0, flat.size, max(1, flat.size // 5)):
                orig = flat[idx]
                flat[idx] = orig + eps
                up = np.sum(forward_net(params, x) * seed)
                flat[idx] = orig - eps
                dn = np.sum(forward_net(params, x) * seed)
                flat[idx] = orig
                fd = (up - dn) / (2 * eps)
                g = grads[name].ravel()[idx]
                assert abs(g - fd) <= 1e-5 * max(1.0, abs(fd))

    def test_rejects_bad_input(self):
        params = init_params(2, 4, Rng(7))
        with pytest.raises(ValueError):
            forward_net(params, np.zeros((10, 10)))   # not divisible by 4
        with pytest.raises(ValueError):
            forward_net(params, np.zeros(16))


class TestTraining:
    def _toy_dataset(self, n=6):
        rng = Rng(8)
        data = []
        for _ in range(n):
            # amplitude ~50: the clipped-SGD defaults need a large dynamic range
            t = (50.0 * rng.normal((8, 8))).astype(np.float32)
            x = (t + 25.0 * rng.normal((8, 8))).astype(np.float32)
            data.append((x, t))
        return data

    def test_loss_decreases(self):
        data = self._toy_dataset()
        params = init_params(1, 4, Rng(9))
        out, history = train(params, data, TrainConfig(epochs=8, augment=False),
                             Rng(10))
        assert history[-1][1] < history[0][1]

    def test_deterministic(self):
        data = self._toy_dataset()
        p1, h1 = train(init_params(1, 4, Rng(9)), data, TrainConfig(epochs=2),
                       Rng(10))
        p2, h2 = train(init_params(1, 4, Rng(9)), data, TrainConfig(epochs=2),
                       Rng(10))
        assert [(e, l) for e, l, _ in h1] == [(e, l) for e, l, _ in h2]
        for k in p1.weights:
            assert np.array_equal(p1.weights[k], p2.weights[k])

    def test_does_not_mutate_input_params(self):
        data = self._toy_dataset(2)
        params = init_params(1, 2, Rng(11))
        before = {k: v.copy() for k, v in params.weights.items()}
        train(params, data, TrainConfig(epochs=1), Rng(12))
        for k in before:
            assert np.array_equal(params.weights[k], before[k])

    def test_validation_history(self):
        data = self._toy_dataset(3)
        _, history = train(init_params(1, 2, Rng(13)), data,
                           TrainConfig(epochs=2), Rng(14), val_set=data[:1])
        assert len(history) == 2
        assert np.isfinite(history[-1][2])

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            train(init_params(1, 2, Rng(0)), [], TrainConfig(epochs=1))


class TestWeightsIo:
    def test_roundtrip(self, tmp_path):
        params = init_params(2, 4, Rng(15))
        path = tmp_path / "w.net"
        formats.save_weights(params, path)
        back = formats.load_weights(path)
        assert back.depth == 2 and back.base_channels == 4
        assert set(back.weights) == set(params.weights)
        for k in params.weights:
            assert np.array_equal(back.weights[k], params.weights[k])

    def test_rejects_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.net"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
        with pytest.raises(ValueError):
            formats.load_weights(path)
