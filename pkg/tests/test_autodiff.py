import numpy as np
import pytest

from binconv import autodiff as ad
from binconv.codec import CbeVector

from oracles import central_diff, conv1d_naive, conv2d_full_context_naive


def rel_err(a, n):
    a, n = np.asarray(a), np.asarray(n)
    return np.max(np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), 1e-8))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class TestPadBins:
    def test_values(self):
        np.testing.assert_array_equal(ad.pad_bins(np.array([[0.3, 0.7]]), 1, 1), [[1.0, 0.3, 0.7, 0.0]])

    def test_identity(self, rng):
        x = rng.random((2, 3, 5))
        np.testing.assert_array_equal(ad.pad_bins(x, 0, 0), x)

    def test_backward_drops_padding(self, rng):
        x = rng.random((2, 3, 5))
        y = ad.pad_bins(x, 2, 3)
        g = ad.pad_bins_backward(np.ones_like(y), 2, 3)
        np.testing.assert_array_equal(g, np.ones_like(x))

    @pytest.mark.parametrize("s", [3, 51])
    def test_same_length_after_valid_conv(self, rng, s):
        x = rng.random((1, 2, 60))
        p = (s - 1) // 2
        y, _ = ad.grouped_conv1d_forward(ad.pad_bins(x, p, p), rng.random((2, 2, s)), np.zeros(2))
        assert y.shape == x.shape


class TestConv2dFullContext:
    def test_identity_kernel(self, rng):
        x = rng.random((1, 1, 6))
        y, _ = ad.conv2d_full_context_forward(x, np.ones((1, 1, 1, 1)), np.zeros(1))
        np.testing.assert_array_equal(y, x)

    def test_all_ones(self):
        # C=2, D=3, s=3, ones input padded with ones on the left and zeros on the right
        x = ad.pad_bins(np.ones((1, 2, 3)), 1, 1)
        y, _ = ad.conv2d_full_context_forward(x, np.ones((1, 1, 2, 3)), np.zeros(1))
        want = conv2d_full_context_naive(x, np.ones((1, 1, 2, 3)), np.zeros(1))
        np.testing.assert_array_equal(y, want)
        np.testing.assert_array_equal(y[0, 0], [6.0, 6.0, 4.0])

    def test_matches_naive(self, rng):
        for _ in range(5):
            B, C, D, K = rng.integers(1, 4), rng.integers(1, 9), rng.integers(1, 9), rng.integers(1, 9)
            s = int(rng.choice([1, 3, 5]))
            x = rng.normal(size=(B, C, D + s - 1))
            k = rng.normal(size=(K, 1, C, s))
            b = rng.normal(size=K)
            y, _ = ad.conv2d_full_context_forward(x, k, b)
            np.testing.assert_allclose(y, conv2d_full_context_naive(x, k, b), atol=1e-12, rtol=0)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            ad.conv2d_full_context_forward(rng.random((1, 3, 5)), rng.random((2, 1, 4, 3)), np.zeros(2))

    def test_gradients(self, rng):
        x = rng.normal(size=(2, 3, 7))
        k = rng.normal(size=(4, 1, 3, 3))
        b = rng.normal(size=4)
        r = rng.normal(size=(2, 4, 5))

        def f():
            return float(np.sum(ad.conv2d_full_context_forward(x, k, b)[0] * r))

        _, ctx = ad.conv2d_full_context_forward(x, k, b)
        dx, dk, db = ad.conv2d_full_context_backward(ctx, r)
        assert rel_err(dx, central_diff(f, x)) < 1e-4
        assert rel_err(dk, central_diff(f, k)) < 1e-4
        assert rel_err(db, central_diff(f, b)) < 1e-4


class TestGroupedConv1d:
    def test_delta_kernel(self):
        x = ad.pad_bins(np.array([[[0.2, 0.5, 0.9]]]), 1, 1)
        w = np.array([[[0.0, 1.0, 0.0]]])
        y, _ = ad.grouped_conv1d_forward(x, w, np.zeros(1), 1)
        np.testing.assert_array_equal(y, [[[0.2, 0.5, 0.9]]])
        shift = np.array([[[1.0, 0.0, 0.0]]])
        y, _ = ad.grouped_conv1d_forward(x, shift, np.zeros(1), 1)
        np.testing.assert_array_equal(y, [[[1.0, 0.2, 0.5]]])  # ones pad visible

    @pytest.mark.parametrize("groups,cin,cout", [(1, 3, 5), (4, 4, 4), (2, 4, 6), (3, 6, 3), (4, 8, 8)])
    def test_matches_naive(self, rng, groups, cin, cout):
        s = 3
        x = rng.normal(size=(2, cin, 6 + s - 1))
        w = rng.normal(size=(cout, cin // groups, s))
        b = rng.normal(size=cout)
        y, _ = ad.grouped_conv1d_forward(x, w, b, groups)
        np.testing.assert_allclose(y, conv1d_naive(x, w, b, groups), atol=1e-12, rtol=0)

    def test_depthwise_isolation(self, rng):
        K = 5
        x = rng.normal(size=(1, K, 9))
        w = rng.normal(size=(K, 1, 3))
        y0, _ = ad.grouped_conv1d_forward(x, w, np.zeros(K), K)
        x2 = x.copy()
        x2[0, 2] += 10.0
        y1, _ = ad.grouped_conv1d_forward(x2, w, np.zeros(K), K)
        changed = np.any(y0 != y1, axis=(0, 2))
        np.testing.assert_array_equal(changed, [False, False, True, False, False])

    def test_divisibility(self, rng):
        with pytest.raises(ValueError):
            ad.grouped_conv1d_forward(rng.random((1, 4, 5)), rng.random((6, 1, 3)), np.zeros(6), 4)

    @pytest.mark.parametrize("groups,cin,cout,s", [(1, 3, 2, 3), (4, 4, 4, 3), (2, 4, 6, 3), (1, 3, 1, 7)])
    def test_gradients(self, rng, groups, cin, cout, s):
        x = rng.normal(size=(2, cin, 5 + s - 1))
        w = rng.normal(size=(cout, cin // groups, s))
        b = rng.normal(size=cout)
        r = rng.normal(size=(2, cout, 5))

        def f():
            return float(np.sum(ad.grouped_conv1d_forward(x, w, b, groups)[0] * r))

        _, ctx = ad.grouped_conv1d_forward(x, w, b, groups)
        dx, dw, db = ad.grouped_conv1d_backward(ctx, r)
        assert rel_err(dx, central_diff(f, x)) < 1e-4
        assert rel_err(dw, central_diff(f, w)) < 1e-4
        assert rel_err(db, central_diff(f, b)) < 1e-4


class TestDyTanh:
    def test_zero_alpha(self, rng):
        y, _ = ad.dytanh_forward(rng.normal(size=(1, 3, 4)), 0.0, np.ones(3), np.zeros(3))
        np.testing.assert_array_equal(y, 0.0)

    def test_origin_slope(self):
        x = np.zeros((1, 1, 1))
        y, ctx = ad.dytanh_forward(x, 1.0, np.ones(1), np.zeros(1))
        assert y[0, 0, 0] == 0.0
        dx, *_ = ad.dytanh_backward(ctx, np.ones_like(y))
        assert dx[0, 0, 0] == 1.0

    def test_gradients(self, rng):
        x = rng.normal(size=(2, 3, 6))
        alpha = np.array([0.7])
        gamma = rng.normal(size=3)
        beta = rng.normal(size=3)
        r = rng.normal(size=x.shape)

        def f():
            return float(np.sum(ad.dytanh_forward(x, alpha, gamma, beta)[0] * r))

        _, ctx = ad.dytanh_forward(x, alpha, gamma, beta)
        dx, da, dg, db = ad.dytanh_backward(ctx, r)
        for ana, arr in [(dx, x), (da, alpha), (dg, gamma), (db, beta)]:
            assert rel_err(ana, central_diff(f, arr)) < 1e-4


class TestElementwise:
    def test_sigmoid(self):
        assert ad.sigmoid(np.array(0.0)) == 0.5
        s = ad.sigmoid(np.array([-40.0, 40.0, -800.0, 800.0]))
        assert np.all(np.isfinite(s))
        assert 0 < s[0] < 1e-17 and 1 - 1e-15 < s[1] <= 1

    def test_dropout_eval_identity(self, rng):
        x = rng.normal(size=(3, 4))
        y, _ = ad.dropout_forward(x, 0.35, rng, training=False)
        np.testing.assert_array_equal(y, x)

    def test_dropout_mean_preserved(self):
        x = np.linspace(0.5, 2.0, 10)
        xs = np.broadcast_to(x, (100_000, 10))
        y, _ = ad.dropout_forward(xs, 0.35, np.random.default_rng(0), training=True)
        np.testing.assert_allclose(y.mean(axis=0), x, rtol=0.01)

    def test_dropout_seeded(self):
        x = np.ones((4, 50))
        a, _ = ad.dropout_forward(x, 0.35, np.random.default_rng(9), training=True)
        b, _ = ad.dropout_forward(x, 0.35, np.random.default_rng(9), training=True)
        np.testing.assert_array_equal(a == 0, b == 0)

    def test_dropout_rate_validated(self):
        with pytest.raises(ValueError):
            ad.dropout_forward(np.ones(3), 1.0, None, training=True)

    def test_residual_shapes(self):
        with pytest.raises(ValueError):
            ad.residual_add(np.ones(3), np.ones(4))

    def test_relu_composite_gradient(self, rng):
        # conv -> relu -> dropout -> residual, kinks avoided by the random draw
        x = rng.normal(size=(1, 2, 8))
        w = rng.normal(size=(2, 2, 3))
        b = rng.normal(size=2)
        r = rng.normal(size=(1, 2, 6))

        def run():
            h, c1 = ad.grouped_conv1d_forward(x, w, b, 1)
            a, c2 = ad.relu_forward(h)
            d, c3 = ad.dropout_forward(a, 0.3, np.random.default_rng(4), training=True)
            return ad.residual_add(d, x[..., 1:-1]), (c1, c2, c3)

        def f():
            return float(np.sum(run()[0] * r))

        _, (c1, c2, c3) = run()
        g = ad.relu_backward(c2, ad.dropout_backward(c3, r))
        dx, dw, db = ad.grouped_conv1d_backward(c1, g)
        dx[..., 1:-1] += r
        assert rel_err(dx, central_diff(f, x)) < 1e-4
        assert rel_err(dw, central_diff(f, w)) < 1e-4


class TestLosses:
    def test_bce_at_zero(self):
        loss, _ = ad.bce_loss(np.zeros(5), CbeVector.from_count(2, 5))
        assert loss == pytest.approx(np.log(2), abs=1e-15)

    def test_bce_saturated(self):
        t = CbeVector.from_count(3, 6).bits
        loss, _ = ad.bce_loss(np.where(t == 1, 40.0, -40.0), t)
        assert loss < 1e-10

    def test_bce_gradient(self, rng):
        z = rng.normal(size=7) * 3
        t = CbeVector.from_count(4, 7)
        _, g = ad.bce_loss(z, t)
        num = central_diff(lambda: ad.bce_loss(z, t)[0], z)
        assert rel_err(g, num) < 1e-4

    def test_bce_batch_is_mean(self, rng):
        z = rng.normal(size=(3, 5))
        t = (np.arange(5) < np.array([[1], [3], [5]])).astype(float)
        loss, _ = ad.bce_loss(z, t)
        assert loss == pytest.approx(np.mean([ad.bce_loss(z[i], t[i])[0] for i in range(3)]), abs=1e-15)

    def test_softmax_ce_gradient(self, rng):
        z = rng.normal(size=(2, 6))
        cls = np.array([1, 4])
        _, g = ad.softmax_cross_entropy(z, cls)
        num = central_diff(lambda: ad.softmax_cross_entropy(z, cls)[0], z)
        assert rel_err(g, num) < 1e-4


class TestGradCheck:
    def test_linear_is_exact(self, rng):
        w = rng.normal(size=5)
        x = rng.normal(size=5)
        err = ad.grad_check(lambda: float(w @ x), {"w": w}, {"w": x.copy()})
        assert err < 1e-9

    def test_dytanh(self, rng):
        x = rng.normal(size=(1, 3, 4))
        alpha = np.array([0.5])
        gamma, beta = np.ones(3), np.zeros(3)
        r = rng.normal(size=x.shape)

        def f():
            return float(np.sum(ad.dytanh_forward(x, alpha, gamma, beta)[0] * r))

        _, ctx = ad.dytanh_forward(x, alpha, gamma, beta)
        dx, da, dg, db = ad.dytanh_backward(ctx, r)
        params = {"x": x, "alpha": alpha, "gamma": gamma, "beta": beta}
        assert ad.grad_check(f, params, {"x": dx, "alpha": da, "gamma": dg, "beta": db}) < 1e-4

    def test_detects_wrong_gradient(self, rng):
        w = rng.normal(size=3)
        err = ad.grad_check(lambda: float(np.sum(w ** 2)), {"w": w}, {"w": w.copy()})
        assert err > 0.1
