"""Numerics layer: stable reductions, layer gradients, optimizers."""

import numpy as np
import pytest

from conftest import numeric_grad, rel_error
from svebm import nn

TOL = 1e-6


# ---- stable reductions ------------------------------------------------------


class TestReductions:

    def test_logsumexp_matches_naive_in_safe_range(self):
        rng = np.random.default_rng(42)
        a = rng.normal(size=(5, 7))
        naive = np.log(np.sum(np.exp(a), axis=-1))
        np.testing.assert_allclose(nn.logsumexp(a), naive, rtol=1e-12)

    def test_logsumexp_survives_large_magnitudes(self):
        a = np.array([[1000.0, 1000.0], [-1000.0, -1000.0]])
        expected = np.array([1000.0 + np.log(2.0), -1000.0 + np.log(2.0)])
        np.testing.assert_allclose(nn.logsumexp(a), expected, rtol=1e-12)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(42)
        a = rng.normal(scale=50, size=(20, 6))
        p = nn.softmax(a)
        np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)
        assert np.all(p >= 0)

    def test_log_softmax_consistent_with_softmax(self):
        rng = np.random.default_rng(42)
        a = rng.normal(scale=30, size=(10, 4))
        np.testing.assert_allclose(nn.log_softmax(a), np.log(nn.softmax(a)),
                                   atol=1e-12)

    def test_standard_normal_logpdf_matches_formula(self):
        rng = np.random.default_rng(42)
        z = rng.normal(size=(9, 3))
        expected = -0.5 * np.sum(z * z, axis=-1) \
            - 0.5 * 3 * np.log(2 * np.pi)
        np.testing.assert_allclose(nn.standard_normal_logpdf(z), expected,
                                   rtol=1e-12)


# ---- layer gradients --------------------------------------------------------


class TestMlpGradients:

    @pytest.mark.parametrize("sizes,final_act", [
        ((3, 5, 2), False),
        ((3, 5, 2), True),
        ((4, 2), False),
        ((2, 6, 6, 1), False),
    ])
    def test_param_and_input_gradients(self, sizes, final_act):
        rng = np.random.default_rng(42)
        mlp = nn.Mlp(sizes, rng, final_activation=final_act)
        x = rng.normal(size=(4, sizes[0]))
        w = rng.normal(size=(4, sizes[-1]))

        def loss():
            out, _ = mlp.forward(x)
            return float(np.sum(out * w))

        out, cache = mlp.forward(x)
        grads, dx = mlp.backward(cache, w.copy())
        num = numeric_grad(loss, mlp.params)
        assert rel_error(grads, num) < TOL
        num_x = numeric_grad(loss, {"x": x})
        assert rel_error({"x": dx}, num_x) < TOL

    def test_single_row_input(self):
        rng = np.random.default_rng(42)
        mlp = nn.Mlp((3, 4, 2), rng)
        x = rng.normal(size=3)
        out, cache = mlp.forward(x)
        assert out.shape == (2,)
        grads, dx = mlp.backward(cache, np.ones(2))
        assert dx.shape == (3,)


class TestAffineEmbeddingGradients:

    def test_affine(self):
        rng = np.random.default_rng(42)
        layer = nn.Affine(3, 4, rng)
        x = rng.normal(size=(5, 3))
        w = rng.normal(size=(5, 4))

        def loss():
            return float(np.sum(layer.forward(x)[0] * w))

        _, cache = layer.forward(x)
        grads, dx = layer.backward(cache, w.copy())
        assert rel_error(grads, numeric_grad(loss, layer.params)) < TOL
        assert rel_error({"x": dx}, numeric_grad(loss, {"x": x})) < TOL

    def test_embedding_accumulates_repeated_ids(self):
        rng = np.random.default_rng(42)
        emb = nn.Embedding(6, 3, rng)
        ids = np.array([[1, 1, 4], [0, 1, 5]])
        w = rng.normal(size=(2, 3, 3))

        def loss():
            return float(np.sum(emb.forward(ids)[0] * w))

        _, cache = emb.forward(ids)
        grads = emb.backward(cache, w.copy())
        assert rel_error(grads, numeric_grad(loss, emb.params)) < TOL


class TestGruGradients:

    def test_single_step(self):
        rng = np.random.default_rng(42)
        cell = nn.GruCell(3, 4, rng)
        x = rng.normal(size=(2, 3))
        h = rng.normal(size=(2, 4))
        w = rng.normal(size=(2, 4))

        def loss():
            h_new, _ = cell.step(x, h)
            return float(np.sum(h_new * w))

        _, cache = cell.step(x, h)
        grads = nn.zeros_like_params(cell.params)
        dx, dh = cell.step_backward(cache, w.copy(), grads)
        assert rel_error(grads, numeric_grad(loss, cell.params)) < TOL
        num = numeric_grad(loss, {"x": x, "h": h})
        assert rel_error({"x": dx, "h": dh}, num) < TOL

    def test_full_run_with_mask(self):
        rng = np.random.default_rng(42)
        cell = nn.GruCell(3, 4, rng)
        T, B = 5, 3
        xs = rng.normal(size=(T, B, 3))
        h0 = rng.normal(size=(B, 4))
        mask = np.ones((T, B))
        mask[3:, 1] = 0.0      # one sequence ends early
        w = rng.normal(size=(T, B, 4))
        wf = rng.normal(size=(B, 4))

        def loss():
            hs, _ = cell.run(xs, h0, mask)
            return float(np.sum(hs * w) + np.sum(hs[-1] * wf))

        hs, caches = cell.run(xs, h0, mask)
        dhs = np.tile(w, 1).copy()
        grads, dxs, dh0 = cell.run_backward(caches, dhs, dh_final=wf.copy())
        assert rel_error(grads, numeric_grad(loss, cell.params)) < TOL
        num = numeric_grad(loss, {"xs": xs, "h0": h0})
        assert rel_error({"xs": dxs, "h0": dh0}, num) < TOL

    def test_masked_step_passes_state_through(self):
        rng = np.random.default_rng(42)
        cell = nn.GruCell(2, 3, rng)
        x = rng.normal(size=(2, 2))
        h = rng.normal(size=(2, 3))
        mask = np.array([1.0, 0.0])
        h_new, _ = cell.step(x, h, mask)
        np.testing.assert_array_equal(h_new[1], h[1])
        assert not np.array_equal(h_new[0], h[0])


# ---- parameter utilities ----------------------------------------------------


class TestParamUtils:

    def test_init_matrix_scale(self):
        rng = np.random.default_rng(42)
        w = nn.init_matrix(rng, 400, 300, scale=2.0)
        assert w.shape == (400, 300)
        np.testing.assert_allclose(w.std(), 2.0 / np.sqrt(400), rtol=0.05)

    def test_add_grads_weighted_accumulation(self):
        total = {"a": np.ones(3)}
        nn.add_grads(total, {"a": np.full(3, 2.0)}, weight=0.5)
        np.testing.assert_allclose(total["a"], 2.0)

    def test_global_norm(self):
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        assert nn.global_norm(grads) == pytest.approx(5.0)

    def test_clip_rescales_only_above_threshold(self):
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        nn.clip_grads(grads, 2.5)
        assert nn.global_norm(grads) == pytest.approx(2.5)
        grads = {"a": np.array([0.3]), "b": np.array([0.4])}
        before = {k: v.copy() for k, v in grads.items()}
        nn.clip_grads(grads, 2.5)
        np.testing.assert_array_equal(grads["a"], before["a"])
        np.testing.assert_array_equal(grads["b"], before["b"])


# ---- optimizers -------------------------------------------------------------


class TestOptimizers:

    def quadratic_descends(self, opt_kind):
        rng = np.random.default_rng(42)
        params = {"w": rng.normal(size=5)}
        opt = nn.make_optimizer(opt_kind, params, lr=0.1)
        for _ in range(200):
            grads = {"w": 2.0 * params["w"]}
            opt.step(grads)
        assert np.linalg.norm(params["w"]) < 1e-3

    def test_adam_minimizes_quadratic(self):
        self.quadratic_descends("adam")

    def test_sgd_minimizes_quadratic(self):
        self.quadratic_descends("sgd")

    def test_adam_first_step_size_is_lr(self):
        params = {"w": np.array([1.0])}
        opt = nn.Adam(params, lr=0.01)
        opt.step({"w": np.array([3.7])})
        np.testing.assert_allclose(params["w"], 1.0 - 0.01, rtol=1e-6)

    def test_adam_state_roundtrip_resumes_identically(self):
        rng = np.random.default_rng(42)
        params_a = {"w": rng.normal(size=4)}
        params_b = {"w": params_a["w"].copy()}
        opt_a = nn.Adam(params_a, lr=0.05)
        opt_b = nn.Adam(params_b, lr=0.05)
        for i in range(3):
            g = {"w": np.sin(params_a["w"]) + i}
            opt_a.step(g)
        opt_b.load_state_dict(opt_a.state_dict())
        params_b["w"][...] = params_a["w"]
        g = {"w": np.cos(params_a["w"])}
        opt_a.step(g)
        opt_b.step({"w": g["w"].copy()})
        np.testing.assert_array_equal(params_a["w"], params_b["w"])

    def test_unknown_kind_rejected(self):
        with pytest.raises(Exception):
            nn.make_optimizer("momentum", {"w": np.zeros(1)}, 0.1)
