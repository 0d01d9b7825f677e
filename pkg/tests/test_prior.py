"""Energy prior over (symbol, latent) pairs: identities and gradients."""

import numpy as np

from conftest import numeric_grad, rel_error
from svebm import nn
from svebm.prior import EnergyPrior

TOL = 1e-6


def make_prior(rng, d=3, k=4):
    return EnergyPrior(d, k, hidden=(6, 5), rng=rng, out_scale=1.0)


class TestForwardIdentities:

    def test_marginal_energy_is_logsumexp_of_logits(self):
        rng = np.random.default_rng(42)
        prior = make_prior(rng)
        z = rng.normal(size=(10, 3))
        np.testing.assert_allclose(prior.marginal_energy(z),
                                   nn.logsumexp(prior.logits(z)), rtol=1e-12)

    def test_symbol_posterior_is_softmax(self):
        rng = np.random.default_rng(42)
        prior = make_prior(rng)
        z = rng.normal(size=(6, 3))
        p = prior.symbol_posterior(z)
        np.testing.assert_allclose(p, nn.softmax(prior.logits(z)), rtol=1e-12)
        np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)

    def test_unnormalized_log_prior_decomposition(self):
        rng = np.random.default_rng(42)
        prior = make_prior(rng)
        z = rng.normal(size=(5, 3))
        expected = prior.marginal_energy(z) + nn.standard_normal_logpdf(z)
        np.testing.assert_allclose(prior.unnormalized_log_prior(z), expected,
                                   rtol=1e-12)

    def test_single_category_collapses_to_reference(self):
        # K=1: one logit, posterior trivially 1, energy = that logit.
        rng = np.random.default_rng(42)
        prior = EnergyPrior(2, 1, hidden=(4,), rng=rng, out_scale=1.0)
        z = rng.normal(size=(4, 2))
        np.testing.assert_allclose(prior.marginal_energy(z),
                                   prior.logits(z)[:, 0], rtol=1e-12)
        np.testing.assert_allclose(prior.symbol_posterior(z), 1.0, atol=1e-15)


class TestGradients:

    def test_score_matches_numeric_gradient_of_log_prior(self):
        rng = np.random.default_rng(42)
        prior = make_prior(rng)
        z = rng.normal(size=(4, 3))

        def log_prior_sum():
            return float(np.sum(prior.unnormalized_log_prior(z)))

        score = prior.grad_z_log_prior(z)
        num = numeric_grad(log_prior_sum, {"z": z})
        assert rel_error({"z": score}, num) < TOL

    def test_logits_backward_params_and_input(self):
        rng = np.random.default_rng(42)
        prior = make_prior(rng)
        z = rng.normal(size=(5, 3))
        w = rng.normal(size=(5, 4))

        def loss():
            return float(np.sum(prior.logits(z) * w))

        _, cache = prior.forward_logits(z)
        grads, dz = prior.backward_logits(cache, w.copy())
        assert rel_error(grads, numeric_grad(loss, prior.params)) < TOL
        assert rel_error({"z": dz}, numeric_grad(loss, {"z": z})) < TOL

    def test_weighted_energy_grads_vector_weights(self):
        rng = np.random.default_rng(42)
        prior = make_prior(rng)
        z = rng.normal(size=(6, 3))
        w = rng.normal(size=6)

        def loss():
            return float(np.sum(w * prior.marginal_energy(z)))

        grads, energies = prior.marginal_energy_grads(z, w)
        np.testing.assert_allclose(energies, prior.marginal_energy(z),
                                   rtol=1e-12)
        assert rel_error(grads, numeric_grad(loss, prior.params)) < TOL

    def test_scalar_weight_equals_constant_vector(self):
        rng = np.random.default_rng(42)
        prior = make_prior(rng)
        z = rng.normal(size=(5, 3))
        g_scalar, _ = prior.marginal_energy_grads(z, 0.2)
        g_vector, _ = prior.marginal_energy_grads(z, np.full(5, 0.2))
        for k in g_scalar:
            np.testing.assert_array_equal(g_scalar[k], g_vector[k])
