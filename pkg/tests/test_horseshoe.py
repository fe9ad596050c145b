import numpy as np
import pytest
from scipy import stats

from spillscm import horseshoe


def pinned_state(coef, local, noise=1.0):
    return horseshoe.HorseshoeState(
        coef=np.asarray(coef, dtype=float),
        local_scale_sq=np.asarray(local, dtype=float),
        noise_var=noise,
    )


def test_inverse_gamma_moments(rng):
    # IG(3, 2): E[X] = 2/(3-1) = 1, E[1/X] = 3/2
    draws = horseshoe.sample_inverse_gamma(3.0, 2.0, rng, size=200_000)
    assert draws.mean() == pytest.approx(1.0, rel=0.02)
    assert (1.0 / draws).mean() == pytest.approx(1.5, rel=0.02)


def test_local_scale_conditional_values():
    state = pinned_state([2.0], [1.0])
    state.aux_local = 1.0
    shape, scales = horseshoe.local_scale_conditional(state)
    assert shape == 1.0
    np.testing.assert_allclose(scales, [3.0])   # 2^2/2 + 1/1

    state = pinned_state([0.0], [1.0])
    shape, scales = horseshoe.local_scale_conditional(state)
    np.testing.assert_allclose(scales, [1.0])


def test_local_scale_monte_carlo_precision_oracle(rng):
    # for IG(1, 3) the precision 1/lambda^2 is Gamma(1, rate 3): mean 1/3
    state = pinned_state([2.0], [1.0])
    precisions = np.empty(1_000_000)
    draws = horseshoe.sample_inverse_gamma(1.0, 3.0, rng, size=precisions.size)
    precisions = 1.0 / draws
    assert precisions.mean() == pytest.approx(1.0 / 3.0, rel=0.01)


def test_global_aux_conditionals_and_determinism():
    state = pinned_state([0.5], [1.0])
    state.global_scale_sq = 1.0
    shape, scale = horseshoe.aux_local_conditional(state)
    assert (shape, scale) == (1.0, 2.0)        # 1/1 + 1/1

    state.aux_local = 1.0
    state.aux_global = 1.0
    assert horseshoe.global_scale_conditional(state) == (1.0, 2.0)

    state.global_scale_sq = 2.0
    state.noise_var = 4.0
    assert horseshoe.aux_global_conditional(state) == (1.0, 0.75)

    # repeated calls on the same state give identical parameters
    assert horseshoe.aux_local_conditional(state) == horseshoe.aux_local_conditional(state)


def test_noise_conditional_values():
    state = pinned_state([0.0], [1.0])
    state.aux_global = 1.0
    state.aux_noise = 1.0
    shape, scale = horseshoe.noise_conditional(np.zeros(2), state)
    assert (shape, scale) == (2.0, 2.0)        # 1 + T0/2 with T0=2

    shape, scale = horseshoe.noise_conditional(np.array([2.0, 0.0]), state)
    assert (shape, scale) == (2.0, 4.0)        # + r'r/2 = 2

    # stacked residuals (N=2, T0=3) push the shape to 1 + 6/2 = 4
    shape, _ = horseshoe.noise_conditional(np.zeros(6), state)
    assert shape == 4.0


def test_aux_noise_conditional_uses_hyper_scale():
    state = pinned_state([0.0], [1.0], noise=0.5)
    shape, scale = horseshoe.aux_noise_conditional(state)
    assert shape == 1.0
    assert scale == pytest.approx(2.0 + 0.01)


def test_coef_conditional_matches_hand_ridge():
    design = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
    response = np.array([1.0, 2.0, 3.0])
    state = pinned_state([0.0, 0.0], [1.0, 1.0], noise=1.0)
    mean, cov = horseshoe.coef_conditional(design, response, state)
    a_mat = design.T @ design + np.eye(2)
    expected = np.linalg.inv(a_mat) @ design.T @ response
    np.testing.assert_allclose(mean, expected, atol=1e-12)
    np.testing.assert_allclose(cov, np.linalg.inv(a_mat), atol=1e-12)


def test_coef_conditional_generalized_ridge_random(rng):
    for _ in range(50):
        n, k = int(rng.integers(3, 12)), int(rng.integers(1, 5))
        design = rng.standard_normal((n, k))
        response = rng.standard_normal(n)
        local = rng.uniform(0.1, 5.0, size=k)
        noise = float(rng.uniform(0.2, 3.0))
        state = pinned_state(np.zeros(k), local, noise)
        mean, _ = horseshoe.coef_conditional(design, response, state)
        ridge = np.linalg.inv(design.T @ design + noise * np.diag(1.0 / local)) @ (
            design.T @ response
        )
        np.testing.assert_allclose(mean, ridge, atol=1e-10)


def test_flat_prior_limit_recovers_ols(rng):
    q, _ = np.linalg.qr(rng.standard_normal((8, 3)))
    design = q
    response = rng.standard_normal(8)
    state = pinned_state(np.zeros(3), np.full(3, 1e12), noise=1.0)
    mean, _ = horseshoe.coef_conditional(design, response, state)
    np.testing.assert_allclose(mean, design.T @ response, atol=1e-9)


def test_zero_response_zero_mean(rng):
    design = rng.standard_normal((6, 2))
    state = pinned_state(np.zeros(2), np.ones(2))
    mean, _ = horseshoe.coef_conditional(design, np.zeros(6), state)
    np.testing.assert_allclose(mean, 0.0, atol=1e-14)


def test_scales_strictly_positive_over_long_run(rng):
    # 1e5 sweeps of the scale hierarchy with a fixed coefficient/residual pair
    state = pinned_state([0.4, 0.0, -0.1], np.ones(3), noise=1.0)
    residuals = np.array([0.3, -0.2, 0.1, 0.05])
    smallest = np.inf
    for _ in range(100_000):
        horseshoe.sample_local_scales(state, rng)
        horseshoe.sample_global_and_aux(state, rng)
        horseshoe.sample_noise_variance(residuals, state, rng)
        smallest = min(
            smallest,
            state.local_scale_sq.min(),
            state.aux_local,
            state.global_scale_sq,
            state.aux_global,
            state.noise_var,
            state.aux_noise,
        )
    assert smallest > 0.0


def test_sample_coefficients_updates_state(rng):
    design = rng.standard_normal((10, 2))
    response = design @ np.array([1.0, -0.5]) + 0.1 * rng.standard_normal(10)
    state = pinned_state(np.zeros(2), np.ones(2), noise=0.01)
    draw = horseshoe.sample_coefficients(design, response, state, rng)
    assert draw is state.coef
    np.testing.assert_allclose(draw, [1.0, -0.5], atol=0.2)


def forward_chain_draw(design, rng, hyper=10.0):
    """One exact draw from the full prior-plus-data hierarchy (N = 1)."""
    clip = lambda v: min(max(v, horseshoe.IG_FLOOR), horseshoe.IG_CEIL)
    ig = lambda shape, scale: clip(1.0 / rng.gamma(shape, 1.0 / clip(scale)))
    aux_noise = ig(0.5, 1.0 / hyper**2)
    noise = ig(0.5, 1.0 / aux_noise)
    aux_global = ig(0.5, 1.0 / noise)
    global_sq = ig(0.5, 1.0 / aux_global)
    aux_local = ig(0.5, 1.0 / global_sq)
    local = ig(0.5, 1.0 / aux_local)
    coef = np.sqrt(local) * rng.standard_normal()
    y = design[:, 0] * coef + np.sqrt(noise) * rng.standard_normal(design.shape[0])
    return global_sq, coef, noise, local, aux_local, aux_global, aux_noise, y


def test_geweke_style_stationarity():
    """Forward draws and Gibbs-augmented draws of the global scale agree.

    N = 1 makes every full conditional exact, so the successive-conditional
    chain (redraw the data, then one Gibbs sweep) shares the forward marginal.
    The chain starts at a forward draw and is thinned hard because the global
    scale mixes on a ~50-sweep time scale; the seed is pinned (the comparison
    is a 5%-level test); compared through a bounded transform to dodge the
    heavy tail.
    """
    from spillscm import weights_sampler

    rng = np.random.default_rng(7)
    design = np.array([[0.7], [-1.2], [0.4]])
    n_samples = 1200

    forward = np.array([forward_chain_draw(design, rng)[0] for _ in range(n_samples)])

    g_sq, coef, noise, local, aux_l, aux_g, aux_n, _ = forward_chain_draw(design, rng)
    state = horseshoe.HorseshoeState(
        coef=np.array([coef]),
        local_scale_sq=np.array([local]),
        aux_local=aux_l,
        global_scale_sq=g_sq,
        aux_global=aux_g,
        noise_var=noise,
        aux_noise=aux_n,
    )
    successive = np.empty(n_samples)
    thin = 120
    for i in range(n_samples * thin):
        y = design[:, 0] * state.coef[0] + np.sqrt(state.noise_var) * rng.standard_normal(3)
        weights_sampler.gibbs_step(state, design, y, rng)
        if i % thin == thin - 1:
            successive[i // thin] = state.global_scale_sq

    transform = lambda v: 1.0 / (1.0 + np.asarray(v))
    result = stats.ks_2samp(transform(forward), transform(successive))
    assert result.pvalue > 0.05, f"KS p-value {result.pvalue}"
