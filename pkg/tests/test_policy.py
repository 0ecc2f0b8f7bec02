import math

import numpy as np
import pytest

from polex import rng
from polex.dynamics import DynamicsSpec
from polex.errors import ConfigError, NotPSDError, UnsupportedOperation
from polex.policy import (
    AggregatedCoefficients,
    CustomSampler,
    FiniteSupport,
    GaussianAffine,
    PolicySpec,
    QuadratureSpec,
    aggregate_coefficients,
    aggregate_reward,
    psd_sqrt,
    sample_action,
    score,
)
from polex.presets import get_policy_preset, policy_preset_names


def gauss_policy(mean_fn=None, chol=None, score_fn=None):
    mean_fn = mean_fn or (lambda t, x: np.zeros(x.shape[:-1] + (1,)))
    chol = np.atleast_2d(chol if chol is not None else 1.0)
    return PolicySpec(action_dim=1, kind=GaussianAffine(mean_fn=mean_fn, chol_cov=chol),
                      score_fn=score_fn)


def drift_dyn(b, sigma, x0=0.0):
    return DynamicsSpec(state_dim=1, drift=b, vol=sigma, x0=np.atleast_1d(x0))


# --- sampling map -------------------------------------------------------------

def test_gaussian_zero_noise_returns_mean():
    pol = gauss_policy()
    a = sample_action(pol, 0.0, np.zeros((1, 1)), np.zeros((1, 1)))
    assert a.shape == (1, 1) and a[0, 0] == 0.0


def test_gaussian_affine_map():
    pol = gauss_policy(mean_fn=lambda t, x: x, chol=2.0)
    a = sample_action(pol, 0.0, np.array([[3.0]]), np.array([[1.0]]))
    assert a[0, 0] == 5.0  # 3 + 2*1


def test_finite_support_inverse_cdf():
    # hand-enumerated inverse-CDF table for atoms (-1, 0.5), (+1, 0.5):
    #   cumulative = [0.5, 1.0]; F^{-1}(u) = -1 for u <= 0.5, +1 above
    pol = PolicySpec(action_dim=1,
                     kind=FiniteSupport(atoms=(((-1.0,), 0.5), ((1.0,), 0.5))))
    x = np.zeros((1, 1))
    for u, expected in [(0.7, 1.0), (0.2, -1.0), (0.5, -1.0), (0.0, -1.0), (0.999, 1.0)]:
        a = sample_action(pol, 0.0, x, np.array([[u]]))
        assert a[0, 0] == expected, f"u={u}"


def test_custom_sampler_roundtrip():
    pol = PolicySpec(
        action_dim=1,
        kind=CustomSampler(sampler=lambda t, x, xi: np.abs(xi), noise_dim=1),
    )
    a = sample_action(pol, 0.0, np.zeros((2, 1)), np.array([[-1.5], [2.0]]))
    assert np.array_equal(a, [[1.5], [2.0]])


def test_sample_action_dimension_mismatch_is_config_error():
    pol = gauss_policy(mean_fn=lambda t, x: x @ np.ones((3, 2)))  # wrong output dim
    with pytest.raises(ConfigError):
        sample_action(pol, 0.0, np.zeros((1, 3)), np.zeros((1, 1)))
    with pytest.raises(ConfigError):
        sample_action(gauss_policy(), 0.0, np.zeros((1, 1)), np.zeros((1, 2)))


def test_empirical_law_gaussian():
    pol = gauss_policy(mean_fn=lambda t, x: x + 1.0, chol=0.5)
    gen = rng.substream(7, rng.SAMPLING)
    m = 100_000
    noise = pol.draw_noise(gen, (m,))
    a = sample_action(pol, 0.0, np.full((m, 1), 2.0), noise)[:, 0]
    se_mean = 0.5 / math.sqrt(m)
    assert abs(a.mean() - 3.0) <= 4 * se_mean
    var = a.var(ddof=1)
    assert abs(var - 0.25) <= 4 * 0.25 * math.sqrt(2.0 / (m - 1))


def test_empirical_law_finite_support():
    pol = get_policy_preset("two_point")
    gen = rng.substream(8, rng.SAMPLING)
    m = 100_000
    a = sample_action(pol, 0.0, np.zeros((m, 1)), pol.draw_noise(gen, (m,)))[:, 0]
    freq = np.mean(a == 1.0)
    se = math.sqrt(0.25 / m)
    assert abs(freq - 0.5) <= 4 * se


# --- validation ---------------------------------------------------------------

def test_finite_support_probability_validation():
    with pytest.raises(ConfigError):
        FiniteSupport(atoms=(((0.0,), 0.6), ((1.0,), 0.5)))
    with pytest.raises(ConfigError):
        FiniteSupport(atoms=(((0.0,), -0.1), ((1.0,), 1.1)))


def test_chol_validation():
    with pytest.raises(ConfigError):
        GaussianAffine(mean_fn=lambda t, x: x, chol_cov=np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ConfigError):
        GaussianAffine(mean_fn=lambda t, x: x, chol_cov=np.array([[-1.0]]))


def test_policy_presets_exist():
    assert policy_preset_names() == ["gauss_mean_field", "gauss_std", "two_point"]
    for name in policy_preset_names():
        pol = get_policy_preset(name)
        a = sample_action(pol, 0.0, np.zeros((1, 1)),
                          np.full((1, pol.noise_dim), 0.25))
        assert a.shape == (1, 1)


# --- score --------------------------------------------------------------------

def test_score_gaussian_unit_variance():
    pol = gauss_policy(score_fn=lambda a, t, x: a[..., 0] - 1.0)  # N(psi,1), psi=1
    assert score(pol, np.array([[2.0]]), 0.0, np.zeros((1, 1)))[0] == 1.0
    assert score(pol, np.array([[1.0]]), 0.0, np.zeros((1, 1)))[0] == 0.0


def test_score_gaussian_variance_four():
    # (a - psi)/sigma^2 = (3 - 1)/4 = 0.5
    pol = gauss_policy(chol=2.0, score_fn=lambda a, t, x: (a[..., 0] - 1.0) / 4.0)
    assert score(pol, np.array([[3.0]]), 0.0, np.zeros((1, 1)))[0] == 0.5


def test_score_absent_raises():
    with pytest.raises(UnsupportedOperation):
        score(gauss_policy(), np.array([[1.0]]), 0.0, np.zeros((1, 1)))


# --- psd_sqrt -----------------------------------------------------------------

def test_psd_sqrt_identity_and_diagonal():
    assert np.array_equal(psd_sqrt(np.eye(3)), np.eye(3))
    assert np.allclose(psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-14)


def test_psd_sqrt_two_by_two_against_hand_eigendecomposition():
    m = np.array([[2.0, 1.0], [1.0, 2.0]])
    # eigenvalues {1, 3} with eigenvectors (1,-1)/sqrt2 and (1,1)/sqrt2:
    # S = [[(sqrt3+1)/2, (sqrt3-1)/2], [(sqrt3-1)/2, (sqrt3+1)/2]]
    s3 = math.sqrt(3.0)
    expected = np.array([[(s3 + 1) / 2, (s3 - 1) / 2], [(s3 - 1) / 2, (s3 + 1) / 2]])
    got = psd_sqrt(m)
    assert np.allclose(got, expected, atol=1e-12)
    assert np.max(np.abs(got @ got - m)) <= 1e-8 * np.max(np.abs(m))


def test_psd_sqrt_roundtrip_random_orthogonal():
    gen = np.random.default_rng(123)
    for d in (1, 2, 3, 5):
        for _ in range(5):
            q, _ = np.linalg.qr(gen.standard_normal((d, d)))
            w = gen.uniform(0.1, 4.0, size=d)
            s = (q * w) @ q.T
            s = 0.5 * (s + s.T)
            back = psd_sqrt(s @ s)
            assert np.max(np.abs(back - s)) <= 1e-7 * max(np.max(np.abs(s)), 1.0)


def test_psd_sqrt_batched():
    mats = np.stack([np.diag([1.0, 4.0]), np.diag([9.0, 16.0])])
    roots = psd_sqrt(mats)
    assert np.allclose(roots, np.stack([np.diag([1.0, 2.0]), np.diag([3.0, 4.0])]))


def test_psd_sqrt_rejects_bad_input():
    with pytest.raises(NotPSDError):
        psd_sqrt(np.array([[0.0, 1.0], [-1.0, 0.0]]))  # antisymmetric
    with pytest.raises(NotPSDError):
        psd_sqrt(np.array([[1.0, 0.0], [0.0, -0.5]]))  # negative eigenvalue
    # tiny negative eigenvalue within tolerance is clamped, not rejected
    eps = np.array([[1e-12]])
    assert psd_sqrt(-eps + 1e-11)[0, 0] >= 0.0


# --- aggregation --------------------------------------------------------------

def test_aggregate_drift_of_mean_zero_policy_vanishes():
    dyn = drift_dyn(lambda t, x, a: a, lambda t, x, a: np.ones(x.shape[:-1] + (1, 1)))
    agg = aggregate_coefficients(gauss_policy(), dyn, QuadratureSpec.closed_form())
    x = np.array([[0.3], [-2.0]])
    assert np.allclose(agg.drift_fn(0.2, x), 0.0)
    assert np.allclose(agg.diffusion_fn(0.2, x), 1.0)


def test_aggregate_vol_control_unit_diffusion():
    dyn = drift_dyn(lambda t, x, a: np.zeros(x.shape), lambda t, x, a: a[..., None])
    for quad in (QuadratureSpec.closed_form(), QuadratureSpec.gauss_hermite(20)):
        agg = aggregate_coefficients(gauss_policy(), dyn, quad)
        val = agg.diffusion_fn(0.0, np.zeros((2, 1)))
        assert np.allclose(val, 1.0, atol=1e-12), quad.method


def test_dirac_aggregation_is_exact():
    dyn = drift_dyn(lambda t, x, a: x + a,
                    lambda t, x, a: (1.0 + x[..., None] ** 2))
    pol = PolicySpec(action_dim=1, kind=FiniteSupport(atoms=(((0.0,), 1.0),)))
    agg = aggregate_coefficients(pol, dyn)
    x = np.array([[0.7], [-1.3], [4.0]])
    a = np.zeros((3, 1))
    assert np.array_equal(agg.drift_fn(0.0, x), dyn.drift(0.0, x, a))
    sig = agg.diffusion_fn(0.0, x)
    ss = np.asarray(dyn.vol(0.0, x, a))
    assert np.array_equal(sig @ np.swapaxes(sig, -1, -2),
                          ss @ np.swapaxes(ss, -1, -2))


def test_quadrature_methods_agree():
    # drift affine in a with state-dependent mean: closed form is exact
    pol = gauss_policy(mean_fn=lambda t, x: 0.5 * x, chol=1.5)
    dyn = drift_dyn(lambda t, x, a: a, lambda t, x, a: a[..., None])
    x = np.array([[1.1], [-0.4]])
    cf = aggregate_coefficients(pol, dyn, QuadratureSpec.closed_form())
    gh = aggregate_coefficients(pol, dyn, QuadratureSpec.gauss_hermite(30))
    samples = 20_000
    mc = aggregate_coefficients(pol, dyn, QuadratureSpec.monte_carlo(samples, seed=3))
    assert np.allclose(cf.drift_fn(0.0, x), gh.drift_fn(0.0, x), atol=1e-10)
    assert np.allclose(cf.diffusion_fn(0.0, x), gh.diffusion_fn(0.0, x), atol=1e-10)
    # Monte Carlo nodes: 3 standard errors of the integrand (a has sd 1.5)
    se_drift = 1.5 / math.sqrt(samples)
    assert np.max(np.abs(mc.drift_fn(0.0, x) - cf.drift_fn(0.0, x))) <= 3 * se_drift
    sq_cf = cf.diffusion_fn(0.0, x) ** 2
    sq_mc = mc.diffusion_fn(0.0, x) ** 2
    se_second = math.sqrt(2.0) * 1.5 ** 2 / math.sqrt(samples)  # var(a^2) = 2 sigma^4
    assert np.max(np.abs(sq_mc - sq_cf)) <= 4 * se_second


def test_diffusion_squared_reproduces_policy_average():
    # nonlinear-in-action volatility: Gauss-Hermite vs a much finer reference
    pol = gauss_policy()
    dyn = drift_dyn(lambda t, x, a: np.zeros(x.shape),
                    lambda t, x, a: np.tanh(a)[..., None] + 1.5)
    x = np.zeros((1, 1))
    sq = {}
    for order in (20, 40, 80):
        agg = aggregate_coefficients(pol, dyn, QuadratureSpec.gauss_hermite(order))
        sq[order] = agg.diffusion_fn(0.0, x) ** 2
    # order-20 already sits at the quadrature tolerance; order-40 is converged
    assert np.allclose(sq[20], sq[80], rtol=1e-3)
    assert np.allclose(sq[40], sq[80], rtol=1e-6)


def test_closed_form_requires_gaussian():
    pol = PolicySpec(action_dim=1,
                     kind=FiniteSupport(atoms=(((-1.0,), 0.5), ((1.0,), 0.5))))
    dyn = drift_dyn(lambda t, x, a: a, lambda t, x, a: a[..., None])
    # finite support ignores the quadrature argument entirely: exact sum
    agg = aggregate_coefficients(pol, dyn)
    assert np.allclose(agg.drift_fn(0.0, np.zeros((1, 1))), 0.0)
    assert np.allclose(agg.diffusion_fn(0.0, np.zeros((1, 1))), 1.0)

    custom = PolicySpec(action_dim=1,
                        kind=CustomSampler(sampler=lambda t, x, xi: xi, noise_dim=1))
    with pytest.raises(ConfigError):
        aggregate_coefficients(custom, dyn, QuadratureSpec.closed_form())


def test_custom_sampler_aggregation_monte_carlo():
    custom = PolicySpec(
        action_dim=1,
        kind=CustomSampler(sampler=lambda t, x, xi: xi,
                           noise_dim=1,
                           quadrature=QuadratureSpec.monte_carlo(30_000, seed=11)),
    )
    dyn = drift_dyn(lambda t, x, a: a, lambda t, x, a: np.ones(x.shape[:-1] + (1, 1)))
    agg = aggregate_coefficients(custom, dyn)
    drift = agg.drift_fn(0.0, np.zeros((1, 1)))
    assert abs(drift[0, 0]) <= 3.0 / math.sqrt(30_000)
    # deterministic nodes: two evaluations agree bitwise
    assert np.array_equal(drift, agg.drift_fn(0.0, np.zeros((1, 1))))


def test_aggregate_reward_gaussian_square():
    pol = gauss_policy()
    dyn = DynamicsSpec(state_dim=1,
                       drift=lambda t, x, a: np.zeros(x.shape),
                       vol=lambda t, x, a: np.ones(x.shape[:-1] + (1, 1)),
                       x0=np.zeros(1),
                       reward=lambda t, x, a: a[..., 0] ** 2)
    r_bar = aggregate_reward(pol, dyn)
    # E a^2 = 1 under N(0,1); Hermite order 20 integrates degree-2 exactly
    assert np.allclose(r_bar(0.0, np.zeros((4, 1))), 1.0, atol=1e-12)
    assert aggregate_reward(pol, DynamicsSpec(
        state_dim=1, drift=dyn.drift, vol=dyn.vol, x0=np.zeros(1))) is None
