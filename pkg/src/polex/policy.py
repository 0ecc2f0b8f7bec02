"""Stochastic policies, their sampling procedures, and policy-aggregated coefficients.

A stochastic policy maps (t, x) to a distribution over actions.  Executing it
means drawing an action from an explicit noise variable through a sampling map;
averaging the dynamics coefficients against it yields the aggregated drift and
the PSD square root of the aggregated squared volatility, which define the
continuous-execution limit dynamics.

Vectorization convention: state arrays carry a leading batch axis, so ``x`` has
shape ``(m, d)``, actions ``(m, action_dim)``, volatilities ``(m, d, d)``.
User-supplied coefficient callables must broadcast over that leading axis.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import rng
from .errors import ConfigError, NotPSDError, NumericsError, UnsupportedOperation

__all__ = [
    "QuadratureSpec",
    "GaussianAffine",
    "FiniteSupport",
    "CustomSampler",
    "PolicySpec",
    "AggregatedCoefficients",
    "sample_action",
    "score",
    "psd_sqrt",
    "aggregate_coefficients",
    "aggregate_reward",
]


@dataclass(frozen=True)
class QuadratureSpec:
    """How to evaluate policy averages of coefficient functions.

    ``closed_form`` is exact only for coefficients affine in the action under a
    Gaussian policy (or any coefficients under finite support, where the
    weighted sum is always exact).  ``gauss_hermite`` uses a tensor grid of
    ``order`` probabilists' Hermite nodes per action dimension.
    ``monte_carlo`` draws ``samples`` nodes once from a fixed seed, so the
    aggregated coefficients stay deterministic across evaluations.
    """

    method: str  # "closed_form" | "gauss_hermite" | "monte_carlo"
    order: int = 20
    samples: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("closed_form", "gauss_hermite", "monte_carlo"):
            raise ConfigError(f"unknown quadrature method {self.method!r}")
        if self.order < 1:
            raise ConfigError("gauss_hermite order must be >= 1")
        if self.samples < 1:
            raise ConfigError("monte_carlo samples must be >= 1")

    @classmethod
    def closed_form(cls) -> "QuadratureSpec":
        return cls(method="closed_form")

    @classmethod
    def gauss_hermite(cls, order: int = 20) -> "QuadratureSpec":
        return cls(method="gauss_hermite", order=order)

    @classmethod
    def monte_carlo(cls, samples: int = 10_000, seed: int = 0) -> "QuadratureSpec":
        return cls(method="monte_carlo", samples=samples, seed=seed)


@dataclass(frozen=True)
class GaussianAffine:
    """Gaussian policy N(mean_fn(t, x), chol_cov chol_cov^T) sampled by affine map.

    The sampling map is ``a = mean_fn(t, x) + chol_cov @ noise`` with standard
    normal noise, the textbook execution of a Gaussian policy.
    """

    mean_fn: Callable[[float, np.ndarray], np.ndarray]
    chol_cov: np.ndarray  # lower triangular, nonnegative diagonal

    def __post_init__(self):
        chol = np.atleast_2d(np.asarray(self.chol_cov, dtype=float))
        if chol.shape[0] != chol.shape[1]:
            raise ConfigError("chol_cov must be square")
        if np.any(np.triu(chol, k=1) != 0.0):
            raise ConfigError("chol_cov must be lower triangular")
        if np.any(np.diag(chol) < 0.0):
            raise ConfigError("chol_cov diagonal must be nonnegative")
        object.__setattr__(self, "chol_cov", chol)


@dataclass(frozen=True)
class FiniteSupport:
    """Finitely supported policy: atoms with probabilities, sampled by inverse CDF."""

    atoms: tuple  # ((action vector, probability), ...)

    def __post_init__(self):
        cleaned = []
        total = 0.0
        for action, prob in self.atoms:
            a = np.atleast_1d(np.asarray(action, dtype=float))
            p = float(prob)
            if p < 0.0:
                raise ConfigError("atom probabilities must be nonnegative")
            cleaned.append((a, p))
            total += p
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(f"atom probabilities sum to {total}, not 1 within 1e-12")
        dims = {a.shape for a, _ in cleaned}
        if len(dims) != 1:
            raise ConfigError("all atoms must share the action dimension")
        object.__setattr__(self, "atoms", tuple(cleaned))

    @property
    def actions(self) -> np.ndarray:
        return np.stack([a for a, _ in self.atoms])

    @property
    def probs(self) -> np.ndarray:
        return np.array([p for _, p in self.atoms])


@dataclass(frozen=True)
class CustomSampler:
    """User-supplied sampling map a = sampler(t, x, xi) with xi standard normal in R^noise_dim."""

    sampler: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    noise_dim: int
    quadrature: QuadratureSpec = QuadratureSpec.monte_carlo()

    def __post_init__(self):
        if self.noise_dim < 1:
            raise ConfigError("noise_dim must be >= 1")
        if self.quadrature.method == "closed_form":
            raise ConfigError("custom samplers have no closed-form aggregation")


@dataclass(frozen=True)
class PolicySpec:
    """A stochastic policy together with its executable sampling procedure.

    ``score_fn``, when present, maps ``(a, t, x)`` to the gradient of the
    log-density of the policy with respect to its parameters; it is what the
    policy-gradient estimator contracts against.
    """

    action_dim: int
    kind: GaussianAffine | FiniteSupport | CustomSampler
    score_fn: Optional[Callable[[np.ndarray, float, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.action_dim < 1:
            raise ConfigError("action_dim must be a positive integer")
        if isinstance(self.kind, GaussianAffine):
            if self.kind.chol_cov.shape[0] != self.action_dim:
                raise ConfigError("chol_cov dimension does not match action_dim")
        elif isinstance(self.kind, FiniteSupport):
            if self.kind.actions.shape[1] != self.action_dim:
                raise ConfigError("atom dimension does not match action_dim")
        elif not isinstance(self.kind, CustomSampler):
            raise ConfigError(f"unknown policy kind {type(self.kind).__name__}")

    @property
    def noise_dim(self) -> int:
        """Dimension of one sampling-noise draw."""
        if isinstance(self.kind, GaussianAffine):
            return self.action_dim
        if isinstance(self.kind, FiniteSupport):
            return 1
        return self.kind.noise_dim

    @property
    def noise_kind(self) -> str:
        """Law of one noise coordinate: 'normal' or 'uniform'."""
        return "uniform" if isinstance(self.kind, FiniteSupport) else "normal"

    def draw_noise(self, gen: np.random.Generator, shape) -> np.ndarray:
        """Draw sampling noise of the policy's native law/shape budget."""
        full = tuple(shape) + (self.noise_dim,)
        if self.noise_kind == "uniform":
            return gen.random(full)
        return gen.standard_normal(full)


def sample_action(policy: PolicySpec, t: float, x: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Execute the policy's sampling map: one action per batch row.

    ``noise`` must be a fresh draw from the policy's noise space: standard
    normals for Gaussian/custom kinds, uniforms on [0, 1) for finite support.
    """
    x = np.asarray(x, dtype=float)
    noise = np.asarray(noise, dtype=float)
    kind = policy.kind
    if noise.shape[-1] != policy.noise_dim:
        raise ConfigError(
            f"noise has last dimension {noise.shape[-1]}, policy expects {policy.noise_dim}"
        )
    if isinstance(kind, GaussianAffine):
        try:
            mu = np.asarray(kind.mean_fn(t, x), dtype=float)
        except Exception as exc:  # surface shape errors from user callables
            raise ConfigError(f"mean_fn failed on state of shape {x.shape}: {exc}") from exc
        if mu.shape[-1] != policy.action_dim:
            raise ConfigError(
                f"mean_fn returned last dimension {mu.shape[-1]}, expected {policy.action_dim}"
            )
        return mu + noise @ kind.chol_cov.T
    if isinstance(kind, FiniteSupport):
        cum = np.cumsum(kind.probs)
        cum[-1] = 1.0  # guard the top edge against 1e-12 rounding
        idx = np.searchsorted(cum, noise[..., 0], side="left")
        idx = np.minimum(idx, len(kind.atoms) - 1)
        return kind.actions[idx]
    action = np.asarray(kind.sampler(t, x, noise), dtype=float)
    if action.shape[-1] != policy.action_dim:
        raise ConfigError(
            f"sampler returned last dimension {action.shape[-1]}, expected {policy.action_dim}"
        )
    return action


def score(policy: PolicySpec, a: np.ndarray, t: float, x: np.ndarray) -> np.ndarray:
    """Gradient of the policy's log-density at ``a`` with respect to its parameters."""
    if policy.score_fn is None:
        raise UnsupportedOperation("policy has no score function")
    return np.asarray(policy.score_fn(np.asarray(a, dtype=float), t, np.asarray(x, dtype=float)))


def psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Principal square root of a symmetric positive semidefinite matrix.

    Accepts a batch ``(..., d, d)``.  Eigenvalues in ``[-1e-10 * ||M||, 0)``
    are treated as quadrature noise and clamped to zero; anything below that
    raises :class:`NotPSDError`.
    """
    m = np.asarray(mat, dtype=float)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise ConfigError(f"expected square matrices, got shape {m.shape}")
    scale = np.max(np.abs(m), axis=(-2, -1), keepdims=True)
    asym = np.max(np.abs(m - np.swapaxes(m, -1, -2)), axis=(-2, -1), keepdims=True)
    if np.any(asym > 1e-10 * np.maximum(scale, 1e-300)):
        raise NotPSDError("matrix is not symmetric within 1e-10 relative tolerance")
    sym = 0.5 * (m + np.swapaxes(m, -1, -2))
    w, v = np.linalg.eigh(sym)
    floor = -1e-10 * np.squeeze(scale, axis=-1)
    if np.any(w < floor):
        raise NotPSDError(f"not PSD: smallest eigenvalue {w.min()} below tolerance")
    w = np.clip(w, 0.0, None)
    root = np.sqrt(w)
    return (v * root[..., None, :]) @ np.swapaxes(v, -1, -2)


@dataclass(frozen=True)
class AggregatedCoefficients:
    """Policy-averaged drift and diffusion of the continuous-execution dynamics.

    ``diffusion_fn(t, x) @ diffusion_fn(t, x)^T`` reproduces the policy average
    of sigma sigma^T; ``constant`` marks coefficients with no (t, x) dependence,
    for which lattice integration is exact at any resolution.
    """

    drift_fn: Callable[[float, np.ndarray], np.ndarray]
    diffusion_fn: Callable[[float, np.ndarray], np.ndarray]
    constant: bool = False

    def with_constant(self) -> "AggregatedCoefficients":
        return dataclasses.replace(self, constant=True)


def _hermite_nodes(order: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product probabilists' Gauss-Hermite nodes/weights for N(0, I_dim)."""
    z, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / np.sqrt(2.0 * np.pi)
    if dim == 1:
        return z[:, None], w
    grids = np.meshgrid(*([z] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return nodes, weights


def _noise_nodes(policy: PolicySpec, quadrature: QuadratureSpec) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes/weights in the policy's noise space."""
    if quadrature.method == "gauss_hermite":
        if policy.noise_kind != "normal":
            raise ConfigError("gauss_hermite quadrature needs a normal noise space")
        return _hermite_nodes(quadrature.order, policy.noise_dim)
    gen = rng.substream(quadrature.seed, rng.QUADRATURE)
    nodes = policy.draw_noise(gen, (quadrature.samples,))
    weights = np.full(quadrature.samples, 1.0 / quadrature.samples)
    return nodes, weights


def _check_finite(arr: np.ndarray, what: str, t: float, x: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"non-finite {what} at t={t}, x={np.asarray(x).ravel()[:4]}")
    return arr


def _default_quadrature(policy: PolicySpec) -> QuadratureSpec:
    if isinstance(policy.kind, CustomSampler):
        return policy.kind.quadrature
    return QuadratureSpec.gauss_hermite(20)


def aggregate_coefficients(policy, dynamics, quadrature: QuadratureSpec | None = None):
    """Build the aggregated drift and diffusion induced by a policy on given dynamics.

    The drift is the policy average of ``b``; the diffusion is the principal PSD
    square root of the policy average of ``sigma sigma^T``.  Finite-support
    policies always use the exact weighted sum.  A single-atom (Dirac) policy
    short-circuits to the raw coefficients at its atom, which keeps the
    aggregated path bitwise equal to the sampled one in coupling tests.
    """
    from .dynamics import DynamicsSpec  # local import to avoid a cycle

    if not isinstance(dynamics, DynamicsSpec):
        raise ConfigError("dynamics must be a DynamicsSpec")
    kind = policy.kind

    if isinstance(kind, FiniteSupport) and len(kind.atoms) == 1:
        atom = kind.atoms[0][0]

        def drift_fn(t, x, _a=atom):
            a = np.broadcast_to(_a, x.shape[:-1] + _a.shape)
            return _check_finite(np.asarray(dynamics.drift(t, x, a), dtype=float), "drift", t, x)

        def diffusion_fn(t, x, _a=atom):
            a = np.broadcast_to(_a, x.shape[:-1] + _a.shape)
            return _check_finite(np.asarray(dynamics.vol(t, x, a), dtype=float), "diffusion", t, x)

        return AggregatedCoefficients(drift_fn=drift_fn, diffusion_fn=diffusion_fn)

    if isinstance(kind, FiniteSupport):
        actions, probs = kind.actions, kind.probs

        def drift_fn(t, x):
            out = 0.0
            for a, p in zip(actions, probs):
                ab = np.broadcast_to(a, x.shape[:-1] + a.shape)
                out = out + p * np.asarray(dynamics.drift(t, x, ab), dtype=float)
            return _check_finite(out, "drift", t, x)

        def diffusion_fn(t, x):
            acc = 0.0
            for a, p in zip(actions, probs):
                ab = np.broadcast_to(a, x.shape[:-1] + a.shape)
                sig = np.asarray(dynamics.vol(t, x, ab), dtype=float)
                acc = acc + p * (sig @ np.swapaxes(sig, -1, -2))
            return psd_sqrt(_check_finite(acc, "squared diffusion", t, x))

        return AggregatedCoefficients(drift_fn=drift_fn, diffusion_fn=diffusion_fn)

    quad = quadrature or _default_quadrature(policy)

    if quad.method == "closed_form":
        if not isinstance(kind, GaussianAffine):
            raise ConfigError("closed_form aggregation requires a GaussianAffine policy")
        chol = kind.chol_cov
        cov = chol @ chol.T
        adim = policy.action_dim
        eye = np.eye(adim)

        # Exact for coefficients affine in the action: the drift averages to its
        # value at the mean, and sigma sigma^T picks up the covariance through
        # the action-direction differences D_k = sigma(mu + e_k) - sigma(mu).
        def drift_fn(t, x):
            mu = np.asarray(kind.mean_fn(t, x), dtype=float)
            mu = np.broadcast_to(mu, x.shape[:-1] + (adim,))
            return _check_finite(np.asarray(dynamics.drift(t, x, mu), dtype=float), "drift", t, x)

        def diffusion_fn(t, x):
            mu = np.asarray(kind.mean_fn(t, x), dtype=float)
            mu = np.broadcast_to(mu, x.shape[:-1] + (adim,))
            sig0 = np.asarray(dynamics.vol(t, x, mu), dtype=float)
            second = sig0 @ np.swapaxes(sig0, -1, -2)
            diffs = []
            for k in range(adim):
                sig_k = np.asarray(dynamics.vol(t, x, mu + eye[k]), dtype=float)
                diffs.append(sig_k - sig0)
            for k in range(adim):
                for l in range(adim):
                    if cov[k, l] != 0.0:
                        second = second + cov[k, l] * (diffs[k] @ np.swapaxes(diffs[l], -1, -2))
            return psd_sqrt(_check_finite(second, "squared diffusion", t, x))

        return AggregatedCoefficients(drift_fn=drift_fn, diffusion_fn=diffusion_fn)

    nodes, weights = _noise_nodes(policy, quad)

    def drift_fn(t, x):
        out = 0.0
        for z, w in zip(nodes, weights):
            zb = np.broadcast_to(z, x.shape[:-1] + z.shape)
            a = sample_action(policy, t, x, zb)
            out = out + w * np.asarray(dynamics.drift(t, x, a), dtype=float)
        return _check_finite(out, "drift", t, x)

    def diffusion_fn(t, x):
        acc = 0.0
        for z, w in zip(nodes, weights):
            zb = np.broadcast_to(z, x.shape[:-1] + z.shape)
            a = sample_action(policy, t, x, zb)
            sig = np.asarray(dynamics.vol(t, x, a), dtype=float)
            acc = acc + w * (sig @ np.swapaxes(sig, -1, -2))
        return psd_sqrt(_check_finite(acc, "squared diffusion", t, x))

    return AggregatedCoefficients(drift_fn=drift_fn, diffusion_fn=diffusion_fn)


def aggregate_reward(policy, dynamics, quadrature: QuadratureSpec | None = None):
    """Policy average of the running reward, or None when no reward is set.

    Closed-form quadrature is replaced by Gauss-Hermite here: rewards are
    routinely non-affine in the action (e.g. quadratic costs), and Hermite
    nodes integrate those exactly up to degree 2*order - 1.
    """
    if dynamics.reward is None:
        return None
    kind = policy.kind
    if isinstance(kind, FiniteSupport):
        actions, probs = kind.actions, kind.probs

        def reward_fn(t, x):
            out = 0.0
            for a, p in zip(actions, probs):
                ab = np.broadcast_to(a, x.shape[:-1] + a.shape)
                out = out + p * np.asarray(dynamics.reward(t, x, ab), dtype=float)
            return _check_finite(out, "reward", t, x)

        return reward_fn

    quad = quadrature or _default_quadrature(policy)
    if quad.method == "closed_form":
        quad = QuadratureSpec.gauss_hermite(20)
    nodes, weights = _noise_nodes(policy, quad)

    def reward_fn(t, x):
        out = 0.0
        for z, w in zip(nodes, weights):
            zb = np.broadcast_to(z, x.shape[:-1] + z.shape)
            a = sample_action(policy, t, x, zb)
            out = out + w * np.asarray(dynamics.reward(t, x, a), dtype=float)
        return _check_finite(out, "reward", t, x)

    return reward_fn
