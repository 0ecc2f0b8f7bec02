"""Benchmark presets: dynamics, policies, aggregated coefficients, toolkits.

Each preset bundles everything an experiment needs: the controlled SDE, the
policy and its aggregation, the default terminal test function, and (where a
study needs one) a value-function toolkit plus closed-form reference curves
for annotating results.

The two flagship presets are one-dimensional with a standard Gaussian policy:

* ``fig1_drift``:  dX = a dt + dW   (drift control, additive noise)
* ``fig2_vol``:    dX = a dW        (volatility control)

Both aggregate to pure Brownian motion, and both integrate exactly per
interval once the action is frozen, so their lattice factor defaults to 1:
refining the lattice cannot change the paths (block sums are sufficient
statistics), and the error curves measure policy execution alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable, Optional

import numpy as np

from .dynamics import DynamicsSpec
from .errors import ConfigError
from .estimators import TestFunctionSpec, ValueToolkit
from .policy import (
    AggregatedCoefficients,
    FiniteSupport,
    GaussianAffine,
    PolicySpec,
    QuadratureSpec,
    aggregate_coefficients,
)

__all__ = ["Preset", "get_preset", "preset_names", "get_policy_preset", "policy_preset_names"]


@dataclass(frozen=True)
class Preset:
    name: str
    dynamics: DynamicsSpec
    policy: PolicySpec
    agg: AggregatedCoefficients
    f: TestFunctionSpec
    lattice_factor: int = 16
    toolkit: Optional[ValueToolkit] = None
    references: dict = field(default_factory=dict)
    description: str = ""


def _zero_mean(t, x):
    return np.zeros(x.shape[:-1] + (1,))


def _gauss_std_policy(score_center: Optional[float] = None) -> PolicySpec:
    score_fn = None
    if score_center is not None:
        def score_fn(a, t, x, _c=score_center):
            return a[..., 0] - _c
    return PolicySpec(
        action_dim=1,
        kind=GaussianAffine(mean_fn=_zero_mean, chol_cov=np.eye(1)),
        score_fn=score_fn,
    )


def _drift_control_dynamics(terminal=None, reward=None) -> DynamicsSpec:
    return DynamicsSpec(
        state_dim=1,
        drift=lambda t, x, a: a,
        vol=lambda t, x, a: np.ones(x.shape[:-1] + (1, 1)),
        x0=np.zeros(1),
        reward=reward,
        terminal=terminal,
        per_interval_exact=True,
    )


def _vol_control_dynamics(terminal=None, reward=None) -> DynamicsSpec:
    return DynamicsSpec(
        state_dim=1,
        drift=lambda t, x, a: np.zeros(x.shape),
        vol=lambda t, x, a: a[..., None],
        x0=np.zeros(1),
        reward=reward,
        terminal=terminal,
        per_interval_exact=True,
    )


def _q975() -> float:
    return NormalDist().inv_cdf(0.975)


def _fig1_references() -> dict:
    return {
        # E (X_T^grid)^4 = 3 (T + T^2/n)^2 against E (X~_T)^4 = 3 T^2
        "weak_true": lambda n, T=1.0: 3.0 * (T + T * T / n) ** 2 - 3.0 * T * T,
        "strong_rmse": lambda n, T=1.0: T / math.sqrt(n),
        # E^W X_T^grid ~ N(0, T^2/n); two-sided 95% quantile of its modulus
        "conditional_quantile": lambda n, T=1.0: _q975() * T / math.sqrt(n),
        "fourth_moment": lambda n, T=1.0: 3.0 * (T + T * T / n) ** 2,
    }


def _fig2_references() -> dict:
    return {
        "weak_true": lambda n, T=1.0: 6.0 * T * T / n,
        "strong_rmse": lambda n, T=1.0: math.sqrt(2.0 * T),
    }


def _build_fig1_drift() -> Preset:
    dyn = _drift_control_dynamics()
    pol = _gauss_std_policy()
    agg = aggregate_coefficients(pol, dyn, QuadratureSpec.closed_form()).with_constant()
    return Preset(
        name="fig1_drift",
        dynamics=dyn,
        policy=pol,
        agg=agg,
        f=TestFunctionSpec.monomial(4),
        lattice_factor=1,
        references=_fig1_references(),
        description="drift control dX = a dt + dW, standard Gaussian policy",
    )


def _build_fig2_vol(name: str = "fig2_vol") -> Preset:
    dyn = _vol_control_dynamics()
    pol = _gauss_std_policy()
    agg = aggregate_coefficients(pol, dyn, QuadratureSpec.closed_form()).with_constant()
    return Preset(
        name=name,
        dynamics=dyn,
        policy=pol,
        agg=agg,
        f=TestFunctionSpec.monomial(4),
        lattice_factor=1,
        references=_fig2_references(),
        description="volatility control dX = a dW, standard Gaussian policy",
    )


def _build_dirac() -> Preset:
    dyn = _drift_control_dynamics()
    pol = PolicySpec(action_dim=1, kind=FiniteSupport(atoms=(((0.0,), 1.0),)))
    agg = aggregate_coefficients(pol, dyn).with_constant()
    return Preset(
        name="dirac",
        dynamics=dyn,
        policy=pol,
        agg=agg,
        f=TestFunctionSpec.monomial(4),
        lattice_factor=1,
        references={"weak_true": lambda n, T=1.0: 0.0,
                    "strong_rmse": lambda n, T=1.0: 0.0},
        description="degenerate point-mass policy on the drift-control dynamics",
    )


def _build_lq_pg(psi: float = 0.0, horizon: float = 1.0) -> Preset:
    dyn = _drift_control_dynamics(terminal=lambda x: x[..., 0])
    pol = _gauss_std_policy(score_center=psi)
    agg = aggregate_coefficients(pol, dyn, QuadratureSpec.closed_form()).with_constant()
    toolkit = ValueToolkit(
        V=lambda t, x: x[..., 0] + psi * (horizon - t),
        grad_t=lambda t, x: np.full(x.shape[:-1], -psi),
        grad_x=lambda t, x: np.ones(x.shape),
        hess_x=lambda t, x: np.zeros(x.shape[:-1] + (1, 1)),
        S=lambda t, x, a: a[..., 0] - psi,
    )
    return Preset(
        name="lq_pg",
        dynamics=dyn,
        policy=pol,
        agg=agg,
        f=TestFunctionSpec.monomial(1),
        lattice_factor=1,
        toolkit=toolkit,
        references={"true_gradient": lambda T=horizon: T},
        description="linear-quadratic policy-gradient probe, N(psi, 1) policy at psi=0",
    )


def _build_td_exact() -> Preset:
    dyn = _drift_control_dynamics(terminal=lambda x: x[..., 0])
    pol = _gauss_std_policy()
    agg = aggregate_coefficients(pol, dyn, QuadratureSpec.closed_form()).with_constant()
    toolkit = ValueToolkit(
        V=lambda t, x: x[..., 0],
        grad_t=lambda t, x: np.zeros(x.shape[:-1]),
        grad_x=lambda t, x: np.ones(x.shape),
        hess_x=lambda t, x: np.zeros(x.shape[:-1] + (1, 1)),
        S=lambda t, x: x[..., 0],
    )
    return Preset(
        name="td_exact",
        dynamics=dyn,
        policy=pol,
        agg=agg,
        f=TestFunctionSpec.monomial(1),
        lattice_factor=1,
        toolkit=toolkit,
        references={"residual_mean": lambda n, T=1.0: 0.0},
        description="TD residual with the exact value function V(t,x) = x, S(t,x) = x",
    )


def _build_td_quad() -> Preset:
    dyn = _drift_control_dynamics()
    pol = _gauss_std_policy()
    agg = aggregate_coefficients(pol, dyn, QuadratureSpec.closed_form()).with_constant()
    toolkit = ValueToolkit(
        V=lambda t, x: x[..., 0] ** 2,
        grad_t=lambda t, x: np.zeros(x.shape[:-1]),
        grad_x=lambda t, x: 2.0 * x,
        hess_x=lambda t, x: np.full(x.shape[:-1] + (1, 1), 2.0),
        S=lambda t, x: np.ones(x.shape[:-1]),
    )
    return Preset(
        name="td_quad",
        dynamics=dyn,
        policy=pol,
        agg=agg,
        f=TestFunctionSpec.monomial(2),
        lattice_factor=1,
        toolkit=toolkit,
        # E[sum 1 * d(X^2)] = T + T^2/n versus the limit T
        references={"limit": lambda T=1.0: T,
                    "bias": lambda n, T=1.0: T * T / n},
        description="quadratic-V martingale probe: V = x^2, S = 1",
    )


def _qv_toolkit() -> ValueToolkit:
    return ValueToolkit(
        V=lambda t, x: x[..., 0],
        grad_t=lambda t, x: np.zeros(x.shape[:-1]),
        grad_x=lambda t, x: np.ones(x.shape),
        hess_x=lambda t, x: np.zeros(x.shape[:-1] + (1, 1)),
        S=lambda t, x, a: np.ones(x.shape[:-1]),
    )


def _build_qv_fig1() -> Preset:
    base = _build_fig1_drift()
    return Preset(
        name="qv_fig1",
        dynamics=base.dynamics,
        policy=base.policy,
        agg=base.agg,
        f=base.f,
        lattice_factor=1,
        toolkit=_qv_toolkit(),
        references={"limit": lambda T=1.0: T, "bias": lambda n, T=1.0: T * T / n},
        description="quadratic-variation probe S = 1, V = x on the drift-control dynamics",
    )


def _build_qv_fig2() -> Preset:
    base = _build_fig2_vol()
    return Preset(
        name="qv_fig2",
        dynamics=base.dynamics,
        policy=base.policy,
        agg=base.agg,
        f=base.f,
        lattice_factor=1,
        toolkit=_qv_toolkit(),
        references={"limit": lambda T=1.0: T, "bias": lambda n, T=1.0: 0.0},
        description="quadratic-variation probe S = 1, V = x on the volatility-control dynamics",
    )


_BUILDERS: dict[str, Callable[[], Preset]] = {
    "fig1_drift": _build_fig1_drift,
    "fig2_vol": _build_fig2_vol,
    "counterexample": lambda: _build_fig2_vol("counterexample"),
    "lq_pg": _build_lq_pg,
    "td_exact": _build_td_exact,
    "td_quad": _build_td_quad,
    "qv_fig1": _build_qv_fig1,
    "qv_fig2": _build_qv_fig2,
    "dirac": _build_dirac,
}


def preset_names() -> list[str]:
    return sorted(_BUILDERS)


def get_preset(name: str) -> Preset:
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(preset_names())}")
    return builder()


def _mean_field_mu(t, x):
    return x  # affine state-feedback mean; action_dim == state_dim == 1


_POLICY_BUILDERS: dict[str, Callable[[], PolicySpec]] = {
    "gauss_std": lambda: _gauss_std_policy(),
    "gauss_mean_field": lambda: PolicySpec(
        action_dim=1,
        kind=GaussianAffine(mean_fn=_mean_field_mu, chol_cov=np.array([[0.5]])),
    ),
    "two_point": lambda: PolicySpec(
        action_dim=1,
        kind=FiniteSupport(atoms=(((-1.0,), 0.5), ((1.0,), 0.5))),
    ),
}


def policy_preset_names() -> list[str]:
    return sorted(_POLICY_BUILDERS)


def get_policy_preset(name: str) -> PolicySpec:
    try:
        return _POLICY_BUILDERS[name]()
    except KeyError:
        raise ConfigError(f"unknown policy preset {name!r}; known: {', '.join(policy_preset_names())}")
