"""Error metrics and RL estimators over the sampled/aggregated dynamics pair.

Monte Carlo estimates are computed per path, gathered in ascending path order
into one array, and reduced with numpy's pairwise summation, so results do not
depend on chunking or scheduling.  All randomness is addressed through the
substream scheme in :mod:`polex.rng`, making every estimate a pure function of
its ``(config, seed)`` arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import rng
from .dynamics import (
    DynamicsSpec,
    SamplingNoise,
    TimeGrid,
    make_lattice_batch,
    simulate_aggregated,
    simulate_pair,
    simulate_sampled,
)
from .errors import ConfigError
from .policy import AggregatedCoefficients, PolicySpec, aggregate_reward

__all__ = [
    "EstimateResult",
    "TestFunctionSpec",
    "ValueToolkit",
    "weak_error",
    "strong_error",
    "conditional_weak_error_quantile",
    "shared_noise_estimate",
    "naive_estimate",
    "value_sampled",
    "value_aggregated",
    "value_gap",
    "conditional_value",
    "td_residual",
    "policy_gradient_estimate",
    "quadratic_variation_estimate",
    "ESTIMATOR_CSV_HEADER",
    "estimator_csv_row",
]

#: Paths simulated per vectorized batch.  Affects memory use only; the final
#: reduction runs over the full per-path array, so results are chunk-invariant.
PATH_CHUNK = 8192

MAX_LATTICE_CELLS = 2 ** 20

ESTIMATOR_CSV_HEADER = "estimator,preset,n,m,mean,std_error,seed,wall_ms"


@dataclass(frozen=True)
class EstimateResult:
    """Monte Carlo estimate with its standard error and provenance."""

    mean: float
    std_error: float
    num_paths: int
    seed: int

    def __post_init__(self):
        if self.num_paths < 1:
            raise ConfigError("num_paths must be >= 1")
        if not (self.std_error >= 0.0):
            raise ConfigError("std_error must be nonnegative")


@dataclass(frozen=True)
class TestFunctionSpec:
    """Terminal test function f: R^d -> R.

    Monomials act on the first state coordinate (the benchmark presets are
    one-dimensional); arbitrary callables go through ``custom``.
    """

    __test__ = False  # keep pytest from collecting the Test- prefix

    kind: str
    power: int = 0
    f: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("monomial", "custom"):
            raise ConfigError(f"unknown test function kind {self.kind!r}")
        if self.kind == "monomial" and self.power < 0:
            raise ConfigError("monomial power must be >= 0")
        if self.kind == "custom" and self.f is None:
            raise ConfigError("custom test function needs a callable")

    @classmethod
    def monomial(cls, power: int) -> "TestFunctionSpec":
        return cls(kind="monomial", power=power, label=f"x^{power}")

    @classmethod
    def custom(cls, f: Callable, label: str) -> "TestFunctionSpec":
        return cls(kind="custom", f=f, label=label)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "monomial":
            return x[..., 0] ** self.power
        return np.asarray(self.f(x), dtype=float)


@dataclass(frozen=True)
class ValueToolkit:
    """A candidate value function with its derivatives and a test function.

    ``grad_t``, ``grad_x``, ``hess_x`` must be the analytic derivatives of
    ``V``; estimators never substitute finite differences for them.  ``S`` is
    the test function contracted against value increments: signature
    ``(t, x)`` for TD-style residuals, ``(t, x, a)`` for policy-gradient and
    quadratic-variation sums.
    """

    V: Callable[[float, np.ndarray], np.ndarray]
    grad_t: Callable[[float, np.ndarray], np.ndarray]
    grad_x: Callable[[float, np.ndarray], np.ndarray]
    hess_x: Callable[[float, np.ndarray], np.ndarray]
    S: Callable

    def validate(self, probes: np.ndarray, t: float = 0.5, step: float = 1e-5,
                 rtol: float = 1e-4) -> None:
        """Finite-difference consistency check of the derivative callables."""
        x = np.atleast_2d(np.asarray(probes, dtype=float))
        d = x.shape[1]
        v_t = (np.asarray(self.V(t + step, x)) - np.asarray(self.V(t - step, x))) / (2 * step)
        scale = np.maximum(np.abs(v_t), 1.0)
        if np.any(np.abs(v_t - np.asarray(self.grad_t(t, x))) > rtol * scale):
            raise ConfigError("grad_t inconsistent with V under finite differences")
        for k in range(d):
            e = np.zeros(d)
            e[k] = step
            fd = (np.asarray(self.V(t, x + e)) - np.asarray(self.V(t, x - e))) / (2 * step)
            gk = np.asarray(self.grad_x(t, x))[..., k]
            if np.any(np.abs(fd - gk) > rtol * np.maximum(np.abs(fd), 1.0)):
                raise ConfigError("grad_x inconsistent with V under finite differences")
            fd2 = (np.asarray(self.grad_x(t, x + e)) - np.asarray(self.grad_x(t, x - e))) / (2 * step)
            hk = np.asarray(self.hess_x(t, x))[..., k]
            if np.any(np.abs(fd2 - hk) > rtol * np.maximum(np.abs(fd2), 1.0)):
                raise ConfigError("hess_x inconsistent with grad_x under finite differences")

    def generator_apply(self, dyn: DynamicsSpec) -> Callable:
        """g(t, x, a) = dV/dt + b . grad V + 0.5 tr(sigma sigma^T Hess V) + r."""

        def g(t, x, a):
            b = np.asarray(dyn.drift(t, x, a), dtype=float)
            sig = np.asarray(dyn.vol(t, x, a), dtype=float)
            quad = np.einsum("...ij,...ji->...", sig @ np.swapaxes(sig, -1, -2),
                             np.asarray(self.hess_x(t, x), dtype=float))
            out = (np.asarray(self.grad_t(t, x), dtype=float)
                   + np.einsum("...i,...i->...", b, np.asarray(self.grad_x(t, x), dtype=float))
                   + 0.5 * quad)
            if dyn.reward is not None:
                out = out + np.asarray(dyn.reward(t, x, a), dtype=float)
            return out

        return g


def _mean_sem(values: np.ndarray, seed: int) -> EstimateResult:
    m = len(values)
    mean = float(np.mean(values))
    sem = float(np.std(values, ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return EstimateResult(mean=mean, std_error=sem, num_paths=m, seed=int(seed))


def _resolve_lattice_cells(n: int, lattice_cells: Optional[int], lattice_factor: int) -> int:
    if lattice_cells is not None:
        if lattice_cells % n != 0:
            raise ConfigError(f"lattice cells {lattice_cells} not a multiple of grid size {n}")
        return lattice_cells
    factor = max(1, min(lattice_factor, MAX_LATTICE_CELLS // n))
    return factor * n


def _chunks(m: int, chunk: int = PATH_CHUNK):
    for start in range(0, m, chunk):
        yield start, min(chunk, m - start)


def _check_f(f: TestFunctionSpec) -> TestFunctionSpec:
    if f.kind == "monomial" and f.power > 8:
        raise ConfigError("monomial power above 8 is not integrable at simulated moments")
    return f


def weak_error(dyn: DynamicsSpec, policy: PolicySpec, agg: AggregatedCoefficients,
               f: TestFunctionSpec, n: int, m: int, seed: int, *,
               horizon: float = 1.0, lattice_cells: Optional[int] = None,
               lattice_factor: int = 16) -> EstimateResult:
    """Paired-difference estimate of E f(X_T^grid) - E f(X_T^aggregated).

    Both paths in a pair share one Brownian lattice (sampling noise is fresh
    per path), which cancels most of the common diffusion noise and leaves the
    policy-execution signal measurable at moderate path counts.
    """
    if m < 2:
        raise ConfigError("need m >= 2 paths")
    _check_f(f)
    grid = TimeGrid.uniform(n, horizon)
    cells = _resolve_lattice_cells(n, lattice_cells, lattice_factor)
    vals = np.empty(m)
    for start, cnt in _chunks(m):
        lat = make_lattice_batch(seed, start, cnt, dyn.state_dim, cells, horizon)
        xi = SamplingNoise.for_paths(seed, start, cnt, n, policy)
        pair = simulate_pair(dyn, policy, agg, grid, lat, xi, record="terminal")
        vals[start:start + cnt] = f(pair.sampled_terminal) - f(pair.aggregated_terminal)
    return _mean_sem(vals, seed)


def strong_error(dyn: DynamicsSpec, policy: PolicySpec, agg: AggregatedCoefficients,
                 n: int, m: int, seed: int, *, norm: str = "terminal", p: int = 2,
                 horizon: float = 1.0, lattice_cells: Optional[int] = None,
                 lattice_factor: int = 16) -> EstimateResult:
    """Pathwise error E[ ||dX||^p ]^(1/p) with dX = X^grid - X^aggregated.

    ``norm='terminal'`` measures the terminal difference, ``norm='sup_lattice'``
    the running maximum over lattice points.  The standard error is mapped
    through the p-th root by the delta method.
    """
    if norm not in ("terminal", "sup_lattice"):
        raise ConfigError(f"unknown norm {norm!r}")
    if p < 2 or p % 2 != 0:
        raise ConfigError("p must be an even integer >= 2")
    grid = TimeGrid.uniform(n, horizon)
    cells = _resolve_lattice_cells(n, lattice_cells, lattice_factor)
    record = "terminal" if norm == "terminal" else "sup_lattice"
    vals = np.empty(m)
    for start, cnt in _chunks(m):
        lat = make_lattice_batch(seed, start, cnt, dyn.state_dim, cells, horizon)
        xi = SamplingNoise.for_paths(seed, start, cnt, n, policy)
        pair = simulate_pair(dyn, policy, agg, grid, lat, xi, record=record)
        diff = pair.terminal_diff if norm == "terminal" else pair.sup_diff
        vals[start:start + cnt] = diff ** p
    mean_p = float(np.mean(vals))
    sem_p = float(np.std(vals, ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    est = mean_p ** (1.0 / p)
    sem = sem_p * est / (p * mean_p) if mean_p > 0.0 else 0.0
    return EstimateResult(mean=est, std_error=sem, num_paths=m, seed=int(seed))


def conditional_weak_error_quantile(dyn: DynamicsSpec, policy: PolicySpec,
                                    agg: AggregatedCoefficients, f: TestFunctionSpec,
                                    n: int, m_inner: int, k_outer: int, rho: float,
                                    seed: int, *, horizon: float = 1.0,
                                    lattice_cells: Optional[int] = None,
                                    lattice_factor: int = 16,
                                    m_reference: Optional[int] = None) -> float:
    """Empirical (1 - rho)-quantile of |E^W f(X_T^grid) - E f(X_T^agg)| over
    frozen sampling-noise realizations.

    For each of ``k_outer`` frozen noise streams, the inner expectation over
    the system noise is estimated with ``m_inner`` Brownian paths (common
    across realizations, a pure variance-reduction choice).  The aggregated
    reference uses an independent, larger batch so its error is negligible
    against the conditional signal.
    """
    if not (0.0 < rho < 1.0):
        raise ConfigError("rho must be in (0, 1)")
    if k_outer * rho < 1.0:
        raise ConfigError(f"k_outer={k_outer} cannot resolve the {1 - rho:.3f} quantile")
    _check_f(f)
    grid = TimeGrid.uniform(n, horizon)
    cells = _resolve_lattice_cells(n, lattice_cells, lattice_factor)

    ref_paths = m_reference or max(4 * m_inner, 20_000)
    ref_seed = rng.derive_seed(seed, 10 ** 6)
    ref_acc = 0.0
    for start, cnt in _chunks(ref_paths):
        lat = make_lattice_batch(ref_seed, start, cnt, dyn.state_dim, cells, horizon)
        out = simulate_aggregated(agg, lat, dyn.x0, record="terminal")
        ref_acc += float(np.sum(f(out.terminal)))
    reference = ref_acc / ref_paths

    inner = []
    for start, cnt in _chunks(m_inner):
        inner.append(make_lattice_batch(seed, start, cnt, dyn.state_dim, cells, horizon))
    errs = np.empty(k_outer)
    for j in range(k_outer):
        xi = SamplingNoise.outer(seed, j, n, policy)
        acc = 0.0
        for lat in inner:
            traj = simulate_sampled(dyn, policy, grid, lat, xi, record="terminal")
            acc += float(np.sum(f(traj.terminal)))
        errs[j] = abs(acc / m_inner - reference)
    return float(np.quantile(errs, 1.0 - rho))


def shared_noise_estimate(dyn: DynamicsSpec, policy: PolicySpec, f: TestFunctionSpec,
                          n: int, m: int, seed: int, *, horizon: float = 1.0,
                          lattice_cells: Optional[int] = None,
                          lattice_factor: int = 16) -> EstimateResult:
    """Estimator of E f(X_T^aggregated) reusing one sampling-noise realization.

    All m Brownian paths share the grid-point-keyed noise stream, so evaluating
    the estimate instantiates m + n random streams instead of m * (1 + n).
    """
    if m < 2:
        raise ConfigError("need m >= 2 paths")
    _check_f(f)
    grid = TimeGrid.uniform(n, horizon)
    cells = _resolve_lattice_cells(n, lattice_cells, lattice_factor)
    xi = SamplingNoise.shared(seed, n, policy)
    vals = np.empty(m)
    for start, cnt in _chunks(m):
        lat = make_lattice_batch(seed, start, cnt, dyn.state_dim, cells, horizon)
        traj = simulate_sampled(dyn, policy, grid, lat, xi, record="terminal")
        vals[start:start + cnt] = f(traj.terminal)
    return _mean_sem(vals, seed)


def naive_estimate(dyn: DynamicsSpec, policy: PolicySpec, f: TestFunctionSpec,
                   n: int, m: int, seed: int, *, horizon: float = 1.0,
                   lattice_cells: Optional[int] = None,
                   lattice_factor: int = 16) -> EstimateResult:
    """Plain Monte Carlo over independent (Brownian, sampling-noise) pairs."""
    if m < 2:
        raise ConfigError("need m >= 2 paths")
    _check_f(f)
    grid = TimeGrid.uniform(n, horizon)
    cells = _resolve_lattice_cells(n, lattice_cells, lattice_factor)
    vals = np.empty(m)
    for start, cnt in _chunks(m):
        lat = make_lattice_batch(seed, start, cnt, dyn.state_dim, cells, horizon)
        xi = SamplingNoise.for_paths(seed, start, cnt, n, policy)
        traj = simulate_sampled(dyn, policy, grid, lat, xi, record="terminal")
        vals[start:start + cnt] = f(traj.terminal)
    return _mean_sem(vals, seed)


def _totals_sampled(dyn, policy, grid, cells, horizon, m, seed, xi_shared=None):
    vals = np.empty(m)
    for start, cnt in _chunks(m):
        lat = make_lattice_batch(seed, start, cnt, dyn.state_dim, cells, horizon)
        xi = xi_shared or SamplingNoise.for_paths(seed, start, cnt, grid.n_intervals, policy)
        traj = simulate_sampled(dyn, policy, grid, lat, xi, record="terminal")
        tot = np.zeros(cnt)
        if traj.reward_increments is not None:
            tot += traj.reward_increments.sum(axis=1)
        if dyn.terminal is not None:
            tot += np.asarray(dyn.terminal(traj.terminal), dtype=float)
        vals[start:start + cnt] = tot
    return vals


def value_sampled(dyn: DynamicsSpec, policy: PolicySpec, n: int, m: int, seed: int, *,
                  horizon: float = 1.0, lattice_cells: Optional[int] = None,
                  lattice_factor: int = 16) -> EstimateResult:
    """Monte Carlo value of executing the policy on the sampling grid:
    mean of sum_i R_i + h(X_T^grid)."""
    grid = TimeGrid.uniform(n, horizon)
    cells = _resolve_lattice_cells(n, lattice_cells, lattice_factor)
    return _mean_sem(_totals_sampled(dyn, policy, grid, cells, horizon, m, seed), seed)


def value_aggregated(agg: AggregatedCoefficients, policy: PolicySpec, dyn: DynamicsSpec,
                     n_lattice: int, m: int, seed: int, *,
                     horizon: float = 1.0) -> EstimateResult:
    """Value under continuous execution: mean of int r~(s, X~_s) ds + h(X~_T),
    with the policy-averaged running reward integrated by left-endpoint
    quadrature on the lattice."""
    grid = TimeGrid.uniform(n_lattice, horizon)
    reward_fn = aggregate_reward(policy, dyn)
    vals = np.empty(m)
    for start, cnt in _chunks(m):
        lat = make_lattice_batch(seed, start, cnt, dyn.state_dim, n_lattice, horizon)
        out = simulate_aggregated(agg, lat, dyn.x0, record="terminal",
                                  reward_fn=reward_fn, grid=grid)
        tot = np.zeros(cnt)
        if out.reward_increments is not None:
            tot += out.reward_increments.sum(axis=1)
        if dyn.terminal is not None:
            tot += np.asarray(dyn.terminal(out.terminal), dtype=float)
        vals[start:start + cnt] = tot
    return _mean_sem(vals, seed)


def value_gap(dyn: DynamicsSpec, policy: PolicySpec, agg: AggregatedCoefficients,
              n: int, m: int, seed: int, *, horizon: float = 1.0,
              lattice_cells: Optional[int] = None,
              lattice_factor: int = 16) -> EstimateResult:
    """Paired estimate of J^grid - J~ on a common lattice (study plumbing)."""
    grid = TimeGrid.uniform(n, horizon)
    cells = _resolve_lattice_cells(n, lattice_cells, lattice_factor)
    reward_fn = aggregate_reward(policy, dyn)
    vals = np.empty(m)
    for start, cnt in _chunks(m):
        lat = make_lattice_batch(seed, start, cnt, dyn.state_dim, cells, horizon)
        xi = SamplingNoise.for_paths(seed, start, cnt, n, policy)
        pair = simulate_pair(dyn, policy, agg, grid, lat, xi, record="terminal",
                             aggregated_reward_fn=reward_fn)
        tot = np.zeros(cnt)
        if pair.reward_increments is not None:
            tot += pair.reward_increments.sum(axis=1)
        if pair.aggregated_reward_increments is not None:
            tot -= pair.aggregated_reward_increments.sum(axis=1)
        if dyn.terminal is not None:
            tot += np.asarray(dyn.terminal(pair.sampled_terminal), dtype=float)
            tot -= np.asarray(dyn.terminal(pair.aggregated_terminal), dtype=float)
        vals[start:start + cnt] = tot
    return _mean_sem(vals, seed)


def conditional_value(dyn: DynamicsSpec, policy: PolicySpec, n: int, m_inner: int,
                      xi_seed: int, seed: int, *, horizon: float = 1.0,
                      lattice_cells: Optional[int] = None,
                      lattice_factor: int = 16) -> EstimateResult:
    """Value conditional on a frozen sampling-noise realization, averaged over
    the system noise only."""
    grid = TimeGrid.uniform(n, horizon)
    cells = _resolve_lattice_cells(n, lattice_cells, lattice_factor)
    xi = SamplingNoise.shared(xi_seed, n, policy)
    return _mean_sem(
        _totals_sampled(dyn, policy, grid, cells, horizon, m_inner, seed, xi_shared=xi), seed
    )


def _value_increment_sum(dyn, policy, toolkit, n, m, seed, horizon, lattice_cells,
                         lattice_factor, s_takes_action, square):
    grid = TimeGrid.uniform(n, horizon)
    cells = _resolve_lattice_cells(n, lattice_cells, lattice_factor)
    vals = np.empty(m)
    for start, cnt in _chunks(m):
        lat = make_lattice_batch(seed, start, cnt, dyn.state_dim, cells, horizon)
        xi = SamplingNoise.for_paths(seed, start, cnt, n, policy)
        traj = simulate_sampled(dyn, policy, grid, lat, xi, record="grid")
        states = traj.states  # (cnt, n+1, d)
        acc = np.zeros(cnt)
        v_next = np.asarray(toolkit.V(grid.times[0], states[:, 0]), dtype=float)
        for i in range(n):
            v_here = v_next
            v_next = np.asarray(toolkit.V(grid.times[i + 1], states[:, i + 1]), dtype=float)
            incr = v_next - v_here
            if traj.reward_increments is not None:
                incr = incr + traj.reward_increments[:, i]
            if square:
                incr = incr ** 2
            if s_takes_action:
                s_val = np.asarray(toolkit.S(grid.times[i], states[:, i], traj.actions[:, i]),
                                   dtype=float)
            else:
                s_val = np.asarray(toolkit.S(grid.times[i], states[:, i]), dtype=float)
            acc += s_val * incr
        vals[start:start + cnt] = acc
    return _mean_sem(vals, seed)


def td_residual(dyn: DynamicsSpec, policy: PolicySpec, toolkit: ValueToolkit,
                n: int, m: int, seed: int, *, horizon: float = 1.0,
                lattice_cells: Optional[int] = None,
                lattice_factor: int = 16) -> EstimateResult:
    """Discrete martingale-orthogonality sum sum_i S(t_i, X_i) (dV + R_i).

    When V is the exact value function of the policy, the mean vanishes at
    first order in the grid mesh.
    """
    return _value_increment_sum(dyn, policy, toolkit, n, m, seed, horizon,
                                lattice_cells, lattice_factor,
                                s_takes_action=False, square=False)


def policy_gradient_estimate(dyn: DynamicsSpec, policy: PolicySpec, toolkit: ValueToolkit,
                             n: int, m: int, seed: int, *, horizon: float = 1.0,
                             lattice_cells: Optional[int] = None,
                             lattice_factor: int = 16) -> EstimateResult:
    """Forward-Euler policy-gradient sum: S contracts the realized action,
    sum_i S(t_i, X_i, a_i) (dV + R_i)."""
    return _value_increment_sum(dyn, policy, toolkit, n, m, seed, horizon,
                                lattice_cells, lattice_factor,
                                s_takes_action=True, square=False)


def quadratic_variation_estimate(dyn: DynamicsSpec, policy: PolicySpec, toolkit: ValueToolkit,
                                 n: int, m: int, seed: int, *, horizon: float = 1.0,
                                 lattice_cells: Optional[int] = None,
                                 lattice_factor: int = 16) -> EstimateResult:
    """Squared-increment sum sum_i S(t_i, X_i, a_i) (dV + R_i)^2, the
    risk-sensitive quadratic-variation correction term."""
    return _value_increment_sum(dyn, policy, toolkit, n, m, seed, horizon,
                                lattice_cells, lattice_factor,
                                s_takes_action=True, square=True)


def estimator_csv_row(estimator: str, preset: str, n: int, m: int,
                      result: EstimateResult, wall_ms: float) -> str:
    return (f"{estimator},{preset},{n},{m},{result.mean:.17g},"
            f"{result.std_error:.17g},{result.seed},{wall_ms:.3f}")
