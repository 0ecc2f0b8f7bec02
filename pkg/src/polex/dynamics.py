"""Brownian lattices and simulation of sampled vs. policy-aggregated dynamics.

The sampled dynamics draw one action per grid point and hold it constant over
the interval while the state diffuses continuously; the aggregated dynamics
evolve under the policy-averaged coefficients.  Both are integrated on a shared
Brownian lattice (a fine regular partition whose increments can be coarsened by
exact block sums), which is what makes common-random-number sweeps and pathwise
error measurements possible.

Everything is vectorized over a leading path axis: lattices hold increments of
shape ``(num_paths, cells, dim)`` and states are ``(num_paths, dim)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import rng
from .errors import ConfigError, NumericsError
from .policy import AggregatedCoefficients, PolicySpec, sample_action

__all__ = [
    "TimeGrid",
    "BrownianLattice",
    "DynamicsSpec",
    "SamplingNoise",
    "SampledTrajectory",
    "AggregatedTrajectory",
    "PairedTrajectory",
    "make_lattice",
    "make_lattice_batch",
    "simulate_sampled",
    "simulate_aggregated",
    "simulate_pair",
]


@dataclass(frozen=True)
class TimeGrid:
    """Action-sampling grid 0 = t_0 < ... < t_n = T."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ConfigError("grid needs at least two time points")
        if t[0] != 0.0:
            raise ConfigError("grid must start at t=0")
        if np.any(np.diff(t) <= 0.0):
            raise ConfigError("grid times must be strictly increasing")
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, n: int, horizon: float) -> "TimeGrid":
        if n < 1:
            raise ConfigError("need at least one interval")
        if horizon <= 0.0:
            raise ConfigError("horizon must be positive")
        return cls(times=np.linspace(0.0, horizon, n + 1))

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_intervals(self) -> int:
        return len(self.times) - 1

    def mesh(self) -> float:
        return float(np.max(np.diff(self.times)))

    def cell_boundaries(self, num_cells: int) -> np.ndarray:
        """Map grid times onto lattice cell indices; every t_i must sit on a cell edge."""
        step = self.horizon / num_cells
        bounds = np.rint(self.times / step).astype(int)
        if np.any(np.abs(bounds * step - self.times) > 1e-9 * max(self.horizon, 1.0)):
            raise ConfigError(
                f"lattice with {num_cells} cells does not align with grid times"
            )
        if np.any(np.diff(bounds) < 1):
            raise ConfigError("each grid interval must contain at least one lattice cell")
        return bounds


def _block_sum(increments: np.ndarray, k: int) -> np.ndarray:
    """Sum consecutive blocks of k cells.  Power-of-two k uses repeated pairwise
    halving so that coarsening composes bit-exactly: coarsen(2a) == coarsen(2)
    applied a times, which the common-random-number sweeps rely on."""
    out = increments
    if k & (k - 1) == 0:
        while k > 1:
            out = out[:, 0::2] + out[:, 1::2]
            k //= 2
        return out
    starts = np.arange(0, increments.shape[1], k)
    return np.add.reduceat(increments, starts, axis=1)


@dataclass(frozen=True)
class BrownianLattice:
    """Brownian increments on a regular lattice, one row of cells per path.

    ``increments[p, j]`` is W(t_{j+1}) - W(t_j) for path ``p`` on the lattice of
    ``num_cells`` cells over [0, horizon]; each cell has variance
    ``horizon / num_cells`` per coordinate.
    """

    dim: int
    horizon: float
    increments: np.ndarray  # (num_paths, num_cells, dim)
    master_seed: int = 0
    first_path_index: int = 0

    @property
    def num_paths(self) -> int:
        return self.increments.shape[0]

    @property
    def num_cells(self) -> int:
        return self.increments.shape[1]

    @property
    def lattice_step(self) -> float:
        return self.horizon / self.num_cells

    def coarsen(self, k: int) -> "BrownianLattice":
        """Merge blocks of k cells into one by exact block sums."""
        if k < 1 or self.num_cells % k != 0:
            raise ConfigError(f"cannot coarsen {self.num_cells} cells by factor {k}")
        if k == 1:
            return self
        return BrownianLattice(
            dim=self.dim,
            horizon=self.horizon,
            increments=_block_sum(self.increments, k),
            master_seed=self.master_seed,
            first_path_index=self.first_path_index,
        )

    def interval_sums(self, grid: TimeGrid) -> np.ndarray:
        """Brownian increments over each grid interval, shape (num_paths, n, dim)."""
        bounds = grid.cell_boundaries(self.num_cells)
        widths = np.diff(bounds)
        if widths.min() == widths.max() and (widths[0] & (widths[0] - 1)) == 0:
            return self.coarsen(int(widths[0])).increments
        return np.add.reduceat(self.increments, bounds[:-1], axis=1)


def make_lattice(master_seed: int, path_index: int, dim: int, num_cells: int,
                 horizon: float) -> BrownianLattice:
    """Brownian lattice for one path, a pure function of (master_seed, path_index)."""
    if num_cells < 1:
        raise ConfigError("num_cells must be >= 1")
    if dim < 1 or horizon <= 0.0:
        raise ConfigError("dim must be >= 1 and horizon positive")
    gen = rng.substream(master_seed, rng.BROWNIAN, sub=path_index)
    step = horizon / num_cells
    inc = gen.standard_normal((1, num_cells, dim)) * np.sqrt(step)
    return BrownianLattice(dim=dim, horizon=horizon, increments=inc,
                           master_seed=master_seed, first_path_index=path_index)


def make_lattice_batch(master_seed: int, first_path_index: int, num_paths: int, dim: int,
                       num_cells: int, horizon: float) -> BrownianLattice:
    """Stack per-path lattices for paths [first, first + num_paths).

    Row p is bit-identical to ``make_lattice(master_seed, first + p, ...)``;
    the batch exists purely so simulations can vectorize across paths.
    """
    if num_cells < 1:
        raise ConfigError("num_cells must be >= 1")
    factory = rng.SubstreamFactory(master_seed, rng.BROWNIAN)
    step = horizon / num_cells
    root = np.sqrt(step)
    inc = np.empty((num_paths, num_cells, dim))
    for p in range(num_paths):
        inc[p] = factory.generator(sub=first_path_index + p).standard_normal((num_cells, dim))
    inc *= root
    return BrownianLattice(dim=dim, horizon=horizon, increments=inc,
                           master_seed=master_seed, first_path_index=first_path_index)


@dataclass(frozen=True)
class DynamicsSpec:
    """Controlled SDE dX = b(t, X, a) dt + sigma(t, X, a) dW with rewards.

    ``drift`` maps (t, x, a) -> (m, d), ``vol`` maps (t, x, a) -> (m, d, d);
    ``reward`` (optional) maps (t, x, a) -> (m,), ``terminal`` maps x -> (m,).
    ``per_interval_exact`` asserts that with the action frozen the coefficients
    do not vary over a grid interval, so integrating with block increments is
    exact; it is what makes the benchmark error curves free of integration bias.
    """

    state_dim: int
    drift: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    vol: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    x0: np.ndarray
    reward: Optional[Callable[[float, np.ndarray, np.ndarray], np.ndarray]] = None
    terminal: Optional[Callable[[np.ndarray], np.ndarray]] = None
    per_interval_exact: bool = False

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if x0.shape != (self.state_dim,):
            raise ConfigError(f"x0 must have shape ({self.state_dim},), got {x0.shape}")
        if not np.all(np.isfinite(x0)):
            raise ConfigError("x0 must be finite")
        object.__setattr__(self, "x0", x0)


class SamplingNoise:
    """Per-grid-point policy noise draws, indexed by grid-point index.

    ``draws`` has shape (num_paths, n_points, noise_dim); a single row is
    broadcast to every path, which is the shared-noise construction.
    """

    def __init__(self, draws: np.ndarray):
        if draws.ndim != 3:
            raise ConfigError("sampling noise must have shape (paths, grid points, noise dim)")
        self.draws = draws

    @property
    def n_points(self) -> int:
        return self.draws.shape[1]

    @classmethod
    def for_paths(cls, master_seed: int, first_path_index: int, num_paths: int, n_points: int,
                  policy: PolicySpec) -> "SamplingNoise":
        """Independent noise per path: stream of path p keyed by
        (master_seed, path index, grid size); row i belongs to grid point i."""
        factory = rng.SubstreamFactory(master_seed, rng.SAMPLING)
        out = np.empty((num_paths, n_points, policy.noise_dim))
        for p in range(num_paths):
            gen = factory.generator(sub=first_path_index + p, block=n_points)
            out[p] = policy.draw_noise(gen, (n_points,))
        return cls(out)

    @classmethod
    def shared(cls, master_seed: int, n_points: int, policy: PolicySpec) -> "SamplingNoise":
        """One noise realization reused by every path (no path index in the key)."""
        gen = rng.substream(master_seed, rng.SAMPLING_SHARED, block=n_points)
        return cls(policy.draw_noise(gen, (n_points,))[None, :, :])

    @classmethod
    def outer(cls, master_seed: int, outer_index: int, n_points: int,
              policy: PolicySpec) -> "SamplingNoise":
        """Frozen realization #outer_index for conditional-error studies."""
        gen = rng.substream(master_seed, rng.CONDITIONAL, sub=outer_index, block=n_points)
        return cls(policy.draw_noise(gen, (n_points,))[None, :, :])

    @classmethod
    def from_array(cls, draws: np.ndarray) -> "SamplingNoise":
        return cls(np.asarray(draws, dtype=float))

    def at(self, i: int, num_paths: int) -> np.ndarray:
        row = self.draws[:, i, :]
        if row.shape[0] == num_paths:
            return row
        if row.shape[0] == 1:
            return np.broadcast_to(row, (num_paths, row.shape[1]))
        raise ConfigError(
            f"sampling noise has {row.shape[0]} paths, simulation has {num_paths}"
        )


@dataclass
class SampledTrajectory:
    """Sampled dynamics output: recorded states, per-interval actions and rewards."""

    grid: TimeGrid
    record: str                      # "terminal" | "grid" | "lattice"
    times: np.ndarray                # times of the recorded states
    states: Optional[np.ndarray]     # (m, len(times), d); None when record="terminal"
    terminal: np.ndarray             # (m, d)
    actions: np.ndarray              # (m, n, action_dim)
    reward_increments: Optional[np.ndarray]  # (m, n)


@dataclass
class AggregatedTrajectory:
    """Aggregated dynamics output on the lattice."""

    record: str
    times: np.ndarray
    states: Optional[np.ndarray]
    terminal: np.ndarray
    reward_increments: Optional[np.ndarray]


@dataclass
class PairedTrajectory:
    """Sampled and aggregated paths driven by the same Brownian lattice."""

    grid: TimeGrid
    record: str
    times: np.ndarray
    sampled_states: Optional[np.ndarray]
    aggregated_states: Optional[np.ndarray]
    sampled_terminal: np.ndarray
    aggregated_terminal: np.ndarray
    actions: np.ndarray
    reward_increments: Optional[np.ndarray]
    sup_diff: np.ndarray     # (m,) running max of |X - X~| over recorded points
    terminal_diff: np.ndarray  # (m,)
    aggregated_reward_increments: Optional[np.ndarray] = None

    def to_csv(self, path, path_index: int = 0) -> None:
        """Debug dump of one trajectory: time, both states, action index per row."""
        if self.sampled_states is None or self.aggregated_states is None:
            raise ConfigError("trajectory dump needs record='grid' or 'lattice'")
        xs = self.sampled_states[path_index]
        ys = self.aggregated_states[path_index]
        d = xs.shape[-1]
        interval_of = np.searchsorted(self.grid.times, self.times, side="right") - 1
        interval_of = np.clip(interval_of, 0, self.grid.n_intervals - 1)
        header = (
            "time,"
            + ",".join(f"sampled_state_{j}" for j in range(d)) + ","
            + ",".join(f"aggregated_state_{j}" for j in range(d))
            + ",action_index"
        )
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for row, t in enumerate(self.times):
                vals = [f"{t:.17g}"]
                vals += [f"{v:.17g}" for v in xs[row]]
                vals += [f"{v:.17g}" for v in ys[row]]
                vals.append(str(int(interval_of[row])))
                fh.write(",".join(vals) + "\n")


def _check_state(x: np.ndarray, t: float, a: Optional[np.ndarray]) -> None:
    if np.all(np.isfinite(x)):
        return
    bad = np.argwhere(~np.isfinite(x))[0][0]
    ctx = f"t={t}, x={x[bad]}"
    if a is not None:
        ctx += f", a={a[bad]}"
    raise NumericsError(f"simulation blew up: non-finite state ({ctx})")


def _matvec(mat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    # (m, d, d) @ (m, d) -> (m, d); scalar state short-circuit avoids einsum cost
    if mat.shape[-1] == 1:
        return mat[..., 0] * vec
    return np.einsum("...ij,...j->...i", mat, vec)


def simulate_sampled(dyn: DynamicsSpec, policy: PolicySpec, grid: TimeGrid,
                     lattice: BrownianLattice, sampling_noise: SamplingNoise,
                     record: str = "lattice") -> SampledTrajectory:
    """Run the sampled dynamics: draw an action at each grid point, freeze it
    over the interval, integrate on the lattice, accumulate left-endpoint
    reward quadrature."""
    pair = _simulate(dyn, policy, None, grid, lattice, sampling_noise, record)
    return SampledTrajectory(
        grid=grid,
        record=record,
        times=pair.times,
        states=pair.sampled_states,
        terminal=pair.sampled_terminal,
        actions=pair.actions,
        reward_increments=pair.reward_increments,
    )


def simulate_aggregated(agg: AggregatedCoefficients, lattice: BrownianLattice,
                        x0: np.ndarray, record: str = "lattice",
                        reward_fn=None, grid: Optional[TimeGrid] = None) -> AggregatedTrajectory:
    """Euler-Maruyama for the aggregated dynamics on the full lattice.

    With constant coefficients the scheme is exact at every lattice point.  If
    ``reward_fn`` (the policy-averaged running reward) and ``grid`` are given,
    per-interval reward integrals are accumulated by left-endpoint quadrature.
    """
    if record not in ("terminal", "lattice"):
        raise ConfigError("aggregated-only runs record 'terminal' or 'lattice'; "
                          "grid recording goes through simulate_pair")
    m, L, d = lattice.increments.shape
    h = lattice.lattice_step
    y = np.broadcast_to(np.atleast_1d(np.asarray(x0, dtype=float)), (m, d)).copy()
    times = np.linspace(0.0, lattice.horizon, L + 1)
    store = record == "lattice"
    states = np.empty((m, L + 1, d)) if store else None
    if store:
        states[:, 0] = y
    rewards = None
    if reward_fn is not None:
        if grid is None:
            raise ConfigError("reward accumulation needs the time grid")
        bounds = grid.cell_boundaries(L)
        rewards = np.zeros((m, grid.n_intervals))
        interval_of = np.searchsorted(bounds, np.arange(L), side="right") - 1
    inc = lattice.increments
    for j in range(L):
        s = times[j]
        if reward_fn is not None:
            rewards[:, interval_of[j]] += np.asarray(reward_fn(s, y), dtype=float) * h
        y = y + np.asarray(agg.drift_fn(s, y), dtype=float) * h \
              + _matvec(np.asarray(agg.diffusion_fn(s, y), dtype=float), inc[:, j])
        if store:
            states[:, j + 1] = y
    _check_state(y, lattice.horizon, None)
    return AggregatedTrajectory(
        record=record,
        times=times if store else times[-1:],
        states=states,
        terminal=y,
        reward_increments=rewards,
    )


def simulate_pair(dyn: DynamicsSpec, policy: PolicySpec, agg: AggregatedCoefficients,
                  grid: TimeGrid, lattice: BrownianLattice, sampling_noise: SamplingNoise,
                  record: str = "lattice", aggregated_reward_fn=None) -> PairedTrajectory:
    """Couple the sampled and aggregated dynamics on identical lattice increments."""
    return _simulate(dyn, policy, agg, grid, lattice, sampling_noise, record,
                     aggregated_reward_fn=aggregated_reward_fn)


def _simulate(dyn, policy, agg, grid, lattice, xi, record,
              aggregated_reward_fn=None) -> PairedTrajectory:
    # "sup_lattice" traverses every cell (so sup_diff is lattice-resolved)
    # without storing states.
    if record not in ("terminal", "grid", "lattice", "sup_lattice"):
        raise ConfigError(f"unknown record mode {record!r}")
    m, L, d = lattice.increments.shape
    if d != dyn.state_dim:
        raise ConfigError(f"lattice dim {d} != state dim {dyn.state_dim}")
    n = grid.n_intervals
    if xi.n_points < n:
        raise ConfigError(f"sampling noise covers {xi.n_points} grid points, need {n}")
    if abs(grid.horizon - lattice.horizon) > 1e-12 * max(1.0, grid.horizon):
        raise ConfigError("grid and lattice horizons differ")

    want_rewards = dyn.reward is not None
    pair = agg is not None
    fast = (
        record in ("terminal", "grid")
        and dyn.per_interval_exact
        and not want_rewards
        and aggregated_reward_fn is None
        and (not pair or agg.constant)
    )
    if fast:
        return _simulate_fast(dyn, policy, agg, grid, lattice, xi, record)
    return _simulate_cells(dyn, policy, agg, grid, lattice, xi, record, aggregated_reward_fn)


def _simulate_fast(dyn, policy, agg, grid, lattice, xi, record):
    """One exact step per grid interval using Brownian block sums."""
    m, _, d = lattice.increments.shape
    n = grid.n_intervals
    dw = lattice.interval_sums(grid)
    x = np.broadcast_to(dyn.x0, (m, d)).copy()
    y = x.copy() if agg is not None else None
    store = record == "grid"
    times = grid.times if store else grid.times[-1:]
    xs = np.empty((m, n + 1, d)) if store else None
    ys = np.empty((m, n + 1, d)) if (store and agg is not None) else None
    if store:
        xs[:, 0] = x
        if ys is not None:
            ys[:, 0] = y
    actions = np.empty((m, n, policy.action_dim))
    sup = np.zeros(m)
    for i in range(n):
        t0 = grid.times[i]
        dt = grid.times[i + 1] - t0
        a = sample_action(policy, t0, x, xi.at(i, m))
        actions[:, i] = a
        x = x + np.asarray(dyn.drift(t0, x, a), dtype=float) * dt \
              + _matvec(np.asarray(dyn.vol(t0, x, a), dtype=float), dw[:, i])
        if agg is not None:
            y = y + np.asarray(agg.drift_fn(t0, y), dtype=float) * dt \
                  + _matvec(np.asarray(agg.diffusion_fn(t0, y), dtype=float), dw[:, i])
            np.maximum(sup, np.linalg.norm(x - y, axis=-1), out=sup)
        if store:
            xs[:, i + 1] = x
            if ys is not None:
                ys[:, i + 1] = y
        _check_state(x, grid.times[i + 1], a)
    if agg is not None:
        _check_state(y, grid.horizon, None)
    term_diff = np.linalg.norm(x - y, axis=-1) if agg is not None else np.zeros(m)
    return PairedTrajectory(
        grid=grid, record=record, times=times,
        sampled_states=xs, aggregated_states=ys,
        sampled_terminal=x,
        aggregated_terminal=y if agg is not None else x,
        actions=actions,
        reward_increments=None,
        sup_diff=sup, terminal_diff=term_diff,
    )


def _simulate_cells(dyn, policy, agg, grid, lattice, xi, record, aggregated_reward_fn):
    """Cell-resolved integration: Euler-Maruyama substeps (or frozen exact
    coefficients when the dynamics declare per-interval exactness), with
    left-endpoint reward quadrature on the lattice."""
    m, L, d = lattice.increments.shape
    n = grid.n_intervals
    bounds = grid.cell_boundaries(L)
    h = lattice.lattice_step
    cell_times = np.linspace(0.0, grid.horizon, L + 1)
    inc = lattice.increments

    x = np.broadcast_to(dyn.x0, (m, d)).copy()
    y = x.copy() if agg is not None else None
    store_lattice = record == "lattice"
    store_grid = record == "grid"
    k_rec = L + 1 if store_lattice else (n + 1 if store_grid else 1)
    times = cell_times if store_lattice else (grid.times if store_grid else grid.times[-1:])
    xs = np.empty((m, k_rec, d)) if (store_lattice or store_grid) else None
    ys = np.empty((m, k_rec, d)) if ((store_lattice or store_grid) and agg is not None) else None
    if xs is not None:
        xs[:, 0] = x
    if ys is not None:
        ys[:, 0] = y

    actions = np.empty((m, n, policy.action_dim))
    want_rewards = dyn.reward is not None
    rewards = np.zeros((m, n)) if want_rewards else None
    agg_rewards = np.zeros((m, n)) if aggregated_reward_fn is not None else None
    sup = np.zeros(m)
    frozen = dyn.per_interval_exact

    for i in range(n):
        t0 = grid.times[i]
        a = sample_action(policy, t0, x, xi.at(i, m))
        actions[:, i] = a
        if frozen:
            b_x = np.asarray(dyn.drift(t0, x, a), dtype=float)
            s_x = np.asarray(dyn.vol(t0, x, a), dtype=float)
        for j in range(bounds[i], bounds[i + 1]):
            s = cell_times[j]
            if want_rewards:
                rewards[:, i] += np.asarray(dyn.reward(s, x, a), dtype=float) * h
            if agg_rewards is not None:
                agg_rewards[:, i] += np.asarray(aggregated_reward_fn(s, y), dtype=float) * h
            if not frozen:
                b_x = np.asarray(dyn.drift(s, x, a), dtype=float)
                s_x = np.asarray(dyn.vol(s, x, a), dtype=float)
            x = x + b_x * h + _matvec(s_x, inc[:, j])
            if agg is not None:
                y = y + np.asarray(agg.drift_fn(s, y), dtype=float) * h \
                      + _matvec(np.asarray(agg.diffusion_fn(s, y), dtype=float), inc[:, j])
                np.maximum(sup, np.linalg.norm(x - y, axis=-1), out=sup)
            if store_lattice:
                xs[:, j + 1] = x
                if ys is not None:
                    ys[:, j + 1] = y
        if store_grid:
            xs[:, i + 1] = x
            if ys is not None:
                ys[:, i + 1] = y
        _check_state(x, grid.times[i + 1], a)
    if agg is not None:
        _check_state(y, grid.horizon, None)
    term_diff = np.linalg.norm(x - y, axis=-1) if agg is not None else np.zeros(m)
    return PairedTrajectory(
        grid=grid, record=record, times=times,
        sampled_states=xs, aggregated_states=ys,
        sampled_terminal=x,
        aggregated_terminal=y if agg is not None else x,
        actions=actions,
        reward_increments=rewards if want_rewards else None,
        sup_diff=sup, terminal_diff=term_diff,
        aggregated_reward_increments=agg_rewards,
    )
