"""Discrete-timestep simulator of the five-layer robust-fitting network.

Layers (one neuron group each):

``RandomSampling``  z        one binary neuron per data point
``Auxiliary``       theta'   N*d neurons holding ``z_i * theta_j``
``ModelHypothesis`` theta    d neurons running gradient descent
``ComputeResidual`` c        one binary inlier flag per row
``InlierCounter``   psi      one accumulator

Every layer reads its inputs from the previous timestep only, so a value
needs one timestep per hop. Time is divided into ``K`` windows of
``tau = 2M + 4`` timesteps. Writing ``s = 1..tau`` for the position
inside a window, the schedule is:

* ``s = 1``: z is resampled, theta' and theta are reset to zero.
* ``s = 2``: theta' receives ``z (x) 0``; theta holds.
* ``s = 3, 5, ..., 2M + 1``: theta takes one gradient step using theta'
  and z from ``s - 1``. Even positions hold, which gives theta' the one
  timestep it needs to catch up with theta. That is exactly ``M`` steps.
* ``s = 2M + 2 .. 2M + 4``: theta holds; the final hypothesis reaches
  ``c`` one timestep later and ``psi`` two timesteps later, so the
  window's last ``psi`` is the consensus of its final hypothesis.

``psi(t)`` scores ``theta(t - 2)``. The best ``psi`` over the run is
tracked together with that ``theta`` (a two-deep history), skipping
values that score a freshly reset ``theta``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InsufficientPoints
from .model import (
    Dataset,
    LiftedOperators,
    _abs_residuals,
    build_lifted,
    consensus,
    inlier_mask,
    solve_ls,
)
from .result import FitResult, OpCounts, TraceEntry

BACKENDS = ("float", "fixed")


@dataclass(frozen=True)
class SnnConfig:
    K: int = 300
    M: int = 200
    alpha: float = 0.02
    eps_inlier: float = 0.5
    seed: int = 0
    theta_cap: float = 1e9

    def __post_init__(self):
        if self.K < 1 or self.M < 1:
            raise ConfigError("K and M must be >= 1")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if self.eps_inlier < 0:
            raise ConfigError("eps_inlier must be non-negative")

    @property
    def tau(self) -> int:
        return 2 * self.M + 4

    @property
    def L(self) -> int:
        return self.K * self.tau


def window_offset(t: int, tau: int) -> int:
    """Position ``s`` of timestep ``t`` inside its window (1-based)."""
    return (t - 1) % tau + 1


def is_update_offset(s: int, M: int) -> bool:
    return s % 2 == 1 and 3 <= s <= 2 * M + 1


class NetworkState:
    """All neuron states at one timestep.

    Arrays are never modified in place; a step builds new arrays, so a
    state object can be kept as the read-only view of ``t - 1``.
    """

    __slots__ = (
        "t", "k", "z", "theta_prime", "theta", "c", "psi",
        "theta_history", "updates", "resets", "frozen",
    )

    def __init__(self, t, k, z, theta_prime, theta, c, psi, theta_history,
                 updates=0, resets=0, frozen=False):
        self.t = t
        self.k = k
        self.z = z
        self.theta_prime = theta_prime
        self.theta = theta
        self.c = c
        self.psi = psi
        self.theta_history = theta_history
        self.updates = updates
        self.resets = resets
        self.frozen = frozen

    @classmethod
    def initial(cls, n_points, n_rows, d, dtype):
        theta = np.zeros(d, dtype=dtype)
        return cls(
            t=0, k=0,
            z=np.zeros(n_points, dtype=dtype),
            theta_prime=np.zeros(n_rows * d, dtype=dtype),
            theta=theta,
            c=np.zeros(n_rows, dtype=bool),
            psi=0,
            theta_history=(theta, theta),
        )


# -- numeric backends ---------------------------------------------------------


class FloatArithmetic:
    name = "snn-float"
    dtype = np.float64

    def __init__(self, dataset: Dataset, ops: LiftedOperators, config: SnnConfig):
        self.X, self.y = dataset.X, dataset.y
        self.ops = ops
        self.alpha = config.alpha
        self.eps = config.eps_inlier
        self.cap2 = config.theta_cap ** 2
        self.saturations = 0

    def gradient(self, theta_prime, z_rows):
        return self.ops.Qp @ theta_prime + self.ops.Pp @ z_rows

    def gd_step(self, theta, grad):
        return theta - self.alpha * grad

    def diverged(self, theta) -> bool:
        # false for NaN too
        return not float(theta @ theta) <= self.cap2

    def residuals(self, theta):
        return _abs_residuals(self.X, self.y, theta)

    def drift(self, z_rows, theta, M):
        return 0.0


class FixedArithmetic:
    name = "snn-fixed"
    dtype = np.int64

    def __init__(self, dataset: Dataset, ops: LiftedOperators, config: SnnConfig, fp):
        from .fixedpoint import integer_eps, quantize_dataset

        qds, _ = quantize_dataset(dataset, fp)
        self.fp = fp
        self.lo, self.hi = fp.state_range
        self.X = qds.X.astype(np.int64)
        self.y = qds.y.astype(np.int64)
        self.Xf, self.yf = qds.X, qds.y
        self.ops = LiftedOperators(
            Qp=ops.Qp.astype(np.int64),
            Pp=ops.Pp.astype(np.int64),
            Fd=ops.Fd, FN=ops.FN, row_point=ops.row_point,
        )
        self.alpha = config.alpha
        self.alpha_bar = fp.alpha_bar(config.alpha)
        self.beta = fp.beta
        self.bits = fp.state_bits
        self.eps = integer_eps(config.eps_inlier)
        self.saturations = 0

    def _sat(self, v):
        if v.size == 0 or (v.min() >= self.lo and v.max() <= self.hi):
            return v
        clipped = np.clip(v, self.lo, self.hi)
        self.saturations += int(np.count_nonzero(clipped != v))
        return clipped

    def gradient(self, theta_prime, z_rows):
        return self._sat(self.ops.Qp @ theta_prime + self.ops.Pp @ z_rows)

    def gd_step(self, theta, grad):
        # same arithmetic as fixedpoint.shift_gd_update
        return self._sat(theta - ((grad * self.alpha_bar) >> self.beta))

    def diverged(self, theta) -> bool:
        return False

    def residuals(self, theta):
        return np.abs(self._sat(self.X @ theta) - self.y)

    def drift(self, z_rows, theta, M):
        """Largest gap between the integer hypothesis and real-valued GD on the same selection."""
        sel = z_rows.astype(bool)
        Xs, ys = self.Xf[sel], self.yf[sel]
        Q, p = Xs.T @ Xs, -(Xs.T @ ys)
        ref = np.zeros(Q.shape[0])
        for _ in range(M):
            ref = ref - self.alpha * (Q @ ref + p)
        return float(np.max(np.abs(theta - ref))) if ref.size else 0.0


# -- sampling sources ---------------------------------------------------------


class BernoulliSampler:
    """``z_i = prob >= gamma_i`` with ``gamma_i`` uniform on [0, 1)."""

    def __init__(self, seed: int, n: int, m: int):
        self.rng = np.random.default_rng(seed)
        self.n = n
        self.prob = m / n

    def draw(self) -> np.ndarray:
        return self.prob >= self.rng.random(self.n)


class LfsrSampler:
    """Per-neuron LFSRs with the shift-based switching test."""

    def __init__(self, seed: int, n: int, m: int, bits: int = 16):
        from .fixedpoint import LfsrBank

        self.bank = LfsrBank(seed, n, bits)
        self.n, self.m, self.bits = n, m, bits

    def draw(self) -> np.ndarray:
        from .fixedpoint import sample_switch

        return sample_switch(self.m, self.n, self.bank.draw(), shift=self.bits)


class InjectedSampler:
    """Replays a fixed ``K x n_points`` sequence of selections."""

    def __init__(self, selections, K: int, n: int):
        sel = np.asarray(selections)
        if sel.ndim != 2 or sel.shape[0] != K or sel.shape[1] != n:
            raise ConfigError(
                f"need {K} selections of length {n}, got array of shape {sel.shape}"
            )
        if np.any((sel != 0) & (sel != 1)):
            raise ConfigError("selections must be binary")
        self.selections = sel.astype(bool)
        self.i = 0

    def draw(self) -> np.ndarray:
        z = self.selections[self.i]
        self.i += 1
        return z


# -- layer programs -----------------------------------------------------------


def step_random_sampling(state: NetworkState, sampler, t: int, tau: int, dtype=np.float64):
    if window_offset(t, tau) == 1:
        return sampler.draw().astype(dtype)
    return state.z


def step_auxiliary(state: NetworkState, ops: LiftedOperators, t: int, tau: int):
    if window_offset(t, tau) == 1:
        return np.zeros_like(state.theta_prime)
    # Fd / FN fan the inputs out so one elementwise product gives vec(z theta^T).
    return np.take(state.z, ops.Fd) * np.take(state.theta, ops.FN)


def step_model_hypothesis(state: NetworkState, ops: LiftedOperators, config: SnnConfig,
                          t: int, arith):
    """Returns ``(theta, event)`` with event one of reset/update/hold/diverged."""
    s = window_offset(t, config.tau)
    if s == 1:
        return np.zeros_like(state.theta), "reset"
    if state.frozen or not is_update_offset(s, config.M):
        return state.theta, "hold"
    z_rows = state.z[ops.row_point]
    theta = arith.gd_step(state.theta, arith.gradient(state.theta_prime, z_rows))
    if arith.diverged(theta):
        return np.zeros_like(state.theta), "diverged"
    return theta, "update"


def step_compute_residual(state: NetworkState, arith, t: int):
    return arith.residuals(state.theta) <= arith.eps


def step_inlier_counter(state: NetworkState, group_size: int = 1) -> int:
    if group_size == 1:
        return int(np.count_nonzero(state.c))
    return int(np.count_nonzero(state.c.reshape(-1, group_size).all(axis=1)))


# -- driver -------------------------------------------------------------------


def layer_op_costs(n_points: int, n_rows: int, d: int) -> OpCounts:
    """Per-timestep work of each layer, summed (dense, every layer every step)."""
    nd = n_rows * d
    synaptic = (
        2 * nd  # Auxiliary: F_d and F_N fan-in
        + d * nd + d * n_rows  # ModelHypothesis: Q' theta' and P' z
        + n_rows * d  # ComputeResidual: X theta
        + n_rows  # InlierCounter: 1^T c
    )
    neurons = n_points + nd + d + n_rows + 1
    spikes = n_points + nd + d + n_rows
    return OpCounts(synaptic, neurons, spikes)


def run(dataset: Dataset, config: SnnConfig, backend: str = "float", fp=None,
        selections=None, observer=None) -> FitResult:
    """Simulate ``K * (2M + 4)`` timesteps and read out the best hypothesis.

    Parameters
    ----------
    backend : {"float", "fixed"}
        ``"fixed"`` runs integer neurons with LFSR sampling (see
        :mod:`spikefit.fixedpoint`); ``fp`` then holds its config.
    selections : array (K, n_points), optional
        Replaces random sampling with a given selection per window.
    observer : callable, optional
        Called as ``observer(t, prev_state, new_state)`` after every timestep.
    """
    if backend not in BACKENDS:
        raise ConfigError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    ops = build_lifted(dataset)
    n_points, n_rows, d = dataset.n_points, dataset.N, dataset.d
    m = min(dataset.min_points, n_points)
    if backend == "fixed":
        from .fixedpoint import FixedPointConfig

        fp = fp or FixedPointConfig()
        arith = FixedArithmetic(dataset, ops, config, fp)
        sampler = LfsrSampler(config.seed, n_points, m, fp.lfsr_bits)
    else:
        arith = FloatArithmetic(dataset, ops, config)
        sampler = BernoulliSampler(config.seed, n_points, m)
    if selections is not None:
        sampler = InjectedSampler(selections, config.K, n_points)

    tau, M = config.tau, config.M
    dtype = arith.dtype
    aops = arith.ops
    gs = dataset.group_size
    costs = layer_op_costs(n_points, n_rows, d)
    counts = OpCounts()

    prev = NetworkState.initial(n_points, n_rows, d, dtype)
    best_psi, best_theta = -1, prev.theta
    trace: list[TraceEntry] = []
    diverged_any = False
    sat_mark = 0
    n_diverged = 0

    for t in range(1, config.L + 1):
        s = window_offset(t, tau)
        z = step_random_sampling(prev, sampler, t, tau, dtype)
        theta_prime = step_auxiliary(prev, aops, t, tau)
        theta, event = step_model_hypothesis(prev, aops, config, t, arith)
        c = step_compute_residual(prev, arith, t)
        psi = step_inlier_counter(prev, gs)

        if s == 1:
            updates, resets, frozen, diverged_any = 0, 1, False, False
        else:
            updates, resets, frozen = prev.updates, prev.resets, prev.frozen
        if event == "update":
            updates += 1
        elif event == "diverged":
            updates += 1
            frozen = diverged_any = True
        cur = NetworkState(
            t, (t - 1) // tau, z, theta_prime, theta, c, psi,
            (prev.theta, prev.theta_history[0]), updates, resets, frozen,
        )

        counts.synaptic_ops += costs.synaptic_ops
        counts.neuron_updates += costs.neuron_updates
        counts.spikes += costs.spikes

        # psi(t) scores theta(t-2); skip scores of a just-reset theta.
        u = t - 2
        if u >= 1 and window_offset(u, tau) >= 3 and psi > best_psi:
            best_psi, best_theta = psi, prev.theta_history[0]

        if s == tau:
            if diverged_any:
                n_diverged += 1
            trace.append(TraceEntry(
                window=cur.k,
                psi=psi,
                theta=np.asarray(prev.theta_history[0], dtype=np.float64).copy(),
                diverged=diverged_any,
                best_psi=max(best_psi, 0),
                updates=updates,
                resets=resets,
                saturations=arith.saturations - sat_mark,
                drift=arith.drift(z[aops.row_point], theta, M),
            ))
            sat_mark = arith.saturations

        if observer is not None:
            observer(t, prev, cur)
        prev = cur

    theta_best = np.asarray(best_theta, dtype=np.float64).copy()
    return FitResult(
        method=arith.name,
        theta_best=theta_best,
        psi_best=best_psi,
        inlier_mask=inlier_mask(dataset, theta_best, config.eps_inlier),
        trace=trace,
        op_counts=counts,
        seed=config.seed,
        saturations=arith.saturations,
        diverged_windows=n_diverged,
    )


def ls_refine(result: FitResult, dataset: Dataset, eps_inlier: float) -> FitResult:
    """Re-fit by least squares on the result's inliers and re-score."""
    rows = dataset.rows_of(result.inlier_mask)
    if np.count_nonzero(rows) < dataset.d:
        raise InsufficientPoints(
            f"{np.count_nonzero(rows)} inlier rows cannot determine {dataset.d} unknowns"
        )
    theta = solve_ls(dataset.subset(rows))
    return result.replace(
        theta_best=theta,
        psi_best=consensus(dataset, theta, eps_inlier),
        inlier_mask=inlier_mask(dataset, theta, eps_inlier),
        psi_unrefined=result.psi_best,
        refined=True,
    )
