"""Integer arithmetic contracts of the neuromorphic target.

The target chip stores synaptic weights in 8 bits and neuron state in 24
bits, has no floating point and no division. This module provides the
pieces needed to run the network under those rules:

* a Galois LFSR as the per-neuron pseudo-random source,
* the shift-based switching test replacing ``prob >= gamma``,
* a fixed-point learning rate ``alpha_bar = ceil(alpha * 2**beta)`` with
  the gradient step ``theta -= (grad * alpha_bar) >> beta``,
* validation that every derived synaptic weight fits the weight width.

Right shifts are two's-complement arithmetic shifts, so negative values
round toward minus infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigError, ConfigOverflow, InvalidSeed, NonIntegerData, WeightOverflow
from .model import Dataset, build_lifted

# Maximal-length Galois feedback masks (right-shifting form).
# 16: x^16 + x^14 + x^13 + x^11 + 1; 24: x^24 + x^23 + x^22 + x^17 + 1
LFSR_TAPS = {16: 0xB400, 24: 0xE10000}

_MASK64 = (1 << 64) - 1


def signed_range(bits: int) -> tuple[int, int]:
    return -(1 << (bits - 1)), (1 << (bits - 1)) - 1


def saturate(values, bits: int):
    """Clip to the signed ``bits`` range; returns ``(clipped, n_clipped)``."""
    lo, hi = signed_range(bits)
    values = np.asarray(values, dtype=np.int64)
    clipped = np.clip(values, lo, hi)
    return clipped, int(np.count_nonzero(clipped != values))


def asr(values, shift: int):
    """Arithmetic right shift (floor division by ``2**shift``)."""
    if isinstance(values, (int, np.integer)):
        return int(values) >> shift
    return np.right_shift(np.asarray(values, dtype=np.int64), shift)


@dataclass(frozen=True)
class FixedPointConfig:
    beta: int = 10
    weight_bits: int = 8
    state_bits: int = 24
    lfsr_bits: int = 16

    def __post_init__(self):
        if self.beta < 0:
            raise ConfigError("beta must be >= 0")
        if self.lfsr_bits not in LFSR_TAPS:
            raise ConfigError(f"lfsr_bits must be one of {sorted(LFSR_TAPS)}")
        if self.weight_bits < 2 or self.state_bits < self.weight_bits:
            raise ConfigError("need 2 <= weight_bits <= state_bits")

    @property
    def weight_range(self) -> tuple[int, int]:
        return signed_range(self.weight_bits)

    @property
    def state_range(self) -> tuple[int, int]:
        return signed_range(self.state_bits)

    def alpha_bar(self, alpha: float) -> int:
        return quantize_alpha(alpha, self.beta, self.state_bits)


def quantize_alpha(alpha: float, beta: int, state_bits: int = 24) -> int:
    """``ceil(alpha * 2**beta)``, evaluated exactly on the binary value of ``alpha``."""
    if not alpha > 0:
        raise ConfigError("alpha must be positive")
    if beta < 0:
        raise ConfigError("beta must be >= 0")
    alpha_bar = math.ceil(Fraction(alpha) * (1 << beta))
    if alpha_bar > signed_range(state_bits)[1]:
        raise ConfigOverflow(f"alpha_bar={alpha_bar} exceeds the {state_bits}-bit state range")
    return alpha_bar


def shift_gd_update(theta, grad, alpha_bar: int, beta: int, state_bits: int = 24):
    """One integer gradient step ``theta - ((grad * alpha_bar) >> beta)``.

    Returns ``(new_theta, n_saturated)``; results are clipped to the state
    range rather than wrapped.
    """
    theta = np.asarray(theta, dtype=np.int64)
    step = asr(np.asarray(grad, dtype=np.int64) * alpha_bar, beta)
    return saturate(theta - step, state_bits)


def sample_switch(d, N, lfsr_value, shift: int = 16):
    """Switching test ``d > (N * lfsr_value) >> shift``.

    Equivalent to ``d/N > lfsr_value / 2**shift`` without a division.
    Works elementwise on arrays; products are formed in 64 bits.
    """
    if np.isscalar(lfsr_value) and np.isscalar(d) and np.isscalar(N):
        if not 1 <= d <= N:
            raise ValueError(f"need 1 <= d <= N, got d={d}, N={N}")
        if not 0 <= lfsr_value < (1 << shift):
            raise ValueError(f"lfsr value {lfsr_value} outside {shift}-bit range")
        return bool(d > ((int(N) * int(lfsr_value)) >> shift))
    prod = np.asarray(N, dtype=np.int64) * np.asarray(lfsr_value, dtype=np.int64)
    return np.asarray(d, dtype=np.int64) > (prod >> shift)


@dataclass(frozen=True)
class LfsrState:
    register: int
    bits: int = 16
    taps: int | None = None

    def __post_init__(self):
        if self.taps is None:
            if self.bits not in LFSR_TAPS:
                raise ConfigError(f"no default taps for a {self.bits}-bit LFSR")
            object.__setattr__(self, "taps", LFSR_TAPS[self.bits])
        if not 0 < self.register < (1 << self.bits):
            raise InvalidSeed(f"LFSR register must be in [1, 2^{self.bits}-1], got {self.register}")


def lfsr_next(state: LfsrState) -> tuple[int, LfsrState]:
    """Read the register, then advance one Galois step."""
    value = state.register
    nxt = value >> 1
    if value & 1:
        nxt ^= state.taps
    return value, LfsrState(nxt, state.bits, state.taps)


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def neuron_seeds(seed: int, n: int, bits: int = 16) -> np.ndarray:
    """Nonzero per-neuron LFSR seeds derived from one master seed."""
    out = np.empty(n, dtype=np.int64)
    mask = (1 << bits) - 1
    x = seed & _MASK64
    for i in range(n):
        x = (x + 0x9E3779B97F4A7C15) & _MASK64
        s = splitmix64(x) & mask
        out[i] = s or 1
    return out


class LfsrBank:
    """One Galois LFSR per sampling neuron, stepped in lockstep.

    Each :meth:`draw` reads every register and then advances it by
    ``stride`` steps (default: the register width, so successive draws of
    a neuron do not share bits).
    """

    def __init__(self, seed: int, n: int, bits: int = 16, stride: int | None = None):
        self.bits = bits
        self.taps = LFSR_TAPS[bits]
        self.stride = bits if stride is None else stride
        self.registers = neuron_seeds(seed, n, bits)

    def step(self):
        r = self.registers
        self.registers = (r >> 1) ^ ((r & 1) * self.taps)

    def draw(self) -> np.ndarray:
        values = self.registers.copy()
        for _ in range(self.stride):
            self.step()
        return values


def quantize_dataset(dataset: Dataset, cfg: FixedPointConfig | None = None, scale: int = 1):
    """Convert to an integer dataset whose synaptic weights fit ``cfg.weight_bits``.

    ``X`` and ``y`` are both multiplied by ``scale`` (which leaves the model
    unchanged) and must then be integral. Checked weights are the blocks
    ``x_i x_i^T`` of ``Q'``, the columns ``-y_i x_i`` of ``P'`` and the
    residual weights ``X``.

    Returns
    -------
    (Dataset, int)
        The integer-valued dataset and the scale used.
    """
    cfg = cfg or FixedPointConfig()
    if scale < 1 or int(scale) != scale:
        raise ConfigError("scale must be a positive integer")
    X = dataset.X * scale
    y = dataset.y * scale
    Xi, yi = np.rint(X), np.rint(y)
    if not (np.array_equal(Xi, X) and np.array_equal(yi, y)):
        raise NonIntegerData(
            f"data is not integral at scale {scale}; pass a larger scale or integer data"
        )
    qds = Dataset(Xi, yi, group_size=dataset.group_size, meta=dict(dataset.meta, scale=scale))
    lo, hi = cfg.weight_range
    ops = build_lifted(qds)
    d = qds.d
    for name, mat in (("Q'", ops.Qp), ("P'", ops.Pp), ("X", qds.X)):
        bad = np.argwhere((mat < lo) | (mat > hi))
        if bad.size:
            r, col = (int(v) for v in bad[0])
            value = int(mat[r, col])
            if name == "Q'":
                entry = (name, col // d, r, col % d)
                where = f"block of point {col // d}, entry ({r}, {col % d})"
            elif name == "P'":
                entry = (name, col, r)
                where = f"column {col}, entry {r}"
            else:
                entry = (name, r, col)
                where = f"row {r}, column {col}"
            raise WeightOverflow(
                f"{name} weight {value} at {where} outside [{lo}, {hi}]",
                entry=entry,
                value=value,
            )
    return qds, scale


def integer_eps(eps_inlier) -> int:
    if float(eps_inlier) != int(eps_inlier) or eps_inlier < 0:
        raise ConfigError(
            f"the fixed-point backend needs a non-negative integer inlier threshold, got {eps_inlier}"
        )
    return int(eps_inlier)


def run_fixed(dataset: Dataset, config, fp: FixedPointConfig | None = None, **kwargs):
    """Run the network with the integer backend; see :func:`spikefit.engine.run`."""
    from .engine import run

    return run(dataset, config, backend="fixed", fp=fp or FixedPointConfig(), **kwargs)
