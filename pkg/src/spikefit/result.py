"""Result containers shared by the network simulator and the RANSAC baseline."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass
class TraceEntry:
    """Per-iteration record.

    For the network an iteration is one window of ``2M + 4`` timesteps and
    ``psi`` is the consensus read at the window's last timestep; for
    RANSAC it is the consensus of that iteration's hypothesis.
    """

    window: int
    psi: int
    theta: np.ndarray
    diverged: bool = False
    best_psi: int = 0
    updates: int = 0
    resets: int = 0
    saturations: int = 0
    drift: float = 0.0
    skipped: bool = False


@dataclass
class OpCounts:
    synaptic_ops: int = 0
    neuron_updates: int = 0
    spikes: int = 0

    def as_dict(self) -> dict:
        return {
            "synaptic_ops": self.synaptic_ops,
            "neuron_updates": self.neuron_updates,
            "spikes": self.spikes,
        }


@dataclass
class FitResult:
    method: str
    theta_best: np.ndarray | None
    psi_best: int
    inlier_mask: np.ndarray
    trace: list[TraceEntry] = field(default_factory=list)
    op_counts: OpCounts = field(default_factory=OpCounts)
    seed: int | None = None
    saturations: int = 0
    diverged_windows: int = 0
    degenerate_samples: int = 0
    psi_unrefined: int | None = None
    refined: bool = False

    def replace(self, **changes) -> "FitResult":
        return replace(self, **changes)
