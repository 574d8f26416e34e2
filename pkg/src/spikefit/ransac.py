"""Classical RANSAC: sample a minimal subset, fit it exactly, count inliers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateData, DegenerateSubset, InsufficientPoints
from .model import DEFAULT_COND_CAP, Dataset, consensus, inlier_mask, solve_ls
from .result import FitResult, OpCounts, TraceEntry

RETRY_FACTOR = 100


@dataclass(frozen=True)
class RansacConfig:
    K: int = 300
    eps_inlier: float = 0.5
    seed: int = 0
    cond_cap: float = DEFAULT_COND_CAP

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.eps_inlier < 0:
            raise ConfigError("eps_inlier must be non-negative")


def _ls_cost(n_rows: int, d: int) -> int:
    return n_rows * d * d + d ** 3


def ransac(dataset: Dataset, config: RansacConfig, selections=None) -> FitResult:
    """Best-consensus hypothesis over ``K`` minimal-subset fits.

    Subsets are ``dataset.min_points`` points drawn uniformly without
    replacement. A degenerate subset is redrawn; after ``100 * K``
    degenerate draws the data is declared degenerate.

    With ``selections`` (``K x n_points`` binary), iteration ``k`` fits the
    selected points instead of drawing; unusable selections are skipped.
    """
    n_points, d = dataset.n_points, dataset.d
    m = dataset.min_points
    if n_points < m:
        raise InsufficientPoints(f"{n_points} points, need at least {m}")
    if selections is not None:
        selections = np.asarray(selections)
        if selections.shape != (config.K, n_points):
            raise ConfigError(
                f"need {config.K} selections of length {n_points}, got shape {selections.shape}"
            )
    rng = np.random.default_rng(config.seed)
    counts = OpCounts()
    score_cost = dataset.N * d + dataset.N

    best_psi, best_theta = -1, None
    trace: list[TraceEntry] = []
    degenerate = 0
    for k in range(config.K):
        skipped = False
        if selections is None:
            while True:
                pick = np.zeros(n_points, dtype=bool)
                pick[rng.choice(n_points, m, replace=False)] = True
                rows = dataset.rows_of(pick)
                counts.synaptic_ops += _ls_cost(int(rows.sum()), d)
                try:
                    theta = solve_ls(dataset.subset(rows), config.cond_cap)
                    break
                except DegenerateSubset:
                    degenerate += 1
                    if degenerate >= RETRY_FACTOR * config.K:
                        raise DegenerateData(
                            f"{degenerate} degenerate subsets drawn; data cannot determine a model"
                        ) from None
        else:
            rows = dataset.rows_of(selections[k].astype(bool))
            try:
                if np.count_nonzero(rows) < d:
                    raise InsufficientPoints("selection has fewer rows than unknowns")
                theta = solve_ls(dataset.subset(rows), config.cond_cap)
                counts.synaptic_ops += _ls_cost(int(rows.sum()), d)
            except (DegenerateSubset, InsufficientPoints):
                degenerate += 1
                skipped = True

        if skipped:
            trace.append(TraceEntry(k, 0, np.full(d, np.nan), best_psi=max(best_psi, 0),
                                    skipped=True))
            continue
        psi = consensus(dataset, theta, config.eps_inlier)
        counts.synaptic_ops += score_cost
        if psi > best_psi:
            best_psi, best_theta = psi, theta
        trace.append(TraceEntry(k, psi, theta, best_psi=best_psi))

    if best_theta is None:
        mask = np.zeros(n_points, dtype=bool)
        best_psi = 0
    else:
        mask = inlier_mask(dataset, best_theta, config.eps_inlier)
    return FitResult(
        method="ransac",
        theta_best=best_theta,
        psi_best=best_psi,
        inlier_mask=mask,
        trace=trace,
        op_counts=counts,
        seed=config.seed,
        degenerate_samples=degenerate,
    )
