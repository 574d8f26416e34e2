"""Linear robust-fitting primitives.

Everything here is a pure function over immutable inputs. The fitted
model is ``y ~ x^T theta``; ``theta`` is carried around as a plain 1-D
float array.

The gradient convention is the one used throughout the network
simulator: ``grad = Q theta + p`` with ``Q = X^T X`` and ``p = -X^T y``,
i.e. the gradient of ``0.5 * ||X theta - y||^2``. Any factor of two is
absorbed into the learning rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    DegenerateSubset,
    DimensionError,
    InsufficientPoints,
    InvalidGroundTruth,
)

DEFAULT_COND_CAP = 1e12


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """N measurement rows ``(x_i, y_i)`` with ``x_i`` of length ``d``.

    ``group_size`` > 1 marks multi-equation data points: consecutive
    blocks of ``group_size`` rows belong to one point (e.g. the two rows
    an image correspondence contributes to an affine fit). A point is an
    inlier only if all of its rows are (Chebyshev rule).
    """

    X: np.ndarray
    y: np.ndarray
    group_size: int = 1
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or y.ndim != 1:
            raise DimensionError(f"X must be 2-D and y 1-D, got {X.shape} and {y.shape}")
        if X.shape[0] != y.shape[0]:
            raise DimensionError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DimensionError("dataset needs N >= 1 and d >= 1")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite values")
        if self.group_size < 1 or X.shape[0] % self.group_size:
            raise DimensionError(
                f"{X.shape[0]} rows cannot be split into groups of {self.group_size}"
            )
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n_points(self) -> int:
        return self.N // self.group_size

    @property
    def min_points(self) -> int:
        """Points in a minimal subset: enough rows to pin down ``d`` unknowns."""
        return -(-self.d // self.group_size)

    def rows_of(self, point_mask) -> np.ndarray:
        """Expand a per-point boolean mask to a per-row mask."""
        return np.repeat(np.asarray(point_mask, dtype=bool), self.group_size)

    def subset(self, row_mask) -> "Dataset":
        row_mask = np.asarray(row_mask, dtype=bool)
        return Dataset(self.X[row_mask], self.y[row_mask])


class QuadraticForm(NamedTuple):
    Q: np.ndarray
    p: np.ndarray


@dataclass(frozen=True)
class LiftedOperators:
    """Constant synaptic operators of the lifted gradient.

    ``Qp`` is ``d x (N*d)`` with block ``i`` equal to ``x_i x_i^T``;
    ``Pp`` is ``d x N`` with column ``i`` equal to ``-y_i x_i``.
    ``Fd`` and ``FN`` are the replication stencils: gathering a selection
    vector with ``Fd`` repeats each entry ``d`` times, gathering ``theta``
    with ``FN`` tiles it ``N`` times, so that their elementwise product is
    ``vec(z theta^T)`` under row-major flattening (index ``i*d + j``).
    """

    Qp: np.ndarray
    Pp: np.ndarray
    Fd: np.ndarray
    FN: np.ndarray
    row_point: np.ndarray

    @property
    def N(self) -> int:
        return self.Pp.shape[1]

    @property
    def d(self) -> int:
        return self.Pp.shape[0]


def _as_theta(theta, d: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1 or theta.shape[0] != d:
        raise DimensionError(f"model must have length {d}, got shape {theta.shape}")
    return theta


def _abs_residuals(X, y, theta):
    # Shared with the ComputeResidual layer so both score bit-identically.
    return np.abs(X @ theta - y)


def residuals(dataset: Dataset, theta) -> np.ndarray:
    """Absolute residuals ``|y_i - x_i^T theta|``."""
    theta = _as_theta(theta, dataset.d)
    return _abs_residuals(dataset.X, dataset.y, theta)


def point_inliers(dataset: Dataset, row_ok) -> np.ndarray:
    """Collapse a per-row inlier mask to a per-point mask."""
    row_ok = np.asarray(row_ok, dtype=bool)
    if dataset.group_size == 1:
        return row_ok
    return row_ok.reshape(-1, dataset.group_size).all(axis=1)


def inlier_mask(dataset: Dataset, theta, eps_inlier: float) -> np.ndarray:
    """Per-point inlier mask (length ``dataset.n_points``)."""
    if eps_inlier < 0:
        raise ValueError("eps_inlier must be non-negative")
    return point_inliers(dataset, residuals(dataset, theta) <= eps_inlier)


def consensus(dataset: Dataset, theta, eps_inlier: float) -> int:
    """Number of points whose residual is within ``eps_inlier``."""
    return int(np.count_nonzero(inlier_mask(dataset, theta, eps_inlier)))


def solve_ls(dataset: Dataset, cond_cap: float = DEFAULT_COND_CAP) -> np.ndarray:
    """Least-squares model, rejecting rank-deficient designs.

    Raises
    ------
    InsufficientPoints
        Fewer rows than unknowns.
    DegenerateSubset
        ``X`` is rank deficient or its condition number exceeds ``cond_cap``.
    """
    if dataset.N < dataset.d:
        raise InsufficientPoints(f"{dataset.N} rows cannot determine {dataset.d} unknowns")
    theta, _, rank, sv = np.linalg.lstsq(dataset.X, dataset.y, rcond=None)
    if rank < dataset.d or sv[-1] == 0 or sv[0] / sv[-1] > cond_cap:
        raise DegenerateSubset(f"design matrix is rank deficient (rank {rank} < {dataset.d})")
    return theta


def quadratic_terms(dataset: Dataset) -> QuadraticForm:
    X, y = dataset.X, dataset.y
    return QuadraticForm(X.T @ X, -(X.T @ y))


def objective(qf: QuadraticForm, theta) -> float:
    """``0.5 theta^T Q theta + p^T theta``, whose gradient is :func:`dense_gradient`."""
    theta = _as_theta(theta, qf.p.shape[0])
    return float(0.5 * theta @ qf.Q @ theta + qf.p @ theta)


def dense_gradient(qf: QuadraticForm, theta) -> np.ndarray:
    theta = _as_theta(theta, qf.p.shape[0])
    return qf.Q @ theta + qf.p


def build_lifted(dataset: Dataset) -> LiftedOperators:
    X, y = dataset.X, dataset.y
    N, d = X.shape
    # outer[i] = x_i x_i^T, laid side by side -> d x (N*d)
    outer = X[:, :, None] * X[:, None, :]
    Qp = outer.transpose(1, 0, 2).reshape(d, N * d)
    Pp = -(X * y[:, None]).T
    row_point = np.repeat(np.arange(dataset.n_points), dataset.group_size)
    return LiftedOperators(
        Qp=_frozen(Qp),
        Pp=_frozen(Pp),
        Fd=_frozen(np.repeat(row_point, d), dtype=np.intp),
        FN=_frozen(np.tile(np.arange(d), N), dtype=np.intp),
        row_point=_frozen(row_point, dtype=np.intp),
    )


def replicate_selection(ops: LiftedOperators, z_points) -> np.ndarray:
    """``F_d`` stencil: per-point selection -> length ``N*d`` input."""
    return np.asarray(z_points)[ops.Fd]


def replicate_model(ops: LiftedOperators, theta) -> np.ndarray:
    """``F_N`` stencil: ``theta`` -> length ``N*d`` input."""
    return np.asarray(theta)[ops.FN]


def lift(ops: LiftedOperators, theta, z_rows) -> np.ndarray:
    """``theta' = z (x) theta`` for a per-row selection."""
    z_rows = np.asarray(z_rows)
    return (z_rows[:, None] * np.asarray(theta)[None, :]).ravel()


def lifted_gradient(ops: LiftedOperators, theta, z) -> np.ndarray:
    """``Q' (z (x) theta) + P' z`` for a per-row selection ``z``."""
    theta = _as_theta(theta, ops.d)
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (ops.N,):
        raise DimensionError(f"selection must have length {ops.N}, got {z.shape}")
    if np.any((z != 0) & (z != 1)):
        raise ValueError("selection vector must be binary")
    return ops.Qp @ lift(ops, theta, z) + ops.Pp @ z


def normalized_distance(theta_gt, theta_est) -> float:
    """``100 * ||theta_gt - theta_est|| / ||theta_gt||`` (percent)."""
    theta_gt = np.asarray(theta_gt, dtype=np.float64)
    theta_est = _as_theta(theta_est, theta_gt.shape[0])
    norm = np.linalg.norm(theta_gt)
    if norm == 0:
        raise InvalidGroundTruth("ground-truth model has zero norm")
    return float(100.0 * np.linalg.norm(theta_gt - theta_est) / norm)
