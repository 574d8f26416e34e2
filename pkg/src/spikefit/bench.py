"""Instance generators, affine registration and evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateHomography, InsufficientPoints
from .model import Dataset
from .result import FitResult, OpCounts

# (N, d, eta) cells of the synthetic difficulty grid; 13 distinct cells.
_GRID_N = (100, 200, 300, 400, 500)
_GRID_D = (2, 3, 6, 8)
_GRID_ETA = (10, 20, 30, 40, 50, 60)


@dataclass(frozen=True)
class SyntheticSpec:
    N: int = 200
    d: int = 8
    eta_percent: float = 20.0
    sigma_inlier: float = 0.1
    sigma_outlier: float = 1.5
    seed: int = 0
    integer_mode: bool = False
    theta_range: int = 10
    inlier_noise: int = 1
    outlier_noise: int = 4
    x_cap: int = 3

    def __post_init__(self):
        if not 0 <= self.eta_percent <= 100:
            raise ConfigError("eta_percent must be in [0, 100]")
        if self.sigma_inlier < 0 or self.sigma_outlier < 0:
            raise ConfigError("noise levels must be non-negative")
        if self.N < 1 or self.d < 1:
            raise ConfigError("N and d must be >= 1")

    @property
    def n_outliers(self) -> int:
        return int(round(self.eta_percent * self.N / 100))


def gen_linear_instance(spec: SyntheticSpec):
    """Random linear-regression instance with Gaussian outliers.

    ``theta*`` and every ``x_i`` are standard normal; ``y_i = x_i^T theta*``
    plus ``N(0, sigma_inlier^2)``. A uniformly chosen ``eta%`` of the
    points receive an extra ``N(0, sigma_outlier^2)`` on top.

    Returns ``(dataset, theta_gt)``; ``dataset.meta["outliers"]`` lists the
    corrupted indices.
    """
    rng = np.random.default_rng(spec.seed)
    theta = rng.standard_normal(spec.d)
    X = rng.standard_normal((spec.N, spec.d))
    y = X @ theta + rng.normal(0.0, spec.sigma_inlier, spec.N)
    out = np.sort(rng.choice(spec.N, spec.n_outliers, replace=False))
    y[out] += rng.normal(0.0, spec.sigma_outlier, out.size)
    meta = {"outliers": tuple(int(i) for i in out), "spec": spec}
    return Dataset(X, y, meta=meta), theta


def max_line_abscissa(theta, noise: int, weight_max: int = 127, cap: int | None = None) -> int:
    """Largest ``X <= cap`` so that every weight of ``x in [-X, X]`` fits ``weight_max``."""
    slope, icpt = abs(int(theta[0])), abs(int(theta[1]))
    X = 1
    while (X + 1) ** 2 <= weight_max and (X + 1) * (slope * (X + 1) + icpt + noise) <= weight_max:
        if cap is not None and X + 1 > cap:
            break
        X += 1
    return X


def gen_integer_line_instance(spec: SyntheticSpec):
    """Integer line-fitting instance sized for 8-bit synaptic weights.

    ``theta* = (slope, intercept)`` is drawn from ``{-r..r}^2`` (never
    zero), abscissae are integers in a range small enough that every
    ``x x^T`` and ``y x`` entry stays within the weight width, every
    point gets integer noise in ``[-1, 1]`` and ``eta%`` of them a further
    ``[-4, 4]``. ``x_cap`` (default 3) also bounds the abscissae: with
    ``alpha = 0.02`` gradient descent on a handful of points with
    ``|x| <= 3`` stays stable, while wider ranges make it diverge.
    """
    from .fixedpoint import FixedPointConfig, quantize_dataset

    rng = np.random.default_rng(spec.seed)
    r = spec.theta_range
    theta = np.zeros(2, dtype=np.int64)
    while not theta.any():
        theta = rng.integers(-r, r + 1, size=2)
    wmax = FixedPointConfig().weight_range[1]
    X_max = max_line_abscissa(theta, spec.inlier_noise + spec.outlier_noise, wmax, spec.x_cap)
    x = rng.integers(-X_max, X_max + 1, size=spec.N)
    y = theta[0] * x + theta[1] + rng.integers(-spec.inlier_noise, spec.inlier_noise + 1, spec.N)
    out = np.sort(rng.choice(spec.N, spec.n_outliers, replace=False))
    y[out] += rng.integers(-spec.outlier_noise, spec.outlier_noise + 1, out.size)
    X = np.column_stack([x, np.ones_like(x)])
    meta = {"outliers": tuple(int(i) for i in out), "spec": spec, "x_max": X_max}
    ds, _ = quantize_dataset(Dataset(X, y, meta=meta))
    return ds, theta.astype(np.float64)


def benchmark_grid() -> list[tuple[int, int, int]]:
    """The 13 distinct ``(N, d, eta)`` cells of the synthetic benchmark."""
    cells = [(n, 8, 20) for n in _GRID_N]
    cells += [(200, d, 20) for d in _GRID_D]
    cells += [(200, 8, e) for e in _GRID_ETA]
    seen, out = set(), []
    for c in cells:
        if c not in seen:
            seen.add(c)
            out.append(c)
    return out


# -- affine registration ------------------------------------------------------


@dataclass
class CorrespondenceSet:
    """Point matches ``(x, y) -> (x', y')``, one row ``x y x' y'`` each."""

    pairs: np.ndarray
    H_gt: np.ndarray | None = None
    image_size: tuple[int, int] = (640, 480)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=np.float64).reshape(-1, 4)
        if not np.all(np.isfinite(self.pairs)):
            raise ValueError("correspondences must be finite")
        if self.H_gt is not None:
            self.H_gt = np.asarray(self.H_gt, dtype=np.float64).reshape(3, 3)

    def __len__(self):
        return self.pairs.shape[0]


def affine_to_dataset(corrs: CorrespondenceSet) -> Dataset:
    """Two rows per correspondence: ``(x, y, 1, 0, 0, 0) -> x'`` and ``(0, 0, 0, x, y, 1) -> y'``."""
    P = len(corrs)
    if P < 3:
        raise InsufficientPoints(f"affine fitting needs >= 3 correspondences, got {P}")
    x, y, xp, yp = corrs.pairs.T
    X = np.zeros((2 * P, 6))
    X[0::2, 0], X[0::2, 1], X[0::2, 2] = x, y, 1.0
    X[1::2, 3], X[1::2, 4], X[1::2, 5] = x, y, 1.0
    target = np.empty(2 * P)
    target[0::2], target[1::2] = xp, yp
    return Dataset(X, target, group_size=2)


def affine_from_theta(theta) -> np.ndarray:
    return np.asarray(theta, dtype=np.float64).reshape(2, 3)


def lift_affine_to_homography(H_A) -> np.ndarray:
    H_A = np.asarray(H_A, dtype=np.float64).reshape(2, 3)
    return np.vstack([H_A, [0.0, 0.0, 1.0]])


def normalizing_transform(points) -> np.ndarray:
    """Similarity moving ``points`` to zero mean and unit RMS per coordinate."""
    points = np.asarray(points, dtype=np.float64)
    centre = points.mean(axis=0)
    rms = np.sqrt(np.mean(np.sum((points - centre) ** 2, axis=1)) / 2.0)
    s = 1.0 / rms if rms > 0 else 1.0
    return np.array([[s, 0, -s * centre[0]], [0, s, -s * centre[1]], [0, 0, 1.0]])


def apply_homography(H, points) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    ph = np.column_stack([points, np.ones(len(points))]) @ np.asarray(H).T
    return ph[:, :2] / ph[:, 2:3]


def normalize_correspondences(corrs: CorrespondenceSet):
    """Returns ``(normalized set, T_src, T_dst)``."""
    T1 = normalizing_transform(corrs.pairs[:, :2])
    T2 = normalizing_transform(corrs.pairs[:, 2:])
    pairs = np.column_stack([
        apply_homography(T1, corrs.pairs[:, :2]),
        apply_homography(T2, corrs.pairs[:, 2:]),
    ])
    return CorrespondenceSet(pairs, None, corrs.image_size), T1, T2


def gen_affine_instance(n_pairs: int = 50, outlier_frac: float = 0.3, noise_px: float = 0.5,
                        image_size=(640, 480), seed: int = 0) -> CorrespondenceSet:
    """Synthetic matches under a random near-identity affinity, with gross outliers."""
    rng = np.random.default_rng(seed)
    w, h = image_size
    ang = np.deg2rad(rng.uniform(-15, 15))
    sx, sy = rng.uniform(0.8, 1.2, 2)
    shear = rng.uniform(-0.1, 0.1)
    R = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
    A = R @ np.array([[sx, shear], [0.0, sy]])
    # keep the image centre roughly in place, then shift a little
    c = np.array([w / 2, h / 2])
    t = c - A @ c + rng.uniform(-40, 40, 2)
    H_A = np.column_stack([A, t])
    src = rng.uniform([0, 0], [w, h], size=(n_pairs, 2))
    dst = src @ A.T + t + rng.normal(0, noise_px, (n_pairs, 2))
    n_out = int(round(outlier_frac * n_pairs))
    out = np.sort(rng.choice(n_pairs, n_out, replace=False))
    dst[out] = rng.uniform([0, 0], [w, h], size=(n_out, 2))
    return CorrespondenceSet(
        np.column_stack([src, dst]),
        lift_affine_to_homography(H_A),
        (w, h),
        meta={"outliers": tuple(int(i) for i in out), "H_A": H_A},
    )


def image_corners(image_size) -> np.ndarray:
    w, h = image_size
    return np.array([[0, 0], [w, 0], [w, h], [0, h]], dtype=np.float64)


def _check_homography(H, name):
    H = np.asarray(H, dtype=np.float64)
    if H.shape != (3, 3) or not np.all(np.isfinite(H)):
        raise DegenerateHomography(f"{name} must be a finite 3x3 matrix")
    if np.linalg.cond(H) > 1e12:
        raise DegenerateHomography(f"{name} is singular or near-singular")
    return H


def corner_error(H_est, H_gt, image_size) -> float:
    """Mean distance between the image corners mapped by the two homographies."""
    H_est = _check_homography(H_est, "H_est")
    H_gt = _check_homography(H_gt, "H_gt")
    corners = image_corners(image_size)
    pts = []
    for H in (H_est, H_gt):
        ph = np.column_stack([corners, np.ones(4)]) @ H.T
        if np.any(np.abs(ph[:, 2]) < 1e-12):
            raise DegenerateHomography("a corner maps to infinity")
        pts.append(ph[:, :2] / ph[:, 2:3])
    return float(np.mean(np.linalg.norm(pts[0] - pts[1], axis=1)))


def auc_from_errors(errors, max_threshold_px: float) -> float:
    """Area under the recall-vs-threshold curve on ``[0, T]``, normalised to [0, 1].

    For errors ``e_i`` this integral is ``mean(max(0, 1 - e_i / T))``.
    """
    if not max_threshold_px > 0:
        raise ValueError("threshold must be positive")
    e = np.atleast_1d(np.asarray(errors, dtype=np.float64))
    return float(np.mean(np.clip(1.0 - e / max_threshold_px, 0.0, 1.0)))


def corner_auc(H_est, H_gt, image_size, max_threshold_px: float = 10.0) -> float:
    return auc_from_errors(corner_error(H_est, H_gt, image_size), max_threshold_px)


def fit_affine(corrs: CorrespondenceSet, method: str = "snn-float", K: int = 300, M: int = 200,
               alpha: float = 0.02, eps_px: float = 3.0, seed: int = 0, refine: bool = True):
    """Robustly fit an affinity to ``corrs``; returns ``(H_est, FitResult)``.

    Coordinates are normalised before fitting and the estimate is mapped
    back to pixels. ``eps_px`` is the inlier threshold in target pixels.
    """
    from .engine import SnnConfig, ls_refine, run
    from .ransac import RansacConfig, ransac

    ncorrs, T1, T2 = normalize_correspondences(corrs)
    ds = affine_to_dataset(ncorrs)
    eps = eps_px * T2[0, 0]
    if method == "ransac":
        result = ransac(ds, RansacConfig(K=K, eps_inlier=eps, seed=seed))
    elif method == "snn-float":
        result = run(ds, SnnConfig(K=K, M=M, alpha=alpha, eps_inlier=eps, seed=seed))
    else:
        raise ConfigError(f"affine fitting supports 'snn-float' and 'ransac', not {method!r}")
    if refine and np.count_nonzero(result.inlier_mask) >= ds.min_points:
        result = ls_refine(result, ds, eps)
    H_n = lift_affine_to_homography(affine_from_theta(result.theta_best))
    H = np.linalg.inv(T2) @ H_n @ T1
    return H / H[2, 2], result


# -- operation proxy ----------------------------------------------------------


def expected_snn_op_counts(n_points: int, n_rows: int, d: int, K: int, M: int) -> OpCounts:
    """Closed-form operation totals of a network run (dense layers, every timestep)."""
    L = K * (2 * M + 4)
    nd = n_rows * d
    per_step_syn = 2 * nd + d * nd + d * n_rows + n_rows * d + n_rows
    per_step_neu = n_points + nd + d + n_rows + 1
    per_step_spk = n_points + nd + d + n_rows
    return OpCounts(L * per_step_syn, L * per_step_neu, L * per_step_spk)


def op_proxy_report(result: FitResult) -> dict:
    """Hardware-independent work counts of a run (no energy model)."""
    rep = {"method": result.method}
    rep.update(result.op_counts.as_dict())
    return rep
