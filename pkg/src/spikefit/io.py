"""File formats: JSON instances, correspondence text files and CSV exports.

CSV schemas (headers are stable; tests pin them):

* trace:    ``window, psi, theta_0 .. theta_{d-1}, diverged_flag``; fixed-point
  runs append ``saturations, drift``.
* opcounts: ``method, synaptic_ops, neuron_updates, spikes``.
* results:  ``instance_id, method, psi, normdist_or_auc, synaptic_ops, wall_time``.
* summary:  ``cell, method, n, mean, std``.
* deltas:   ``cell, mean_snn_float, mean_ransac, delta``.

Reals are written with ``repr`` so a rerun produces identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .bench import CorrespondenceSet
from .errors import InstanceFormatError
from .model import Dataset
from .result import FitResult

OPCOUNT_COLUMNS = ("method", "synaptic_ops", "neuron_updates", "spikes")
RESULT_COLUMNS = ("instance_id", "method", "psi", "normdist_or_auc", "synaptic_ops", "wall_time")
SUMMARY_COLUMNS = ("cell", "method", "n", "mean", "std")
DELTA_COLUMNS = ("cell", "mean_snn_float", "mean_ransac", "delta")


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(target, header, rows) -> str | None:
    """Write rows to a path, or return the CSV text when ``target`` is None."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if target is None:
        return text
    Path(target).write_text(text)
    return None


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- instances ----------------------------------------------------------------


def load_instance(path):
    """Read a JSON instance.

    Returns ``(dataset, theta_gt, eps_inlier)``; the last two are None when
    the file omits them.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InstanceFormatError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise InstanceFormatError(f"{path}: top level must be an object")
    missing = [k for k in ("d", "X", "y") if k not in doc]
    if missing:
        raise InstanceFormatError(f"{path}: missing fields {missing}")
    try:
        X = np.asarray(doc["X"], dtype=np.float64)
        y = np.asarray(doc["y"], dtype=np.float64)
        d = int(doc["d"])
    except (TypeError, ValueError) as exc:
        raise InstanceFormatError(f"{path}: {exc}") from None
    if X.ndim != 2 or X.shape[1] != d:
        raise InstanceFormatError(f"{path}: X must be N x {d}, got shape {X.shape}")
    ds = Dataset(X, y, group_size=int(doc.get("group_size", 1)))
    theta_gt = doc.get("theta_gt")
    if theta_gt is not None:
        theta_gt = np.asarray(theta_gt, dtype=np.float64)
        if theta_gt.shape != (d,):
            raise InstanceFormatError(f"{path}: theta_gt must have length {d}")
    eps = doc.get("eps_inlier")
    return ds, theta_gt, None if eps is None else float(eps)


def _num(v):
    f = float(v)
    return int(f) if f.is_integer() and abs(f) < 2**53 else f


def save_instance(path, dataset: Dataset, theta_gt=None, eps_inlier=None) -> None:
    doc = {
        "d": dataset.d,
        "X": [[_num(v) for v in row] for row in dataset.X],
        "y": [_num(v) for v in dataset.y],
    }
    if dataset.group_size != 1:
        doc["group_size"] = dataset.group_size
    if theta_gt is not None:
        doc["theta_gt"] = [_num(v) for v in np.asarray(theta_gt)]
    if eps_inlier is not None:
        doc["eps_inlier"] = _num(eps_inlier)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_correspondences(path, homography_path=None, image_size=(640, 480)) -> CorrespondenceSet:
    """One ``x y x' y'`` line per match; ``#`` starts a comment."""
    try:
        pairs = np.loadtxt(path, dtype=np.float64, ndmin=2, comments="#")
    except (OSError, ValueError) as exc:
        raise InstanceFormatError(f"{path}: {exc}") from None
    if pairs.shape[1] != 4:
        raise InstanceFormatError(f"{path}: expected 4 columns, got {pairs.shape[1]}")
    H = None if homography_path is None else load_homography(homography_path)
    return CorrespondenceSet(pairs, H, tuple(image_size))


def load_homography(path) -> np.ndarray:
    try:
        vals = np.loadtxt(path, dtype=np.float64, comments="#").ravel()
    except (OSError, ValueError) as exc:
        raise InstanceFormatError(f"{path}: {exc}") from None
    if vals.size != 9:
        raise InstanceFormatError(f"{path}: a homography needs 9 values, got {vals.size}")
    return vals.reshape(3, 3)


def save_correspondences(path, corrs: CorrespondenceSet, homography_path=None) -> None:
    np.savetxt(path, corrs.pairs, fmt="%.17g")
    if homography_path is not None and corrs.H_gt is not None:
        np.savetxt(homography_path, corrs.H_gt, fmt="%.17g")


# -- run exports --------------------------------------------------------------


def trace_header(d: int, fixed: bool) -> tuple[str, ...]:
    cols = ("window", "psi", *(f"theta_{j}" for j in range(d)), "diverged_flag")
    return cols + ("saturations", "drift") if fixed else cols


def trace_rows(result: FitResult, d: int, fixed: bool):
    for e in result.trace:
        theta = np.asarray(e.theta, dtype=np.float64).reshape(-1)
        row = [e.window, e.psi, *theta[:d], bool(e.diverged)]
        if fixed:
            row += [e.saturations, e.drift]
        yield row


def write_trace_csv(target, result: FitResult, d: int):
    fixed = result.method == "snn-fixed"
    return write_csv(target, trace_header(d, fixed), trace_rows(result, d, fixed))


def write_opcount_csv(target, result: FitResult):
    c = result.op_counts
    return write_csv(target, OPCOUNT_COLUMNS,
                     [[result.method, c.synaptic_ops, c.neuron_updates, c.spikes]])
