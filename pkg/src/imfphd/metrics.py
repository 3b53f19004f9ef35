"""OSPA miss-distance between finite point sets."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class OspaParams:
    cutoff: float = 100.0
    order: float = 1.0

    def __post_init__(self):
        if not self.cutoff > 0:
            raise ValueError("OSPA cutoff must be positive")
        if not self.order >= 1:
            raise ValueError("OSPA order must be >= 1")


@dataclass(frozen=True)
class OspaResult:
    """``distance**p == localization**p + cardinality**p``."""

    distance: float
    localization: float
    cardinality: float


def _as_points(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def cutoff_costs(X: np.ndarray, Y: np.ndarray, params: OspaParams) -> np.ndarray:
    d = np.sqrt(np.sum((X[:, None, :] - Y[None, :, :]) ** 2, axis=-1))
    return np.minimum(d, params.cutoff) ** params.order


def ospa(X, Y, params: OspaParams = OspaParams()) -> OspaResult:
    """OSPA distance with Euclidean base metric.

    Sets are given as ``(n, d)`` arrays or sequences of vectors; 1-D input is
    treated as a set of scalars. The optimal assignment comes from
    ``scipy.optimize.linear_sum_assignment``.
    """
    X = _as_points(X)
    Y = _as_points(Y)
    nx, ny = len(X), len(Y)
    if nx == 0 and ny == 0:
        return OspaResult(0.0, 0.0, 0.0)
    if nx and ny and X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    c, p = params.cutoff, params.order
    n, m = max(nx, ny), min(nx, ny)
    if m == 0:
        return OspaResult(float(c), 0.0, float(c))
    cost = cutoff_costs(X, Y, params)
    rows, cols = linear_sum_assignment(cost)
    loc_sum = math.fsum(cost[rows, cols].tolist())
    card_sum = c**p * (n - m)
    return OspaResult(
        distance=((loc_sum + card_sum) / n) ** (1.0 / p),
        localization=(loc_sum / n) ** (1.0 / p),
        cardinality=(card_sum / n) ** (1.0 / p),
    )


def positions(states, pos_idx=(0, 2)) -> np.ndarray:
    S = np.asarray(states, dtype=float)
    if S.size == 0:
        return np.zeros((0, len(pos_idx)))
    return S.reshape(len(S), -1)[:, list(pos_idx)]


def ospa_series(
    truth_frames: Sequence, estimate_frames: Sequence, params: OspaParams = OspaParams(), pos_idx=(0, 2)
) -> list[OspaResult]:
    """Per-frame OSPA on the position sub-vectors of full states."""
    if len(truth_frames) != len(estimate_frames):
        raise ValueError(
            f"frame count mismatch: {len(truth_frames)} truth vs {len(estimate_frames)} estimate"
        )
    return [
        ospa(positions(t, pos_idx), positions(e, pos_idx), params)
        for t, e in zip(truth_frames, estimate_frames)
    ]


def series_to_csv(series: Sequence[OspaResult], start_step: int = 1) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "ospa", "loc", "card"])
    for k, r in enumerate(series, start=start_step):
        w.writerow([k, repr(r.distance), repr(r.localization), repr(r.cardinality)])
    return buf.getvalue()
