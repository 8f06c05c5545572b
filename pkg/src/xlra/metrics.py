"""Accuracy metrics, distribution summaries, the training FLOP model and reports.

All field metrics pool every cell of every instance passed in.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np


class MetricError(ValueError):
    pass


def _pair(oracle, prediction):
    o = np.asarray(oracle, dtype=float).ravel()
    p = np.asarray(prediction, dtype=float).ravel()
    if o.shape != p.shape:
        raise MetricError(f"size mismatch: {o.size} vs {p.size}")
    if o.size == 0:
        raise MetricError("empty input")
    return o, p


def r2(oracle, prediction):
    """Coefficient of determination over pooled cells."""
    o, p = _pair(oracle, prediction)
    scale = float(np.max(np.abs(o)))
    if 0.0 < scale < 1e-100 or scale > 1e100:  # squares would under/overflow
        o, p = o / scale, p / scale
    ss_tot = float(np.sum((o - o.mean()) ** 2))
    if ss_tot == 0.0:
        raise MetricError("R^2 undefined for a constant oracle")
    with np.errstate(over="ignore"):  # a wildly wrong prediction gives -inf
        return 1.0 - float(np.sum((o - p) ** 2)) / ss_tot


def relative_l2(oracle, prediction):
    """``||o - p||_2 / ||o||_2 * 100``."""
    o, p = _pair(oracle, prediction)
    den = float(np.linalg.norm(o))
    if den == 0.0:
        raise MetricError("relative L2 undefined for a zero oracle")
    return 100.0 * float(np.linalg.norm(o - p)) / den


def squared_l2(oracle, prediction):
    """Unnormalized ``||o - p||_2^2``."""
    o, p = _pair(oracle, prediction)
    return float(np.sum((o - p) ** 2))


def relative_mae(oracle, prediction):
    o, p = _pair(oracle, prediction)
    den = float(np.mean(np.abs(o)))
    if den == 0.0:
        raise MetricError("relative MAE undefined for a zero oracle")
    return float(np.mean(np.abs(o - p))) / den


def relative_mse(oracle, prediction):
    o, p = _pair(oracle, prediction)
    den = float(np.mean(o**2))
    if den == 0.0:
        raise MetricError("relative MSE undefined for a zero oracle")
    return float(np.mean((o - p) ** 2)) / den


def mase(oracle, prediction, mean_strain):
    """``sum_x |(o - p) / (N * mean_strain)| * 100`` with N the cell count per instance.

    ``oracle`` may hold several instances along axis 0 when ``ndim > 2``; the
    result is then the average over instances.
    """
    if mean_strain == 0:
        raise MetricError("MASE needs a nonzero mean strain")
    o = np.asarray(oracle, dtype=float)
    p = np.asarray(prediction, dtype=float)
    if o.shape != p.shape:
        raise MetricError(f"shape mismatch {o.shape} vs {p.shape}")
    if o.ndim <= 2:
        o, p = o[None], p[None]
    n = int(np.prod(o.shape[1:]))
    per = np.sum(np.abs(o - p).reshape(o.shape[0], -1), axis=1) / (n * abs(mean_strain)) * 100
    return float(per.mean())


def max_relative_error(oracle, prediction):
    """``max|o - p| / max|o|`` for one instance."""
    o, p = _pair(oracle, prediction)
    return float(np.max(np.abs(o - p)) / np.max(np.abs(o)))


def histogram(fields, n_bins=128, value_range=None):
    """Pooled histogram; returns ``(edges, counts)``.

    ``value_range`` defaults to the data's [min, max].  A constant input puts
    every sample in one bin.
    """
    if n_bins < 2:
        raise MetricError("n_bins must be >= 2")
    x = np.asarray(fields, dtype=float).ravel()
    if x.size == 0:
        raise MetricError("empty input")
    lo, hi = (float(x.min()), float(x.max())) if value_range is None else value_range
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(x, bins=n_bins, range=(lo, hi))
    return edges, counts


def count_modes(counts, min_separation=3, smooth=3):
    """Local maxima of a (lightly smoothed) histogram at least ``min_separation`` bins apart."""
    c = np.convolve(np.asarray(counts, dtype=float), np.ones(smooth) / smooth, mode="same")
    peaks = [i for i in range(len(c)) if c[i] > 0
             and (i == 0 or c[i] > c[i - 1]) and (i == len(c) - 1 or c[i] >= c[i + 1])]
    kept = []
    for i in peaks:
        if not kept or i - kept[-1] >= min_separation:
            kept.append(i)
        elif c[i] > c[kept[-1]]:
            kept[-1] = i
    return kept


def parity_tail(oracle, prediction, tail_fraction=0.05):
    """Pairs whose oracle value is in the lowest or highest ``tail_fraction``.

    Returns an (n, 2) array of ``(oracle, prediction)``; both tails take
    ``ceil(tail_fraction * n)`` samples, with ``tail_fraction = 0.5`` returning
    every pair once.
    """
    if not 0.0 < tail_fraction <= 0.5:
        raise MetricError("tail_fraction must lie in (0, 0.5]")
    o, p = _pair(oracle, prediction)
    order = np.argsort(o, kind="stable")
    k = int(math.ceil(tail_fraction * o.size))
    if 2 * k >= o.size:
        idx = order
    else:
        idx = np.concatenate([order[:k], order[-k:]])
    return np.column_stack([o[idx], p[idx]])


def flops_terms(k, N):
    """Per-term breakdown of the training FLOP model with ``2k`` coefficients."""
    if k < 1 or N < 1:
        raise MetricError("k and N must be >= 1")
    a = 2 * k
    log2n = math.log2(N)
    return {
        "fft": 5 * (a + 180) * N * log2n,
        "coefficients": 72 * a * N,
        "fixed": 648 * N,
    }


def xlra_train_flops(k, N):
    """``5 (a + 180) N log2 N + 72 a N + 648 N`` with ``a = 2k``, rounded to an integer."""
    return int(round(sum(flops_terms(k, N).values())))


# --------------------------------------------------------------------------
# report

@dataclass
class EvalReport:
    target: str
    n_instances: int
    r2: float
    relative_l2: float
    squared_l2: float
    relative_mae: float
    relative_mse: float
    mase: float
    flagged_cells: int = 0
    per_instance: list = field(default_factory=list)
    histogram_edges: list = field(default_factory=list)
    histogram_oracle: list = field(default_factory=list)
    histogram_prediction: list = field(default_factory=list)
    parity: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def evaluate_fields(oracle, prediction, mean_strain, target="e11", ids=None, n_bins=128,
                    tail_fraction=0.05, flagged_cells=0):
    """Build an :class:`EvalReport` from stacked (P, *dims) oracle/prediction fields."""
    o = np.asarray(oracle, dtype=float)
    p = np.asarray(prediction, dtype=float)
    if o.shape != p.shape or o.ndim < 3:
        raise MetricError("expected matching (instances, *dims) arrays")
    ids = list(range(o.shape[0])) if ids is None else list(ids)
    per = []
    for i, oi, pi in zip(ids, o, p):
        row = {"id": i, "relative_l2": relative_l2(oi, pi), "mase": mase(oi, pi, mean_strain),
               "max_relative_error": max_relative_error(oi, pi),
               "mean_oracle": float(oi.mean()), "mean_prediction": float(pi.mean())}
        try:
            row["r2"] = r2(oi, pi)
        except MetricError:
            row["r2"] = None
        per.append(row)
    edges, co = histogram(o, n_bins)
    # predictions outside the oracle range land in the edge bins so counts are conserved
    _, cp = histogram(np.clip(p, edges[0], edges[-1]), n_bins, (float(edges[0]), float(edges[-1])))
    return EvalReport(target, int(o.shape[0]), r2(o, p), relative_l2(o, p), squared_l2(o, p),
                      relative_mae(o, p), relative_mse(o, p), mase(o, p, mean_strain),
                      int(flagged_cells), per, edges.tolist(), co.tolist(), cp.tolist(),
                      parity_tail(o, p, tail_fraction).tolist())


def histogram_csv(report: EvalReport):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_lo", "bin_hi", "count_oracle", "count_prediction"])
    e = report.histogram_edges
    for i, (a, b) in enumerate(zip(report.histogram_oracle, report.histogram_prediction)):
        w.writerow([repr(e[i]), repr(e[i + 1]), a, b])
    return buf.getvalue()


def parity_csv(report: EvalReport):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["oracle", "prediction"])
    for o, p in report.parity:
        w.writerow([repr(o), repr(p)])
    return buf.getvalue()
