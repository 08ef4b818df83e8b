"""Supervised clustering scores: homogeneity, completeness, V-measure,
adjusted Rand index and adjusted mutual information.

All entropies and mutual informations use natural logarithms. The AMI
chance correction uses the exact hypergeometric expectation of the mutual
information under fixed marginals, normalized by the arithmetic mean of
the two entropies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .graph import Clustering

METRIC_NAMES = ("ari", "ami", "homogeneity", "completeness", "v_measure")


def _as_labels(clustering) -> np.ndarray:
    if isinstance(clustering, Clustering):
        return np.asarray(clustering.assignment, dtype=np.int64)
    return np.asarray(list(clustering), dtype=np.int64)


def contingency_table(truth, pred):
    """Counts n[i, j] of nodes in true class i and predicted cluster j."""
    t = _as_labels(truth)
    p = _as_labels(pred)
    if t.shape != p.shape:
        raise ArgumentError(
            f"clusterings cover different node sets: {t.size} vs {p.size} nodes"
        )
    if t.size == 0:
        raise ArgumentError("cannot score an empty clustering")
    _, ti = np.unique(t, return_inverse=True)
    _, pi = np.unique(p, return_inverse=True)
    table = np.zeros((ti.max() + 1, pi.max() + 1), dtype=np.int64)
    np.add.at(table, (ti, pi), 1)
    return table


def _entropy(counts: np.ndarray, n: int) -> float:
    nz = counts[counts > 0].astype(np.float64)
    if nz.size == 0:
        return 0.0
    frac = nz / n
    return float(-(frac * np.log(frac)).sum())


def homogeneity_completeness_v(truth, pred) -> tuple:
    """(H, C, V): H=1 when the class entropy is 0, C symmetric, V the
    harmonic mean of the two (0 when both are 0)."""
    table = contingency_table(truth, pred)
    n = int(table.sum())
    a = table.sum(axis=1)  # class sizes
    b = table.sum(axis=0)  # cluster sizes
    h_class = _entropy(a, n)
    h_cluster = _entropy(b, n)
    nz = table > 0
    cells = table[nz].astype(np.float64)
    col_of = np.nonzero(nz)[1]
    row_of = np.nonzero(nz)[0]
    h_class_given_cluster = float(
        -((cells / n) * np.log(cells / b[col_of])).sum()
    )
    h_cluster_given_class = float(
        -((cells / n) * np.log(cells / a[row_of])).sum()
    )
    homogeneity = 1.0 if h_class == 0.0 else 1.0 - h_class_given_cluster / h_class
    completeness = 1.0 if h_cluster == 0.0 else 1.0 - h_cluster_given_class / h_cluster
    if homogeneity + completeness == 0.0:
        v_measure = 0.0
    else:
        v_measure = (
            2.0 * homogeneity * completeness / (homogeneity + completeness)
        )
    return homogeneity, completeness, v_measure


def _comb2(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1.0) / 2.0


def ari(truth, pred) -> float:
    """Adjusted Rand index (Hubert-Arabie): chance-corrected pair counting.

    Returns 1 when the correction denominator vanishes (both partitions
    trivial or identical in pair structure).
    """
    table = contingency_table(truth, pred)
    n = int(table.sum())
    sum_cells = float(_comb2(table).sum())
    sum_rows = float(_comb2(table.sum(axis=1)).sum())
    sum_cols = float(_comb2(table.sum(axis=0)).sum())
    total_pairs = float(_comb2(n))
    if total_pairs == 0.0:
        return 1.0
    expected = sum_rows * sum_cols / total_pairs
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0
    return (sum_cells - expected) / (max_index - expected)


def mutual_information(truth, pred) -> float:
    """MI in nats between the two label assignments."""
    table = contingency_table(truth, pred)
    n = int(table.sum())
    a = table.sum(axis=1)
    b = table.sum(axis=0)
    nz = table > 0
    cells = table[nz].astype(np.float64)
    rows = np.nonzero(nz)[0]
    cols = np.nonzero(nz)[1]
    return float(
        ((cells / n) * (np.log(cells * n) - np.log(a[rows] * b[cols]))).sum()
    )


def _log_factorials(n: int) -> np.ndarray:
    lf = np.zeros(n + 1)
    if n >= 1:
        lf[1:] = np.cumsum(np.log(np.arange(1, n + 1, dtype=np.float64)))
    return lf


def expected_mutual_information(row_sums, col_sums, n: int) -> float:
    """Exact E[MI] over random contingency tables with fixed marginals
    (hypergeometric model), summing every feasible cell count."""
    lf = _log_factorials(n)
    emi = 0.0
    for ai in row_sums:
        ai = int(ai)
        for bj in col_sums:
            bj = int(bj)
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            if hi < lo:
                continue
            nij = np.arange(lo, hi + 1, dtype=np.int64)
            log_prob = (
                lf[ai]
                + lf[bj]
                + lf[n - ai]
                + lf[n - bj]
                - lf[n]
                - lf[nij]
                - lf[ai - nij]
                - lf[bj - nij]
                - lf[n - ai - bj + nij]
            )
            terms = (nij / n) * (
                np.log(nij.astype(np.float64) * n) - np.log(float(ai) * bj)
            )
            emi += float((terms * np.exp(log_prob)).sum())
    return emi


def _same_partition(truth, pred) -> bool:
    t = Clustering.from_labels(_as_labels(truth).tolist()).assignment
    p = Clustering.from_labels(_as_labels(pred).tolist()).assignment
    return t == p


def ami(truth, pred) -> float:
    """Adjusted mutual information, arithmetic-mean normalization.

    Identical partitions (up to relabeling) score 1; a non-positive
    normalization denominator scores 0.
    """
    table = contingency_table(truth, pred)
    if _same_partition(truth, pred):
        return 1.0
    n = int(table.sum())
    a = table.sum(axis=1)
    b = table.sum(axis=0)
    mi = mutual_information(truth, pred)
    emi = expected_mutual_information(a, b, n)
    h_true = _entropy(a, n)
    h_pred = _entropy(b, n)
    denom = 0.5 * (h_true + h_pred) - emi
    if denom <= 0.0:
        return 0.0
    return (mi - emi) / denom


def evaluate_frame(truth, pred) -> dict:
    """All five scores for one frame."""
    h, c, v = homogeneity_completeness_v(truth, pred)
    return {
        "ari": ari(truth, pred),
        "ami": ami(truth, pred),
        "homogeneity": h,
        "completeness": c,
        "v_measure": v,
    }


@dataclass
class FrameScores:
    frame: int
    n_nodes: int
    scores: dict


@dataclass
class MetricsReport:
    """Per-frame scores plus two aggregates: the unweighted mean over
    frames and the pooled scores over frame-offset concatenated labels."""

    frames: list
    mean: dict
    pooled: dict


def evaluate_sequence(truth_frames, pred_frames, frame_ids=None) -> MetricsReport:
    """Score a sequence of per-frame clusterings.

    Frames empty on both sides are skipped; a sequence with no scorable
    frame is an error, as is any frame whose node sets disagree.
    """
    truth_frames = list(truth_frames)
    pred_frames = list(pred_frames)
    if len(truth_frames) != len(pred_frames):
        raise ArgumentError(
            f"sequence lengths differ: {len(truth_frames)} vs {len(pred_frames)}"
        )
    if frame_ids is None:
        frame_ids = list(range(len(truth_frames)))
    per_frame = []
    pooled_truth = []
    pooled_pred = []
    offset_t = 0
    offset_p = 0
    for fid, truth, pred in zip(frame_ids, truth_frames, pred_frames):
        t = _as_labels(truth)
        p = _as_labels(pred)
        if t.size != p.size:
            raise ArgumentError(
                f"frame {fid}: clusterings cover {t.size} vs {p.size} nodes"
            )
        if t.size == 0:
            continue
        per_frame.append(FrameScores(fid, int(t.size), evaluate_frame(t, p)))
        pooled_truth.extend((t + offset_t).tolist())
        pooled_pred.extend((p + offset_p).tolist())
        offset_t += int(t.max()) + 1
        offset_p += int(p.max()) + 1
    if not per_frame:
        raise ArgumentError("sequence contains no frame with nodes to score")
    mean = {
        name: float(np.mean([fs.scores[name] for fs in per_frame]))
        for name in METRIC_NAMES
    }
    pooled = evaluate_frame(pooled_truth, pooled_pred)
    return MetricsReport(per_frame, mean, pooled)


def format_report(report: MetricsReport, per_frame: bool = False) -> str:
    """Human-readable table followed by machine-readable name=value lines."""
    lines = []
    header = f"{'frame':>8} {'nodes':>6} " + " ".join(
        f"{name:>13}" for name in METRIC_NAMES
    )
    lines.append(header)
    lines.append("-" * len(header))
    if per_frame:
        for fs in report.frames:
            lines.append(
                f"{fs.frame:>8} {fs.n_nodes:>6} "
                + " ".join(f"{fs.scores[name]:>13.6f}" for name in METRIC_NAMES)
            )
    lines.append(
        f"{'mean':>8} {sum(fs.n_nodes for fs in report.frames):>6} "
        + " ".join(f"{report.mean[name]:>13.6f}" for name in METRIC_NAMES)
    )
    lines.append(
        f"{'pooled':>8} {sum(fs.n_nodes for fs in report.frames):>6} "
        + " ".join(f"{report.pooled[name]:>13.6f}" for name in METRIC_NAMES)
    )
    lines.append("")
    lines.append(f"frames={len(report.frames)}")
    for name in METRIC_NAMES:
        lines.append(f"mean.{name}={report.mean[name]!r}")
    for name in METRIC_NAMES:
        lines.append(f"pooled.{name}={report.pooled[name]!r}")
    return "\n".join(lines) + "\n"
