"""Reference associators the learned model is compared against:
appearance thresholding (L2 or cosine distance), top-1 re-ID ranking,
ground-plane distance thresholding and the geometric+appearance combo.

Appearance distances are normalized to [0, 1] by dividing by the maximum
over the whole evaluation set (per-frame normalization is available as a
flag), and pairs strictly below the threshold are connected. Clusters are
plain connected components; the flow/cardinality repairs are off by
default to mirror how these baselines are normally run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ConfigError, DataError
from .featurize import DescriptorStore, ground_positions, node_descriptor_matrix
from .graph import Clustering, FrameGraph, components_of
from .inference import ProbGraph, cluster_prob_graph
from .metrics import MetricsReport, evaluate_sequence

METHODS = ("l2_th", "cos_th", "top1", "geo", "geo_app")
APPEARANCE_METHODS = ("l2_th", "cos_th", "geo_app")
GEO_METHODS = ("geo", "geo_app")

SWEEP_THRESHOLDS = tuple(k / 10.0 for k in range(11))


@dataclass
class BaselineConfig:
    method: str
    appearance_threshold: float | None = None
    spatial_threshold: float | None = None
    normalize: bool = True
    per_frame_normalize: bool = False
    post_process: bool = False  # run prune/split on the thresholded graph

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown baseline method {self.method!r}")
        if self.method in APPEARANCE_METHODS:
            if self.appearance_threshold is None:
                raise ConfigError(f"method {self.method} needs appearance_threshold")
            if not 0.0 <= self.appearance_threshold <= 1.0:
                raise ConfigError(
                    f"appearance_threshold must be in [0, 1], "
                    f"got {self.appearance_threshold}"
                )
        if self.method in GEO_METHODS and self.spatial_threshold is None:
            raise ConfigError(f"method {self.method} needs spatial_threshold")


def _appearance_distances(graph, store, kind):
    """Per cross-camera edge: L2 distance or cosine distance (1 - cos)."""
    desc = node_descriptor_matrix(graph, store)
    out = np.zeros(len(graph.edges))
    for k, (i, j) in enumerate(graph.edges):
        if kind == "l2":
            out[k] = np.linalg.norm(desc[i] - desc[j])
        else:
            ni = np.linalg.norm(desc[i])
            nj = np.linalg.norm(desc[j])
            if ni < 1e-12 or nj < 1e-12:
                cos = 0.0
            else:
                cos = float(desc[i] @ desc[j] / (ni * nj))
            out[k] = 1.0 - cos
    return out


def _spatial_distances(graph, store, calibs):
    pts = ground_positions(graph, calibs)
    out = np.zeros(len(graph.edges))
    for k, (i, j) in enumerate(graph.edges):
        out[k] = np.hypot(*(pts[i] - pts[j]))
    return out


def threshold_assoc(frames, store, calibs, cfg: BaselineConfig):
    """Connect cross-camera pairs whose distances fall strictly below the
    thresholds, then read off connected components per frame."""
    if cfg.method not in ("l2_th", "cos_th", "geo", "geo_app"):
        raise ArgumentError(f"threshold_assoc does not handle {cfg.method!r}")
    frames = list(frames)
    kind = "cos" if cfg.method == "cos_th" else "l2"
    app = [None] * len(frames)
    if cfg.method in APPEARANCE_METHODS:
        app = [_appearance_distances(g, store, kind) for g in frames]
        if cfg.normalize:
            if cfg.per_frame_normalize:
                app = [_normalized(d) for d in app]
            else:
                top = max((d.max() for d in app if d.size), default=0.0)
                app = [_normalized(d, top) for d in app]
    spa = [None] * len(frames)
    if cfg.method in GEO_METHODS:
        if not calibs:
            raise ConfigError(f"method {cfg.method} needs camera calibrations")
        spa = [_spatial_distances(g, store, calibs) for g in frames]
    clusterings = []
    for graph, a_dist, s_dist in zip(frames, app, spa):
        keep = np.ones(len(graph.edges), dtype=bool)
        if a_dist is not None:
            keep &= a_dist < cfg.appearance_threshold
        if s_dist is not None:
            keep &= s_dist < cfg.spatial_threshold
        if cfg.post_process and len(calibs) >= 2 and len(graph.edges):
            # reuse the repair loops with 1 - distance as the confidence
            score = np.ones(len(graph.edges))
            if a_dist is not None:
                score = 1.0 - np.clip(a_dist, 0.0, 1.0)
            pg = ProbGraph(graph, score, keep, len(calibs))
            clustering, _ = cluster_prob_graph(pg)
        else:
            edges = [e for e, ok in zip(graph.edges, keep) if ok]
            clustering = Clustering(components_of(graph.n_nodes, edges))
        clusterings.append(clustering)
    return clusterings


def _normalized(dists, top=None):
    if dists.size == 0:
        return dists
    top = dists.max() if top is None else top
    if top <= 0.0:
        return np.zeros_like(dists)
    return dists / top


def top1_assoc(frames, store):
    """Connect every detection to its nearest other-camera detection by
    descriptor L2 distance; isolated queries stay singletons."""
    clusterings = []
    for graph in frames:
        desc = node_descriptor_matrix(graph, store)
        edges = set()
        for i in range(graph.n_nodes):
            best = None
            for j in range(graph.n_nodes):
                if graph.detections[j].camera == graph.detections[i].camera:
                    continue
                d = float(np.linalg.norm(desc[i] - desc[j]))
                if best is None or d < best[0]:
                    best = (d, j)
            if best is not None:
                j = best[1]
                edges.add((min(i, j), max(i, j)))
        clusterings.append(Clustering(components_of(graph.n_nodes, sorted(edges))))
    return clusterings


@dataclass
class SweepEntry:
    threshold: float
    report: MetricsReport


@dataclass
class SweepResult:
    best_threshold: float
    entries: list

    def best_entry(self) -> SweepEntry:
        for entry in self.entries:
            if entry.threshold == self.best_threshold:
                return entry
        raise ArgumentError("sweep result lost its best entry")


def sweep_thresholds(
    frames,
    store,
    calibs,
    method: str,
    spatial_threshold: float | None = None,
    normalize: bool = True,
) -> SweepResult:
    """Evaluate thresholds 0.0, 0.1, ..., 1.0 on labeled frames and pick
    the one with the best mean V-measure (ties go to the smaller value)."""
    if method not in APPEARANCE_METHODS:
        raise ArgumentError(
            f"threshold sweep applies to {APPEARANCE_METHODS}, got {method!r}"
        )
    frames = list(frames)
    truth = []
    scored = []
    for graph in frames:
        if graph.n_nodes == 0:
            continue
        idents = [d.identity for d in graph.detections]
        if any(i is None for i in idents):
            raise DataError("threshold sweep needs ground-truth identities")
        truth.append(Clustering.from_labels(idents))
        scored.append(graph)
    if not scored:
        raise ArgumentError("no frames with detections to sweep over")
    entries = []
    best = None
    for th in SWEEP_THRESHOLDS:
        cfg = BaselineConfig(
            method,
            appearance_threshold=th,
            spatial_threshold=spatial_threshold,
            normalize=normalize,
        )
        preds = threshold_assoc(scored, store, calibs, cfg)
        report = evaluate_sequence(truth, preds)
        entries.append(SweepEntry(th, report))
        score = report.mean["v_measure"]
        if best is None or score > best[0]:
            best = (score, th)
    return SweepResult(best[1], entries)
