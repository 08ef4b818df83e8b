"""Turn edge probabilities into identity clusters.

Probabilities from the final message passing step are binarized at 0.5,
then two constraint-repair loops thin the surviving edges: pruning caps
every node's flow (degree) at M-1 and splitting caps every connected
component at M nodes, M being the camera count. Both loops prefer to cut
bridges, falling back to the lowest-probability candidate edge, and the
final clusters are the connected components.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ConfigError
from .featurize import DescriptorStore
from .graph import (
    Clustering,
    FrameGraph,
    bridges_of,
    components_of,
    degree_counts,
)
from .mpn import ModelParams, mpn_forward


@dataclass
class ProbGraph:
    """A frame graph with per-edge probabilities and active flags."""

    graph: FrameGraph
    probs: np.ndarray  # (E,), aligned with graph.edges
    active: np.ndarray  # (E,) bool
    n_cameras: int
    removal_log: list = field(default_factory=list)  # edges removed, in order

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.active = np.asarray(self.active, dtype=bool)
        n_edges = len(self.graph.edges)
        if self.probs.shape != (n_edges,) or self.active.shape != (n_edges,):
            raise ArgumentError(
                f"probs/flags must have one entry per edge ({n_edges})"
            )
        if n_edges and (self.probs.min() < 0.0 or self.probs.max() > 1.0):
            raise ArgumentError("edge probabilities must lie in [0, 1]")
        if self.n_cameras < 2:
            raise ArgumentError(f"camera count must be >= 2, got {self.n_cameras}")

    def active_edge_indices(self) -> list:
        return [k for k in range(len(self.graph.edges)) if self.active[k]]

    def active_edges(self) -> list:
        return [self.graph.edges[k] for k in self.active_edge_indices()]


def binarize(probs, threshold: float = 0.5) -> np.ndarray:
    """Active flag per edge; a probability exactly at the threshold is kept."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
        raise ArgumentError("probabilities must lie in [0, 1]")
    return probs >= threshold


def _select_removal(pg: ProbGraph, candidates, bridges) -> int:
    """Pick the edge to cut: the sole candidate bridge, else the
    minimum-probability bridge, else the minimum-probability candidate;
    probability ties break on canonical edge order."""
    cand_bridges = [k for k in candidates if pg.graph.edges[k] in bridges]
    pool = cand_bridges if cand_bridges else candidates
    return min(pool, key=lambda k: (pg.probs[k], pg.graph.edges[k]))


def prune(pg: ProbGraph) -> ProbGraph:
    """Remove edges until every node's flow is at most M-1.

    Violating nodes are handled in ascending index order; candidates are
    the node's incident active edges. One edge is removed per iteration
    and bridges/flows are recomputed after each removal.
    """
    active = pg.active.copy()
    log = list(pg.removal_log)
    n = pg.graph.n_nodes
    limit = pg.n_cameras - 1
    while True:
        idx = [k for k in range(len(pg.graph.edges)) if active[k]]
        edges = [pg.graph.edges[k] for k in idx]
        flows = degree_counts(n, edges)
        node = next((v for v in range(n) if flows[v] > limit), None)
        if node is None:
            break
        bridges = bridges_of(n, edges)
        candidates = [
            k for k in idx if node in pg.graph.edges[k]
        ]
        pick = _select_removal(pg, candidates, bridges)
        active[pick] = False
        log.append(pg.graph.edges[pick])
    return ProbGraph(pg.graph, pg.probs, active, pg.n_cameras, log)


def split(pg: ProbGraph) -> ProbGraph:
    """Remove edges until every connected component has at most M nodes.

    Violating components are handled smallest-member-index first;
    candidates are the edges inside the component. One edge is removed per
    iteration, recomputing components and bridges each time.
    """
    active = pg.active.copy()
    log = list(pg.removal_log)
    n = pg.graph.n_nodes
    while True:
        idx = [k for k in range(len(pg.graph.edges)) if active[k]]
        edges = [pg.graph.edges[k] for k in idx]
        labels = components_of(n, edges)
        sizes = {}
        for lab in labels:
            sizes[lab] = sizes.get(lab, 0) + 1
        # component labels are already ordered by smallest member index
        target = next(
            (lab for lab in sorted(sizes) if sizes[lab] > pg.n_cameras), None
        )
        if target is None:
            break
        bridges = bridges_of(n, edges)
        candidates = [k for k in idx if labels[pg.graph.edges[k][0]] == target]
        pick = _select_removal(pg, candidates, bridges)
        active[pick] = False
        log.append(pg.graph.edges[pick])
    return ProbGraph(pg.graph, pg.probs, active, pg.n_cameras, log)


def cluster_prob_graph(
    pg: ProbGraph, do_prune: bool = True, do_split: bool = True
) -> tuple[Clustering, ProbGraph]:
    """Apply the constraint repairs and extract connected components."""
    if do_prune:
        pg = prune(pg)
    if do_split:
        pg = split(pg)
    labels = components_of(pg.graph.n_nodes, pg.active_edges())
    return Clustering(labels), pg


def associate(
    graph: FrameGraph,
    params: ModelParams,
    store: DescriptorStore,
    calibs: dict,
    threshold: float = 0.5,
    do_prune: bool = True,
    do_split: bool = True,
    normalize_descriptors: bool = False,
) -> Clustering:
    """Full inference for one frame: probabilities from the final message
    passing step, binarization, constraint repair, connected components."""
    if len(calibs) < 2:
        raise ConfigError(
            f"association needs at least 2 calibrated cameras, got {len(calibs)}"
        )
    if graph.n_nodes == 0:
        return Clustering([])
    if not graph.edges:
        return Clustering(list(range(graph.n_nodes)))
    result = mpn_forward(
        graph,
        params,
        store,
        calibs,
        keep_tapes=False,
        normalize_descriptors=normalize_descriptors,
    )
    probs = result.final_probs
    pg = ProbGraph(graph, probs, binarize(probs, threshold), len(calibs))
    clustering, _ = cluster_prob_graph(pg, do_prune, do_split)
    return clustering
