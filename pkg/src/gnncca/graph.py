"""Per-frame graph data model plus the classic graph algorithms the
pipeline needs: degree (flow), bridge finding and connected components.

Edges are stored canonically as (min index, max index) pairs in
lexicographic order, so enumerating a graph twice always yields the same
sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ArgumentError


@dataclass(frozen=True)
class Detection:
    """One bounding box seen by one camera at one frame.

    bbox is (x, y, w, h) in pixels with (x, y) the upper-left corner.
    identity is the ground-truth id, or None at inference time.
    """

    frame: int
    camera: int
    det_id: int
    bbox: tuple
    descriptor_index: int
    identity: int | None = None

    def __post_init__(self):
        x, y, w, h = self.bbox
        if w <= 0 or h <= 0:
            raise ArgumentError(
                f"detection frame={self.frame} camera={self.camera} "
                f"det_id={self.det_id}: box sides must be positive, got w={w} h={h}"
            )
        object.__setattr__(self, "bbox", (float(x), float(y), float(w), float(h)))


@dataclass
class FrameGraph:
    """Detections of one frame plus the cross-camera edge set."""

    detections: list
    edges: list  # canonical (i, j) with i < j, lexicographic order

    @property
    def n_nodes(self) -> int:
        return len(self.detections)

    def node_flow(self, node: int) -> int:
        """Degree of a node in the current edge set."""
        if not 0 <= node < self.n_nodes:
            raise ArgumentError(f"node {node} outside [0, {self.n_nodes})")
        return sum(1 for i, j in self.edges if i == node or j == node)


def build_frame_graph(detections) -> FrameGraph:
    """Connect every pair of detections from different cameras.

    Detections from the same camera are never joined; node order follows
    the input order. An empty detection list yields an empty graph.
    """
    detections = list(detections)
    frames = {d.frame for d in detections}
    if len(frames) > 1:
        raise ArgumentError(
            f"detections span multiple frames: {sorted(frames)}"
        )
    edges = []
    n = len(detections)
    for i in range(n):
        for j in range(i + 1, n):
            if detections[i].camera != detections[j].camera:
                edges.append((i, j))
    return FrameGraph(detections, edges)


@dataclass
class Clustering:
    """Node index -> cluster id, ids dense in 0..K-1."""

    assignment: list

    def __post_init__(self):
        ids = set(self.assignment)
        k = len(ids)
        if ids and ids != set(range(k)):
            raise ArgumentError(
                f"cluster ids must be exactly 0..{k - 1}, got {sorted(ids)}"
            )

    @property
    def n_clusters(self) -> int:
        return len(set(self.assignment))

    @classmethod
    def from_labels(cls, labels) -> "Clustering":
        """Relabel arbitrary hashable labels to dense first-seen ids."""
        seen = {}
        assignment = []
        for lab in labels:
            if lab not in seen:
                seen[lab] = len(seen)
            assignment.append(seen[lab])
        return cls(assignment)


def degree_counts(n_nodes: int, edges) -> list:
    deg = [0] * n_nodes
    for i, j in edges:
        deg[i] += 1
        deg[j] += 1
    return deg


def bridges_of(n_nodes: int, edges) -> set:
    """All bridges of the given edge set, via iterative DFS low-links.

    A bridge is an edge whose removal increases the number of connected
    components (equivalently, an edge in no cycle). O(V + E).
    """
    edges = list(edges)
    adj = [[] for _ in range(n_nodes)]
    for idx, (u, v) in enumerate(edges):
        adj[u].append((v, idx))
        adj[v].append((u, idx))
    disc = [-1] * n_nodes
    low = [0] * n_nodes
    timer = 0
    bridges = set()
    for root in range(n_nodes):
        if disc[root] >= 0:
            continue
        disc[root] = low[root] = timer
        timer += 1
        stack = [(root, -1, 0)]
        while stack:
            node, parent_edge, ptr = stack.pop()
            if ptr < len(adj[node]):
                stack.append((node, parent_edge, ptr + 1))
                nb, eidx = adj[node][ptr]
                if eidx == parent_edge:
                    continue
                if disc[nb] < 0:
                    disc[nb] = low[nb] = timer
                    timer += 1
                    stack.append((nb, eidx, 0))
                else:
                    low[node] = min(low[node], disc[nb])
            elif parent_edge >= 0:
                u, v = edges[parent_edge]
                parent = u if v == node else v
                low[parent] = min(low[parent], low[node])
                if low[node] > disc[parent]:
                    bridges.add(edges[parent_edge])
    return bridges


def components_of(n_nodes: int, edges) -> list:
    """Component label per node; labels ordered by smallest member index."""
    adj = [[] for _ in range(n_nodes)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    labels = [-1] * n_nodes
    current = 0
    for root in range(n_nodes):
        if labels[root] >= 0:
            continue
        stack = [root]
        labels[root] = current
        while stack:
            node = stack.pop()
            for nb in adj[node]:
                if labels[nb] < 0:
                    labels[nb] = current
                    stack.append(nb)
        current += 1
    return labels


def find_bridges(graph: FrameGraph) -> set:
    return bridges_of(graph.n_nodes, graph.edges)


def connected_components(graph: FrameGraph) -> Clustering:
    return Clustering(components_of(graph.n_nodes, graph.edges))
