"""Initial node and edge embeddings.

Nodes start from the appearance descriptor pushed through the node
encoder. Edges start from a 4-vector of pairwise deltas: Euclidean
distance and cosine similarity between descriptors, then Manhattan and
Euclidean distances between ground-plane positions of the boxes' base
midpoints, pushed through the edge encoder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ProjectionError, ShapeError
from .graph import FrameGraph
from .numeric import MlpParams, mlp_forward

ZERO_NORM_EPS = 1e-12


class CameraCalibration:
    """3x3 homography mapping homogeneous image points to the ground plane."""

    def __init__(self, camera: int, H):
        H = np.asarray(H, dtype=np.float64)
        if H.shape != (3, 3):
            raise ShapeError(f"homography must be 3x3, got {H.shape}")
        if not np.all(np.isfinite(H)):
            raise ConfigError(f"camera {camera}: homography has non-finite entries")
        if abs(np.linalg.det(H)) <= 1e-12:
            raise ConfigError(f"camera {camera}: homography is singular")
        self.camera = int(camera)
        self.H = H


@dataclass
class DescriptorStore:
    """Appearance descriptors, one row per detection index."""

    rows: np.ndarray  # (count, dim) float64 in memory

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2:
            raise ShapeError(f"descriptor store must be 2-D, got {self.rows.ndim}-D")
        if not np.all(np.isfinite(self.rows)):
            raise DataError("descriptor store contains non-finite values")

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def count(self) -> int:
        return self.rows.shape[0]


def base_midpoint(bbox) -> tuple:
    x, y, w, _h = bbox
    return (x + w / 2.0, y)


def project_to_ground(calib: CameraCalibration, bbox) -> tuple:
    """Project the box's base midpoint through the camera homography."""
    u, v = base_midpoint(bbox)
    p = calib.H @ np.array([u, v, 1.0])
    if abs(p[2]) < 1e-12:
        raise ProjectionError(
            f"camera {calib.camera}: point ({u}, {v}) maps to infinity"
        )
    return (p[0] / p[2], p[1] / p[2])


def appearance_delta(desc_i, desc_j) -> np.ndarray:
    """[Euclidean distance, cosine similarity] between two descriptors."""
    a = np.asarray(desc_i, dtype=np.float64)
    b = np.asarray(desc_j, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"descriptor dims differ: {a.shape} vs {b.shape}")
    dist = float(np.linalg.norm(a - b))
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < ZERO_NORM_EPS or nb < ZERO_NORM_EPS:
        cos = 0.0
    else:
        cos = float(np.dot(a, b) / (na * nb))
    return np.array([dist, cos])


def spatial_delta(p_i, p_j) -> np.ndarray:
    """[Manhattan, Euclidean] distance between two ground-plane points."""
    dx = p_i[0] - p_j[0]
    dy = p_i[1] - p_j[1]
    return np.array([abs(dx) + abs(dy), float(np.hypot(dx, dy))])


def node_descriptor_matrix(
    graph: FrameGraph, store: DescriptorStore, normalize: bool = False
) -> np.ndarray:
    """Gather descriptor rows for every node, optionally unit-normalized."""
    for det in graph.detections:
        if not 0 <= det.descriptor_index < store.count:
            raise DataError(
                f"detection frame={det.frame} camera={det.camera} "
                f"det_id={det.det_id}: descriptor row {det.descriptor_index} "
                f"outside store of {store.count} rows"
            )
    idx = np.array([d.descriptor_index for d in graph.detections], dtype=np.int64)
    mat = store.rows[idx].copy()
    if normalize and mat.size:
        norms = np.linalg.norm(mat, axis=1, keepdims=True)
        np.divide(mat, norms, out=mat, where=norms > ZERO_NORM_EPS)
    return mat


def ground_positions(graph: FrameGraph, calibs: dict) -> np.ndarray:
    """Per-node (X, Y) ground-plane coordinates of the base midpoints."""
    pts = np.zeros((graph.n_nodes, 2))
    for i, det in enumerate(graph.detections):
        calib = calibs.get(det.camera)
        if calib is None:
            raise ConfigError(f"no calibration for camera {det.camera}")
        pts[i] = project_to_ground(calib, det.bbox)
    return pts


def edge_feature_matrix(
    graph: FrameGraph,
    store: DescriptorStore,
    calibs: dict,
    normalize_descriptors: bool = False,
) -> np.ndarray:
    """Per-edge [appearance_delta, spatial_delta] rows, shape (E, 4).

    Both deltas are symmetric in their arguments, so the canonical
    (smaller index first) endpoint order does not matter mathematically;
    it is still applied for bit-level determinism.
    """
    desc = node_descriptor_matrix(graph, store, normalize_descriptors)
    pts = ground_positions(graph, calibs)
    n_edges = len(graph.edges)
    feats = np.zeros((n_edges, 4))
    if n_edges == 0:
        return feats
    ei = np.array([e[0] for e in graph.edges], dtype=np.int64)
    ej = np.array([e[1] for e in graph.edges], dtype=np.int64)
    diff = desc[ei] - desc[ej]
    feats[:, 0] = np.linalg.norm(diff, axis=1)
    norms = np.linalg.norm(desc, axis=1)
    dots = np.einsum("ij,ij->i", desc[ei], desc[ej])
    denom = norms[ei] * norms[ej]
    ok = (norms[ei] > ZERO_NORM_EPS) & (norms[ej] > ZERO_NORM_EPS)
    feats[:, 1] = np.where(ok, dots / np.where(ok, denom, 1.0), 0.0)
    dxy = pts[ei] - pts[ej]
    feats[:, 2] = np.abs(dxy).sum(axis=1)
    feats[:, 3] = np.hypot(dxy[:, 0], dxy[:, 1])
    return feats


def init_node_embeddings(graph: FrameGraph, store: DescriptorStore, e_v: MlpParams):
    """Step-0 node states: the node encoder applied to each descriptor."""
    if e_v.spec.input_dim != store.dim:
        raise ShapeError(
            f"node encoder expects dim {e_v.spec.input_dim}, store has {store.dim}"
        )
    desc = node_descriptor_matrix(graph, store)
    return mlp_forward(e_v, desc)


def init_edge_embeddings(
    graph: FrameGraph, store: DescriptorStore, calibs: dict, e_e: MlpParams
):
    """Step-0 edge states: the edge encoder applied to the delta features."""
    feats = edge_feature_matrix(graph, store, calibs)
    if e_e.spec.input_dim != feats.shape[1]:
        raise ShapeError(
            f"edge encoder expects dim {e_e.spec.input_dim}, features have "
            f"{feats.shape[1]}"
        )
    states, tape = mlp_forward(e_e, feats)
    return states, tape, feats
