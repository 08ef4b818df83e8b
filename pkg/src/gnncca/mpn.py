"""Message passing over a frame graph, per-step edge classification,
the training loss and the training driver.

One message passing step updates every edge from the concatenated states
of its endpoints and itself, then every node from the sum of messages
over its incident edges, and finally classifies every edge state. The
whole stack (two encoders, two update networks, classifier) is trained
end to end with manually derived gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DataError, ShapeError, TrainingError
from .featurize import DescriptorStore, edge_feature_matrix, node_descriptor_matrix
from .graph import FrameGraph
from .numeric import (
    BCE_EPS,
    MlpGrads,
    MlpParams,
    MomentumState,
    TrainSchedule,
    bce_loss,
    init_mlp,
    lr_at_epoch,
    mlp_backward,
    mlp_forward,
    mlp_spec,
    sgd_step,
)

NODE_STATE_DIM = 32
EDGE_STATE_DIM = 6
EDGE_FEATURE_DIM = 4
MESSAGE_SOURCES = ("self", "neighbor")
NODE_AGGREGATIONS = ("sum", "mean")

MLP_NAMES = ("E_v", "E_e", "U_v", "U_e", "C")


def model_specs(descriptor_dim: int) -> dict:
    """Layer specs of the five networks for a given descriptor size."""
    if descriptor_dim < 1:
        raise ArgumentError(f"descriptor_dim must be >= 1, got {descriptor_dim}")
    return {
        "E_v": mlp_spec((descriptor_dim, 128, NODE_STATE_DIM), ("relu", "relu")),
        "E_e": mlp_spec((EDGE_FEATURE_DIM, EDGE_STATE_DIM), ("relu",)),
        "U_v": mlp_spec((NODE_STATE_DIM + EDGE_STATE_DIM, NODE_STATE_DIM), ("relu",)),
        "U_e": mlp_spec(
            (2 * NODE_STATE_DIM + EDGE_STATE_DIM, EDGE_STATE_DIM), ("relu",)
        ),
        "C": mlp_spec((EDGE_STATE_DIM, 4, 1), ("relu", "sigmoid")),
    }


@dataclass
class ModelParams:
    """All learnable parameters plus the message passing configuration.

    feature_center/feature_scale standardize the edge-feature 4-vector
    before the edge encoder; prepending this affine map only
    reparameterizes the encoder's first layer (same function class), but
    it conditions the optimization, since the raw distance features are
    all-positive with means well above their spread.
    """

    E_v: MlpParams
    E_e: MlpParams
    U_v: MlpParams
    U_e: MlpParams
    C: MlpParams
    steps: int = 4
    message_source: str = "self"
    node_aggregation: str = "sum"
    edge_symmetrize: bool = True
    feature_center: np.ndarray | None = None
    feature_scale: np.ndarray | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise ArgumentError(f"steps must be >= 1, got {self.steps}")
        if self.message_source not in MESSAGE_SOURCES:
            raise ArgumentError(
                f"message_source must be one of {MESSAGE_SOURCES}, "
                f"got {self.message_source!r}"
            )
        if self.node_aggregation not in NODE_AGGREGATIONS:
            raise ArgumentError(
                f"node_aggregation must be one of {NODE_AGGREGATIONS}, "
                f"got {self.node_aggregation!r}"
            )
        if self.feature_center is None:
            self.feature_center = np.zeros(EDGE_FEATURE_DIM)
        if self.feature_scale is None:
            self.feature_scale = np.ones(EDGE_FEATURE_DIM)
        self.feature_center = np.asarray(self.feature_center, dtype=np.float64)
        self.feature_scale = np.asarray(self.feature_scale, dtype=np.float64)
        if (
            self.feature_center.shape != (EDGE_FEATURE_DIM,)
            or self.feature_scale.shape != (EDGE_FEATURE_DIM,)
        ):
            raise ShapeError("feature stats must have one entry per edge feature")
        if not np.all(np.isfinite(self.feature_center)) or not np.all(
            np.isfinite(self.feature_scale)
        ):
            raise ArgumentError("feature stats must be finite")
        if np.any(self.feature_scale <= 0.0):
            raise ArgumentError("feature scales must be positive")
        expected = model_specs(self.descriptor_dim)
        for name in MLP_NAMES:
            if getattr(self, name).spec != expected[name]:
                raise ShapeError(f"{name} spec does not match the model layout")

    @property
    def descriptor_dim(self) -> int:
        return self.E_v.spec.input_dim

    def mlps(self) -> dict:
        return {name: getattr(self, name) for name in MLP_NAMES}

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.E_v.copy(),
            self.E_e.copy(),
            self.U_v.copy(),
            self.U_e.copy(),
            self.C.copy(),
            self.steps,
            self.message_source,
            self.node_aggregation,
            self.edge_symmetrize,
            self.feature_center.copy(),
            self.feature_scale.copy(),
        )


def init_model_params(
    descriptor_dim: int,
    seed: int,
    steps: int = 4,
    message_source: str = "self",
    node_aggregation: str = "sum",
    edge_symmetrize: bool = True,
    rng: np.random.Generator | None = None,
) -> ModelParams:
    """Seeded init of all five networks, drawn in the order E_v, E_e,
    U_v, U_e, C from one generator."""
    if rng is None:
        rng = np.random.default_rng(seed)
    specs = model_specs(descriptor_dim)
    return ModelParams(
        *(init_mlp(specs[name], rng) for name in MLP_NAMES),
        steps=steps,
        message_source=message_source,
        node_aggregation=node_aggregation,
        edge_symmetrize=edge_symmetrize,
    )


@dataclass
class ModelGrads:
    """Per-network gradients shaped like a ModelParams."""

    grads: dict  # name -> MlpGrads

    @classmethod
    def zeros(cls, params: ModelParams) -> "ModelGrads":
        return cls({n: MlpGrads.zeros(getattr(params, n).spec) for n in MLP_NAMES})

    def add_scaled(self, other: "ModelGrads", scale: float) -> None:
        for name in MLP_NAMES:
            self.grads[name].add_scaled(other.grads[name], scale)


def edge_update(h_vi, h_vj, h_e, u_e: MlpParams, symmetrize: bool = False) -> np.ndarray:
    """New edge state from [state of smaller-index node, other node, edge].

    With symmetrize the network is averaged over both endpoint orders,
    which removes the arbitrary dependence on index order.
    """
    h_vi = np.asarray(h_vi, dtype=np.float64)
    h_vj = np.asarray(h_vj, dtype=np.float64)
    h_e = np.asarray(h_e, dtype=np.float64)
    if h_vi.shape != (NODE_STATE_DIM,) or h_vj.shape != (NODE_STATE_DIM,):
        raise ShapeError(
            f"node states must have dim {NODE_STATE_DIM}, "
            f"got {h_vi.shape} and {h_vj.shape}"
        )
    if h_e.shape != (EDGE_STATE_DIM,):
        raise ShapeError(f"edge state must have dim {EDGE_STATE_DIM}, got {h_e.shape}")
    out, _ = mlp_forward(u_e, np.concatenate([h_vi, h_vj, h_e]))
    if symmetrize:
        rev, _ = mlp_forward(u_e, np.concatenate([h_vj, h_vi, h_e]))
        out = 0.5 * (out + rev)
    return out


def node_update(
    graph: FrameGraph,
    node: int,
    prev_node_states,
    new_edge_states,
    u_v: MlpParams,
    message_source: str = "self",
    node_aggregation: str = "sum",
) -> np.ndarray:
    """Sum of per-edge messages into one node (empty sum for isolated nodes).

    Each incident edge contributes U_v([source state, edge state]) where the
    source state is the receiving node's own previous state ("self") or the
    neighbor's ("neighbor"); neighbors are visited in ascending index order.
    The "mean" aggregation divides the sum by the node's degree, which keeps
    state magnitudes degree-independent across steps.
    """
    if message_source not in MESSAGE_SOURCES:
        raise ArgumentError(f"unknown message_source {message_source!r}")
    if node_aggregation not in NODE_AGGREGATIONS:
        raise ArgumentError(f"unknown node_aggregation {node_aggregation!r}")
    prev_node_states = np.asarray(prev_node_states, dtype=np.float64)
    new_edge_states = np.asarray(new_edge_states, dtype=np.float64)
    incident = []
    for eidx, (i, j) in enumerate(graph.edges):
        if i == node:
            incident.append((j, eidx))
        elif j == node:
            incident.append((i, eidx))
    incident.sort()
    total = np.zeros(NODE_STATE_DIM)
    for neighbor, eidx in incident:
        source = node if message_source == "self" else neighbor
        msg_in = np.concatenate([prev_node_states[source], new_edge_states[eidx]])
        out, _ = mlp_forward(u_v, msg_in)
        total += out
    if node_aggregation == "mean" and incident:
        total /= len(incident)
    return total


@dataclass
class ScatterPlan:
    """Segment-sum plan: rows (optionally permuted into sorted order) are
    reduced over contiguous runs and added to the target rows. Plans are
    static per graph, so aggregation becomes one reduceat per use instead
    of element-wise scatter."""

    perm: np.ndarray | None  # ordering that sorts the index, or None
    starts: np.ndarray  # first row of each run in sorted order
    targets: np.ndarray  # output row per run

    @classmethod
    def build(cls, index: np.ndarray) -> "ScatterPlan":
        if index.size == 0:
            empty = np.zeros(0, dtype=np.int64)
            return cls(None, empty, empty)
        diffs = np.diff(index)
        if np.all(diffs >= 0):
            perm = None
            ordered = index
        else:
            perm = np.argsort(index, kind="stable")
            ordered = index[perm]
        mask = np.ones(ordered.size, dtype=bool)
        mask[1:] = ordered[1:] != ordered[:-1]
        starts = np.nonzero(mask)[0]
        return cls(perm, starts, ordered[starts])

    def add_to(self, out: np.ndarray, rows: np.ndarray) -> None:
        if self.starts.size == 0:
            return
        if self.perm is not None:
            rows = rows[self.perm]
        out[self.targets] += np.add.reduceat(rows, self.starts, axis=0)


@dataclass
class PreparedGraph:
    """Precomputed per-frame arrays the forward/backward passes run on.

    Message rows are ordered by (receiver, neighbor) ascending so node
    aggregation sums incident messages in ascending neighbor order.
    """

    n_nodes: int
    edge_i: np.ndarray  # (E,) smaller endpoint
    edge_j: np.ndarray  # (E,) larger endpoint
    descriptors: np.ndarray  # (n, D)
    features: np.ndarray  # (E, 4)
    msg_receiver: np.ndarray  # (2E,)
    msg_source: np.ndarray  # (2E,) node whose state feeds the message
    msg_edge: np.ndarray  # (2E,)
    inv_msg_count: np.ndarray  # (n,) 1/degree, 1 for isolated nodes
    message_source: str = "self"
    labels: np.ndarray | None = None  # (E,) 0/1
    plans: dict = field(default_factory=dict, repr=False)

    @property
    def n_edges(self) -> int:
        return self.edge_i.shape[0]

    def plan(self, name: str) -> ScatterPlan:
        if name not in self.plans:
            index = {
                "receiver": self.msg_receiver,
                "source": self.msg_source,
                "msg_edge": self.msg_edge,
                "edge_i": self.edge_i,
                "edge_j": self.edge_j,
            }[name]
            self.plans[name] = ScatterPlan.build(index)
        return self.plans[name]


def edge_labels(graph: FrameGraph) -> np.ndarray:
    """Ground-truth 0/1 per edge: 1 iff both detections share an identity."""
    labels = np.zeros(len(graph.edges))
    for k, (i, j) in enumerate(graph.edges):
        di, dj = graph.detections[i], graph.detections[j]
        if di.identity is None or dj.identity is None:
            raise DataError(
                f"frame {di.frame}: edge ({i},{j}) lacks ground-truth identities"
            )
        labels[k] = 1.0 if di.identity == dj.identity else 0.0
    return labels


def prepare_graph(
    graph: FrameGraph,
    store: DescriptorStore,
    calibs: dict,
    message_source: str = "self",
    normalize_descriptors: bool = False,
    with_labels: bool = False,
) -> PreparedGraph:
    if graph.n_nodes == 0:
        raise ArgumentError("cannot prepare an empty graph")
    if message_source not in MESSAGE_SOURCES:
        raise ArgumentError(f"unknown message_source {message_source!r}")
    n_edges = len(graph.edges)
    edge_i = np.array([e[0] for e in graph.edges], dtype=np.int64)
    edge_j = np.array([e[1] for e in graph.edges], dtype=np.int64)
    rows = []  # (receiver, neighbor, edge)
    for eidx, (i, j) in enumerate(graph.edges):
        rows.append((i, j, eidx))
        rows.append((j, i, eidx))
    rows.sort()
    receiver = np.array([r[0] for r in rows], dtype=np.int64)
    neighbor = np.array([r[1] for r in rows], dtype=np.int64)
    source = receiver if message_source == "self" else neighbor
    counts = np.bincount(receiver, minlength=graph.n_nodes)
    return PreparedGraph(
        n_nodes=graph.n_nodes,
        edge_i=edge_i,
        edge_j=edge_j,
        descriptors=node_descriptor_matrix(graph, store, normalize_descriptors),
        features=edge_feature_matrix(graph, store, calibs, normalize_descriptors),
        msg_receiver=receiver,
        msg_source=source.copy(),
        msg_edge=np.array([r[2] for r in rows], dtype=np.int64),
        inv_msg_count=1.0 / np.maximum(counts, 1),
        message_source=message_source,
        labels=edge_labels(graph) if with_labels else None,
    )


def merge_prepared(graphs) -> PreparedGraph:
    """Disjoint union of prepared graphs: one forward/backward pass covers
    a whole batch. Gradients equal the sum of the per-graph passes since
    the union has no cross-graph edges."""
    graphs = list(graphs)
    if not graphs:
        raise ArgumentError("cannot merge an empty batch")
    if len(graphs) == 1:
        return graphs[0]
    source = graphs[0].message_source
    if any(g.message_source != source for g in graphs):
        raise ArgumentError("cannot merge graphs with mixed message sources")
    node_offsets = np.cumsum([0] + [g.n_nodes for g in graphs])
    edge_offsets = np.cumsum([0] + [g.n_edges for g in graphs])
    labels = None
    if all(g.labels is not None for g in graphs):
        labels = np.concatenate([g.labels for g in graphs])
    return PreparedGraph(
        n_nodes=int(node_offsets[-1]),
        edge_i=np.concatenate(
            [g.edge_i + node_offsets[k] for k, g in enumerate(graphs)]
        ),
        edge_j=np.concatenate(
            [g.edge_j + node_offsets[k] for k, g in enumerate(graphs)]
        ),
        descriptors=np.concatenate([g.descriptors for g in graphs]),
        features=np.concatenate([g.features for g in graphs]),
        msg_receiver=np.concatenate(
            [g.msg_receiver + node_offsets[k] for k, g in enumerate(graphs)]
        ),
        msg_source=np.concatenate(
            [g.msg_source + node_offsets[k] for k, g in enumerate(graphs)]
        ),
        msg_edge=np.concatenate(
            [g.msg_edge + edge_offsets[k] for k, g in enumerate(graphs)]
        ),
        inv_msg_count=np.concatenate([g.inv_msg_count for g in graphs]),
        message_source=source,
        labels=labels,
    )


def compute_feature_stats(prepared_graphs) -> tuple:
    """Per-feature mean and standard deviation over a training set.

    Near-constant features keep scale 1 so standardization stays finite.
    """
    rows = [p.features for p in prepared_graphs if p.n_edges > 0]
    if not rows:
        return np.zeros(EDGE_FEATURE_DIM), np.ones(EDGE_FEATURE_DIM)
    stacked = np.concatenate(rows, axis=0)
    center = stacked.mean(axis=0)
    scale = stacked.std(axis=0)
    scale[scale < 1e-9] = 1.0
    return center, scale


@dataclass
class MpnResult:
    """Forward-pass output: states per step and probabilities per step."""

    node_states: list  # step -> (n, 32)
    edge_states: list  # step -> (E, 6)
    probs: np.ndarray  # (L, E) classifier output for steps 1..L
    tapes: dict | None = None

    @property
    def final_probs(self) -> np.ndarray:
        return self.probs[-1]


def _forward_prepared(
    prepared: PreparedGraph, params: ModelParams, keep_tapes: bool
) -> MpnResult:
    n_edges = prepared.n_edges
    h_nodes, tape_ev = mlp_forward(params.E_v, prepared.descriptors)
    if n_edges:
        feats = (prepared.features - params.feature_center) / params.feature_scale
        h_edges, tape_ee = mlp_forward(params.E_e, feats)
    else:
        h_edges, tape_ee = np.zeros((0, EDGE_STATE_DIM)), None
    node_states = [h_nodes]
    edge_states = [h_edges]
    probs = np.zeros((params.steps, n_edges))
    tapes = {
        "E_v": tape_ev,
        "E_e": tape_ee,
        "U_e": [],
        "U_e_rev": [],
        "U_v": [],
        "C": [],
    }
    for step in range(1, params.steps + 1):
        prev_n = node_states[step - 1]
        prev_e = edge_states[step - 1]
        if n_edges:
            edge_in = np.concatenate(
                [prev_n[prepared.edge_i], prev_n[prepared.edge_j], prev_e], axis=1
            )
            new_e, tape_ue = mlp_forward(params.U_e, edge_in)
            if params.edge_symmetrize:
                edge_in_rev = np.concatenate(
                    [prev_n[prepared.edge_j], prev_n[prepared.edge_i], prev_e],
                    axis=1,
                )
                rev_e, tape_ue_rev = mlp_forward(params.U_e, edge_in_rev)
                new_e = 0.5 * (new_e + rev_e)
            else:
                tape_ue_rev = None
            msg_in = np.concatenate(
                [prev_n[prepared.msg_source], new_e[prepared.msg_edge]], axis=1
            )
            msg_out, tape_uv = mlp_forward(params.U_v, msg_in)
            new_n = np.zeros_like(prev_n)
            prepared.plan("receiver").add_to(new_n, msg_out)
            if params.node_aggregation == "mean":
                new_n *= prepared.inv_msg_count[:, None]
            p, tape_c = mlp_forward(params.C, new_e)
            # float64 sigmoid rounds to exactly 0/1 when saturated; keep
            # the probabilities inside the open interval
            probs[step - 1] = np.clip(p[:, 0], BCE_EPS, 1.0 - BCE_EPS)
        else:
            new_e, tape_ue, tape_ue_rev = prev_e, None, None
            tape_uv, tape_c = None, None
            new_n = np.zeros_like(prev_n)
        node_states.append(new_n)
        edge_states.append(new_e)
        if keep_tapes:
            tapes["U_e"].append(tape_ue)
            tapes["U_e_rev"].append(tape_ue_rev)
            tapes["U_v"].append(tape_uv)
            tapes["C"].append(tape_c)
    return MpnResult(node_states, edge_states, probs, tapes if keep_tapes else None)


def mpn_forward(
    graph: FrameGraph,
    params: ModelParams,
    store: DescriptorStore,
    calibs: dict,
    keep_tapes: bool = True,
    normalize_descriptors: bool = False,
) -> MpnResult:
    """Initialize embeddings, run all message passing steps and classify
    every edge at every step. A graph without edges yields empty
    predictions."""
    prepared = prepare_graph(
        graph, store, calibs, params.message_source, normalize_descriptors
    )
    return _forward_prepared(prepared, params, keep_tapes)


def graph_loss(preds, labels, positive_weight: float = 1.0) -> float:
    """Cross-entropy summed over every edge and every step (no averaging)."""
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if preds.ndim != 2:
        raise ShapeError(f"predictions must be (steps, edges), got {preds.shape}")
    if labels.shape != (preds.shape[1],):
        raise ShapeError(
            f"labels shape {labels.shape} != edge count {preds.shape[1]}"
        )
    if preds.size == 0:
        return 0.0
    losses, _ = bce_loss(preds, labels[None, :])
    if positive_weight != 1.0:
        weights = np.where(labels[None, :] > 0.5, positive_weight, 1.0)
        losses = losses * weights
    return float(losses.sum())


def loss_and_grads(
    prepared: PreparedGraph,
    params: ModelParams,
    positive_weight: float = 1.0,
    normalize_loss: bool = True,
    edge_weights: np.ndarray | None = None,
    grad_factor: float = 1.0,
) -> tuple[float, ModelGrads]:
    """Loss of one prepared graph plus gradients for all five networks.

    With normalize_loss the per-graph objective is the mean cross-entropy
    per (edge, step) instead of the raw double sum; the sum's magnitude
    grows with the edge count, which makes the standard learning rate
    untrainable on graphs of any realistic size. edge_weights overrides
    that uniform scale (used when several graphs are merged into one
    disjoint batch), and grad_factor rescales the gradients only.
    """
    if prepared.labels is None:
        raise DataError("prepared graph has no labels; training needs identities")
    if prepared.message_source != params.message_source:
        raise ArgumentError(
            f"graphs prepared with message_source={prepared.message_source!r} "
            f"but model uses {params.message_source!r}"
        )
    result = _forward_prepared(prepared, params, keep_tapes=True)
    grads = ModelGrads.zeros(params)
    n_edges = prepared.n_edges
    if n_edges == 0:
        return 0.0, grads
    labels = prepared.labels
    losses, _ = bce_loss(result.probs, labels[None, :])
    # gradient at the classifier's pre-sigmoid: exactly p - y, which stays
    # informative even when the sigmoid saturates (clamped dloss/dp times
    # the true sigmoid derivative would vanish there)
    dloss_dz = result.probs - labels[None, :]
    if positive_weight != 1.0:
        weights = np.where(labels[None, :] > 0.5, positive_weight, 1.0)
        losses = losses * weights
        dloss_dz = dloss_dz * weights
    if edge_weights is not None:
        losses = losses * edge_weights[None, :]
        dloss_dz = dloss_dz * edge_weights[None, :]
    elif normalize_loss:
        # per-step mean over edges, summed across steps: the magnitude of
        # the raw double sum grows with the edge count and would not train
        # at the standard learning rate
        scale = 1.0 / n_edges
        losses = losses * scale
        dloss_dz = dloss_dz * scale
    loss = float(losses.sum())
    if grad_factor != 1.0:
        dloss_dz = dloss_dz * grad_factor
    tapes = result.tapes
    steps = params.steps
    g_nodes = [np.zeros_like(s) for s in result.node_states]
    g_edges = [np.zeros_like(s) for s in result.edge_states]
    # classifier consumes every step's edge states
    for step in range(1, steps + 1):
        gc, g_in = mlp_backward(
            params.C,
            tapes["C"][step - 1],
            dloss_dz[step - 1][:, None],
            grad_at_preactivation=True,
        )
        grads.grads["C"].add_scaled(gc, 1.0)
        g_edges[step] += g_in
    for step in range(steps, 0, -1):
        # node update backward: messages were summed into receivers
        # (final-step node states feed nothing, so their gradient is zero)
        if np.any(g_nodes[step]):
            if params.node_aggregation == "mean":
                g_step = g_nodes[step] * prepared.inv_msg_count[:, None]
            else:
                g_step = g_nodes[step]
            g_msg_out = g_step[prepared.msg_receiver]
            guv, g_msg_in = mlp_backward(params.U_v, tapes["U_v"][step - 1], g_msg_out)
            grads.grads["U_v"].add_scaled(guv, 1.0)
            prepared.plan("source").add_to(
                g_nodes[step - 1], g_msg_in[:, :NODE_STATE_DIM]
            )
            prepared.plan("msg_edge").add_to(
                g_edges[step], g_msg_in[:, NODE_STATE_DIM:]
            )
        # edge update backward (averaged over both slot orders when
        # symmetrized; the reversed pass swaps which endpoint each node
        # slot belongs to)
        g_out = 0.5 * g_edges[step] if params.edge_symmetrize else g_edges[step]
        gue, g_edge_in = mlp_backward(params.U_e, tapes["U_e"][step - 1], g_out)
        grads.grads["U_e"].add_scaled(gue, 1.0)
        prepared.plan("edge_i").add_to(
            g_nodes[step - 1], g_edge_in[:, :NODE_STATE_DIM]
        )
        prepared.plan("edge_j").add_to(
            g_nodes[step - 1], g_edge_in[:, NODE_STATE_DIM : 2 * NODE_STATE_DIM]
        )
        g_edges[step - 1] += g_edge_in[:, 2 * NODE_STATE_DIM :]
        if params.edge_symmetrize:
            gue_rev, g_rev_in = mlp_backward(
                params.U_e, tapes["U_e_rev"][step - 1], g_out
            )
            grads.grads["U_e"].add_scaled(gue_rev, 1.0)
            prepared.plan("edge_j").add_to(
                g_nodes[step - 1], g_rev_in[:, :NODE_STATE_DIM]
            )
            prepared.plan("edge_i").add_to(
                g_nodes[step - 1], g_rev_in[:, NODE_STATE_DIM : 2 * NODE_STATE_DIM]
            )
            g_edges[step - 1] += g_rev_in[:, 2 * NODE_STATE_DIM :]
    gev, _ = mlp_backward(params.E_v, tapes["E_v"], g_nodes[0])
    grads.grads["E_v"].add_scaled(gev, 1.0)
    gee, _ = mlp_backward(params.E_e, tapes["E_e"], g_edges[0])
    grads.grads["E_e"].add_scaled(gee, 1.0)
    return loss, grads


def train(
    dataset,
    seed: int,
    schedule: TrainSchedule,
    steps: int = 4,
    message_source: str = "self",
    node_aggregation: str = "sum",
    edge_symmetrize: bool = True,
    normalize_descriptors: bool = False,
    positive_weight: float = 1.0,
    normalize_loss: bool = True,
    standardize_features: bool = True,
    log=None,
) -> tuple[ModelParams, list]:
    """Train on labeled frames; returns final params and per-epoch mean loss.

    One generator seeded once drives parameter init and the per-epoch
    frame shuffles, so a given (dataset, seed, schedule) always produces
    an identical loss history and identical parameters. Frames without
    edges are skipped. `dataset` is a list of PreparedGraph from
    `prepare_training_set`.
    """
    prepared = [p for p in dataset if p.n_edges > 0]
    if not prepared:
        raise DataError("training set has no frame with at least one edge")
    dim = prepared[0].descriptors.shape[1]
    rng = np.random.default_rng(seed)
    params = init_model_params(
        dim, seed, steps, message_source, node_aggregation, edge_symmetrize, rng=rng
    )
    if standardize_features:
        params.feature_center, params.feature_scale = compute_feature_stats(prepared)
    states = {n: MomentumState.zeros(getattr(params, n).spec) for n in MLP_NAMES}
    history = []
    for epoch in range(schedule.total_epochs):
        lr = lr_at_epoch(schedule, epoch)
        order = rng.permutation(len(prepared))
        epoch_loss = 0.0
        for start in range(0, len(order), schedule.batch_size):
            batch = [prepared[idx] for idx in order[start : start + schedule.batch_size]]
            merged = merge_prepared(batch)
            if normalize_loss:
                weights = np.concatenate(
                    [np.full(g.n_edges, 1.0 / g.n_edges) for g in batch]
                )
            else:
                weights = np.ones(merged.n_edges)
            batch_loss, batch_grads = loss_and_grads(
                merged,
                params,
                positive_weight,
                edge_weights=weights,
                grad_factor=1.0 / len(batch),
            )
            if not np.isfinite(batch_loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, "
                    f"batch starting at graph {start}"
                )
            epoch_loss += batch_loss
            for name in MLP_NAMES:
                sgd_step(
                    getattr(params, name),
                    batch_grads.grads[name],
                    lr,
                    states[name],
                    schedule.momentum,
                    name=name,
                )
        history.append(epoch_loss / len(prepared))
        if log is not None:
            log(epoch, history[-1], lr)
    return params, history


def prepare_training_set(
    frames,
    store: DescriptorStore,
    calibs: dict,
    message_source: str = "self",
    normalize_descriptors: bool = False,
) -> list:
    """PreparedGraph list (labels included) for the non-empty frames."""
    prepared = []
    for graph in frames:
        if graph.n_nodes == 0 or not graph.edges:
            continue
        prepared.append(
            prepare_graph(
                graph,
                store,
                calibs,
                message_source,
                normalize_descriptors,
                with_labels=True,
            )
        )
    return prepared
