"""Dense MLP machinery: validated tensors, forward/backward passes, the
binary cross-entropy loss, the warmup + cosine learning-rate schedule and
a plain/momentum SGD step.

Everything is float64 and deterministic: identical inputs give bitwise
identical outputs, and all randomness is injected through an explicit
numpy Generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ShapeError, TrainingError

ACTIVATIONS = ("relu", "sigmoid", "none")

BCE_EPS = 1e-7


def matrix(rows: int, cols: int, data) -> np.ndarray:
    """Build a validated float64 matrix from row-major data."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"matrix dims must be positive, got {rows}x{cols}")
    arr = np.asarray(data, dtype=np.float64).reshape(-1)
    if arr.size != rows * cols:
        raise ShapeError(f"matrix data length {arr.size} != {rows}*{cols}")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError("matrix entries must be finite")
    return arr.reshape(rows, cols)


def vector(length: int, data) -> np.ndarray:
    """Build a validated float64 vector."""
    if length < 1:
        raise ShapeError(f"vector length must be positive, got {length}")
    arr = np.asarray(data, dtype=np.float64).reshape(-1)
    if arr.size != length:
        raise ShapeError(f"vector data length {arr.size} != {length}")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError("vector entries must be finite")
    return arr


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: str


@dataclass(frozen=True)
class MlpSpec:
    """Layer-by-layer description of a fully connected network."""

    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("an MLP needs at least one layer")
        for lay in self.layers:
            if lay.input_dim < 1 or lay.output_dim < 1:
                raise ShapeError(f"layer dims must be >= 1, got {lay}")
            if lay.activation not in ACTIVATIONS:
                raise ArgumentError(f"unknown activation {lay.activation!r}")
        for prev, cur in zip(self.layers, self.layers[1:]):
            if prev.output_dim != cur.input_dim:
                raise ShapeError(
                    f"layer dims do not chain: {prev.output_dim} -> {cur.input_dim}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].output_dim


def mlp_spec(dims, activations) -> MlpSpec:
    """Convenience builder: mlp_spec((6, 4, 1), ("relu", "sigmoid"))."""
    dims = tuple(int(d) for d in dims)
    activations = tuple(activations)
    if len(dims) < 2 or len(activations) != len(dims) - 1:
        raise ShapeError("need n dims and n-1 activations")
    layers = tuple(
        LayerSpec(dims[i], dims[i + 1], activations[i]) for i in range(len(dims) - 1)
    )
    return MlpSpec(layers)


@dataclass
class MlpParams:
    """Concrete weights/biases for an MlpSpec (weight shape out x in)."""

    spec: MlpSpec
    weights: list
    biases: list

    def __post_init__(self):
        if len(self.weights) != len(self.spec.layers) or len(self.biases) != len(
            self.spec.layers
        ):
            raise ShapeError("parameter count does not match spec layer count")
        self.weights = [
            matrix(lay.output_dim, lay.input_dim, w)
            for lay, w in zip(self.spec.layers, self.weights)
        ]
        self.biases = [
            vector(lay.output_dim, b) for lay, b in zip(self.spec.layers, self.biases)
        ]

    @classmethod
    def zeros(cls, spec: MlpSpec) -> "MlpParams":
        return cls(
            spec,
            [np.zeros((l.output_dim, l.input_dim)) for l in spec.layers],
            [np.zeros(l.output_dim) for l in spec.layers],
        )

    def copy(self) -> "MlpParams":
        return MlpParams(
            self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases]
        )

    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


def init_mlp(spec: MlpSpec, rng: np.random.Generator) -> MlpParams:
    """Fan-in uniform init: W ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), b = 0.

    Draw order is fixed: layers in order, each weight filled row-major from
    a single generator, biases consume no draws.
    """
    weights = []
    biases = []
    for lay in spec.layers:
        lim = math.sqrt(6.0 / lay.input_dim)
        weights.append(rng.uniform(-lim, lim, size=(lay.output_dim, lay.input_dim)))
        biases.append(np.zeros(lay.output_dim))
    return MlpParams(spec, weights, biases)


@dataclass
class MlpGrads:
    """Gradient arrays shaped exactly like an MlpParams."""

    weights: list
    biases: list

    @classmethod
    def zeros(cls, spec: MlpSpec) -> "MlpGrads":
        return cls(
            [np.zeros((l.output_dim, l.input_dim)) for l in spec.layers],
            [np.zeros(l.output_dim) for l in spec.layers],
        )

    def add_scaled(self, other: "MlpGrads", scale: float) -> None:
        for w, ow in zip(self.weights, other.weights):
            w += scale * ow
        for b, ob in zip(self.biases, other.biases):
            b += scale * ob


@dataclass
class ForwardTape:
    """Per-layer inputs and pre-activations recorded by mlp_forward."""

    inputs: list
    preacts: list
    squeeze: bool


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(z: np.ndarray, act: str) -> np.ndarray:
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "sigmoid":
        return _sigmoid(z)
    return z


def _activation_grad(z: np.ndarray, act: str) -> np.ndarray:
    if act == "relu":
        # subgradient 0 at the kink
        return (z > 0.0).astype(np.float64)
    if act == "sigmoid":
        s = _sigmoid(z)
        return s * (1.0 - s)
    return np.ones_like(z)


def mlp_forward(params: MlpParams, x) -> tuple[np.ndarray, ForwardTape]:
    """Run the network on one vector or a batch of row vectors.

    Returns the output plus a tape holding every layer input and
    pre-activation, which mlp_backward consumes.
    """
    arr = np.asarray(x, dtype=np.float64)
    squeeze = arr.ndim == 1
    a = np.atleast_2d(arr)
    if a.shape[1] != params.spec.input_dim:
        raise ShapeError(
            f"input dim {a.shape[1]} != expected {params.spec.input_dim}"
        )
    inputs = []
    preacts = []
    for lay, w, b in zip(params.spec.layers, params.weights, params.biases):
        z = a @ w.T + b
        inputs.append(a)
        preacts.append(z)
        a = _activate(z, lay.activation)
    out = a[0] if squeeze else a
    return out, ForwardTape(inputs, preacts, squeeze)


def mlp_backward(
    params: MlpParams, tape: ForwardTape, output_grad, grad_at_preactivation=False
) -> tuple[MlpGrads, np.ndarray]:
    """Exact analytic gradients of sum(output * output_grad).

    Returns gradients for every weight and bias plus the gradient with
    respect to the network input (same batch shape as the forward input).
    With grad_at_preactivation the given gradient is taken w.r.t. the last
    layer's pre-activation instead of its output; pairing a sigmoid output
    with cross-entropy this way keeps gradients exact even when the
    sigmoid saturates.
    """
    g = np.atleast_2d(np.asarray(output_grad, dtype=np.float64))
    if g.shape[1] != params.spec.output_dim:
        raise ShapeError(
            f"output_grad dim {g.shape[1]} != expected {params.spec.output_dim}"
        )
    if g.shape[0] != tape.inputs[0].shape[0]:
        raise ShapeError("output_grad batch size does not match forward tape")
    grads = MlpGrads.zeros(params.spec)
    last = len(params.spec.layers) - 1
    for i in reversed(range(len(params.spec.layers))):
        lay = params.spec.layers[i]
        if i == last and grad_at_preactivation:
            gz = g
        else:
            gz = g * _activation_grad(tape.preacts[i], lay.activation)
        grads.weights[i] = gz.T @ tape.inputs[i]
        grads.biases[i] = gz.sum(axis=0)
        g = gz @ params.weights[i]
    gin = g[0] if tape.squeeze else g
    return grads, gin


def bce_loss(prediction, label):
    """Binary cross-entropy with clamped predictions.

    loss = -[y*ln(p) + (1-y)*ln(1-p)] at p clipped to [eps, 1-eps];
    also returns dloss/dp evaluated at the clipped p. Accepts scalars or
    arrays elementwise.
    """
    p = np.clip(np.asarray(prediction, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    y = np.asarray(label, dtype=np.float64)
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    grad = -y / p + (1.0 - y) / (1.0 - p)
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


@dataclass(frozen=True)
class TrainSchedule:
    """Optimizer settings: linear warmup followed by cosine decay."""

    base_lr: float = 5e-3
    warmup_epochs: int = 5
    total_epochs: int = 20
    batch_size: int = 64
    momentum: float = 0.0

    def __post_init__(self):
        # 0 is allowed so no-op schedules are constructible in tests
        if self.base_lr < 0:
            raise ArgumentError(f"base_lr must be >= 0, got {self.base_lr}")
        if not 0 <= self.warmup_epochs <= self.total_epochs:
            raise ArgumentError(
                f"need 0 <= warmup_epochs <= total_epochs, got "
                f"{self.warmup_epochs}/{self.total_epochs}"
            )
        if self.batch_size < 1:
            raise ArgumentError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ArgumentError(f"momentum must be in [0, 1), got {self.momentum}")


def lr_at_epoch(schedule: TrainSchedule, epoch: int) -> float:
    """Learning rate for one epoch: ramp to base_lr, then cosine to ~0."""
    if not 0 <= epoch < schedule.total_epochs:
        raise ArgumentError(
            f"epoch {epoch} outside [0, {schedule.total_epochs})"
        )
    if epoch < schedule.warmup_epochs:
        return schedule.base_lr * (epoch + 1) / schedule.warmup_epochs
    span = schedule.total_epochs - schedule.warmup_epochs
    t = (epoch - schedule.warmup_epochs) / span
    return schedule.base_lr * 0.5 * (1.0 + math.cos(math.pi * t))


@dataclass
class MomentumState:
    """Velocity buffers matching an MlpParams layout."""

    velocities_w: list
    velocities_b: list

    @classmethod
    def zeros(cls, spec: MlpSpec) -> "MomentumState":
        return cls(
            [np.zeros((l.output_dim, l.input_dim)) for l in spec.layers],
            [np.zeros(l.output_dim) for l in spec.layers],
        )


def sgd_step(
    params: MlpParams,
    grads: MlpGrads,
    lr: float,
    state: MomentumState | None = None,
    momentum: float = 0.0,
    name: str = "mlp",
) -> MlpParams:
    """In-place update w <- w - lr*(momentum*v + g), v <- momentum*v + g.

    With momentum 0 this is plain SGD. Raises TrainingError naming the
    offending parameter if any gradient entry is non-finite.
    """
    if momentum != 0.0 and state is None:
        raise ArgumentError("momentum > 0 requires a MomentumState")
    for i, (w, b, gw, gb) in enumerate(
        zip(params.weights, params.biases, grads.weights, grads.biases)
    ):
        if not np.all(np.isfinite(gw)):
            raise TrainingError(f"non-finite gradient in {name} layer {i} weight")
        if not np.all(np.isfinite(gb)):
            raise TrainingError(f"non-finite gradient in {name} layer {i} bias")
        if state is not None:
            state.velocities_w[i] = momentum * state.velocities_w[i] + gw
            state.velocities_b[i] = momentum * state.velocities_b[i] + gb
            w -= lr * state.velocities_w[i]
            b -= lr * state.velocities_b[i]
        else:
            w -= lr * gw
            b -= lr * gb
    return params
