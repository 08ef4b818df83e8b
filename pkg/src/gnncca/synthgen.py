"""Deterministic synthetic multi-camera scenes.

Identities perform seeded random walks on a common ground plane inside a
square arena. Each camera observes each identity through the inverse of
its image-to-ground homography, dropping observations at random (miss
probability) or when the projected point leaves the image window. A
detection's descriptor is its identity's unit prototype vector plus a
per-camera bias plus per-detection Gaussian noise, quantized to the
32-bit precision the descriptor file format stores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .featurize import CameraCalibration, DescriptorStore
from .graph import Detection

IMAGE_SIZE = (1920, 1080)
# ground-plane units chosen so cross-identity distances are O(1): keeps the
# raw spatial features on the same scale as the appearance deltas
ARENA_HALF = 1.2
PIXELS_PER_UNIT = 210.0
PERSPECTIVE = 0.015
CAMERA_RADIUS = 4.0
BOX_HEIGHT_SCALE = 280.0
BOX_ASPECT = 0.45


@dataclass
class SceneSpec:
    """Parameters of one synthetic scene."""

    cameras: int = 4
    identities: int = 6
    frames: int = 100
    descriptor_dim: int = 512
    appearance_noise_sigma: float = 0.1
    camera_bias_sigma: float = 0.0
    miss_prob: float = 0.0
    homographies: dict | None = None  # camera -> 3x3 image-to-ground
    walk_step_sigma: float = 0.1
    pixel_noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.cameras < 2:
            raise ConfigError(f"need at least 2 cameras, got {self.cameras}")
        if not 1 <= self.identities <= 9:
            raise ConfigError(
                f"identities must be in [1, 9], got {self.identities}"
            )
        if self.frames < 1:
            raise ConfigError(f"frames must be >= 1, got {self.frames}")
        if self.descriptor_dim < 1:
            raise ConfigError(
                f"descriptor_dim must be >= 1, got {self.descriptor_dim}"
            )
        for name in (
            "appearance_noise_sigma",
            "camera_bias_sigma",
            "walk_step_sigma",
            "pixel_noise_sigma",
        ):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not 0.0 <= self.miss_prob < 1.0:
            raise ConfigError(f"miss_prob must be in [0, 1), got {self.miss_prob}")


@dataclass
class SyntheticScene:
    """Generated detections (identities filled in), descriptors, calibs."""

    spec: SceneSpec
    detections: list
    store: DescriptorStore
    calibs: dict


def default_homographies(cameras: int) -> dict:
    """One mildly projective image-to-ground homography per camera,
    cameras spaced evenly around the arena."""
    homs = {}
    cx, cy = IMAGE_SIZE[0] / 2.0, IMAGE_SIZE[1] / 2.0
    for cam in range(cameras):
        theta = 2.0 * math.pi * cam / cameras
        c, s = math.cos(theta), math.sin(theta)
        ground_to_image = np.array(
            [
                [PIXELS_PER_UNIT * c, -PIXELS_PER_UNIT * s, cx],
                [PIXELS_PER_UNIT * s, PIXELS_PER_UNIT * c, cy],
                [PERSPECTIVE * c, PERSPECTIVE * s, 1.0],
            ]
        )
        h = np.linalg.inv(ground_to_image)
        homs[cam] = h / h[2, 2]
    return homs


def _camera_position(cam: int, cameras: int) -> np.ndarray:
    theta = 2.0 * math.pi * cam / cameras
    return CAMERA_RADIUS * np.array([math.cos(theta), math.sin(theta)])


def _reflect(value: float, half: float) -> float:
    # bounce walks off the arena walls
    while value > half or value < -half:
        if value > half:
            value = 2.0 * half - value
        else:
            value = -2.0 * half - value
    return value


def generate_scene(spec: SceneSpec) -> SyntheticScene:
    """Generate one scene; the same spec always yields identical output.

    Draw order from the single seeded generator: identity prototypes,
    camera biases, initial positions, then per frame the walk steps
    (identity ascending) followed per camera/identity by the miss draw,
    the pixel noise and the descriptor noise (skipped entirely for missed
    observations).
    """
    rng = np.random.default_rng(spec.seed)
    if spec.homographies is not None:
        homs = {int(c): np.asarray(h, dtype=np.float64) for c, h in spec.homographies.items()}
        if sorted(homs) != list(range(spec.cameras)):
            raise ConfigError(
                f"homographies must cover cameras 0..{spec.cameras - 1}"
            )
    else:
        homs = default_homographies(spec.cameras)
    calibs = {cam: CameraCalibration(cam, h) for cam, h in homs.items()}
    ground_to_image = {cam: np.linalg.inv(calibs[cam].H) for cam in calibs}

    protos = rng.standard_normal((spec.identities, spec.descriptor_dim))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    biases = spec.camera_bias_sigma * rng.standard_normal(
        (spec.cameras, spec.descriptor_dim)
    )
    positions = rng.uniform(
        -0.8 * ARENA_HALF, 0.8 * ARENA_HALF, size=(spec.identities, 2)
    )

    detections = []
    rows = []
    for frame in range(spec.frames):
        if frame > 0:
            for ident in range(spec.identities):
                step = spec.walk_step_sigma * rng.standard_normal(2)
                positions[ident, 0] = _reflect(positions[ident, 0] + step[0], ARENA_HALF)
                positions[ident, 1] = _reflect(positions[ident, 1] + step[1], ARENA_HALF)
        det_id = 0
        for cam in range(spec.cameras):
            for ident in range(spec.identities):
                if rng.uniform() < spec.miss_prob:
                    continue
                jitter = spec.pixel_noise_sigma * rng.standard_normal(2)
                noise = spec.appearance_noise_sigma * rng.standard_normal(
                    spec.descriptor_dim
                )
                p = ground_to_image[cam] @ np.array(
                    [positions[ident, 0], positions[ident, 1], 1.0]
                )
                u = p[0] / p[2] + jitter[0]
                v = p[1] / p[2] + jitter[1]
                if not (0.0 <= u < IMAGE_SIZE[0] and 0.0 <= v < IMAGE_SIZE[1]):
                    continue
                dist = float(
                    np.linalg.norm(_camera_position(cam, spec.cameras) - positions[ident])
                )
                h = BOX_HEIGHT_SCALE / max(dist, 1.0)
                w = BOX_ASPECT * h
                detections.append(
                    Detection(
                        frame=frame,
                        camera=cam,
                        det_id=det_id,
                        bbox=(u - w / 2.0, v, w, h),
                        descriptor_index=len(rows),
                        identity=ident,
                    )
                )
                rows.append(protos[ident] + biases[cam] + noise)
                det_id += 1
    if rows:
        # quantize to on-disk precision so in-memory and reloaded data match
        mat = np.asarray(rows).astype(np.float32).astype(np.float64)
    else:
        mat = np.zeros((0, spec.descriptor_dim))
    return SyntheticScene(spec, detections, DescriptorStore(mat), calibs)
