"""File formats and dataset assembly.

All formats are deterministic byte-for-byte: CSV text for detections and
clusterings, ASCII-header + little-endian binary payloads for descriptor
stores and model checkpoints, and structured text for homographies.
Floats in text files use repr() so they round-trip exactly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .featurize import CameraCalibration, DescriptorStore
from .graph import Detection, FrameGraph, build_frame_graph
from .mpn import MLP_NAMES, ModelParams, model_specs
from .numeric import MlpParams

DETECTIONS_FILE = "detections.csv"
DESCRIPTORS_FILE = "descriptors.bin"
HOMOGRAPHY_FILE = "homographies.txt"

DESC_MAGIC = "GNNCCA-DESC"
HOMOG_MAGIC = "GNNCCA-HOMOG"
CKPT_MAGIC = "GNNCCA-CKPT"

DETECTIONS_HEADER = "frame,camera,det_id,x,y,w,h,identity"
CLUSTERS_HEADER = "frame,camera,det_id,cluster_id"


def save_detections(path, detections) -> None:
    lines = [DETECTIONS_HEADER]
    for d in detections:
        ident = -1 if d.identity is None else d.identity
        x, y, w, h = d.bbox
        lines.append(
            f"{d.frame},{d.camera},{d.det_id},{x!r},{y!r},{w!r},{h!r},{ident}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_detections(path) -> list:
    """Detections in file order; descriptor_index is the data-row index."""
    detections = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if lineno == 1 and line.startswith("frame,"):
                continue
            parts = line.split(",")
            if len(parts) != 8:
                raise DataError(
                    f"{path}:{lineno}: expected 8 fields, got {len(parts)}"
                )
            try:
                frame, camera, det_id = int(parts[0]), int(parts[1]), int(parts[2])
                x, y, w, h = (float(v) for v in parts[3:7])
                ident = int(parts[7])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if not all(np.isfinite(v) for v in (x, y, w, h)):
                raise DataError(f"{path}:{lineno}: non-finite box coordinate")
            if w <= 0 or h <= 0:
                raise DataError(
                    f"{path}:{lineno}: box sides must be positive, got w={w} h={h}"
                )
            if ident < -1:
                raise DataError(f"{path}:{lineno}: identity must be >= -1")
            key = (frame, camera, det_id)
            if key in seen:
                raise DataError(
                    f"{path}:{lineno}: duplicate (frame,camera,det_id)={key}"
                )
            seen.add(key)
            detections.append(
                Detection(
                    frame=frame,
                    camera=camera,
                    det_id=det_id,
                    bbox=(x, y, w, h),
                    descriptor_index=len(detections),
                    identity=None if ident == -1 else ident,
                )
            )
    return detections


def save_store(path, store: DescriptorStore) -> None:
    header = f"{DESC_MAGIC} 1 {store.count} {store.dim}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(store.rows.astype("<f4").tobytes())


def load_store(path) -> DescriptorStore:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").strip()
        parts = header.split()
        if len(parts) != 4 or parts[0] != DESC_MAGIC:
            raise DataError(f"{path}: bad descriptor header {header!r}")
        if parts[1] != "1":
            raise DataError(f"{path}: unsupported descriptor format version {parts[1]}")
        try:
            count, dim = int(parts[2]), int(parts[3])
        except ValueError as exc:
            raise DataError(f"{path}: bad descriptor header {header!r}") from exc
        if count < 0 or dim < 1:
            raise DataError(f"{path}: bad descriptor header counts {count}x{dim}")
        payload = fh.read()
    expected = count * dim * 4
    if len(payload) != expected:
        raise DataError(
            f"{path}: descriptor payload is {len(payload)} bytes, "
            f"expected {expected} ({count}x{dim} float32)"
        )
    rows = np.frombuffer(payload, dtype="<f4").reshape(count, dim).astype(np.float64)
    return DescriptorStore(rows)


def save_homographies(path, calibs: dict) -> None:
    lines = [f"{HOMOG_MAGIC} 1"]
    for cam in sorted(calibs):
        vals = " ".join(repr(float(v)) for v in calibs[cam].H.reshape(-1))
        lines.append(f"{cam} {vals}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_homographies(path) -> dict:
    calibs = {}
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if first.split() != [HOMOG_MAGIC, "1"]:
            raise DataError(f"{path}: bad homography header {first!r}")
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 10:
                raise DataError(
                    f"{path}:{lineno}: expected camera id + 9 values, "
                    f"got {len(parts)} fields"
                )
            try:
                cam = int(parts[0])
                vals = [float(v) for v in parts[1:]]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if cam in calibs:
                raise DataError(f"{path}:{lineno}: duplicate camera {cam}")
            calibs[cam] = CameraCalibration(cam, np.array(vals).reshape(3, 3))
    return calibs


def save_checkpoint(path, params: ModelParams, seed: int) -> None:
    """ASCII header describing every array, then float64 payloads in
    header order; identical params always produce identical bytes."""
    lines = [
        f"{CKPT_MAGIC} 1",
        f"descriptor_dim {params.descriptor_dim}",
        f"steps {params.steps}",
        f"seed {seed}",
        f"message_source {params.message_source}",
        f"node_aggregation {params.node_aggregation}",
        f"edge_symmetrize {int(params.edge_symmetrize)}",
    ]
    arrays = []
    for name in MLP_NAMES:
        mlp = getattr(params, name)
        for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
            lines.append(f"array {name}.{i}.weight {w.shape[0]} {w.shape[1]}")
            arrays.append(w)
            lines.append(f"array {name}.{i}.bias {b.shape[0]}")
            arrays.append(b)
    lines.append(f"array feature_center {params.feature_center.shape[0]}")
    arrays.append(params.feature_center)
    lines.append(f"array feature_scale {params.feature_scale.shape[0]}")
    arrays.append(params.feature_scale)
    lines.append("END")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for arr in arrays:
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple:
    """Returns (ModelParams, meta dict with seed)."""
    with open(path, "rb") as fh:
        first = fh.readline().decode("ascii", errors="replace").strip()
        if first.split() != [CKPT_MAGIC, "1"]:
            raise DataError(f"{path}: bad checkpoint header {first!r}")
        meta = {}
        declared = []
        while True:
            line = fh.readline().decode("ascii", errors="replace").strip()
            if not line:
                raise DataError(f"{path}: truncated checkpoint header")
            if line == "END":
                break
            parts = line.split()
            if parts[0] == "array":
                if len(parts) not in (3, 4):
                    raise DataError(f"{path}: bad array line {line!r}")
                dims = tuple(int(v) for v in parts[2:])
                declared.append((parts[1], dims))
            elif len(parts) == 2:
                meta[parts[0]] = parts[1]
            else:
                raise DataError(f"{path}: bad checkpoint line {line!r}")
        payload = fh.read()
    for key in ("descriptor_dim", "steps", "seed", "message_source"):
        if key not in meta:
            raise DataError(f"{path}: checkpoint header missing {key}")
    meta.setdefault("node_aggregation", "sum")
    meta.setdefault("edge_symmetrize", "1")
    if meta["edge_symmetrize"] not in ("0", "1"):
        raise DataError(f"{path}: bad edge_symmetrize {meta['edge_symmetrize']!r}")
    try:
        dim = int(meta["descriptor_dim"])
        steps = int(meta["steps"])
        seed = int(meta["seed"])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    total = sum(int(np.prod(d)) for _, d in declared)
    if len(payload) != total * 8:
        raise DataError(
            f"{path}: checkpoint payload is {len(payload)} bytes, "
            f"expected {total * 8}"
        )
    flat = np.frombuffer(payload, dtype="<f8")
    arrays = {}
    offset = 0
    for name, dims in declared:
        size = int(np.prod(dims))
        arrays[name] = flat[offset : offset + size].reshape(dims).copy()
        offset += size
    specs = model_specs(dim)
    mlps = {}
    for name in MLP_NAMES:
        spec = specs[name]
        weights = []
        biases = []
        for i in range(len(spec.layers)):
            wkey, bkey = f"{name}.{i}.weight", f"{name}.{i}.bias"
            if wkey not in arrays or bkey not in arrays:
                raise DataError(f"{path}: checkpoint missing array {wkey} or {bkey}")
            weights.append(arrays[wkey])
            biases.append(arrays[bkey])
        try:
            mlps[name] = MlpParams(spec, weights, biases)
        except Exception as exc:
            raise DataError(f"{path}: bad {name} arrays: {exc}") from exc
    try:
        params = ModelParams(
            mlps["E_v"],
            mlps["E_e"],
            mlps["U_v"],
            mlps["U_e"],
            mlps["C"],
            steps=steps,
            message_source=meta["message_source"],
            node_aggregation=meta["node_aggregation"],
            edge_symmetrize=meta["edge_symmetrize"] == "1",
            feature_center=arrays.get("feature_center"),
            feature_scale=arrays.get("feature_scale"),
        )
    except Exception as exc:
        raise DataError(f"{path}: inconsistent checkpoint: {exc}") from exc
    return params, {"seed": seed}


def save_clusterings(path, frames, clusterings) -> None:
    """frames: list of (frame_id, FrameGraph) aligned with clusterings."""
    lines = [CLUSTERS_HEADER]
    for (frame_id, graph), clustering in zip(frames, clusterings):
        for det, cid in zip(graph.detections, clustering.assignment):
            lines.append(f"{frame_id},{det.camera},{det.det_id},{cid}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_clusterings(path) -> dict:
    """frame -> {(camera, det_id): cluster_id}."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if lineno == 1 and line.startswith("frame,"):
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise DataError(
                    f"{path}:{lineno}: expected 4 fields, got {len(parts)}"
                )
            try:
                frame, camera, det_id, cid = (int(v) for v in parts)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            frame_map = out.setdefault(frame, {})
            key = (camera, det_id)
            if key in frame_map:
                raise DataError(
                    f"{path}:{lineno}: duplicate (camera,det_id)={key} "
                    f"in frame {frame}"
                )
            frame_map[key] = cid
    return out


@dataclass
class Dataset:
    """Frames (with graphs built), descriptors and calibrations."""

    frames: list  # (frame_id, FrameGraph) sorted by frame id
    store: DescriptorStore
    calibs: dict

    def graphs(self) -> list:
        return [g for _, g in self.frames]


def load_dataset(path, require_calibs: bool = True) -> Dataset:
    det_path = os.path.join(path, DETECTIONS_FILE)
    store_path = os.path.join(path, DESCRIPTORS_FILE)
    hom_path = os.path.join(path, HOMOGRAPHY_FILE)
    detections = load_detections(det_path)
    store = load_store(store_path)
    if store.count != len(detections):
        raise DataError(
            f"{store_path}: {store.count} descriptor rows for "
            f"{len(detections)} detections"
        )
    calibs = {}
    if os.path.exists(hom_path):
        calibs = load_homographies(hom_path)
    elif require_calibs:
        raise ConfigError(f"{hom_path}: homography file not found")
    if calibs:
        missing = sorted({d.camera for d in detections} - set(calibs))
        if missing:
            raise ConfigError(f"{hom_path}: no homography for cameras {missing}")
    by_frame = {}
    for det in detections:
        by_frame.setdefault(det.frame, []).append(det)
    frames = [
        (frame, build_frame_graph(by_frame[frame])) for frame in sorted(by_frame)
    ]
    return Dataset(frames, store, calibs)


def write_scene(scene, path) -> None:
    """Write a synthetic scene in the standard dataset layout."""
    os.makedirs(path, exist_ok=True)
    save_detections(os.path.join(path, DETECTIONS_FILE), scene.detections)
    save_store(os.path.join(path, DESCRIPTORS_FILE), scene.store)
    save_homographies(os.path.join(path, HOMOGRAPHY_FILE), scene.calibs)
