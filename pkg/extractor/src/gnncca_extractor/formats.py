"""The on-disk interfaces shared with the association pipeline.

Detections travel as CSV rows `frame,camera,det_id,x,y,w,h,identity`
(identity -1 when unknown) and descriptors as a one-line ASCII header
`GNNCCA-DESC 1 <count> <dim>` followed by count x dim little-endian
32-bit floats in row order, row i belonging to detection row i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DESC_MAGIC = "GNNCCA-DESC"


class FormatError(Exception):
    pass


@dataclass(frozen=True)
class DetectionRow:
    frame: int
    camera: int
    det_id: int
    x: float
    y: float
    w: float
    h: float
    identity: int


def load_detections(path) -> list:
    rows = []
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
                raise FormatError(
                    f"{path}:{lineno}: expected 8 fields, got {len(parts)}"
                )
            try:
                frame, camera, det_id = int(parts[0]), int(parts[1]), int(parts[2])
                x, y, w, h = (float(v) for v in parts[3:7])
                identity = int(parts[7])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            if w <= 0 or h <= 0:
                raise FormatError(
                    f"{path}:{lineno}: box sides must be positive, got w={w} h={h}"
                )
            key = (frame, camera, det_id)
            if key in seen:
                raise FormatError(f"{path}:{lineno}: duplicate detection key {key}")
            seen.add(key)
            rows.append(DetectionRow(frame, camera, det_id, x, y, w, h, identity))
    return rows


def save_store(path, rows: np.ndarray) -> None:
    rows = np.asarray(rows)
    if rows.ndim != 2:
        raise FormatError(f"descriptor matrix must be 2-D, got {rows.ndim}-D")
    header = f"{DESC_MAGIC} 1 {rows.shape[0]} {rows.shape[1]}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(rows.astype("<f4").tobytes())


def load_store(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").split()
        if len(header) != 4 or header[0] != DESC_MAGIC or header[1] != "1":
            raise FormatError(f"{path}: bad descriptor header")
        count, dim = int(header[2]), int(header[3])
        payload = fh.read()
    if len(payload) != count * dim * 4:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, expected {count * dim * 4}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(count, dim)
