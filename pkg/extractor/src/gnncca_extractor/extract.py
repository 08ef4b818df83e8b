"""Descriptor extraction: detections CSV + frame images -> descriptor store.

Images are located from a filename template with {camera} and {frame}
fields relative to the images root. Store row i always corresponds to
detections row i.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from .backbones import BackboneError, make_backbone, prepare_crop
from .formats import FormatError, load_detections, save_store

DEFAULT_TEMPLATE = "cam{camera}/{frame:06d}.png"


class JobError(Exception):
    pass


@dataclass
class ExtractJob:
    images_root: str
    detections_csv: str
    output_store: str
    backbone: str = "hist"
    descriptor_dim: int = 512
    image_template: str = DEFAULT_TEMPLATE
    weights_path: str | None = None
    device: str = "cpu"
    batch_size: int = 32
    warn_stream: object = field(default=None, repr=False)

    def _warn(self, message: str) -> None:
        stream = self.warn_stream if self.warn_stream is not None else sys.stderr
        print(f"warning: {message}", file=stream)


def extract_descriptors(job: ExtractJob) -> int:
    """Embed every detection crop and write the store; returns row count."""
    try:
        backbone = make_backbone(
            job.backbone, job.descriptor_dim, job.weights_path, job.device
        )
    except BackboneError as exc:
        raise JobError(str(exc)) from exc
    try:
        detections = load_detections(job.detections_csv)
    except (FormatError, OSError) as exc:
        raise JobError(str(exc)) from exc
    images = {}
    crops = []
    for row_index, det in enumerate(detections):
        key = (det.camera, det.frame)
        if key not in images:
            rel = job.image_template.format(camera=det.camera, frame=det.frame)
            path = os.path.join(job.images_root, rel)
            try:
                with Image.open(path) as img:
                    images[key] = img.convert("RGB")
            except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
                raise JobError(
                    f"detections row {row_index} (frame={det.frame} "
                    f"camera={det.camera} det_id={det.det_id}): "
                    f"cannot read image {path}: {exc}"
                ) from exc
        crop, clamped = prepare_crop(
            images[key], (det.x, det.y, det.w, det.h), backbone.crop_size
        )
        if clamped:
            job._warn(
                f"detections row {row_index} (frame={det.frame} "
                f"camera={det.camera} det_id={det.det_id}): "
                "box clamped to image bounds"
            )
        crops.append(crop)
    if crops:
        rows = np.concatenate(
            [
                backbone.embed(crops[i : i + job.batch_size])
                for i in range(0, len(crops), job.batch_size)
            ]
        )
    else:
        rows = np.zeros((0, backbone.dim))
    save_store(job.output_store, rows)
    return rows.shape[0]
