"""Pluggable crop embedders.

`hist` is the default: a deterministic hand-crafted descriptor (cell color
statistics, channel histograms and gradient orientations) projected to the
requested width with a fixed seeded matrix. It needs no model weights and
produces byte-identical output across runs, which makes it the right
default for an offline tool.

`resnet50` uses torchvision when available. Without a local weights file
the network is randomly initialized from a fixed seed; that still yields
deterministic (if untrained) descriptors, and real re-identification
weights can be supplied with --weights.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

PROJECTION_SEED = 7

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class BackboneError(Exception):
    pass


def _projection(in_dim: int, out_dim: int) -> np.ndarray:
    rng = np.random.default_rng(PROJECTION_SEED)
    return rng.standard_normal((in_dim, out_dim)) / np.sqrt(in_dim)


class HistBackbone:
    """Color and gradient statistics on a 64x128 crop."""

    name = "hist"
    crop_size = (64, 128)  # width, height

    def __init__(self, dim: int = 512):
        if dim < 1:
            raise BackboneError(f"descriptor dim must be >= 1, got {dim}")
        self.dim = dim
        self._proj = None

    def _raw_features(self, crop: np.ndarray) -> np.ndarray:
        # crop is (H, W, 3) float in [0, 1]
        h, w, _ = crop.shape
        cells_y, cells_x = 8, 4
        feats = []
        ys = np.linspace(0, h, cells_y + 1, dtype=int)
        xs = np.linspace(0, w, cells_x + 1, dtype=int)
        for yi in range(cells_y):
            for xi in range(cells_x):
                cell = crop[ys[yi] : ys[yi + 1], xs[xi] : xs[xi + 1]]
                feats.extend(cell.mean(axis=(0, 1)))
                feats.extend(cell.std(axis=(0, 1)))
        for ch in range(3):
            hist, _ = np.histogram(crop[:, :, ch], bins=32, range=(0.0, 1.0))
            feats.extend(hist / max(crop[:, :, ch].size, 1))
        gray = crop.mean(axis=2)
        gy, gx = np.gradient(gray)
        angle = np.arctan2(gy, gx)
        magnitude = np.hypot(gx, gy)
        for yi in range(2):
            for xi in range(2):
                ys2 = slice(yi * h // 2, (yi + 1) * h // 2)
                xs2 = slice(xi * w // 2, (xi + 1) * w // 2)
                hist, _ = np.histogram(
                    angle[ys2, xs2],
                    bins=8,
                    range=(-np.pi, np.pi),
                    weights=magnitude[ys2, xs2],
                )
                total = hist.sum()
                feats.extend(hist / total if total > 0 else hist)
        return np.asarray(feats, dtype=np.float64)

    def embed(self, crops) -> np.ndarray:
        rows = np.stack([self._raw_features(c) for c in crops])
        if self._proj is None:
            self._proj = _projection(rows.shape[1], self.dim)
        out = rows @ self._proj
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        np.divide(out, norms, out=out, where=norms > 1e-12)
        return out


class Resnet50Backbone:
    """Torchvision ResNet-50 trunk pooled to 2048, projected to dim."""

    name = "resnet50"
    crop_size = (64, 128)

    def __init__(self, dim: int = 512, weights_path=None, device: str = "cpu"):
        try:
            import torch
            from torchvision.models import resnet50
        except ImportError as exc:  # pragma: no cover - torch extra missing
            raise BackboneError(
                "the resnet50 backbone needs the torch extra installed"
            ) from exc
        if dim < 1:
            raise BackboneError(f"descriptor dim must be >= 1, got {dim}")
        self.dim = dim
        self._torch = torch
        torch.manual_seed(PROJECTION_SEED)
        model = resnet50(weights=None)
        if weights_path is not None:
            state = torch.load(weights_path, map_location="cpu")
            model.load_state_dict(state, strict=False)
        model.fc = torch.nn.Identity()
        self._model = model.to(device).eval()
        self._device = device
        self._proj = _projection(2048, dim)

    def embed(self, crops) -> np.ndarray:
        torch = self._torch
        mean = np.asarray(IMAGENET_MEAN)
        std = np.asarray(IMAGENET_STD)
        batch = np.stack([(c - mean) / std for c in crops]).transpose(0, 3, 1, 2)
        with torch.no_grad():
            feats = self._model(
                torch.from_numpy(batch.astype(np.float32)).to(self._device)
            )
        pooled = feats.cpu().numpy().astype(np.float64)
        out = pooled @ self._proj
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        np.divide(out, norms, out=out, where=norms > 1e-12)
        return out


BACKBONES = {"hist": HistBackbone, "resnet50": Resnet50Backbone}


def make_backbone(name: str, dim: int, weights_path=None, device: str = "cpu"):
    if name not in BACKBONES:
        raise BackboneError(
            f"unknown backbone {name!r}; available: {sorted(BACKBONES)}"
        )
    if name == "resnet50":
        return Resnet50Backbone(dim, weights_path, device)
    return HistBackbone(dim)


def prepare_crop(image: Image.Image, bbox, size) -> np.ndarray:
    """Clamped crop resized to (width, height), float RGB in [0, 1].

    Returns (crop, clamped) where clamped reports whether the box had to
    be cut to the image bounds.
    """
    x, y, w, h = bbox
    left, top = int(np.floor(x)), int(np.floor(y))
    right, bottom = int(np.ceil(x + w)), int(np.ceil(y + h))
    clamped = (
        left < 0 or top < 0 or right > image.width or bottom > image.height
    )
    left, top = max(left, 0), max(top, 0)
    right = min(max(right, left + 1), image.width)
    bottom = min(max(bottom, top + 1), image.height)
    if left >= image.width or top >= image.height:
        left, top = image.width - 1, image.height - 1
        right, bottom = image.width, image.height
        clamped = True
    crop = image.convert("RGB").crop((left, top, right, bottom))
    crop = crop.resize(size, Image.BILINEAR)
    arr = np.asarray(crop, dtype=np.float64) / 255.0
    return arr, clamped
