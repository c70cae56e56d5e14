"""Sky detection, sky colour statistics and a small "has usable sky" classifier.

This is a classical stand-in for descriptor/CNN based concept detection:

* images are summarised by per-cell colour statistics on a g x g grid
  (mean R, G, B, R/G and brightness per cell);
* a logistic regression trained by full-batch gradient descent scores
  whether a photo shows a substantial sky region;
* the sky itself is localised by region growing from bluish, bright seed
  pixels in the top band of the image.

Only the sky mask and its mean R/G ratio are needed downstream by the AOD
estimator.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import DegenerateData, DimensionMismatch, DomainError, LengthMismatch, MalformedDocument, UntrainedModel
from .observation import QualityFlag
from .raster import RasterImage

__all__ = [
    "SkyParams",
    "SkyMask",
    "SkyStats",
    "LogisticModel",
    "extract_color_features",
    "train_sky_classifier",
    "classify_usable_sky",
    "detect_sky",
    "sky_stats",
    "save_model",
    "load_model",
]

FEATURES_PER_CELL = 5


@dataclass(frozen=True)
class SkyParams:
    top_band_fraction: float = 0.10
    tolerance: float = 30.0
    min_brightness: float = 100.0
    # "substantial sky" is not defined anywhere quantitatively; 0.15 is a guess
    min_fraction: float = 0.15

    def __post_init__(self):
        if not 0.0 < self.top_band_fraction <= 1.0:
            raise DomainError("top_band_fraction must lie in (0, 1]")
        if self.tolerance < 0 or self.min_brightness < 0:
            raise DomainError("tolerance and min_brightness must be non-negative")
        if not 0.0 <= self.min_fraction <= 1.0:
            raise DomainError("min_fraction must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class SkyMask:
    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.ndim != 2:
            raise DimensionMismatch(f"mask must be 2-D, got shape {m.shape}")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def fraction(self) -> float:
        return float(self.mask.mean())


@dataclass(frozen=True)
class SkyStats:
    sky_fraction: float
    mean_rg: float
    usable: bool
    quality_flag: QualityFlag = QualityFlag.Ok


@dataclass(frozen=True, eq=False)
class LogisticModel:
    weights: np.ndarray
    bias: float = 0.0
    trained: bool = True
    loss_history: tuple = field(default=(), repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if not np.all(np.isfinite(w)) or not math.isfinite(self.bias):
            raise DomainError("logistic model weights must be finite")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def grid(self) -> int:
        g = math.isqrt(self.weights.size // FEATURES_PER_CELL)
        if FEATURES_PER_CELL * g * g != self.weights.size:
            raise LengthMismatch(f"{self.weights.size} weights do not form a g x g feature grid")
        return g

    def probability(self, features: np.ndarray) -> float:
        x = np.asarray(features, dtype=float)
        if x.shape != self.weights.shape:
            raise LengthMismatch(f"feature length {x.size} != model length {self.weights.size}")
        return _sigmoid(float(self.weights @ x) + self.bias)


def _sigmoid(z):
    # split form keeps exp() from overflowing for large |z|
    if np.isscalar(z):
        if z >= 0:
            return 1.0 / (1.0 + math.exp(-z))
        e = math.exp(z)
        return e / (1.0 + e)
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _cell_edges(n: int, g: int) -> list[int]:
    size = n // g
    return [k * size for k in range(g)] + [n]


def extract_color_features(img: RasterImage, g: int = 4) -> np.ndarray:
    """Per-cell colour statistics over a ``g`` x ``g`` partition of the image.

    For every cell, in row-major cell order: mean R, mean G, mean B (each
    scaled to [0, 1]), R/G of the cell means (G clamped to >= 1) and mean
    brightness (R+G+B)/3 scaled to [0, 1]. Leftover rows/columns go to the
    last cell row/column. Returns a vector of length ``5 * g * g``.
    """
    if g < 1:
        raise DomainError(f"grid size must be >= 1, got {g}")
    if g > min(img.width, img.height):
        raise DomainError(f"grid {g} larger than image {img.width}x{img.height}")
    px = img.pixels.astype(np.int64)
    ys, xs = _cell_edges(img.height, g), _cell_edges(img.width, g)
    feats = np.empty((g, g, FEATURES_PER_CELL))
    for i in range(g):
        for j in range(g):
            cell = px[ys[i] : ys[i + 1], xs[j] : xs[j + 1]]
            n = cell.shape[0] * cell.shape[1]
            r, gr, b = (cell[..., c].sum() / n for c in range(3))
            feats[i, j] = (r / 255.0, gr / 255.0, b / 255.0, r / max(gr, 1.0), (r + gr + b) / 765.0)
    return feats.ravel()


def _loss(w, b, X, y):
    z = X @ w + b
    # log(1 + e^z) - y z, written stably
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def train_sky_classifier(
    samples: Sequence[tuple[np.ndarray, int]],
    learning_rate: float = 0.1,
    epochs: int = 500,
) -> LogisticModel:
    """Full-batch gradient descent on the mean logistic loss, zero start."""
    if not samples:
        raise DegenerateData("no training samples")
    lengths = {len(x) for x, _ in samples}
    if len(lengths) != 1:
        raise LengthMismatch(f"feature vectors of differing lengths {sorted(lengths)}")
    X = np.array([np.asarray(x, dtype=float) for x, _ in samples])
    y = np.array([1.0 if label else 0.0 for _, label in samples])
    if y.min() == y.max():
        raise DegenerateData("training data contains a single class")
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    history = [_loss(w, b, X, y)]
    for _ in range(epochs):
        err = _sigmoid(X @ w + b) - y
        w = w - learning_rate * (X.T @ err) / n
        b = b - learning_rate * float(err.sum()) / n
        history.append(_loss(w, b, X, y))
    return LogisticModel(w, b, trained=True, loss_history=tuple(history))


def classify_usable_sky(model: LogisticModel, img: RasterImage) -> float:
    """Probability that ``img`` contains a substantial sky region (> 0.5 means yes)."""
    if model is None or not model.trained:
        raise UntrainedModel("sky classifier has not been trained")
    return model.probability(extract_color_features(img, model.grid))


def detect_sky(img: RasterImage, params: SkyParams | None = None) -> SkyMask:
    """Region-grow a sky mask from seeds in the top band of the image.

    Seeds are top-band pixels with B >= R, B >= 0.9 G and brightness at
    least ``min_brightness``. The reference colour is the mean of all seeds;
    the mask is every pixel 4-connected to a seed through pixels within
    ``tolerance`` (Euclidean RGB) of that reference. Using one reference for
    the whole region makes the result independent of visiting order, hence
    mirror-symmetric.
    """
    p = params or SkyParams()
    px = img.pixels.astype(np.int64)
    h = img.height
    band = max(1, int(math.ceil(p.top_band_fraction * h)))
    r, g, b = px[..., 0], px[..., 1], px[..., 2]
    bright3 = r + g + b
    seeds = np.zeros((h, img.width), dtype=bool)
    seeds[:band] = (b[:band] >= r[:band]) & (10 * b[:band] >= 9 * g[:band]) & (bright3[:band] >= 3.0 * p.min_brightness)
    n_seeds = int(seeds.sum())
    if n_seeds == 0:
        return SkyMask(np.zeros((h, img.width), dtype=bool))
    ref = px[seeds].sum(axis=0) / n_seeds
    dist2 = ((px - ref) ** 2).sum(axis=2)
    accept = (dist2 <= p.tolerance**2) | seeds
    labels, _ = ndimage.label(accept)
    seeded = np.unique(labels[seeds])
    seeded = seeded[seeded > 0]
    return SkyMask(np.isin(labels, seeded))


def sky_stats(img: RasterImage, mask: SkyMask, min_fraction: float = SkyParams.min_fraction) -> SkyStats:
    """Sky fraction and mean per-pixel R / max(G, 1) over the mask."""
    if mask.mask.shape != (img.height, img.width):
        raise DimensionMismatch(f"mask {mask.mask.shape} vs image {(img.height, img.width)}")
    m = mask.mask
    count = int(m.sum())
    fraction = count / m.size
    if count == 0:
        return SkyStats(0.0, float("nan"), False)
    r = img.pixels[..., 0][m].astype(float)
    g = img.pixels[..., 1][m].astype(float)
    mean_rg = float(np.mean(r / np.maximum(g, 1.0)))
    flag = QualityFlag.Suspect if np.count_nonzero(g == 0) > 0.01 * count else QualityFlag.Ok
    return SkyStats(fraction, mean_rg, fraction >= min_fraction, flag)


def save_model(model: LogisticModel, path: str | os.PathLike) -> None:
    lines = [repr(model.bias)] + [repr(float(w)) for w in model.weights]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path: str | os.PathLike) -> LogisticModel:
    with open(path, encoding="utf-8") as fh:
        values = [ln.strip() for ln in fh if ln.strip()]
    try:
        nums = [float(v) for v in values]
    except ValueError as exc:
        raise MalformedDocument(f"{path}: {exc}") from exc
    if len(nums) < 2:
        raise MalformedDocument(f"{path}: model needs a bias and at least one weight")
    return LogisticModel(np.array(nums[1:]), nums[0], trained=True)
