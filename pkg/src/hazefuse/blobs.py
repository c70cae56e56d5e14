"""Particle spots on exposed paper filters.

Pipeline: threshold -> group (connected components) -> merge nearby
components -> radius from area. The blob count is mapped to a PM
concentration by a linear calibration fitted on reference measurements.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateFit, DomainError, MalformedDocument, UntrainedCurve
from .observation import GeoPoint, Observation, PhenomenonKind, QualityFlag, SourceKind, TimeStamp
from .raster import GrayImage, RasterImage

__all__ = [
    "Polarity",
    "BlobParams",
    "Blob",
    "CalibrationCurve",
    "threshold",
    "label_components",
    "group",
    "merge",
    "detect_blobs",
    "fit_calibration",
    "estimate_pm",
    "save_calibration",
    "load_calibration",
    "blob_report",
]


class Polarity(Enum):
    DarkBlobs = "DarkBlobs"
    LightBlobs = "LightBlobs"


@dataclass(frozen=True)
class BlobParams:
    threshold: int = 128
    polarity: Polarity = Polarity.DarkBlobs
    min_area: int = 4
    merge_distance: float = 0.0
    connectivity: int = 8

    def __post_init__(self):
        if not 0 <= self.threshold <= 255:
            raise DomainError(f"threshold {self.threshold} outside [0, 255]")
        if self.min_area < 1:
            raise DomainError("min_area must be >= 1")
        if self.merge_distance < 0:
            raise DomainError("merge_distance must be >= 0")
        if self.connectivity not in (4, 8):
            raise DomainError("connectivity must be 4 or 8")


@dataclass(frozen=True)
class Blob:
    cx: float
    cy: float
    area: int
    bbox: tuple[int, int, int, int]  # x0, y0, x1, y1 inclusive

    @property
    def radius(self) -> float:
        return math.sqrt(self.area / math.pi)

    @property
    def centroid(self) -> tuple[float, float]:
        return (self.cx, self.cy)


@dataclass(frozen=True)
class CalibrationCurve:
    slope: float
    intercept: float
    rms: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise DomainError("a calibration needs at least two samples")
        if not all(math.isfinite(v) for v in (self.slope, self.intercept, self.rms)):
            raise DomainError("calibration coefficients must be finite")

    def predict(self, count: float) -> float:
        return self.slope * count + self.intercept


def threshold(img: GrayImage, params: BlobParams) -> np.ndarray:
    px = img.pixels
    if params.polarity is Polarity.DarkBlobs:
        return px <= params.threshold
    return px >= params.threshold


def _find(parent: list[int], a: int) -> int:
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


def label_components(binary: np.ndarray, connectivity: int = 8) -> tuple[np.ndarray, int]:
    """Two-pass connected-component labelling.

    Labels run from 1 in raster order of each component's first pixel;
    background is 0.
    """
    if connectivity not in (4, 8):
        raise DomainError("connectivity must be 4 or 8")
    b = np.asarray(binary, dtype=bool)
    h, w = b.shape
    provisional = np.zeros((h, w), dtype=np.int64)
    parent = [0]
    back = [(-1, 0), (0, -1)] if connectivity == 4 else [(-1, -1), (-1, 0), (-1, 1), (0, -1)]
    rows = b.tolist()
    lab = provisional.tolist()
    for y in range(h):
        row, lrow = rows[y], lab[y]
        for x in range(w):
            if not row[x]:
                continue
            neighbours = []
            for dy, dx in back:
                ny, nx = y + dy, x + dx
                if ny >= 0 and 0 <= nx < w:
                    v = lab[ny][nx]
                    if v:
                        neighbours.append(v)
            if not neighbours:
                parent.append(len(parent))
                lrow[x] = len(parent) - 1
                continue
            m = min(_find(parent, v) for v in neighbours)
            lrow[x] = m
            for v in neighbours:
                r = _find(parent, v)
                if r != m:
                    parent[max(r, m)] = min(r, m)
                    m = min(r, m)
    # compact roots to 1..n in order of first appearance
    final = [0] * len(parent)
    count = 0
    for y in range(h):
        lrow = lab[y]
        for x in range(w):
            v = lrow[x]
            if v:
                r = _find(parent, v)
                if final[r] == 0:
                    count += 1
                    final[r] = count
                lrow[x] = final[r]
    return np.array(lab, dtype=np.int64).reshape(h, w), count


def group(binary: np.ndarray, connectivity: int = 8, min_area: int = 4) -> list[Blob]:
    labels, n = label_components(binary, connectivity)
    if n == 0:
        return []
    flat = labels.ravel()
    h, w = labels.shape
    ys, xs = np.divmod(np.arange(flat.size), w)
    fg = flat > 0
    lab, ys, xs = flat[fg], ys[fg], xs[fg]
    area = np.bincount(lab, minlength=n + 1)
    sx = np.bincount(lab, weights=xs, minlength=n + 1)
    sy = np.bincount(lab, weights=ys, minlength=n + 1)
    x0 = np.full(n + 1, w)
    y0 = np.full(n + 1, h)
    x1 = np.full(n + 1, -1)
    y1 = np.full(n + 1, -1)
    np.minimum.at(x0, lab, xs)
    np.minimum.at(y0, lab, ys)
    np.maximum.at(x1, lab, xs)
    np.maximum.at(y1, lab, ys)
    blobs = [
        Blob(sx[k] / area[k], sy[k] / area[k], int(area[k]), (int(x0[k]), int(y0[k]), int(x1[k]), int(y1[k])))
        for k in range(1, n + 1)
        if area[k] >= min_area
    ]
    blobs.sort(key=lambda bl: (bl.cy, bl.cx))
    return blobs


def merge(blobs: Sequence[Blob], merge_distance: float) -> list[Blob]:
    """Merge blobs whose centroids are within ``merge_distance``, transitively."""
    if merge_distance < 0:
        raise DomainError("merge_distance must be >= 0")
    n = len(blobs)
    parent = list(range(n))
    for i in range(n):
        for j in range(i + 1, n):
            if math.hypot(blobs[i].cx - blobs[j].cx, blobs[i].cy - blobs[j].cy) <= merge_distance:
                ri, rj = _find(parent, i), _find(parent, j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    clusters: dict[int, list[Blob]] = {}
    for i in range(n):
        clusters.setdefault(_find(parent, i), []).append(blobs[i])
    out = []
    for members in clusters.values():
        if len(members) == 1:
            out.append(members[0])
            continue
        area = sum(m.area for m in members)
        cx = sum(m.cx * m.area for m in members) / area
        cy = sum(m.cy * m.area for m in members) / area
        bbox = (
            min(m.bbox[0] for m in members),
            min(m.bbox[1] for m in members),
            max(m.bbox[2] for m in members),
            max(m.bbox[3] for m in members),
        )
        out.append(Blob(cx, cy, area, bbox))
    out.sort(key=lambda bl: (bl.cy, bl.cx))
    return out


def _as_gray(img) -> GrayImage:
    return GrayImage.from_rgb(img) if isinstance(img, RasterImage) else img


def detect_blobs(img: GrayImage | RasterImage, params: BlobParams | None = None) -> list[Blob]:
    p = params or BlobParams()
    binary = threshold(_as_gray(img), p)
    return merge(group(binary, p.connectivity, p.min_area), p.merge_distance)


def fit_calibration(samples: Iterable[tuple[float, float]]) -> CalibrationCurve:
    """Ordinary least squares of PM (ug/m3) against blob count."""
    pts = [(float(c), float(pm)) for c, pm in samples]
    if len(pts) < 2:
        raise DegenerateFit("need at least two calibration samples")
    x = np.array([c for c, _ in pts])
    y = np.array([pm for _, pm in pts])
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    if sxx == 0.0:
        raise DegenerateFit("all calibration samples have the same blob count")
    slope = float(((x - xm) * (y - ym)).sum()) / sxx
    intercept = float(ym - slope * xm)
    resid = y - (slope * x + intercept)
    return CalibrationCurve(slope, intercept, float(np.sqrt(np.mean(resid**2))), len(pts))


def estimate_pm(
    curve: CalibrationCurve | None,
    img: GrayImage | RasterImage,
    params: BlobParams | None = None,
    *,
    oid: str = "flt-0001",
    location: GeoPoint = GeoPoint(0.0, 0.0),
    time: TimeStamp | None = None,
    phenomenon: PhenomenonKind = PhenomenonKind.PM2_5,
) -> Observation:
    if curve is None:
        raise UntrainedCurve("no calibration curve supplied")
    count = len(detect_blobs(img, params))
    pm = curve.predict(count)
    flag = QualityFlag.Ok
    if pm < 0:
        pm, flag = 0.0, QualityFlag.Clamped
    when = time if time is not None else TimeStamp.of(1970, 1, 1)
    return Observation(oid, SourceKind.FilterPhoto, phenomenon, pm, location, when, flag)


def save_calibration(curve: CalibrationCurve, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{curve.slope!r} {curve.intercept!r} {curve.rms!r} {curve.n}\n")


def load_calibration(path: str | os.PathLike) -> CalibrationCurve:
    with open(path, encoding="utf-8") as fh:
        parts = fh.read().split()
    if len(parts) != 4:
        raise MalformedDocument(f"{path}: expected 'slope intercept rms n'")
    try:
        return CalibrationCurve(float(parts[0]), float(parts[1]), float(parts[2]), int(parts[3]))
    except ValueError as exc:
        raise MalformedDocument(f"{path}: {exc}") from exc


def blob_report(blobs: Sequence[Blob]) -> str:
    lines = ["id,cx,cy,area,radius"]
    for i, b in enumerate(blobs, start=1):
        lines.append(f"{i},{b.cx:.4f},{b.cy:.4f},{b.area},{b.radius:.4f}")
    return "\n".join(lines) + "\n"
