"""Minimal raster containers and Netpbm I/O.

P6 (binary RGB) is the mandatory image format; P5 gray and P4 bitmaps are
used for filter photos and sky masks. PNG goes through Pillow when it is
installed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, IoFailure, MalformedDocument

__all__ = [
    "RasterImage",
    "GrayImage",
    "read_image",
    "write_ppm",
    "write_pgm",
    "write_pbm",
    "read_pbm",
]


@dataclass(frozen=True, eq=False)
class RasterImage:
    """8-bit RGB image stored as a ``(height, width, 3)`` uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise DimensionMismatch(f"expected (h, w, 3) pixels, got shape {px.shape}")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255):
                raise DimensionMismatch("pixel values must fit in 8 bits")
            px = px.astype(np.uint8)
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @classmethod
    def from_bytes(cls, width: int, height: int, data: bytes) -> "RasterImage":
        if width * height < 1 or len(data) != 3 * width * height:
            raise DimensionMismatch(f"{len(data)} bytes for a {width}x{height} RGB image")
        return cls(np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3))

    def mirrored(self) -> "RasterImage":
        return RasterImage(self.pixels[:, ::-1])


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit intensity image, ``(height, width)`` uint8."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise DimensionMismatch(f"expected (h, w) pixels, got shape {px.shape}")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255):
                raise DimensionMismatch("intensities must lie in [0, 255]")
            px = px.astype(np.uint8)
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @classmethod
    def from_rgb(cls, img: RasterImage) -> "GrayImage":
        """Luma 0.299 R + 0.587 G + 0.114 B, rounded half up, in integer arithmetic."""
        px = img.pixels.astype(np.int32)
        y = (299 * px[..., 0] + 587 * px[..., 1] + 114 * px[..., 2] + 500) // 1000
        return cls(y.astype(np.uint8))

    def inverted(self) -> "GrayImage":
        return GrayImage(255 - self.pixels)


def _read_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Parse ``count`` whitespace-separated header integers, skipping comments."""
    tokens: list[int] = []
    pos = 2
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and data[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise MalformedDocument("truncated Netpbm header")
        tokens.append(int(data[start:pos]))
    # exactly one whitespace byte separates header and raster
    return tokens, pos + 1


def _decode_netpbm(data: bytes, path: str):
    magic = data[:2]
    if magic == b"P6" or magic == b"P5":
        (w, h, maxval), off = _read_tokens(data, 3)
        if maxval != 255:
            raise MalformedDocument(f"{path}: only 8-bit Netpbm supported (maxval {maxval})")
        channels = 3 if magic == b"P6" else 1
        body = data[off : off + w * h * channels]
        if len(body) != w * h * channels:
            raise MalformedDocument(f"{path}: raster truncated")
        arr = np.frombuffer(body, dtype=np.uint8)
        return arr.reshape(h, w, 3) if channels == 3 else arr.reshape(h, w)
    if magic == b"P4":
        (w, h), off = _read_tokens(data, 2)
        row_bytes = (w + 7) // 8
        body = np.frombuffer(data[off : off + row_bytes * h], dtype=np.uint8)
        if body.size != row_bytes * h:
            raise MalformedDocument(f"{path}: bitmap truncated")
        bits = np.unpackbits(body.reshape(h, row_bytes), axis=1)[:, :w]
        return bits.astype(bool)
    raise MalformedDocument(f"{path}: unsupported image format (magic {magic!r})")


def read_image(path: str | os.PathLike) -> RasterImage:
    """Load an RGB image from P6 (always) or PNG (when Pillow is available)."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read image {path}: {exc}") from exc
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        try:
            from PIL import Image
        except ImportError as exc:  # pragma: no cover - depends on environment
            raise MalformedDocument(f"{path}: PNG input needs Pillow (pip install artifact[png])") from exc
        with Image.open(path) as im:
            return RasterImage(np.asarray(im.convert("RGB")))
    arr = _decode_netpbm(data, os.fspath(path))
    if arr.ndim == 2:
        if arr.dtype == bool:
            raise MalformedDocument(f"{path}: bitmap is not an RGB image")
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    return RasterImage(arr)


def read_gray(path: str | os.PathLike) -> GrayImage:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read image {path}: {exc}") from exc
    if data[:2] == b"P5":
        return GrayImage(_decode_netpbm(data, os.fspath(path)))
    return GrayImage.from_rgb(read_image(path))


def write_ppm(img: RasterImage, path: str | os.PathLike) -> None:
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header + img.pixels.tobytes())


def write_pgm(img: GrayImage, path: str | os.PathLike) -> None:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header + img.pixels.tobytes())


def write_pbm(mask: np.ndarray, path: str | os.PathLike) -> None:
    """Write a boolean mask as P4; set pixels become 1 (black)."""
    m = np.asarray(mask, dtype=bool)
    h, w = m.shape
    packed = np.packbits(m.astype(np.uint8), axis=1)
    with open(path, "wb") as fh:
        fh.write(f"P4\n{w} {h}\n".encode("ascii") + packed.tobytes())


def read_pbm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    arr = _decode_netpbm(data, os.fspath(path))
    if arr.dtype != bool:
        raise MalformedDocument(f"{path}: not a P4 bitmap")
    return arr
