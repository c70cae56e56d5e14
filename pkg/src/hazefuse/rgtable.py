"""Table RG: R/G colour ratio as a function of solar zenith angle and AOD.

The table is produced offline by a radiative-transfer model from the ratio
of diffuse irradiance at two wavelengths. Here it is an input file (or a
synthetic analytic stand-in) and this module provides validation, forward
evaluation, inversion R/G -> AOD, and the photo -> AOD pipeline.

CSV layout::

    # rg_table wl=550,700 provenance=<text>
    aod_1,aod_2,...,aod_n
    sza_1,rg_11,...,rg_1n
    ...
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, MalformedTable, NonMonotoneRow, OutOfArea, OutOfRange, TableRangeError
from .observation import GeoPoint, Observation, PhenomenonKind, QualityFlag, SourceKind, TimeStamp
from .raster import RasterImage
from .sky import SkyParams, detect_sky, sky_stats
from .solar import SzaTable, lookup_sza

__all__ = [
    "RgTable",
    "AodEstimate",
    "Unusable",
    "SyntheticParams",
    "load_rg_table",
    "save_rg_table",
    "eval_rg",
    "invert_aod",
    "generate_synthetic_table",
    "estimate_aod_from_image",
    "aod_observation",
    "DAYLIGHT_MAX_SZA",
]

log = logging.getLogger(__name__)

DAYLIGHT_MAX_SZA = 85.0


@dataclass(frozen=True, eq=False)
class RgTable:
    sza_axis: np.ndarray
    aod_axis: np.ndarray
    rg: np.ndarray
    wavelengths: tuple[float, float] = (550.0, 700.0)
    provenance: str = ""
    direction: int = 0

    def __post_init__(self):
        sza = np.array(self.sza_axis, dtype=float)
        aod = np.array(self.aod_axis, dtype=float)
        rg = np.array(self.rg, dtype=float)
        if sza.ndim != 1 or aod.ndim != 1 or sza.size < 2 or aod.size < 2:
            raise MalformedTable("table axes need at least two samples each")
        if np.any(np.diff(sza) <= 0):
            bad = int(np.argmax(np.diff(sza) <= 0)) + 1
            raise MalformedTable(f"SZA axis not strictly ascending at row {bad + 1} (sza={sza[bad]:g})")
        if np.any(np.diff(aod) <= 0):
            bad = int(np.argmax(np.diff(aod) <= 0)) + 1
            raise MalformedTable(f"AOD axis not strictly ascending at column {bad + 1} (aod={aod[bad]:g})")
        if aod[0] < 0:
            raise MalformedTable(f"AOD axis starts below zero ({aod[0]:g})")
        if rg.shape != (sza.size, aod.size):
            raise MalformedTable(f"rg matrix shape {rg.shape} does not match axes ({sza.size}, {aod.size})")
        if np.any(~np.isfinite(rg)) or np.any(rg <= 0):
            i, j = np.argwhere(~(np.isfinite(rg) & (rg > 0)))[0]
            raise MalformedTable(f"rg must be finite and positive (row sza={sza[i]:g}, column aod={aod[j]:g})")
        steps = np.diff(rg, axis=1)
        direction = 1 if np.all(steps[0] > 0) else -1 if np.all(steps[0] < 0) else 0
        for i in range(sza.size):
            if direction == 0 or not np.all(direction * steps[i] > 0):
                raise NonMonotoneRow(float(sza[i]))
        if self.direction not in (0, direction):
            raise MalformedTable(f"declared direction {self.direction} contradicts data ({direction})")
        for name, arr in (("sza_axis", sza), ("aod_axis", aod), ("rg", rg)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "direction", direction)


@dataclass(frozen=True)
class AodEstimate:
    aod: float
    quality_flag: QualityFlag
    image_id: str = ""
    sza: float = float("nan")
    mean_rg: float = float("nan")


@dataclass(frozen=True)
class Unusable:
    """Why an image produced no AOD estimate."""

    reason: str
    image_id: str = ""
    sza: float = float("nan")
    sky_fraction: float = float("nan")


@dataclass(frozen=True)
class SyntheticParams:
    """Linear-in-SZA base and slope: rg = (b0 + b1 sza) + (s0 + s1 sza) aod."""

    b0: float = 0.55
    b1: float = 0.002
    s0: float = 0.30
    s1: float = 0.001


def _split(line: str) -> list[str]:
    return [c.strip() for c in line.split(",")]


def load_rg_table(path: str | os.PathLike) -> RgTable:
    with open(path, encoding="utf-8") as fh:
        lines = [(n, ln.strip()) for n, ln in enumerate(fh, start=1) if ln.strip()]
    if not lines or not lines[0][1].startswith("# rg_table"):
        raise MalformedTable(f"{path}: line 1 must start with '# rg_table'")
    meta = {}
    for tok in lines[0][1][len("# rg_table"):].split():
        if "=" in tok:
            k, v = tok.split("=", 1)
            meta[k] = v
    # provenance may contain spaces: take everything after the key
    head = lines[0][1]
    if "provenance=" in head:
        meta["provenance"] = head.split("provenance=", 1)[1].strip()
    try:
        wl = tuple(float(x) for x in meta.get("wl", "550,700").split(","))
        if len(wl) != 2:
            raise ValueError("wl needs two wavelengths")
    except ValueError as exc:
        raise MalformedTable(f"{path}: line 1: bad wavelength pair: {exc}") from exc
    if len(lines) < 3:
        raise MalformedTable(f"{path}: need an AOD axis line and at least one SZA row")
    lineno, aod_line = lines[1]
    try:
        aod = [float(c) for c in _split(aod_line)]
    except ValueError as exc:
        raise MalformedTable(f"{path}: line {lineno}: bad AOD axis: {exc}") from exc
    sza, body = [], []
    for lineno, row in lines[2:]:
        cells = _split(row)
        if len(cells) != len(aod) + 1:
            raise MalformedTable(f"{path}: line {lineno}: {len(cells) - 1} rg values, expected {len(aod)}")
        for col, c in enumerate(cells):
            try:
                float(c)
            except ValueError as exc:
                raise MalformedTable(f"{path}: line {lineno}, column {col + 1}: not a number: {c!r}") from exc
        sza.append(float(cells[0]))
        body.append([float(c) for c in cells[1:]])
    try:
        return RgTable(np.array(sza), np.array(aod), np.array(body), wl, meta.get("provenance", ""))
    except MalformedTable as exc:
        if isinstance(exc, NonMonotoneRow):
            raise NonMonotoneRow(exc.sza, f"{path}: {exc}") from None
        raise MalformedTable(f"{path}: {exc}") from None


def save_rg_table(table: RgTable, path: str | os.PathLike) -> None:
    wl = ",".join(f"{w:g}" for w in table.wavelengths)
    lines = [f"# rg_table wl={wl} provenance={table.provenance}"]
    lines.append(",".join(repr(float(a)) for a in table.aod_axis))
    for s, row in zip(table.sza_axis, table.rg):
        lines.append(",".join([repr(float(s))] + [repr(float(v)) for v in row]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _locate(axis: np.ndarray, x: float, name: str) -> tuple[int, float]:
    """Index i and fraction t with x = (1-t) axis[i] + t axis[i+1]."""
    if not (axis[0] <= x <= axis[-1]):
        raise OutOfRange(f"{name}={x:g} outside table range [{axis[0]:g}, {axis[-1]:g}]")
    i = int(np.searchsorted(axis, x, side="right")) - 1
    i = min(i, axis.size - 2)
    t = (x - axis[i]) / (axis[i + 1] - axis[i])
    return i, float(t)


def _profile(table: RgTable, sza: float) -> np.ndarray:
    """rg-vs-aod curve at ``sza``: linear blend of the two bracketing rows."""
    i, t = _locate(table.sza_axis, sza, "sza")
    if t == 0.0:
        return table.rg[i].copy()
    if t == 1.0:
        return table.rg[i + 1].copy()
    return (1.0 - t) * table.rg[i] + t * table.rg[i + 1]


def eval_rg(table: RgTable, sza: float, aod: float) -> float:
    """Bilinear interpolation of Table RG at (sza, aod)."""
    prof = _profile(table, float(sza))
    j, u = _locate(table.aod_axis, float(aod), "aod")
    if u == 0.0:
        return float(prof[j])
    if u == 1.0:
        return float(prof[j + 1])
    return float((1.0 - u) * prof[j] + u * prof[j + 1])


def invert_aod(table: RgTable, sza: float, rg: float, image_id: str = "") -> AodEstimate:
    """AOD whose interpolated R/G at ``sza`` equals ``rg``.

    Out-of-range ratios clamp to the nearest AOD endpoint and are flagged
    ``Clamped``; a ratio exactly on the profile's end value is not clamped.
    """
    sza, rg = float(sza), float(rg)
    prof = _profile(table, sza)
    aod = table.aod_axis
    if table.direction < 0:
        prof, aod = prof[::-1], aod[::-1]
    # prof is now strictly increasing
    if rg < prof[0]:
        return AodEstimate(float(aod[0]), QualityFlag.Clamped, image_id, sza, rg)
    if rg > prof[-1]:
        return AodEstimate(float(aod[-1]), QualityFlag.Clamped, image_id, sza, rg)
    k = int(np.searchsorted(prof, rg, side="right")) - 1
    k = min(k, prof.size - 2)
    lo, hi = prof[k], prof[k + 1]
    if rg == lo:
        value = aod[k]
    elif rg == hi:
        value = aod[k + 1]
    else:
        value = aod[k] + (rg - lo) / (hi - lo) * (aod[k + 1] - aod[k])
    return AodEstimate(float(value), QualityFlag.Ok, image_id, sza, rg)


def generate_synthetic_table(
    sza_axis=None,
    aod_axis=None,
    params: SyntheticParams | None = None,
) -> RgTable:
    """Analytic table rg = b(sza) + s(sza) * aod, increasing in AOD."""
    p = params or SyntheticParams()
    sza = np.arange(0.0, 86.0, 5.0) if sza_axis is None else np.asarray(sza_axis, dtype=float)
    aod = np.round(np.arange(0.0, 2.0001, 0.1), 10) if aod_axis is None else np.asarray(aod_axis, dtype=float)
    base = p.b0 + p.b1 * sza
    slope = p.s0 + p.s1 * sza
    if np.any(slope <= 0):
        raise DomainError(f"synthetic slope must be positive on the SZA axis (min {slope.min():g})")
    rg = base[:, None] + slope[:, None] * aod[None, :]
    return RgTable(sza, aod, rg, (550.0, 700.0), "synthetic")


def _distance_km(a: GeoPoint, b: GeoPoint) -> float:
    mean_lat = math.radians((a.lat + b.lat) / 2.0)
    dx = math.radians(b.lon - a.lon) * math.cos(mean_lat)
    dy = math.radians(b.lat - a.lat)
    return 6371.0 * math.hypot(dx, dy)


def estimate_aod_from_image(
    img: RasterImage,
    geo: GeoPoint,
    time: TimeStamp,
    sza_table: SzaTable,
    rg_table: RgTable,
    sky_params: SkyParams | None = None,
    image_id: str = "",
    max_sza: float = DAYLIGHT_MAX_SZA,
    area_radius_km: float = 50.0,
) -> AodEstimate | Unusable:
    """Sky mask -> mean R/G -> SZA from the city table -> AOD.

    Returns :class:`Unusable` when the sky is not usable or the sun is
    lower than ``max_sza``; raises :class:`OutOfArea` when the photo lies
    further than ``area_radius_km`` from the table's city and
    :class:`TableRangeError` when the SZA falls outside Table RG.
    """
    params = sky_params or SkyParams()
    if _distance_km(geo, sza_table.city) > area_radius_km:
        raise OutOfArea(
            f"image at ({geo.lat:.4f}, {geo.lon:.4f}) is more than {area_radius_km:g} km from the table city"
        )
    mask = detect_sky(img, params)
    stats = sky_stats(img, mask, params.min_fraction)
    if not stats.usable:
        return Unusable("insufficient sky", image_id, sky_fraction=stats.sky_fraction)
    sza = lookup_sza(sza_table, time.day_of_year, time.time_of_day)
    if sza > max_sza:
        return Unusable(f"sun too low (sza {sza:.2f} > {max_sza:g})", image_id, sza, stats.sky_fraction)
    if not (rg_table.sza_axis[0] <= sza <= rg_table.sza_axis[-1]):
        raise TableRangeError(
            f"sza {sza:.3f} outside Table RG range [{rg_table.sza_axis[0]:g}, {rg_table.sza_axis[-1]:g}]"
        )
    est = invert_aod(rg_table, sza, stats.mean_rg, image_id)
    if est.quality_flag is QualityFlag.Ok and stats.quality_flag is QualityFlag.Suspect:
        est = AodEstimate(est.aod, QualityFlag.Suspect, image_id, sza, stats.mean_rg)
    log.debug("image %s: sky %.3f, rg %.5f, sza %.3f -> aod %.4f", image_id, stats.sky_fraction, stats.mean_rg, sza, est.aod)
    return est


def aod_observation(
    est: AodEstimate, oid: str, geo: GeoPoint, time: TimeStamp, source: SourceKind = SourceKind.SocialImage
) -> Observation:
    return Observation(oid, source, PhenomenonKind.AOD, max(est.aod, 0.0), geo, time, est.quality_flag)
