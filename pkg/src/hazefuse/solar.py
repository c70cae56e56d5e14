"""Solar zenith angle and per-city (day-of-year, time-of-day) lookup tables.

Declination and equation of time come from Spencer's Fourier series
(Spencer 1971, "Fourier series representation of the position of the sun").
True solar time is UTC plus the longitude offset and the equation of time;
refraction is ignored.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, MalformedTable, OutOfRange
from .observation import GeoPoint, TimeStamp

__all__ = [
    "SolarContext",
    "SzaTable",
    "solar_declination",
    "equation_of_time",
    "solar_zenith_angle",
    "zenith_angle",
    "true_solar_noon",
    "build_sza_table",
    "lookup_sza",
    "save_sza_table",
    "load_sza_table",
]

MAX_DECLINATION_DEG = 23.45


@dataclass(frozen=True)
class SolarContext:
    location: GeoPoint
    doy: int
    tod_utc: float

    def __post_init__(self):
        if not 1 <= self.doy <= 366:
            raise DomainError(f"day of year {self.doy} outside [1, 366]")
        if not 0.0 <= self.tod_utc < 24.0:
            raise DomainError(f"time of day {self.tod_utc} outside [0, 24)")

    @classmethod
    def at(cls, location: GeoPoint, time: TimeStamp) -> "SolarContext":
        return cls(location, time.day_of_year, time.time_of_day)


def _day_angle(doy, tod=12.0):
    return 2.0 * np.pi * (np.asarray(doy, dtype=float) - 1.0 + np.asarray(tod, dtype=float) / 24.0) / 365.0


def _declination(gamma):
    d = (
        0.006918
        - 0.399912 * np.cos(gamma)
        + 0.070257 * np.sin(gamma)
        - 0.006758 * np.cos(2 * gamma)
        + 0.000907 * np.sin(2 * gamma)
        - 0.002697 * np.cos(3 * gamma)
        + 0.00148 * np.sin(3 * gamma)
    )
    # the truncated series overshoots the obliquity by ~0.006 deg
    lim = math.radians(MAX_DECLINATION_DEG)
    return np.clip(d, -lim, lim)


def _eot_minutes(gamma):
    return 229.18 * (
        0.000075
        + 0.001868 * np.cos(gamma)
        - 0.032077 * np.sin(gamma)
        - 0.014615 * np.cos(2 * gamma)
        - 0.040849 * np.sin(2 * gamma)
    )


def solar_declination(doy: float, tod: float = 12.0) -> float:
    """Solar declination in radians for day-of-year ``doy`` (at ``tod`` UTC hours)."""
    if not 1 <= doy <= 366:
        raise DomainError(f"day of year {doy} outside [1, 366]")
    return float(_declination(_day_angle(doy, tod)))


def equation_of_time(doy: float, tod: float = 12.0) -> float:
    """Equation of time in minutes (apparent minus mean solar time)."""
    if not 1 <= doy <= 366:
        raise DomainError(f"day of year {doy} outside [1, 366]")
    return float(_eot_minutes(_day_angle(doy, tod)))


def zenith_angle(lat, lon, doy, tod):
    """Vectorised zenith angle in degrees; no argument validation."""
    gamma = _day_angle(doy, tod)
    decl = _declination(gamma)
    tst = np.asarray(tod, dtype=float) + np.asarray(lon, dtype=float) / 15.0 + _eot_minutes(gamma) / 60.0
    hour_angle = np.radians(15.0 * (tst - 12.0))
    phi = np.radians(np.asarray(lat, dtype=float))
    cos_z = np.sin(phi) * np.sin(decl) + np.cos(phi) * np.cos(decl) * np.cos(hour_angle)
    return np.degrees(np.arccos(np.clip(cos_z, -1.0, 1.0)))


def _zenith_scalar(lat: float, lon: float, doy: float, tod: float) -> float:
    # same formula as zenith_angle, kept on math.* so table nodes are bit-reproducible
    g = 2.0 * math.pi * (doy - 1.0 + tod / 24.0) / 365.0
    decl = (
        0.006918
        - 0.399912 * math.cos(g)
        + 0.070257 * math.sin(g)
        - 0.006758 * math.cos(2 * g)
        + 0.000907 * math.sin(2 * g)
        - 0.002697 * math.cos(3 * g)
        + 0.00148 * math.sin(3 * g)
    )
    lim = math.radians(MAX_DECLINATION_DEG)
    decl = min(max(decl, -lim), lim)
    eot = 229.18 * (
        0.000075
        + 0.001868 * math.cos(g)
        - 0.032077 * math.sin(g)
        - 0.014615 * math.cos(2 * g)
        - 0.040849 * math.sin(2 * g)
    )
    tst = tod + lon / 15.0 + eot / 60.0
    h = math.radians(15.0 * (tst - 12.0))
    phi = math.radians(lat)
    cos_z = math.sin(phi) * math.sin(decl) + math.cos(phi) * math.cos(decl) * math.cos(h)
    return math.degrees(math.acos(min(max(cos_z, -1.0), 1.0)))


def solar_zenith_angle(ctx: SolarContext) -> float:
    """Solar zenith angle in degrees, in [0, 180]; values above 90 mean night."""
    if not isinstance(ctx, SolarContext):
        raise DomainError(f"expected SolarContext, got {type(ctx).__name__}")
    return _zenith_scalar(ctx.location.lat, ctx.location.lon, float(ctx.doy), float(ctx.tod_utc))


def true_solar_noon(lon: float, doy: int) -> float:
    """UTC hour of local true solar noon (fixed-point iteration on the EoT)."""
    noon = 12.0 - lon / 15.0
    for _ in range(3):
        noon = 12.0 - lon / 15.0 - float(_eot_minutes(_day_angle(doy, noon))) / 60.0
    return noon % 24.0


@dataclass(frozen=True, eq=False)
class SzaTable:
    """SZA in degrees sampled on a (day-of-year, UTC hour) grid for one city.

    ``year_length`` is the wrap period of the day axis and ``wrap`` enables
    cyclic interpolation past the last node on both axes.
    """

    city: GeoPoint
    doy_axis: np.ndarray
    tod_axis: np.ndarray
    sza: np.ndarray
    year_length: int = 366
    wrap: bool = True

    def __post_init__(self):
        doy = np.asarray(self.doy_axis, dtype=float)
        tod = np.asarray(self.tod_axis, dtype=float)
        sza = np.asarray(self.sza, dtype=float)
        if doy.ndim != 1 or tod.ndim != 1 or doy.size < 2 or tod.size < 2:
            raise DomainError("SZA table axes need at least two samples each")
        if np.any(np.diff(doy) <= 0) or np.any(np.diff(tod) <= 0):
            raise DomainError("SZA table axes must be strictly ascending")
        if sza.shape != (doy.size, tod.size):
            raise DomainError(f"SZA matrix shape {sza.shape} does not match axes ({doy.size}, {tod.size})")
        if np.any(~np.isfinite(sza)) or np.any(sza < 0) or np.any(sza > 180):
            raise DomainError("SZA entries must lie in [0, 180]")
        for name, arr in (("doy_axis", doy), ("tod_axis", tod), ("sza", sza)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def build_sza_table(
    city: GeoPoint,
    doy_step: float = 1,
    tod_step: float = 0.5,
    year_length: int = 366,
) -> SzaTable:
    if doy_step <= 0 or tod_step <= 0:
        raise DomainError("table steps must be positive")
    if year_length not in (365, 366):
        raise DomainError(f"year_length must be 365 or 366, got {year_length}")
    doy_axis = np.arange(1.0, year_length + 1.0, doy_step)
    doy_axis = doy_axis[doy_axis <= year_length]
    tod_axis = np.arange(0.0, 24.0, tod_step)
    tod_axis = tod_axis[tod_axis < 24.0]
    if doy_axis.size < 2 or tod_axis.size < 2:
        raise DomainError("table steps leave fewer than two samples on an axis")
    sza = np.array(
        [[_zenith_scalar(city.lat, city.lon, float(d), float(t)) for t in tod_axis] for d in doy_axis]
    )
    return SzaTable(city, doy_axis, tod_axis, sza, year_length=year_length)


def _bracket(axis: np.ndarray, x: float, period: float | None, wrap: bool, name: str):
    """Return (i0, i1, frac) such that value = (1-frac)*v[i0] + frac*v[i1]."""
    lo, hi = axis[0], axis[-1]
    if lo <= x <= hi:
        i = int(np.searchsorted(axis, x, side="right")) - 1
        if i >= axis.size - 1:
            return axis.size - 1, axis.size - 1, 0.0
        span = axis[i + 1] - axis[i]
        return i, i + 1, float((x - axis[i]) / span)
    if not wrap or period is None:
        raise OutOfRange(f"{name}={x} outside table axis [{lo}, {hi}]")
    # interval between the last node and the first node of the next period
    span = lo + period - hi
    if span <= 0:
        raise OutOfRange(f"{name}={x} outside table axis [{lo}, {hi}]")
    offset = x - hi if x > hi else x + period - hi
    if not 0.0 <= offset <= span:
        raise OutOfRange(f"{name}={x} outside one wrap period of the axis")
    return axis.size - 1, 0, float(offset / span)


def lookup_sza(table: SzaTable, doy: float, tod: float) -> float:
    """Bilinear interpolation in the table; exact at grid nodes.

    With wrapping enabled, a time of day past the last ToD node continues
    into the first node of the *next* day, and the day axis wraps at the
    end of the year.
    """
    doy, tod = float(doy), float(tod)
    tod_axis = table.tod_axis
    period = float(table.year_length)

    def column(d: float, j: int) -> float:
        if table.wrap and d > table.doy_axis[-1] + (table.doy_axis[0] + period - table.doy_axis[-1]):
            d -= period
        i0, i1, f = _bracket(table.doy_axis, d, period, table.wrap, "doy")
        if f == 0.0:
            return float(table.sza[i0, j])
        return float((1.0 - f) * table.sza[i0, j] + f * table.sza[i1, j])

    if tod_axis[0] <= tod <= tod_axis[-1]:
        j0, j1, ft = _bracket(tod_axis, tod, 24.0, False, "tod")
        d0 = d1 = doy
    else:
        j0, j1, ft = _bracket(tod_axis, tod, 24.0, table.wrap, "tod")
        # the wrap interval runs from the last node of one day to the first node of the next
        d0, d1 = (doy, doy + 1.0) if tod > tod_axis[-1] else (doy - 1.0, doy)
        if d0 < table.doy_axis[0] and table.wrap:
            d0 += period
    if ft == 0.0:
        return column(d0, j0)
    return (1.0 - ft) * column(d0, j0) + ft * column(d1, j1)


def save_sza_table(table: SzaTable, path: str | os.PathLike) -> None:
    lines = [f"# sza_table lat={table.city.lat:.6f} lon={table.city.lon:.6f} year={table.year_length}"]
    lines.append("," + ",".join(f"{t:g}" for t in table.tod_axis))
    for d, row in zip(table.doy_axis, table.sza):
        lines.append(f"{d:g}," + ",".join(f"{v:.4f}" for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_sza_table(path: str | os.PathLike) -> SzaTable:
    with open(path, encoding="utf-8") as fh:
        rows = [ln.strip() for ln in fh if ln.strip()]
    if not rows or not rows[0].startswith("# sza_table"):
        raise MalformedTable(f"{path}: missing '# sza_table' header")
    meta = dict(tok.split("=", 1) for tok in rows[0][len("# sza_table"):].split() if "=" in tok)
    try:
        city = GeoPoint(float(meta["lat"]), float(meta["lon"]))
        tod_axis = [float(x) for x in rows[1].split(",")[1:]]
        doy_axis, body = [], []
        for lineno, row in enumerate(rows[2:], start=3):
            cells = row.split(",")
            if len(cells) != len(tod_axis) + 1:
                raise MalformedTable(f"{path}: line {lineno} has {len(cells) - 1} values, expected {len(tod_axis)}")
            doy_axis.append(float(cells[0]))
            body.append([float(c) for c in cells[1:]])
    except (KeyError, ValueError, IndexError) as exc:
        if isinstance(exc, MalformedTable):
            raise
        raise MalformedTable(f"{path}: {exc}") from exc
    if "year" in meta:
        year_length = int(meta["year"])
    else:
        year_length = 366 if doy_axis and doy_axis[-1] > 365 else 365
    return SzaTable(city, np.array(doy_axis), np.array(tod_axis), np.array(body), year_length=year_length)
