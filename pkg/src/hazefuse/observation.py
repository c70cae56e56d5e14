"""Observation model and file-backed observation store.

Every source in the system (web service, scraped page, photo, sensor,
filter photo) is treated as a sensor producing :class:`Observation` records.
The store keeps them in memory, answers box/time/phenomenon queries and
persists them as one ``|``-separated line per observation::

    id|source|phenomenon|value|lat|lon|iso8601_utc|quality_flag
    ws-0001|WebService|PM10|42.0|40.630000|22.950000|2016-06-01T12:00:00Z|Ok

Coordinates are written with 6 decimals (about 0.1 m), values with the
shortest repr that round-trips the float exactly.
"""

from __future__ import annotations

import math
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Iterable, Iterator, Sequence, Union

from .errors import (
    DuplicateId,
    InvariantViolation,
    IoFailure,
    MalformedQuery,
    MalformedRecord,
    UnsupportedPhenomenon,
)

__all__ = [
    "GeoPoint",
    "GeoRect",
    "TimeStamp",
    "TimeRange",
    "SourceKind",
    "PhenomenonKind",
    "AirQualityClass",
    "QualityFlag",
    "Observation",
    "ObservationStore",
    "classify_aq",
    "format_observation",
    "parse_observation",
]


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        lat, lon = float(self.lat), float(self.lon)
        if not (math.isfinite(lat) and -90.0 <= lat <= 90.0):
            raise InvariantViolation(f"latitude {self.lat!r} outside [-90, 90]")
        if not (math.isfinite(lon) and -180.0 <= lon <= 180.0):
            raise InvariantViolation(f"longitude {self.lon!r} outside [-180, 180]")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)


@dataclass(frozen=True)
class GeoRect:
    """Axis-aligned lat/lon window with inclusive bounds."""

    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float

    def __post_init__(self):
        if self.min_lat > self.max_lat or self.min_lon > self.max_lon:
            raise MalformedQuery(f"malformed rectangle {self}")
        # corners must be valid points
        GeoPoint(self.min_lat, self.min_lon)
        GeoPoint(self.max_lat, self.max_lon)

    def contains(self, p: GeoPoint) -> bool:
        return self.min_lat <= p.lat <= self.max_lat and self.min_lon <= p.lon <= self.max_lon

    @property
    def centroid(self) -> GeoPoint:
        return GeoPoint((self.min_lat + self.max_lat) / 2.0, (self.min_lon + self.max_lon) / 2.0)


@dataclass(frozen=True, order=True)
class TimeStamp:
    """UTC instant with one-second resolution."""

    instant: datetime

    def __post_init__(self):
        dt = self.instant
        if not isinstance(dt, datetime):
            raise InvariantViolation(f"expected datetime, got {type(dt).__name__}")
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        dt = dt.astimezone(timezone.utc).replace(microsecond=0)
        object.__setattr__(self, "instant", dt)

    @classmethod
    def parse(cls, text: str) -> "TimeStamp":
        s = text.strip()
        if s.endswith("Z") or s.endswith("z"):
            s = s[:-1] + "+00:00"
        try:
            dt = datetime.fromisoformat(s)
        except ValueError as exc:
            raise InvariantViolation(f"not an ISO 8601 timestamp: {text!r}") from exc
        return cls(dt)

    @classmethod
    def of(cls, year: int, month: int, day: int, hour: int = 0, minute: int = 0, second: int = 0):
        return cls(datetime(year, month, day, hour, minute, second, tzinfo=timezone.utc))

    @property
    def day_of_year(self) -> int:
        return self.instant.timetuple().tm_yday

    @property
    def time_of_day(self) -> float:
        """Hours since UTC midnight, in [0, 24)."""
        t = self.instant
        return t.hour + t.minute / 60.0 + t.second / 3600.0

    def iso(self) -> str:
        return self.instant.strftime("%Y-%m-%dT%H:%M:%SZ")

    def __add__(self, delta: timedelta) -> "TimeStamp":
        return TimeStamp(self.instant + delta)

    def __str__(self) -> str:
        return self.iso()


@dataclass(frozen=True)
class TimeRange:
    start: TimeStamp
    end: TimeStamp

    def __post_init__(self):
        if self.start > self.end:
            raise MalformedQuery(f"time range start {self.start} after end {self.end}")

    def contains(self, t: TimeStamp) -> bool:
        return self.start <= t <= self.end

    @classmethod
    def everything(cls) -> "TimeRange":
        return cls(TimeStamp.of(1, 1, 1), TimeStamp.of(9999, 12, 31, 23, 59, 59))


class SourceKind(Enum):
    WebService = "WebService"
    WebSite = "WebSite"
    SocialImage = "SocialImage"
    AppImage = "AppImage"
    WebcamFrame = "WebcamFrame"
    SensorDevice = "SensorDevice"
    FilterPhoto = "FilterPhoto"

    @property
    def id_prefix(self) -> str:
        return _ID_PREFIX[self]


_ID_PREFIX = {
    SourceKind.WebService: "ws",
    SourceKind.WebSite: "web",
    SourceKind.SocialImage: "soc",
    SourceKind.AppImage: "app",
    SourceKind.WebcamFrame: "cam",
    SourceKind.SensorDevice: "dev",
    SourceKind.FilterPhoto: "flt",
}


class PhenomenonKind(Enum):
    PM10 = "PM10"
    PM2_5 = "PM2_5"
    AOD = "AOD"
    AirQualityClass = "AirQualityClass"

    @property
    def unit(self) -> str:
        return {"PM10": "ug/m3", "PM2_5": "ug/m3", "AOD": "1", "AirQualityClass": "class"}[self.value]

    @property
    def is_numeric(self) -> bool:
        return self is not PhenomenonKind.AirQualityClass


class AirQualityClass(Enum):
    Low = 0
    Medium = 1
    High = 2
    VeryHigh = 3

    def __lt__(self, other):
        if not isinstance(other, AirQualityClass):
            return NotImplemented
        return self.value < other.value

    def __le__(self, other):
        if not isinstance(other, AirQualityClass):
            return NotImplemented
        return self.value <= other.value

    def __gt__(self, other):
        if not isinstance(other, AirQualityClass):
            return NotImplemented
        return self.value > other.value

    def __ge__(self, other):
        if not isinstance(other, AirQualityClass):
            return NotImplemented
        return self.value >= other.value


class QualityFlag(Enum):
    Ok = "Ok"
    Clamped = "Clamped"
    Suspect = "Suspect"


Value = Union[float, AirQualityClass]


@dataclass(frozen=True)
class Observation:
    id: str
    source: SourceKind
    phenomenon: PhenomenonKind
    value: Value
    location: GeoPoint
    time: TimeStamp
    quality_flag: QualityFlag = QualityFlag.Ok

    def __post_init__(self):
        if not self.id or any(c in self.id for c in "|\r\n"):
            raise InvariantViolation(f"invalid observation id {self.id!r}")
        if not isinstance(self.source, SourceKind):
            raise InvariantViolation(f"bad source {self.source!r}")
        if not isinstance(self.phenomenon, PhenomenonKind):
            raise InvariantViolation(f"bad phenomenon {self.phenomenon!r}")
        if not isinstance(self.location, GeoPoint) or not isinstance(self.time, TimeStamp):
            raise InvariantViolation("location must be a GeoPoint and time a TimeStamp")
        if self.phenomenon is PhenomenonKind.AirQualityClass:
            if not isinstance(self.value, AirQualityClass):
                raise InvariantViolation("AirQualityClass observations need a class value")
        else:
            if isinstance(self.value, (AirQualityClass, bool)):
                raise InvariantViolation(f"{self.phenomenon.value} needs a real value")
            v = float(self.value)
            if not math.isfinite(v):
                raise InvariantViolation(f"non-finite value {self.value!r}")
            if v < 0.0:
                raise InvariantViolation(f"negative {self.phenomenon.value} value {v}")
            object.__setattr__(self, "value", v)


def classify_aq(value: float, phenomenon: PhenomenonKind, thresholds: Sequence[float]) -> AirQualityClass:
    """Map a concentration to one of four ordered classes.

    ``thresholds`` are the three lower bounds of Medium, High and VeryHigh.
    A value sitting exactly on a bound gets the higher class.
    """
    if phenomenon is PhenomenonKind.AirQualityClass:
        raise UnsupportedPhenomenon("value is already an air-quality class")
    t = [float(x) for x in thresholds]
    if len(t) != 3 or not (t[0] < t[1] < t[2]):
        raise InvariantViolation(f"thresholds must be 3 strictly increasing values, got {thresholds!r}")
    level = sum(1 for bound in t if value >= bound)
    return AirQualityClass(level)


def format_observation(obs: Observation) -> str:
    if isinstance(obs.value, AirQualityClass):
        value = obs.value.name
    else:
        value = repr(float(obs.value))
    return "|".join(
        [
            obs.id,
            obs.source.value,
            obs.phenomenon.value,
            value,
            f"{obs.location.lat:.6f}",
            f"{obs.location.lon:.6f}",
            obs.time.iso(),
            obs.quality_flag.value,
        ]
    )


def parse_observation(line: str) -> Observation:
    parts = line.rstrip("\r\n").split("|")
    if len(parts) != 8:
        raise ValueError(f"expected 8 fields, found {len(parts)}")
    oid, source, phen, value, lat, lon, when, flag = parts
    phenomenon = PhenomenonKind(phen)
    if phenomenon is PhenomenonKind.AirQualityClass:
        val: Value = AirQualityClass[value]
    else:
        val = float(value)
    return Observation(
        id=oid,
        source=SourceKind(source),
        phenomenon=phenomenon,
        value=val,
        location=GeoPoint(float(lat), float(lon)),
        time=TimeStamp.parse(when),
        quality_flag=QualityFlag(flag),
    )


class ObservationStore:
    """In-memory observation repository with line-file persistence.

    Reads may run concurrently; writes take an internal lock so concurrent
    inserts are serialized.
    """

    def __init__(self, observations: Iterable[Observation] = ()):
        self._records: dict[str, Observation] = {}
        self._lock = threading.Lock()
        self._counters: dict[str, int] = {}
        self.extend(observations)

    def __repr__(self) -> str:
        return f"ObservationStore(<{len(self)} observations>)"

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[Observation]:
        return iter(list(self._records.values()))

    def __contains__(self, oid: str) -> bool:
        return oid in self._records

    def get(self, oid: str) -> Observation:
        return self._records[oid]

    def insert(self, obs: Observation) -> "ObservationStore":
        if not isinstance(obs, Observation):
            raise InvariantViolation(f"not an Observation: {obs!r}")
        with self._lock:
            if obs.id in self._records:
                raise DuplicateId(f"duplicate observation id {obs.id!r}")
            self._records[obs.id] = obs
        return self

    def extend(self, observations: Iterable[Observation]) -> "ObservationStore":
        for obs in observations:
            self.insert(obs)
        return self

    def new_id(self, source: SourceKind) -> str:
        """Next free ``<prefix>-<counter>`` id for ``source``."""
        prefix = source.id_prefix
        with self._lock:
            n = self._counters.get(prefix, 0)
            while True:
                n += 1
                candidate = f"{prefix}-{n:04d}"
                if candidate not in self._records:
                    break
            self._counters[prefix] = n
        return candidate

    def query(
        self,
        bbox: GeoRect,
        time_range: TimeRange,
        phenomenon: PhenomenonKind | None = None,
    ) -> list[Observation]:
        if not isinstance(bbox, GeoRect) or not isinstance(time_range, TimeRange):
            raise MalformedQuery("query needs a GeoRect and a TimeRange")
        hits = [
            o
            for o in list(self._records.values())
            if bbox.contains(o.location)
            and time_range.contains(o.time)
            and (phenomenon is None or o.phenomenon is phenomenon)
        ]
        hits.sort(key=lambda o: (o.time, o.id))
        return hits

    def save(self, path: str | os.PathLike) -> None:
        lines = [format_observation(o) + "\n" for o in list(self._records.values())]
        tmp = f"{os.fspath(path)}.tmp"
        try:
            with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
                fh.writelines(lines)
            os.replace(tmp, path)
        except OSError as exc:
            raise IoFailure(f"cannot write store {path}: {exc}") from exc

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ObservationStore":
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise IoFailure(f"cannot read store {path}: {exc}") from exc
        store = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obs = parse_observation(line)
            except (ValueError, KeyError) as exc:
                raise MalformedRecord(str(exc), line=lineno, path=os.fspath(path)) from exc
            if obs.id in store._records:
                raise MalformedRecord(f"duplicate id {obs.id!r}", line=lineno, path=os.fspath(path))
            store._records[obs.id] = obs
        return store
