"""Adapters from external source material to observations and image work items.

* structured payloads (JSON/XML from web services) via key paths;
* semi-structured HTML pages via regular-expression rules over the raw text;
* local image catalogs standing in for photo-sharing platforms, queried by
  geographic window or, as a fallback, by tags;
* webcam frame sampling at a fixed rate.

Nothing here touches the network.
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .errors import CatalogUnreadable, DomainError, HazeError, InvariantViolation, MalformedDocument, RuleCompileError
from .observation import (
    GeoPoint,
    GeoRect,
    Observation,
    ObservationStore,
    PhenomenonKind,
    QualityFlag,
    SourceKind,
    TimeRange,
    TimeStamp,
)

__all__ = [
    "SourceDescriptor",
    "ExtractionRule",
    "ImageMeta",
    "Catalog",
    "parse_structured_payload",
    "extract_from_html",
    "load_rules",
    "load_catalog",
    "query_geotagged_images",
    "query_tagged_images",
    "mapping_location",
    "sample_frames",
]

log = logging.getLogger(__name__)

IdFactory = Callable[[SourceKind], str]

_AREA_KINDS = {SourceKind.SocialImage, SourceKind.AppImage}
_POINT_KINDS = {SourceKind.WebcamFrame, SourceKind.SensorDevice, SourceKind.FilterPhoto}

DEFAULT_TIME_PATTERN = (
    r"(?P<time>\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}(?::\d{2})?(?:\.\d+)?(?:Z|[+-]\d{2}:?\d{2})?)"
)


@dataclass(frozen=True)
class SourceDescriptor:
    id: str
    kind: SourceKind
    location: GeoPoint | None = None
    area: GeoRect | None = None
    config: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if (self.location is None) == (self.area is None):
            raise InvariantViolation(f"source {self.id!r} needs exactly one of a station point or an area")
        if self.kind in _AREA_KINDS and self.area is None:
            raise InvariantViolation(f"{self.kind.value} sources cover an area, not a point")
        if self.kind in _POINT_KINDS and self.location is None:
            raise InvariantViolation(f"{self.kind.value} sources sit at a point")

    @property
    def position(self) -> GeoPoint:
        return self.location if self.location is not None else self.area.centroid


_NAMED_GROUP = re.compile(r"\(\?<(?=[A-Za-z_])")


def _to_python_regex(pattern: str) -> str:
    # accept the (?<name>...) spelling used by PCRE/.NET/JS; lookbehinds are (?<= and (?<!
    return _NAMED_GROUP.sub("(?P<", pattern)


@dataclass(frozen=True)
class ExtractionRule:
    name: str
    pattern: str
    phenomenon: PhenomenonKind
    scale: float = 1.0
    regex: re.Pattern = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        try:
            compiled = re.compile(_to_python_regex(self.pattern))
        except re.error as exc:
            raise RuleCompileError(f"rule {self.name!r}: {exc}") from exc
        if "value" not in compiled.groupindex:
            raise RuleCompileError(f"rule {self.name!r} has no 'value' capture group")
        if not self.phenomenon.is_numeric:
            raise RuleCompileError(f"rule {self.name!r}: regex rules extract numeric phenomena only")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise RuleCompileError(f"rule {self.name!r}: scale must be positive")
        object.__setattr__(self, "regex", compiled)


def load_rules(path: str | os.PathLike) -> list[ExtractionRule]:
    """Rules file: one ``name|phenomenon|scale|pattern`` per line; ``#`` comments."""
    rules = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("|", 3)
            if len(parts) != 4:
                raise RuleCompileError(f"{path}:{lineno}: expected name|phenomenon|scale|pattern")
            name, phen, scale, pattern = parts
            try:
                rules.append(ExtractionRule(name.strip(), pattern, PhenomenonKind(phen.strip()), float(scale)))
            except ValueError as exc:  # includes RuleCompileError
                raise RuleCompileError(f"{path}:{lineno}: {exc}") from exc
    return rules


_COMPACT_OFFSET = re.compile(r"([+-]\d{2})(\d{2})$")
_FRACTION = re.compile(r"(:\d{2})\.\d+")


def _parse_time(text: str) -> TimeStamp:
    # timestamps have one-second resolution; fractions are truncated
    s = _FRACTION.sub(r"\1", text.strip())
    return TimeStamp.parse(_COMPACT_OFFSET.sub(r"\1:\2", s))


def _default_ids() -> IdFactory:
    return ObservationStore().new_id


def _now_stamp(now: TimeStamp | None) -> TimeStamp:
    return now if now is not None else TimeStamp(datetime.now(timezone.utc))


def _scaled(text: str, scale: float) -> float:
    """Parse a decimal reading and apply the unit scale in decimal arithmetic.

    Decimal keeps ``0.07 mg/m3 * 1000`` at exactly 70 instead of 70.00000000000001.
    """
    s = text.strip().replace("\u2212", "-")
    if "," in s and "." not in s:
        s = s.replace(",", ".")
    try:
        d = Decimal(s)
    except InvalidOperation:
        raise ValueError(f"not a number: {text!r}") from None
    if not d.is_finite():
        raise ValueError(f"not a finite number: {text!r}")
    return float(d * Decimal(repr(float(scale))))


def _walk_json(doc, path: str):
    node = doc
    for seg in path.split("/"):
        if isinstance(node, dict) and seg in node:
            node = node[seg]
        elif isinstance(node, list) and seg.lstrip("-").isdigit() and -len(node) <= int(seg) < len(node):
            node = node[int(seg)]
        else:
            raise KeyError(path)
    return node


def _walk_xml(root: ET.Element, path: str):
    segs = path.split("/")
    if segs and segs[0] == root.tag:
        segs = segs[1:]
    node = root
    for seg in segs:
        if seg.startswith("@"):
            if seg[1:] not in node.attrib:
                raise KeyError(path)
            return node.attrib[seg[1:]]
        child = node.find(seg)
        if child is None:
            raise KeyError(path)
        node = child
    if node.text is None:
        raise KeyError(path)
    return node.text


def parse_structured_payload(
    text: str,
    mapping: Mapping[str, tuple[PhenomenonKind, float]],
    descriptor: SourceDescriptor,
    fmt: str = "json",
    *,
    now: TimeStamp | None = None,
    new_id: IdFactory | None = None,
) -> list[Observation]:
    """One observation per mapped key path present in a JSON or XML document.

    Key paths are ``/``-separated (list indices allowed for JSON, ``@attr``
    for XML attributes). ``descriptor.config["time_path"]`` optionally
    points at an ISO timestamp; otherwise ``now`` is used and the
    observations are flagged Suspect. Missing paths are logged and skipped.
    """
    new_id = new_id or _default_ids()
    if fmt == "json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"source {descriptor.id}: invalid JSON: {exc}") from exc
        walk = _walk_json
    elif fmt == "xml":
        try:
            doc = ET.fromstring(text)
        except ET.ParseError as exc:
            raise MalformedDocument(f"source {descriptor.id}: invalid XML: {exc}") from exc
        walk = _walk_xml
    else:
        raise DomainError(f"unknown payload format {fmt!r}")

    when, flag = _now_stamp(now), QualityFlag.Suspect
    time_path = descriptor.config.get("time_path")
    if time_path:
        try:
            when, flag = _parse_time(str(walk(doc, time_path))), QualityFlag.Ok
        except (KeyError, InvariantViolation):
            log.warning("source %s: no usable timestamp at %r, using ingestion time", descriptor.id, time_path)

    out = []
    for path, (phenomenon, scale) in mapping.items():
        try:
            raw = walk(doc, path)
        except KeyError:
            log.warning("source %s: mapped path %r not found", descriptor.id, path)
            continue
        try:
            value = _scaled(str(raw), scale)
            out.append(Observation(new_id(descriptor.kind), descriptor.kind, phenomenon, value, descriptor.position, when, flag))
        except (ValueError, HazeError) as exc:
            log.warning("source %s: skipping %r=%r: %s", descriptor.id, path, raw, exc)
    return out


def extract_from_html(
    html: str,
    rules: Sequence[ExtractionRule],
    descriptor: SourceDescriptor,
    *,
    now: TimeStamp | None = None,
    new_id: IdFactory | None = None,
) -> list[Observation]:
    """Apply regex rules to the raw page text; observations come out in document order."""
    new_id = new_id or _default_ids()
    time_pattern = descriptor.config.get("time_pattern", DEFAULT_TIME_PATTERN)
    when, flag = _now_stamp(now), QualityFlag.Suspect
    m = re.search(_to_python_regex(time_pattern), html)
    if m:
        try:
            when, flag = _parse_time(m.group("time") if "time" in m.re.groupindex else m.group(0)), QualityFlag.Ok
        except InvariantViolation:
            log.warning("source %s: unparseable page timestamp %r", descriptor.id, m.group(0))

    hits: dict[tuple[str, float, int], tuple[int, int, ExtractionRule]] = {}
    for order, rule in enumerate(rules):
        for match in rule.regex.finditer(html):
            try:
                value = _scaled(match.group("value"), rule.scale)
            except (TypeError, ValueError):
                log.warning("source %s: rule %s matched non-numeric %r", descriptor.id, rule.name, match.group(0))
                continue
            offset = match.start("value")
            hits.setdefault((rule.name, value, offset), (offset, order, rule))

    out = []
    for (name, value, offset), (_, _, rule) in sorted(hits.items(), key=lambda kv: (kv[1][0], kv[1][1])):
        try:
            out.append(Observation(new_id(descriptor.kind), descriptor.kind, rule.phenomenon, value, descriptor.position, when, flag))
        except HazeError as exc:
            log.warning("source %s: rule %s value %r rejected: %s", descriptor.id, name, value, exc)
    return out


@dataclass(frozen=True)
class ImageMeta:
    image_id: str
    path: str
    location: GeoPoint | None
    time: TimeStamp
    source: SourceKind = SourceKind.SocialImage
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.source is SourceKind.SocialImage and self.location is None and not self.tags:
            raise InvariantViolation(f"image {self.image_id!r} has neither a geotag nor tags")

    @property
    def geotagged(self) -> bool:
        return self.location is not None


@dataclass(frozen=True)
class Catalog:
    entries: tuple[ImageMeta, ...]
    root: str = "."

    def resolve(self, meta: ImageMeta) -> Path:
        p = Path(meta.path)
        return p if p.is_absolute() else Path(self.root) / p


CATALOG_FILENAME = "catalog.txt"


def load_catalog(path: str | os.PathLike, source: SourceKind = SourceKind.SocialImage) -> Catalog:
    """Read a sidecar index ``image_id|path|lat|lon|iso8601|tag,tag``.

    ``path`` may be the index file itself or a directory holding
    ``catalog.txt``; ``-`` marks a missing latitude/longitude.
    """
    p = Path(path)
    index = p / CATALOG_FILENAME if p.is_dir() else p
    try:
        text = index.read_text(encoding="utf-8")
    except OSError as exc:
        raise CatalogUnreadable(f"cannot read catalog {index}: {exc}") from exc
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("|")
        if len(parts) != 6:
            raise CatalogUnreadable(f"{index}:{lineno}: expected 6 '|'-separated fields")
        iid, ipath, lat, lon, when, tags = parts
        try:
            if (lat.strip() == "-") != (lon.strip() == "-"):
                raise ValueError("latitude and longitude must both be present or both '-'")
            loc = None if lat.strip() == "-" else GeoPoint(float(lat), float(lon))
            tag_list = tuple(t.strip() for t in tags.split(",") if t.strip() and t.strip() != "-")
            entries.append(ImageMeta(iid, ipath, loc, _parse_time(when), source, tag_list))
        except (ValueError, HazeError) as exc:
            raise CatalogUnreadable(f"{index}:{lineno}: {exc}") from exc
    return Catalog(tuple(entries), str(index.parent))


def _ordered(items):
    return sorted(items, key=lambda m: (m.time, m.image_id))


def query_geotagged_images(catalog: Catalog, window: GeoRect, time_range: TimeRange) -> list[ImageMeta]:
    """Geotagged entries inside ``window`` and ``time_range`` (inclusive), by time then id."""
    return _ordered(
        m for m in catalog.entries if m.location is not None and window.contains(m.location) and time_range.contains(m.time)
    )


def query_tagged_images(catalog: Catalog, tags: Sequence[str], time_range: TimeRange) -> list[ImageMeta]:
    """Entries carrying any of ``tags`` (case-insensitive), each image once."""
    wanted = {t.casefold() for t in tags if t.strip()}
    if not wanted:
        raise DomainError("at least one tag is required")
    seen: dict[str, ImageMeta] = {}
    for m in catalog.entries:
        if m.image_id in seen or not time_range.contains(m.time):
            continue
        if any(t.casefold() in wanted for t in m.tags):
            seen[m.image_id] = m
    return _ordered(seen.values())


def mapping_location(meta: ImageMeta, window: GeoRect) -> tuple[GeoPoint, QualityFlag]:
    """Where to put an image on the map: its geotag, or the window centroid (Suspect)."""
    if meta.location is not None:
        return meta.location, QualityFlag.Ok
    return window.centroid, QualityFlag.Suspect


def _hours(ts) -> float:
    if isinstance(ts, TimeStamp):
        return ts.instant.timestamp() / 3600.0
    if isinstance(ts, datetime):
        return TimeStamp(ts).instant.timestamp() / 3600.0
    return float(ts)


def sample_frames(timestamps: Sequence, rate: float) -> list[int]:
    """Greedy frame selection at ``rate`` frames per hour.

    The first frame is always kept; each further pick is the earliest frame
    at least 1/rate hours after the previous pick. Timestamps are
    TimeStamps, datetimes or plain hours.
    """
    if not rate > 0:
        raise DomainError("frame rate must be positive")
    hours = [_hours(t) for t in timestamps]
    if any(b < a for a, b in zip(hours, hours[1:])):
        raise DomainError("frame timestamps must be ascending")
    if not hours:
        return []
    gap = 1.0 / rate
    # seconds-level slack so whole-minute gaps compare equal to 1/rate
    eps = 1e-9
    picked = [0]
    last = hours[0]
    for i in range(1, len(hours)):
        if hours[i] - last >= gap - eps:
            picked.append(i)
            last = hours[i]
    return picked
