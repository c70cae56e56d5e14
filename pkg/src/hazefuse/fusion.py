"""Residual kriging of point observations onto a prior base map.

Steps: sample the base map at each observation, krige the residuals with
an ordinary kriging system whose variogram is either supplied or fitted
from an empirical semivariogram, and add the kriged residual surface back
onto the base map.

Distances are equirectangular, in degrees: the longitude difference is
scaled by the cosine of the pair's mean latitude. That is adequate at city
scale and keeps everything in the grid's own units.
"""

from __future__ import annotations

import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    DomainError,
    InsufficientBins,
    IoFailure,
    MalformedDocument,
    MixedPhenomena,
    OutOfExtent,
    SingularSystem,
    TooFewPoints,
    UnsupportedPhenomenon,
)
from .observation import GeoPoint, Observation

__all__ = [
    "GridSpec",
    "BaseMap",
    "VariogramKind",
    "VariogramModel",
    "FusedMap",
    "LagBin",
    "distance_deg",
    "sample_basemap",
    "compute_residuals",
    "empirical_semivariogram",
    "fit_variogram",
    "krige",
    "ordinary_kriging",
    "residual_kriging_fuse",
    "write_grid",
    "read_grid",
    "read_basemap",
    "save_fused",
    "variance_path",
    "geojson_export",
    "csv_export",
]

log = logging.getLogger(__name__)

# condition numbers beyond this are treated as singular
MAX_CONDITION = 1e12
# cells are solved in fixed-size blocks so results do not depend on worker count
CHUNK = 512


@dataclass(frozen=True)
class GridSpec:
    """Regular lat/lon grid; (lat0, lon0) is the SW corner, row 0 is the southernmost."""

    lat0: float
    lon0: float
    dlat: float
    dlon: float
    n_rows: int
    n_cols: int

    def __post_init__(self):
        if not (self.dlat > 0 and self.dlon > 0 and math.isfinite(self.dlat) and math.isfinite(self.dlon)):
            raise DomainError("cell sizes must be positive")
        if self.n_rows < 1 or self.n_cols < 1:
            raise DomainError("grid needs at least one row and one column")
        GeoPoint(self.lat0, self.lon0)
        GeoPoint(self.lat0 + self.n_rows * self.dlat, self.lon0 + self.n_cols * self.dlon)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(min_lat, min_lon, max_lat, max_lon)."""
        return (self.lat0, self.lon0, self.lat0 + self.n_rows * self.dlat, self.lon0 + self.n_cols * self.dlon)

    def contains(self, p: GeoPoint) -> bool:
        a, b, c, d = self.extent
        return a <= p.lat <= c and b <= p.lon <= d

    def center(self, row: int, col: int) -> GeoPoint:
        return GeoPoint(self.lat0 + (row + 0.5) * self.dlat, self.lon0 + (col + 0.5) * self.dlon)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre latitude and longitude arrays, each of shape (n_rows, n_cols)."""
        lat = self.lat0 + (np.arange(self.n_rows) + 0.5) * self.dlat
        lon = self.lon0 + (np.arange(self.n_cols) + 0.5) * self.dlon
        return np.meshgrid(lat, lon, indexing="ij")


def _frozen(values, shape) -> np.ndarray:
    v = np.array(values, dtype=float)
    if v.shape != tuple(shape):
        raise DimensionMismatch(f"values have shape {v.shape}, grid is {tuple(shape)}")
    v.setflags(write=False)
    return v


@dataclass(frozen=True, eq=False)
class BaseMap:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, self.grid.shape))


@dataclass(frozen=True, eq=False)
class FusedMap:
    grid: GridSpec
    values: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, self.grid.shape))
        var = np.array(self.variance, dtype=float)
        if var.shape != self.grid.shape:
            raise DimensionMismatch(f"variance has shape {var.shape}, grid is {self.grid.shape}")
        if np.any(var < -1e-9):
            raise DomainError(f"negative kriging variance {var.min()!r}")
        # round-off negatives are floored so files never show -0.000000
        var = np.where(var < 0, 0.0, var)
        object.__setattr__(self, "variance", _frozen(var, self.grid.shape))


class VariogramKind(Enum):
    Exponential = "exponential"
    Spherical = "spherical"


@dataclass(frozen=True)
class VariogramModel:
    kind: VariogramKind
    nugget: float
    sill: float
    range: float

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", VariogramKind(self.kind.lower()))
        if not (self.nugget >= 0 and self.sill >= self.nugget and self.range > 0):
            raise DomainError(f"need 0 <= nugget <= sill and range > 0, got {self}")
        if not all(math.isfinite(v) for v in (self.nugget, self.sill, self.range)):
            raise DomainError("variogram parameters must be finite")

    def __call__(self, h):
        """Semivariance at lag ``h``; zero at exactly h = 0, nugget as the limit from above."""
        h = np.asarray(h, dtype=float)
        ps = self.sill - self.nugget
        if self.kind is VariogramKind.Exponential:
            g = self.nugget + ps * (1.0 - np.exp(-3.0 * h / self.range))
        else:
            r = np.minimum(h / self.range, 1.0)
            g = self.nugget + ps * (1.5 * r - 0.5 * r**3)
        return np.where(h > 0, g, 0.0)


class LagBin(NamedTuple):
    lag: float
    gamma: float
    count: int


def distance_deg(lat1, lon1, lat2, lon2):
    """Equirectangular distance in degrees; broadcasts."""
    lat1, lon1, lat2, lon2 = (np.asarray(a, dtype=float) for a in (lat1, lon1, lat2, lon2))
    dx = (lon1 - lon2) * np.cos(np.radians(0.5 * (lat1 + lat2)))
    return np.hypot(lat1 - lat2, dx)


def _index(x: float, origin: float, step: float, n: int) -> tuple[int, int, float]:
    f = (x - origin) / step - 0.5
    r = round(f)
    if abs(f - r) < 1e-9:
        f = float(r)  # exact cell-centre hits return the stored value
    f = min(max(f, 0.0), n - 1.0)
    i = min(int(math.floor(f)), max(n - 2, 0))
    return i, min(i + 1, n - 1), f - i


def sample_basemap(bmap: BaseMap, p: GeoPoint) -> float:
    """Bilinear interpolation over cell centres, held constant in the outer half-cells."""
    g = bmap.grid
    if not g.contains(p):
        raise OutOfExtent(f"({p.lat}, {p.lon}) outside grid extent {g.extent}")
    r0, r1, tr = _index(p.lat, g.lat0, g.dlat, g.n_rows)
    c0, c1, tc = _index(p.lon, g.lon0, g.dlon, g.n_cols)
    v = bmap.values
    if tr == 0.0 and tc == 0.0:
        return float(v[r0, c0])
    top = v[r0, c0] * (1 - tc) + v[r0, c1] * tc
    bottom = v[r1, c0] * (1 - tc) + v[r1, c1] * tc
    return float(top * (1 - tr) + bottom * tr)


def compute_residuals(obs: Sequence[Observation], bmap: BaseMap) -> list[tuple[GeoPoint, float]]:
    """Observation minus base map at the observation's location."""
    kinds = {o.phenomenon for o in obs}
    if len(kinds) > 1:
        raise MixedPhenomena(f"cannot fuse mixed phenomena {sorted(k.value for k in kinds)}")
    if kinds and not next(iter(kinds)).is_numeric:
        raise UnsupportedPhenomenon("class-valued observations cannot be kriged")
    out = []
    for o in obs:
        if not bmap.grid.contains(o.location):
            log.warning("observation %s at (%s, %s) outside the grid; dropped", o.id, o.location.lat, o.location.lon)
            continue
        out.append((o.location, float(o.value) - sample_basemap(bmap, o.location)))
    return out


def _coords(points):
    lat = np.array([p.lat for p, _ in points], dtype=float)
    lon = np.array([p.lon for p, _ in points], dtype=float)
    val = np.array([v for _, v in points], dtype=float)
    return lat, lon, val


def empirical_semivariogram(points: Sequence[tuple[GeoPoint, float]], n_bins: int = 10, max_lag: float | None = None) -> list[LagBin]:
    """Binned semivariance ½(v_i - v_j)² over unordered pairs within ``max_lag``.

    Bins have equal width ``max_lag / n_bins``; each entry reports the bin
    centre, the mean semivariance and the pair count. Empty bins are left
    out. ``max_lag`` defaults to half the largest pair distance.
    """
    if len(points) < 2:
        raise TooFewPoints(f"need at least 2 points, got {len(points)}")
    if n_bins < 1:
        raise DomainError("n_bins must be >= 1")
    lat, lon, val = _coords(points)
    i, j = np.triu_indices(len(points), k=1)
    d = distance_deg(lat[i], lon[i], lat[j], lon[j])
    if max_lag is None:
        max_lag = 0.5 * float(d.max())
        if max_lag <= 0:
            max_lag = float(d.max()) or 1.0
    if not max_lag > 0:
        raise DomainError("max_lag must be positive")
    keep = d <= max_lag
    width = max_lag / n_bins
    k = np.minimum((d[keep] / width).astype(np.int64), n_bins - 1)
    sv = 0.5 * (val[i][keep] - val[j][keep]) ** 2
    counts = np.bincount(k, minlength=n_bins)
    sums = np.bincount(k, weights=sv, minlength=n_bins)
    return [
        LagBin((b + 0.5) * width, float(sums[b] / counts[b]), int(counts[b]))
        for b in range(n_bins)
        if counts[b] > 0
    ]


def _objective(h, g, w, kind, nugget, psill, rng):
    m = VariogramModel(kind, nugget, nugget + psill, rng)(h)
    return float(np.sum(w * (m - g) ** 2))


def _shape(h, kind, rng):
    # unit partial-sill curve (nugget 0, sill 1)
    return VariogramModel(kind, 0.0, 1.0, rng)(h)


def fit_variogram(empirical: Sequence[LagBin], kind: VariogramKind | str = VariogramKind.Exponential) -> VariogramModel:
    """Pair-count weighted least squares for (nugget, sill, range).

    A 10 x 10 x 10 grid over data-driven bounds picks the start; coordinate
    descent then refines it, solving nugget and partial sill in closed form
    and range by a bounded golden-section search. A pure-nugget model wins
    whenever it fits at least as well.
    """
    kind = VariogramKind(kind.lower()) if isinstance(kind, str) else kind
    bins = [b for b in empirical if b.count > 0]
    if len(bins) < 3:
        raise InsufficientBins(f"need at least 3 non-empty bins, got {len(bins)}")
    h = np.array([b.lag for b in bins], dtype=float)
    g = np.array([b.gamma for b in bins], dtype=float)
    w = np.array([b.count for b in bins], dtype=float)
    hmax = float(h.max())
    gmax = float(g.max())
    r_lo, r_hi = hmax * 1e-3, hmax * 10.0

    pure = float(np.sum(w * g) / np.sum(w))
    pure_model = VariogramModel(kind, pure, pure, hmax)
    pure_cost = float(np.sum(w * (pure - g) ** 2))
    if gmax == 0.0:
        return pure_model

    best = (math.inf, 0.0, 0.0, hmax)
    for nug in np.linspace(0.0, gmax, 10):
        for ps in np.linspace(0.0, 1.5 * gmax, 10):
            for rng in np.linspace(hmax / 10.0, 2.0 * hmax, 10):
                c = _objective(h, g, w, kind, nug, ps, rng)
                if c < best[0]:
                    best = (c, float(nug), float(ps), float(rng))
    cost, nug, ps, rng = best

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    for _ in range(200):
        prev = cost
        f = _shape(h, kind, rng)
        nug = max(0.0, float(np.sum(w * (g - ps * f)) / np.sum(w)))
        denom = float(np.sum(w * f * f))
        ps = max(0.0, float(np.sum(w * f * (g - nug)) / denom)) if denom > 0 else 0.0
        # golden section on log(range)
        a, b = math.log(r_lo), math.log(r_hi)
        c1, c2 = b - invphi * (b - a), a + invphi * (b - a)
        f1 = _objective(h, g, w, kind, nug, ps, math.exp(c1))
        f2 = _objective(h, g, w, kind, nug, ps, math.exp(c2))
        for _ in range(80):
            if f1 <= f2:
                b, c2, f2 = c2, c1, f1
                c1 = b - invphi * (b - a)
                f1 = _objective(h, g, w, kind, nug, ps, math.exp(c1))
            else:
                a, c1, f1 = c1, c2, f2
                c2 = a + invphi * (b - a)
                f2 = _objective(h, g, w, kind, nug, ps, math.exp(c2))
        cand = math.exp(0.5 * (a + b))
        if _objective(h, g, w, kind, nug, ps, cand) <= _objective(h, g, w, kind, nug, ps, rng):
            rng = cand
        cost = _objective(h, g, w, kind, nug, ps, rng)
        if prev - cost <= 1e-15 * max(prev, 1e-300):
            break

    if pure_cost <= cost * (1.0 + 1e-9) + 1e-300 or ps == 0.0:
        return pure_model
    return VariogramModel(kind, nug, nug + ps, rng)


def _merge_duplicates(points: Sequence[tuple[GeoPoint, float]]):
    groups: dict[tuple[float, float], list[float]] = {}
    for p, v in points:
        groups.setdefault((p.lat, p.lon), []).append(float(v))
    if any(len(vs) > 1 for vs in groups.values()):
        log.info("averaged %d duplicate locations before kriging", sum(len(vs) > 1 for vs in groups.values()))
    keys = list(groups)
    lat = np.array([k[0] for k in keys])
    lon = np.array([k[1] for k in keys])
    val = np.array([math.fsum(groups[k]) / len(groups[k]) for k in keys])
    return lat, lon, val


class _System:
    """LU factorization of the ordinary kriging matrix, shared by every target."""

    def __init__(self, lat, lon, model: VariogramModel):
        n = lat.size
        gam = model(distance_deg(lat[:, None], lon[:, None], lat[None, :], lon[None, :]))
        a = np.ones((n + 1, n + 1))
        a[:n, :n] = gam
        a[n, n] = 0.0
        with np.errstate(all="ignore"):
            cond = float(np.linalg.cond(a))
        if not math.isfinite(cond) or cond > MAX_CONDITION:
            raise SingularSystem("ordinary kriging matrix is singular or ill-conditioned", cond)
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            try:
                self.lu = scipy.linalg.lu_factor(a)
            except (scipy.linalg.LinAlgWarning, ValueError) as exc:
                raise SingularSystem(f"factorization failed: {exc}", cond) from exc
        self.lat, self.lon, self.model, self.n, self.condition = lat, lon, model, n, cond

    def solve(self, tlat: np.ndarray, tlon: np.ndarray) -> np.ndarray:
        """Weights (rows 0..n-1) and Lagrange multiplier (row n) per target column."""
        rhs = np.ones((self.n + 1, tlat.size))
        rhs[: self.n] = self.model(distance_deg(self.lat[:, None], self.lon[:, None], tlat[None, :], tlon[None, :]))
        sol = scipy.linalg.lu_solve(self.lu, rhs)
        return sol, rhs


def krige(
    points: Sequence[tuple[GeoPoint, float]],
    model: VariogramModel,
    targets: Sequence[GeoPoint] | tuple[np.ndarray, np.ndarray],
    *,
    workers: int = 1,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ordinary kriging at arbitrary targets.

    Returns ``(prediction, variance, weights)``; ``weights`` has one row per
    distinct data location and one column per target. Targets are either a
    list of GeoPoints or a pair of flat lat/lon arrays.
    """
    if len(points) < 1:
        raise TooFewPoints("kriging needs at least one point")
    lat, lon, val = _merge_duplicates(points)
    system = _System(lat, lon, model)
    if isinstance(targets, tuple):
        tlat, tlon = (np.asarray(t, dtype=float).ravel() for t in targets)
    else:
        tlat = np.array([t.lat for t in targets], dtype=float)
        tlon = np.array([t.lon for t in targets], dtype=float)
    m = tlat.size
    pred = np.empty(m)
    var = np.empty(m)
    weights = np.empty((system.n, m))

    def run(start: int) -> None:
        sl = slice(start, min(start + CHUNK, m))
        sol, rhs = system.solve(tlat[sl], tlon[sl])
        w = sol[: system.n]
        weights[:, sl] = w
        pred[sl] = val @ w
        var[sl] = np.sum(w * rhs[: system.n], axis=0) + sol[system.n]

    starts = range(0, m, CHUNK)
    if workers > 1 and m > CHUNK:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, starts))
    else:
        for s in starts:
            run(s)
    return pred, var, weights


def ordinary_kriging(
    points: Sequence[tuple[GeoPoint, float]],
    model: VariogramModel,
    grid: GridSpec,
    *,
    workers: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Kriged surface and kriging variance at every cell centre of ``grid``."""
    clat, clon = grid.centers()
    pred, var, _ = krige(points, model, (clat, clon), workers=workers)
    return pred.reshape(grid.shape), var.reshape(grid.shape)


def _fallback_model(resid: np.ndarray, grid: GridSpec) -> VariogramModel:
    var = float(np.var(resid))
    a, b, c, d = grid.extent
    diag = float(distance_deg(a, b, c, d))
    return VariogramModel(VariogramKind.Exponential, 0.0, var, 0.5 * diag)


def residual_kriging_fuse(
    obs: Sequence[Observation],
    basemap: BaseMap,
    variogram: VariogramModel | str = "auto",
    *,
    n_bins: int = 10,
    max_lag: float | None = None,
    kind: VariogramKind = VariogramKind.Exponential,
    workers: int = 1,
) -> FusedMap:
    """Base map plus the kriged surface of observation residuals.

    With ``variogram="auto"`` the model is fitted from the residuals. When
    there are too few residuals for a fit, an exponential model with zero
    nugget, the residual variance as sill and half the grid diagonal as
    range is used instead. With no observations at all the base map is
    returned unchanged with variance equal to the sill (NaN when the sill is
    unknown). Constant residuals give a constant residual surface.
    """
    grid = basemap.grid
    pairs = compute_residuals(obs, basemap)
    auto = isinstance(variogram, str)
    if auto and variogram != "auto":
        raise DomainError(f"variogram must be a model or 'auto', got {variogram!r}")
    if not pairs:
        sill = math.nan if auto else variogram.sill
        return FusedMap(grid, basemap.values, np.full(grid.shape, sill))

    resid = np.array([r for _, r in pairs])
    if np.all(resid == resid[0]) and auto:
        # no spatial structure to fit; surface is exactly the constant
        return FusedMap(grid, basemap.values + resid[0], np.zeros(grid.shape))

    if auto:
        try:
            model = fit_variogram(empirical_semivariogram(pairs, n_bins, max_lag), kind)
        except (InsufficientBins, TooFewPoints):
            model = _fallback_model(resid, grid)
            log.warning("too few residual pairs for a variogram fit; using %s", model)
    else:
        model = variogram
    surface, var = ordinary_kriging(pairs, model, grid, workers=workers)
    return FusedMap(grid, basemap.values + surface, var)


# ---------------------------------------------------------------- files


def _header(grid: GridSpec) -> str:
    return (
        f"# grid lat0={grid.lat0!r} lon0={grid.lon0!r} dlat={grid.dlat!r} "
        f"dlon={grid.dlon!r} rows={grid.n_rows} cols={grid.n_cols}\n"
    )


def write_grid(grid: GridSpec, values: np.ndarray, path: str | os.PathLike) -> None:
    """Header line, then one line per row (row 0, the southernmost, first), values in repr form."""
    v = np.asarray(values, dtype=float)
    if v.shape != grid.shape:
        raise DimensionMismatch(f"values {v.shape} vs grid {grid.shape}")
    body = "".join(" ".join(repr(float(x)) for x in row) + "\n" for row in v)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(_header(grid) + body)
    except OSError as exc:
        raise IoFailure(f"cannot write grid {path}: {exc}") from exc


def read_grid(path: str | os.PathLike) -> tuple[GridSpec, np.ndarray]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read grid {path}: {exc}") from exc
    if not lines or not lines[0].startswith("# grid"):
        raise MalformedDocument(f"{path}:1: missing '# grid' header")
    fields = {}
    for tok in lines[0][len("# grid") :].split():
        key, sep, val = tok.partition("=")
        if not sep:
            raise MalformedDocument(f"{path}:1: bad header token {tok!r}")
        fields[key] = val
    try:
        grid = GridSpec(
            float(fields["lat0"]),
            float(fields["lon0"]),
            float(fields["dlat"]),
            float(fields["dlon"]),
            int(fields["rows"]),
            int(fields["cols"]),
        )
    except KeyError as exc:
        raise MalformedDocument(f"{path}:1: header lacks {exc.args[0]}") from None
    except ValueError as exc:
        raise MalformedDocument(f"{path}:1: {exc}") from exc
    rows = [(i, ln) for i, ln in enumerate(lines[1:], start=2) if ln.strip()]
    if len(rows) != grid.n_rows:
        raise MalformedDocument(f"{path}: expected {grid.n_rows} rows, found {len(rows)}")
    values = np.empty(grid.shape)
    for r, (lineno, ln) in enumerate(rows):
        toks = ln.split()
        if len(toks) != grid.n_cols:
            raise MalformedDocument(f"{path}:{lineno}: expected {grid.n_cols} values, found {len(toks)}")
        for c, t in enumerate(toks):
            try:
                values[r, c] = float(t)
            except ValueError:
                raise MalformedDocument(f"{path}:{lineno}: column {c + 1}: not a number {t!r}") from None
    return grid, values


def read_basemap(path: str | os.PathLike) -> BaseMap:
    grid, values = read_grid(path)
    if not np.all(np.isfinite(values)):
        raise MalformedDocument(f"{path}: base map contains non-finite values")
    return BaseMap(grid, values)


def variance_path(path: str | os.PathLike) -> Path:
    """``fused.grid`` -> ``fused.variance.grid``."""
    p = Path(path)
    return p.with_name(f"{p.stem}.variance{p.suffix}")


def save_fused(fmap: FusedMap, path: str | os.PathLike) -> Path:
    write_grid(fmap.grid, fmap.values, path)
    vp = variance_path(path)
    write_grid(fmap.grid, fmap.variance, vp)
    return vp


def _num(x: float, decimals: int) -> str:
    if not math.isfinite(x):
        return "null"
    s = f"{x:.{decimals}f}"
    return "0." + "0" * decimals if s == "-0." + "0" * decimals else s


def geojson_export(fmap: FusedMap, decimals: int = 6) -> str:
    """FeatureCollection of cell-centre points with ``value`` and ``variance`` properties."""
    clat, clon = fmap.grid.centers()
    feats = []
    for r in range(fmap.grid.n_rows):
        for c in range(fmap.grid.n_cols):
            feats.append(
                '{"type":"Feature","geometry":{"type":"Point","coordinates":['
                f"{_num(clon[r, c], 6)},{_num(clat[r, c], 6)}"
                ']},"properties":{'
                f'"row":{r},"col":{c},"value":{_num(fmap.values[r, c], decimals)},'
                f'"variance":{_num(fmap.variance[r, c], decimals)}'
                "}}"
            )
    return '{"type":"FeatureCollection","features":[\n' + ",\n".join(feats) + "\n]}\n"


def csv_export(fmap: FusedMap, decimals: int = 6) -> str:
    clat, clon = fmap.grid.centers()
    lines = ["lat,lon,value,variance"]
    for r in range(fmap.grid.n_rows):
        for c in range(fmap.grid.n_cols):
            lines.append(
                f"{_num(clat[r, c], 6)},{_num(clon[r, c], 6)},"
                f"{_num(fmap.values[r, c], decimals)},{_num(fmap.variance[r, c], decimals)}"
            )
    return "\n".join(lines) + "\n"
