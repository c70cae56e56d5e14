"""``hazefuse`` command line.

Exit status: 0 on success, 1 on usage or configuration errors, 2 on data
errors. Diagnostics go to stderr; data goes to files or stdout.

Every subcommand accepts ``--config FILE`` holding ``key = value`` lines
(keys are flag names without the leading dashes); flags given on the
command line take precedence.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .blobs import (
    BlobParams,
    Polarity,
    blob_report,
    detect_blobs,
    estimate_pm,
    fit_calibration,
    load_calibration,
    save_calibration,
)
from .errors import HazeError
from .fusion import VariogramModel, csv_export, geojson_export, read_basemap, residual_kriging_fuse, save_fused
from .ingestion import (
    SourceDescriptor,
    extract_from_html,
    load_catalog,
    load_rules,
    mapping_location,
    parse_structured_payload,
    query_geotagged_images,
    query_tagged_images,
)
from .observation import (
    GeoPoint,
    GeoRect,
    ObservationStore,
    PhenomenonKind,
    QualityFlag,
    SourceKind,
    TimeRange,
    TimeStamp,
)
from .raster import read_gray, read_image
from .rgtable import (
    AodEstimate,
    SyntheticParams,
    aod_observation,
    estimate_aod_from_image,
    generate_synthetic_table,
    load_rg_table,
    save_rg_table,
)
from .sky import SkyParams
from .solar import SolarContext, build_sza_table, load_sza_table, lookup_sza, save_sza_table, solar_zenith_angle

log = logging.getLogger("hazefuse")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


# ---------------------------------------------------------------- argument types


def _float_list(text: str, n: int, what: str) -> list[float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"{what} needs {n} comma-separated numbers")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{what}: not a number in {text!r}") from None


def window_arg(text: str) -> GeoRect:
    """``min_lat,min_lon,max_lat,max_lon``."""
    try:
        return GeoRect(*_float_list(text, 4, "window"))
    except HazeError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def time_arg(text: str) -> TimeStamp:
    try:
        return TimeStamp.parse(text)
    except HazeError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def phenomenon_arg(text: str) -> PhenomenonKind:
    try:
        return PhenomenonKind(text.replace(".", "_"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown phenomenon {text!r}") from None


def source_arg(text: str) -> SourceKind:
    try:
        return SourceKind(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown source kind {text!r}") from None


def variogram_arg(text: str):
    """``auto`` or ``exponential:nugget,sill,range`` / ``spherical:...``."""
    if text == "auto":
        return "auto"
    kind, sep, rest = text.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError("variogram must be 'auto' or kind:nugget,sill,range")
    try:
        return VariogramModel(kind, *_float_list(rest, 3, "variogram"))
    except (HazeError, ValueError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def mapping_arg(text: str) -> dict[str, tuple[PhenomenonKind, float]]:
    """``path=PHEN[*scale],path=PHEN[*scale]...``."""
    out = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        path, sep, rhs = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"mapping entry {item!r} lacks '='")
        phen, _, scale = rhs.partition("*")
        try:
            out[path] = (phenomenon_arg(phen), float(scale) if scale else 1.0)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad scale in {item!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty mapping")
    return out


def positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


# ---------------------------------------------------------------- config


def read_config(path: str) -> dict[str, str]:
    cfg = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        key, sep, value = s.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


# ---------------------------------------------------------------- helpers


def _need(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) in (None, "")]
    if missing:
        raise UsageError(f"{args.command}: missing required option(s) {', '.join(missing)}")


def _existing(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"file not found: {p}")
    return p


def _open_store(path) -> ObservationStore:
    return ObservationStore.load(path) if Path(path).exists() else ObservationStore()


def _time_range(args) -> TimeRange:
    everything = TimeRange.everything()
    return TimeRange(args.start or everything.start, args.end or everything.end)


def _write_text(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _point(args, lat="lat", lon="lon") -> GeoPoint:
    return GeoPoint(getattr(args, lat), getattr(args, lon))


# ---------------------------------------------------------------- commands


def cmd_gen_table(args) -> int:
    _need(args, "out")
    sza = np.round(np.arange(0.0, args.sza_max + 1e-9, args.sza_step), 10)
    aod = np.round(np.arange(0.0, args.aod_max + 1e-9, args.aod_step), 10)
    table = generate_synthetic_table(sza, aod, SyntheticParams(args.b0, args.b1, args.s0, args.s1))
    save_rg_table(table, args.out)
    log.info("wrote %d x %d table to %s", sza.size, aod.size, args.out)
    return EXIT_OK


def cmd_sza(args) -> int:
    if args.table:
        table = load_sza_table(_existing(args.table))
    else:
        _need(args, "lat", "lon")
        table = build_sza_table(_point(args), args.doy_step, args.tod_step) if args.out or args.lookup else None
    if args.out:
        save_sza_table(table, args.out)
    if args.time is not None:
        t = args.time
        if args.lookup or args.table:
            value = lookup_sza(table, t.day_of_year, t.time_of_day)
        else:
            value = solar_zenith_angle(SolarContext.at(_point(args), t))
        sys.stdout.write(f"{value:.4f}\n")
    elif not args.out:
        raise UsageError("sza: give --out to write a table and/or --time to query one")
    return EXIT_OK


def _sza_table(args):
    if args.sza_table:
        return load_sza_table(_existing(args.sza_table))
    _need(args, "city_lat", "city_lon")
    return build_sza_table(GeoPoint(args.city_lat, args.city_lon))


def _sky_params(args) -> SkyParams:
    return SkyParams(tolerance=args.tolerance, min_brightness=args.min_brightness, min_fraction=args.min_fraction)


def cmd_estimate_image(args) -> int:
    _need(args, "rg_table", "store")
    rg = load_rg_table(_existing(args.rg_table))
    sza = _sza_table(args)
    params = _sky_params(args)

    # work items: (image id, path, location, time, flag-forcing)
    items = []
    if args.catalog:
        _need(args, "window")
        cat = load_catalog(_existing(args.catalog))
        tr = _time_range(args)
        metas = query_geotagged_images(cat, args.window, tr)
        if args.tags:
            seen = {m.image_id for m in metas}
            metas += [m for m in query_tagged_images(cat, args.tags.split(","), tr) if m.image_id not in seen]
        for m in metas:
            loc, flag = mapping_location(m, args.window)
            items.append((m.image_id, cat.resolve(m), loc, m.time, flag))
    else:
        _need(args, "image", "lat", "lon", "time")
        p = _existing(args.image)
        items.append((args.image_id or p.stem, p, _point(args), args.time, None))

    def work(item):
        iid, path, loc, when, _ = item
        return estimate_aod_from_image(read_image(path), loc, when, sza, rg, params, image_id=iid)

    if args.workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(work, items))
    else:
        results = [work(it) for it in items]

    store = _open_store(args.store)
    added = 0
    for (iid, _, loc, when, forced), res in zip(items, results):
        if not isinstance(res, AodEstimate):
            sys.stderr.write(f"unusable: {iid}: {res.reason}\n")
            continue
        o = aod_observation(res, store.new_id(args.source), loc, when, args.source)
        if forced is QualityFlag.Suspect and o.quality_flag is QualityFlag.Ok:
            o = dataclasses.replace(o, quality_flag=forced)
        store.insert(o)
        added += 1
        sys.stdout.write(f"{o.id} {iid} aod={o.value:.4f} sza={res.sza:.3f} flag={o.quality_flag.value}\n")
    if added:
        store.save(args.store)
    log.info("%d of %d images produced an estimate", added, len(items))
    return EXIT_OK


def _blob_params(args) -> BlobParams:
    return BlobParams(args.threshold, Polarity(args.polarity), args.min_area, args.merge_distance, args.connectivity)


def cmd_estimate_filter(args) -> int:
    _need(args, "image", "calibration", "store", "lat", "lon", "time")
    curve = load_calibration(_existing(args.calibration))
    img = read_gray(_existing(args.image))
    params = _blob_params(args)
    if args.report:
        _write_text(args.report, blob_report(detect_blobs(img, params)))
    store = _open_store(args.store)
    o = estimate_pm(
        curve,
        img,
        params,
        oid=store.new_id(SourceKind.FilterPhoto),
        location=_point(args),
        time=args.time,
        phenomenon=args.phenomenon,
    )
    store.insert(o)
    store.save(args.store)
    sys.stdout.write(f"{o.id} {o.phenomenon.value}={o.value:.3f} flag={o.quality_flag.value}\n")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    """Fit a blob-count calibration from ``image_path,pm`` lines."""
    _need(args, "samples", "out")
    src = _existing(args.samples)
    params = _blob_params(args)
    samples = []
    for lineno, line in enumerate(src.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        path, sep, pm = line.rpartition(",")
        if not sep:
            raise UsageError(f"{src}:{lineno}: expected 'image_path,pm'")
        img_path = Path(path.strip())
        if not img_path.is_absolute():
            img_path = src.parent / img_path
        try:
            value = float(pm)
        except ValueError:
            raise UsageError(f"{src}:{lineno}: bad PM value {pm!r}") from None
        samples.append((len(detect_blobs(read_gray(img_path), params)), value))
    curve = fit_calibration(samples)
    save_calibration(curve, args.out)
    sys.stdout.write(f"slope={curve.slope:.6f} intercept={curve.intercept:.6f} rms={curve.rms:.6f} n={curve.n}\n")
    return EXIT_OK


def _descriptor(args) -> SourceDescriptor:
    _need(args, "source_id", "lat", "lon")
    config = {"time_path": args.time_path} if args.time_path else {}
    return SourceDescriptor(args.source_id, args.source, location=_point(args), config=config)


def cmd_ingest(args) -> int:
    modes = [m for m in ("payload", "html", "catalog") if getattr(args, m)]
    if len(modes) != 1:
        raise UsageError("ingest: give exactly one of --payload, --html, --catalog")
    now = args.now  # None lets the adapters stamp the current time

    if args.catalog:
        _need(args, "window")
        cat = load_catalog(_existing(args.catalog))
        tr = _time_range(args)
        metas = query_tagged_images(cat, args.tags.split(","), tr) if args.tags else query_geotagged_images(cat, args.window, tr)
        lines = []
        for m in metas:
            loc, flag = mapping_location(m, args.window)
            lines.append(f"{m.image_id}|{cat.resolve(m)}|{loc.lat:.6f}|{loc.lon:.6f}|{m.time.iso()}|{flag.value}\n")
        _write_text(args.out, "".join(lines))
        return EXIT_OK

    _need(args, "store")
    desc = _descriptor(args)
    # adapters run on scratch ids; store ids are assigned afterwards in input order
    scratch = lambda kind: f"{kind.id_prefix}-tmp"  # noqa: E731
    if args.payload:
        _need(args, "mapping")
        text = _existing(args.payload).read_text(encoding="utf-8")
        batches = [parse_structured_payload(text, args.mapping, desc, args.format, now=now, new_id=scratch)]
    else:
        _need(args, "rules")
        rules = load_rules(_existing(args.rules))
        pages = args.html.split() if isinstance(args.html, str) else args.html
        texts = [_existing(p).read_text(encoding="utf-8") for p in pages]

        def work(text):
            return extract_from_html(text, rules, desc, now=now, new_id=scratch)

        if args.workers > 1 and len(texts) > 1:
            with ThreadPoolExecutor(max_workers=args.workers) as pool:
                batches = list(pool.map(work, texts))
        else:
            batches = [work(t) for t in texts]

    store = _open_store(args.store)
    count = 0
    for batch in batches:
        for o in batch:
            store.insert(dataclasses.replace(o, id=store.new_id(o.source)))
            count += 1
    store.save(args.store)
    sys.stdout.write(f"ingested {count} observations\n")
    return EXIT_OK


def _select(args, store: ObservationStore):
    window = args.window or GeoRect(-90, -180, 90, 180)
    return store.query(window, _time_range(args), args.phenomenon)


def cmd_fuse(args) -> int:
    _need(args, "store", "basemap", "out", "phenomenon")
    store = ObservationStore.load(_existing(args.store))
    bmap = read_basemap(_existing(args.basemap))
    obs = _select(args, store)
    fused = residual_kriging_fuse(obs, bmap, args.variogram, n_bins=args.n_bins, max_lag=args.max_lag, workers=args.workers)
    save_fused(fused, args.out)
    if args.geojson:
        _write_text(args.geojson, geojson_export(fused, args.decimals))
    if args.csv:
        _write_text(args.csv, csv_export(fused, args.decimals))
    log.info("fused %d observations onto a %dx%d grid", len(obs), *bmap.grid.shape)
    return EXIT_OK


def cmd_export(args) -> int:
    _need(args, "store")
    store = ObservationStore.load(_existing(args.store))
    lines = ["id,source,phenomenon,value,lat,lon,time,flag"]
    for o in _select(args, store):
        value = o.value.name if o.phenomenon is PhenomenonKind.AirQualityClass else f"{o.value:.6f}"
        lines.append(
            f"{o.id},{o.source.value},{o.phenomenon.value},{value},"
            f"{o.location.lat:.6f},{o.location.lon:.6f},{o.time.iso()},{o.quality_flag.value}"
        )
    _write_text(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> tuple[_Parser, dict[str, _Parser]]:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value file supplying defaults for any flag")
    common.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")

    parser = _Parser(prog="hazefuse", description="Multi-source air quality estimation and fusion.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="<subcommand>")
    subs: dict[str, _Parser] = {}

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.set_defaults(func=func)
        subs[name] = p
        return p

    def selection(p):
        p.add_argument("--window", type=window_arg, help="min_lat,min_lon,max_lat,max_lon")
        p.add_argument("--start", type=time_arg, help="ISO 8601 start of the time range (inclusive)")
        p.add_argument("--end", type=time_arg, help="ISO 8601 end of the time range (inclusive)")

    def point(p, required_help="location"):
        p.add_argument("--lat", type=float, help=f"{required_help} latitude")
        p.add_argument("--lon", type=float, help=f"{required_help} longitude")

    def blob_flags(p):
        p.add_argument("--threshold", type=int, default=128)
        p.add_argument("--polarity", choices=[x.value for x in Polarity], default="DarkBlobs")
        p.add_argument("--min-area", type=int, default=4)
        p.add_argument("--merge-distance", type=float, default=0.0)
        p.add_argument("--connectivity", type=int, choices=[4, 8], default=8)

    p = add("gen-table", cmd_gen_table, "write a synthetic Table RG")
    p.add_argument("--out")
    d = SyntheticParams()
    for name in ("b0", "b1", "s0", "s1"):
        p.add_argument(f"--{name}", type=float, default=getattr(d, name))
    p.add_argument("--sza-step", type=float, default=5.0)
    p.add_argument("--sza-max", type=float, default=85.0)
    p.add_argument("--aod-step", type=float, default=0.1)
    p.add_argument("--aod-max", type=float, default=2.0)

    p = add("sza", cmd_sza, "build, save or query a per-city SZA table")
    point(p, "city")
    p.add_argument("--table", help="existing SZA table CSV to query")
    p.add_argument("--out", help="write the built table here")
    p.add_argument("--doy-step", type=float, default=1.0)
    p.add_argument("--tod-step", type=float, default=0.5)
    p.add_argument("--time", type=time_arg, help="print the SZA (degrees) at this UTC instant")
    p.add_argument("--lookup", action="store_true", help="answer --time from the table instead of direct geometry")

    p = add("estimate-image", cmd_estimate_image, "sky photo(s) -> AOD observations appended to a store")
    p.add_argument("--image")
    p.add_argument("--image-id")
    point(p, "photo")
    p.add_argument("--time", type=time_arg)
    p.add_argument("--catalog", help="catalog directory or index; processes every matching image")
    p.add_argument("--tags", help="comma-separated tag fallback for catalog mode")
    selection(p)
    p.add_argument("--rg-table")
    p.add_argument("--sza-table")
    p.add_argument("--city-lat", type=float)
    p.add_argument("--city-lon", type=float)
    p.add_argument("--store")
    p.add_argument("--source", type=source_arg, default=SourceKind.SocialImage)
    p.add_argument("--tolerance", type=float, default=SkyParams.tolerance)
    p.add_argument("--min-brightness", type=float, default=SkyParams.min_brightness)
    p.add_argument("--min-fraction", type=float, default=SkyParams.min_fraction)
    p.add_argument("--workers", type=positive_int, default=1)

    p = add("estimate-filter", cmd_estimate_filter, "filter photo + calibration -> PM observation")
    p.add_argument("--image")
    p.add_argument("--calibration")
    point(p, "sensor")
    p.add_argument("--time", type=time_arg)
    p.add_argument("--store")
    p.add_argument("--phenomenon", type=phenomenon_arg, default=PhenomenonKind.PM2_5)
    p.add_argument("--report", help="write the blob list as CSV ('-' for stdout)")
    blob_flags(p)

    p = add("calibrate", cmd_calibrate, "fit a blob-count calibration from 'image_path,pm' samples")
    p.add_argument("--samples")
    p.add_argument("--out")
    blob_flags(p)

    p = add("ingest", cmd_ingest, "structured payloads or HTML pages -> store; catalogs -> work-item list")
    p.add_argument("--payload")
    p.add_argument("--format", choices=["json", "xml"], default="json")
    p.add_argument("--mapping", type=mapping_arg, help="path=PHENOMENON[*scale],...")
    p.add_argument("--time-path", help="key path of the payload timestamp")
    p.add_argument("--html", nargs="+")
    p.add_argument("--rules")
    p.add_argument("--catalog")
    p.add_argument("--tags", help="comma-separated tags (catalog fallback query)")
    selection(p)
    p.add_argument("--source-id")
    p.add_argument("--source", type=source_arg, default=SourceKind.WebSite)
    point(p, "station")
    p.add_argument("--now", type=time_arg, help="ingestion time for pages without a timestamp (default: current time)")
    p.add_argument("--store")
    p.add_argument("--out", help="catalog mode: write work items here (default stdout)")
    p.add_argument("--workers", type=positive_int, default=1)

    p = add("fuse", cmd_fuse, "store + base map -> fused grid, variance grid and exports")
    p.add_argument("--store")
    p.add_argument("--basemap")
    p.add_argument("--phenomenon", type=phenomenon_arg)
    selection(p)
    p.add_argument("--variogram", type=variogram_arg, default="auto")
    p.add_argument("--n-bins", type=positive_int, default=10)
    p.add_argument("--max-lag", type=float)
    p.add_argument("--out", help="fused grid file; variance goes to <stem>.variance<suffix>")
    p.add_argument("--geojson")
    p.add_argument("--csv")
    p.add_argument("--decimals", type=int, default=6)
    p.add_argument("--workers", type=positive_int, default=1)

    p = add("export", cmd_export, "store query -> CSV")
    p.add_argument("--store")
    p.add_argument("--phenomenon", type=phenomenon_arg)
    selection(p)
    p.add_argument("--out", help="output file (default stdout)")

    return parser, subs


def _apply_config(argv: Sequence[str], subs: dict[str, _Parser]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cfg = read_config(known.config)
    used = set()
    for p in subs.values():
        dests = {a.dest for a in p._actions}
        hits = {k: v for k, v in cfg.items() if k in dests and k not in ("config", "help")}
        p.set_defaults(**hits)
        used |= hits.keys()
    unknown = sorted(set(cfg) - used)
    if unknown:
        raise UsageError(f"{known.config}: unknown key(s) {', '.join(unknown)}")


def main(argv: Sequence[str] | None = None) -> int:
    argv = [str(a) for a in (sys.argv[1:] if argv is None else argv)]
    parser, subs = build_parser()
    try:
        _apply_config(argv, subs)
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"hazefuse: error: {exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        sys.stderr.write("hazefuse: error: a subcommand is required\n")
        return EXIT_USAGE

    # a per-run handler so repeated in-process calls log to the current stderr
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("hazefuse: %(levelname)s: %(message)s"))
    root = logging.getLogger("hazefuse")
    old_level = root.level
    root.addHandler(handler)
    root.setLevel(logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        subs[args.command].print_usage(sys.stderr)
        sys.stderr.write(f"hazefuse {args.command}: error: {exc}\n")
        return EXIT_USAGE
    except (HazeError, OSError) as exc:
        sys.stderr.write(f"hazefuse {args.command}: error: {exc}\n")
        return EXIT_DATA
    finally:
        root.removeHandler(handler)
        root.setLevel(old_level)
