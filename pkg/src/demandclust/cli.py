"""Command-line front end.

Commands: ``synth``, ``patterns``, ``cluster``, ``analyze``, ``evaluate`` and
``silhouette``. Every command writes its artifacts into ``--out-dir`` with a
``summary.json`` that records the effective seed and configuration.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import tempfile
import warnings
from datetime import datetime, timedelta

import numpy as np

from . import __version__
from .clustering import KINDS, ClusterMethod, Clustering, kmeans, prepare
from .synth import EXPERIMENTS, generate_dataset
from .ts_core import DEFAULT_PERIOD, DEFAULT_WINDOW, DemandPattern, TimeSeries, \
    day_class_means, min_max_normalize, moving_average
from .validation import cluster_analysis, flag_outliers, match_labels, pairwise_distances, \
    silhouette, success_rate

log = logging.getLogger("demandclust")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
RAW_HEADER = ["timestamp", "meter_id", "volume_liters"]


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(v: float) -> str:
    return "%.17g" % v


# ---------------------------------------------------------------- writing

def atomic_write(path: str, text: str) -> None:
    """Write ``text`` to ``path`` through a temp file and a rename."""
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=folder)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(r) for r in rows]
    return "\n".join(lines) + "\n"


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def value_columns(period: int) -> list:
    width = max(2, len(str(period - 1)))
    return [f"v{i:0{width}d}" for i in range(period)]


def _file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------- reading

def _read_rows(path: str, required: list) -> tuple[list, list]:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path} is empty")
        header = [h.strip() for h in header]
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = [(reader.line_num, r) for r in reader if r]
    return header, rows


def _parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    # days are cut at the meter's own local midnight, so keep wall-clock time
    return datetime.fromisoformat(text).replace(tzinfo=None)


def read_raw(path: str) -> dict:
    """Raw long-format meter CSV -> {meter_id: (timestamps, volumes)} in file order."""
    header, rows = _read_rows(path, RAW_HEADER)
    it, im, iv = (header.index(c) for c in RAW_HEADER)
    meters, bad = {}, []
    for line, r in rows:
        try:
            t = _parse_timestamp(r[it])
            v = float(r[iv])
            if not np.isfinite(v):
                raise ValueError
            mid = r[im].strip()
            if not mid:
                raise ValueError
        except (ValueError, IndexError):
            bad.append(line)
            continue
        meters.setdefault(mid, ([], []))
        meters[mid][0].append(t)
        meters[mid][1].append(v)
    if bad:
        shown = ", ".join(str(b) for b in bad[:20]) + (" ..." if len(bad) > 20 else "")
        raise DataError(f"{path}: {len(bad)} unparseable row(s) at line(s) {shown}")
    for mid, (ts, _) in meters.items():
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise DataError(f"{path}: timestamps of meter {mid!r} are not monotone")
    return meters


def bin_meter(timestamps, volumes, period: int = DEFAULT_PERIOD) -> tuple[datetime, np.ndarray]:
    """Sum volumes into ``period`` bins per day starting at the first full midnight.

    Returns the first day's date and a (days, period) matrix; readings of a
    leading partial day and of a trailing partial day are dropped.
    """
    step = timedelta(seconds=86400 / period)
    first = timestamps[0]
    day0 = datetime(first.year, first.month, first.day)
    if first != day0:
        day0 += timedelta(days=1)
    last = timestamps[-1]
    n_days = (datetime(last.year, last.month, last.day) - day0).days + 1
    if n_days < 1:
        return day0, np.zeros((0, period))
    idx = np.array([(t - day0) // step for t in timestamps], dtype=np.int64)
    vol = np.asarray(volumes, dtype=np.float64)
    keep = (idx >= 0) & (idx < n_days * period)
    binned = np.bincount(idx[keep], weights=vol[keep], minlength=n_days * period)
    days = binned.reshape(n_days, period)
    # the last day only counts when a reading falls in its final bin
    if idx[-1] < n_days * period - 1:
        days = days[:-1]
    return day0, days


def build_patterns(meters: dict, period: int = DEFAULT_PERIOD, window: int = DEFAULT_WINDOW,
                   normalize: bool = False, split_weekend: bool = False) -> list:
    """Per-meter (and per day-class) smoothed periodic means."""
    out = []
    for mid in sorted(meters):
        ts, vol = meters[mid]
        day0, days = bin_meter(ts, vol, period)
        if days.shape[0] < 1:
            log.warning("meter %s skipped: less than one full day of data", mid)
            continue
        series = TimeSeries(days.reshape(-1), interval_seconds=86400 // period,
                            start_timestamp=day0 if split_weekend else None, id=mid)
        means = day_class_means(series, period)
        if split_weekend and len(means) < 2:
            log.warning("meter %s has only %s days; one row written", mid, means[0].day_class)
        for p in means:
            p = moving_average(p, window)
            if normalize:
                p = min_max_normalize(p)
            out.append(p)
    return out


def read_patterns(path: str, period: int | None = None, day_class: str | None = None) -> list:
    header, rows = _read_rows(path, ["meter_id", "day_class"])
    cols = [c for c in header if c not in ("meter_id", "day_class")]
    if not cols or cols != value_columns(len(cols)):
        raise DataError(f"{path}: value columns must be v00..vNN")
    if period is not None and len(cols) != period:
        raise DataError(f"{path}: has {len(cols)} values per row, --period is {period}")
    im, ic = header.index("meter_id"), header.index("day_class")
    iv = [header.index(c) for c in cols]
    out, bad, seen = [], [], set()
    for line, r in rows:
        try:
            vals = np.array([float(r[i]) for i in iv])
            key = (r[im], r[ic])
            if not np.all(np.isfinite(vals)) or key in seen:
                raise ValueError
            p = DemandPattern(vals, day_class=r[ic], id=r[im])
        except (ValueError, IndexError):
            bad.append(line)
            continue
        seen.add(key)
        if day_class is None or p.day_class == day_class:
            out.append(p)
    if bad:
        raise DataError(f"{path}: bad pattern row(s) at line(s) {', '.join(map(str, bad[:20]))}")
    if not out:
        raise DataError(f"{path}: no patterns selected")
    return out


def read_assignments(path: str) -> dict:
    header, rows = _read_rows(path, ["meter_id", "day_class", "cluster"])
    im, ic, ik = (header.index(c) for c in ("meter_id", "day_class", "cluster"))
    out = {}
    for line, r in rows:
        try:
            out[(r[im], r[ic])] = int(r[ik])
        except (ValueError, IndexError) as exc:
            raise DataError(f"{path}: bad assignment row at line {line}") from exc
    return out


def read_truth(path: str) -> tuple[dict, bool]:
    """Truth labels keyed by (meter_id, day_class) or by meter_id alone."""
    header, rows = _read_rows(path, ["meter_id", "label"])
    im, il = header.index("meter_id"), header.index("label")
    ic = header.index("day_class") if "day_class" in header else None
    out = {}
    for line, r in rows:
        try:
            key = (r[im], r[ic]) if ic is not None else r[im]
            out[key] = r[il]
        except IndexError as exc:
            raise DataError(f"{path}: bad truth row at line {line}") from exc
    return out, ic is not None


# ---------------------------------------------------------------- config

def parse_k_range(text: str) -> range:
    try:
        a, b = text.split("..")
        lo, hi = int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A..B, got {text!r}") from None
    if lo > hi:
        raise argparse.ArgumentTypeError(f"empty k range {text!r}")
    return range(lo, hi + 1)


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _method(args) -> ClusterMethod:
    if args.gamma is not None and args.method != "sdtw":
        raise UsageError("--gamma only applies to --method sdtw")
    if args.gamma is not None and not (np.isfinite(args.gamma) and args.gamma > 0):
        raise UsageError(f"--gamma must be positive, got {args.gamma}")
    return ClusterMethod(args.method, gamma=args.gamma, normalize_input=args.normalize)


PATH_ARGS = ("input", "patterns", "assignments", "truth")


def _config(args) -> dict:
    """Effective flags; input paths are replaced by content digests and the
    output directory is left out so reruns elsewhere stay byte-identical."""
    cfg, inputs = {}, {}
    for k, v in sorted(vars(args).items()):
        if k in ("func", "verbose", "out_dir"):
            continue
        if k in PATH_ARGS:
            inputs[k] = _file_digest(v)
            continue
        if isinstance(v, range):
            v = [v.start, v.stop - 1]
        cfg[k] = v
    cfg["input_sha256"] = inputs
    return cfg


def _apply_threads() -> int | None:
    raw = os.environ.get("SDTW_THREADS")
    if raw is None or raw == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"SDTW_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"SDTW_THREADS must be a positive integer, got {raw!r}")
    import numba
    n = min(n, numba.config.NUMBA_NUM_THREADS)
    with warnings.catch_warnings():
        # starting the thread pool may complain about an old TBB and fall back
        warnings.simplefilter("ignore", numba.NumbaWarning)
        numba.set_num_threads(n)
    return n


def _pattern_key(p: DemandPattern) -> tuple:
    return p.id, p.day_class


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> dict:
    ds = generate_dataset(args.experiment, n_households=args.n, days=args.days, seed=args.seed,
                          peak_shift_minutes=args.jitter, noise_level=args.noise,
                          n_anomalies=args.anomalies)
    rows = []
    for s in ds.series:
        start = s.start_timestamp
        step = timedelta(seconds=s.interval_seconds)
        for i, v in enumerate(s.values):
            rows.append(((start + i * step).isoformat() + "Z", s.id, fmt(v)))
    atomic_write(os.path.join(args.out_dir, "raw.csv"), _csv_text(RAW_HEADER, rows))
    truth = [(i, lab, str(p.residents)) for i, lab, p in zip(ds.ids, ds.labels, ds.profiles)]
    atomic_write(os.path.join(args.out_dir, "truth.csv"),
                 _csv_text(["meter_id", "label", "residents"], truth))
    return {"n_meters": len(ds.series), "days": ds.days, "labels": dict(sorted(
        {lab: ds.labels.count(lab) for lab in set(ds.labels)}.items()))}


def cmd_patterns(args) -> dict:
    meters = read_raw(args.input)
    pats = build_patterns(meters, period=args.period, window=args.window,
                          normalize=bool(args.normalize), split_weekend=args.split_weekend)
    if not pats:
        raise DataError("no meter has a full day of data")
    rows = [[p.id, p.day_class] + [fmt(v) for v in p.values] for p in pats]
    atomic_write(os.path.join(args.out_dir, "patterns.csv"),
                 _csv_text(["meter_id", "day_class"] + value_columns(args.period), rows))
    return {"n_patterns": len(pats), "normalized": bool(args.normalize),
            "days_per_pattern": {f"{p.id}/{p.day_class}": p.n_periods for p in pats}}


def _center_rows(clustering, period: int) -> tuple[list, list]:
    if clustering.method.kind == "simple":
        header = ["cluster", "kind", "mean_workhours", "std_workhours"]
        rows = [[str(j), "feature_mean"] + [fmt(v) for v in c]
                for j, c in enumerate(clustering.centers)]
        return header, rows
    header = ["cluster", "kind"] + value_columns(period)
    rows = []
    for j in range(clustering.k):
        if clustering.method.kind == "sdtw":
            rows.append([str(j), "barycenter"] + [fmt(v) for v in clustering.centers[j]])
        rows.append([str(j), "mean"] + [fmt(v) for v in clustering.member_means[j]])
    return header, rows


def cmd_cluster(args) -> dict:
    method = _method(args)
    pats = read_patterns(args.patterns, args.period, args.day_class)
    if args.k > len(pats):
        raise DataError(f"--k {args.k} exceeds the {len(pats)} selected patterns")
    c = kmeans(pats, args.k, method, seed=args.seed, n_restarts=args.restarts,
               max_iter=args.max_iter)
    rows = [[p.id, p.day_class, str(int(a))] for p, a in zip(pats, c.assignments)]
    atomic_write(os.path.join(args.out_dir, "assignments.csv"),
                 _csv_text(["meter_id", "day_class", "cluster"], rows))
    header, crows = _center_rows(c, len(pats[0]))
    atomic_write(os.path.join(args.out_dir, "centers.csv"), _csv_text(header, crows))
    return {"k": c.k, "objective": c.objective, "n_iter": c.n_iter, "seed": c.seed,
            "method": method.to_dict(), "gamma": method.gamma,
            "restart_objectives": list(c.restart_objectives),
            "cluster_sizes": np.bincount(c.assignments, minlength=c.k).tolist()}


def cmd_analyze(args) -> dict:
    method = _method(args)
    pats = read_patterns(args.patterns, args.period, args.day_class)
    res = cluster_analysis(pats, args.k_range, method, seed=args.seed,
                           n_restarts=args.restarts, max_iter=args.max_iter)
    rows = [[str(k), fmt(s), fmt(obj)] for k, s, obj in res.rows]
    atomic_write(os.path.join(args.out_dir, "analysis.csv"),
                 _csv_text(["k", "mean_silhouette", "objective"], rows))
    return {"best_k": res.best_k, "method": method.to_dict(), "gamma": method.gamma,
            "rows": [{"k": k, "mean_silhouette": s, "objective": o} for k, s, o in res.rows]}


def cmd_evaluate(args) -> dict:
    assigned = read_assignments(args.assignments)
    truth, keyed_by_class = read_truth(args.truth)
    keys = sorted(assigned)
    lookup = [k if keyed_by_class else k[0] for k in keys]
    unknown = [f"{k[0]}/{k[1]}" for k, t in zip(keys, lookup) if t not in truth]
    if unknown:
        raise DataError(f"ids missing from truth: {', '.join(unknown[:20])}")
    pred = [assigned[k] for k in keys]
    labels = [truth[t] for t in lookup]
    mapping = match_labels(pred, labels)
    counts, sr, er = success_rate(pred, labels, mapping)
    metrics = {"sr": sr, "er": er, "confusion": counts.to_dict(),
               "mapping": {str(k): v for k, v in mapping.items()}, "n": len(keys)}
    atomic_write(os.path.join(args.out_dir, "metrics.json"), _json_text(metrics))
    return metrics


def cmd_silhouette(args) -> dict:
    method = _method(args)
    pats = read_patterns(args.patterns, args.period, args.day_class)
    assigned = read_assignments(args.assignments)
    missing = [f"{p.id}/{p.day_class}" for p in pats if _pattern_key(p) not in assigned]
    if missing:
        raise DataError(f"patterns without assignment: {', '.join(missing[:20])}")
    labels = np.array([assigned[_pattern_key(p)] for p in pats])
    # relabel to 0..k-1 so the clustering stand-in is well formed
    _, labels = np.unique(labels, return_inverse=True)
    if labels.max() < 1:
        raise DataError("silhouette needs at least two clusters")
    X = prepare(pats, method)
    c = Clustering(k=int(labels.max()) + 1, assignments=labels, centers=np.empty((0, 0)),
                   objective=float("nan"), n_iter=0, seed=args.seed, method=method)
    keys = [f"{p.id}/{p.day_class}" for p in pats]
    rep = silhouette(pats, c, distance=pairwise_distances(X, method), ids=keys)
    rows = [[p.id, p.day_class, str(k), fmt(s)]
            for p, k, s in zip(pats, rep.clusters, rep.values)]
    atomic_write(os.path.join(args.out_dir, "silhouette.csv"),
                 _csv_text(["meter_id", "day_class", "cluster", "silhouette"], rows))
    flagged = flag_outliers(rep)
    by_key = dict(zip(keys, rep.values))
    atomic_write(os.path.join(args.out_dir, "outliers.csv"),
                 _csv_text(["meter_id", "day_class", "silhouette"],
                           [key.rsplit("/", 1) + [fmt(by_key[key])] for key in flagged]))
    for key in flagged:
        print(f"outlier {key} S={by_key[key]:.4f}")
    return {"mean_silhouette": rep.mean, "outliers": flagged, "method": method.to_dict(),
            "k": rep.k}


# ---------------------------------------------------------------- parser

def _add_common(p, patterns_input=True):
    if patterns_input:
        p.add_argument("--patterns", required=True, help="patterns CSV")
        p.add_argument("--day-class", choices=("weekday", "weekend", "all"), default=None,
                       help="only use rows of this day class")
        p.add_argument("--period", type=_positive_int, default=None,
                       help="expected samples per pattern (checked against the file)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)


def _add_method(p):
    p.add_argument("--method", choices=KINDS, default="sdtw")
    p.add_argument("--gamma", type=float, default=None, help="soft-DTW smoothing (sdtw only)")
    p.add_argument("--restarts", type=_positive_int, default=8)
    p.add_argument("--max-iter", type=_positive_int, default=50)
    p.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=None,
                   help="min-max normalize patterns before clustering (default: on, "
                        "off for simple)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="demandclust", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a labeled synthetic meter dataset")
    p.add_argument("--experiment", choices=EXPERIMENTS, default="single_person")
    p.add_argument("--n", type=_positive_int, default=100, help="households")
    p.add_argument("--days", type=_positive_int, default=100)
    p.add_argument("--jitter", type=float, default=90.0, help="peak shift range in minutes")
    p.add_argument("--noise", type=float, default=0.2)
    p.add_argument("--anomalies", type=int, default=2)
    _add_common(p, patterns_input=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("patterns", help="raw meter CSV -> daily demand patterns")
    p.add_argument("--input", required=True, help="raw CSV (timestamp,meter_id,volume_liters)")
    p.add_argument("--period", type=_positive_int, default=DEFAULT_PERIOD)
    p.add_argument("--window", type=_positive_int, default=DEFAULT_WINDOW)
    p.add_argument("--split-weekend", action="store_true")
    p.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=False)
    _add_common(p, patterns_input=False)
    p.set_defaults(func=cmd_patterns)

    p = sub.add_parser("cluster", help="k-Means clustering of patterns")
    p.add_argument("--k", type=_positive_int, required=True)
    _add_method(p)
    _add_common(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("analyze", help="mean silhouette over a range of k")
    p.add_argument("--k-range", type=parse_k_range, required=True, help="A..B, inclusive")
    _add_method(p)
    _add_common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("evaluate", help="success rate of assignments against truth labels")
    p.add_argument("--assignments", required=True)
    p.add_argument("--truth", required=True, help="CSV with meter_id,label[,day_class]")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("silhouette", help="per-pattern silhouettes and outliers")
    p.add_argument("--assignments", required=True)
    _add_method(p)
    _add_common(p)
    p.set_defaults(func=cmd_silhouette)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        threads = _apply_threads()
        if getattr(args, "k_range", None) is not None and args.k_range.start < 2:
            raise UsageError("--k-range must start at 2 or more")
        if args.command == "patterns" and args.window > args.period:
            raise UsageError("--window cannot exceed --period")
        result = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"demandclust: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ValueError, FloatingPointError) as exc:
        print(f"demandclust: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    summary = {"command": args.command, "config": _config(args), "seed": getattr(args, "seed", None),
               "threads": threads, "version": __version__, "result": result}
    atomic_write(os.path.join(args.out_dir, "summary.json"), _json_text(summary))
    print(f"{args.command}: wrote {os.path.join(args.out_dir, 'summary.json')}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
