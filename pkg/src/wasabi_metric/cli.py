"""Command-line interface.

    wasabi compute   A.csv B.csv            one distance, JSON on stdout
    wasabi bootstrap A.csv B.csv            resampled distance distribution
    wasabi compare   REF.csv C1.csv C2.csv  null row + one row per candidate
    wasabi qc-filter T.csv                  IQR-derived QC threshold and removed ids
    wasabi normality T.csv                  Henze-Zirkler test
    wasabi gen SPEC.json --out-dir DIR      synthetic cohorts / scenario suites

Exit codes: 0 success, 1 input or validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError, NumericalError
from .feature_table import (
    FeatureTable,
    RegionMap,
    TableSchema,
    apply_region_map,
    default_region_map,
    filter_by_qc,
    load_table_with_report,
    normalize_by_icv,
    qc_iqr_threshold,
    write_table,
)
from .stats import (
    BootstrapReport,
    henze_zirkler,
    resolve_metric,
    run_bootstrap,
    within_cohort_null,
)
from .synthgen import CohortSpec, generate_cohort, generate_scenario_suite, scenario_ground_truth

logger = logging.getLogger("wasabi_metric")

METRIC_CHOICES = ("wasabi", "frechet", "mmd")


# --------------------------------------------------------------------------
# I/O helpers
# --------------------------------------------------------------------------


def write_atomic(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to a temp file next to ``path``, then rename over it."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(text: str, out: str | None) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def dumps(obj) -> str:
    return json.dumps(obj, indent=2)


# --------------------------------------------------------------------------
# Shared preprocessing
# --------------------------------------------------------------------------


@dataclass
class Prepared:
    name: str
    raw: FeatureTable
    table: FeatureTable
    removed: list[str]
    dropped: int


def _region_map(args) -> RegionMap | None:
    if not getattr(args, "region_map", None):
        return None
    if args.region_map == "synthseg":
        return default_region_map()
    return RegionMap.from_json(args.region_map)


def _schema(args, header_hint: RegionMap | None, path: str) -> TableSchema | None:
    if getattr(args, "schema", None):
        return TableSchema.from_json(args.schema)
    with open(path, newline="") as fh:
        first = fh.readline()
    delim = "\t" if first.count("\t") > first.count(",") else ","
    header = [h.strip() for h in first.rstrip("\r\n").split(delim)]
    qc_c = ([header_hint.qc_column] if header_hint and header_hint.qc_column else []) + ["qc"]
    icv_c = ([header_hint.icv_column] if header_hint and header_hint.icv_column else []) + ["icv"]
    return TableSchema.auto(header, qc_candidates=qc_c, icv_candidates=icv_c)


def _load(args, path: str, volume_mode: bool) -> tuple[FeatureTable, int]:
    rmap = _region_map(args)
    table, dropped = load_table_with_report(
        path,
        _schema(args, rmap, path),
        drop_invalid_rows=args.drop_invalid_rows,
        volumes=volume_mode,
    )
    if rmap is not None:
        table = apply_region_map(table, rmap)
    return table, len(dropped)


def _resolve_threshold(args, qc_pool: list[np.ndarray]) -> tuple[float | None, str]:
    if args.qc_threshold is not None:
        logger.info("QC threshold %.6g from --qc-threshold", args.qc_threshold)
        return float(args.qc_threshold), "flag"
    pooled = [q for q in qc_pool if q is not None]
    if not pooled:
        return None, "none"
    thr = qc_iqr_threshold(np.concatenate(pooled))
    logger.info("QC threshold %.6g derived as Q1 - 1.5*IQR of %d QC scores", thr, sum(map(len, pooled)))
    return thr, "iqr"


def _finish(name: str, raw: FeatureTable, dropped: int, threshold: float | None, volume_mode: bool) -> Prepared:
    table, removed = raw, []
    if threshold is not None and raw.qc is not None:
        table, removed = filter_by_qc(raw, threshold)
        if removed:
            logger.info("%s: removed %d of %d subjects below QC threshold", name, len(removed), len(raw))
    if volume_mode and len(table):
        table = normalize_by_icv(table)
    return Prepared(name=name, raw=raw, table=table, removed=removed, dropped=dropped)


def prepare_pair(args, volume_mode: bool) -> tuple[Prepared, Prepared, float | None, str]:
    """Load two tables, pick a QC threshold from their pooled scores, filter, normalize."""
    (xa, dx), (ya, dy) = _load(args, args.table_a, volume_mode), _load(args, args.table_b, volume_mode)
    thr, source = _resolve_threshold(args, [xa.qc, ya.qc])
    x = _finish(Path(args.table_a).stem, xa, dx, thr, volume_mode)
    y = _finish(Path(args.table_b).stem, ya, dy, thr, volume_mode)
    for p in (x, y):
        if len(p.table) < 2:
            raise InputError(f"{p.name}: fewer than 2 subjects left after QC filtering")
    return x, y, thr, source


def _preprocessing_block(args, thr, source, *prepared: Prepared) -> dict:
    return {
        "region_map": args.region_map,
        "qc_threshold": thr,
        "qc_threshold_source": source,
        "tables": [
            {
                "name": p.name,
                "n_loaded": len(p.raw),
                "n_dropped_invalid": p.dropped,
                "n_removed_qc": len(p.removed),
                "n_used": len(p.table),
            }
            for p in prepared
        ],
    }


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_compute(args) -> int:
    volume_mode = args.metric == "wasabi"
    x, y, thr, source = prepare_pair(args, volume_mode)
    _, fn = resolve_metric(args.metric)
    result = fn(x.table, y.table)
    out = result.to_dict()
    out["preprocessing"] = _preprocessing_block(args, thr, source, x, y)
    emit(dumps(out), args.out)
    return 0


def cmd_bootstrap(args) -> int:
    volume_mode = args.metric == "wasabi"
    x, y, thr, source = prepare_pair(args, volume_mode)
    report = run_bootstrap(
        x.table, y.table, args.metric, args.sample_size, args.repeats, args.seed, workers=args.workers
    )
    if args.format == "csv":
        emit(report.to_csv(), args.out)
        return 0
    out = report.to_dict()
    out["protocol"]["qc_threshold"] = thr
    out["preprocessing"] = _preprocessing_block(args, thr, source, x, y)
    emit(dumps(out), args.out)
    return 0


def _qc_stats(t: FeatureTable) -> tuple[float | None, float | None]:
    if t.qc is None or len(t.qc) == 0:
        return None, None
    return float(t.qc.mean()), float(t.qc.std(ddof=1)) if len(t.qc) > 1 else 0.0


def build_comparison(args) -> dict:
    metrics = list(dict.fromkeys(args.metric or ["wasabi"]))
    for m in metrics:
        resolve_metric(m)
    volume_mode = "wasabi" in metrics
    ref_raw, ref_dropped = _load(args, args.reference, volume_mode)
    thr, source = _resolve_threshold(args, [ref_raw.qc])
    ref = _finish(Path(args.reference).stem, ref_raw, ref_dropped, thr, volume_mode)
    if len(ref.table) < 2 * args.sample_size:
        raise InputError(
            f"reference {ref.name!r} has {len(ref.table)} subjects after QC; the within-reference "
            f"null needs {2 * args.sample_size}"
        )

    def row(p: Prepared, reports: dict[str, BootstrapReport] | None, null: bool, status: str) -> dict:
        qc_mean, qc_sd = _qc_stats(p.raw)
        return {
            "dataset_name": p.name,
            "null": null,
            "status": status,
            "qc_mean": qc_mean,
            "qc_sd": qc_sd,
            "n_loaded": len(p.raw),
            "n_used": len(p.table),
            "metrics": {
                m: None if reports is None else {"mean": reports[m].summary["mean"], "sd": reports[m].summary["sd"]}
                for m in metrics
            },
            "reports": None if reports is None else {m: r.to_dict() for m, r in reports.items()},
        }

    common = dict(sample_size=args.sample_size, repeats=args.repeats, seed=args.seed, workers=args.workers)
    rows = [row(ref, {m: within_cohort_null(ref.table, m, **common) for m in metrics}, True, "ok")]
    for path in args.candidates:
        raw, dropped = _load(args, path, volume_mode)
        if raw.feature_names != ref_raw.feature_names:
            raise InputError(f"{path}: feature columns differ from the reference")
        cand = _finish(Path(path).stem, raw, dropped, thr, volume_mode)
        if len(cand.table) < args.sample_size:
            msg = (
                f"{cand.name}: only {len(cand.table)} of {len(raw)} subjects pass QC "
                f"(need {args.sample_size}); row left blank"
            )
            logger.warning(msg)
            print(f"warning: {msg}", file=sys.stderr)
            rows.append(row(cand, None, False, "failed_qc"))
            continue
        reports = {m: run_bootstrap(ref.table, cand.table, m, **common) for m in metrics}
        rows.append(row(cand, reports, False, "ok"))

    return {
        "reference_name": ref.name,
        "protocol": {
            "sample_size": args.sample_size,
            "repeats": args.repeats,
            "seed": args.seed,
            "qc_threshold": thr,
            "qc_threshold_source": source,
            "metrics": metrics,
            "region_map": args.region_map,
        },
        "rows": rows,
    }


def _fmt(mean: float, sd: float) -> str:
    return f"{mean:.4g}({sd:.3g})"


def format_comparison_text(report: dict, color: bool = False) -> str:
    """Plain-text table with ``mean(sd)`` cells; failed rows show dashes."""
    metrics = report["protocol"]["metrics"]
    header = ["Dataset", "QC"] + [m.upper() for m in metrics]
    lines = []
    for r in report["rows"]:
        qc = "--" if r["qc_mean"] is None else f"{r['qc_mean']:.2f}({r['qc_sd']:.2f})"
        cells = [r["dataset_name"] + (" (null)" if r["null"] else ""), qc]
        for m in metrics:
            s = r["metrics"][m]
            cells.append("--" if s is None else _fmt(s["mean"], s["sd"]))
        lines.append((r["null"], cells))
    widths = [max(len(h), *(len(c[i]) for _, c in lines)) for i, h in enumerate(header)]

    def render(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()

    out = [f"Distance w.r.t. {report['reference_name']}", render(header), render(["-" * w for w in widths])]
    for null, cells in lines:
        text = render(cells)
        out.append(f"\x1b[2m{text}\x1b[0m" if color and null else text)
    return "\n".join(out) + "\n"


def cmd_compare(args) -> int:
    report = build_comparison(args)
    if args.format == "text":
        color = args.out is None and sys.stdout.isatty() and "NO_COLOR" not in os.environ
        emit(format_comparison_text(report, color=color), args.out)
    else:
        emit(dumps(report), args.out)
    return 0


def cmd_qc_filter(args) -> int:
    table, dropped = _load(args, args.table, volume_mode=True)
    if table.qc is None:
        raise InputError(f"{args.table}: no QC column")
    thr, source = _resolve_threshold(args, [table.qc])
    kept, removed = filter_by_qc(table, thr)
    if args.write_table:
        write_table(kept, args.write_table)
    emit(
        dumps(
            {
                "qc_threshold": thr,
                "qc_threshold_source": source,
                "n_loaded": len(table),
                "n_dropped_invalid": dropped,
                "n_kept": len(kept),
                "removed": removed,
            }
        ),
        args.out,
    )
    return 0


def cmd_normality(args) -> int:
    table, _ = _load(args, args.table, volume_mode=not args.no_normalize)
    thr = None
    if table.qc is not None and args.qc_threshold is not None:
        thr = args.qc_threshold
        table, _ = filter_by_qc(table, thr)
    if not args.no_normalize and table.icv is not None:
        table = normalize_by_icv(table)
    out = henze_zirkler(table).to_dict()
    out["normalized"] = table.normalized
    out["qc_threshold"] = thr
    emit(dumps(out), args.out)
    return 0


def cmd_gen(args) -> int:
    with open(args.spec) as fh:
        spec = json.load(fh)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"seed": args.seed, "files": []}
    if "base" in spec:
        base = CohortSpec.from_dict(spec["base"])
        effects = spec["effect_sizes"]
        scales = spec.get("cov_scales")
        pairs = generate_scenario_suite(base, effects, args.seed, scales)
        write_table(pairs[0][0], out_dir / f"{base.name}_base.csv")
        manifest["reference"] = str(out_dir / f"{base.name}_base.csv")
        manifest["ground_truth_w2"] = scenario_ground_truth(base, effects, scales)
        for k, (_, y) in enumerate(pairs):
            path = out_dir / f"{base.name}_e{k}.csv"
            write_table(y, path)
            manifest["files"].append({"path": str(path), "effect_size": effects[k]})
    else:
        c = CohortSpec.from_dict(spec)
        path = out_dir / f"{c.name}.csv"
        write_table(generate_cohort(c, args.seed), path)
        manifest["files"].append({"path": str(path)})
    emit(dumps(manifest), args.out)
    return 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, *, qc=True) -> None:
    p.add_argument("--region-map", metavar="PATH", help="region map JSON, or 'synthseg' for the shipped map")
    p.add_argument("--schema", metavar="PATH", help="column-role schema JSON")
    p.add_argument("--drop-invalid-rows", action="store_true", help="skip rows with invalid cells instead of failing")
    if qc:
        p.add_argument("--qc-threshold", type=float, metavar="X", help="fixed QC cutoff (default: Q1 - 1.5 IQR)")
    p.add_argument("--out", metavar="PATH", help="write output here instead of stdout")


def _resampling(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sample-size", type=int, default=500, metavar="N")
    p.add_argument("--repeats", type=int, default=1000, metavar="N")
    p.add_argument("--seed", type=int, default=0, metavar="N")
    p.add_argument("--workers", type=int, default=1, metavar="N", help="threads for independent repeats")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wasabi", description=__doc__.split("\n\n")[0])
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", help="distance between two tables")
    p.add_argument("table_a")
    p.add_argument("table_b")
    p.add_argument("--metric", choices=METRIC_CHOICES, default="wasabi")
    _common(p)
    p.add_argument("--format", choices=("json",), default="json")
    p.set_defaults(func=cmd_compute)

    p = sub.add_parser("bootstrap", help="resampled distance distribution between two tables")
    p.add_argument("table_a")
    p.add_argument("table_b")
    p.add_argument("--metric", choices=METRIC_CHOICES, default="wasabi")
    _common(p)
    _resampling(p)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("compare", help="reference null plus reference-vs-candidate rows")
    p.add_argument("reference")
    p.add_argument("candidates", nargs="*")
    p.add_argument("--metric", choices=METRIC_CHOICES, action="append", help="repeatable; default wasabi")
    _common(p)
    _resampling(p)
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("qc-filter", help="derive QC threshold and list removed subjects")
    p.add_argument("table")
    _common(p)
    p.add_argument("--write-table", metavar="PATH", help="also write the filtered table as CSV")
    p.set_defaults(func=cmd_qc_filter)

    p = sub.add_parser("normality", help="Henze-Zirkler multivariate normality test")
    p.add_argument("table")
    _common(p)
    p.add_argument("--no-normalize", action="store_true", help="test raw values (skip ICV division)")
    p.set_defaults(func=cmd_normality)

    p = sub.add_parser("gen", help="generate synthetic cohorts from a JSON spec")
    p.add_argument("spec", help="cohort spec JSON, or {'base': spec, 'effect_sizes': [...]} for a suite")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="PATH", help="write the manifest here instead of stdout")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, OSError, KeyError, ValueError) as exc:
        _report_error(exc)
        return 1
    except (NumericalError, np.linalg.LinAlgError, ArithmeticError) as exc:
        _report_error(exc)
        return 2


def _report_error(exc: BaseException) -> None:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
