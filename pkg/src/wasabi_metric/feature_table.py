"""Per-subject morphometric feature tables.

A :class:`FeatureTable` holds one row per subject and one column per regional
measure, plus the optional QC score and intracranial volume (ICV) columns that
segmentation tools emit next to the volumes. The preprocessing chain used for
cohort comparison is::

    table = load_table("volumes.csv", schema)
    table = apply_region_map(table, region_map)      # left/right -> bilateral
    table, removed = filter_by_qc(table, qc_iqr_threshold(table.qc))
    table = normalize_by_icv(table)                  # volume / ICV

Tables are immutable; every operation returns a new table.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from os import PathLike
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError

logger = logging.getLogger(__name__)

__all__ = [
    "FeatureTable",
    "RegionEntry",
    "RegionMap",
    "TableSchema",
    "DroppedRow",
    "load_table",
    "load_table_with_report",
    "write_table",
    "apply_region_map",
    "normalize_by_icv",
    "qc_iqr_threshold",
    "filter_by_qc",
    "default_region_map",
]


def _frozen_array(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Subjects x features matrix with optional QC and ICV columns.

    ``volumes`` marks tables whose features are physical volumes and must be
    nonnegative; embedding matrices from an external network set it to False.
    """

    subject_ids: tuple[str, ...]
    feature_names: tuple[str, ...]
    values: np.ndarray
    qc: np.ndarray | None = None
    icv: np.ndarray | None = None
    normalized: bool = False
    volumes: bool = True

    def __post_init__(self):
        object.__setattr__(self, "subject_ids", tuple(str(s) for s in self.subject_ids))
        object.__setattr__(self, "feature_names", tuple(str(f) for f in self.feature_names))
        values = _frozen_array(self.values)
        if values.ndim != 2:
            raise InputError(f"values must be 2-D, got shape {values.shape}")
        object.__setattr__(self, "values", values)
        n = len(self.subject_ids)
        if values.shape != (n, len(self.feature_names)):
            raise InputError(
                f"values shape {values.shape} does not match "
                f"{n} subjects x {len(self.feature_names)} features"
            )
        _check_unique(self.subject_ids, "subject id")
        _check_unique(self.feature_names, "feature name")

        if not np.all(np.isfinite(values)):
            i, j = np.argwhere(~np.isfinite(values))[0]
            raise InputError(
                f"non-finite value for subject {self.subject_ids[i]!r}, "
                f"feature {self.feature_names[j]!r}"
            )
        if self.volumes and np.any(values < 0):
            i, j = np.argwhere(values < 0)[0]
            raise InputError(
                f"negative volume for subject {self.subject_ids[i]!r}, "
                f"feature {self.feature_names[j]!r}"
            )

        for name in ("qc", "icv"):
            col = getattr(self, name)
            if col is None:
                continue
            col = _frozen_array(col)
            if col.shape != (n,):
                raise InputError(f"{name} column has shape {col.shape}, expected ({n},)")
            if not np.all(np.isfinite(col)):
                i = int(np.argmax(~np.isfinite(col)))
                raise InputError(f"non-finite {name} for subject {self.subject_ids[i]!r}")
            object.__setattr__(self, name, col)
        if self.qc is not None and np.any((self.qc < 0) | (self.qc > 1)):
            i = int(np.argmax((self.qc < 0) | (self.qc > 1)))
            raise InputError(f"qc outside [0, 1] for subject {self.subject_ids[i]!r}")

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def __len__(self) -> int:
        return self.n_subjects

    def take(self, rows: Sequence[int] | np.ndarray) -> FeatureTable:
        """Return the table restricted to the given row indices, in that order."""
        rows = np.asarray(rows, dtype=np.intp)
        return dataclasses.replace(
            self,
            subject_ids=tuple(self.subject_ids[i] for i in rows),
            values=self.values[rows],
            qc=None if self.qc is None else self.qc[rows],
            icv=None if self.icv is None else self.icv[rows],
        )

    def column(self, name: str) -> np.ndarray:
        try:
            j = self.feature_names.index(name)
        except ValueError:
            raise InputError(f"no feature column named {name!r}") from None
        return self.values[:, j]

    def select(self, names: Sequence[str]) -> FeatureTable:
        """Reorder/restrict feature columns by name."""
        missing = [n for n in names if n not in self.feature_names]
        if missing:
            raise InputError(f"missing feature columns: {missing}")
        idx = [self.feature_names.index(n) for n in names]
        return dataclasses.replace(self, feature_names=tuple(names), values=self.values[:, idx])


def _check_unique(items: Sequence[str], what: str) -> None:
    seen = set()
    for item in items:
        if item in seen:
            raise InputError(f"duplicate {what}: {item!r}")
        seen.add(item)


# --------------------------------------------------------------------------
# Column roles
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TableSchema:
    """Binds header columns to roles.

    ``subject=None`` means the first column. ``features="all"`` takes every
    column not bound to another role and not listed in ``exclude``.
    """

    subject: str | None = None
    qc: str | None = None
    icv: str | None = None
    features: str | tuple[str, ...] = "all"
    exclude: tuple[str, ...] = ()

    @classmethod
    def from_dict(cls, d: dict) -> TableSchema:
        unknown = set(d) - {"subject", "qc", "icv", "features", "exclude"}
        if unknown:
            raise InputError(f"unknown schema keys: {sorted(unknown)}")
        features = d.get("features", "all")
        if features != "all":
            if isinstance(features, str) or not isinstance(features, Iterable):
                raise InputError("schema 'features' must be \"all\" or a list of column names")
            features = tuple(features)
        return cls(
            subject=d.get("subject"),
            qc=d.get("qc"),
            icv=d.get("icv"),
            features=features,
            exclude=tuple(d.get("exclude", ())),
        )

    @classmethod
    def from_json(cls, path: str | PathLike) -> TableSchema:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def auto(
        cls,
        header: Sequence[str],
        qc_candidates: Sequence[str] = ("qc",),
        icv_candidates: Sequence[str] = ("icv",),
    ) -> TableSchema:
        """Guess roles: first column is the subject id, QC/ICV by name if present."""
        qc = next((c for c in qc_candidates if c in header), None)
        icv = next((c for c in icv_candidates if c in header), None)
        return cls(subject=header[0], qc=qc, icv=icv)

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "qc": self.qc,
            "icv": self.icv,
            "features": self.features if self.features == "all" else list(self.features),
            "exclude": list(self.exclude),
        }


@dataclass(frozen=True)
class DroppedRow:
    line: int
    subject_id: str
    column: str
    reason: str


def _sniff_delimiter(header_line: str) -> str:
    n_tab, n_comma = header_line.count("\t"), header_line.count(",")
    if n_tab == 0 and n_comma == 0:
        return ","
    return "\t" if n_tab > n_comma else ","


def load_table_with_report(
    path: str | PathLike,
    schema: TableSchema | None = None,
    *,
    drop_invalid_rows: bool = False,
    volumes: bool = True,
) -> tuple[FeatureTable, list[DroppedRow]]:
    """Like :func:`load_table` but also returns the rows that were dropped."""
    with open(path, newline="") as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise InputError(f"{path}: empty file or missing header row")
    delimiter = _sniff_delimiter(lines[0])
    reader = csv.reader(lines, delimiter=delimiter)
    header = [h.strip() for h in next(reader)]
    for j, h in enumerate(header):
        if not h:
            raise InputError(f"{path}: empty header name in column {j + 1}")
    _check_unique(header, "header name")

    if schema is None:
        schema = TableSchema.auto(header)
    subject_col = schema.subject or header[0]
    for role, col in (("subject", subject_col), ("qc", schema.qc), ("icv", schema.icv)):
        if col is not None and col not in header:
            raise InputError(f"{path}: {role} column {col!r} not found in header")
    role_cols = {subject_col, schema.qc, schema.icv} - {None}
    if schema.features == "all":
        feature_cols = [h for h in header if h not in role_cols and h not in schema.exclude]
    else:
        feature_cols = list(schema.features)
        missing = [c for c in feature_cols if c not in header]
        if missing:
            raise InputError(f"{path}: feature columns not found in header: {missing}")
    if not feature_cols:
        raise InputError(f"{path}: no feature columns")

    pos = {h: j for j, h in enumerate(header)}
    ids, rows, qcs, icvs = [], [], [], []
    dropped: list[DroppedRow] = []
    seen: dict[str, int] = {}

    for line_no, record in enumerate(reader, start=2):
        if not record or all(not c.strip() for c in record):
            continue
        if len(record) != len(header):
            raise InputError(
                f"{path}: line {line_no} has {len(record)} fields, header has {len(header)}"
            )
        sid = record[pos[subject_col]].strip()
        if not sid:
            raise InputError(f"{path}: line {line_no} has an empty subject id")
        if sid in seen:
            raise InputError(
                f"{path}: duplicate subject id {sid!r} (lines {seen[sid]} and {line_no})"
            )
        seen[sid] = line_no

        problem = None
        feats = []
        for col in feature_cols:
            v = _parse_cell(record[pos[col]])
            if v is None:
                problem = (col, f"non-numeric or non-finite value {record[pos[col]]!r}")
                break
            if volumes and v < 0:
                problem = (col, f"negative volume {v!r}")
                break
            feats.append(v)
        qc = icv = None
        if problem is None and schema.qc is not None:
            qc = _parse_cell(record[pos[schema.qc]])
            if qc is None or not 0.0 <= qc <= 1.0:
                problem = (schema.qc, f"invalid qc {record[pos[schema.qc]]!r}")
        if problem is None and schema.icv is not None:
            icv = _parse_cell(record[pos[schema.icv]])
            if icv is None:
                problem = (schema.icv, f"invalid icv {record[pos[schema.icv]]!r}")

        if problem is not None:
            col, reason = problem
            if not drop_invalid_rows:
                raise InputError(
                    f"{path}: line {line_no} (subject {sid!r}), column {col!r}: {reason}"
                )
            dropped.append(DroppedRow(line_no, sid, col, reason))
            continue
        ids.append(sid)
        rows.append(feats)
        qcs.append(qc)
        icvs.append(icv)

    if dropped:
        logger.warning("%s: dropped %d invalid row(s)", path, len(dropped))
    values = np.array(rows, dtype=float).reshape(len(rows), len(feature_cols))
    table = FeatureTable(
        subject_ids=ids,
        feature_names=feature_cols,
        values=values,
        qc=None if schema.qc is None else np.array(qcs, dtype=float),
        icv=None if schema.icv is None else np.array(icvs, dtype=float),
        volumes=volumes,
    )
    return table, dropped


def _parse_cell(cell: str) -> float | None:
    try:
        v = float(cell.strip())
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_table(
    path: str | PathLike,
    schema: TableSchema | None = None,
    *,
    drop_invalid_rows: bool = False,
    volumes: bool = True,
) -> FeatureTable:
    """Read a comma- or tab-separated table with one header row.

    Without a schema, the first column is taken as the subject id and columns
    literally named ``qc`` / ``icv`` are bound to those roles. Any invalid cell
    raises :class:`InputError` naming the line and column, unless
    ``drop_invalid_rows`` is set, in which case the row is skipped and logged.
    Duplicate subject ids are always an error.

    Set ``volumes=False`` for embedding matrices, whose entries may be negative.
    """
    table, _ = load_table_with_report(
        path, schema, drop_invalid_rows=drop_invalid_rows, volumes=volumes
    )
    return table


def write_table(table: FeatureTable, path: str | PathLike, subject_column: str = "subject") -> None:
    """Write a table as CSV (subject, [qc], [icv], features...) with repr-exact floats."""
    header = [subject_column]
    if table.qc is not None:
        header.append("qc")
    if table.icv is not None:
        header.append("icv")
    header.extend(table.feature_names)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, sid in enumerate(table.subject_ids):
            row = [sid]
            if table.qc is not None:
                row.append(repr(float(table.qc[i])))
            if table.icv is not None:
                row.append(repr(float(table.icv[i])))
            row.extend(repr(float(v)) for v in table.values[i])
            w.writerow(row)


# --------------------------------------------------------------------------
# Region mapping
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RegionEntry:
    output_name: str
    inputs: tuple[str, ...]
    aggregation: str = "mean"

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if len(self.inputs) not in (1, 2):
            raise InputError(
                f"region {self.output_name!r} must have 1 (midline) or 2 (left/right) "
                f"inputs, got {len(self.inputs)}"
            )
        if self.aggregation != "mean":
            raise InputError(f"region {self.output_name!r}: unsupported aggregation {self.aggregation!r}")


@dataclass(frozen=True)
class RegionMap:
    """Declarative mapping from raw region columns to bilateral measures."""

    entries: tuple[RegionEntry, ...]
    icv_column: str | None = None
    qc_column: str | None = None
    description: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        _check_unique([e.output_name for e in self.entries], "region output name")
        _check_unique([c for e in self.entries for c in e.inputs], "region input column")

    @property
    def output_names(self) -> tuple[str, ...]:
        return tuple(e.output_name for e in self.entries)

    @property
    def input_columns(self) -> tuple[str, ...]:
        return tuple(c for e in self.entries for c in e.inputs)

    @classmethod
    def from_dict(cls, d: dict) -> RegionMap:
        try:
            entries = [
                RegionEntry(e["output_name"], tuple(e["inputs"]), e.get("aggregation", "mean"))
                for e in d["entries"]
            ]
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed region map: {exc}") from None
        return cls(
            entries=entries,
            icv_column=d.get("icv_column"),
            qc_column=d.get("qc_column"),
            description=d.get("description", ""),
        )

    @classmethod
    def from_json(cls, path: str | PathLike) -> RegionMap:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "description": self.description,
            "icv_column": self.icv_column,
            "qc_column": self.qc_column,
            "entries": [
                {"output_name": e.output_name, "inputs": list(e.inputs), "aggregation": e.aggregation}
                for e in self.entries
            ],
        }


def default_region_map() -> RegionMap:
    """52-measure bilateral map over SynthSeg 2.0 volume column names.

    34 cortical (Desikan-Killiany) and 14 subcortical left/right pairs are
    averaged; 3rd ventricle, 4th ventricle, brain-stem and CSF pass through.
    This is a best-effort reconstruction; pass your own map if your columns
    or region choice differ.
    """
    ref = resources.files("wasabi_metric") / "data" / "synthseg_bilateral_map.json"
    with ref.open() as fh:
        return RegionMap.from_dict(json.load(fh))


def apply_region_map(t: FeatureTable, m: RegionMap) -> FeatureTable:
    """Collapse raw region columns into the map's output measures.

    Pairs are replaced by the arithmetic mean of the two inputs, single
    inputs pass through unchanged. QC and ICV columns are carried along.
    """
    if t.normalized:
        raise InputError("apply_region_map must run before ICV normalization")
    missing = [c for c in m.input_columns if c not in t.feature_names]
    if missing:
        raise InputError(f"region map references columns absent from the table: {missing}")
    cols = []
    for e in m.entries:
        if len(e.inputs) == 1:
            cols.append(t.column(e.inputs[0]))
        else:
            cols.append((t.column(e.inputs[0]) + t.column(e.inputs[1])) / 2)
    values = np.column_stack(cols) if cols else np.empty((t.n_subjects, 0))
    return dataclasses.replace(t, feature_names=m.output_names, values=values)


def normalize_by_icv(t: FeatureTable) -> FeatureTable:
    """Divide every feature by the subject's intracranial volume.

    The ICV column is kept for auditing; the result has ``normalized=True``.
    """
    if t.normalized:
        raise InputError("table is already ICV-normalized")
    if t.icv is None:
        raise InputError("table has no ICV column")
    bad = np.flatnonzero(t.icv <= 0)
    if bad.size:
        raise InputError(
            f"nonpositive ICV {t.icv[bad[0]]!r} for subject {t.subject_ids[bad[0]]!r}"
        )
    return dataclasses.replace(t, values=t.values / t.icv[:, None], normalized=True)


def qc_iqr_threshold(qc_values) -> float:
    """Lower Tukey fence ``Q1 - 1.5 * IQR`` of a QC distribution.

    Quartiles use linear interpolation between order statistics at position
    ``1 + (n - 1) p`` (numpy's default "linear" method).
    """
    qc = np.asarray(qc_values, dtype=float).ravel()
    if qc.size < 4:
        raise InputError(f"need at least 4 QC values for an IQR threshold, got {qc.size}")
    if not np.all(np.isfinite(qc)):
        raise InputError("QC values must be finite")
    q1, q3 = np.quantile(qc, [0.25, 0.75], method="linear")
    return float(q1 - 1.5 * (q3 - q1))


def filter_by_qc(t: FeatureTable, threshold: float) -> tuple[FeatureTable, list[str]]:
    """Drop subjects with ``qc < threshold``; a score equal to the threshold is kept.

    Returns the filtered table and the removed subject ids in table order.
    """
    if t.qc is None:
        raise InputError("table has no QC column")
    keep = t.qc >= threshold
    removed = [sid for sid, k in zip(t.subject_ids, keep) if not k]
    return t.take(np.flatnonzero(keep)), removed
