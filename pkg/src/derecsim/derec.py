"""Detect / Recreate / Connect: restructure two many-to-many tables into parent/child form.

Two party tables that both repeat subjects are split into

* a *parent* table holding one row per subject with every contextual column
  (columns that are constant within a subject for at least a threshold share
  of subjects), and
* up to two *child* tables, one per source, holding the identifier plus that
  source's remaining columns with every original row.
"""

from __future__ import annotations

import os
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from derecsim.errors import (
    BundleInvariantError,
    MissingArtifact,
    NoContextualColumns,
    SchemaError,
)
from derecsim.fsutil import dumps_json, read_json, sha256_bytes, write_json
from derecsim.table import (
    Column,
    ColumnKind,
    DataTable,
    Schema,
    intersect_subjects,
    load_csv,
    save_csv,
    to_csv_text,
)

DEFAULT_THRESHOLD = 0.95
SOURCES = ("a", "b")


@dataclass(frozen=True)
class ColumnVerdict:
    column: str
    source: str
    fraction: float
    contextual: bool


@dataclass(frozen=True)
class ContextualReport:
    """Per-column contextual fractions for one source table."""

    source: str
    threshold: float
    columns: tuple[ColumnVerdict, ...]

    @property
    def contextual_columns(self) -> tuple[str, ...]:
        return tuple(v.column for v in self.columns if v.contextual)

    @property
    def non_contextual_columns(self) -> tuple[str, ...]:
        return tuple(v.column for v in self.columns if not v.contextual)

    def verdict(self, column: str) -> ColumnVerdict:
        for v in self.columns:
            if v.column == column:
                return v
        raise KeyError(column)

    def to_dict(self) -> dict[str, Any]:
        return {
            "source": self.source,
            "threshold": self.threshold,
            "columns": [
                {
                    "name": v.column,
                    "fraction": v.fraction,
                    "verdict": "contextual" if v.contextual else "non-contextual",
                }
                for v in self.columns
            ],
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> ContextualReport:
        src = doc["source"]
        cols = tuple(
            ColumnVerdict(c["name"], src, float(c["fraction"]), c["verdict"] == "contextual")
            for c in doc["columns"]
        )
        return cls(src, float(doc["threshold"]), cols)


@dataclass(frozen=True)
class ParentColumn:
    """Where a parent column came from: its source tag and original name."""

    name: str
    source: str
    column: str


def detect(t: DataTable, threshold: float = DEFAULT_THRESHOLD, source: str = "a") -> ContextualReport:
    """Score every non-identifier column of ``t`` for within-subject constancy.

    The fraction for a column is the share of subjects whose rows all carry a
    single value in it; subjects are counted uniformly regardless of row count.
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    if t.n_rows == 0:
        raise ValueError("cannot run detection on an empty table")
    n_subjects = len(t.subject_index)
    verdicts = []
    for name in t.schema.feature_names:
        col = t.column(name)
        constant = 0
        for positions in t.subject_index.values():
            first = col[positions[0]]
            if all(col[p] == first for p in positions[1:]):
                constant += 1
        fraction = constant / n_subjects
        verdicts.append(ColumnVerdict(name, source, fraction, fraction >= threshold))
    return ContextualReport(source, threshold, tuple(verdicts))


def representative(values: Sequence[Any]) -> Any:
    """Modal value; ties go to the value seen first."""
    counts = Counter(values)
    best = max(counts.values())
    for v in values:
        if counts[v] == best:
            return v
    raise ValueError("no values")  # pragma: no cover - callers pass non-empty subjects


def parent_layout(report_a: ContextualReport, report_b: ContextualReport) -> tuple[ParentColumn, ...]:
    """Name the parent columns; names contextual in both sources get an ``@source`` suffix."""
    ctx_a, ctx_b = report_a.contextual_columns, report_b.contextual_columns
    clash = set(ctx_a) & set(ctx_b)
    layout = []
    for rep, ctx in ((report_a, ctx_a), (report_b, ctx_b)):
        for col in ctx:
            name = f"{col}@{rep.source}" if col in clash else col
            layout.append(ParentColumn(name, rep.source, col))
    return tuple(layout)


def recreate(
    a: DataTable, b: DataTable, report_a: ContextualReport, report_b: ContextualReport
) -> DataTable:
    """Build the one-row-per-subject parent table from the contextual columns."""
    layout = parent_layout(report_a, report_b)
    if not layout:
        raise NoContextualColumns(
            "no contextual column found in either source; no parent table can be formed"
        )
    ident = a.identifier
    tables = {report_a.source: a, report_b.source: b}
    subjects = [s for s in a.subjects if s in b.subject_index]
    cols: dict[str, list[Any]] = {ident: subjects}
    schema_cols = [Column(ident, ColumnKind.IDENTIFIER)]
    for pc in layout:
        t = tables[pc.source]
        values = t.column(pc.column)
        cols[pc.name] = [representative([values[p] for p in t.subject_index[s]]) for s in subjects]
        schema_cols.append(Column(pc.name, t.schema.kind(pc.column)))
    return DataTable(Schema(tuple(schema_cols), ident), cols)


@dataclass(frozen=True)
class DerecBundle:
    """A parent table, its child tables, and the partition that produced them."""

    parent: DataTable
    children: tuple[tuple[str, DataTable], ...]
    partition: tuple[ContextualReport, ...]
    layout: tuple[ParentColumn, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "children", tuple(self.children))
        object.__setattr__(self, "partition", tuple(self.partition))
        object.__setattr__(self, "layout", tuple(self.layout))
        self.validate()

    def validate(self) -> None:
        p = self.parent
        if len(p.subject_index) != p.n_rows:
            raise BundleInvariantError("parent table repeats subject identifiers")
        if tuple(pc.name for pc in self.layout) != p.schema.feature_names:
            raise BundleInvariantError("parent columns disagree with the recorded layout")
        for tag, child in self.children:
            if child.identifier != p.identifier:
                raise BundleInvariantError(f"child {tag!r} uses a different identifier column")
            orphans = set(child.subject_index) - set(p.subject_index)
            if orphans:
                raise BundleInvariantError(
                    f"child {tag!r} has {len(orphans)} subject(s) missing from the parent"
                )
            expected = self.report(tag).non_contextual_columns
            if child.schema.feature_names != expected:
                raise BundleInvariantError(
                    f"child {tag!r} columns {child.schema.feature_names} != {expected}"
                )

    @property
    def identifier(self) -> str:
        return self.parent.identifier

    @property
    def sources(self) -> tuple[str, ...]:
        return tuple(r.source for r in self.partition)

    def report(self, source: str) -> ContextualReport:
        for r in self.partition:
            if r.source == source:
                return r
        raise KeyError(source)

    def child(self, source: str) -> DataTable | None:
        for tag, t in self.children:
            if tag == source:
                return t
        return None

    def source_columns(self, source: str) -> tuple[str, ...]:
        """Original non-identifier columns of a source, in original schema order."""
        return tuple(v.column for v in self.report(source).columns)

    def locate(self, source: str, column: str) -> tuple[DataTable, str]:
        """The table holding an original source column and its name in that table."""
        for pc in self.layout:
            if pc.source == source and pc.column == column:
                return self.parent, pc.name
        child = self.child(source)
        if child is not None and column in child.schema:
            return child, column
        raise KeyError(f"column {column!r} of source {source!r} not in bundle")

    def kind(self, source: str, column: str) -> ColumnKind:
        t, name = self.locate(source, column)
        return t.schema.kind(name)

    def replace_tables(
        self, parent: DataTable, children: Sequence[tuple[str, DataTable]]
    ) -> DerecBundle:
        """Same partition and layout, new tables (what synthesizers return)."""
        return DerecBundle(parent, tuple(children), self.partition, self.layout)

    # -- serialization -------------------------------------------------------

    def partition_doc(self) -> dict[str, Any]:
        return {
            "identifier": self.identifier,
            "threshold": self.partition[0].threshold if self.partition else None,
            "reports": [r.to_dict() for r in self.partition],
            "parent_columns": [
                {"name": pc.name, "source": pc.source, "column": pc.column} for pc in self.layout
            ],
            "children": [tag for tag, _ in self.children],
        }

    def fingerprint(self) -> str:
        parts = [dumps_json(self.partition_doc()), to_csv_text(self.parent)]
        parts += [to_csv_text(t) for _, t in self.children]
        return "sha256:" + sha256_bytes("\x1e".join(parts).encode("utf-8"))

    def save(self, directory: str | os.PathLike) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_csv(self.parent, d / "parent.csv")
        self.parent.schema.save(d / "parent.schema.json")
        for tag, t in self.children:
            save_csv(t, d / f"child_{tag}.csv")
            t.schema.save(d / f"child_{tag}.schema.json")
        write_json(d / "partition.json", self.partition_doc())
        return d

    @classmethod
    def load(cls, directory: str | os.PathLike) -> DerecBundle:
        d = Path(directory)
        if not (d / "partition.json").is_file():
            raise MissingArtifact(f"{d}: partition.json not found")
        doc = read_json(d / "partition.json")
        return cls.load_tables(d, doc)

    @classmethod
    def load_tables(
        cls,
        directory: str | os.PathLike,
        doc: Mapping[str, Any],
        schemas: Mapping[str, Schema] | None = None,
    ) -> DerecBundle:
        """Load tables named per ``doc`` from ``directory``.

        ``schemas`` (keyed ``parent``, ``child_a`` ...) overrides the schema
        files next to the tables; used to validate externally produced data
        against the original schemas.
        """
        d = Path(directory)
        partition = tuple(ContextualReport.from_dict(r) for r in doc["reports"])
        layout = tuple(ParentColumn(c["name"], c["source"], c["column"]) for c in doc["parent_columns"])

        def table(stem: str) -> DataTable:
            csv_path = d / f"{stem}.csv"
            if not csv_path.is_file():
                raise MissingArtifact(f"expected {csv_path.name} in {d}")
            schema = schemas[stem] if schemas is not None else Schema.load(d / f"{stem}.schema.json")
            return load_csv(csv_path, schema)

        parent = table("parent")
        children = tuple((tag, table(f"child_{tag}")) for tag in doc["children"])
        return cls(parent, children, partition, layout)


def connect(
    parent: DataTable,
    a: DataTable,
    b: DataTable,
    report_a: ContextualReport,
    report_b: ContextualReport,
) -> DerecBundle:
    """Attach each source's non-contextual columns to the parent as a child table."""
    children = []
    for t, rep in ((a, report_a), (b, report_b)):
        rest = rep.non_contextual_columns
        if rest:
            children.append((rep.source, t.select(rest)))
    return DerecBundle(parent, tuple(children), (report_a, report_b), parent_layout(report_a, report_b))


def run_derec(a: DataTable, b: DataTable, threshold: float = DEFAULT_THRESHOLD) -> DerecBundle:
    if a.identifier != b.identifier:
        b = _rename_identifier(b, a.identifier)
    a, b = intersect_subjects(a, b)
    report_a = detect(a, threshold, source="a")
    report_b = detect(b, threshold, source="b")
    parent = recreate(a, b, report_a, report_b)
    return connect(parent, a, b, report_a, report_b)


def _rename_identifier(t: DataTable, new: str) -> DataTable:
    if new in t.schema.feature_names:
        raise SchemaError(f"cannot rename identifier to {new!r}: column already exists")
    cols = tuple(
        Column(new, c.kind) if c.kind is ColumnKind.IDENTIFIER else c for c in t.schema.columns
    )
    data = {(new if n == t.identifier else n): t.column(n) for n in t.schema.names}
    return DataTable(Schema(cols, new), data)
