"""Schema-typed columnar tables keyed by a subject identifier.

A :class:`DataTable` is immutable once built. Cells are stored column-wise as
tuples; identifier and categorical cells are ``str``, numeric cells are finite
``float``. The subject index maps each identifier value to the positions of its
rows, in first-appearance order.
"""

from __future__ import annotations

import csv
import io
import math
import numbers
import os
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Any

from derecsim.errors import (
    DisjointSubjects,
    EmptyTable,
    MissingInput,
    ParseError,
    SchemaError,
    SchemaMismatch,
    UnknownSubject,
)
from derecsim.fsutil import atomic_write_text, dumps_json, read_json

Value = str | float
Record = tuple[Value, ...]


class ColumnKind(str, Enum):
    IDENTIFIER = "identifier"
    CATEGORICAL = "categorical"
    NUMERIC = "numeric"


@dataclass(frozen=True)
class Column:
    name: str
    kind: ColumnKind


@dataclass(frozen=True)
class Schema:
    """Ordered column list plus the name of the identifier column."""

    columns: tuple[Column, ...]
    identifier: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate column names: {dupes}")
        ids = [c.name for c in self.columns if c.kind is ColumnKind.IDENTIFIER]
        if ids != [self.identifier]:
            raise SchemaError(
                f"schema must have exactly one identifier column named {self.identifier!r}, "
                f"found {ids}"
            )

    @classmethod
    def build(cls, identifier: str, **kinds: str | ColumnKind) -> Schema:
        """Shorthand: ``Schema.build("user_id", age="numeric", gender="categorical")``.

        The identifier column always comes first.
        """
        cols = [Column(identifier, ColumnKind.IDENTIFIER)]
        cols += [Column(name, ColumnKind(kind)) for name, kind in kinds.items()]
        return cls(tuple(cols), identifier)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    @property
    def feature_names(self) -> tuple[str, ...]:
        """Non-identifier column names, in schema order."""
        return tuple(c.name for c in self.columns if c.kind is not ColumnKind.IDENTIFIER)

    def kind(self, name: str) -> ColumnKind:
        for c in self.columns:
            if c.name == name:
                return c.kind
        raise KeyError(name)

    def __contains__(self, name: object) -> bool:
        return any(c.name == name for c in self.columns)

    def select(self, names: Iterable[str]) -> Schema:
        """Sub-schema with the identifier plus ``names`` (in the given order)."""
        keep = [Column(self.identifier, ColumnKind.IDENTIFIER)]
        keep += [Column(n, self.kind(n)) for n in names if n != self.identifier]
        return Schema(tuple(keep), self.identifier)

    def to_dict(self) -> dict[str, Any]:
        return {
            "columns": [{"name": c.name, "kind": c.kind.value} for c in self.columns],
            "identifier": self.identifier,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> Schema:
        try:
            cols = tuple(Column(str(c["name"]), ColumnKind(c["kind"])) for c in doc["columns"])
            identifier = str(doc["identifier"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed schema document: {exc}") from exc
        return cls(cols, identifier)

    def save(self, path: str | os.PathLike) -> Path:
        return atomic_write_text(path, dumps_json(self.to_dict()))

    @classmethod
    def load(cls, path: str | os.PathLike) -> Schema:
        if not Path(path).is_file():
            raise MissingInput(f"schema file not found: {path}")
        try:
            doc = read_json(path)
        except ValueError as exc:
            raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
        return cls.from_dict(doc)


def _coerce(kind: ColumnKind, value: Any, *, row: int, column: str) -> Value:
    if kind is ColumnKind.NUMERIC:
        if isinstance(value, bool) or not isinstance(value, numbers.Real):
            raise ParseError(f"numeric cell holds {type(value).__name__}", row=row, column=column)
        value = float(value)
        if not math.isfinite(value):
            raise ParseError("non-finite numeric value", row=row, column=column)
        return value
    if not isinstance(value, str):
        raise ParseError(f"{kind.value} cell must be a string", row=row, column=column)
    if value == "":
        raise ParseError("missing value", row=row, column=column)
    if "\x00" in value:
        raise ParseError("NUL character in cell", row=row, column=column)
    return value


class DataTable:
    """Immutable columnar table with a subject index."""

    __slots__ = ("_schema", "_columns", "_n_rows", "_index")

    def __init__(self, schema: Schema, columns: Mapping[str, Sequence[Any]]):
        if set(columns) != set(schema.names):
            raise SchemaMismatch(
                f"columns {sorted(columns)} do not match schema {list(schema.names)}"
            )
        lengths = {len(columns[n]) for n in schema.names}
        if len(lengths) > 1:
            raise SchemaMismatch(f"ragged columns: lengths {sorted(lengths)}")
        n_rows = lengths.pop() if lengths else 0
        cols: dict[str, tuple[Value, ...]] = {}
        for c in schema.columns:
            raw = columns[c.name]
            cols[c.name] = tuple(
                _coerce(c.kind, v, row=i + 1, column=c.name) for i, v in enumerate(raw)
            )
        index: dict[str, list[int]] = {}
        for pos, sid in enumerate(cols[schema.identifier]):
            index.setdefault(sid, []).append(pos)

        self._schema = schema
        self._columns = MappingProxyType(cols)
        self._n_rows = n_rows
        self._index = MappingProxyType({k: tuple(v) for k, v in index.items()})

    @classmethod
    def from_rows(cls, schema: Schema, rows: Iterable[Sequence[Any]]) -> DataTable:
        rows = list(rows)
        width = len(schema.columns)
        for i, r in enumerate(rows):
            if len(r) != width:
                raise ParseError(f"expected {width} cells, got {len(r)}", row=i + 1)
        return cls(schema, {c.name: [r[j] for r in rows] for j, c in enumerate(schema.columns)})

    # -- accessors -----------------------------------------------------------

    @property
    def schema(self) -> Schema:
        return self._schema

    @property
    def identifier(self) -> str:
        return self._schema.identifier

    @property
    def n_rows(self) -> int:
        return self._n_rows

    def __len__(self) -> int:
        return self._n_rows

    def column(self, name: str) -> tuple[Value, ...]:
        try:
            return self._columns[name]
        except KeyError:
            raise KeyError(f"no column {name!r}; have {list(self._schema.names)}") from None

    @property
    def ids(self) -> tuple[str, ...]:
        return self._columns[self.identifier]  # type: ignore[return-value]

    @property
    def subjects(self) -> tuple[str, ...]:
        """Subject identifiers in first-appearance order."""
        return tuple(self._index)

    @property
    def subject_index(self) -> Mapping[str, tuple[int, ...]]:
        return self._index

    @property
    def rows(self) -> list[Record]:
        cols = [self._columns[n] for n in self._schema.names]
        return list(zip(*cols)) if cols else []

    def row(self, pos: int) -> Record:
        return tuple(self._columns[n][pos] for n in self._schema.names)

    def subject_rows(self, sid: str) -> list[Record]:
        try:
            positions = self._index[sid]
        except KeyError:
            raise UnknownSubject(f"subject {sid!r} not in table") from None
        return [self.row(p) for p in positions]

    # -- derivation ----------------------------------------------------------

    def take(self, positions: Sequence[int]) -> DataTable:
        return DataTable(
            self._schema, {n: [self._columns[n][p] for p in positions] for n in self._schema.names}
        )

    def select(self, names: Iterable[str]) -> DataTable:
        schema = self._schema.select(names)
        return DataTable(schema, {n: self._columns[n] for n in schema.names})

    def with_ids(self, mapping: Mapping[str, str]) -> DataTable:
        """Relabel subject identifiers; every current id must be mapped."""
        cols = dict(self._columns)
        cols[self.identifier] = tuple(mapping[s] for s in self.ids)
        return DataTable(self._schema, cols)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DataTable):
            return NotImplemented
        return self._schema == other._schema and dict(self._columns) == dict(other._columns)

    def __hash__(self) -> int:  # pragma: no cover - tables are not dict keys in practice
        return hash((self._schema, tuple(self._columns[n] for n in self._schema.names)))

    def __repr__(self) -> str:
        return (
            f"DataTable({self._n_rows} rows, {len(self._index)} subjects, "
            f"columns={list(self._schema.names)})"
        )


def subject_rows(t: DataTable, sid: str) -> list[Record]:
    return t.subject_rows(sid)


def intersect_subjects(a: DataTable, b: DataTable) -> tuple[DataTable, DataTable]:
    """Drop rows whose subject does not occur in both tables."""
    shared = set(a.subject_index) & set(b.subject_index)
    if not shared:
        raise DisjointSubjects("the two tables share no subject identifiers")

    def keep(t: DataTable) -> DataTable:
        if shared.issuperset(t.subject_index):
            return t
        return t.take([p for p, sid in enumerate(t.ids) if sid in shared])

    return keep(a), keep(b)


# -- CSV ------------------------------------------------------------------------


def format_cell(kind: ColumnKind, value: Value) -> str:
    if kind is ColumnKind.NUMERIC:
        return repr(float(value))
    return str(value)


def to_csv_text(t: DataTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(t.schema.names)
    kinds = [c.kind for c in t.schema.columns]
    for r in t.rows:
        w.writerow([format_cell(k, v) for k, v in zip(kinds, r)])
    return buf.getvalue()


def save_csv(t: DataTable, path: str | os.PathLike) -> Path:
    return atomic_write_text(path, to_csv_text(t))


def _parse_cell(kind: ColumnKind, text: str, *, row: int, column: str) -> Value:
    if text == "":
        raise ParseError("missing value", row=row, column=column)
    if kind is not ColumnKind.NUMERIC:
        return text
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"cannot parse {text!r} as a number", row=row, column=column) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite numeric value {text!r}", row=row, column=column)
    return value


def read_csv_text(text: str, schema: Schema, *, source: str = "<text>") -> DataTable:
    reader = csv.reader(io.StringIO(text, newline=""))
    header = next(reader, None)
    if header is None:
        raise EmptyTable(f"{source}: no header row")
    if tuple(header) != schema.names:
        raise SchemaMismatch(
            f"{source}: header {header} does not match schema {list(schema.names)}"
        )
    kinds = [c.kind for c in schema.columns]
    columns: list[list[Value]] = [[] for _ in kinds]
    n = 0
    for n, rec in enumerate(reader, start=1):
        if len(rec) != len(kinds):
            raise ParseError(f"{source}: expected {len(kinds)} cells, got {len(rec)}", row=n)
        for j, (kind, cell) in enumerate(zip(kinds, rec)):
            columns[j].append(_parse_cell(kind, cell, row=n, column=schema.names[j]))
    if n == 0:
        raise EmptyTable(f"{source}: no data rows")
    return DataTable(schema, dict(zip(schema.names, columns)))


def load_csv(path: str | os.PathLike, schema: Schema) -> DataTable:
    path = Path(path)
    if not path.is_file():
        raise MissingInput(f"table file not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8: {exc}") from exc
    return read_csv_text(text, schema, source=str(path))
