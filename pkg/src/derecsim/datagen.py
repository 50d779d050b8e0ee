"""Deterministic two-party data with planted contextual columns and dependencies.

Every subject appears in both tables (no orphans). Per source:

* a *contextual* column holds one value per subject, except that exactly
  ``round(noise * subjects)`` subjects (chosen among those with two or more
  rows) get one deviant row;
* a *non-contextual* column varies freely by row, and every subject with two
  or more rows is forced to show at least two distinct values.

So the share of constant subjects is known in closed form: ``1 - deviants/n``
for contextual columns and ``single_row_subjects/n`` for the rest.

Dependencies run from a contextual column of table ``a`` to any column of
table ``b``: with probability ``strength`` the target takes
``perm[given % cardinality]`` for a fixed random permutation ``perm``,
otherwise an independent uniform draw. Non-contextual targets are drawn per
row, contextual targets once per subject.

Numeric columns use the same integer levels, rendered as
``10 * level + jitter`` with ``jitter ~ N(0, spread)`` clipped to +-4 and
rounded to 3 decimals, so distinct levels never produce equal values.
"""

from __future__ import annotations

import os
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from derecsim.errors import SpecInvalid
from derecsim.fsutil import read_json
from derecsim.synth import make_rng
from derecsim.table import Column, ColumnKind, DataTable, Schema

LEVEL_STEP = 10.0
JITTER_CLIP = 4.0


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str = "categorical"
    contextual: bool = False
    noise: float = 0.0
    cardinality: int = 4
    spread: float = 0.0


@dataclass(frozen=True)
class Dependency:
    given: str
    target: str
    strength: float


@dataclass(frozen=True)
class RowsSpec:
    min: int = 1
    max: int = 6
    skew: float = 1.0


@dataclass(frozen=True)
class GenSpec:
    subjects: int
    columns_a: tuple[ColumnSpec, ...]
    columns_b: tuple[ColumnSpec, ...]
    dependencies: tuple[Dependency, ...] = ()
    rows: RowsSpec = field(default_factory=RowsSpec)
    seed: int = 0
    identifier: str = "user_id"

    def to_dict(self) -> dict[str, Any]:
        return {
            "subjects": self.subjects,
            "identifier": self.identifier,
            "seed": self.seed,
            "rows_per_subject": asdict(self.rows),
            "sources": {
                "a": [asdict(c) for c in self.columns_a],
                "b": [asdict(c) for c in self.columns_b],
            },
            "dependencies": [asdict(d) for d in self.dependencies],
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> GenSpec:
        try:
            return cls(
                subjects=int(doc["subjects"]),
                columns_a=tuple(ColumnSpec(**c) for c in doc["sources"]["a"]),
                columns_b=tuple(ColumnSpec(**c) for c in doc["sources"]["b"]),
                dependencies=tuple(Dependency(**d) for d in doc.get("dependencies", [])),
                rows=RowsSpec(**doc.get("rows_per_subject", {})),
                seed=int(doc.get("seed", 0)),
                identifier=str(doc.get("identifier", "user_id")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecInvalid(f"malformed generator spec: {exc}") from exc

    @classmethod
    def load(cls, path: str | os.PathLike) -> GenSpec:
        return cls.from_dict(read_json(path))

    def with_seed(self, seed: int) -> GenSpec:
        return GenSpec(self.subjects, self.columns_a, self.columns_b, self.dependencies,
                       self.rows, seed, self.identifier)

    def validate(self) -> None:
        if self.subjects < 1:
            raise SpecInvalid("need at least one subject")
        r = self.rows
        if r.min < 1 or r.max < r.min or r.skew <= 0:
            raise SpecInvalid(f"bad rows-per-subject spec {r}")
        for tag, cols in (("a", self.columns_a), ("b", self.columns_b)):
            names = [c.name for c in cols]
            if len(set(names)) != len(names):
                raise SpecInvalid(f"duplicate column names in source {tag}")
            if self.identifier in names:
                raise SpecInvalid(f"column name collides with identifier {self.identifier!r}")
            for c in cols:
                if c.kind not in ("categorical", "numeric"):
                    raise SpecInvalid(f"{tag}.{c.name}: kind must be categorical or numeric")
                if not 2 <= c.cardinality <= 20:
                    raise SpecInvalid(f"{tag}.{c.name}: cardinality must be in [2, 20]")
                if not 0 <= c.noise < 1:
                    raise SpecInvalid(f"{tag}.{c.name}: noise must be in [0, 1)")
                if c.noise and not c.contextual:
                    raise SpecInvalid(f"{tag}.{c.name}: noise only applies to contextual columns")
                if c.spread < 0:
                    raise SpecInvalid(f"{tag}.{c.name}: spread must be >= 0")
        a = {c.name: c for c in self.columns_a}
        b = {c.name: c for c in self.columns_b}
        targets = [d.target for d in self.dependencies]
        if len(set(targets)) != len(targets):
            raise SpecInvalid("a column can be the target of at most one dependency")
        for d in self.dependencies:
            if d.given not in a:
                raise SpecInvalid(f"dependency given column {d.given!r} is not in source a")
            if not a[d.given].contextual:
                raise SpecInvalid(f"dependency given column {d.given!r} must be contextual")
            if d.target not in b:
                raise SpecInvalid(f"dependency target column {d.target!r} is not in source b")
            if not 0 <= d.strength <= 1:
                raise SpecInvalid(f"dependency strength must be in [0, 1], got {d.strength}")


@dataclass(frozen=True)
class ColumnTruth:
    name: str
    kind: str
    contextual: bool
    deviant_subjects: int
    single_row_subjects: int
    subjects: int

    @property
    def expected_fraction(self) -> float:
        if self.contextual:
            return (self.subjects - self.deviant_subjects) / self.subjects
        return self.single_row_subjects / self.subjects

    def expected_verdict(self, threshold: float) -> bool:
        return self.expected_fraction >= threshold


@dataclass(frozen=True)
class GroundTruth:
    seed: int
    subjects: int
    columns: dict[str, tuple[ColumnTruth, ...]]
    mappings: tuple[tuple[Dependency, tuple[int, ...]], ...]

    def column(self, source: str, name: str) -> ColumnTruth:
        for c in self.columns[source]:
            if c.name == name:
                return c
        raise KeyError(f"{source}.{name}")

    def expected_contextual(self, source: str, threshold: float) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns[source] if c.expected_verdict(threshold))

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "subjects": self.subjects,
            "columns": {
                tag: [
                    {**asdict(c), "expected_fraction": c.expected_fraction}
                    for c in cols
                ]
                for tag, cols in self.columns.items()
            },
            "dependencies": [
                {**asdict(d), "level_map": list(m)} for d, m in self.mappings
            ],
        }


def _labels(spec: ColumnSpec, levels: np.ndarray, jitter: np.ndarray) -> list[Any]:
    if spec.kind == "numeric":
        vals = LEVEL_STEP * levels + jitter
        return [round(float(v), 3) for v in vals]
    return [f"{spec.name}_{int(k):02d}" for k in levels]


def _draw_counts(rng: np.random.Generator, n: int, rows: RowsSpec) -> np.ndarray:
    u = rng.random(n)
    width = rows.max - rows.min + 1
    return np.minimum(rows.min + np.floor(width * u**rows.skew).astype(np.int64), rows.max)


def _force_variation(rng: np.random.Generator, levels: np.ndarray, starts: np.ndarray,
                     counts: np.ndarray, card: int) -> None:
    for s, k in zip(starts.tolist(), counts.tolist()):
        if k >= 2:
            block = levels[s:s + k]
            if np.all(block == block[0]):
                block[-1] = (block[0] + rng.integers(1, card)) % card


def _jitter(rng: np.random.Generator, spec: ColumnSpec, size: int) -> np.ndarray:
    if spec.kind != "numeric" or spec.spread == 0:
        return np.zeros(size)
    return np.clip(rng.normal(0.0, spec.spread, size), -JITTER_CLIP, JITTER_CLIP).round(3)


def generate(spec: GenSpec) -> tuple[DataTable, DataTable, GroundTruth]:
    spec.validate()
    rng = make_rng(spec.seed)
    n = spec.subjects
    width = max(5, len(str(n)))
    ids = [f"u{k:0{width}d}" for k in range(1, n + 1)]
    deps = {d.target: d for d in spec.dependencies}

    subject_levels: dict[str, np.ndarray] = {}
    tables: list[DataTable] = []
    truths: dict[str, tuple[ColumnTruth, ...]] = {}
    mappings = []

    for tag, cols in (("a", spec.columns_a), ("b", spec.columns_b)):
        counts = _draw_counts(rng, n, spec.rows)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        total = int(counts.sum())
        owner = np.repeat(np.arange(n), counts)
        eligible = np.flatnonzero(counts >= 2)
        single = int(np.sum(counts == 1))
        data: dict[str, list[Any]] = {spec.identifier: [ids[i] for i in owner.tolist()]}
        tcols = []
        for c in cols:
            card = c.cardinality
            dep = deps.get(c.name) if tag == "b" else None
            if dep is not None:
                perm = rng.permutation(card)
                mappings.append((dep, tuple(int(v) for v in perm)))
                mapped = perm[subject_levels[dep.given] % card]
            if c.contextual:
                base = rng.integers(0, card, n)
                if dep is not None:
                    base = np.where(rng.random(n) < dep.strength, mapped, base)
                subject_levels[c.name] = base
                levels = base[owner].copy()
                n_dev = int(round(c.noise * n))
                if n_dev > eligible.size:
                    raise SpecInvalid(
                        f"{tag}.{c.name}: {n_dev} deviant subjects requested but only "
                        f"{eligible.size} subjects have two or more rows"
                    )
                for s in np.sort(rng.choice(eligible, size=n_dev, replace=False)).tolist():
                    r = starts[s] + int(rng.integers(0, counts[s]))
                    levels[r] = (levels[r] + rng.integers(1, card)) % card
                jitter = _jitter(rng, c, n)[owner]
                truth = ColumnTruth(c.name, c.kind, True, n_dev, single, n)
            else:
                levels = rng.integers(0, card, total)
                if dep is not None:
                    levels = np.where(rng.random(total) < dep.strength, mapped[owner], levels)
                _force_variation(rng, levels, starts, counts, card)
                jitter = _jitter(rng, c, total)
                truth = ColumnTruth(c.name, c.kind, False, 0, single, n)
            data[c.name] = _labels(c, levels, jitter)
            kind = ColumnKind.NUMERIC if c.kind == "numeric" else ColumnKind.CATEGORICAL
            tcols.append(Column(c.name, kind))
            truths.setdefault(tag, ())
            truths[tag] += (truth,)
        order = rng.permutation(total).tolist()
        schema = Schema((Column(spec.identifier, ColumnKind.IDENTIFIER), *tcols), spec.identifier)
        tables.append(DataTable(schema, {k: [v[i] for i in order] for k, v in data.items()}))

    return tables[0], tables[1], GroundTruth(spec.seed, n, truths, tuple(mappings))


# -- contextual-variation disturbance ------------------------------------------------

AGE_GROUPS = ("18-29", "30-39", "40-49", "50-59", "60+")


@dataclass(frozen=True)
class DisturbanceSpec:
    subjects: int = 40
    dominant_rows: int = 120
    other_rows: tuple[int, int] = (1, 3)
    # rows of the dominant subject that carry someone else's value
    dominant_deviations: int = 2
    seed: int = 0


@dataclass(frozen=True)
class DisturbanceTruth:
    column: str
    dominant_subject: str
    subject_values: dict[str, str]


def contextual_disturbance_fixture(
    spec: DisturbanceSpec = DisturbanceSpec(),
) -> tuple[DataTable, DataTable, DisturbanceTruth]:
    """One subject owns most rows and an age group no other subject has.

    Row-level frequencies are dominated by that subject; subject-level
    frequencies are not. A few of its rows carry a different age group, as
    when someone borrows a membership card.
    """
    if spec.subjects < 2 or spec.dominant_deviations * 2 >= spec.dominant_rows:
        raise SpecInvalid("the dominant subject must keep a clear majority value")
    if spec.dominant_rows < (spec.subjects - 1) * spec.other_rows[1]:
        raise SpecInvalid("the dominant subject must hold at least half of all rows")
    rng = make_rng(spec.seed)
    ids = [f"m{k:03d}" for k in range(1, spec.subjects + 1)]
    dominant = ids[0]
    common = AGE_GROUPS[:-1]
    truth = {dominant: AGE_GROUPS[-1]}
    for k, sid in enumerate(ids[1:]):
        truth[sid] = common[k % len(common)]

    lo, hi = spec.other_rows
    a_ids, ages, purchases = [], [], []
    for sid in ids:
        k = spec.dominant_rows if sid == dominant else int(rng.integers(lo, hi + 1))
        row_ages = [truth[sid]] * k
        if sid == dominant:
            for r in rng.choice(k, size=spec.dominant_deviations, replace=False).tolist():
                row_ages[r] = common[int(rng.integers(0, len(common)))]
        a_ids += [sid] * k
        ages += row_ages
        purchases += [f"item_{int(v):02d}" for v in rng.integers(0, 6, k)]
    order = rng.permutation(len(a_ids)).tolist()
    schema_a = Schema.build("member_id", age_group="categorical", purchase="categorical")
    a = DataTable(schema_a, {
        "member_id": [a_ids[i] for i in order],
        "age_group": [ages[i] for i in order],
        "purchase": [purchases[i] for i in order],
    })

    b_ids, regions, ads = [], [], []
    for j, sid in enumerate(ids):
        k = int(rng.integers(1, 4))
        b_ids += [sid] * k
        regions += [f"region_{j % 3}"] * k
        ads += [f"ad_{int(v):02d}" for v in rng.integers(0, 5, k)]
    schema_b = Schema.build("member_id", region="categorical", ad_type="categorical")
    b = DataTable(schema_b, {"member_id": b_ids, "region": regions, "ad_type": ads})
    return a, b, DisturbanceTruth("age_group", dominant, truth)
