"""Synthesizers operating on DEREC bundles.

Built-in methods are deterministic in ``(bundle, seed)``; randomness comes from
numpy's PCG64 bit generator seeded with the 64-bit ``seed``.

* ``copy`` -- the original tables under fresh subject ids (upper bound).
* ``independent`` -- every column drawn i.i.d. from its own marginal; the
  rows-per-subject histogram of each child is kept, all cross-column
  dependence is lost (what a flattening single-table baseline drifts toward).
* ``conditional`` -- parent rows bootstrapped, child rows drawn from the
  rows of original subjects sharing the synthetic subject's parent values.
* ``external`` -- hand the bundle to an outside tool through a directory.
"""

from __future__ import annotations

import os
import time
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from derecsim.derec import DerecBundle
from derecsim.errors import SynthesizerTimeout
from derecsim.table import DataTable

SENTINEL = "DONE"


class Method(str, Enum):
    COPY = "copy"
    INDEPENDENT = "independent"
    CONDITIONAL = "conditional"
    EXTERNAL = "external"


@dataclass(frozen=True)
class SynthesizerSpec:
    method: Method = Method.CONDITIONAL
    seed: int = 0
    rows_per_subject: str = "empirical"
    exchange_dir: Path | None = None
    poll_interval: float = 0.5
    timeout: float = 600.0
    # Conditional sampler: a parent-value match needs this many original
    # subjects before it is used instead of backing off.
    min_support: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method(self.method))
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.rows_per_subject != "empirical":
            raise ValueError("only the 'empirical' rows-per-subject policy is supported")
        if self.method is Method.EXTERNAL and self.exchange_dir is None:
            raise ValueError("the external method needs an exchange directory")
        if self.min_support < 1:
            raise ValueError("min_support must be >= 1")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def fresh_ids(n: int) -> list[str]:
    width = max(6, len(str(n)))
    return [f"syn{k:0{width}d}" for k in range(1, n + 1)]


def _build(template: DataTable, ids: Sequence[str], columns: dict[str, list[Any]]) -> DataTable:
    data = {template.identifier: list(ids), **columns}
    return DataTable(template.schema, {n: data[n] for n in template.schema.names})


def _rows_for(child: DataTable, positions: Sequence[int], ids: Sequence[str]) -> DataTable:
    cols = {n: [child.column(n)[p] for p in positions] for n in child.schema.feature_names}
    return _build(child, ids, cols)


def synth_copy(bundle: DerecBundle) -> DerecBundle:
    mapping = dict(zip(bundle.parent.subjects, fresh_ids(bundle.parent.n_rows)))
    return bundle.replace_tables(
        bundle.parent.with_ids(mapping),
        [(tag, t.with_ids(mapping)) for tag, t in bundle.children],
    )


def _rows_per_subject(bundle: DerecBundle, child: DataTable) -> np.ndarray:
    idx = child.subject_index
    return np.array([len(idx.get(s, ())) for s in bundle.parent.subjects], dtype=np.int64)


def synth_independent(bundle: DerecBundle, spec: SynthesizerSpec) -> DerecBundle:
    rng = make_rng(spec.seed)
    parent = bundle.parent
    n = parent.n_rows
    ids = fresh_ids(n)
    pcols = {}
    for name in parent.schema.feature_names:
        col = parent.column(name)
        pcols[name] = [col[i] for i in rng.integers(0, n, size=n).tolist()]
    children = []
    for tag, child in bundle.children:
        hist = _rows_per_subject(bundle, child)
        k = hist[rng.integers(0, hist.size, size=n)]
        total = int(k.sum())
        row_ids = np.repeat(np.array(ids, dtype=object), k).tolist()
        ccols = {}
        for name in child.schema.feature_names:
            col = child.column(name)
            ccols[name] = [col[i] for i in rng.integers(0, child.n_rows, size=total).tolist()]
        children.append((tag, _build(child, row_ids, ccols)))
    return bundle.replace_tables(_build(parent, ids, pcols), children)


class ConditionalSampler:
    """Child rows given parent values, with backoff for sparse or unseen parents.

    Backoff order: subjects matching the full parent row; else the per-column
    matches mixed with equal weight (one parent column picked at random);
    else all subjects.
    """

    def __init__(self, bundle: DerecBundle, min_support: int = 1):
        self.bundle = bundle
        self.min_support = min_support
        parent = bundle.parent
        self.features = parent.schema.feature_names
        self.parent_values = [tuple(parent.column(c)[i] for c in self.features) for i in range(parent.n_rows)]
        self.full: dict[tuple, list[int]] = {}
        self.by_column: dict[tuple[int, Any], list[int]] = {}
        for i, vals in enumerate(self.parent_values):
            self.full.setdefault(vals, []).append(i)
            for j, v in enumerate(vals):
                self.by_column.setdefault((j, v), []).append(i)
        self.everyone = list(range(parent.n_rows))
        self._child_rows = {
            tag: [child.subject_index.get(s, ()) for s in parent.subjects]
            for tag, child in bundle.children
        }
        self._pool_rows: dict[tuple[str, int, Any], np.ndarray] = {}

    def pool(self, values: tuple, rng: np.random.Generator) -> tuple[str, Any, list[int]]:
        """(level, key, subject indices) for a parent value tuple."""
        full = self.full.get(values, [])
        if len(full) >= self.min_support:
            return "full", values, full
        cands = [
            j for j, v in enumerate(values) if len(self.by_column.get((j, v), ())) >= self.min_support
        ]
        if cands:
            j = cands[int(rng.integers(0, len(cands)))]
            return "column", (j, values[j]), self.by_column[(j, values[j])]
        return "global", None, self.everyone

    def child_positions(self, tag: str, values: tuple, rng: np.random.Generator) -> np.ndarray:
        level, key, subjects = self.pool(values, rng)
        per_subject = self._child_rows[tag]
        cache_key = (tag, level, key)
        rows = self._pool_rows.get(cache_key)
        if rows is None:
            rows = np.array([p for s in subjects for p in per_subject[s]], dtype=np.intp)
            self._pool_rows[cache_key] = rows
        k = len(per_subject[subjects[int(rng.integers(0, len(subjects)))]])
        if k == 0 or rows.size == 0:
            return np.empty(0, dtype=np.intp)
        return rows[rng.integers(0, rows.size, size=k)]


def synth_conditional(bundle: DerecBundle, spec: SynthesizerSpec) -> DerecBundle:
    rng = make_rng(spec.seed)
    parent = bundle.parent
    n = parent.n_rows
    ids = fresh_ids(n)
    donors = rng.integers(0, n, size=n).tolist()
    pcols = {c: [parent.column(c)[d] for d in donors] for c in parent.schema.feature_names}
    sampler = ConditionalSampler(bundle, spec.min_support)
    children = []
    for tag, child in bundle.children:
        positions: list[int] = []
        row_ids: list[str] = []
        for sid, d in zip(ids, donors):
            pos = sampler.child_positions(tag, sampler.parent_values[d], rng)
            positions.extend(pos.tolist())
            row_ids.extend([sid] * pos.size)
        children.append((tag, _rows_for(child, positions, row_ids)))
    return bundle.replace_tables(_build(parent, ids, pcols), children)


def external_exchange(
    bundle: DerecBundle,
    directory: str | os.PathLike,
    *,
    poll_interval: float = 0.5,
    timeout: float = 600.0,
) -> DerecBundle:
    """Publish the bundle under ``original/`` and wait for ``synthetic/DONE``.

    The external tool must write ``synthetic/parent.csv`` and one
    ``synthetic/child_<tag>.csv`` per original child, with the original
    headers, then create the ``synthetic/DONE`` sentinel. A stale sentinel
    is removed before publishing.
    """
    d = Path(directory)
    out = d / "synthetic"
    sentinel = out / SENTINEL
    if sentinel.exists():
        sentinel.unlink()
    bundle.save(d / "original")
    deadline = time.monotonic() + timeout
    while not sentinel.exists():
        if time.monotonic() >= deadline:
            raise SynthesizerTimeout(f"no {sentinel} after {timeout:g}s")
        time.sleep(min(poll_interval, max(0.0, deadline - time.monotonic())))
    schemas = {"parent": bundle.parent.schema}
    schemas.update({f"child_{tag}": t.schema for tag, t in bundle.children})
    return DerecBundle.load_tables(out, bundle.partition_doc(), schemas)


def synthesize(bundle: DerecBundle, spec: SynthesizerSpec) -> DerecBundle:
    if spec.method is Method.COPY:
        return synth_copy(bundle)
    if spec.method is Method.INDEPENDENT:
        return synth_independent(bundle, spec)
    if spec.method is Method.CONDITIONAL:
        return synth_conditional(bundle, spec)
    assert spec.exchange_dir is not None
    return external_exchange(
        bundle, spec.exchange_dir, poll_interval=spec.poll_interval, timeout=spec.timeout
    )
