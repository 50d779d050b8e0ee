"""Cross-table feature correlations between original and synthetic data.

For an ordered column pair (given, target) drawn from different sources, the
target's conditional distribution given each original value of the given
column is compared between original and synthetic data, and the per-condition
scores are averaged with the original conditioning frequencies as weights.
Two scores are supported: the two-sample KS p-value (1 is perfect) and the
Wasserstein-1 distance (0 is perfect).

Conventions:

* Columns of different tables are paired within subject: each subject
  contributes the Cartesian product of its rows in the two tables.
* Categorical values are coded by lexicographic rank over the original
  alphabet; values only the synthetic data produces are ranked after it.
* Numeric conditioning columns are quantile-binned (``bins`` bins, edges
  taken from the original column); targets are never binned.
* A conditioning value missing from the synthetic data scores p = 0 and
  W = the target column's coded range, and does not count toward coverage.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Hashable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np

from derecsim.derec import DerecBundle
from derecsim.errors import EmptyCondition
from derecsim.stats import EmpiricalDist, ks_two_sample, wasserstein_1d
from derecsim.table import Column, ColumnKind, DataTable, Schema

DEFAULT_BINS = 10


class Metric(str, Enum):
    KS = "ks_pvalue"
    W = "w_distance"

    @property
    def perfect(self) -> float:
        return 1.0 if self is Metric.KS else 0.0


@dataclass(frozen=True, order=True)
class ColumnRef:
    source: str
    column: str

    def __str__(self) -> str:
        return f"{self.source}.{self.column}"


@dataclass(frozen=True)
class PairId:
    """Ordered (given, target) pair; ``given=None`` marks a marginal entry."""

    given: ColumnRef | None
    target: ColumnRef

    def __post_init__(self) -> None:
        if self.given == self.target:
            raise ValueError(f"given and target are the same column: {self.target}")

    @property
    def is_marginal(self) -> bool:
        return self.given is None

    @property
    def direction(self) -> str:
        if self.given is None:
            return "marginal"
        return f"{self.given.source}->{self.target.source}"

    @property
    def key(self) -> str:
        if self.given is None:
            return f"marginal|{self.target}"
        return f"{self.target}|{self.given}"

    def reversed(self) -> PairId:
        if self.given is None:
            raise ValueError("a marginal entry has no reverse")
        return PairId(self.target, self.given)

    def fields(self) -> dict[str, str]:
        return {
            "given_source": self.given.source if self.given else "",
            "given_column": self.given.column if self.given else "",
            "target_source": self.target.source,
            "target_column": self.target.column,
        }

    @classmethod
    def from_fields(cls, d: dict[str, Any]) -> PairId:
        given = ColumnRef(d["given_source"], d["given_column"]) if d["given_source"] else None
        return cls(given, ColumnRef(d["target_source"], d["target_column"]))


@dataclass(frozen=True)
class CorrelationValue:
    pair: PairId
    metric: Metric
    value: float
    coverage: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "metric", Metric(self.metric))
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "coverage", float(self.coverage))


@dataclass(frozen=True)
class CorrelationSeries:
    metric: Metric
    values: tuple[CorrelationValue, ...]

    def __len__(self) -> int:
        return len(self.values)

    @property
    def pairs(self) -> tuple[PairId, ...]:
        return tuple(v.pair for v in self.values)

    def scores(self, subset: str | None = None) -> np.ndarray:
        """Values as an array; ``subset`` is ``"marginal"``, ``"conditional"`` or None."""
        vals = self.values
        if subset == "marginal":
            vals = tuple(v for v in vals if v.pair.is_marginal)
        elif subset == "conditional":
            vals = tuple(v for v in vals if not v.pair.is_marginal)
        elif subset is not None:
            raise ValueError(f"unknown subset {subset!r}")
        return np.array([v.value for v in vals], dtype=float)

    def to_records(self) -> list[dict[str, Any]]:
        return [{**v.pair.fields(), "value": v.value, "coverage": v.coverage} for v in self.values]

    @classmethod
    def from_records(cls, metric: Metric | str, records: Sequence[dict[str, Any]]) -> CorrelationSeries:
        metric = Metric(metric)
        return cls(
            metric,
            tuple(
                CorrelationValue(PairId.from_fields(r), metric, float(r["value"]), float(r["coverage"]))
                for r in records
            ),
        )

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(
            ["given_source", "given_column", "target_source", "target_column", "metric", "value", "coverage"]
        )
        for r in self.to_records():
            w.writerow(
                [r["given_source"], r["given_column"], r["target_source"], r["target_column"],
                 self.metric.value, repr(r["value"]), repr(r["coverage"])]
            )
        return buf.getvalue()

    @classmethod
    def from_csv_text(cls, text: str) -> CorrelationSeries:
        rows = list(csv.DictReader(io.StringIO(text, newline="")))
        if not rows:
            raise ValueError("empty correlation series")
        metrics = {r["metric"] for r in rows}
        if len(metrics) != 1:
            raise ValueError(f"mixed metrics in one series: {sorted(metrics)}")
        return cls.from_records(metrics.pop(), rows)


# -- joins ------------------------------------------------------------------------


def join_positions(a: DataTable, b: DataTable) -> tuple[np.ndarray, np.ndarray]:
    """Row positions of the within-subject Cartesian join of ``a`` and ``b``.

    Subjects are visited in ``a``'s first-appearance order; per subject the
    rows of ``a`` vary slowest.
    """
    pa: list[int] = []
    pb: list[int] = []
    b_index = b.subject_index
    for sid, rows_a in a.subject_index.items():
        rows_b = b_index.get(sid)
        if rows_b is None:
            continue
        pa.extend(np.repeat(rows_a, len(rows_b)).tolist())
        pb.extend(list(rows_b) * len(rows_a))
    return np.asarray(pa, dtype=np.intp), np.asarray(pb, dtype=np.intp)


def subject_join(a: DataTable, b: DataTable, col_a: str, col_b: str) -> list[tuple[Any, Any]]:
    pa, pb = join_positions(a, b)
    va, vb = a.column(col_a), b.column(col_b)
    return [(va[i], vb[j]) for i, j in zip(pa.tolist(), pb.tolist())]


def flatten_join(a: DataTable, b: DataTable) -> DataTable:
    """Single table pairing every row of a subject in ``a`` with every row of it in ``b``.

    Feature names present in both tables get ``@a`` / ``@b`` suffixes.
    """
    pa, pb = join_positions(a, b)
    fa, fb = a.schema.feature_names, b.schema.feature_names
    clash = set(fa) & set(fb)
    ident = a.identifier
    cols = [Column(ident, ColumnKind.IDENTIFIER)]
    data: dict[str, list[Any]] = {ident: [a.ids[i] for i in pa.tolist()]}
    for t, names, tag, pos in ((a, fa, "a", pa), (b, fb, "b", pb)):
        for n in names:
            out = f"{n}@{tag}" if n in clash else n
            if out == ident:
                out = f"{n}@{tag}"
            col = t.column(n)
            data[out] = [col[i] for i in pos.tolist()]
            cols.append(Column(out, t.schema.kind(n)))
    return DataTable(Schema(tuple(cols), ident), data)


# -- encodings --------------------------------------------------------------------


def conditional_dist(joined: Sequence[tuple[Hashable, float]], given: Hashable) -> EmpiricalDist:
    """Empirical distribution of targets among joined pairs whose given value matches.

    Targets must be numeric (code categoricals first).
    """
    targets = [t for g, t in joined if g == given]
    if not targets:
        raise EmptyCondition(f"no joined row has given value {given!r}")
    return EmpiricalDist.from_samples(targets)


def category_codes(original: Sequence[str], synthetic: Sequence[str] = ()) -> dict[str, int]:
    """Lexicographic ranks over the original alphabet, synthetic-only values after it."""
    orig_alpha = sorted(set(original))
    seen = set(orig_alpha)
    extra = sorted(set(synthetic) - seen)
    return {v: i for i, v in enumerate(orig_alpha + extra)}


def quantile_edges(values: Sequence[float] | np.ndarray, bins: int) -> np.ndarray:
    """Distinct interior quantile edges at k/bins, k = 1..bins-1 (linear interpolation)."""
    if bins < 1:
        raise ValueError("bins must be at least 1")
    arr = np.asarray(values, dtype=float)
    if bins == 1 or arr.size == 0:
        return np.empty(0)
    return np.unique(np.quantile(arr, np.arange(1, bins) / bins))


def bin_codes(values: Sequence[float] | np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Bin index of each value: the number of edges <= value."""
    return np.searchsorted(edges, np.asarray(values, dtype=float), side="right")


@dataclass(frozen=True)
class _Encoded:
    given: np.ndarray  # conditioning keys, per row of the column's table
    target: np.ndarray  # target codes / values, per row
    target_range: float


def _encode_column(kind: ColumnKind, orig: Sequence[Any], syn: Sequence[Any], bins: int) -> tuple[_Encoded, _Encoded]:
    if kind is ColumnKind.NUMERIC:
        o = np.asarray(orig, dtype=float)
        s = np.asarray(syn, dtype=float)
        edges = quantile_edges(o, bins)
        go, gs = bin_codes(o, edges), bin_codes(s, edges)
    else:
        codes = category_codes(orig, syn)
        o = np.array([codes[v] for v in orig], dtype=float)
        s = np.array([codes[v] for v in syn], dtype=float)
        go, gs = o.astype(np.int64), s.astype(np.int64)
    both = np.concatenate([o, s])
    rng = float(both.max() - both.min()) if both.size else 0.0
    return _Encoded(go, o, rng), _Encoded(gs, s, rng)


# -- scoring ----------------------------------------------------------------------


def _marginal_scores(to: np.ndarray, ts: np.ndarray) -> tuple[float, float, float]:
    p = ks_two_sample(to, ts).pvalue
    w = wasserstein_1d(EmpiricalDist.from_samples(to), EmpiricalDist.from_samples(ts))
    return p, w, 1.0


def _conditional_scores(
    go: np.ndarray, to: np.ndarray, gs: np.ndarray, ts: np.ndarray, worst_w: float
) -> tuple[float, float, float]:
    """(weighted KS p, weighted W, coverage) over the original conditioning values."""
    if go.size == 0:
        raise EmptyCondition("the original join is empty; nothing to condition on")
    keys, inverse, counts = np.unique(go, return_inverse=True, return_counts=True)
    order_s = np.argsort(gs, kind="stable")
    gs_sorted = gs[order_s]
    ks_terms, w_terms, covered = [], [], 0
    for k, key in enumerate(keys.tolist()):
        c = int(counts[k])
        lo = np.searchsorted(gs_sorted, key, side="left")
        hi = np.searchsorted(gs_sorted, key, side="right")
        if hi == lo:
            ks_terms.append(0.0)
            w_terms.append(c * worst_w)
            continue
        t_o = to[inverse == k]
        t_s = ts[order_s[lo:hi]]
        covered += c
        ks_terms.append(c * ks_two_sample(t_o, t_s).pvalue)
        w_terms.append(
            c * wasserstein_1d(EmpiricalDist.from_samples(t_o), EmpiricalDist.from_samples(t_s))
        )
    n = go.size
    return math.fsum(ks_terms) / n, math.fsum(w_terms) / n, covered / n


def _pick(metric: Metric, pair: PairId, scores: tuple[float, float, float]) -> CorrelationValue:
    p, w, cov = scores
    return CorrelationValue(pair, metric, p if metric is Metric.KS else w, cov)


def cross_feature_correlation(
    orig: tuple[DataTable | None, DataTable],
    syn: tuple[DataTable | None, DataTable],
    pair: PairId,
    metric: Metric | str,
    *,
    bins: int = DEFAULT_BINS,
    columns: tuple[str | None, str] | None = None,
) -> CorrelationValue:
    """Correlation value for one pair given (given-table, target-table) tuples.

    ``columns`` names the given/target columns inside those tables when they
    differ from the pair's original column names (suffixed parent columns).
    For a marginal pair the given tables are ignored.
    """
    metric = Metric(metric)
    given_name, target_name = columns or (
        pair.given.column if pair.given else None,
        pair.target.column,
    )
    (og, ot), (sg, st) = orig, syn
    t_kind = ot.schema.kind(target_name)
    to_enc, ts_enc = _encode_column(t_kind, ot.column(target_name), st.column(target_name), bins)
    if pair.given is None:
        return _pick(metric, pair, _marginal_scores(to_enc.target, ts_enc.target))
    assert og is not None and sg is not None and given_name is not None
    g_kind = og.schema.kind(given_name)
    go_enc, gs_enc = _encode_column(g_kind, og.column(given_name), sg.column(given_name), bins)
    opg, opt = join_positions(og, ot)
    spg, spt = join_positions(sg, st)
    scores = _conditional_scores(
        go_enc.given[opg], to_enc.target[opt], gs_enc.given[spg], ts_enc.target[spt], to_enc.target_range
    )
    return _pick(metric, pair, scores)


def enumerate_pairs(bundle: DerecBundle) -> list[PairId]:
    """All cross-source ordered pairs (both directions), then one marginal per column."""
    sources = bundle.sources
    cols = {s: bundle.source_columns(s) for s in sources}
    pairs = []
    for gs in sources:
        for ts in sources:
            if gs == ts:
                continue
            for g in cols[gs]:
                for t in cols[ts]:
                    pairs.append(PairId(ColumnRef(gs, g), ColumnRef(ts, t)))
    for s in sources:
        for c in cols[s]:
            pairs.append(PairId(None, ColumnRef(s, c)))
    return pairs


class _Evaluator:
    """Encodes every column and join once, then scores pairs independently."""

    def __init__(self, orig: DerecBundle, syn: DerecBundle, bins: int):
        self.orig, self.syn, self.bins = orig, syn, bins
        self._enc: dict[ColumnRef, tuple[_Encoded, _Encoded]] = {}
        self._joins: dict[tuple[str, str], tuple[tuple[np.ndarray, np.ndarray], ...]] = {}

    def _table_key(self, bundle: DerecBundle, ref: ColumnRef) -> str:
        t, _ = bundle.locate(ref.source, ref.column)
        return "parent" if t is bundle.parent else f"child_{ref.source}"

    def prepare(self, pairs: Sequence[PairId]) -> None:
        for pair in pairs:
            for ref in (pair.given, pair.target):
                if ref is not None and ref not in self._enc:
                    ot, on = self.orig.locate(ref.source, ref.column)
                    st, sn = self.syn.locate(ref.source, ref.column)
                    kind = ot.schema.kind(on)
                    self._enc[ref] = _encode_column(kind, ot.column(on), st.column(sn), self.bins)
            if pair.given is not None:
                key = (self._table_key(self.orig, pair.given), self._table_key(self.orig, pair.target))
                if key not in self._joins:
                    og, _ = self.orig.locate(pair.given.source, pair.given.column)
                    ot, _ = self.orig.locate(pair.target.source, pair.target.column)
                    sg, _ = self.syn.locate(pair.given.source, pair.given.column)
                    st, _ = self.syn.locate(pair.target.source, pair.target.column)
                    self._joins[key] = (join_positions(og, ot), join_positions(sg, st))

    def score(self, pair: PairId) -> tuple[float, float, float]:
        to_enc, ts_enc = self._enc[pair.target]
        if pair.given is None:
            return _marginal_scores(to_enc.target, ts_enc.target)
        go_enc, gs_enc = self._enc[pair.given]
        key = (self._table_key(self.orig, pair.given), self._table_key(self.orig, pair.target))
        (opg, opt), (spg, spt) = self._joins[key]
        return _conditional_scores(
            go_enc.given[opg], to_enc.target[opt], gs_enc.given[spg], ts_enc.target[spt],
            to_enc.target_range,
        )


def evaluate_series(
    orig: DerecBundle, syn: DerecBundle, *, bins: int = DEFAULT_BINS, threads: int = 1
) -> tuple[CorrelationSeries, CorrelationSeries]:
    """Both the KS-based and the W-based series in one pass over the pairs."""
    pairs = enumerate_pairs(orig)
    ev = _Evaluator(orig, syn, bins)
    ev.prepare(pairs)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(ev.score, pairs))
    else:
        scores = [ev.score(p) for p in pairs]
    ks = CorrelationSeries(Metric.KS, tuple(_pick(Metric.KS, p, s) for p, s in zip(pairs, scores)))
    w = CorrelationSeries(Metric.W, tuple(_pick(Metric.W, p, s) for p, s in zip(pairs, scores)))
    return ks, w


def correlation_series(
    orig: DerecBundle,
    syn: DerecBundle,
    metric: Metric | str,
    *,
    bins: int = DEFAULT_BINS,
    threads: int = 1,
) -> CorrelationSeries:
    ks, w = evaluate_series(orig, syn, bins=bins, threads=threads)
    return ks if Metric(metric) is Metric.KS else w
