"""Synthesizer evaluation reports and head-to-head comparisons.

A :class:`SimproReport` holds one synthesizer's KS-based and W-based
correlation series against the original data. :func:`compare` contrasts two
reports in three ways:

* statistical similarity -- a KS test between the two collections of
  correlation values;
* improvement counts -- per pair, ``dP = P_A - P_B`` is *better* above
  ``T_P`` (default 0.333), *worsened* below ``-T_P``, *no change* otherwise;
* probabilistic distance -- per pair, ``dW = W_A - W_B`` is *better* below
  ``-T_W`` and *worsened* above ``T_W``, with ``T_W`` the median of ``|dW|``.

Threshold comparisons are strict, so a delta sitting on the threshold is
*no change*.
"""

from __future__ import annotations

import os
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
from scipy.stats import binomtest

from derecsim.correlation import (
    DEFAULT_BINS,
    CorrelationSeries,
    Metric,
    PairId,
    evaluate_series,
)
from derecsim.derec import DerecBundle
from derecsim.errors import MissingInput, PairMismatch
from derecsim.fsutil import dumps_json, read_json, write_json
from derecsim.stats import ks_two_sample

DEFAULT_T_P = 0.333
REPORT_FORMAT = "simpro-report/1"
COMPARISON_FORMAT = "simpro-comparison/1"
HIST_BINS = 10
# Absolute slack (scaled by the threshold when it exceeds 1) that keeps
# deltas equal to the threshold up to float rounding on the no-change side.
BOUNDARY_TOL = 1e-12


class Classification(str, Enum):
    BETTER = "better"
    NO_CHANGE = "no change"
    WORSENED = "worsened"

    def swapped(self) -> Classification:
        if self is Classification.BETTER:
            return Classification.WORSENED
        if self is Classification.WORSENED:
            return Classification.BETTER
        return self


class WThresholdRule(str, Enum):
    ABS_DELTA = "abs-delta"  # median of |W_A - W_B| over pairs
    RAW_MEDIAN = "raw-median"  # median of all W values of both reports


def _summary(values: np.ndarray, metric: Metric) -> dict[str, Any]:
    if values.size == 0:
        return {"mean": None, "median": None, "histogram": {"edges": [], "counts": []}}
    hi = 1.0 if metric is Metric.KS else max(float(values.max()), 0.0) or 1.0
    counts, edges = np.histogram(values, bins=HIST_BINS, range=(0.0, hi))
    return {
        "mean": float(np.mean(values)),
        "median": float(np.median(values)),
        "histogram": {"edges": [float(e) for e in edges], "counts": [int(c) for c in counts]},
    }


@dataclass(frozen=True)
class SimproReport:
    label: str
    fingerprint: str
    ks: CorrelationSeries
    w: CorrelationSeries
    bins: int = DEFAULT_BINS

    def __post_init__(self) -> None:
        if self.ks.pairs != self.w.pairs:
            raise PairMismatch("KS and W series enumerate different pairs")

    @property
    def pairs(self) -> tuple[PairId, ...]:
        return self.ks.pairs

    def series(self, metric: Metric | str) -> CorrelationSeries:
        return self.ks if Metric(metric) is Metric.KS else self.w

    def to_dict(self) -> dict[str, Any]:
        summaries = {}
        for s in (self.ks, self.w):
            summaries[s.metric.value] = {
                subset or "all": _summary(s.scores(subset), s.metric)
                for subset in (None, "marginal", "conditional")
            }
        return {
            "format": REPORT_FORMAT,
            "label": self.label,
            "original_fingerprint": self.fingerprint,
            "settings": {
                "bins": self.bins,
                "categorical_order": "lexicographic",
                "conditioning_weights": "original",
                "missing_condition_penalty": {"ks_pvalue": 0.0, "w_distance": "target range"},
            },
            "summary": summaries,
            "series": {s.metric.value: s.to_records() for s in (self.ks, self.w)},
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> SimproReport:
        if doc.get("format") != REPORT_FORMAT:
            raise ValueError(f"not a {REPORT_FORMAT} document")
        return cls(
            label=doc["label"],
            fingerprint=doc["original_fingerprint"],
            ks=CorrelationSeries.from_records(Metric.KS, doc["series"][Metric.KS.value]),
            w=CorrelationSeries.from_records(Metric.W, doc["series"][Metric.W.value]),
            bins=int(doc["settings"]["bins"]),
        )

    def to_json(self) -> str:
        return dumps_json(self.to_dict())

    def save(self, path: str | os.PathLike) -> Path:
        return write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: str | os.PathLike) -> SimproReport:
        if not Path(path).is_file():
            raise MissingInput(f"report not found: {path}")
        return cls.from_dict(read_json(path))


def evaluate(
    orig: DerecBundle,
    syn: DerecBundle,
    label: str,
    *,
    bins: int = DEFAULT_BINS,
    threads: int = 1,
) -> SimproReport:
    ks, w = evaluate_series(orig, syn, bins=bins, threads=threads)
    return SimproReport(label, orig.fingerprint(), ks, w, bins)


# -- the three aspects ------------------------------------------------------------


def statistical_similarity(series_a: CorrelationSeries, series_b: CorrelationSeries) -> float:
    """KS p-value between two synthesizers' collections of correlation values."""
    if series_a.metric is not series_b.metric:
        raise PairMismatch(f"metrics differ: {series_a.metric.value} vs {series_b.metric.value}")
    if series_a.pairs != series_b.pairs:
        raise PairMismatch("series enumerate different pairs")
    return ks_two_sample(series_a.scores(), series_b.scores()).pvalue


@dataclass(frozen=True)
class ClassCounts:
    improved: int
    no_change: int
    worsened: int

    @property
    def net(self) -> int:
        return self.improved - self.worsened

    @property
    def total(self) -> int:
        return self.improved + self.no_change + self.worsened

    def sign_test(self) -> float:
        """Two-sided exact binomial test of improved vs worsened (not part of the method)."""
        n = self.improved + self.worsened
        if n == 0:
            return 1.0
        return float(binomtest(self.improved, n, 0.5).pvalue)

    @classmethod
    def tally(cls, classes: Sequence[Classification]) -> ClassCounts:
        return cls(
            sum(c is Classification.BETTER for c in classes),
            sum(c is Classification.NO_CHANGE for c in classes),
            sum(c is Classification.WORSENED for c in classes),
        )


def _classify(delta: float, threshold: float, *, higher_is_better: bool) -> Classification:
    tol = BOUNDARY_TOL * max(1.0, abs(threshold))
    if not higher_is_better:
        delta = -delta
    if delta - threshold > tol:
        return Classification.BETTER
    if delta + threshold < -tol:
        return Classification.WORSENED
    return Classification.NO_CHANGE


def _check_pairs(report_a: SimproReport, report_b: SimproReport) -> None:
    if report_a.pairs != report_b.pairs:
        raise PairMismatch(
            f"reports {report_a.label!r} and {report_b.label!r} enumerate different pairs"
        )


@dataclass(frozen=True)
class AspectResult:
    deltas: tuple[float, ...]
    classes: tuple[Classification, ...]
    counts: ClassCounts
    threshold: float


def improvement_counts(
    report_a: SimproReport, report_b: SimproReport, T: float = DEFAULT_T_P
) -> AspectResult:
    if not 0 < T < 1:
        raise ValueError(f"T must lie in (0, 1), got {T}")
    _check_pairs(report_a, report_b)
    deltas = tuple(float(x) for x in report_a.ks.scores() - report_b.ks.scores())
    classes = tuple(_classify(d, T, higher_is_better=True) for d in deltas)
    return AspectResult(deltas, classes, ClassCounts.tally(classes), T)


def w_threshold(deltas: np.ndarray, w_a: np.ndarray, w_b: np.ndarray, rule: WThresholdRule) -> float:
    if deltas.size == 0:
        return 0.0
    if rule is WThresholdRule.ABS_DELTA:
        return float(np.median(np.abs(deltas)))
    return float(np.median(np.concatenate([w_a, w_b])))


def probabilistic_distance(
    report_a: SimproReport,
    report_b: SimproReport,
    rule: WThresholdRule | str = WThresholdRule.ABS_DELTA,
) -> AspectResult:
    _check_pairs(report_a, report_b)
    rule = WThresholdRule(rule)
    w_a, w_b = report_a.w.scores(), report_b.w.scores()
    raw = w_a - w_b
    t = w_threshold(raw, w_a, w_b, rule)
    deltas = tuple(float(x) for x in raw)
    classes = tuple(_classify(d, t, higher_is_better=False) for d in deltas)
    return AspectResult(deltas, classes, ClassCounts.tally(classes), t)


@dataclass(frozen=True)
class PairComparison:
    pair: PairId
    delta_p: float
    q_p: Classification
    delta_w: float
    q_w: Classification


@dataclass(frozen=True)
class Comparison:
    label_a: str
    label_b: str
    rows: tuple[PairComparison, ...]
    counts_p: ClassCounts
    counts_w: ClassCounts
    similarity_ks: float
    similarity_w: float
    threshold_p: float
    threshold_w: float
    w_rule: WThresholdRule

    @property
    def net_p(self) -> int:
        return self.counts_p.net

    @property
    def net_w(self) -> int:
        return self.counts_w.net

    def to_dict(self) -> dict[str, Any]:
        def counts(c: ClassCounts) -> dict[str, Any]:
            return {
                "improved": c.improved,
                "no_change": c.no_change,
                "worsened": c.worsened,
                "net_improvement": c.net,
                "sign_test_pvalue": c.sign_test(),
            }

        return {
            "format": COMPARISON_FORMAT,
            "label_a": self.label_a,
            "label_b": self.label_b,
            "thresholds": {
                "T_p": self.threshold_p,
                "T_w": self.threshold_w,
                "T_w_rule": self.w_rule.value,
            },
            "statistical_similarity": {"ks_pvalue": self.similarity_ks, "w_distance": self.similarity_w},
            "improvement_counts": counts(self.counts_p),
            "probabilistic_distance": counts(self.counts_w),
            "notes": {"sign_test_pvalue": "exact binomial sign test; supplementary, not a SIMPRO aspect"},
            "pairs": [
                {
                    **r.pair.fields(),
                    "delta_p": r.delta_p,
                    "q_p": r.q_p.value,
                    "delta_w": r.delta_w,
                    "q_w": r.q_w.value,
                }
                for r in self.rows
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> Comparison:
        if doc.get("format") != COMPARISON_FORMAT:
            raise ValueError(f"not a {COMPARISON_FORMAT} document")

        def counts(d: dict[str, Any]) -> ClassCounts:
            return ClassCounts(d["improved"], d["no_change"], d["worsened"])

        rows = tuple(
            PairComparison(
                PairId.from_fields(r),
                float(r["delta_p"]),
                Classification(r["q_p"]),
                float(r["delta_w"]),
                Classification(r["q_w"]),
            )
            for r in doc["pairs"]
        )
        th = doc["thresholds"]
        return cls(
            doc["label_a"],
            doc["label_b"],
            rows,
            counts(doc["improvement_counts"]),
            counts(doc["probabilistic_distance"]),
            float(doc["statistical_similarity"]["ks_pvalue"]),
            float(doc["statistical_similarity"]["w_distance"]),
            float(th["T_p"]),
            float(th["T_w"]),
            WThresholdRule(th["T_w_rule"]),
        )

    def to_json(self) -> str:
        return dumps_json(self.to_dict())

    def save(self, path: str | os.PathLike) -> Path:
        return write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: str | os.PathLike) -> Comparison:
        if not Path(path).is_file():
            raise MissingInput(f"comparison not found: {path}")
        return cls.from_dict(read_json(path))


def compare(
    report_a: SimproReport,
    report_b: SimproReport,
    T_p: float = DEFAULT_T_P,
    w_rule: WThresholdRule | str = WThresholdRule.ABS_DELTA,
) -> Comparison:
    """Run all three aspects for report A against report B."""
    imp = improvement_counts(report_a, report_b, T_p)
    dist = probabilistic_distance(report_a, report_b, w_rule)
    rows = tuple(
        PairComparison(pair, dp, qp, dw, qw)
        for pair, dp, qp, dw, qw in zip(report_a.pairs, imp.deltas, imp.classes, dist.deltas, dist.classes)
    )
    return Comparison(
        report_a.label,
        report_b.label,
        rows,
        imp.counts,
        dist.counts,
        statistical_similarity(report_a.ks, report_b.ks),
        statistical_similarity(report_a.w, report_b.w),
        T_p,
        dist.threshold,
        WThresholdRule(w_rule),
    )
