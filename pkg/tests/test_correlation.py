from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from derecsim.correlation import (
    ColumnRef,
    CorrelationSeries,
    Metric,
    PairId,
    bin_codes,
    category_codes,
    conditional_dist,
    cross_feature_correlation,
    enumerate_pairs,
    evaluate_series,
    flatten_join,
    join_positions,
    quantile_edges,
    subject_join,
)
from derecsim.derec import run_derec
from derecsim.errors import EmptyCondition
from derecsim.synth import SynthesizerSpec, synth_copy, synth_independent
from derecsim.table import DataTable, Schema

import oracles

A = Schema.build("id", g="categorical", n="numeric")
B = Schema.build("id", t="categorical", v="numeric")


def pair_tables():
    a = DataTable.from_rows(A, [("s1", "x", 1.0), ("s2", "y", 5.0), ("s1", "x", 2.0)])
    b = DataTable.from_rows(B, [("s1", "p", 0.5), ("s2", "q", 0.1), ("s2", "q", 0.7), ("s1", "r", 0.2)])
    return a, b


def test_join_positions_order():
    a, b = pair_tables()
    pa, pb = join_positions(a, b)
    # s1 first (first in a); its a-rows vary slowest
    assert pa.tolist() == [0, 0, 2, 2, 1, 1]
    assert pb.tolist() == [0, 3, 0, 3, 1, 2]
    assert subject_join(a, b, "g", "t")[:2] == [("x", "p"), ("x", "r")]


def test_flatten_join_suffixes_clashes():
    a, _ = pair_tables()
    j = flatten_join(a, a)
    assert j.schema.feature_names == ("g@a", "n@a", "g@b", "n@b")
    assert j.n_rows == 5


def test_conditional_dist_and_empty_condition():
    d = conditional_dist([("x", 1.0), ("y", 2.0), ("x", 3.0), ("x", 1.0)], "x")
    assert d.support.tolist() == [1.0, 3.0]
    assert d.weights.tolist() == pytest.approx([2 / 3, 1 / 3])
    with pytest.raises(EmptyCondition):
        conditional_dist([("x", 1.0)], "z")


def test_category_codes_lexicographic_with_synthetic_extras():
    codes = category_codes(["b", "a", "c", "a"], ["d", "a", "0"])
    assert codes == {"a": 0, "b": 1, "c": 2, "0": 3, "d": 4}


def test_quantile_edges_deduplicate():
    assert quantile_edges([1, 1, 1, 1], 10).tolist() == [1.0]
    assert quantile_edges([1, 2, 3], 1).size == 0
    edges = quantile_edges(np.arange(11.0), 10)
    assert edges.tolist() == [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]
    assert bin_codes([0.5, 1.0, 9.0, 12.0], edges).tolist() == [0, 1, 9, 9]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 40).map(lambda k: k / 4), min_size=1, max_size=30), st.integers(1, 12))
def test_quantile_binning_matches_oracle(values, bins):
    edges = quantile_edges(values, bins)
    ref = oracles.bin_edges(values, bins)
    assert edges.tolist() == pytest.approx(ref, abs=1e-12)
    assert bin_codes(values, edges).tolist() == [oracles.bin_of(v, ref) for v in values]


def test_pair_ids():
    p = PairId(ColumnRef("a", "g"), ColumnRef("b", "t"))
    assert p.direction == "a->b"
    assert PairId.from_fields(p.fields()) == p
    m = PairId(None, ColumnRef("b", "t"))
    assert m.is_marginal
    assert PairId.from_fields(m.fields()) == m


def bundle_pair():
    a = DataTable.from_rows(Schema.build("id", seg="categorical", act="categorical"), [
        ("s1", "k", "buy"), ("s1", "k", "view"), ("s2", "m", "view"), ("s3", "k", "buy"),
        ("s3", "k", "buy"), ("s4", "m", "view"),
    ])
    b = DataTable.from_rows(Schema.build("id", reg="categorical", amt="numeric"), [
        ("s1", "n", 1.0), ("s2", "s", 9.0), ("s2", "s", 8.0), ("s3", "n", 1.5), ("s4", "s", 7.0),
    ])
    return run_derec(a, b)


def test_copy_scores_are_perfect():
    orig = bundle_pair()
    ks, w = evaluate_series(orig, synth_copy(orig))
    assert set(ks.scores().tolist()) == {1.0}
    assert set(w.scores().tolist()) == {0.0}
    assert all(v.coverage == 1.0 for v in ks.values)


def test_enumerate_pairs_counts():
    orig = bundle_pair()
    pairs = enumerate_pairs(orig)
    ca, cb = len(orig.source_columns("a")), len(orig.source_columns("b"))
    assert len(pairs) == 2 * ca * cb + ca + cb
    assert len(set(pairs)) == len(pairs)


def test_missing_condition_penalty_and_coverage():
    orig = bundle_pair()
    parent = orig.parent
    # every synthetic subject has segment "k": condition "m" is never seen
    syn_parent = DataTable(parent.schema, {
        **{n: parent.column(n) for n in parent.schema.names},
        "seg": ("k",) * parent.n_rows,
    })
    syn = orig.replace_tables(syn_parent, orig.children)
    pair = PairId(ColumnRef("a", "seg"), ColumnRef("b", "amt"))
    og, _ = orig.locate("a", "seg")
    ot, _ = orig.locate("b", "amt")
    sg, _ = syn.locate("a", "seg")
    st_, _ = syn.locate("b", "amt")
    ks = cross_feature_correlation((og, ot), (sg, st_), pair, Metric.KS)
    w = cross_feature_correlation((og, ot), (sg, st_), pair, "w_distance")
    # original join: k -> s1 (1 row), s3 (1 row); m -> s2 (2 rows), s4 (1 row)
    assert ks.coverage == pytest.approx(2 / 5)
    ref_ks, ref_w = oracles.brute_correlation(
        {"given_kind": "categorical", "given_ids": og.ids, "given": og.column("seg"),
         "target_kind": "numeric", "target_ids": ot.ids, "target": ot.column("amt")},
        {"given_kind": "categorical", "given_ids": sg.ids, "given": sg.column("seg"),
         "target_kind": "numeric", "target_ids": st_.ids, "target": st_.column("amt")},
    )
    assert ks.value == pytest.approx(ref_ks, abs=1e-12)
    assert w.value == pytest.approx(ref_w, abs=1e-12)
    # the three missing "m" rows each cost the full amount range 9 - 1
    assert w.value >= 3 * 8.0 / 5


def test_series_csv_roundtrip():
    orig = bundle_pair()
    ks, w = evaluate_series(orig, synth_independent(orig, SynthesizerSpec("independent", 5)))
    for s in (ks, w):
        back = CorrelationSeries.from_csv_text(s.to_csv_text())
        assert back == s


def test_threads_do_not_change_results():
    orig = bundle_pair()
    syn = synth_independent(orig, SynthesizerSpec("independent", 2))
    assert evaluate_series(orig, syn, threads=1) == evaluate_series(orig, syn, threads=4)


def pair_inputs(bundle, pair):
    t, name = bundle.locate(pair.target.source, pair.target.column)
    doc = {"target_kind": t.schema.kind(name).value, "target_ids": t.ids, "target": t.column(name)}
    if pair.given is not None:
        g, gname = bundle.locate(pair.given.source, pair.given.column)
        doc.update(given_kind=g.schema.kind(gname).value, given_ids=g.ids, given=g.column(gname))
    return doc


@st.composite
def tiny_bundles(draw):
    n = draw(st.integers(2, 5))
    ids = [f"s{i}" for i in range(n)]
    seg = {sid: draw(st.sampled_from("xyz")) for sid in ids}
    age = {sid: float(draw(st.integers(18, 30))) for sid in ids}
    rows_a = []
    for sid in ids:
        for _ in range(draw(st.integers(1, 3))):
            rows_a.append((sid, seg[sid], age[sid], draw(st.sampled_from("pq"))))
    rows_b = []
    for sid in ids:
        for _ in range(draw(st.integers(1, 3))):
            rows_b.append((sid, draw(st.sampled_from("uvw")), float(draw(st.integers(0, 5)))))
    a = DataTable.from_rows(Schema.build("id", seg="categorical", age="numeric", act="categorical"), rows_a)
    b = DataTable.from_rows(Schema.build("id", ad="categorical", amt="numeric"), rows_b)
    return run_derec(a, b), draw(st.integers(0, 2**32))


@settings(max_examples=40, deadline=None)
@given(tiny_bundles(), st.sampled_from([2, 3, 10]))
def test_series_match_brute_force(bundle_seed, bins):
    orig, seed = bundle_seed
    syn = synth_independent(orig, SynthesizerSpec("independent", seed))
    ks, w = evaluate_series(orig, syn, bins=bins)
    for vk, vw in zip(ks.values, w.values):
        ref_ks, ref_w = oracles.brute_correlation(pair_inputs(orig, vk.pair), pair_inputs(syn, vk.pair), bins)
        assert vk.value == pytest.approx(ref_ks, abs=1e-9)
        assert vw.value == pytest.approx(ref_w, abs=1e-9)
