from __future__ import annotations

from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from derecsim.derec import (
    DerecBundle,
    connect,
    detect,
    parent_layout,
    recreate,
    representative,
    run_derec,
)
from derecsim.errors import BundleInvariantError, MissingArtifact, NoContextualColumns
from derecsim.table import DataTable, Schema

SCHEMA_A = Schema.build("uid", gender="categorical", item="categorical")
SCHEMA_B = Schema.build("uid", region="categorical", clicks="numeric", gender="categorical")


def tables():
    a = DataTable.from_rows(SCHEMA_A, [
        ("u1", "f", "shoe"), ("u1", "f", "hat"), ("u2", "m", "hat"),
        ("u3", "m", "sock"), ("u3", "m", "sock"), ("u2", "m", "shoe"),
    ])
    b = DataTable.from_rows(SCHEMA_B, [
        ("u2", "north", 3, "m"), ("u1", "south", 1, "f"), ("u1", "south", 4, "f"),
        ("u3", "north", 2, "m"), ("u3", "north", 7, "x"),
    ])
    return a, b


def test_detect_fractions_by_hand():
    a, b = tables()
    ra = detect(a, 0.95, "a")
    assert ra.verdict("gender").fraction == 1.0
    # u3 bought the same sock twice, u1 and u2 did not repeat
    assert ra.verdict("item").fraction == pytest.approx(1 / 3)
    assert ra.contextual_columns == ("gender",)
    rb = detect(b, 0.95, "b")
    assert rb.contextual_columns == ("region",)
    assert rb.verdict("gender").fraction == pytest.approx(2 / 3)
    assert detect(b, 0.6, "b").contextual_columns == ("region", "gender")


def test_threshold_must_be_a_fraction():
    a, _ = tables()
    with pytest.raises(ValueError):
        detect(a, 0.0)
    with pytest.raises(ValueError):
        detect(a, 1.2)


def test_threshold_one_requires_every_subject_constant():
    a, _ = tables()
    assert detect(a, 1.0).contextual_columns == ("gender",)


def test_representative_is_mode_with_first_seen_tiebreak():
    assert representative(["b", "a", "a"]) == "a"
    assert representative(["b", "a"]) == "b"
    assert representative([2.0, 1.0, 1.0, 2.0]) == 2.0


def test_parent_layout_suffixes_shared_names():
    a, b = tables()
    ra = detect(a, 0.6, "a")
    rb = detect(b, 0.6, "b")
    names = [pc.name for pc in parent_layout(ra, rb)]
    assert names == ["gender@a", "region", "gender@b"]


def test_recreate_builds_one_row_per_subject():
    a, b = tables()
    ra, rb = detect(a, 0.6, "a"), detect(b, 0.6, "b")
    parent = recreate(a, b, ra, rb)
    assert parent.subjects == ("u1", "u2", "u3")
    assert parent.column("gender@b") == ("f", "m", "m")
    assert parent.column("region") == ("south", "north", "north")


def test_recreate_without_contextual_columns():
    a, b = tables()
    ra = detect(a.select(["item"]), 0.95, "a")
    rb = detect(b.select(["clicks"]), 0.95, "b")
    with pytest.raises(NoContextualColumns):
        recreate(a, b, ra, rb)


def test_connect_children_hold_non_contextual_columns():
    a, b = tables()
    bundle = run_derec(a, b)
    assert bundle.child("a").schema.feature_names == ("item",)
    assert bundle.child("b").schema.feature_names == ("clicks", "gender")
    assert bundle.child("a").n_rows == a.n_rows
    bundle.validate()


def test_child_elided_when_every_column_is_contextual():
    a, b = tables()
    ra = detect(a.select(["gender"]), 0.95, "a")
    rb = detect(b, 0.95, "b")
    bundle = connect(recreate(a, b, ra, rb), a.select(["gender"]), b, ra, rb)
    assert bundle.sources == ("a", "b")
    assert bundle.child("a") is None
    assert [tag for tag, _ in bundle.children] == ["b"]


def test_run_derec_drops_orphans_and_renames_identifier():
    a, _ = tables()
    s = Schema.build("member", region="categorical")
    b = DataTable.from_rows(s, [("u1", "s"), ("u2", "n"), ("u9", "n")])
    bundle = run_derec(a, b)
    assert bundle.parent.subjects == ("u1", "u2")
    assert bundle.identifier == "uid"


def test_bundle_roundtrip(tmp_path):
    a, b = tables()
    bundle = run_derec(a, b)
    bundle.save(tmp_path / "bundle")
    names = sorted(p.name for p in (tmp_path / "bundle").iterdir())
    assert names == [
        "child_a.csv", "child_a.schema.json", "child_b.csv", "child_b.schema.json",
        "parent.csv", "parent.schema.json", "partition.json",
    ]
    back = DerecBundle.load(tmp_path / "bundle")
    assert back.fingerprint() == bundle.fingerprint()
    assert back.parent == bundle.parent


def test_bundle_load_missing_table(tmp_path):
    a, b = tables()
    run_derec(a, b).save(tmp_path)
    (tmp_path / "child_b.csv").unlink()
    with pytest.raises(MissingArtifact):
        DerecBundle.load(tmp_path)


def test_bundle_rejects_child_subject_outside_parent():
    a, b = tables()
    bundle = run_derec(a, b)
    rogue = bundle.child("a").with_ids({"u1": "u1", "u2": "u2", "u3": "zz"})
    with pytest.raises(BundleInvariantError):
        bundle.replace_tables(bundle.parent, [("a", rogue), ("b", bundle.child("b"))])


def test_locate_maps_source_columns():
    a, b = tables()
    bundle = run_derec(a, b, 0.6)
    t, name = bundle.locate("b", "gender")
    assert t is bundle.parent and name == "gender@b"
    t, name = bundle.locate("a", "item")
    assert t is bundle.child("a") and name == "item"


@st.composite
def two_tables(draw):
    n = draw(st.integers(1, 6))
    ids = [f"s{i}" for i in range(n)]
    vals = st.sampled_from(["p", "q", "r"])
    rows_a = [(sid, draw(vals), draw(vals)) for sid in ids for _ in range(draw(st.integers(1, 4)))]
    rows_b = [(sid, draw(vals)) for sid in ids for _ in range(draw(st.integers(1, 4)))]
    a = DataTable.from_rows(Schema.build("id", x="categorical", y="categorical"), rows_a)
    b = DataTable.from_rows(Schema.build("id", z="categorical"), rows_b)
    return a, b


@settings(max_examples=80, deadline=None)
@given(two_tables(), st.sampled_from([0.2, 0.5, 0.95, 1.0]))
def test_detect_matches_direct_count(tables_, threshold):
    a, _ = tables_
    rep = detect(a, threshold)
    for v in rep.columns:
        by = {}
        for sid, val in zip(a.ids, a.column(v.column)):
            by.setdefault(sid, set()).add(val)
        expected = sum(len(s) == 1 for s in by.values()) / len(by)
        assert v.fraction == expected
        assert v.contextual == (expected >= threshold)


@settings(max_examples=80, deadline=None)
@given(two_tables(), st.sampled_from([0.2, 0.5, 1.0]))
def test_partition_is_complete_and_parent_unique(tables_, threshold):
    a, b = tables_
    ra, rb = detect(a, threshold, "a"), detect(b, threshold, "b")
    if not ra.contextual_columns and not rb.contextual_columns:
        return
    bundle = run_derec(a, b, threshold)
    assert len(set(bundle.parent.ids)) == bundle.parent.n_rows
    for rep, t in ((ra, a), (rb, b)):
        assert sorted(rep.contextual_columns + rep.non_contextual_columns) == sorted(t.schema.feature_names)
    for pc in bundle.layout:
        src = a if pc.source == "a" else b
        for sid in bundle.parent.subjects:
            vals = [src.column(pc.column)[p] for p in src.subject_index[sid]]
            top = max(Counter(vals).values())
            got = bundle.parent.column(pc.name)[bundle.parent.subject_index[sid][0]]
            assert Counter(vals)[got] == top
