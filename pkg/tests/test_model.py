import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from randround.mechanisms import MechanismSpec, apply_mechanism, make_rng
from randround.model import (
    HierarchySchema,
    PartitionGroup,
    RegionTable,
    SchemaError,
    TableError,
    parse_hierarchy,
    parse_table,
    serialize_hierarchy,
    serialize_tables,
    validate_true_table,
)


class TestParseHierarchy:
    def test_age_schema(self, age_schema):
        assert len(age_schema.groups) == 2
        assert age_schema.invariants == {"A0"}
        assert age_schema.groups[0].parent == "A0"
        assert age_schema.groups[0].children == ("A1", "A5", "A6")
        assert age_schema.groups[1].children == ("A2", "A3", "A4")

    def test_celtic_schema(self, celtic_schema):
        assert len(celtic_schema.groups) == 1
        assert len(celtic_schema.groups[0].children) == 4
        assert not celtic_schema.invariants

    def test_duplicate_attribute_id(self):
        doc = {"attributes": [{"id": "A"}, {"id": "A"}]}
        with pytest.raises(SchemaError, match=r"attributes\[1\].*duplicate"):
            parse_hierarchy(json.dumps(doc))

    def test_forest_violation(self):
        doc = {
            "attributes": [{"id": a} for a in "PQXY"],
            "groups": [
                {"parent": "P", "children": ["X", "Y"]},
                {"parent": "Q", "children": ["X", "Y"]},
            ],
        }
        with pytest.raises(SchemaError, match=r"groups\[1\].*forest violation"):
            parse_hierarchy(json.dumps(doc))

    def test_dangling_child(self):
        doc = {
            "attributes": [{"id": "P"}, {"id": "X"}],
            "groups": [{"parent": "P", "children": ["X", "Z"]}],
        }
        with pytest.raises(SchemaError, match=r"groups\[0\].*dangling child.*'Z'"):
            parse_hierarchy(json.dumps(doc))

    def test_dangling_invariant(self):
        doc = {"attributes": [{"id": "P"}], "invariants": ["Q"]}
        with pytest.raises(SchemaError, match=r"invariants\[0\].*dangling"):
            parse_hierarchy(json.dumps(doc))

    def test_parent_among_children(self):
        doc = {
            "attributes": [{"id": "P"}, {"id": "X"}],
            "groups": [{"parent": "P", "children": ["P", "X"]}],
        }
        with pytest.raises(SchemaError, match="parent listed among children"):
            parse_hierarchy(json.dumps(doc))

    def test_single_child_group(self):
        doc = {
            "attributes": [{"id": "P"}, {"id": "X"}],
            "groups": [{"parent": "P", "children": ["X"]}],
        }
        with pytest.raises(SchemaError, match="at least 2 children"):
            parse_hierarchy(json.dumps(doc))

    def test_not_json(self):
        with pytest.raises(SchemaError, match="not valid JSON"):
            parse_hierarchy("{")

    def test_round_trip(self, age_schema):
        again = parse_hierarchy(serialize_hierarchy(age_schema))
        assert again == age_schema


PUBLISHED_CSV = """region_id,attribute_id,value
r1,A0,108843
r1,A1,20
r1,A5,20
r1,A6,20
r2,A0,60
r2,A1,15
r2,A5,25
r2,A6,20
"""


class TestParseTable:
    def test_two_regions(self, age_schema):
        tables = parse_table(PUBLISHED_CSV, age_schema)
        assert [t.region_id for t in tables] == ["r1", "r2"]
        assert all(len(t.values) == 4 for t in tables)
        assert not tables[0].suppressed

    def test_invariant_value_not_rounded_ok_in_strict(self, age_schema):
        # 108843 is fine on the invariant attribute even in strict mode
        tables = parse_table(PUBLISHED_CSV, age_schema, strict=True)
        assert tables[0].values["A0"] == 108843

    def test_strict_rejects_unrounded_non_invariant(self, age_schema):
        doc = "region_id,attribute_id,value\nr1,A1,17\n"
        with pytest.raises(TableError, match="not a multiple of 5"):
            parse_table(doc, age_schema, strict=True)
        # the same table parses as a (true-value) table outside strict mode
        assert parse_table(doc, age_schema)[0].values["A1"] == 17

    def test_strict_rejects_unknown_id(self, age_schema):
        doc = "region_id,attribute_id,value\nr1,ZZ,20\n"
        with pytest.raises(TableError, match="unknown attribute id"):
            parse_table(doc, age_schema, strict=True)
        assert parse_table(doc, age_schema)[0].values["ZZ"] == 20

    def test_negative_value(self, age_schema):
        doc = "region_id,attribute_id,value\nr1,A1,-5\n"
        with pytest.raises(TableError, match="line 2: negative"):
            parse_table(doc, age_schema)

    def test_non_integer(self, age_schema):
        doc = "region_id,attribute_id,value\nr1,A1,12.5\n"
        with pytest.raises(TableError, match="non-integer"):
            parse_table(doc, age_schema)

    def test_duplicate_cell(self, age_schema):
        doc = "region_id,attribute_id,value\nr1,A1,15\nr1,A1,20\n"
        with pytest.raises(TableError, match="duplicate"):
            parse_table(doc, age_schema)

    def test_bad_header(self, age_schema):
        with pytest.raises(TableError, match="bad header"):
            parse_table("region,attr,val\n", age_schema)

    def test_empty_document(self, age_schema):
        with pytest.raises(TableError, match="header row required"):
            parse_table("", age_schema)

    def test_sparse_table(self, age_schema):
        doc = "region_id,attribute_id,value\nr1,A1,15\n"
        tables = parse_table(doc, age_schema)
        assert tables[0].values == {"A1": 15}

    def test_round_trip(self, age_schema):
        tables = parse_table(PUBLISHED_CSV, age_schema)
        assert parse_table(serialize_tables(tables), age_schema) == tables


class TestValidateTrueTable:
    def test_consistent(self, age_schema):
        table = RegionTable("r", {"A0": 48, "A1": 16, "A5": 16, "A6": 16})
        # second group incomplete, first group sums
        violations = validate_true_table(table, age_schema)
        assert violations == ["group A1: incomplete, missing A2, A3, A4"]

    def test_fully_consistent(self, age_schema):
        table = RegionTable(
            "r",
            {"A0": 48, "A1": 16, "A2": 5, "A3": 5, "A4": 6, "A5": 16, "A6": 16},
        )
        assert validate_true_table(table, age_schema) == []

    def test_sum_mismatch(self, age_schema):
        table = RegionTable("r", {"A0": 48, "A1": 17, "A5": 16, "A6": 16})
        violations = validate_true_table(table, age_schema)
        assert any("sum mismatch 49 != 48" in v for v in violations)

    def test_missing_member(self, age_schema):
        table = RegionTable("r", {"A0": 48, "A1": 16, "A5": 16})
        violations = validate_true_table(table, age_schema)
        assert any("incomplete" in v and "A6" in v for v in violations)

    def test_non_exclusive_group_skipped(self):
        schema = HierarchySchema(
            attributes={"P": "", "X": "", "Y": ""},
            invariants=frozenset(),
            groups=(
                PartitionGroup(
                    parent="P", children=("X", "Y"), exclusive_exhaustive=False
                ),
            ),
        )
        table = RegionTable("r", {"P": 10, "X": 3, "Y": 3})
        assert validate_true_table(table, schema) == []


@settings(max_examples=50, deadline=None)
@given(
    children=st.lists(st.integers(min_value=11, max_value=500), min_size=2, max_size=6),
    invariant_parent=st.booleans(),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_published_group_sums_stay_within_rounding_slack(
    children, invariant_parent, seed
):
    """After publication, |sum(children) - parent| <= 4(n+1) for every group."""
    n = len(children)
    ids = tuple(f"C{i}" for i in range(n))
    schema = HierarchySchema(
        attributes={"P": "", **{c: "" for c in ids}},
        invariants=frozenset({"P"}) if invariant_parent else frozenset(),
        groups=(PartitionGroup(parent="P", children=ids),),
    )
    truth = RegionTable("r", {"P": sum(children), **dict(zip(ids, children))})
    published = apply_mechanism(
        truth, schema, MechanismSpec(mechanism="rround"), make_rng(seed)
    )
    slack = 4 * n if invariant_parent else 4 * (n + 1)
    child_sum = sum(published.values[c] for c in ids)
    assert abs(child_sum - published.values["P"]) <= slack
