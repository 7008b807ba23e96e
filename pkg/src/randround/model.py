"""Hierarchical count-table model: attribute schemas, partition groups and
per-region tables, plus the JSON/CSV ingestion used by the CLI.

A schema declares a forest of partition groups. Each group ties a parent
attribute to children that split it exactly (parent true value equals the sum
of the children's true values). Attributes flagged as invariants are published
exactly; everything else is noised.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field


class SchemaError(ValueError):
    """Raised for malformed hierarchy documents."""


class TableError(ValueError):
    """Raised for malformed region-data documents."""


@dataclass(frozen=True)
class PartitionGroup:
    parent: str
    children: tuple[str, ...]
    exclusive_exhaustive: bool = True

    def __post_init__(self):
        if len(self.children) < 2:
            raise SchemaError(f"group {self.parent!r}: needs at least 2 children")
        if len(set(self.children)) != len(self.children):
            raise SchemaError(f"group {self.parent!r}: duplicate child")
        if self.parent in self.children:
            raise SchemaError(f"group {self.parent!r}: parent listed among children")


@dataclass(frozen=True)
class HierarchySchema:
    attributes: dict[str, str]  # id -> display label
    invariants: frozenset[str]
    groups: tuple[PartitionGroup, ...]

    def is_invariant(self, attr_id: str) -> bool:
        return attr_id in self.invariants


@dataclass
class RegionTable:
    """One region's values keyed by attribute id.

    ``suppressed`` marks regions the producer withheld (small populations);
    scanners skip them. The flag is set programmatically, the CSV exchange
    format carries values only.
    """

    region_id: str
    values: dict[str, int] = field(default_factory=dict)
    suppressed: bool = False


def parse_hierarchy(document: str) -> HierarchySchema:
    """Parse a schema JSON document, reporting the location of each defect."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as e:
        raise SchemaError(f"not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")

    attributes: dict[str, str] = {}
    for i, entry in enumerate(doc.get("attributes", [])):
        if not isinstance(entry, dict) or "id" not in entry:
            raise SchemaError(f"attributes[{i}]: expected an object with an 'id'")
        attr_id = str(entry["id"])
        if not attr_id:
            raise SchemaError(f"attributes[{i}]: empty id")
        if attr_id in attributes:
            raise SchemaError(f"attributes[{i}]: duplicate id {attr_id!r}")
        attributes[attr_id] = str(entry.get("label", attr_id))

    invariants = set()
    for i, attr_id in enumerate(doc.get("invariants", [])):
        attr_id = str(attr_id)
        if attr_id not in attributes:
            raise SchemaError(f"invariants[{i}]: dangling reference {attr_id!r}")
        invariants.add(attr_id)

    groups: list[PartitionGroup] = []
    seen_children: dict[str, str] = {}  # child id -> parent that claimed it
    for i, entry in enumerate(doc.get("groups", [])):
        if not isinstance(entry, dict):
            raise SchemaError(f"groups[{i}]: expected an object")
        parent = str(entry.get("parent", ""))
        children = tuple(str(c) for c in entry.get("children", []))
        if parent not in attributes:
            raise SchemaError(f"groups[{i}]: dangling parent reference {parent!r}")
        for c in children:
            if c not in attributes:
                raise SchemaError(f"groups[{i}]: dangling child reference {c!r}")
            if c in seen_children:
                raise SchemaError(
                    f"groups[{i}]: forest violation, child {c!r} already under "
                    f"{seen_children[c]!r}"
                )
            seen_children[c] = parent
        try:
            group = PartitionGroup(
                parent=parent,
                children=children,
                exclusive_exhaustive=bool(entry.get("exclusive_exhaustive", True)),
            )
        except SchemaError as e:
            raise SchemaError(f"groups[{i}]: {e}") from e
        groups.append(group)

    return HierarchySchema(
        attributes=attributes,
        invariants=frozenset(invariants),
        groups=tuple(groups),
    )


def serialize_hierarchy(schema: HierarchySchema) -> str:
    doc = {
        "attributes": [
            {"id": attr_id, "label": label}
            for attr_id, label in schema.attributes.items()
        ],
        "invariants": sorted(schema.invariants),
        "groups": [
            {
                "parent": g.parent,
                "children": list(g.children),
                "exclusive_exhaustive": g.exclusive_exhaustive,
            }
            for g in schema.groups
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


TABLE_HEADER = ["region_id", "attribute_id", "value"]


def parse_table(
    document: str, schema: HierarchySchema, strict: bool = False
) -> list[RegionTable]:
    """Parse region data CSV (``region_id,attribute_id,value``).

    Sparse tables are fine: regions may carry any subset of attributes. In
    strict mode the document is treated as a published table: attribute ids
    must resolve against the schema and non-invariant values must be
    multiples of 5.
    """
    reader = csv.reader(io.StringIO(document))
    try:
        header = next(reader)
    except StopIteration:
        raise TableError("empty document, header row required") from None
    if [h.strip() for h in header] != TABLE_HEADER:
        raise TableError(f"bad header {header!r}, expected {TABLE_HEADER}")

    tables: dict[str, RegionTable] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 3:
            raise TableError(f"line {lineno}: expected 3 fields, got {len(row)}")
        region_id, attr_id, raw = (f.strip() for f in row)
        try:
            value = int(raw)
        except ValueError:
            raise TableError(f"line {lineno}: non-integer value {raw!r}") from None
        if value < 0:
            raise TableError(f"line {lineno}: negative value {value}")
        if strict:
            if attr_id not in schema.attributes:
                raise TableError(f"line {lineno}: unknown attribute id {attr_id!r}")
            if not schema.is_invariant(attr_id) and value % 5 != 0:
                raise TableError(
                    f"line {lineno}: {attr_id!r}={value} not a multiple of 5"
                )
        table = tables.setdefault(region_id, RegionTable(region_id=region_id))
        if attr_id in table.values:
            raise TableError(
                f"line {lineno}: duplicate value for ({region_id!r}, {attr_id!r})"
            )
        table.values[attr_id] = value
    return list(tables.values())


def serialize_tables(tables: list[RegionTable]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TABLE_HEADER)
    for table in tables:
        for attr_id, value in table.values.items():
            writer.writerow([table.region_id, attr_id, value])
    return out.getvalue()


def validate_true_table(table: RegionTable, schema: HierarchySchema) -> list[str]:
    """Check every exclusive-exhaustive group sums exactly in ground truth.

    Returns human-readable violation strings; an empty list means the table
    is a consistent truth table. Groups with missing members are reported as
    incomplete rather than summed partially.
    """
    violations = []
    for group in schema.groups:
        if not group.exclusive_exhaustive:
            continue
        missing = [a for a in (group.parent, *group.children) if a not in table.values]
        if missing:
            violations.append(
                f"group {group.parent}: incomplete, missing {', '.join(missing)}"
            )
            continue
        child_sum = sum(table.values[c] for c in group.children)
        parent_val = table.values[group.parent]
        if child_sum != parent_val:
            violations.append(
                f"group {group.parent}: sum mismatch {child_sum} != {parent_val}"
            )
    return violations
