"""Closed-form detection of the four rounding-inference vulnerabilities.

Each scanner checks one boundary condition on a published partition group:

* exact, invariant parent:       sum(children) = invariant +- 4n
* exact, rounded parent (4 kids): sum(children) = parent +- 20
* probabilistic, invariant:      sum(children) = invariant +- (4n - 1)
* probabilistic, rounded parent (3 kids): sum(children) = parent +- 15

When a condition holds, the feasible true assignments collapse to a single
point (exact kinds) or to a small equi-probable family (probabilistic kinds),
and the scanner emits the per-attribute posterior directly. Published values
below 15 are refused by the region driver: rounding of single-digit counts is
not reliable in real releases, so inference is restricted to truths above 10.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

from .enumerator import ChildSpec, GroupInstance, enumerate_solutions
from .model import HierarchySchema, RegionTable

# Published values below this are out of bounds for every scanner.
VALUE_FLOOR = 15


class FindingKind(enum.Enum):
    EXACT_INVARIANT = "ExactInvariant"
    EXACT_INVARIANT_FREE = "ExactInvariantFree"
    PROB_INVARIANT = "ProbInvariant"
    PROB_INVARIANT_FREE = "ProbInvariantFree"


KIND_ORDER = tuple(FindingKind)

EXACT_KINDS = (FindingKind.EXACT_INVARIANT, FindingKind.EXACT_INVARIANT_FREE)
INVARIANT_KINDS = (FindingKind.EXACT_INVARIANT, FindingKind.PROB_INVARIANT)


class DataIntegrityWarning(UserWarning):
    """A boundary condition held but the implied truth is impossible."""


class VerificationError(RuntimeError):
    """A finding disagreed with the enumerator in verify mode."""


@dataclass(frozen=True)
class Finding:
    region_id: str
    parent: str
    children: tuple[str, ...]
    kind: FindingKind
    direction: str  # "upper": published sum sits above the target, "lower": below
    confidence: Fraction
    per_attribute: dict[str, dict[int, Fraction]]


@dataclass(frozen=True)
class Skip:
    region_id: str
    parent: str
    kind: FindingKind | None
    reason: str


@dataclass
class ScanReport:
    findings: list[Finding] = field(default_factory=list)
    skips: list[Skip] = field(default_factory=list)


def _check_published(published, expected_len=None, minimum=None):
    published = tuple(int(p) for p in published)
    if expected_len is not None and len(published) != expected_len:
        raise ValueError(f"expected {expected_len} children, got {len(published)}")
    if minimum is not None and len(published) < minimum:
        raise ValueError(f"need at least {minimum} children, got {len(published)}")
    for p in published:
        if p < 0 or p % 5 != 0:
            raise ValueError(f"published value {p} is not a non-negative multiple of 5")
    return published


def _ids(published, parent_id, child_ids):
    if child_ids is None:
        child_ids = tuple(f"c{i}" for i in range(len(published)))
    child_ids = tuple(child_ids)
    if len(child_ids) != len(published):
        raise ValueError("child_ids length does not match published values")
    return parent_id, child_ids


def _feasible(distributions: dict[str, dict[int, Fraction]], region_id, parent_id):
    for attr_id, dist in distributions.items():
        if any(v < 0 for v in dist):
            warnings.warn(
                f"region {region_id!r} group {parent_id!r}: condition met but "
                f"inferred value for {attr_id!r} is negative; data inconsistent",
                DataIntegrityWarning,
                stacklevel=3,
            )
            return False
    return True


def scan_exact_invariant(
    invariant: int,
    published,
    region_id: str = "",
    parent_id: str = "parent",
    child_ids=None,
) -> Finding | None:
    """Unique solution when the published children sum to invariant +- 4n."""
    published = _check_published(published, minimum=2)
    parent_id, child_ids = _ids(published, parent_id, child_ids)
    n = len(published)
    gap = sum(published) - invariant
    if gap == 4 * n:
        direction, offset = "upper", -4
    elif gap == -4 * n:
        direction, offset = "lower", 4
    else:
        return None
    per_attribute = {
        attr: {p + offset: Fraction(1)} for attr, p in zip(child_ids, published)
    }
    if not _feasible(per_attribute, region_id, parent_id):
        return None
    return Finding(
        region_id=region_id,
        parent=parent_id,
        children=child_ids,
        kind=FindingKind.EXACT_INVARIANT,
        direction=direction,
        confidence=Fraction(1),
        per_attribute=per_attribute,
    )


def scan_exact_invariant_free(
    parent_published: int,
    published,
    region_id: str = "",
    parent_id: str = "parent",
    child_ids=None,
) -> Finding | None:
    """Unique solution for a rounded parent with exactly 4 children at +-20.

    Four children is the only small family size where the extreme feasible
    offset lands on a multiple of 5, which is what forces uniqueness.
    """
    published = _check_published(published, expected_len=4)
    (parent_published,) = _check_published([parent_published])
    parent_id, child_ids = _ids(published, parent_id, child_ids)
    gap = sum(published) - parent_published
    if gap == 20:
        direction, child_offset, parent_offset = "upper", -4, 4
    elif gap == -20:
        direction, child_offset, parent_offset = "lower", 4, -4
    else:
        return None
    per_attribute = {parent_id: {parent_published + parent_offset: Fraction(1)}}
    for attr, p in zip(child_ids, published):
        per_attribute[attr] = {p + child_offset: Fraction(1)}
    if not _feasible(per_attribute, region_id, parent_id):
        return None
    return Finding(
        region_id=region_id,
        parent=parent_id,
        children=child_ids,
        kind=FindingKind.EXACT_INVARIANT_FREE,
        direction=direction,
        confidence=Fraction(1),
        per_attribute=per_attribute,
    )


def scan_prob_invariant(
    invariant: int,
    published,
    region_id: str = "",
    parent_id: str = "parent",
    child_ids=None,
) -> Finding | None:
    """n equi-probable solutions when the children sum to invariant +- (4n-1).

    One child sits 3 away from its published value, the rest 4, all on the
    same side; every placement of the odd child is equally likely, so each
    attribute is pinned with probability (n-1)/n.
    """
    published = _check_published(published, minimum=2)
    parent_id, child_ids = _ids(published, parent_id, child_ids)
    n = len(published)
    gap = sum(published) - invariant
    if gap == 4 * n - 1:
        direction, sign = "upper", -1
    elif gap == -(4 * n - 1):
        direction, sign = "lower", 1
    else:
        return None
    modal, minor = Fraction(n - 1, n), Fraction(1, n)
    per_attribute = {
        attr: {p + 4 * sign: modal, p + 3 * sign: minor}
        for attr, p in zip(child_ids, published)
    }
    if not _feasible(per_attribute, region_id, parent_id):
        return None
    return Finding(
        region_id=region_id,
        parent=parent_id,
        children=child_ids,
        kind=FindingKind.PROB_INVARIANT,
        direction=direction,
        confidence=modal,
        per_attribute=per_attribute,
    )


def scan_prob_invariant_free(
    parent_published: int,
    published,
    region_id: str = "",
    parent_id: str = "parent",
    child_ids=None,
) -> Finding | None:
    """4 equi-probable solutions for a rounded parent with 3 children at +-15.

    Either the parent alone is 3 away from its published value, or exactly
    one of the children is; all four placements carry equal likelihood, so
    the parent and every child are pinned with probability 3/4.
    """
    published = _check_published(published, expected_len=3)
    (parent_published,) = _check_published([parent_published])
    parent_id, child_ids = _ids(published, parent_id, child_ids)
    gap = sum(published) - parent_published
    if gap == 15:
        direction, sign = "upper", -1
    elif gap == -15:
        direction, sign = "lower", 1
    else:
        return None
    modal, minor = Fraction(3, 4), Fraction(1, 4)
    per_attribute = {
        parent_id: {
            parent_published - 4 * sign: modal,
            parent_published - 3 * sign: minor,
        }
    }
    for attr, p in zip(child_ids, published):
        per_attribute[attr] = {p + 4 * sign: modal, p + 3 * sign: minor}
    if not _feasible(per_attribute, region_id, parent_id):
        return None
    return Finding(
        region_id=region_id,
        parent=parent_id,
        children=child_ids,
        kind=FindingKind.PROB_INVARIANT_FREE,
        direction=direction,
        confidence=modal,
        per_attribute=per_attribute,
    )


def _group_values(table, group):
    missing = [a for a in (group.parent, *group.children) if a not in table.values]
    if missing:
        return None, None, f"missing values: {', '.join(missing)}"
    return (
        table.values[group.parent],
        tuple(table.values[c] for c in group.children),
        None,
    )


def scan_region_report(
    table: RegionTable,
    schema: HierarchySchema,
    kinds=None,
    verify: bool = False,
) -> ScanReport:
    """Run the requested scanners over every group of a published region.

    Findings come out in deterministic order: schema group order first, kind
    declaration order second. Groups a scanner cannot handle are recorded as
    skips with the reason rather than raising.
    """
    wanted = tuple(kinds) if kinds is not None else KIND_ORDER
    report = ScanReport()
    if table.suppressed:
        report.skips.append(Skip(table.region_id, "", None, "region suppressed"))
        return report
    for group in schema.groups:
        if not group.exclusive_exhaustive:
            report.skips.append(
                Skip(
                    table.region_id,
                    group.parent,
                    None,
                    "group not flagged exclusive_exhaustive",
                )
            )
            continue
        parent_value, child_values, missing_reason = _group_values(table, group)
        parent_is_invariant = schema.is_invariant(group.parent)
        for kind in KIND_ORDER:
            if kind not in wanted:
                continue
            requires_invariant = kind in INVARIANT_KINDS
            if requires_invariant != parent_is_invariant:
                reason = (
                    "invariant missing"
                    if requires_invariant
                    else "parent is an invariant, not a rounded value"
                )
                report.skips.append(Skip(table.region_id, group.parent, kind, reason))
                continue
            if missing_reason:
                report.skips.append(
                    Skip(table.region_id, group.parent, kind, missing_reason)
                )
                continue
            if kind is FindingKind.EXACT_INVARIANT_FREE and len(child_values) != 4:
                report.skips.append(
                    Skip(table.region_id, group.parent, kind, "needs exactly 4 children")
                )
                continue
            if kind is FindingKind.PROB_INVARIANT_FREE and len(child_values) != 3:
                report.skips.append(
                    Skip(table.region_id, group.parent, kind, "needs exactly 3 children")
                )
                continue
            rounded = child_values if requires_invariant else (parent_value, *child_values)
            low = [v for v in rounded if v < VALUE_FLOOR]
            if low:
                report.skips.append(
                    Skip(
                        table.region_id,
                        group.parent,
                        kind,
                        f"floor rule: published value {min(low)} < {VALUE_FLOOR}",
                    )
                )
                continue
            scanner = _SCANNERS[kind]
            finding = scanner(
                parent_value,
                child_values,
                region_id=table.region_id,
                parent_id=group.parent,
                child_ids=group.children,
            )
            if finding is not None:
                if verify:
                    verify_finding(finding, parent_value, child_values)
                report.findings.append(finding)
    return report


_SCANNERS = {
    FindingKind.EXACT_INVARIANT: scan_exact_invariant,
    FindingKind.EXACT_INVARIANT_FREE: scan_exact_invariant_free,
    FindingKind.PROB_INVARIANT: scan_prob_invariant,
    FindingKind.PROB_INVARIANT_FREE: scan_prob_invariant_free,
}


def scan_region(
    table: RegionTable,
    schema: HierarchySchema,
    kinds=None,
    verify: bool = False,
) -> list[Finding]:
    return scan_region_report(table, schema, kinds=kinds, verify=verify).findings


def scan_tables(
    tables,
    schema: HierarchySchema,
    kinds=None,
    verify: bool = False,
) -> ScanReport:
    """Scan many regions, merging results in input region order."""
    merged = ScanReport()
    for table in tables:
        report = scan_region_report(table, schema, kinds=kinds, verify=verify)
        merged.findings.extend(report.findings)
        merged.skips.extend(report.skips)
    return merged


def verify_finding(finding: Finding, parent_value: int, child_values) -> None:
    """Cross-check one finding against the exhaustive enumerator.

    The enumerated posterior must agree exactly with the scanner's closed
    form, and exact kinds must correspond to a single feasible assignment.
    Raises :class:`VerificationError` on any mismatch; that means a bug, not
    bad input.
    """
    children = tuple(
        ChildSpec(attr, p) for attr, p in zip(finding.children, child_values)
    )
    if finding.kind in INVARIANT_KINDS:
        instance = GroupInstance(children=children, invariant=parent_value)
    else:
        instance = GroupInstance(
            children=children,
            parent_id=finding.parent,
            parent_published=parent_value,
        )
    space = enumerate_solutions(instance, exact=True)
    if finding.kind in EXACT_KINDS and len(space.solutions) != 1:
        raise VerificationError(
            f"{finding.kind.value} on {finding.region_id!r}/{finding.parent!r}: "
            f"enumerator found {len(space.solutions)} solutions, expected 1"
        )
    for attr_id, dist in finding.per_attribute.items():
        enumerated = space.marginals.get(attr_id)
        if enumerated != dist:
            raise VerificationError(
                f"{finding.kind.value} on {finding.region_id!r}/{finding.parent!r}: "
                f"marginal mismatch for {attr_id!r}: scanner {dict(dist)}, "
                f"enumerator {enumerated}"
            )


def _prob_str(p) -> str:
    """Decimal string with 15 significant digits."""
    return format(float(p), ".15g")


def findings_to_json(findings) -> list[dict]:
    """JSON-ready findings; probabilities as decimal strings."""
    out = []
    for f in findings:
        out.append(
            {
                "region_id": f.region_id,
                "parent": f.parent,
                "children": list(f.children),
                "kind": f.kind.value,
                "direction": f.direction,
                "confidence": _prob_str(f.confidence),
                "distributions": {
                    attr: [
                        {"value": value, "prob": _prob_str(prob)}
                        for value, prob in sorted(dist.items())
                    ]
                    for attr, dist in f.per_attribute.items()
                },
            }
        )
    return out
