"""Exhaustive likelihood-weighted enumeration of the true-value assignments
consistent with a published partition group.

Every rounded attribute is confined to the nine integers that can publish as
its observed multiple of 5. A depth-first walk with running-sum interval
pruning visits exactly the assignments that satisfy the partition constraints
and weights each one by the probability of the observed rounding, giving the
posterior over ground truths. Groups may nest: a child can own a sub-group
whose children must sum to that child's true value.

Weights are either exact rationals (``exact=True``, used by test oracles) or
log-space doubles exponentiated at normalisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .mechanisms import rround_observation_prob, true_value_bounds

DEFAULT_CAP = 10_000_000


class CapExceeded(RuntimeError):
    """Instance too large to enumerate; no partial answer is produced."""

    def __init__(self, bound: int, cap: int):
        self.bound = bound
        self.cap = cap
        super().__init__(
            f"raw assignment bound {bound} exceeds enumeration cap {cap}"
        )


@dataclass(frozen=True)
class ChildSpec:
    """One rounded child attribute, optionally partitioned by a sub-group."""

    id: str
    published: int
    sub: "GroupInstance | None" = None

    def __post_init__(self):
        if self.published % 5 != 0 or self.published < 0:
            raise ValueError(
                f"child {self.id!r}: published value {self.published} is not a "
                "non-negative multiple of 5"
            )
        if self.sub is not None:
            if (
                self.sub.invariant is not None
                or self.sub.parent_published is not None
            ):
                raise ValueError(
                    f"child {self.id!r}: a nested sub-group takes its sum target "
                    "from the owning child and cannot carry its own invariant or "
                    "published parent"
                )


@dataclass(frozen=True)
class GroupInstance:
    """A partition group to enumerate.

    Exactly one of three shapes: an exact ``invariant`` sum target, a rounded
    parent (``parent_id`` + ``parent_published``) whose own true value ranges
    over its bounds, or a free family with no sum constraint at all.
    """

    children: tuple[ChildSpec, ...]
    invariant: int | None = None
    parent_id: str | None = None
    parent_published: int | None = None

    def __post_init__(self):
        if not self.children:
            raise ValueError("instance needs at least one child")
        if self.invariant is not None and self.parent_published is not None:
            raise ValueError("give an invariant or a published parent, not both")
        if (self.parent_published is None) != (self.parent_id is None):
            raise ValueError("parent_id and parent_published go together")
        if self.parent_published is not None and (
            self.parent_published % 5 != 0 or self.parent_published < 0
        ):
            raise ValueError(
                f"published parent {self.parent_published} is not a "
                "non-negative multiple of 5"
            )
        if self.invariant is not None and self.invariant < 0:
            raise ValueError(f"invariant must be non-negative, got {self.invariant}")

    def attribute_order(self) -> tuple[str, ...]:
        """Canonical depth-first attribute order (parent first, if rounded)."""
        order: list[str] = []
        if self.parent_id is not None:
            order.append(self.parent_id)
        for child in self.children:
            order.append(child.id)
            if child.sub is not None:
                order.extend(child.sub.attribute_order())
        seen = set()
        for attr_id in order:
            if attr_id in seen:
                raise ValueError(f"duplicate attribute id {attr_id!r} in instance")
            seen.add(attr_id)
        return tuple(order)

    def raw_bound(self) -> int:
        """Product of per-attribute interval widths before any pruning."""
        bound = 1
        if self.parent_published is not None:
            lo, hi = true_value_bounds(self.parent_published)
            bound *= hi - lo + 1
        for child in self.children:
            lo, hi = true_value_bounds(child.published)
            bound *= hi - lo + 1
            if child.sub is not None:
                bound *= child.sub.raw_bound()
        return bound


@dataclass
class SolutionSpace:
    """All feasible assignments with normalised weights and marginals."""

    attribute_order: tuple[str, ...]
    solutions: list[tuple[tuple[int, ...], Fraction | float]]
    normalized: bool
    marginals: dict[str, dict[int, Fraction | float]] = field(default_factory=dict)

    def assignments(self):
        """Iterate solutions as (dict of id -> value, probability)."""
        for values, prob in self.solutions:
            yield dict(zip(self.attribute_order, values)), prob


def _value_weights(published: int, exact: bool):
    """(value, weight) pairs for one rounded attribute; log weights if float."""
    lo, hi = true_value_bounds(published)
    out = []
    for v in range(lo, hi + 1):
        p = rround_observation_prob(v, published)
        if p == 0:
            continue
        out.append((v, p if exact else math.log(float(p))))
    return out


def _child_blocks(child: ChildSpec, exact: bool):
    """Per-value option blocks for a child: value -> [(weight, sub_values)]."""
    blocks = []
    for v, w in _value_weights(child.published, exact):
        if child.sub is None:
            blocks.append((v, [(w, ())]))
            continue
        sub_solutions = _enumerate_children(child.sub.children, v, exact)
        if not sub_solutions:
            continue
        if exact:
            blocks.append((v, [(w * sw, sv) for sv, sw in sub_solutions]))
        else:
            blocks.append((v, [(w + sw, sv) for sv, sw in sub_solutions]))
    return blocks


def _enumerate_children(
    children: tuple[ChildSpec, ...], target: int | None, exact: bool
) -> list[tuple[tuple[int, ...], Fraction | float]]:
    """DFS over child assignments; ``target`` constrains the value sum."""
    blocks = [_child_blocks(c, exact) for c in children]
    if any(not b for b in blocks):
        return []
    n = len(blocks)
    min_suffix = [0] * (n + 1)
    max_suffix = [0] * (n + 1)
    for i in range(n - 1, -1, -1):
        values = [v for v, _ in blocks[i]]
        min_suffix[i] = min_suffix[i + 1] + min(values)
        max_suffix[i] = max_suffix[i + 1] + max(values)

    solutions: list[tuple[tuple[int, ...], Fraction | float]] = []
    identity = Fraction(1) if exact else 0.0

    def dfs(i: int, remaining: int | None, values: tuple, weight):
        if i == n:
            if remaining is None or remaining == 0:
                solutions.append((values, weight))
            return
        for v, options in blocks[i]:
            if remaining is not None:
                rem = remaining - v
                if rem < min_suffix[i + 1] or rem > max_suffix[i + 1]:
                    continue
            else:
                rem = None
            for w, sub_values in options:
                dfs(
                    i + 1,
                    rem,
                    values + (v,) + sub_values,
                    weight * w if exact else weight + w,
                )

    dfs(0, target, (), identity)
    return solutions


def _offset_bounds(published: int) -> tuple[int, int]:
    lo, hi = true_value_bounds(published)
    return lo - published, hi - published


@lru_cache(maxsize=16384)
def _solve_flat_offsets(
    child_bounds: tuple[tuple[int, int], ...],
    parent_bounds: tuple[int, int] | None,
    gap: int | None,
    exact: bool,
):
    """Offset-space solve shared by every flat instance of the same shape.

    The published-given-true probability depends only on the offset
    ``published - true``, so a flat instance is fully determined by its
    offset bounds plus the sum gap between the published children and their
    target. Solving once per shape and shifting back makes enumerating many
    random groups cheap. Offsets are realised on a representative published
    value of 20, which exercises the mechanism's actual probabilities.
    """
    rep = 20
    children = tuple(
        ChildSpec(id=f"o{i}", published=rep) for i in range(len(child_bounds))
    )
    blocks = []
    for (lo, hi), child in zip(child_bounds, children):
        pairs = [
            (v - rep, w)
            for v, w in _value_weights(child.published, exact)
            if lo <= v - rep <= hi
        ]
        blocks.append(pairs)
    if parent_bounds is None:
        target = None if gap is None else gap
        raw = _offset_dfs(blocks, target, exact)
    else:
        plo, phi = parent_bounds
        parent_pairs = [
            (v - rep, w)
            for v, w in _value_weights(rep, exact)
            if plo <= v - rep <= phi
        ]
        raw = []
        for po, pw in parent_pairs:
            for offsets, w in _offset_dfs(blocks, po - gap, exact):
                raw.append(((po,) + offsets, pw * w if exact else pw + w))
    solutions = _normalize(raw, exact)
    n_attrs = len(child_bounds) + (0 if parent_bounds is None else 1)
    offset_marginals: tuple[dict, ...] = tuple({} for _ in range(n_attrs))
    for offsets, prob in solutions:
        for bucket, o in zip(offset_marginals, offsets):
            bucket[o] = bucket.get(o, 0) + prob
    return solutions, offset_marginals


def _offset_dfs(blocks, target: int | None, exact: bool):
    """Plain DFS over per-child (offset, weight) pairs with sum pruning."""
    n = len(blocks)
    min_suffix = [0] * (n + 1)
    max_suffix = [0] * (n + 1)
    for i in range(n - 1, -1, -1):
        offs = [o for o, _ in blocks[i]]
        min_suffix[i] = min_suffix[i + 1] + min(offs)
        max_suffix[i] = max_suffix[i + 1] + max(offs)
    out = []

    def dfs(i, remaining, offsets, weight):
        if i == n:
            if remaining is None or remaining == 0:
                out.append((offsets, weight))
            return
        for o, w in blocks[i]:
            if remaining is not None:
                rem = remaining - o
                if rem < min_suffix[i + 1] or rem > max_suffix[i + 1]:
                    continue
            else:
                rem = None
            dfs(i + 1, rem, offsets + (o,), weight * w if exact else weight + w)

    dfs(0, target, (), Fraction(1) if exact else 0.0)
    return out


def _solve_flat(instance: GroupInstance, exact: bool):
    """Solve a flat (non-nested) instance via the shared offset cache."""
    child_pubs = tuple(c.published for c in instance.children)
    child_bounds = tuple(_offset_bounds(p) for p in child_pubs)
    if instance.invariant is not None:
        parent_bounds = None
        gap = instance.invariant - sum(child_pubs)
    elif instance.parent_published is not None:
        parent_bounds = _offset_bounds(instance.parent_published)
        gap = sum(child_pubs) - instance.parent_published
    else:
        parent_bounds = None
        gap = None
    offset_solutions, offset_marginals = _solve_flat_offsets(
        child_bounds, parent_bounds, gap, exact
    )
    if instance.parent_published is not None:
        bases = (instance.parent_published,) + child_pubs
    else:
        bases = child_pubs
    solutions = [
        (tuple(b + o for b, o in zip(bases, offsets)), w)
        for offsets, w in offset_solutions
    ]
    attr_marginals = {
        attr_id: {base + o: p for o, p in sorted(bucket.items())}
        for attr_id, base, bucket in zip(
            instance.attribute_order(), bases, offset_marginals
        )
    }
    return solutions, attr_marginals


def enumerate_solutions(
    instance: GroupInstance, exact: bool = False, cap: int = DEFAULT_CAP
) -> SolutionSpace:
    """Enumerate every feasible assignment for the instance, normalised.

    Raises :class:`CapExceeded` when the raw interval product is beyond
    ``cap``; no partial result is returned in that case.
    """
    order = instance.attribute_order()
    bound = instance.raw_bound()
    if bound > cap:
        raise CapExceeded(bound, cap)

    if all(c.sub is None for c in instance.children):
        solutions, attr_marginals = _solve_flat(instance, exact)
        space = SolutionSpace(
            attribute_order=order, solutions=solutions, normalized=True
        )
        space.marginals = attr_marginals
        return space

    raw: list[tuple[tuple[int, ...], Fraction | float]] = []
    if instance.invariant is not None:
        raw = _enumerate_children(instance.children, instance.invariant, exact)
    elif instance.parent_published is not None:
        for pv, pw in _value_weights(instance.parent_published, exact):
            for values, w in _enumerate_children(instance.children, pv, exact):
                raw.append(((pv,) + values, pw * w if exact else pw + w))
    else:
        raw = _enumerate_children(instance.children, None, exact)
    solutions = _normalize(raw, exact)
    space = SolutionSpace(
        attribute_order=order, solutions=solutions, normalized=True
    )
    space.marginals = marginals(space)
    return space


def _normalize(raw, exact: bool):
    if not raw:
        return []
    if exact:
        total = sum(w for _, w in raw)
        return [(values, w / total) for values, w in raw]
    peak = max(w for _, w in raw)
    scaled = [(values, math.exp(w - peak)) for values, w in raw]
    total = sum(w for _, w in scaled)
    return [(values, w / total) for values, w in scaled]


def marginals(
    space: SolutionSpace,
) -> dict[str, dict[int, Fraction | float]]:
    """Per-attribute value distributions aggregated from solution weights."""
    if not space.normalized:
        raise ValueError("solution space must be normalised first")
    acc: dict[str, dict[int, Fraction | float]] = {
        attr_id: {} for attr_id in space.attribute_order
    }
    for values, prob in space.solutions:
        for attr_id, v in zip(space.attribute_order, values):
            bucket = acc[attr_id]
            bucket[v] = bucket.get(v, 0) + prob
    return {
        attr_id: dict(sorted(bucket.items())) for attr_id, bucket in acc.items()
    }


def top_k(space: SolutionSpace, k: int) -> list[tuple[dict[str, int], Fraction | float]]:
    """The k most probable assignments; ties broken lexicographically."""
    if k < 1:
        raise ValueError("k must be positive")
    if not space.normalized:
        raise ValueError("solution space must be normalised first")
    ranked = sorted(space.solutions, key=lambda s: (-s[1], s[0]))
    return [
        (dict(zip(space.attribute_order, values)), prob)
        for values, prob in ranked[:k]
    ]


def credible_interval(
    marginal: dict[int, Fraction | float], mass: Fraction | float
) -> tuple[list[int], Fraction | float]:
    """Smallest value set reaching ``mass``, greedy by probability.

    Ties go to the smaller value. Returns the selected values in ascending
    order together with the mass actually achieved.
    """
    total = sum(marginal.values())
    if abs(float(total) - 1.0) > 1e-9:
        raise ValueError(f"marginal sums to {float(total)}, expected 1")
    picked: list[int] = []
    achieved: Fraction | float = 0
    for value, prob in sorted(marginal.items(), key=lambda kv: (-kv[1], kv[0])):
        if achieved >= mass:
            break
        picked.append(value)
        achieved = achieved + prob
    return sorted(picked), achieved


def enumerate_brute_force(
    instance: GroupInstance, exact: bool = False
) -> SolutionSpace:
    """Independent oracle: full Cartesian product, then constraint filtering.

    Shares nothing with the pruned DFS except the rounding probabilities
    themselves. Kept for cross-validation; cost is the full interval product,
    so keep instances small.
    """
    order = instance.attribute_order()
    index = {attr_id: i for i, attr_id in enumerate(order)}

    ranges: list[range] = [None] * len(order)
    constraints: list[tuple[int | None, int | None, list[int]]] = []
    # each constraint: (constant_target, target_attr_index, member_indices)

    def walk(node: GroupInstance, owner_idx: int | None):
        member_idx = []
        for child in node.children:
            i = index[child.id]
            lo, hi = true_value_bounds(child.published)
            ranges[i] = range(lo, hi + 1)
            member_idx.append(i)
            if child.sub is not None:
                walk(child.sub, i)
        if node.invariant is not None:
            constraints.append((node.invariant, None, member_idx))
        elif node.parent_published is not None:
            pi = index[node.parent_id]
            lo, hi = true_value_bounds(node.parent_published)
            ranges[pi] = range(lo, hi + 1)
            constraints.append((None, pi, member_idx))
        elif owner_idx is not None:
            constraints.append((None, owner_idx, member_idx))

    walk(instance, None)

    grids = np.meshgrid(*[np.array(r, dtype=np.int64) for r in ranges], indexing="ij")
    rows = np.stack([g.ravel() for g in grids], axis=1)
    mask = np.ones(len(rows), dtype=bool)
    for const, target_idx, members in constraints:
        sums = rows[:, members].sum(axis=1)
        target = const if const is not None else rows[:, target_idx]
        mask &= sums == target
    rows = rows[mask]

    published_by_idx = {}
    if instance.parent_published is not None:
        published_by_idx[index[instance.parent_id]] = instance.parent_published

    def collect_published(node: GroupInstance):
        for child in node.children:
            published_by_idx[index[child.id]] = child.published
            if child.sub is not None:
                collect_published(child.sub)

    collect_published(instance)

    raw = []
    for row in rows:
        values = tuple(int(v) for v in row)
        weight = Fraction(1)
        for i, v in enumerate(values):
            weight *= rround_observation_prob(v, published_by_idx[i])
        if weight == 0:
            continue
        raw.append((values, weight if exact else math.log(float(weight))))

    solutions = _normalize(raw, exact)
    space = SolutionSpace(
        attribute_order=order, solutions=solutions, normalized=True
    )
    space.marginals = marginals(space)
    return space


def instance_from_json(doc: dict) -> GroupInstance:
    """Build a GroupInstance from its JSON form.

    Shape: ``{"invariant": 48, "children": [{"id", "published", "sub": {...}},
    ...]}`` or ``{"parent": {"id", "published"}, "children": [...]}`` or just
    children for a free family.
    """
    if not isinstance(doc, dict):
        raise ValueError("instance document must be an object")

    def build(node: dict, nested: bool) -> GroupInstance:
        children = []
        for entry in node.get("children", []):
            sub = entry.get("sub")
            children.append(
                ChildSpec(
                    id=str(entry["id"]),
                    published=int(entry["published"]),
                    sub=build(sub, nested=True) if sub else None,
                )
            )
        invariant = node.get("invariant")
        parent = node.get("parent")
        if nested and (invariant is not None or parent is not None):
            raise ValueError("nested sub-groups cannot carry invariant or parent")
        return GroupInstance(
            children=tuple(children),
            invariant=int(invariant) if invariant is not None else None,
            parent_id=str(parent["id"]) if parent else None,
            parent_published=int(parent["published"]) if parent else None,
        )

    return build(doc, nested=False)


def instance_to_json(instance: GroupInstance) -> dict:
    def dump(node: GroupInstance, nested: bool) -> dict:
        doc: dict = {}
        if not nested:
            if node.invariant is not None:
                doc["invariant"] = node.invariant
            if node.parent_published is not None:
                doc["parent"] = {
                    "id": node.parent_id,
                    "published": node.parent_published,
                }
        doc["children"] = []
        for child in node.children:
            entry: dict = {"id": child.id, "published": child.published}
            if child.sub is not None:
                entry["sub"] = dump(child.sub, nested=True)
            doc["children"].append(entry)
        return doc

    return dump(instance, nested=False)


def space_to_json(space: SolutionSpace) -> dict:
    """JSON form of a solution space: solutions plus per-attribute marginals."""
    return {
        "attributes": list(space.attribute_order),
        "solution_count": len(space.solutions),
        "solutions": [
            {"assignment": dict(zip(space.attribute_order, values)), "prob": float(p)}
            for values, p in space.solutions
        ],
        "marginals": {
            attr_id: [
                {"value": value, "prob": float(p)} for value, p in marginal.items()
            ]
            for attr_id, marginal in space.marginals.items()
        },
    }


def render_histograms(space: SolutionSpace, width: int = 40) -> str:
    """Plain-text bar charts of the per-attribute marginals."""
    lines = []
    for attr_id in space.attribute_order:
        marginal = space.marginals.get(attr_id, {})
        lines.append(attr_id)
        peak = max((float(p) for p in marginal.values()), default=0.0)
        for value, prob in marginal.items():
            bar = "#" * max(1, round(width * float(prob) / peak)) if peak else ""
            lines.append(f"  {value:>8} |{bar} {float(prob):.4f}")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"
