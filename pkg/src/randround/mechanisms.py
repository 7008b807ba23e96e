"""Count-noising mechanisms: mod-5 random rounding and discrete Laplace.

Random rounding publishes an adjacent multiple of 5, picking the upper
neighbour with probability (x mod 5)/5, so the published value is never more
than 4 away from the truth. The discrete Laplace mechanism instead adds
unbounded two-sided geometric noise. All sampling goes through an explicit
numpy Generator so runs are reproducible from a seed.

Rounding probabilities are exact fifths and are carried as Fractions;
floating point only enters where a density is genuinely irrational (the
discrete Laplace).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from fractions import Fraction

import numpy as np

from .model import HierarchySchema, RegionTable, TableError

# A mod-5 rounded value is never further than this from the truth.
RROUND_MAX_OFFSET = 4

# Single deterministic generator family used across the whole artifact.
RNG_ALGORITHM = "pcg64"


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; identical seeds give identical streams."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class DiscreteLaplaceParams:
    """Scale ``t`` of the discrete Laplace noise, optionally clamped at 0."""

    t: float = 1.45
    clamp_at_zero: bool = False

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError(f"t must be positive, got {self.t}")


@dataclass(frozen=True)
class MechanismSpec:
    """Which mechanism to publish with, plus its parameters and seed."""

    mechanism: str  # "rround" or "dlap"
    t: float = 1.45
    clamp_at_zero: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.mechanism not in ("rround", "dlap"):
            raise ValueError(f"unknown mechanism {self.mechanism!r}")

    def dlap_params(self) -> DiscreteLaplaceParams:
        return DiscreteLaplaceParams(t=self.t, clamp_at_zero=self.clamp_at_zero)


def rround_pmf(x: int) -> dict[int, Fraction]:
    """Outcome distribution of randomly rounding the count ``x``.

    At most two outcomes: the multiples of 5 bracketing x. Exact multiples
    of 5 are kept with probability 1.
    """
    if x < 0:
        raise ValueError(f"count must be non-negative, got {x}")
    r = x % 5
    down = x - r
    if r == 0:
        return {down: Fraction(1)}
    return {down: Fraction(5 - r, 5), down + 5: Fraction(r, 5)}


def rround_sample(x: int, rng: np.random.Generator) -> int:
    """Draw one randomly rounded value for ``x``."""
    if x < 0:
        raise ValueError(f"count must be non-negative, got {x}")
    r = x % 5
    down = x - r
    if r == 0:
        return down
    return down + 5 if rng.random() < r / 5.0 else down


def rround_sample_array(xs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorised :func:`rround_sample`; one independent draw per entry."""
    xs = np.asarray(xs, dtype=np.int64)
    if np.any(xs < 0):
        raise ValueError("counts must be non-negative")
    r = xs % 5
    up = rng.random(xs.shape) < r / 5.0
    return xs - r + 5 * up.astype(np.int64)


def rround_observation_prob(true_value: int, observed: int) -> Fraction:
    """Probability that random rounding publishes ``observed`` for the truth."""
    if observed % 5 != 0:
        raise ValueError(f"observed value must be a multiple of 5, got {observed}")
    return rround_pmf(true_value).get(observed, Fraction(0))


def true_value_bounds(observed: int) -> tuple[int, int]:
    """Inclusive range of truths that can publish as ``observed``."""
    if observed % 5 != 0:
        raise ValueError(f"observed value must be a multiple of 5, got {observed}")
    return max(0, observed - RROUND_MAX_OFFSET), observed + RROUND_MAX_OFFSET


def dlap_pmf(x: int, params: DiscreteLaplaceParams) -> float:
    """Discrete Laplace mass at noise offset ``x``: C(t) * exp(-|x|/t)."""
    c = math.expm1(1.0 / params.t) / (math.exp(1.0 / params.t) + 1.0)
    return c * math.exp(-abs(x) / params.t)


def dlap_sample(x: int, params: DiscreteLaplaceParams, rng: np.random.Generator) -> int:
    """Add one discrete Laplace draw to ``x``.

    Sampled exactly as the difference of two geometric variables with success
    probability 1 - exp(-1/t), which realises the stated mass function
    without any rejection loop.
    """
    if x < 0:
        raise ValueError(f"count must be non-negative, got {x}")
    p = -math.expm1(-1.0 / params.t)
    noise = int(rng.geometric(p)) - int(rng.geometric(p))
    out = x + noise
    return max(0, out) if params.clamp_at_zero else out


def dlap_sample_array(
    xs: np.ndarray, params: DiscreteLaplaceParams, rng: np.random.Generator
) -> np.ndarray:
    """Vectorised :func:`dlap_sample`."""
    xs = np.asarray(xs, dtype=np.int64)
    if np.any(xs < 0):
        raise ValueError("counts must be non-negative")
    p = -math.expm1(-1.0 / params.t)
    noise = rng.geometric(p, xs.shape).astype(np.int64) - rng.geometric(
        p, xs.shape
    ).astype(np.int64)
    out = xs + noise
    return np.maximum(out, 0) if params.clamp_at_zero else out


def apply_mechanism(
    table: RegionTable,
    schema: HierarchySchema,
    spec: MechanismSpec,
    rng: np.random.Generator | None = None,
) -> RegionTable:
    """Publish a true table: invariants pass through, the rest is noised.

    Every non-invariant attribute gets its own independent draw. Attributes
    are visited in sorted id order so a given seed always yields the same
    published table regardless of how the input dict was built. Tables whose
    declared partitions do not sum exactly are rejected.
    """
    # Incomplete groups are tolerated (sparse extracts); present ones must sum.
    mismatches = []
    for group in schema.groups:
        if not group.exclusive_exhaustive:
            continue
        members = (group.parent, *group.children)
        if all(m in table.values for m in members):
            child_sum = sum(table.values[c] for c in group.children)
            if child_sum != table.values[group.parent]:
                mismatches.append(
                    f"group {group.parent}: sum mismatch "
                    f"{child_sum} != {table.values[group.parent]}"
                )
    if mismatches:
        raise TableError(f"region {table.region_id!r}: " + "; ".join(mismatches))
    if rng is None:
        rng = make_rng(spec.seed)
    published: dict[str, int] = {}
    for attr_id in sorted(table.values):
        value = table.values[attr_id]
        if schema.is_invariant(attr_id):
            published[attr_id] = value
            continue
        if value < 0:
            raise TableError(
                f"region {table.region_id!r}: negative count {attr_id}={value}"
            )
        if spec.mechanism == "rround":
            published[attr_id] = rround_sample(value, rng)
        else:
            published[attr_id] = dlap_sample(value, spec.dlap_params(), rng)
    out = {attr_id: published[attr_id] for attr_id in table.values}
    return RegionTable(
        region_id=table.region_id, values=out, suppressed=table.suppressed
    )
