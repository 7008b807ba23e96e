"""Utility comparison: random rounding versus discrete Laplace noise.

Random rounding's expected absolute error is enumerated over the five mod-5
residue classes (residue-uniform inputs, as independent counts give in
aggregate). The discrete Laplace expectation has no finite enumeration, so it
is reported two ways: a truncated series over a generous window, and the
geometric-series closed form as a cross-check. At the default scale t=1.45
the Laplace noise is both tighter on average than rounding and keeps more
than 95% of its mass within the rounding radius of 4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .mechanisms import (
    RROUND_MAX_OFFSET,
    DiscreteLaplaceParams,
    dlap_pmf,
    dlap_sample_array,
    rround_pmf,
)


@dataclass
class UtilityReport:
    mechanism: str
    expected_abs_distance: float
    mass_within: dict[int, float]
    method: str
    # Untruncated geometric-series value; only the Laplace report carries one.
    closed_form: float | None = None

    def to_json(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "expected_abs_distance": self.expected_abs_distance,
            "closed_form": self.closed_form,
            "mass_within": {str(r): p for r, p in self.mass_within.items()},
            "method": self.method,
        }


def rround_residue_rows() -> list[dict]:
    """Per-residue expected distance rows under residue-uniform inputs."""
    rows = []
    for residue in range(5):
        x = 10 + residue  # any representative of the class
        pmf = rround_pmf(x)
        distance = sum(p * abs(out - x) for out, p in pmf.items())
        rows.append(
            {
                "residue": residue,
                "sample_prob": Fraction(1, 5),
                "expected_distance": distance,
                "weighted": distance / 5,
            }
        )
    return rows


def rround_expected_distance() -> Fraction:
    """Mean |published - true| of random rounding, enumerated exactly."""
    return sum(row["weighted"] for row in rround_residue_rows())


def rround_mass_within(radius: int) -> Fraction:
    """P(|published - true| <= radius) under residue-uniform inputs."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    total = Fraction(0)
    for residue in range(5):
        x = 10 + residue
        for out, p in rround_pmf(x).items():
            if abs(out - x) <= radius:
                total += p
    return total / 5


def _dlap_q_c(params: DiscreteLaplaceParams) -> tuple[float, float]:
    q = math.exp(-1.0 / params.t)
    c = (1.0 - q) / (1.0 + q)
    return q, c


def dlap_expected_distance_closed_form(params: DiscreteLaplaceParams) -> float:
    """E|noise| = 2 C q / (1-q)^2 with q = exp(-1/t)."""
    q, c = _dlap_q_c(params)
    return 2.0 * c * q / (1.0 - q) ** 2


def dlap_expected_distance(
    params: DiscreteLaplaceParams, truncation_radius: int = 10
) -> tuple[float, float]:
    """(truncated series over |x| <= radius, closed form) for E|noise|."""
    if truncation_radius < 10:
        raise ValueError("truncation radius below 10 is too coarse to report")
    truncated = sum(
        abs(x) * dlap_pmf(x, params)
        for x in range(-truncation_radius, truncation_radius + 1)
    )
    return truncated, dlap_expected_distance_closed_form(params)


def dlap_truncation_tail_bound(
    params: DiscreteLaplaceParams, truncation_radius: int
) -> float:
    """Exact mass of |x|*pmf beyond the window: 2 C sum_{k>R} k q^k."""
    q, c = _dlap_q_c(params)
    r = truncation_radius
    return 2.0 * c * q ** (r + 1) * ((r + 1) - r * q) / (1.0 - q) ** 2


def dlap_mass_within(params: DiscreteLaplaceParams, radius: int) -> float:
    """P(|noise| <= radius), closed form."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    q, c = _dlap_q_c(params)
    return 1.0 - 2.0 * c * q ** (radius + 1) / (1.0 - q)


def dlap_empirical_distance(
    x: int,
    params: DiscreteLaplaceParams,
    trials: int,
    rng: np.random.Generator,
) -> float:
    """Sampled mean |published - true| at the count ``x``.

    This is the only route for the clamped-at-zero variant, whose asymmetry
    breaks the closed form.
    """
    xs = np.full(trials, x, dtype=np.int64)
    out = dlap_sample_array(xs, params, rng)
    return float(np.abs(out - x).mean())


@dataclass
class ComparisonReport:
    rround: UtilityReport
    dlap: UtilityReport
    dlap_beats_rround: bool
    dlap_mass_within_4_ok: bool

    def to_json(self) -> dict:
        return {
            "rround": self.rround.to_json(),
            "dlap": self.dlap.to_json(),
            "dlap_beats_rround": self.dlap_beats_rround,
            "dlap_mass_within_4_ok": self.dlap_mass_within_4_ok,
        }


def compare(
    params: DiscreteLaplaceParams,
    radii: range = range(1, 11),
    truncation_radius: int = 10,
) -> ComparisonReport:
    """Side-by-side utility reports plus the two headline flags.

    The beats-rounding flag uses the closed-form Laplace expectation, the
    honest untruncated value.
    """
    rround_report = UtilityReport(
        mechanism="rround",
        expected_abs_distance=float(rround_expected_distance()),
        mass_within={r: float(rround_mass_within(r)) for r in radii},
        method="exact enumeration",
    )
    truncated, closed = dlap_expected_distance(params, truncation_radius)
    dlap_report = UtilityReport(
        mechanism=f"dlap(t={params.t})",
        expected_abs_distance=truncated,
        mass_within={r: dlap_mass_within(params, r) for r in radii},
        method=f"truncated series (|x| <= {truncation_radius})",
        closed_form=closed,
    )
    return ComparisonReport(
        rround=rround_report,
        dlap=dlap_report,
        dlap_beats_rround=closed < float(rround_expected_distance()),
        dlap_mass_within_4_ok=dlap_mass_within(params, RROUND_MAX_OFFSET) >= 0.95,
    )


def render_signed_pmfs(
    params: DiscreteLaplaceParams, radius: int = 10, width: int = 40
) -> str:
    """Text rendering of the two signed-error distributions."""
    rround_signed: dict[int, Fraction] = {}
    for residue in range(5):
        x = 10 + residue
        for out, p in rround_pmf(x).items():
            d = out - x
            rround_signed[d] = rround_signed.get(d, Fraction(0)) + p / 5
    lines = ["signed error, random rounding"]
    peak = max(float(p) for p in rround_signed.values())
    for d in sorted(rround_signed):
        p = float(rround_signed[d])
        lines.append(f"  {d:>4} |{'#' * max(1, round(width * p / peak))} {p:.4f}")
    lines.append("")
    lines.append(f"signed error, discrete Laplace t={params.t}")
    probs = {d: dlap_pmf(d, params) for d in range(-radius, radius + 1)}
    peak = max(probs.values())
    for d in sorted(probs):
        p = probs[d]
        lines.append(f"  {d:>4} |{'#' * max(1, round(width * p / peak))} {p:.4f}")
    return "\n".join(lines) + "\n"
