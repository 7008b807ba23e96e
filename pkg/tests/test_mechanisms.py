import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from randround.mechanisms import (
    DiscreteLaplaceParams,
    MechanismSpec,
    apply_mechanism,
    dlap_pmf,
    dlap_sample,
    dlap_sample_array,
    make_rng,
    rround_observation_prob,
    rround_pmf,
    rround_sample,
    rround_sample_array,
    true_value_bounds,
)
from randround.model import HierarchySchema, PartitionGroup, RegionTable, TableError

# Outcome probabilities for counts 10..20, keyed by published value.
ROUNDING_GRID = {
    10: {10: Fraction(1)},
    11: {10: Fraction(4, 5), 15: Fraction(1, 5)},
    12: {10: Fraction(3, 5), 15: Fraction(2, 5)},
    13: {10: Fraction(2, 5), 15: Fraction(3, 5)},
    14: {10: Fraction(1, 5), 15: Fraction(4, 5)},
    15: {15: Fraction(1)},
    16: {15: Fraction(4, 5), 20: Fraction(1, 5)},
    17: {15: Fraction(3, 5), 20: Fraction(2, 5)},
    18: {15: Fraction(2, 5), 20: Fraction(3, 5)},
    19: {15: Fraction(1, 5), 20: Fraction(4, 5)},
    20: {20: Fraction(1)},
}


class TestRroundPmf:
    def test_grid_rows_exact(self):
        for x, expected in ROUNDING_GRID.items():
            assert rround_pmf(x) == expected

    def test_examples(self):
        assert rround_pmf(13) == {10: Fraction(2, 5), 15: Fraction(3, 5)}
        assert rround_pmf(15) == {15: Fraction(1)}
        assert rround_pmf(17) == {15: Fraction(3, 5), 20: Fraction(2, 5)}

    def test_sums_to_one_everywhere(self):
        for x in range(0, 10001):
            assert sum(rround_pmf(x).values()) == 1

    def test_support_shape(self):
        for x in range(0, 2000):
            pmf = rround_pmf(x)
            assert 1 <= len(pmf) <= 2
            for out in pmf:
                assert out % 5 == 0
                assert abs(out - x) <= 4
            if x % 5 == 0:
                assert pmf == {x: Fraction(1)}

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            rround_pmf(-1)


class TestRroundSampling:
    def test_multiple_of_five_is_fixed(self):
        rng = make_rng(0)
        assert all(rround_sample(20, rng) == 20 for _ in range(100))

    @pytest.mark.parametrize("x", range(11, 20))
    def test_chi_square_against_grid(self, x):
        rng = make_rng(1000 + x)
        draws = rround_sample_array(np.full(100_000, x), rng)
        outcomes = sorted(ROUNDING_GRID[x])
        observed = [int((draws == o).sum()) for o in outcomes]
        expected = [float(ROUNDING_GRID[x][o]) * len(draws) for o in outcomes]
        if len(outcomes) == 1:
            assert observed[0] == len(draws)
            return
        result = stats.chisquare(observed, expected)
        assert result.pvalue > 0.001, (x, observed, expected, result)

    def test_sample_frequencies_11_and_19(self):
        rng = make_rng(7)
        draws = rround_sample_array(np.full(200_000, 11), rng)
        assert abs((draws == 10).mean() - 0.8) < 0.01
        draws = rround_sample_array(np.full(200_000, 19), rng)
        assert abs((draws == 20).mean() - 0.8) < 0.01

    def test_sample_within_bounds(self):
        rng = make_rng(3)
        xs = rng.integers(0, 1000, size=10_000)
        draws = rround_sample_array(xs, rng)
        assert (np.abs(draws - xs) <= 4).all()
        assert (draws % 5 == 0).all()

    def test_scalar_and_array_streams_deterministic(self):
        a = [rround_sample(13, make_rng(5)) for _ in range(3)]
        b = [rround_sample(13, make_rng(5)) for _ in range(3)]
        assert a == b


class TestObservationProb:
    def test_examples(self):
        assert rround_observation_prob(16, 15) == Fraction(4, 5)
        assert rround_observation_prob(16, 20) == Fraction(1, 5)
        assert rround_observation_prob(16, 25) == 0

    def test_observed_must_be_multiple_of_five(self):
        with pytest.raises(ValueError):
            rround_observation_prob(16, 17)

    @given(st.integers(min_value=0, max_value=5000))
    def test_support_iff_adjacent(self, x):
        r = x % 5
        down = x - r
        for observed in range(0, x + 15, 5):
            prob = rround_observation_prob(x, observed)
            in_support = observed == down or (observed == down + 5 and r != 0)
            assert (prob > 0) == in_support


class TestTrueValueBounds:
    def test_examples(self):
        assert true_value_bounds(15) == (11, 19)
        assert true_value_bounds(0) == (0, 4)
        assert true_value_bounds(60) == (56, 64)

    @given(st.integers(min_value=0, max_value=2000))
    def test_bounds_cover_support(self, x):
        for observed in rround_pmf(x):
            lo, hi = true_value_bounds(observed)
            assert lo <= x <= hi


class TestDiscreteLaplace:
    def test_pmf_at_zero(self):
        # closed form (e^{1/t} - 1)/(e^{1/t} + 1) at t = 1.45
        c = (math.exp(1 / 1.45) - 1) / (math.exp(1 / 1.45) + 1)
        assert dlap_pmf(0, DiscreteLaplaceParams(t=1.45)) == pytest.approx(c)
        assert round(c, 4) == 0.3318

    @given(
        st.integers(min_value=-50, max_value=50),
        st.floats(min_value=0.1, max_value=10.0),
    )
    def test_symmetry(self, k, t):
        params = DiscreteLaplaceParams(t=t)
        assert dlap_pmf(k, params) == pytest.approx(dlap_pmf(-k, params))

    def test_normalization(self):
        params = DiscreteLaplaceParams(t=1.45)
        total = sum(dlap_pmf(x, params) for x in range(-200, 201))
        assert abs(total - 1.0) < 1e-9

    def test_mass_within_four(self):
        params = DiscreteLaplaceParams(t=1.45)
        assert sum(dlap_pmf(x, params) for x in range(-4, 5)) >= 0.95

    def test_invalid_scale(self):
        with pytest.raises(ValueError):
            DiscreteLaplaceParams(t=0.0)

    def test_sample_mean_is_centered(self):
        params = DiscreteLaplaceParams(t=1.45)
        rng = make_rng(42)
        out = dlap_sample_array(np.full(1_000_000, 100), params, rng)
        noise = out - 100
        # sigma of the mean from the exact second moment of the noise
        q = math.exp(-1 / 1.45)
        c = (1 - q) / (1 + q)
        second = 2 * c * q * (1 + q) / (1 - q) ** 3
        assert abs(noise.mean()) < 3 * math.sqrt(second / len(noise))

    def test_sample_abs_mean_band(self):
        params = DiscreteLaplaceParams(t=1.45)
        rng = make_rng(43)
        out = dlap_sample_array(np.full(1_000_000, 100), params, rng)
        assert 1.30 <= np.abs(out - 100).mean() <= 1.36

    def test_clamped_at_zero(self):
        params = DiscreteLaplaceParams(t=1.45, clamp_at_zero=True)
        rng = make_rng(44)
        out = dlap_sample_array(np.zeros(50_000, dtype=np.int64), params, rng)
        assert (out >= 0).all()
        assert (out > 0).any()
        assert all(dlap_sample(0, params, rng) >= 0 for _ in range(1000))

    def test_unclamped_can_go_negative(self):
        params = DiscreteLaplaceParams(t=1.45)
        rng = make_rng(45)
        out = dlap_sample_array(np.zeros(10_000, dtype=np.int64), params, rng)
        assert (out < 0).any()

    def test_sample_matches_pmf(self):
        # difference-of-geometrics sampling realises the stated density
        params = DiscreteLaplaceParams(t=1.45)
        rng = make_rng(46)
        out = dlap_sample_array(np.zeros(200_000, dtype=np.int64), params, rng)
        values = list(range(-6, 7))
        observed = [int((out == v).sum()) for v in values]
        expected = [dlap_pmf(v, params) * len(out) for v in values]
        rest = len(out) - sum(observed)
        expected_rest = len(out) - sum(expected)
        result = stats.chisquare(observed + [rest], expected + [expected_rest])
        assert result.pvalue > 0.001


def _toy_schema() -> HierarchySchema:
    return HierarchySchema(
        attributes={"A0": "total", "A1": "a", "A5": "b", "A6": "c"},
        invariants=frozenset({"A0"}),
        groups=(PartitionGroup(parent="A0", children=("A1", "A5", "A6")),),
    )


class TestApplyMechanism:
    def test_invariant_passes_through(self):
        schema = _toy_schema()
        table = RegionTable("r", {"A0": 48, "A1": 16, "A5": 16, "A6": 16})
        published = apply_mechanism(
            table, schema, MechanismSpec(mechanism="rround"), make_rng(1)
        )
        assert published.values["A0"] == 48
        for attr in ("A1", "A5", "A6"):
            assert published.values[attr] in (15, 20)

    def test_multiples_of_five_unchanged(self):
        schema = _toy_schema()
        table = RegionTable("r", {"A0": 60, "A1": 20, "A5": 20, "A6": 20})
        published = apply_mechanism(
            table, schema, MechanismSpec(mechanism="rround"), make_rng(2)
        )
        assert published.values == table.values

    def test_deterministic_given_seed(self):
        schema = _toy_schema()
        table = RegionTable("r", {"A0": 50, "A1": 17, "A5": 19, "A6": 14})
        spec = MechanismSpec(mechanism="rround", seed=9)
        assert (
            apply_mechanism(table, schema, spec).values
            == apply_mechanism(table, schema, spec).values
        )

    def test_dict_order_does_not_matter(self):
        schema = _toy_schema()
        spec = MechanismSpec(mechanism="rround", seed=9)
        forward = RegionTable("r", {"A0": 50, "A1": 17, "A5": 19, "A6": 14})
        backward = RegionTable("r", dict(reversed(list(forward.values.items()))))
        assert (
            apply_mechanism(forward, schema, spec).values
            == apply_mechanism(backward, schema, spec).values
        )

    def test_rejects_partition_mismatch(self):
        schema = _toy_schema()
        table = RegionTable("r", {"A0": 48, "A1": 17, "A5": 16, "A6": 16})
        with pytest.raises(TableError, match="sum mismatch"):
            apply_mechanism(table, schema, MechanismSpec(mechanism="rround"))

    def test_sparse_table_tolerated(self):
        schema = _toy_schema()
        table = RegionTable("r", {"A1": 17, "A5": 16})
        published = apply_mechanism(
            table, schema, MechanismSpec(mechanism="rround"), make_rng(0)
        )
        assert set(published.values) == {"A1", "A5"}

    def test_dlap_mechanism(self):
        schema = _toy_schema()
        table = RegionTable("r", {"A0": 48, "A1": 16, "A5": 16, "A6": 16})
        spec = MechanismSpec(mechanism="dlap", t=1.45, seed=3)
        published = apply_mechanism(table, schema, spec)
        assert published.values["A0"] == 48
        again = apply_mechanism(table, schema, spec)
        assert published.values == again.values
        # with unbounded noise the children wander off the multiples of 5
        outputs = set()
        for seed in range(20):
            out = apply_mechanism(
                table, schema, MechanismSpec(mechanism="dlap", t=1.45, seed=seed)
            )
            outputs.update(out.values[a] for a in ("A1", "A5", "A6"))
        assert any(v % 5 != 0 for v in outputs)

    def test_unknown_mechanism_rejected(self):
        with pytest.raises(ValueError):
            MechanismSpec(mechanism="rounding")


def test_make_rng_streams_are_reproducible():
    a = make_rng(123).random(5)
    b = make_rng(123).random(5)
    assert (a == b).all()
