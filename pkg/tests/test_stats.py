"""Distance-kernel checks and the per-family block analysis."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from gcblocks import (
    BlockSpec,
    DimensionError,
    FeatureMap,
    InvariantError,
    UndefinedCosineError,
    analyze_block,
    avg_pairwise_distance,
    cosine_distance,
    jsd,
    random_params,
)
from gcblocks.stats import DistanceReport

from conftest import random_map

nonzero_vectors = (
    hnp.arrays(
        np.float64,
        st.integers(2, 8),
        elements=st.floats(-100, 100, allow_nan=False, allow_infinity=False),
    )
    .filter(lambda v: np.linalg.norm(v) > 1e-6)
)


def prob_vectors(n):
    return (
        hnp.arrays(np.float64, n, elements=st.floats(0.01, 100))
        .map(lambda v: v / v.sum())
    )


class TestCosineDistance:
    def test_identical_is_exactly_zero(self, rng):
        v = rng.standard_normal(7)
        assert cosine_distance(v, v) == 0.0

    def test_antipodal_is_one(self, rng):
        v = rng.standard_normal(7)
        assert cosine_distance(v, -v) == pytest.approx(1.0, abs=1e-9)

    def test_orthogonal_is_half(self):
        assert cosine_distance(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(
            0.5, abs=1e-12
        )

    def test_zero_vector_rejected(self):
        with pytest.raises(UndefinedCosineError):
            cosine_distance(np.zeros(3), np.ones(3))
        with pytest.raises(UndefinedCosineError):
            cosine_distance(np.ones(3), np.zeros(3))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            cosine_distance(np.ones(3), np.ones(4))

    def test_scale_invariant(self, rng):
        u = rng.standard_normal(5)
        v = rng.standard_normal(5)
        assert cosine_distance(u, v) == pytest.approx(cosine_distance(3.7 * u, 0.2 * v), abs=1e-12)

    @given(nonzero_vectors, nonzero_vectors)
    def test_range_and_symmetry(self, u, v):
        if u.shape != v.shape:
            return
        d = cosine_distance(u, v)
        assert 0.0 <= d <= 1.0
        assert d == cosine_distance(v, u)


class TestJSD:
    def test_equal_distributions(self):
        p = np.array([0.5, 0.5])
        assert jsd(p, p) == 0.0

    def test_disjoint_support_is_ln2(self):
        assert jsd(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(
            math.log(2.0), abs=1e-12
        )

    def test_disjoint_support_longer(self):
        p = np.array([0.25, 0.75, 0.0, 0.0])
        q = np.array([0.0, 0.0, 0.6, 0.4])
        assert jsd(p, q) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_known_value(self):
        # direct evaluation of the formula for (1, 0) vs (0.5, 0.5)
        p = np.array([1.0, 0.0])
        q = np.array([0.5, 0.5])
        expected = 0.5 * (math.log(4.0 / 3.0) + 0.5 * math.log(2.0 / 3.0) + 0.5 * math.log(2.0))
        assert jsd(p, q) == pytest.approx(expected, abs=1e-12)

    def test_non_normalized_rejected(self):
        with pytest.raises(InvariantError):
            jsd(np.array([0.5, 0.6]), np.array([0.5, 0.5]))

    def test_negative_rejected(self):
        with pytest.raises(InvariantError):
            jsd(np.array([1.5, -0.5]), np.array([0.5, 0.5]))

    @given(prob_vectors(6), prob_vectors(6))
    def test_symmetric_and_bounded(self, p, q):
        a = jsd(p, q)
        assert a == jsd(q, p)  # exact under the fixed summation order
        assert 0.0 <= a <= math.log(2.0) + 1e-9


class TestAvgPairwiseDistance:
    def test_identical_vectors(self, rng):
        v = rng.standard_normal(4)
        assert avg_pairwise_distance([v, v, v], "cosine") == 0.0

    def test_two_vectors_at_distance_one(self):
        v = np.array([1.0, 0.0])
        # ordered pairs: (0,0)=0, (0,1)=1, (1,0)=1, (1,1)=0 -> mean 0.5
        assert avg_pairwise_distance([v, -v], "cosine") == pytest.approx(0.5, abs=1e-9)

    def test_single_vector(self):
        assert avg_pairwise_distance([np.array([2.0, 1.0])], "cosine") == 0.0

    def test_empty_rejected(self):
        with pytest.raises(DimensionError):
            avg_pairwise_distance([], "cosine")

    def test_metric_precondition_propagates(self):
        with pytest.raises(InvariantError):
            avg_pairwise_distance([np.array([0.5, 0.6]), np.array([0.5, 0.5])], "jsd")

    def test_jsd_metric(self):
        p = np.array([1.0, 0.0])
        q = np.array([0.0, 1.0])
        assert avg_pairwise_distance([p, q], "jsd") == pytest.approx(math.log(2.0) / 2, abs=1e-12)

    def test_callable_metric(self):
        vs = [np.array([1.0]), np.array([2.0]), np.array([4.0])]
        out = avg_pairwise_distance(vs, lambda a, b: abs(float(a[0] - b[0])))
        assert out == pytest.approx((2 * (1 + 3 + 2)) / 9)

    @given(st.permutations(range(5)))
    def test_permutation_invariant(self, order):
        rng = np.random.default_rng(0)
        vs = [rng.standard_normal(3) for _ in range(5)]
        base = avg_pairwise_distance(vs, "cosine")
        assert avg_pairwise_distance([vs[i] for i in order], "cosine") == base


class TestAnalyzeBlock:
    def test_constant_map_gaussian_all_zero(self):
        v = np.array([0.4, -1.1, 2.0, 0.3])
        x = FeatureMap(np.tile(v[:, None], (1, 6)), height=6, width=1)
        spec = BlockSpec("nl", channels=4, variant="gaussian")
        reports = analyze_block(x, spec, random_params(spec, 0))
        assert {r.family for r in reports} == {"input", "output", "att"}
        for r in reports:
            assert r.value == 0.0

    @pytest.mark.parametrize("kind", ["snl", "snl_factored", "gc"])
    def test_query_independent_blocks_exact_zero(self, kind):
        spec = BlockSpec(kind, channels=8, ratio=2)
        reports = analyze_block(random_map(8, 9, 1), spec, random_params(spec, 2))
        by_cell = {(r.metric, r.family): r for r in reports}
        assert by_cell[("cosine", "output")].value == 0.0
        assert by_cell[("cosine", "att")].value == 0.0
        assert by_cell[("jsd", "att")].value == 0.0
        assert "shared" in by_cell[("cosine", "att")].note

    def test_nl_egaussian_has_jsd_att(self):
        spec = BlockSpec("nl", channels=8, variant="e_gaussian")
        reports = analyze_block(random_map(8, 7, 3), spec, random_params(spec, 4))
        cells = {(r.metric, r.family) for r in reports}
        assert ("jsd", "att") in cells

    @pytest.mark.parametrize("variant", ["dot", "concat"])
    def test_raw_attention_has_no_jsd(self, variant):
        spec = BlockSpec("nl", channels=8, variant=variant)
        reports = analyze_block(random_map(8, 7, 0), spec, random_params(spec, 0))
        cells = {(r.metric, r.family) for r in reports}
        assert ("jsd", "att") not in cells
        assert ("cosine", "att") in cells

    def test_zero_attention_row_is_reported_not_zeroed(self):
        # concat scoring can rectify a whole row away; that surfaces as the
        # explicit undefined-cosine error rather than a silent 0
        spec = BlockSpec("nl", channels=8, variant="concat")
        x = random_map(8, 7, 5)
        with pytest.raises(UndefinedCosineError):
            analyze_block(x, spec, random_params(spec, 6))

    def test_se_has_no_attention_family(self):
        spec = BlockSpec("se", channels=8, ratio=2)
        reports = analyze_block(random_map(8, 7, 7), spec, random_params(spec, 8))
        assert {r.family for r in reports} == {"input", "output"}

    def test_input_family_matches_direct_computation(self):
        x = random_map(5, 6, 9)
        spec = BlockSpec("gc", channels=5, ratio=1)
        reports = analyze_block(x, spec, random_params(spec, 10))
        direct = avg_pairwise_distance([x.data[:, j] for j in range(6)], "cosine")
        value = next(r.value for r in reports if r.family == "input" and r.metric == "cosine")
        assert value == direct

    def test_scale_fusion_output_family_from_z_minus_x(self):
        from gcblocks import se_forward

        x = random_map(6, 5, 11)
        spec = BlockSpec("se", channels=6, ratio=2)
        p = random_params(spec, 12)
        reports = analyze_block(x, spec, p)
        diff = se_forward(x, p).z.data - x.data
        direct = avg_pairwise_distance([diff[:, j] for j in range(5)], "cosine")
        out_val = next(r.value for r in reports if r.family == "output")
        assert out_val == direct
        assert out_val > 0.0  # per-channel gating is not query-independent

    def test_report_invariants(self):
        with pytest.raises(InvariantError):
            DistanceReport("cosine", "input", -0.1, 4, "gc")
        with pytest.raises(InvariantError):
            DistanceReport("cosine", "input", 1.2, 4, "gc")
        with pytest.raises(InvariantError):
            DistanceReport("bogus", "input", 0.1, 4, "gc")
