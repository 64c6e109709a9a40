import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kanforge.exprtree import Leaf, OpKind, parse_expression, tree_stats
from kanforge.rangecert import (
    AffineBox,
    Interval,
    affine_box,
    annotate_ranges,
    apply_affine,
    lip_budget,
    partial_lip,
    range_rule,
    verify_ranges_numerically,
)

from conftest import tree_strategy

U = Interval(0.0, 1.0)


class TestRangeRule:
    def test_mul_unit(self):
        assert range_rule(OpKind.MUL, [U, U]) == Interval(0, 1)

    def test_add_unit(self):
        assert range_rule(OpKind.ADD, [U, U]) == Interval(0, 2)

    def test_sub_gives_signed_interval(self):
        assert range_rule(OpKind.SUB, [U, U]) == Interval(-1, 1)

    def test_sin_monotone_piece(self):
        got = range_rule(OpKind.SIN, [U])
        assert got.lo == pytest.approx(0.0)
        assert got.hi == pytest.approx(math.sin(1.0))

    def test_sin_catches_interior_peak(self):
        got = range_rule(OpKind.SIN, [Interval(0, 4)])
        assert got.hi == 1.0
        assert got.lo == pytest.approx(math.sin(4.0))

    def test_wide_interval_clips_to_unit(self):
        assert range_rule(OpKind.COS, [Interval(0, 7)]) == Interval(-1, 1)

    def test_relu(self):
        assert range_rule(OpKind.RELU, [Interval(-1, 1)]) == Interval(0, 1)
        assert range_rule(OpKind.RELU, [Interval(-2, -1)]) == Interval(0, 0)

    def test_abs(self):
        assert range_rule(OpKind.ABS, [Interval(-2, 1)]) == Interval(0, 2)
        assert range_rule(OpKind.ABS, [Interval(0.5, 1)]) == Interval(0.5, 1)

    def test_mul_signed_endpoints(self):
        assert range_rule(OpKind.MUL, [Interval(-1, 2), Interval(-3, 1)]) == Interval(-6, 3)

    def test_arity_mismatch(self):
        with pytest.raises(ValueError):
            range_rule(OpKind.MUL, [U])


class TestPartialLip:
    def test_mul_unit(self):
        assert partial_lip(OpKind.MUL, [U, U]) == [1.0, 1.0]

    def test_mul_scaled(self):
        assert partial_lip(OpKind.MUL, [Interval(0, 2), Interval(0, 2)]) == [2.0, 2.0]

    def test_mul_asymmetric_swaps_bounds(self):
        assert partial_lip(OpKind.MUL, [Interval(0, 3), Interval(-2, 1)]) == [2.0, 3.0]

    def test_sin_globally_one(self):
        assert partial_lip(OpKind.SIN, [Interval(0, 4)]) == [1.0]

    def test_add(self):
        assert partial_lip(OpKind.ADD, [U, U]) == [1.0, 1.0]


class TestAnnotate:
    def test_all_additive_n3(self):
        t = parse_expression("(x1+x2)+(x3+x4)")
        ann = annotate_ranges(t)
        assert ann.root_range == Interval(0, 4)  # B = N + 1 = 4

    def test_mixed_counterexample_exceeds_additive_bound(self):
        t = parse_expression("((x1+x2)*(x3+x4))*(x5+x6)")
        ann = annotate_ranges(t)
        assert ann.root_range.bound == 8.0
        assert 8.0 > tree_stats(t).internal + 1  # naive N+1 = 6 fails here

    def test_multiplicative_chain_stays_unit(self):
        t = parse_expression("*".join(f"x{i}" for i in range(1, 11)))
        ann = annotate_ranges(t)
        assert all(a.range.bound == 1.0 for a in ann.annotations.values())

    def test_input_domain_matches_child_ranges(self):
        t = parse_expression("(x1+x2)*x3")
        ann = annotate_ranges(t)
        root = ann.annotations[0]
        assert root.input_domain == (Interval(0, 2), Interval(0, 1))
        assert root.partial_lips == (1.0, 2.0)

    def test_json_lists_nodes_in_preorder(self):
        import json

        doc = json.loads(annotate_ranges(parse_expression("sin(x1*x2)")).to_json())
        assert [n["id"] for n in doc["nodes"]] == [0, 1]
        assert doc["nodes"][0]["op"] == "sin"
        assert doc["nodes"][1]["c_op"] == 3


class TestLipBudget:
    def test_xy(self):
        b = lip_budget(annotate_ranges(parse_expression("x1*x2")))
        assert (b.product_bound, b.l_f, b.c_star) == (1.0, 3, 1.0)

    def test_leaf_empty_product(self):
        b = lip_budget(annotate_ranges(Leaf(1)))
        assert (b.product_bound, b.l_f) == (1.0, 0)
        assert b.simplified_bound == 1.0

    def test_add_into_mul(self):
        b = lip_budget(annotate_ranges(parse_expression("(x1+x2)*x3")))
        assert b.product_bound == 8.0  # max(2,1)^3 for the scaled multiplication
        assert b.c_star == 2.0
        assert b.simplified_bound == 2.0**4

    @given(tree_strategy())
    @settings(max_examples=150)
    def test_budget_consistency(self, tree):
        ann = annotate_ranges(tree)
        b = lip_budget(ann)
        assert b.product_bound <= b.simplified_bound * (1 + 1e-12)
        assert b.l_f <= 3 * tree_stats(tree).internal


class TestVerifyRanges:
    def test_additive_attains_bound_at_ones(self):
        t = parse_expression("(x1+x2)+(x3+x4)")
        rep = verify_ranges_numerically(t, 500, seed=0)
        assert rep.ok
        root = rep.entries[0]
        assert root.measured == 4.0  # the all-ones corner is always sampled

    def test_product_stays_unit(self):
        rep = verify_ranges_numerically(parse_expression("x1*x2"), 10_000, seed=1)
        assert rep.ok
        assert rep.entries[0].measured <= 1.0

    def test_mixed_tree_measures_eight(self):
        t = parse_expression("((x1+x2)*(x3+x4))*(x5+x6)")
        rep = verify_ranges_numerically(t, 2000, seed=2)
        assert rep.ok
        assert rep.entries[0].measured == 8.0
        assert rep.entries[0].certified == 8.0

    @given(tree_strategy(max_leaves=8))
    @settings(max_examples=30, deadline=None)
    def test_soundness_on_random_trees(self, tree):
        assert verify_ranges_numerically(tree, 2000, seed=3).ok

    def test_monotone_in_leaf_ranges(self, rng):
        from kanforge.cli import random_tree

        for _ in range(25):
            tree = random_tree(rng, 4)
            n = tree_stats(tree).n
            base = annotate_ranges(tree)
            p = int(rng.integers(1, n + 1))
            wider = annotate_ranges(tree, leaf_ranges={p: Interval(-0.5, 1.5)})
            for nid, ann in base.annotations.items():
                assert wider.annotations[nid].range.bound >= ann.range.bound - 1e-12


class TestAffine:
    def test_unit_box_identity(self):
        box = affine_box([(0, 1), (0, 1)])
        assert box.lip_h == 1.0
        assert box.lip_h_inv == 1.0
        np.testing.assert_array_equal(apply_affine(box, (0.3, 0.9)), [0.3, 0.9])

    def test_rectangular_box(self):
        box = affine_box([(0, 2), (1, 4)])
        assert box.lip_h == 3.0
        assert box.lip_h_inv == 0.5
        np.testing.assert_allclose(apply_affine(box, (0.5, 0.5)), [1.0, 2.5])

    def test_degenerate_interval_rejected(self):
        with pytest.raises(ValueError):
            AffineBox((Interval(1.0, 1.0),))

    @given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0.01, 8)), min_size=1, max_size=5))
    @settings(max_examples=100)
    def test_axis_finite_differences_match_lip(self, spans):
        box = affine_box([(a, a + w) for a, w in spans])
        t = np.full(len(spans), 0.25)
        delta = 0.5  # the map is affine, so any secant width measures the slope
        slopes = []
        for p in range(len(spans)):
            tp = t.copy()
            tp[p] += delta
            slopes.append(abs(apply_affine(box, tp)[p] - apply_affine(box, t)[p]) / delta)
        assert max(slopes) == pytest.approx(box.lip_h, rel=1e-9)


def test_range_report_json_shape():
    import json

    rep = verify_ranges_numerically(parse_expression("(x1+x2)*x3"), 200, seed=4)
    doc = json.loads(rep.to_json())
    assert doc["ok"] is True
    assert {"id", "op", "certified", "measured", "ok"} <= set(doc["nodes"][0])
