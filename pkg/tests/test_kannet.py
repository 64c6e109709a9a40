import json
import math

import numpy as np
import pytest

from kanforge.compiler import CompileConfig, compile_tree
from kanforge.exprtree import parse_expression
from kanforge.kannet import (
    Edge,
    KanNetwork,
    SchemaError,
    deserialize,
    forward,
    forward_batch,
    jacobian_fd,
    jacobian_lower_bound,
    lipschitz_product,
    serialize,
)
from kanforge.spline import line_spline, spline_lipschitz

CFG = CompileConfig(grid=35, order=3)
CFG_FAITHFUL = CompileConfig(grid=35, order=3, faithful_widths=True)


def _single_edge_net(spl, n=1):
    return KanNetwork(
        widths=(n, 1),
        layers=((Edge(0, 0, spl),),),
        wire_tags=(tuple(f"x{p}" for p in range(1, n + 1)), ("node0",)),
    )


class TestForward:
    def test_compiled_product(self):
        net, _ = compile_tree(parse_expression("x1*x2"), CFG)
        assert forward(net, [0.5, 0.5])[0] == pytest.approx(0.25, abs=1e-12)

    def test_compiled_sum_exact(self):
        net, _ = compile_tree(parse_expression("x1+x2"), CFG)
        assert forward(net, [1.0, 1.0])[0] == 2.0

    def test_compiled_sin_product(self):
        net, _ = compile_tree(parse_expression("sin(x1*x2)"), CFG)
        assert forward(net, [1.0, 1.0])[0] == pytest.approx(math.sin(1.0), abs=1.1e-4)

    def test_dimension_mismatch(self):
        net, _ = compile_tree(parse_expression("x1*x2"), CFG)
        with pytest.raises(ValueError):
            forward_batch(net, np.zeros((4, 3)))

    def test_batch_matches_scalar(self, rng):
        net, _ = compile_tree(parse_expression("sin((x1+x2)*x3)"), CFG)
        X = rng.uniform(0, 1, size=(64, 3))
        batch = forward_batch(net, X)[:, 0]
        single = [forward(net, x)[0] for x in X]
        np.testing.assert_array_equal(batch, single)


class TestLipschitzProduct:
    def test_compiled_product_exactly_one(self):
        net, _ = compile_tree(parse_expression("x1*x2"), CFG)
        assert lipschitz_product(net).product == 1.0

    def test_long_chain_exactly_one(self):
        net, _ = compile_tree(parse_expression("*".join(f"x{i}" for i in range(1, 11))), CFG)
        assert lipschitz_product(net).product == 1.0

    def test_single_doubling_edge(self):
        net = _single_edge_net(line_spline(0, 1, 0, 2))
        assert lipschitz_product(net).product == 2.0

    def test_report_fields(self):
        net, _ = compile_tree(parse_expression("x1*x2"), CFG)
        rep = lipschitz_product(net)
        assert rep.max_width == 2
        assert rep.n_layers == 3
        assert rep.product == math.prod(rep.per_layer)
        assert rep.ambient_upper == rep.max_width**rep.n_layers * rep.product

    def test_identity_wire_floor_in_faithful_nets(self):
        for expr in ("x1*x2", "sin(x1*x2)", "sin(x1)", "relu(x1-x2)*cos(x3)"):
            net, _ = compile_tree(parse_expression(expr), CFG_FAITHFUL)
            for edges in net.layers:
                assert any(spline_lipschitz(e.spline).value == 1.0 for e in edges)
            assert lipschitz_product(net).product == 1.0


class TestJacobian:
    def test_product_gradient(self):
        net, _ = compile_tree(parse_expression("x1*x2"), CFG)
        grad = jacobian_fd(net, [0.5, 0.5])
        np.testing.assert_allclose(grad, [0.5, 0.5], atol=1e-6)
        assert np.linalg.norm(grad) == pytest.approx(math.sqrt(0.5), abs=1e-6)

    def test_sum_gradient_everywhere(self, rng):
        net, _ = compile_tree(parse_expression("x1+x2"), CFG)
        for _ in range(5):
            grad = jacobian_fd(net, rng.uniform(0.05, 0.95, 2))
            np.testing.assert_allclose(grad, [1.0, 1.0], atol=1e-9)

    def test_product_gradient_near_corner_reaches_sqrt2(self):
        net, _ = compile_tree(parse_expression("x1*x2"), CFG)
        grad = jacobian_fd(net, [1 - 1e-4, 1 - 1e-4])
        assert np.linalg.norm(grad) == pytest.approx(math.sqrt(2.0), abs=1e-3)

    def test_lower_bound_below_product(self):
        net, _ = compile_tree(parse_expression("x1*x2"), CFG)
        # W = 2 from the compiled widths (2,2,2,1), L = 3
        bound = jacobian_lower_bound(net, [1 - 1e-4, 1 - 1e-4])
        assert bound == pytest.approx(math.sqrt(2.0) / 2**3, abs=1e-3)
        assert bound <= lipschitz_product(net).product

    def test_identity_net_equality(self):
        net = _single_edge_net(line_spline(0, 1, 0, 1))
        assert jacobian_lower_bound(net, [0.5]) == pytest.approx(1.0, abs=1e-9)
        assert lipschitz_product(net).product == 1.0

    def test_sum_lower_bound(self):
        net, _ = compile_tree(parse_expression("x1+x2"), CFG)
        bound = jacobian_lower_bound(net, [0.5, 0.5])
        assert bound == pytest.approx(math.sqrt(2.0) / 2.0, abs=1e-6)
        assert bound <= 1.0

    def test_step_validated(self):
        net, _ = compile_tree(parse_expression("x1*x2"), CFG)
        with pytest.raises(ValueError):
            jacobian_fd(net, [0.5, 0.5], step=0.0)

    def test_chain_rule_sandwich(self, rng):
        for expr in ("x1*x2", "sin((x1+x2)*x3)", "(x1+x2)*(x3+x4)"):
            net, _ = compile_tree(parse_expression(expr), CFG)
            rep = lipschitz_product(net)
            upper = rep.max_width**rep.n_layers * rep.product
            for _ in range(100):
                x = rng.uniform(0.001, 0.999, net.n_inputs)
                assert np.linalg.norm(jacobian_fd(net, x)) <= upper + 1e-6


class TestSerialization:
    def test_round_trip_preserves_product_bitwise(self):
        net, _ = compile_tree(parse_expression("sin(x1*x2)"), CFG)
        net2 = deserialize(serialize(net))
        assert lipschitz_product(net2).product == lipschitz_product(net).product
        assert net2.widths == net.widths
        assert net2.wire_tags == net.wire_tags

    def test_round_trip_forward_identical(self, rng):
        net, _ = compile_tree(parse_expression("(x1+x2)*x3"), CFG)
        net2 = deserialize(serialize(net))
        X = rng.uniform(0, 1, size=(32, 3))
        np.testing.assert_array_equal(forward_batch(net, X), forward_batch(net2, X))

    def test_format_version_pinned(self):
        net, _ = compile_tree(parse_expression("x1"), CFG)
        assert json.loads(serialize(net))["format"] == "kanforge/1"

    def test_negative_width_rejected_with_path(self):
        net, _ = compile_tree(parse_expression("x1*x2"), CFG)
        doc = json.loads(serialize(net))
        doc["widths"][1] = -2
        with pytest.raises(SchemaError) as exc:
            deserialize(json.dumps(doc))
        assert exc.value.path == "$.widths[1]"

    def test_edge_out_of_range_rejected_with_path(self):
        net, _ = compile_tree(parse_expression("x1*x2"), CFG)
        doc = json.loads(serialize(net))
        doc["layers"][0]["edges"][0]["from"] = 7
        with pytest.raises(SchemaError) as exc:
            deserialize(json.dumps(doc))
        assert exc.value.path == "$.layers[0].edges[0].from"

    def test_bad_format_rejected(self):
        with pytest.raises(SchemaError):
            deserialize(json.dumps({"format": "other/9", "widths": [1, 1], "layers": [], "wire_tags": []}))

    def test_bad_spline_rejected_with_path(self):
        net, _ = compile_tree(parse_expression("x1"), CFG)
        doc = json.loads(serialize(net))
        doc["layers"][0]["edges"][0]["spline"]["coefficients"] = [0.0]
        with pytest.raises(SchemaError) as exc:
            deserialize(json.dumps(doc))
        assert "spline" in exc.value.path


class TestNetworkInvariants:
    def test_edge_indices_validated(self):
        with pytest.raises(ValueError):
            KanNetwork(
                widths=(1, 1),
                layers=((Edge(1, 0, line_spline(0, 1, 0, 1)),),),
                wire_tags=(("x1",), ("node0",)),
            )

    def test_duplicate_edges_rejected(self):
        e = Edge(0, 0, line_spline(0, 1, 0, 1))
        with pytest.raises(ValueError):
            KanNetwork(widths=(1, 1), layers=((e, e),), wire_tags=(("x1",), ("node0",)))

    def test_wire_tag_arity_checked(self):
        with pytest.raises(ValueError):
            KanNetwork(
                widths=(1, 1),
                layers=((Edge(0, 0, line_spline(0, 1, 0, 1)),),),
                wire_tags=(("x1", "x2"), ("node0",)),
            )
