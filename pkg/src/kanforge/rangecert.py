"""Interval range recursion over computation trees and Lipschitz budgets.

Every internal node gets an output enclosure (full signed interval, from
which the symmetric bound B = max(|lo|, |hi|) derives), the tuple of child
enclosures it consumes (its input domain), and exact partial Lipschitz
constants of its operation restricted to that domain. The per-node data
aggregates into the domain-sensitive Lipschitz-product budget

    product_bound = prod_v max(C_v, 1)^(c_v),   C_v = max_i Lip_i(op_v | D_v),

with block depths c_v fixed per operation (multiplication 3, all others 1).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .exprtree import CompTree, Leaf, OpKind, iter_nodes, tree_stats

__all__ = [
    "Interval",
    "NodeAnnotation",
    "AnnotatedTree",
    "LipBudget",
    "AffineBox",
    "BLOCK_DEPTH",
    "range_rule",
    "partial_lip",
    "annotate_ranges",
    "lip_budget",
    "verify_ranges_numerically",
    "RangeReport",
    "affine_box",
    "apply_affine",
]

# block depth c_op of each operation's primitive block
BLOCK_DEPTH = {
    OpKind.ADD: 1,
    OpKind.SUB: 1,
    OpKind.MUL: 3,
    OpKind.SIN: 1,
    OpKind.COS: 1,
    OpKind.RELU: 1,
    OpKind.ABS: 1,
}

UNIT = None  # set below once Interval exists


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        if not (self.lo <= self.hi):
            raise ValueError(f"invalid interval [{self.lo}, {self.hi}]")

    @property
    def bound(self) -> float:
        """Symmetric range bound B = sup of |t| over the interval."""
        return max(abs(self.lo), abs(self.hi))

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, t: float) -> bool:
        return self.lo <= t <= self.hi

    def __iter__(self):
        yield self.lo
        yield self.hi


UNIT = Interval(0.0, 1.0)

_TWO_PI = 2.0 * math.pi


def _trig_image(op: OpKind, iv: Interval) -> Interval:
    """Exact image of sin/cos over an interval (clips to [-1, 1] when wide)."""
    f = math.sin if op is OpKind.SIN else math.cos
    vals = [f(iv.lo), f(iv.hi)]
    # interior critical points: peak at pi/2 + 2*pi*m (sin) / 2*pi*m (cos),
    # trough shifted by pi
    peak0 = math.pi / 2.0 if op is OpKind.SIN else 0.0
    for base, extreme in ((peak0, 1.0), (peak0 + math.pi, -1.0)):
        m = math.ceil((iv.lo - base) / _TWO_PI)
        if base + _TWO_PI * m <= iv.hi:
            vals.append(extreme)
    return Interval(min(vals), max(vals))


def range_rule(op: OpKind, child_ranges: list[Interval]) -> Interval:
    """Exact interval-arithmetic enclosure of op over the child enclosures."""
    if len(child_ranges) != op.arity:
        raise ValueError(f"{op.value} expects {op.arity} child ranges, got {len(child_ranges)}")
    if op is OpKind.ADD:
        g, h = child_ranges
        return Interval(g.lo + h.lo, g.hi + h.hi)
    if op is OpKind.SUB:
        g, h = child_ranges
        return Interval(g.lo - h.hi, g.hi - h.lo)
    if op is OpKind.MUL:
        g, h = child_ranges
        prods = [g.lo * h.lo, g.lo * h.hi, g.hi * h.lo, g.hi * h.hi]
        return Interval(min(prods), max(prods))
    (g,) = child_ranges
    if op in (OpKind.SIN, OpKind.COS):
        return _trig_image(op, g)
    if op is OpKind.RELU:
        return Interval(max(g.lo, 0.0), max(g.hi, 0.0))
    # ABS
    if g.lo <= 0.0 <= g.hi:
        return Interval(0.0, g.bound)
    return Interval(min(abs(g.lo), abs(g.hi)), g.bound)


def partial_lip(op: OpKind, input_domain: list[Interval]) -> list[float]:
    """Exact partial Lipschitz constants of op restricted to the given domain.

    Only multiplication is domain-sensitive: its constant in each argument is
    the sup of the other argument's magnitude. Everything else is globally 1.
    """
    if len(input_domain) != op.arity:
        raise ValueError(f"{op.value} expects {op.arity} input intervals, got {len(input_domain)}")
    if op is OpKind.MUL:
        g, h = input_domain
        return [h.bound, g.bound]
    return [1.0] * op.arity


@dataclass(frozen=True)
class NodeAnnotation:
    node_id: int
    op: OpKind
    range: Interval
    input_domain: tuple[Interval, ...]
    partial_lips: tuple[float, ...]
    c_op: int


@dataclass(frozen=True)
class AnnotatedTree:
    tree: CompTree
    annotations: dict[int, NodeAnnotation]  # keyed by pre-order node id
    leaf_ranges: dict[int, Interval]        # keyed by coordinate

    @property
    def root_range(self) -> Interval:
        if isinstance(self.tree, Leaf):
            return self.leaf_ranges[self.tree.coord]
        return self.annotations[0].range

    def node_range(self, node_id: int, node: CompTree) -> Interval:
        if isinstance(node, Leaf):
            return self.leaf_ranges[node.coord]
        return self.annotations[node_id].range

    def to_json(self) -> str:
        entries = [
            {
                "id": ann.node_id,
                "op": ann.op.value,
                "range": [ann.range.lo, ann.range.hi],
                "input_domain": [[iv.lo, iv.hi] for iv in ann.input_domain],
                "partial_lips": list(ann.partial_lips),
                "c_op": ann.c_op,
            }
            for ann in sorted(self.annotations.values(), key=lambda a: a.node_id)
        ]
        return json.dumps({"nodes": entries}, indent=2)


def annotate_ranges(tree: CompTree, leaf_ranges: dict[int, Interval] | None = None) -> AnnotatedTree:
    """Annotate every internal node with range, input domain, and partial Lips.

    Leaves are coordinate projections ranging over [0,1] unless a per-
    coordinate enclosure is supplied via `leaf_ranges`.
    """
    stats = tree_stats(tree)
    leaves = {p: UNIT for p in range(1, stats.n + 1)}
    if leaf_ranges:
        leaves.update(leaf_ranges)
    annotations: dict[int, NodeAnnotation] = {}

    ids = iter_nodes(tree)

    def walk(t: CompTree) -> Interval:
        nid, node = next(ids)
        assert node is t
        if isinstance(t, Leaf):
            return leaves[t.coord]
        child_ranges = [walk(c) for c in t.children]
        rng = range_rule(t.op, child_ranges)
        annotations[nid] = NodeAnnotation(
            node_id=nid,
            op=t.op,
            range=rng,
            input_domain=tuple(child_ranges),
            partial_lips=tuple(partial_lip(t.op, child_ranges)),
            c_op=BLOCK_DEPTH[t.op],
        )
        return rng

    walk(tree)
    return AnnotatedTree(tree=tree, annotations=annotations, leaf_ranges=leaves)


@dataclass(frozen=True)
class LipBudget:
    product_bound: float   # prod_v max(C_v, 1)^(c_v)
    c_star: float          # max_v C_v (0 for a bare leaf)
    l_f: int               # sum_v c_v
    per_node: tuple[tuple[int, float, int], ...]  # (node_id, C_v, c_v)

    @property
    def simplified_bound(self) -> float:
        """max(C*, 1)^L_f, the coarser tree-uniform form of the bound."""
        return max(self.c_star, 1.0) ** self.l_f


def lip_budget(annotated: AnnotatedTree) -> LipBudget:
    per_node = []
    product = 1.0
    c_star = 0.0
    l_f = 0
    for ann in sorted(annotated.annotations.values(), key=lambda a: a.node_id):
        c_v = max(ann.partial_lips)
        per_node.append((ann.node_id, c_v, ann.c_op))
        product *= max(c_v, 1.0) ** ann.c_op
        c_star = max(c_star, c_v)
        l_f += ann.c_op
    return LipBudget(product_bound=product, c_star=c_star, l_f=l_f, per_node=tuple(per_node))


@dataclass(frozen=True)
class RangeCheck:
    node_id: int
    op: str
    certified: float
    measured: float
    ok: bool


@dataclass(frozen=True)
class RangeReport:
    entries: tuple[RangeCheck, ...]
    samples: int
    seed: int

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.entries)

    def to_json(self) -> str:
        return json.dumps(
            {
                "samples": self.samples,
                "seed": self.seed,
                "ok": self.ok,
                "nodes": [
                    {
                        "id": e.node_id,
                        "op": e.op,
                        "certified": e.certified,
                        "measured": e.measured,
                        "ok": e.ok,
                    }
                    for e in self.entries
                ],
            },
            indent=2,
        )


_SOUNDNESS_SLACK = 1e-12


def verify_ranges_numerically(
    tree: CompTree,
    samples: int,
    seed: int,
    annotated: AnnotatedTree | None = None,
) -> RangeReport:
    """Check every certified per-node bound B_v against sampled magnitudes.

    Samples uniformly over [0,1]^n and always includes the all-ones corner,
    where the additive worst case is attained. The per-node measured maximum
    of |subfunction| must stay within B_v (+ roundoff slack).
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    ann = annotated if annotated is not None else annotate_ranges(tree)
    stats = tree_stats(tree)
    rng = np.random.default_rng(seed)
    xs = rng.uniform(0.0, 1.0, size=(samples, stats.n))
    xs = np.vstack([xs, np.ones((1, stats.n))])

    measured: dict[int, float] = {}
    ids = iter_nodes(tree)

    def walk(t: CompTree) -> np.ndarray:
        nid, node = next(ids)
        if isinstance(t, Leaf):
            return xs[:, t.coord - 1]
        vals = [walk(c) for c in t.children]
        if t.op is OpKind.ADD:
            out = vals[0] + vals[1]
        elif t.op is OpKind.SUB:
            out = vals[0] - vals[1]
        elif t.op is OpKind.MUL:
            out = vals[0] * vals[1]
        elif t.op is OpKind.SIN:
            out = np.sin(vals[0])
        elif t.op is OpKind.COS:
            out = np.cos(vals[0])
        elif t.op is OpKind.RELU:
            out = np.maximum(vals[0], 0.0)
        else:
            out = np.abs(vals[0])
        measured[nid] = float(np.max(np.abs(out)))
        return out

    walk(tree)
    entries = []
    for nid in sorted(measured):
        a = ann.annotations[nid]
        m = measured[nid]
        entries.append(
            RangeCheck(
                node_id=nid,
                op=a.op.value,
                certified=a.range.bound,
                measured=m,
                ok=m <= a.range.bound + _SOUNDNESS_SLACK,
            )
        )
    return RangeReport(entries=tuple(entries), samples=samples, seed=seed)


@dataclass(frozen=True)
class AffineBox:
    """Componentwise affine map from [0,1]^n onto a product of intervals."""

    intervals: tuple[Interval, ...]

    def __post_init__(self):
        for iv in self.intervals:
            if not iv.lo < iv.hi:
                raise ValueError(f"degenerate box interval [{iv.lo}, {iv.hi}]")

    @property
    def lip_h(self) -> float:
        """Lipschitz constant of the map: the widest interval length."""
        return max(iv.length for iv in self.intervals)

    @property
    def lip_h_inv(self) -> float:
        """Lipschitz constant of the inverse: 1 over the narrowest length."""
        return 1.0 / min(iv.length for iv in self.intervals)


def affine_box(intervals) -> AffineBox:
    return AffineBox(tuple(iv if isinstance(iv, Interval) else Interval(*iv) for iv in intervals))


def apply_affine(box: AffineBox, t) -> np.ndarray:
    """Map a point of [0,1]^n into the box: h_p(t) = a_p + t * (b_p - a_p)."""
    t = np.asarray(t, dtype=np.float64)
    a = np.array([iv.lo for iv in box.intervals])
    b = np.array([iv.hi for iv in box.intervals])
    return a + t * (b - a)
