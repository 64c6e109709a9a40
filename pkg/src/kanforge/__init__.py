"""kanforge: compile symbolic expressions into certified KAN networks.

The pipeline: parse an expression into a computation tree, annotate every
node with exact interval ranges and partial Lipschitz constants, realize each
node as a primitive B-spline block on its certified domain, schedule the
blocks sequentially with identity forwarding, and emit the network together
with a machine-checkable certificate (Lipschitz product, width, range, and
uniform error bounds).
"""

from .compiler import (
    Certificate,
    CertificationError,
    CompileConfig,
    CompileError,
    build_schedule,
    certify,
    compile_on_box,
    compile_tree,
    dead_wire_elimination,
)
from .exprtree import (
    CompTree,
    Leaf,
    Node,
    OpKind,
    ParseError,
    TreeStats,
    eval_tree,
    parse_expression,
    render,
    tree_stats,
    validate_opset,
)
from .kannet import (
    Edge,
    KanNetwork,
    ProductReport,
    SchemaError,
    deserialize,
    forward,
    forward_batch,
    jacobian_fd,
    jacobian_lower_bound,
    lipschitz_product,
    serialize,
)
from .primblocks import Block, block_add, block_certificate, block_mul, block_pwl, block_sub, block_trig
from .rangecert import (
    AffineBox,
    AnnotatedTree,
    Interval,
    LipBudget,
    NodeAnnotation,
    affine_box,
    annotate_ranges,
    apply_affine,
    lip_budget,
    partial_lip,
    range_rule,
    verify_ranges_numerically,
)
from .spline import (
    LipValue,
    Spline,
    cubic_interpolant,
    exact_poly_spline,
    pl_interpolant,
    spline_lipschitz,
    sup_error,
    uniform_knots,
)

__version__ = "0.1.0"
