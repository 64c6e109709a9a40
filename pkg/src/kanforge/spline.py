"""Univariate B-spline edge functions with exact Lipschitz extraction.

Conventions
-----------
- `order` is the polynomial degree k (cubic = 3); a spline of order k
  reproduces polynomials of degree <= k exactly.
- `knots` is the strictly increasing list of G distinct grid points spanning
  the domain [a, b]; internally the boundary knots are repeated to
  multiplicity k+1 (clamped basis), giving G + k - 1 basis functions.
- Evaluation inside [a, b] is de Boor; outside, the boundary polynomial piece
  is continued linearly and the hit is recorded in a module-level diagnostic
  counter (compiled networks are certified to stay in-domain up to float
  roundoff, so hits indicate roundoff-scale escapes, not errors).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

__all__ = [
    "Spline",
    "LipValue",
    "uniform_knots",
    "pl_interpolant",
    "line_spline",
    "exact_poly_spline",
    "cubic_interpolant",
    "spline_lipschitz",
    "sup_error",
    "oob_hits",
    "reset_oob_hits",
]

_OOB_HITS = 0


def oob_hits() -> int:
    """Number of out-of-domain evaluations since the last reset (diagnostic)."""
    return _OOB_HITS


def reset_oob_hits() -> None:
    global _OOB_HITS
    _OOB_HITS = 0


def _record_oob(n: int) -> None:
    global _OOB_HITS
    _OOB_HITS += n


def uniform_knots(a: float, b: float, G: int) -> np.ndarray:
    """G equally spaced grid points on [a, b], spacing h = (b - a)/(G - 1)."""
    if G < 2:
        raise ValueError(f"need at least 2 grid points, got {G}")
    if not a < b:
        raise ValueError(f"degenerate interval [{a}, {b}]")
    return np.linspace(a, b, G)


def _clamped(knots: np.ndarray, k: int) -> np.ndarray:
    return np.concatenate([np.repeat(knots[0], k), knots, np.repeat(knots[-1], k)])


@dataclass(frozen=True, eq=False)
class Spline:
    """Clamped B-spline on distinct grid `knots` with `coefs` control values."""

    order: int
    knots: np.ndarray
    coefs: np.ndarray
    _T: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=np.float64)
        coefs = np.asarray(self.coefs, dtype=np.float64)
        if self.order < 0:
            raise ValueError("order must be >= 0")
        if knots.ndim != 1 or knots.size < 2 or not np.all(np.diff(knots) > 0):
            raise ValueError("knots must be >= 2 strictly increasing grid points")
        expected = knots.size + self.order - 1
        if coefs.size != expected:
            raise ValueError(f"expected {expected} coefficients, got {coefs.size}")
        if not np.all(np.isfinite(coefs)):
            raise ValueError("non-finite coefficient")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "coefs", coefs)
        object.__setattr__(self, "_T", _clamped(knots, self.order))

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def grid_points(self) -> int:
        return int(self.knots.size)

    # boundary value/slope used for linear continuation outside the domain
    def _boundary(self) -> tuple[float, float, float, float]:
        fa = float(self.coefs[0])
        fb = float(self.coefs[-1])
        if self.order == 0:
            return fa, 0.0, fb, 0.0
        d = self.derivative()
        return fa, float(d.coefs[0]), fb, float(d.coefs[-1])

    def derivative(self) -> "Spline":
        """Derivative spline (order k-1 on the same grid). Requires k >= 1."""
        if self.order < 1:
            raise ValueError("cannot differentiate an order-0 spline")
        k, T, c = self.order, self._T, self.coefs
        dc = np.array(
            [k * (c[j + 1] - c[j]) / (T[j + k + 1] - T[j + 1]) for j in range(c.size - 1)]
        )
        return Spline(k - 1, self.knots, dc)

    def __call__(self, t: float) -> float:
        vals, oob = kernels.eval_spline_batch(*self._packed_args(), np.array([float(t)]))
        _record_oob(oob)
        return float(vals[0])

    def eval_batch(self, ts) -> np.ndarray:
        vals, oob = kernels.eval_spline_batch(*self._packed_args(), ts)
        _record_oob(oob)
        return vals

    def _packed_args(self):
        a, b = self.domain
        fa, sa, fb, sb = self._boundary()
        return self._T, self.coefs, self.order, a, b, fa, sa, fb, sb

    def to_dict(self) -> dict:
        a, b = self.domain
        return {
            "order": self.order,
            "domain": [a, b],
            "grid_points": self.grid_points,
            "knots": [float(x) for x in self.knots],
            "coefficients": [float(x) for x in self.coefs],
        }

    @staticmethod
    def from_dict(d: dict) -> "Spline":
        return Spline(int(d["order"]), np.array(d["knots"]), np.array(d["coefficients"]))


@dataclass(frozen=True)
class LipValue:
    value: float
    exact: bool = True

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("Lipschitz constant must be >= 0")


def pl_interpolant(f, a: float, b: float, G: int) -> Spline:
    """Order-1 spline interpolating f at G uniform knots (linear between)."""
    grid = uniform_knots(a, b, G)
    vals = np.array([float(f(x)) for x in grid])
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite sample value from interpolated function")
    return Spline(1, grid, vals)


def line_spline(a: float, b: float, va: float, vb: float) -> Spline:
    """The affine function through (a, va) and (b, vb) as a 2-knot order-1 spline.

    line_spline(a, b, a, b) is the exact identity wire (Lipschitz exactly 1);
    line_spline(a, b, -a, -b) the exact negation.
    """
    return Spline(1, np.array([a, b]), np.array([va, vb]))


def _elem_sym(vals: np.ndarray, m: int) -> float:
    # elementary symmetric polynomial e_m(vals)
    e = np.zeros(m + 1)
    e[0] = 1.0
    for v in vals:
        for i in range(min(m, len(vals)), 0, -1):
            e[i] += v * e[i - 1]
    return float(e[m])


def exact_poly_spline(poly_coefs, a: float, b: float, k: int, G: int = 3) -> Spline:
    """Represent a polynomial (coefficients low order first) exactly, k >= degree.

    Control values come from the polar form: the coefficient of basis function
    j is sum_m c_m * e_m(T_{j+1..j+k}) / C(k, m), which reproduces the
    polynomial identically (no approximation step).
    """
    poly_coefs = list(poly_coefs)
    deg = len(poly_coefs) - 1
    while deg > 0 and poly_coefs[deg] == 0:
        deg -= 1
    if k < deg:
        raise ValueError(f"order {k} cannot represent a degree-{deg} polynomial")
    grid = uniform_knots(a, b, G)
    T = _clamped(grid, k)
    nb = grid.size + k - 1
    c = np.zeros(nb)
    for j in range(nb):
        window = T[j + 1 : j + 1 + k]
        acc = 0.0
        for m in range(deg + 1):
            if poly_coefs[m] != 0.0:
                acc += poly_coefs[m] * _elem_sym(window, m) / math.comb(k, m)
        c[j] = acc
    return Spline(k, grid, c)


def _basis_matrix(grid: np.ndarray, k: int, ts: np.ndarray) -> np.ndarray:
    nb = grid.size + k - 1
    cols = []
    for j in range(nb):
        c = np.zeros(nb)
        c[j] = 1.0
        cols.append(Spline(k, grid, c).eval_batch(ts))
    return np.column_stack(cols)


def cubic_interpolant(f, a: float, b: float, G: int) -> Spline:
    """Cubic spline interpolating f at G uniform grid points, not-a-knot ends.

    The two extra degrees of freedom of the cubic space are fixed by third-
    derivative continuity across the first and last interior knots. Needs
    G >= 4 (fewer grid points leave no interior knot to absorb the condition).
    """
    if G < 4:
        raise ValueError("not-a-knot cubic interpolation needs G >= 4")
    grid = uniform_knots(a, b, G)
    k = 3
    nb = G + 2
    A = np.zeros((nb, nb))
    rhs = np.zeros(nb)
    A[:G, :] = _basis_matrix(grid, k, grid)
    rhs[:G] = [float(f(x)) for x in grid]
    # third derivative of each basis spline is piecewise constant over segments
    seg3 = np.zeros((G - 1, nb))
    for j in range(nb):
        c = np.zeros(nb)
        c[j] = 1.0
        d3 = Spline(k, grid, c).derivative().derivative().derivative()
        seg3[:, j] = d3.coefs
    A[G, :] = seg3[0] - seg3[1]
    A[G + 1, :] = seg3[G - 3] - seg3[G - 2]
    coefs = np.linalg.solve(A, rhs)
    return Spline(k, grid, coefs)


def _segment_poly_max_abs(s: Spline) -> float:
    # exact sup of |s| on [a, b] for order >= 2: per-segment polynomial extrema
    k = s.order
    grid = s.knots
    candidates = [abs(float(v)) for v in s.eval_batch(grid)]
    d = s.derivative()
    for r in range(grid.size - 1):
        x0, x1 = float(grid[r]), float(grid[r + 1])
        # fit the segment of s' exactly (degree k-1) and take its real roots
        xs = np.linspace(x0, x1, k + 1)
        dv = d.eval_batch(xs)
        poly = np.polynomial.Polynomial.fit(xs, dv, k - 1)
        for root in poly.roots():
            if abs(root.imag) < 1e-9 and x0 < root.real < x1:
                candidates.append(abs(float(s(float(root.real)))))
    return max(candidates)


def spline_lipschitz(s: Spline) -> LipValue:
    """Exact Lipschitz constant: sup of |s'| over the domain.

    The derivative of an order-k spline is an order-(k-1) spline; for k <= 2
    the supremum sits at knots (piecewise constant or linear derivative), for
    higher orders it is located per segment through the derivative's critical
    points.
    """
    if s.order == 0:
        raise ValueError("order-0 splines are not Lipschitz edge functions")
    d = s.derivative()
    if d.order == 0:
        val = float(np.max(np.abs(d.coefs)))
    elif d.order == 1:
        # clamped order-1 control values are the nodal values
        val = float(np.max(np.abs(d.coefs)))
    else:
        val = _segment_poly_max_abs(d)
    return LipValue(val, exact=True)


def sup_error(f, s: Spline, samples: int) -> float:
    """Max |f - s| over `samples` uniform points on the spline's domain."""
    if samples < 2:
        raise ValueError("need at least 2 sample points")
    a, b = s.domain
    ts = np.linspace(a, b, samples)
    fv = np.array([float(f(t)) for t in ts])
    return float(np.max(np.abs(fv - s.eval_batch(ts))))
