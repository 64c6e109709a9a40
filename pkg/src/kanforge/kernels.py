"""Batch evaluation kernels: numba-jitted hot loops with a pure-numpy fallback.

The backend is chosen once at import time from the env var KANFORGE_BACKEND:

    auto   (default) use numba when importable, else numpy
    numba  require numba, fail loudly if missing
    numpy  force the vectorized numpy path

Both paths share the packed array layout produced by kannet: splines live in
pooled knot/coefficient arrays, edges in flat (src, dst, spline) triples with
per-layer slices. Out-of-domain evaluations extrapolate linearly with the
boundary value/slope and are counted (returned, never raised).
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "USE_NUMBA",
    "HAS_NUMBA",
    "eval_spline_batch",
    "forward_batch",
    "eval_spline_batch_numpy",
    "forward_batch_numpy",
]

_CHOICE = os.environ.get("KANFORGE_BACKEND", "auto").lower()
if _CHOICE not in ("auto", "numba", "numpy"):
    raise RuntimeError(f"KANFORGE_BACKEND must be auto|numba|numpy, got {_CHOICE!r}")

HAS_NUMBA = False
if _CHOICE in ("auto", "numba"):
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:
        if _CHOICE == "numba":
            raise RuntimeError("KANFORGE_BACKEND=numba but numba is not importable")

USE_NUMBA = HAS_NUMBA and _CHOICE != "numpy"

# work array bound: splines of order >= _KMAX are rejected at pack time
_KMAX = 16


def _eval_one(T, c, k, a, b, fa, sa, fb, sb, t, work):
    # de Boor on a clamped knot vector; linear extrapolation outside [a, b].
    # Returns (value, out_of_domain_flag).
    if t < a:
        return fa + sa * (t - a), 1
    if t > b:
        return fb + sb * (t - b), 1
    nb = c.shape[0]
    j = np.searchsorted(T, t, side="right") - 1
    if j < k:
        j = k
    if j > nb - 1:
        j = nb - 1
    if k == 0:
        return c[j], 0
    for i in range(k + 1):
        work[i] = c[j - k + i]
    for r in range(1, k + 1):
        for i in range(k, r - 1, -1):
            lo = T[i + j - k]
            den = T[i + 1 + j - r] - lo
            alpha = (t - lo) / den if den != 0.0 else 0.0
            work[i] = (1.0 - alpha) * work[i - 1] + alpha * work[i]
    return work[k], 0


def _eval_batch(T, c, k, a, b, fa, sa, fb, sb, ts, out):
    oob = 0
    work = np.empty(_KMAX)
    for m in range(ts.shape[0]):
        val, hit = _eval_one(T, c, k, a, b, fa, sa, fb, sb, ts[m], work)
        out[m] = val
        oob += hit
    return oob


def _forward_batch(
    widths,
    lptr,
    esrc,
    edst,
    espl,
    sp_k,
    sp_kptr,
    sp_knots,
    sp_cptr,
    sp_coefs,
    sp_a,
    sp_b,
    sp_fa,
    sp_sa,
    sp_fb,
    sp_sb,
    X,
    out,
):
    npts = X.shape[0]
    L = widths.shape[0] - 1
    wmax = 0
    for l in range(widths.shape[0]):
        if widths[l] > wmax:
            wmax = widths[l]
    oob = 0
    cur = np.empty(wmax)
    nxt = np.empty(wmax)
    work = np.empty(_KMAX)
    for m in range(npts):
        for i in range(widths[0]):
            cur[i] = X[m, i]
        for l in range(L):
            for j in range(widths[l + 1]):
                nxt[j] = 0.0
            for e in range(lptr[l], lptr[l + 1]):
                s = espl[e]
                t = cur[esrc[e]]
                a = sp_a[s]
                b = sp_b[s]
                if t < a:
                    nxt[edst[e]] += sp_fa[s] + sp_sa[s] * (t - a)
                    oob += 1
                elif t > b:
                    nxt[edst[e]] += sp_fb[s] + sp_sb[s] * (t - b)
                    oob += 1
                else:
                    k = sp_k[s]
                    T = sp_knots[sp_kptr[s] : sp_kptr[s + 1]]
                    c = sp_coefs[sp_cptr[s] : sp_cptr[s + 1]]
                    nb = c.shape[0]
                    if k == 1 and nb == 2:
                        # single linear piece, same form as the boundary tangent
                        nxt[edst[e]] += sp_fa[s] + sp_sa[s] * (t - a)
                    else:
                        val, _ = _eval_one(T, c, k, a, b, sp_fa[s], sp_sa[s], sp_fb[s], sp_sb[s], t, work)
                        nxt[edst[e]] += val
            tmp = cur
            cur = nxt
            nxt = tmp
        for j in range(widths[L]):
            out[m, j] = cur[j]
    return oob


if USE_NUMBA:
    _eval_one = njit(cache=True)(_eval_one)
    _eval_batch_jit = njit(cache=True)(_eval_batch)
    _forward_batch_jit = njit(cache=True)(_forward_batch)


def eval_spline_batch_numpy(T, c, k, a, b, fa, sa, fb, sb, ts):
    """Vectorized de Boor over an array of points. Returns (values, oob_count)."""
    ts = np.asarray(ts, dtype=np.float64)
    out = np.empty_like(ts)
    below = ts < a
    above = ts > b
    if below.any():
        out[below] = fa + sa * (ts[below] - a)
    if above.any():
        out[above] = fb + sb * (ts[above] - b)
    inside = ~(below | above)
    t = ts[inside]
    if t.size:
        nb = c.shape[0]
        j = np.searchsorted(T, t, side="right") - 1
        np.clip(j, k, nb - 1, out=j)
        if k == 0:
            out[inside] = c[j]
        else:
            d = c[j[:, None] - k + np.arange(k + 1)[None, :]].copy()
            for r in range(1, k + 1):
                for i in range(k, r - 1, -1):
                    lo = T[i + j - k]
                    den = T[i + 1 + j - r] - lo
                    safe = np.where(den == 0.0, 1.0, den)
                    alpha = np.where(den == 0.0, 0.0, (t - lo) / safe)
                    d[:, i] = (1.0 - alpha) * d[:, i - 1] + alpha * d[:, i]
            out[inside] = d[:, k]
    return out, int(below.sum() + above.sum())


def forward_batch_numpy(
    widths,
    lptr,
    esrc,
    edst,
    espl,
    sp_k,
    sp_kptr,
    sp_knots,
    sp_cptr,
    sp_coefs,
    sp_a,
    sp_b,
    sp_fa,
    sp_sa,
    sp_fb,
    sp_sb,
    X,
):
    """Layerwise forward pass, vectorized over points one edge at a time."""
    X = np.asarray(X, dtype=np.float64)
    npts = X.shape[0]
    L = widths.shape[0] - 1
    oob = 0
    cur = X
    for l in range(L):
        nxt = np.zeros((npts, widths[l + 1]))
        for e in range(lptr[l], lptr[l + 1]):
            s = espl[e]
            vals, hits = eval_spline_batch_numpy(
                sp_knots[sp_kptr[s] : sp_kptr[s + 1]],
                sp_coefs[sp_cptr[s] : sp_cptr[s + 1]],
                int(sp_k[s]),
                sp_a[s],
                sp_b[s],
                sp_fa[s],
                sp_sa[s],
                sp_fb[s],
                sp_sb[s],
                cur[:, esrc[e]],
            )
            nxt[:, edst[e]] += vals
            oob += hits
        cur = nxt
    return cur, oob


def eval_spline_batch(T, c, k, a, b, fa, sa, fb, sb, ts):
    """Backend-dispatching batch spline evaluation. Returns (values, oob_count)."""
    if k >= _KMAX:
        raise ValueError(f"spline order {k} exceeds kernel bound {_KMAX - 1}")
    if USE_NUMBA:
        ts = np.ascontiguousarray(ts, dtype=np.float64)
        out = np.empty_like(ts)
        oob = _eval_batch_jit(T, c, k, a, b, fa, sa, fb, sb, ts, out)
        return out, int(oob)
    return eval_spline_batch_numpy(T, c, k, a, b, fa, sa, fb, sb, ts)


def forward_batch(
    widths,
    lptr,
    esrc,
    edst,
    espl,
    sp_k,
    sp_kptr,
    sp_knots,
    sp_cptr,
    sp_coefs,
    sp_a,
    sp_b,
    sp_fa,
    sp_sa,
    sp_fb,
    sp_sb,
    X,
):
    """Backend-dispatching packed-network forward. Returns (outputs, oob_count)."""
    if USE_NUMBA:
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.empty((X.shape[0], int(widths[-1])))
        oob = _forward_batch_jit(
            widths, lptr, esrc, edst, espl, sp_k, sp_kptr, sp_knots, sp_cptr,
            sp_coefs, sp_a, sp_b, sp_fa, sp_sa, sp_fb, sp_sb, X, out,
        )
        return out, int(oob)
    return forward_batch_numpy(
        widths, lptr, esrc, edst, espl, sp_k, sp_kptr, sp_knots, sp_cptr,
        sp_coefs, sp_a, sp_b, sp_fa, sp_sa, sp_fb, sp_sb, X,
    )
