"""Index bookkeeping for operators on tensor-product spaces.

Every structural operation (subsystem permutation, partial transpose, partial
trace) is expressed as a *gather*: an integer array telling, for each entry of
the result, which entries of the row-major flattened input contribute.  The
same gathers drive the numeric routines in :mod:`dynent.operators` and the
sparse linear maps used to build conic programs.
"""

from functools import lru_cache
from math import prod

import numpy as np


@lru_cache(maxsize=512)
def permute_gather(dims, perm, transposed=()):
    """Source index of every entry after reordering systems to ``perm``.

    Systems listed in ``transposed`` (positions in the *input*) additionally
    have their row and column indices exchanged.
    """
    n = len(dims)
    d = prod(dims)
    idx = np.arange(d * d).reshape(tuple(dims) * 2)
    axes = list(range(2 * n))
    for s in transposed:
        axes[s], axes[n + s] = n + s, s
    idx = idx.transpose(axes)
    idx = idx.transpose(list(perm) + [n + p for p in perm])
    out = idx.reshape(-1)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=512)
def trace_gather(dims, traced):
    """Gather of shape (K*K, T): result entry i is the sum of ``flat[g[i]]``."""
    n = len(dims)
    traced = tuple(sorted(traced))
    kept = [i for i in range(n) if i not in traced]
    d = prod(dims)
    kd = prod(dims[i] for i in kept)
    td = prod(dims[i] for i in traced)
    idx = np.arange(d * d).reshape(tuple(dims) * 2)
    order = kept + [n + i for i in kept] + list(traced) + [n + i for i in traced]
    idx = idx.transpose(order).reshape(kd, kd, td, td)
    out = np.ascontiguousarray(np.diagonal(idx, axis1=2, axis2=3)).reshape(kd * kd, td)
    out.setflags(write=False)
    return out


def permute(mat, dims, perm, transposed=()):
    d = mat.shape[0]
    g = permute_gather(tuple(dims), tuple(perm), tuple(transposed))
    return mat.reshape(-1)[g].reshape(d, d)


def ptrace(mat, dims, traced):
    if not traced:
        return mat
    g = trace_gather(tuple(dims), tuple(traced))
    k = int(round(np.sqrt(g.shape[0])))
    return mat.reshape(-1)[g].sum(axis=1).reshape(k, k)


def link_kernel(cdims, vdims, shared_c, shared_v):
    """Index arrays for the link product of a constant C with a variable V.

    Returns ``(rows, cols, cidx, out_dims)`` such that

        out.flat[rows] += C.flat[cidx] * V.flat[cols]

    realises ``Tr_s[(C^{T_s} (x) I)(I (x) V)]`` where ``s`` are the shared
    systems (given as positions in each operand, paired in order).  The
    result carries C's remaining systems followed by V's remaining systems.
    """
    cdims, vdims = tuple(cdims), tuple(vdims)
    crest = [i for i in range(len(cdims)) if i not in shared_c]
    vrest = [i for i in range(len(vdims)) if i not in shared_v]
    xr = prod(cdims[i] for i in crest)
    yr = prod(vdims[i] for i in vrest)
    s = prod(cdims[i] for i in shared_c)
    # C reordered to (crest, shared) and V to (shared, vrest)
    cperm = tuple(crest) + tuple(shared_c)
    vperm = tuple(shared_v) + tuple(vrest)
    cg = permute_gather(cdims, cperm).reshape(xr, s, xr, s)
    vg = permute_gather(vdims, vperm).reshape(s, yr, s, yr)
    # out[a, b, a2, b2] = sum_{t, t2} C[a, t2, a2, t] V[t2, b, t, b2]
    a, b, a2, b2, t, t2 = np.ix_(*(np.arange(n) for n in (xr, yr, xr, yr, s, s)))
    shape = (xr, yr, xr, yr, s, s)
    rows = np.broadcast_to(((a * yr + b) * xr + a2) * yr + b2, shape)
    cidx = np.broadcast_to(cg[a, t2, a2, t], shape)
    cols = np.broadcast_to(vg[t2, b, t, b2], shape)
    out_dims = tuple(cdims[i] for i in crest) + tuple(vdims[i] for i in vrest)
    return rows.reshape(-1), cols.reshape(-1), cidx.reshape(-1), out_dims
