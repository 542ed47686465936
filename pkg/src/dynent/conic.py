"""Semidefinite programs over Hermitian matrix variables.

A :class:`ConicProgram` collects Hermitian (or real symmetric) matrix
variables, affine equality constraints, positive-semidefiniteness
memberships of affine expressions and a real-linear objective.  Expressions
are affine maps from the real parameter vector of all variables to complex
matrices, stored as sparse coefficient matrices over the row-major
flattening, so partial traces, partial transposes and link products compose
by sparse matrix products.

Parametrisation
---------------
A Hermitian variable of side ``n`` has ``n**2`` real parameters: the
diagonal, then the real and imaginary parts of the strict upper triangle.  A
real symmetric variable has ``n(n+1)/2``.  The objective ``Re Tr(C X)`` is
evaluated directly in parameter space, so no trace factor appears there.

Complex PSD memberships are passed to the backend through the real embedding
``H = R + iS  ->  [[R, -S], [S, R]]`` (see :func:`embed_hermitian`), which is
PSD iff ``H`` is and has every eigenvalue of ``H`` twice, so
``Tr(embed(H)) = 2 Tr(H)``.  Expressions whose coefficients are all real are
passed as real symmetric cones without embedding.

The backend is the Clarabel interior-point solver over symmetric cones; the
solution record reports residuals recomputed from the primal point in the
original (complex) coordinates.
"""

from __future__ import annotations

import contextlib
import json
import os
from dataclasses import dataclass, field
from math import prod

import numpy as np
import scipy.sparse as sp

from . import _tensor
from .errors import ShapeError, SolverError
from .operators import LabeledOperator, SystemLabel

FEAS_TOL = 1e-8
GAP_TOL = 1e-7
MAX_ITER = 500

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
FAILED = "numerical-failure"


def _sparse_rows(coef, idx):
    return coef[np.asarray(idx).reshape(-1)]


class Expression:
    """Affine matrix-valued expression ``const + sum_k coef[:, k] * x_k``.

    ``coef`` has one row per entry of the row-major flattened matrix.  When
    ``systems`` is set, structural operations can address subsystems by label
    exactly like :class:`~dynent.operators.LabeledOperator`.
    """

    __array_priority__ = 100

    def __init__(self, program, side, const, coef, systems=None):
        self.program = program
        self.side = side
        self.const = np.asarray(const, dtype=complex).reshape(side * side)
        self.coef = coef.tocsr()
        if systems is not None:
            systems = tuple(systems)
            if prod(s.dim for s in systems) != side:
                raise ShapeError("systems do not match expression side")
        self.systems = systems

    # -- helpers ------------------------------------------------------------

    @property
    def labels(self):
        return tuple(s.name for s in self.systems)

    @property
    def dims(self):
        return tuple(s.dim for s in self.systems)

    def _coef(self):
        n = self.program.nparams
        if self.coef.shape[1] < n:
            self.coef.resize((self.coef.shape[0], n))
        return self.coef

    def _positions(self, labels):
        index = {name: i for i, name in enumerate(self.labels)}
        return tuple(index[name] for name in labels)

    def _map(self, gather, side, systems=None, sum_axis=False):
        g = np.asarray(gather)
        coef = self._coef()
        if sum_axis:
            t = g.shape[1]
            rows = np.repeat(np.arange(g.shape[0]), t)
            sel = sp.csr_matrix((np.ones(g.size), (rows, g.reshape(-1))), shape=(g.shape[0], self.side**2))
            return Expression(self.program, side, sel @ self.const, sel @ coef, systems)
        return Expression(self.program, side, self.const[g], _sparse_rows(coef, g), systems)

    def _wrap(self, other):
        if isinstance(other, Expression):
            return other
        if isinstance(other, LabeledOperator):
            other_exp = constant(self.program, other)
            return other_exp
        mat = np.asarray(other, dtype=complex)
        if mat.ndim == 0:
            mat = mat * np.eye(self.side)
        return Expression(self.program, self.side, mat, sp.csr_matrix((self.side**2, self.program.nparams)), self.systems)

    def _aligned(self, other):
        other = self._wrap(other)
        if self.systems is not None and other.systems is not None and other.labels != self.labels:
            other = other.permute(self.labels)
        if other.side != self.side:
            raise ShapeError(f"side mismatch {self.side} vs {other.side}")
        return other

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        other = self._aligned(other)
        return Expression(self.program, self.side, self.const + other.const, self._coef() + other._coef(), self.systems)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._aligned(other)
        return Expression(self.program, self.side, self.const - other.const, self._coef() - other._coef(), self.systems)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return Expression(self.program, self.side, -self.const, -self._coef(), self.systems)

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        return Expression(self.program, self.side, self.const * c, self._coef() * c, self.systems)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / c)

    def dagger(self):
        k = self.side
        g = np.arange(k * k).reshape(k, k).T.reshape(-1)
        return Expression(self.program, k, self.const[g].conj(), _sparse_rows(self._coef(), g).conj(), self.systems)

    def hermitian_part(self):
        return (self + self.dagger()) * 0.5

    def __rshift__(self, other):
        """``a >> b`` records nothing; it returns ``a - b`` for use with ``psd``."""
        return self - other

    # -- structure ------------------------------------------------------------

    def permute(self, order):
        order = tuple(order)
        perm = self._positions(order)
        g = _tensor.permute_gather(self.dims, perm)
        return self._map(g, self.side, [self.systems[p] for p in perm])

    def ptranspose(self, labels):
        pos = tuple(sorted(self._positions(labels)))
        if not pos:
            return self
        g = _tensor.permute_gather(self.dims, tuple(range(len(self.dims))), pos)
        return self._map(g, self.side, self.systems)

    def ptrace(self, labels):
        pos = tuple(sorted(self._positions(labels)))
        if not pos:
            return self
        g = _tensor.trace_gather(self.dims, pos)
        keep = [s for i, s in enumerate(self.systems) if i not in pos]
        side = prod(s.dim for s in keep)
        return self._map(g, side, keep, sum_axis=True)

    def tensor_identity(self, systems, left=False):
        """``self (x) 1`` (or ``1 (x) self`` when ``left``) on extra ``systems``."""
        systems = tuple(SystemLabel(*s) if not isinstance(s, SystemLabel) else s for s in systems)
        d = prod(s.dim for s in systems)
        k = self.side
        # vec(A (x) B) for row-major flattening: rows indexed by (i, a, j, b)
        if left:
            i, a, j, b = np.ix_(np.arange(d), np.arange(k), np.arange(d), np.arange(k))
            shape = (d, k, d, k)
            rows = np.broadcast_to(((i * k + a) * d + j) * k + b, shape)
            src = np.broadcast_to(a * k + b, shape)
            mask = np.broadcast_to(i == j, shape)
            new_systems = systems + (self.systems or ())
        else:
            a, i, b, j = np.ix_(np.arange(k), np.arange(d), np.arange(k), np.arange(d))
            shape = (k, d, k, d)
            rows = np.broadcast_to(((a * d + i) * k + b) * d + j, shape)
            src = np.broadcast_to(a * k + b, shape)
            mask = np.broadcast_to(i == j, shape)
            new_systems = (self.systems or ()) + systems
        rows, src = rows[mask], src[mask]
        side = k * d
        lin = sp.csr_matrix((np.ones(rows.size), (rows, src)), shape=(side * side, k * k))
        keep = self.systems is not None or k == 1
        return Expression(self.program, side, lin @ self.const, lin @ self._coef(), new_systems if keep else None)

    def link(self, const: LabeledOperator, const_first=True):
        """Link product with a constant operator over the shared labels.

        The result carries the constant's unshared systems followed by this
        expression's unshared systems.
        """
        shared = [n for n in const.labels if n in set(self.labels)]
        sc = const._positions(shared)
        sv = self._positions(shared)
        for n in shared:
            if const.dim(n) != dict(zip(self.labels, self.dims))[n]:
                raise ShapeError(f"system {n!r} dimension mismatch in link product")
        rows, cols, cidx, out_dims = _tensor.link_kernel(const.dims, self.dims, sc, sv)
        vals = const.matrix.reshape(-1)[cidx]
        side = prod(out_dims)
        lin = sp.csr_matrix((vals, (rows, cols)), shape=(side * side, self.side**2))
        systems = [s for s in const.systems if s.name not in shared] + [s for s in self.systems if s.name not in shared]
        return Expression(self.program, side, lin @ self.const, lin @ self._coef(), systems)

    def trace(self):
        k = self.side
        idx = np.arange(k) * (k + 1)
        row = sp.csr_matrix((np.ones(k), (np.zeros(k, dtype=int), idx)), shape=(1, k * k))
        return Expression(self.program, 1, row @ self.const, row @ self._coef())

    def inner(self, mat):
        """Real-linear functional ``Re Tr(mat @ self)`` as a 1x1 expression."""
        if isinstance(mat, LabeledOperator):
            if self.systems is not None:
                mat = mat.permute(self.labels)
            mat = mat.matrix
        mat = np.asarray(mat, dtype=complex)
        w = mat.T.reshape(1, -1)
        const = (w @ self.const).real
        coef = sp.csr_matrix(w) @ self._coef()
        return Expression(self.program, 1, const, sp.csr_matrix(coef.real))

    def block(self):
        return self

    # -- evaluation -----------------------------------------------------------

    def value(self, x):
        x = np.asarray(x, dtype=float)
        coef = self._coef()
        v = self.const + coef @ x
        return v.reshape(self.side, self.side)

    def is_real(self):
        c = self._coef()
        return (not np.any(np.abs(self.const.imag) > 0)) and (c.nnz == 0 or not np.any(np.abs(c.data.imag) > 0))


def bmat(blocks):
    """Block matrix of expressions (or constants / ``None`` for zero blocks)."""
    program = next(b.program for row in blocks for b in row if isinstance(b, Expression))
    nb = len(blocks)
    sides = []
    for r in range(nb):
        s = next((b.side if isinstance(b, Expression) else np.asarray(b).shape[0]) for b in blocks[r] if b is not None)
        sides.append(s)
    offsets = np.concatenate([[0], np.cumsum(sides)])
    total = int(offsets[-1])
    rows_l, coef_l, const = [], [], np.zeros(total * total, dtype=complex)
    for r in range(nb):
        for c in range(nb):
            b = blocks[r][c]
            if b is None:
                continue
            if not isinstance(b, Expression):
                b = Expression(program, sides[r], np.asarray(b, dtype=complex).reshape(-1),
                               sp.csr_matrix((sides[r] * sides[c], program.nparams))) if sides[r] == sides[c] else None
                if b is None:
                    raise ShapeError("rectangular constant blocks are not supported")
            if b.side != sides[r] or b.side != sides[c]:
                raise ShapeError("block sizes do not line up")
            i, j = np.meshgrid(np.arange(b.side), np.arange(b.side), indexing="ij")
            tgt = ((i + offsets[r]) * total + (j + offsets[c])).reshape(-1)
            const[tgt] += b.const
            rows_l.append(tgt)
            coef_l.append(b._coef())
    n = program.nparams
    lin_parts = []
    for tgt, coef in zip(rows_l, coef_l):
        coef = coef.tocoo()
        lin_parts.append(sp.csr_matrix((coef.data, (tgt[coef.row], coef.col)), shape=(total * total, n)))
    coef = sum(lin_parts[1:], lin_parts[0]) if lin_parts else sp.csr_matrix((total * total, n))
    return Expression(program, total, const, coef)


def constant(program, op) -> Expression:
    if isinstance(op, LabeledOperator):
        k = op.side
        return Expression(program, k, op.matrix, sp.csr_matrix((k * k, program.nparams)), op.systems)
    mat = np.atleast_2d(np.asarray(op, dtype=complex))
    k = mat.shape[0]
    return Expression(program, k, mat, sp.csr_matrix((k * k, program.nparams)))


def _param_map(side, real):
    """Sparse map from real parameters to the row-major flattened matrix."""
    k = side
    iu, ju = np.triu_indices(k, 1)
    rows, cols, vals = [], [], []
    diag = np.arange(k)
    rows.append(diag * (k + 1)); cols.append(diag); vals.append(np.ones(k, dtype=complex))
    m = iu.size
    re = k + np.arange(m)
    rows += [iu * k + ju, ju * k + iu]
    cols += [re, re]
    vals += [np.ones(m, dtype=complex), np.ones(m, dtype=complex)]
    npar = k + m
    if not real:
        im = k + m + np.arange(m)
        rows += [iu * k + ju, ju * k + iu]
        cols += [im, im]
        vals += [1j * np.ones(m), -1j * np.ones(m)]
        npar += m
    lin = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(k * k, npar))
    return lin, npar


@dataclass
class Variable:
    name: str
    side: int
    real: bool
    offset: int
    nparams: int
    lin: sp.csr_matrix
    systems: tuple | None = None


@dataclass
class Solution:
    status: str
    value: float
    primal: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    iterations: int = 0
    solve_time: float = 0.0
    primal_objective: float = float("nan")
    dual_objective: float = float("nan")
    cone_sides: tuple = ()

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def __getitem__(self, name):
        return self.primal[name]


def embed_hermitian(h) -> np.ndarray:
    """Real symmetric embedding ``[[Re H, -Im H], [Im H, Re H]]``."""
    h = np.asarray(h, dtype=complex)
    r, s = h.real, h.imag
    return np.block([[r, -s], [s, r]])


def extract_hermitian(m) -> np.ndarray:
    """Inverse of :func:`embed_hermitian` (averaging the redundant blocks)."""
    m = np.asarray(m, dtype=float)
    k = m.shape[0] // 2
    r = (m[:k, :k] + m[k:, k:]) / 2
    s = (m[k:, :k] - m[:k, k:]) / 2
    return r + 1j * s


def _svec_rows(k):
    """Row-major flat indices and scale factors of Clarabel's svec ordering.

    Clarabel stacks the upper triangle column by column, scaling off-diagonal
    entries by sqrt(2).
    """
    jj, ii = [], []
    for j in range(k):
        ii.extend(range(j + 1))
        jj.extend([j] * (j + 1))
    ii, jj = np.array(ii), np.array(jj)
    scale = np.where(ii == jj, 1.0, np.sqrt(2.0))
    return ii, jj, scale


class ConicProgram:
    """Linear objective over Hermitian blocks with equalities and PSD cones."""

    def __init__(self, name: str = "program"):
        self.name = name
        self.variables: dict[str, Variable] = {}
        self.nparams = 0
        self.equalities: list[tuple[Expression, str]] = []
        self.memberships: list[tuple[Expression, str]] = []
        self.socs: list[tuple[Expression, Expression, str]] = []
        self.objective: Expression | None = None
        self.sense = "min"

    # -- declaration ------------------------------------------------------------

    def variable(self, name, side=None, systems=None, real=False) -> Expression:
        """Declare a Hermitian (or, with ``real=True``, real symmetric) variable."""
        if name in self.variables:
            raise ValueError(f"variable {name!r} already declared")
        if systems is not None:
            systems = tuple(s if isinstance(s, SystemLabel) else SystemLabel(*s) for s in systems)
            side = prod(s.dim for s in systems)
        lin, npar = _param_map(side, real)
        var = Variable(name, side, real, self.nparams, npar, lin, systems)
        self.variables[name] = var
        self.nparams += npar
        coef = sp.hstack([sp.csr_matrix((side * side, var.offset)), lin]).tocsr()
        return Expression(self, side, np.zeros(side * side), coef, systems)

    def scalar(self, name) -> Expression:
        return self.variable(name, side=1, real=True)

    def add_equality(self, lhs: Expression, rhs=0.0, label="") -> None:
        expr = lhs - rhs if not np.isscalar(rhs) or rhs != 0 else lhs
        self.equalities.append((expr, label))

    def add_psd(self, expr: Expression, label="") -> None:
        self.memberships.append((expr, label))

    def add_soc(self, t: Expression, vec_expr: Expression, label="") -> None:
        """``Frobenius norm of vec_expr <= t`` for a scalar expression ``t``."""
        self.socs.append((t, vec_expr, label))

    def minimize(self, expr: Expression) -> None:
        self.objective, self.sense = expr, "min"

    def maximize(self, expr: Expression) -> None:
        self.objective, self.sense = expr, "max"

    # -- compilation -------------------------------------------------------------

    def _equality_rows(self):
        """Real equations ``A x = b`` from the Hermitian equality expressions."""
        a_parts, b_parts = [], []
        n = self.nparams
        for expr, _ in self.equalities:
            e = expr.hermitian_part()
            k = e.side
            iu, ju = np.triu_indices(k)
            flat = iu * k + ju
            coef = e._coef()[flat]
            const = e.const[flat]
            a_parts.append(sp.csr_matrix(coef.real))
            b_parts.append(-const.real)
            off = iu != ju
            if not e.is_real() and np.any(off):
                a_parts.append(sp.csr_matrix(coef[np.flatnonzero(off)].imag))
                b_parts.append(-const[off].imag)
        if not a_parts:
            return sp.csr_matrix((0, n)), np.zeros(0)
        a = sp.vstack([p if p.shape[1] == n else sp.hstack([p, sp.csr_matrix((p.shape[0], n - p.shape[1]))]) for p in a_parts]).tocsr()
        return a, np.concatenate(b_parts)

    def _cone_rows(self, expr):
        """``(M, h, side)`` with ``svec(embedded expr) = h + M x``."""
        e = expr.hermitian_part()
        k = e.side
        coef = e._coef()
        if e.is_real():
            ii, jj, scale = _svec_rows(k)
            flat = ii * k + jj
            m = sp.diags(scale) @ sp.csr_matrix(coef[flat].real)
            h = scale * e.const[flat].real
            return m.tocsr(), h, k, True
        ii, jj, scale = _svec_rows(2 * k)
        bi, bj = ii // k, jj // k
        i, j = ii % k, jj % k
        flat = i * k + j
        use_imag = bi != bj
        sign = np.where(bi == bj, 1.0, np.where(bi > bj, 1.0, -1.0))
        stacked = sp.vstack([sp.csr_matrix(coef.real), sp.csr_matrix(coef.imag)]).tocsr()
        src = flat + np.where(use_imag, k * k, 0)
        m = sp.diags(scale * sign) @ stacked[src]
        cst = np.where(use_imag, e.const[flat].imag, e.const[flat].real)
        h = scale * sign * cst
        return m.tocsr(), h, 2 * k, False

    def _objective_vector(self):
        n = self.nparams
        if self.objective is None:
            return np.zeros(n), 0.0
        obj = self.objective
        if obj.side != 1:
            raise ShapeError("objective must be a scalar expression (use .inner or .trace)")
        row = obj._coef().toarray().reshape(-1)
        q = row.real
        c0 = float(obj.const[0].real)
        if self.sense == "max":
            return -q, -c0
        return q, c0

    def to_json(self) -> str:
        """Self-describing dump of the compiled real program (sparse triplets)."""
        q, c0 = self._objective_vector()
        a_eq, b_eq = self._equality_rows()
        cones = []
        for expr, label in self.memberships:
            m, h, side, real = self._cone_rows(expr)
            mc = m.tocoo()
            cones.append({"type": "psd_svec", "side": side, "label": label, "embedded": not real,
                          "G": [mc.row.tolist(), mc.col.tolist(), mc.data.tolist()], "h": h.tolist()})
        ac = a_eq.tocoo()
        return json.dumps({
            "name": self.name,
            "sense": "min",
            "nparams": self.nparams,
            "variables": [{"name": v.name, "side": v.side, "real": v.real, "offset": v.offset,
                           "nparams": v.nparams} for v in self.variables.values()],
            "c": q.tolist(), "c0": c0,
            "A_eq": [ac.row.tolist(), ac.col.tolist(), ac.data.tolist()], "b_eq": b_eq.tolist(),
            "cones": cones,
            "svec": "upper triangle, column-major, off-diagonal scaled by sqrt(2); s = h + G x",
        })

    # -- solve ---------------------------------------------------------------------

    def solve(self, feas_tol=FEAS_TOL, gap_tol=GAP_TOL, max_iter=None, verbose=False) -> Solution:
        return solve(self, feas_tol=feas_tol, gap_tol=gap_tol, max_iter=max_iter, verbose=verbose)


def _max_iter_default():
    env = os.environ.get("DYNENT_SOLVER_ITERS")
    return int(env) if env else MAX_ITER


def solve(p: ConicProgram, feas_tol=FEAS_TOL, gap_tol=GAP_TOL, max_iter=None, verbose=False) -> Solution:
    """Solve ``p`` with Clarabel and return a residual-checked :class:`Solution`.

    ``optimal`` is only reported when the recomputed equality residual, PSD
    residual and duality gap all meet the contract tolerances; otherwise the
    status is ``numerical-failure`` and the residuals explain why.
    """
    import clarabel

    n = p.nparams
    q, c0 = p._objective_vector()
    a_eq, b_eq = p._equality_rows()
    a_parts, b_parts, cones = [], [], []
    if a_eq.shape[0]:
        a_parts.append(a_eq)
        b_parts.append(b_eq)
        cones.append(clarabel.ZeroConeT(a_eq.shape[0]))
    compiled, sides = [], []
    for expr, label in p.memberships:
        m, h, side, real = p._cone_rows(expr)
        sides.append(side)
        a_parts.append(-m)
        b_parts.append(h)
        cones.append(clarabel.PSDTriangleConeT(side))
        compiled.append((expr, label))
    for t, vec_expr, label in p.socs:
        e = vec_expr.hermitian_part()
        k = e.side
        iu, ju = np.triu_indices(k)
        flat = iu * k + ju
        w = np.where(iu == ju, 1.0, np.sqrt(2.0))
        coef = e._coef()[flat]
        rows = [t._coef().real, sp.diags(w) @ sp.csr_matrix(coef.real)]
        consts = [t.const.real, w * e.const[flat].real]
        if not e.is_real():
            off = np.flatnonzero(iu != ju)
            rows.append(sp.diags(w[off]) @ sp.csr_matrix(coef[off].imag))
            consts.append(w[off] * e.const[flat][off].imag)
        m = sp.vstack([sp.csr_matrix(r) for r in rows]).tocsr()
        h = np.concatenate(consts)
        a_parts.append(-m)
        b_parts.append(h)
        cones.append(clarabel.SecondOrderConeT(m.shape[0]))
    a_parts = [x if x.shape[1] == n else sp.hstack([x, sp.csr_matrix((x.shape[0], n - x.shape[1]))]) for x in a_parts]
    a = sp.vstack(a_parts).tocsc() if a_parts else sp.csc_matrix((0, n))
    b = np.concatenate(b_parts) if b_parts else np.zeros(0)
    pmat = sp.csc_matrix((n, n))

    settings = clarabel.DefaultSettings()
    settings.verbose = verbose
    settings.max_iter = max_iter or _max_iter_default()
    settings.tol_feas = feas_tol * 0.1
    settings.tol_gap_abs = gap_tol * 0.01
    settings.tol_gap_rel = gap_tol * 0.01
    settings.tol_ktratio = 1e-8
    solver = clarabel.DefaultSolver(pmat, q, a, b, cones, settings)
    res = solver.solve()
    status_name = str(res.status)

    x = np.asarray(res.x, dtype=float)
    if status_name in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        status = INFEASIBLE
    elif status_name in ("DualInfeasible", "AlmostDualInfeasible"):
        status = UNBOUNDED
    elif status_name in ("Solved", "AlmostSolved"):
        status = OPTIMAL
    else:
        status = FAILED

    sign = -1.0 if p.sense == "max" else 1.0
    primal_obj = sign * (float(res.obj_val) + c0)
    dual_obj = sign * (float(res.obj_val_dual) + c0)
    residuals = {"equality": float("nan"), "psd": float("nan"), "gap": float("nan"), "soc": float("nan")}
    primal = {}
    value = float("nan")
    if status in (OPTIMAL, FAILED) and x.size == n and np.all(np.isfinite(x)):
        eq_res = float(np.max(np.abs(a_eq @ x - b_eq), initial=0.0)) if a_eq.shape[0] else 0.0
        psd_res = float("inf")
        for expr, _ in compiled:
            v = expr.value(x)
            v = (v + v.conj().T) / 2
            psd_res = min(psd_res, float(np.linalg.eigvalsh(v)[0]))
        soc_res = float("inf")
        for t, vec_expr, _ in p.socs:
            soc_res = min(soc_res, float(t.value(x)[0, 0].real - np.linalg.norm(vec_expr.value(x))))
        gap = abs(primal_obj - dual_obj)
        residuals = {"equality": eq_res, "psd": psd_res if compiled else 0.0, "gap": gap,
                     "soc": soc_res if p.socs else 0.0}
        for var in p.variables.values():
            seg = x[var.offset:var.offset + var.nparams]
            mat = (var.lin @ seg).reshape(var.side, var.side)
            primal[var.name] = mat.real.copy() if var.real else mat
        value = primal_obj
        ok = eq_res <= 1e-7 and residuals["psd"] >= -1e-7 and gap <= gap_tol and residuals["soc"] >= -1e-7
        if status == OPTIMAL and not ok:
            status = FAILED
    sol = Solution(status=status, value=value, primal=primal, residuals=residuals,
                   iterations=int(res.iterations), solve_time=float(res.solve_time),
                   primal_objective=primal_obj, dual_objective=dual_obj, cone_sides=tuple(sides))
    for log in _RECORDERS:
        log.append((p.name, sol))
    return sol


_RECORDERS: list[list] = []


@contextlib.contextmanager
def recording():
    """Collect ``(program name, Solution)`` for every solve inside the block."""
    log: list = []
    _RECORDERS.append(log)
    try:
        yield log
    finally:
        _RECORDERS.remove(log)


def require_optimal(sol: Solution, what: str) -> Solution:
    if sol.status != OPTIMAL:
        raise SolverError(f"{what}: solver status {sol.status}, residuals {sol.residuals}", sol)
    return sol
