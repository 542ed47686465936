"""Dynamical entanglement measures as conic programs.

Every function takes channels in the Choi representation of
:mod:`dynent.channels` and returns a :class:`MeasureResult` carrying the
value, the merged solver residuals and, where useful, an optimiser as a
certificate.  Quantities defined through LOCC superchannels are only
available in their PPT relaxation, hence the ``_ppt`` suffixes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import conic
from .channels import (
    STANDARD,
    Channel,
    bob_labels,
    max_entangled_vector,
    parallel,
    transpose_supermap,
)
from .conic import ConicProgram, bmat
from .errors import SolverError
from .operators import (
    LabeledOperator,
    SystemLabel,
    identity as identity_op,
    link_product,
    partial_transpose,
    tensor,
)
from .superchannels import OUT, PRIME, SLOT, Superchannel, superchannel_variable

FIDELITY_TOL = 1e-6
SLACK_TOL = 1e-6
M_CAP = 16


@dataclass
class MeasureResult:
    name: str
    value: float
    bits: bool = False
    status: str = conic.OPTIMAL
    residuals: dict = field(default_factory=dict)
    certificate: Any = None
    ppt_monotone: bool = False
    details: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.value)

    def to_json(self) -> dict:
        return {"measure": self.name, "value": self.value, "bits": self.bits, "status": self.status,
                "ppt_monotone": self.ppt_monotone, "residuals": dict(self.residuals), **self.details}


def merge_residuals(solutions) -> dict:
    """Worst-case residuals over a collection of solutions."""
    sols = [s for s in solutions if s is not None]
    if not sols:
        return {"solves": 0}
    def pick(key, fn):
        vals = [s.residuals.get(key, float("nan")) for s in sols]
        vals = [v for v in vals if not math.isnan(v)]
        return fn(vals) if vals else float("nan")
    return {"equality": pick("equality", max), "psd": pick("psd", min), "gap": pick("gap", max),
            "soc": pick("soc", min), "solves": len(sols)}


def _is_real(op: LabeledOperator) -> bool:
    return bool(np.max(np.abs(op.matrix.imag), initial=0.0) < 1e-14)


def _systems(op, labels):
    return [SystemLabel(n, op.dim(n)) for n in labels]


# -- diamond norm and negativities ---------------------------------------------------


def diamond_epigraph(p: ConicProgram, x, inputs, outputs, real=False, prefix=""):
    """Add the Watrous dual of the diamond norm of ``x``; return the objective.

    ``x`` is an expression or operator on ``inputs + outputs``.  The returned
    scalar expression ``(t0 + t1) / 2`` upper-bounds the diamond norm and
    equals it at the optimum.
    """
    if isinstance(x, LabeledOperator):
        x = conic.constant(p, x)
    y0 = p.variable(prefix + "Y0", systems=x.systems, real=real)
    y1 = p.variable(prefix + "Y1", systems=x.systems, real=real)
    t0, t1 = p.scalar(prefix + "t0"), p.scalar(prefix + "t1")
    xe = x.permute(y0.labels)
    p.add_psd(bmat([[y0, -xe], [-xe.dagger(), y1]]), "diamond-block")
    for y, t in ((y0, t0), (y1, t1)):
        marg = y.ptrace(outputs)
        p.add_psd(t.tensor_identity(marg.systems) - marg, "diamond-marginal")
    return (t0 + t1) * 0.5


def diamond_norm(m: Channel | LabeledOperator, inputs=None, outputs=None) -> MeasureResult:
    """Diamond norm of the Hermitian-preserving map with Choi ``m``."""
    if isinstance(m, Channel):
        choi, inputs, outputs = m.choi, m.inputs, m.outputs
    else:
        choi = m
    p = ConicProgram("diamond-norm")
    obj = diamond_epigraph(p, choi, list(inputs), list(outputs), real=_is_real(choi))
    p.minimize(obj)
    sol = conic.require_optimal(p.solve(), "diamond norm")
    return MeasureResult("diamond", sol.value, residuals=merge_residuals([sol]))


def negativity(n: Channel) -> MeasureResult:
    """``(||Upsilon_B[N]||_diamond - 1) / 2``."""
    d = diamond_norm(transpose_supermap(n, "B"))
    return MeasureResult("negativity", (d.value - 1) / 2, residuals=d.residuals, ppt_monotone=True,
                         details={"diamond": d.value})


def log_negativity(n: Channel) -> MeasureResult:
    """``log2 ||Upsilon_B[N]||_diamond`` in bits."""
    d = diamond_norm(transpose_supermap(n, "B"))
    return MeasureResult("log_negativity", math.log2(d.value), bits=True, residuals=d.residuals,
                         ppt_monotone=True, details={"diamond": d.value})


def max_log_negativity(n: Channel) -> MeasureResult:
    """Max-logarithmic negativity; the certificate is the optimal ``P``.

    Both sides of the operator-norm bound on ``(Tr_out P)^{T_B}`` are
    imposed, so ``t`` is the largest of the two marginal norms.
    """
    j = n.choi
    real = _is_real(j)
    bob = bob_labels(j.labels)
    p = ConicProgram("max-log-negativity")
    pv = p.variable("P", systems=j.systems, real=real)
    t = p.scalar("t")
    jg = partial_transpose(j, bob)
    pg = pv.ptranspose(bob)
    p.add_psd(pv, "P")
    p.add_psd(pg - jg, "upper")
    p.add_psd(pg + jg, "lower")
    marg = pv.ptrace(n.outputs)
    ti = t.tensor_identity(marg.systems)
    p.add_psd(ti - marg, "norm")
    mg = marg.ptranspose(bob_labels(n.inputs))
    p.add_psd(ti - mg, "norm-pt")
    p.add_psd(ti + mg, "norm-pt-lower")
    p.minimize(t)
    sol = conic.require_optimal(p.solve(), "max-log-negativity")
    cert = LabeledOperator(j.systems, sol["P"])
    return MeasureResult("max_log_negativity", math.log2(sol.value), bits=True,
                         residuals=merge_residuals([sol]), certificate=cert, ppt_monotone=True,
                         details={"t": sol.value})


# -- E_P and conversion distance -----------------------------------------------------


def e_measure_ppt(p: Channel, n: Channel) -> MeasureResult:
    """``max Tr[J^P J^{Theta[N]}]`` over PPT superchannels ``Theta``."""
    real = _is_real(p.choi) and _is_real(n.choi)
    prog = ConicProgram("e-measure-ppt")
    theta = superchannel_variable(prog, n.standard_dims(), p.standard_dims(), ppt=True, real=real)
    out = theta.link(n.choi.permute(SLOT))
    prog.maximize(out.inner(p.choi.relabel(PRIME)))
    sol = conic.require_optimal(prog.solve(), "E_P")
    cert = Superchannel(LabeledOperator(theta.systems, sol["Theta"]))
    return MeasureResult("e_measure_ppt", sol.value, residuals=merge_residuals([sol]), certificate=cert,
                         ppt_monotone=True)


def conversion_distance_ppt(n: Channel, m: Channel) -> MeasureResult:
    """``min_Theta ||Theta[N] - M||_diamond / 2`` over PPT superchannels."""
    real = _is_real(n.choi) and _is_real(m.choi)
    prog = ConicProgram("conversion-distance-ppt")
    theta = superchannel_variable(prog, n.standard_dims(), m.standard_dims(), ppt=True, real=real)
    diff = theta.link(n.choi.permute(SLOT)) - m.choi.relabel(PRIME)
    obj = diamond_epigraph(prog, diff, ["A0'", "B0'"], ["A1'", "B1'"], real=real)
    prog.minimize(obj)
    sol = conic.require_optimal(prog.solve(), "conversion distance")
    cert = Superchannel(LabeledOperator(theta.systems, sol["Theta"]))
    value = min(max(sol.value / 2, 0.0), 1.0)
    return MeasureResult("conversion_distance_ppt", value, residuals=merge_residuals([sol]), certificate=cert)


# -- single-shot exact distillation and cost -------------------------------------------


def default_m_max(n: Channel) -> int:
    dA0, dA1, dB0, dB1 = (n.choi.dim(x) if x in n.choi.labels else 1 for x in STANDARD)
    return max(1, min(dA0 * dA1, dB0 * dB1, M_CAP))


def _copies(n: Channel, copies: int) -> Channel:
    if copies == 1:
        return n
    if copies == 2:
        return parallel(n, n)
    raise ValueError("only one or two copies are supported")


def max_entangled_choi(m: int, labels=OUT) -> LabeledOperator:
    """Normalised ``phi+_m`` as a Choi on ``(A0, A1, B0, B1)``-shaped labels with trivial inputs."""
    v = max_entangled_vector(m) / math.sqrt(m)
    dims = dict(zip(labels, (1, m, 1, m)))
    return LabeledOperator([SystemLabel(x, dims[x]) for x in labels], np.outer(v, v.conj()))


def distill_fidelity(n: Channel, m: int, method: str = "twirled") -> conic.Solution:
    """Best ``phi+_m`` fidelity of ``Theta[N]`` over PPT superchannels.

    ``twirled`` uses the reduction to isotropic outputs, where the
    superchannel is ``Z (x) phi+_m + W (x) (1 - phi+_m)``; ``full`` optimises
    the whole superchannel Choi (feasible only for tiny instances).
    """
    j = n.choi
    real = _is_real(j)
    p = ConicProgram(f"distill-{method}-m{m}")
    if method == "full":
        theta = superchannel_variable(p, n.standard_dims(), (1, m, 1, m), ppt=True, real=real)
        out = theta.link(j.permute(SLOT))
        p.maximize(out.inner(max_entangled_choi(m)))
        return p.solve()
    bob = bob_labels(j.labels)
    z = p.variable("Z", systems=j.systems, real=real)
    w = p.variable("W", systems=j.systems, real=real)
    mv = p.variable("M", systems=_systems(j, n.inputs), real=real)
    p.add_psd(z, "Z")
    p.add_psd(w, "W")
    p.add_equality(z + w * (m * m - 1) - mv.tensor_identity(_systems(j, n.outputs)), label="marginal")
    p.add_equality(mv.trace(), 1.0, label="normalization")
    zg, wg = z.ptranspose(bob), w.ptranspose(bob)
    p.add_psd(zg + wg * (m - 1), "ppt-sym")
    p.add_psd(wg * (m + 1) - zg, "ppt-anti")
    jt = LabeledOperator(j.systems, j.matrix.T)
    p.maximize(z.inner(jt))
    return p.solve()


def cost_slack(n: Channel, m: int, method: str = "twirled") -> conic.Solution:
    """Smallest PT-slack ``s`` making ``prep(phi+_m) -> N`` exact under a superchannel.

    The conversion is PPT-feasible iff the optimum is ``<= 0``; the slack is
    added to the partial-transpose cone only.
    """
    j = n.choi
    real = _is_real(j)
    p = ConicProgram(f"cost-{method}-m{m}")
    s = p.scalar("s")
    if method == "full":
        theta = superchannel_variable(p, (1, m, 1, m), n.standard_dims(), ppt=False, real=real)
        p.add_psd(theta.ptranspose(bob_labels(theta.labels)) + s.tensor_identity(theta.systems), "ppt")
        out = theta.link(max_entangled_choi(m, SLOT))
        p.add_equality(out - j.permute(STANDARD).relabel(PRIME), label="exact")
        p.minimize(s)
        return p.solve()
    bob = bob_labels(j.labels)
    y = p.variable("Y", systems=j.systems, real=real)
    p.add_psd(y, "Y")
    marg = y.ptrace(n.outputs)
    p.add_equality(marg - identity_op(marg.systems), label="trace-preserving")
    xg = partial_transpose(j, bob)
    yg = y.ptranspose(bob)
    si = s.tensor_identity(j.systems)
    p.add_psd(yg * (m - 1) + xg + si, "ppt-sym")
    p.add_psd(yg * (m + 1) - xg + si, "ppt-anti")
    p.minimize(s)
    return p.solve()


def exact_distill_single_shot(n: Channel, m_max: int | None = None, method: str = "twirled",
                              copies: int = 1) -> MeasureResult:
    """Largest ``m`` with ``N -> phi+_m`` exactly under a PPT superchannel.

    ``m`` descends from ``m_max``; a conversion counts as exact when the
    optimal fidelity is within ``FIDELITY_TOL`` of one.  Solver failures
    count as infeasible and raise a warning.  With ``copies=2`` the search
    runs on ``N (x) N`` and the value is per copy.
    """
    nn = _copies(n, copies)
    m_max = m_max or default_m_max(nn)
    trace, sols = [], []
    best = 1
    for m in range(m_max, 1, -1):
        sol = distill_fidelity(nn, m, method)
        sols.append(sol)
        if sol.status != conic.OPTIMAL:
            warnings.warn(f"distillation SDP at m={m} ended with {sol.status}; treating as infeasible")
            trace.append({"m": m, "status": sol.status})
            continue
        trace.append({"m": m, "fidelity": sol.value})
        if sol.value >= 1 - FIDELITY_TOL:
            best = m
            break
    ok = [s for s in sols if s.status == conic.OPTIMAL]
    return MeasureResult("exact_distill_single_shot", math.log2(best) / copies, bits=True,
                         residuals=merge_residuals(ok), details={"m": best, "copies": copies, "search": trace})


def exact_cost_single_shot(n: Channel, m_max: int | None = None, method: str = "twirled",
                           copies: int = 1) -> MeasureResult:
    """Smallest ``m`` with ``phi+_m -> N`` exactly under a PPT superchannel."""
    nn = _copies(n, copies)
    m_max = m_max or default_m_max(nn)
    trace, sols = [], []
    for m in range(1, m_max + 1):
        sol = cost_slack(nn, m, method)
        sols.append(sol)
        if sol.status != conic.OPTIMAL:
            warnings.warn(f"cost SDP at m={m} ended with {sol.status}; treating as infeasible")
            trace.append({"m": m, "status": sol.status})
            continue
        trace.append({"m": m, "slack": sol.value})
        if sol.value <= SLACK_TOL:
            ok = [s for s in sols if s.status == conic.OPTIMAL]
            return MeasureResult("exact_cost_single_shot", math.log2(m) / copies, bits=True,
                                 residuals=merge_residuals(ok), details={"m": m, "copies": copies, "search": trace})
    raise SolverError(f"no exact PPT simulation found up to m={m_max}", sols[-1] if sols else None)


# -- entanglement generation --------------------------------------------------------


def _reference_name(label: str) -> str:
    return label + "r"


def _witness_from(sigma: LabeledOperator) -> tuple[LabeledOperator, float]:
    g = partial_transpose(sigma, bob_labels(sigma.labels))
    w, u = np.linalg.eigh((g.matrix + g.matrix.conj().T) / 2)
    sign = np.where(w >= 0, 1.0, -1.0)
    return LabeledOperator(g.systems, (u * sign) @ u.conj().T), float(np.sum(np.abs(w)))


SEESAW_SIDE = 36


def egen_ppt_lower_bound(n: Channel, rounds: int = 10, seed=0, restarts: int = 5,
                         references: str = "auto") -> MeasureResult:
    """See-saw lower bound on the log-negativity a channel can create from PPT inputs.

    Each input system gets a same-party reference of equal dimension.  The
    first restart starts from maximally entangled input/reference pairs
    (a PPT state); later restarts start from random sign witnesses.  Each
    round maximises ``Tr[W sigma^Gamma]`` over PPT inputs, then resets ``W``
    to the sign of ``sigma^Gamma``.  Real channels keep every iterate real.

    ``references`` is ``"full"`` (one reference per input), ``"none"``, or
    ``"auto"``: full unless the input state would exceed side
    ``SEESAW_SIDE``.  Any choice gives a valid lower bound; smaller
    references only make it looser.  A step the solver cannot certify ends
    its restart and is recorded in ``details["failures"]``.
    """
    j = n.choi
    real = _is_real(j)
    rng = np.random.default_rng(seed)
    if references == "auto":
        references = "full" if n.d_in ** 2 <= SEESAW_SIDE else "none"
    if references not in ("full", "none"):
        raise ValueError(f"unknown reference mode {references!r}")
    refs = [SystemLabel(_reference_name(x), j.dim(x)) for x in n.inputs] if references == "full" else []
    in_sys = _systems(j, n.inputs)
    rho_sys = refs + in_sys
    bob_rho = bob_labels([s.name for s in rho_sys])
    out_sys = refs + _systems(j, n.outputs)
    sols = []
    best, best_rho, history, failures = 1.0, None, [], []

    def evaluate(rho):
        sigma = link_product(rho, j)
        return _witness_from(sigma)

    for r in range(restarts):
        if r == 0:
            rho = LabeledOperator([], [[1.0]])
            for k, s in enumerate(in_sys):
                if refs:
                    v = max_entangled_vector(s.dim) / math.sqrt(s.dim)
                    rho = tensor(rho, LabeledOperator([refs[k], s], np.outer(v, v)))
                else:
                    rho = tensor(rho, LabeledOperator([s], np.eye(s.dim) / s.dim))
            w, val = evaluate(rho)
        else:
            d = int(np.prod([s.dim for s in out_sys]))
            z = rng.standard_normal((d, d))
            if not real:
                z = z + 1j * rng.standard_normal((d, d))
            q, _ = np.linalg.qr(z)
            signs = rng.choice([-1.0, 1.0], size=d)
            w = LabeledOperator(out_sys, (q * signs) @ q.conj().T)
            rho, val = None, 0.0
        run = [val]
        for _ in range(rounds):
            p = ConicProgram("egen-seesaw")
            # for real J and W a real optimiser exists (average rho with its conjugate)
            rv = p.variable("rho", systems=rho_sys, real=real and _is_real(w))
            p.add_psd(rv, "state")
            p.add_psd(rv.ptranspose(bob_rho), "ppt")
            p.add_equality(rv.trace(), 1.0, label="trace")
            wg = partial_transpose(w, bob_labels(w.labels))
            p.maximize(rv.link(j).inner(wg))
            sol = p.solve()
            if sol.status != conic.OPTIMAL:
                failures.append({"restart": r, "status": sol.status, "residuals": sol.residuals})
                break
            sols.append(sol)
            mat = sol["rho"]
            new_rho = LabeledOperator(rho_sys, (mat + mat.conj().T) / 2)
            w, new_val = evaluate(new_rho)
            improved = new_val - val
            if rho is None or new_val >= val:
                rho, val = new_rho, new_val
            run.append(val)
            if rho is not None and improved <= 1e-8 * max(1.0, val):
                break
        history.append(run)
        if rho is not None and val > best:
            best, best_rho = val, rho
    value = max(math.log2(best), 0.0)
    return MeasureResult("egen_ppt_lower_bound", value, bits=True, residuals=merge_residuals(sols),
                         certificate=best_rho, details={"trace_norm": best, "history": history,
                                                        "references": references, "failures": failures})


@dataclass
class ChainReport:
    distill_bits: float
    cost_bits: float
    lnmax: float
    egen: float
    violations: list
    residuals: dict

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {"passed": self.passed, "distill": self.distill_bits, "cost": self.cost_bits,
                "lnmax": self.lnmax, "egen": self.egen, "violations": list(self.violations),
                "residuals": dict(self.residuals)}


def check_cost_distill_inequality(n: Channel, tol: float = 1e-4, m_max: int | None = None,
                                  rounds: int = 10, seed=0) -> ChainReport:
    """Check ``egen <= LN_max <= cost`` and ``distill <= cost`` at one copy."""
    d = exact_distill_single_shot(n, m_max)
    c = exact_cost_single_shot(n, m_max)
    l = max_log_negativity(n)
    e = egen_ppt_lower_bound(n, rounds=rounds, seed=seed)
    bad = []
    if d.value > c.value + tol:
        bad.append("distill > cost")
    if e.value > l.value + tol:
        bad.append("egen > lnmax")
    if l.value > c.value + tol:
        bad.append("lnmax > cost")
    res = {}
    for r in (d, c, l, e):
        for k, v in r.residuals.items():
            if k == "solves":
                res[k] = res.get(k, 0) + v
            elif k in ("psd", "soc"):
                res[k] = min(res.get(k, v), v)
            else:
                res[k] = max(res.get(k, v), v)
    return ChainReport(d.value, c.value, l.value, e.value, bad, res)
