"""Quantum combs with bipartite slots.

An ``n``-comb is stored as its Choi matrix over, in temporal order,

    Ain Bin | A0_1 B0_1 | A1_1 B1_1 | ... | A0_n B0_n | A1_n B1_n | Aout Bout

where ``A0_j B0_j`` feed the channel plugged into slot ``j`` and
``A1_j B1_j`` carry its output back.  Labels starting with ``B`` are Bob's.
A one-slot comb is a superchannel with ``A0' B0' A1' B1'`` renamed to
``Ain Bin Aout Bout``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import prod
from typing import Mapping, Sequence

import numpy as np

from .channels import (
    STANDARD,
    Channel,
    bob_labels,
    is_ppt_channel,
    max_entangled_vector,
    random_ppt_channel,
    random_separable_channel,
)
from .errors import PreconditionError, ShapeError
from .operators import (
    LabeledOperator,
    SystemLabel,
    identity as identity_op,
    link_product,
    min_eigenvalue,
    operator_norm,
    partial_trace,
    partial_transpose,
    tensor,
)
from .superchannels import Superchannel, teleportation_channel

GLOBAL_IN = ("Ain", "Bin")
GLOBAL_OUT = ("Aout", "Bout")
COMB_TOL = 1e-8
PPT_TOL = 1e-7


def slot_labels(j: int) -> dict[str, str]:
    """Standard channel label -> comb label for slot ``j`` (1-based)."""
    return {n: f"{n}_{j}" for n in STANDARD}


def comb_order(n: int) -> list[str]:
    order = list(GLOBAL_IN)
    for j in range(1, n + 1):
        lab = slot_labels(j)
        order += [lab["A0"], lab["B0"], lab["A1"], lab["B1"]]
    return order + list(GLOBAL_OUT)


def _pad(op: LabeledOperator, labels) -> LabeledOperator:
    for n in labels:
        if n not in op.labels:
            op = tensor(op, LabeledOperator([SystemLabel(n, 1)], [[1.0]]))
    return op


class Comb:
    """Choi matrix of an ``n``-slot comb plus per-component metadata."""

    __slots__ = ("choi", "slots", "metadata")

    def __init__(self, choi: LabeledOperator, slots: int, metadata: Mapping | None = None):
        order = comb_order(slots)
        if sorted(choi.labels) != sorted(order):
            raise ShapeError(f"comb Choi must act on {order}, got {choi.labels}")
        object.__setattr__(self, "choi", choi.permute(order))
        object.__setattr__(self, "slots", int(slots))
        object.__setattr__(self, "metadata", dict(metadata or {}))

    def __setattr__(self, name, value):
        raise AttributeError("Comb is immutable")

    def __repr__(self):
        return f"Comb(slots={self.slots}, side={self.choi.side})"

    @property
    def alice(self) -> list[str]:
        return [n for n in self.choi.labels if n not in set(self.bob)]

    @property
    def bob(self) -> list[str]:
        return bob_labels(self.choi.labels)

    def slot_dims(self, j: int) -> tuple[int, ...]:
        lab = slot_labels(j)
        return tuple(self.choi.dim(lab[n]) for n in STANDARD)

    def to_json(self) -> dict:
        return {"kind": "comb", "slots": self.slots,
                "party": {"alice": self.alice, "bob": self.bob},
                "metadata": self.metadata, "choi": self.choi.to_json()}

    @classmethod
    def from_json(cls, data: Mapping) -> "Comb":
        return cls(LabeledOperator.from_json(data["choi"]), int(data["slots"]), data.get("metadata"))


@dataclass(frozen=True)
class CombReport:
    positivity: float
    levels: tuple
    normalization: float
    tol: float

    @property
    def passed(self) -> bool:
        return (self.positivity >= -self.tol and all(r <= self.tol for r in self.levels)
                and self.normalization <= self.tol)

    def to_json(self) -> dict:
        return {"passed": self.passed, "min_eigenvalue": self.positivity,
                "level_residuals": list(self.levels), "normalization_residual": self.normalization}


def validate_comb(c: Comb, tol: float = COMB_TOL) -> CombReport:
    """Positivity plus the recursive marginal conditions, one residual per level."""
    cur = c.choi
    residuals = []
    outs = [list(GLOBAL_OUT)]
    ins = []
    for j in range(c.slots, 0, -1):
        lab = slot_labels(j)
        ins.append([lab["A1"], lab["B1"]])
        outs.append([lab["A0"], lab["B0"]])
    ins.append(list(GLOBAL_IN))
    for o, i in zip(outs, ins):
        t = partial_trace(cur, o)
        d = prod(t.dim(n) for n in i)
        lower = partial_trace(t, i) / d
        expect = tensor(identity_op([SystemLabel(n, t.dim(n)) for n in i]), lower)
        residuals.append(operator_norm(t - expect))
        cur = lower
    norm = abs(cur.trace() - 1.0)
    return CombReport(min_eigenvalue(c.choi), tuple(residuals), float(norm), tol)


@dataclass(frozen=True)
class PPTCombCertificate:
    min_eigenvalue: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.min_eigenvalue >= -self.tol

    def to_json(self) -> dict:
        return {"passed": self.passed, "min_eigenvalue": self.min_eigenvalue, "tol": self.tol}


def is_ppt_comb(c: Comb, tol: float = PPT_TOL) -> PPTCombCertificate:
    """Partial transpose over every Bob label of the comb Choi."""
    return PPTCombCertificate(min_eigenvalue(partial_transpose(c.choi, c.bob)), tol)


def plug(c: Comb, channels: Sequence[Channel]) -> Channel:
    """Insert ``channels`` into the slots in temporal order.

    Returns the resulting standard channel ``Ain Bin -> Aout Bout``
    relabelled to ``A0 B0 -> A1 B1``; use ``.state()`` when the global
    input is trivial.
    """
    if len(channels) != c.slots:
        raise ShapeError(f"comb has {c.slots} slots, got {len(channels)} channels")
    cur = c.choi
    for j, n in enumerate(channels, start=1):
        if n.standard_dims() != c.slot_dims(j):
            raise ShapeError(f"slot {j} expects dims {c.slot_dims(j)}, got {n.standard_dims()}")
        cur = link_product(n.choi.permute(STANDARD).relabel(slot_labels(j)), cur)
    rename = {"Ain": "A0", "Bin": "B0", "Aout": "A1", "Bout": "B1"}
    return Channel(cur.relabel(rename).permute(STANDARD))


def build_comb_from_sequence(channels: Sequence[Channel], memory: Mapping[str, int] | None = None) -> Comb:
    """Comb realised by ``E_1, ..., E_{n+1}`` connected through memories.

    Each ``E_k`` must already carry comb labels: ``E_1`` maps ``Ain Bin`` to
    ``A0_1 B0_1`` plus memories, ``E_k`` maps ``A1_{k-1} B1_{k-1}`` plus
    memories to ``A0_k B0_k`` plus memories, and ``E_{n+1}`` ends in
    ``Aout Bout``.  Missing labels are taken as trivial.  Memory systems are
    the labels an output of one component shares with an input of a later
    one; ``memory``, when given, must match them.  Per-component PPT flags
    are stored in ``metadata["component_ppt"]``.
    """
    n = len(channels) - 1
    if n < 0:
        raise ShapeError("need at least one component")
    order = set(comb_order(n))
    cur = None
    mem = {}
    for k, e in enumerate(channels):
        for x in e.outputs:
            if x not in order:
                mem[x] = e.choi.dim(x)
        cur = e.choi if cur is None else link_product(cur, e.choi)
    if memory is not None and dict(memory) != mem:
        raise ShapeError(f"declared memory {dict(memory)} does not match wiring {mem}")
    leftover = [x for x in cur.labels if x not in order]
    if leftover:
        raise ShapeError(f"unconnected systems {leftover}")
    cur = _pad(cur, comb_order(n))
    flags = [bool(is_ppt_channel(e)) for e in channels]
    return Comb(cur, n, {"component_ppt": flags, "memory": mem})


def comb_from_superchannel(s: Superchannel) -> Comb:
    rename = {"A0'": "Ain", "B0'": "Bin", "A1'": "Aout", "B1'": "Bout", **slot_labels(1)}
    return Comb(s.choi.relabel(rename), 1)


def comb_to_superchannel(c: Comb) -> Superchannel:
    if c.slots != 1:
        raise ShapeError("only one-slot combs are superchannels")
    rename = {"Ain": "A0'", "Bin": "B0'", "Aout": "A1'", "Bout": "B1'",
              **{v: k for k, v in slot_labels(1).items()}}
    return Superchannel(c.choi.relabel(rename))


# -- distillation experiments ---------------------------------------------------------


@dataclass
class DistillationReport:
    min_pt_eigenvalue: float
    fidelity: float
    bound: float
    tol: float
    comb_certificate: PPTCombCertificate | None = None
    component_ppt: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.min_pt_eigenvalue >= -self.tol and self.fidelity <= self.bound + 1e-6

    def to_json(self) -> dict:
        return {"passed": self.passed, "min_pt_eigenvalue": self.min_pt_eigenvalue,
                "fidelity": self.fidelity, "ppt_fidelity_bound": self.bound,
                "comb": self.comb_certificate.to_json() if self.comb_certificate else None}


def output_report(c: Comb, channels: Sequence[Channel], tol: float = PPT_TOL) -> DistillationReport:
    """PT spectrum and ``phi+_m`` fidelity of the comb's output state, no preconditions."""
    sigma = plug(c, channels).state()
    m = min(sigma.dim("A1"), sigma.dim("B1"))
    lam = min_eigenvalue(partial_transpose(sigma, ["B1"]))
    fid = 0.0
    if sigma.dim("A1") == sigma.dim("B1"):
        v = max_entangled_vector(m) / math.sqrt(m)
        fid = float(np.real(v.conj() @ sigma.matrix @ v))
    return DistillationReport(lam, fid, 1.0 / m, tol, is_ppt_comb(c), c.metadata.get("component_ppt", []))


def verify_no_distillation(c: Comb, channels: Sequence[Channel], tol: float = PPT_TOL) -> DistillationReport:
    """Check that a PPT comb fed with PPT channels outputs a PPT state.

    The ``phi+_m`` fidelity is reported against the PPT bound ``1/m``.
    """
    cert = is_ppt_comb(c, tol)
    if not cert.passed:
        raise PreconditionError(f"comb is not PPT (min eigenvalue {cert.min_eigenvalue:.3e})")
    for j, n in enumerate(channels, start=1):
        if not is_ppt_channel(n, tol):
            raise PreconditionError(f"channel in slot {j} is not PPT")
    return output_report(c, channels, tol)


def _phi(labels, d) -> LabeledOperator:
    v = max_entangled_vector(d) / math.sqrt(d)
    return LabeledOperator([SystemLabel(x, d) for x in labels], np.outer(v, v))


def teleportation_distiller(d: int = 2) -> Comb:
    """One-slot LOCC comb outputting ``phi+_d`` when fed ``prep(phi+_d)``.

    Alice prepares ``phi+_d`` on ``Aout`` and a memory, then teleports the
    memory to Bob through the slot's ebit.  With an NPT resource in the slot
    it is the control experiment for :func:`verify_no_distillation`.
    """
    e1 = Channel(tensor(_phi(["Aout", "Am"], d), LabeledOperator([SystemLabel("A0_1", 1)], [[1.0]])),
                 [], ["A0_1", "Aout", "Am"])
    tele = teleportation_channel("Am", "A1_1", "B1_1", "Bout", d)
    return build_comb_from_sequence([e1, tele])


def memory_swap_comb(d: int = 2) -> Comb:
    """One-slot comb that exchanges an Alice memory with a Bob memory.

    Alice prepares ``phi+_d`` on two local memories ``Am Ak`` and Bob a
    fixed state on ``Bm``; the final component moves ``Ak`` to Bob's output
    and discards ``Bm`` on Alice's side, so the comb is NPT.  The slot is
    trivial.
    """
    zero = np.zeros((d, d))
    zero[0, 0] = 1.0
    e1 = Channel(tensor(_phi(["Am", "Ak"], d), LabeledOperator([SystemLabel("Bm", d)], zero)),
                 [], ["Am", "Ak", "Bm"])
    v = max_entangled_vector(d)
    wire_a = LabeledOperator([SystemLabel("Am", d), SystemLabel("Aout", d)], np.outer(v, v))
    wire_b = LabeledOperator([SystemLabel("Ak", d), SystemLabel("Bout", d)], np.outer(v, v))
    drop = LabeledOperator([SystemLabel("Bm", d)], np.eye(d))
    e2 = Channel(tensor(wire_a, wire_b, drop), ["Am", "Ak", "Bm"], ["Aout", "Bout"])
    return build_comb_from_sequence([e1, e2])


def random_ppt_comb(slots: int, seed=None, memory=(2, 2), slot_dims=(2, 1, 1, 2),
                    out_dims=(2, 2), projection_side: int = 16) -> tuple[Comb, list[Channel]]:
    """Restricted PPT comb from a sequence of random PPT channels.

    Components whose Choi side is at most ``projection_side`` are
    Frobenius-projected random channels; larger ones are random separable
    mixtures.  Also returns ``slots`` random PPT channels fitting the slots.
    """
    rng = np.random.default_rng(seed)
    dA0, dA1, dB0, dB1 = slot_dims
    ma, mb = memory
    comps = []
    for k in range(1, slots + 2):
        ins, outs = {}, {}
        if k == 1:
            ins = {"Ain": 1, "Bin": 1}
        else:
            prev = slot_labels(k - 1)
            ins.update({prev["A1"]: dA1, prev["B1"]: dB1, f"Am{k - 1}": ma, f"Bm{k - 1}": mb})
        if k == slots + 1:
            outs.update({"Aout": out_dims[0], "Bout": out_dims[1]})
        else:
            lab = slot_labels(k)
            outs.update({lab["A0"]: dA0, lab["B0"]: dB0, f"Am{k}": ma, f"Bm{k}": mb})
        side = prod(ins.values()) * prod(outs.values())
        sub = int(rng.integers(2**31))
        if side <= projection_side:
            comps.append(random_ppt_channel((ins, outs), sub))
        else:
            comps.append(random_separable_channel((ins, outs), sub))
    comb = build_comb_from_sequence(comps)
    chans = [random_ppt_channel(slot_dims, int(rng.integers(2**31))) for _ in range(slots)]
    return comb, chans
