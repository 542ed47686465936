"""One-slot superchannels as Choi matrices.

A superchannel ``Theta`` maps channels on ``A0 A1 B0 B1`` (the *slot*) to
channels on ``A0' A1' B0' B1'``.  Its Choi matrix lives on all eight systems
and acts by link product: ``J^{Theta[N]} = Tr_slot[(J^N)^{T_slot} (x) 1) J^Theta]``.

Validity is the one-slot comb hierarchy: ``J >= 0``,
``Tr_{A1'B1'} J = I_{A1B1} (x) M`` with ``M`` on ``A0 B0 A0' B0'``, and
``Tr_{A0B0} M = I_{A0'B0'}``.  Realisations by a preprocessing channel
``A0'B0' -> A0 B0 (x) memory`` and a postprocessing channel
``A1 B1 (x) memory -> A1'B1'`` are kept alongside when known; a PPT
superchannel is never assumed to have a PPT realisation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod
from typing import Mapping

import numpy as np

from . import conic
from .channels import (
    STANDARD,
    Channel,
    bob_labels,
    channel_from_kraus,
    max_entangled_vector,
    random_kraus_channel,
    random_ppt_channel,
    random_separable_channel,
)
from .errors import ShapeError, SolverError
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

SLOT = STANDARD
OUT = ("A0'", "A1'", "B0'", "B1'")
PRIME = dict(zip(SLOT, OUT))
UNPRIME = dict(zip(OUT, SLOT))
SUPER_TOL = 1e-8
PPT_TOL = 1e-7


def _as_dims(dims) -> tuple[int, int, int, int]:
    if isinstance(dims, Channel):
        return dims.standard_dims()
    if isinstance(dims, Mapping):
        return tuple(int(dims.get(n, 1)) for n in STANDARD)
    return tuple(int(d) for d in dims)


@dataclass(frozen=True)
class PrePostRealization:
    pre: Channel
    post: Channel
    memory: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"pre": self.pre.to_json(), "post": self.post.to_json(), "memory": dict(self.memory)}


class Superchannel:
    """Choi matrix on ``A0 A1 B0 B1 A0' A1' B0' B1'`` plus an optional realisation."""

    __slots__ = ("choi", "realization")

    def __init__(self, choi: LabeledOperator, realization: PrePostRealization | None = None):
        if sorted(choi.labels) != sorted(SLOT + OUT):
            raise ShapeError(f"superchannel Choi must act on {SLOT + OUT}, got {choi.labels}")
        object.__setattr__(self, "choi", choi.permute(SLOT + OUT))
        object.__setattr__(self, "realization", realization)

    def __setattr__(self, name, value):
        raise AttributeError("Superchannel is immutable")

    def __repr__(self):
        return f"Superchannel(slot={self.slot_dims}, out={self.out_dims})"

    @property
    def slot_dims(self) -> tuple[int, ...]:
        return tuple(self.choi.dim(n) for n in SLOT)

    @property
    def out_dims(self) -> tuple[int, ...]:
        return tuple(self.choi.dim(n) for n in OUT)

    def to_json(self) -> dict:
        data = {"kind": "superchannel", "labels": self.choi.dim_map(), "choi": self.choi.to_json()}
        if self.realization is not None:
            data["realization"] = self.realization.to_json()
        return data

    @classmethod
    def from_json(cls, data: Mapping) -> "Superchannel":
        real = data.get("realization")
        realization = None
        if real:
            realization = PrePostRealization(Channel.from_json(real["pre"]), Channel.from_json(real["post"]),
                                             dict(real.get("memory", {})))
        return cls(LabeledOperator.from_json(data["choi"]), realization)


@dataclass(frozen=True)
class SuperchannelReport:
    positivity: float
    marginal: float
    normalization: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.positivity >= -self.tol and self.marginal <= self.tol and self.normalization <= self.tol

    def to_json(self) -> dict:
        return {"passed": self.passed, "min_eigenvalue": self.positivity,
                "marginal_residual": self.marginal, "normalization_residual": self.normalization}


def _hierarchy_residuals(j: LabeledOperator, final_out, slot_out, slot_in, global_in):
    t = partial_trace(j, final_out)
    d_so = prod(j.dim(n) for n in slot_out)
    m = partial_trace(t, slot_out) / d_so
    expect = tensor(identity_op([SystemLabel(n, j.dim(n)) for n in slot_out]), m) if slot_out else m
    marg = operator_norm(t - expect)
    top = partial_trace(m, slot_in)
    norm = operator_norm(top - identity_op(top.systems))
    return marg, norm


def validate_superchannel(s: Superchannel, tol: float = SUPER_TOL) -> SuperchannelReport:
    """Positivity and comb-normalisation residuals of ``s``."""
    j = s.choi
    pos = min_eigenvalue(j)
    marg, norm = _hierarchy_residuals(j, ["A1'", "B1'"], ["A1", "B1"], ["A0", "B0"], ["A0'", "B0'"])
    return SuperchannelReport(pos, marg, norm, tol)


def apply(s: Superchannel, n: Channel) -> Channel:
    """``Theta[N]`` as a standard channel (primes dropped)."""
    if n.standard_dims() != s.slot_dims:
        raise ShapeError(f"channel dims {n.standard_dims()} do not match slot {s.slot_dims}")
    out = link_product(n.choi.permute(SLOT), s.choi)
    return Channel(out.relabel(UNPRIME).permute(STANDARD))


def gamma_transpose(s: Superchannel) -> Superchannel:
    """``Upsilon_{B'} o Theta o Upsilon_B``: the Choi transposed on all Bob labels."""
    return Superchannel(partial_transpose(s.choi, bob_labels(s.choi.labels)))


def ppt_violation(s: Superchannel) -> float:
    return min_eigenvalue(partial_transpose(s.choi, bob_labels(s.choi.labels)))


def is_ppt_superchannel(s: Superchannel, tol: float = PPT_TOL) -> bool:
    return ppt_violation(s) >= -tol


# -- construction -----------------------------------------------------------------


def from_pre_post(pre: Channel, post: Channel, memory: Mapping[str, int] | None = None) -> Superchannel:
    """Superchannel realised by ``pre: A0'B0' -> A0 B0 (x) mem`` and ``post: A1 B1 (x) mem -> A1'B1'``.

    Missing trivial systems are added; memory systems are the labels shared
    by ``pre`` outputs and ``post`` inputs.
    """
    pre_choi = _pad(pre.choi, ["A0'", "B0'", "A0", "B0"])
    post_choi = _pad(post.choi, ["A1", "B1", "A1'", "B1'"])
    shared = [n for n in pre_choi.labels if n in set(post_choi.labels)]
    mem = {n: pre_choi.dim(n) for n in shared}
    if set(mem) & set(SLOT + OUT):
        raise ShapeError(f"pre and post may only share memory systems, not {sorted(set(mem) & set(SLOT + OUT))}")
    if memory is not None and dict(memory) != mem:
        raise ShapeError(f"declared memory {dict(memory)} does not match wiring {mem}")
    for n in mem:
        if post_choi.dim(n) != mem[n]:
            raise ShapeError(f"memory {n!r}: dimension {mem[n]} vs {post_choi.dim(n)}")
    j = link_product(pre_choi, post_choi)
    return Superchannel(j, PrePostRealization(pre, post, mem))


def _pad(op: LabeledOperator, labels) -> LabeledOperator:
    for n in labels:
        if n not in op.labels:
            op = tensor(op, LabeledOperator([SystemLabel(n, 1)], [[1.0]]))
    return op


def _wire(src: str, dst: str, d: int) -> LabeledOperator:
    v = max_entangled_vector(d)
    return LabeledOperator([SystemLabel(src, d), SystemLabel(dst, d)], np.outer(v, v))


def _wires(pairs, dims) -> LabeledOperator:
    out = LabeledOperator([], [[1.0]])
    for src, dst in pairs:
        out = tensor(out, _wire(src, dst, dims[src]))
    return out


def identity_superchannel(dims=(2, 2, 2, 2)) -> Superchannel:
    """The superchannel returning its input channel unchanged."""
    d = dict(zip(SLOT, _as_dims(dims)))
    dd = {**d, **{PRIME[k]: v for k, v in d.items()}}
    pre = Channel(_wires([("A0'", "A0"), ("B0'", "B0")], dd), ["A0'", "B0'"], ["A0", "B0"])
    post = Channel(_wires([("A1", "A1'"), ("B1", "B1'")], dd), ["A1", "B1"], ["A1'", "B1'"])
    return from_pre_post(pre, post)


def discard_and_prepare(slot_dims, sigma: LabeledOperator | np.ndarray, out_dims=None) -> Superchannel:
    """Feed the slot a maximally mixed state, discard its output, prepare ``sigma``.

    The resulting channel has trivial inputs unless ``out_dims`` says
    otherwise, in which case the global inputs are traced out.
    """
    sd = dict(zip(SLOT, _as_dims(slot_dims)))
    sig = np.asarray(sigma.matrix if isinstance(sigma, LabeledOperator) else sigma, dtype=complex)
    if out_dims is None:
        da = db = int(round(np.sqrt(sig.shape[0])))
        if isinstance(sigma, LabeledOperator):
            da, db = sigma.dims[0], prod(sigma.dims[1:])
        out_dims = (1, da, 1, db)
    od = dict(zip(OUT, _as_dims(out_dims)))
    din = sd["A0"] * sd["B0"]
    pre = Channel(LabeledOperator([SystemLabel("A0'", od["A0'"]), SystemLabel("B0'", od["B0'"]),
                                   SystemLabel("A0", sd["A0"]), SystemLabel("B0", sd["B0"])],
                                  np.eye(od["A0'"] * od["B0'"] * din) / din),
                  ["A0'", "B0'"], ["A0", "B0"])
    post = Channel(LabeledOperator([SystemLabel("A1", sd["A1"]), SystemLabel("B1", sd["B1"]),
                                    SystemLabel("A1'", od["A1'"]), SystemLabel("B1'", od["B1'"])],
                                   np.kron(np.eye(sd["A1"] * sd["B1"]), sig)),
                   ["A1", "B1"], ["A1'", "B1'"])
    return from_pre_post(pre, post)


def weyl_operators(d: int) -> list[np.ndarray]:
    """The ``d**2`` Heisenberg-Weyl unitaries ``X^a Z^b``."""
    x = np.roll(np.eye(d), 1, axis=0)
    z = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    return [np.linalg.matrix_power(x, a) @ np.linalg.matrix_power(z, b) for a in range(d) for b in range(d)]


def teleportation_channel(src: str, half_a: str, half_b: str, dst: str, d: int = 2) -> Channel:
    """Teleport ``src`` to Bob's ``dst`` using an ebit on ``half_a`` (Alice) and ``half_b`` (Bob).

    Alice measures ``src half_a`` in the generalised Bell basis and Bob
    applies the matching Weyl correction to ``half_b``.
    """
    phi = max_entangled_vector(d) / np.sqrt(d)
    # resource ebit on (half_a, half_b) as a map src -> (src, half_a, half_b)
    feed = np.kron(np.eye(d), phi.reshape(-1, 1))
    kraus = []
    for w in weyl_operators(d):
        bell = np.kron(np.eye(d), w) @ phi
        proj = np.kron(bell.conj().reshape(1, -1), np.eye(d))
        u = d * (proj @ feed)  # src -> half_b, unitary
        kraus.append(u.conj().T @ proj)
    return channel_from_kraus(kraus, {src: d, half_a: d, half_b: d}, {dst: d})


def teleportation_superchannel(d: int = 2) -> Superchannel:
    """LOCC superchannel turning ``prep(phi+_d)`` into the noiseless channel ``A0' -> B1'``.

    Pre keeps Alice's input in memory ``A2``; post teleports it through the
    slot's ebit (Bell measurement on Alice's side, Weyl correction on Bob's).
    """
    pre = Channel(_wire("A0'", "A2", d), ["A0'"], ["A2"])
    tele = teleportation_channel("A2", "A1", "B1", "B1'", d)
    return from_pre_post(pre, tele)


def swap_injector(slot_dims=(1, 2, 1, 2)) -> Superchannel:
    """Non-PPT superchannel exchanging the slot's outputs across the parties.

    Inputs are wired straight through; post sends ``A1 -> B1'`` and
    ``B1 -> A1'``.
    """
    sd = dict(zip(SLOT, _as_dims(slot_dims)))
    dd = {**sd, **{PRIME[k]: v for k, v in sd.items()}}
    pre = Channel(_wires([("A0'", "A0"), ("B0'", "B0")], dd), ["A0'", "B0'"], ["A0", "B0"])
    post_op = _wires([("A1", "B1'"), ("B1", "A1'")], {"A1": sd["A1"], "B1": sd["B1"]})
    post = Channel(post_op, ["A1", "B1"], ["B1'", "A1'"])
    return from_pre_post(pre, post)


def swap_simulation_superchannel(target: Channel) -> Superchannel:
    """LOCC superchannel turning ``swap(d)`` into ``target``.

    Bob sends his input through the swap to Alice; Alice sends half of a
    locally prepared maximally entangled state to Bob, applies ``target`` to
    both inputs and teleports Bob's share of the output through that ebit.
    Requires Bob's input and output of ``target`` to be no larger than ``d``,
    where ``d`` is their common dimension.
    """
    dA0, dA1, dB0, dB1 = target.standard_dims()
    if dB0 != dB1:
        raise ShapeError("swap simulation needs equal dimensions on Bob's input and output")
    d = dB0
    v = max_entangled_vector(d)
    # pre: A0' -> A2a, B0' -> B0, and phi+ on (A0, A2b)
    ebit = LabeledOperator([SystemLabel("A0", d), SystemLabel("A2b", d)], np.outer(v, v) / d)
    pre_op = tensor(_wire("A0'", "A2a", dA0), _wire("B0'", "B0", d), ebit)
    pre = Channel(pre_op, ["A0'", "B0'"], ["A2a", "B0", "A0", "A2b"])
    # post: target on (A2a, A1) -> (A1', Y), then teleport Y via (A2b, B1) to B1'
    local = target.relabel({"A0": "A2a", "B0": "A1", "A1": "A1'", "B1": "Y"})
    tele = teleportation_channel("Y", "A2b", "B1", "B1'", d)
    post_op = link_product(local.choi, tele.choi)
    post = Channel(post_op, ["A2a", "A1", "A2b", "B1"], ["A1'", "B1'"])
    return from_pre_post(pre, post)


def random_superchannel(slot_dims=(1, 2, 1, 2), out_dims=None, seed=None, memory: int = 2) -> Superchannel:
    """Superchannel from Haar-random pre- and postprocessing with a ``memory``-dim memory."""
    rng = np.random.default_rng(seed)
    sd = dict(zip(SLOT, _as_dims(slot_dims)))
    od = dict(zip(OUT, _as_dims(out_dims if out_dims is not None else slot_dims)))
    pre_in = {"A0'": od["A0'"], "B0'": od["B0'"]}
    pre_out = {"A0": sd["A0"], "B0": sd["B0"], "M": memory}
    post_in = {"A1": sd["A1"], "B1": sd["B1"], "M": memory}
    post_out = {"A1'": od["A1'"], "B1'": od["B1'"]}
    pre = random_kraus_channel(pre_in, pre_out, rng)
    post = random_kraus_channel(post_in, post_out, rng)
    return from_pre_post(pre, post)


# -- conic programs over superchannels --------------------------------------------


def superchannel_variable(p: conic.ConicProgram, slot_dims, out_dims, ppt: bool = True, name="Theta",
                          real: bool = False):
    """Declare a superchannel Choi variable with validity (and PPT) constraints."""
    sd = dict(zip(SLOT, _as_dims(slot_dims)))
    od = dict(zip(OUT, _as_dims(out_dims)))
    systems = [SystemLabel(n, sd[n]) for n in SLOT] + [SystemLabel(n, od[n]) for n in OUT]
    theta = p.variable(name, systems=systems, real=real)
    m = p.variable(name + ".M", systems=[SystemLabel(n, sd[n]) for n in ("A0", "B0")]
                   + [SystemLabel(n, od[n]) for n in ("A0'", "B0'")], real=real)
    p.add_psd(theta, "choi")
    marg = theta.ptrace(["A1'", "B1'"])
    p.add_equality(marg - m.tensor_identity([SystemLabel("A1", sd["A1"]), SystemLabel("B1", sd["B1"])]),
                   label="comb-marginal")
    top = m.ptrace(["A0", "B0"])
    p.add_equality(top - identity_op(top.systems), label="comb-normalization")
    if ppt:
        p.add_psd(theta.ptranspose(bob_labels(theta.labels)), "ppt")
    return theta


def nearest_ppt_superchannel(s: Superchannel) -> Superchannel:
    """Frobenius-nearest PPT superchannel to ``s``."""
    p = conic.ConicProgram("ppt-superchannel-projection")
    theta = superchannel_variable(p, s.slot_dims, s.out_dims, ppt=True)
    t = p.scalar("t")
    p.add_soc(t, theta - s.choi, "distance")
    p.minimize(t)
    sol = p.solve()
    if sol.status != conic.OPTIMAL:
        raise SolverError(f"superchannel projection failed: {sol.status}", sol)
    mat = sol["Theta"]
    out = Superchannel(LabeledOperator(theta.systems, (mat + mat.conj().T) / 2))
    if not validate_superchannel(out, tol=PPT_TOL).passed or not is_ppt_superchannel(out, PPT_TOL):
        raise SolverError("projected superchannel failed validation", sol)
    return out


def random_ppt_superchannel(slot_dims=(1, 2, 1, 2), out_dims=None, seed=None, memory: int = 2) -> Superchannel:
    """Conic projection of :func:`random_superchannel` onto PPT superchannels."""
    return nearest_ppt_superchannel(random_superchannel(slot_dims, out_dims, seed, memory))


# -- complete PPT preservation ------------------------------------------------------

REF = {"A0": "AR1", "A1": "AR0", "B0": "BR1", "B1": "BR0"}


@dataclass
class PPTPreservationReport:
    trials: int
    max_violation: float
    first_violation: int | None
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_violation <= PPT_TOL

    def to_json(self) -> dict:
        return {"passed": self.passed, "trials": self.trials, "max_violation": self.max_violation,
                "first_violation": self.first_violation}


def _reference_wiring(slot_dims) -> Channel:
    """Local channel wiring each slot input to a reference output and vice versa."""
    sd = dict(zip(SLOT, slot_dims))
    dims = {**sd, **{REF[n]: sd[n] for n in SLOT}}
    op = _wires([("A0", "AR1"), ("AR0", "A1"), ("B0", "BR1"), ("BR0", "B1")], dims)
    return Channel(op, ["A0", "B0", "AR0", "BR0"], ["A1", "B1", "AR1", "BR1"])


def completely_ppt_preserving_check(s: Superchannel, trials: int = 50, seed=0,
                                    projection_side: int = 16, stop_early: bool = False) -> PPTPreservationReport:
    """Apply ``s (x) id`` to random PPT channels on slot (x) reference systems.

    Trial 0 uses the local wiring that routes the slot through the reference
    systems, whose image is the Choi matrix of ``s`` itself.  Later trials mix
    that wiring with random PPT channels: Frobenius-projected random channels
    when the Choi side is at most ``projection_side``, random mixtures of
    local channels otherwise.  The violation is the negated smallest
    eigenvalue of each output's partial transpose over Bob's labels.
    With ``stop_early`` the search ends at the first violation.
    """
    rng = np.random.default_rng(seed)
    wiring = _reference_wiring(s.slot_dims)
    ins = {n: wiring.choi.dim(n) for n in wiring.inputs}
    outs = {n: wiring.choi.dim(n) for n in wiring.outputs}
    worst, first, viols = 0.0, None, []
    for k in range(trials):
        if k == 0:
            choi = wiring.choi
        else:
            eps = rng.uniform(0.0, 0.5)
            if wiring.choi.side <= projection_side:
                sub_seed = int(rng.integers(2**31))
                r = random_ppt_channel((ins, outs), sub_seed).choi
            else:
                r = random_separable_channel((ins, outs), rng).choi
            choi = wiring.choi * (1 - eps) + r * eps
        out = link_product(choi, s.choi)
        v = -min_eigenvalue(partial_transpose(out, bob_labels(out.labels)))
        viols.append(v)
        if v > PPT_TOL and first is None:
            first = k
        worst = max(worst, v)
        if stop_early and first is not None:
            break
    return PPTPreservationReport(len(viols), worst, first, viols)
