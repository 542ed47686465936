"""Bipartite quantum channels stored as Choi matrices.

Conventions
-----------
The Choi matrix of a channel ``N`` is ``(id (x) N)(sum_ij |ii><jj|)`` with the
*unnormalised* maximally entangled vector, so ``Tr_out J = I_in`` and
``Tr J = d_in``.  Standard bipartite channels carry the four labels
``A0, A1, B0, B1`` (inputs ``A0, B0``; outputs ``A1, B1``), any of which may
have dimension one.  A state is a channel whose inputs are all trivial.

Party membership is read off the label: every label starting with ``"B"``
belongs to Bob, everything else to Alice (or to nobody, for contracted
memories).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Mapping, Sequence

import numpy as np

from . import conic
from .errors import InvalidPOVM, ShapeError, SolverError
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

STANDARD = ("A0", "A1", "B0", "B1")
CHANNEL_TOL = 1e-8
PPT_TOL = 1e-7


def is_bob(label: str) -> bool:
    return label.startswith("B")


def bob_labels(labels) -> list[str]:
    return [name for name in labels if is_bob(name)]


class Channel:
    """A (possibly non-CP) linear map given by its Choi matrix.

    ``inputs`` and ``outputs`` partition the Choi's labels.  Construction does
    not check complete positivity or trace preservation; use
    :func:`validate_channel`.
    """

    __slots__ = ("choi", "inputs", "outputs")

    def __init__(self, choi: LabeledOperator, inputs: Sequence[str] = ("A0", "B0"),
                 outputs: Sequence[str] = ("A1", "B1")):
        inputs, outputs = tuple(inputs), tuple(outputs)
        if sorted(inputs + outputs) != sorted(choi.labels):
            raise ShapeError(f"inputs {inputs} and outputs {outputs} must partition {choi.labels}")
        object.__setattr__(self, "choi", choi)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)

    def __setattr__(self, name, value):
        raise AttributeError("Channel is immutable")

    def __repr__(self):
        ins = ",".join(f"{n}:{self.choi.dim(n)}" for n in self.inputs)
        outs = ",".join(f"{n}:{self.choi.dim(n)}" for n in self.outputs)
        return f"Channel({ins} -> {outs})"

    @classmethod
    def from_matrix(cls, matrix, dims: Sequence[int] = (1, 1, 1, 1)) -> "Channel":
        """Standard bipartite channel from a Choi matrix ordered ``A0 A1 B0 B1``."""
        systems = [SystemLabel(n, d) for n, d in zip(STANDARD, dims)]
        return cls(LabeledOperator(systems, matrix))

    @property
    def dims(self) -> dict[str, int]:
        return self.choi.dim_map()

    @property
    def d_in(self) -> int:
        return prod(self.choi.dim(n) for n in self.inputs)

    @property
    def d_out(self) -> int:
        return prod(self.choi.dim(n) for n in self.outputs)

    @property
    def is_standard(self) -> bool:
        return set(self.choi.labels) == set(STANDARD) and set(self.inputs) == {"A0", "B0"}

    @property
    def is_state(self) -> bool:
        return self.d_in == 1

    @property
    def bob(self) -> list[str]:
        return bob_labels(self.choi.labels)

    def standard_dims(self) -> tuple[int, int, int, int]:
        return tuple(self.choi.dim(n) for n in STANDARD)

    def relabel(self, mapping: Mapping[str, str]) -> "Channel":
        return Channel(self.choi.relabel(mapping),
                       [mapping.get(n, n) for n in self.inputs],
                       [mapping.get(n, n) for n in self.outputs])

    def state(self) -> LabeledOperator:
        """Density matrix on the outputs of a channel with trivial inputs."""
        if not self.is_state:
            raise ShapeError("channel has nontrivial inputs")
        return partial_trace(self.choi, self.inputs).permute(self.outputs)

    def to_json(self) -> dict:
        return {"kind": "channel", "labels": self.dims, "inputs": list(self.inputs),
                "outputs": list(self.outputs), "choi": self.choi.to_json()}

    @classmethod
    def from_json(cls, data: Mapping) -> "Channel":
        choi = LabeledOperator.from_json(data["choi"])
        labels = data.get("labels")
        if labels and dict(labels) != choi.dim_map():
            raise ShapeError("label dimensions disagree with the Choi operator")
        inputs = data.get("inputs", [n for n in choi.labels if n.endswith("0")])
        outputs = data.get("outputs", [n for n in choi.labels if n not in inputs])
        return cls(choi, inputs, outputs)


State = Channel


@dataclass(frozen=True)
class ChannelReport:
    positivity: float
    trace_preservation: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.positivity >= -self.tol and self.trace_preservation <= self.tol

    def to_json(self) -> dict:
        return {"passed": self.passed, "min_eigenvalue": self.positivity,
                "trace_preservation_residual": self.trace_preservation}


def validate_channel(c: Channel, tol: float = CHANNEL_TOL) -> ChannelReport:
    """Positivity and trace-preservation residuals of the Choi matrix."""
    j = c.choi
    pos = min_eigenvalue(j)
    marginal = partial_trace(j, c.outputs)
    if marginal.systems:
        marginal = marginal.permute(c.inputs)
    tp = operator_norm(marginal - identity_op(marginal.systems))
    return ChannelReport(pos, tp, tol)


def transpose_supermap(c: Channel, side: str = "B") -> Channel:
    """Conjugate ``c`` by transposes on one party's input and output.

    The Choi matrix of the result is the partial transpose of ``c``'s Choi
    over that party's labels.  ``side`` is ``"A"``, ``"B"`` or ``"all"``.
    """
    if side == "all":
        labels = c.choi.labels
    elif side == "B":
        labels = c.bob
    elif side == "A":
        labels = [n for n in c.choi.labels if not is_bob(n)]
    else:
        raise ValueError(f"side must be 'A', 'B' or 'all', not {side!r}")
    return Channel(partial_transpose(c.choi, labels), c.inputs, c.outputs)


def ppt_violation(c: Channel) -> float:
    """Smallest eigenvalue of the Choi matrix transposed on Bob's labels."""
    return min_eigenvalue(partial_transpose(c.choi, c.bob))


def is_ppt_channel(c: Channel, tol: float = PPT_TOL) -> bool:
    return ppt_violation(c) >= -tol


def apply(c: Channel, rho: LabeledOperator) -> LabeledOperator:
    """Apply ``c`` to ``rho``; systems of ``rho`` that are not inputs pass through.

    Computes ``Tr_in[J (rho^T (x) I_out)]`` as a link product, so extra
    reference systems of ``rho`` realise ``(id (x) c)(rho)``.
    """
    dims = c.choi.dim_map()
    for name in c.inputs:
        if dims[name] == 1 and name not in rho.labels:
            continue
        if name not in rho.labels:
            raise ShapeError(f"input {name!r} missing from state on {rho.labels}")
        if rho.dim(name) != dims[name]:
            raise ShapeError(f"input {name!r} has dimension {dims[name]}, state has {rho.dim(name)}")
    clash = (set(rho.labels) - set(c.inputs)) & set(c.outputs)
    if clash:
        raise ShapeError(f"reference systems {sorted(clash)} collide with channel outputs")
    trivial = [n for n in c.inputs if dims[n] == 1 and n not in rho.labels]
    j = partial_trace(c.choi, trivial) if trivial else c.choi
    return link_product(rho, j)


def merge_systems(op: LabeledOperator, groups: Mapping[str, Sequence[str]]) -> LabeledOperator:
    """Fuse groups of systems into single systems (product dimension)."""
    order, systems = [], []
    grouped = {n for g in groups.values() for n in g}
    for name, members in groups.items():
        order.extend(members)
        systems.append(SystemLabel(name, prod(op.dim(m) for m in members)))
    for s in op.systems:
        if s.name not in grouped:
            order.append(s.name)
            systems.append(s)
    return LabeledOperator(systems, op.permute(order).matrix)


def parallel(c1: Channel, c2: Channel) -> Channel:
    """Tensor product ``c1 (x) c2``.

    Standard bipartite channels are merged party-wise so the result is again
    standard, with ``A0 = A0(c1) A0(c2)`` and so on.  Other channels must have
    disjoint labels.
    """
    if c1.is_standard and c2.is_standard:
        second = {n: n + "~" for n in STANDARD}
        joint = tensor(c1.choi, c2.choi.relabel(second))
        merged = merge_systems(joint, {n: (n, n + "~") for n in STANDARD})
        return Channel(merged.permute(STANDARD))
    return Channel(tensor(c1.choi, c2.choi), c1.inputs + c2.inputs, c1.outputs + c2.outputs)


def sequential(c1: Channel, c2: Channel, wiring: Mapping[str, str] | None = None) -> Channel:
    """Composition ``c2 o c1``.

    ``wiring`` maps output labels of ``c1`` to input labels of ``c2``; for two
    standard channels it defaults to ``A1 -> A0`` and ``B1 -> B0``.  Without
    wiring, shared labels are contracted.
    """
    if wiring is None and c1.is_standard and c2.is_standard:
        wiring = {"A1": "A0", "B1": "B0"}
    if wiring:
        mid = {out: f"~{out}" for out in wiring}
        first = c1.choi.relabel(mid)
        second = c2.choi.relabel({inp: f"~{out}" for out, inp in wiring.items()})
    else:
        first, second = c1.choi, c2.choi
    shared = set(first.labels) & set(second.labels)
    for name in shared:
        if first.dim(name) != second.dim(name):
            raise ShapeError(f"wire {name!r}: dimension {first.dim(name)} vs {second.dim(name)}")
    joint = link_product(first, second)
    inputs = list(c1.inputs) + [n for n in c2.inputs if n not in (wiring or {}).values() and n not in shared]
    outputs = [n for n in c2.outputs] + [n for n in c1.outputs if n not in (wiring or {}) and n not in shared]
    if c1.is_standard and c2.is_standard:
        return Channel(joint.permute(STANDARD))
    return Channel(joint, inputs, outputs)


# -- named channels -----------------------------------------------------------


def _standard(matrix, in_systems, out_systems) -> Channel:
    """Build a standard channel from a Choi ordered (inputs..., outputs...)."""
    systems = list(in_systems) + list(out_systems)
    op = LabeledOperator(systems, matrix)
    present = {s.name for s in systems}
    for name in STANDARD:
        if name not in present:
            op = tensor(op, LabeledOperator([SystemLabel(name, 1)], [[1.0]]))
    return Channel(op.permute(STANDARD))


def max_entangled_vector(d: int) -> np.ndarray:
    """Unnormalised ``sum_i |ii>``."""
    return np.eye(d).reshape(-1)


def phi_plus(d: int) -> np.ndarray:
    """Normalised maximally entangled state ``|phi+_d><phi+_d|``."""
    v = max_entangled_vector(d) / np.sqrt(d)
    return np.outer(v, v)


def identity(dA: int = 2, dB: int = 1) -> Channel:
    """Local identity: ``A0 -> A1`` of dimension ``dA`` and ``B0 -> B1`` of ``dB``."""
    v = max_entangled_vector(dA)
    w = max_entangled_vector(dB)
    return _standard(np.kron(np.outer(v, v), np.outer(w, w)),
                     [SystemLabel("A0", dA), SystemLabel("A1", dA)],
                     [SystemLabel("B0", dB), SystemLabel("B1", dB)])


def ab_identity(d: int = 2) -> Channel:
    """Noiseless channel from Alice's input ``A0`` to Bob's output ``B1``."""
    v = max_entangled_vector(d)
    return _standard(np.outer(v, v), [SystemLabel("A0", d)], [SystemLabel("B1", d)])


def ba_identity(d: int = 2) -> Channel:
    """Noiseless channel from Bob's input ``B0`` to Alice's output ``A1``."""
    v = max_entangled_vector(d)
    return _standard(np.outer(v, v), [SystemLabel("B0", d)], [SystemLabel("A1", d)])


def swap(d: int = 2) -> Channel:
    """Exchange of Alice's and Bob's systems: ``A0 -> B1`` and ``B0 -> A1``."""
    a = ab_identity(d).choi.ptrace(["A1", "B0"])
    b = ba_identity(d).choi.ptrace(["A0", "B1"])
    return Channel(tensor(a, b).permute(STANDARD))


def prep(rho, dA: int | None = None, dB: int | None = None) -> Channel:
    """State preparation with trivial inputs; ``rho`` lives on ``A1 B1``."""
    if isinstance(rho, LabeledOperator):
        if set(rho.labels) != {"A1", "B1"}:
            rho = LabeledOperator([SystemLabel("A1", rho.dims[0]), SystemLabel("B1", prod(rho.dims[1:]))], rho.matrix)
        dA, dB, mat = rho.dim("A1"), rho.dim("B1"), rho.permute(["A1", "B1"]).matrix
    else:
        mat = np.asarray(rho, dtype=complex)
        if dA is None and dB is None:
            dA = dB = int(round(np.sqrt(mat.shape[0])))
        elif dA is None:
            dA = mat.shape[0] // dB
        elif dB is None:
            dB = mat.shape[0] // dA
    return _standard(mat, [], [SystemLabel("A1", dA), SystemLabel("B1", dB)])


def max_entangled_prep(m: int) -> Channel:
    """Preparation of ``phi+_m`` shared between ``A1`` and ``B1``."""
    if m < 1:
        raise ValueError("Schmidt rank must be positive")
    return prep(phi_plus(m), m, m)


def depolarizing(d: int = 2, p: float = 1.0, wire: str = "AB") -> Channel:
    """``rho -> (1-p) rho + p Tr(rho) I/d`` along one wire.

    ``wire`` is ``"AB"`` (Alice to Bob), ``"BA"``, ``"AA"`` or ``"BB"``.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("depolarizing parameter must lie in [0, 1]")
    src = {"A": "A0", "B": "B0"}[wire[0]]
    dst = {"A": "A1", "B": "B1"}[wire[1]]
    v = max_entangled_vector(d)
    mat = (1 - p) * np.outer(v, v) + p * np.eye(d * d) / d
    return _standard(mat, [SystemLabel(src, d)], [SystemLabel(dst, d)])


def povm_channel(effects, dA: int | None = None, dB: int | None = None, tol: float = 1e-8) -> Channel:
    """Quantum-to-classical channel ``rho -> sum_i Tr(E_i rho) |i><i|``.

    Effects act on ``A0 (x) B0``; the outcome register is Bob's output ``B1``.
    """
    effects = [np.asarray(e, dtype=complex) for e in effects]
    d = effects[0].shape[0]
    if dA is None and dB is None:
        dA = dB = int(round(np.sqrt(d)))
        if dA * dB != d:
            dA, dB = d, 1
    elif dA is None:
        dA = d // dB
    elif dB is None:
        dB = d // dA
    if dA * dB != d:
        raise ShapeError("effect dimension does not factor into A0 (x) B0")
    total = sum(effects)
    if np.max(np.abs(total - np.eye(d))) > tol:
        raise InvalidPOVM("effects do not sum to the identity")
    for e in effects:
        if np.max(np.abs(e - e.conj().T)) > tol or np.linalg.eigvalsh((e + e.conj().T) / 2)[0] < -tol:
            raise InvalidPOVM("effects must be positive semidefinite")
    k = len(effects)
    mat = sum(np.kron(e.T, np.diag(np.eye(k)[i])) for i, e in enumerate(effects))
    return _standard(mat, [SystemLabel("A0", dA), SystemLabel("B0", dB)], [SystemLabel("B1", k)])


def tiles_vectors() -> list[np.ndarray]:
    """The five product vectors of the 3x3 "tiles" unextendible product basis."""
    e = np.eye(3)
    vecs = [
        np.kron(e[0], (e[0] - e[1]) / np.sqrt(2)),
        np.kron(e[2], (e[1] - e[2]) / np.sqrt(2)),
        np.kron((e[0] - e[1]) / np.sqrt(2), e[2]),
        np.kron((e[1] - e[2]) / np.sqrt(2), e[0]),
        np.kron(e.sum(0) / np.sqrt(3), e.sum(0) / np.sqrt(3)),
    ]
    return vecs


def tiles_bound_entangled_state() -> LabeledOperator:
    """``(I_9 - sum_i |psi_i><psi_i|) / 4`` on ``A0 (x) B0`` (qutrits)."""
    proj = sum(np.outer(v, v) for v in tiles_vectors())
    beta = (np.eye(9) - proj) / 4
    return LabeledOperator([SystemLabel("A0", 3), SystemLabel("B0", 3)], beta, hermitian=True)


def tiles_povm() -> Channel:
    """The binary POVM ``{beta, I - beta}`` built on the tiles bound entangled state."""
    beta = tiles_bound_entangled_state().matrix
    return povm_channel([beta, np.eye(9) - beta], 3, 3)


# -- random channels ------------------------------------------------------------


def _dims_pair(dims):
    """Normalise ``dims`` to ``(inputs, outputs)`` label->dim mappings."""
    if isinstance(dims, Mapping):
        ins = {n: d for n, d in dims.items() if n.endswith("0")}
        outs = {n: d for n, d in dims.items() if not n.endswith("0")}
        return ins, outs
    if len(dims) == 2 and isinstance(dims[0], Mapping):
        return dict(dims[0]), dict(dims[1])
    dA0, dA1, dB0, dB1 = dims
    return {"A0": dA0, "B0": dB0}, {"A1": dA1, "B1": dB1}


def haar_isometry(d_in: int, d_out: int, rng) -> np.ndarray:
    z = (rng.standard_normal((d_out, d_in)) + 1j * rng.standard_normal((d_out, d_in))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def channel_from_kraus(kraus, inputs: Mapping[str, int], outputs: Mapping[str, int]) -> Channel:
    """Channel whose Kraus operators map ``inputs`` to ``outputs`` (row-major order)."""
    d_in = prod(inputs.values())
    d_out = prod(outputs.values())
    mat = np.zeros((d_in * d_out, d_in * d_out), dtype=complex)
    for k in kraus:
        v = np.asarray(k).T.reshape(-1)  # vec over (in, out)
        mat += np.outer(v, v.conj())
    systems = [SystemLabel(n, d) for n, d in inputs.items()] + [SystemLabel(n, d) for n, d in outputs.items()]
    op = LabeledOperator(systems, mat)
    ch = Channel(op, list(inputs), list(outputs))
    if set(op.labels) == set(STANDARD):
        ch = Channel(op.permute(STANDARD))
    return ch


def random_channel(dims=(2, 2, 2, 2), seed=None, rank: int | None = None) -> Channel:
    """Channel from a Haar-random isometry into output (x) environment.

    ``dims`` is ``(dA0, dA1, dB0, dB1)`` or a pair of ``{label: dim}``
    mappings for inputs and outputs.  The environment dimension (Kraus rank)
    defaults to ``d_in * d_out``.
    """
    rng = np.random.default_rng(seed)
    ins, outs = _dims_pair(dims)
    if set(ins) | set(outs) <= set(STANDARD):
        for n in STANDARD:
            (ins if n.endswith("0") else outs).setdefault(n, 1)
        ins = {n: ins[n] for n in ("A0", "B0")}
        outs = {n: outs[n] for n in ("A1", "B1")}
    d_in, d_out = prod(ins.values()), prod(outs.values())
    env = rank or d_in * d_out
    v = haar_isometry(d_in, d_out * env, rng).reshape(d_out, env, d_in)
    kraus = [v[:, k, :] for k in range(env)]
    return channel_from_kraus(kraus, ins, outs)


def random_kraus_channel(inputs: Mapping[str, int], outputs: Mapping[str, int], rng) -> Channel:
    """Haar-random channel between arbitrary labelled systems (full Kraus rank)."""
    d_in, d_out = prod(inputs.values()), prod(outputs.values())
    env = d_in * d_out
    v = haar_isometry(d_in, d_out * env, rng).reshape(d_out, env, d_in)
    return channel_from_kraus([v[:, k, :] for k in range(env)], dict(inputs), dict(outputs))


def random_separable_channel(dims, seed=None, terms: int = 3) -> Channel:
    """Random convex mixture of products of Alice-local and Bob-local channels.

    Such channels are PPT by construction, which makes them a cheap source
    of PPT channels where a conic projection would be too large.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    ins, outs = _dims_pair(dims)
    a_in = {n: d for n, d in ins.items() if not is_bob(n)}
    a_out = {n: d for n, d in outs.items() if not is_bob(n)}
    b_in = {n: d for n, d in ins.items() if is_bob(n)}
    b_out = {n: d for n, d in outs.items() if is_bob(n)}
    w = rng.dirichlet(np.ones(terms))
    total = None
    for k in range(terms):
        a = random_kraus_channel(a_in, a_out, rng).choi
        b = random_kraus_channel(b_in, b_out, rng).choi
        term = tensor(a, b) * w[k]
        total = term if total is None else total + term
    order = list(ins) + list(outs)
    out = Channel(total.permute(order), list(ins), list(outs))
    if set(order) == set(STANDARD):
        out = Channel(out.choi.permute(STANDARD))
    return out


def _tp_normalise(choi: LabeledOperator, inputs, outputs) -> LabeledOperator:
    """Congruence by ``M^{-1/2}`` on the inputs so that ``Tr_out J = I`` exactly."""
    ordered = choi.permute(list(inputs) + list(outputs))
    d_out = prod(choi.dim(n) for n in outputs)
    m = partial_trace(ordered, outputs).permute(inputs).matrix if inputs else np.eye(1)
    w, u = np.linalg.eigh((m + m.conj().T) / 2)
    s = (u / np.sqrt(w)) @ u.conj().T
    big = np.kron(s, np.eye(d_out))
    mat = big @ ordered.matrix @ big.conj().T
    return LabeledOperator(ordered.systems, (mat + mat.conj().T) / 2).permute(choi.labels)


def nearest_ppt_channel(c: Channel) -> Channel:
    """Frobenius-nearest PPT channel to ``c`` (a conic projection)."""
    p = conic.ConicProgram("ppt-projection")
    x = p.variable("J", systems=c.choi.systems)
    t = p.scalar("t")
    p.add_psd(x, "choi")
    p.add_psd(x.ptranspose(c.bob), "ppt")
    marg = x.ptrace(c.outputs)
    ins = [n for n in c.inputs]
    p.add_equality(marg - identity_op(marg.systems), label="trace-preserving")
    p.add_soc(t, x - c.choi, "distance")
    p.minimize(t)
    sol = p.solve()
    if sol.status != conic.OPTIMAL:
        raise SolverError(f"PPT projection failed with status {sol.status}", sol)
    choi = LabeledOperator(c.choi.systems, (sol["J"] + sol["J"].conj().T) / 2)
    if ins:
        choi = _tp_normalise(choi, c.inputs, c.outputs)
    out = Channel(choi, c.inputs, c.outputs)
    if not validate_channel(out, tol=PPT_TOL).passed or not is_ppt_channel(out, PPT_TOL):
        raise SolverError("projected channel failed validation", sol)
    return out


def random_ppt_channel(dims=(2, 2, 2, 2), seed=None) -> Channel:
    """PPT channel nearest (Frobenius) to a Haar-random channel."""
    return nearest_ppt_channel(random_channel(dims, seed))


def random_state(d: int, rng, rank: int | None = None) -> np.ndarray:
    rank = rank or d
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
