"""Hermitian operators over labelled tensor-product spaces.

A :class:`LabeledOperator` is a square complex matrix together with an
ordered list of named subsystems.  Partial operations address subsystems by
name, never by position, so operators built in different places can be
combined without index bookkeeping at the call site.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Iterable, Mapping

import numpy as np

from . import _tensor
from .errors import LabelCollision, NotHermitian, ShapeError, UnknownLabel

HERMITIAN_TOL = 1e-10


@dataclass(frozen=True)
class SystemLabel:
    name: str
    dim: int

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ShapeError(f"system {self.name!r} has dimension {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))


def _as_systems(systems) -> tuple[SystemLabel, ...]:
    out = []
    for s in systems:
        if isinstance(s, SystemLabel):
            out.append(s)
        elif isinstance(s, Mapping):
            out.append(SystemLabel(s["name"], s["dim"]))
        else:
            name, dim = s
            out.append(SystemLabel(name, dim))
    names = [s.name for s in out]
    if len(set(names)) != len(names):
        raise LabelCollision(f"duplicate subsystem labels in {names}")
    return tuple(out)


class LabeledOperator:
    """Square matrix acting on an ordered list of named subsystems.

    The matrix uses row-major tensor ordering following ``systems``.  Instances
    are immutable: the stored array is a read-only copy.
    """

    __slots__ = ("systems", "matrix")

    def __init__(self, systems, matrix, hermitian: bool = False):
        systems = _as_systems(systems)
        mat = np.array(matrix, dtype=complex)
        if mat.ndim == 0:
            mat = mat.reshape(1, 1)
        side = prod(s.dim for s in systems)
        if mat.shape != (side, side):
            raise ShapeError(f"matrix shape {mat.shape} does not match systems of total dimension {side}")
        if hermitian and not is_hermitian(mat):
            raise NotHermitian("matrix is not Hermitian within tolerance")
        mat.setflags(write=False)
        object.__setattr__(self, "systems", systems)
        object.__setattr__(self, "matrix", mat)

    def __setattr__(self, name, value):
        raise AttributeError("LabeledOperator is immutable")

    # -- basic accessors --------------------------------------------------

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.systems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.systems)

    @property
    def side(self) -> int:
        return self.matrix.shape[0]

    def dim(self, label: str) -> int:
        for s in self.systems:
            if s.name == label:
                return s.dim
        raise UnknownLabel(label)

    def dim_map(self) -> dict[str, int]:
        return {s.name: s.dim for s in self.systems}

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def __repr__(self):
        sys = ", ".join(f"{s.name}:{s.dim}" for s in self.systems)
        return f"LabeledOperator([{sys}], side={self.side})"

    # -- structural operations --------------------------------------------

    def _positions(self, labels: Iterable[str]) -> tuple[int, ...]:
        index = {name: i for i, name in enumerate(self.labels)}
        try:
            return tuple(index[name] for name in labels)
        except KeyError as exc:
            raise UnknownLabel(f"{exc.args[0]!r} not in {self.labels}") from None

    def permute(self, order: Iterable[str]) -> "LabeledOperator":
        """Reorder subsystems to ``order`` (which must list every label once)."""
        order = tuple(order)
        perm = self._positions(order)
        if sorted(perm) != list(range(len(self.systems))):
            raise ShapeError(f"{order} is not a permutation of {self.labels}")
        if perm == tuple(range(len(perm))):
            return self
        mat = _tensor.permute(self.matrix, self.dims, perm)
        return LabeledOperator([self.systems[p] for p in perm], mat)

    def relabel(self, mapping: Mapping[str, str]) -> "LabeledOperator":
        systems = [SystemLabel(mapping.get(s.name, s.name), s.dim) for s in self.systems]
        return LabeledOperator(systems, self.matrix)

    def aligned(self, other: "LabeledOperator") -> "LabeledOperator":
        """``other`` permuted into this operator's subsystem order."""
        if sorted(other.systems, key=lambda s: s.name) != sorted(self.systems, key=lambda s: s.name):
            raise ShapeError(f"operators act on different systems: {self.systems} vs {other.systems}")
        return other.permute(self.labels)

    def canonical(self) -> "LabeledOperator":
        """The same operator with subsystems sorted by label."""
        return self.permute(sorted(self.labels))

    def ptrace(self, labels: Iterable[str]) -> "LabeledOperator":
        return partial_trace(self, labels)

    def ptranspose(self, labels: Iterable[str]) -> "LabeledOperator":
        return partial_transpose(self, labels)

    def dagger(self) -> "LabeledOperator":
        return LabeledOperator(self.systems, self.matrix.conj().T)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = self.aligned(other)
        return LabeledOperator(self.systems, self.matrix + other.matrix)

    def __sub__(self, other):
        other = self.aligned(other)
        return LabeledOperator(self.systems, self.matrix - other.matrix)

    def __mul__(self, scalar):
        return LabeledOperator(self.systems, self.matrix * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return LabeledOperator(self.systems, self.matrix / scalar)

    def __neg__(self):
        return LabeledOperator(self.systems, -self.matrix)

    def __matmul__(self, other):
        other = self.aligned(other)
        return LabeledOperator(self.systems, self.matrix @ other.matrix)

    def allclose(self, other, atol=1e-9) -> bool:
        try:
            other = self.aligned(other)
        except ShapeError:
            return False
        return bool(np.allclose(self.matrix, other.matrix, atol=atol, rtol=0))

    # -- serialisation ------------------------------------------------------

    def to_json(self) -> dict:
        m = self.matrix
        return {
            "systems": [{"name": s.name, "dim": s.dim} for s in self.systems],
            "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in m],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "LabeledOperator":
        arr = np.asarray(data["matrix"], dtype=float)
        if arr.ndim == 3:
            mat = arr[..., 0] + 1j * arr[..., 1]
        else:
            # flat row-major list of [re, im] pairs
            side = int(round(np.sqrt(arr.shape[0])))
            mat = (arr[:, 0] + 1j * arr[:, 1]).reshape(side, side)
        return cls(data["systems"], mat)


def is_hermitian(mat, tol: float = HERMITIAN_TOL) -> bool:
    mat = np.asarray(mat)
    return bool(np.max(np.abs(mat - mat.conj().T), initial=0.0) <= tol)


def operator(systems, matrix, hermitian=False) -> LabeledOperator:
    return LabeledOperator(systems, matrix, hermitian=hermitian)


def identity(systems) -> LabeledOperator:
    systems = _as_systems(systems)
    return LabeledOperator(systems, np.eye(prod(s.dim for s in systems)))


def scalar(value) -> LabeledOperator:
    return LabeledOperator([], np.array([[value]]))


def tensor(a: LabeledOperator, b: LabeledOperator, *more: LabeledOperator) -> LabeledOperator:
    """Kronecker product, systems concatenated in argument order."""
    clash = set(a.labels) & set(b.labels)
    if clash:
        raise LabelCollision(f"labels {sorted(clash)} appear in both factors")
    out = LabeledOperator(a.systems + b.systems, np.kron(a.matrix, b.matrix))
    for c in more:
        out = tensor(out, c)
    return out


def partial_trace(op: LabeledOperator, labels: Iterable[str]) -> LabeledOperator:
    labels = set(labels)
    pos = op._positions(sorted(labels))
    if not pos:
        return op
    mat = _tensor.ptrace(op.matrix, op.dims, pos)
    return LabeledOperator([s for i, s in enumerate(op.systems) if i not in pos], mat)


def partial_transpose(op: LabeledOperator, labels: Iterable[str]) -> LabeledOperator:
    pos = op._positions(sorted(set(labels)))
    if not pos:
        return op
    n = len(op.systems)
    mat = _tensor.permute(op.matrix, op.dims, tuple(range(n)), pos)
    return LabeledOperator(op.systems, mat)


def link_product(a: LabeledOperator, b: LabeledOperator) -> LabeledOperator:
    """Link product ``Tr_s[(a^{T_s} (x) 1)(1 (x) b)]`` over the shared labels ``s``.

    The result acts on ``a``'s unshared systems followed by ``b``'s.
    """
    shared = [name for name in a.labels if name in set(b.labels)]
    for name in shared:
        if a.dim(name) != b.dim(name):
            raise ShapeError(f"system {name!r} has dimension {a.dim(name)} vs {b.dim(name)}")
    arest = [n for n in a.labels if n not in shared]
    brest = [n for n in b.labels if n not in shared]
    xa = a.permute(arest + shared)
    yb = b.permute(shared + brest)
    dx = prod(a.dim(n) for n in arest)
    dy = prod(b.dim(n) for n in brest)
    ds = prod(a.dim(n) for n in shared)
    x = xa.matrix.reshape(dx, ds, dx, ds)
    y = yb.matrix.reshape(ds, dy, ds, dy)
    out = np.einsum("aubt,uctd->acbd", x, y).reshape(dx * dy, dx * dy)
    systems = [s for s in a.systems if s.name in arest] + [s for s in b.systems if s.name in brest]
    return LabeledOperator(systems, out)


def _eigvalsh(op) -> np.ndarray:
    mat = op.matrix if isinstance(op, LabeledOperator) else np.asarray(op)
    if not is_hermitian(mat):
        raise NotHermitian("spectral quantity requested for a non-Hermitian matrix")
    return np.linalg.eigvalsh((mat + mat.conj().T) / 2)


def eigenvalues(op) -> np.ndarray:
    return _eigvalsh(op)


def trace_norm(op) -> float:
    return float(np.sum(np.abs(_eigvalsh(op))))


def operator_norm(op) -> float:
    return float(np.max(np.abs(_eigvalsh(op))))


def min_eigenvalue(op) -> float:
    return float(_eigvalsh(op)[0])
