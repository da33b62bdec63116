"""Symbolic Clifford conjugation of Pauli operators through native circuits."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..statevec import PauliString, ms_matrix, rotation_matrix, z_rotation_matrix
from .circuit import Circuit, Op


class NotClifford(ValueError):
    pass


def op_matrix(op: Op) -> np.ndarray:
    """Unitary of a gate record on its own qubits (bit i of the index = op.qubits[i])."""
    if op.kind == "r":
        return rotation_matrix(op.theta, op.phi)
    if op.kind == "rz":
        return z_rotation_matrix(op.theta)
    if op.kind == "ms":
        return ms_matrix(len(op.qubits), op.theta, op.phi)
    raise ValueError(f"{op.kind} is not a unitary gate")


def _decompose(m: np.ndarray, k: int) -> PauliString:
    """Identify ``m`` as a k-qubit Pauli up to phase."""
    d = 2 ** k
    for xmask in range(d):
        for zmask in range(d):
            p = PauliString(k, xmask, zmask)
            overlap = np.trace(p.matrix().conj().T @ m) / d
            if abs(abs(overlap) - 1) < 1e-8:
                return p
            if abs(overlap) > 1e-8:
                raise NotClifford("conjugated Pauli is not a Pauli")
    raise NotClifford("conjugated Pauli is not a Pauli")


@lru_cache(maxsize=None)
def _table(kind: str, k: int, theta: float, phi: float):
    """Images U P U^dagger of X_i and Z_i for each local qubit i."""
    u = op_matrix(Op(kind, tuple(range(k)), theta, phi))
    images = []
    for i in range(k):
        row = []
        for letter in "XZ":
            p = PauliString.from_ops(k, {i: letter}).matrix()
            row.append(_decompose(u @ p @ u.conj().T, k))
        images.append(tuple(row))
    return tuple(images)


def conjugate(p: PauliString, op: Op) -> PauliString:
    """Return U p U^dagger (phase dropped) for a gate record ``op``."""
    if not op.is_gate():
        raise ValueError("only gates conjugate Paulis")
    qs = op.qubits
    if p.restrict(qs).is_identity():
        return p
    table = _table(op.kind, len(qs), round(op.theta, 12), round(op.phi, 12))
    out = PauliString(len(qs), 0, 0)
    for i, q in enumerate(qs):
        if (p.x >> q) & 1:
            out = out * table[i][0]
        if (p.z >> q) & 1:
            out = out * table[i][1]
    x, z = p.x, p.z
    for i, q in enumerate(qs):
        x &= ~(1 << q)
        z &= ~(1 << q)
        x |= ((out.x >> i) & 1) << q
        z |= ((out.z >> i) & 1) << q
    return PauliString(p.n, x, z)


def propagate_pauli(p: PauliString, through: Circuit, start: int = 0) -> PauliString:
    """Push ``p`` forward through the gates of ``through`` from op index ``start``.

    Measurements and resets are not allowed; use a frame simulation for those.
    """
    for op in through.ops[start:]:
        if not op.is_gate():
            raise ValueError("propagate_pauli only handles unitary circuits")
        p = conjugate(p, op)
    return p


def pauli_letters(k: int):
    """All non-identity k-qubit Paulis as PauliStrings."""
    return [PauliString(k, x, z) for x in range(2 ** k) for z in range(2 ** k)
            if x or z]

