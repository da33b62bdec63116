"""Stabilizers and logical operators of the distance-3 triangular color code.

Data qubits are labelled 1..7 in docstrings and tables and stored 0..6.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..statevec import PauliString

N_DATA = 7
PLAQUETTES = ((1, 2, 3, 4), (2, 3, 5, 6), (3, 4, 6, 7))


def data_pauli(letter: str, qubits, n: int = N_DATA) -> PauliString:
    """Pauli with ``letter`` on 1-indexed data qubits."""
    return PauliString.from_ops(n, {q - 1: letter for q in qubits})


@dataclass(frozen=True)
class StabilizerSpec:
    sx: tuple
    sz: tuple
    x_logical: PauliString
    z_logical: PauliString
    z_logical_w3: PauliString
    z_logical_w3_alt: PauliString

    @property
    def generators(self) -> tuple:
        return self.sx + self.sz

    def stabilizer(self, basis: str, p: int) -> PauliString:
        """Plaquette ``p`` (1..3) stabilizer of type ``basis``."""
        return (self.sx if basis == "X" else self.sz)[p - 1]

    def syndrome(self, error: PauliString) -> tuple:
        """(S_x triple, S_z triple) as +/-1 values for a data Pauli error."""
        e = error.restrict(range(N_DATA))
        sx = tuple(1 if e.commutes(s) else -1 for s in self.sx)
        sz = tuple(1 if e.commutes(s) else -1 for s in self.sz)
        return sx, sz


def build_spec() -> StabilizerSpec:
    return StabilizerSpec(
        sx=tuple(data_pauli("X", p) for p in PLAQUETTES),
        sz=tuple(data_pauli("Z", p) for p in PLAQUETTES),
        x_logical=data_pauli("X", range(1, 8)),
        z_logical=data_pauli("Z", range(1, 8)),
        z_logical_w3=data_pauli("Z", (1, 2, 5)),
        z_logical_w3_alt=data_pauli("Z", (5, 6, 7)),
    )


SPEC = build_spec()


def _mask(bits_from_gens, gens):
    x = z = 0
    for b, g in zip(bits_from_gens, gens):
        if b:
            x ^= g.x
            z ^= g.z
    return x, z


def stabilizer_group():
    """All 64 elements of the stabilizer group as (x, z) mask pairs."""
    gens = SPEC.generators
    return {_mask(bits, gens) for bits in itertools.product((0, 1), repeat=6)}


_GROUP = None


def _group():
    global _GROUP
    if _GROUP is None:
        _GROUP = stabilizer_group()
    return _GROUP


def in_stabilizer_group(p: PauliString) -> bool:
    e = p.restrict(range(N_DATA))
    return (e.x, e.z) in _group()


def logical_class(p: PauliString) -> str:
    """Logical action of a syndrome-free data Pauli: one of I, X, Y, Z."""
    e = p.restrict(range(N_DATA))
    sx, sz = SPEC.syndrome(e)
    if -1 in sx or -1 in sz:
        raise ValueError("operator has a nontrivial syndrome")
    flip_x = not e.commutes(SPEC.z_logical)   # contains logical X
    flip_z = not e.commutes(SPEC.x_logical)   # contains logical Z
    return "IXZY"[flip_x + 2 * flip_z]


def min_weight_equivalent(p: PauliString, extra=()) -> int:
    """Smallest weight of ``p`` times any element of the stabilizer group.

    ``extra`` adds further generators (e.g. a logical stabilizing the state).
    """
    e = p.restrict(range(N_DATA))
    gens = list(SPEC.generators) + [g.restrict(range(N_DATA)) for g in extra]
    best = N_DATA
    for bits in itertools.product((0, 1), repeat=len(gens)):
        x, z = _mask(bits, gens)
        best = min(best, bin((e.x ^ x) | (e.z ^ z)).count("1"))
    return best


def codespace_projector() -> np.ndarray:
    """Dense 128x128 projector onto the code space."""
    d = 2 ** N_DATA
    proj = np.eye(d, dtype=complex)
    for g in SPEC.generators:
        proj = proj @ (np.eye(d) + g.matrix()) / 2
    return proj


def logical_basis() -> tuple:
    """Amplitude vectors of |0_L> and |1_L> on the 7 data qubits."""
    proj = codespace_projector()
    zero = proj[:, 0] / np.linalg.norm(proj[:, 0])
    one = SPEC.x_logical.matrix() @ zero
    return zero, one


def logical_state(alpha: complex, beta: complex) -> np.ndarray:
    zero, one = logical_basis()
    v = alpha * zero + beta * one
    return v / np.linalg.norm(v)
