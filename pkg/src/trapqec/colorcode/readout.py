"""Syndrome-extraction and encoding circuits built from native gates.

Register conventions:
  flag scheme  9 ions: data 0..6, syndrome s=7, flag f=8
  cat scheme  11 ions: data 0..6, cat ancillas a1..a4 = 7..10
Encoding uses ion 7 as its flag and ion 8 as the logical-readout ancilla.

Entangling steps are CNOTs compiled to one MS gate plus rotations. A Z-type
readout is the X-type readout conjugated by Y rotations on its data ions.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..statevec import PauliString
from .circuit import Circuit
from .code import N_DATA, PLAQUETTES, data_pauli

HALF = np.pi / 2
S_ION, F_ION = 7, 8
A1, A2, A3, A4 = 7, 8, 9, 10
ENC_FLAG, ENC_AUX = 7, 8
FLAG_LABELS = [f"d{i}" for i in range(1, 8)] + ["s", "f"]
CAT_LABELS = [f"d{i}" for i in range(1, 8)] + ["a1", "a2", "a3", "a4"]

# Eight-CNOT preparation of |0_L>: ions prepared in |+> then CNOT (control, target),
# all 0-indexed. Only the final pair can spread a fault into a weight-2 X error.
ENCODER_PLUS = (0, 1, 2)
ENCODER_CNOTS = ((0, 3), (0, 5), (2, 3), (1, 0), (0, 6), (3, 6), (5, 4), (6, 5))
# Weight-3 Z logical checked by the encoding flag (1-indexed).
ENCODER_CHECK = (1, 3, 6)
LOGICAL_READOUTS = ((1, 2, 5), (5, 6, 7))
# Flag -1 follow-up: outcomes of (Z1Z2Z5, Z5Z6Z7) -> X correction (1-indexed).
ENCODING_CORRECTIONS = {(1, 1): (3,), (1, -1): (), (-1, 1): (1,), (-1, -1): ()}


def _register(n: int) -> Circuit:
    if n == 9:
        return Circuit(9, list(FLAG_LABELS))
    if n == 11:
        return Circuit(11, list(CAT_LABELS))
    return Circuit(n)


def _check_args(plaquette: int, basis: str):
    if plaquette not in (1, 2, 3):
        raise ValueError("plaquette must be 1, 2 or 3")
    if basis not in ("X", "Z"):
        raise ValueError("basis must be 'X' or 'Z'")


def _data(plaquette: int) -> list:
    return [q - 1 for q in PLAQUETTES[plaquette - 1]]


def _wrap_basis(c: Circuit, data: list, basis: str, before: bool):
    if basis == "Z":
        for q in data:
            c.ry(q, HALF if before else -HALF)


@lru_cache(maxsize=None)
def build_flag_readout(plaquette: int, basis: str, n_qubits: int = 9) -> Circuit:
    """Flagged readout of S^(p) of type ``basis``; keys 's' (syndrome) and 'f' (flag).

    Both ancillas start in |1>. The syndrome ion is rotated to an X eigenstate,
    drives the data ions in plaquette order, and is coupled to the flag after
    the first and before the last data coupling so that a hook on the last two
    data ions flips the flag.
    """
    _check_args(plaquette, basis)
    i1, i2, i3, i4 = _data(plaquette)
    c = _register(n_qubits)
    c.reset(S_ION, 1).reset(F_ION, 1)
    _wrap_basis(c, [i1, i2, i3, i4], basis, True)
    c.ry(S_ION, HALF)
    c.cnot(S_ION, i1)
    c.cnot(S_ION, F_ION)
    c.cnot(S_ION, i2)
    c.cnot(S_ION, i3)
    c.cnot(S_ION, F_ION)
    c.cnot(S_ION, i4)
    c.ry(S_ION, HALF)
    c.rx(F_ION, np.pi)
    _wrap_basis(c, [i1, i2, i3, i4], basis, False)
    c.measure(S_ION, "s").measure(F_ION, "f")
    return c


@lru_cache(maxsize=None)
def build_unflagged_readout(plaquette: int, basis: str, n_qubits: int = 9) -> Circuit:
    """Bare-ancilla readout of S^(p); key 's'."""
    _check_args(plaquette, basis)
    data = _data(plaquette)
    c = _register(n_qubits)
    c.reset(S_ION, 1)
    _wrap_basis(c, data, basis, True)
    c.ry(S_ION, HALF)
    for q in data:
        c.cnot(S_ION, q)
    c.ry(S_ION, HALF)
    _wrap_basis(c, data, basis, False)
    c.measure(S_ION, "s")
    return c


@lru_cache(maxsize=None)
def build_cat_readout(plaquette: int, basis: str, n_qubits: int = 11) -> Circuit:
    """Cat-state readout of S^(p); keys 'a1'..'a4'.

    a1, a2 hold the cat (|00> - |11>)/sqrt2 so S = -M_a1 M_a2. a3 and a4 each
    record the cat parity, a3 after the first coupling of each cat ion and a4
    at the end; a parity flip seen by both gives (M_a3, M_a4) = (+1, -1).
    """
    _check_args(plaquette, basis)
    i1, i2, i3, i4 = _data(plaquette)
    c = _register(n_qubits)
    c.reset(A1, 1).reset(A2, 0).reset(A3, 1).reset(A4, 0)
    _wrap_basis(c, [i1, i2, i3, i4], basis, True)
    c.ry(A1, HALF)
    c.cnot(A1, A2)
    c.cnot(A1, i1)
    c.cnot(A2, i3)
    c.cnot(A1, A3)
    c.cnot(A2, A3)
    c.cnot(A1, i2)
    c.cnot(A2, i4)
    c.cnot(A1, A4)
    c.cnot(A2, A4)
    c.ry(A1, -HALF)
    c.ry(A2, -HALF)
    _wrap_basis(c, [i1, i2, i3, i4], basis, False)
    c.measure(A1, "a1", ideal=1).measure(A2, "a2", ideal=-1)
    c.measure(A3, "a3", ideal=-1).measure(A4, "a4", ideal=1)
    return c


@lru_cache(maxsize=None)
def build_ft_encoding(target: str = "zero_L", n_qubits: int = 9) -> Circuit:
    """Flag-verified preparation of |0_L> or |+_L>; key 'f' for the flag.

    When 'f' reads -1 the caller measures the two weight-3 logicals of
    ``LOGICAL_READOUTS`` and applies ``ENCODING_CORRECTIONS`` (see ``encode``).
    |+_L> follows from |0_L> by transversal Y(pi/2) rotations.
    """
    if target not in ("zero_L", "plus_L"):
        raise ValueError("target must be 'zero_L' or 'plus_L'")
    c = _register(n_qubits)
    for q in range(N_DATA):
        c.reset(q, 0)
    c.reset(ENC_FLAG, 0)
    for q in ENCODER_PLUS:
        c.ry(q, HALF)
    for ctl, tgt in ENCODER_CNOTS:
        c.cnot(ctl, tgt)
    for q in ENCODER_CHECK:
        c.cnot(q - 1, ENC_FLAG)
    c.measure(ENC_FLAG, "f")
    if target == "plus_L":
        for q in range(N_DATA):
            c.ry(q, HALF)
    return c


@lru_cache(maxsize=None)
def build_logical_readout(support: tuple, n_qubits: int = 9) -> Circuit:
    """Measure a weight-3 Z logical onto the auxiliary ion; key 'zl'."""
    c = _register(n_qubits)
    c.reset(ENC_AUX, 0)
    for q in support:
        c.cnot(q - 1, ENC_AUX)
    c.measure(ENC_AUX, "zl")
    return c


@lru_cache(maxsize=None)
def build_transversal(kind: str, n_qubits: int = 9) -> Circuit:
    """Single-ion layer on all data ions.

    'hadamard' maps |0_L> to |+_L> and 'phase' maps |+_L> to |+i_L>. 'not'
    and 'phase_flip' apply X_L and Z_L through the weight-3 representative on
    data 1, 2, 5.
    """
    c = _register(n_qubits)
    qubits = (0, 1, 4) if kind in ("not", "phase_flip") else range(N_DATA)
    for q in qubits:
        if kind == "hadamard":
            c.ry(q, HALF)
        elif kind == "phase":
            c.rz(q, -HALF)
        elif kind == "not":
            c.rx(q, np.pi)
        elif kind == "phase_flip":
            c.rz(q, np.pi)
        else:
            raise ValueError(f"unknown transversal layer {kind!r}")
    return c


@lru_cache(maxsize=None)
def build_basis_measurement(basis: str, n_qubits: int = 9) -> Circuit:
    """Destructive transversal readout of all data ions in basis x, y or z; keys 'm1'..'m7'."""
    c = _register(n_qubits)
    for q in range(N_DATA):
        if basis == "x":
            c.ry(q, -HALF)
        elif basis == "y":
            c.rx(q, HALF)
        elif basis != "z":
            raise ValueError("basis must be x, y or z")
        c.measure(q, f"m{q + 1}")
    return c


def encoding_correction(z125: int, z567: int) -> PauliString:
    return data_pauli("X", ENCODING_CORRECTIONS[(int(z125), int(z567))])
