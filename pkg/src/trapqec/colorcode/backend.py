"""Execution backends for colorcode circuits.

A backend runs a Circuit and returns its measurement outcomes as +/-1. The
cycle procedures only talk to this interface, so the same decoding logic runs
on an ideal statevector, on the noisy trap executor, or on a Pauli frame with
an injected fault.
"""

from __future__ import annotations

import numpy as np

from ..statevec import (PauliString, PureState, apply_global_rotation, apply_ms,
                        apply_pauli, apply_z_rotation, measure_z, reset)
from .circuit import Circuit
from .propagate import conjugate


class Backend:
    n_qubits: int

    def run(self, circuit: Circuit) -> dict:
        raise NotImplementedError

    def apply_pauli(self, p: PauliString) -> None:
        raise NotImplementedError

    def repump(self, qubits) -> None:
        """Leakage repumping hook; a no-op for leakage-free backends."""

    def idle(self, duration: float) -> None:
        """Let every ion idle; a no-op for noiseless backends."""


def _parity(outcomes: dict, keys) -> int:
    v = 1
    for k in keys:
        v *= outcomes[k]
    return v


class IdealBackend(Backend):
    """Noiseless statevector execution."""

    def __init__(self, state: PureState, rng):
        self.state = state
        self.rng = rng
        self.n_qubits = state.n_qubits
        self.log = []

    def run(self, circuit: Circuit) -> dict:
        if circuit.n_qubits != self.n_qubits:
            raise ValueError("circuit register does not match the state")
        self.log.append(circuit)
        out = {}
        st = self.state
        for op in circuit.ops:
            if op.kind == "r":
                apply_global_rotation(st, op.qubits, op.theta, op.phi)
            elif op.kind == "rz":
                apply_z_rotation(st, op.qubits[0], op.theta)
            elif op.kind == "ms":
                apply_ms(st, op.qubits, op.theta, op.phi)
            elif op.kind == "measure":
                out[op.key] = measure_z(st, op.qubits[0], self.rng)
            elif op.kind == "reset":
                reset(st, op.qubits[0], op.value, 0.0, self.rng)
            elif op.kind == "cpauli":
                if _parity(out, op.condition) == -1:
                    apply_pauli(st, _cpauli(op, self.n_qubits))
        return out

    def apply_pauli(self, p: PauliString) -> None:
        apply_pauli(self.state, p.extend(self.n_qubits) if p.n < self.n_qubits else p)


def _cpauli(op, n) -> PauliString:
    return PauliString.from_ops(n, dict(zip(op.qubits, op.pauli)))


# ---------------------------------------------------------------------------
# fault injection

def fault_locations(circuit: Circuit) -> list:
    """Single-fault locations of a circuit as (op_index, fault).

    ``fault`` is a PauliString applied right after a gate or reset, or the
    string 'flip' for a flipped measurement outcome. Gates get every
    non-identity Pauli on their ions, resets get X.
    """
    n = circuit.n_qubits
    locs = []
    for i, op in enumerate(circuit.ops):
        if op.is_gate():
            k = len(op.qubits)
            for code in range(1, 4 ** k):
                ops = {}
                for j, q in enumerate(op.qubits):
                    letter = "IXZY"[(code >> (2 * j)) & 3]
                    if letter != "I":
                        ops[q] = letter
                locs.append((i, PauliString.from_ops(n, ops)))
        elif op.kind == "reset":
            locs.append((i, PauliString.from_ops(n, {op.qubits[0]: "X"})))
        elif op.kind == "measure":
            locs.append((i, "flip"))
    return locs


class FrameBackend(Backend):
    """Pauli-frame execution relative to the ideal run.

    ``faults`` maps a run-call index to an (op_index, fault) pair from
    ``fault_locations``. Outcomes are the circuit's ideal values, flipped when
    the frame anticommutes with the measured Z. Valid whenever the decoding
    logic only uses outcome combinations that are deterministic in the ideal
    run, which holds for every circuit in this package.
    """

    def __init__(self, n_qubits: int, faults=None, frame: PauliString | None = None):
        self.n_qubits = n_qubits
        self.frame = frame if frame is not None else PauliString.identity(n_qubits)
        self.faults = dict(faults or {})
        self.calls = 0
        self.log = []

    def run(self, circuit: Circuit) -> dict:
        if circuit.n_qubits != self.n_qubits:
            raise ValueError("circuit register does not match the frame")
        fault = self.faults.get(self.calls)
        self.calls += 1
        self.log.append(circuit)
        out = {}
        f = self.frame
        n = self.n_qubits
        for i, op in enumerate(circuit.ops):
            if op.is_gate():
                f = conjugate(f, op)
            elif op.kind == "reset":
                mask = ~(1 << op.qubits[0])
                f = PauliString(n, f.x & mask, f.z & mask)
            elif op.kind == "measure":
                q = op.qubits[0]
                flipped = (f.x >> q) & 1
                if fault is not None and fault[0] == i and fault[1] == "flip":
                    flipped ^= 1
                out[op.key] = -op.value if flipped else op.value
                f = PauliString(n, f.x, f.z & ~(1 << q))
            elif op.kind == "cpauli":
                ideal = _parity({op_.key: op_.value for op_ in circuit.ops
                                 if op_.kind == "measure"}, op.condition)
                if _parity(out, op.condition) != ideal:
                    f = f * _cpauli(op, n)
            if fault is not None and fault[0] == i and fault[1] != "flip":
                f = f * fault[1]
        self.frame = f
        return out

    def apply_pauli(self, p: PauliString) -> None:
        self.frame = self.frame * (p.extend(self.n_qubits) if p.n < self.n_qubits else p)
