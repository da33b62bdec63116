"""Gate-level circuit records over native trapped-ion operations.

Native kinds:
  ``r``       resonant rotation R(theta, phi) on one or more ions
  ``rz``      virtual Z rotation
  ``ms``      Molmer-Sorensen gate MS(theta, phi) on two or more ions
  ``measure`` projective Z readout recorded under a key
  ``reset``   optical pumping to |value>
  ``cpauli``  Pauli applied when a set of earlier outcomes has odd parity
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..statevec import PauliString

GATE_KINDS = ("r", "rz", "ms")
KINDS = GATE_KINDS + ("measure", "reset", "cpauli")


@dataclass(frozen=True)
class Op:
    kind: str
    qubits: tuple
    theta: float = 0.0
    phi: float = 0.0
    key: str | None = None      # measurement key
    value: int = 0              # reset target / ideal outcome for readouts
    condition: tuple = ()       # measurement keys for cpauli
    pauli: str = ""             # letters for cpauli, aligned with qubits

    def is_gate(self) -> bool:
        return self.kind in GATE_KINDS

    def text(self, labels=None) -> str:
        names = [labels[q] if labels else str(q) for q in self.qubits]
        tq = ",".join(names)
        if self.kind == "r":
            return f"R({_ang(self.theta)}, {_ang(self.phi)}) {tq}"
        if self.kind == "rz":
            return f"Rz({_ang(self.theta)}) {tq}"
        if self.kind == "ms":
            return f"MS({_ang(self.theta)}, {_ang(self.phi)}) {tq}"
        if self.kind == "measure":
            return f"measure {tq} -> {self.key}"
        if self.kind == "reset":
            return f"reset {tq} |{self.value}>"
        cond = "^".join(self.condition)
        return f"if {cond}: {self.pauli} {tq}"


def _ang(a: float) -> str:
    """Render angles as multiples of pi where possible."""
    r = a / np.pi
    for den in (1, 2, 4):
        num = r * den
        if abs(num - round(num)) < 1e-12:
            num = int(round(num))
            if num == 0:
                return "0"
            s = "" if num > 0 else "-"
            n = abs(num)
            head = "pi" if n == 1 else f"{n}pi"
            return s + (head if den == 1 else f"{head}/{den}")
    return f"{a:.6g}"


@dataclass
class Circuit:
    """Ordered list of native operations on a fixed register."""

    n_qubits: int
    labels: list = field(default_factory=list)
    ops: list = field(default_factory=list)

    def __post_init__(self):
        if not self.labels:
            self.labels = [f"q{i}" for i in range(self.n_qubits)]
        if len(self.labels) != self.n_qubits:
            raise ValueError("one label per qubit required")

    # -- construction -------------------------------------------------
    def _check(self, qubits):
        for q in qubits:
            if not 0 <= q < self.n_qubits:
                raise ValueError(f"qubit {q} outside register of {self.n_qubits}")
        if len(set(qubits)) != len(qubits):
            raise ValueError("duplicate targets")

    def _last_on(self, q):
        for i in range(len(self.ops) - 1, -1, -1):
            if q in self.ops[i].qubits:
                return i
        return None

    def r(self, q: int, theta: float, phi: float, merge: bool = True) -> "Circuit":
        """Single-ion rotation; cancels against an exact inverse just before it."""
        self._check([q])
        if merge:
            i = self._last_on(q)
            if i is not None:
                prev = self.ops[i]
                if (prev.kind == "r" and prev.qubits == (q,)
                        and abs(prev.phi - phi) < 1e-12 and abs(prev.theta + theta) < 1e-12):
                    del self.ops[i]
                    return self
        self.ops.append(Op("r", (q,), float(theta), float(phi)))
        return self

    def rx(self, q, theta):
        return self.r(q, theta, 0.0)

    def ry(self, q, theta):
        return self.r(q, theta, np.pi / 2)

    def rz(self, q: int, theta: float) -> "Circuit":
        self._check([q])
        self.ops.append(Op("rz", (q,), float(theta)))
        return self

    def ms(self, qubits, theta: float = np.pi / 2, phi: float = 0.0) -> "Circuit":
        qubits = tuple(qubits)
        if len(qubits) < 2:
            raise ValueError("MS gate needs at least two ions")
        self._check(qubits)
        self.ops.append(Op("ms", qubits, float(theta), float(phi)))
        return self

    def measure(self, q: int, key: str, ideal: int = 1) -> "Circuit":
        self._check([q])
        if key in self.measurement_keys():
            raise ValueError(f"duplicate measurement key {key}")
        self.ops.append(Op("measure", (q,), key=key, value=int(ideal)))
        return self

    def reset(self, q: int, value: int = 0) -> "Circuit":
        self._check([q])
        if value not in (0, 1):
            raise ValueError("reset value must be 0 or 1")
        self.ops.append(Op("reset", (q,), value=value))
        return self

    def cpauli(self, pauli: dict, condition) -> "Circuit":
        """Apply ``pauli`` ({qubit: letter}) if the product of outcomes is -1."""
        condition = tuple(condition)
        known = set(self.measurement_keys())
        for k in condition:
            if k not in known:
                raise ValueError(f"condition on unknown or later measurement {k}")
        qubits = tuple(sorted(pauli))
        self._check(qubits)
        self.ops.append(Op("cpauli", qubits, condition=condition,
                           pauli="".join(pauli[q] for q in qubits)))
        return self

    def cnot(self, control: int, target: int) -> "Circuit":
        """CNOT compiled to one MS gate and single-ion rotations (exact up to phase)."""
        h = np.pi / 2
        self.ry(control, h)
        self.ms((control, target), -h, 0.0)
        self.rx(control, h)
        self.ry(control, -h)
        self.rx(target, h)
        return self

    def extend(self, other: "Circuit", mapping=None) -> "Circuit":
        """Append ``other``'s operations, relabelling its qubits through ``mapping``."""
        mapping = mapping or list(range(other.n_qubits))
        for op in other.ops:
            qs = tuple(mapping[q] for q in op.qubits)
            self._check(qs)
            if op.kind == "r":
                self.r(qs[0], op.theta, op.phi)
            else:
                self.ops.append(Op(op.kind, qs, op.theta, op.phi, op.key, op.value,
                                   op.condition, op.pauli))
        return self

    # -- queries ------------------------------------------------------
    def measurement_keys(self) -> list:
        return [op.key for op in self.ops if op.kind == "measure"]

    def count(self, kind: str) -> int:
        return sum(op.kind == kind for op in self.ops)

    def to_text(self) -> str:
        lines = [f"# {self.n_qubits} qubits: " + " ".join(self.labels)]
        lines += [op.text(self.labels) for op in self.ops]
        return "\n".join(lines) + "\n"

    def __len__(self):
        return len(self.ops)
