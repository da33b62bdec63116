"""Exhaustive single-fault injection for readout cycles and encoding."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..statevec import PauliString
from .backend import FrameBackend, fault_locations
from .circuit import Circuit
from .code import N_DATA, SPEC, in_stabilizer_group, min_weight_equivalent
from .cycle import qec_cycle_cat, qec_cycle_flag, encode
from .readout import F_ION, S_ION, build_unflagged_readout
from .tables import flag_table_label, parse_label


@dataclass
class FaultReport:
    name: str
    locations: int = 0
    failures: int = 0
    examples: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.locations > 0 and self.failures == 0

    def line(self) -> str:
        return f"{self.name}: {self.locations} fault locations, {self.failures} failures"


def _split(p: PauliString):
    d = p.restrict(range(N_DATA))
    return PauliString(N_DATA, d.x, 0), PauliString(N_DATA, 0, d.z)


def ideal_decode(residual: PauliString) -> PauliString:
    """Residual after one perfect round of table decoding (no-flag columns)."""
    e = residual.restrict(range(N_DATA))
    e = PauliString(N_DATA, e.x, e.z)
    sx, sz = SPEC.syndrome(e)
    corr = parse_label(flag_table_label("X", sx)) * parse_label(flag_table_label("Z", sz))
    corr = corr.restrict(range(N_DATA))
    return e * PauliString(N_DATA, corr.x, corr.z)


def logical_failure(residual: PauliString) -> bool:
    return not in_stabilizer_group(ideal_decode(residual))


def correctable(residual: PauliString, x_extra=(), z_extra=()) -> bool:
    """X and Z parts each equivalent to weight <= 1 (decoded independently)."""
    xp, zp = _split(residual)
    return (min_weight_equivalent(xp, extra=x_extra) <= 1
            and min_weight_equivalent(zp, extra=z_extra) <= 1)


def _enumerate(run, n_qubits: int, name: str, judge) -> FaultReport:
    """Run ``run(backend)`` once per single-fault location of every circuit it invokes."""
    clean = FrameBackend(n_qubits)
    run(clean)
    rep = FaultReport(name)
    for k, circ in enumerate(clean.log):
        for loc in fault_locations(circ):
            b = FrameBackend(n_qubits, faults={k: loc})
            run(b)
            rep.locations += 1
            if not judge(b.frame):
                rep.failures += 1
                if len(rep.examples) < 5:
                    i, f = loc
                    rep.examples.append((k, i, circ.ops[i].text(circ.labels), str(f),
                                         str(b.frame)))
    return rep


def verify_flag_cycle(readout=None) -> FaultReport:
    kw = {} if readout is None else {"readout": readout}
    name = "flag cycle" if readout is None else "flag cycle (broken readout)"
    return _enumerate(lambda b: qec_cycle_flag(b, **kw), 9, name,
                      lambda fr: not logical_failure(fr))


def verify_cat_cycle() -> FaultReport:
    return _enumerate(qec_cycle_cat, 11, "cat cycle", lambda fr: not logical_failure(fr))


def verify_encoding(target: str = "zero_L") -> FaultReport:
    if target == "zero_L":
        judge = lambda fr: correctable(fr, z_extra=[SPEC.z_logical])  # noqa: E731
    else:
        judge = lambda fr: correctable(fr, x_extra=[SPEC.x_logical])  # noqa: E731
    return _enumerate(lambda b: encode(b, target), 9, f"encoding {target}", judge)


@lru_cache(maxsize=None)
def build_broken_flag_readout(plaquette: int, basis: str, n_qubits: int = 9) -> Circuit:
    """Negative control: a flag readout whose flag ion is never coupled."""
    c = Circuit(n_qubits, list(build_unflagged_readout(plaquette, basis, n_qubits).labels))
    c.reset(F_ION, 0)
    c.extend(build_unflagged_readout(plaquette, basis, n_qubits))
    c.measure(F_ION, "f")
    return c


def verify_all() -> list:
    return [verify_flag_cycle(), verify_cat_cycle(), verify_encoding("zero_L"),
            verify_encoding("plus_L"), verify_flag_cycle(build_broken_flag_readout)]
