"""Full QEC cycles and flag-verified encoding on top of a Backend."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..statevec import PauliString
from .backend import Backend
from .code import N_DATA
from .readout import (LOGICAL_READOUTS, build_cat_readout, build_flag_readout,
                      build_ft_encoding, build_logical_readout, build_transversal,
                      build_unflagged_readout, encoding_correction)
from .tables import (CAT_CORRELATED, CatOutcome, FlagOutcome, cat_table_label,
                     decode_cat, decode_flag, flag_table_label, parse_label)

ORDER = tuple((b, p) for b in ("X", "Z") for p in (1, 2, 3))


def _other(basis: str) -> str:
    return "Z" if basis == "X" else "X"


def data_part(p: PauliString, n: int) -> PauliString:
    """Drop flag bookkeeping and widen a table correction to the register."""
    d = p.restrict(range(N_DATA))
    return PauliString(n, d.x, d.z)


@dataclass
class CycleReport:
    scheme: str
    syndrome: dict = field(default_factory=dict)     # (basis, p) -> +/-1
    trigger: tuple | None = None                     # (basis, p, flagged)
    labels: list = field(default_factory=list)       # table entries applied
    correction: PauliString | None = None
    repetitions: int = 1
    readouts: int = 0


def _triple(syn: dict, basis: str) -> tuple:
    return tuple(syn[(basis, p)] for p in (1, 2, 3))


def measure_all_unflagged(backend: Backend) -> dict:
    syn = {}
    for basis, p in ORDER:
        out = backend.run(build_unflagged_readout(p, basis, backend.n_qubits))
        syn[(basis, p)] = out["s"]
    return syn


def qec_cycle_flag(backend: Backend, repump: bool = False,
                   readout=build_flag_readout) -> CycleReport:
    """Flag-based cycle: flagged readouts in the order p=1,2,3, X before Z.

    The first nontrivial syndrome or flag stops the flagged sequence; all six
    stabilizers are then read with bare ancillas. After a flag on S^(p) of
    type B, the conjugate-type correction comes from the flag column p of the
    B round and the B-type correction from the no-flag column. Without a flag
    both corrections come from the no-flag columns.
    """
    n = backend.n_qubits
    if repump:
        backend.repump(range(n))
    rep = CycleReport("flag")
    for basis, p in ORDER:
        out = backend.run(readout(p, basis, n))
        rep.readouts += 1
        rep.syndrome[(basis, p)] = out["s"]
        if out["s"] == -1 or out["f"] == -1:
            rep.trigger = (basis, p, out["f"] == -1)
            break
    if rep.trigger is None:
        rep.correction = PauliString.identity(n)
        return rep
    syn = measure_all_unflagged(backend)
    rep.readouts += 6
    rep.syndrome = syn
    basis, p, flagged = rep.trigger
    conj = _other(basis)
    if flagged:
        conj_label = flag_table_label(basis, _triple(syn, conj), p)
    else:
        conj_label = flag_table_label(conj, _triple(syn, conj))
    same_label = flag_table_label(basis, _triple(syn, basis))
    rep.labels = [same_label, conj_label]
    corr = data_part(parse_label(same_label) * parse_label(conj_label), n)
    backend.apply_pauli(corr)
    rep.correction = corr
    return rep


def cat_correlated_readout(basis: str, p: int) -> tuple:
    """Table row to use when S^(p) of type ``basis`` verifies as (+1,-1).

    A parity flip of the cat during an X-type readout leaves an X hook on the
    last two data ions, which is the row labelled with the Z stabilizer.
    """
    return (_other(basis), p)


def qec_cycle_cat(backend: Backend, repump: bool = False) -> CycleReport:
    """Cat-based cycle: all six stabilizers twice, a third time on disagreement."""
    n = backend.n_qubits
    if repump:
        backend.repump(range(n))
    rep = CycleReport("cat")
    rep.labels = []
    rounds = []
    for k in range(3):
        syn = {}
        for basis, p in ORDER:
            out = backend.run(build_cat_readout(p, basis, n))
            rep.readouts += 1
            syn[(basis, p)] = -out["a1"] * out["a2"]
            verification = (out["a3"], out["a4"])
            if verification == CAT_CORRELATED:
                label = cat_table_label(CatOutcome(basis, (1, 1, 1), verification,
                                                   cat_correlated_readout(basis, p)))
                rep.labels.append(label)
                backend.apply_pauli(data_part(parse_label(label), n))
        rounds.append(syn)
        if k == 1 and rounds[0] == rounds[1]:
            break
    rep.repetitions = len(rounds)
    syn = rounds[-1]
    rep.syndrome = syn
    z_label = cat_table_label(CatOutcome("X", _triple(syn, "X")))
    x_label = cat_table_label(CatOutcome("Z", _triple(syn, "Z")))
    rep.labels += [z_label, x_label]
    corr = data_part(parse_label(z_label) * parse_label(x_label), n)
    backend.apply_pauli(corr)
    rep.correction = corr
    if any(v == -1 for v in syn.values()):
        rep.trigger = next((b, p, False) for (b, p), v in syn.items() if v == -1)
    return rep


@dataclass
class EncodingReport:
    flag: int
    logicals: tuple | None = None
    correction: PauliString | None = None


def encode(backend: Backend, target: str = "zero_L") -> EncodingReport:
    """Flag-verified encoding; a raised flag triggers the logical readouts and fix-up.

    ``target`` is 'zero_L' or 'plus_L'.
    """
    n = backend.n_qubits
    out = backend.run(build_ft_encoding("zero_L", n))
    rep = EncodingReport(out["f"])
    if out["f"] == -1:
        vals = tuple(backend.run(build_logical_readout(s, n))["zl"] for s in LOGICAL_READOUTS)
        rep.logicals = vals
        rep.correction = data_part(encoding_correction(*vals), n)
        backend.apply_pauli(rep.correction)
    if target == "plus_L":
        backend.run(build_transversal("hadamard", n))
    elif target != "zero_L":
        raise ValueError("target must be 'zero_L' or 'plus_L'")
    return rep


__all__ = ["qec_cycle_flag", "qec_cycle_cat", "encode", "CycleReport", "EncodingReport",
           "decode_flag", "decode_cat", "FlagOutcome", "CatOutcome", "measure_all_unflagged"]
