"""Lookup decoders for flag-based and cat-based syndrome extraction.

Corrections are PauliStrings on 8 qubits: data 1..7 at indices 0..6 and the
flag ion at index 7, which carries the X_f / Z_f bookkeeping entries.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..statevec import PauliString

FLAG_INDEX = 7
N_TABLE = 8

SYNDROME_ROWS = ((1, 1, 1), (1, 1, -1), (1, -1, 1), (1, -1, -1),
                 (-1, 1, 1), (-1, 1, -1), (-1, -1, 1), (-1, -1, -1))

# X round; rows follow SYNDROME_ROWS.  No flag: S_x triple -> Z correction.
_X_ROUND_NO_FLAG = ("I", "Z7", "Z5", "Z6", "Z1", "Z4", "Z2", "Z3")
# Flag raised on S_x^(p): S_z triple -> X correction.
_X_ROUND_FLAG = {
    1: ("Xf", "X7Xf", "X3X4", "X6Xf", "X1", "X4", "X2Xf", "X3Xf"),
    2: ("Xf", "X5X6", "X5Xf", "X6", "X1Xf", "X4Xf", "X2", "X3Xf"),
    3: ("Xf", "X7", "X6X7", "X6Xf", "X1Xf", "X4Xf", "X2Xf", "X3"),
}
# Cat readout, verification (+1,-1) on the listed stabilizer readout.
_CAT_CORRELATED = {
    ("X", 1): "Z3Z4", ("X", 2): "Z5Z6", ("X", 3): "Z6Z7",
    ("Z", 1): "X3X4", ("Z", 2): "X5X6", ("Z", 3): "X6X7",
}
CAT_CLEAN = (-1, 1)
CAT_CORRELATED = (1, -1)


def parse_label(label: str) -> PauliString:
    """Parse entries such as 'X3X4', 'Z7', 'X6Xf' or 'I'."""
    ops = {}
    i = 0
    label = label.strip()
    if label == "I":
        return PauliString.identity(N_TABLE)
    while i < len(label):
        letter = label[i]
        if letter not in "XYZ":
            raise ValueError(f"bad Pauli label {label!r}")
        j = i + 1
        while j < len(label) and (label[j].isdigit() or label[j] == "f"):
            j += 1
        idx = label[i + 1:j]
        q = FLAG_INDEX if idx == "f" else int(idx) - 1
        if q in ops:
            raise ValueError(f"repeated qubit in {label!r}")
        ops[q] = letter
        i = j
    return PauliString.from_ops(N_TABLE, ops)


def _swap(label: str) -> str:
    return label.translate(str.maketrans("XZ", "ZX"))


def _check_syndrome(s) -> tuple:
    s = tuple(int(v) for v in s)
    if s not in SYNDROME_ROWS:
        raise ValueError(f"syndrome must be a triple of +/-1, got {s}")
    return s


def flag_table_label(round_basis: str, syndrome, flag: int | None = None) -> str:
    """Table entry as text.

    ``round_basis`` is the type of the flagged stabilizers being read ('X' or
    'Z'). Without a flag, ``syndrome`` is that round's own triple; with a flag
    on plaquette ``flag`` it is the conjugate-type triple from the follow-up.
    """
    if round_basis not in ("X", "Z"):
        raise ValueError("round_basis must be 'X' or 'Z'")
    row = SYNDROME_ROWS.index(_check_syndrome(syndrome))
    if flag is None:
        label = _X_ROUND_NO_FLAG[row]
    elif flag in _X_ROUND_FLAG:
        label = _X_ROUND_FLAG[flag][row]
    else:
        raise ValueError("flag plaquette must be 1, 2, 3 or None")
    return label if round_basis == "X" else _swap(label)


@dataclass(frozen=True)
class FlagOutcome:
    round_basis: str
    syndrome: tuple
    flag: int | None = None


def decode_flag(outcomes: FlagOutcome) -> PauliString:
    return parse_label(flag_table_label(outcomes.round_basis, outcomes.syndrome,
                                        outcomes.flag))


def single_error_label(basis: str, syndrome) -> str:
    """Leftmost-column correction: S_x triple -> Z, S_z triple -> X."""
    return flag_table_label(basis, syndrome, None)


@dataclass(frozen=True)
class CatOutcome:
    basis: str                      # type of the syndrome triple given
    syndrome: tuple
    verification: tuple = CAT_CLEAN
    readout: tuple | None = None    # (basis, plaquette) read when verification fired


def cat_table_label(outcomes: CatOutcome) -> str:
    v = tuple(int(x) for x in outcomes.verification)
    if v == CAT_CORRELATED:
        if outcomes.readout not in _CAT_CORRELATED:
            raise ValueError("correlated verification needs the readout (basis, p)")
        return _CAT_CORRELATED[outcomes.readout]
    if v not in ((-1, 1), (1, 1), (-1, -1)):
        raise ValueError(f"bad verification pattern {v}")
    return single_error_label(outcomes.basis, outcomes.syndrome)


def decode_cat(outcomes: CatOutcome) -> PauliString:
    return parse_label(cat_table_label(outcomes))
