"""Dense pure-state engine with native trapped-ion gates and per-ion leakage bits.

Basis ordering: qubit 0 is the least-significant bit of the amplitude index.
States are compared through fidelity only, global phases are never meaningful.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

MAX_QUBITS = 16

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI_MATRICES = {"I": I2, "X": X, "Y": Y, "Z": Z}


class LeakageFlags:
    """One classical bit per ion recording whether it left the qubit subspace.

    ``leaked[q]`` is True when ion ``q`` sits in the leaked level (the
    ``l = 0`` value of the usual bookkeeping bit).
    """

    def __init__(self, n_qubits: int):
        self.leaked = np.zeros(n_qubits, dtype=bool)

    def __getitem__(self, q):
        return bool(self.leaked[q])

    def set(self, q: int) -> None:
        self.leaked[q] = True

    def clear(self, q: int) -> None:
        self.leaked[q] = False

    def any(self) -> bool:
        return bool(self.leaked.any())

    def copy(self) -> "LeakageFlags":
        out = LeakageFlags(len(self.leaked))
        out.leaked = self.leaked.copy()
        return out


class PureState:
    """Amplitude vector over ``n_qubits`` qubits plus the register's leakage bits."""

    def __init__(self, n_qubits: int, amplitudes=None, max_qubits: int = MAX_QUBITS):
        if not 1 <= n_qubits <= max_qubits:
            raise ValueError(f"n_qubits must be in [1, {max_qubits}], got {n_qubits}")
        self.n_qubits = n_qubits
        if amplitudes is None:
            self.amplitudes = np.zeros(2**n_qubits, dtype=complex)
            self.amplitudes[0] = 1.0
        else:
            amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
            if amps.size != 2**n_qubits:
                raise ValueError("amplitude vector has the wrong length")
            norm = np.linalg.norm(amps)
            if norm == 0:
                raise ValueError("zero amplitude vector")
            self.amplitudes = amps / norm
        self.flags = LeakageFlags(n_qubits)

    @classmethod
    def from_bits(cls, bits) -> "PureState":
        """Computational basis state; ``bits[q]`` is the value of qubit ``q``."""
        st = cls(len(bits))
        st.amplitudes[0] = 0.0
        st.amplitudes[sum(int(b) << q for q, b in enumerate(bits))] = 1.0
        return st

    def copy(self) -> "PureState":
        out = PureState.__new__(PureState)
        out.n_qubits = self.n_qubits
        out.amplitudes = self.amplitudes.copy()
        out.flags = self.flags.copy()
        return out

    def norm_sq(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def fidelity(self, other: "PureState | np.ndarray") -> float:
        vec = other.amplitudes if isinstance(other, PureState) else np.asarray(other)
        return float(abs(np.vdot(self.amplitudes, vec)) ** 2)

    def density_matrix(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def _check(self, q: int) -> None:
        if not 0 <= q < self.n_qubits:
            raise IndexError(f"qubit {q} out of range for {self.n_qubits}-qubit register")


@dataclass(frozen=True)
class PauliString:
    """Pauli operator without phase, stored as x/z bitmasks (bit q for qubit q)."""

    n: int
    x: int = 0
    z: int = 0

    @classmethod
    def from_str(cls, s: str) -> "PauliString":
        """``s[q]`` is the letter acting on qubit ``q``."""
        x = z = 0
        for q, ch in enumerate(s.upper()):
            if ch in "XY":
                x |= 1 << q
            if ch in "ZY":
                z |= 1 << q
            if ch not in "IXYZ":
                raise ValueError(f"bad Pauli letter {ch!r}")
        return cls(len(s), x, z)

    @classmethod
    def from_ops(cls, n: int, ops: dict) -> "PauliString":
        """Build from ``{qubit: letter}``."""
        letters = ["I"] * n
        for q, ch in ops.items():
            if not 0 <= q < n:
                raise IndexError(q)
            letters[q] = ch
        return cls.from_str("".join(letters))

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n)

    def letter(self, q: int) -> str:
        return "IXZY"[((self.x >> q) & 1) | (((self.z >> q) & 1) << 1)]

    def __str__(self) -> str:
        return "".join(self.letter(q) for q in range(self.n))

    def __mul__(self, other: "PauliString") -> "PauliString":
        if other.n != self.n:
            raise ValueError("length mismatch")
        return PauliString(self.n, self.x ^ other.x, self.z ^ other.z)

    def commutes(self, other: "PauliString") -> bool:
        return (bin(self.x & other.z).count("1") + bin(self.z & other.x).count("1")) % 2 == 0

    @property
    def weight(self) -> int:
        return bin(self.x | self.z).count("1")

    @property
    def support(self) -> list:
        mask = self.x | self.z
        return [q for q in range(self.n) if (mask >> q) & 1]

    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    def restrict(self, qubits) -> "PauliString":
        """Keep only the letters on ``qubits`` (others become I)."""
        mask = sum(1 << q for q in qubits)
        return PauliString(self.n, self.x & mask, self.z & mask)

    def extend(self, n: int) -> "PauliString":
        if n < self.n:
            raise ValueError("cannot shrink")
        return PauliString(n, self.x, self.z)

    def matrix(self) -> np.ndarray:
        """Dense matrix in the register basis (small registers only)."""
        out = np.array([[1.0 + 0j]])
        for q in reversed(range(self.n)):
            out = np.kron(out, PAULI_MATRICES[self.letter(q)])
        return out


# ---------------------------------------------------------------------------
# matrix construction

def rotation_matrix(theta: float, phi: float) -> np.ndarray:
    """exp(-i theta/2 (cos phi X + sin phi Y))."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array(
        [[c, -1j * s * np.exp(-1j * phi)], [-1j * s * np.exp(1j * phi), c]], dtype=complex
    )


def z_rotation_matrix(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


@lru_cache(maxsize=256)
def _ms_matrix_cached(n: int, theta: float, phi: float) -> np.ndarray:
    s_phi = np.zeros((2**n, 2**n), dtype=complex)
    sp = np.cos(phi) * X + np.sin(phi) * Y
    for q in range(n):
        s_phi += embed(sp, [q], n)
    out = expm(-1j * theta / 4 * s_phi @ s_phi)
    out.setflags(write=False)
    return out


def ms_matrix(n: int, theta: float, phi: float) -> np.ndarray:
    """exp(-i theta/4 S_phi^2) on ``n`` qubits (qubit 0 = LSB)."""
    return _ms_matrix_cached(n, float(theta), float(phi))


def embed(op: np.ndarray, qubits, n: int) -> np.ndarray:
    """Dense operator acting as ``op`` on ``qubits`` of an n-qubit register.

    ``op`` uses the same LSB convention: its index bit i belongs to ``qubits[i]``.
    """
    k = len(qubits)
    dim = 2**n
    out = np.zeros((dim, dim), dtype=complex)
    others = [q for q in range(n) if q not in qubits]
    for col in range(dim):
        sub_in = sum(((col >> q) & 1) << i for i, q in enumerate(qubits))
        base = col & ~sum(1 << q for q in qubits)
        for sub_out in range(2**k):
            amp = op[sub_out, sub_in]
            if amp == 0:
                continue
            row = base | sum(((sub_out >> i) & 1) << q for i, q in enumerate(qubits))
            out[row, col] += amp
    del others
    return out


# ---------------------------------------------------------------------------
# in-place application

def apply_matrix(state: PureState, op: np.ndarray, qubits) -> None:
    """Apply a 2^k x 2^k matrix to ``qubits`` (no leakage handling)."""
    n = state.n_qubits
    k = len(qubits)
    if k == 1:
        q = qubits[0]
        v = state.amplitudes.reshape(2 ** (n - 1 - q), 2, 2**q)
        state.amplitudes = np.einsum("ij,ajb->aib", op, v).reshape(-1)
        return
    psi = state.amplitudes.reshape((2,) * n)
    # gate tensor axes: outputs then inputs, most significant bit first
    g = op.reshape((2,) * (2 * k))
    in_axes = [n - 1 - q for q in reversed(qubits)]
    res = np.tensordot(g, psi, axes=(list(range(k, 2 * k)), in_axes))
    # result axes: gate outputs (msb first) followed by remaining psi axes in order
    rest = [a for a in range(n) if a not in in_axes]
    order = in_axes + rest
    state.amplitudes = np.moveaxis(res, list(range(n)), order).reshape(-1)


def _check_targets(state: PureState, targets) -> list:
    targets = list(targets)
    for q in targets:
        state._check(q)
    if len(set(targets)) != len(targets):
        raise ValueError(f"duplicate targets {targets}")
    return targets


def apply_global_rotation(state: PureState, targets, theta: float, phi: float) -> None:
    """exp(-i theta/2 S_phi) on the unleaked subset of ``targets``."""
    targets = _check_targets(state, targets)
    if not targets:
        raise ValueError("targets must be non-empty")
    u = rotation_matrix(theta, phi)
    for q in targets:
        if not state.flags.leaked[q]:
            apply_matrix(state, u, [q])


def apply_z_rotation(state: PureState, target: int, theta: float) -> None:
    state._check(target)
    if state.flags.leaked[target]:
        return
    n = state.n_qubits
    v = state.amplitudes.reshape(2 ** (n - 1 - target), 2, 2**target)
    v[:, 0, :] *= np.exp(-0.5j * theta)
    v[:, 1, :] *= np.exp(0.5j * theta)


def apply_ms(state: PureState, targets, theta: float, phi: float) -> None:
    """Mølmer-Sørensen gate exp(-i theta/4 S_phi^2) over the unleaked targets."""
    targets = _check_targets(state, targets)
    if len(targets) < 2:
        raise ValueError("MS gate needs at least two targets")
    live = [q for q in targets if not state.flags.leaked[q]]
    if len(live) < 2:
        return
    apply_matrix(state, ms_matrix(len(live), theta, phi), live)


def apply_pauli(state: PureState, p: PauliString) -> None:
    """Apply a Pauli string (ignores leakage; used for fault injection)."""
    for q in range(p.n):
        ch = p.letter(q)
        if ch != "I":
            apply_matrix(state, PAULI_MATRICES[ch], [q])


def prob_one(state: PureState, q: int) -> float:
    n = state.n_qubits
    v = state.amplitudes.reshape(2 ** (n - 1 - q), 2, 2**q)
    return float(np.vdot(v[:, 1, :], v[:, 1, :]).real)


def project(state: PureState, q: int, bit: int) -> float:
    """Project qubit ``q`` onto ``|bit>`` and renormalise; returns the probability."""
    n = state.n_qubits
    v = state.amplitudes.reshape(2 ** (n - 1 - q), 2, 2**q)
    p = float(np.vdot(v[:, bit, :], v[:, bit, :]).real)
    if p <= 0:
        raise ValueError("projection onto a zero-probability outcome")
    v[:, 1 - bit, :] = 0
    state.amplitudes /= np.sqrt(p)
    return p


def measure_z(state: PureState, target: int, rng) -> int:
    """Projective z measurement; returns +1 for |0>, -1 for |1>.

    A leaked ion fluoresces like |0> and reports +1 without collapsing anything.
    """
    state._check(target)
    if state.flags.leaked[target]:
        return 1
    p1 = prob_one(state, target)
    bit = 1 if rng.random() < p1 else 0
    if p1 in (0.0, 1.0):
        bit = int(p1 == 1.0)
    else:
        project(state, target, bit)
    return 1 - 2 * bit


def reset(state: PureState, target: int, value: int, flip_prob: float, rng) -> None:
    """Optical pumping to ``|value>`` followed by a bit flip with ``flip_prob``.

    Pumping addresses the whole ground manifold, so it also clears leakage.
    """
    if not 0.0 <= flip_prob <= 1.0:
        raise ValueError(f"flip_prob must be in [0, 1], got {flip_prob}")
    state._check(target)
    state.flags.clear(target)
    p1 = prob_one(state, target)
    bit = 1 if rng.random() < p1 else 0
    if 0.0 < p1 < 1.0:
        project(state, target, bit)
    else:
        bit = int(p1 > 0.5)
    final = value ^ int(flip_prob > 0 and rng.random() < flip_prob)
    if bit != final:
        apply_matrix(state, X, [target])


def pauli_expectation(state: PureState, p: PauliString) -> float:
    if p.n != state.n_qubits:
        raise ValueError("Pauli length does not match register")
    tmp = state.copy()
    apply_pauli(tmp, p)
    return float(np.vdot(state.amplitudes, tmp.amplitudes).real)
