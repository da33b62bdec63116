"""Two-ion MS gate channel: qubit-phonon simulation, chi tomography and Kraus sampling.

The pipeline is

1. ``evolve_qubit_phonon`` / ``trajectory_superoperator``: propagate two ions
   coupled to the centre-of-mass and stretch modes under a sampled collective
   dephasing path, and trace the phonons out.
2. ``process_tomography``: turn a linear map on 4x4 matrices into a chi matrix
   over the basis {I, X, iY, Z} x {I, X, iY, Z}.
3. ``average_chi`` -> ``chi_to_kraus`` -> ``truncate_kraus``: the averaged
   channel as a sorted list of (p_n, K_n) with sum p_n K_n^dag K_n = I.
4. ``sample_kraus``: apply one randomly chosen Kraus operator to a state vector.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.special import jv

from .noise import ou_trajectory
from .statevec import PureState, apply_matrix, ms_matrix

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SINGLE_BASIS = (_I2, _X, 1j * _Y, _Z)
SINGLE_LABELS = ("I", "X", "iY", "Z")


def _two_qubit_basis():
    # index 4*i + j: factor i acts on the first ion (bit 0), j on the second (bit 1)
    ops, labels = [], []
    for i in range(4):
        for j in range(4):
            ops.append(np.kron(SINGLE_BASIS[j], SINGLE_BASIS[i]))
            labels.append(SINGLE_LABELS[i] + SINGLE_LABELS[j])
    return np.array(ops), tuple(labels)


BASIS, BASIS_LABELS = _two_qubit_basis()

CHI_CLIP = 1e-6
ARTIFACT_VERSION = 1


# ---------------------------------------------------------------------------
# chi matrices and tomography


@dataclass
class ChiMatrix:
    """Process matrix: rho -> sum_nm chi[n, m] E_n rho E_m^dag.

    ``stderr`` holds the per-entry standard error when the matrix is a sample
    mean, and ``clipped`` the magnitude of the most negative eigenvalue removed
    during clipping.
    """

    chi: np.ndarray
    stderr: np.ndarray | None = None
    n_samples: int = 1
    clipped: float = 0.0

    def __post_init__(self):
        self.chi = np.asarray(self.chi, dtype=complex)
        if self.chi.shape != (16, 16):
            raise ValueError(f"chi must be 16x16, got {self.chi.shape}")

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return np.einsum("nm,nab,bc,mdc->ad", self.chi, BASIS, rho, BASIS.conj())

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.chi - self.chi.conj().T)))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh((self.chi + self.chi.conj().T) / 2)

    def trace_preservation_error(self) -> float:
        # sum_nm chi_nm E_m^dag E_n
        m = np.einsum("nm,mba,nbc->ac", self.chi, BASIS.conj(), BASIS)
        return float(np.linalg.norm(m - np.eye(4)))


@lru_cache(maxsize=1)
def _tomography_inverse() -> np.ndarray:
    # column (n, m) holds vec of the superoperator rho -> E_n rho E_m^dag,
    # written as T[a, b, c, d] with rho'_{ab} = sum_cd T rho_{cd}
    cols = np.einsum("nac,mbd->nmabcd", BASIS, BASIS.conj()).reshape(256, 256)
    return np.linalg.inv(cols.T)


def superoperator_to_chi(lam: np.ndarray) -> np.ndarray:
    """chi from the tensor lam[a, b, c, d] defined by rho'_ab = sum_cd lam rho_cd."""
    chi = _tomography_inverse() @ np.asarray(lam, dtype=complex).reshape(256)
    return chi.reshape(16, 16)


def process_tomography(channel_action, clip: bool = True) -> ChiMatrix:
    """Reconstruct chi from ``channel_action`` evaluated on the 16 matrix units |c><d|.

    The map must be linear; matrix units are not states but span all of them.
    Small negative eigenvalues (down to -1e-6) are clipped; larger ones raise.
    """
    lam = np.zeros((4, 4, 4, 4), dtype=complex)
    for c in range(4):
        for d in range(4):
            unit = np.zeros((4, 4), dtype=complex)
            unit[c, d] = 1.0
            lam[:, :, c, d] = channel_action(unit)
    chi = superoperator_to_chi(lam)
    chi = (chi + chi.conj().T) / 2
    return clip_chi(ChiMatrix(chi)) if clip else ChiMatrix(chi)


def clip_chi(chi: ChiMatrix, tol: float = CHI_CLIP) -> ChiMatrix:
    """Zero eigenvalues in [-tol, 0) and restore unit trace."""
    w, v = np.linalg.eigh((chi.chi + chi.chi.conj().T) / 2)
    if w.min() < -tol:
        raise ValueError(f"non-physical chi: eigenvalue {w.min():.3e} below -{tol:g}")
    clipped = float(max(0.0, -w.min()))
    if clipped == 0.0:
        return chi
    w = np.clip(w, 0.0, None)
    w /= w.sum()
    return ChiMatrix((v * w) @ v.conj().T, chi.stderr, chi.n_samples, clipped)


def unitary_chi(u: np.ndarray) -> ChiMatrix:
    """Rank-one chi of a 4x4 unitary."""
    c = unitary_coefficients(u)
    return ChiMatrix(np.outer(c, c.conj()))


def unitary_coefficients(u: np.ndarray) -> np.ndarray:
    """Coefficients u_m with U = sum_m u_m E_m."""
    return np.einsum("mab,ab->m", BASIS.conj(), u) / 4


# ---------------------------------------------------------------------------
# Kraus channels


@dataclass
class KrausChannel:
    """Weighted Kraus set, sorted by decreasing probability."""

    probs: np.ndarray
    ops: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        self.ops = np.asarray(self.ops, dtype=complex).reshape(-1, 4, 4)
        if len(self.probs) != len(self.ops):
            raise ValueError("probs and ops length mismatch")
        order = np.argsort(-self.probs, kind="stable")
        self.probs, self.ops = self.probs[order], self.ops[order]

    def __len__(self):
        return len(self.probs)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return np.einsum("n,nab,bc,ndc->ad", self.probs, self.ops, rho, self.ops.conj())

    def completeness_error(self) -> float:
        m = np.einsum("n,nba,nbc->ac", self.probs, self.ops.conj(), self.ops)
        return float(np.linalg.norm(m - np.eye(4)))

    def to_chi(self) -> ChiMatrix:
        v = np.einsum("mab,nab->nm", BASIS.conj(), self.ops) / 4
        return ChiMatrix(np.einsum("n,nm,nk->mk", self.probs, v, v.conj()))

    def process_fidelity(self, target: np.ndarray) -> float:
        overlaps = np.einsum("ab,nab->n", target.conj(), self.ops)
        return float(np.sum(self.probs * np.abs(overlaps) ** 2) / 16)

    def gate_error(self, target: np.ndarray) -> float:
        """1 - F_pro against ``target``."""
        return 1.0 - self.process_fidelity(target)

    def average_error(self, target: np.ndarray) -> float:
        """1 - F_avg against ``target`` (dimension-weighted)."""
        return average_gate_error(self.process_fidelity(target))

    @classmethod
    def identity_like(cls, u: np.ndarray) -> "KrausChannel":
        return cls(np.array([1.0]), np.asarray(u, dtype=complex)[None])


def average_gate_error(process_fidelity: float, d: int = 4) -> float:
    """1 - F_avg with F_avg = (d F_pro + 1) / (d + 1)."""
    return 1.0 - (d * process_fidelity + 1) / (d + 1)


def chi_to_kraus(chi: ChiMatrix | np.ndarray, tol: float = 0.0) -> KrausChannel:
    """Eigen-decompose chi; eigenvector v_n gives K_n = sum_m v_n[m] E_m with weight p_n.

    Eigenvalues at or below ``tol`` are discarded.
    """
    mat = chi.chi if isinstance(chi, ChiMatrix) else np.asarray(chi, dtype=complex)
    w, v = np.linalg.eigh((mat + mat.conj().T) / 2)
    keep = w > tol
    ops = np.einsum("mn,mab->nab", v[:, keep], BASIS)
    return KrausChannel(w[keep], ops)


def truncate_kraus(channel: KrausChannel, p_trunc: float) -> KrausChannel:
    """Drop entries with p_n <= p_trunc and restore exact completeness.

    The dropped weight is added to p_1, then every kept K_n is right-multiplied
    by M^{-1/2} with M = sum p_n K_n^dag K_n, which makes the set complete.
    """
    if p_trunc <= 0:
        keep = channel.probs > 0
    else:
        keep = channel.probs > p_trunc
    if not keep.any():
        raise ValueError("truncation removed every Kraus operator")
    probs = channel.probs[keep].copy()
    ops = channel.ops[keep].copy()
    probs[0] += channel.probs[~keep].sum()
    probs /= probs.sum()
    m = np.einsum("n,nba,nbc->ac", probs, ops.conj(), ops)
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    inv_sqrt = (v / np.sqrt(w)) @ v.conj().T
    ops = ops @ inv_sqrt
    meta = dict(channel.meta, p_trunc=p_trunc, dropped=int((~keep).sum()))
    return KrausChannel(probs, ops, meta)


def sample_kraus(channel: KrausChannel, state: PureState, targets, rng, rule: str = "born") -> int:
    """Apply one Kraus operator of ``channel`` to ``targets`` of ``state``; return its index.

    ``rule="born"`` draws n with probability p_n ||K_n psi||^2, which averages to
    the channel exactly. ``rule="fixed"`` draws n with probability p_n regardless
    of the state. Leaked targets turn the gate into the identity (returns -1).
    """
    targets = list(targets)
    if len(targets) != 2:
        raise ValueError("MS channels act on exactly two ions")
    if any(state.flags[t] for t in targets):
        return -1
    if len(channel) == 1:
        n = 0
        apply_matrix(state, channel.ops[0], targets)
    else:
        if rule == "fixed":
            weights = channel.probs
        elif rule == "born":
            weights = channel.probs * _branch_norms(channel, state, targets)
        else:
            raise ValueError(f"unknown sampling rule {rule!r}")
        n = int(kraus_index(weights, rng.random()))
        apply_matrix(state, channel.ops[n], targets)
    norm = np.linalg.norm(state.amplitudes)
    if norm == 0:
        raise FloatingPointError("Kraus branch annihilated the state")
    state.amplitudes /= norm
    return n


def kraus_index(weights, r):
    """Index n with sum_{k<n} w_k <= r W < sum_{k<=n} w_k, W = sum w (``r`` may be an array)."""
    cum = np.cumsum(weights)
    idx = np.searchsorted(cum, np.asarray(r) * cum[-1], side="right")
    return np.minimum(idx, len(cum) - 1)


def _branch_norms(channel: KrausChannel, state: PureState, targets) -> np.ndarray:
    # reduced density matrix of the targets, then <K^dag K> for each operator
    n = state.n_qubits
    t0, t1 = targets
    psi = state.amplitudes.reshape([2] * n)
    axes = [n - 1 - t0, n - 1 - t1]
    rest = [a for a in range(n) if a not in axes]
    mat = np.transpose(psi, [axes[1], axes[0]] + rest).reshape(4, -1)
    rho = mat @ mat.conj().T
    kk = np.einsum("nba,nbc->nac", channel.ops.conj(), channel.ops)
    return np.real(np.einsum("nac,ca->n", kk, rho))


# ---------------------------------------------------------------------------
# microscopic qubit-phonon model

STRETCH_RATIO = math.sqrt(3.0)
WAVELENGTH = 729e-9
ION_MASS = 40 * 1.66053906660e-27
HBAR = 1.054571817e-34
DW_MODES = ("literal", "squared", "off")
TAIL = 1e-8
MAX_TOP_POPULATION = 1e-6
WEIGHT_FLOOR = 1e-10
# the centre-of-mass loop reaches |alpha| ~ 1 mid-gate, which needs headroom above the thermal tail
LOOP_MARGIN = 8
MIN_COM_CUTOFF = 14


def lamb_dicke(omega_z: float, mode_freq_ratio: float = 1.0, n_ions: int = 2) -> float:
    """eta for a 729 nm beam on 40Ca+ with mode participation 1/sqrt(n_ions)."""
    x0 = math.sqrt(HBAR / (2 * ION_MASS * omega_z * mode_freq_ratio))
    return 2 * math.pi / WAVELENGTH * x0 / math.sqrt(n_ions)


@dataclass(frozen=True)
class MSMicroParams:
    """Parameters of the two-ion microscopic gate model.

    ``detuning`` defaults to 2 pi loops / gate_time so the centre-of-mass loop
    closes; ``fock_cutoff`` and ``eta`` default to values derived from the
    other fields. ``spectator`` switches the off-resonant stretch-mode coupling
    on and off, ``carrier`` the off-carrier tilt that a beam phase ``zeta``
    produces, and ``debye_waller`` selects the force correction
    (1 - eta n / 2, 1 - eta^2 n / 2, or none).
    """

    omega_z: float = 2 * math.pi * 0.975e6
    rabi_ratio: float = 0.1
    gate_time: float = 72e-6
    loops: int = 1
    detuning: float | None = None
    zeta: float = 0.0
    phi: float = 0.0
    nbar_com: float = 0.1
    nbar_stretch: float = 0.016
    fock_cutoff: tuple | None = None
    eta: tuple | None = None
    T2: float = 0.2
    tau_c: float = 1e-6
    carrier: bool = True
    spectator: bool = True
    debye_waller: str = "squared"
    refocus: bool = False
    steps: int = 2000

    def __post_init__(self):
        if self.loops < 1:
            raise ValueError("loops must be a positive integer")
        if self.gate_time <= 0 or self.omega_z <= 0:
            raise ValueError("gate_time and omega_z must be positive")
        if self.steps < 2000:
            raise ValueError("at least 2000 steps per gate are required")
        if self.debye_waller not in DW_MODES:
            raise ValueError(f"debye_waller must be one of {DW_MODES}")
        if min(self.nbar_com, self.nbar_stretch) < 0:
            raise ValueError("mean phonon numbers must be non-negative")
        if self.T2 <= 0 or self.tau_c <= 0:
            raise ValueError("T2 and tau_c must be positive")
        ratio = self.delta * self.gate_time / (2 * math.pi * self.loops)
        if abs(ratio - 1) > 1e-9:
            raise ValueError("gate_time * detuning must equal 2 pi * loops (closed loops)")
        need = 5 * max(self.nbar_com, self.nbar_stretch) + 5
        if min(self.cutoffs) < need:
            raise ValueError(f"fock_cutoff {self.cutoffs} below 5 nbar + 5 = {need:g}")

    @property
    def delta(self) -> float:
        return 2 * math.pi * self.loops / self.gate_time if self.detuning is None else self.detuning

    @property
    def cutoffs(self) -> tuple:
        if self.fock_cutoff is not None:
            c = self.fock_cutoff
            return (int(c), int(c)) if np.isscalar(c) else tuple(int(x) for x in c)
        floor = math.ceil(5 * max(self.nbar_com, self.nbar_stretch) + 5)
        return (max(_auto_cutoff(self.nbar_com, LOOP_MARGIN), MIN_COM_CUTOFF, floor),
                max(_auto_cutoff(self.nbar_stretch), floor))

    @property
    def etas(self) -> tuple:
        if self.eta is not None:
            return tuple(float(x) for x in self.eta)
        return (lamb_dicke(self.omega_z), lamb_dicke(self.omega_z, STRETCH_RATIO))

    @property
    def stretch_detuning(self) -> float:
        # laser beat note sits at omega_z + delta, so the stretch mode is detuned the other way
        return (STRETCH_RATIO - 1) * self.omega_z - self.delta

    @property
    def carrier_tilt(self) -> float:
        return 2 * self.rabi_ratio * math.sin(self.zeta) if self.carrier else 0.0

    @property
    def bessel_factor(self) -> float:
        x = 2 * self.rabi_ratio
        return float(jv(0, x) + jv(2, x)) if self.carrier else 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("fock_cutoff", "eta"):
            if d[k] is not None:
                d[k] = list(d[k]) if not np.isscalar(d[k]) else d[k]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MSMicroParams":
        d = dict(d)
        for k in ("fock_cutoff", "eta"):
            if isinstance(d.get(k), list):
                d[k] = tuple(d[k])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown MSMicroParams fields: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **kw) -> "MSMicroParams":
        return replace(self, **kw)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _auto_cutoff(nbar: float, margin: int = 2) -> int:
    base = math.ceil(5 * nbar + 5)
    tail = 1
    if nbar > 0:
        tail = math.ceil(math.log(TAIL) / math.log(nbar / (1 + nbar)))
    return max(base, tail + margin)


def noiseless_micro_params(**kw) -> MSMicroParams:
    """Exact-gate limit: no dephasing, ground-state modes, no spectator or carrier terms."""
    base = dict(nbar_com=0.0, nbar_stretch=0.0, T2=math.inf, carrier=False,
                spectator=False, debye_waller="off", zeta=0.0)
    base.update(kw)
    return MSMicroParams(**{**asdict(MSMicroParams()), **base})


FIG7_PARAMS = MSMicroParams()


def thermal_weights(nbar: float, cutoff: int) -> np.ndarray:
    k = np.arange(cutoff)
    if nbar == 0:
        w = (k == 0).astype(float)
    else:
        w = nbar**k / (1 + nbar) ** (k + 1)
    return w / w.sum()


def target_unitary(params: MSMicroParams) -> np.ndarray:
    return ms_matrix(2, math.pi / 2, params.phi)


def _ladder(d: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, d)), 1).astype(complex)


def _coupling(params: MSMicroParams) -> tuple:
    """Force strengths (g_com, g_stretch) that give a pi/2 gate at zeta = 0."""
    t, delta = params.gate_time, params.delta
    eta_c, eta_s = params.etas
    r = eta_s / eta_c if params.spectator else 0.0
    ws = params.stretch_detuning
    a_s = t / ws - math.sin(ws * t) / ws**2
    g = math.sqrt((math.pi / 4) / (t / delta + r * r * a_s))
    return g, g * r


class _Model:
    """Block structure of the gate Hamiltonian in the force eigenbasis."""

    def __init__(self, params: MSMicroParams):
        self.params = params
        dc, ds = params.cutoffs
        self.dims = (dc, ds)
        self.dph = dc * ds
        psi = params.carrier_tilt
        sig_phi = math.cos(params.phi) * _X + math.sin(params.phi) * _Y
        force = math.cos(psi) * sig_phi + math.sin(psi) * _Z
        s, v = np.linalg.eigh(force)
        self.G = np.kron(v, v)  # columns: force eigenvectors, bit 0 = first ion
        self.s = [(s[idx & 1], s[idx >> 1]) for idx in range(4)]
        self.zsum = np.array([2.0, 0.0, 0.0, -2.0])
        self.g = _coupling(params)
        self.H = [self._block(s0, s1) for s0, s1 in self.s]
        wc = thermal_weights(params.nbar_com, dc)
        ws = thermal_weights(params.nbar_stretch, ds)
        w = np.outer(wc, ws).reshape(-1)
        self.cols = np.flatnonzero(w > WEIGHT_FLOOR)
        self.weights = w[self.cols] / w[self.cols].sum()
        top = np.zeros((dc, ds), dtype=bool)
        top[-1, :] = True
        top[:, -1] = True
        self.top = top.reshape(-1)

    def _mode_force(self, d: int, eta: float) -> np.ndarray:
        p = self.params
        a = _ladder(d)
        n = np.arange(d)
        if p.debye_waller == "literal":
            dw = 1 - 0.5 * eta * n
        elif p.debye_waller == "squared":
            dw = 1 - 0.5 * eta * eta * n
        else:
            dw = np.ones(d)
        m = np.exp(1j * p.zeta) * (dw[:, None] * a)
        return m + m.conj().T

    def _block(self, s0: float, s1: float) -> tuple:
        # the two modes commute inside a block, so each gets its own Hamiltonian
        p = self.params
        dc, ds = self.dims
        eta_c, eta_s = p.etas
        gc, gs = self.g
        h_free_c = -p.delta * np.diag(np.arange(dc)).astype(complex)
        h_free_s = p.stretch_detuning * np.diag(np.arange(ds)).astype(complex)
        fc = gc * (s0 + s1) / math.sqrt(2) * self._mode_force(dc, eta_c)
        fs = gs * (s0 - s1) / math.sqrt(2) * self._mode_force(ds, eta_s)
        return (h_free_c, fc), (h_free_s, fs)

    def block_propagators(self, dt: float, sign: float = 1.0) -> tuple:
        """Per-block (CoM, stretch) propagators over ``dt``, shapes (4, dc, dc) and (4, ds, ds)."""
        out = []
        for mode in range(2):
            d = self.dims[mode]
            b_all = np.empty((4, d, d), dtype=complex)
            for b, blk in enumerate(self.H):
                free, force = blk[mode]
                e, vec = np.linalg.eigh(free + sign * force)
                b_all[b] = (vec * np.exp(-1j * e * dt)) @ vec.conj().T
            out.append(b_all)
        return tuple(out)

    def step(self, props: tuple, u: np.ndarray) -> np.ndarray:
        bc, bs = props
        dc, ds = self.dims
        n = u.shape[-1]
        u = np.matmul(bc, u.reshape(4, dc, ds * n)).reshape(4, dc, ds, n)
        u = np.matmul(bs[:, None], u)
        return u.reshape(4, self.dph, n)

    def dephasing(self, theta: float) -> np.ndarray:
        # exp(-i theta (Z1 + Z2) / 2) in the force eigenbasis
        return (self.G.conj().T * np.exp(-0.5j * theta * self.zsum)) @ self.G

    def initial(self) -> np.ndarray:
        u = np.zeros((4, self.dph, 4, len(self.cols)), dtype=complex)
        gd = self.G.conj().T
        for c in range(4):
            for j, col in enumerate(self.cols):
                u[:, col, c, j] = gd[:, c]
        return u.reshape(4, self.dph, -1)

    def check_truncation(self, u: np.ndarray) -> None:
        # qubit-basis independent: sums over the output qubit index
        v = u.reshape(4, self.dph, 4, len(self.cols))
        pop_top = np.einsum("apck,k->", np.abs(v[:, self.top]) ** 2, self.weights).real / 4
        if pop_top > MAX_TOP_POPULATION:
            raise ValueError(f"Fock truncation: {pop_top:.2e} population at the cutoff")

    def superoperator(self, u: np.ndarray) -> np.ndarray:
        self.check_truncation(u)
        u = np.tensordot(self.G, u, axes=(1, 0)).reshape(4, self.dph, 4, len(self.cols))
        return np.einsum("apck,k,bpdk->abcd", u, self.weights, u.conj())


@lru_cache(maxsize=16)
def _model(params: MSMicroParams) -> _Model:
    return _Model(params)


def dephasing_constant(params: MSMicroParams) -> float:
    """OU diffusion constant whose Markov limit gives coherence decay exp(-t/T2)."""
    return 0.0 if math.isinf(params.T2) else 2 / (params.T2 * params.tau_c**2)


def sample_noise(params: MSMicroParams, rng, steps: int | None = None) -> np.ndarray:
    """Collective detuning F(t) sampled at the centre of each integrator step."""
    n = steps or params.steps
    c = dephasing_constant(params)
    if c == 0:
        return np.zeros(n)
    return ou_trajectory(params.tau_c, c, params.gate_time / n, n, rng)


def trajectory_superoperator(params: MSMicroParams, noise_sample=None) -> np.ndarray:
    """lam[a, b, c, d] of one trajectory, phonons traced out.

    ``noise_sample`` is the piecewise-constant detuning path (one value per
    step; its length sets the step count). ``None`` means no dephasing.
    """
    model = _model(params)
    n = params.steps if noise_sample is None else len(noise_sample)
    h = params.gate_time / n
    u = model.initial()
    quiet = noise_sample is None or not np.any(noise_sample)
    # the phase-space excursion peaks mid-gate, so truncation is checked there too
    for half, (lo, hi) in enumerate([(0, n // 2), (n // 2, n)]):
        if half == 1:
            model.check_truncation(u)
        sign = -1.0 if half == 1 and params.refocus else 1.0
        if quiet:
            u = model.step(model.block_propagators((hi - lo) * h, sign), u)
            continue
        b = model.block_propagators(h, sign)
        theta = np.asarray(noise_sample[lo:hi], dtype=float) * h / 2
        kick = np.concatenate([[theta[0]], theta[:-1] + theta[1:], [theta[-1]]])
        u = np.tensordot(model.dephasing(kick[0]), u, axes=(1, 0))
        for k in range(1, len(kick)):
            u = model.step(b, u)
            u = np.tensordot(model.dephasing(kick[k]), u, axes=(1, 0))
    return model.superoperator(u)


def apply_superoperator(lam: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return np.einsum("abcd,cd->ab", lam, rho)


def evolve_qubit_phonon(params: MSMicroParams, qubit_input: np.ndarray, noise_sample=None, rng=None) -> np.ndarray:
    """Reduced two-ion state after one gate. Draws a dephasing path from ``rng`` when none is given."""
    rho = np.asarray(qubit_input, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError("qubit_input must be a 4x4 density matrix")
    if noise_sample is None and rng is not None:
        noise_sample = sample_noise(params, rng)
    return apply_superoperator(trajectory_superoperator(params, noise_sample), rho)


def halving_check(params: MSMicroParams, rng) -> float:
    """Max entry change of one trajectory's superoperator when the step is halved.

    The fine path is sampled at twice the rate and the coarse path uses pair means,
    so both integrate the same noise realization.
    """
    fine = sample_noise(params, rng, 2 * params.steps)
    coarse = fine.reshape(-1, 2).mean(axis=1)
    lam_c = trajectory_superoperator(params, coarse)
    lam_f = trajectory_superoperator(params, fine)
    return float(np.max(np.abs(lam_c - lam_f)))


def trajectory_chi(params: MSMicroParams, rng) -> np.ndarray:
    return superoperator_to_chi(trajectory_superoperator(params, sample_noise(params, rng)))


def _seeded_chi(args) -> np.ndarray:
    params, seq = args
    return trajectory_chi(params, np.random.default_rng(seq))


def average_chi(params: MSMicroParams, n_samples: int, seed=None, workers: int = 1) -> ChiMatrix:
    """Mean chi over ``n_samples`` dephasing trajectories, with per-entry standard error.

    Trajectory k uses the k-th child of ``SeedSequence(seed)``, so the result
    does not depend on ``workers``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    seqs = np.random.SeedSequence(seed).spawn(n_samples)
    jobs = [(params, q) for q in seqs]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            chis = list(pool.map(_seeded_chi, jobs, chunksize=max(1, n_samples // (4 * workers))))
    else:
        chis = [_seeded_chi(j) for j in jobs]
    stack = np.array(chis)
    mean = stack.mean(axis=0)
    if n_samples > 1:
        stderr = np.sqrt(np.var(stack.real, axis=0, ddof=1) + np.var(stack.imag, axis=0, ddof=1)) / math.sqrt(n_samples)
    else:
        stderr = np.zeros((16, 16))
    mean = (mean + mean.conj().T) / 2
    return clip_chi(ChiMatrix(mean, stderr, n_samples))


def extract_channel(params: MSMicroParams, n_samples: int, seed: int, p_trunc: float = 1e-8,
                    workers: int = 1) -> KrausChannel:
    """Averaged chi -> sorted, truncated Kraus channel with provenance metadata."""
    chi = average_chi(params, n_samples, seed=seed, workers=workers)
    full = chi_to_kraus(chi)
    u = target_unitary(params)
    channel = truncate_kraus(full, p_trunc)
    channel.meta = {
        "params": params.to_dict(),
        "params_hash": params.digest(),
        "n_samples": n_samples,
        "seed": seed,
        "p_trunc": p_trunc,
        "dropped": channel.meta.get("dropped", 0),
        "gate_error": full.gate_error(u),
        "average_gate_infidelity": full.average_error(u),
        "trace_preservation_error": chi.trace_preservation_error(),
        "clipped": chi.clipped,
    }
    return channel


def chi_error(chi: ChiMatrix | np.ndarray, u: np.ndarray) -> float:
    """Gate error 1 - F_pro of chi relative to the unitary ``u``.

    This is the figure quoted for extracted channels: it equals the weight
    outside the ideal Kraus operator, sum_{n>1} p_n, when K_1 is close to ``u``.
    """
    mat = chi.chi if isinstance(chi, ChiMatrix) else chi
    c = unitary_coefficients(u)
    return 1.0 - float(np.real(c.conj() @ mat @ c))


def gate_error(params: MSMicroParams, n_samples: int, seed: int) -> float:
    """1 - F_pro of the trajectory-averaged gate (no truncation)."""
    return chi_error(average_chi(params, n_samples, seed=seed), target_unitary(params))


def ms_basis_overlap(channel: KrausChannel, phi: float, n: int) -> float:
    """Weight of K_n U^dag inside span{s (x) I, I (x) s, s (x) s}, s = cos(phi) X + sin(phi) Y."""
    sig = math.cos(phi) * _X + math.sin(phi) * _Y
    span = np.array([np.kron(_I2, sig), np.kron(sig, _I2), np.kron(sig, sig)]).reshape(3, 16) / 2
    err = (channel.ops[n] @ ms_matrix(2, math.pi / 2, phi).conj().T).reshape(16)
    err = err / np.linalg.norm(err)
    return float(np.linalg.norm(span.conj() @ err) ** 2)


# ---------------------------------------------------------------------------
# circuit-level channels


TABLE_MS_DURATION = {"current": 40e-6, "anticipated": 15e-6}
TABLE_MS_INFIDELITY = {"current": 1e-2, "anticipated": 2e-4}
PRESET_T2 = {"current": 0.2, "anticipated": 2.2}
NBAR_BUCKETS = (0.1, 0.5, 1.0, 3.0, 6.0)
CIRCUIT_SAMPLES = 40
CIRCUIT_SEED = 20240521
DATA_DIR = Path(__file__).parent / "data"


def nbar_bucket(nbar: float) -> float:
    """Smallest bucket at or above ``nbar`` (the largest bucket caps it)."""
    for b in NBAR_BUCKETS:
        if nbar <= b + 1e-12:
            return b
    return NBAR_BUCKETS[-1]


def closed_loop_gate_time(nominal: float, omega_z: float = MSMicroParams.omega_z) -> float:
    """Gate time nearest ``nominal`` at which both the CoM and stretch loops close.

    With the beat note at omega_z + delta, both close when (sqrt3 - 1) omega_z t_g
    is a multiple of 2 pi.
    """
    period = 2 * math.pi / ((STRETCH_RATIO - 1) * omega_z)
    return max(1, round(nominal / period)) * period


def preset_micro_params(preset: str, nbar: float = 0.1, zeta: float = 0.0) -> MSMicroParams:
    """Microscopic parameters for a Table I preset at a given centre-of-mass occupation."""
    if preset not in TABLE_MS_DURATION:
        raise ValueError(f"unknown preset {preset!r}")
    return MSMicroParams(gate_time=closed_loop_gate_time(TABLE_MS_DURATION[preset]),
                         T2=PRESET_T2[preset], nbar_com=nbar, zeta=zeta)


def calibrate_zeta(params: MSMicroParams, target: float, n_samples: int = 4, seed: int = 0,
                   iters: int = 30) -> tuple:
    """Beam phase zeta in [0, pi/2] whose gate error equals ``target``.

    Uses common random numbers across the bisection. Returns (zeta, error); when
    the target lies outside the reachable range the nearest end point is returned.
    """
    def err(z):
        return gate_error(params.replace(zeta=z), n_samples, seed)

    lo, hi = 0.0, math.pi / 2
    e_lo, e_hi = err(lo), err(hi)
    if target <= e_lo:
        return lo, e_lo
    if target >= e_hi:
        return hi, e_hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        e_mid = err(mid)
        if e_mid < target:
            lo, e_lo = mid, e_mid
        else:
            hi, e_hi = mid, e_mid
        if hi - lo < 1e-4:
            break
    return (lo, e_lo) if abs(e_lo - target) <= abs(e_hi - target) else (hi, e_hi)


# ---------------------------------------------------------------------------
# artifacts


def channel_key(params: MSMicroParams, n_samples: int, seed: int, p_trunc: float) -> str:
    blob = json.dumps({"params": params.to_dict(), "n_samples": n_samples, "seed": seed,
                       "p_trunc": p_trunc, "version": ARTIFACT_VERSION}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def channel_to_json(channel: KrausChannel) -> str:
    doc = {
        "format": "trapqec-kraus",
        "version": ARTIFACT_VERSION,
        "meta": channel.meta,
        "probs": [float(p) for p in channel.probs],
        "ops": [[[[float(z.real), float(z.imag)] for z in row] for row in k] for k in channel.ops],
    }
    return json.dumps(doc, sort_keys=True, indent=1)


def channel_from_json(text: str) -> KrausChannel:
    doc = json.loads(text)
    if doc.get("format") != "trapqec-kraus" or doc.get("version") != ARTIFACT_VERSION:
        raise ValueError("not a supported Kraus channel artifact")
    ops = np.array(doc["ops"], dtype=float)
    ch = KrausChannel(np.array(doc["probs"]), ops[..., 0] + 1j * ops[..., 1], doc["meta"])
    if ch.completeness_error() > 1e-10:
        raise ValueError(f"artifact is not trace preserving ({ch.completeness_error():.2e})")
    return ch


def save_channel(channel: KrausChannel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(channel_to_json(channel))
    return path


def load_channel(path) -> KrausChannel:
    return channel_from_json(Path(path).read_text())


def circuit_channel_path(preset: str, bucket: float, directory=None) -> Path:
    return Path(directory or DATA_DIR) / f"ms_{preset}_nbar{bucket:g}.json"


def build_circuit_channel(preset: str, bucket: float, n_samples: int = CIRCUIT_SAMPLES,
                          seed: int = CIRCUIT_SEED, workers: int = 1) -> KrausChannel:
    """Extract the circuit-level channel: zeta calibrated so the gate error matches Table I."""
    base = preset_micro_params(preset, bucket)
    zeta, err = calibrate_zeta(base, TABLE_MS_INFIDELITY[preset], seed=seed)
    ch = extract_channel(base.replace(zeta=zeta), n_samples, seed, workers=workers)
    ch.meta.update(preset=preset, nbar_bucket=bucket, zeta=zeta, calibration_error=err,
                   target_error=TABLE_MS_INFIDELITY[preset])
    return ch


class ChannelBank:
    """Lazy store of circuit-level MS channels keyed by (preset, nbar bucket).

    Looks in ``directories`` (package data first) and extracts missing channels
    only when ``allow_extract`` is set.
    """

    def __init__(self, directories=(), allow_extract: bool = False, workers: int = 1):
        self.directories = [Path(d) for d in directories] + [DATA_DIR]
        self.allow_extract = allow_extract
        self.workers = workers
        self._cache: dict = {}

    def get(self, preset: str, nbar: float) -> KrausChannel:
        key = (preset, nbar_bucket(nbar))
        if key not in self._cache:
            self._cache[key] = self._load(*key)
        return self._cache[key]

    def _load(self, preset: str, bucket: float) -> KrausChannel:
        for d in self.directories:
            path = circuit_channel_path(preset, bucket, d)
            if path.exists():
                return load_channel(path)
        if not self.allow_extract:
            raise FileNotFoundError(f"no MS channel for preset {preset!r} at nbar bucket {bucket:g}")
        ch = build_circuit_channel(preset, bucket, workers=self.workers)
        if self.directories[0] != DATA_DIR:
            save_channel(ch, circuit_channel_path(preset, bucket, self.directories[0]))
        return ch
