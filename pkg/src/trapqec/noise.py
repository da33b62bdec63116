"""Stochastic processes and non-unitary channels for the trapped-ion noise model.

Covers Ornstein-Uhlenbeck drift of laser intensity and phase, faulty
single-qubit rotations, Markovian idle dephasing, spontaneous decay with
leakage (three-level bookkeeping through the classical leak bit), leakage
repumping and SPAM bit flips.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .statevec import (
    X,
    Z,
    PureState,
    apply_matrix,
    apply_z_rotation,
    project,
    prob_one,
    rotation_matrix,
)

LEAKAGE_MODES = ("full", "damping-only", "symmetric", "off")


@dataclass
class OUProcess:
    """Ornstein-Uhlenbeck process dF/dt = -F/tau_c + sqrt(c) * white noise."""

    tau_c: float
    c: float
    value: float = 0.0

    @property
    def stationary_var(self) -> float:
        return self.c * self.tau_c / 2

    def draw_stationary(self, rng) -> "OUProcess":
        self.value = math.sqrt(self.stationary_var) * rng.standard_normal() if self.c > 0 else 0.0
        return self

    def step(self, dt: float, rng) -> float:
        return ou_step(self, dt, rng)


def ou_step(p: OUProcess, dt: float, rng) -> float:
    """Exact OU update over ``dt``; valid for any step size."""
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    if dt == 0:
        return p.value
    if math.isinf(dt):
        decay = 0.0
    else:
        decay = math.exp(-dt / p.tau_c)
    if p.c > 0:
        sigma = math.sqrt(p.stationary_var * (1 - decay * decay))
        p.value = p.value * decay + sigma * rng.standard_normal()
    else:
        p.value = p.value * decay
    return p.value


def ou_trajectory(tau_c: float, c: float, dt: float, n_steps: int, rng, start=None) -> np.ndarray:
    """Sampled path F(k dt), k = 0..n_steps-1, starting stationary unless ``start`` given."""
    out = np.empty(n_steps)
    decay = math.exp(-dt / tau_c)
    sigma = math.sqrt(c * tau_c / 2 * (1 - decay * decay))
    noise = rng.standard_normal(n_steps)
    f = math.sqrt(c * tau_c / 2) * noise[0] if start is None else start
    out[0] = f
    for k in range(1, n_steps):
        f = f * decay + sigma * noise[k]
        out[k] = f
    return out


@dataclass
class NoiseParams:
    T1: float = 1.1
    T2: float = 2.2
    branching_ratio: float = 4 / 9
    phase_ou: tuple = (0.1, 0.01)
    intensity_ou: tuple = (2.2e-3, 0.01)
    spam: tuple = (5e-3, 1e-4)
    repump_eps: float = math.sqrt(5e-3)
    leakage_mode: str = "full"
    collective_dephasing: bool = False

    def __post_init__(self):
        self.phase_ou = tuple(float(v) for v in self.phase_ou)
        self.intensity_ou = tuple(float(v) for v in self.intensity_ou)
        self.spam = tuple(float(v) for v in self.spam)
        if self.T1 <= 0 or self.T2 <= 0:
            raise ValueError("T1 and T2 must be positive")
        if self.T2 > 2 * self.T1 * (1 + 1e-12):
            raise ValueError(f"T2={self.T2} exceeds 2*T1={2 * self.T1}")
        if self.branching_ratio < 0:
            raise ValueError("branching_ratio must be non-negative")
        if self.leakage_mode not in LEAKAGE_MODES:
            raise ValueError(f"unknown leakage_mode {self.leakage_mode!r}")

    @property
    def decay_rates(self) -> tuple:
        """(Gamma, Gamma') for damping into |0> and leakage into |l>.

        The total decay rate of |1> is 1/T1 in every mode.
        """
        total = 0.0 if math.isinf(self.T1) else 1.0 / self.T1
        if self.leakage_mode == "full":
            r = self.branching_ratio
            return total / (1 + r), total * r / (1 + r)
        if self.leakage_mode == "damping-only":
            return total, 0.0
        if self.leakage_mode == "symmetric":
            return total / 2, total / 2
        return total, 0.0

    @property
    def dephasing_rate(self) -> float:
        """Pure-dephasing rate 1/T2 - 1/(2 T1), floored at zero."""
        t1_part = 0.0 if math.isinf(self.T1) else 1 / (2 * self.T1)
        t2_part = 0.0 if math.isinf(self.T2) else 1 / self.T2
        return max(0.0, t2_part - t1_part)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("phase_ou", "intensity_ou", "spam"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown NoiseParams keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **kw) -> "NoiseParams":
        return replace(self, **kw)


# OU diffusion constants below come from calibrate_ou_constant() against the
# one-qubit gate infidelities of each preset; see tests/test_noise.py.
CALIBRATED_C = {"current": 3.029e-3, "anticipated": 6.020e-4}

PRESETS = {
    "current": NoiseParams(
        T1=1.1,
        T2=0.2,
        phase_ou=(0.1, CALIBRATED_C["current"]),
        intensity_ou=(0.2e-3, CALIBRATED_C["current"]),
        spam=(5e-3, 1e-3),
        repump_eps=math.sqrt(5e-3),
    ),
    "anticipated": NoiseParams(
        T1=1.1,
        T2=2.2,
        phase_ou=(0.1, CALIBRATED_C["anticipated"]),
        intensity_ou=(2.2e-3, CALIBRATED_C["anticipated"]),
        spam=(5e-3, 1e-4),
        repump_eps=math.sqrt(5e-3),
    ),
}

ONE_QUBIT_INFIDELITY = {"current": 5e-5, "anticipated": 1e-5}


def preset(name: str) -> NoiseParams:
    if name not in PRESETS:
        raise KeyError(f"unknown noise preset {name!r}; choose from {sorted(PRESETS)}")
    return replace(PRESETS[name])


def noiseless_params() -> NoiseParams:
    """Parameters with every stochastic source switched off."""
    return NoiseParams(
        T1=math.inf,
        T2=math.inf,
        phase_ou=(0.1, 0.0),
        intensity_ou=(1e-3, 0.0),
        spam=(0.0, 0.0),
        repump_eps=0.0,
        leakage_mode="off",
    )


# ---------------------------------------------------------------------------
# faulty single-qubit gates

def effective_angle(theta: float, intensity_dev: float) -> float:
    """theta * sqrt(I / <I>) with I/<I> = 1 + F, clipped at zero intensity."""
    return theta * math.sqrt(max(0.0, 1.0 + intensity_dev))


def faulty_rotation_matrix(theta: float, phi: float, intensity_dev: float, phase_dev: float):
    return rotation_matrix(effective_angle(theta, intensity_dev), phi + phase_dev)


def faulty_global_rotation(state, targets, theta, phi, intensity_ou, phase_ou, duration, rng):
    """Carrier rotation with intensity-driven over/under-rotation and axis tilt."""
    ou_step(intensity_ou, duration, rng)
    ou_step(phase_ou, duration, rng)
    u = faulty_rotation_matrix(theta, phi, intensity_ou.value, phase_ou.value)
    targets = list(targets)
    if not targets:
        raise ValueError("targets must be non-empty")
    for q in targets:
        state._check(q)
        if not state.flags.leaked[q]:
            apply_matrix(state, u, [q])


def faulty_z_rotation(state, target, theta, intensity_ou, duration, rng):
    """ac-Stark z rotation; only the pulse area fluctuates."""
    ou_step(intensity_ou, duration, rng)
    apply_z_rotation(state, target, effective_angle(theta, intensity_ou.value))


def average_gate_infidelity_1q(u_ideal: np.ndarray, u_actual: np.ndarray) -> float:
    tr = np.trace(u_ideal.conj().T @ u_actual)
    return 1.0 - (abs(tr) ** 2 + 2) / 6


def mean_rotation_infidelity(c: float, tau_phase: float, tau_int: float, n_samples=10_000,
                             seed=0, theta=math.pi / 2) -> float:
    """Average infidelity of X(theta) over stationary OU fluctuations."""
    rng = np.random.default_rng(seed)
    n = rng.standard_normal((n_samples, 2))
    dphi = n[:, 0] * math.sqrt(c * tau_phase / 2)
    dint = n[:, 1] * math.sqrt(c * tau_int / 2)
    th = theta * np.sqrt(np.clip(1 + dint, 0, None))
    # |Tr(U_ideal^dag U)| for two equatorial rotations, closed form
    tr = 2 * (np.cos(theta / 2) * np.cos(th / 2)
              + np.sin(theta / 2) * np.sin(th / 2) * np.cos(dphi))
    return float(np.mean(1 - (tr**2 + 2) / 6))


def calibrate_ou_constant(target: float, tau_phase: float, tau_int: float,
                          n_samples=10_000, seed=0, tol=1e-4) -> float:
    """Bisect (in log space) the shared diffusion constant c to hit ``target``."""
    lo, hi = 1e-12, 10.0
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        val = mean_rotation_infidelity(mid, tau_phase, tau_int, n_samples, seed)
        if val > target:
            hi = mid
        else:
            lo = mid
        if hi / lo < 1 + tol:
            break
    return math.sqrt(lo * hi)


# ---------------------------------------------------------------------------
# spontaneous decay, leakage and dephasing

def decay_angles(t: float, gamma: float, gamma_p: float) -> tuple:
    """Controlled-rotation angles (theta_leak, theta_damp) of the decay circuit."""
    if gamma < 0 or gamma_p < 0:
        raise ValueError("decay rates must be non-negative")
    if t < 0:
        raise ValueError("duration must be non-negative")
    tot = gamma + gamma_p
    if tot == 0 or t == 0:
        return 0.0, 0.0
    e = math.exp(-tot * t)
    p_l = gamma_p * (1 - e) / tot
    p_d_cond = gamma * (1 - e) / (gamma + gamma_p * e)
    theta_l = 2 * math.asin(math.sqrt(min(1.0, p_l)))
    theta_d = 2 * math.asin(math.sqrt(min(1.0, p_d_cond)))
    return theta_l, theta_d


def decay_probabilities(t: float, gamma: float, gamma_p: float) -> tuple:
    """Unconditional (p_damp, p_leak) for an ion starting in |1>."""
    tot = gamma + gamma_p
    if tot == 0 or t == 0:
        return 0.0, 0.0
    e = math.exp(-tot * t)
    return gamma * (1 - e) / tot, gamma_p * (1 - e) / tot


def damping_leakage_channel(state: PureState, target: int, duration: float,
                            gamma: float, gamma_p: float, rng) -> str:
    """Monte Carlo branch of the damping + leakage Kraus set {L0, L1, L2}.

    Returns which branch fired: "none", "damp" or "leak". Leaked ions pass
    through untouched.
    """
    if gamma < 0 or gamma_p < 0:
        raise ValueError("decay rates must be non-negative")
    if state.flags.leaked[target]:
        return "none"
    theta_l, theta_d = decay_angles(duration, gamma, gamma_p)
    if theta_l == 0 and theta_d == 0:
        return "none"
    p_l = math.sin(theta_l / 2) ** 2
    p_d = (1 - p_l) * math.sin(theta_d / 2) ** 2
    p1 = prob_one(state, target)
    r = rng.random()
    if r < p_l * p1:
        project(state, target, 1)
        state.flags.set(target)
        return "leak"
    if r < (p_l + p_d) * p1:
        project(state, target, 1)
        apply_matrix(state, X, [target])
        return "damp"
    # no-jump branch L0: shrink the |1> amplitude
    keep = math.sqrt(max(0.0, 1 - p_l - p_d))
    n = state.n_qubits
    v = state.amplitudes.reshape(2 ** (n - 1 - target), 2, 2**target)
    v[:, 1, :] *= keep
    norm = math.sqrt(1 - (p_l + p_d) * p1)
    state.amplitudes /= norm
    return "none"


def dephasing_flip_probability(duration: float, rate: float) -> float:
    return 0.5 * (1 - math.exp(-duration * rate)) if rate > 0 else 0.0


def idle_noise(state: PureState, qubits, duration: float, params: NoiseParams, rng) -> None:
    """Markovian dephasing followed by damping/leakage on every unleaked qubit."""
    if duration <= 0:
        return
    p_z = dephasing_flip_probability(duration, params.dephasing_rate)
    gamma, gamma_p = params.decay_rates
    for q in qubits:
        if state.flags.leaked[q]:
            continue
        if p_z > 0 and rng.random() < p_z:
            apply_z_rotation(state, q, math.pi)
        if gamma + gamma_p > 0:
            damping_leakage_channel(state, q, duration, gamma, gamma_p, rng)


def repump(state: PureState, target: int, eps: float, duration: float,
           params: NoiseParams, rng) -> None:
    """Leakage repumping: a leaked ion returns to a random computational state
    with probability 1 - eps^2; an unleaked ion only idles for ``duration``."""
    if state.flags.leaked[target]:
        if rng.random() < eps * eps:
            return
        state.flags.clear(target)
        # the leaked ion is parked in its |1> slot; pick |0> or |1> uniformly
        if rng.random() < 0.5:
            apply_matrix(state, X, [target])
        return
    idle_noise(state, [target], duration, params, rng)


def spam_flip(outcome: int, flip_prob: float, rng) -> int:
    if flip_prob > 0 and rng.random() < flip_prob:
        return -outcome
    return outcome


__all__ = [
    "OUProcess", "ou_step", "ou_trajectory", "NoiseParams", "PRESETS", "preset",
    "noiseless_params", "faulty_global_rotation", "faulty_z_rotation", "idle_noise",
    "damping_leakage_channel", "decay_angles", "decay_probabilities", "repump",
    "spam_flip", "calibrate_ou_constant", "mean_rotation_infidelity", "Z",
]
