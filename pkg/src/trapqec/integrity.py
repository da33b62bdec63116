"""Memory integrity of bare and encoded qubits, and the milestones M1-M4.

Alice prepares one of two orthogonal logical states in the x, y or z basis,
the memory runs for a time tau (with Igor's QEC rounds spread evenly inside),
and Bob tries to tell which state he got. The integrity is R = 2 p_g - 1 for
the worst basis, where p_g is Bob's success probability.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.optimize import curve_fit

from . import mschannel, qccd
from .colorcode.code import N_DATA, PLAQUETTES
from .colorcode.cycle import ORDER, encode, qec_cycle_cat, qec_cycle_flag
from .colorcode.readout import (build_basis_measurement, build_cat_readout,
                                build_flag_readout, build_transversal)
from .noise import NoiseParams, idle_noise, noiseless_params, preset as noise_preset
from .statevec import PureState, apply_matrix, measure_z, rotation_matrix

BASES = ("x", "y", "z")
SCHEMES = ("flag", "cat")
LEAKAGE = {"full": "full", "damping-only": "damping-only", "symmetric": "symmetric"}
MIN_TRIALS = 100
REGISTER = {"flag": 9, "cat": 11}


@dataclass(frozen=True)
class MemoryChannelSpec:
    """One memory experiment.

    ``noise`` overrides the named ``preset`` noise parameters (its leakage mode
    still follows ``leakage``). ``ideal_ms`` replaces the extracted MS channels
    by the exact gate.
    """

    encoding: str = "encoded"          # "encoded" | "bare"
    rounds: int = 0
    tau: float = 0.0
    scheme: str = "flag"
    repump: str = "cycle"              # "none" | "cycle" | "gate"
    preset: str = "anticipated"
    leakage: str = "full"
    noise: NoiseParams | None = None
    ideal_ms: bool = False

    def __post_init__(self):
        if self.encoding not in ("encoded", "bare"):
            raise ValueError(f"unknown encoding {self.encoding!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.rounds < 0 or self.tau < 0:
            raise ValueError("rounds and tau must be non-negative")
        if self.leakage not in LEAKAGE:
            raise ValueError(f"unknown leakage mode {self.leakage!r}")
        qccd.Policy(self.repump)

    def noise_params(self) -> NoiseParams:
        base = self.noise if self.noise is not None else noise_preset(self.preset)
        if base.leakage_mode == "off":
            return base
        return base.replace(leakage_mode=LEAKAGE[self.leakage])

    def costs(self) -> qccd.OpCosts:
        return qccd.OpCosts.preset(self.preset)

    def digest(self) -> int:
        d = asdict(self)
        d["noise"] = self.noise.to_dict() if self.noise is not None else None
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")

    def replace(self, **kw) -> "MemoryChannelSpec":
        return replace(self, **kw)


@dataclass
class IntegrityEstimate:
    R: float
    stderr: float
    trials: int
    p_g: dict = field(default_factory=dict)
    stderr_basis: dict = field(default_factory=dict)
    tau: float = 0.0
    tau_min: float = 0.0
    defined: bool = True
    worst_basis: str = ""

    def rows(self, spec: MemoryChannelSpec, seed) -> list:
        """CSV rows: one per basis and one 'min' row carrying R."""
        base = {"scheme": spec.scheme if spec.encoding == "encoded" else "bare",
                "preset": spec.preset, "m": spec.rounds, "tau_seconds": self.tau,
                "trials": self.trials, "seed": seed}
        out = []
        for b in BASES:
            p = self.p_g.get(b, math.nan)
            out.append({**base, "basis": b, "p_g": p, "R": 2 * p - 1,
                        "stderr": self.stderr_basis.get(b, math.nan)})
        out.append({**base, "basis": "min", "p_g": (1 + self.R) / 2, "R": self.R,
                    "stderr": self.stderr})
        return out


CSV_COLUMNS = ("scheme", "preset", "m", "tau_seconds", "basis", "p_g", "R", "stderr",
               "trials", "seed")


# ---------------------------------------------------------------------------
# trace distance and the bare-qubit baseline


def trace_distance(rho1, rho2) -> float:
    """Half the sum of singular values of rho1 - rho2."""
    d = np.asarray(rho1, dtype=complex) - np.asarray(rho2, dtype=complex)
    return float(0.5 * np.linalg.svd(d, compute_uv=False).sum())


def wilson_halfwidth(successes: int, n: int, z: float = 1.0) -> float:
    p = successes / n
    den = 1 + z * z / n
    return z / den * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))


# single-qubit preparation (theta, phi) of psi_b; psi_b_perp adds pi to theta
_PREP = {"x": (math.pi / 2, math.pi / 2), "y": (math.pi / 2, -math.pi), "z": (0.0, 0.0)}


def _prep_vector(basis: str, perp: bool) -> np.ndarray:
    theta, phi = _PREP[basis]
    u = rotation_matrix(theta + (math.pi if perp else 0.0), phi)
    return u[:, 0]


def _bare_rho(basis: str, perp: bool, tau: float, params: NoiseParams) -> np.ndarray:
    """3-level density matrix (|0>, |1>, |l>) after idling for ``tau``."""
    v = _prep_vector(basis, perp)
    rho = np.zeros((3, 3), dtype=complex)
    rho[:2, :2] = np.outer(v, v.conj())
    gamma, gamma_p = params.decay_rates
    tot = gamma + gamma_p
    e = math.exp(-tot * tau)
    p_d = gamma * (1 - e) / tot if tot > 0 else 0.0
    p_l = gamma_p * (1 - e) / tot if tot > 0 else 0.0
    coh = math.exp(-tot * tau / 2) * math.exp(-params.dephasing_rate * tau)
    p1 = rho[1, 1].real
    out = np.zeros((3, 3), dtype=complex)
    out[0, 0] = rho[0, 0].real + p_d * p1
    out[1, 1] = e * p1
    out[2, 2] = p_l * p1
    out[0, 1] = rho[0, 1] * coh
    out[1, 0] = rho[1, 0] * coh
    return out


def _bob_effects(basis: str) -> tuple:
    """Effects for Bob reporting psi_b and psi_b_perp.

    Bob undoes the preparation rotation and measures z; a leaked ion
    fluoresces like |0> and so reports psi_b.
    """
    e_psi = np.zeros((3, 3), dtype=complex)
    e_perp = np.zeros((3, 3), dtype=complex)
    v, w = _prep_vector(basis, False), _prep_vector(basis, True)
    e_psi[:2, :2] = np.outer(v, v.conj())
    e_perp[:2, :2] = np.outer(w, w.conj())
    e_psi[2, 2] = 1.0
    return e_psi, e_perp


def bare_basis_success(basis: str, tau: float, params: NoiseParams) -> float:
    e_psi, e_perp = _bob_effects(basis)
    ok_psi = np.trace(e_psi @ _bare_rho(basis, False, tau, params)).real
    ok_perp = np.trace(e_perp @ _bare_rho(basis, True, tau, params)).real
    return float(0.5 * (ok_psi + ok_perp))


def bare_memory_integrity(tau: float, params: NoiseParams) -> IntegrityEstimate:
    """Closed-form integrity of one unencoded ion idling for ``tau``."""
    p = {b: bare_basis_success(b, tau, params) for b in BASES}
    worst = min(BASES, key=lambda b: p[b])
    return IntegrityEstimate(2 * p[worst] - 1, 0.0, 0, p, {b: 0.0 for b in BASES}, tau,
                             0.0, True, worst)


# ---------------------------------------------------------------------------
# Monte Carlo trials


def _trial_rng(spec_digest: int, seed: int, basis: str, trial: int):
    return np.random.default_rng(np.random.SeedSequence(
        [seed, spec_digest & 0xFFFFFFFF, spec_digest >> 32, BASES.index(basis), trial]))


def _bare_trial(spec: MemoryChannelSpec, params: NoiseParams, basis: str, perp: bool, rng) -> bool:
    st = PureState(1, _prep_vector(basis, perp))
    idle_noise(st, [0], spec.tau, params, rng)
    theta, phi = _PREP[basis]
    if not st.flags.leaked[0]:
        apply_matrix(st, rotation_matrix(theta, phi).conj().T, [0])
    says_psi = measure_z(st, 0, rng) == 1
    return says_psi != perp


_SYNDROME_QUBIT = {tuple(-1 if q in p else 1 for p in PLAQUETTES): q - 1
                   for q in range(1, N_DATA + 1)}


def decode_transversal(bits) -> int:
    """Logical value from seven +/-1 single-ion outcomes, fixing one flipped bit."""
    bits = list(bits)
    syn = tuple(int(np.prod([bits[q - 1] for q in p])) for p in PLAQUETTES)
    if syn != (1, 1, 1):
        bits[_SYNDROME_QUBIT[syn]] *= -1
    return int(np.prod(bits))


def _cycle(spec: MemoryChannelSpec):
    repump = spec.repump == "cycle"
    if spec.scheme == "flag":
        return lambda b: qec_cycle_flag(b, repump=repump)
    return lambda b: qec_cycle_cat(b, repump=repump)


def _channels(spec: MemoryChannelSpec):
    return qccd.IdealChannels() if spec.ideal_ms else _bank()


@lru_cache(maxsize=None)
def _bank():
    return mschannel.ChannelBank()


def _prepare(backend, basis: str, perp: bool) -> None:
    n = backend.n_qubits
    encode(backend, "zero_L" if basis == "z" else "plus_L")
    if basis == "y":
        backend.run(build_transversal("phase", n))
    if perp:
        backend.run(build_transversal("not" if basis == "z" else "phase_flip", n))


def _encoded_outcome(spec: MemoryChannelSpec, params: NoiseParams, basis: str, perp: bool,
                     rng) -> int:
    n = REGISTER[spec.scheme]
    b = qccd.TrapBackend(PureState(n), params, spec.costs(), _channels(spec), rng,
                         policy=qccd.Policy(spec.repump))
    _prepare(b, basis, perp)
    cycle = _cycle(spec)
    t0 = b.elapsed
    t_round = round_duration(spec.scheme, spec.preset, spec.repump)
    gap = max(0.0, spec.tau - spec.rounds * t_round) / (spec.rounds + 1)
    for k in range(1, spec.rounds + 1):
        b.idle(max(0.0, t0 + k * gap + (k - 1) * t_round - b.elapsed))
        cycle(b)
    b.idle(max(0.0, t0 + spec.tau - b.elapsed))
    cycle(b)
    out = b.run(build_basis_measurement(basis, n))
    return decode_transversal(out[f"m{q + 1}"] for q in range(N_DATA))


@lru_cache(maxsize=None)
def _reference(scheme: str, basis: str) -> int:
    """Decoded value of psi_b through a noiseless run (fixes the sign convention)."""
    spec = MemoryChannelSpec(scheme=scheme, noise=noiseless_params(), ideal_ms=True)
    return _encoded_outcome(spec, spec.noise_params(), basis, False, np.random.default_rng(0))


def run_trial(spec: MemoryChannelSpec, basis: str, trial: int, seed: int,
              digest: int | None = None) -> bool:
    """One Alice-Igor-Bob round; True when Bob identifies Alice's state."""
    digest = spec.digest() if digest is None else digest
    rng = _trial_rng(digest, seed, basis, trial)
    perp = bool(trial % 2)
    params = spec.noise_params()
    if spec.encoding == "bare":
        return _bare_trial(spec, params, basis, perp, rng)
    value = _encoded_outcome(spec, params, basis, perp, rng)
    return value == (-1 if perp else 1) * _reference(spec.scheme, basis)


def _count(args) -> tuple:
    spec, basis, lo, hi, seed, digest = args
    return basis, sum(run_trial(spec, basis, t, seed, digest) for t in range(lo, hi))


# ---------------------------------------------------------------------------
# tau_min and estimation


@lru_cache(maxsize=None)
def round_duration(scheme: str, preset: str, repump: str = "none") -> float:
    """Compiled duration of one QEC round on its no-trigger path.

    The flag round is the six flagged readouts; the cat round reads all six
    stabilizers twice.
    """
    costs = qccd.OpCosts.preset(preset)
    n = REGISTER[scheme]
    layout = qccd.default_layout(n)
    pol = qccd.Policy(repump, True)
    build, reps = (build_flag_readout, 1) if scheme == "flag" else (build_cat_readout, 2)
    t = reps * sum(qccd.cached_schedule(build(p, basis, n), layout, costs, pol).makespan
                   for basis, p in ORDER)
    if repump == "cycle":
        t += costs.duration("repump")
    return t


def tau_min(spec: MemoryChannelSpec) -> float:
    if spec.encoding == "bare":
        return 0.0
    return spec.rounds * round_duration(spec.scheme, spec.preset, spec.repump)


def _root_seed(rng) -> int:
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    return int(rng.integers(0, 2**63))


def estimate_integrity(spec: MemoryChannelSpec, trials: int, rng=0,
                       workers: int = 1) -> IntegrityEstimate:
    """Monte Carlo integrity with ``trials`` runs per basis.

    ``rng`` is an integer root seed or a Generator (which then draws one).
    Half of the trials start from psi_b and half from psi_b_perp.
    """
    if trials < MIN_TRIALS:
        raise ValueError(f"need at least {MIN_TRIALS} trials, got {trials}")
    seed = _root_seed(rng)
    tmin = tau_min(spec)
    if spec.tau < tmin:
        nan = math.nan
        return IntegrityEstimate(nan, nan, trials, {}, {}, spec.tau, tmin, False)
    digest = spec.digest()
    if spec.encoding == "encoded":
        for b in BASES:
            _reference(spec.scheme, b)
    chunk = max(1, math.ceil(trials / max(1, 4 * workers)))
    jobs = [(spec, b, lo, min(trials, lo + chunk), seed, digest)
            for b in BASES for lo in range(0, trials, chunk)]
    wins = dict.fromkeys(BASES, 0)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_count, jobs))
    else:
        results = [_count(j) for j in jobs]
    for b, k in results:
        wins[b] += k
    p = {b: wins[b] / trials for b in BASES}
    se = {b: 2 * wilson_halfwidth(wins[b], trials) for b in BASES}
    worst = min(BASES, key=lambda b: p[b])
    return IntegrityEstimate(2 * p[worst] - 1, se[worst], trials, p, se, spec.tau, tmin,
                             True, worst)


def integrity_curve(spec: MemoryChannelSpec, taus, trials: int, seed: int,
                    workers: int = 1) -> list:
    return [estimate_integrity(spec.replace(tau=float(t)), trials, seed, workers)
            for t in taus]


# ---------------------------------------------------------------------------
# short-time scaling and milestones


def fit_exponent(taus, R) -> tuple:
    """Fit R = R0 - a tau^k; returns (k, R0, a). Undefined points are skipped."""
    t = np.asarray(taus, dtype=float)
    r = np.asarray(R, dtype=float)
    ok = np.isfinite(r)
    t, r = t[ok], r[ok]
    if len(t) < 4:
        raise ValueError("need at least four defined points")
    scale = t.max()

    def model(x, r0, a, k):
        return r0 - a * (x / scale) ** k

    (r0, a, k), _ = curve_fit(model, t, r, p0=(r[0], max(r[0] - r[-1], 1e-6), 1.5),
                              bounds=([0.0, 0.0, 0.2], [1.5, 10.0, 6.0]), maxfev=20000)
    return float(k), float(r0), float(a / scale**k)


@dataclass
class Verdict:
    holds: bool
    witness: tuple | None = None      # (m, tau) or tau
    window: tuple | None = None       # (tau_lo, tau_hi) where it holds

    def __str__(self):
        s = "true" if self.holds else "false"
        if self.witness is not None:
            s += f" witness={self.witness}"
        if self.window is not None:
            s += f" window=[{self.window[0]:.4g}, {self.window[1]:.4g}] s"
        return s


def _beats(a: IntegrityEstimate, b: IntegrityEstimate, sigmas: float = 2.0) -> bool:
    """Non-overlapping ``sigmas`` intervals with a above b."""
    if not (a.defined and b.defined) or math.isnan(a.R) or math.isnan(b.R):
        return False
    return a.R - sigmas * a.stderr > b.R + sigmas * b.stderr


def _window(taus) -> tuple | None:
    return (min(taus), max(taus)) if taus else None


def milestone_check(series: dict, sigmas: float = 2.0) -> dict:
    """Evaluate M1-M4.

    ``series`` maps round counts m (0 = encoded, uncorrected) to lists of
    IntegrityEstimate on a shared tau grid, and the key "bare" to the
    unencoded curve on the same grid.
    """
    curves = {k: v for k, v in series.items() if k != "bare"}
    bare = series.get("bare")
    grid = [e.tau for e in next(iter(series.values()))]
    out = {}

    def pairwise(hi_m, lo_m):
        hits = [i for i in range(len(grid)) if _beats(curves[hi_m][i], curves[lo_m][i], sigmas)]
        return hits

    hits = pairwise(1, 0) if 0 in curves and 1 in curves else []
    out["M1"] = Verdict(bool(hits), (1, grid[hits[0]]) if hits else None,
                        _window([grid[i] for i in hits]))

    m2 = None
    for m in sorted(curves):
        if m >= 2 and m - 1 in curves:
            h = pairwise(m, m - 1)
            if h:
                m2 = (m, grid[h[0]])
                break
    out["M2"] = Verdict(m2 is not None, m2)

    m3_taus, m3_wit = [], None
    if bare is not None:
        for i, t in enumerate(grid):
            for m in sorted(curves):
                if m > 0 and _beats(curves[m][i], bare[i], sigmas):
                    m3_taus.append(t)
                    m3_wit = m3_wit or (m, t)
                    break
    out["M3"] = Verdict(bool(m3_taus), m3_wit, _window(m3_taus))

    m4 = bare is not None and bool(curves)
    first_fail = None
    if m4:
        for i, t in enumerate(grid):
            defined = [curves[m][i] for m in curves if curves[m][i].defined]
            best = max(defined, key=lambda e: e.R, default=None)
            if best is None or not _beats(best, bare[i], sigmas):
                m4, first_fail = False, t
                break
    out["M4"] = Verdict(m4, first_fail)
    return out


__all__ = ["BASES", "CSV_COLUMNS", "MemoryChannelSpec", "IntegrityEstimate", "trace_distance",
           "wilson_halfwidth", "bare_memory_integrity", "bare_basis_success",
           "decode_transversal", "run_trial", "round_duration", "tau_min",
           "estimate_integrity", "integrity_curve", "fit_exponent", "Verdict",
           "milestone_check"]
