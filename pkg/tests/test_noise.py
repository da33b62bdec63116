import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trapqec import noise
from trapqec.noise import (CALIBRATED_C, NoiseParams, OUProcess, calibrate_ou_constant,
                           damping_leakage_channel, decay_angles, decay_probabilities,
                           idle_noise, mean_rotation_infidelity, ou_step, preset, repump)
from trapqec.statevec import PauliString, PureState, apply_global_rotation, pauli_expectation

FIDUCIALS = {
    "0": np.array([1, 0]), "1": np.array([0, 1]),
    "+": np.array([1, 1]) / math.sqrt(2), "-": np.array([1, -1]) / math.sqrt(2),
    "+i": np.array([1, 1j]) / math.sqrt(2), "-i": np.array([1, -1j]) / math.sqrt(2),
}


def kraus_oracle(psi, t, g, gp):
    """Three-level amplitude damping + leakage, basis (|0>, |1>, |l>)."""
    e = math.exp(-(g + gp) * t)
    pd = g * (1 - e) / (g + gp)
    pl = gp * (1 - e) / (g + gp)
    k0 = np.diag([1, math.sqrt(e), 1])
    k1 = np.zeros((3, 3)); k1[0, 1] = math.sqrt(pd)
    k2 = np.zeros((3, 3)); k2[2, 1] = math.sqrt(pl)
    v = np.array([psi[0], psi[1], 0])
    rho = np.outer(v, v.conj())
    return sum(k @ rho @ k.conj().T for k in (k0, k1, k2))


def mc_three_level(psi, t, g, gp, trials, rng):
    acc = np.zeros((trials, 3, 3), dtype=complex)
    for i in range(trials):
        s = PureState(1, psi.astype(complex))
        damping_leakage_channel(s, 0, t, g, gp, rng)
        if s.flags.leaked[0]:
            acc[i, 2, 2] = 1
        else:
            a = s.amplitudes
            acc[i, :2, :2] = np.outer(a, a.conj())
    return acc.mean(0), acc.std(0) / math.sqrt(trials)


@pytest.mark.parametrize("name", list(FIDUCIALS))
def test_decay_channel_matches_kraus_oracle(name, rng):
    g, gp, t = 0.6, 0.4, 0.8
    mean, err = mc_three_level(FIDUCIALS[name], t, g, gp, 20000, rng)
    exact = kraus_oracle(FIDUCIALS[name], t, g, gp)
    tol = 3 * np.maximum(err, 1e-12) + 1e-12
    assert np.all(abs(mean.real - exact.real) <= tol.real + tol.imag + 1e-12)
    assert np.all(abs(mean.imag - exact.imag) <= tol.real + tol.imag + 1e-12)


def test_decay_angles_closed_forms():
    assert decay_angles(0.0, 1.0, 0.3) == (0.0, 0.0)
    for t in (0.1, 1.0, 3.0):
        th_l, th_d = decay_angles(t, 0.7, 0.0)
        assert th_l == 0.0
        assert math.sin(th_d / 2) ** 2 == pytest.approx(1 - math.exp(-0.7 * t), rel=1e-14)


@given(st.floats(1e-4, 5.0), st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_decay_angles_reproduce_branch_probabilities(t, g, gp):
    if g + gp == 0:
        return
    th_l, th_d = decay_angles(t, g, gp)
    p_l = math.sin(th_l / 2) ** 2
    p_d = (1 - p_l) * math.sin(th_d / 2) ** 2
    want_d, want_l = decay_probabilities(t, g, gp)
    assert p_l == pytest.approx(want_l, abs=1e-12)
    assert p_d == pytest.approx(want_d, abs=1e-12)


def test_leak_probability_at_t1():
    p = preset("anticipated")
    g, gp = p.decay_rates
    assert g + gp == pytest.approx(1 / p.T1)
    _, p_l = decay_probabilities(p.T1, g, gp)
    assert p_l == pytest.approx((4 / 13) * (1 - math.exp(-1)), rel=1e-12)


def test_leakage_modes_share_total_rate():
    for mode in ("full", "damping-only", "symmetric"):
        g, gp = NoiseParams(T1=2.0, T2=1.0, leakage_mode=mode).decay_rates
        assert g + gp == pytest.approx(0.5)
    assert NoiseParams(T1=2.0, T2=1.0, leakage_mode="symmetric").decay_rates == (0.25, 0.25)


def test_params_validation_and_round_trip():
    with pytest.raises(ValueError):
        NoiseParams(T1=1.0, T2=3.0)
    with pytest.raises(ValueError):
        NoiseParams(leakage_mode="sideways")
    with pytest.raises(ValueError):
        NoiseParams.from_dict({"T1": 1.0, "bogus": 1})
    p = preset("current")
    assert NoiseParams.from_dict(p.to_dict()) == p


def test_ou_stationary_statistics(rng):
    p = OUProcess(tau_c=1.0, c=2.0, value=0.0).draw_stationary(rng)
    xs = []
    for _ in range(20000):
        xs.append(ou_step(p, 0.5, rng))
    xs = np.array(xs)
    assert xs.var() == pytest.approx(p.stationary_var, rel=0.08)
    lag1 = np.corrcoef(xs[:-1], xs[1:])[0, 1]
    assert lag1 == pytest.approx(math.exp(-0.5), abs=0.03)


def test_ou_zero_step_is_identity(rng):
    p = OUProcess(tau_c=1.0, c=2.0, value=0.37)
    assert ou_step(p, 0.0, rng) == pytest.approx(0.37)
    with pytest.raises(ValueError):
        ou_step(p, -1.0, rng)


@pytest.mark.parametrize("name", ["current", "anticipated"])
def test_calibrated_ou_constant_hits_table_value(name):
    p = preset(name)
    target = noise.ONE_QUBIT_INFIDELITY[name]
    val = mean_rotation_infidelity(CALIBRATED_C[name], p.phase_ou[0], p.intensity_ou[0])
    assert val == pytest.approx(target, rel=0.01)
    c = calibrate_ou_constant(target, p.phase_ou[0], p.intensity_ou[0])
    assert c == pytest.approx(CALIBRATED_C[name], rel=0.01)


def test_idle_dephasing_matches_t2(rng):
    p = NoiseParams(T1=math.inf, T2=0.5, leakage_mode="off")
    t, trials = 0.3, 20000
    acc = 0.0
    for _ in range(trials):
        s = PureState(1)
        apply_global_rotation(s, [0], math.pi / 2, math.pi / 2)
        idle_noise(s, [0], t, p, rng)
        acc += pauli_expectation(s, PauliString.from_str("X"))
    assert acc / trials == pytest.approx(math.exp(-t / 0.5), abs=3 / math.sqrt(trials))


def test_repump_clears_leakage(rng):
    p = preset("anticipated")
    cleared = 0
    for _ in range(2000):
        s = PureState(1, np.array([0, 1], dtype=complex))
        s.flags.set(0)
        repump(s, 0, 0.5, 2e-5, p, rng)
        cleared += not s.flags.leaked[0]
    assert cleared / 2000 == pytest.approx(0.75, abs=3 * math.sqrt(0.1875 / 2000))


@settings(max_examples=20, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-0.3, 0.3))
def test_faulty_rotation_is_unitary(dint, dphi):
    u = noise.faulty_rotation_matrix(math.pi / 2, 0.0, dint, dphi)
    np.testing.assert_allclose(u.conj().T @ u, np.eye(2), atol=1e-12)
