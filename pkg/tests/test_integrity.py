import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trapqec import integrity as I
from trapqec.noise import NoiseParams, noiseless_params, preset
from trapqec.colorcode.code import PLAQUETTES

DEPHASING = NoiseParams(T1=math.inf, T2=0.5, phase_ou=(0.1, 0.0), intensity_ou=(1e-3, 0.0),
                        spam=(0.0, 0.0), leakage_mode="off")


def _random_rho(rng, d=4):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def test_trace_distance_basic_values():
    rho = _random_rho(np.random.default_rng(0))
    assert I.trace_distance(rho, rho) == pytest.approx(0.0, abs=1e-14)
    assert I.trace_distance(np.diag([1, 0]), np.diag([0, 1])) == pytest.approx(1.0)


def test_trace_distance_matches_eigenvalue_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = _random_rho(rng), _random_rho(rng)
        oracle = 0.5 * np.abs(np.linalg.eigvalsh(a - b)).sum()
        assert I.trace_distance(a, b) == pytest.approx(oracle, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_trace_distance_metric_properties(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (_random_rho(rng) for _ in range(3))
    u, _ = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    d = I.trace_distance(a, b)
    assert d == pytest.approx(I.trace_distance(b, a), abs=1e-12)
    assert d == pytest.approx(I.trace_distance(u @ a @ u.conj().T, u @ b @ u.conj().T), abs=1e-10)
    assert d <= I.trace_distance(a, c) + I.trace_distance(c, b) + 1e-12
    assert 0.0 <= d <= 1.0 + 1e-12


def test_bare_closed_form_limits():
    full = preset("anticipated")
    assert I.bare_memory_integrity(0.0, full).R == pytest.approx(1.0)
    for tau in (0.05, 0.3, 1.0):
        assert I.bare_memory_integrity(tau, DEPHASING).R == pytest.approx(math.exp(-tau / 0.5))


def test_bare_closed_form_at_t1():
    # z basis loses the |1> population, x/y lose coherence at 1/T2
    p = preset("current")
    t1 = p.T1
    e = I.bare_memory_integrity(t1, p)
    assert 2 * e.p_g["z"] - 1 == pytest.approx(math.exp(-1.0))
    assert 2 * e.p_g["x"] - 1 == pytest.approx(math.exp(-t1 / p.T2))
    assert e.R == pytest.approx(min(math.exp(-1.0), math.exp(-t1 / p.T2)))


@pytest.mark.parametrize("mode", ["full", "symmetric", "damping-only"])
def test_bare_monte_carlo_matches_closed_form(mode):
    params = preset("anticipated").replace(leakage_mode=mode)
    spec = I.MemoryChannelSpec(encoding="bare", tau=params.T1, noise=params, leakage=mode)
    mc = I.estimate_integrity(spec, 20_000, 11)
    exact = I.bare_memory_integrity(params.T1, params)
    for b in I.BASES:
        assert 2 * mc.p_g[b] - 1 == pytest.approx(2 * exact.p_g[b] - 1,
                                                  abs=3 * mc.stderr_basis[b] + 1e-3)


def test_bare_dephasing_monte_carlo():
    spec = I.MemoryChannelSpec(encoding="bare", tau=0.2, noise=DEPHASING)
    e = I.estimate_integrity(spec, 10_000, 4)
    assert e.R == pytest.approx(math.exp(-0.2 / 0.5), abs=3 * e.stderr)


def test_stderr_scales_with_trials():
    spec = I.MemoryChannelSpec(encoding="bare", tau=0.3, noise=DEPHASING)
    a = I.estimate_integrity(spec, 1000, 2)
    b = I.estimate_integrity(spec, 4000, 2)
    assert a.stderr / b.stderr == pytest.approx(2.0, rel=0.2)


def test_reported_r_is_basis_minimum():
    spec = I.MemoryChannelSpec(encoding="bare", tau=0.5, noise=preset("anticipated"))
    e = I.estimate_integrity(spec, 400, 0)
    assert all(e.R <= 2 * p - 1 + 1e-15 for p in e.p_g.values())
    assert -1 <= e.R <= 1


def test_noiseless_encoded_memory_is_perfect():
    for m, scheme in ((0, "flag"), (1, "flag"), (1, "cat")):
        spec = I.MemoryChannelSpec(rounds=m, scheme=scheme, noise=noiseless_params(),
                                   ideal_ms=True)
        spec = spec.replace(tau=I.tau_min(spec))
        e = I.estimate_integrity(spec, 100, 0)
        assert e.R == 1.0 and e.stderr > 0


def test_tau_below_minimum_is_undefined():
    spec = I.MemoryChannelSpec(rounds=1, tau=1e-4)
    e = I.estimate_integrity(spec, 100, 0)
    assert not e.defined and math.isnan(e.R)
    assert e.tau_min == pytest.approx(I.round_duration("flag", "anticipated", "cycle"))


def test_flag_round_shorter_than_cat_round():
    for p in ("current", "anticipated"):
        assert I.round_duration("flag", p) < I.round_duration("cat", p)
    assert I.round_duration("flag", "anticipated", "cycle") > I.round_duration("flag", "anticipated")


def test_transversal_decoder_fixes_single_flips():
    zero = [1] * 7
    # a Z-type stabilizer pattern is a codeword of the classical code
    word = [-1 if q + 1 in PLAQUETTES[0] else 1 for q in range(7)]
    for base, value in ((zero, 1), (word, 1), ([-1] * 7, -1)):
        assert I.decode_transversal(base) == value
        for q in range(7):
            bits = list(base)
            bits[q] *= -1
            assert I.decode_transversal(bits) == value


def test_estimates_are_deterministic_and_worker_independent():
    spec = I.MemoryChannelSpec(encoding="bare", tau=0.4, noise=preset("current"))
    a = I.estimate_integrity(spec, 300, 9)
    b = I.estimate_integrity(spec, 300, 9, workers=2)
    assert a.p_g == b.p_g
    c = I.estimate_integrity(spec, 300, 10)
    assert c.p_g != a.p_g


def test_csv_rows():
    spec = I.MemoryChannelSpec(encoding="bare", tau=0.1, noise=DEPHASING)
    e = I.estimate_integrity(spec, 100, 1)
    rows = e.rows(spec, 1)
    assert [r["basis"] for r in rows] == ["x", "y", "z", "min"]
    assert all(set(r) == set(I.CSV_COLUMNS) for r in rows)
    assert rows[-1]["R"] == e.R


def test_spec_validation():
    with pytest.raises(ValueError):
        I.MemoryChannelSpec(scheme="surface")
    with pytest.raises(ValueError):
        I.MemoryChannelSpec(repump="always")
    with pytest.raises(ValueError):
        I.estimate_integrity(I.MemoryChannelSpec(), 10, 0)


def test_fit_exponent_recovers_power():
    t = np.linspace(0.02, 0.4, 8)
    k2, r0, a = I.fit_exponent(t, 0.98 - 1.5 * t**2)
    k1, _, _ = I.fit_exponent(t, 1.0 - 0.9 * t)
    assert k2 == pytest.approx(2.0, abs=0.05) and r0 == pytest.approx(0.98, abs=1e-3)
    assert k1 == pytest.approx(1.0, abs=0.05)


def _curve(values, se=0.01):
    return [I.IntegrityEstimate(v, se, 1000, tau=0.1 * (i + 1)) for i, v in enumerate(values)]


def test_milestones_identical_curves_all_false():
    c = _curve([0.9, 0.8, 0.7])
    v = I.milestone_check({0: c, 1: c, 2: c, "bare": c})
    assert not any(x.holds for x in v.values())


def test_milestones_witnesses():
    bare = _curve([0.95, 0.8, 0.6])
    m0 = _curve([0.97, 0.75, 0.5])
    m1 = _curve([0.96, 0.85, 0.6])
    m2 = _curve([0.90, 0.86, 0.7])
    v = I.milestone_check({0: m0, 1: m1, 2: m2, "bare": bare})
    assert v["M1"].holds and v["M1"].witness == (1, pytest.approx(0.2))
    assert v["M2"].holds and v["M2"].witness == (2, pytest.approx(0.3))
    assert v["M3"].holds and v["M3"].window == (pytest.approx(0.2), pytest.approx(0.3))
    assert not v["M4"].holds and v["M4"].witness == pytest.approx(0.1)
    v = I.milestone_check({1: _curve([0.999, 0.9, 0.8]), "bare": bare})
    assert v["M4"].holds
