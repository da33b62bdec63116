import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trapqec import mschannel, qccd
from trapqec.colorcode.circuit import Circuit
from trapqec.colorcode.cycle import ORDER, encode, qec_cycle_flag
from trapqec.colorcode.readout import build_cat_readout, build_flag_readout, build_unflagged_readout
from trapqec.noise import NoiseParams, noiseless_params
from trapqec.statevec import PauliString, PureState, pauli_expectation

CUR = qccd.OpCosts.preset("current")
ANT = qccd.OpCosts.preset("anticipated")
US = 1e-6


def test_cost_presets_follow_table():
    assert CUR.duration("ms") == pytest.approx(40 * US)
    assert ANT.duration("ms") == pytest.approx(15 * US)
    assert CUR.duration("measure") == pytest.approx(400 * US)
    assert ANT.duration("measure") == pytest.approx(30 * US)
    assert CUR.quality("split") == 6 and ANT.quality("split") == 1
    assert ANT.quality("junction") is None
    assert CUR.duration("cpauli") == 0.0
    with pytest.raises(KeyError):
        qccd.OpCosts.preset("future")


def test_gate_on_ions_already_in_work_zone_is_cool_then_gate():
    layout = qccd.TrapLayout({"M1": [0, 1]}, {"c": "M1"})
    s = qccd.compile_circuit(Circuit(2).ms((0, 1)), layout, CUR)
    assert [r.kind for r in s.records] == ["cool", "ms"]
    assert s.makespan == pytest.approx(440 * US)


def test_gate_between_storage_zones():
    layout = qccd.TrapLayout({"S1": [0, 2], "S2": [1]}, {"c": "M1"})
    s = qccd.compile_circuit(Circuit(3).ms((0, 1)), layout, CUR)
    assert s.count("split") >= 1 and s.count("shuttle") >= 2
    assert s.count("merge") == 1 and s.count("cool") == 1 and s.count("ms") == 1
    # split 80 + two shuttles 5 + merge 80 + cool 400 + gate 40
    assert s.makespan == pytest.approx(610 * US)
    cool = next(r for r in s.records if r.kind == "cool")
    assert cool.nbar == pytest.approx(0.1 + 6 + 0.1 + 0.1 + 6)
    assert next(r for r in s.records if r.kind == "ms").nbar == pytest.approx(0.1)
    assert len(s.to_text().splitlines()) == len(s.records) + 1


def test_passing_an_occupied_zone_needs_rotation():
    layout = qccd.TrapLayout({"S3": [0], "S2": [1], "S1": [2]}, {"c": "M1"})
    s = qccd.compile_circuit(Circuit(3).ms((0, 2)), layout, CUR)
    assert s.count("rotate") == 1


@pytest.mark.parametrize("costs", [CUR, ANT], ids=["current", "anticipated"])
def test_readout_schedules_are_legal(costs):
    pol = qccd.Policy(return_home=True)
    for n, build in ((9, build_flag_readout), (9, build_unflagged_readout), (11, build_cat_readout)):
        layout = qccd.default_layout(n)
        for basis, p in ORDER:
            s = qccd.compile_circuit(build(p, basis, n), layout, costs, pol)
            qccd.check_schedule(s, layout)
            assert all(r.nbar <= 0.1 + 1e-12 for r in s.records if r.kind == "ms")


@pytest.mark.parametrize("costs", [CUR, ANT], ids=["current", "anticipated"])
def test_flag_round_is_shorter_than_cat_round(costs):
    pol = qccd.Policy(return_home=True)
    flag = sum(qccd.compile_circuit(build_flag_readout(p, b, 9), qccd.default_layout(9),
                                    costs, pol).makespan for b, p in ORDER)
    cat = 2 * sum(qccd.compile_circuit(build_cat_readout(p, b, 11), qccd.default_layout(11),
                                       costs, pol).makespan for b, p in ORDER)
    assert flag < cat


def test_duration_report_tiles_each_ion():
    layout = qccd.default_layout(9)
    s = qccd.compile_circuit(build_flag_readout(2, "Z", 9), layout, CUR)
    rep = qccd.duration_report(s)
    assert sum(rep["by_kind"].values()) == pytest.approx(rep["makespan"])
    for q, d in rep["per_qubit"].items():
        assert d["busy"] + d["idle"] == pytest.approx(rep["makespan"])


def test_idle_ion_dephases_at_t2():
    # ion 0 waits while ion 1 is measured; <X> of ion 0 decays as exp(-t/T2)
    t2 = 1e-3
    noise = NoiseParams(T1=math.inf, T2=t2, phase_ou=(0.1, 0.0), intensity_ou=(1e-3, 0.0),
                        spam=(0.0, 0.0), leakage_mode="off")
    layout = qccd.TrapLayout({"S1": [0], "M1": [1]}, {"c": "M1"})
    circ = Circuit(2).measure(1, "m").measure(1, "m2")
    s = qccd.compile_circuit(circ, layout, CUR)
    rng = np.random.default_rng(5)
    x0 = PauliString.from_ops(2, {0: "X"})
    trials, acc = 4000, 0.0
    for _ in range(trials):
        state = PureState(2, np.kron([1, 0], [1, 1]))
        qccd.execute(s, state, noise, qccd.IdealChannels(), "current", rng)
        acc += pauli_expectation(state, x0)
    assert acc / trials == pytest.approx(math.exp(-s.makespan / t2), abs=4 / math.sqrt(trials))


def test_noiseless_cycle_keeps_code_state():
    rng = np.random.default_rng(0)
    state = PureState(9)
    b = qccd.TrapBackend(state, noiseless_params(), CUR, qccd.IdealChannels(), rng)
    enc = encode(b)
    rep = qec_cycle_flag(b)
    assert enc.flag == 1 and rep.trigger is None
    total = sum(b.schedule(c).makespan for c in b.log)
    assert b.elapsed == pytest.approx(total)


def test_backend_is_deterministic_under_seed():
    def run(seed):
        b = qccd.TrapBackend(PureState(9), noiseless_params().replace(T2=1e-3, T1=1.0),
                             ANT, mschannel.ChannelBank(), np.random.default_rng(seed))
        encode(b)
        return [qec_cycle_flag(b).syndrome for _ in range(2)], b.state.amplitudes.copy()

    a, b = run(3), run(3)
    assert a[0] == b[0] and np.array_equal(a[1], b[1])


def test_shipped_error_channel_is_near_identity():
    ch = qccd._error_channel(mschannel.ChannelBank().get("anticipated", 0.1))
    e0 = ch.ops[0]
    assert abs(np.trace(e0)) / 4 > 0.99
    assert ch.completeness_error() < 1e-9


def test_leaked_operand_skips_gate():
    layout = qccd.TrapLayout({"M1": [0, 1]}, {"c": "M1"})
    s = qccd.compile_circuit(Circuit(2).ms((0, 1)), layout, CUR)
    state = PureState(2)
    state.flags.set(0)
    rep = qccd.execute(s, state, noiseless_params(), qccd.IdealChannels(), "current",
                       np.random.default_rng(0))
    assert rep.leaked_skips == 1
    assert state.fidelity(PureState(2)) == pytest.approx(1.0)


def test_policies_and_validation():
    layout = qccd.TrapLayout({"M1": [0, 1]}, {"c": "M1"})
    s = qccd.compile_circuit(Circuit(2).ms((0, 1)), layout, CUR, qccd.Policy(repump="gate"))
    assert [r.kind for r in s.records] == ["repump", "cool", "ms"]
    with pytest.raises(ValueError):
        qccd.Policy(repump="sometimes")
    with pytest.raises(ValueError):
        qccd.compile_circuit(Circuit(3).ms((0, 2)), layout, CUR)
    with pytest.raises(ValueError):
        qccd.compile_circuit(Circuit(2).ms((0, 1)), qccd.TrapLayout({"S1": [0, 1]}), CUR)
    with pytest.raises(ValueError):
        qccd.TrapLayout({"S1": [0], "S2": [0]})


ops = st.lists(st.tuples(st.sampled_from(["ms", "r", "measure", "reset"]),
                         st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=12)


@settings(max_examples=40, deadline=None)
@given(ops, st.permutations(range(5)), st.booleans())
def test_random_circuits_compile_legally(op_list, perm, home):
    c = Circuit(5)
    for i, (kind, a, b) in enumerate(op_list):
        if kind == "ms" and a != b:
            c.ms((a, b))
        elif kind == "r":
            c.r(a, math.pi / 2, 0.0, merge=False)
        elif kind == "measure":
            c.measure(a, f"k{i}")
        else:
            c.reset(a)
    layout = qccd.TrapLayout({"S1": list(perm[:2]), "S2": [perm[2]], "S3": list(perm[3:])},
                             {"c": "M1"})
    s = qccd.compile_circuit(c, layout, CUR, qccd.Policy(return_home=home))
    qccd.check_schedule(s, layout)
    assert s.count("ms") == c.count("ms")
