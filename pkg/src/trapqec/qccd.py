"""Segmented-trap (QCCD) compilation and noisy execution.

``compile_circuit`` lowers a colorcode ``Circuit`` to a sequential ``Schedule``
of elementary trap operations on one arm with zones S1, M1, S2, M2, S3. Every
laser operation happens in M1. Operands are split off their storage crystal,
shuttled zone by zone, and merged into the M1 crystal. Each MS gate is
preceded by sympathetic cooling. ``Executor`` then replays a schedule on a
state vector with the noise models of ``trapqec.noise`` and MS channels from
``trapqec.mschannel``, and ``TrapBackend`` exposes it through the colorcode
``Backend`` interface.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import mschannel
from .colorcode.backend import Backend, _cpauli, _parity
from .colorcode.circuit import Circuit
from .noise import (NoiseParams, OUProcess, faulty_global_rotation, faulty_z_rotation,
                    idle_noise, ou_step, repump as repump_ion, spam_flip)
from .statevec import (PauliString, PureState, apply_ms, apply_pauli, measure_z, ms_matrix,
                       reset)

ZONES = ("S1", "M1", "S2", "M2", "S3")
MANIPULATION = ("M1", "M2")
WORK_ZONE = "M1"
M1_CAPACITY = 2

TRANSPORT = ("split", "shuttle", "merge", "rotate")
QUANTUM = ("r", "rz", "ms", "measure", "reset", "repump")

# kind -> Table I operation
OP_CODE = {"ms": "o1", "ms5": "o2", "r": "o3", "rz": "o3", "measure": "o4", "reset": "o5",
           "cool": "o6", "shuttle": "o7", "split": "o8", "merge": "o8", "rotate": "o9",
           "junction": "o10", "repump": "o11"}

TABLE_I = {
    "current": {
        "o1": (40e-6, 1e-2), "o2": (60e-6, 5e-2), "o3": (5e-6, 5e-5), "o4": (400e-6, 1e-3),
        "o5": (50e-6, 5e-3), "o6": (400e-6, 0.1), "o7": (5e-6, 0.1), "o8": (80e-6, 6.0),
        "o9": (42e-6, 0.3), "o10": (100e-6, 3.0), "o11": (60e-6, 5e-3),
    },
    "anticipated": {
        "o1": (15e-6, 2e-4), "o2": (15e-6, 1e-3), "o3": (1e-6, 1e-5), "o4": (30e-6, 1e-4),
        "o5": (10e-6, 5e-3), "o6": (100e-6, 0.1), "o7": (5e-6, 0.1), "o8": (30e-6, 1.0),
        "o9": (20e-6, 0.2), "o10": (200e-6, None), "o11": (20e-6, 5e-3),
    },
}
COOLED_NBAR = 0.1


@dataclass(frozen=True)
class OpCosts:
    """Duration (s) and quality of operations o1-o11.

    Quality is an infidelity for o1-o5 and o11 and a mean phonon number bound
    for the transport and cooling operations o6-o10 (None where not given).
    """

    name: str
    durations: tuple
    qualities: tuple

    def __post_init__(self):
        if any(d <= 0 for d in self.durations):
            raise ValueError("all durations must be positive")
        if len(self.durations) != 11 or len(self.qualities) != 11:
            raise ValueError("costs must list o1..o11")

    @classmethod
    def preset(cls, name: str) -> "OpCosts":
        if name not in TABLE_I:
            raise KeyError(f"unknown cost preset {name!r}")
        rows = [TABLE_I[name][f"o{i}"] for i in range(1, 12)]
        return cls(name, tuple(r[0] for r in rows), tuple(r[1] for r in rows))

    def duration(self, kind: str) -> float:
        if kind == "cpauli":
            return 0.0
        return self.durations[int(OP_CODE[kind][1:]) - 1]

    def quality(self, kind: str):
        return self.qualities[int(OP_CODE[kind][1:]) - 1]


# ---------------------------------------------------------------------------
# layout


@dataclass
class TrapLayout:
    """Home crystals of one trap arm.

    ``zones`` maps each zone name to its ordered list of qubit ions. Coolant
    ions are listed separately with the zone they are parked in; they are not
    part of the movable qubit crystals.
    """

    zones: dict
    coolants: dict = field(default_factory=dict)

    def __post_init__(self):
        self.zones = {z: list(self.zones.get(z, [])) for z in ZONES}
        seen = [q for z in ZONES for q in self.zones[z]]
        if len(seen) != len(set(seen)):
            raise ValueError("an ion occupies more than one zone")
        for c, z in self.coolants.items():
            if z not in ZONES:
                raise ValueError(f"coolant {c} in unknown zone {z}")

    @property
    def qubits(self) -> list:
        return sorted(q for z in ZONES for q in self.zones[z])

    def home(self, q: int) -> str:
        for z in ZONES:
            if q in self.zones[z]:
                return z
        raise KeyError(f"ion {q} is not in the layout")

    def species(self, ion) -> str:
        return "coolant" if ion in self.coolants else "qubit"

    def can_cool(self, zone: str) -> bool:
        return zone in self.coolants.values()

    def key(self) -> tuple:
        return tuple(tuple(self.zones[z]) for z in ZONES) + (tuple(sorted(self.coolants.items())),)


def default_layout(n_qubits: int) -> TrapLayout:
    """Data ions 0-3 in S1 and 4-6 in S3, ancillas in S2, coolant(s) parked in M1.

    The flag register (9 ions) gets one coolant and the cat register (11) two.
    """
    if n_qubits < 7:
        return TrapLayout({"S1": list(range(n_qubits))}, {"c1": "M1"})
    coolants = {"c1": "M1"} if n_qubits <= 9 else {"c1": "M1", "c2": "M1"}
    return TrapLayout({"S1": [0, 1, 2, 3], "S3": [4, 5, 6], "S2": list(range(7, n_qubits))},
                      coolants)


@dataclass(frozen=True)
class Policy:
    """Compilation switches.

    ``repump`` is "none", "cycle" (repump on request from the QEC cycle) or
    "gate" (repump both operands before every MS gate). ``return_home`` moves
    every ion back to its home crystal after the circuit.
    """

    repump: str = "none"
    return_home: bool = False

    def __post_init__(self):
        if self.repump not in ("none", "cycle", "gate"):
            raise ValueError(f"unknown repump policy {self.repump!r}")


# ---------------------------------------------------------------------------
# schedules


@dataclass
class Record:
    start: float
    duration: float
    kind: str
    qubits: tuple
    zone: str
    op_index: int = -1
    nbar: float = 0.0

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass
class Schedule:
    n_qubits: int
    records: list = field(default_factory=list)
    circuit: Circuit | None = None

    @property
    def makespan(self) -> float:
        return self.records[-1].end if self.records else 0.0

    def count(self, kind: str) -> int:
        return sum(r.kind == kind for r in self.records)

    def busy(self, q: int) -> list:
        return [r for r in self.records if q in r.qubits and r.duration > 0]

    def idle_intervals(self, q: int) -> list:
        """Gaps in the timeline of ion ``q`` as (start, duration)."""
        out, t = [], 0.0
        for r in self.busy(q):
            if r.start > t:
                out.append((t, r.start - t))
            t = r.end
        if self.makespan > t:
            out.append((t, self.makespan - t))
        return out

    def to_text(self) -> str:
        lines = ["# time_us  duration_us  op  operands  zone  nbar"]
        for r in self.records:
            ops = ",".join(str(q) for q in r.qubits) or "-"
            lines.append(f"{r.start * 1e6:10.3f} {r.duration * 1e6:9.3f}  {r.kind:<8} {ops:<12} "
                         f"{r.zone:<3} {r.nbar:.3g}")
        return "\n".join(lines) + "\n"


def duration_report(schedule: Schedule) -> dict:
    """Makespan, time per operation kind, and per-ion busy/idle totals."""
    by_kind = defaultdict(float)
    for r in schedule.records:
        by_kind[r.kind] += r.duration
    per_qubit = {}
    for q in range(schedule.n_qubits):
        busy = sum(r.duration for r in schedule.busy(q))
        idle = sum(d for _, d in schedule.idle_intervals(q))
        per_qubit[q] = {"busy": busy, "idle": idle}
    return {"makespan": schedule.makespan, "by_kind": dict(by_kind), "per_qubit": per_qubit}


class _Builder:
    def __init__(self, layout: TrapLayout, costs: OpCosts, n_qubits: int):
        self.layout = layout
        self.costs = costs
        self.crystals = {z: list(layout.zones[z]) for z in ZONES}
        self.pos = {q: z for z in ZONES for q in self.crystals[z]}
        self.sched = Schedule(n_qubits)
        self.t = 0.0
        self.nbar = COOLED_NBAR
        self.lru = []

    def emit(self, kind, qubits, zone, op_index=-1):
        d = self.costs.duration(kind)
        self.sched.records.append(Record(self.t, d, kind, tuple(qubits), zone, op_index, self.nbar))
        self.t += d
        if kind in TRANSPORT:
            self.nbar += self.costs.quality(kind) or 0.0
        elif kind == "cool":
            self.nbar = self.costs.quality("cool")

    def move(self, q: int, dest: str) -> None:
        src = self.pos[q]
        if src == dest:
            return
        if len(self.crystals[src]) > 1:
            self.emit("split", [q], src)
        self.crystals[src].remove(q)
        i, j = ZONES.index(src), ZONES.index(dest)
        step = 1 if j > i else -1
        for k in range(i + step, j + step, step):
            zone = ZONES[k]
            self.emit("shuttle", [q], zone)
            if zone != dest and self.crystals[zone]:
                # ions cannot pass in a linear segment: swap through by rotation
                self.emit("rotate", [q] + self.crystals[zone], zone)
        if self.crystals[dest]:
            self.emit("merge", [q] + self.crystals[dest], dest)
        self.crystals[dest].append(q)
        self.pos[q] = dest

    def gather(self, operands) -> None:
        """Bring ``operands`` into the work zone, evicting others as needed."""
        operands = list(operands)
        work = self.crystals[WORK_ZONE]
        need = [q for q in operands if self.pos[q] != WORK_ZONE]
        free = M1_CAPACITY - len(work)
        if len(operands) > 1:
            evict = [q for q in work if q not in operands]
        else:
            evict = [q for q in self.lru if q in work and q not in operands][:max(0, len(need) - free)]
        for q in evict:
            self.move(q, self.layout.home(q))
        for q in need:
            self.move(q, WORK_ZONE)
        for q in operands:
            if q in self.lru:
                self.lru.remove(q)
            self.lru.append(q)

    def home_all(self) -> None:
        for z in ZONES:
            for q in list(self.crystals[z]):
                if self.layout.home(q) != z:
                    self.move(q, self.layout.home(q))
        # restore home ordering inside each crystal
        for z in ZONES:
            if self.crystals[z] != self.layout.zones[z] and len(self.crystals[z]) > 1:
                self.emit("rotate", self.crystals[z], z)
                self.crystals[z] = list(self.layout.zones[z])


def compile_circuit(circuit: Circuit, layout: TrapLayout, costs: OpCosts,
                    policy: Policy = Policy()) -> Schedule:
    """Greedy in-order lowering of ``circuit`` to timed trap operations."""
    missing = set(range(circuit.n_qubits)) - set(layout.qubits)
    if missing:
        raise ValueError(f"circuit ions {sorted(missing)} are not in the layout")
    if not layout.can_cool(WORK_ZONE):
        raise ValueError("no coolant ion in the work zone")
    b = _Builder(layout, costs, circuit.n_qubits)
    for i, op in enumerate(circuit.ops):
        if op.kind == "cpauli":
            b.emit("cpauli", op.qubits, b.pos[op.qubits[0]], i)
            continue
        if op.kind == "ms" and len(op.qubits) != 2:
            raise ValueError("only two-ion MS gates can be scheduled")
        b.gather(op.qubits)
        if op.kind == "ms":
            if policy.repump == "gate":
                b.emit("repump", op.qubits, WORK_ZONE)
            b.emit("cool", b.crystals[WORK_ZONE], WORK_ZONE)
        b.emit(op.kind, op.qubits, WORK_ZONE, i)
    if policy.return_home:
        b.home_all()
    b.sched.circuit = circuit
    return b.sched


def repump_schedule(qubits, layout: TrapLayout, costs: OpCosts, n_qubits: int) -> Schedule:
    """One o11 pulse on the listed ions wherever they are stored (global repump beam)."""
    s = Schedule(n_qubits)
    s.records.append(Record(0.0, costs.duration("repump"), "repump", tuple(qubits), "all"))
    return s


def check_schedule(schedule: Schedule, layout: TrapLayout) -> None:
    """Legality and tiling checks; raises AssertionError on violation."""
    t = 0.0
    for r in schedule.records:
        assert r.start >= t - 1e-15, "overlapping records"
        t = r.end
        if r.kind in ("r", "rz", "ms", "measure", "reset"):
            assert r.zone in MANIPULATION, f"{r.kind} outside a manipulation zone"
    for i, r in enumerate(schedule.records):
        if r.kind == "ms":
            assert i > 0 and any(x.kind == "cool" for x in schedule.records[max(0, i - 2):i]), \
                "MS without preceding cooling"
    for q in range(schedule.n_qubits):
        busy = sum(r.duration for r in schedule.busy(q))
        idle = sum(d for _, d in schedule.idle_intervals(q))
        assert math.isclose(busy + idle, schedule.makespan, rel_tol=1e-12, abs_tol=1e-15)


# ---------------------------------------------------------------------------
# execution


class IdealChannels:
    """Channel source for noiseless runs: every MS gate is exact."""

    def get(self, preset, nbar):
        return mschannel.KrausChannel.identity_like(ms_matrix(2, math.pi / 2, 0.0))


_MS_REF = ms_matrix(2, math.pi / 2, 0.0)


def _error_channel(channel: mschannel.KrausChannel) -> mschannel.KrausChannel:
    # Kraus operators relative to the ideal gate: K_n = E_n U  ->  E_n
    return mschannel.KrausChannel(channel.probs, channel.ops @ _MS_REF.conj().T, channel.meta)


def _rz2(phi: float) -> np.ndarray:
    rz = np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)])
    return np.kron(rz, rz)


@dataclass
class ExecutionReport:
    outcomes: dict = field(default_factory=dict)
    elapsed: float = 0.0
    ms_branches: list = field(default_factory=list)
    leaked_skips: int = 0


class Executor:
    """Replays schedules on a state vector, keeping the clock and the noise state.

    Idle noise is accumulated per ion and applied right before the ion's next
    quantum operation (and on ``flush``). Laser OU processes are advanced by the
    wall-clock gap between successive pulses.
    """

    def __init__(self, state: PureState, noise: NoiseParams, channels, preset: str, rng):
        self.state = state
        self.noise = noise
        self.channels = channels
        self.preset = preset
        self.rng = rng
        self.time = 0.0
        self.pending = np.zeros(state.n_qubits)
        self.intensity = OUProcess(*noise.intensity_ou).draw_stationary(rng)
        self.phase = OUProcess(*noise.phase_ou).draw_stationary(rng)
        self.last_pulse = 0.0
        self._err_cache = {}

    def _settle(self, qubits) -> None:
        for q in qubits:
            if self.pending[q] > 0:
                idle_noise(self.state, [q], self.pending[q], self.noise, self.rng)
                self.pending[q] = 0.0

    def flush(self) -> None:
        self._settle(range(self.state.n_qubits))

    def idle(self, duration: float) -> None:
        self.pending += duration
        self.time += duration

    def _advance_lasers(self, start: float) -> None:
        gap = start - self.last_pulse
        if gap > 0:
            ou_step(self.intensity, gap, self.rng)
            ou_step(self.phase, gap, self.rng)

    def _ms_error(self, nbar: float) -> mschannel.KrausChannel:
        bucket = mschannel.nbar_bucket(nbar)
        if bucket not in self._err_cache:
            self._err_cache[bucket] = _error_channel(self.channels.get(self.preset, nbar))
        return self._err_cache[bucket]

    def execute(self, schedule: Schedule, report: ExecutionReport | None = None) -> ExecutionReport:
        rep = report or ExecutionReport()
        ops = schedule.circuit.ops if schedule.circuit is not None else []
        st = self.state
        t0 = self.time
        busy_until = np.zeros(st.n_qubits)
        for rec in schedule.records:
            start = t0 + rec.start
            quantum = rec.kind in QUANTUM
            if quantum:
                # idle time up to this record, then the record's own noise
                for q in rec.qubits:
                    self.pending[q] += start - (t0 + busy_until[q])
                    busy_until[q] = rec.start + rec.duration
                self._settle(rec.qubits)
            op = ops[rec.op_index] if rec.op_index >= 0 else None
            k = rec.kind
            if k == "r":
                self._advance_lasers(start)
                faulty_global_rotation(st, op.qubits, op.theta, op.phi, self.intensity,
                                       self.phase, rec.duration, self.rng)
                self.last_pulse = start + rec.duration
            elif k == "rz":
                self._advance_lasers(start)
                ou_step(self.phase, rec.duration, self.rng)
                faulty_z_rotation(st, op.qubits[0], op.theta, self.intensity, rec.duration, self.rng)
                self.last_pulse = start + rec.duration
            elif k == "ms":
                self._apply_ms(op, rec.nbar, rep)
            elif k == "measure":
                m = measure_z(st, op.qubits[0], self.rng)
                rep.outcomes[op.key] = spam_flip(m, self.noise.spam[1], self.rng)
            elif k == "reset":
                reset(st, op.qubits[0], op.value, self.noise.spam[0], self.rng)
            elif k == "repump":
                # an unleaked ion only idles during the pulse, inside repump_ion
                for q in rec.qubits:
                    repump_ion(st, q, self.noise.repump_eps, rec.duration, self.noise, self.rng)
            elif k == "cpauli":
                if _parity(rep.outcomes, op.condition) == -1:
                    apply_pauli(st, _cpauli(op, st.n_qubits))
        span = schedule.makespan
        for q in range(st.n_qubits):
            self.pending[q] += span - busy_until[q]
        self.time = t0 + span
        rep.elapsed += span
        return rep

    def _apply_ms(self, op, nbar: float, rep: ExecutionReport) -> None:
        st = self.state
        if any(st.flags[q] for q in op.qubits):
            rep.leaked_skips += 1
            return
        apply_ms(st, op.qubits, op.theta, op.phi)
        err = self._ms_error(nbar)
        if len(err) == 1 and np.allclose(err.ops[0], np.eye(4)):
            rep.ms_branches.append(0)
            return
        if op.phi != 0.0:
            v = _rz2(op.phi)
            err = mschannel.KrausChannel(err.probs, v @ err.ops @ v.conj().T)
        rep.ms_branches.append(mschannel.sample_kraus(err, st, op.qubits, self.rng))


def execute(schedule: Schedule, state: PureState, noise: NoiseParams, channels, preset: str,
            rng) -> ExecutionReport:
    """Run one schedule from time zero and apply all remaining idle noise."""
    ex = Executor(state, noise, channels, preset, rng)
    rep = ex.execute(schedule)
    ex.flush()
    return rep


_SCHEDULES: dict = {}


def cached_schedule(circuit: Circuit, layout: TrapLayout, costs: OpCosts,
                    policy: Policy = Policy()) -> Schedule:
    """``compile_circuit`` memoized on the circuit object and compilation inputs."""
    key = (id(circuit), layout.key(), costs, policy)
    hit = _SCHEDULES.get(key)
    if hit is None or hit[0] is not circuit:
        hit = (circuit, compile_circuit(circuit, layout, costs, policy))
        _SCHEDULES[key] = hit
    return hit[1]


class TrapBackend(Backend):
    """colorcode Backend that compiles each circuit and executes it with noise.

    Circuits start and end with every ion in its home crystal, so compiled
    schedules are cached per circuit object.
    """

    def __init__(self, state: PureState, noise: NoiseParams, costs: OpCosts, channels, rng,
                 layout: TrapLayout | None = None, policy: Policy = Policy()):
        self.state = state
        self.n_qubits = state.n_qubits
        self.layout = layout or default_layout(state.n_qubits)
        self.costs = costs
        self.policy = Policy(policy.repump, True)
        self.exec = Executor(state, noise, channels, costs.name, rng)
        self.log = []

    def schedule(self, circuit: Circuit) -> Schedule:
        return cached_schedule(circuit, self.layout, self.costs, self.policy)

    def run(self, circuit: Circuit) -> dict:
        if circuit.n_qubits != self.n_qubits:
            raise ValueError("circuit register does not match the state")
        self.log.append(circuit)
        return self.exec.execute(self.schedule(circuit)).outcomes

    def apply_pauli(self, p: PauliString) -> None:
        apply_pauli(self.state, p.extend(self.n_qubits) if p.n < self.n_qubits else p)

    def repump(self, qubits) -> None:
        if self.policy.repump == "cycle":
            self.exec.execute(repump_schedule(list(qubits), self.layout, self.costs, self.n_qubits))

    def idle(self, duration: float) -> None:
        self.exec.idle(duration)

    def flush(self) -> None:
        self.exec.flush()

    @property
    def elapsed(self) -> float:
        return self.exec.time


__all__ = ["ZONES", "TABLE_I", "OpCosts", "TrapLayout", "default_layout", "Policy", "Record",
           "Schedule", "compile_circuit", "cached_schedule", "repump_schedule", "check_schedule", "duration_report",
           "Executor", "ExecutionReport", "execute", "TrapBackend", "IdealChannels"]
