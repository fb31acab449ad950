"""Deterministic discrete-event simulation of the asynchronous block update
law, with communication-cycle tracking and contraction-envelope checks.

One agent owns each block. Per tick, in fixed order: (a) each agent with an
update event applies the projected gradient step to its own block of its
local copy of the global state; (b) each ordered pair with a transmit event
enqueues the sender's current own-block value; (c) every message due this
tick is delivered, overwriting the receiver's held copy of the sender's
block (last delivered wins); (d) the cycle tracker advances. Any fixed
intra-tick order is one admissible asynchronous schedule; fixing it makes
runs reproducible.

Randomness comes from one master seed split into independent per-agent and
per-pair substreams (see ``substream``), so growing the network never
perturbs existing agents' schedules. Update and transmit events are
Bernoulli per tick, realized by sampling geometric inter-event gaps.
"""
from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from queue import Empty, SimpleQueue
from typing import NamedTuple

import numpy as np

from .blocks import BlockVector, block_max_norm_array
from .qp import QuadraticProgram, Regularization, objective, project_block
from .rates import BlockRates, compute_rates

TRACE_COLUMNS = ("tick", "cycles", "max_block_error", "objective", "envelope")


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, key).

    Splitting function: PCG64 seeded by SeedSequence(seed, spawn_key=key).
    Keys in use: (0, i) agent update events; (1, j, i) transmit events for
    the ordered pair j -> i; (2, j, i) that pair's delay draws; (3, i)
    agent i's draws in concurrent mode.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


# --- delay distributions ----------------------------------------------------


class ZeroDelay:
    """Messages arrive the tick after they are sent."""

    def sample(self, gen) -> int:
        return 0

    def to_json(self):
        return {"type": "zero"}


class FixedDelay:
    def __init__(self, ticks: int):
        if ticks < 0:
            raise ValueError("delay must be nonnegative")
        self.ticks = int(ticks)

    def sample(self, gen) -> int:
        return self.ticks

    def to_json(self):
        return {"type": "fixed", "ticks": self.ticks}


class GeometricDelay:
    """Geometric extra delay on {0, 1, 2, ...} with success probability p;
    always finite since p > 0."""

    def __init__(self, p: float):
        if not 0.0 < p <= 1.0:
            raise ValueError("delay probability must lie in (0, 1]")
        self.p = float(p)

    def sample(self, gen) -> int:
        return int(gen.geometric(self.p)) - 1

    def to_json(self):
        return {"type": "geometric", "p": self.p}


def delay_from_json(obj) -> ZeroDelay | FixedDelay | GeometricDelay:
    kind = obj.get("type")
    if kind == "zero":
        return ZeroDelay()
    if kind == "fixed":
        return FixedDelay(obj["ticks"])
    if kind == "geometric":
        return GeometricDelay(obj["p"])
    raise ValueError(f"unknown delay type: {kind!r}")


@dataclass(frozen=True)
class AsynchronyModel:
    """Stochastic schedule: per-tick update and transmit probabilities, a
    message delay distribution, the master seed, and the horizon."""

    p_update: float = 1.0
    p_transmit: float = 1.0
    delay: ZeroDelay | FixedDelay | GeometricDelay = field(default_factory=ZeroDelay)
    seed: int = 0
    max_ticks: int = 1000

    def __post_init__(self):
        if not 0.0 < self.p_update <= 1.0:
            raise ValueError("p_update must lie in (0, 1]: agents may never stop updating")
        if not 0.0 < self.p_transmit <= 1.0:
            raise ValueError("p_transmit must lie in (0, 1]")
        if self.max_ticks < 0:
            raise ValueError("max_ticks must be nonnegative")

    def to_json(self):
        return {
            "p_update": self.p_update,
            "p_transmit": self.p_transmit,
            "delay": self.delay.to_json(),
            "seed": self.seed,
            "max_ticks": self.max_ticks,
        }


@dataclass
class AgentState:
    """Snapshot of one agent: its local copy of the global state, its own
    parameters, and the tick of its last own-block update."""

    id: int
    x: np.ndarray
    gamma: float
    alpha: float
    last_self_update_time: int


class Message(NamedTuple):
    sender: int
    payload: np.ndarray
    computed_at: int   # tick at which the payload value was produced
    deliver_at: int    # always >= send tick + 1


class CycleTracker:
    """Counts completed communication cycles.

    A cycle completes once every agent has updated and, for every ordered
    pair (j, i), agent i has received from j a value computed at or after
    j's first update in the current cycle. Deliveries of pre-update values
    do not count, which keeps the count conservative and the geometric
    envelope sound.
    """

    def __init__(self, num_agents: int):
        self.n = num_agents
        self.cycles = 0
        self._updated = np.zeros(num_agents, dtype=bool)
        self._first_update_tick = np.full(num_agents, -1, dtype=np.int64)
        self._delivered = np.zeros((num_agents, num_agents), dtype=bool)
        self._updates_seen = 0
        self._deliveries_seen = 0
        self._deliveries_needed = num_agents * (num_agents - 1)

    def on_update(self, i: int, tick: int) -> None:
        if not self._updated[i]:
            self._updated[i] = True
            self._first_update_tick[i] = tick
            self._updates_seen += 1

    def on_delivery(self, sender: int, receiver: int, computed_at: int) -> None:
        if (
            self._updated[sender]
            and computed_at >= self._first_update_tick[sender]
            and not self._delivered[sender, receiver]
        ):
            self._delivered[sender, receiver] = True
            self._deliveries_seen += 1

    def end_tick(self) -> None:
        if (
            self._updates_seen == self.n
            and self._deliveries_seen == self._deliveries_needed
        ):
            self.cycles += 1
            self._updated[:] = False
            self._first_update_tick[:] = -1
            self._delivered[:, :] = False
            self._updates_seen = 0
            self._deliveries_seen = 0


class _EventStream:
    """Ticks of a per-tick Bernoulli(p) event process, one stream.

    Inter-event gaps are geometric draws pulled in batches from the
    stream's own generator; the first event lands at gap - 1 so an event at
    tick 0 is possible.
    """

    __slots__ = ("gen", "p", "buf", "pos")

    _BATCH = 256

    def __init__(self, gen, p: float):
        self.gen = gen
        self.p = p
        self.buf = gen.geometric(p, size=self._BATCH)
        self.pos = 0

    def _next_gap(self) -> int:
        if self.pos >= len(self.buf):
            self.buf = self.gen.geometric(self.p, size=self._BATCH)
            self.pos = 0
        g = int(self.buf[self.pos])
        self.pos += 1
        return g

    def first_tick(self) -> int:
        return self._next_gap() - 1

    def next_tick(self, current: int) -> int:
        return current + self._next_gap()


class Simulation:
    """Single-threaded reference executor of the asynchronous update law.

    Holds every agent's local copy in one (num_agents, n) array; ``step``
    advances one tick in the fixed update -> send -> deliver order. State
    is reproducible bit for bit from (model.seed, configuration).
    """

    def __init__(
        self,
        qp: QuadraticProgram,
        reg: Regularization | None,
        rates: BlockRates,
        model: AsynchronyModel,
        x0: BlockVector,
        discard_stale: bool = False,
    ):
        p = qp.partition
        N = p.num_blocks
        self.qp = qp
        self.model = model
        self.partition = p
        self.num_agents = N
        self.gammas = np.asarray(rates.gamma)
        self.alphas = (
            np.zeros(N) if reg is None else np.asarray(reg.alphas, dtype=float)
        )
        self.discard_stale = discard_stale

        self.slices = p.slices()
        self._q_rows = [qp.Q.data[sl, :] for sl in self.slices]
        self._r_blocks = [qp.r.data[sl] for sl in self.slices]

        x_init = np.asarray(x0.data if isinstance(x0, BlockVector) else x0, dtype=float)
        self.X = np.tile(x_init, (N, 1))
        for i in range(N):
            self.X[i, self.slices[i]] = project_block(
                qp.constraints[i], self.X[i, self.slices[i]]
            )

        self.tick = 0
        self.last_update = np.full(N, -1, dtype=np.int64)
        self.held_tick = np.full((N, N), -1, dtype=np.int64)
        self.tracker = CycleTracker(N)

        seed = model.seed
        self._upd_streams = [
            _EventStream(substream(seed, 0, i), model.p_update) for i in range(N)
        ]
        self.pairs = [(j, i) for j in range(N) for i in range(N) if i != j]
        self._pair_streams = [
            _EventStream(substream(seed, 1, j, i), model.p_transmit)
            for (j, i) in self.pairs
        ]
        self._zero_delay = isinstance(model.delay, ZeroDelay)
        if not self._zero_delay:
            self._delay_gens = [substream(seed, 2, j, i) for (j, i) in self.pairs]

        self._owner_of_dim = np.repeat(np.arange(N), p.sizes)
        self._dim_index = np.arange(p.n)

        self._upd_buckets: dict[int, list[int]] = {}
        for i, s in enumerate(self._upd_streams):
            self._upd_buckets.setdefault(s.first_tick(), []).append(i)
        self._pair_buckets: dict[int, list[int]] = {}
        for pi, s in enumerate(self._pair_streams):
            self._pair_buckets.setdefault(s.first_tick(), []).append(pi)
        self._mail: dict[int, list[tuple[int, Message]]] = {}

    def agent(self, i: int) -> AgentState:
        return AgentState(
            id=i,
            x=self.X[i].copy(),
            gamma=float(self.gammas[i]),
            alpha=float(self.alphas[i]),
            last_self_update_time=int(self.last_update[i]),
        )

    def step(self) -> None:
        """Advance one tick: updates, sends, deliveries, cycle bookkeeping."""
        k = self.tick
        # (a) own-block projected gradient updates
        for i in self._upd_buckets.pop(k, ()):
            self._update_agent(i, k)
            stream = self._upd_streams[i]
            self._upd_buckets.setdefault(stream.next_tick(k), []).append(i)
        # (b) transmissions of current own-block values
        for pi in self._pair_buckets.pop(k, ()):
            j, i = self.pairs[pi]
            delay = 0 if self._zero_delay else self.model.delay.sample(self._delay_gens[pi])
            msg = Message(
                sender=j,
                payload=self.X[j, self.slices[j]].copy(),
                computed_at=int(self.last_update[j]),
                deliver_at=k + 1 + delay,
            )
            self._mail.setdefault(msg.deliver_at, []).append((i, msg))
            stream = self._pair_streams[pi]
            self._pair_buckets.setdefault(stream.next_tick(k), []).append(pi)
        # (c) deliveries due now; later arrivals overwrite earlier ones
        for receiver, msg in self._mail.pop(k + 1, ()):
            if self.discard_stale and msg.computed_at < self.held_tick[receiver, msg.sender]:
                continue
            self.X[receiver, self.slices[msg.sender]] = msg.payload
            self.held_tick[receiver, msg.sender] = msg.computed_at
            self.tracker.on_delivery(msg.sender, receiver, msg.computed_at)
        # (d) cycle completion check
        self.tracker.end_tick()
        self.tick = k + 1

    def _update_agent(self, i: int, k: int) -> None:
        sl = self.slices[i]
        xi = self.X[i]
        g = self._q_rows[i] @ xi + self._r_blocks[i]
        if self.alphas[i] != 0.0:
            g = g + self.alphas[i] * xi[sl]
        xi[sl] = project_block(self.qp.constraints[i], xi[sl] - self.gammas[i] * g)
        self.last_update[i] = k
        self.tracker.on_update(i, k)

    def agent_errors(self, target: np.ndarray) -> np.ndarray:
        """Block-maximum distance of each agent's local copy to ``target``."""
        diff = self.X - target
        sq = np.add.reduceat(diff * diff, self.partition.offsets, axis=1)
        return np.sqrt(sq).max(axis=1)

    def assembled_state(self) -> np.ndarray:
        """The network state: every agent's own block, concatenated."""
        return self.X[self._owner_of_dim, self._dim_index]


@dataclass
class RunTrace:
    """Recorded trajectory of one simulation run.

    ``agent_errors[t, i]`` is agent i's block-maximum distance to the run's
    own convergence target at recorded tick ``ticks[t]``; ``envelope`` is
    the geometric bound rate**cycles * initial_distance; ``net_errors`` is
    the plain Euclidean distance of the assembled network state (each
    agent's own block) to the target. ``ref_errors``/``ref_net_errors``
    hold the same two distances measured against an optional secondary
    reference point (for cross-run comparisons); none of the reference
    columns are part of the CSV format.
    """

    ticks: np.ndarray
    cycles: np.ndarray
    agent_errors: np.ndarray
    objectives: np.ndarray
    envelope: np.ndarray
    net_errors: np.ndarray
    target: np.ndarray
    rate: float
    initial_distance: float
    metadata: dict
    ref_errors: np.ndarray | None = None
    ref_net_errors: np.ndarray | None = None

    @property
    def max_errors(self) -> np.ndarray:
        return self.agent_errors.max(axis=1)

    def csv_text(self) -> str:
        lines = [",".join(TRACE_COLUMNS)]
        max_err = self.max_errors
        for t in range(len(self.ticks)):
            lines.append(
                f"{int(self.ticks[t])},{int(self.cycles[t])},"
                f"{float(max_err[t])!r},{float(self.objectives[t])!r},"
                f"{float(self.envelope[t])!r}"
            )
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())

    def write_metadata(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.metadata, fh, indent=2, sort_keys=True)
            fh.write("\n")


def run(
    qp: QuadraticProgram,
    reg: Regularization | None,
    rates: BlockRates | None,
    model: AsynchronyModel,
    x0: BlockVector,
    record_every: int = 1,
    target: BlockVector | None = None,
    reference: BlockVector | None = None,
    discard_stale: bool = False,
) -> RunTrace:
    """Execute the asynchronous update law for ``model.max_ticks`` ticks.

    ``rates`` defaults to optimal stepsizes for the (regularized) problem.
    ``target`` is the run's own minimizer; it is computed by the
    centralized oracle when not supplied. ``reference`` is an optional
    second point whose distances are recorded alongside (e.g. the
    unregularized minimizer while simulating a regularized run). Identical
    (seed, configuration) produce bit-identical traces.
    """
    from .qp import centralized_minimizer, exact_unconstrained_minimizer

    if record_every < 1:
        raise ValueError("record_every must be at least 1")
    p = qp.partition
    if rates is None:
        rates = compute_rates(qp, reg)
    if target is None:
        # the direct solve is an order of magnitude tighter than projected
        # gradient, which matters once the envelope decays to float scale
        if qp.is_unconstrained:
            target = exact_unconstrained_minimizer(qp, reg)
        else:
            target = centralized_minimizer(qp, reg)
    tgt = target.data
    ref = None if reference is None else reference.data

    sim = Simulation(qp, reg, rates, model, x0, discard_stale=discard_stale)
    d0 = float(sim.agent_errors(tgt).max())
    q = rates.network_rate

    ticks, cycles, errs, objs, env, nets = [], [], [], [], [], []
    refs, ref_nets = [], []

    def record(k: int):
        ticks.append(k)
        cycles.append(sim.tracker.cycles)
        errs.append(sim.agent_errors(tgt))
        objs.append(objective(qp, sim.X[0]))
        env.append(q ** sim.tracker.cycles * d0)
        assembled = sim.assembled_state()
        nets.append(float(np.linalg.norm(assembled - tgt)))
        if ref is not None:
            refs.append(float(sim.agent_errors(ref).max()))
            ref_nets.append(float(np.linalg.norm(assembled - ref)))

    record(0)
    for k in range(model.max_ticks):
        sim.step()
        if (k + 1) % record_every == 0 or k + 1 == model.max_ticks:
            record(k + 1)

    metadata = {
        "model": model.to_json(),
        "record_every": record_every,
        "num_agents": p.num_blocks,
        "partition": list(p.sizes),
        "gammas": [float(g) for g in rates.gamma],
        "alphas": [0.0] * p.num_blocks if reg is None else list(reg.alphas),
        "rate": q,
        "initial_distance": d0,
        "stepsizes_valid": rates.valid,
        "discard_stale": discard_stale,
    }
    return RunTrace(
        ticks=np.asarray(ticks, dtype=np.int64),
        cycles=np.asarray(cycles, dtype=np.int64),
        agent_errors=np.asarray(errs),
        objectives=np.asarray(objs),
        envelope=np.asarray(env),
        net_errors=np.asarray(nets),
        target=tgt.copy(),
        rate=q,
        initial_distance=d0,
        metadata=metadata,
        ref_errors=np.asarray(refs) if ref is not None else None,
        ref_net_errors=np.asarray(ref_nets) if ref is not None else None,
    )


def _float_floor(trace: RunTrace) -> float:
    # Distances are measured against a target known only to solver accuracy
    # (~1e-12 relative), so once the geometric envelope descends below that
    # resolution the comparison needs an absolute guard.
    return 1e-9 * max(1.0, trace.initial_distance)


def verify_contraction_envelope(
    trace: RunTrace,
    rate: float | None = None,
    initial_distance: float | None = None,
    rel_tol: float = 1e-9,
    abs_tol: float | None = None,
) -> tuple[bool, dict | None]:
    """Check every recorded agent error against the geometric envelope
    rate**cycles * initial_distance, with relative slack ``rel_tol`` plus
    an absolute float-resolution guard ``abs_tol``.

    Returns (ok, first_violation); the violation dict names the tick,
    agent, error, and envelope value.
    """
    q = trace.rate if rate is None else rate
    d0 = trace.initial_distance if initial_distance is None else initial_distance
    if abs_tol is None:
        abs_tol = _float_floor(trace)
    env = q ** trace.cycles.astype(float) * d0
    bad = trace.agent_errors > env[:, None] * (1.0 + rel_tol) + abs_tol
    if not bad.any():
        return True, None
    t, i = np.argwhere(bad)[0]
    return False, {
        "tick": int(trace.ticks[t]),
        "agent": int(i),
        "error": float(trace.agent_errors[t, i]),
        "envelope": float(env[t]),
    }


def envelope_violation_count(
    trace: RunTrace, rel_tol: float = 1e-9, abs_tol: float | None = None
) -> int:
    if abs_tol is None:
        abs_tol = _float_floor(trace)
    env = trace.rate ** trace.cycles.astype(float) * trace.initial_distance
    return int((trace.agent_errors > env[:, None] * (1.0 + rel_tol) + abs_tol).sum())


# --- concurrent mode ---------------------------------------------------------


def run_concurrent(
    qp: QuadraticProgram,
    reg: Regularization | None,
    rates: BlockRates | None,
    model: AsynchronyModel,
    x0: BlockVector,
    iterations: int = 2000,
) -> np.ndarray:
    """Run each agent as its own thread, communicating only through message
    queues; returns the assembled network state (each agent's own block).

    A valid execution of the asynchronous update law, but not reproducible:
    thread interleaving replaces the deterministic schedule, so concurrent
    traces are excluded from envelope regression baselines.
    """
    p = qp.partition
    N = p.num_blocks
    if rates is None:
        rates = compute_rates(qp, reg)
    alphas = np.zeros(N) if reg is None else np.asarray(reg.alphas, dtype=float)
    slices = p.slices()
    inboxes = [SimpleQueue() for _ in range(N)]
    final = [None] * N

    def agent_loop(i: int):
        rng = substream(model.seed, 3, i)
        x = np.array(x0.data, dtype=float)
        x[slices[i]] = project_block(qp.constraints[i], x[slices[i]])
        q_row = qp.Q.data[slices[i], :]
        r_blk = qp.r.data[slices[i]]
        for _ in range(iterations):
            while True:
                try:
                    j, payload = inboxes[i].get_nowait()
                except Empty:
                    break
                x[slices[j]] = payload
            if rng.random() < model.p_update:
                g = q_row @ x + r_blk
                if alphas[i] != 0.0:
                    g = g + alphas[i] * x[slices[i]]
                x[slices[i]] = project_block(
                    qp.constraints[i], x[slices[i]] - rates.gamma[i] * g
                )
            for j in range(N):
                if j != i and rng.random() < model.p_transmit:
                    inboxes[j].put((i, x[slices[i]].copy()))
            time.sleep(0)  # yield so thread schedules interleave
        final[i] = x

    threads = [threading.Thread(target=agent_loop, args=(i,)) for i in range(N)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    assembled = np.empty(p.n)
    for i in range(N):
        assembled[slices[i]] = final[i][slices[i]]
    return assembled
