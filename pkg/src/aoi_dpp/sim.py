"""Seeded Monte Carlo episodes, metrics accumulation and parameter sweeps.

Every slot consumes two uniforms from the episode's generator, in order:
one for the policy (used only by randomized policies) and one for the
channel. The compiled kernel and the pure-Python ``step`` therefore see the
same random stream and produce identical trajectories.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from . import _kernel
from .dpp import SchedulerState, drift_bound_b, update_virtual_queues
from .model import (Action, UserParams, UserState, age_step, cost_of_action,
                    realize_delivery, sample_packet, validate_action)

CHUNK_SLOTS = 1 << 18


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    users: tuple[UserParams, ...]
    policy: Any
    horizon: int
    seed: int = 0
    replications: int = 1
    metrics_stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        if not self.users:
            raise ConfigError("at least one user is required")
        for name in ("horizon", "replications", "metrics_stride"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, (int, np.integer)) or val < 1:
                raise ConfigError(f"{name} must be a positive integer, got {val!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not hasattr(self.policy, "kernel_args"):
            raise ConfigError(f"unsupported policy {self.policy!r}")
        self.policy.kernel_args(len(self.users))

    @property
    def n_users(self) -> int:
        return len(self.users)

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def with_policy(self, policy) -> "SimConfig":
        return self.replace(policy=policy)


def episode_rng(seed: int, point: int = 0, replication: int = 0) -> np.random.Generator:
    """Independent PCG64 stream for one (seed, grid point, replication) triple."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(point, replication))))


@dataclass(frozen=True)
class Metrics:
    """Finite-horizon averages over slots 0..horizon-1 (state observed at slot start)."""

    horizon: int
    avg_age: tuple[float, ...]
    avg_cost: float
    tx_rate: tuple[float, ...]
    sample_rate: tuple[float, ...]
    delivery_rate: tuple[float, ...]
    avg_queue: tuple[float, ...]
    avg_b: float
    queue_last_half: tuple[float, ...]
    queue_last_tenth: tuple[float, ...]
    # first slot whose running average age rises above a_max (-1: never)
    first_above: tuple[int, ...]
    # first slot after that where the running average drops below a_max again (-1: never)
    first_recover: tuple[int, ...]
    last_above: tuple[int, ...]

    PER_USER = ("avg_age", "tx_rate", "sample_rate", "delivery_rate", "avg_queue",
                "queue_last_half", "queue_last_tenth", "first_above", "first_recover", "last_above")
    SCALAR = ("avg_cost", "avg_b")

    @property
    def n_users(self) -> int:
        return len(self.avg_age)

    def as_dict(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for name in self.PER_USER:
            for i, val in enumerate(getattr(self, name)):
                out[f"{name}_{i + 1}"] = val
        for name in self.SCALAR:
            out[name] = getattr(self, name)
        return out

    @classmethod
    def average(cls, items: Sequence["Metrics"]) -> "Metrics":
        """Elementwise mean across replications (slot indices are averaged too)."""
        if len(items) == 1:
            return items[0]
        kw: dict[str, Any] = {"horizon": items[0].horizon}
        for name in cls.PER_USER:
            kw[name] = tuple(float(x) for x in np.mean([getattr(m, name) for m in items], axis=0))
        for name in cls.SCALAR:
            kw[name] = float(np.mean([getattr(m, name) for m in items]))
        return cls(**kw)


@dataclass(frozen=True)
class TraceRecord:
    slot: int
    ages: tuple[int, ...]
    queues: tuple[float, ...]
    s: tuple[int, ...]
    mu: tuple[int, ...]
    d: tuple[int, ...]
    cost: float


@dataclass
class Trace:
    """Columnar trace, one row every ``stride`` slots (rows at slots stride-1, 2*stride-1, ...).

    ``ages``/``queues`` are observed at the start of the slot; ``avg_*`` are
    running averages over slots 0..slot inclusive.
    """

    stride: int
    slot: np.ndarray
    ages: np.ndarray
    queues: np.ndarray
    s: np.ndarray
    mu: np.ndarray
    d: np.ndarray
    cost: np.ndarray
    avg_age: np.ndarray
    avg_queue: np.ndarray
    avg_cost: np.ndarray

    @classmethod
    def empty(cls, rows: int, n: int, stride: int) -> "Trace":
        return cls(stride, np.zeros(rows, np.int64), np.zeros((rows, n), np.int64),
                   np.zeros((rows, n)), np.zeros((rows, n), np.int8), np.zeros((rows, n), np.int8),
                   np.zeros((rows, n), np.int8), np.zeros(rows), np.zeros((rows, n)),
                   np.zeros((rows, n)), np.zeros(rows))

    def __len__(self) -> int:
        return len(self.slot)

    def __getitem__(self, k: int) -> TraceRecord:
        return TraceRecord(int(self.slot[k]), tuple(int(a) for a in self.ages[k]),
                           tuple(float(x) for x in self.queues[k]),
                           tuple(int(x) for x in self.s[k]), tuple(int(x) for x in self.mu[k]),
                           tuple(int(x) for x in self.d[k]), float(self.cost[k]))

    def __iter__(self):
        return (self[k] for k in range(len(self)))


@dataclass
class EpisodeResult:
    metrics: Metrics
    trace: Optional[Trace]
    point: int = 0
    replication: int = 0


def _windows(horizon: int) -> tuple[int, int]:
    return horizon - max(1, horizon // 2), horizon - max(1, horizon // 10)


def run_episode(config: SimConfig, point: int = 0, replication: int = 0,
                keep_trace: bool = True) -> EpisodeResult:
    """Simulate ``config.horizon`` slots from A=1, empty buffers, X=0."""
    n, horizon, stride = config.n_users, config.horizon, config.metrics_stride
    code, v, q_sample, q_retx = config.policy.kernel_args(n)
    p = np.array([u.p for u in config.users], dtype=np.float64)
    a_max = np.array([u.a_max for u in config.users], dtype=np.float64)
    c_s = np.array([u.c_sample for u in config.users], dtype=np.float64)
    c_tr = np.array([u.c_transmit for u in config.users], dtype=np.float64)
    q_sample = np.ascontiguousarray(q_sample, dtype=np.float64)
    q_retx = np.ascontiguousarray(q_retx, dtype=np.float64)

    age = np.ones(n, np.int64)
    pend = np.zeros(n, np.int8)
    buf_slot = np.zeros(n, np.int64)
    queue = np.zeros(n)
    sum_age, sum_queue = np.zeros(n), np.zeros(n)
    n_tx, n_sample, n_deliv = (np.zeros(n, np.int64) for _ in range(3))
    q_half, q_tenth = np.zeros(n), np.zeros(n)
    half_start, tenth_start = _windows(horizon)
    first_above = np.full(n, -1, np.int64)
    first_recover = np.full(n, -1, np.int64)
    last_above = np.full(n, -1, np.int64)
    acc = np.zeros(2)
    rows = horizon // stride if keep_trace else 0
    tr = Trace.empty(rows, n, stride)
    rec = np.zeros(1, np.int64)
    # keep_trace=False: stride past the horizon so nothing is recorded
    kstride = stride if keep_trace else horizon + 1

    rng = episode_rng(config.seed, point, replication)
    t0 = 0
    while t0 < horizon:
        m = min(CHUNK_SLOTS, horizon - t0)
        u = rng.random((m, 2))
        _kernel.run_chunk(code, float(v), q_sample, q_retx, p, a_max, c_s, c_tr,
                          u, t0, horizon, kstride, age, pend, buf_slot, queue,
                          sum_age, sum_queue, n_tx, n_sample, n_deliv,
                          q_half, q_tenth, half_start, tenth_start,
                          first_above, first_recover, last_above, acc,
                          tr.slot, tr.ages, tr.queues, tr.s, tr.mu, tr.d, tr.cost,
                          tr.avg_age, tr.avg_queue, tr.avg_cost, rec)
        t0 += m

    metrics = Metrics(
        horizon=horizon,
        avg_age=tuple(float(x) for x in sum_age / horizon),
        avg_cost=float(acc[_kernel.ACC_COST] / horizon),
        tx_rate=tuple(float(x) for x in n_tx / horizon),
        sample_rate=tuple(float(x) for x in n_sample / horizon),
        delivery_rate=tuple(float(x) for x in n_deliv / horizon),
        avg_queue=tuple(float(x) for x in sum_queue / horizon),
        avg_b=float(acc[_kernel.ACC_B] / horizon),
        queue_last_half=tuple(float(x) for x in q_half / (horizon - half_start)),
        queue_last_tenth=tuple(float(x) for x in q_tenth / (horizon - tenth_start)),
        first_above=tuple(int(x) for x in first_above),
        first_recover=tuple(int(x) for x in first_recover),
        last_above=tuple(int(x) for x in last_above),
    )
    return EpisodeResult(metrics, tr if keep_trace else None, point, replication)


def run_replications(config: SimConfig, point: int = 0, keep_trace: bool = False,
                     workers: int = 1) -> list[EpisodeResult]:
    reps = range(config.replications)
    if workers <= 1:
        return [run_episode(config, point, r, keep_trace) for r in reps]
    with ThreadPoolExecutor(workers) as ex:
        return list(ex.map(lambda r: run_episode(config, point, r, keep_trace), reps))


# ---------------------------------------------------------------------------
# pure-Python reference path

@dataclass(frozen=True)
class SimState:
    users: tuple[UserState, ...]
    queues: tuple[float, ...]
    slot: int = 0

    @classmethod
    def initial(cls, n: int) -> "SimState":
        return cls(tuple(UserState() for _ in range(n)), (0.0,) * n, 0)

    def scheduler_state(self) -> SchedulerState:
        return SchedulerState.from_users(self.users, self.queues, self.slot)


def step(state: SimState, policy, params: Sequence[UserParams],
         rng: np.random.Generator) -> tuple[SimState, TraceRecord]:
    """Run one slot: decide, sample, transmit, realize delivery, update ages then queues."""
    t = state.slot
    obs = state.scheduler_state()
    action = policy.decide(obs, params, rng.random())
    if not validate_action(action, state.users):
        raise ValueError(f"policy produced an infeasible action at slot {t}: {action}")
    cost = cost_of_action(action, params)
    users = [sample_packet(u, t) if s else u for u, s in zip(state.users, action.s)]
    d = realize_delivery(action, params, rng)
    users = [age_step(u, d_i, t) for u, d_i in zip(users, d)]
    queues = update_virtual_queues(state.queues, [u.age for u in users], params)
    record = TraceRecord(t, obs.ages, obs.queues, action.s, action.mu, d, cost)
    return SimState(tuple(users), queues, t + 1), record


def run_episode_reference(config: SimConfig, point: int = 0, replication: int = 0) -> EpisodeResult:
    """Slow slot-by-slot twin of ``run_episode``; for cross-checking on short horizons."""
    n, horizon, stride = config.n_users, config.horizon, config.metrics_stride
    params = config.users
    rng = episode_rng(config.seed, point, replication)
    state = SimState.initial(n)
    half_start, tenth_start = _windows(horizon)
    sum_age, sum_queue = [0.0] * n, [0.0] * n
    q_half, q_tenth = [0.0] * n, [0.0] * n
    n_tx, n_sample, n_deliv = [0] * n, [0] * n, [0] * n
    first_above, first_recover, last_above = [-1] * n, [-1] * n, [-1] * n
    sum_cost = sum_b = 0.0
    rows = []
    for t in range(horizon):
        b = drift_bound_b(state.scheduler_state(), params)
        state, rec = step(state, config.policy, params, rng)
        sum_cost += rec.cost
        sum_b += b
        for i in range(n):
            sum_age[i] += rec.ages[i]
            sum_queue[i] += rec.queues[i]
            if t >= half_start:
                q_half[i] += rec.queues[i]
            if t >= tenth_start:
                q_tenth[i] += rec.queues[i]
            n_tx[i] += rec.mu[i]
            n_sample[i] += rec.s[i]
            n_deliv[i] += rec.d[i]
            lim = params[i].a_max * (t + 1)
            if sum_age[i] > lim:
                if first_above[i] < 0:
                    first_above[i] = t
                last_above[i] = t
            elif first_above[i] >= 0 and first_recover[i] < 0 and sum_age[i] < lim:
                first_recover[i] = t
        if (t + 1) % stride == 0:
            rows.append((rec, [a / (t + 1) for a in sum_age], [x / (t + 1) for x in sum_queue],
                         sum_cost / (t + 1)))

    tr = Trace.empty(len(rows), n, stride)
    for k, (rec, avg_a, avg_x, avg_c) in enumerate(rows):
        tr.slot[k] = rec.slot
        tr.ages[k], tr.queues[k] = rec.ages, rec.queues
        tr.s[k], tr.mu[k], tr.d[k] = rec.s, rec.mu, rec.d
        tr.cost[k] = rec.cost
        tr.avg_age[k], tr.avg_queue[k], tr.avg_cost[k] = avg_a, avg_x, avg_c
    metrics = Metrics(
        horizon=horizon,
        avg_age=tuple(a / horizon for a in sum_age),
        avg_cost=sum_cost / horizon,
        tx_rate=tuple(x / horizon for x in n_tx),
        sample_rate=tuple(x / horizon for x in n_sample),
        delivery_rate=tuple(x / horizon for x in n_deliv),
        avg_queue=tuple(x / horizon for x in sum_queue),
        avg_b=sum_b / horizon,
        queue_last_half=tuple(x / (horizon - half_start) for x in q_half),
        queue_last_tenth=tuple(x / (horizon - tenth_start) for x in q_tenth),
        first_above=tuple(first_above),
        first_recover=tuple(first_recover),
        last_above=tuple(last_above),
    )
    return EpisodeResult(metrics, tr, point, replication)


# ---------------------------------------------------------------------------
# sweeps

@dataclass(frozen=True)
class SweepAxis:
    """Grid over the DPP weight (``name="v"``) or success probabilities (``name="p"``).

    A ``p`` value is either one probability applied to every user or a
    per-user sequence.
    """

    name: str
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if self.name not in ("v", "p"):
            raise ConfigError(f"unknown sweep axis {self.name!r}")
        if not self.values:
            raise ConfigError("sweep grid must be nonempty")

    def apply(self, base: SimConfig, value) -> SimConfig:
        if self.name == "v":
            from .dpp import DppPolicy
            return base.with_policy(DppPolicy.with_v(value))
        ps = [value] * base.n_users if np.isscalar(value) else list(value)
        if len(ps) != base.n_users:
            raise ConfigError(f"p grid value {value!r} does not match {base.n_users} users")
        return base.replace(users=tuple(dataclasses.replace(u, p=float(q)) for u, q in zip(base.users, ps)))


@dataclass
class SweepPoint:
    index: int
    value: Any
    config: SimConfig
    runs: list[EpisodeResult]
    mean: dict[str, float] = field(default_factory=dict)
    std: dict[str, float] = field(default_factory=dict)

    @property
    def trace(self) -> Optional[Trace]:
        return self.runs[0].trace


@dataclass
class SweepResult:
    axis: Optional[SweepAxis]
    points: list[SweepPoint]

    def column(self, metric: str, stat: str = "mean") -> np.ndarray:
        return np.array([getattr(pt, stat)[metric] for pt in self.points])


def aggregate(runs: Sequence[EpisodeResult]) -> tuple[dict[str, float], dict[str, float]]:
    """Mean and sample standard deviation (ddof=1; 0 for a single run) per metric."""
    dicts = [r.metrics.as_dict() for r in runs]
    mean, std = {}, {}
    for key in dicts[0]:
        vals = np.array([d[key] for d in dicts], dtype=np.float64)
        mean[key] = float(vals.mean())
        std[key] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    return mean, std


def sweep(base: SimConfig, axis: Optional[SweepAxis], replications: Optional[int] = None,
          keep_trace: bool = True, workers: int = 1) -> SweepResult:
    """Run every grid point for ``replications`` episodes; replication 0 keeps its trace.

    With ``axis=None`` the base configuration is the single grid point.
    """
    reps = base.replications if replications is None else replications
    values = (None,) if axis is None else axis.values
    configs = [(base if axis is None else axis.apply(base, val)).replace(replications=reps)
               for val in values]
    jobs = [(k, r) for k in range(len(configs)) for r in range(reps)]

    def run(job):
        k, r = job
        return run_episode(configs[k], k, r, keep_trace and r == 0)

    if workers <= 1:
        results = [run(j) for j in jobs]
    else:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(run, jobs))

    points = []
    for k, (val, cfg) in enumerate(zip(values, configs)):
        runs = results[k * reps:(k + 1) * reps]
        mean, std = aggregate(runs)
        points.append(SweepPoint(k, val, cfg, runs, mean, std))
    return SweepResult(axis, points)


def pooled_sd(sd_a: float, sd_b: float) -> float:
    """Pooled standard deviation of two equal-size groups."""
    return math.sqrt((sd_a ** 2 + sd_b ** 2) / 2)
