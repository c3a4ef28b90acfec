"""End-to-end acceptance checks at full scale (10^6 slots, 20 replications).

Each test records one PASS/FAIL line that is repeated in the terminal summary.
"""

import math
import random
import time
from fractions import Fraction

import numpy as np
import pytest

from aoi_dpp import cli
from aoi_dpp.config import load_config
from aoi_dpp.dpp import DppConfig, DppPolicy, SchedulerState, choose_action, update_virtual_queues
from aoi_dpp.model import (Action, PacketBuffer, UserParams, UserState, age_step, expected_delivery,
                           realize_delivery, sample_packet)
from aoi_dpp.oracle import TruncatedMdp, solve_constrained_mdp
from aoi_dpp.sim import SimConfig, SweepAxis, pooled_sd, sweep
from conftest import brute_force_action, full_objective, record_criterion

pytestmark = pytest.mark.acceptance

GRID = (1, 10, 50, 100, 300)


@pytest.fixture(scope="module")
def fig1():
    spec = load_config("fig1")
    assert spec.sweep.values == GRID
    assert spec.sim.horizon == 10 ** 6 and spec.sim.replications == 20
    start = time.perf_counter()
    result = sweep(spec.sim, spec.sweep, keep_trace=False)
    return result, time.perf_counter() - start


def point(result, v):
    return next(pt for pt in result.points if pt.value == v)


def crossing_slot(m, user, horizon):
    """First slot the running average is back below the budget (0: never above; horizon: censored)."""
    if m.first_above[user] < 0:
        return 0
    if m.first_recover[user] >= 0:
        return m.first_recover[user]
    return horizon


def test_1_constraint_satisfaction(fig1):
    result, elapsed = fig1
    worst = max(point(result, v).mean[f"avg_age_{i}"] for v in (1, 50, 100, 300) for i in (1, 2))
    ok = worst <= 5.25 and elapsed < 120
    record_criterion("1 constraint satisfaction", ok,
                     f"max mean age {worst:.5f} <= 5.25, sweep time {elapsed:.1f}s < 120s")
    assert ok


def test_2_convergence_ordering(fig1):
    result, _ = fig1
    horizon = result.points[0].config.horizon
    slow = [crossing_slot(r.metrics, 0, horizon) for r in point(result, 300).runs]
    fast = [crossing_slot(r.metrics, 0, horizon) for r in point(result, 50).runs]
    wins = sum(s > f for s, f in zip(slow, fast))
    late = min(slow)
    ok = wins >= 18 and late > 1000
    record_criterion("2 convergence ordering", ok,
                     f"V=300 later than V=50 in {wins}/20; earliest V=300 crossing {late} > 1000"
                     f" (V=50 median {int(np.median(fast))})")
    assert ok


def test_3_cost_age_tradeoff(fig1):
    result, _ = fig1
    bad = []
    for a, b in zip(result.points, result.points[1:]):
        tol = 2 * pooled_sd(a.std["avg_cost"], b.std["avg_cost"])
        if b.mean["avg_cost"] > a.mean["avg_cost"] + tol:
            bad.append(f"cost V={a.value}->{b.value}")
        for i in (1, 2):
            key = f"avg_age_{i}"
            if b.mean[key] < a.mean[key] - 2 * pooled_sd(a.std[key], b.std[key]):
                bad.append(f"age{i} V={a.value}->{b.value}")
    costs = ", ".join(f"{c:.4f}" for c in result.column("avg_cost"))
    record_criterion("3 cost-age trade-off", not bad, f"costs [{costs}] {'violations: ' + str(bad) if bad else ''}")
    assert not bad


def test_4_cost_bound():
    user = UserParams(0.6, 5)
    c_opt = solve_constrained_mdp(TruncatedMdp.build(user, 50), 5).c_opt
    base = SimConfig([user], DppPolicy.with_v(100), horizon=10 ** 6, replications=20)
    result = sweep(base, SweepAxis("v", (100, 300, 1000)), keep_trace=False)
    rows, ok = [], True
    gaps = []
    for pt in result.points:
        c, se, b = pt.mean["avg_cost"], pt.std["avg_cost"] / math.sqrt(20), pt.mean["avg_b"]
        upper = c_opt + b / pt.value
        ok &= c <= upper + 3 * se and c >= c_opt - 3 * se
        gaps.append((c - c_opt, se))
        rows.append(f"V={pt.value}: {c:.5f} in [{c_opt:.5f}, {upper:.5f}]")
    for (g1, s1), (g2, s2) in zip(gaps, gaps[1:]):
        ok &= g2 <= g1 + 3 * math.hypot(s1, s2)
    record_criterion("4 cost bound", ok, "; ".join(rows) + f"; gaps {[round(g, 5) for g, _ in gaps]}")
    assert ok


def test_5_virtual_queue_stability(fig1):
    result, _ = fig1
    bad = []
    for pt in result.points:
        for r in pt.runs:
            m = r.metrics
            for i in range(2):
                if not (np.isfinite(m.avg_queue[i]) and
                        abs(m.queue_last_tenth[i] - m.queue_last_half[i]) <= 0.05 * m.queue_last_half[i]):
                    bad.append(f"V={pt.value} rep {r.replication} user {i + 1}")
    for a, b in zip(result.points, result.points[1:]):
        for i in (1, 2):
            key = f"avg_queue_{i}"
            if b.mean[key] < a.mean[key] - 2 * pooled_sd(a.std[key], b.std[key]):
                bad.append(f"queue{i} V={a.value}->{b.value}")
    q1 = ", ".join(f"{x:.2f}" for x in result.column("avg_queue_1"))
    record_criterion("5 virtual queue stability", not bad, f"user 1 mean X [{q1}] {bad[:5] if bad else ''}")
    assert not bad


def exact_state(rng, n):
    ages = tuple(rng.randint(1, 20) for _ in range(n))
    pkt = tuple(rng.choice([None, rng.randint(0, a - 1)]) if a > 1 else None for a in ages)
    queues = tuple(float(rng.randint(0, 100)) for _ in range(n))
    params = [UserParams(rng.randint(0, 32) / 32, rng.randint(1, 12),
                         c_sample=rng.randint(0, 4), c_transmit=rng.randint(0, 4)) for _ in range(n)]
    return SchedulerState(ages, queues, pkt), params, float(rng.randint(0, 60))


def feasible(state):
    def check(act):
        return (sum(act.mu) <= 1 and all(s <= m for s, m in zip(act.s, act.mu))
                and all(s or not m or state.packet_ages[i] is not None
                        for i, (s, m) in enumerate(zip(act.s, act.mu))))
    return check


def test_6_scheduler_oracle_equivalence():
    rng = random.Random(6)
    mismatches = 0
    for k in range(10 ** 4):
        state, params, v = exact_state(rng, k % 3 + 1)
        want, best = brute_force_action(state, params, v, feasible(state))
        got = choose_action(state, params, DppConfig(v))
        if got != want or full_objective(state, params, got.s, got.mu, v) != best:
            mismatches += 1
    record_criterion("6 scheduler oracle equivalence", mismatches == 0, f"{mismatches} mismatches in 10000 states")
    assert mismatches == 0


def test_7_dynamics_properties():
    rng = random.Random(7)
    failures = []
    for _ in range(10 ** 5):
        t = rng.randint(0, 10 ** 6)
        age = rng.randint(1, 500)
        buf = PacketBuffer(t - rng.randint(0, age - 1)) if rng.random() < 0.5 and age > 1 else None
        state = UserState(age, buf)
        kind = rng.choice(["idle", "sample", "retx"] if buf else ["idle", "sample"])
        if kind == "sample":
            state = sample_packet(state, t)
        d = int(kind != "idle" and rng.random() < 0.5)
        new = age_step(state, d, t)
        want = (t - state.buffer.sample_slot + 1) if d else age + 1
        if new.age != want:
            failures.append(("age", age, kind, d))
        a_max = rng.randint(1, 40) / 4
        x = float(rng.randint(0, 10 ** 4)) / 8
        got = update_virtual_queues([x], [new.age], [UserParams(0.5, a_max)])[0]
        if got != max(x - a_max, 0.0) + new.age:
            failures.append(("queue", x, a_max))
    for p in np.linspace(0, 1, 100):
        for s, mu in ((0, 0), (0, 1), (1, 1)):
            if abs(expected_delivery(s, mu, p) - p * mu) > 1e-15:
                failures.append(("E[d]", p, s, mu))
    mc = []
    gen = np.random.default_rng(7)
    for p in (0.1, 0.6, 0.9):
        params = [UserParams(p, 5)]
        act = Action.sample(1, 0)
        n = 10 ** 6
        mean = sum(realize_delivery(act, params, gen)[0] for _ in range(n)) / n
        z = (mean - p) / math.sqrt(p * (1 - p) / n)
        mc.append(f"p={p}: z={z:+.2f}")
        if abs(z) > 3:
            failures.append(("mc", p, mean))
    record_criterion("7 dynamics properties", not failures,
                     f"1e5 step cases, 100-point E[d] grid, MC {'; '.join(mc)}; failures {failures[:3]}")
    assert not failures


def test_8_probability_sweep():
    spec = load_config("fig3")
    result = sweep(spec.sim, spec.sweep, keep_trace=False)
    bad = []
    for a, b in zip(result.points, result.points[1:]):
        if b.mean["avg_cost"] > a.mean["avg_cost"] + 2 * pooled_sd(a.std["avg_cost"], b.std["avg_cost"]):
            bad.append(f"cost p={a.value}->{b.value}")
    for pt in result.points:
        for i, u in enumerate(pt.config.users, start=1):
            if pt.mean[f"avg_age_{i}"] > u.a_max * 1.05:
                bad.append(f"age{i} p={pt.value}")
    costs = ", ".join(f"{c:.4f}" for c in result.column("avg_cost"))
    record_criterion("8 probability sweep", not bad, f"costs [{costs}] {bad if bad else ''}")
    assert not bad


def test_9_determinism(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert cli.main(["preset", "fig1", "--seed", "7", "--out", str(out)]) == 0
        outs.append({f: (out / f).read_bytes() for f in ("trace.csv", "sweep.csv")})
    ok = outs[0] == outs[1]
    sizes = ", ".join(f"{f} {len(b)} bytes" for f, b in outs[0].items())
    record_criterion("9 determinism", ok, f"byte-identical CSVs ({sizes})")
    assert ok
