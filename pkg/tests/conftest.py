import itertools
from fractions import Fraction

import pytest

from aoi_dpp.model import Action

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def record_criterion(name: str, ok: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS.append((name, ok, detail))
    print(f"[{'PASS' if ok else 'FAIL'}] {name} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


def full_objective(state, params, s, mu, v):
    """Per-slot drift-plus-penalty objective written out term by term, in exact arithmetic."""
    total = Fraction(0)
    for i, up in enumerate(params):
        p = Fraction(up.p)
        w = p * s[i] + p * mu[i] - p * s[i] * mu[i]
        if s[i]:
            pa = 0
        elif state.packet_ages[i] is not None:
            pa = state.packet_ages[i]
        else:
            pa = 0
        a = state.ages[i]
        x = Fraction(state.queues[i])
        total += x * ((pa + 1) * w + (a + 1) * (1 - w) - Fraction(up.a_max))
        total += Fraction(v) * (mu[i] * Fraction(up.c_transmit) + s[i] * Fraction(up.c_sample))
    return total


def brute_force_action(state, params, v, feasible):
    """Exhaustive minimization over all 4^N raw (s, mu) vectors.

    Ties: idle first, then lowest user index, then retransmission before a fresh sample.
    """
    n = state.n_users
    best = None
    for pairs in itertools.product([(0, 0), (0, 1), (1, 0), (1, 1)], repeat=n):
        s = tuple(p[0] for p in pairs)
        mu = tuple(p[1] for p in pairs)
        act = Action(s, mu)
        if not feasible(act):
            continue
        obj = full_objective(state, params, s, mu, v)
        user = act.active_user
        rank = (0,) if user is None else (1, user, s[user])
        key = (obj, rank)
        if best is None or key < best[0]:
            best = (key, act)
    return best[1], best[0][0]


@pytest.fixture
def brute_force():
    return brute_force_action
