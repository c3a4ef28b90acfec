"""Drift-plus-penalty scheduling.

Each slot the scheduler minimizes

    sum_i X_i [ (A^p_i + 1) W_i + (A_i + 1)(1 - W_i) - A^max_i ] + V c(t)

over feasible joint actions, where ``W_i = p_i mu_i`` is the conditional
delivery probability. Because at most one user transmits, the feasible set
collapses to idle, sample-and-transmit for one user, or retransmission for
one user with a pending packet; the minimization is an O(N) scan over these
candidates, scored relative to the all-idle action.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import Action, UserParams, UserState, expected_delivery, packet_age


class CandidateKind(enum.IntEnum):
    IDLE = 0
    SAMPLE = 1
    RETRANSMIT = 2


@dataclass(frozen=True)
class DppConfig:
    v: float

    def __post_init__(self):
        if not self.v >= 0:
            raise ValueError(f"v must be nonnegative, got {self.v}")


@dataclass(frozen=True)
class SchedulerState:
    """What the scheduler observes at the start of a slot.

    ``packet_ages[i]`` is the age of user i's pending (undelivered) packet,
    or None when there is nothing to retransmit.
    """

    ages: tuple[int, ...]
    queues: tuple[float, ...]
    packet_ages: tuple[Optional[int], ...]
    slot: int = 0

    def __post_init__(self):
        if not len(self.ages) == len(self.queues) == len(self.packet_ages):
            raise ValueError("inconsistent user count in scheduler state")

    @property
    def n_users(self) -> int:
        return len(self.ages)

    @classmethod
    def from_users(cls, users: Sequence[UserState], queues: Sequence[float],
                   slot: int) -> "SchedulerState":
        pkt = tuple(packet_age(u, slot) if u.has_pending else None for u in users)
        return cls(tuple(u.age for u in users), tuple(float(x) for x in queues), pkt, slot)


@dataclass(frozen=True)
class CandidateAction:
    kind: CandidateKind
    user: Optional[int]
    score: float

    def to_action(self, n: int) -> Action:
        if self.kind == CandidateKind.SAMPLE:
            return Action.sample(n, self.user)
        if self.kind == CandidateKind.RETRANSMIT:
            return Action.retransmit(n, self.user)
        return Action.idle(n)


def action_delta(state: SchedulerState, params: Sequence[UserParams],
                 kind: CandidateKind, user: Optional[int], config: DppConfig) -> float:
    """Objective of the candidate minus the objective of idling every user."""
    if kind == CandidateKind.IDLE:
        return 0.0
    up = params[user]
    x, a = state.queues[user], state.ages[user]
    if kind == CandidateKind.SAMPLE:
        return -x * up.p * a + config.v * (up.c_transmit + up.c_sample)
    pa = state.packet_ages[user]
    if pa is None:
        raise ValueError(f"user {user} has no pending packet to retransmit")
    return -x * up.p * (a - pa) + config.v * up.c_transmit


def candidates(state: SchedulerState, params: Sequence[UserParams],
               config: DppConfig) -> list[CandidateAction]:
    """Feasible candidates in tie-break priority order."""
    out = [CandidateAction(CandidateKind.IDLE, None, 0.0)]
    for i in range(state.n_users):
        if state.packet_ages[i] is not None:
            out.append(CandidateAction(CandidateKind.RETRANSMIT, i,
                                       action_delta(state, params, CandidateKind.RETRANSMIT, i, config)))
        out.append(CandidateAction(CandidateKind.SAMPLE, i,
                                   action_delta(state, params, CandidateKind.SAMPLE, i, config)))
    return out


def best_candidate(state: SchedulerState, params: Sequence[UserParams],
                   config: DppConfig) -> CandidateAction:
    best = None
    # strict improvement only: earlier candidates win exact ties
    for c in candidates(state, params, config):
        if best is None or c.score < best.score:
            best = c
    return best


def choose_action(state: SchedulerState, params: Sequence[UserParams],
                  config: DppConfig) -> Action:
    return best_candidate(state, params, config).to_action(state.n_users)


def dpp_objective(state: SchedulerState, params: Sequence[UserParams],
                  action: Action, v: float) -> float:
    """Full per-slot objective for an arbitrary feasible raw action."""
    total = 0.0
    for i, up in enumerate(params):
        s, mu = action.s[i], action.mu[i]
        w = expected_delivery(s, mu, up.p)
        if s:
            pa = 0
        elif state.packet_ages[i] is not None:
            pa = state.packet_ages[i]
        else:
            pa = state.ages[i]  # weight w is zero here, value irrelevant
        a = state.ages[i]
        total += state.queues[i] * ((pa + 1) * w + (a + 1) * (1 - w) - up.a_max)
        total += v * (mu * up.c_transmit + s * up.c_sample)
    return total


def update_virtual_queues(queues: Sequence[float], new_ages: Sequence[int],
                          params: Sequence[UserParams]) -> tuple[float, ...]:
    return tuple(max(x - up.a_max, 0.0) + a for x, a, up in zip(queues, new_ages, params))


def drift_bound_b(state: SchedulerState, params: Sequence[UserParams]) -> float:
    """State-dependent stand-in for the drift constant B (largest possible next age)."""
    return sum(((a + 1) ** 2 + up.a_max ** 2) / 2 for a, up in zip(state.ages, params))


@dataclass(frozen=True)
class DppPolicy:
    config: DppConfig

    name = "dpp"

    @classmethod
    def with_v(cls, v: float) -> "DppPolicy":
        return cls(DppConfig(float(v)))

    def decide(self, state: SchedulerState, params: Sequence[UserParams], u: float) -> Action:
        return choose_action(state, params, self.config)

    def kernel_args(self, n: int):
        return 0, self.config.v, np.zeros(n), np.zeros(n)
