"""Comparison policies: greedy max-age and randomized stationary."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dpp import SchedulerState
from .model import Action, UserParams


def greedy_max_age_policy(state: SchedulerState, params: Sequence[UserParams]) -> Action:
    """Sample and transmit for the user furthest over its age budget, every slot."""
    best, best_ratio = 0, state.ages[0] / params[0].a_max
    for i in range(1, state.n_users):
        ratio = state.ages[i] / params[i].a_max
        if ratio > best_ratio:
            best, best_ratio = i, ratio
    return Action.sample(state.n_users, best)


@dataclass(frozen=True)
class GreedyMaxAgePolicy:
    name = "greedy"

    def decide(self, state: SchedulerState, params: Sequence[UserParams], u: float) -> Action:
        return greedy_max_age_policy(state, params)

    def kernel_args(self, n: int):
        return 1, 0.0, np.zeros(n), np.zeros(n)


@dataclass(frozen=True)
class StationaryPolicy:
    """Randomized policy activating at most one user per slot.

    The slot's policy uniform is compared against the running sum of
    ``q_sample[0], q_retx[0], q_sample[1], q_retx[1], ...``; the first option
    whose cumulative mass exceeds it is taken. Retransmit mass for a user
    without a pending packet, and any leftover mass, idles.
    """

    q_sample: tuple[float, ...]
    q_retx: tuple[float, ...]

    name = "stationary"

    def __post_init__(self):
        object.__setattr__(self, "q_sample", tuple(float(q) for q in self.q_sample))
        object.__setattr__(self, "q_retx", tuple(float(q) for q in self.q_retx))
        if len(self.q_sample) != len(self.q_retx):
            raise ValueError("q_sample and q_retx must have one entry per user")
        if any(q < 0 for q in self.q_sample + self.q_retx):
            raise ValueError("probabilities must be nonnegative")
        if sum(self.q_sample) + sum(self.q_retx) > 1 + 1e-12:
            raise ValueError("total activation probability exceeds 1")

    @classmethod
    def always_sample(cls, n: int, user: int) -> "StationaryPolicy":
        q = [0.0] * n
        q[user] = 1.0
        return cls(tuple(q), (0.0,) * n)

    @classmethod
    def idle(cls, n: int) -> "StationaryPolicy":
        return cls((0.0,) * n, (0.0,) * n)

    def decide(self, state: SchedulerState, params: Sequence[UserParams], u: float) -> Action:
        n = state.n_users
        cum = 0.0
        for i in range(n):
            cum += self.q_sample[i]
            if u < cum:
                return Action.sample(n, i)
            cum += self.q_retx[i]
            if u < cum:
                if state.packet_ages[i] is not None:
                    return Action.retransmit(n, i)
                return Action.idle(n)
        return Action.idle(n)

    def kernel_args(self, n: int):
        if len(self.q_sample) != n:
            raise ValueError(f"policy defined for {len(self.q_sample)} users, config has {n}")
        return 2, 0.0, np.array(self.q_sample), np.array(self.q_retx)


def evaluate_stationary(policy: StationaryPolicy, config):
    """Monte Carlo metrics of ``policy`` over ``config``'s replications (averaged)."""
    from .sim import Metrics, run_replications

    cfg = config.with_policy(policy)
    return Metrics.average([r.metrics for r in run_replications(cfg)])
