"""Per-slot system dynamics: actions, channel outcomes, age evolution and cost.

Time is slotted. In every slot at most one user transmits; a transmitting
user either samples a fresh packet at the start of the slot or retransmits
the packet it sampled earlier. Delivery succeeds with probability ``p`` and
is acknowledged instantly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class InconsistentStateError(RuntimeError):
    """Raised when a state transition is requested that the dynamics forbid."""


@dataclass(frozen=True)
class UserParams:
    p: float
    a_max: float
    c_sample: float = 1.0
    c_transmit: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        if not self.a_max > 0:
            raise ValueError(f"a_max must be positive, got {self.a_max}")
        if self.c_sample < 0 or self.c_transmit < 0:
            raise ValueError("costs must be nonnegative")


@dataclass(frozen=True)
class PacketBuffer:
    sample_slot: int
    delivered: bool = False


@dataclass(frozen=True)
class UserState:
    age: int = 1
    buffer: Optional[PacketBuffer] = None

    @property
    def has_pending(self) -> bool:
        """True when the buffer holds a packet that may be retransmitted."""
        return self.buffer is not None and not self.buffer.delivered


@dataclass(frozen=True)
class Action:
    """Joint decision for one slot: per-user sample flags ``s`` and transmit flags ``mu``."""

    s: tuple[int, ...]
    mu: tuple[int, ...]

    @classmethod
    def idle(cls, n: int) -> "Action":
        return cls((0,) * n, (0,) * n)

    @classmethod
    def sample(cls, n: int, user: int) -> "Action":
        flags = tuple(int(i == user) for i in range(n))
        return cls(flags, flags)

    @classmethod
    def retransmit(cls, n: int, user: int) -> "Action":
        return cls((0,) * n, tuple(int(i == user) for i in range(n)))

    @property
    def n_users(self) -> int:
        return len(self.mu)

    @property
    def active_user(self) -> Optional[int]:
        for i, m in enumerate(self.mu):
            if m:
                return i
        return None


def validate_action(action: Action, states: Sequence[UserState]) -> bool:
    if len(action.s) != len(states) or len(action.mu) != len(states):
        return False
    if sum(action.mu) > 1:
        return False
    for s_i, mu_i, st in zip(action.s, action.mu, states):
        if s_i not in (0, 1) or mu_i not in (0, 1):
            return False
        if s_i and not mu_i:
            return False
        if mu_i and not s_i and not st.has_pending:
            return False
    return True


def packet_age(state: UserState, now: int) -> int:
    if state.buffer is None:
        raise ValueError("packet_age queried on an empty buffer")
    if state.buffer.sample_slot > now:
        raise ValueError(f"sample slot {state.buffer.sample_slot} is after current slot {now}")
    return now - state.buffer.sample_slot


def sample_packet(state: UserState, now: int) -> UserState:
    # a fresh sample replaces whatever was buffered
    return UserState(state.age, PacketBuffer(now))


def realize_delivery(action: Action, params: Sequence[UserParams],
                     rng: np.random.Generator) -> tuple[int, ...]:
    """Draw the per-user delivery indicators for one slot.

    Exactly one uniform is consumed from ``rng`` per call, whether or not
    anyone transmits, so generator streams stay aligned with the compiled
    simulation kernel.
    """
    u = rng.random()
    d = [0] * len(params)
    i = action.active_user
    if i is not None and u < params[i].p:
        d[i] = 1
    return tuple(d)


def age_step(state: UserState, d: int, now: int) -> UserState:
    if d:
        if state.buffer is None:
            raise InconsistentStateError("delivery reported for a user with no buffered packet")
        new_age = packet_age(state, now) + 1
        return UserState(new_age, PacketBuffer(state.buffer.sample_slot, delivered=True))
    return UserState(state.age + 1, state.buffer)


def cost_of_action(action: Action, params: Sequence[UserParams]) -> float:
    return float(sum(mu * up.c_transmit + s * up.c_sample
                     for s, mu, up in zip(action.s, action.mu, params)))


def expected_delivery(s: int, mu: int, p: float) -> float:
    return p * mu + p * s - p * s * mu
