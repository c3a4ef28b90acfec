"""Single-user constrained MDP oracle for the minimum average cost under an age budget.

The age process of one user is truncated at ``cap`` and the Lagrangian
cost ``c + lam * A`` is minimized by relative value iteration for each
multiplier. The smallest multiplier whose optimal policy meets the budget is
located on a grid, refined by bisection, and the two bracketing policies are
time-shared so the age constraint holds with equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix, identity
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from .model import UserParams

IDLE, SAMPLE, RETRANSMIT = 0, 1, 2
N_ACTIONS = 3


class ConvergenceError(RuntimeError):
    pass


class InfeasibleConstraintError(ValueError):
    def __init__(self, a_max: float, min_age: float):
        super().__init__(f"age budget {a_max} is below the minimum achievable average age {min_age:.6g}")
        self.a_max = a_max
        self.min_age = min_age


@dataclass
class TruncatedMdp:
    """States ``(A, A^p)`` with ``A^p = 0`` meaning no pending packet.

    Transition ``(s, a)`` goes to ``succ[s, a]`` with probability
    ``psucc[s, a]`` and to ``fail[s, a]`` otherwise. Invalid pairs
    (retransmit without a pending packet) have ``valid == False``.
    """

    p: float
    c_sample: float
    c_transmit: float
    cap: int
    states: list[tuple[int, int]]
    age: np.ndarray
    cost: np.ndarray
    succ: np.ndarray
    fail: np.ndarray
    psucc: np.ndarray
    valid: np.ndarray

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def start(self) -> int:
        return 0  # (1, no packet)

    @classmethod
    def build(cls, params: UserParams, cap: int) -> "TruncatedMdp":
        if cap < 2:
            raise ValueError("cap must be at least 2")
        states = [(a, b) for a in range(1, cap + 1) for b in range(a)]
        index = {s: k for k, s in enumerate(states)}
        n = len(states)
        age = np.array([a for a, _ in states], dtype=np.float64)
        cost = np.zeros((n, N_ACTIONS))
        succ = np.zeros((n, N_ACTIONS), np.int64)
        fail = np.zeros((n, N_ACTIONS), np.int64)
        psucc = np.ones((n, N_ACTIONS))
        valid = np.ones((n, N_ACTIONS), bool)

        def clip(a, b):
            a = min(a, cap)
            return index[(a, min(b, a - 1) if b else 0)]

        for k, (a, b) in enumerate(states):
            nxt = clip(a + 1, b + 1 if b else 0)
            succ[k, IDLE] = fail[k, IDLE] = nxt

            cost[k, SAMPLE] = params.c_sample + params.c_transmit
            succ[k, SAMPLE] = index[(1, 0)]
            fail[k, SAMPLE] = clip(a + 1, 1)
            psucc[k, SAMPLE] = params.p

            if b:
                cost[k, RETRANSMIT] = params.c_transmit
                succ[k, RETRANSMIT] = index[(b + 1, 0)]
                fail[k, RETRANSMIT] = nxt
                psucc[k, RETRANSMIT] = params.p
            else:
                valid[k, RETRANSMIT] = False
                succ[k, RETRANSMIT] = fail[k, RETRANSMIT] = k
        return cls(params.p, params.c_sample, params.c_transmit, cap, states,
                   age, cost, succ, fail, psucc, valid)

    def transition_matrix(self, policy: np.ndarray) -> csr_matrix:
        rows = np.arange(self.n_states)
        ps = self.psucc[rows, policy]
        data = np.concatenate([ps, 1 - ps])
        cols = np.concatenate([self.succ[rows, policy], self.fail[rows, policy]])
        m = csr_matrix((data, (np.concatenate([rows, rows]), cols)),
                       shape=(self.n_states, self.n_states))
        m.sum_duplicates()
        return m


def relative_value_iteration(mdp: TruncatedMdp, lam: float, tol: float = 1e-9,
                             max_iter: int = 2_000_000, h0: Optional[np.ndarray] = None,
                             tau: float = 0.5):
    """Average-cost RVI on ``cost + lam * age`` with a self-loop aperiodicity transform.

    Returns ``(gain, bias, policy)``; ties in the greedy policy go to the
    lowest action index (idle first). ``h0`` warm-starts from a previous bias.
    """
    stage = np.where(mdp.valid, mdp.cost + lam * mdp.age[:, None], np.inf)
    # iterate on the bias of the lazy chain, which is bias / (1 - tau)
    h = np.zeros(mdp.n_states) if h0 is None else h0 / (1 - tau)
    for _ in range(max_iter):
        q = stage + (1 - tau) * (mdp.psucc * h[mdp.succ] + (1 - mdp.psucc) * h[mdp.fail])
        th = q.min(axis=1) + tau * h
        diff = th - h
        lo, hi = diff.min(), diff.max()
        h = th - th[mdp.start]
        if hi - lo < tol:
            break
    else:
        raise ConvergenceError(f"value iteration did not converge for lambda={lam}")
    q = stage + (1 - tau) * (mdp.psucc * h[mdp.succ] + (1 - mdp.psucc) * h[mdp.fail])
    return (lo + hi) / 2, (1 - tau) * h, np.argmin(q, axis=1)


def policy_averages(mdp: TruncatedMdp, policy: np.ndarray) -> tuple[float, float]:
    """Long-run (Cesaro) average cost and age from the start state under a deterministic policy."""
    n = mdp.n_states
    rows = np.arange(n)
    P = mdp.transition_matrix(policy)
    stage_cost = mdp.cost[rows, policy]
    _, labels = connected_components(P, directed=True, connection="strong")
    # closed classes: no probability mass leaves the component
    coo = P.tocoo()
    leaks = np.zeros(labels.max() + 1, bool)
    leaks[labels[coo.row[labels[coo.row] != labels[coo.col]]]] = True
    closed = [c for c in range(len(leaks)) if not leaks[c]]
    recurrent = np.isin(labels, closed)
    transient = np.flatnonzero(~recurrent)

    absorb = {}
    if recurrent[mdp.start]:
        absorb = {labels[mdp.start]: 1.0}
    else:
        # absorption probabilities from the transient set into each closed class
        Q = P[transient][:, transient]
        A = (identity(len(transient), format="csc") - Q).tocsc()
        start_pos = int(np.searchsorted(transient, mdp.start))
        for c in closed:
            members = np.flatnonzero(labels == c)
            r = np.asarray(P[transient][:, members].sum(axis=1)).ravel()
            if not r.any():
                continue
            x = np.atleast_1d(spsolve(A, r))
            if x[start_pos] > 0:
                absorb[c] = float(x[start_pos])

    avg_cost = avg_age = 0.0
    for c, w in absorb.items():
        members = np.flatnonzero(labels == c)
        pi = _stationary(P[members][:, members])
        avg_cost += w * float(pi @ stage_cost[members])
        avg_age += w * float(pi @ mdp.age[members])
    return avg_cost, avg_age


def _stationary(Pc) -> np.ndarray:
    m = Pc.shape[0]
    if m == 1:
        return np.ones(1)
    A = (Pc.T - identity(m, format="csr")).tolil()
    A[0, :] = np.ones(m)
    b = np.zeros(m)
    b[0] = 1.0
    pi = np.atleast_1d(spsolve(A.tocsc(), b))
    return pi / pi.sum()


@dataclass
class LagrangianPoint:
    lam: float
    gain: float
    cost: float
    age: float
    policy: np.ndarray = field(repr=False)


@dataclass
class CmdpSolution:
    c_opt: float
    age: float
    multiplier: float
    mix_weight: float          # time share of the low-multiplier (cheaper, older) policy
    low: LagrangianPoint
    high: LagrangianPoint
    grid: list[LagrangianPoint]
    dual_bound: float          # max over evaluated multipliers of gain - lam * a_max


def default_lambda_grid() -> np.ndarray:
    return np.geomspace(1e-3, 1e3, 61)


def solve_constrained_mdp(mdp: TruncatedMdp, a_max: float,
                          lambda_grid: Optional[Sequence[float]] = None,
                          min_cap_ratio: float = 3.0, tol: float = 1e-9,
                          bisect_steps: int = 60) -> CmdpSolution:
    """Estimate the minimum long-run average cost subject to average age <= ``a_max``."""
    if mdp.cap < min_cap_ratio * a_max:
        raise ValueError(f"cap {mdp.cap} is below {min_cap_ratio} x a_max = {min_cap_ratio * a_max}")
    lams = np.asarray(default_lambda_grid() if lambda_grid is None else lambda_grid, dtype=np.float64)
    if lams.size == 0 or (lams < 0).any() or (np.diff(lams) <= 0).any():
        raise ValueError("lambda grid must be nonempty, nonnegative and ascending")

    h = None

    def evaluate(lam):
        nonlocal h
        # the stage cost scales with lam, so the stopping rule does too
        gain, h, pol = relative_value_iteration(mdp, lam, tol=tol * max(1.0, lam), h0=h)
        c, a = policy_averages(mdp, pol)
        return LagrangianPoint(float(lam), gain, c, a, pol)

    grid = [evaluate(lam) for lam in lams]
    feasible = [k for k, pt in enumerate(grid) if pt.age <= a_max]
    extra = []
    if not feasible:
        min_age = min_average_age(mdp, tol)
        if min_age > a_max:
            raise InfeasibleConstraintError(a_max, min_age)
        lam = lams[-1]
        while lam < 1e12:
            lam *= 10
            extra.append(evaluate(lam))
            if extra[-1].age <= a_max:
                break
        else:
            raise InfeasibleConstraintError(a_max, min_average_age(mdp))
    points = grid + extra
    k = len(points) - 1 if not feasible else feasible[0]
    high = points[k]
    dual = max(pt.gain - pt.lam * a_max for pt in points)
    if k == 0:
        return CmdpSolution(high.cost, high.age, high.lam, 0.0, high, high, grid, dual)

    low = points[k - 1]
    for _ in range(bisect_steps):
        if high.lam - low.lam <= 1e-12 * high.lam:
            break
        mid = evaluate(np.sqrt(low.lam * high.lam) if low.lam > 0 else high.lam / 2)
        dual = max(dual, mid.gain - mid.lam * a_max)
        if mid.age <= a_max:
            high = mid
        else:
            low = mid

    theta = 0.0
    c_opt, age = high.cost, high.age
    if low.age > a_max > high.age and low.cost < high.cost:
        theta = (a_max - high.age) / (low.age - high.age)
        c_opt = theta * low.cost + (1 - theta) * high.cost
        age = theta * low.age + (1 - theta) * high.age
    return CmdpSolution(c_opt, age, high.lam, theta, low, high, grid, dual)


def min_average_age(mdp: TruncatedMdp, tol: float = 1e-9) -> float:
    """Smallest long-run average age any policy attains (costs ignored)."""
    zero_cost = TruncatedMdp(mdp.p, 0.0, 0.0, mdp.cap, mdp.states, mdp.age,
                             np.zeros_like(mdp.cost), mdp.succ, mdp.fail, mdp.psucc, mdp.valid)
    _, _, pol = relative_value_iteration(zero_cost, 1.0, tol=tol)
    return policy_averages(mdp, pol)[1]
