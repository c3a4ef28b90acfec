import numpy as np
import pytest

from aoi_dpp.baselines import GreedyMaxAgePolicy, StationaryPolicy, evaluate_stationary, greedy_max_age_policy
from aoi_dpp.dpp import DppPolicy, SchedulerState
from aoi_dpp.model import Action, UserParams
from aoi_dpp.sim import SimConfig, run_episode

PARAMS = [UserParams(0.6, 5), UserParams(0.9, 4)]


class TestGreedy:
    def test_largest_ratio(self):
        st_ = SchedulerState((6, 6), (0.0, 0.0), (None, None))
        assert greedy_max_age_policy(st_, PARAMS) == Action.sample(2, 1)

    def test_ties_go_to_lowest_index(self):
        st_ = SchedulerState((10, 8), (0.0, 0.0), (None, None))
        assert greedy_max_age_policy(st_, PARAMS) == Action.sample(2, 0)

    def test_always_samples_even_with_pending(self):
        st_ = SchedulerState((3, 2), (0.0, 0.0), (1, 1))
        act = greedy_max_age_policy(st_, PARAMS)
        assert act.s == act.mu == (1, 0)

    def test_perfect_channels_alternate(self):
        users = [UserParams(1.0, 2), UserParams(1.0, 2)]
        tr = run_episode(SimConfig(users, GreedyMaxAgePolicy(), horizon=10)).trace
        # ages settle into the 2-cycle (1, 2), (2, 1)
        assert [tuple(a) for a in tr.ages[2:6]] == [(2, 1), (1, 2), (2, 1), (1, 2)]
        assert tr.mu[:, 0].tolist() == [1, 0, 1, 0, 1, 0, 1, 0, 1, 0]


class TestStationary:
    def test_rejects_bad_mass(self):
        with pytest.raises(ValueError):
            StationaryPolicy((0.6,), (0.5,))
        with pytest.raises(ValueError):
            StationaryPolicy((-0.1,), (0.0,))
        with pytest.raises(ValueError):
            StationaryPolicy((0.1, 0.1), (0.0,))

    def test_decide_order(self):
        pol = StationaryPolicy((0.2, 0.3), (0.1, 0.1))
        st_ = SchedulerState((3, 3), (0.0, 0.0), (1, None))
        assert pol.decide(st_, PARAMS, 0.1) == Action.sample(2, 0)
        assert pol.decide(st_, PARAMS, 0.25) == Action.retransmit(2, 0)
        assert pol.decide(st_, PARAMS, 0.5) == Action.sample(2, 1)
        # user 2 has no packet: its retransmit mass idles
        assert pol.decide(st_, PARAMS, 0.65) == Action.idle(2)
        assert pol.decide(st_, PARAMS, 0.95) == Action.idle(2)


class TestEvaluateStationary:
    def test_always_sample_perfect_channel(self):
        cfg = SimConfig([UserParams(1.0, 5)], DppPolicy.with_v(0), horizon=1000)
        m = evaluate_stationary(StationaryPolicy.always_sample(1, 0), cfg)
        assert m.avg_age == (1.0,)
        assert m.avg_cost == 2.0

    def test_never_transmit(self):
        horizon = 1000
        cfg = SimConfig([UserParams(0.7, 5)], DppPolicy.with_v(0), horizon=horizon)
        m = evaluate_stationary(StationaryPolicy.idle(1), cfg)
        # ages 1, 2, ..., T observed at slot start
        assert m.avg_age[0] == (horizon + 1) / 2
        assert m.avg_cost == 0

    def test_coin_flip_sampling_is_geometric(self):
        # each slot the age resets w.p. 1/2: stationary law P(A=k) = 2^-k, mean 2
        cfg = SimConfig([UserParams(1.0, 5)], DppPolicy.with_v(0), horizon=200_000, replications=4, seed=1)
        m = evaluate_stationary(StationaryPolicy((0.5,), (0.0,)), cfg)
        # var(A) = 2 and the age autocorrelation is 1/2 per lag: long-run var of the mean is 2*3/T
        se = np.sqrt(6 / (4 * 200_000))
        assert abs(m.avg_age[0] - 2.0) < 4 * se
        assert abs(m.avg_cost - 1.0) < 4 * np.sqrt(0.25 * 4 / (4 * 200_000))

    def test_lossy_channel_retransmit_mix(self):
        # single user, q_sample=1 on a p-channel: renewal age mean is 1/p
        p = 0.6
        cfg = SimConfig([UserParams(p, 5)], DppPolicy.with_v(0), horizon=200_000, replications=2, seed=2)
        m = evaluate_stationary(StationaryPolicy.always_sample(1, 0), cfg)
        assert m.avg_age[0] == pytest.approx(1 / p, rel=0.01)
        assert m.delivery_rate[0] == pytest.approx(p, rel=0.01)
