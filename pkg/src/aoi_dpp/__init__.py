"""Cost-minimizing sampling and transmission scheduling under average age-of-information budgets."""

from .baselines import GreedyMaxAgePolicy, StationaryPolicy, evaluate_stationary, greedy_max_age_policy
from .dpp import (CandidateKind, DppConfig, DppPolicy, SchedulerState, action_delta, choose_action,
                  drift_bound_b, update_virtual_queues)
from .model import (Action, PacketBuffer, UserParams, UserState, age_step, cost_of_action,
                    expected_delivery, packet_age, realize_delivery, validate_action)
from .oracle import TruncatedMdp, solve_constrained_mdp
from .sim import Metrics, SimConfig, SweepAxis, run_episode, step, sweep

__version__ = "0.1.0"
