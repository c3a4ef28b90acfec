"""Experiment execution and CSV / summary emission.

Files written into the experiment's output directory:

trace.csv
    One row per recorded slot of replication 0 of every grid point:
    ``point, slot, avg_age_<i>..., avg_queue_<i>..., avg_cost, age_<i>..., queue_<i>...``.
    ``avg_*`` are running averages over slots 0..slot; ``age``/``queue`` are
    the values observed at the start of that slot.
sweep.csv
    One row per grid point and metric: ``point, v, p_<i>..., metric, mean, std``
    (mean and sample standard deviation over replications).
summary.txt
    Final averages, per-user age-budget verdicts and, for single-user DPP
    experiments, the cost bound check against the constrained-MDP optimum.

All floats are written with 9 significant digits.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .config import ExperimentSpec
from .dpp import DppPolicy
from .oracle import CmdpSolution, TruncatedMdp, solve_constrained_mdp
from .sim import SweepResult, sweep

log = logging.getLogger(__name__)


def fmt(x: float) -> str:
    return f"{x:.9g}"


def run_spec(spec: ExperimentSpec, workers: int = 1) -> SweepResult:
    return sweep(spec.sim, spec.sweep, keep_trace="trace" in spec.formats, workers=workers)


def trace_rows(result: SweepResult) -> tuple[list[str], list[list[str]]]:
    n = result.points[0].config.n_users
    users = range(1, n + 1)
    header = (["point", "slot"] + [f"avg_age_{i}" for i in users] + [f"avg_queue_{i}" for i in users]
              + ["avg_cost"] + [f"age_{i}" for i in users] + [f"queue_{i}" for i in users])
    rows = []
    for pt in result.points:
        tr = pt.trace
        if tr is None:
            continue
        for k in range(len(tr)):
            rows.append([str(pt.index), str(int(tr.slot[k]))]
                        + [fmt(x) for x in tr.avg_age[k]] + [fmt(x) for x in tr.avg_queue[k]]
                        + [fmt(tr.avg_cost[k])] + [str(int(a)) for a in tr.ages[k]]
                        + [fmt(x) for x in tr.queues[k]])
    return header, rows


def _v(pt) -> str:
    pol = pt.config.policy
    return fmt(pol.config.v) if isinstance(pol, DppPolicy) else ""


def sweep_rows(result: SweepResult) -> tuple[list[str], list[list[str]]]:
    n = result.points[0].config.n_users
    header = ["point", "v"] + [f"p_{i}" for i in range(1, n + 1)] + ["metric", "mean", "std"]
    rows = []
    for pt in result.points:
        lead = [str(pt.index), _v(pt)] + [fmt(u.p) for u in pt.config.users]
        for metric, mean in pt.mean.items():
            rows.append(lead + [metric, fmt(mean), fmt(pt.std[metric])])
    return header, rows


def write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


@dataclass
class Verdict:
    point: int
    user: int
    avg_age: float
    a_max: float
    limit: float

    @property
    def ok(self) -> bool:
        return self.avg_age <= self.limit


def constraint_verdicts(result: SweepResult, tolerance: float) -> list[Verdict]:
    """Per point and user: reported mean age against ``a_max * (1 + tolerance)``."""
    out = []
    for pt in result.points:
        for i, u in enumerate(pt.config.users):
            # judge the value as written to sweep.csv
            age = float(fmt(pt.mean[f"avg_age_{i + 1}"]))
            out.append(Verdict(pt.index, i + 1, age, u.a_max, u.a_max * (1 + tolerance)))
    return out


@dataclass
class BoundCheck:
    point: int
    v: float
    avg_cost: float
    std_error: float
    avg_b: float
    c_opt: float

    @property
    def upper(self) -> float:
        return self.c_opt + self.avg_b / self.v if self.v > 0 else math.inf

    @property
    def upper_ok(self) -> bool:
        return self.avg_cost <= self.upper + 3 * self.std_error

    @property
    def lower_ok(self) -> bool:
        return self.avg_cost >= self.c_opt - 3 * self.std_error


def oracle_for(user, cap_factor: int) -> CmdpSolution:
    cap = max(3, math.ceil(cap_factor * user.a_max))
    return solve_constrained_mdp(TruncatedMdp.build(user, cap), user.a_max)


def bound_checks(result: SweepResult, cap_factor: int) -> Optional[list[BoundCheck]]:
    """Cost bound check for single-user DPP runs, otherwise None."""
    if result.points[0].config.n_users != 1 or not isinstance(result.points[0].config.policy, DppPolicy):
        return None
    cache: dict = {}
    out = []
    for pt in result.points:
        user = pt.config.users[0]
        if user not in cache:
            cache[user] = oracle_for(user, cap_factor)
        reps = len(pt.runs)
        out.append(BoundCheck(pt.index, pt.config.policy.config.v, pt.mean["avg_cost"],
                              pt.std["avg_cost"] / math.sqrt(reps), pt.mean["avg_b"], cache[user].c_opt))
    return out


def summary_text(spec: ExperimentSpec, result: SweepResult, verdicts: list[Verdict],
                 checks: Optional[list[BoundCheck]]) -> str:
    sim = spec.sim
    lines = [
        f"experiment {spec.name}",
        f"users {sim.n_users}  horizon {sim.horizon}  replications {len(result.points[0].runs)}  seed {sim.seed}",
        f"age budget tolerance {fmt(spec.tolerance)} (relative)",
        "",
    ]
    by_point: dict[int, list[Verdict]] = {}
    for vd in verdicts:
        by_point.setdefault(vd.point, []).append(vd)
    for pt in result.points:
        ps = ",".join(fmt(u.p) for u in pt.config.users)
        v = _v(pt)
        lines.append(f"point {pt.index}" + (f"  v {v}" if v else "") + f"  p {ps}")
        lines.append(f"  avg_cost {fmt(pt.mean['avg_cost'])}  std {fmt(pt.std['avg_cost'])}")
        for vd in by_point[pt.index]:
            i = vd.user
            lines.append(
                f"  user {i}  avg_age {fmt(vd.avg_age)}  a_max {fmt(vd.a_max)}  limit {fmt(vd.limit)}"
                f"  tx_rate {fmt(pt.mean[f'tx_rate_{i}'])}  sample_rate {fmt(pt.mean[f'sample_rate_{i}'])}"
                f"  avg_queue {fmt(pt.mean[f'avg_queue_{i}'])}  verdict {'PASS' if vd.ok else 'FAIL'}")
    if checks:
        lines += ["", "cost bound check (B is the run average of the state-dependent drift bound, a surrogate)"]
        for bc in checks:
            lines.append(
                f"  point {bc.point}  v {fmt(bc.v)}  avg_cost {fmt(bc.avg_cost)}  se {fmt(bc.std_error)}"
                f"  c_opt {fmt(bc.c_opt)}  avg_b {fmt(bc.avg_b)}  upper {fmt(bc.upper)}"
                f"  upper_ok {bc.upper_ok}  lower_ok {bc.lower_ok}")
    all_ok = all(vd.ok for vd in verdicts)
    lines += ["", f"all age budgets met: {all_ok}"]
    return "\n".join(lines) + "\n"


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> int:
    """Run the experiment and write its output files. Returns the process exit status."""
    try:
        spec.out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory %s: %s", spec.out_dir, exc)
        return 1
    log.info("running %s into %s", spec.name, spec.out_dir)
    result = run_spec(spec, workers)
    try:
        if "trace" in spec.formats:
            write_csv(spec.out_dir / "trace.csv", *trace_rows(result))
        if "sweep" in spec.formats:
            write_csv(spec.out_dir / "sweep.csv", *sweep_rows(result))
        if "summary" in spec.formats:
            verdicts = constraint_verdicts(result, spec.tolerance)
            checks = bound_checks(result, spec.oracle_cap_factor)
            (spec.out_dir / "summary.txt").write_text(summary_text(spec, result, verdicts, checks))
    except OSError as exc:
        log.error("failed writing results: %s", exc)
        return 1
    return 0


def oracle_report(spec: ExperimentSpec, workers: int = 1) -> str:
    """Constrained-MDP optimum for a single-user spec plus the DPP bound check."""
    if spec.sim.n_users != 1:
        raise ValueError("the constrained-MDP oracle supports single-user experiments only")
    user = spec.sim.users[0]
    sol = oracle_for(user, spec.oracle_cap_factor)
    lines = [
        f"experiment {spec.name}",
        f"p {fmt(user.p)}  a_max {fmt(user.a_max)}  c_sample {fmt(user.c_sample)}  c_transmit {fmt(user.c_transmit)}",
        f"c_opt {fmt(sol.c_opt)}  age {fmt(sol.age)}  multiplier {fmt(sol.multiplier)}"
        f"  mix_weight {fmt(sol.mix_weight)}  dual_bound {fmt(sol.dual_bound)}",
    ]
    if isinstance(spec.sim.policy, DppPolicy):
        result = sweep(spec.sim, spec.sweep, keep_trace=False, workers=workers)
        for bc in bound_checks(result, spec.oracle_cap_factor):
            lines.append(
                f"v {fmt(bc.v)}  avg_cost {fmt(bc.avg_cost)}  se {fmt(bc.std_error)}  avg_b {fmt(bc.avg_b)}"
                f"  upper {fmt(bc.upper)}  upper_ok {bc.upper_ok}  lower_ok {bc.lower_ok}")
    return "\n".join(lines) + "\n"
