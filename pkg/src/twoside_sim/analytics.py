"""Regret computation over paired trajectories.

Welfare shortfall of a subject trajectory against a designated baseline is
split exactly, at every step, into a population term (welfare gap of the
per-step best-response policy caused by the populations having drifted
apart), a policy term (gap between the best-response and the deployed policy
at the subject's own populations), and a constant term (gap between the
baseline's deployed policy and the best response at the baseline's
populations).  The three sum to the total by construction.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from .dynamics import Trajectory, payoffs, welfare
from .model import EnvironmentSpec, PopulationState, _readonly
from .policies import myopic_greedy


class PairingError(ValueError):
    """The two trajectories do not describe the same experiment."""


@dataclass(frozen=True)
class RegretReport:
    t: np.ndarray
    per_step_total: np.ndarray
    per_step_population: np.ndarray
    per_step_policy: np.ndarray
    per_step_const: np.ndarray
    cumulative_total: np.ndarray
    mean_total: float

    def __post_init__(self):
        for name in ("t", "per_step_total", "per_step_population",
                     "per_step_policy", "per_step_const", "cumulative_total"):
            object.__setattr__(self, name, _readonly(np.asarray(getattr(self, name))))


@dataclass(frozen=True)
class RegretSuite:
    baseline: str
    reports: dict[str, RegretReport]


def _welfare_at(env: EnvironmentSpec, state: PopulationState, pi) -> float:
    return welfare(state, payoffs(env, state, pi))


def decompose_regret(env: EnvironmentSpec, baseline: Trajectory,
                     subject: Trajectory) -> RegretReport:
    """Per-step regret of `subject` against `baseline`, exactly decomposed.

    At each step, with the per-step best response pi1 = myopic_greedy at the
    respective populations:

        total      = R(baseline policy; baseline pops) - R(subject policy; subject pops)
        population = R(pi1 at baseline pops) - R(pi1 at subject pops)
        policy     = R(pi1 at subject pops) - R(subject policy; subject pops)
        const      = R(baseline policy; baseline pops) - R(pi1 at baseline pops)

    Recorded welfare values are reused for the two deployed-policy terms, so
    a subject that deployed the best response has a policy term of exactly 0.
    """
    digest = env.digest()
    if baseline.env_digest != digest or subject.env_digest != digest:
        raise PairingError("trajectories were not produced by this environment")
    if len(baseline) != len(subject):
        raise PairingError(
            f"horizon mismatch: baseline {len(baseline)} vs subject {len(subject)}")
    T = len(baseline)
    total = np.empty(T)
    population = np.empty(T)
    policy = np.empty(T)
    const = np.empty(T)
    ts = np.empty(T, dtype=int)
    for i, (b, s) in enumerate(zip(baseline.steps, subject.steps)):
        best_at_subject = _welfare_at(env, s.state, myopic_greedy(env, s.state))
        best_at_baseline = _welfare_at(env, b.state, myopic_greedy(env, b.state))
        total[i] = b.welfare - s.welfare
        population[i] = best_at_baseline - best_at_subject
        policy[i] = best_at_subject - s.welfare
        const[i] = b.welfare - best_at_baseline
        ts[i] = s.state.t
    return RegretReport(t=ts, per_step_total=total, per_step_population=population,
                        per_step_policy=policy, per_step_const=const,
                        cumulative_total=np.cumsum(total),
                        mean_total=float(total.mean()))


def empirical_regret_suite(env: EnvironmentSpec,
                           trajectories: dict[str, Trajectory]) -> RegretSuite:
    """Decompose every trajectory against the empirically best one.

    The baseline is the trajectory with the highest cumulative welfare (ties
    broken by insertion order); its self-report is included and has zero
    total regret.  All regrets are empirical — relative to the best policy
    actually run, not a certified optimum.
    """
    if len(trajectories) < 2:
        raise PairingError("need at least 2 trajectories to compare")
    baseline_name = max(trajectories, key=lambda n: trajectories[n].cumulative_welfare())
    base = trajectories[baseline_name]
    reports = {name: decompose_regret(env, base, traj)
               for name, traj in trajectories.items()}
    return RegretSuite(baseline=baseline_name, reports=reports)


# ---------------------------------------------------------------------------
# emission


def regret_report_to_csv(report: RegretReport) -> str:
    buf = io.StringIO()
    buf.write("t,total,population,policy,const,cumulative\n")
    for i in range(len(report.t)):
        buf.write(",".join([str(int(report.t[i]))]
                           + ["%.17g" % v for v in (report.per_step_total[i],
                                                    report.per_step_population[i],
                                                    report.per_step_policy[i],
                                                    report.per_step_const[i],
                                                    report.cumulative_total[i])])
                  + "\n")
    return buf.getvalue()


def suite_summary(suite: RegretSuite) -> dict:
    """JSON-ready summary: baseline name plus per-trajectory means."""
    return {
        "baseline": suite.baseline,
        "regrets": "empirical (relative to the best policy run, not a certified optimum)",
        "reports": {
            name: {
                "mean_total": rep.mean_total,
                "final_cumulative_total": float(rep.cumulative_total[-1]),
            }
            for name, rep in suite.reports.items()
        },
    }


def suite_summary_json(suite: RegretSuite) -> str:
    return json.dumps(suite_summary(suite), indent=2, sort_keys=True)
