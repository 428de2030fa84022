"""Batch experiment orchestration: run named policies across seeds, emit
trajectory and regret CSVs plus a JSON summary.

Each (policy, seed) cell is independent and writes only its own files, so
cells may run in parallel; the summary is assembled after all cells finish.
The TWOSIDE_SIM_THREADS environment variable caps the worker count.
"""

from __future__ import annotations

import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .analytics import empirical_regret_suite, regret_report_to_csv, suite_summary
from .dynamics import Trajectory, rollout, trajectory_to_csv
from .model import EnvironmentSpec, PopulationState, epsilon_greedy, validate_policy
from .policies import (LookaheadConfig, interpolate, myopic_greedy,
                       optimize_lookahead, uniform_policy)
from .synthetic import SyntheticScenarioConfig, gen_synthetic, sample_initial_state

_POLICY_KINDS = ("uniform", "myopic", "epsilon_greedy", "lookahead")
_NAME_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")


class ExperimentConfigError(ValueError):
    """The experiment configuration is invalid."""


def _reject_unknown(d: dict[str, Any], allowed: set[str], what: str) -> None:
    # a typo'd optional key would otherwise be dropped silently by .get()
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ExperimentConfigError(f"{what}: unknown key(s) {unknown}")


@dataclass(frozen=True)
class PolicySpec:
    name: str
    kind: str
    epsilon: float | None = None
    beta: float | None = None
    lookahead: LookaheadConfig | None = None

    def __post_init__(self):
        if not _NAME_RE.match(self.name):
            raise ExperimentConfigError(
                f"policy name {self.name!r} must match {_NAME_RE.pattern}")
        if self.kind not in _POLICY_KINDS:
            raise ExperimentConfigError(
                f"policy {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "epsilon_greedy":
            if self.epsilon is None or not (0.0 <= self.epsilon <= 1.0):
                raise ExperimentConfigError(
                    f"policy {self.name!r}: epsilon_greedy needs epsilon in [0, 1]")
        if self.kind == "lookahead":
            beta = 1.0 if self.beta is None else self.beta
            if not (0.0 <= beta <= 1.0):
                raise ExperimentConfigError(
                    f"policy {self.name!r}: beta must be in [0, 1]")
            object.__setattr__(self, "beta", float(beta))
            if self.lookahead is None:
                object.__setattr__(self, "lookahead", LookaheadConfig())

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"name": self.name, "kind": self.kind}
        if self.epsilon is not None:
            d["epsilon"] = self.epsilon
        if self.beta is not None:
            d["beta"] = self.beta
        if self.lookahead is not None:
            d["lookahead"] = {"gamma": self.lookahead.gamma,
                              "iterations": self.lookahead.iterations,
                              "learning_rate": self.lookahead.learning_rate}
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PolicySpec":
        _reject_unknown(d, {"name", "kind", "epsilon", "beta", "lookahead"},
                        "policy spec")
        try:
            name, kind = d["name"], d["kind"]
        except KeyError as err:
            raise ExperimentConfigError(
                f"policy spec is missing {err.args[0]!r}") from err
        la = d.get("lookahead")
        return cls(name=name, kind=kind, epsilon=d.get("epsilon"),
                   beta=d.get("beta"),
                   lookahead=LookaheadConfig(**la) if la is not None else None)


def build_policy_rule(env: EnvironmentSpec, spec: PolicySpec):
    """Turn a policy spec into a per-step rule over (env, state)."""
    try:
        if spec.kind == "uniform":
            fixed = uniform_policy(env.K, env.L)
            return lambda e, s: fixed
        if spec.kind == "myopic":
            return lambda e, s: myopic_greedy(e, s)
        if spec.kind == "epsilon_greedy":
            fixed = validate_policy(epsilon_greedy(env.B, spec.epsilon))
            return lambda e, s: fixed
        if spec.kind == "lookahead":
            cfg, beta = spec.lookahead, spec.beta

            def rule(e, s):
                return interpolate(optimize_lookahead(e, s, cfg),
                                   myopic_greedy(e, s), beta)

            return rule
    except ExperimentConfigError:
        raise
    except Exception as err:
        raise ExperimentConfigError(f"policy {spec.name!r}: {err}") from err
    raise ExperimentConfigError(f"policy {spec.name!r}: unknown kind {spec.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    environment: EnvironmentSpec | SyntheticScenarioConfig
    policies: tuple[PolicySpec, ...]
    T: int
    seeds: tuple[int, ...]
    outputs: str
    init: PopulationState | None = None     # required for an inline environment
    emit_csv: bool = True
    emit_json_summary: bool = True

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(self.policies))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.policies:
            raise ExperimentConfigError("at least one policy is required")
        names = [p.name for p in self.policies]
        if len(set(names)) != len(names):
            raise ExperimentConfigError(f"duplicate policy names in {names}")
        if not self.seeds:
            raise ExperimentConfigError("seeds must be non-empty")
        if self.T < 1:
            raise ExperimentConfigError("T must be >= 1")
        if isinstance(self.environment, EnvironmentSpec) and self.init is None:
            raise ExperimentConfigError("inline environments need an explicit init")

    def resolve(self) -> tuple[EnvironmentSpec, PopulationState]:
        if isinstance(self.environment, SyntheticScenarioConfig):
            env = gen_synthetic(self.environment)
            init = self.init if self.init is not None else sample_initial_state(self.environment)
            return env, init
        return self.environment, self.init

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentConfig":
        _reject_unknown(d, {"environment", "policies", "T", "seeds", "outputs",
                            "init", "emit"}, "experiment config")
        envd = d.get("environment")
        if not isinstance(envd, dict) or not ({"synthetic", "inline"} & set(envd)):
            raise ExperimentConfigError(
                "environment must be {'synthetic': {...}} or {'inline': {...}}")
        _reject_unknown(envd, {"synthetic", "inline"}, "environment block")
        if "synthetic" in envd:
            environment: EnvironmentSpec | SyntheticScenarioConfig = (
                SyntheticScenarioConfig.from_dict(envd["synthetic"]))
            default_T = environment.T
        else:
            environment = EnvironmentSpec.from_dict(envd["inline"])
            default_T = None
        init = None
        if d.get("init") is not None:
            init = PopulationState(t=0,
                                   viewer=np.asarray(d["init"]["viewer"], dtype=float),
                                   provider=np.asarray(d["init"]["provider"], dtype=float))
        T = d.get("T", default_T)
        if T is None:
            raise ExperimentConfigError("T is required for inline environments")
        emit = d.get("emit", {})
        _reject_unknown(emit, {"csv", "json_summary"}, "emit block")
        return cls(environment=environment,
                   policies=tuple(PolicySpec.from_dict(p) for p in d.get("policies", [])),
                   T=int(T), seeds=tuple(d.get("seeds", [0])),
                   outputs=d.get("outputs", "out"), init=init,
                   emit_csv=bool(emit.get("csv", True)),
                   emit_json_summary=bool(emit.get("json_summary", True)))


def max_workers(n_cells: int) -> int:
    cap = os.environ.get("TWOSIDE_SIM_THREADS")
    if cap is not None:
        try:
            cap_n = int(cap)
        except ValueError as err:
            raise ExperimentConfigError(
                f"TWOSIDE_SIM_THREADS must be an integer, got {cap!r}") from err
        if cap_n < 1:
            raise ExperimentConfigError("TWOSIDE_SIM_THREADS must be >= 1")
        return max(1, min(cap_n, n_cells))
    return max(1, min(os.cpu_count() or 1, n_cells))


def run_experiment(config: ExperimentConfig) -> dict[str, Any]:
    """Run every (policy, seed) cell, write per-cell CSVs, and return the
    summary (also written as summary.json unless disabled)."""
    env, init = config.resolve()
    out_dir = Path(config.outputs)
    out_dir.mkdir(parents=True, exist_ok=True)
    rules = {spec.name: build_policy_rule(env, spec) for spec in config.policies}

    cells = [(spec.name, seed) for spec in config.policies for seed in config.seeds]

    def run_cell(cell: tuple[str, int]) -> tuple[tuple[str, int], Trajectory]:
        name, seed = cell
        traj = rollout(env, rules[name], config.T, init, seed=seed)
        if config.emit_csv:
            path = out_dir / f"trajectory_{name}_{seed}.csv"
            path.write_text(trajectory_to_csv(traj), newline="")
        return cell, traj

    with ThreadPoolExecutor(max_workers=max_workers(len(cells))) as pool:
        results = dict(pool.map(run_cell, cells))

    summary: dict[str, Any] = {
        "environment_digest": env.digest(),
        "T": config.T,
        "seeds": list(config.seeds),
        "policies": {},
    }
    for spec in config.policies:
        per_seed = {}
        welfare_means = []
        for seed in config.seeds:
            traj = results[(spec.name, seed)]
            last = traj.steps[-1]
            per_seed[str(seed)] = {
                "final_welfare": last.welfare,
                "final_viewer_total": float(last.state.viewer.sum()),
                "final_provider_total": float(last.state.provider.sum()),
                "cumulative_welfare": traj.cumulative_welfare(),
            }
            welfare_means.append(traj.welfare_series().mean())
        summary["policies"][spec.name] = {
            "per_seed": per_seed,
            "mean_welfare": float(np.mean(welfare_means)),
        }

    if len(config.policies) >= 2:
        regret: dict[str, Any] = {}
        for seed in config.seeds:
            suite = empirical_regret_suite(
                env, {spec.name: results[(spec.name, seed)] for spec in config.policies})
            regret[str(seed)] = suite_summary(suite)
            if config.emit_csv:
                for name, report in suite.reports.items():
                    path = out_dir / f"regret_{name}_{seed}.csv"
                    path.write_text(regret_report_to_csv(report), newline="")
        summary["regret"] = regret

    if config.emit_json_summary:
        (out_dir / "summary.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n", newline="")
    return summary
