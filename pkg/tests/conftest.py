"""Shared instance generators for the test suite.

Random environments are built from a seeded generator so hypothesis can
drive them with a single integer; all sampled functions are smooth unless a
test asks for the table variant, and population effects are nonnegative on
x >= 0 so welfare stays nonnegative.
"""

from __future__ import annotations

import numpy as np

from twoside_sim import (EnvironmentSpec, NoiseSpec, PopulationState, linear_fn,
                         saturating_exp, scaled_logistic, sigmoid_half,
                         weighted_sigmoid_sum)

SMOOTH_KINDS = ("linear", "sigmoid_half", "saturating_exp", "scaled_logistic",
                "weighted_sigmoid_sum")


def random_smooth_fn(rng: np.random.Generator, nonneg: bool = False):
    kind = SMOOTH_KINDS[rng.integers(len(SMOOTH_KINDS))]
    if kind == "linear":
        return linear_fn(rng.uniform(0.0, 2.0), rng.uniform(0.0, 3.0))
    if kind == "sigmoid_half":
        return sigmoid_half(rng.uniform(1.0, 50.0), rng.uniform(1.0, 20.0))
    if kind == "saturating_exp":
        a2 = rng.uniform(-5.0, 0.0) if nonneg else rng.uniform(-5.0, 5.0)
        return saturating_exp(rng.uniform(0.5, 20.0), rng.uniform(0.01, 0.5),
                              a2, rng.uniform(0.0, 5.0))
    if kind == "scaled_logistic":
        return scaled_logistic(rng.uniform(1.0, 30.0), rng.uniform(0.05, 1.0),
                               rng.uniform(-5.0, 10.0))
    d = int(rng.integers(1, 5))
    return weighted_sigmoid_sum(rng.uniform(0.0, 1.0, d),
                                rng.uniform(0.5, 5.0, d),
                                rng.uniform(1.0, 30.0, d))


def random_env(seed: int, max_dim: int = 5, noise_std: float = 0.0) -> EnvironmentSpec:
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, max_dim + 1))
    L = int(rng.integers(1, max_dim + 1))
    B = rng.uniform(0.0, 5.0, (K, L))
    f = tuple(tuple(random_smooth_fn(rng, nonneg=True) for _ in range(L))
              for _ in range(K))
    lam_v = tuple(random_smooth_fn(rng) for _ in range(K))
    lam_c = tuple(random_smooth_fn(rng) for _ in range(L))
    return EnvironmentSpec(
        K=K, L=L, B=B, f=f, lambda_bar_viewer=lam_v, lambda_bar_provider=lam_c,
        eta_viewer=rng.uniform(0.2, 0.9, K), eta_provider=rng.uniform(0.2, 0.9, L),
        noise=NoiseSpec(relative_std=noise_std) if noise_std > 0 else None,
        seed=seed)


def random_state(seed: int, env: EnvironmentSpec, scale: float = 20.0) -> PopulationState:
    rng = np.random.default_rng([seed, 99])
    return PopulationState(t=0,
                           viewer=rng.uniform(0.0, scale, env.K),
                           provider=rng.uniform(0.0, scale, env.L))


def random_policy(seed: int, K: int, L: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 7])
    raw = rng.uniform(0.05, 1.0, (K, L))
    return raw / raw.sum(axis=1, keepdims=True)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one line per release criterion after an acceptance run."""
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None:
        return
    terminalreporter.ensure_newline()
    terminalreporter.section("acceptance criteria")
    for num, label in sorted(mod.CRITERIA.items()):
        got = mod.RESULTS.get(num)
        if got is None:
            terminalreporter.write_line(
                f"[criterion {num:02d}] NOT RUN — {label}", yellow=True)
            continue
        ok, detail = got
        word = "PASS" if ok else "FAIL"
        terminalreporter.write_line(
            f"[criterion {num:02d}] {word} — {label}: {detail}",
            green=ok, red=not ok)
