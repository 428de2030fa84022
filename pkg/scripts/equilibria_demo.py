"""Multiple equilibria under one policy: find them, classify their stability.

The bundled 1x1 sigmoid instance has three fixed points under full
concentration; this prints where each init lands, the Jacobian spectrum at
the landing point, and what a small perturbation does to the unstable one.
"""

import argparse
import sys

import numpy as np

from twoside_sim import (THREE_EQUILIBRIA_INITS, PopulationState,
                         find_fixed_point, jacobian_eigenvalues, rollout,
                         step, three_equilibria_env)

PI = [[1.0]]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eta", type=float, default=0.5)
    args = ap.parse_args(argv)

    env = three_equilibria_env(eta=args.eta)
    landed = {}
    for name, init in THREE_EQUILIBRIA_INITS.items():
        fp = find_fixed_point(env, PI, init)
        rep = jacobian_eigenvalues(env, PI, fp)
        landed[name] = fp
        eigs = ", ".join(f"{abs(e):.4f}" for e in rep.eigenvalues)
        verdict = "stable" if rep.stable else "UNSTABLE"
        print(f"init {name:5s}: viewer {fp.viewer[0]:.6f}  provider "
              f"{fp.provider[0]:.6f}  |eig| = [{eigs}]  -> {verdict}")

    # nudge the middle equilibrium and watch it fall toward a stable one
    mid = landed["mid"]
    state = PopulationState(t=0, viewer=mid.viewer + 1e-6, provider=mid.provider)
    for _ in range(400):
        state = step(env, state, PI)
    print(f"mid + 1e-6 after 400 steps: viewer {state.viewer[0]:.6f} "
          f"(drifted to the '{'high' if state.viewer[0] > 0.5 else 'low'}' basin)")

    traj = rollout(env, lambda e, s: np.array(PI), 50, THREE_EQUILIBRIA_INITS["mid"])
    print(f"welfare along the mid trajectory: first {traj.steps[0].welfare:.4f}, "
          f"last {traj.steps[-1].welfare:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
