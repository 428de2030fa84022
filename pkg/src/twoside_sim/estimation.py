"""Learning unknown dynamics from rollout logs.

The platform observes per-step satisfaction, exposure, and utilities, knows
the reactiveness rates, and recovers each group's reference-population curve
by inverting the update rule, then fits a concave saturating-exponential
model to the recovered targets.  An explore-then-commit loop burns in with an
exploratory policy, then alternates refitting with deploying the optimized
policy of the fitted surrogate environment.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .dynamics import (Trajectory, TrajectoryStep, trajectory_header)
from .functions import ScalarFn, saturating_exp
from .model import (EnvironmentSpec, Payoffs, PolicyMatrix, PopulationState,
                    as_rows, epsilon_greedy, validate_policy, _readonly)
from .policies import LookaheadConfig, interpolate, myopic_greedy, optimize_lookahead


class EstimationError(RuntimeError):
    """The estimation pipeline cannot proceed."""


class InsufficientDataError(EstimationError):
    """Fewer observations than model parameters."""


class DegenerateDesignError(EstimationError):
    """Not enough distinct input values to identify the curve."""


class EstimationWarning(UserWarning):
    """A refit failed and the previous fit was kept."""


def recover_reference(lambda_t, lambda_t1, eta: float):
    """Invert one noiseless population update to expose the reference level.

    lambda_bar = (lambda_{t+1} - lambda_t) / eta + lambda_t.  Exact inverse of
    the update for eta > 0; the reference is unidentifiable at eta = 0.
    """
    if eta == 0:
        raise EstimationError("reference population is unidentifiable when eta = 0")
    return (lambda_t1 - lambda_t) / eta + lambda_t


# ---------------------------------------------------------------------------
# saturating-exponential curve fitting


@dataclass(frozen=True)
class SaturatingExpFit:
    """Fitted params of a0*(1 - exp(-a1*(x - a2))) + a3, with fit RMSE."""

    a0: float
    a1: float
    a2: float
    a3: float
    rmse: float

    @property
    def params(self) -> tuple[float, float, float, float]:
        return (self.a0, self.a1, self.a2, self.a3)

    @property
    def fn(self) -> ScalarFn:
        return saturating_exp(self.a0, self.a1, self.a2, self.a3)

    def predict(self, x):
        expo = np.clip(-self.a1 * (np.asarray(x, dtype=float) - self.a2), -700.0, 700.0)
        return self.a0 * (1.0 - np.exp(expo)) + self.a3

    def to_dict(self) -> dict:
        return {"a0": self.a0, "a1": self.a1, "a2": self.a2, "a3": self.a3,
                "rmse": self.rmse}

    @classmethod
    def from_dict(cls, d: dict) -> "SaturatingExpFit":
        return cls(a0=d["a0"], a1=d["a1"], a2=d["a2"], a3=d["a3"], rmse=d["rmse"])


def _model(theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    a0, a1, a2, a3 = theta
    expo = np.clip(-a1 * (x - a2), -700.0, 700.0)
    return a0 * (1.0 - np.exp(expo)) + a3


def _jacobian(theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    a0, a1, a2, a3 = theta
    expo = np.clip(-a1 * (x - a2), -700.0, 700.0)
    E = np.exp(expo)
    return np.column_stack([1.0 - E, a0 * (x - a2) * E, -a0 * a1 * E, np.ones_like(x)])


def _initial_guesses(x: np.ndarray, y: np.ndarray) -> list[np.ndarray]:
    """Five deterministic starts: data-range anchors plus a spread of rate
    guesses, one of them from log-linearizing the residual toward the ceiling."""
    x_min, x_range = float(x.min()), float(np.ptp(x))
    y_min, y_range = float(y.min()), float(np.ptp(y))
    a0 = y_range if y_range > 0 else 1.0
    ceiling = y.max() + 0.05 * max(y_range, 1.0)
    w = np.log(np.maximum(ceiling - y, 1e-12))
    slope = np.polyfit(x, w, 1)[0]
    a1_ll = -slope if slope < 0 else 1.0 / x_range
    rates = [a1_ll] + [m / x_range for m in (0.5, 1.0, 2.0, 8.0)]
    return [np.array([a0, max(r, 1e-12), x_min, y_min]) for r in rates]


def fit_saturating_exp(points, init=None) -> SaturatingExpFit:
    """Least-squares fit of the concave saturating-exponential family.

    Trust-region-reflective (damped Gauss-Newton) descent from five
    deterministic starts (or the given one), keeping the lowest SSE.  a0 and
    a1 are constrained nonnegative so the fitted curve is concave and
    non-decreasing.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an iterable of (x, y) pairs")
    x, y = pts[:, 0], pts[:, 1]
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    if len(x) < 4:
        raise InsufficientDataError(
            f"need at least 4 points to fit 4 parameters, got {len(x)}")
    if len(np.unique(x)) < 3:
        raise DegenerateDesignError(
            f"need at least 3 distinct x values, got {len(np.unique(x))}")
    if np.ptp(y) == 0.0:
        # constant data: the flat member of the family, exactly
        theta = np.array([0.0, 1.0, float(x.min()), float(y[0])])
        return SaturatingExpFit(*theta, rmse=0.0)
    guesses = [np.asarray(init, dtype=float)] if init is not None else _initial_guesses(x, y)
    best_theta, best_sse = None, np.inf
    for guess in guesses:
        try:
            sol = least_squares(
                lambda th: _model(th, x) - y, guess, jac=lambda th: _jacobian(th, x),
                bounds=([0.0, 0.0, -np.inf, -np.inf], np.inf), method="trf")
        except Exception:
            continue
        sse = float(np.sum(sol.fun ** 2))
        if sse < best_sse:
            best_sse, best_theta = sse, sol.x
    if best_theta is None:
        raise EstimationError("all fitting starts failed")
    rmse = float(np.sqrt(best_sse / len(x)))
    return SaturatingExpFit(*(float(v) for v in best_theta), rmse=rmse)


# ---------------------------------------------------------------------------
# interaction logs


@dataclass(frozen=True)
class LogRecord:
    """One observed step: the populations the platform saw and the payoffs
    realized under the deployed policy."""

    t: int
    s: np.ndarray
    e: np.ndarray
    q: np.ndarray
    lambda_viewer: np.ndarray
    lambda_provider: np.ndarray

    def __post_init__(self):
        for name in ("s", "e", "q", "lambda_viewer", "lambda_provider"):
            object.__setattr__(self, name, _readonly(np.asarray(getattr(self, name), dtype=float)))


@dataclass(frozen=True)
class InteractionLog:
    records: tuple[LogRecord, ...]
    eta_viewer: np.ndarray
    eta_provider: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "eta_viewer", _readonly(np.asarray(self.eta_viewer, dtype=float)))
        object.__setattr__(self, "eta_provider", _readonly(np.asarray(self.eta_provider, dtype=float)))
        ts = [r.t for r in self.records]
        if ts and ts != list(range(ts[0], ts[0] + len(ts))):
            raise ValueError("records must be consecutive in t with no gaps")

    def __len__(self) -> int:
        return len(self.records)

    @classmethod
    def from_trajectory(cls, traj: Trajectory, eta_viewer, eta_provider) -> "InteractionLog":
        records = tuple(
            LogRecord(t=st.state.t, s=st.payoffs.s, e=st.payoffs.e, q=st.payoffs.q,
                      lambda_viewer=st.state.viewer, lambda_provider=st.state.provider)
            for st in traj.steps)
        return cls(records=records, eta_viewer=eta_viewer, eta_provider=eta_provider)


def interaction_log_to_csv(log: InteractionLog) -> str:
    """Trajectory CSV schema plus the per-pair utility columns q_k_l."""
    if not log.records:
        raise ValueError("cannot serialize an empty log")
    K = log.records[0].s.shape[0]
    L = log.records[0].e.shape[0]
    header = trajectory_header(K, L) + [f"q_{k + 1}_{l + 1}"
                                        for k in range(K) for l in range(L)]
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in log.records:
        welfare = float(r.lambda_viewer @ r.s)
        fields = ([str(r.t)]
                  + ["%.17g" % v for v in r.lambda_viewer]
                  + ["%.17g" % v for v in r.lambda_provider]
                  + ["%.17g" % v for v in r.s]
                  + ["%.17g" % v for v in r.e]
                  + ["%.17g" % welfare]
                  + ["%.17g" % v for v in r.q.ravel()])
        buf.write(",".join(fields) + "\n")
    return buf.getvalue()


def parse_interaction_csv(text: str, eta_viewer, eta_provider) -> InteractionLog:
    lines = [ln for ln in text.split("\n") if ln]
    header = lines[0].split(",")
    K = sum(1 for h in header if h.startswith("lambda_u_"))
    L = sum(1 for h in header if h.startswith("lambda_c_"))
    expected = trajectory_header(K, L) + [f"q_{k + 1}_{l + 1}"
                                          for k in range(K) for l in range(L)]
    if header != expected:
        raise ValueError(f"unexpected interaction CSV header: {header!r}")
    records = []
    for ln in lines[1:]:
        vals = [float(v) for v in ln.split(",")]
        c = 1
        lam_u = np.array(vals[c:c + K]); c += K
        lam_c = np.array(vals[c:c + L]); c += L
        s = np.array(vals[c:c + K]); c += K
        e = np.array(vals[c:c + L]); c += L
        c += 1  # welfare column is derivable
        q = np.array(vals[c:c + K * L]).reshape(K, L)
        records.append(LogRecord(t=int(vals[0]), s=s, e=e, q=q,
                                 lambda_viewer=lam_u, lambda_provider=lam_c))
    return InteractionLog(records=tuple(records), eta_viewer=eta_viewer,
                          eta_provider=eta_provider)


# ---------------------------------------------------------------------------
# fitted dynamics


@dataclass(frozen=True)
class FittedDynamics:
    """Per-curve saturating-exponential fits of the reference maps and the
    population effects."""

    lambda_bar_viewer_hat: tuple[SaturatingExpFit, ...]
    lambda_bar_provider_hat: tuple[SaturatingExpFit, ...]
    f_hat: tuple[tuple[SaturatingExpFit, ...], ...]
    b_known: bool = True

    def __post_init__(self):
        object.__setattr__(self, "lambda_bar_viewer_hat", tuple(self.lambda_bar_viewer_hat))
        object.__setattr__(self, "lambda_bar_provider_hat", tuple(self.lambda_bar_provider_hat))
        object.__setattr__(self, "f_hat", tuple(tuple(row) for row in self.f_hat))

    @property
    def fit_rmse(self) -> dict:
        return {
            "lambda_bar_viewer": [f.rmse for f in self.lambda_bar_viewer_hat],
            "lambda_bar_provider": [f.rmse for f in self.lambda_bar_provider_hat],
            "f": [[f.rmse for f in row] for row in self.f_hat],
        }

    def to_dict(self) -> dict:
        return {
            "lambda_bar_viewer_hat": [f.to_dict() for f in self.lambda_bar_viewer_hat],
            "lambda_bar_provider_hat": [f.to_dict() for f in self.lambda_bar_provider_hat],
            "f_hat": [[f.to_dict() for f in row] for row in self.f_hat],
            "b_known": self.b_known,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedDynamics":
        return cls(
            lambda_bar_viewer_hat=tuple(SaturatingExpFit.from_dict(v)
                                        for v in d["lambda_bar_viewer_hat"]),
            lambda_bar_provider_hat=tuple(SaturatingExpFit.from_dict(v)
                                          for v in d["lambda_bar_provider_hat"]),
            f_hat=tuple(tuple(SaturatingExpFit.from_dict(v) for v in row)
                        for row in d["f_hat"]),
            b_known=d.get("b_known", True),
        )

    def surrogate_env(self, B: np.ndarray | None, eta_viewer, eta_provider,
                      seed: int = 0) -> EnvironmentSpec:
        """EnvironmentSpec whose dynamics are the fitted curves.

        When base utilities were unknown during fitting they are absorbed in
        the f_hat offsets, and the surrogate B is zero.
        """
        K = len(self.lambda_bar_viewer_hat)
        L = len(self.lambda_bar_provider_hat)
        if B is None:
            B = np.zeros((K, L))
        return EnvironmentSpec(
            K=K, L=L, B=np.asarray(B, dtype=float),
            f=tuple(tuple(f.fn for f in row) for row in self.f_hat),
            lambda_bar_viewer=tuple(f.fn for f in self.lambda_bar_viewer_hat),
            lambda_bar_provider=tuple(f.fn for f in self.lambda_bar_provider_hat),
            eta_viewer=np.asarray(eta_viewer, dtype=float),
            eta_provider=np.asarray(eta_provider, dtype=float),
            seed=seed,
        )


def fit_dynamics(log: InteractionLog, B: np.ndarray | None) -> FittedDynamics:
    """Fit every reference curve and population effect from a log.

    Targets for the reference curves come from inverting consecutive
    population pairs; effects are fit on (provider population, q - b) pairs
    (or raw q when B is unknown, absorbing b into the offset).
    """
    if len(log) < 2:
        raise InsufficientDataError("need at least 2 records to recover references")
    K = log.records[0].s.shape[0]
    L = log.records[0].e.shape[0]
    lam_u = np.array([r.lambda_viewer for r in log.records])       # (T, K)
    lam_c = np.array([r.lambda_provider for r in log.records])     # (T, L)
    s = np.array([r.s for r in log.records])
    e = np.array([r.e for r in log.records])
    q = np.array([r.q for r in log.records])                       # (T, K, L)

    viewer_fits = []
    for k in range(K):
        target = recover_reference(lam_u[:-1, k], lam_u[1:, k], float(log.eta_viewer[k]))
        viewer_fits.append(fit_saturating_exp(np.column_stack([s[:-1, k], target])))
    provider_fits = []
    for l in range(L):
        target = recover_reference(lam_c[:-1, l], lam_c[1:, l], float(log.eta_provider[l]))
        provider_fits.append(fit_saturating_exp(np.column_stack([e[:-1, l], target])))
    effect_fits = []
    for k in range(K):
        row = []
        for l in range(L):
            y = q[:, k, l] if B is None else q[:, k, l] - B[k, l]
            row.append(fit_saturating_exp(np.column_stack([lam_c[:, l], y])))
        effect_fits.append(tuple(row))
    return FittedDynamics(lambda_bar_viewer_hat=tuple(viewer_fits),
                          lambda_bar_provider_hat=tuple(provider_fits),
                          f_hat=tuple(effect_fits), b_known=B is not None)


# ---------------------------------------------------------------------------
# explore-then-commit


class SimulatorBlackbox:
    """Step-and-observe handle over an environment.

    The caller sees the known quantities (B, reactiveness rates, dimensions)
    and per-step observations; the reference curves and population effects
    stay hidden behind step().
    """

    def __init__(self, env: EnvironmentSpec, init: PopulationState, seed: int = 0):
        self._env = env
        self._init = init
        self.seed = int(seed)
        self.K, self.L = env.K, env.L
        self.B = env.B
        self.eta_viewer = env.eta_viewer
        self.eta_provider = env.eta_provider
        self.env_digest = env.digest()
        self.reset()

    def reset(self) -> None:
        self._state = self._init
        self._rng = np.random.default_rng(self.seed)

    @property
    def state(self) -> PopulationState:
        return self._state

    def step(self, pi) -> LogRecord:
        """Deploy a policy for one step; returns the observation at the
        pre-step state, then advances the hidden state."""
        from .dynamics import payoffs, step as dyn_step
        rows = validate_policy(pi)
        p = payoffs(self._env, self._state, rows)
        record = LogRecord(t=self._state.t, s=p.s, e=p.e, q=p.q,
                           lambda_viewer=self._state.viewer,
                           lambda_provider=self._state.provider)
        self._state = dyn_step(self._env, self._state, rows, self._rng)
        return record


@dataclass(frozen=True)
class ExploreCommitConfig:
    T_b: int                 # burn-in steps under epsilon-greedy exploration
    T: int                   # total horizon
    beta: float              # exploration strength and interpolation weight
    refit_every: int = 1

    def __post_init__(self):
        if self.T_b < 1:
            raise ValueError("T_b must be >= 1")
        if self.T <= self.T_b:
            raise ValueError("T must exceed T_b")
        if not (0.0 <= self.beta <= 1.0):
            raise ValueError("beta must be in [0, 1]")
        if self.refit_every < 1:
            raise ValueError("refit_every must be >= 1")


def explore_then_commit(blackbox: SimulatorBlackbox, config: ExploreCommitConfig,
                        lookahead: LookaheadConfig | None = None,
                        b_known: bool = True) -> tuple[Trajectory, FittedDynamics]:
    """Burn in with epsilon-greedy exploration, then alternate refitting the
    dynamics with deploying the optimized policy of the fitted surrogate.

    A refit that fails falls back to the previous fit with a warning; a
    failure before any fit succeeded is an error.
    """
    if lookahead is None:
        lookahead = LookaheadConfig()
    blackbox.reset()
    explore_pi = epsilon_greedy(blackbox.B, config.beta)
    records: list[LogRecord] = []
    steps: list[TrajectoryStep] = []
    fitted: FittedDynamics | None = None
    committed: PolicyMatrix | None = None
    B_for_fit = blackbox.B if b_known else None
    for i in range(config.T):
        if i < config.T_b:
            pi = explore_pi
        else:
            if (i - config.T_b) % config.refit_every == 0:
                log = InteractionLog(records=tuple(records),
                                     eta_viewer=blackbox.eta_viewer,
                                     eta_provider=blackbox.eta_provider)
                try:
                    fitted = fit_dynamics(log, B_for_fit)
                except EstimationError as err:
                    if fitted is None:
                        raise EstimationError(
                            f"first dynamics fit failed at step {i}: {err}") from err
                    warnings.warn(f"refit at step {i} failed ({err}); keeping "
                                  "previous fit", EstimationWarning)
                surrogate = fitted.surrogate_env(
                    blackbox.B if b_known else None,
                    blackbox.eta_viewer, blackbox.eta_provider)
                here = blackbox.state
                pi_d = optimize_lookahead(surrogate, here, lookahead)
                pi_m = myopic_greedy(surrogate, here)
                committed = interpolate(pi_d, pi_m, config.beta)
            pi = committed
        rec = blackbox.step(pi)
        records.append(rec)
        state = PopulationState(t=rec.t, viewer=rec.lambda_viewer,
                                provider=rec.lambda_provider)
        p = Payoffs(s=rec.s, e=rec.e, q=rec.q)
        steps.append(TrajectoryStep(state=state, policy=validate_policy(pi),
                                    payoffs=p, welfare=float(rec.lambda_viewer @ rec.s)))
    traj = Trajectory(steps=tuple(steps), env_digest=blackbox.env_digest,
                      seed=blackbox.seed)
    assert fitted is not None
    return traj, fitted
