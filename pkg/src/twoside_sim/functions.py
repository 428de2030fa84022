"""Closed family of monotone scalar functions with analytic derivatives.

Every reference-population curve and population-effect curve in the simulator
is one of the variants below.  Keeping the family closed (instead of accepting
arbitrary callables) makes environments serializable and keeps every derivative
exact, which the look-ahead optimizer relies on.

Variants:
    linear              slope * x + intercept            (slope >= 0)
    sigmoid_half        max * (sigma(x / tau) - 0.5)     (upper half of a sigmoid)
    saturating_exp      a0 * (1 - exp(-a1 * (x - a2))) + a3
    scaled_logistic     gain * sigma(scale * (x - shift))
    table               monotone piecewise-linear interpolation, flat outside
    weighted_sigmoid_sum  sum_i w_i * max_i * (sigma(x / tau_i) - 0.5)

The weighted sum of half-sigmoids exists so that feature-weighted quality
curves can be represented with exact gradients instead of being tabulated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import expit


class FunctionDomainError(ValueError):
    """A parameter or evaluation point is outside the variant's domain."""


class FunctionConfigError(ValueError):
    """The variant's parameters do not describe a valid monotone function."""


_SMOOTH_KINDS = ("linear", "sigmoid_half", "saturating_exp", "scaled_logistic",
                 "weighted_sigmoid_sum")
_ALL_KINDS = _SMOOTH_KINDS + ("table",)


@dataclass(frozen=True)
class ScalarFn:
    """One member of the closed function family.

    ``params`` holds plain floats (or lists for the table / weighted-sum
    variants) so the value serializes directly to JSON.  Instances are
    immutable; construct them through the helpers below, which validate.
    """

    kind: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _ALL_KINDS:
            raise FunctionConfigError(f"unknown function kind {self.kind!r}")
        _validate_params(self.kind, self.params)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": _jsonable_params(self.params)}

    @staticmethod
    def from_dict(d: dict) -> "ScalarFn":
        return ScalarFn(kind=d["kind"], params=dict(d["params"]))


def _check_finite(name: str, value) -> None:
    if not np.all(np.isfinite(value)):
        raise FunctionDomainError(f"non-finite parameter {name!r}: {value!r}")


def _validate_params(kind: str, p: dict) -> None:
    if kind == "linear":
        _check_finite("slope", p["slope"])
        _check_finite("intercept", p["intercept"])
        if p["slope"] < 0:
            raise FunctionConfigError("linear slope must be >= 0 for monotonicity")
    elif kind == "sigmoid_half":
        _check_finite("max", p["max"])
        _check_finite("tau", p["tau"])
        if p["max"] <= 0 or p["tau"] <= 0:
            raise FunctionConfigError("sigmoid_half requires max > 0 and tau > 0")
    elif kind == "saturating_exp":
        for name in ("a0", "a1", "a2", "a3"):
            _check_finite(name, p[name])
        if p["a0"] * p["a1"] < 0:
            raise FunctionConfigError(
                "saturating_exp requires a0 * a1 >= 0 for monotonicity")
    elif kind == "scaled_logistic":
        for name in ("gain", "scale", "shift"):
            _check_finite(name, p[name])
        if p["gain"] * p["scale"] < 0:
            raise FunctionConfigError(
                "scaled_logistic requires gain * scale >= 0 for monotonicity")
    elif kind == "table":
        knots = p["knots"]
        if len(knots) < 2:
            raise FunctionConfigError("table requires at least 2 knots")
        xs = np.asarray([k[0] for k in knots], dtype=float)
        ys = np.asarray([k[1] for k in knots], dtype=float)
        _check_finite("knots", xs)
        _check_finite("knots", ys)
        if np.any(np.diff(xs) <= 0):
            raise FunctionConfigError("table knot x values must be strictly increasing")
        if np.any(np.diff(ys) < 0):
            raise FunctionConfigError("table knot y values must be non-decreasing")
    elif kind == "weighted_sigmoid_sum":
        w = np.asarray(p["weights"], dtype=float)
        m = np.asarray(p["max_values"], dtype=float)
        t = np.asarray(p["taus"], dtype=float)
        for name, arr in (("weights", w), ("max_values", m), ("taus", t)):
            _check_finite(name, arr)
        if not (w.shape == m.shape == t.shape) or w.ndim != 1:
            raise FunctionConfigError(
                "weighted_sigmoid_sum arrays must be 1-d and equal length")
        if np.any(w < 0) or np.any(m <= 0) or np.any(t <= 0):
            raise FunctionConfigError(
                "weighted_sigmoid_sum requires weights >= 0, max_values > 0, taus > 0")


def _jsonable_params(p: dict) -> dict:
    out = {}
    for key, value in p.items():
        if isinstance(value, np.ndarray):
            out[key] = value.tolist()
        elif isinstance(value, (list, tuple)):
            out[key] = [list(v) if isinstance(v, (list, tuple)) else float(v) for v in value]
        else:
            out[key] = float(value)
    return out


# ---------------------------------------------------------------------------
# constructors


def linear_fn(slope: float, intercept: float = 0.0) -> ScalarFn:
    return ScalarFn("linear", {"slope": float(slope), "intercept": float(intercept)})


def sigmoid_half(max_value: float, tau: float) -> ScalarFn:
    """Upper half of a sigmoid: max * (sigma(x / tau) - 0.5); zero at x = 0."""
    return ScalarFn("sigmoid_half", {"max": float(max_value), "tau": float(tau)})


def saturating_exp(a0: float, a1: float, a2: float, a3: float) -> ScalarFn:
    return ScalarFn("saturating_exp",
                    {"a0": float(a0), "a1": float(a1), "a2": float(a2), "a3": float(a3)})


def scaled_logistic(gain: float, scale: float, shift: float) -> ScalarFn:
    return ScalarFn("scaled_logistic",
                    {"gain": float(gain), "scale": float(scale), "shift": float(shift)})


def table_fn(knots: list[tuple[float, float]]) -> ScalarFn:
    return ScalarFn("table", {"knots": [(float(x), float(y)) for x, y in knots]})


def weighted_sigmoid_sum(weights, max_values, taus) -> ScalarFn:
    """Non-negatively weighted sum of sigmoid_half components."""
    return ScalarFn("weighted_sigmoid_sum", {
        "weights": [float(w) for w in np.asarray(weights, dtype=float)],
        "max_values": [float(m) for m in np.asarray(max_values, dtype=float)],
        "taus": [float(t) for t in np.asarray(taus, dtype=float)],
    })


# ---------------------------------------------------------------------------
# evaluation


def fn_eval(fn: ScalarFn, x):
    """Evaluate fn at x.  x may be a scalar or a numpy array."""
    x = _as_finite_array(x)
    p = fn.params
    if fn.kind == "linear":
        out = p["slope"] * x + p["intercept"]
    elif fn.kind == "sigmoid_half":
        out = p["max"] * (expit(x / p["tau"]) - 0.5)
    elif fn.kind == "saturating_exp":
        out = p["a0"] * (1.0 - np.exp(-p["a1"] * (x - p["a2"]))) + p["a3"]
    elif fn.kind == "scaled_logistic":
        out = p["gain"] * expit(p["scale"] * (x - p["shift"]))
    elif fn.kind == "table":
        xs, ys = _table_arrays(fn)
        out = np.interp(x, xs, ys)  # np.interp is flat outside the knot range
    else:  # weighted_sigmoid_sum
        w, m, t = _wss_arrays(fn)
        out = (w * m) @ (expit(np.multiply.outer(1.0 / t, x)) - 0.5)
    return out if np.ndim(x) else float(out)


def fn_deriv(fn: ScalarFn, x):
    """Analytic derivative of fn at x (right-hand slope at table knots)."""
    x = _as_finite_array(x)
    p = fn.params
    if fn.kind == "linear":
        out = np.full_like(np.asarray(x, dtype=float), p["slope"])
    elif fn.kind == "sigmoid_half":
        sig = expit(x / p["tau"])
        out = p["max"] * sig * (1.0 - sig) / p["tau"]
    elif fn.kind == "saturating_exp":
        out = p["a0"] * p["a1"] * np.exp(-p["a1"] * (x - p["a2"]))
    elif fn.kind == "scaled_logistic":
        sig = expit(p["scale"] * (x - p["shift"]))
        out = p["gain"] * p["scale"] * sig * (1.0 - sig)
    elif fn.kind == "table":
        out = _table_deriv(fn, x)
    else:  # weighted_sigmoid_sum
        w, m, t = _wss_arrays(fn)
        sig = expit(np.multiply.outer(1.0 / t, x))  # one row per component
        out = (w * m / t) @ (sig * (1.0 - sig))
    return out if np.ndim(x) else float(out)


def _as_finite_array(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise FunctionDomainError(f"non-finite evaluation point {x!r}")
    return arr if arr.ndim else float(arr)


def _table_arrays(fn: ScalarFn):
    knots = fn.params["knots"]
    xs = np.asarray([k[0] for k in knots], dtype=float)
    ys = np.asarray([k[1] for k in knots], dtype=float)
    return xs, ys


def _table_deriv(fn: ScalarFn, x):
    xs, ys = _table_arrays(fn)
    slopes = np.diff(ys) / np.diff(xs)
    # index of the segment whose left knot is <= x; right-hand slope at knots
    idx = np.searchsorted(xs, x, side="right") - 1
    idx = np.clip(idx, 0, len(slopes) - 1)
    out = slopes[idx]
    # flat extrapolation outside the knot range
    out = np.where((np.asarray(x) < xs[0]) | (np.asarray(x) >= xs[-1]), 0.0, out)
    return out


def _wss_arrays(fn: ScalarFn):
    p = fn.params
    return (np.asarray(p["weights"], dtype=float),
            np.asarray(p["max_values"], dtype=float),
            np.asarray(p["taus"], dtype=float))


def is_smooth(fn: ScalarFn) -> bool:
    """True when the variant has an everywhere-exact analytic derivative."""
    return fn.kind in _SMOOTH_KINDS
