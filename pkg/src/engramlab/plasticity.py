"""Rate-based Hebbian plasticity with homeostatic synaptic scaling.

Two weight dynamics are provided for a single synapse ``w`` from a
presynaptic unit with activity ``u`` onto a postsynaptic unit with activity
``v``:

* plain Hebbian growth, ``dw/dt = mu*u*v``;
* Hebbian growth plus slow scaling toward a target activity ``v_target``
  (SPaSS), ``dw/dt = mu*u*v + gamma*(v_target - v)*w**2``.

For a linear neuron (``v = w*u``) the SPaSS rule has one positive, stable
root, available in closed form from :func:`spass_fixed_point_weight` and
:func:`spass_fixed_point_activity`. Experiments are restricted to
non-negative activities.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, InputError, SingularityError

HEBBIAN = "hebbian"
SPASS = "spass"

CONVERGENCE_TOL = 1e-8
CONVERGENCE_WINDOW = 100
OVERFLOW_GUARD = 1e12

TRAJECTORY_COLUMNS = ("t", "w", "v")


@dataclass(frozen=True)
class PlasticityParams:
    mu: float
    gamma: float
    v_target: float = 0.0

    def __post_init__(self):
        if not self.mu > 0:
            raise InputError(f"mu must be positive, got {self.mu}")
        if not self.gamma > 0:
            raise InputError(f"gamma must be positive, got {self.gamma}")
        if not self.v_target >= 0:
            raise InputError(f"v_target must be non-negative, got {self.v_target}")

    @property
    def kappa(self) -> float:
        return self.mu / self.gamma

    @property
    def scaling_too_fast(self) -> bool:
        """True when scaling is not slower than Hebbian learning (gamma >= mu)."""
        return self.gamma >= self.mu

    @classmethod
    def from_kappa(cls, kappa: float, v_target: float, gamma: float = 1.0) -> "PlasticityParams":
        return cls(mu=kappa * gamma, gamma=gamma, v_target=v_target)


@dataclass(frozen=True)
class SynapseState:
    w: float
    u_pre: float
    v_post: float = 0.0

    def __post_init__(self):
        for name in ("w", "u_pre", "v_post"):
            if not math.isfinite(getattr(self, name)):
                raise InputError(f"{name} must be finite")

    def with_linear_activity(self) -> "SynapseState":
        """State whose postsynaptic activity is recomputed as ``w * u``."""
        return SynapseState(self.w, self.u_pre, self.w * self.u_pre)


def hebbian_derivative(s: SynapseState, p: PlasticityParams) -> float:
    return p.mu * s.u_pre * s.v_post


def spass_derivative(s: SynapseState, p: PlasticityParams) -> float:
    return p.mu * s.u_pre * s.v_post + p.gamma * (p.v_target - s.v_post) * s.w ** 2


def spass_derivative_kappa_form(s: SynapseState, p: PlasticityParams) -> float:
    """Same rate factored through ``kappa = mu/gamma``."""
    return p.mu * (s.u_pre * s.v_post + (p.v_target - s.v_post) * s.w ** 2 / p.kappa)


def fixed_point_weight(u: float, kappa: float, v_target: float) -> float:
    """Positive root of ``u*w**2 - v_target*w - kappa*u**2 = 0``.

    This is where the SPaSS rate vanishes for a linear neuron. Note the root
    carries ``kappa*u`` under the square root; the variant with ``kappa/u``
    does not zero the rate unless ``u == 1`` and disagrees with
    :func:`fixed_point_activity`.
    """
    if u == 0:
        raise SingularityError("weight fixed point is singular at zero presynaptic activity")
    if u < 0 or kappa < 0 or v_target < 0:
        raise InputError("fixed point defined for u > 0, kappa >= 0, v_target >= 0")
    half = v_target / (2.0 * u)
    return half + math.sqrt(kappa * u + half * half)


def fixed_point_activity(u: float, kappa: float, v_target: float) -> float:
    if u < 0 or kappa < 0 or v_target < 0:
        raise InputError("fixed point defined for u >= 0, kappa >= 0, v_target >= 0")
    half = v_target / 2.0
    return half + math.sqrt(kappa * u ** 3 + half * half)


def spass_fixed_point_weight(u: float, p: PlasticityParams) -> float:
    return fixed_point_weight(u, p.kappa, p.v_target)


def spass_fixed_point_activity(u: float, p: PlasticityParams) -> float:
    return fixed_point_activity(u, p.kappa, p.v_target)


@dataclass
class Trajectory:
    t: np.ndarray
    w: np.ndarray
    v: np.ndarray
    converged: bool = False
    steps: int = 0
    converged_step: int | None = None

    @property
    def w_final(self) -> float:
        return float(self.w[-1])

    def rows(self):
        for row in zip(self.t.tolist(), self.w.tolist(), self.v.tolist()):
            yield row

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRAJECTORY_COLUMNS)
            for t, w, v in self.rows():
                writer.writerow((repr(t), repr(w), repr(v)))


_RULES = {HEBBIAN: hebbian_derivative, SPASS: spass_derivative}


def integrate(
    rule: str,
    s0: SynapseState,
    p: PlasticityParams,
    dt: float,
    t_max: float,
    linear_neuron: bool = False,
    *,
    method: str = "euler",
    tol: float = CONVERGENCE_TOL,
    window: int = CONVERGENCE_WINDOW,
    overflow: float = OVERFLOW_GUARD,
    record_every: int = 1,
    stop_on_convergence: bool = True,
) -> Trajectory:
    """Integrate one synapse with fixed-step explicit Euler (or RK4).

    In ``linear_neuron`` mode the postsynaptic activity is recomputed as
    ``w*u`` before every evaluation; otherwise it stays at ``s0.v_post``.
    The run counts as converged once ``|dw/dt| < tol`` has held for
    ``window`` consecutive steps. Raises :class:`DivergenceError` if ``|w|``
    passes ``overflow``; the partial trajectory is attached to the error.
    """
    if rule not in _RULES:
        raise InputError(f"unknown rule {rule!r}; expected one of {sorted(_RULES)}")
    if not dt > 0 or not t_max >= dt:
        raise InputError("need dt > 0 and t_max >= dt")
    if method not in ("euler", "rk4"):
        raise InputError(f"unknown method {method!r}")
    mu, gamma, vt = p.mu, p.gamma, p.v_target
    u = s0.u_pre
    v_fixed = s0.v_post

    # Scalar closures avoid dataclass construction inside the hot loop.
    if rule == HEBBIAN:
        def f(w):
            v = w * u if linear_neuron else v_fixed
            return mu * u * v
    else:
        def f(w):
            v = w * u if linear_neuron else v_fixed
            return mu * u * v + gamma * (vt - v) * w * w

    n_steps = int(round(t_max / dt))
    ts, ws, vs = [0.0], [s0.w], [s0.w * u if linear_neuron else v_fixed]
    w = s0.w
    calm = 0
    converged_step = None
    step = 0
    for step in range(1, n_steps + 1):
        if method == "euler":
            dw = f(w)
            w_next = w + dt * dw
        else:
            k1 = f(w)
            k2 = f(w + 0.5 * dt * k1)
            k3 = f(w + 0.5 * dt * k2)
            k4 = f(w + dt * k3)
            dw = k1
            w_next = w + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        if not math.isfinite(w_next) or abs(w_next) > overflow:
            traj = Trajectory(np.array(ts), np.array(ws), np.array(vs), False, step - 1)
            err = DivergenceError(f"|w| exceeded overflow guard {overflow:g}", step)
            err.trajectory = traj
            raise err
        w = w_next
        if step % record_every == 0 or step == n_steps:
            ts.append(step * dt)
            ws.append(w)
            vs.append(w * u if linear_neuron else v_fixed)
        calm = calm + 1 if abs(dw) < tol else 0
        if calm >= window and converged_step is None:
            converged_step = step
            if stop_on_convergence:
                if ts[-1] != step * dt:
                    ts.append(step * dt)
                    ws.append(w)
                    vs.append(w * u if linear_neuron else v_fixed)
                break
    return Trajectory(np.array(ts), np.array(ws), np.array(vs),
                      converged_step is not None, step, converged_step)
