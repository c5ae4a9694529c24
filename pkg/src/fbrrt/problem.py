"""Stochastic optimal control problem definitions.

A :class:`SocProblem` bundles controlled drift, diffusion, costs, control
bounds, and exploration controls for the finite-horizon problem

    dX = f(t, X, u) dt + sigma(t, X) dW,
    J  = E[ integral l(t, X, u) dt + g(X_T) ].

All problem callables broadcast over leading batch dimensions: states may be
``(n,)`` or ``(M, n)``, controls ``(m,)`` or ``(M, m)``. Diffusion matrices
are constant for every built-in problem and are returned as ``(n, n)``.

Four factories are provided: a scalar linear-quadratic problem with a known
closed-form value function (used as a numerical oracle), a min-fuel double
integrator, a damped double inverted pendulum, and a linearized quadcopter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "SocProblem",
    "AnalyticLqr",
    "argmin_policy",
    "make_scalar_lqr",
    "make_double_integrator",
    "make_double_pendulum",
    "make_quadcopter",
    "make_problem",
    "PROBLEM_NAMES",
]


@dataclass
class SocProblem:
    """One stochastic optimal control problem instance.

    ``drift_const`` and ``control_matrix`` give the control-affine split
    f(t, x, u) = a(t, x) + B(t, x) u used by the closed-form policy argmin;
    ``drift`` is derived from them so stored edge drifts replay bit-exactly.

    ``cost_family`` selects the running-cost shape: ``"l1"`` for
    c0 * sum_k |u_k| and ``"quadratic"`` for 0.5 * |u|^2.
    """

    name: str
    state_dim: int
    control_dim: int
    horizon: float
    drift_const: Callable[[float, np.ndarray], np.ndarray]
    control_matrix: Callable[[float, np.ndarray], np.ndarray]
    diffusion_matrix: np.ndarray
    terminal_weights: np.ndarray
    control_lower: np.ndarray
    control_upper: np.ndarray
    exploration_controls: np.ndarray
    initial_state: np.ndarray
    cost_family: str = "l1"
    control_cost_weight: float = 1.0
    _diffusion_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n, m = self.state_dim, self.control_dim
        self.diffusion_matrix = np.asarray(self.diffusion_matrix, dtype=float).reshape(n, n)
        self.terminal_weights = np.asarray(self.terminal_weights, dtype=float).reshape(n)
        self.control_lower = np.asarray(self.control_lower, dtype=float).reshape(m)
        self.control_upper = np.asarray(self.control_upper, dtype=float).reshape(m)
        self.exploration_controls = np.asarray(self.exploration_controls, dtype=float).reshape(-1, m)
        self.initial_state = np.asarray(self.initial_state, dtype=float).reshape(n)
        if self.cost_family not in ("l1", "quadratic"):
            raise ValueError(f"unknown cost family {self.cost_family!r}")
        self._diffusion_inv = np.linalg.inv(self.diffusion_matrix)

    def drift(self, t: float, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        B = self.control_matrix(t, x)
        return self.drift_const(t, x) + np.einsum("...nm,...m->...n", B, u)

    def diffusion(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.diffusion_matrix

    def diffusion_inverse(self, t: float, x: np.ndarray) -> np.ndarray:
        return self._diffusion_inv

    def running_cost(self, t: float, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.cost_family == "l1":
            return self.control_cost_weight * np.sum(np.abs(u), axis=-1)
        return 0.5 * np.sum(u * u, axis=-1)

    def terminal_cost(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.sum(self.terminal_weights * x * x, axis=-1)


@dataclass
class AnalyticLqr:
    """Closed-form value function and policy for the scalar LQR oracle.

    For dX = (X + u) dt + sigma dW with cost E[int 0.5 u^2 dt + 0.5 X_T^2],
    the value function is V(t, x) = alpha(t) x^2 + beta(t) with
    alpha(t) = (e^{-2(1-t)} + 1)^{-1} and beta solving beta' = -sigma^2 alpha,
    beta(1) = 0, i.e. beta(t) = (sigma^2 / 2) log((1 + e^{2(1-t)}) / 2).
    The optimal policy is pi(t, x) = -2 alpha(t) x.
    """

    sigma: float = 0.2

    def alpha_fn(self, t):
        return 1.0 / (np.exp(-2.0 * (1.0 - np.asarray(t, dtype=float))) + 1.0)

    def beta_fn(self, t):
        t = np.asarray(t, dtype=float)
        return 0.5 * self.sigma**2 * np.log(0.5 + 0.5 * np.exp(2.0 * (1.0 - t)))

    def value_fn(self, t, x):
        x = np.asarray(x, dtype=float)
        return self.alpha_fn(t) * x * x + self.beta_fn(t)

    def policy_fn(self, t, x):
        return -2.0 * self.alpha_fn(t) * np.asarray(x, dtype=float)


def argmin_policy(problem: SocProblem, t: float, x: np.ndarray, value_gradient: np.ndarray) -> np.ndarray:
    """Minimizer of l(t, x, u) + f(t, x, u)^T p over the control box.

    With control-affine drift only b = B(t, x)^T p matters. For the L1 cost
    each coordinate minimizes c0 |u_k| + b_k u_k over {lo_k, 0, hi_k}, which
    on [-1, 1] reduces to -sign(b_k) when |b_k| > c0 and 0 otherwise (ties
    prefer u = 0). For the quadratic cost the stationary point -b_k is
    clamped to the box.
    """
    p = np.asarray(value_gradient, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("non-finite value gradient in policy argmin")
    x = np.asarray(x, dtype=float)
    B = problem.control_matrix(t, x)
    b = np.einsum("...nm,...n->...m", B, p)
    lo, hi = problem.control_lower, problem.control_upper
    if problem.cost_family == "quadratic":
        return np.clip(-b, lo, hi)
    c0 = problem.control_cost_weight
    at_lo = c0 * np.abs(lo) + b * lo
    at_hi = c0 * np.abs(hi) + b * hi
    best = np.minimum(at_lo, at_hi)
    u = np.where(at_lo <= at_hi, lo, hi)
    return np.where(best < 0.0, u, 0.0) + np.zeros_like(b)


def _axis_controls(levels, control_dim: int) -> np.ndarray:
    grids = np.meshgrid(*([np.asarray(levels, dtype=float)] * control_dim), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def make_scalar_lqr() -> tuple[SocProblem, AnalyticLqr]:
    """Scalar linear system dX = (X + u) dt + 0.2 dW with quadratic costs.

    The control box [-50, 50] is wide enough to leave the analytic policy
    unconstrained on any reasonable region of interest.
    """
    sigma = 0.2

    def a(t, x):
        return np.asarray(x, dtype=float)

    def B(t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.ones((1, 1)), x.shape[:-1] + (1, 1))

    problem = SocProblem(
        name="lqr1d",
        state_dim=1,
        control_dim=1,
        horizon=1.0,
        drift_const=a,
        control_matrix=B,
        diffusion_matrix=np.array([[sigma]]),
        terminal_weights=np.array([0.5]),
        control_lower=np.array([-50.0]),
        control_upper=np.array([50.0]),
        exploration_controls=np.array([[-1.0], [0.0], [1.0]]),
        initial_state=np.array([1.0]),
        cost_family="quadratic",
    )
    return problem, AnalyticLqr(sigma=sigma)


def make_double_integrator(control_cost: float = 1.0, terminal_weights=(1.0, 1.0)) -> SocProblem:
    """Min-fuel double integrator: x1' = x2, x2' = u, |u| <= 1."""

    def a(t, x):
        x = np.asarray(x, dtype=float)
        return np.stack([x[..., 1], np.zeros_like(x[..., 0])], axis=-1)

    def B(t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.array([[0.0], [1.0]]), x.shape[:-1] + (2, 1))

    return SocProblem(
        name="double_integrator",
        state_dim=2,
        control_dim=1,
        horizon=4.0,
        drift_const=a,
        control_matrix=B,
        diffusion_matrix=np.diag([0.01, 0.1]),
        terminal_weights=np.asarray(terminal_weights, dtype=float),
        control_lower=np.array([-1.0]),
        control_upper=np.array([1.0]),
        exploration_controls=np.array([[-1.0], [0.0], [1.0]]),
        initial_state=np.array([1.0, 1.0]),
        cost_family="l1",
        control_cost_weight=control_cost,
    )


# Damped double inverted pendulum parameters.
_PEND = dict(d0=10.0, d1=0.37, d2=0.14, d3=0.14, f1=4.9, f2=5.5, f3=0.1, f4=0.1)


def _pendulum_terms(x):
    """Shared intermediates of the pendulum dynamics; x = (a, b, w, p)."""
    d1, d2, d3 = _PEND["d1"], _PEND["d2"], _PEND["d3"]
    f1, f2, f3, f4 = _PEND["f1"], _PEND["f2"], _PEND["f3"], _PEND["f4"]
    a, b, w, p = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    cb, sb = np.cos(b), np.sin(b)
    den = d1 * d3 + 2.0 * d2 * d3 * cb - d2**2 * cb**2
    # torque groups: s3 feeds the inner joint, s4 the outer joint
    s3 = d2 * p * p * sb + 2.0 * d2 * w * p * sb - f3 * w + f2 * np.sin(a + b) - f1 * np.sin(a)
    s4 = d2 * w * w * sb + f4 * p - f2 * np.sin(a + b)
    return cb, den, s3, s4


def make_double_pendulum(control_cost: float = 1.0, terminal_weights=(1.0, 1.0, 1.0, 1.0)) -> SocProblem:
    """Damped double inverted pendulum (n=4) with min-fuel cost, |u| <= 1.

    State is (angle1, angle2, rate1, rate2) about the unstable upright
    equilibrium at the origin. The mass-matrix determinant of this
    parameterization vanishes near |angle2| = 2.71, so the default horizon
    is short enough that trajectories stay on the physical sheet.
    """
    d0, d2, d3 = _PEND["d0"], _PEND["d2"], _PEND["d3"]

    def a_fn(t, x):
        x = np.asarray(x, dtype=float)
        cb, den, s3, s4 = _pendulum_terms(x)
        acc1 = (d3 * s3 + d2 * cb * s4) / den
        acc2 = (-(_PEND["d1"] + 2.0 * d2 * cb) * s4 - d2 * cb * s3) / den
        return np.stack([x[..., 2], x[..., 3], acc1, acc2], axis=-1)

    def B_fn(t, x):
        x = np.asarray(x, dtype=float)
        cb, den, _, _ = _pendulum_terms(x)
        zero = np.zeros_like(den)
        col = np.stack([zero, zero, d0 * d3 / den, -d0 * d2 * cb / den], axis=-1)
        return col[..., None]

    return SocProblem(
        name="double_pendulum",
        state_dim=4,
        control_dim=1,
        horizon=0.35,
        drift_const=a_fn,
        control_matrix=B_fn,
        diffusion_matrix=np.diag([0.03, 0.03, 0.18, 0.18]),
        terminal_weights=np.asarray(terminal_weights, dtype=float),
        control_lower=np.array([-1.0]),
        control_upper=np.array([1.0]),
        exploration_controls=np.array([[-1.0], [0.0], [1.0]]),
        initial_state=np.array([np.pi / 10.0, np.pi / 10.0, 0.0, 0.0]),
        cost_family="l1",
        control_cost_weight=control_cost,
    )


def make_quadcopter(terminal_weights=(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 100.0, 100.0)) -> SocProblem:
    """Linearized quadcopter (n=8, m=2) with min-fuel cost, u in [-1, 1]^2.

    State is (roll, pitch, roll rate, pitch rate, vx, vy, x, y); controls are
    the two torques.
    """
    d, g = 4.1, 9.8
    A = np.zeros((8, 8))
    A[0, 2] = 1.0
    A[1, 3] = 1.0
    A[4, 1] = -g
    A[5, 0] = g
    A[6, 4] = 1.0
    A[7, 5] = 1.0
    Bmat = np.zeros((8, 2))
    Bmat[2, 0] = d
    Bmat[3, 1] = d

    def a_fn(t, x):
        return np.asarray(x, dtype=float) @ A.T

    def B_fn(t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(Bmat, x.shape[:-1] + (8, 2))

    return SocProblem(
        name="quadcopter",
        state_dim=8,
        control_dim=2,
        horizon=2.5,
        drift_const=a_fn,
        control_matrix=B_fn,
        diffusion_matrix=np.diag([1e-5, 1e-5, 0.2, 0.2, 0.002, 0.002, 1e-5, 1e-5]),
        terminal_weights=np.asarray(terminal_weights, dtype=float),
        control_lower=np.array([-1.0, -1.0]),
        control_upper=np.array([1.0, 1.0]),
        exploration_controls=_axis_controls([-1.0, 0.0, 1.0], 2),
        initial_state=np.array([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]),
        cost_family="l1",
        control_cost_weight=1.0,
    )


PROBLEM_NAMES = ("lqr1d", "double_integrator", "double_pendulum", "quadcopter")


def make_problem(name: str, **overrides) -> SocProblem:
    """Problem factory keyed by name; cost weights accepted as overrides."""
    if name == "lqr1d":
        problem, _ = make_scalar_lqr()
    elif name == "double_integrator":
        problem = make_double_integrator(
            control_cost=overrides.pop("control_cost", 1.0),
            terminal_weights=overrides.pop("terminal_weights", (1.0, 1.0)),
        )
    elif name == "double_pendulum":
        problem = make_double_pendulum(
            control_cost=overrides.pop("control_cost", 1.0),
            terminal_weights=overrides.pop("terminal_weights", (1.0,) * 4),
        )
    elif name == "quadcopter":
        problem = make_quadcopter(
            terminal_weights=overrides.pop("terminal_weights", (1.0,) * 6 + (100.0, 100.0)),
        )
    else:
        raise ValueError(f"unknown problem {name!r}; expected one of {PROBLEM_NAMES}")
    for key, value in overrides.items():
        if key == "initial_state":
            problem.initial_state = np.asarray(value, dtype=float).reshape(problem.state_dim)
        elif key == "horizon":
            problem.horizon = float(value)
        else:
            raise ValueError(f"unknown problem override {key!r}")
    return problem
