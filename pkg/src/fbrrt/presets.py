"""Recommended per-problem solver configurations.

The region-of-interest boxes, particle counts, and horizons here are tuned
defaults; every value can be overridden from the CLI or a config file. The
ROI doubles as the basis normalization box, so it should cover the states
the solved policy actually visits.
"""

from __future__ import annotations

from .backward import BackwardConfig
from .forward import ForwardConfig
from .solver import SolverConfig

__all__ = ["default_config", "DEFAULT_ROI"]

DEFAULT_ROI = {
    "lqr1d": ([-2.0], [2.0]),
    "double_integrator": ([-2.0, -2.0], [2.5, 2.0]),
    "double_pendulum": ([-1.5, -1.5, -4.0, -4.0], [1.5, 1.5, 4.0, 4.0]),
    "quadcopter": (
        [-0.6, -0.6, -2.0, -2.0, -1.5, -1.5, -1.5, -1.5],
        [0.6, 0.6, 2.0, 2.0, 1.5, 1.5, 2.0, 2.0],
    ),
}

_DEFAULTS = {
    # particles, erode width, steps, iterations
    "lqr1d": dict(particles=512, erode_particles=256, num_steps=50, iterations=3),
    "double_integrator": dict(particles=1024, erode_particles=512, num_steps=64, iterations=10),
    "double_pendulum": dict(particles=1024, erode_particles=768, num_steps=80, iterations=10),
    "quadcopter": dict(particles=1024, erode_particles=768, num_steps=64, iterations=10),
}

# The LQR value function is globally quadratic, so weak path weighting fits
# it best; the nonlinear problems keep the sharper default temperature.
_DEFAULT_LAMBDA = {"lqr1d": 10.0}


def default_config(problem_name: str, **overrides) -> SolverConfig:
    if problem_name not in DEFAULT_ROI:
        raise ValueError(f"no preset for problem {problem_name!r}")
    lo, hi = DEFAULT_ROI[problem_name]
    forward = overrides.pop("forward", None) or ForwardConfig(roi_lower=lo, roi_upper=hi)
    backward = overrides.pop("backward", None) or BackwardConfig(
        lam=_DEFAULT_LAMBDA.get(problem_name, 1.0)
    )
    params = dict(_DEFAULTS[problem_name])
    params.update(overrides)
    return SolverConfig(forward=forward, backward=backward, **params)
