"""Forward sampling passes that populate the trajectory tree.

Two samplers share the tree container:

* the RRT branched pass, which grows every depth back up to width M by
  repeatedly selecting a parent (space-filling nearest-neighbor draw with
  probability eps_rrt, uniform otherwise), choosing a control (current
  policy with probability eps_opt, random exploration control otherwise),
  and taking one Euler-Maruyama step; and

* a parallel baseline that integrates M independent chains from the root
  with no branching, for comparison experiments.

The branched pass is sequential by design: a node added at depth i is a
candidate parent for the addition at depth i+1 of the same sweep.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .basis import ValueModel
from .problem import SocProblem, argmin_policy
from .tree import BranchTree, EdgeData, em_step

__all__ = ["ForwardConfig", "nearest", "forward_pass", "parallel_forward_pass"]

log = logging.getLogger(__name__)

MODES = ("rrt_branched", "parallel_baseline")


@dataclass
class ForwardConfig:
    """Sampling tunables: exploration probabilities and the ROI box."""

    roi_lower: np.ndarray
    roi_upper: np.ndarray
    eps_rrt: float = 0.5
    eps_opt: float = 0.5
    mode: str = "rrt_branched"
    roi_halfwidth: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.roi_lower = np.asarray(self.roi_lower, dtype=float)
        self.roi_upper = np.asarray(self.roi_upper, dtype=float)
        if not (0.0 <= self.eps_rrt <= 1.0 and 0.0 <= self.eps_opt <= 1.0):
            raise ValueError("eps_rrt and eps_opt must lie in [0, 1]")
        if np.any(self.roi_upper <= self.roi_lower):
            raise ValueError("ROI bounds must satisfy lower < upper per coordinate")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.roi_halfwidth = 0.5 * (self.roi_upper - self.roi_lower)


def nearest(states: np.ndarray, query: np.ndarray, inv_scale: np.ndarray) -> tuple[np.ndarray, int]:
    """Brute-force nearest node under coordinate-scaled Euclidean distance.

    Coordinates are scaled by the reciprocal ROI half-widths so that a unit
    of position and a unit of velocity weigh comparably.
    """
    states = np.asarray(states, dtype=float)
    if states.shape[0] == 0:
        raise ValueError("nearest: empty node list")
    diff = (states - query) * inv_scale
    idx = int(np.argmin(np.einsum("ij,ij->i", diff, diff)))
    return states[idx], idx


def _select_parent(states: np.ndarray, config: ForwardConfig, rng: np.random.Generator) -> int:
    """RRT parent draw: nearest-to-ROI-sample with prob eps_rrt, else uniform."""
    if rng.random() < config.eps_rrt:
        query = rng.uniform(config.roi_lower, config.roi_upper)
        _, idx = nearest(states, query, 1.0 / config.roi_halfwidth)
        return idx
    return int(rng.integers(states.shape[0]))


def forward_pass(
    tree: BranchTree,
    model: ValueModel | None,
    problem: SocProblem,
    config: ForwardConfig,
    rng: np.random.Generator,
) -> BranchTree:
    """Grow every depth 1..N of ``tree`` to width M (RRT branched sampling).

    Exploitation draws the policy from the next step's coefficients
    alpha_{i+1}; depths where those are not yet fitted fall back to
    exploration controls, so the first iteration explores everywhere.
    """
    dt, n_steps, m_target = tree.dt, tree.num_steps, tree.width_target
    sqrt_dt = np.sqrt(dt)
    n = problem.state_dim
    controls = problem.exploration_controls
    deficits = [m_target - tree.width(i) for i in range(n_steps + 1)]
    sweeps = max(deficits[1:], default=0)

    for _ in range(sweeps):
        for i in range(n_steps):
            if tree.width(i + 1) >= m_target:
                continue
            ids = tree.ids_at_depth(i)
            states = tree.states_at_depth(i)
            row = _select_parent(states, config, rng)
            parent_id = int(ids[row])
            x_near = states[row]
            t_i = i * dt

            exploit = rng.random() < config.eps_opt
            if exploit and model is not None and model.defined[i + 1]:
                u = argmin_policy(problem, t_i, x_near, model.gradient(i + 1, x_near))
            else:
                u = controls[rng.integers(controls.shape[0])]

            k_vec = problem.drift(t_i, x_near, u)
            w = rng.normal(0.0, sqrt_dt, n)
            child = em_step(x_near, k_vec, w, problem.diffusion(t_i, x_near), dt)
            cost_inc = float(problem.running_cost(t_i, x_near, u)) * dt
            tree.add_edge(i, parent_id, EdgeData(k_vec, w, u), child, cost_inc)
    return tree


def parallel_forward_pass(
    problem: SocProblem,
    model: ValueModel | None,
    width: int,
    num_steps: int,
    dt: float,
    rng: np.random.Generator,
    erode_width: int | None = None,
) -> BranchTree:
    """M independent Euler-Maruyama chains from the initial state.

    Matches earlier parallel-sampled solvers: when a value model exists each
    particle follows the current policy, otherwise controls are drawn from
    the exploration set; noise is independent per particle and per step.
    The chains are returned in a fresh tree (no shared prefixes).
    """
    tree = BranchTree(problem.initial_state, num_steps, dt, width, erode_width or width)
    sqrt_dt = np.sqrt(dt)
    n = problem.state_dim
    x = np.broadcast_to(problem.initial_state, (width, n)).copy()
    parent_ids = np.full(width, tree.root_id, dtype=np.int64)

    for i in range(num_steps):
        t_i = i * dt
        if model is not None and model.defined[i + 1]:
            u = argmin_policy(problem, t_i, x, model.gradient(i + 1, x))
        else:
            picks = rng.integers(problem.exploration_controls.shape[0], size=width)
            u = problem.exploration_controls[picks]
        k_vec = problem.drift(t_i, x, u)
        w = rng.normal(0.0, sqrt_dt, (width, n))
        sigma = problem.diffusion(t_i, x)
        child = em_step(x, k_vec, w, sigma, dt)
        cost_inc = problem.running_cost(t_i, x, u) * dt
        next_ids = np.empty(width, dtype=np.int64)
        for j in range(width):
            next_ids[j] = tree.add_edge(
                i, int(parent_ids[j]), EdgeData(k_vec[j], w[j], u[j]), child[j], float(cost_inc[j])
            )
        parent_ids = next_ids
        x = child
    return tree
