"""Outer solve loop: forward sampling, backward fit, policy scoring, erosion.

Each iteration grows the tree (or regenerates chains in baseline mode), fits
the value coefficients backward in time, scores the induced feedback policy
by Monte Carlo rollout from the initial state, and prunes the tree for the
next round. The returned model is the snapshot from the cheapest iteration;
the final iteration's model is kept alongside.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .backward import BackwardConfig, backward_pass, lambda_search
from .basis import ChebyshevModel, ValueModel
from .erode import erode
from .forward import ForwardConfig, forward_pass, parallel_forward_pass
from .problem import SocProblem, argmin_policy
from .tree import BranchTree, em_step

__all__ = ["SolverConfig", "IterationReport", "SolveResult", "policy_cost", "solve", "derive_rng"]

log = logging.getLogger(__name__)

# stream tags for deriving independent generators from one seed
_STREAM_FORWARD = 1
_STREAM_POLICY = 2
_STREAM_LAMBDA = 3


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent, reproducible generator for (seed, *key)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


@dataclass
class SolverConfig:
    """All solve-loop tunables; dt is horizon / num_steps."""

    forward: ForwardConfig
    particles: int = 1024
    erode_particles: int = 512
    num_steps: int = 64
    iterations: int = 10
    rollout_count: int = 256
    lambda_rollouts: int = 128
    seed: int = 0
    backward: BackwardConfig = field(default_factory=BackwardConfig)

    def __post_init__(self):
        if not (0 < self.erode_particles < self.particles):
            raise ValueError("need 0 < erode width < particle count")
        if self.num_steps < 2:
            raise ValueError("need at least 2 time steps")
        if self.iterations < 1 or self.rollout_count < 1:
            raise ValueError("iterations and rollout_count must be positive")

    def dt_for(self, problem: SocProblem) -> float:
        return problem.horizon / self.num_steps


@dataclass
class IterationReport:
    iteration: int
    policy_cost: float
    policy_cost_se: float
    best_cost_so_far: float
    chosen_lambda: float
    wall_time: float
    width_min: int
    width_max: int


@dataclass
class SolveResult:
    model: ValueModel
    reports: list[IterationReport]
    last_model: ValueModel
    best_iteration: int
    tree: BranchTree
    diagnostics: list[dict]


def policy_cost(
    problem: SocProblem, model: ValueModel, rollout_count: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Mean and standard error of the rollout cost of the fitted policy.

    Simulates independent Euler-Maruyama trajectories from the initial state
    under u_i = argmin-policy(gradient of alpha_{i+1}); non-finite
    trajectories are excluded with a logged count.
    """
    n_steps = model.num_steps
    for i in range(1, n_steps + 1):
        if not model.defined[i]:
            raise ValueError(f"policy cost needs coefficients at every index 1..{n_steps}; {i} missing")
    dt = problem.horizon / n_steps
    sqrt_dt = np.sqrt(dt)
    n = problem.state_dim
    x = np.broadcast_to(problem.initial_state, (rollout_count, n)).copy()
    total = np.zeros(rollout_count)
    for i in range(n_steps):
        t_i = i * dt
        u = argmin_policy(problem, t_i, x, model.gradient(i + 1, x))
        total += problem.running_cost(t_i, x, u) * dt
        w = rng.normal(0.0, sqrt_dt, (rollout_count, n))
        x = em_step(x, problem.drift(t_i, x, u), w, problem.diffusion(t_i, x), dt)
    total += problem.terminal_cost(x)
    finite = np.isfinite(total)
    excluded = int(rollout_count - finite.sum())
    if excluded:
        log.warning("policy cost: excluded %d non-finite rollouts", excluded)
    if not np.any(finite):
        raise RuntimeError("policy cost: every rollout diverged")
    vals = total[finite]
    se = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return float(vals.mean()), se


def solve(problem: SocProblem, config: SolverConfig) -> SolveResult:
    """Run the full iterative scheme and return the best-cost model."""
    dt = config.dt_for(problem)
    n_steps = config.num_steps
    basis = ChebyshevModel(
        state_dim=problem.state_dim,
        offset=0.5 * (config.forward.roi_lower + config.forward.roi_upper),
        scale=0.5 * (config.forward.roi_upper - config.forward.roi_lower),
    )
    model = ValueModel(basis, n_steps)
    parallel = config.forward.mode == "parallel_baseline"
    tree = BranchTree(problem.initial_state, n_steps, dt, config.particles, config.erode_particles)

    reports: list[IterationReport] = []
    diagnostics: list[dict] = []
    best_cost = np.inf
    best_model = None
    best_iteration = 0

    for k in range(1, config.iterations + 1):
        start = time.perf_counter()
        fwd_rng = derive_rng(config.seed, _STREAM_FORWARD, k)
        stage = "forward"
        try:
            if parallel:
                tree = parallel_forward_pass(
                    problem, model if k > 1 else None, config.particles, n_steps, dt, fwd_rng
                )
            else:
                # first iteration has nothing to exploit: force full RRT exploration
                fwd_cfg = config.forward if k > 1 else replace(config.forward, eps_rrt=1.0, eps_opt=0.0)
                forward_pass(tree, model if k > 1 else None, problem, fwd_cfg, fwd_rng)

            stage = "backward"
            chosen_lambda = config.backward.lam
            if config.backward.lambda_grid:
                lam_rng = derive_rng(config.seed, _STREAM_LAMBDA, k)
                chosen_lambda, result, _ = lambda_search(
                    tree, problem, model, config.backward,
                    config.backward.lambda_grid, config.lambda_rollouts, lam_rng,
                )
            else:
                result = backward_pass(tree, problem, model, config.backward)
            for row in result.diagnostics:
                diagnostics.append({"iteration": k, **row})

            stage = "policy_cost"
            cost_rng = derive_rng(config.seed, _STREAM_POLICY, k)
            cost, se = policy_cost(problem, model, config.rollout_count, cost_rng)

            stage = "erode"
            if not parallel:
                erode(tree, result.heuristics, config.erode_particles)
        except Exception as exc:
            raise RuntimeError(f"iteration {k} failed in {stage} pass: {exc}") from exc

        if cost < best_cost:
            best_cost = cost
            best_model = model.copy()
            best_iteration = k
        widths = tree.widths()[1:]
        reports.append(
            IterationReport(
                iteration=k,
                policy_cost=cost,
                policy_cost_se=se,
                best_cost_so_far=best_cost,
                chosen_lambda=chosen_lambda,
                wall_time=time.perf_counter() - start,
                width_min=min(widths),
                width_max=max(widths),
            )
        )
        log.info(
            "iteration %d: cost=%.6g (se %.2g) best=%.6g lambda=%g [%.2fs]",
            k, cost, se, best_cost, chosen_lambda, reports[-1].wall_time,
        )

    return SolveResult(
        model=best_model,
        reports=reports,
        last_model=model,
        best_iteration=best_iteration,
        tree=tree,
        diagnostics=diagnostics,
    )
