"""Entropy-weighted least-squares Monte Carlo backward pass.

Starting from the terminal cost, each step regresses a one-step value
estimate onto the basis features of the previous-step states. The estimate
for path j is

    y_hat_j = V(x_{i+1}; alpha_{i+1}) + (l(t_i, x_i, mu_j) + z_j . d_j) dt,

where mu_j is the current policy, z_j = sigma^T grad V is the martingale
term, and d_j = sigma^{-1} (f(t_i, x_i, mu_j) - k_j) compensates for the
sampled edge drift k_j differing from the policy drift (off-policy
correction; d vanishes on on-policy edges).

Regression weights soft-min the path heuristic rho_j = V(x_{i+1}) plus the
accumulated running cost: theta_j = exp(-(rho_j - min rho)/lambda). The min
subtraction only conditions the exponentials; the weighted minimizer is
unchanged.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .basis import ValueModel
from .problem import SocProblem, argmin_policy
from .tree import BranchTree, PathSample

__all__ = [
    "BackwardConfig",
    "BackwardStepRecord",
    "BackwardResult",
    "estimator_step",
    "step_records",
    "entropy_weights",
    "heuristic_rho",
    "weighted_fit",
    "backward_pass",
    "lambda_search",
]

log = logging.getLogger(__name__)

RIDGE_PER_ROW = 1e-8


@dataclass
class BackwardConfig:
    """Backward-pass tunables.

    ``ridge`` is the absolute Tikhonov weight added to the regression; None
    selects the default 1e-8 per sample row. The ridge term is a departure
    from a plain QR solve: degenerate sample clusters can make the feature
    matrix rank-deficient, and a tiny ridge keeps every step solvable.
    """

    lam: float = 1.0
    lambda_grid: tuple[float, ...] | None = None
    ridge: float | None = None

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.ridge is not None and self.ridge < 0:
            raise ValueError("ridge must be nonnegative")
        if self.lambda_grid is not None:
            self.lambda_grid = tuple(float(v) for v in self.lambda_grid)
            if any(v <= 0 for v in self.lambda_grid):
                raise ValueError("lambda grid values must be positive")

    def ridge_for(self, rows: int) -> float:
        return RIDGE_PER_ROW * rows if self.ridge is None else self.ridge


@dataclass
class BackwardStepRecord:
    """Per-path intermediates of one backward step (arrays over paths)."""

    node_ids: np.ndarray
    y_next: np.ndarray
    z_next: np.ndarray
    mu: np.ndarray
    d: np.ndarray
    y_hat: np.ndarray
    rho: np.ndarray
    theta: np.ndarray


@dataclass
class BackwardResult:
    model: ValueModel
    heuristics: dict[int, float]
    diagnostics: list[dict]


def step_records(
    problem: SocProblem,
    model: ValueModel,
    i: int,
    x_i: np.ndarray,
    k_i: np.ndarray,
    x_next: np.ndarray,
    dt: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Estimator intermediates (y_next, z, mu, d, y_hat) for a path batch.

    Uses alpha_{i+1}; the policy and the drift correction share the single
    gradient evaluation at x_{i+1}.
    """
    t_i = i * dt
    t_next = (i + 1) * dt
    y_next = model.value(i + 1, x_next)
    grad = model.gradient(i + 1, x_next)
    sigma = problem.diffusion(t_next, x_next)
    z = np.einsum("...ba,...b->...a", sigma, grad)
    mu = argmin_policy(problem, t_i, x_i, grad)
    f_mu = problem.drift(t_i, x_i, mu)
    sigma_inv = problem.diffusion_inverse(t_next, x_next)
    d = np.einsum("...ab,...b->...a", sigma_inv, f_mu - k_i)
    run = problem.running_cost(t_i, x_i, mu)
    y_hat = y_next + (run + np.sum(z * d, axis=-1)) * dt
    return y_next, z, mu, d, y_hat


def estimator_step(
    problem: SocProblem,
    model: ValueModel,
    i: int,
    path_triple: tuple[np.ndarray, np.ndarray, np.ndarray],
    dt: float,
) -> tuple[np.ndarray, np.ndarray]:
    """One-step value estimate for a single transition (x_i, k_i, x_{i+1}).

    Returns (y_hat, y_next); y_next is the heuristic contribution of the
    path head. Non-finite intermediates are rejected.
    """
    x_i, k_i, x_next = (np.asarray(v, dtype=float) for v in path_triple)
    y_next, z, mu, d, y_hat = step_records(problem, model, i, x_i, k_i, x_next, dt)
    for name, val in (("y_next", y_next), ("z", z), ("mu", mu), ("d", d), ("y_hat", y_hat)):
        if not np.all(np.isfinite(val)):
            raise FloatingPointError(f"non-finite {name} in estimator step at time index {i}")
    return y_hat, y_next


def heuristic_rho(path: PathSample, model: ValueModel) -> float:
    """Path heuristic: fitted value at the path head plus accumulated cost."""
    return float(model.value(path.depth, path.state) + path.accumulated_cost)


def entropy_weights(rho: np.ndarray, lam: float) -> np.ndarray:
    """Soft-min weights exp(-(rho - min rho)/lambda), unnormalized.

    The regression normalizer cancels in the weighted argmin, so weights are
    left with max exactly 1. Entries of +inf get weight 0; NaN or an
    all-infinite vector is rejected.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    rho = np.asarray(rho, dtype=float)
    if np.any(np.isnan(rho)):
        raise ValueError("NaN heuristic value")
    finite = np.isfinite(rho)
    if not np.any(finite):
        raise ValueError("all heuristic values are infinite")
    return np.exp(-(rho - rho[finite].min()) / lam)


def weighted_fit(features: np.ndarray, targets: np.ndarray, weights: np.ndarray, ridge: float) -> np.ndarray:
    """Solve min_a sum_j w_j (y_j - Phi_j a)^2 + ridge ||a||^2.

    Row-scales by sqrt(w) and solves the (optionally ridge-augmented) system
    with an orthogonal-factorization least-squares solve. With ridge = 0 a
    rank-deficient system is an error naming the deficient column count.
    """
    phi = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    w = np.asarray(weights, dtype=float)
    rows, k = phi.shape
    if rows < k:
        raise ValueError(f"need at least {k} rows, got {rows}")
    if np.any(w < 0):
        raise ValueError("negative regression weight")
    if np.count_nonzero(w > 0) < k:
        raise ValueError(f"fewer than {k} strictly positive weights")
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(y)) and np.all(np.isfinite(w))):
        raise ValueError("non-finite regression input")
    s = np.sqrt(w)
    a_mat = phi * s[:, None]
    b_vec = y * s
    if ridge > 0:
        a_mat = np.vstack([a_mat, np.sqrt(ridge) * np.eye(k)])
        b_vec = np.concatenate([b_vec, np.zeros(k)])
    alpha, _, rank, _ = np.linalg.lstsq(a_mat, b_vec, rcond=None)
    if ridge == 0 and rank < k:
        raise np.linalg.LinAlgError(
            f"rank-deficient regression: {k - rank} of {k} columns unresolved (ridge=0)"
        )
    return alpha


def _fit_diagnostics(i, phi, y_hat, theta, alpha):
    s = np.sqrt(theta)
    resid = float(np.linalg.norm(s * (phi @ alpha - y_hat)))
    scaled = phi * s[:, None]
    sv = np.linalg.svd(scaled, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    return {
        "time_index": i,
        "ess": float(theta.sum() / theta.max()),
        "residual_norm": resid,
        "condition": cond,
    }


def backward_pass(
    tree: BranchTree,
    problem: SocProblem,
    model: ValueModel,
    config: BackwardConfig,
    collect_diagnostics: bool = True,
) -> BackwardResult:
    """Fit alpha_N..alpha_1 over the tree's path measures (in place).

    The terminal step fits the exact terminal cost; its weights use
    rho_N = accumulated cost + g(x_N), the terminal extension of the path
    heuristic. Interior steps follow the one-step estimator. Heuristic
    values for every node (depths 1..N) are returned for erosion.
    """
    dt, n_steps = tree.dt, tree.num_steps
    lam = config.lam
    basis = model.basis
    heuristics: dict[int, float] = {}
    diagnostics: list[dict] = []

    ids, _, _, x_term, acc = tree.path_arrays(n_steps)
    y_term = problem.terminal_cost(x_term)
    rho_term = acc + y_term
    theta = entropy_weights(rho_term, lam)
    phi = basis.features(x_term)
    try:
        alpha = weighted_fit(phi, y_term, theta, config.ridge_for(len(y_term)))
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise RuntimeError(f"terminal fit failed at time index {n_steps}: {exc}") from exc
    model.set_coefficients(n_steps, alpha)
    heuristics.update(zip((int(v) for v in ids), rho_term))
    if collect_diagnostics:
        diagnostics.append(_fit_diagnostics(n_steps, phi, y_term, theta, alpha))

    for i in range(n_steps - 1, 0, -1):
        ids, x_i, k_i, x_next, acc = tree.path_arrays(i + 1)
        y_next, z, mu, d, y_hat = step_records(problem, model, i, x_i, k_i, x_next, dt)
        if not np.all(np.isfinite(y_hat)):
            bad = ids[~np.isfinite(y_hat)]
            raise RuntimeError(
                f"non-finite estimate at time index {i} for path nodes {bad[:5].tolist()}"
            )
        rho = y_next + acc
        # Depth N keeps the exact-terminal heuristic computed above.
        if i + 1 < n_steps:
            heuristics.update(zip((int(v) for v in ids), rho))
        theta = entropy_weights(rho, lam)
        phi = basis.features(x_i)
        try:
            alpha = weighted_fit(phi, y_hat, theta, config.ridge_for(len(y_hat)))
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise RuntimeError(f"regression failed at time index {i}: {exc}") from exc
        model.set_coefficients(i, alpha)
        if collect_diagnostics:
            diagnostics.append(_fit_diagnostics(i, phi, y_hat, theta, alpha))

    # Depth-1 nodes are never a path head inside the loop; extend the
    # heuristic with the freshly fitted alpha_1 so erosion covers them.
    ids1 = tree.ids_at_depth(1)
    x1 = tree.states_at_depth(1)
    rho1 = model.value(1, x1) + tree.accumulated_costs_at_depth(1)
    heuristics.update(zip((int(v) for v in ids1), rho1))

    return BackwardResult(model=model, heuristics=heuristics, diagnostics=diagnostics)


def lambda_search(
    tree: BranchTree,
    problem: SocProblem,
    model: ValueModel,
    config: BackwardConfig,
    lambda_grid,
    rollout_count: int,
    rng: np.random.Generator,
) -> tuple[float, BackwardResult, float]:
    """Pick the temperature whose fitted policy rolls out cheapest.

    Every candidate is scored with an identical rollout-noise stream so the
    comparison is paired; candidates whose fit or score fails are skipped
    with a warning. Ties go to the smaller lambda.
    """
    from .solver import policy_cost  # local import; solver depends on this module

    grid = sorted(set(float(v) for v in lambda_grid))
    if not grid:
        raise ValueError("empty lambda grid")
    seed_state = rng.bit_generator.state
    best = None
    for lam in grid:
        candidate_cfg = BackwardConfig(lam=lam, ridge=config.ridge)
        candidate_model = model.copy()
        try:
            result = backward_pass(tree, problem, candidate_model, candidate_cfg)
            eval_rng = np.random.default_rng()
            eval_rng.bit_generator.state = seed_state
            cost, _ = policy_cost(problem, candidate_model, rollout_count, eval_rng)
        except (RuntimeError, ValueError, FloatingPointError) as exc:
            log.warning("lambda search: skipping lambda=%g (%s)", lam, exc)
            continue
        if not np.isfinite(cost):
            log.warning("lambda search: skipping lambda=%g (non-finite policy cost)", lam)
            continue
        if best is None or cost < best[2]:
            best = (lam, result, cost)
    if best is None:
        raise RuntimeError("lambda search: every candidate failed")
    lam, result, cost = best
    model.coefficients = result.model.coefficients
    model.defined = result.model.defined
    result.model = model
    return lam, result, cost
