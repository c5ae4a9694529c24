import numpy as np
import pytest
import sympy as sp

from fbrrt.problem import (
    AnalyticLqr,
    argmin_policy,
    make_double_integrator,
    make_double_pendulum,
    make_problem,
    make_quadcopter,
    make_scalar_lqr,
)

ALL_FACTORIES = [
    lambda: make_scalar_lqr()[0],
    make_double_integrator,
    make_double_pendulum,
    make_quadcopter,
]


def test_double_integrator_drift_substitution():
    p = make_double_integrator()
    np.testing.assert_allclose(p.drift(0.0, np.array([1.0, 2.0]), np.array([0.5])), [2.0, 0.5])


def test_double_integrator_diffusion_and_exploration():
    p = make_double_integrator()
    np.testing.assert_allclose(np.diag(p.diffusion(0.0, p.initial_state)), [0.01, 0.1])
    np.testing.assert_allclose(sorted(p.exploration_controls[:, 0]), [-1.0, 0.0, 1.0])


def test_pendulum_drift_zero_at_origin():
    p = make_double_pendulum()
    np.testing.assert_allclose(p.drift(0.0, np.zeros(4), np.zeros(1)), np.zeros(4), atol=1e-14)


def _sympy_pendulum_drift(state, u_val):
    # Independent symbolic evaluation of the double-pendulum equations of
    # motion, written from scratch with exact rationals.
    a, b, w, p, u = sp.symbols("a b w p u")
    d0, d1, d2, d3 = sp.Integer(10), sp.Rational(37, 100), sp.Rational(14, 100), sp.Rational(14, 100)
    f1, f2, f3, f4 = sp.Rational(49, 10), sp.Rational(55, 10), sp.Rational(1, 10), sp.Rational(1, 10)
    den = d1 * d3 + 2 * d2 * d3 * sp.cos(b) - d2**2 * sp.cos(b) ** 2
    g3 = (
        d3 * (d2 * p**2 * sp.sin(b) + 2 * d2 * w * p * sp.sin(b) - f3 * w + f2 * sp.sin(a + b) - f1 * sp.sin(a))
        + d2 * sp.cos(b) * (d2 * w**2 * sp.sin(b) + f4 * p - f2 * sp.sin(a + b))
        + d0 * d3 * u
    ) / den
    g4 = (
        -(d1 + 2 * d2 * sp.cos(b)) * (d2 * w**2 * sp.sin(b) + f4 * p - f2 * sp.sin(a + b))
        - d2 * sp.cos(b) * (d2 * p**2 * sp.sin(b) + 2 * d2 * w * p * sp.sin(b) - f3 * w + f2 * sp.sin(a + b) - f1 * sp.sin(a))
        - d0 * d2 * sp.cos(b) * u
    ) / den
    subs = dict(zip((a, b, w, p, u), [sp.nsimplify(v, rational=False) for v in (*state, u_val)]))
    f_sym = sp.Matrix([w, p, g3, g4]).subs(subs)
    return np.array([float(sp.N(v, 30)) for v in f_sym])


@pytest.mark.parametrize(
    "state,u",
    [
        ((np.pi / 10, np.pi / 10, 0.0, 0.0), 0.0),
        ((0.3, -0.4, 1.2, -0.7), 0.5),
        ((-1.0, 0.8, -2.0, 1.5), -1.0),
    ],
)
def test_pendulum_drift_matches_symbolic_oracle(state, u):
    p = make_double_pendulum()
    got = p.drift(0.0, np.array(state), np.array([u]))
    want = _sympy_pendulum_drift(state, u)
    np.testing.assert_allclose(got, want, atol=1e-10, rtol=0)


def test_quadcopter_drift_cases():
    p = make_quadcopter()
    np.testing.assert_allclose(
        p.drift(0.0, np.zeros(8), np.array([1.0, 0.0])), [0, 0, 4.1, 0, 0, 0, 0, 0]
    )
    np.testing.assert_allclose(
        p.drift(0.0, np.ones(8), np.zeros(2)), [1, 1, 0, 0, -9.8, 9.8, 1, 1]
    )


def test_quadcopter_terminal_weights():
    p = make_quadcopter()
    e7 = np.zeros(8)
    e7[6] = 1.0
    assert p.terminal_cost(e7) == pytest.approx(100.0)
    e1 = np.zeros(8)
    e1[0] = 1.0
    assert p.terminal_cost(e1) == pytest.approx(1.0)


def test_lqr_terminal_value_and_policy():
    _, lqr = make_scalar_lqr()
    assert lqr.value_fn(1.0, 2.0) == pytest.approx(2.0, abs=1e-12)
    assert lqr.alpha_fn(0.0) == pytest.approx(1.0 / (np.exp(-2.0) + 1.0), abs=1e-15)
    assert lqr.policy_fn(1.0, 1.0) == pytest.approx(-1.0, abs=1e-12)
    assert lqr.beta_fn(1.0) == pytest.approx(0.0, abs=1e-15)


def test_lqr_value_matches_terminal_cost_exactly():
    problem, lqr = make_scalar_lqr()
    xs = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(
        lqr.value_fn(1.0, xs), problem.terminal_cost(xs[:, None]), atol=1e-12
    )


def test_lqr_hjb_residual_analytic_derivatives():
    # alpha' = 2 alpha^2 - 2 alpha and beta' = -sigma^2 alpha, from the
    # closed forms; the residual of the dynamic-programming PDE must vanish.
    _, lqr = make_scalar_lqr()
    rng = np.random.default_rng(3)
    t = rng.uniform(0.0, 1.0, 100)
    x = rng.uniform(-2.0, 2.0, 100)
    a = lqr.alpha_fn(t)
    a_dot = 2.0 * a * a - 2.0 * a
    b_dot = -(lqr.sigma**2) * a
    v_t = a_dot * x * x + b_dot
    v_x = 2.0 * a * x
    v_xx = 2.0 * a
    u = -v_x  # unconstrained stationary point, well inside the box
    ham = 0.5 * u * u + (x + u) * v_x
    residual = v_t + 0.5 * lqr.sigma**2 * v_xx + ham
    assert np.max(np.abs(residual)) < 1e-6


def test_argmin_policy_l1_grid_oracle():
    p = make_double_integrator()
    grid = np.linspace(-1.0, 1.0, 201)
    for b2, expected in [(2.0, -1.0), (0.5, 0.0), (0.0, 0.0)]:
        # gradient component along velocity maps straight to b = B^T p
        grad = np.array([0.0, b2])
        u = argmin_policy(p, 0.0, np.zeros(2), grad)
        objective = lambda uu: p.running_cost(0.0, np.zeros(2), np.array([uu])) + p.drift(
            0.0, np.zeros(2), np.array([uu])
        ) @ grad
        best_grid = grid[np.argmin([objective(g) for g in grid])]
        assert u[0] == pytest.approx(expected)
        assert objective(u[0]) <= objective(best_grid) + 1e-12


def test_argmin_policy_rejects_nonfinite_gradient():
    p = make_double_integrator()
    with pytest.raises(ValueError):
        argmin_policy(p, 0.0, np.zeros(2), np.array([0.0, np.nan]))


@pytest.mark.parametrize("factory", ALL_FACTORIES)
def test_argmin_policy_dominates_random_controls(factory):
    problem = factory()
    rng = np.random.default_rng(11)
    n, m = problem.state_dim, problem.control_dim
    for _ in range(1000):
        t = rng.uniform(0.0, problem.horizon)
        x = rng.normal(0.0, 1.0, n)
        grad = rng.normal(0.0, 2.0, n)
        u_star = argmin_policy(problem, t, x, grad)
        best = problem.running_cost(t, x, u_star) + problem.drift(t, x, u_star) @ grad
        u_rand = rng.uniform(problem.control_lower, problem.control_upper, (100, m))
        vals = problem.running_cost(t, x, u_rand) + problem.drift(t, x[None, :], u_rand) @ grad
        assert best <= np.min(vals) + 1e-9


@pytest.mark.parametrize("factory", ALL_FACTORIES)
def test_diffusion_inverse_is_inverse(factory):
    problem = factory()
    rng = np.random.default_rng(5)
    eye = np.eye(problem.state_dim)
    for _ in range(100):
        x = rng.normal(0.0, 2.0, problem.state_dim)
        t = rng.uniform(0.0, problem.horizon)
        prod = problem.diffusion_inverse(t, x) @ problem.diffusion(t, x)
        assert np.max(np.abs(prod - eye)) < 1e-10


@pytest.mark.parametrize("factory", ALL_FACTORIES)
def test_costs_nonnegative_and_exploration_in_box(factory):
    problem = factory()
    rng = np.random.default_rng(9)
    for _ in range(200):
        t = rng.uniform(0.0, problem.horizon)
        x = rng.normal(0.0, 3.0, problem.state_dim)
        u = rng.uniform(problem.control_lower, problem.control_upper)
        assert problem.running_cost(t, x, u) >= 0.0
        assert problem.terminal_cost(x) >= 0.0
    assert np.all(problem.exploration_controls >= problem.control_lower - 1e-12)
    assert np.all(problem.exploration_controls <= problem.control_upper + 1e-12)


def test_make_problem_by_name_and_overrides():
    p = make_problem("double_integrator", control_cost=2.0, terminal_weights=(3.0, 4.0))
    assert p.control_cost_weight == 2.0
    np.testing.assert_allclose(p.terminal_weights, [3.0, 4.0])
    p2 = make_problem("lqr1d", initial_state=[0.5], horizon=1.0)
    np.testing.assert_allclose(p2.initial_state, [0.5])
    with pytest.raises(ValueError):
        make_problem("nope")
    with pytest.raises(ValueError):
        make_problem("quadcopter", bogus=1)
