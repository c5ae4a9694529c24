import numpy as np
import pytest

from fbrrt.basis import (
    ChebyshevModel,
    ValueModel,
    coefficients_from_quadratic,
    num_features,
)


def make_basis(n, offset=None, scale=None):
    return ChebyshevModel(
        state_dim=n,
        offset=np.zeros(n) if offset is None else offset,
        scale=np.ones(n) if scale is None else scale,
    )


@pytest.mark.parametrize("n,k", [(1, 3), (2, 6), (4, 15), (8, 45)])
def test_feature_count(n, k):
    assert num_features(n) == k
    assert make_basis(n).num_features == k
    assert make_basis(n).features(np.zeros(n)).shape == (k,)


def test_features_1d_endpoints():
    basis = make_basis(1)
    np.testing.assert_allclose(basis.features(np.array([0.0])), [1.0, 0.0, -1.0])
    np.testing.assert_allclose(basis.features(np.array([1.0])), [1.0, 1.0, 1.0])


def test_features_2d_hand_value():
    basis = make_basis(2)
    np.testing.assert_allclose(
        basis.features(np.array([0.5, -0.5])), [1.0, 0.5, -0.5, -0.5, -0.5, -0.25]
    )


def test_features_at_offset():
    rng = np.random.default_rng(0)
    for n in (1, 3, 5):
        offset = rng.normal(size=n)
        basis = make_basis(n, offset=offset, scale=rng.uniform(0.5, 2.0, n))
        phi = basis.features(offset)
        assert phi[0] == 1.0
        np.testing.assert_allclose(phi[1 : 1 + n], 0.0)
        np.testing.assert_allclose(phi[1 + n : 1 + 2 * n], -1.0)
        np.testing.assert_allclose(phi[1 + 2 * n :], 0.0)


def test_features_reject_nonfinite():
    basis = make_basis(2)
    with pytest.raises(ValueError):
        basis.features(np.array([1.0, np.inf]))


def test_scale_must_be_positive():
    with pytest.raises(ValueError):
        make_basis(2, scale=np.array([1.0, 0.0]))


def test_constant_model_value_and_gradient():
    basis = make_basis(3)
    model = ValueModel(basis, num_steps=4)
    alpha = np.zeros(basis.num_features)
    alpha[0] = 1.0
    model.set_coefficients(2, alpha)
    x = np.random.default_rng(1).normal(size=(10, 3))
    np.testing.assert_allclose(model.value(2, x), 1.0)
    np.testing.assert_allclose(model.gradient(2, x), 0.0)


def test_linear_model_gradient_chain_rule():
    basis = make_basis(1, scale=np.array([2.0]))
    model = ValueModel(basis, num_steps=1)
    alpha = np.zeros(3)
    alpha[1] = 1.0
    model.set_coefficients(1, alpha)
    for x in (-3.0, 0.0, 1.7):
        np.testing.assert_allclose(model.gradient(1, np.array([x])), [0.5])


@pytest.mark.parametrize("n", [1, 2, 4, 8])
def test_gradient_matches_finite_differences(n):
    rng = np.random.default_rng(n)
    basis = make_basis(n, offset=rng.normal(size=n), scale=rng.uniform(0.5, 3.0, n))
    alpha = rng.normal(size=basis.num_features)
    h = 1e-5
    for _ in range(100):
        x = rng.normal(0.0, 2.0, n)
        grad = basis.gradient(x, alpha)
        fd = np.empty(n)
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            fd[j] = (basis.value(x + e, alpha) - basis.value(x - e, alpha)) / (2 * h)
        np.testing.assert_allclose(grad, fd, rtol=1e-6, atol=1e-8)


def test_undefined_time_index_rejected():
    model = ValueModel(make_basis(2), num_steps=3)
    with pytest.raises(IndexError):
        model.value(1, np.zeros(2))
    with pytest.raises(IndexError):
        model.gradient(5, np.zeros(2))


def test_coefficients_from_quadratic_reproduces_quadratic():
    rng = np.random.default_rng(7)
    for n in (1, 2, 4):
        basis = make_basis(n, offset=rng.normal(size=n), scale=rng.uniform(0.5, 2.0, n))
        A = rng.normal(size=(n, n))
        A = 0.5 * (A + A.T)
        b = rng.normal(size=n)
        c = rng.normal()
        alpha = coefficients_from_quadratic(basis, A, b, c)
        for _ in range(50):
            x = rng.normal(0.0, 2.0, n)
            want = x @ A @ x + b @ x + c
            assert basis.value(x, alpha) == pytest.approx(want, abs=1e-10, rel=1e-10)


def test_model_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    basis = make_basis(3, offset=rng.normal(size=3), scale=rng.uniform(1, 2, 3))
    model = ValueModel(basis, num_steps=5)
    for i in (1, 3, 5):
        model.set_coefficients(i, rng.normal(size=basis.num_features))
    path = tmp_path / "model.csv"
    model.to_csv(path)
    back = ValueModel.from_csv(path, basis)
    np.testing.assert_array_equal(back.defined, model.defined)
    np.testing.assert_array_equal(back.coefficients, model.coefficients)
