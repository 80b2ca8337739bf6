import numpy as np
import pytest

from zsig.dimred import fit_pca, inverse_transform, transform
from zsig.errors import ZsigError


def eig_oracle(X, d):
    """Dense eigendecomposition of the explicitly formed covariance."""
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:d]
    return mean, evecs[:, order].T, evals[order]


@pytest.fixture
def five_points_3d():
    return np.array(
        [
            [1.0, 2.0, 0.5],
            [2.0, 3.5, 1.0],
            [0.0, 0.5, -0.5],
            [3.0, 5.5, 2.5],
            [-1.0, -1.5, -1.0],
        ]
    )


def test_collinear_data():
    t = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    X = np.stack([t, t], axis=1)  # points on y = x
    model = fit_pca(X, 1)
    direction = model.basis[0]
    np.testing.assert_allclose(np.abs(direction), [1 / np.sqrt(2)] * 2, atol=1e-12)
    # variance along the line equals the 1-D sample variance of the projections
    proj = transform(model, X)[:, 0]
    np.testing.assert_allclose(model.explained_variance[0], proj.var(ddof=1), atol=1e-12)


def test_full_rank_round_trip(five_points_3d):
    X = five_points_3d + np.random.default_rng(1).standard_normal((5, 3)) * 0.3
    model = fit_pca(X, 3)
    np.testing.assert_allclose(model.basis @ model.basis.T, np.eye(3), atol=1e-8)
    recon = inverse_transform(model, transform(model, X))
    np.testing.assert_allclose(recon, X, atol=1e-6)


def test_matches_eigendecomposition_oracle(five_points_3d):
    model = fit_pca(five_points_3d, 2)
    mean, basis, variances = eig_oracle(five_points_3d, 2)
    np.testing.assert_allclose(model.mean, mean, atol=1e-12)
    np.testing.assert_allclose(model.explained_variance, variances, atol=1e-8)
    for got, want in zip(model.basis, basis):
        sign = np.sign(got @ want)
        np.testing.assert_allclose(got, sign * want, atol=1e-8)


def test_transform_of_mean_is_zero(five_points_3d):
    model = fit_pca(five_points_3d, 2)
    np.testing.assert_allclose(transform(model, model.mean[None, :]), 0.0, atol=1e-12)


def test_projections_match_oracle(five_points_3d):
    model = fit_pca(five_points_3d, 2)
    mean, basis, _ = eig_oracle(five_points_3d, 2)
    got = transform(model, five_points_3d)
    want = (five_points_3d - mean) @ basis.T
    for col in range(2):
        sign = np.sign(got[0, col] * want[0, col]) or 1.0
        np.testing.assert_allclose(got[:, col], sign * want[:, col], atol=1e-8)


def test_reconstruction_error_non_increasing_in_d():
    X = np.random.default_rng(7).standard_normal((30, 6)) * np.array([5, 4, 3, 2, 1, 0.5])
    errs = []
    for d in range(1, 7):
        model = fit_pca(X, d)
        recon = inverse_transform(model, transform(model, X))
        errs.append(np.linalg.norm(X - recon))
    assert all(a >= b - 1e-10 for a, b in zip(errs, errs[1:]))


def test_variance_sum_equals_trace_at_full_rank():
    X = np.random.default_rng(8).standard_normal((25, 5))
    model = fit_pca(X, 5)
    total = np.trace(np.cov(X, rowvar=False))
    np.testing.assert_allclose(model.explained_variance.sum(), total, rtol=1e-6)


def test_gram_route_matches_covariance_route():
    # N < D forces the Gram path; compare against the oracle on the same data
    X = np.random.default_rng(9).standard_normal((6, 10))
    model = fit_pca(X, 4)
    _, basis, variances = eig_oracle(X, 4)
    np.testing.assert_allclose(model.explained_variance, variances, atol=1e-8)
    np.testing.assert_allclose(model.basis @ model.basis.T, np.eye(4), atol=1e-8)
    for got, want in zip(model.basis, basis):
        sign = np.sign(got @ want)
        np.testing.assert_allclose(got, sign * want, atol=1e-8)


def test_explained_variance_descending_nonnegative():
    X = np.random.default_rng(10).standard_normal((40, 8))
    model = fit_pca(X, 8)
    ev = model.explained_variance
    assert (ev >= 0).all()
    assert (np.diff(ev) <= 1e-12).all()


def test_dimension_validation():
    X = np.zeros((5, 3))
    with pytest.raises(ZsigError):
        fit_pca(X, 0)
    with pytest.raises(ZsigError):
        fit_pca(X, 4)
    with pytest.raises(ZsigError):
        fit_pca(X[:1], 1)
    model = fit_pca(np.random.default_rng(0).standard_normal((5, 3)), 2)
    with pytest.raises(ZsigError):
        transform(model, np.zeros((2, 4)))
