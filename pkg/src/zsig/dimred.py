"""PCA dimensionality reduction.

Keeps per-class covariance estimation tractable when the feature dimension
is large relative to the per-class sample counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZsigError


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray  # (D,)
    basis: np.ndarray  # (d, D), rows orthonormal principal directions
    explained_variance: np.ndarray  # (d,), descending, >= 0


def fit_pca(X, d):
    """Fit a rank-``d`` PCA model of X.

    The sample covariance uses the 1/(N-1) convention.  When D <= N the
    eigendecomposition runs on the D x D covariance, otherwise on the
    N x N Gram matrix.  Trailing near-zero variances are retained, not
    treated as errors.
    """
    X = np.asarray(X, dtype=np.float64)
    n, dim = X.shape
    if n < 2:
        raise ZsigError(f"PCA needs at least 2 rows; got {n}")
    if not 1 <= d <= min(n, dim):
        raise ZsigError(f"PCA dimension {d} out of range [1, {min(n, dim)}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    if dim <= n:
        cov = Xc.T @ Xc / (n - 1)
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1][:d]
        variances = np.maximum(evals[order], 0.0)
        basis = evecs[:, order].T
    else:
        gram = Xc @ Xc.T / (n - 1)
        evals, evecs = np.linalg.eigh(gram)
        order = np.argsort(evals)[::-1][:d]
        variances = np.maximum(evals[order], 0.0)
        scale = np.sqrt(np.maximum(variances * (n - 1), 1e-300))
        basis = (Xc.T @ evecs[:, order] / scale).T
        # near-null directions come out unnormalized; re-orthonormalize
        if variances.min() < 1e-10 * max(variances.max(), 1.0):
            q, _ = np.linalg.qr(basis.T)
            basis = q.T
    return PcaModel(mean=mean, basis=basis, explained_variance=variances)


def transform(model, X):
    """Project rows of X onto the principal directions: basis @ (x - mean)."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != model.mean.shape[0]:
        raise ZsigError(f"expected {model.mean.shape[0]} columns, got {X.shape[-1]}")
    return (X - model.mean) @ model.basis.T


def inverse_transform(model, Z):
    """Map reduced coordinates back to the original space."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape[-1] != model.basis.shape[0]:
        raise ZsigError(f"expected {model.basis.shape[0]} columns, got {Z.shape[-1]}")
    return Z @ model.basis + model.mean
