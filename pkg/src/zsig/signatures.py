"""Per-class Gaussian signatures and log-density evaluation.

A signature is the sufficient statistics (mean, covariance) of one class's
Gaussian in feature space.  Three covariance modes trade statistical
efficiency against sample-size requirements: full, diagonal, unit
(identity).  Densities are always handled in log space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg

from .errors import NumericalError, ZsigError

LOG_2PI = float(np.log(2.0 * np.pi))


class CovarianceMode(str, Enum):
    FULL = "full"
    DIAGONAL = "diagonal"
    UNIT = "unit"


@dataclass(frozen=True)
class GaussianSignature:
    """Mean and covariance of one class, plus a cached log-normalizer.

    ``covariance`` is a (d, d) symmetric PD matrix in full mode, a (d,)
    positive vector in diagonal mode, and None in unit mode.  ``chol`` is
    the lower Cholesky factor, cached for full mode only.
    """

    mean: np.ndarray
    mode: CovarianceMode
    covariance: np.ndarray | None
    log_norm: float
    chol: np.ndarray | None = None
    class_id: int | None = None

    @property
    def dim(self):
        return self.mean.shape[0]


def make_signature(mean, mode, covariance=None, class_id=None):
    """Build a signature, validating the covariance and caching factors."""
    mean = np.asarray(mean, dtype=np.float64)
    if mean.ndim != 1:
        raise ZsigError("signature mean must be a vector")
    d = mean.shape[0]
    mode = CovarianceMode(mode)
    chol = None
    if mode is CovarianceMode.UNIT:
        covariance = None
        log_norm = -0.5 * d * LOG_2PI
    elif mode is CovarianceMode.DIAGONAL:
        covariance = np.asarray(covariance, dtype=np.float64)
        if covariance.shape != (d,):
            raise ZsigError(f"diagonal covariance must have shape ({d},)")
        if not np.isfinite(covariance).all() or covariance.min() <= 0:
            raise NumericalError(f"non-positive diagonal covariance (class {class_id})")
        log_norm = -0.5 * (d * LOG_2PI + float(np.log(covariance).sum()))
    else:
        covariance = np.asarray(covariance, dtype=np.float64)
        if covariance.shape != (d, d):
            raise ZsigError(f"full covariance must have shape ({d}, {d})")
        if not np.isfinite(covariance).all():
            raise NumericalError(f"non-finite covariance (class {class_id})")
        asym = np.abs(covariance - covariance.T).max()
        if asym > 1e-10 * max(1.0, np.abs(covariance).max()):
            raise NumericalError(f"covariance not symmetric (class {class_id})")
        try:
            chol = scipy.linalg.cholesky(covariance, lower=True)
        except scipy.linalg.LinAlgError:
            raise NumericalError(f"covariance not positive definite (class {class_id})") from None
        log_norm = -0.5 * d * LOG_2PI - float(np.log(np.diag(chol)).sum())
    return GaussianSignature(
        mean=mean, mode=mode, covariance=covariance, log_norm=log_norm, chol=chol, class_id=class_id
    )


def default_ridge(X):
    """Scale-relative ridge: 1e-4 times the mean feature variance."""
    X = np.asarray(X, dtype=np.float64)
    var = float(X.var(axis=0).mean())
    return 1e-4 * var if var > 0 else 1e-4


def estimate_signatures(X, y, mode, ridge):
    """Estimate one signature per class present in ``y``.

    Means are per-class sample means; full covariances are per-class sample
    covariances under the 1/N_k convention plus ridge * I (so one-point
    classes stay well-defined); diagonal keeps the diagonal; unit is the
    identity.  Output is ordered by ascending class id.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] != y.shape[0]:
        raise ZsigError(f"{X.shape[0]} rows but {y.shape[0]} labels")
    if not np.isfinite(X).all():
        raise NumericalError("non-finite value in features")
    if ridge <= 0:
        raise ZsigError(f"ridge must be positive; got {ridge}")
    mode = CovarianceMode(mode)
    d = X.shape[1]
    sigs = []
    for cls in np.unique(y):
        rows = X[y == cls]
        if rows.shape[0] == 0:
            raise ZsigError(f"class {cls} has no instances")
        mean = rows.mean(axis=0)
        if mode is CovarianceMode.UNIT:
            cov = None
        else:
            centered = rows - mean
            if mode is CovarianceMode.DIAGONAL:
                cov = (centered**2).mean(axis=0) + ridge
            else:
                cov = centered.T @ centered / rows.shape[0] + ridge * np.eye(d)
        sigs.append(make_signature(mean, mode, cov, class_id=int(cls)))
    return sigs


def log_densities(sig, X):
    """Vectorized multivariate normal log-density of each row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != sig.dim:
        raise ZsigError(f"expected dimension {sig.dim}, got {X.shape[1]}")
    diff = X - sig.mean
    if sig.mode is CovarianceMode.UNIT:
        maha = (diff**2).sum(axis=1)
    elif sig.mode is CovarianceMode.DIAGONAL:
        maha = (diff**2 / sig.covariance).sum(axis=1)
    else:
        sol = scipy.linalg.solve_triangular(sig.chol, diff.T, lower=True)
        maha = (sol**2).sum(axis=0)
    return sig.log_norm - 0.5 * maha


def log_density(sig, x):
    """Log-density of a single point under the signature's Gaussian."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ZsigError("x must be a vector")
    return float(log_densities(sig, x[None, :])[0])


def signature_to_dict(sig):
    payload = None
    if sig.mode is CovarianceMode.DIAGONAL:
        payload = sig.covariance.tolist()
    elif sig.mode is CovarianceMode.FULL:
        payload = sig.covariance.tolist()
    return {
        "class_id": sig.class_id,
        "mean": sig.mean.tolist(),
        "mode": sig.mode.value,
        "covariance": payload,
    }


def signature_from_dict(doc):
    return make_signature(
        np.asarray(doc["mean"], dtype=np.float64),
        CovarianceMode(doc["mode"]),
        None if doc["covariance"] is None else np.asarray(doc["covariance"], dtype=np.float64),
        class_id=doc.get("class_id"),
    )


def save_signatures(sigs, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([signature_to_dict(s) for s in sigs], fh, sort_keys=True)
        fh.write("\n")


def load_signatures(path):
    with open(path, "r", encoding="utf-8") as fh:
        return [signature_from_dict(doc) for doc in json.load(fh)]
