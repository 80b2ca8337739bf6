"""Sparse synthesis of virtual signatures for unseen classes.

Each unseen label embedding is reconstructed over the dictionary of seen
label embeddings by a lasso

    min_a  ||e - D a||^2 + lam * |a|_1        (unhalved quadratic)

solved with cyclic coordinate descent and soft-thresholding, and the same
coefficients are transferred to the seen class signatures to synthesize
the unseen class's Gaussian.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCodeError, NumericalError, ZsigError
from .signatures import CovarianceMode, make_signature

DEAD_ZONE = 1e-12


@dataclass(frozen=True)
class SparseCode:
    coefficients: np.ndarray  # (K_s,), signed, exact zeros below DEAD_ZONE
    objective: float
    iterations: int  # full coordinate sweeps performed
    converged: bool


def _soft_threshold(value, thresh):
    if value > thresh:
        return value - thresh
    if value < -thresh:
        return value + thresh
    return 0.0


def lasso_objective(dictionary, target, alpha, lam):
    resid = target - dictionary @ alpha
    return float(resid @ resid + lam * np.abs(alpha).sum())


def solve_lasso(dictionary, target, lam, tol=1e-10, max_iters=1000):
    """Cyclic coordinate descent on the unhalved lasso objective.

    The coordinate-j update is a_j <- S(c_j, lam/2) / ||d_j||^2 with
    c_j = d_j . (e - sum_{i != j} d_i a_i); the lam/2 threshold comes from
    the quadratic term carrying no 1/2 factor.  Non-convergence within
    ``max_iters`` sweeps is flagged on the result, not raised.
    """
    D = np.asarray(dictionary, dtype=np.float64)
    e = np.asarray(target, dtype=np.float64)
    if D.ndim != 2 or e.ndim != 1 or D.shape[0] != e.shape[0]:
        raise ZsigError(f"dictionary {D.shape} incompatible with target {e.shape}")
    if not (np.isfinite(D).all() and np.isfinite(e).all() and np.isfinite(lam)):
        raise NumericalError("non-finite lasso input")
    if lam < 0:
        raise ZsigError(f"lambda must be >= 0; got {lam}")
    if tol <= 0:
        raise ZsigError(f"tol must be positive; got {tol}")
    col_sq = (D**2).sum(axis=0)
    if col_sq.min() <= 0:
        raise ZsigError(f"dictionary column {int(np.argmin(col_sq))} is all-zero")

    k = D.shape[1]
    gram = D.T @ D
    corr = D.T @ e
    alpha = np.zeros(k)
    gram_alpha = np.zeros(k)  # gram @ alpha, maintained incrementally
    thresh = lam / 2.0
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iters + 1):
        max_delta = 0.0
        for j in range(k):
            c_j = corr[j] - gram_alpha[j] + gram[j, j] * alpha[j]
            new = _soft_threshold(c_j, thresh) / col_sq[j]
            delta = new - alpha[j]
            if delta != 0.0:
                gram_alpha += gram[:, j] * delta
                alpha[j] = new
                max_delta = max(max_delta, abs(delta))
        if max_delta < tol:
            converged = True
            break
    alpha[np.abs(alpha) < DEAD_ZONE] = 0.0
    return SparseCode(
        coefficients=alpha,
        objective=lasso_objective(D, e, alpha, lam),
        iterations=sweeps,
        converged=converged,
    )


def synthesize_signature(seen_sigs, code, mode, ridge, class_id=None):
    """Transfer sparse coefficients to the seen signatures.

    mean = sum_j a_j mu_j; covariance combines the same way per mode, with
    diagonal entries (diagonal mode) or eigenvalues (full mode) floored at
    ``ridge`` to keep the result positive definite.  Unit mode is the
    identity regardless of the coefficients.
    """
    alpha = np.asarray(code.coefficients if isinstance(code, SparseCode) else code, dtype=np.float64)
    if alpha.shape[0] != len(seen_sigs):
        raise ZsigError(f"{alpha.shape[0]} coefficients for {len(seen_sigs)} seen signatures")
    if not np.any(alpha):
        raise DegenerateCodeError(f"all-zero sparse code (class {class_id})")
    mode = CovarianceMode(mode)
    d = seen_sigs[0].dim
    for s in seen_sigs:
        if s.dim != d:
            raise ZsigError("seen signatures disagree on dimension")
        if mode is not CovarianceMode.UNIT and s.mode is not mode:
            raise ZsigError(f"seen signature mode {s.mode.value} does not match requested {mode.value}")
    means = np.stack([s.mean for s in seen_sigs])
    mean = alpha @ means
    if mode is CovarianceMode.UNIT:
        cov = None
    elif mode is CovarianceMode.DIAGONAL:
        diags = np.stack([s.covariance for s in seen_sigs])
        cov = np.maximum(alpha @ diags, ridge)
    else:
        cov = np.zeros((d, d))
        for a, s in zip(alpha, seen_sigs):
            if a != 0.0:
                cov += a * s.covariance
        cov = 0.5 * (cov + cov.T)
        evals, evecs = np.linalg.eigh(cov)
        cov = (evecs * np.maximum(evals, ridge)) @ evecs.T
        cov = 0.5 * (cov + cov.T)
    return make_signature(mean, mode, cov, class_id=class_id)


def synthesize_all(
    seen_embeddings,
    unseen_embeddings,
    seen_sigs,
    lam,
    mode,
    ridge,
    tol=1e-10,
    max_iters=1000,
    unseen_ids=None,
):
    """Synthesize a virtual signature per unseen class.

    Returns (signatures, codes, fallback_ids) where fallback_ids lists the
    unseen class ids whose lasso came back all-zero; those fall back to the
    unweighted average of all seen signatures so the pipeline stays total.
    """
    seen_emb = np.asarray(seen_embeddings, dtype=np.float64)
    unseen_emb = np.atleast_2d(np.asarray(unseen_embeddings, dtype=np.float64))
    if seen_emb.shape[1] != unseen_emb.shape[1]:
        raise ZsigError("seen and unseen embeddings disagree on dimension")
    if seen_emb.shape[0] != len(seen_sigs):
        raise ZsigError(f"{seen_emb.shape[0]} seen embeddings for {len(seen_sigs)} signatures")
    if unseen_ids is None:
        unseen_ids = list(range(unseen_emb.shape[0]))
    dictionary = seen_emb.T
    k_s = seen_emb.shape[0]
    sigs, codes, fallbacks = [], [], []
    for cid, target in zip(unseen_ids, unseen_emb):
        code = solve_lasso(dictionary, target, lam, tol=tol, max_iters=max_iters)
        codes.append(code)
        try:
            sig = synthesize_signature(seen_sigs, code, mode, ridge, class_id=int(cid))
        except DegenerateCodeError:
            uniform = np.full(k_s, 1.0 / k_s)
            sig = synthesize_signature(seen_sigs, uniform, mode, ridge, class_id=int(cid))
            fallbacks.append(int(cid))
        sigs.append(sig)
    return sigs, codes, fallbacks


def codes_to_json(codes, seen_ids, unseen_ids, path):
    """Export codes as unseen id -> [(seen id, coefficient), ...], nonzeros only."""
    doc = {}
    for uid, code in zip(unseen_ids, codes):
        pairs = [
            [int(seen_ids[j]), float(a)] for j, a in enumerate(code.coefficients) if a != 0.0
        ]
        doc[str(int(uid))] = pairs
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")
