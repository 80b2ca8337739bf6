"""Gaussian mixture refinement of virtual signatures by EM.

The mixture over unseen data is initialized with the synthesized virtual
signatures and uniform weights, then alternates the posterior (E) step and
the parameter (M) step until the log-likelihood stabilizes.  Component
updates normalize by the soft count N_k, and the mixing weights are
re-estimated as N_k / N every iteration.  Labels are the maximum-posterior
component per instance.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import NumericalError, ZsigError
from .signatures import CovarianceMode, log_densities, make_signature, signature_to_dict

COLLAPSE_EPS = 1e-8


@dataclass(frozen=True)
class MixtureModel:
    weights: np.ndarray  # (K,) simplex vector
    components: tuple  # K GaussianSignatures sharing dimension and mode
    mode: CovarianceMode

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        comps = tuple(self.components)
        if w.shape != (len(comps),):
            raise ZsigError(f"{w.shape[0]} weights for {len(comps)} components")
        if w.min() < 0 or abs(w.sum() - 1.0) > 1e-12:
            raise ZsigError("weights must form a simplex vector")
        d = comps[0].dim
        for c in comps:
            if c.dim != d or c.mode is not CovarianceMode(self.mode):
                raise ZsigError("components must share dimension and covariance mode")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "mode", CovarianceMode(self.mode))

    @property
    def n_components(self):
        return len(self.components)

    @property
    def dim(self):
        return self.components[0].dim


@dataclass
class FitTrace:
    log_likelihoods: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    collapse_events: int = 0


def init_mixture(virtual_sigs):
    """Uniform-weight mixture over the virtual signatures, taken verbatim."""
    if not virtual_sigs:
        raise ZsigError("cannot initialize a mixture from zero signatures")
    k = len(virtual_sigs)
    return MixtureModel(
        weights=np.full(k, 1.0 / k),
        components=tuple(virtual_sigs),
        mode=virtual_sigs[0].mode,
    )


def _weighted_log_densities(model, X):
    """(N, K) matrix of log pi_k + log N(x_n | mu_k, Sigma_k)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise ZsigError(f"expected (N, {model.dim}) data, got {X.shape}")
    cols = [log_densities(c, X) for c in model.components]
    return np.stack(cols, axis=1) + np.log(model.weights)


def log_likelihood(model, X):
    """Total data log-likelihood, via per-row log-sum-exp over components."""
    per_row = logsumexp(_weighted_log_densities(model, X), axis=1)
    if not np.isfinite(per_row).all():
        bad = int(np.argwhere(~np.isfinite(per_row))[0, 0])
        raise NumericalError(f"non-finite log-likelihood at row {bad}")
    return float(per_row.sum())


def e_step(model, X):
    """Posterior responsibilities, computed in log space then normalized."""
    logw = _weighted_log_densities(model, X)
    logw -= logsumexp(logw, axis=1, keepdims=True)
    return np.exp(logw)


def m_step(model, X, resp, ridge):
    """Re-estimate weights, means, covariances from responsibilities.

    N_k = sum_n r_nk; pi_k = N_k / N; mu_k and Sigma_k are responsibility-
    weighted averages normalized by N_k, with ridge * I added to full and
    diagonal covariances.  A collapsed component (N_k ~ 0) is reseeded at
    the datapoint with the lowest maximum responsibility.
    """
    X = np.asarray(X, dtype=np.float64)
    resp = np.asarray(resp, dtype=np.float64)
    n, d = X.shape
    k = model.n_components
    if resp.shape != (n, k):
        raise ZsigError(f"responsibilities shape {resp.shape} != ({n}, {k})")
    if ridge <= 0:
        raise ZsigError(f"ridge must be positive; got {ridge}")
    counts = resp.sum(axis=0)
    collapsed = [int(j) for j in np.flatnonzero(counts < COLLAPSE_EPS)]

    weights = counts / n
    components = []
    global_var = X.var(axis=0) + ridge
    reseed_order = np.argsort(resp.max(axis=1)) if collapsed else None
    reseed_at = 0
    for j in range(k):
        old = model.components[j]
        if j in collapsed:
            # reseed at an unclaimed datapoint; give it a minimal weight
            mean = X[reseed_order[reseed_at]].copy()
            reseed_at += 1
            weights[j] = 1.0 / n
            if model.mode is CovarianceMode.UNIT:
                cov = None
            elif model.mode is CovarianceMode.DIAGONAL:
                cov = global_var.copy()
            else:
                cov = np.diag(global_var)
            components.append(make_signature(mean, model.mode, cov, class_id=old.class_id))
            continue
        nk = counts[j]
        mean = resp[:, j] @ X / nk
        if model.mode is CovarianceMode.UNIT:
            cov = None
        else:
            centered = X - mean
            if model.mode is CovarianceMode.DIAGONAL:
                cov = resp[:, j] @ (centered**2) / nk + ridge
            else:
                cov = (centered.T * resp[:, j]) @ centered / nk + ridge * np.eye(d)
        components.append(make_signature(mean, model.mode, cov, class_id=old.class_id))
    weights = weights / weights.sum()
    return (
        MixtureModel(weights=weights, components=tuple(components), mode=model.mode),
        len(collapsed),
    )


def fit(model, X, tol=1e-6, max_iters=200, ridge=1e-6):
    """Alternate E and M steps until the relative LL change drops below tol.

    Returns the refined model and a trace of per-iteration log-likelihoods.
    Non-convergence within ``max_iters`` is flagged on the trace.
    """
    if tol <= 0:
        raise ZsigError(f"tol must be positive; got {tol}")
    if max_iters < 1:
        raise ZsigError(f"max_iters must be >= 1; got {max_iters}")
    X = np.asarray(X, dtype=np.float64)
    trace = FitTrace()
    prev_ll = None
    for _ in range(max_iters):
        logw = _weighted_log_densities(model, X)
        per_row = logsumexp(logw, axis=1, keepdims=True)
        ll = float(per_row.sum())
        if not np.isfinite(ll):
            raise NumericalError("non-finite log-likelihood during EM")
        trace.log_likelihoods.append(ll)
        if prev_ll is not None and abs(ll - prev_ll) < tol * abs(ll):
            trace.converged = True
            break
        prev_ll = ll
        resp = np.exp(logw - per_row)
        model, n_collapsed = m_step(model, X, resp, ridge)
        trace.collapse_events += n_collapsed
        trace.iterations += 1
    return model, trace


def predict(model, X):
    """Maximum-posterior component index per row; ties go to the lowest index."""
    return np.argmax(_weighted_log_densities(model, X), axis=1)


def trace_to_csv(trace, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "log_likelihood"])
        for i, ll in enumerate(trace.log_likelihoods):
            writer.writerow([i, repr(ll)])


def model_to_dict(model):
    return {
        "weights": model.weights.tolist(),
        "mode": model.mode.value,
        "components": [signature_to_dict(c) for c in model.components],
    }
