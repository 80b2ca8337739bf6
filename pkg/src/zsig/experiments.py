"""Experiment protocols: upper bound, inductive, transductive, baselines.

Also provides a synthetic benchmark generator whose construction guarantees
the two modeling assumptions (Gaussian classes; label-embedding structure
transferable to feature space), so desk-scale acceptance runs need no
external data.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import gmm_em
from .dataset import STREAM_BASELINE, STREAM_SYNTH, ZslDataset, apply_split, normalize_rows, substream
from .dimred import fit_pca, transform
from .errors import ZsigError
from .signatures import (
    CovarianceMode,
    default_ridge,
    estimate_signatures,
    log_densities,
    make_signature,
)
from .sparse_synth import synthesize_all

METHODS = ("inductive", "transductive", "baseline")


@dataclass(frozen=True)
class ExperimentConfig:
    pca_dim: int = 0  # 0 disables dimensionality reduction
    covariance_mode: CovarianceMode = CovarianceMode.UNIT
    lasso_lambda: float = 0.1
    ridge: float | None = None  # None: 1e-4 * mean feature variance
    lasso_tol: float = 1e-10
    lasso_max_iters: int = 1000
    em_tol: float = 1e-6
    em_max_iters: int = 200
    metric: str = "overall"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "covariance_mode", CovarianceMode(self.covariance_mode))
        if self.metric not in ("overall", "macro"):
            raise ZsigError(f"metric must be 'overall' or 'macro'; got '{self.metric}'")
        if self.pca_dim < 0:
            raise ZsigError(f"pca_dim must be >= 0; got {self.pca_dim}")
        for name in ("lasso_lambda", "lasso_tol", "em_tol"):
            if getattr(self, name) < 0 or (name != "lasso_lambda" and getattr(self, name) == 0):
                raise ZsigError(f"{name} must be positive")
        if self.ridge is not None and self.ridge <= 0:
            raise ZsigError(f"ridge must be positive; got {self.ridge}")

    def to_dict(self):
        doc = asdict(self)
        doc["covariance_mode"] = self.covariance_mode.value
        return doc


@dataclass
class TrialResult:
    trial_index: int
    unseen_ids: tuple
    accuracy_inductive: float | None = None
    accuracy_transductive: float | None = None
    accuracy_baseline: float | None = None
    em_iterations: int | None = None
    non_converged: bool = False
    collapsed_components: int = 0
    zero_alpha_classes: tuple = ()


@dataclass
class ExperimentReport:
    config: dict
    methods: tuple
    trials: list
    aggregates: dict
    failures: int = 0
    failure_messages: list = field(default_factory=list)
    valid: bool = True


def accuracy(predicted, truth, metric="overall"):
    """Fraction correct (overall) or unweighted per-class mean (macro)."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape or predicted.size == 0:
        raise ZsigError("predicted and truth must be equal-length and non-empty")
    if metric == "overall":
        return float((predicted == truth).mean())
    if metric == "macro":
        per_class = [float((predicted[truth == c] == c).mean()) for c in np.unique(truth)]
        return float(np.mean(per_class))
    raise ZsigError(f"unknown metric '{metric}'")


def _sample_size_warning(counts, d, mode):
    counts = np.asarray(counts)
    if mode is CovarianceMode.FULL and counts.min() < d * d:
        warnings.warn(
            f"smallest class has {int(counts.min())} instances < d^2={d * d}; "
            "full covariances may be unreliable (consider diagonal or unit mode)",
            stacklevel=3,
        )
    elif mode is CovarianceMode.DIAGONAL and counts.min() < d:
        warnings.warn(
            f"smallest class has {int(counts.min())} instances < d={d}; "
            "diagonal covariances may be unreliable (consider unit mode)",
            stacklevel=3,
        )


def select_covariance_mode(min_class_size, d, lam=1.0):
    """Data-volume default: unit if n < d, diagonal if n < lam * d^2, else full."""
    if min_class_size < d:
        return CovarianceMode.UNIT
    if min_class_size < lam * d * d:
        return CovarianceMode.DIAGONAL
    return CovarianceMode.FULL


def _reduce(dataset, unseen_ids, config):
    """Split the dataset and apply PCA fit on the union of seen+unseen."""
    seen, unseen = apply_split(dataset, unseen_ids)
    if config.pca_dim and config.pca_dim < dataset.feature_dim:
        model = fit_pca(dataset.features, config.pca_dim)
        seen_x = transform(model, seen.features)
        unseen_x = transform(model, unseen.features)
    else:
        seen_x, unseen_x = seen.features, unseen.features
    ridge = config.ridge if config.ridge is not None else default_ridge(np.vstack([seen_x, unseen_x]))
    return seen, unseen, seen_x, unseen_x, ridge


def _classify_by_signature(sigs, X, class_ids):
    scores = np.stack([log_densities(s, X) for s in sigs], axis=1)
    return np.asarray(class_ids)[np.argmax(scores, axis=1)]


def run_upper_bound(dataset, config, unseen_ids=None):
    """Accuracy when every class is fit from its true labels.

    With ``unseen_ids`` given, only those classes and their instances are
    evaluated; otherwise all classes and all instances.  Classification is
    maximum log-density with equal priors.
    """
    if unseen_ids is None:
        X, y = dataset.features, dataset.labels
    else:
        _, unseen = apply_split(dataset, unseen_ids)
        X, y = unseen.features, unseen.labels
    if config.pca_dim and config.pca_dim < X.shape[1]:
        model = fit_pca(X, config.pca_dim)
        X = transform(model, X)
    ridge = config.ridge if config.ridge is not None else default_ridge(X)
    _sample_size_warning(np.unique(y, return_counts=True)[1], X.shape[1], config.covariance_mode)
    sigs = estimate_signatures(X, y, config.covariance_mode, ridge)
    predicted = _classify_by_signature(sigs, X, [s.class_id for s in sigs])
    return accuracy(predicted, y, config.metric)


def _synthesize(dataset, unseen_ids, config):
    seen, unseen, seen_x, unseen_x, ridge = _reduce(dataset, unseen_ids, config)
    counts = np.bincount(seen.labels, minlength=int(seen.class_ids.max()) + 1)[seen.class_ids]
    _sample_size_warning(counts, seen_x.shape[1], config.covariance_mode)
    seen_sigs = estimate_signatures(seen_x, seen.labels, config.covariance_mode, ridge)
    virtual, codes, fallbacks = synthesize_all(
        seen.embeddings,
        unseen.embeddings,
        seen_sigs,
        config.lasso_lambda,
        config.covariance_mode,
        ridge,
        tol=config.lasso_tol,
        max_iters=config.lasso_max_iters,
        unseen_ids=unseen.class_ids,
    )
    return unseen, unseen_x, virtual, codes, fallbacks, ridge


def run_inductive(dataset, unseen_ids, config, trial_index=0):
    """Classify unseen instances directly under the virtual signatures."""
    unseen, unseen_x, virtual, _, fallbacks, _ = _synthesize(dataset, unseen_ids, config)
    predicted = _classify_by_signature(virtual, unseen_x, unseen.class_ids)
    return TrialResult(
        trial_index=trial_index,
        unseen_ids=tuple(int(c) for c in unseen.class_ids),
        accuracy_inductive=accuracy(predicted, unseen.labels, config.metric),
        zero_alpha_classes=tuple(fallbacks),
    )


def run_transductive(dataset, unseen_ids, config, trial_index=0):
    """Refine the virtual signatures by EM on the unseen data, then predict."""
    unseen, unseen_x, virtual, _, fallbacks, ridge = _synthesize(dataset, unseen_ids, config)
    predicted_ind = _classify_by_signature(virtual, unseen_x, unseen.class_ids)
    model = gmm_em.init_mixture(virtual)
    model, trace = gmm_em.fit(model, unseen_x, tol=config.em_tol, max_iters=config.em_max_iters, ridge=ridge)
    predicted = unseen.class_ids[gmm_em.predict(model, unseen_x)]
    return TrialResult(
        trial_index=trial_index,
        unseen_ids=tuple(int(c) for c in unseen.class_ids),
        accuracy_inductive=accuracy(predicted_ind, unseen.labels, config.metric),
        accuracy_transductive=accuracy(predicted, unseen.labels, config.metric),
        em_iterations=trace.iterations,
        non_converged=not trace.converged,
        collapsed_components=trace.collapse_events,
        zero_alpha_classes=tuple(fallbacks),
    )


def run_baseline_random_init(dataset, unseen_ids, config, trial_index=0):
    """EM from random datapoint means, scored with no component matching.

    Component k is held to correspond to the k-th (ascending) unseen class
    id, so accuracy lands at chance level; this isolates the value of the
    synthesized initialization.
    """
    _, unseen, _, unseen_x, ridge = _reduce(dataset, unseen_ids, config)
    k = len(unseen.class_ids)
    rng = substream(config.seed, STREAM_BASELINE, trial_index)
    picks = rng.choice(unseen_x.shape[0], size=k, replace=False)
    components = [
        make_signature(unseen_x[i], CovarianceMode.UNIT, class_id=int(c))
        for i, c in zip(picks, unseen.class_ids)
    ]
    model = gmm_em.init_mixture(components)
    model, trace = gmm_em.fit(model, unseen_x, tol=config.em_tol, max_iters=config.em_max_iters, ridge=ridge)
    predicted = unseen.class_ids[gmm_em.predict(model, unseen_x)]
    return TrialResult(
        trial_index=trial_index,
        unseen_ids=tuple(int(c) for c in unseen.class_ids),
        accuracy_baseline=accuracy(predicted, unseen.labels, config.metric),
        em_iterations=trace.iterations,
        non_converged=not trace.converged,
        collapsed_components=trace.collapse_events,
    )


_METHOD_FIELD = {
    "inductive": "accuracy_inductive",
    "transductive": "accuracy_transductive",
    "baseline": "accuracy_baseline",
}


def compute_aggregates(trials, methods):
    """Mean/median/quartiles/min/max per method over successful trials."""
    aggregates = {}
    for method in methods:
        values = [getattr(t, _METHOD_FIELD[method]) for t in trials]
        values = np.asarray([v for v in values if v is not None], dtype=np.float64)
        if values.size == 0:
            aggregates[method] = None
            continue
        aggregates[method] = {
            "mean": float(values.mean()),
            "median": float(np.median(values)),
            "q25": float(np.percentile(values, 25)),
            "q75": float(np.percentile(values, 75)),
            "min": float(values.min()),
            "max": float(values.max()),
            "n": int(values.size),
        }
    return aggregates


def _run_trial(dataset, unseen_ids, config, methods, trial_index):
    result = TrialResult(trial_index=trial_index, unseen_ids=tuple(int(c) for c in unseen_ids))
    if "transductive" in methods:
        result = run_transductive(dataset, unseen_ids, config, trial_index)
    elif "inductive" in methods:
        result = run_inductive(dataset, unseen_ids, config, trial_index)
    if "baseline" in methods:
        base = run_baseline_random_init(dataset, unseen_ids, config, trial_index)
        result.accuracy_baseline = base.accuracy_baseline
        if result.em_iterations is None:
            result.em_iterations = base.em_iterations
            result.non_converged = base.non_converged
        result.collapsed_components += base.collapsed_components
    return result


def run_trials(dataset, splits, config, methods=("inductive", "transductive"), workers=1):
    """Execute each requested method on every trial and aggregate.

    Individual trial failures are recorded and excluded from the
    aggregates; a report with more than 1% failed trials is marked
    invalid.  Results are deterministic in ``config.seed`` regardless of
    ``workers``, because each trial owns its own substream.
    """
    methods = tuple(m for m in METHODS if m in set(methods))
    if not methods:
        raise ZsigError("no valid methods requested")
    trials = [None] * len(splits.trials)
    errors = []

    def work(i):
        return _run_trial(dataset, splits.trials[i], config, methods, i)

    indices = range(len(splits.trials))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {i: pool.submit(work, i) for i in indices}
        outcomes = [(i, futures[i]) for i in indices]
        for i, fut in outcomes:
            try:
                trials[i] = fut.result()
            except ZsigError as exc:
                errors.append(f"trial {i}: {exc}")
    else:
        for i in indices:
            try:
                trials[i] = work(i)
            except ZsigError as exc:
                errors.append(f"trial {i}: {exc}")
    completed = [t for t in trials if t is not None]
    failures = len(splits.trials) - len(completed)
    report = ExperimentReport(
        config=config.to_dict(),
        methods=methods,
        trials=completed,
        aggregates=compute_aggregates(completed, methods),
        failures=failures,
        failure_messages=errors,
        valid=failures <= 0.01 * len(splits.trials),
    )
    return report


def generate_synthetic(
    class_count,
    per_class,
    feature_dim,
    embedding_dim,
    separation,
    fidelity="exact-linear",
    seed=0,
    noise_level=0.2,
):
    """Synthetic benchmark satisfying both modeling assumptions by design.

    Class means sit on a sphere of scaled random directions with pairwise
    distance >= separation (per-class covariance is the identity, so the
    unit is one within-class standard deviation).  Label embeddings are an
    isometric linear map of the class means, optionally corrupted with
    noise of ``noise_level`` times the signal norm, then L2-normalized per
    row.  Returns (dataset, manifest) where the manifest records the
    generating parameters for oracle checks.
    """
    if min(class_count, per_class, feature_dim, embedding_dim) < 1 or class_count < 2:
        raise ZsigError("class_count >= 2 and positive counts/dims required")
    if fidelity not in ("exact-linear", "noisy"):
        raise ZsigError(f"fidelity must be 'exact-linear' or 'noisy'; got '{fidelity}'")
    rng = substream(seed, STREAM_SYNTH)

    if separation > 0:
        directions = rng.standard_normal((class_count, feature_dim))
        directions = normalize_rows(directions)
        diffs = directions[:, None, :] - directions[None, :, :]
        dist = np.sqrt((diffs**2).sum(axis=2))
        np.fill_diagonal(dist, np.inf)
        min_dist = dist.min()
        if min_dist < 1e-9:
            raise ZsigError(
                f"cannot place {class_count} classes {separation} sigma apart in {feature_dim} dimensions"
            )
        means = directions * (separation / min_dist)
    else:
        means = np.zeros((class_count, feature_dim))

    labels = np.repeat(np.arange(class_count), per_class)
    features = means[labels] + rng.standard_normal((class_count * per_class, feature_dim))

    # isometric map keeps all embedding norms equal, so per-row
    # normalization is a pure global rescale and preserves the
    # coefficients of any linear reconstruction
    raw_map = rng.standard_normal((max(embedding_dim, feature_dim), feature_dim))
    q, _ = np.linalg.qr(raw_map)
    emb_map = q[:embedding_dim, :] if embedding_dim < feature_dim else q
    embeddings = means @ emb_map.T
    if fidelity == "noisy" and noise_level > 0:
        noise = rng.standard_normal(embeddings.shape)
        noise = normalize_rows(noise) * (noise_level * np.linalg.norm(embeddings, axis=1, keepdims=True))
        embeddings = embeddings + noise
    embeddings = normalize_rows(embeddings)

    class_names = tuple(f"c{k:03d}" for k in range(class_count))
    dataset = ZslDataset(features=features, labels=labels, embeddings=embeddings, class_names=class_names)
    manifest = {
        "class_names": list(class_names),
        "means": means.tolist(),
        "separation": float(separation),
        "per_class": int(per_class),
        "feature_dim": int(feature_dim),
        "embedding_dim": int(embedding_dim),
        "fidelity": fidelity,
        "noise_level": float(noise_level),
        "seed": int(seed),
    }
    return dataset, manifest
