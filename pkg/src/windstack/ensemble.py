"""Boosted, cluster-routed, and stacked ensembles.

AdaBoost here is the R2 regression variant with linear loss [1]: each
round fits the weak learner on a weighted bootstrap resample, losses
are normalized by the round's worst absolute error, the sample
distribution is sharpened toward hard rows, and rounds combine by a
weighted average with weights proportional to ln(1/beta), normalized
to sum to one.

The layered ensemble routes every sample through a fitted clustering
model and hands it to the submodel trained on that cluster's rows;
clusters too small to support a model of their own fall back to a
global model trained on everything. Stacking fits one layered ensemble
per clustering flavor and learns a ridge combination of their outputs
[2], with meta-features generated out-of-fold by default so the
meta-learner never sees a base prediction made on that base's own
training rows.

References
----------
.. [1] H. Drucker, "Improving regressors using boosting techniques",
       ICML 1997, 107-115.
.. [2] D. H. Wolpert, "Stacked generalization", Neural Networks 5
       (1992) 241-259.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cluster import assign
from .errors import (
    IncompatibleFeatureSpace,
    InvalidConfig,
    SingularSystem,
    TooFewRows,
)
from .ingest import StandardizationParams, kfold_indices
from .rng import derive_seed, make_rng
from .tree import RepTreeParams, reptree_fit, rf_fit

CANONICAL_CLUSTERINGS = ("kmeans", "em", "ff", "canopy")


# ---------------------------------------------------------------------------
# boosting

@dataclass
class BoostConfig:
    """Knobs for one AdaBoost(RF) model.

    The benchmark scale is 100 iterations of 10-tree forests; studies
    on small synthetic data run smaller numbers through the same code
    path.
    """

    n_iter: int = 100
    n_trees: int = 10
    tree_params: RepTreeParams = field(default_factory=RepTreeParams)
    mtry: Optional[int] = None
    combine: str = "average"    # or "median"


@dataclass
class AdaBoostModel:
    learners: list
    weights: np.ndarray
    n_iter_effective: int
    combine: str = "average"
    no_useful_learner: bool = False
    avg_losses: Optional[list] = None
    seed: int = 0

    def predict(self, X):
        return adaboost_predict(self, X)


def forest_weak_factory(config):
    """Weak-learner factory fitting one bagged forest per round."""
    def factory(X, y, seed):
        return rf_fit(X, y, n_trees=config.n_trees,
                      params=config.tree_params, seed=seed,
                      mtry=config.mtry)
    return factory


def tree_weak_factory(params):
    """Weak-learner factory fitting one plain tree per round."""
    def factory(X, y, seed):
        return reptree_fit(X, y, params, seed)
    return factory


def adaboost_fit(X, y, weak_factory, n_iter, seed, combine="average"):
    """AdaBoost.R2 with linear loss [1].

    Per round: draw a bootstrap resample from the current sample
    distribution, fit the weak learner on it, and score absolute errors
    on the full training set. Rounds whose weighted average loss
    reaches 0.5 are rejected and stop the run; a perfect round (zero
    worst error) is kept with an effectively infinite confidence and
    also stops. If the very first round is already rejected, that
    single learner is kept with weight one and the model flagged.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if n < 2:
        raise TooFewRows(2, n)
    if n_iter < 1:
        raise InvalidConfig(f"n_iter must be >= 1, got {n_iter}")
    dist = np.full(n, 1.0 / n)
    learners = []
    raw_weights = []
    avg_losses = []
    flagged = False
    for t in range(n_iter):
        rng = make_rng(derive_seed(seed, "round", t))
        idx = rng.choice(n, size=n, p=dist)
        learner = weak_factory(X[idx], y[idx],
                               derive_seed(seed, "learner", t))
        err = np.abs(learner.predict(X) - y)
        err_max = float(err.max())
        if err_max == 0.0:
            learners.append(learner)
            raw_weights.append(np.log(1e10))
            avg_losses.append(0.0)
            break
        loss = err / err_max
        avg_loss = float(np.dot(dist, loss))
        if avg_loss >= 0.5:
            if not learners:
                learners.append(learner)
                raw_weights.append(1.0)
                avg_losses.append(avg_loss)
                flagged = True
            break
        beta = avg_loss / (1.0 - avg_loss)
        learners.append(learner)
        raw_weights.append(float(np.log(1.0 / beta)))
        avg_losses.append(avg_loss)
        dist = dist * beta ** (1.0 - loss)
        dist = dist / dist.sum()
    weights = np.asarray(raw_weights)
    weights = weights / weights.sum()
    return AdaBoostModel(learners=learners, weights=weights,
                         n_iter_effective=len(learners), combine=combine,
                         no_useful_learner=flagged,
                         avg_losses=avg_losses, seed=int(seed))


def adaboost_predict(model, x):
    """Weighted average of the learner outputs (or weighted median)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    preds = np.column_stack([lr.predict(X) for lr in model.learners])
    if model.combine == "median":
        order = np.argsort(preds, axis=1)
        w_sorted = model.weights[order]
        csum = np.cumsum(w_sorted, axis=1)
        pick = np.argmax(csum >= 0.5 * csum[:, -1:], axis=1)
        rows = np.arange(X.shape[0])
        out = preds[rows, order[rows, pick]]
    else:
        out = preds @ model.weights
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# layered cluster-routed ensemble

@dataclass
class LayeredEnsemble:
    """One submodel per viable cluster plus a global fallback.

    ``submodels[cid] is None`` marks a cluster whose training
    population fell below min_cluster_train; those rows route to the
    fallback. With a single cluster the fallback aliases the lone
    submodel so the same fit is not paid for twice.
    """

    cluster_model: object
    submodels: list
    fallback: object
    min_cluster_train: int
    seed: int = 0

    def predict(self, X):
        return layered_predict(self, X)


def adarf_submodel_factory(config):
    """Submodel factory for boosted forests, the default submodel."""
    def factory(X, y, seed):
        return adaboost_fit(X, y, forest_weak_factory(config),
                            config.n_iter, seed, combine=config.combine)
    return factory


def layered_fit(train, cluster_model, boost_config, seed,
                submodel_factory=None, min_cluster_train=30):
    """Route training rows by cluster and fit one submodel per cluster.

    ``submodel_factory(X, y, seed) -> model`` defaults to boosted
    forests under ``boost_config``; swapping the factory yields the
    layered variants built on other submodel families. Clusters with
    fewer than ``min_cluster_train`` rows are marked for fallback, and
    the fallback is trained on all rows (unless there is exactly one
    cluster holding a submodel, which then doubles as the fallback).
    """
    if train.d != cluster_model.d:
        raise IncompatibleFeatureSpace(cluster_model.d, train.d)
    if submodel_factory is None:
        submodel_factory = adarf_submodel_factory(boost_config)
    labels = assign(cluster_model, train.features)
    submodels = []
    for cid in range(cluster_model.k):
        rows = np.flatnonzero(labels == cid)
        if rows.size >= min_cluster_train:
            submodels.append(submodel_factory(
                train.features[rows], train.targets[rows],
                derive_seed(seed, "cluster", cid)))
        else:
            submodels.append(None)
    if cluster_model.k == 1 and submodels[0] is not None:
        fallback = submodels[0]
    else:
        fallback = submodel_factory(train.features, train.targets,
                                    derive_seed(seed, "fallback"))
    return LayeredEnsemble(cluster_model=cluster_model,
                           submodels=submodels, fallback=fallback,
                           min_cluster_train=min_cluster_train,
                           seed=int(seed))


def layered_predict(ensemble, x):
    """Assign to a cluster, then predict with that cluster's model."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != ensemble.cluster_model.d:
        raise IncompatibleFeatureSpace(ensemble.cluster_model.d,
                                       X.shape[1])
    labels = assign(ensemble.cluster_model, X)
    out = np.empty(X.shape[0])
    for cid in np.unique(labels):
        rows = np.flatnonzero(labels == cid)
        model = ensemble.submodels[cid]
        if model is None:
            model = ensemble.fallback
        out[rows] = model.predict(X[rows])
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# ridge meta-learner

@dataclass
class RidgeParams:
    weights: np.ndarray
    intercept: float
    lam: float
    penalty: str = "l2"

    def predict(self, Z):
        Z = np.asarray(Z, dtype=float)
        return Z @ self.weights + self.intercept


def _soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def ridge_fit(Z, y, lam, penalty="l2"):
    """Penalized least squares on centered data, intercept unpenalized.

    L2 solves the closed-form normal equations (Zc'Zc + lam I) w =
    Zc'yc; lam = 0 demands a full-rank design and otherwise raises
    SingularSystem. The optional L1 penalty runs coordinate descent
    with the same centering convention.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    n, m = Z.shape
    if n <= m:
        raise TooFewRows(m + 1, n)
    if lam < 0:
        raise InvalidConfig(f"lambda must be >= 0, got {lam}")
    z_mean = Z.mean(axis=0)
    y_mean = float(y.mean())
    Zc = Z - z_mean
    yc = y - y_mean
    if penalty == "l2":
        gram = Zc.T @ Zc + lam * np.eye(m)
        if lam == 0.0 and np.linalg.matrix_rank(Zc) < m:
            raise SingularSystem(f"rank < {m} with no regularization")
        try:
            w = np.linalg.solve(gram, Zc.T @ yc)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(str(exc)) from exc
    elif penalty == "l1":
        w = np.zeros(m)
        col_sq = np.sum(Zc * Zc, axis=0)
        resid = yc.copy()
        for _ in range(1000):
            delta = 0.0
            for j in range(m):
                if col_sq[j] <= 0.0:
                    continue
                rho = float(Zc[:, j] @ resid) + col_sq[j] * w[j]
                new_wj = float(_soft_threshold(rho, lam)) / col_sq[j]
                if new_wj != w[j]:
                    resid -= Zc[:, j] * (new_wj - w[j])
                    delta = max(delta, abs(new_wj - w[j]))
                    w[j] = new_wj
            if delta < 1e-10:
                break
    else:
        raise InvalidConfig(f"unknown penalty {penalty!r}")
    intercept = y_mean - float(z_mean @ w)
    return RidgeParams(weights=w, intercept=intercept, lam=float(lam),
                       penalty=penalty)


LAMBDA_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0)


def select_lambda_cv(Z, y, grid=LAMBDA_GRID, folds=5, seed=0):
    """Pick lambda by k-fold CV mean squared error, smaller on ties."""
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    folds_idx = kfold_indices(Z.shape[0], folds, derive_seed(seed, "cv"))
    best = None
    for lam in grid:
        sse = 0.0
        for f in range(folds):
            test = folds_idx[f]
            train = np.concatenate(
                [folds_idx[g] for g in range(folds) if g != f])
            params = ridge_fit(Z[train], y[train], lam)
            sse += float(np.sum((params.predict(Z[test]) - y[test]) ** 2))
        if best is None or sse < best[0] - 1e-12:
            best = (sse, lam)
    return best[1]


# ---------------------------------------------------------------------------
# stacking

@dataclass
class StackingModel:
    """Four layered bases (one per clustering flavor) under a ridge cap."""

    bases: list
    meta: RidgeParams
    meta_standardization: StandardizationParams
    meta_feature_mode: str
    seed: int = 0

    def predict(self, X):
        return stacking_predict(self, X)


def _canonical_order(cluster_models):
    by_kind = {}
    for cm in cluster_models:
        if cm.kind in by_kind:
            raise InvalidConfig(f"duplicate clustering kind {cm.kind!r}")
        by_kind[cm.kind] = cm
    if set(by_kind) != set(CANONICAL_CLUSTERINGS):
        raise InvalidConfig(
            "stacking needs exactly one cluster model per kind "
            f"{CANONICAL_CLUSTERINGS}, got {sorted(by_kind)}")
    return [by_kind[kind] for kind in CANONICAL_CLUSTERINGS]


def stacking_fit(train, cluster_models, boost_config, lam=1e-2,
                 mode="out-of-fold", seed=0, submodel_factory=None,
                 oof_folds=10, min_cluster_train=30):
    """Fit the four-base stacked ensemble with a ridge meta-learner.

    Meta-features are the base predictions for each training row:
    generated out-of-fold by default (each row predicted by bases
    trained without its fold, the cluster models staying fixed), or
    in-sample for the literal one-pass construction. The deployed base
    ensembles are always (re)fitted on the full training set.
    ``lam="cv"`` selects the penalty over a small grid by CV.
    """
    models = _canonical_order(cluster_models)
    n = train.n
    Z = np.empty((n, len(models)))
    if mode == "out-of-fold":
        folds = kfold_indices(n, oof_folds, derive_seed(seed, "oof"))
        for f, test_idx in enumerate(folds):
            train_idx = np.concatenate(
                [folds[g] for g in range(len(folds)) if g != f])
            sub = train.take(train_idx)
            for t, cm in enumerate(models):
                le = layered_fit(sub, cm, boost_config,
                                 derive_seed(seed, "oof", f, t),
                                 submodel_factory, min_cluster_train)
                Z[test_idx, t] = layered_predict(
                    le, train.features[test_idx])
        bases = [layered_fit(train, cm, boost_config,
                             derive_seed(seed, "base", t),
                             submodel_factory, min_cluster_train)
                 for t, cm in enumerate(models)]
    elif mode == "in-sample":
        bases = [layered_fit(train, cm, boost_config,
                             derive_seed(seed, "base", t),
                             submodel_factory, min_cluster_train)
                 for t, cm in enumerate(models)]
        for t, base in enumerate(bases):
            Z[:, t] = layered_predict(base, train.features)
    else:
        raise InvalidConfig(f"unknown meta-feature mode {mode!r}")

    z_std = StandardizationParams(
        means=Z.mean(axis=0),
        stds=Z.std(axis=0, ddof=1) if n > 1 else np.zeros(Z.shape[1]))
    Zs = z_std.apply(Z)
    if lam == "cv" or lam is None:
        lam = select_lambda_cv(Zs, train.targets,
                               seed=derive_seed(seed, "lambda"))
    meta = ridge_fit(Zs, train.targets, lam)
    return StackingModel(bases=bases, meta=meta,
                         meta_standardization=z_std,
                         meta_feature_mode=mode, seed=int(seed))


def stacking_predict(model, x):
    """Collect the four base predictions and apply the ridge map."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    Z = np.column_stack([layered_predict(b, X) for b in model.bases])
    out = model.meta.predict(model.meta_standardization.apply(Z))
    return float(out[0]) if single else out
