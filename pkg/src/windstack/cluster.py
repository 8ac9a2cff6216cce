"""Clustering algorithms and cluster-count selection.

Four ways to partition weather samples (K-means, diagonal-covariance
EM, farthest-first traversal, canopy with threshold adaptation) behind
one small model type, plus the three-stage procedure for picking the
number of clusters: an empirical log formula, the elbow of the SSE
curve, and X-means driven by a BIC score.

All distances are plain Euclidean; callers are expected to standardize
features first so no column dominates.

References
----------
.. [1] D. Arthur, S. Vassilvitskii, "k-means++: the advantages of
       careful seeding", SODA 2007, 1027-1035.
.. [2] A. P. Dempster, N. M. Laird, D. B. Rubin, "Maximum likelihood
       from incomplete data via the EM algorithm", JRSS B 39 (1977).
.. [3] T. F. Gonzalez, "Clustering to minimize the maximum intercluster
       distance", Theor. Comput. Sci. 38 (1985) 293-306 (farthest-first
       is the classic 2-approximation for the k-center problem).
.. [4] A. McCallum, K. Nigam, L. H. Ungar, "Efficient clustering of
       high-dimensional data sets with application to reference
       matching", KDD 2000, 169-178 (canopy clustering).
.. [5] D. Pelleg, A. Moore, "X-means: extending K-means with efficient
       estimation of the number of clusters", ICML 2000, 727-734.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    DegenerateComponent,
    InvalidConfig,
    KTooLarge,
    NonFiniteInput,
    Unreachable,
)
from .rng import derive_seed, make_rng

VARIANCE_FLOOR = 1e-6


@dataclass
class ClusterModel:
    """A fitted clustering of 6-D weather features.

    ``centers`` always holds one row per cluster: component means for
    EM, actual data rows for farthest-first, canopy centers (possibly
    merged or split) for canopy. ``history`` records the objective per
    iteration where the fit is iterative (SSE for kmeans, log-likelihood
    for EM).
    """

    kind: str
    k: int
    centers: np.ndarray
    seed: int
    em_weights: Optional[np.ndarray] = None
    em_variances: Optional[np.ndarray] = None
    canopy_t1: Optional[float] = None
    canopy_t2: Optional[float] = None
    history: Optional[list] = None

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float)

    @property
    def d(self):
        return self.centers.shape[1]

    def to_dict(self):
        doc = {
            "kind": self.kind,
            "k": int(self.k),
            "seed": int(self.seed),
            "centers": self.centers.tolist(),
        }
        if self.kind == "em":
            doc["em_extras"] = {
                "weights": self.em_weights.tolist(),
                "variances": self.em_variances.tolist(),
            }
        if self.kind == "canopy":
            doc["canopy_extras"] = {
                "t1": float(self.canopy_t1),
                "t2": float(self.canopy_t2),
            }
        if self.history is not None:
            doc["history"] = [float(v) for v in self.history]
        return doc

    @classmethod
    def from_dict(cls, doc):
        em = doc.get("em_extras") or {}
        canopy = doc.get("canopy_extras") or {}
        return cls(
            kind=doc["kind"],
            k=int(doc["k"]),
            centers=np.asarray(doc["centers"], dtype=float),
            seed=int(doc["seed"]),
            em_weights=(np.asarray(em["weights"], dtype=float)
                        if em else None),
            em_variances=(np.asarray(em["variances"], dtype=float)
                          if em else None),
            canopy_t1=canopy.get("t1"),
            canopy_t2=canopy.get("t2"),
            history=doc.get("history"),
        )


def _check_matrix(X, k):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise NonFiniteInput("empty or non-2D matrix")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("cluster input matrix")
    n = X.shape[0]
    if k < 1:
        raise InvalidConfig(f"k must be >= 1, got {k}")
    if k > n:
        raise KTooLarge(k, n)
    return X, n


def _sq_distances(X, centers):
    """Squared Euclidean distances, n x k, clipped at zero."""
    x2 = np.sum(X * X, axis=1)[:, None]
    c2 = np.sum(centers * centers, axis=1)[None, :]
    return np.maximum(x2 + c2 - 2.0 * (X @ centers.T), 0.0)


def assign(model, x):
    """Cluster id(s) for one feature vector or a matrix of them.

    Nearest center by Euclidean distance for kmeans/ff/canopy (ties go
    to the lowest id); maximum posterior responsibility for em.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("assignment input")
    if model.kind == "em":
        logr = _em_log_resp(X, model.centers, model.em_variances,
                            model.em_weights)
        labels = np.argmax(logr, axis=1)
    else:
        labels = np.argmin(_sq_distances(X, model.centers), axis=1)
    return int(labels[0]) if single else labels


def total_sse(model, X):
    """Sum of squared distances from each row to its assigned center."""
    X = np.asarray(X, dtype=float)
    labels = assign(model, X)
    diff = X - model.centers[labels]
    return float(np.sum(diff * diff))


# ---------------------------------------------------------------------------
# K-means

def _kmeanspp_init(X, k, rng):
    """Seeding by the D^2 weighting of [1]."""
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    chosen = np.empty(k, dtype=int)
    chosen[0] = rng.integers(n)
    centers[0] = X[chosen[0]]
    d2 = _sq_distances(X, centers[:1]).ravel()
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # every remaining point duplicates a chosen center; fall
            # back to uniform choice among the unchosen
            mask = np.ones(n, dtype=bool)
            mask[chosen[:j]] = False
            pool = np.flatnonzero(mask)
            idx = int(pool[rng.integers(pool.size)]) if pool.size \
                else int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        chosen[j] = idx
        centers[j] = X[idx]
        d2 = np.minimum(d2, _sq_distances(X, centers[j:j + 1]).ravel())
    return centers


def _repair_empty(X, centers, labels, counts):
    """Reseed each empty cluster to the point farthest from its center."""
    diff = X - centers[labels]
    dist = np.sum(diff * diff, axis=1)
    order = np.argsort(dist, kind="stable")[::-1]
    used = 0
    for j in np.flatnonzero(counts == 0):
        centers[j] = X[order[used]]
        used += 1
    return centers


def _lloyd(X, centers, max_iter, tol):
    """Lloyd iterations from given initial centers. Fully deterministic.

    Returns (centers, labels, sse_history); the history holds the
    objective once per iteration plus a final value under the returned
    centers, and is non-increasing.
    """
    centers = centers.copy()
    k = centers.shape[0]
    history = []
    for _ in range(max_iter):
        d2 = _sq_distances(X, centers)
        labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(X.shape[0]), labels].sum()))
        counts = np.bincount(labels, minlength=k)
        new_centers = np.zeros_like(centers)
        np.add.at(new_centers, labels, X)
        nonzero = counts > 0
        new_centers[nonzero] /= counts[nonzero, None]
        new_centers[~nonzero] = centers[~nonzero]
        if not nonzero.all():
            new_centers = _repair_empty(X, new_centers, labels, counts)
        shift = float(np.sqrt(
            np.sum((new_centers - centers) ** 2, axis=1)).max())
        centers = new_centers
        if shift < tol:
            break
    d2 = _sq_distances(X, centers)
    labels = np.argmin(d2, axis=1)
    history.append(float(d2[np.arange(X.shape[0]), labels].sum()))
    return centers, labels, history


def kmeans_fit(X, k, seed, max_iter=100, tol=1e-9, n_restarts=1):
    """K-means with k-means++ seeding and Lloyd refinement.

    Empty clusters are repaired by reseeding to the point farthest from
    its assigned center. With ``n_restarts`` > 1 the fit runs that many
    times under derived seeds and keeps the lowest final SSE.
    """
    X, n = _check_matrix(X, k)
    best = None
    for r in range(max(1, n_restarts)):
        run_seed = seed if n_restarts <= 1 else derive_seed(
            seed, "restart", r)
        rng = make_rng(run_seed)
        init = _kmeanspp_init(X, k, rng)
        centers, _, history = _lloyd(X, init, max_iter, tol)
        if best is None or history[-1] < best[2][-1]:
            best = (centers, run_seed, history)
    centers, run_seed, history = best
    return ClusterModel(kind="kmeans", k=k, centers=centers,
                        seed=int(run_seed), history=history)


# ---------------------------------------------------------------------------
# EM with diagonal covariances

def _em_log_resp(X, means, variances, weights):
    """Unnormalized log responsibilities, n x k."""
    n, d = X.shape
    logp = np.empty((n, means.shape[0]))
    for j in range(means.shape[0]):
        var = variances[j]
        quad = np.sum((X - means[j]) ** 2 / var, axis=1)
        logp[:, j] = math.log(max(weights[j], 1e-300)) \
            - 0.5 * (np.sum(np.log(2.0 * math.pi * var)) + quad)
    return logp


def em_fit(X, k, seed, max_iter=200, tol=1e-6):
    """Diagonal-covariance Gaussian mixture by EM [2].

    Initialized from a k-means fit; iterates E and M steps until the
    log-likelihood gain drops below ``tol``. Per-dimension variances
    are floored at 1e-6. A component whose weight collapses below
    1/(10 n) triggers one full reinitialization under a derived seed;
    a second collapse raises DegenerateComponent.
    """
    X, n = _check_matrix(X, k)
    floor_weight = 1.0 / (10.0 * n)

    def initialize(init_seed):
        km = kmeans_fit(X, k, init_seed)
        labels = assign(km, X)
        means = km.centers.copy()
        variances = np.empty_like(means)
        weights = np.empty(k)
        for j in range(k):
            members = X[labels == j]
            weights[j] = max(len(members), 1) / n
            if len(members) > 0:
                variances[j] = np.maximum(
                    members.var(axis=0), VARIANCE_FLOOR)
            else:
                variances[j] = np.maximum(X.var(axis=0), VARIANCE_FLOOR)
        weights = weights / weights.sum()
        return means, variances, weights

    means, variances, weights = initialize(derive_seed(seed, "init"))
    reinitialized = False
    history = []
    it = 0
    while it < max_iter:
        logr = _em_log_resp(X, means, variances, weights)
        peak = logr.max(axis=1, keepdims=True)
        r = np.exp(logr - peak)
        norm = r.sum(axis=1, keepdims=True)
        loglik = float(np.sum(np.log(norm) + peak))
        r /= norm

        nj = r.sum(axis=0)
        new_weights = nj / n
        bad = np.flatnonzero(new_weights < floor_weight)
        if bad.size:
            if reinitialized:
                raise DegenerateComponent(int(bad[0]),
                                          float(new_weights[bad[0]]))
            reinitialized = True
            means, variances, weights = initialize(
                derive_seed(seed, "reinit"))
            history = []
            it = 0
            continue

        history.append(loglik)
        means = (r.T @ X) / nj[:, None]
        for j in range(k):
            variances[j] = np.maximum(
                (r[:, j] @ (X - means[j]) ** 2) / nj[j], VARIANCE_FLOOR)
        weights = new_weights
        it += 1
        if len(history) >= 2 and history[-1] - history[-2] < tol:
            break

    return ClusterModel(kind="em", k=k, centers=means, seed=int(seed),
                        em_weights=weights, em_variances=variances,
                        history=history)


# ---------------------------------------------------------------------------
# farthest-first traversal

def ff_fit(X, k, seed, criterion="min", first_index=None):
    """Farthest-first traversal: greedy k-center seeding [3].

    The first center is a seeded random row (or ``first_index`` when a
    test wants a deterministic start). Each later center is the
    remaining row maximizing the distance criterion to the already
    chosen set: the minimum distance under the default ``min``
    criterion, the sum of distances under ``sum``. Centers are data
    rows, never averages.
    """
    X, n = _check_matrix(X, k)
    if criterion not in ("min", "sum"):
        raise InvalidConfig(f"unknown ff criterion {criterion!r}")
    if first_index is None:
        first = int(make_rng(seed).integers(n))
    else:
        first = int(first_index) % n
    chosen = [first]
    dist = np.sqrt(_sq_distances(X, X[first][None, :])).ravel()
    agg = dist.copy()
    for _ in range(1, k):
        crit = agg.copy()
        crit[chosen] = -np.inf
        nxt = int(np.argmax(crit))
        chosen.append(nxt)
        dist_new = np.sqrt(_sq_distances(X, X[nxt][None, :])).ravel()
        if criterion == "min":
            agg = np.minimum(agg, dist_new)
        else:
            agg = agg + dist_new
    return ClusterModel(kind="ff", k=k, centers=X[chosen],
                        seed=int(seed))


# ---------------------------------------------------------------------------
# canopy

def _build_canopies(X, order, t2):
    """One pass of classic canopy center picking [4].

    Walks the seeded permutation; each still-available point becomes a
    center and removes every available point within t2 of it.
    """
    available = np.ones(X.shape[0], dtype=bool)
    centers = []
    t2sq = t2 * t2
    for idx in order:
        if not available[idx]:
            continue
        centers.append(idx)
        d2 = _sq_distances(X, X[idx][None, :]).ravel()
        available &= d2 > t2sq
    return centers


def _nearest_counts(X, centers):
    labels = np.argmin(_sq_distances(X, centers), axis=1)
    return labels, np.bincount(labels, minlength=centers.shape[0])


def canopy_fit(X, k_target, seed):
    """Canopy clustering coerced to an exact cluster count.

    T2 starts from the attribute-standard-deviation heuristic (mean of
    per-column stds) with T1 = 1.25 T2. If the single-pass canopy count
    misses ``k_target``, T2 is rescaled by bisection for up to 20
    rounds; any remaining excess is merged nearest-pair-first and any
    deficit resolved by splitting the most populous canopy with a local
    2-means. The same seeded permutation drives every pass, so the
    whole construction is deterministic.
    """
    X, n = _check_matrix(X, k_target)
    order = make_rng(seed).permutation(n)
    col_stds = X.std(axis=0, ddof=1) if n > 1 else np.zeros(X.shape[1])
    t2 = float(np.mean(col_stds))
    if not t2 > 0.0:
        t2 = 1.0

    def count_at(t):
        return _build_canopies(X, order, t)

    best_t2, best_centers = t2, count_at(t2)
    if len(best_centers) != k_target:
        # bracket: smaller t2 -> more canopies, larger -> fewer
        lo, hi = t2, t2
        lo_centers, hi_centers = best_centers, best_centers
        for _ in range(40):
            if len(lo_centers) >= k_target:
                break
            lo /= 2.0
            lo_centers = count_at(lo)
        for _ in range(40):
            if len(hi_centers) <= k_target:
                break
            hi *= 2.0
            hi_centers = count_at(hi)

        def better(cand_t, cand_centers, cur_t, cur_centers):
            gap_new = abs(len(cand_centers) - k_target)
            gap_old = abs(len(cur_centers) - k_target)
            if gap_new != gap_old:
                return gap_new < gap_old
            # prefer too many canopies (merging beats splitting)
            return len(cand_centers) > len(cur_centers)

        for cand_t, cand_c in ((lo, lo_centers), (hi, hi_centers)):
            if better(cand_t, cand_c, best_t2, best_centers):
                best_t2, best_centers = cand_t, cand_c
        for _ in range(20):
            if len(best_centers) == k_target:
                break
            mid = 0.5 * (lo + hi)
            mid_centers = count_at(mid)
            if better(mid, mid_centers, best_t2, best_centers):
                best_t2, best_centers = mid, mid_centers
            if len(mid_centers) > k_target:
                lo = mid
            elif len(mid_centers) < k_target:
                hi = mid
            else:
                break

    centers = X[best_centers].astype(float)

    # merge the nearest pair until the count fits
    while centers.shape[0] > k_target:
        _, counts = _nearest_counts(X, centers)
        d2 = _sq_distances(centers, centers)
        np.fill_diagonal(d2, np.inf)
        i, j = np.unravel_index(np.argmin(d2), d2.shape)
        i, j = min(i, j), max(i, j)
        w = counts[i] + counts[j]
        merged = (counts[i] * centers[i] + counts[j] * centers[j]) / max(w, 1)
        centers[i] = merged
        centers = np.delete(centers, j, axis=0)

    # split the most populous canopy until the count fits
    split_round = 0
    while centers.shape[0] < k_target:
        labels, counts = _nearest_counts(X, centers)
        for j in np.argsort(counts, kind="stable")[::-1]:
            members = np.flatnonzero(labels == j)
            if members.size < 2:
                continue
            sub = kmeans_fit(X[members], 2,
                             derive_seed(seed, "split", split_round))
            centers = np.vstack([
                np.delete(centers, j, axis=0), sub.centers])
            break
        else:
            raise Unreachable(k_target, centers.shape[0])
        split_round += 1

    t2 = float(best_t2)
    return ClusterModel(kind="canopy", k=k_target, centers=centers,
                        seed=int(seed), canopy_t1=1.25 * t2, canopy_t2=t2)


# ---------------------------------------------------------------------------
# cluster-count selection

def empirical_k(n):
    """Rule-of-thumb cluster count 1 + 3.2 log10(n).

    Returns (raw, rounded) with half-up rounding to the nearest
    integer.
    """
    if n < 1:
        raise InvalidConfig(f"n must be >= 1, got {n}")
    raw = 1.0 + 3.2 * math.log10(n)
    return raw, int(math.floor(raw + 0.5))


@dataclass
class ElbowCurve:
    """Best-of-restarts SSE per k, with an advisory knee suggestion."""

    entries: list
    knee_k: Optional[int] = None


def elbow_curve(X, k_range, seed, n_restarts=5):
    """SSE-versus-k curve and its maximum-curvature knee.

    Each k is fitted with the best of ``n_restarts`` seeded runs. The
    knee is the interior k maximizing the discrete second difference of
    the SSE sequence; it is a suggestion, not a decision.
    """
    ks = sorted(set(int(k) for k in k_range))
    X_arr = np.asarray(X, dtype=float)
    entries = []
    for k in ks:
        model = kmeans_fit(X_arr, k, derive_seed(seed, "elbow", k),
                           n_restarts=n_restarts)
        entries.append((k, model.history[-1]))
    knee = None
    if len(entries) >= 3:
        sses = [s for _, s in entries]
        curv = [sses[i - 1] - 2.0 * sses[i] + sses[i + 1]
                for i in range(1, len(sses) - 1)]
        knee = entries[1 + int(np.argmax(curv))][0]
    return ElbowCurve(entries=entries, knee_k=knee)


@dataclass
class XMeansResult:
    best_k: int
    best_model: ClusterModel
    bic_by_k: list = field(default_factory=list)


def _bic(X, centers, labels):
    """BIC under identical spherical Gaussians per cluster [5].

    p = k (d + 1) free parameters; the shared variance is the SSE over
    d (n - k), floored to keep degenerate point clouds finite.
    """
    n, d = X.shape
    k = centers.shape[0]
    diff = X - centers[labels]
    sse = float(np.sum(diff * diff))
    dof = d * (n - k)
    if dof <= 0:
        return -np.inf
    sigma2 = max(sse / dof, 1e-12)
    counts = np.bincount(labels, minlength=k).astype(float)
    nz = counts > 0
    loglik = float(np.sum(counts[nz] * np.log(counts[nz] / n))) \
        - 0.5 * n * d * math.log(2.0 * math.pi * sigma2) \
        - 0.5 * dof
    p = k * (d + 1)
    return loglik - 0.5 * p * math.log(n)


def xmeans(X, k_min, k_max, seed):
    """Grow k from k_min by BIC-scored local splits [5].

    Each round tries to split every cluster with a local 2-means whose
    children start at the centroid perturbed by +/- epsilon along a
    seeded random direction; a split sticks iff the two-cluster BIC of
    the member rows beats the one-cluster BIC. After each round the
    full center set is polished by Lloyd iterations. The reported
    best_k maximizes global BIC over every structure visited.
    """
    X, n = _check_matrix(X, k_max)
    if k_min < 1 or k_min > k_max:
        raise InvalidConfig(f"bad k range [{k_min}, {k_max}]")

    model = kmeans_fit(X, k_min, derive_seed(seed, "base"), n_restarts=5)
    centers = model.centers
    trace = []
    snapshots = {}

    def record(centers):
        labels = np.argmin(_sq_distances(X, centers), axis=1)
        score = _bic(X, centers, labels)
        k = centers.shape[0]
        trace.append((k, score))
        snapshots[k] = centers.copy()
        return labels, score

    labels, _ = record(centers)
    round_no = 0
    while centers.shape[0] < k_max:
        accepted = []
        for j in range(centers.shape[0]):
            if centers.shape[0] + len(accepted) >= k_max:
                break
            members = np.flatnonzero(labels == j)
            if members.size < 4:
                continue
            sub = X[members]
            centroid = sub.mean(axis=0)
            spread = float(np.sqrt(
                np.mean(np.sum((sub - centroid) ** 2, axis=1))))
            if spread <= 0.0:
                continue
            rng = make_rng(derive_seed(seed, "split", round_no, j))
            direction = rng.normal(size=X.shape[1])
            direction /= max(float(np.linalg.norm(direction)), 1e-12)
            eps = 0.5 * spread
            init = np.vstack([centroid + eps * direction,
                              centroid - eps * direction])
            child_centers, child_labels, _ = _lloyd(sub, init, 100, 1e-9)
            parent_bic = _bic(sub, centroid[None, :],
                              np.zeros(members.size, dtype=int))
            child_bic = _bic(sub, child_centers, child_labels)
            if child_bic > parent_bic:
                accepted.append((j, child_centers))
        if not accepted:
            break
        keep = np.ones(centers.shape[0], dtype=bool)
        new_rows = []
        for j, child_centers in accepted:
            keep[j] = False
            new_rows.append(child_centers)
        centers = np.vstack([centers[keep]] + new_rows)
        centers, labels, _ = _lloyd(X, centers, 100, 1e-9)
        labels, _ = record(centers)
        round_no += 1

    best_k, _ = max(trace, key=lambda item: item[1])
    best_centers = snapshots[best_k]
    best_model = ClusterModel(kind="kmeans", k=best_k,
                              centers=best_centers, seed=int(seed))
    return XMeansResult(best_k=best_k, best_model=best_model,
                        bic_by_k=trace)
