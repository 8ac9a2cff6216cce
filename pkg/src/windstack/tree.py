"""Regression trees with reduced-error pruning, and bagged forests.

Trees grow greedily by variance reduction: at each node the candidate
thresholds are midpoints between consecutive sorted distinct feature
values, and the split minimizing the summed child SSE wins, ties broken
by lowest feature index then lowest threshold. Before growing, the
rows are split internally into a grow set and a prune set; after
growing, bottom-up reduced-error pruning collapses any subtree whose
prune-set squared error is matched or beaten by the single-leaf
replacement. Routing sends a sample left iff feature <= threshold.

The forest is plain bagging over such trees with a feature subsample
(mtry) drawn per split, predictions combined by unweighted mean.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import TooFewRows
from .ingest import kfold_indices
from .rng import derive_seed, make_rng


@dataclass(frozen=True)
class RepTreeParams:
    min_leaf: int = 2
    max_depth: int = 0          # 0 = unlimited
    prune_folds: int = 3        # grow on folds-1 parts, prune on 1
    min_variance_prop: float = 1e-3
    prune: bool = True
    mtry: Optional[int] = None  # None = consider every feature


@dataclass
class Node:
    value: float
    n: int
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["Node"] = None
    right: Optional["Node"] = None

    @property
    def is_leaf(self):
        return self.feature is None

    def collapse(self):
        self.feature = None
        self.threshold = None
        self.left = None
        self.right = None

    def to_dict(self):
        if self.is_leaf:
            return {"value": self.value, "n": self.n}
        return {
            "value": self.value,
            "n": self.n,
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc):
        node = cls(value=doc["value"], n=doc["n"])
        if "feature" in doc:
            node.feature = doc["feature"]
            node.threshold = doc["threshold"]
            node.left = cls.from_dict(doc["left"])
            node.right = cls.from_dict(doc["right"])
        return node


@dataclass
class RepTree:
    root: Node
    params: RepTreeParams
    seed: int
    grow_indices: Optional[np.ndarray] = None
    prune_indices: Optional[np.ndarray] = None

    def predict(self, X):
        return tree_predict(self, X)

    def depth(self):
        def walk(node):
            if node.is_leaf:
                return 0
            return 1 + max(walk(node.left), walk(node.right))
        return walk(self.root)

    def n_leaves(self):
        def walk(node):
            if node.is_leaf:
                return 1
            return walk(node.left) + walk(node.right)
        return walk(self.root)


def _best_split(X, y, rows, min_leaf, mtry, rng):
    """Best (feature, threshold, child row split) by summed child SSE.

    Returns None when no candidate satisfies the min_leaf constraint on
    both sides or no candidate reduces the SSE at all. Features are
    scanned in ascending index order and only strictly better scores
    displace the incumbent, so ties resolve to the lowest feature index
    and, within a feature, to the lowest threshold.
    """
    d = X.shape[1]
    if mtry is None or mtry >= d:
        features = range(d)
    else:
        features = np.sort(rng.choice(d, size=mtry, replace=False))
    yv = y[rows]
    m = yv.size
    node_sse = float(np.sum((yv - yv.mean()) ** 2))
    best = None
    best_sse = node_sse - 1e-12 * max(node_sse, 1.0)
    for j in features:
        xs_all = X[rows, j]
        order = np.argsort(xs_all, kind="stable")
        xs = xs_all[order]
        ys = yv[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        total_sum = csum[-1]
        total_sq = csq[-1]
        sizes = np.arange(1, m)
        valid = (xs[1:] > xs[:-1]) \
            & (sizes >= min_leaf) & (m - sizes >= min_leaf)
        if not valid.any():
            continue
        left_sum = csum[:-1]
        left_sq = csq[:-1]
        sse_left = left_sq - left_sum ** 2 / sizes
        right_sizes = m - sizes
        sse_right = (total_sq - left_sq) \
            - (total_sum - left_sum) ** 2 / right_sizes
        score = np.where(valid, np.maximum(sse_left, 0.0)
                         + np.maximum(sse_right, 0.0), np.inf)
        pos = int(np.argmin(score))
        if score[pos] < best_sse:
            best_sse = float(score[pos])
            threshold = 0.5 * (xs[pos] + xs[pos + 1])
            best = (int(j), float(threshold), rows[order[:pos + 1]],
                    rows[order[pos + 1:]])
    return best


def _grow(X, y, rows, depth, params, root_var, rng):
    yv = y[rows]
    node = Node(value=float(yv.mean()), n=int(rows.size))
    if rows.size < 2 * params.min_leaf:
        return node
    if params.max_depth and depth >= params.max_depth:
        return node
    node_var = float(np.mean((yv - yv.mean()) ** 2))
    if node_var < params.min_variance_prop * root_var:
        return node
    found = _best_split(X, y, rows, params.min_leaf, params.mtry, rng)
    if found is None:
        return node
    j, threshold, left_rows, right_rows = found
    node.feature = j
    node.threshold = threshold
    node.left = _grow(X, y, left_rows, depth + 1, params, root_var, rng)
    node.right = _grow(X, y, right_rows, depth + 1, params, root_var, rng)
    return node


def _prune(node, X, y, rows):
    """Bottom-up reduced-error pruning; returns the node's prune SSE.

    A node whose leaf replacement does not do worse than its subtree
    on the prune rows is collapsed. Nodes that no prune row reaches
    carry zero error on both sides and therefore collapse too: a split
    the prune sample cannot justify is not kept.
    """
    leaf_err = float(np.sum((y[rows] - node.value) ** 2))
    if node.is_leaf:
        return leaf_err
    go_left = X[rows, node.feature] <= node.threshold
    sub_err = _prune(node.left, X, y, rows[go_left]) \
        + _prune(node.right, X, y, rows[~go_left])
    if leaf_err <= sub_err:
        node.collapse()
        return leaf_err
    return sub_err


def reptree_fit(X, y, params=None, seed=0):
    """Grow a variance-reduction tree and prune it on held-out rows.

    With pruning enabled the rows are deterministically shuffled into
    ``prune_folds`` folds; the last fold becomes the prune set and the
    rest the grow set. Too few rows to form the folds (n < prune_folds)
    silently disables pruning since there is nothing to hold out.
    """
    params = params or RepTreeParams()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if n < 2 * params.min_leaf:
        raise TooFewRows(2 * params.min_leaf, n)
    prune_on = params.prune and n >= params.prune_folds and \
        params.prune_folds >= 2
    if prune_on:
        folds = kfold_indices(n, params.prune_folds,
                              derive_seed(seed, "prune-split"))
        prune_rows = np.sort(folds[-1])
        grow_rows = np.sort(np.concatenate(folds[:-1]))
    else:
        grow_rows = np.arange(n)
        prune_rows = np.arange(0)
    if grow_rows.size < 2 * params.min_leaf:
        grow_rows = np.arange(n)
        prune_rows = np.arange(0)
        prune_on = False
    rng = make_rng(derive_seed(seed, "splits"))
    y_grow_var = float(np.mean(
        (y[grow_rows] - y[grow_rows].mean()) ** 2))
    root = _grow(X, y, grow_rows, 0, params, max(y_grow_var, 1e-300), rng)
    if prune_on:
        _prune(root, X, y, prune_rows)
    return RepTree(root=root, params=params, seed=int(seed),
                   grow_indices=grow_rows, prune_indices=prune_rows)


def tree_predict(tree, x):
    """Route rows through the tree; leaf means come back per row."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    out = np.empty(X.shape[0])

    def walk(node, rows):
        if rows.size == 0:
            return
        if node.is_leaf:
            out[rows] = node.value
            return
        go_left = X[rows, node.feature] <= node.threshold
        walk(node.left, rows[go_left])
        walk(node.right, rows[~go_left])

    walk(tree.root, np.arange(X.shape[0]))
    return float(out[0]) if single else out


@dataclass
class Forest:
    trees: list
    n_trees: int
    mtry: int
    seed: int
    params: RepTreeParams

    def predict(self, X):
        return rf_predict(self, X)


def rf_fit(X, y, n_trees=10, params=None, seed=0, mtry=None,
           bootstrap=True):
    """Bagged forest of pruned trees with per-split feature sampling.

    Each tree sees its own bootstrap resample (n draws with
    replacement) under a derived seed; mtry defaults to max(1, d // 3).
    ``bootstrap=False`` is a test mode that fits every tree on the full
    data, making a single-tree forest with mtry = d coincide with a
    plain tree fit at the same derived seed.
    """
    params = params or RepTreeParams()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if n < 2 * params.min_leaf:
        raise TooFewRows(2 * params.min_leaf, n)
    if mtry is None:
        mtry = max(1, d // 3)
    mtry = min(int(mtry), d)
    tree_params = replace(params, mtry=mtry)
    trees = []
    for i in range(n_trees):
        tree_seed = derive_seed(seed, "tree", i)
        if bootstrap:
            idx = make_rng(derive_seed(seed, "boot", i)).integers(0, n, n)
            trees.append(reptree_fit(X[idx], y[idx], tree_params,
                                     tree_seed))
        else:
            trees.append(reptree_fit(X, y, tree_params, tree_seed))
    return Forest(trees=trees, n_trees=n_trees, mtry=mtry,
                  seed=int(seed), params=params)


def rf_predict(forest, x):
    """Unweighted mean over the per-tree predictions."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    acc = np.zeros(X.shape[0])
    for tree in forest.trees:
        acc += tree_predict(tree, X)
    acc /= len(forest.trees)
    return float(acc[0]) if single else acc
