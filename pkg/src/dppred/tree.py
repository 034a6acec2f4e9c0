"""Constrained random decision trees used as rule generators.

Trees grow on bootstrap samples with a hard depth cap and a minimum bag
size on both sides of every split, so any root-to-node path covers enough
training instances to be worth keeping as a candidate rule. Splits pick
the best of a few randomly sampled (feature, threshold) pairs rather than
scanning exhaustively.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import STREAM_TREE, sub_rng

TASK_CLASSIFICATION = "classification"
TASK_REGRESSION = "regression"

# splits must beat this relative floor so float noise in the moment
# arithmetic never splits an (effectively) pure bag
_GAIN_EPS = 1e-12


@dataclass
class TreeConfig:
    n_trees: int = 100
    max_depth: int = 6
    min_bag: int = 10
    n_feature_candidates: int | None = None  # None: ceil(sqrt(d))
    # 16 samples per feature keep split boundaries sharp enough that the
    # pool contains near-exact copies of generating rules; 4 is too coarse
    n_threshold_candidates: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_bag < 1:
            raise ValueError("min_bag must be >= 1")
        if self.n_feature_candidates is not None and self.n_feature_candidates < 1:
            raise ValueError("n_feature_candidates must be >= 1")
        if self.n_threshold_candidates < 1:
            raise ValueError("n_threshold_candidates must be >= 1")


@dataclass
class TreeNode:
    # internal nodes carry (dim, threshold, left, right); leaves carry neither
    dim: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    prediction: object = None  # class distribution or bag mean
    bag_size: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class DecisionTree:
    root: TreeNode
    bootstrap_indices: np.ndarray = field(repr=False, default=None)


def impurity(labels: np.ndarray, task: str) -> float:
    """Shannon entropy in bits (classification) or variance about the mean (regression)."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("impurity of an empty bag is undefined")
    if task == TASK_CLASSIFICATION:
        counts = np.bincount(labels.astype(np.int64))
        p = counts[counts > 0] / labels.size
        return float(-(p * np.log2(p)).sum())
    if task == TASK_REGRESSION:
        return float(np.mean((labels - labels.mean()) ** 2))
    raise ValueError(f"unknown task {task!r}")


def _entropy_from_counts(counts: np.ndarray, totals: np.ndarray) -> np.ndarray:
    # counts: (C, t), totals: (t,); columns with total 0 are left at 0
    with np.errstate(divide="ignore", invalid="ignore"):
        p = counts / totals
        logs = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -(np.where(p > 0, p * logs, 0.0)).sum(axis=0)


def best_random_split(bag: np.ndarray, ds, cfg: TreeConfig, rng: np.random.Generator):
    """Best of the sampled candidate splits, or None when no candidate is usable.

    A candidate is usable when both children keep at least ``min_bag``
    instances and the size-weighted impurity drop is strictly positive.
    Exact ties resolve to the lowest (dim, threshold).
    """
    n_bag = len(bag)
    sigma = cfg.min_bag
    if n_bag < 2 * sigma:
        return None

    task = TASK_CLASSIFICATION if ds.label_kind == "class" else TASK_REGRESSION
    y = ds.y[bag]
    n_feats = cfg.n_feature_candidates or math.ceil(math.sqrt(ds.d))
    dims = rng.choice(ds.d, size=min(n_feats, ds.d), replace=False)

    if task == TASK_CLASSIFICATION:
        y_int = y.astype(np.int64)
        n_classes = int(y_int.max()) + 1 if n_bag else 1
        onehot = (y_int[:, None] == np.arange(n_classes)[None, :]).astype(np.float64)
        total_counts = onehot.sum(axis=0)
        parent = float(_entropy_from_counts(total_counts[:, None], np.array([float(n_bag)]))[0])
    else:
        sum_tot = float(y.sum())
        sumsq_tot = float((y * y).sum())
        # moment form (clipped) keeps parent and children arithmetically
        # consistent so pure bags yield exactly zero gain
        parent = max(sumsq_tot / n_bag - (sum_tot / n_bag) ** 2, 0.0)

    best = None
    for dim in dims:
        xcol = ds.x[bag, dim]
        if ds.binary_dims[dim]:
            thresholds = np.array([0.5])
        else:
            lo, hi = float(xcol.min()), float(xcol.max())
            if lo == hi:
                continue
            thresholds = rng.uniform(lo, hi, size=cfg.n_threshold_candidates)

        masks = xcol[:, None] < thresholds[None, :]
        n_left = masks.sum(axis=0).astype(np.float64)
        n_right = n_bag - n_left
        usable = (n_left >= sigma) & (n_right >= sigma)
        if not usable.any():
            continue

        if task == TASK_CLASSIFICATION:
            left_counts = onehot.T @ masks
            right_counts = total_counts[:, None] - left_counts
            imp_l = _entropy_from_counts(left_counts, n_left)
            imp_r = _entropy_from_counts(right_counts, n_right)
        else:
            s1 = y @ masks
            s2 = (y * y) @ masks
            with np.errstate(divide="ignore", invalid="ignore"):
                imp_l = np.where(n_left > 0, s2 / n_left - (s1 / n_left) ** 2, 0.0)
                imp_r = np.where(
                    n_right > 0,
                    (sumsq_tot - s2) / n_right - ((sum_tot - s1) / n_right) ** 2,
                    0.0,
                )
            imp_l = np.maximum(imp_l, 0.0)
            imp_r = np.maximum(imp_r, 0.0)

        gains = parent - (n_left * imp_l + n_right * imp_r) / n_bag
        for t in np.flatnonzero(usable):
            gain = float(gains[t])
            if gain <= _GAIN_EPS * max(1.0, parent):
                continue
            cand = (-gain, int(dim), float(thresholds[t]))
            if best is None or cand < best:
                best = cand

    if best is None:
        return None
    neg_gain, dim, thr = best
    return dim, thr, -neg_gain


def _leaf(ds, bag: np.ndarray, task: str, n_classes: int) -> TreeNode:
    y = ds.y[bag]
    if task == TASK_CLASSIFICATION:
        counts = np.bincount(y.astype(np.int64), minlength=n_classes)
        prediction = counts / len(bag)
    else:
        prediction = float(y.mean())
    return TreeNode(prediction=prediction, bag_size=len(bag))


def fit_tree(ds, cfg: TreeConfig, rng: np.random.Generator) -> DecisionTree:
    """Grow one tree on a bootstrap sample of ``ds``."""
    if ds.n == 0:
        raise ValueError("cannot fit a tree on an empty dataset")
    task = TASK_CLASSIFICATION if ds.label_kind == "class" else TASK_REGRESSION
    if task == TASK_CLASSIFICATION:
        n_classes = len(ds.label_names) if ds.label_names else int(ds.y.max()) + 1
    else:
        n_classes = 0
    bootstrap = rng.integers(0, ds.n, size=ds.n)

    def grow(bag: np.ndarray, depth: int) -> TreeNode:
        if depth >= cfg.max_depth or len(bag) < 2 * cfg.min_bag:
            return _leaf(ds, bag, task, n_classes)
        split = best_random_split(bag, ds, cfg, rng)
        if split is None:
            return _leaf(ds, bag, task, n_classes)
        dim, thr, _ = split
        mask = ds.x[bag, dim] < thr
        node = _leaf(ds, bag, task, n_classes)
        node.dim = dim
        node.threshold = thr
        node.left = grow(bag[mask], depth + 1)
        node.right = grow(bag[~mask], depth + 1)
        return node

    root = grow(bootstrap, 0)
    return DecisionTree(root=root, bootstrap_indices=bootstrap)


def fit_forest(ds, cfg: TreeConfig) -> list[DecisionTree]:
    """Grow ``n_trees`` trees, each from its own generator derived from (seed, t)."""
    return [fit_tree(ds, cfg, sub_rng(cfg.seed, STREAM_TREE, t)) for t in range(cfg.n_trees)]


def iter_nodes(root: TreeNode, depth: int = 0):
    """Yield (node, depth) over the whole tree, preorder."""
    yield root, depth
    if not root.is_leaf:
        yield from iter_nodes(root.left, depth + 1)
        yield from iter_nodes(root.right, depth + 1)


def route(root: TreeNode, x: np.ndarray):
    """Yield the nodes visited when routing ``x`` from the root to a leaf."""
    node = root
    while True:
        yield node
        if node.is_leaf:
            return
        node = node.left if x[node.dim] < node.threshold else node.right
