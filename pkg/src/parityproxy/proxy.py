"""Surrogate models fit to mask datasets.

The primary surrogate is a squared-loss gradient boosted ensemble of
binary-split regression trees, written here rather than taken from a
library so that fitting is bit-deterministic and the fitted structure is
directly convertible to an exact sparse spectrum. No shrinkage beyond the
learning rate, no subsampling, no second-order terms.

Marginal baselines live here too: an L1 path regression on the degree-1
parity design (scikit-learn coordinate descent underneath) and a
kernel-weighted Shapley value estimator.
"""

from __future__ import annotations

import json
import warnings
from collections.abc import Sequence
from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import InvalidArgumentError
from .masks import Mask, MaskDataset, ValueFunction, evaluate_dataset
from .spectrum import FourierSpectrum

EXTRACTION_DEPTH_CAP = 10


@dataclass
class TreeNode:
    """One node of a binary-split regression tree.

    Internal nodes hold the feature index tested at this node; `left` is
    the bit-clear (feature masked) branch and `right` the bit-set branch.
    Leaves hold `value` and have feature None.
    """

    feature: int | None = None
    value: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass
class RegressionTree:
    root: TreeNode

    def depth(self) -> int:
        def go(node):
            if node.is_leaf():
                return 0
            return 1 + max(go(node.left), go(node.right))

        return go(self.root)

    def __call__(self, mask: Mask) -> float:
        node = self.root
        while not node.is_leaf():
            node = node.right if node.feature in mask else node.left
        return node.value


@dataclass
class GbtModel:
    """Additive tree ensemble: prediction = base + lr * sum of tree outputs."""

    n: int
    base_score: float
    learning_rate: float
    trees: list[RegressionTree]

    def max_depth(self) -> int:
        return max((t.depth() for t in self.trees), default=0)


@dataclass
class FitConfig:
    max_depth: int | None = 5
    num_trees: int = 100
    learning_rate: float = 0.1
    min_leaf: int = 1
    folds: int = 5

    def __post_init__(self):
        if self.num_trees < 1:
            raise InvalidArgumentError("num_trees must be >= 1")
        if self.folds < 2:
            raise InvalidArgumentError("folds must be >= 2")
        if not 0.0 < self.learning_rate <= 1.0:
            raise InvalidArgumentError("learning_rate must lie in (0, 1]")
        if self.min_leaf < 1:
            raise InvalidArgumentError("min_leaf must be >= 1")


def desk_grid() -> list[FitConfig]:
    """Small default search grid for interactive use."""
    return [
        FitConfig(max_depth=d, num_trees=t, learning_rate=0.1)
        for d in (3, 5)
        for t in (100, 300)
    ]


def full_grid() -> list[FitConfig]:
    """The large reference grid: depths 3/5/unbounded, 500-5000 trees,
    learning rates 0.01 and 0.1."""
    return [
        FitConfig(max_depth=d, num_trees=t, learning_rate=lr)
        for d in (3, 5, None)
        for t in (500, 1000, 5000)
        for lr in (0.01, 0.1)
    ]


def _build_tree(
    X: np.ndarray,
    resid: np.ndarray,
    idx: np.ndarray,
    depth_left: int,
    min_leaf: int,
    used: np.ndarray,
    delta: np.ndarray,
) -> TreeNode:
    """Greedy variance-reduction splitter on binary features.

    Split gain for a candidate feature is the decrease in residual SSE,
    which reduces to sum_L^2/n_L + sum_R^2/n_R - sum^2/n. Ties go to the
    lowest feature index; a node becomes a leaf when no allowed split has
    positive gain, the depth limit is hit, or a child would fall under
    min_leaf samples.
    """
    r = resid[idx]
    total = float(r.sum())
    cnt = len(idx)
    mean = total / cnt

    if depth_left == 0 or cnt < 2 * min_leaf:
        delta[idx] = mean
        return TreeNode(value=mean)

    sub = X[idx]
    counts1 = sub.sum(axis=0, dtype=np.float64)
    counts0 = cnt - counts1
    sums1 = sub.T.astype(np.float64) @ r
    sums0 = total - sums1
    with np.errstate(divide="ignore", invalid="ignore"):
        gains = sums0**2 / counts0 + sums1**2 / counts1 - total**2 / cnt
    invalid = used | (counts0 < min_leaf) | (counts1 < min_leaf)
    gains[invalid] = -np.inf

    best = int(np.argmax(gains))
    if not gains[best] > 0.0:
        delta[idx] = mean
        return TreeNode(value=mean)

    child_used = used.copy()
    child_used[best] = True
    on = sub[:, best].astype(bool)
    left = _build_tree(X, resid, idx[~on], depth_left - 1, min_leaf, child_used, delta)
    right = _build_tree(X, resid, idx[on], depth_left - 1, min_leaf, child_used, delta)
    return TreeNode(feature=best, left=left, right=right)


def fit_gbt(data: MaskDataset, cfg: FitConfig) -> GbtModel:
    """Fit the boosted ensemble to a mask dataset.

    base_score is the mean training value; each round fits one tree to the
    current residuals and predictions advance by learning_rate times the
    tree output. Fitting is deterministic given the data order and config.
    """
    if len(data) == 0:
        raise InvalidArgumentError("cannot fit on an empty dataset")
    X = data.bool_matrix()
    y = data.values()
    m, n = X.shape
    depth_limit = cfg.max_depth if cfg.max_depth is not None else n

    base = float(y.mean())
    pred = np.full(m, base)
    trees: list[RegressionTree] = []
    all_idx = np.arange(m)
    no_used = np.zeros(n, dtype=bool)
    for _ in range(cfg.num_trees):
        resid = y - pred
        delta = np.zeros(m)
        root = _build_tree(X, resid, all_idx, depth_limit, cfg.min_leaf, no_used, delta)
        trees.append(RegressionTree(root))
        pred += cfg.learning_rate * delta
    return GbtModel(n=n, base_score=base, learning_rate=cfg.learning_rate, trees=trees)


def predict(model: GbtModel, mask: Mask) -> float:
    if mask.n != model.n:
        raise InvalidArgumentError(
            f"mask width {mask.n} != model width {model.n}"
        )
    return model.base_score + model.learning_rate * sum(
        t(mask) for t in model.trees
    )


def _apply_tree(node: TreeNode, X: np.ndarray, idx: np.ndarray, out: np.ndarray):
    if node.is_leaf():
        out[idx] = node.value
        return
    on = X[idx, node.feature].astype(bool)
    _apply_tree(node.left, X, idx[~on], out)
    _apply_tree(node.right, X, idx[on], out)


def predict_batch(model: GbtModel, masks: Sequence[Mask]) -> np.ndarray:
    """Vectorized ensemble prediction over many masks."""
    for m in masks:
        if m.n != model.n:
            raise InvalidArgumentError(
                f"mask width {m.n} != model width {model.n}"
            )
    X = np.zeros((len(masks), model.n), dtype=np.uint8)
    for r, m in enumerate(masks):
        for i in m.indices():
            X[r, i] = 1
    acc = np.zeros(len(masks))
    idx = np.arange(len(masks))
    scratch = np.zeros(len(masks))
    for tree in model.trees:
        _apply_tree(tree.root, X, idx, scratch)
        acc += scratch
    return model.base_score + model.learning_rate * acc


def _cv_mse(data: MaskDataset, cfg: FitConfig, seed: int) -> float:
    m = len(data)
    perm = np.random.default_rng(seed).permutation(m)
    bounds = [m * i // cfg.folds for i in range(cfg.folds + 1)]
    masks = data.masks()
    errs = []
    for f in range(cfg.folds):
        test_idx = perm[bounds[f] : bounds[f + 1]]
        train_idx = np.concatenate([perm[: bounds[f]], perm[bounds[f + 1] :]])
        train = MaskDataset(data.n, [data.samples[i] for i in train_idx])
        model = fit_gbt(train, cfg)
        test_masks = [masks[i] for i in test_idx]
        pred = predict_batch(model, test_masks)
        truth = np.array([data.samples[i][1] for i in test_idx])
        errs.append(float(np.mean((pred - truth) ** 2)))
    return float(np.mean(errs))


def cross_validate(
    data: MaskDataset,
    grid: Sequence[FitConfig],
    seed: int = 0,
    scores_out: list | None = None,
) -> tuple[FitConfig, GbtModel]:
    """Pick the grid entry with lowest mean held-out MSE and refit on all
    data. Folds are contiguous blocks after a seeded shuffle; ties break
    toward the earlier grid position. scores_out, when given, receives the
    per-config mean CV errors.
    """
    if not grid:
        raise InvalidArgumentError("grid must be nonempty")
    for cfg in grid:
        if len(data) < cfg.folds:
            raise InvalidArgumentError(
                f"{len(data)} samples cannot support {cfg.folds}-fold CV"
            )
    best_cfg, best_err = None, np.inf
    for cfg in grid:
        err = _cv_mse(data, cfg, seed)
        if scores_out is not None:
            scores_out.append(err)
        if err < best_err:
            best_cfg, best_err = cfg, err
    return best_cfg, fit_gbt(data, best_cfg)


def _node_to_json(node: TreeNode):
    if node.is_leaf():
        return {"value": node.value}
    return {
        "feat": node.feature,
        "left": _node_to_json(node.left),
        "right": _node_to_json(node.right),
    }


def _node_from_json(obj) -> TreeNode:
    if "value" in obj:
        return TreeNode(value=float(obj["value"]))
    return TreeNode(
        feature=int(obj["feat"]),
        left=_node_from_json(obj["left"]),
        right=_node_from_json(obj["right"]),
    )


def save_model(path: str, model: GbtModel) -> None:
    doc = {
        "n": model.n,
        "base_score": model.base_score,
        "learning_rate": model.learning_rate,
        "trees": [_node_to_json(t.root) for t in model.trees],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path: str) -> GbtModel:
    with open(path) as fh:
        doc = json.load(fh)
    return GbtModel(
        n=int(doc["n"]),
        base_score=float(doc["base_score"]),
        learning_rate=float(doc["learning_rate"]),
        trees=[RegressionTree(_node_from_json(t)) for t in doc["trees"]],
    )


def fit_lasso(
    data: MaskDataset,
    num_lambdas: int = 100,
    lambda_ratio: float = 1e-3,
    folds: int = 5,
) -> FourierSpectrum:
    """L1 path regression on the degree-1 parity design.

    Columns are (-1)^{[i in S]} per feature plus an unpenalized intercept;
    the penalty path is num_lambdas geometric steps from the smallest
    all-zeroing lambda down to lambda_ratio times it, the winner chosen by
    folds-fold CV MSE. Returns the result as a degree <= 1 spectrum whose
    empty-set coefficient is the intercept.
    """
    from sklearn.linear_model import LassoCV

    if len(data) == 0:
        raise InvalidArgumentError("cannot fit on an empty dataset")
    if len(data) < folds:
        raise InvalidArgumentError(
            f"{len(data)} samples cannot support {folds}-fold CV"
        )
    X = 1.0 - 2.0 * data.bool_matrix().astype(np.float64)
    y = data.values()

    lam_max = float(np.max(np.abs(X.T @ (y - y.mean())))) / len(y)
    if lam_max == 0.0:
        return FourierSpectrum(data.n, {Mask(data.n, 0): float(y.mean())})

    model = LassoCV(
        n_alphas=num_lambdas,
        eps=lambda_ratio,
        cv=folds,
        fit_intercept=True,
        max_iter=100_000,
        tol=1e-8,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model.fit(X, y)

    coeffs = {Mask(data.n, 0): float(model.intercept_)}
    for i, c in enumerate(model.coef_):
        if c != 0.0:
            coeffs[Mask.from_indices(data.n, [i])] = float(c)
    return FourierSpectrum(data.n, coeffs)


def shapley_kernel_weights(n: int) -> np.ndarray:
    """Per-coalition kernel weight by coalition size, sizes 0..n.

    The infinite-weight endpoints are represented as 0 here because they
    are handled as exact anchors. The total mass of one size level is
    comb(n, s) times the returned entry.
    """
    w = np.zeros(n + 1)
    for s in range(1, n):
        w[s] = (n - 1) / (comb(n, s) * s * (n - s))
    return w


def _enumerate_size_level(n: int, size: int) -> list[int]:
    """All coalition bitmasks of one size, lexicographic member order."""
    from itertools import combinations

    out = []
    for members in combinations(range(n), size):
        bits = 0
        for i in members:
            bits |= 1 << i
        out.append(bits)
    return out


def kernel_shap(vf: ValueFunction, budget: int, seed: int) -> np.ndarray:
    """Kernel-weighted Shapley value estimation.

    Two anchor queries pin f(empty) and f(full); the rest of the budget
    goes to coalitions of sizes 1..n-1. Complete paired size levels
    (s, n-s) are enumerated outright while they fit in the remaining
    budget, carrying their exact kernel weight; whatever budget is left is
    spent on masks sampled from the residual kernel distribution (with
    complement pairing). The constrained weighted least squares whose
    solution sums to f(full) - f(empty) then yields the estimates; when
    every level fits, that solve recovers Shapley values exactly.
    """
    n = vf.n
    if n < 2:
        raise InvalidArgumentError("kernel weights degenerate for n < 2")
    if budget < n + 2:
        raise InvalidArgumentError(f"budget {budget} < n + 2 = {n + 2}")

    rng = np.random.default_rng(seed)
    m = budget - 2
    w = shapley_kernel_weights(n)

    rows: list[int] = []
    weights: list[float] = []
    remaining_sizes = set(range(1, n))
    budget_left = m
    for s in range(1, n // 2 + 1):
        group = {s, n - s} & remaining_sizes
        if not group:
            continue
        count = sum(comb(n, g) for g in group)
        if count > budget_left:
            break
        for g in sorted(group):
            for bits in _enumerate_size_level(n, g):
                rows.append(bits)
                weights.append(w[g])
        remaining_sizes -= group
        budget_left -= count

    if budget_left > 0 and remaining_sizes:
        # size-level mass, not per-coalition weight, drives the sampling
        probs = np.array(
            [
                comb(n, s) * w[s] if s in remaining_sizes else 0.0
                for s in range(n + 1)
            ]
        )
        leftover_mass = float(probs.sum())
        probs /= probs.sum()
        per_sample = leftover_mass / budget_left
        drawn = 0
        prev_bits = 0
        while drawn < budget_left:
            if drawn % 2 == 0 or (n - (prev_bits.bit_count())) not in remaining_sizes:
                size = int(rng.choice(n + 1, p=probs))
                members = rng.permutation(n)[:size]
                bits = 0
                for i in members:
                    bits |= 1 << int(i)
            else:
                bits = ((1 << n) - 1) & ~prev_bits
            rows.append(bits)
            weights.append(per_sample)
            prev_bits = bits
            drawn += 1

    coalition_masks = [Mask(n, bits) for bits in rows]
    f0 = vf(Mask(n, 0))
    f1 = vf(Mask.full(n))
    y = np.array(evaluate_dataset(vf, coalition_masks).values())

    Z = np.zeros((len(rows), n))
    for r, bits in enumerate(rows):
        for i in range(n):
            if bits >> i & 1:
                Z[r, i] = 1.0
    wv = np.asarray(weights)
    total = wv.sum()
    A = (Z.T * wv) @ Z / total
    b = (Z.T * wv) @ (y - f0) / total
    try:
        A_inv = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        A_inv = np.linalg.pinv(A)
    ones = np.ones(n)
    shift = (ones @ A_inv @ b - (f1 - f0)) / (ones @ A_inv @ ones)
    return A_inv @ (b - shift * ones)


def exact_shapley_from_vf(vf: ValueFunction, batch_size: int = 4096) -> np.ndarray:
    """Exact Shapley values by full-cube enumeration; exponential in n,
    intended for oracles and small universes."""
    import math

    n = vf.n
    masks = [Mask(n, b) for b in range(1 << n)]
    values = np.array(evaluate_dataset(vf, masks, batch_size).values())
    phi = np.zeros(n)
    weight = [
        math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n)
        for s in range(n)
    ]
    for bits in range(1 << n):
        s = bits.bit_count()
        for i in range(n):
            if bits >> i & 1:
                continue
            phi[i] += weight[s] * (values[bits | 1 << i] - values[bits])
    return phi
