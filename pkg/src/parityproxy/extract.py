"""Exact spectrum extraction from fitted trees and ensembles.

A depth-d binary-split tree over binary features is a polynomial of parity
degree at most d, so its spectrum can be read off the tree structure in one
recursive pass: a leaf contributes only to the empty set, and an internal
node on feature j combines child spectra as half-sum (j absent) and
half-difference (j joined). Summing per-tree spectra scaled by the learning
rate, plus the base score on the empty set, reproduces ensemble predictions
exactly at every mask. Support size is at most sum_t 4^{depth_t}.
"""

from __future__ import annotations

from .errors import CapacityError, InvalidArgumentError
from .masks import Mask
from .proxy import EXTRACTION_DEPTH_CAP, GbtModel, RegressionTree, TreeNode
from .spectrum import FourierSpectrum

MERGE_PRUNE_EPS = 1e-15


def _extract_node(node: TreeNode, path_bits: int) -> dict[int, float]:
    if node.is_leaf():
        return {0: node.value}
    feat_bit = 1 << node.feature
    if path_bits & feat_bit:
        raise InvalidArgumentError(
            f"feature {node.feature} is tested twice on one path"
        )
    left = _extract_node(node.left, path_bits | feat_bit)
    right = _extract_node(node.right, path_bits | feat_bit)
    out: dict[int, float] = {}
    for key in left.keys() | right.keys():
        v_l = left.get(key, 0.0)
        v_r = right.get(key, 0.0)
        out[key] = (v_l + v_r) / 2.0
        out[key | feat_bit] = (v_l - v_r) / 2.0
    return out


def extract_tree(tree: RegressionTree, n: int) -> FourierSpectrum:
    """Exact spectrum of a single tree over a width-n universe.

    Requires that no root-to-leaf path tests a feature twice; under that
    precondition evaluate(extract_tree(t, n), S) == t(S) for every S.
    """
    raw = _extract_node(tree.root, 0)
    return FourierSpectrum(n, {Mask(n, b): c for b, c in raw.items() if c != 0.0})


def extract_model(model: GbtModel) -> FourierSpectrum:
    """Exact spectrum of the whole ensemble.

    Per-tree spectra are accumulated coefficient-wise, scaled by the
    learning rate, and the base score lands on the empty set. Trees deeper
    than the extraction cap are refused: the support bound 4^depth makes
    them intractable to extract.
    """
    for t in model.trees:
        d = t.depth()
        if d > EXTRACTION_DEPTH_CAP:
            raise CapacityError(
                f"tree depth {d} exceeds extraction cap {EXTRACTION_DEPTH_CAP}"
            )
    acc: dict[int, float] = {0: model.base_score}
    for t in model.trees:
        for bits, c in _extract_node(t.root, 0).items():
            acc[bits] = acc.get(bits, 0.0) + model.learning_rate * c
    coeffs = {
        Mask(model.n, b): c for b, c in acc.items() if abs(c) > MERGE_PRUNE_EPS
    }
    return FourierSpectrum(model.n, coeffs)
