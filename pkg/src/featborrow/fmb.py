"""Feature matching: row-stochastic links from shallow to deeper descriptors.

For a target layer n, every descriptor of that layer is scored against every
descriptor of all deeper layers.  Both sides go through 1x1 embeddings into a
common channel width, rows are L2-normalized so the dot product is a cosine
(a perfect match scores 1), and a row softmax turns scores into weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ValidationError
from .pyramid import FeaturePyramid
from .tensor import (
    ConvWeights1x1,
    Matrix,
    conv1x1,
    l2_normalize_rows,
    matmul,
    reshape_map_to_matrix,
    row_softmax,
)

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class FmbParams:
    """Embeddings for one target layer: a query map plus one key map per deeper layer.

    The query embedding preserves the target layer's channel count; every key
    embedding maps its deeper layer into that same width.
    """

    target_layer: int
    w_query: ConvWeights1x1
    w_keys: tuple[ConvWeights1x1, ...]

    def __post_init__(self):
        if self.target_layer < 0:
            raise ValidationError(f"FmbParams: target_layer must be >= 0, got {self.target_layer}")
        if self.w_query.c_in != self.w_query.c_out:
            raise ValidationError(
                f"FmbParams: query embedding must preserve channels, "
                f"got {self.w_query.c_in} -> {self.w_query.c_out}"
            )
        object.__setattr__(self, "w_keys", tuple(self.w_keys))
        for k in self.w_keys:
            if k.c_out != self.w_query.c_out:
                raise ValidationError(
                    f"FmbParams: key embedding maps to {k.c_out} channels, "
                    f"query width is {self.w_query.c_out}"
                )


@dataclass(frozen=True)
class MatchingMatrix:
    """Row-stochastic m x d weights from shallow descriptors to deeper ones."""

    values: Matrix

    def __post_init__(self):
        v = self.values.data
        sums = v.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            worst = float(np.abs(sums - 1.0).max())
            raise ValidationError(
                f"MatchingMatrix: rows must sum to 1 within {ROW_SUM_TOL}, worst off by {worst:g}"
            )
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValidationError("MatchingMatrix: entries must lie in [0, 1]")

    @property
    def m(self) -> int:
        return self.values.rows

    @property
    def d(self) -> int:
        return self.values.cols


def _check_target(p: FeaturePyramid, target_layer: int) -> None:
    if not 0 <= target_layer < p.depth:
        raise ValidationError(
            f"target_layer {target_layer} out of range for a depth-{p.depth} pyramid"
        )
    if target_layer == p.depth - 1:
        raise ValidationError(
            f"layer {target_layer} has no deeper layers to match against"
        )


def embed_and_stack_keys(p: FeaturePyramid, params: FmbParams) -> Matrix:
    """Embed every deeper layer and stack the descriptors into one d x c matrix.

    Rows follow layer order n+1..N, each layer unrolled row-major, matching
    the column order of the matching matrix.
    """
    n = params.target_layer
    _check_target(p, n)
    deeper = p.layers[n + 1 :]
    if len(params.w_keys) != len(deeper):
        raise ShapeError(
            f"embed_and_stack_keys: {len(params.w_keys)} key embeddings for "
            f"{len(deeper)} deeper layers"
        )
    blocks = [
        reshape_map_to_matrix(conv1x1(x, w)).data for x, w in zip(deeper, params.w_keys)
    ]
    return Matrix(np.vstack(blocks))


def similarity_matrix(query: Matrix, keys: Matrix) -> Matrix:
    """Cosine similarity of every query row against every key row.

    Both sides are L2-normalized first, so scores are bounded by 1 in
    magnitude and identical directions score exactly 1.
    """
    if query.cols != keys.cols:
        raise ShapeError(
            f"similarity_matrix: query is {query.rows}x{query.cols}, "
            f"keys are {keys.rows}x{keys.cols}; channel widths differ"
        )
    qn = l2_normalize_rows(query)
    kn = l2_normalize_rows(keys)
    return matmul(qn, Matrix(kn.data.T))


def matching_matrix(p: FeaturePyramid, params: FmbParams) -> MatchingMatrix:
    """Full block: embed, score and row-softmax into an m_n x d_n weight matrix."""
    n = params.target_layer
    _check_target(p, n)
    target = p.layers[n]
    query = reshape_map_to_matrix(conv1x1(target, params.w_query))
    keys = embed_and_stack_keys(p, params)
    scores = similarity_matrix(query, keys)
    return MatchingMatrix(row_softmax(scores))
