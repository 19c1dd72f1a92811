"""Feature representing: weighted combinations of encapsulated deeper descriptors.

Deeper layers are projected to a common channel width by 1x1 convolutions
(the "value" path), stacked in the same order the matching block uses, and
each shallow cell receives the matching-weighted average of all of them.
Because the weights are row-stochastic, every borrowed fiber lies in the
convex hull of the encapsulated deeper descriptors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ValidationError
from .fmb import MatchingMatrix, _check_target
from .pyramid import FeaturePyramid
from .tensor import (
    ConvWeights1x1,
    FeatureMap,
    Matrix,
    conv1x1,
    matmul,
    reshape_map_to_matrix,
    reshape_matrix_to_map,
)


@dataclass(frozen=True)
class FrbParams:
    """Value encapsulations for one target layer, all mapping into c_common."""

    target_layer: int
    c_common: int
    w_values: tuple[ConvWeights1x1, ...]

    def __post_init__(self):
        if self.target_layer < 0:
            raise ValidationError(f"FrbParams: target_layer must be >= 0, got {self.target_layer}")
        if self.c_common < 1:
            raise ValidationError(f"FrbParams: c_common must be >= 1, got {self.c_common}")
        object.__setattr__(self, "w_values", tuple(self.w_values))
        for w in self.w_values:
            if w.c_out != self.c_common:
                raise ValidationError(
                    f"FrbParams: value encapsulation maps to {w.c_out} channels, "
                    f"expected c_common = {self.c_common}"
                )


@dataclass(frozen=True)
class BorrowedMap:
    """The borrowed map for one layer: h_n x w_n fibers of width c_common."""

    z: FeatureMap


def encapsulate_and_stack(p: FeaturePyramid, params: FrbParams) -> Matrix:
    """Project every deeper layer to c_common and stack rows in matching order."""
    n = params.target_layer
    _check_target(p, n)
    deeper = p.layers[n + 1 :]
    if len(params.w_values) != len(deeper):
        raise ShapeError(
            f"encapsulate_and_stack: {len(params.w_values)} value encapsulations "
            f"for {len(deeper)} deeper layers"
        )
    blocks = [
        reshape_map_to_matrix(conv1x1(x, w)).data for x, w in zip(deeper, params.w_values)
    ]
    return Matrix(np.vstack(blocks))


def borrow(s: MatchingMatrix, values: Matrix, h: int, w: int) -> BorrowedMap:
    """Weighted combination: row r of the output is sum_t s[r, t] * values[t]."""
    if s.d != values.rows:
        raise ShapeError(
            f"borrow: matching matrix is {s.m}x{s.d}, values are "
            f"{values.rows}x{values.cols}"
        )
    if s.m != h * w:
        raise ShapeError(
            f"borrow: matching matrix has {s.m} rows, target grid is {h}x{w}"
        )
    z = matmul(s.values, values)
    return BorrowedMap(reshape_matrix_to_map(z, h, w))
