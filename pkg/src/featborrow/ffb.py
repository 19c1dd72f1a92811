"""Feature fusion: residual merge of original, borrowed and context features.

Each enhanced layer is Y = X + combine([X, Z, ctx]) where Z is the borrowed
map, ctx is a kernel-2/stride-2 transposed convolution of the already-enhanced
deeper layer cropped to this layer's grid, and combine is a learnable 1x1
projection back to the layer's own channel width.  The deepest layer has
nothing to borrow from and passes through unchanged.

The full top-down pass runs deep to shallow: matching and borrowing always
read the original pyramid, while the context path consumes the enhanced
deeper output.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from .errors import GeometryError, ValidationError
from .fmb import (
    FmbParams,
    MatchingMatrix,
    embed_and_stack_keys,
    similarity_matrix,
)
from .frb import BorrowedMap, FrbParams, borrow, encapsulate_and_stack
from .pyramid import FeaturePyramid
from .tensor import (
    ConvWeights1x1,
    DeconvWeights,
    FeatureMap,
    concat_channels,
    conv1x1,
    reshape_map_to_matrix,
    row_softmax,
    transposed_conv,
)


@dataclass(frozen=True)
class FfbParams:
    """Fusion weights for one layer: context deconv plus the combine projection."""

    target_layer: int
    c_ctx: int
    w_deconv: DeconvWeights
    w_combine: ConvWeights1x1

    def __post_init__(self):
        if self.target_layer < 0:
            raise ValidationError(f"FfbParams: target_layer must be >= 0, got {self.target_layer}")
        if self.c_ctx < 1:
            raise ValidationError(f"FfbParams: c_ctx must be >= 1, got {self.c_ctx}")
        if self.w_deconv.c_out != self.c_ctx:
            raise ValidationError(
                f"FfbParams: deconv produces {self.w_deconv.c_out} channels, "
                f"expected c_ctx = {self.c_ctx}"
            )


@dataclass(frozen=True)
class LayerBlockParams:
    """The matching / representing / fusion triple for one target layer."""

    fmb: FmbParams
    frb: FrbParams
    ffb: FfbParams

    def __post_init__(self):
        n = self.fmb.target_layer
        if self.frb.target_layer != n or self.ffb.target_layer != n:
            raise ValidationError(
                f"LayerBlockParams: inconsistent target layers "
                f"({self.fmb.target_layer}, {self.frb.target_layer}, {self.ffb.target_layer})"
            )

    @property
    def target_layer(self) -> int:
        return self.fmb.target_layer


@dataclass(frozen=True)
class BorrowNetParams:
    """Block triples for layers 0..N-2 of a depth-N pyramid."""

    layers: tuple[LayerBlockParams, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        for i, blk in enumerate(self.layers):
            if blk.target_layer != i:
                raise ValidationError(
                    f"BorrowNetParams: block {i} targets layer {blk.target_layer}"
                )

    @property
    def depth(self) -> int:
        """Pyramid depth these parameters are sized for."""
        return len(self.layers) + 1


@dataclass(frozen=True)
class EnhancedPyramid:
    """Output maps, shape-identical to the input pyramid layer by layer."""

    layers: tuple[FeatureMap, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def depth(self) -> int:
        return len(self.layers)

    def shapes(self) -> tuple[tuple[int, int, int], ...]:
        return tuple(x.shape for x in self.layers)


def context_deconv(
    y_deeper: FeatureMap, params: FfbParams, target_h: int, target_w: int
) -> FeatureMap:
    """Decode context from the enhanced deeper layer onto the target grid.

    Only resolution ratios up to 2 per axis are supported; anything larger is
    rejected explicitly rather than silently upsampled in stages.
    """
    if target_h > 2 * y_deeper.h or target_w > 2 * y_deeper.w:
        raise GeometryError(
            f"context_deconv: target {target_h}x{target_w} is more than 2x the "
            f"source {y_deeper.h}x{y_deeper.w}; resolution ratios above 2 are unsupported"
        )
    if target_h < y_deeper.h or target_w < y_deeper.w:
        raise GeometryError(
            f"context_deconv: target {target_h}x{target_w} is smaller than the "
            f"source {y_deeper.h}x{y_deeper.w}"
        )
    return transposed_conv(y_deeper, params.w_deconv, target_h, target_w)


def fuse_layer(
    x: FeatureMap, z: BorrowedMap, ctx: FeatureMap, params: FfbParams
) -> FeatureMap:
    """Residual fusion: X plus the combine projection of [X, Z, ctx]."""
    cat = concat_channels([x, z.z, ctx])
    correction = conv1x1(cat, params.w_combine)
    if correction.c != x.c:
        raise ValidationError(
            f"fuse_layer: combine projection yields {correction.c} channels, "
            f"residual sum needs {x.c}"
        )
    return FeatureMap(x.data + correction.data)


def _forward_with_trace(
    p: FeaturePyramid, params: BorrowNetParams
) -> tuple[list[FeatureMap], list[dict | None]]:
    """Run the top-down pass keeping the intermediates the backward pass needs.

    Returns (enhanced layers, per-layer trace); traces[n] is populated for
    n < N-1 and None for the pass-through top layer.
    """
    n_layers = p.depth
    if params.depth != n_layers:
        raise ValidationError(
            f"params cover a depth-{params.depth} pyramid, input has depth {n_layers}"
        )
    y: list[FeatureMap] = [None] * n_layers  # type: ignore[list-item]
    y[n_layers - 1] = p.layers[n_layers - 1]
    traces: list[dict | None] = [None] * n_layers
    for n in range(n_layers - 2, -1, -1):
        blk = params.layers[n]
        x = p.layers[n]
        q_pre = reshape_map_to_matrix(conv1x1(x, blk.fmb.w_query))
        keys_pre = embed_and_stack_keys(p, blk.fmb)
        s_hat = row_softmax(similarity_matrix(q_pre, keys_pre))
        values = encapsulate_and_stack(p, blk.frb)
        z = borrow(MatchingMatrix(s_hat), values, x.h, x.w)
        ctx = context_deconv(y[n + 1], blk.ffb, x.h, x.w)
        y[n] = fuse_layer(x, z, ctx, blk.ffb)
        traces[n] = {
            "q_pre": q_pre,
            "keys_pre": keys_pre,
            "s_hat": s_hat,
            "values": values,
            "cat": concat_channels([x, z.z, ctx]),
        }
    return y, traces


def forward_pyramid(p: FeaturePyramid, params: BorrowNetParams) -> EnhancedPyramid:
    """Enhance every layer; the deepest passes through unchanged.

    A depth-1 pyramid has nothing to borrow from: the input comes back as-is
    with a warning.
    """
    if p.depth == 1:
        if params.depth != 1:
            raise ValidationError(
                f"params cover a depth-{params.depth} pyramid, input has depth 1"
            )
        warnings.warn(
            "forward_pyramid: depth-1 pyramid has no deeper layers to borrow from; "
            "returning the input unchanged",
            RuntimeWarning,
            stacklevel=2,
        )
        return EnhancedPyramid(p.layers)
    y, _ = _forward_with_trace(p, params)
    return EnhancedPyramid(tuple(y))
