"""Building, naming and editing the learnable parameter set.

Parameters are addressed by canonical tensor names so gradients, finite
differences and reports all speak the same language:

    layer{n}.query.w          query embedding of layer n (c_n x c_n)
    layer{n}.key{j}.w         key embedding for deeper layer j (c_j x c_n)
    layer{n}.value{j}.w       value encapsulation for deeper layer j (c_j x c_common)
    layer{n}.deconv.kernel    context deconv kernel (2 x 2 x c_{n+1} x c_ctx)
    layer{n}.combine.w        combine projection ((c_n+c_common+c_ctx) x c_n)
    layer{n}.combine.bias     combine bias (c_n), present when enabled

plus ``.bias`` leaves for any embedding built with biases enabled.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import ValidationError
from .ffb import BorrowNetParams, FfbParams, LayerBlockParams
from .fmb import FmbParams
from .frb import FrbParams
from .rng import SplitMix64
from .tensor import ConvWeights1x1, DeconvWeights

INIT_MODES = ("seeded-uniform", "identity", "zeros")

# Seeded-uniform weights are drawn from this symmetric range; biases always
# start at zero.
UNIFORM_HALF_WIDTH = 0.1

ParamGradients = dict[str, np.ndarray]


def _rect_eye(c_in: int, c_out: int) -> np.ndarray:
    return np.eye(c_in, c_out)


class _Filler:
    """Draws parameter tensors for one init mode from a shared stream."""

    def __init__(self, mode: str, seed: int):
        if mode not in INIT_MODES:
            raise ValidationError(f"init mode must be one of {INIT_MODES}, got {mode!r}")
        self.mode = mode
        self.stream = SplitMix64(seed)

    def conv(self, c_in: int, c_out: int) -> np.ndarray:
        if self.mode == "identity":
            return _rect_eye(c_in, c_out)
        if self.mode == "zeros":
            return np.zeros((c_in, c_out))
        u = self.stream.floats(c_in * c_out).reshape(c_in, c_out)
        return (2.0 * u - 1.0) * UNIFORM_HALF_WIDTH

    def deconv(self, c_in: int, c_out: int) -> np.ndarray:
        if self.mode == "identity":
            k = np.zeros((2, 2, c_in, c_out))
            k[0, 0] = _rect_eye(c_in, c_out)
            return k
        if self.mode == "zeros":
            return np.zeros((2, 2, c_in, c_out))
        u = self.stream.floats(4 * c_in * c_out).reshape(2, 2, c_in, c_out)
        return (2.0 * u - 1.0) * UNIFORM_HALF_WIDTH


def init_params(
    shapes: list[tuple[int, int, int]] | tuple[tuple[int, int, int], ...],
    mode: str = "seeded-uniform",
    seed: int = 0,
    c_common: int | None = None,
    c_ctx: int | None = None,
    combine_bias: bool = True,
) -> BorrowNetParams:
    """Parameters for a pyramid with the given per-layer (h, w, c) shapes.

    c_common and c_ctx default to each target layer's own channel count.
    Embedding and value paths carry no bias; the combine projection gets a
    zero-initialized bias unless combine_bias is False.  Tensor draw order is
    the canonical naming order, so a (shapes, mode, seed) triple is fully
    reproducible.
    """
    if len(shapes) < 1:
        raise ValidationError("init_params: need at least one layer shape")
    fill = _Filler(mode, seed)
    channels = [int(c) for _, _, c in shapes]
    blocks = []
    for n in range(len(shapes) - 1):
        c_n = channels[n]
        cc = c_common if c_common is not None else c_n
        cx = c_ctx if c_ctx is not None else c_n
        w_query = ConvWeights1x1(fill.conv(c_n, c_n))
        w_keys = tuple(ConvWeights1x1(fill.conv(cj, c_n)) for cj in channels[n + 1 :])
        w_values = tuple(ConvWeights1x1(fill.conv(cj, cc)) for cj in channels[n + 1 :])
        kernel = fill.deconv(channels[n + 1], cx)
        bias = np.zeros(c_n) if combine_bias else None
        w_combine = ConvWeights1x1(fill.conv(c_n + cc + cx, c_n), bias)
        blocks.append(
            LayerBlockParams(
                fmb=FmbParams(n, w_query, w_keys),
                frb=FrbParams(n, cc, w_values),
                ffb=FfbParams(n, cx, DeconvWeights(kernel), w_combine),
            )
        )
    return BorrowNetParams(tuple(blocks))


def _conv_entries(name: str, cw: ConvWeights1x1) -> list[tuple[str, np.ndarray]]:
    out = [(f"{name}.w", cw.w)]
    if cw.bias is not None:
        out.append((f"{name}.bias", cw.bias))
    return out


def param_tensors(params: BorrowNetParams) -> dict[str, np.ndarray]:
    """All weight/bias tensors keyed by canonical name, in canonical order."""
    out: dict[str, np.ndarray] = {}
    for n, blk in enumerate(params.layers):
        entries = _conv_entries(f"layer{n}.query", blk.fmb.w_query)
        for j, wk in enumerate(blk.fmb.w_keys):
            entries += _conv_entries(f"layer{n}.key{n + 1 + j}", wk)
        for j, wv in enumerate(blk.frb.w_values):
            entries += _conv_entries(f"layer{n}.value{n + 1 + j}", wv)
        entries.append((f"layer{n}.deconv.kernel", blk.ffb.w_deconv.kernel))
        entries += _conv_entries(f"layer{n}.combine", blk.ffb.w_combine)
        for key, val in entries:
            out[key] = val
    return out


def _replace_conv(cw: ConvWeights1x1, leaf: str, value: np.ndarray) -> ConvWeights1x1:
    if leaf == "w":
        return ConvWeights1x1(value, cw.bias)
    if leaf == "bias":
        if cw.bias is None:
            raise ValidationError("cannot set a bias on a bias-free convolution")
        return ConvWeights1x1(cw.w, value)
    raise ValidationError(f"unknown convolution leaf {leaf!r}")


def replace_param_tensor(
    params: BorrowNetParams, name: str, value: np.ndarray
) -> BorrowNetParams:
    """A copy of params with the named tensor replaced (shapes must match)."""
    try:
        layer_part, comp, leaf = name.split(".")
        n = int(layer_part.removeprefix("layer"))
    except ValueError as exc:
        raise ValidationError(f"malformed parameter name {name!r}") from exc
    if not 0 <= n < len(params.layers):
        raise ValidationError(f"parameter name {name!r} addresses a missing layer")
    blk = params.layers[n]
    old = param_tensors(params).get(name)
    if old is None:
        raise ValidationError(f"unknown parameter name {name!r}")
    value = np.asarray(value, dtype=np.float64)
    if value.shape != old.shape:
        raise ValidationError(
            f"replacement for {name} has shape {value.shape}, expected {old.shape}"
        )

    if comp == "query":
        blk = dataclasses.replace(
            blk, fmb=dataclasses.replace(blk.fmb, w_query=_replace_conv(blk.fmb.w_query, leaf, value))
        )
    elif comp.startswith("key"):
        j = int(comp.removeprefix("key")) - (n + 1)
        keys = list(blk.fmb.w_keys)
        keys[j] = _replace_conv(keys[j], leaf, value)
        blk = dataclasses.replace(blk, fmb=dataclasses.replace(blk.fmb, w_keys=tuple(keys)))
    elif comp.startswith("value"):
        j = int(comp.removeprefix("value")) - (n + 1)
        vals = list(blk.frb.w_values)
        vals[j] = _replace_conv(vals[j], leaf, value)
        blk = dataclasses.replace(blk, frb=dataclasses.replace(blk.frb, w_values=tuple(vals)))
    elif comp == "deconv":
        blk = dataclasses.replace(
            blk, ffb=dataclasses.replace(blk.ffb, w_deconv=DeconvWeights(value))
        )
    elif comp == "combine":
        blk = dataclasses.replace(
            blk,
            ffb=dataclasses.replace(blk.ffb, w_combine=_replace_conv(blk.ffb.w_combine, leaf, value)),
        )
    else:
        raise ValidationError(f"unknown parameter name {name!r}")

    layers = list(params.layers)
    layers[n] = blk
    return BorrowNetParams(tuple(layers))
