"""Minimal dense-tensor arithmetic: rank-2 matrices and rank-3 feature maps.

Everything is double precision and immutable; each operation returns a new
value, so results can be shared freely across threads.  The op set is
deliberately small: matmul, stable row softmax, row L2 normalization,
1x1 convolution, a fixed kernel-2 / stride-2 transposed convolution, channel
concatenation and row-major map<->matrix reshapes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ValidationError

# Rows whose L2 norm falls below this are treated as exactly zero when
# normalizing, to avoid NaN on degenerate descriptors.
NORM_EPS = 1e-12


def _frozen_f64(values, what: str, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, order="C")
    if arr.ndim != ndim:
        raise ShapeError(f"{what}: expected rank {ndim}, got shape {arr.shape}")
    if arr.size == 0:
        raise ValidationError(f"{what}: all dimensions must be >= 1, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what}: values must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Matrix:
    """A rows x cols double-precision matrix with finite entries."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_f64(self.data, "Matrix", 2))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class FeatureMap:
    """An h x w x c map; the c-length fiber at (i, j) is one descriptor."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_f64(self.data, "FeatureMap", 3))

    @property
    def h(self) -> int:
        return self.data.shape[0]

    @property
    def w(self) -> int:
        return self.data.shape[1]

    @property
    def c(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def fiber(self, i: int, j: int) -> np.ndarray:
        return self.data[i, j]


@dataclass(frozen=True)
class ConvWeights1x1:
    """Weights of a 1x1 convolution: a c_in x c_out matrix plus optional bias."""

    w: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "w", _frozen_f64(self.w, "ConvWeights1x1.w", 2))
        if self.bias is not None:
            b = _frozen_f64(self.bias, "ConvWeights1x1.bias", 1)
            if b.shape[0] != self.w.shape[1]:
                raise ShapeError(
                    f"ConvWeights1x1: bias has {b.shape[0]} entries, "
                    f"weights map to {self.w.shape[1]} channels"
                )
            object.__setattr__(self, "bias", b)

    @property
    def c_in(self) -> int:
        return self.w.shape[0]

    @property
    def c_out(self) -> int:
        return self.w.shape[1]


@dataclass(frozen=True)
class DeconvWeights:
    """Fixed kernel-2, stride-2 transposed-convolution weights (2x2xc_inxc_out)."""

    kernel: np.ndarray

    STRIDE = 2

    def __post_init__(self):
        k = _frozen_f64(self.kernel, "DeconvWeights.kernel", 4)
        if k.shape[0] != 2 or k.shape[1] != 2:
            raise ShapeError(f"DeconvWeights: kernel spatial size must be 2x2, got {k.shape[:2]}")
        object.__setattr__(self, "kernel", k)

    @property
    def c_in(self) -> int:
        return self.kernel.shape[2]

    @property
    def c_out(self) -> int:
        return self.kernel.shape[3]

    @property
    def stride(self) -> int:
        return self.STRIDE


# ---------------------------------------------------------------------------
# Raw ndarray kernels, shared with the hand-written backward passes.
# ---------------------------------------------------------------------------

def softmax_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise softmax with per-row max subtraction for stability."""
    shifted = a - a.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def l2norm_rows(a: np.ndarray, eps: float = NORM_EPS) -> tuple[np.ndarray, np.ndarray]:
    """Return (row-normalized copy, row norms); rows with norm < eps become zero."""
    norms = np.sqrt((a * a).sum(axis=1))
    safe = np.where(norms < eps, 1.0, norms)
    out = a / safe[:, None]
    out[norms < eps] = 0.0
    return out, norms


def deconv2x2_full(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Stride-2 scatter of every input cell through the 2x2 kernel: (2h, 2w, c_out)."""
    h, w, _ = x.shape
    c_out = kernel.shape[3]
    full = np.einsum("hwc,abco->hawbo", x, kernel)
    return full.reshape(2 * h, 2 * w, c_out)


def crop_offsets(full_h: int, full_w: int, target_h: int, target_w: int) -> tuple[int, int]:
    """Center-crop offsets, biased toward the top-left when the margin is odd."""
    return (full_h - target_h) // 2, (full_w - target_w) // 2


# ---------------------------------------------------------------------------
# Public operations.
# ---------------------------------------------------------------------------

def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Standard matrix product; shapes must conform."""
    if a.cols != b.rows:
        raise ShapeError(f"matmul: {a.rows}x{a.cols} does not conform with {b.rows}x{b.cols}")
    return Matrix(a.data @ b.data)


def row_softmax(m: Matrix) -> Matrix:
    """Softmax over each row; rows come back nonnegative and summing to 1."""
    return Matrix(softmax_rows(m.data))


def l2_normalize_rows(m: Matrix, eps: float = NORM_EPS) -> Matrix:
    """Scale each row to unit Euclidean norm; rows with norm < eps become all-zero."""
    out, _ = l2norm_rows(m.data, eps)
    return Matrix(out)


def conv1x1(x: FeatureMap, weights: ConvWeights1x1) -> FeatureMap:
    """Per-fiber linear map: every output fiber is w.T @ fiber (+ bias)."""
    if x.c != weights.c_in:
        raise ShapeError(
            f"conv1x1: map has {x.c} channels ({x.shape}), weights expect "
            f"{weights.c_in} ({weights.w.shape})"
        )
    out = x.data @ weights.w
    if weights.bias is not None:
        out = out + weights.bias
    return FeatureMap(out)


def transposed_conv(
    x: FeatureMap, weights: DeconvWeights, target_h: int, target_w: int
) -> FeatureMap:
    """Kernel-2, stride-2 transposed convolution, center-cropped to the target.

    The scatter produces an exact 2h x 2w map (the 2x2 output blocks tile
    without overlap); the crop keeps the central target_h x target_w window,
    biased toward the top-left when the margin is odd.
    """
    if x.c != weights.c_in:
        raise ShapeError(
            f"transposed_conv: map has {x.c} channels ({x.shape}), kernel expects "
            f"{weights.c_in} ({weights.kernel.shape})"
        )
    if not (x.h <= target_h <= 2 * x.h and x.w <= target_w <= 2 * x.w):
        raise ShapeError(
            f"transposed_conv: target {target_h}x{target_w} outside "
            f"[{x.h}, {2 * x.h}] x [{x.w}, {2 * x.w}] for input {x.h}x{x.w}"
        )
    full = deconv2x2_full(x.data, weights.kernel)
    oi, oj = crop_offsets(2 * x.h, 2 * x.w, target_h, target_w)
    return FeatureMap(full[oi : oi + target_h, oj : oj + target_w])


def concat_channels(xs: list[FeatureMap] | tuple[FeatureMap, ...]) -> FeatureMap:
    """Concatenate fibers in argument order; all maps must share h x w."""
    if len(xs) == 0:
        raise ValidationError("concat_channels: need at least one map")
    first = xs[0]
    for x in xs[1:]:
        if (x.h, x.w) != (first.h, first.w):
            raise ShapeError(
                f"concat_channels: spatial dims differ, {first.h}x{first.w} vs {x.h}x{x.w}"
            )
    if len(xs) == 1:
        return first
    return FeatureMap(np.concatenate([x.data for x in xs], axis=2))


def reshape_map_to_matrix(x: FeatureMap) -> Matrix:
    """Row-major unrolling: matrix row i*w + j is the descriptor at (i, j)."""
    return Matrix(x.data.reshape(x.h * x.w, x.c))


def reshape_matrix_to_map(m: Matrix, h: int, w: int) -> FeatureMap:
    """Inverse of reshape_map_to_matrix for the given spatial dims."""
    if h < 1 or w < 1:
        raise ValidationError(f"reshape_matrix_to_map: need h, w >= 1, got {h}x{w}")
    if m.rows != h * w:
        raise ShapeError(
            f"reshape_matrix_to_map: matrix is {m.rows}x{m.cols}, "
            f"cannot fold rows into {h}x{w}"
        )
    return FeatureMap(m.data.reshape(h, w, m.cols))
