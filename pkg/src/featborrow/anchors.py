"""Anchor design and verification: aspect-ratio bound, equal-ratio scales,
anchor generation, IoU and coverage oracles.

The central quantity is the largest anchor aspect ratio needed so that every
object up to a given elongation is matched at a chosen IoU threshold, assuming
anchor scales are laid out on a geometric progression.  The rest of the module
provides the machinery to check such designs by direct geometry: box IoU,
closed-form centered IoU under aspect-ratio mismatch, and Monte-Carlo coverage
over sampled object shapes against a fully generated anchor set.

The coverage model is translation-free: each sampled object is re-centered on
its nearest anchor center before scoring, so the reported fractions measure
scale/aspect quantization, not localization.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .rng import SplitMix64, substream_seed

DEFAULT_SIZES = (32.0, 64.0, 128.0, 256.0)
DEFAULT_ASPECT_RATIOS = (1.0, 1.5, 3.0, 2.0 / 3.0, 1.0 / 3.0)
DEFAULT_IMAGE_SIZE = 300.0

_RECIPROCAL_TOL = 1e-9
_COVERAGE_CHUNK = 4096


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by center and positive width/height, in pixels."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValidationError(f"Box: width/height must be positive, got {self.w}x{self.h}")
        for v in (self.cx, self.cy, self.w, self.h):
            if not math.isfinite(v):
                raise ValidationError("Box: coordinates must be finite")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def aspect_ratio(self) -> float:
        return self.w / self.h

    @property
    def x1(self) -> float:
        return self.cx - self.w / 2.0

    @property
    def x2(self) -> float:
        return self.cx + self.w / 2.0

    @property
    def y1(self) -> float:
        return self.cy - self.h / 2.0

    @property
    def y2(self) -> float:
        return self.cy + self.h / 2.0


def iou(a: Box, b: Box) -> float:
    """Intersection area over union area of two axis-aligned boxes."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def anchor_ar_factor_terms(iou_threshold: float) -> tuple[float, float, float]:
    """The three candidate shrink factors applied to the object aspect bound.

    Each term is nondecreasing on (0, 1); the bound uses their maximum.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValidationError(
            f"iou threshold must lie in (0, 1), got {iou_threshold}"
        )
    t1 = (2.0 / (1.0 + 1.0 / iou_threshold)) ** 2
    t2 = iou_threshold / (2.0 - 2.0 * iou_threshold)
    t3 = iou_threshold
    return t1, t2, t3


def max_anchor_ar(mar_obj: float, iou: float) -> float:
    """Largest anchor aspect ratio required for objects elongated up to mar_obj.

    Returns the raw formula value; for small mar_obj it can drop below 1 and
    callers decide whether to clamp.  The minimum useful anchor AR is the
    reciprocal of the returned value.
    """
    if mar_obj < 1.0:
        raise ValidationError(f"mar_obj is orientation-free and must be >= 1, got {mar_obj}")
    return mar_obj * max(anchor_ar_factor_terms(iou))


@dataclass(frozen=True)
class AnchorSpec:
    """An anchor design: primary scales, interleaved second scales, aspect ratios.

    Scales are box side lengths at aspect ratio 1 (anchor area is size^2 for
    every AR).  The AR list must be closed under reciprocals so elongation in
    either orientation is matched.  Second-set scales carry aspect ratio 1 only.
    """

    sizes: tuple[float, ...]
    second_sizes: tuple[float, ...]
    aspect_ratios: tuple[float, ...]
    image_size: float

    def __post_init__(self):
        sizes = tuple(float(s) for s in self.sizes)
        second = tuple(float(s) for s in self.second_sizes)
        ars = tuple(float(a) for a in self.aspect_ratios)
        if len(sizes) < 1:
            raise ValidationError("AnchorSpec: need at least one size")
        if any(s <= 0 for s in sizes + second):
            raise ValidationError("AnchorSpec: sizes must be positive")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValidationError(f"AnchorSpec: sizes must be strictly increasing, got {sizes}")
        if len(ars) < 1:
            raise ValidationError("AnchorSpec: need at least one aspect ratio")
        if any(a <= 0 for a in ars):
            raise ValidationError("AnchorSpec: aspect ratios must be positive")
        for a in ars:
            if abs(a - 1.0) <= _RECIPROCAL_TOL:
                continue
            if not any(abs(b - 1.0 / a) <= _RECIPROCAL_TOL * max(1.0, 1.0 / a) for b in ars):
                raise ValidationError(
                    f"AnchorSpec: aspect ratio set must contain 1/{a:g}; got {ars}"
                )
        if not self.image_size > 0:
            raise ValidationError(f"AnchorSpec: image_size must be positive, got {self.image_size}")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "second_sizes", second)
        object.__setattr__(self, "aspect_ratios", ars)
        object.__setattr__(self, "image_size", float(self.image_size))

    @property
    def num_layers(self) -> int:
        return len(self.sizes)

    def layer(self, k: int) -> "AnchorSpec":
        """The design restricted to detection layer k (one size, one second size)."""
        if not 0 <= k < len(self.sizes):
            raise ValidationError(f"AnchorSpec.layer: index {k} out of range")
        second = (self.second_sizes[k],) if k < len(self.second_sizes) else ()
        return AnchorSpec(
            sizes=(self.sizes[k],),
            second_sizes=second,
            aspect_ratios=self.aspect_ratios,
            image_size=self.image_size,
        )


def design_scales(
    base_sizes: list[float] | tuple[float, ...],
    image_size: float,
    aspect_ratios: tuple[float, ...] = DEFAULT_ASPECT_RATIOS,
) -> AnchorSpec:
    """Second-set scales interleaved geometrically between the base scales.

    Every interior second scale is the geometric mean of its neighbors, so the
    combined progression keeps a constant ratio; the last one has no deeper
    neighbor and is pinned to the image size.
    """
    sizes = tuple(float(s) for s in base_sizes)
    if len(sizes) < 2:
        raise ValidationError(f"design_scales: need at least two base sizes, got {len(sizes)}")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValidationError(f"design_scales: base sizes must be strictly increasing, got {sizes}")
    second = tuple(
        math.sqrt(sizes[k] * sizes[k + 1]) for k in range(len(sizes) - 1)
    ) + (float(image_size),)
    return AnchorSpec(
        sizes=sizes,
        second_sizes=second,
        aspect_ratios=aspect_ratios,
        image_size=float(image_size),
    )


def default_anchor_spec() -> AnchorSpec:
    """The bundled four-layer design: sizes 32..256 on a 300 px image."""
    return design_scales(DEFAULT_SIZES, DEFAULT_IMAGE_SIZE)


def default_strides(spec: AnchorSpec) -> tuple[float, ...]:
    """One detection stride per size, size/4: scales and strides share the ratio."""
    return tuple(s / 4.0 for s in spec.sizes)


def generate_anchors(
    spec: AnchorSpec, grid_h: int, grid_w: int, stride: float
) -> list[Box]:
    """Tile every anchor shape of the design on a grid_h x grid_w grid.

    Cell (i, j) centers its anchors at ((j+0.5) stride, (i+0.5) stride).  Each
    size S and aspect ratio a yields a box S*sqrt(a) x S/sqrt(a), preserving
    area S^2; second-set sizes are tiled at aspect ratio 1 only.
    """
    if grid_h < 1 or grid_w < 1:
        raise ValidationError(f"generate_anchors: grid must be >= 1x1, got {grid_h}x{grid_w}")
    if not stride > 0:
        raise ValidationError(f"generate_anchors: stride must be positive, got {stride}")
    shapes = [
        (s * math.sqrt(a), s / math.sqrt(a)) for s in spec.sizes for a in spec.aspect_ratios
    ]
    shapes += [(s, s) for s in spec.second_sizes]
    boxes = []
    for i in range(grid_h):
        cy = (i + 0.5) * stride
        for j in range(grid_w):
            cx = (j + 0.5) * stride
            boxes.extend(Box(cx, cy, w, h) for w, h in shapes)
    return boxes


def centered_iou_for_ar_ratio(rho: float) -> float:
    """IoU of two co-centered equal-area boxes whose ARs differ by factor rho >= 1."""
    if rho < 1.0:
        raise ValidationError(f"AR mismatch factor must be >= 1, got {rho}")
    return 1.0 / (2.0 * math.sqrt(rho) - 1.0)


def best_centered_iou(
    object_ar: float,
    anchor_ars: list[float] | tuple[float, ...],
    free_scale: bool = True,
) -> tuple[float, float]:
    """Best achievable IoU for an object of the given AR against a set of anchor ARs.

    Object and anchor share a center and have equal area (the optimal relative
    scale).  With free_scale the closed form 1/(2 sqrt(rho) - 1) is used, where
    rho is the AR mismatch factor; otherwise the same model is evaluated
    through explicit unit-area box geometry, giving an independent arithmetic
    path to the same value.  Ties keep the earliest anchor AR in the list.
    """
    if object_ar <= 0:
        raise ValidationError(f"object AR must be positive, got {object_ar}")
    if len(anchor_ars) == 0:
        raise ValidationError("need at least one anchor AR")
    best_v = -1.0
    best_a = None
    for a in anchor_ars:
        if a <= 0:
            raise ValidationError(f"anchor ARs must be positive, got {a}")
        if free_scale:
            rho = max(object_ar / a, a / object_ar)
            v = centered_iou_for_ar_ratio(rho)
        else:
            obj = Box(0.0, 0.0, math.sqrt(object_ar), 1.0 / math.sqrt(object_ar))
            anc = Box(0.0, 0.0, math.sqrt(a), 1.0 / math.sqrt(a))
            v = iou(obj, anc)
        if v > best_v:
            best_v, best_a = v, a
    return best_v, best_a


@dataclass(frozen=True)
class WorstCase:
    """The hardest sampled object: its shape and the best IoU any anchor reached."""

    object_ar: float
    object_scale: float | None
    best_iou: float


@dataclass(frozen=True)
class CoverageReport:
    """Outcome of a coverage run over sampled objects."""

    samples: int
    covered: int
    iou_threshold: float
    worst_case: WorstCase
    mode: str  # "ar-only" or "joint"

    @property
    def fraction(self) -> float:
        return self.covered / self.samples

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "samples": self.samples,
            "covered": self.covered,
            "fraction": self.fraction,
            "iou_threshold": self.iou_threshold,
            "worst_case": {
                "object_ar": self.worst_case.object_ar,
                "object_scale": self.worst_case.object_scale,
                "best_iou": self.worst_case.best_iou,
            },
        }


class _AnchorLattice:
    """Per-layer anchor geometry: a center lattice plus its shape list."""

    def __init__(self, stride: float, grid: int, shapes: np.ndarray):
        self.stride = stride
        self.grid = grid
        self.shapes = shapes  # (k, 2) widths/heights

    def nearest_centers(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ix = np.clip(np.round(x / self.stride - 0.5), 0, self.grid - 1)
        iy = np.clip(np.round(y / self.stride - 0.5), 0, self.grid - 1)
        return (ix + 0.5) * self.stride, (iy + 0.5) * self.stride


def _layer_lattices(spec: AnchorSpec, strides: tuple[float, ...]) -> list[_AnchorLattice]:
    if len(strides) != len(spec.sizes):
        raise ValidationError(
            f"coverage: {len(strides)} strides for {len(spec.sizes)} sizes"
        )
    lattices = []
    for k, size in enumerate(spec.sizes):
        stride = float(strides[k])
        if not stride > 0:
            raise ValidationError(f"coverage: strides must be positive, got {stride}")
        grid = max(1, math.ceil(spec.image_size / stride))
        shapes = [(size * math.sqrt(a), size / math.sqrt(a)) for a in spec.aspect_ratios]
        if k < len(spec.second_sizes):
            shapes.append((spec.second_sizes[k], spec.second_sizes[k]))
        lattices.append(_AnchorLattice(stride, grid, np.asarray(shapes)))
    return lattices


def _best_iou_joint(
    lattices: list[_AnchorLattice],
    image_size: float,
    ar: np.ndarray,
    scale: np.ndarray,
    cx: np.ndarray,
    cy: np.ndarray,
) -> np.ndarray:
    """Vectorized best IoU over all anchors for re-centered sampled objects.

    Objects snap to the globally nearest anchor center; per layer, only the
    anchors at the layer's nearest center can maximize IoU (IoU is nonincreasing
    in the per-axis center distance for fixed shapes), so the search is exact.
    """
    best_d = None
    sx = sy = None
    for lat in lattices:
        px, py = lat.nearest_centers(cx, cy)
        d = (px - cx) ** 2 + (py - cy) ** 2
        if best_d is None:
            best_d, sx, sy = d, px, py
        else:
            mask = d < best_d
            best_d = np.where(mask, d, best_d)
            sx = np.where(mask, px, sx)
            sy = np.where(mask, py, sy)
    ow = scale * np.sqrt(ar)
    oh = scale / np.sqrt(ar)
    best = np.zeros_like(ar)
    for lat in lattices:
        px, py = lat.nearest_centers(sx, sy)
        for aw, ah in lat.shapes:
            iw = np.minimum(sx + ow / 2, px + aw / 2) - np.maximum(sx - ow / 2, px - aw / 2)
            ih = np.minimum(sy + oh / 2, py + ah / 2) - np.maximum(sy - oh / 2, py - ah / 2)
            inter = np.maximum(iw, 0.0) * np.maximum(ih, 0.0)
            best = np.maximum(best, inter / (ow * oh + aw * ah - inter))
    return best


def _log_uniform(u: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return np.exp(np.log(lo) + u * (np.log(hi) - np.log(lo)))


def coverage_report(
    spec: AnchorSpec,
    ar_range: tuple[float, float],
    scale_range: tuple[float, float] | None,
    iou_threshold: float,
    samples: int,
    seed: int,
    strides: tuple[float, ...] | None = None,
    threads: int = 1,
) -> CoverageReport:
    """Monte-Carlo coverage of sampled objects by the design's anchors.

    Objects draw AR (and scale, in the joint model) log-uniformly.  With
    scale_range None the model is AR-only: scale is free and the closed-form
    centered IoU against the design's AR set decides coverage.  Otherwise the
    full anchor set is generated (default strides size/4, grids covering the
    image) and each object is scored against it after snapping to its nearest
    anchor center.

    Sampling is split into fixed-size chunks with per-chunk substreams, so the
    result depends only on the seed, never on thread count.
    """
    if samples < 1:
        raise ValidationError(f"coverage: samples must be >= 1, got {samples}")
    if not 0.0 < iou_threshold < 1.0:
        raise ValidationError(f"coverage: threshold must lie in (0, 1), got {iou_threshold}")
    lo_ar, hi_ar = float(ar_range[0]), float(ar_range[1])
    if not 0 < lo_ar <= hi_ar:
        raise ValidationError(f"coverage: bad AR range {ar_range}")
    joint = scale_range is not None
    if joint:
        lo_s, hi_s = float(scale_range[0]), float(scale_range[1])
        if not 0 < lo_s <= hi_s:
            raise ValidationError(f"coverage: bad scale range {scale_range}")
        lattices = _layer_lattices(
            spec, tuple(strides) if strides is not None else default_strides(spec)
        )
    anchor_ars = np.asarray(spec.aspect_ratios)

    n_chunks = (samples + _COVERAGE_CHUNK - 1) // _COVERAGE_CHUNK

    def run_chunk(idx: int) -> tuple[int, WorstCase]:
        count = min(_COVERAGE_CHUNK, samples - idx * _COVERAGE_CHUNK)
        stream = SplitMix64(substream_seed(seed, idx))
        draws_per_sample = 4 if joint else 1
        u = stream.floats(count * draws_per_sample).reshape(count, draws_per_sample)
        ar = _log_uniform(u[:, 0], lo_ar, hi_ar)
        if joint:
            scale = _log_uniform(u[:, 1], lo_s, hi_s)
            cx = u[:, 2] * spec.image_size
            cy = u[:, 3] * spec.image_size
            best = _best_iou_joint(lattices, spec.image_size, ar, scale, cx, cy)
        else:
            scale = None
            rho = np.maximum(ar[:, None] / anchor_ars[None, :], anchor_ars[None, :] / ar[:, None])
            best = (1.0 / (2.0 * np.sqrt(rho) - 1.0)).max(axis=1)
        covered = int((best >= iou_threshold).sum())
        wi = int(np.argmin(best))
        worst = WorstCase(
            object_ar=float(ar[wi]),
            object_scale=float(scale[wi]) if joint else None,
            best_iou=float(best[wi]),
        )
        return covered, worst

    if threads <= 1:
        results = [run_chunk(i) for i in range(n_chunks)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_chunk, range(n_chunks)))

    covered = sum(c for c, _ in results)
    worst = results[0][1]
    for _, w in results[1:]:
        if w.best_iou < worst.best_iou:
            worst = w
    return CoverageReport(
        samples=samples,
        covered=covered,
        iou_threshold=iou_threshold,
        worst_case=worst,
        mode="joint" if joint else "ar-only",
    )
