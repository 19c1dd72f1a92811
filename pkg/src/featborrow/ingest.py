"""Bounding-box statistics from COCO-style annotation files.

Only the "annotations" array is read, and from each entry only the bbox
width/height plus the image and category ids.  The statistics feed anchor
design: aspect ratios are orientation-normalized to >= 1 (the anchor set is
closed under reciprocals, so only the degree of elongation matters), and the
scale of a box is the side of the equal-area square, sqrt(w*h).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import FormatError, ValidationError

DEFAULT_PERCENTILES = (50.0, 90.0, 95.0, 99.0, 100.0)

_SCALE_BIN_RATIO = math.sqrt(2.0)


@dataclass(frozen=True)
class ObjectBox:
    image_id: int
    category_id: int
    width: float
    height: float


@dataclass(frozen=True)
class AnnotationSet:
    """Retained objects plus the count of malformed/degenerate entries dropped."""

    objects: tuple[ObjectBox, ...]
    skipped: int

    def __len__(self) -> int:
        return len(self.objects)


def _parse_entry(entry) -> ObjectBox | None:
    if not isinstance(entry, dict):
        return None
    bbox = entry.get("bbox")
    if not isinstance(bbox, (list, tuple)) or len(bbox) < 4:
        return None
    try:
        w = float(bbox[2])
        h = float(bbox[3])
        image_id = int(entry.get("image_id", -1))
        category_id = int(entry.get("category_id", -1))
    except (TypeError, ValueError):
        return None
    if not (math.isfinite(w) and math.isfinite(h) and w > 0 and h > 0):
        return None
    return ObjectBox(image_id=image_id, category_id=category_id, width=w, height=h)


def load_annotations(path, category: int | None = None) -> AnnotationSet:
    """Read a COCO-style JSON file into an AnnotationSet.

    Entries without a usable positive-size bbox are skipped and counted.  An
    optional category id restricts the set (filtered entries are not counted
    as skipped).  Unreadable files raise OSError; structural problems raise
    FormatError.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "annotations" not in doc:
        raise FormatError(f"{path}: missing the 'annotations' key")
    raw = doc["annotations"]
    if not isinstance(raw, list):
        raise FormatError(f"{path}: 'annotations' must be an array")
    objects = []
    skipped = 0
    for entry in raw:
        obj = _parse_entry(entry)
        if obj is None:
            skipped += 1
            continue
        if category is not None and obj.category_id != category:
            continue
        objects.append(obj)
    return AnnotationSet(objects=tuple(objects), skipped=skipped)


@dataclass(frozen=True)
class ScaleBin:
    lo: float
    hi: float
    count: int


@dataclass(frozen=True)
class ArStats:
    """Aspect-ratio percentiles and a geometric scale histogram."""

    count: int
    percentiles: dict[float, float]
    scale_bins: tuple[ScaleBin, ...]

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "ar_percentiles": {f"p{p:g}": v for p, v in self.percentiles.items()},
            "scale_bins": [
                {"lo": b.lo, "hi": b.hi, "count": b.count} for b in self.scale_bins
            ],
        }


def nearest_rank_percentile(sorted_values: list[float], p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value.

    p = 0 maps to the minimum; p must lie in [0, 100].
    """
    n = len(sorted_values)
    if n == 0:
        raise ValidationError("percentile of an empty list")
    if not 0.0 <= p <= 100.0:
        raise ValidationError(f"percentile must lie in [0, 100], got {p}")
    rank = max(1, math.ceil(p / 100.0 * n))
    return sorted_values[rank - 1]


def ar_stats(
    annots: AnnotationSet, percentiles: tuple[float, ...] = DEFAULT_PERCENTILES
) -> ArStats:
    """Orientation-free AR percentiles and a sqrt(2)-ratio scale histogram.

    Aspect ratios are max(w/h, h/w).  Scale bins start at the smallest
    observed scale and grow geometrically by sqrt(2); every observed scale
    falls in exactly one bin.
    """
    if len(annots) == 0:
        raise ValidationError("ar_stats: annotation set is empty")
    ars = sorted(max(o.width / o.height, o.height / o.width) for o in annots.objects)
    table = {float(p): nearest_rank_percentile(ars, float(p)) for p in percentiles}

    scales = [math.sqrt(o.width * o.height) for o in annots.objects]
    smin, smax = min(scales), max(scales)
    log_ratio = math.log(_SCALE_BIN_RATIO)
    n_bins = 1 + int(math.floor(math.log(smax / smin) / log_ratio + 1e-12))
    counts = [0] * n_bins
    for s in scales:
        k = int(math.floor(math.log(s / smin) / log_ratio + 1e-12))
        counts[min(k, n_bins - 1)] += 1
    bins = tuple(
        ScaleBin(
            lo=smin * _SCALE_BIN_RATIO**k,
            hi=smin * _SCALE_BIN_RATIO ** (k + 1),
            count=counts[k],
        )
        for k in range(n_bins)
    )
    return ArStats(count=len(annots), percentiles=table, scale_bins=bins)
