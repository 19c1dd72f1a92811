"""Feature pyramids: ordered multi-scale maps with decreasing resolution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .rng import SplitMix64
from .tensor import FeatureMap


@dataclass(frozen=True)
class FeaturePyramid:
    """Maps ordered shallow to deep; spatial dims shrink as depth grows.

    Adjacent layers must satisfy h[n+1] <= h[n] and w[n+1] <= w[n] with a
    strict decrease in at least one of the two.  Channel counts are free.
    """

    layers: tuple[FeatureMap, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if len(layers) < 1:
            raise ValidationError("FeaturePyramid: need at least one layer")
        for n in range(len(layers) - 1):
            a, b = layers[n], layers[n + 1]
            ok = b.h <= a.h and b.w <= a.w and (b.h < a.h or b.w < a.w)
            if not ok:
                raise ValidationError(
                    f"FeaturePyramid: layer {n + 1} ({b.h}x{b.w}) must be strictly "
                    f"smaller than layer {n} ({a.h}x{a.w}) in at least one spatial dim "
                    f"and larger in none"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def depth(self) -> int:
        return len(self.layers)

    def shapes(self) -> tuple[tuple[int, int, int], ...]:
        return tuple(x.shape for x in self.layers)

    def descriptor_counts(self) -> tuple[int, ...]:
        return tuple(x.h * x.w for x in self.layers)

    def deeper_descriptor_count(self, n: int) -> int:
        """Total descriptors in layers strictly deeper than n."""
        return sum(x.h * x.w for x in self.layers[n + 1 :])


def synthetic_pyramid(
    shapes: list[tuple[int, int, int]] | tuple[tuple[int, int, int], ...],
    seed: int,
    lo: float = -1.0,
    hi: float = 1.0,
) -> FeaturePyramid:
    """Seeded pyramid with uniform values in [lo, hi), layer by layer, row-major.

    The fill order is fixed (layers shallow to deep, each C-order), so a given
    (shapes, seed) pair yields bit-identical data on every platform.
    """
    stream = SplitMix64(seed)
    layers = []
    for h, w, c in shapes:
        n = int(h) * int(w) * int(c)
        vals = lo + (hi - lo) * stream.floats(n)
        layers.append(FeatureMap(vals.reshape(int(h), int(w), int(c))))
    return FeaturePyramid(tuple(layers))
