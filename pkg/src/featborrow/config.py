"""Run configuration: JSON schema, validation and defaults.

Top-level keys (all optional unless a command needs them):

    pyramid       list of [h, w, c] layer shapes, shallow to deep
    seed          nonnegative integer, drives data + parameter streams
    init          "seeded-uniform" | "identity" | "zeros"
    c_common      borrowed-channel width override (default: target layer's c)
    c_ctx         context-channel width override (default: target layer's c)
    combine_bias  bool, default true
    anchors       {sizes, image_size, aspect_ratios, strides}
    rf_chain      "vgg16" or a list of {name, kernel, stride, padding}
    annotations   path to a COCO-style JSON file

Unknown keys are rejected by name; every constraint violation names the field
and the constraint so configs fail before any computation starts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .anchors import AnchorSpec, default_anchor_spec, default_strides, design_scales
from .errors import FormatError, ValidationError
from .params import INIT_MODES
from .rf import VGG16_SSD_CHAIN, VGG16_SSD_DETECTION, DetectionTarget, LayerGeom

_TOP_KEYS = {
    "pyramid",
    "seed",
    "init",
    "c_common",
    "c_ctx",
    "combine_bias",
    "anchors",
    "rf_chain",
    "annotations",
}
_ANCHOR_KEYS = {"sizes", "image_size", "aspect_ratios", "strides"}
_LAYER_KEYS = {"name", "kernel", "stride", "padding"}


@dataclass(frozen=True)
class RunConfig:
    pyramid: tuple[tuple[int, int, int], ...] | None
    seed: int
    init: str
    c_common: int | None
    c_ctx: int | None
    combine_bias: bool
    anchor_spec: AnchorSpec
    strides: tuple[float, ...]
    rf_layers: tuple[LayerGeom, ...]
    rf_detection: dict[str, DetectionTarget] = field(default_factory=dict)
    annotations: str | None = None

    def require_pyramid(self) -> tuple[tuple[int, int, int], ...]:
        if self.pyramid is None:
            raise ValidationError("config: this command needs a 'pyramid' entry")
        return self.pyramid


def _expect_int(value, name: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"config: {name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValidationError(f"config: {name} must be >= {minimum}, got {value}")
    return value


def _expect_number(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"config: {name} must be a number, got {value!r}")
    return float(value)


def _parse_pyramid(raw) -> tuple[tuple[int, int, int], ...]:
    if not isinstance(raw, list) or len(raw) < 1:
        raise ValidationError("config: pyramid must be a non-empty list of [h, w, c] triples")
    shapes = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, list) or len(entry) != 3:
            raise ValidationError(f"config: pyramid[{i}] must be an [h, w, c] triple")
        h = _expect_int(entry[0], f"pyramid[{i}].h", 1)
        w = _expect_int(entry[1], f"pyramid[{i}].w", 1)
        c = _expect_int(entry[2], f"pyramid[{i}].c", 1)
        shapes.append((h, w, c))
    for i in range(len(shapes) - 1):
        (h0, w0, _), (h1, w1, _) = shapes[i], shapes[i + 1]
        if not (h1 <= h0 and w1 <= w0 and (h1 < h0 or w1 < w0)):
            raise ValidationError(
                f"config: pyramid[{i + 1}] ({h1}x{w1}) violates the monotonicity "
                f"invariant: spatial dims must not grow and must strictly shrink "
                f"in at least one axis (previous layer {h0}x{w0})"
            )
        if h0 > 2 * h1 or w0 > 2 * w1:
            raise ValidationError(
                f"config: pyramid[{i}] ({h0}x{w0}) is more than 2x pyramid[{i + 1}] "
                f"({h1}x{w1}); the context deconv supports ratios up to 2"
            )
    return tuple(shapes)


def _parse_anchors(raw) -> tuple[AnchorSpec, tuple[float, ...]]:
    if not isinstance(raw, dict):
        raise ValidationError("config: anchors must be an object")
    unknown = set(raw) - _ANCHOR_KEYS
    if unknown:
        raise ValidationError(f"config: unknown anchors key {sorted(unknown)[0]!r}")
    sizes = raw.get("sizes", [32, 64, 128, 256])
    if not isinstance(sizes, list) or len(sizes) < 2:
        raise ValidationError("config: anchors.sizes must be a list of at least two scales")
    sizes = [_expect_number(s, "anchors.sizes[]") for s in sizes]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValidationError(
            f"config: anchors.sizes must be strictly increasing, got {sizes}"
        )
    image_size = _expect_number(raw.get("image_size", 300), "anchors.image_size")
    if image_size <= 0:
        raise ValidationError(f"config: anchors.image_size must be positive, got {image_size}")
    if "aspect_ratios" in raw:
        ars = raw["aspect_ratios"]
        if not isinstance(ars, list) or not ars:
            raise ValidationError("config: anchors.aspect_ratios must be a non-empty list")
        ars = tuple(_expect_number(a, "anchors.aspect_ratios[]") for a in ars)
        spec = design_scales(sizes, image_size, aspect_ratios=ars)
    else:
        spec = design_scales(sizes, image_size)
    if "strides" in raw:
        strides = raw["strides"]
        if not isinstance(strides, list) or len(strides) != len(sizes):
            raise ValidationError(
                "config: anchors.strides must list one stride per anchor size"
            )
        strides = tuple(_expect_number(s, "anchors.strides[]") for s in strides)
        if any(s <= 0 for s in strides):
            raise ValidationError("config: anchors.strides must be positive")
    else:
        strides = default_strides(spec)
    return spec, strides


def _parse_rf_chain(raw) -> tuple[tuple[LayerGeom, ...], dict[str, DetectionTarget]]:
    if raw == "vgg16":
        return VGG16_SSD_CHAIN, dict(VGG16_SSD_DETECTION)
    if not isinstance(raw, list) or len(raw) < 1:
        raise ValidationError(
            "config: rf_chain must be \"vgg16\" or a non-empty list of layer objects"
        )
    layers = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise ValidationError(f"config: rf_chain[{i}] must be an object")
        unknown = set(entry) - _LAYER_KEYS
        if unknown:
            raise ValidationError(f"config: unknown rf_chain key {sorted(unknown)[0]!r}")
        layers.append(
            LayerGeom(
                name=str(entry.get("name", f"layer{i}")),
                kernel=_expect_int(entry.get("kernel", 1), f"rf_chain[{i}].kernel", 1),
                stride=_expect_int(entry.get("stride", 1), f"rf_chain[{i}].stride", 1),
                padding=_expect_int(entry.get("padding", 0), f"rf_chain[{i}].padding", 0),
            )
        )
    return tuple(layers), {}


def config_from_dict(doc: dict) -> RunConfig:
    """Validate a parsed JSON object into a RunConfig, applying defaults."""
    if not isinstance(doc, dict):
        raise ValidationError("config: top level must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ValidationError(f"config: unknown key {sorted(unknown)[0]!r}")

    pyramid = _parse_pyramid(doc["pyramid"]) if "pyramid" in doc else None
    seed = _expect_int(doc.get("seed", 0), "seed", 0)
    init = doc.get("init", "seeded-uniform")
    if init not in INIT_MODES:
        raise ValidationError(f"config: init must be one of {INIT_MODES}, got {init!r}")
    c_common = _expect_int(doc["c_common"], "c_common", 1) if "c_common" in doc else None
    c_ctx = _expect_int(doc["c_ctx"], "c_ctx", 1) if "c_ctx" in doc else None
    combine_bias = doc.get("combine_bias", True)
    if not isinstance(combine_bias, bool):
        raise ValidationError(f"config: combine_bias must be a bool, got {combine_bias!r}")
    if "anchors" in doc:
        anchor_spec, strides = _parse_anchors(doc["anchors"])
    else:
        anchor_spec = default_anchor_spec()
        strides = default_strides(anchor_spec)
    rf_layers, rf_detection = _parse_rf_chain(doc.get("rf_chain", "vgg16"))
    annotations = doc.get("annotations")
    if annotations is not None and not isinstance(annotations, str):
        raise ValidationError(f"config: annotations must be a path string, got {annotations!r}")

    return RunConfig(
        pyramid=pyramid,
        seed=seed,
        init=init,
        c_common=c_common,
        c_ctx=c_ctx,
        combine_bias=combine_bias,
        anchor_spec=anchor_spec,
        strides=strides,
        rf_layers=rf_layers,
        rf_detection=rf_detection,
        annotations=annotations,
    )


def parse_config(path) -> RunConfig:
    """Load and validate a JSON config file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def default_config() -> RunConfig:
    """The configuration every CLI command falls back to without --config."""
    return config_from_dict({})
