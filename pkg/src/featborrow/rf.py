"""Accumulated stride and theoretical receptive field along a layer chain.

The recurrence is the standard one: starting from rf = 1 and jump = 1 at the
input, each layer adds (kernel - 1) * jump to the receptive field and then
multiplies the jump by its stride.  Padding never enters rf or jump; it is
tracked only so output resolutions can be validated against real networks.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError


@dataclass(frozen=True)
class LayerGeom:
    """One convolution/pooling stage: spatial kernel, stride and padding."""

    name: str
    kernel: int
    stride: int
    padding: int = 0

    def __post_init__(self):
        if self.kernel < 1:
            raise ValidationError(f"{self.name}: kernel must be >= 1, got {self.kernel}")
        if self.stride < 1:
            raise ValidationError(f"{self.name}: stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ValidationError(f"{self.name}: padding must be >= 0, got {self.padding}")


@dataclass(frozen=True)
class LayerTrace:
    """Accumulated geometry immediately after one layer."""

    name: str
    rf: int
    jump: int
    out_size: int | None


@dataclass(frozen=True)
class ChainGeom:
    """Whole-chain result: final jump (cumulative stride), rf and the trace."""

    stride: int
    rf: int
    trace: tuple[LayerTrace, ...]

    def at(self, name: str) -> LayerTrace:
        """Trace entry for the first layer with the given name."""
        for t in self.trace:
            if t.name == name:
                return t
        raise ValidationError(f"no layer named {name!r} in chain")


def chain_geometry(
    layers: list[LayerGeom] | tuple[LayerGeom, ...], input_size: int | None = None
) -> ChainGeom:
    """Fold the rf/jump recurrence over the chain, optionally tracking sizes.

    With input_size given, each trace entry also carries the layer's output
    resolution floor((in + 2 pad - kernel) / stride) + 1.
    """
    if len(layers) == 0:
        raise ValidationError("chain_geometry: need at least one layer")
    rf, jump = 1, 1
    size = input_size
    trace = []
    for layer in layers:
        rf += (layer.kernel - 1) * jump
        jump *= layer.stride
        if size is not None:
            size = (size + 2 * layer.padding - layer.kernel) // layer.stride + 1
            if size < 1:
                raise ValidationError(
                    f"chain_geometry: layer {layer.name!r} reduces the map below 1x1"
                )
        trace.append(LayerTrace(name=layer.name, rf=rf, jump=jump, out_size=size))
    return ChainGeom(stride=jump, rf=rf, trace=tuple(trace))


@dataclass(frozen=True)
class DetectionTarget:
    """Published design figures for one detection layer of a bundled chain."""

    stride: int
    rf: int


@dataclass(frozen=True)
class AuditRow:
    """Computed vs design figures for one detection layer."""

    name: str
    stride: int
    design_stride: int
    rf: int
    design_rf: int
    out_size: int | None

    @property
    def stride_matches(self) -> bool:
        return self.stride == self.design_stride

    @property
    def rf_delta(self) -> int:
        return self.rf - self.design_rf


def audit_chain(
    layers: tuple[LayerGeom, ...] | list[LayerGeom],
    detection: dict[str, DetectionTarget],
    input_size: int | None = None,
) -> list[AuditRow]:
    """Compare the recurrence against a chain's published detection-layer figures.

    Strides are expected to agree exactly; receptive fields routinely differ
    because published tables often count extra stages, so the rf delta is
    reported rather than enforced.
    """
    geom = chain_geometry(layers, input_size=input_size)
    rows = []
    for name, target in detection.items():
        t = geom.at(name)
        rows.append(
            AuditRow(
                name=name,
                stride=t.jump,
                design_stride=target.stride,
                rf=t.rf,
                design_rf=target.rf,
                out_size=t.out_size,
            )
        )
    return rows


def _conv3(name: str) -> LayerGeom:
    return LayerGeom(name, kernel=3, stride=1, padding=1)


def _pool2(name: str, padding: int = 0) -> LayerGeom:
    return LayerGeom(name, kernel=2, stride=2, padding=padding)


# VGG-16-style backbone as used by 300-pixel single-shot detectors, with the
# classifier stages converted to convolutions and two extra stages on top.
# pool3/pool5 carry padding 1 so the 300-px resolutions come out 38/19/10/5.
VGG16_SSD_CHAIN: tuple[LayerGeom, ...] = (
    _conv3("conv1_1"),
    _conv3("conv1_2"),
    _pool2("pool1"),
    _conv3("conv2_1"),
    _conv3("conv2_2"),
    _pool2("pool2"),
    _conv3("conv3_1"),
    _conv3("conv3_2"),
    _conv3("conv3_3"),
    _pool2("pool3", padding=1),
    _conv3("conv4_1"),
    _conv3("conv4_2"),
    _conv3("conv4_3"),
    _pool2("pool4"),
    _conv3("conv5_1"),
    _conv3("conv5_2"),
    _conv3("conv5_3"),
    _pool2("pool5", padding=1),
    _conv3("conv_fc6"),
    LayerGeom("conv_fc7", kernel=1, stride=1),
    LayerGeom("conv6_1", kernel=1, stride=1),
    LayerGeom("conv6_2", kernel=3, stride=2, padding=1),
)

# Detection layers of the bundled chain with their published stride and
# receptive-field figures.  The recurrence reproduces the strides exactly but
# computes smaller receptive fields; audit_chain reports the delta.
VGG16_SSD_DETECTION: dict[str, DetectionTarget] = {
    "conv4_3": DetectionTarget(stride=8, rf=108),
    "conv5_3": DetectionTarget(stride=16, rf=228),
    "conv_fc7": DetectionTarget(stride=32, rf=340),
    "conv6_2": DetectionTarget(stride=64, rf=468),
}
