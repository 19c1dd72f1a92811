"""Cross-layer feature borrowing over multi-scale pyramids, with the anchor
design and geometry tooling needed to audit a single-shot detector built on it.

The numerical pipeline: a matching block scores each shallow descriptor
against all deeper descriptors (embedded cosine + row softmax), a representing
block mixes encapsulated deeper descriptors with those weights, and a fusion
block merges original, borrowed and deconvolved context features through a
residual 1x1 projection.  Every learnable tensor has a hand-written gradient
verified by central finite differences.
"""

from .anchors import (
    AnchorSpec,
    Box,
    CoverageReport,
    WorstCase,
    anchor_ar_factor_terms,
    best_centered_iou,
    centered_iou_for_ar_ratio,
    coverage_report,
    default_anchor_spec,
    default_strides,
    design_scales,
    generate_anchors,
    iou,
    max_anchor_ar,
)
from .autograd import (
    GradCheckReport,
    backward,
    central_difference,
    compare_gradients,
    finite_difference,
    gradcheck,
    sq_loss,
)
from .config import RunConfig, config_from_dict, default_config, parse_config
from .errors import FormatError, GeometryError, ShapeError, ValidationError
from .ffb import (
    BorrowNetParams,
    EnhancedPyramid,
    FfbParams,
    LayerBlockParams,
    context_deconv,
    forward_pyramid,
    fuse_layer,
)
from .fmb import (
    FmbParams,
    MatchingMatrix,
    embed_and_stack_keys,
    matching_matrix,
    similarity_matrix,
)
from .frb import BorrowedMap, FrbParams, borrow, encapsulate_and_stack
from .ingest import (
    AnnotationSet,
    ArStats,
    ObjectBox,
    ar_stats,
    load_annotations,
    nearest_rank_percentile,
)
from .params import ParamGradients, init_params, param_tensors, replace_param_tensor
from .pyramid import FeaturePyramid, synthetic_pyramid
from .rf import (
    AuditRow,
    ChainGeom,
    DetectionTarget,
    LayerGeom,
    LayerTrace,
    VGG16_SSD_CHAIN,
    VGG16_SSD_DETECTION,
    audit_chain,
    chain_geometry,
)
from .rng import SplitMix64, substream_seed
from .tensor import (
    ConvWeights1x1,
    DeconvWeights,
    FeatureMap,
    Matrix,
    concat_channels,
    conv1x1,
    l2_normalize_rows,
    matmul,
    reshape_map_to_matrix,
    reshape_matrix_to_map,
    row_softmax,
    transposed_conv,
)
from .tensorfile import read_tensor, write_tensor

__version__ = "0.1.0"

__all__ = [
    "AnchorSpec",
    "AnnotationSet",
    "ArStats",
    "AuditRow",
    "BorrowNetParams",
    "BorrowedMap",
    "Box",
    "ChainGeom",
    "ConvWeights1x1",
    "CoverageReport",
    "DeconvWeights",
    "DetectionTarget",
    "EnhancedPyramid",
    "FeatureMap",
    "FeaturePyramid",
    "FfbParams",
    "FmbParams",
    "FormatError",
    "FrbParams",
    "GeometryError",
    "GradCheckReport",
    "LayerBlockParams",
    "LayerGeom",
    "LayerTrace",
    "MatchingMatrix",
    "Matrix",
    "ObjectBox",
    "ParamGradients",
    "RunConfig",
    "ShapeError",
    "SplitMix64",
    "VGG16_SSD_CHAIN",
    "VGG16_SSD_DETECTION",
    "ValidationError",
    "WorstCase",
    "anchor_ar_factor_terms",
    "ar_stats",
    "audit_chain",
    "backward",
    "best_centered_iou",
    "borrow",
    "central_difference",
    "centered_iou_for_ar_ratio",
    "chain_geometry",
    "compare_gradients",
    "concat_channels",
    "config_from_dict",
    "context_deconv",
    "conv1x1",
    "coverage_report",
    "default_anchor_spec",
    "default_config",
    "default_strides",
    "design_scales",
    "embed_and_stack_keys",
    "encapsulate_and_stack",
    "finite_difference",
    "forward_pyramid",
    "fuse_layer",
    "generate_anchors",
    "gradcheck",
    "init_params",
    "iou",
    "l2_normalize_rows",
    "load_annotations",
    "matching_matrix",
    "matmul",
    "max_anchor_ar",
    "nearest_rank_percentile",
    "param_tensors",
    "parse_config",
    "read_tensor",
    "replace_param_tensor",
    "reshape_map_to_matrix",
    "reshape_matrix_to_map",
    "row_softmax",
    "similarity_matrix",
    "sq_loss",
    "substream_seed",
    "synthetic_pyramid",
    "transposed_conv",
    "write_tensor",
]
