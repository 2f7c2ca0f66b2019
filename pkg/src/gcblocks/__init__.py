"""Global-context block family with built-in verification instruments."""

from .backward import block_backward, gradcheck_block
from .blocks import (
    BlockOutput,
    BlockParams,
    BlockSpec,
    block_forward,
    framework_forward,
    gc_forward,
    init_params,
    nl_forward,
    random_params,
    se_forward,
    snl_factored_forward,
    snl_forward,
)
from .costs import (
    BackboneDesc,
    CostReport,
    InsertionPlan,
    count_backbone,
    count_block,
    emit_cost_table,
    parse_cost_config,
)
from .estimators import (
    ContextFrameworkBlock,
    GlobalContextBlock,
    NonLocalBlock,
    SimplifiedNonLocalBlock,
    SqueezeExcitationBlock,
    as_feature_map,
)
from .kernels import (
    finite_diff_gradient,
    fuse_add,
    fuse_scale,
    global_attention_pool,
    global_avg_pool,
    layer_norm,
    linear_map,
    max_relative_error,
    softmax_positions,
)
from .reports import RunReport
from .stats import DistanceReport, analyze_block, avg_pairwise_distance, cosine_distance, jsd
from .tensor_io import read_tensor, write_tensor
from .types import (
    DimensionError,
    FeatureMap,
    FormatError,
    GCBlocksError,
    InvariantError,
    LayerNormParams,
    LinearWeight,
    NumericError,
    SpecError,
    UndefinedCosineError,
)

__version__ = "0.1.0"

__all__ = [
    "BackboneDesc",
    "BlockOutput",
    "BlockParams",
    "BlockSpec",
    "ContextFrameworkBlock",
    "CostReport",
    "DimensionError",
    "DistanceReport",
    "FeatureMap",
    "FormatError",
    "GCBlocksError",
    "GlobalContextBlock",
    "InsertionPlan",
    "InvariantError",
    "LayerNormParams",
    "LinearWeight",
    "NonLocalBlock",
    "NumericError",
    "RunReport",
    "SimplifiedNonLocalBlock",
    "SpecError",
    "SqueezeExcitationBlock",
    "UndefinedCosineError",
    "analyze_block",
    "as_feature_map",
    "avg_pairwise_distance",
    "block_backward",
    "block_forward",
    "cosine_distance",
    "count_backbone",
    "count_block",
    "emit_cost_table",
    "finite_diff_gradient",
    "framework_forward",
    "fuse_add",
    "fuse_scale",
    "gc_forward",
    "global_attention_pool",
    "global_avg_pool",
    "gradcheck_block",
    "init_params",
    "jsd",
    "layer_norm",
    "linear_map",
    "max_relative_error",
    "nl_forward",
    "parse_cost_config",
    "random_params",
    "read_tensor",
    "se_forward",
    "snl_factored_forward",
    "snl_forward",
    "softmax_positions",
    "write_tensor",
]
