"""heatmark: heatmap-based facial landmark toolkit.

Geometry and augmentation, Gaussian heatmap codecs, adaptive wing losses
with focal batch weighting, shift-robust downsampling, a deterministic
landmark-to-boundary propagation module, and NME/FR/AUC/CED evaluation.
"""

from .codec import (
    Boundary,
    BoundaryScheme,
    GaussianParams,
    decode_heatmap,
    decode_stack,
    default_boundary_scheme,
    encode_landmarks,
    load_boundary_scheme,
    rasterize_boundaries,
    read_tensor,
    write_tensor,
)
from .geometry import (
    AugmentParams,
    FlipPairTable,
    LandmarkSet,
    attribute_fractions,
    augment,
    crop_resize,
    default_flip_pairs,
    load_flip_pairs,
    parse_annotation_file,
    parse_wflw_line,
)
from .losses import (
    BatchAttributes,
    LossParams,
    awing,
    awing_branches,
    awing_grad,
    boundary_loss,
    boundary_loss_grad,
    focal_factor,
    landmark_loss,
    landmark_loss_grad,
    load_loss_params,
    sample_weight,
    total_loss,
    total_loss_grad,
)
from .metrics import (
    EvalReport,
    NormSpec,
    auc_ced,
    ced_value,
    default_norm,
    evaluate,
    failure_rate,
    nme,
)
from .propagation import (
    PropagationWeights,
    apply_attention,
    attention_hourglass,
    forward_module,
    init_propagation_weights,
    load_weights,
    multiview_block,
    propagate_to_boundaries,
    save_weights,
    zero_propagation_weights,
)
from .shiftops import (
    BlurKernel,
    add_coord_channels,
    blur_downsample,
    blur_kernel,
    max_blur_pool,
    shift_consistency,
    subsample,
)

__version__ = "0.1.0"
