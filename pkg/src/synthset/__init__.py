"""synthset: cut-and-paste synthetic instance-segmentation dataset generation.

Stages: scrape candidate images, matte them into RGBA cutouts, filter with
object-agnostic quality scores (or human/detector selection), compose
constrained random scenes, render each scene under four blending methods,
and export exact COCO annotations.
"""

__version__ = "0.1.0"

from .acquisition import (
    DEFAULT_OBJECT_QUERIES,
    CandidateImage,
    Manifest,
    QueryTask,
    dedupe_and_record,
    expand_queries,
    fetch_task,
    sample_distractor_categories,
    translate_queries,
)
from .blending import (
    ALL_METHODS,
    BlendConfig,
    CompositeSample,
    build_poisson_system,
    composite_gaussian,
    composite_motion,
    composite_none,
    composite_poisson,
    render_variants,
)
from .composition import (
    InstanceAnnotation,
    Layout,
    LayoutConfig,
    Placement,
    bbox_iou,
    check_layout,
    derive_annotations,
    sample_layout,
    sample_scale,
    transform_cutout,
)
from .config import PipelineConfig, load_config
from .dataset_io import (
    BackgroundPool,
    SplitPlan,
    export_coco,
    generate_dataset,
    split_backgrounds,
    validate_tree,
)
from .errors import ConfigError, DataError, MattingError, SynthsetError
from .matting import Cutout, flood_fill_matte, remove_background_external
from .poisson import PoissonSystem, poisson_solve, residual_max_norm
from .selection import (
    DetectionSidecar,
    FilterConfig,
    SelectionInputs,
    apply_strategy,
    border_variance,
    cnn_selection_filter,
    convexity_score,
    size_filter,
    transparency_score,
)
