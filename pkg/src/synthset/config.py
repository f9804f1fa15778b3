"""Pipeline configuration: one flat JSON file of named, overridable knobs.

Each knob mirrors a default of the acquisition, matting, selection, layout,
blending or dataset stage.  Unknown keys are rejected so typos cannot
silently fall back to defaults.
"""

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

from .acquisition import DEFAULT_OBJECT_QUERIES
from .blending import ALL_METHODS, BlendConfig
from .composition import LayoutConfig
from .errors import ConfigError
from .selection import FilterConfig


@dataclass
class PipelineConfig:
    master_seed: int = 0

    # acquisition
    object_queries: list = field(default_factory=lambda: list(DEFAULT_OBJECT_QUERIES))
    distractor_queries: list = field(default_factory=list)
    result_page_template: Optional[str] = None
    result_limit: int = 500
    rate_limit_per_host: float = 1.0
    download_retries: int = 2
    retry_backoff: float = 0.5
    distractor_category_file: Optional[str] = None
    distractor_category_count: int = 100

    # matting
    matting_command: Optional[str] = None  # None: flood-fill fallback
    matting_timeout: float = 60.0
    flood_tolerance: float = 30.0

    # selection thresholds
    min_bytes: int = 80 * 1024
    border_margin_fraction: float = 0.02
    max_border_variance: float = 50.0
    opacity_cutoff_alpha: int = 243
    max_transparency_score: float = 0.1
    min_convexity: float = 0.95
    detector_score_threshold: float = 0.95

    # layout
    n_objects_range: list = field(default_factory=lambda: [1, 4])
    n_distractors_range: list = field(default_factory=lambda: [2, 4])
    scale_fraction_range: list = field(default_factory=lambda: [0.15, 0.40])
    max_upscale: float = 1.2
    max_pairwise_iou: float = 0.5
    rotation_range: list = field(default_factory=lambda: [0.0, 360.0])
    placement_attempts: int = 50
    layout_attempts: int = 5
    min_visible_fraction: float = 0.05

    # blending
    methods: list = field(default_factory=lambda: list(ALL_METHODS))
    gaussian_sigma: float = 2.0
    motion_length_range: list = field(default_factory=lambda: [3, 11])
    poisson_tolerance: float = 1e-4
    poisson_max_iters: int = 10_000

    # dataset
    backgrounds_dir: Optional[str] = None
    excluded_categories: list = field(default_factory=lambda: ["archive"])
    split_ratios: list = field(default_factory=lambda: [0.8, 0.1, 0.1])
    train_samples: int = 2000
    val_samples: int = 500
    test_samples: int = 500
    category_name: str = "parcel"
    jpeg_quality: int = 95

    def filter_config(self) -> FilterConfig:
        return FilterConfig(
            min_bytes=self.min_bytes,
            border_margin_fraction=self.border_margin_fraction,
            max_border_variance=self.max_border_variance,
            opacity_cutoff_alpha=self.opacity_cutoff_alpha,
            max_transparency_score=self.max_transparency_score,
            min_convexity=self.min_convexity,
            detector_score_threshold=self.detector_score_threshold,
        )

    def layout_config(self) -> LayoutConfig:
        return LayoutConfig(
            n_objects_range=tuple(self.n_objects_range),
            n_distractors_range=tuple(self.n_distractors_range),
            scale_fraction_range=tuple(self.scale_fraction_range),
            max_upscale=self.max_upscale,
            max_pairwise_iou=self.max_pairwise_iou,
            rotation_range=tuple(self.rotation_range),
            placement_attempts=self.placement_attempts,
            layout_attempts=self.layout_attempts,
            min_visible_fraction=self.min_visible_fraction,
        )

    def blend_config(self) -> BlendConfig:
        return BlendConfig(
            methods=tuple(self.methods),
            gaussian_sigma=self.gaussian_sigma,
            motion_length_range=tuple(self.motion_length_range),
            poisson_tolerance=self.poisson_tolerance,
            poisson_max_iters=self.poisson_max_iters,
            opacity_cutoff_alpha=self.opacity_cutoff_alpha,
        )

    def sample_counts(self) -> dict:
        return {
            "train": self.train_samples,
            "val": self.val_samples,
            "test": self.test_samples,
        }

    def resolved(self) -> dict:
        """All keys with defaults materialized, for the run report."""
        return asdict(self)


def load_config(path=None, overrides: Optional[dict] = None) -> PipelineConfig:
    """Load a flat JSON config; flags > file > defaults; unknown keys rejected."""
    known = {f.name for f in fields(PipelineConfig)}
    values: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}")
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(raw)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in known:
            raise ConfigError(f"unknown config key: {key}")
        values[key] = value
    try:
        return PipelineConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc))
