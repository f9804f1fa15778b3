"""Scene layout sampling and occlusion-aware instance annotations.

A layout places scaled and rotated cutouts onto a background under three
constraints: every pasted item stays fully inside the background, pairwise
bounding-box IoU stays at or below a cap, and the realized longer side of
each item lands in a fraction window of the background's longer side
(clamped by a maximum upscale factor).
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import DataError
from .matting import Cutout

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LayoutConfig:
    n_objects_range: tuple = (1, 4)
    n_distractors_range: tuple = (2, 4)
    scale_fraction_range: tuple = (0.15, 0.40)
    max_upscale: float = 1.2
    max_pairwise_iou: float = 0.5
    rotation_range: tuple = (0.0, 360.0)
    placement_attempts: int = 50
    layout_attempts: int = 5
    min_visible_fraction: float = 0.05

    def __post_init__(self):
        for name in ("n_objects_range", "n_distractors_range", "scale_fraction_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise DataError(f"{name} is not well ordered: {lo} > {hi}")
        if self.max_upscale < 1.0:
            raise DataError("max_upscale must be >= 1")
        if not (0.0 <= self.max_pairwise_iou <= 1.0):
            raise DataError("max_pairwise_iou must be in [0, 1]")


@dataclass(frozen=True)
class Placement:
    source_id: str
    role: str
    scale: float
    rotation: float  # degrees
    x: int  # top-left in background coordinates
    y: int
    z: int  # paste order; higher pastes later
    width: int  # transformed canvas size
    height: int
    source_longer: int  # longer side of the untransformed cutout

    @property
    def bbox(self) -> tuple:
        return (self.x, self.y, self.width, self.height)


@dataclass
class Layout:
    background_ref: str
    bg_width: int
    bg_height: int
    placements: list
    sample_index: int
    seed: int

    def to_record(self) -> dict:
        return {
            "background_ref": self.background_ref,
            "bg_width": self.bg_width,
            "bg_height": self.bg_height,
            "sample_index": self.sample_index,
            "seed": self.seed,
            "placements": [
                {
                    "source_id": p.source_id,
                    "role": p.role,
                    "scale": p.scale,
                    "rotation": p.rotation,
                    "x": p.x,
                    "y": p.y,
                    "z": p.z,
                    "width": p.width,
                    "height": p.height,
                    "source_longer": p.source_longer,
                }
                for p in self.placements
            ],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Layout":
        return cls(
            background_ref=rec["background_ref"],
            bg_width=rec["bg_width"],
            bg_height=rec["bg_height"],
            sample_index=rec["sample_index"],
            seed=rec["seed"],
            placements=[Placement(**p) for p in rec["placements"]],
        )


@dataclass
class InstanceAnnotation:
    category: str
    full_mask: np.ndarray  # pre-occlusion, background coordinates
    visible_mask: np.ndarray
    bbox: tuple  # tight (x, y, w, h) of visible_mask
    area: int  # visible pixel count


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def transformed_size(width: int, height: int, scale: float, rotation: float):
    """Canvas size of a cutout after scaling then rotating with expansion."""
    sw = _round_half_up(width * scale)
    sh = _round_half_up(height * scale)
    if sw < 1 or sh < 1:
        raise DataError(f"transformed dimensions below 1 px (scale {scale})")
    if rotation % 360.0 == 0.0:
        return sw, sh
    theta = math.radians(rotation)
    c, s = abs(math.cos(theta)), abs(math.sin(theta))
    out_w = max(1, math.ceil(sw * c + sh * s - 1e-9))
    out_h = max(1, math.ceil(sw * s + sh * c - 1e-9))
    return out_w, out_h


def transform_cutout(cutout: Cutout, scale: float, rotation: float) -> Cutout:
    """Scale and rotate a cutout onto an expanded canvas.

    RGB and alpha are resampled bilinearly; anything outside the source
    footprint gets alpha 0.  scale=1, rotation=0 is an exact copy.
    """
    if scale <= 0:
        raise DataError("scale must be positive")
    h, w = cutout.pixels.shape[:2]
    out_w, out_h = transformed_size(w, h, scale, rotation)
    if scale == 1.0 and rotation % 360.0 == 0.0:
        return replace(cutout, pixels=cutout.pixels.copy())

    sw = _round_half_up(w * scale)
    sh = _round_half_up(h * scale)
    # Effective per-axis scale so the content exactly fills the rounded size.
    sx, sy = sw / w, sh / h
    theta = math.radians(rotation)
    cos_t, sin_t = math.cos(theta), math.sin(theta)

    xs = np.arange(out_w, dtype=np.float64) + 0.5 - out_w / 2.0
    ys = np.arange(out_h, dtype=np.float64) + 0.5 - out_h / 2.0
    gx, gy = np.meshgrid(xs, ys)
    # Inverse rotation, then undo the scale, then recentre on the source.
    ux = (cos_t * gx + sin_t * gy) / sx + w / 2.0
    uy = (-sin_t * gx + cos_t * gy) / sy + h / 2.0

    # Bilinear sample with zero padding, in pixel-index space.
    fx = ux - 0.5
    fy = uy - 0.5
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    wx = fx - x0
    wy = fy - y0

    src = cutout.pixels.astype(np.float64)
    out = np.zeros((out_h, out_w, 4), dtype=np.float64)
    for dy in (0, 1):
        for dx in (0, 1):
            xi = x0 + dx
            yi = y0 + dy
            weight = (wx if dx else 1.0 - wx) * (wy if dy else 1.0 - wy)
            valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            xi_c = np.clip(xi, 0, w - 1)
            yi_c = np.clip(yi, 0, h - 1)
            sample = src[yi_c, xi_c] * np.where(valid, weight, 0.0)[..., None]
            out += sample
    pixels = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return replace(cutout, pixels=pixels)


def sample_scale(
    cutout_longer_side: int,
    bg_longer_side: int,
    config: LayoutConfig,
    rng: np.random.Generator,
) -> Optional[float]:
    """Draw a scale so the item's longer side covers a fraction of the background.

    Returns None (unusable) when even the maximum upscale cannot reach the
    lower fraction bound; the caller should pick a different cutout.
    """
    lo, hi = config.scale_fraction_range
    if cutout_longer_side < 1 or bg_longer_side < 1:
        raise DataError("side lengths must be >= 1")
    if config.max_upscale * cutout_longer_side < lo * bg_longer_side:
        return None
    r = rng.uniform(lo, hi)
    return min(r * bg_longer_side / cutout_longer_side, config.max_upscale)


def bbox_iou(a: tuple, b: tuple) -> float:
    """Intersection over union of (x, y, w, h) boxes."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        raise DataError("boxes must have positive extent")
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union


_MAX_LAYOUT_RESAMPLES = 100


def sample_layout(
    bg: np.ndarray,
    background_ref: str,
    object_pool: Sequence[Cutout],
    distractor_pool: Sequence[Cutout],
    config: LayoutConfig,
    rng: np.random.Generator,
    sample_index: int = 0,
    seed: int = 0,
):
    """Sample one constrained scene arrangement.

    Items draw a cutout, then retry (scale, rotation) rounds each with a
    budget of position attempts until the IoU and containment constraints
    hold; exhausted items are dropped and logged.  A layout with no
    surviving object of interest is rejected and resampled.

    Returns (Layout, stats) where stats lists dropped item descriptions and
    the number of whole-layout retries.
    """
    bg_h, bg_w = bg.shape[:2]
    bg_longer = max(bg_w, bg_h)
    lo_frac = config.scale_fraction_range[0]

    def usable(pool):
        return [c for c in pool if config.max_upscale * c.longer_side >= lo_frac * bg_longer]

    objects = usable(object_pool)
    distractors = usable(distractor_pool)
    if not object_pool or not objects:
        raise DataError("object pool exhausted: no usable cutouts for this background")
    if not distractor_pool or not distractors:
        raise DataError("distractor pool exhausted: no usable cutouts for this background")

    stats = {"dropped": [], "layout_retries": 0}
    for attempt in range(_MAX_LAYOUT_RESAMPLES):
        n_objects = int(rng.integers(config.n_objects_range[0], config.n_objects_range[1] + 1))
        n_distractors = int(
            rng.integers(config.n_distractors_range[0], config.n_distractors_range[1] + 1)
        )
        wanted = [("object", objects)] * n_objects + [("distractor", distractors)] * n_distractors

        placements = []
        dropped = []
        for role, pool in wanted:
            cutout = pool[int(rng.integers(len(pool)))]
            placed = False
            for _ in range(config.layout_attempts):
                scale = sample_scale(cutout.longer_side, bg_longer, config, rng)
                rotation = float(rng.uniform(*config.rotation_range))
                t_w, t_h = transformed_size(cutout.width, cutout.height, scale, rotation)
                if t_w > bg_w or t_h > bg_h:
                    continue
                for _ in range(config.placement_attempts):
                    x = int(rng.integers(0, bg_w - t_w + 1))
                    y = int(rng.integers(0, bg_h - t_h + 1))
                    box = (x, y, t_w, t_h)
                    if all(bbox_iou(box, p.bbox) <= config.max_pairwise_iou for p in placements):
                        placements.append(
                            Placement(
                                source_id=cutout.source_id,
                                role=role,
                                scale=scale,
                                rotation=rotation,
                                x=x,
                                y=y,
                                z=len(placements),
                                width=t_w,
                                height=t_h,
                                source_longer=cutout.longer_side,
                            )
                        )
                        placed = True
                        break
                if placed:
                    break
            if not placed:
                dropped.append(f"{role}:{cutout.source_id}")

        if any(p.role == "object" for p in placements):
            stats["dropped"] = dropped
            if dropped:
                log.info(
                    "sample %d: dropped %d unplaceable item(s): %s",
                    sample_index,
                    len(dropped),
                    ", ".join(dropped),
                )
            layout = Layout(
                background_ref=background_ref,
                bg_width=bg_w,
                bg_height=bg_h,
                placements=placements,
                sample_index=sample_index,
                seed=seed,
            )
            return layout, stats
        stats["layout_retries"] += 1

    raise DataError(
        f"could not place any object of interest after {_MAX_LAYOUT_RESAMPLES} layout attempts"
    )


def place_mask(mask: np.ndarray, x: int, y: int, bg_w: int, bg_h: int) -> np.ndarray:
    """Embed a cutout-local binary mask into background coordinates."""
    out = np.zeros((bg_h, bg_w), dtype=bool)
    h, w = mask.shape
    out[y : y + h, x : x + w] = mask
    return out


def visible_masks(full_masks: Sequence[np.ndarray]) -> list:
    """Visible portion of each mask after later pastes paint over earlier ones."""
    visible = []
    for i, mask in enumerate(full_masks):
        occluders = full_masks[i + 1 :]
        vis = mask.copy()
        for occ in occluders:
            vis &= ~occ
        visible.append(vis)
    return visible


def derive_annotations(
    layout: Layout,
    transformed_masks: Sequence[np.ndarray],
    category: str = "object",
    min_visible_fraction: float = 0.05,
) -> list:
    """Occlusion-aware annotations for the objects of interest.

    ``transformed_masks`` are the placements' binary masks already embedded
    in background coordinates, in z order.  Instances whose visible area
    falls below ``min_visible_fraction`` of their full area are dropped and
    logged; distractors are never annotated.
    """
    from .geometry import mask_tight_bbox

    vis = visible_masks(list(transformed_masks))
    annotations = []
    for placement, full, visible in zip(layout.placements, transformed_masks, vis):
        if placement.role != "object":
            continue
        full_area = int(full.sum())
        visible_area = int(visible.sum())
        if full_area == 0 or visible_area < min_visible_fraction * full_area:
            log.info(
                "sample %d: dropping annotation for %s (visible %d / full %d)",
                layout.sample_index,
                placement.source_id,
                visible_area,
                full_area,
            )
            continue
        annotations.append(
            InstanceAnnotation(
                category=category,
                full_mask=full,
                visible_mask=visible,
                bbox=mask_tight_bbox(visible),
                area=visible_area,
            )
        )
    return annotations


def check_layout(layout: Layout, config: LayoutConfig) -> list:
    """Independent re-check of the layout invariants; returns violation strings.

    Used by tests and by the ``validate`` subcommand: pairwise IoU cap,
    containment, and the realized-size window (or an exact clamp at the
    maximum upscale).
    """
    problems = []
    lo, hi = config.scale_fraction_range
    bg_longer = max(layout.bg_width, layout.bg_height)
    for p in layout.placements:
        if p.x < 0 or p.y < 0 or p.x + p.width > layout.bg_width or p.y + p.height > layout.bg_height:
            problems.append(f"placement z={p.z} not fully inside background")
        realized = p.scale * p.source_longer / bg_longer
        in_window = lo - 1e-9 <= realized <= hi + 1e-9
        clamped = p.scale == config.max_upscale
        if not (in_window or clamped):
            problems.append(
                f"placement z={p.z} realized fraction {realized:.4f} outside "
                f"[{lo}, {hi}] and not clamped"
            )
    for i, a in enumerate(layout.placements):
        for b in layout.placements[i + 1 :]:
            iou = bbox_iou(a.bbox, b.bbox)
            if iou > config.max_pairwise_iou + 1e-9:
                problems.append(f"placements z={a.z},{b.z} IoU {iou:.3f} over cap")
    return problems
