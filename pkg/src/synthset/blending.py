"""Render a layout under four compositing methods with identical geometry.

Direct paste, Gaussian-feathered paste, motion-blurred paste, and Poisson
seamless cloning.  Geometry, z-order, and annotations are shared across the
variants; only the seam treatment differs.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .composition import Layout, derive_annotations, place_mask, transform_cutout
from .errors import ConfigError
from .matting import Cutout
from .poisson import (
    DEFAULT_MAX_ITERS,
    DEFAULT_TOLERANCE,
    PoissonSystem,
    laplacian_rhs,
    poisson_solve,
    residual_max_norm,
)
from .seeding import substream

log = logging.getLogger(__name__)

METHOD_NONE = "none"
METHOD_GAUSSIAN = "gaussian"
METHOD_MOTION = "motion"
METHOD_POISSON = "poisson"
ALL_METHODS = (METHOD_NONE, METHOD_GAUSSIAN, METHOD_MOTION, METHOD_POISSON)


@dataclass(frozen=True)
class BlendConfig:
    methods: tuple = ALL_METHODS
    gaussian_sigma: float = 2.0
    motion_length_range: tuple = (3, 11)  # odd lengths, inclusive
    poisson_tolerance: float = DEFAULT_TOLERANCE
    poisson_max_iters: int = DEFAULT_MAX_ITERS
    opacity_cutoff_alpha: int = 243

    def __post_init__(self):
        unknown = set(self.methods) - set(ALL_METHODS)
        if unknown:
            raise ConfigError(f"unknown blend methods: {sorted(unknown)}")
        if self.gaussian_sigma <= 0:
            raise ConfigError("gaussian_sigma must be positive")
        lo, hi = self.motion_length_range
        if lo < 3 or lo % 2 == 0 or hi % 2 == 0 or lo > hi:
            raise ConfigError("motion_length_range must be odd bounds with lo >= 3")
        if self.poisson_tolerance <= 0:
            raise ConfigError("poisson_tolerance must be positive")


@dataclass
class CompositeSample:
    """One rendered variant of a layout, plus the shared annotations."""

    split: str
    sample_index: int
    method: str
    image: np.ndarray  # (H, W, 3) uint8
    annotations: list

    @property
    def file_name(self) -> str:
        return f"{self.split}_{self.sample_index:05d}_{self.method}.jpg"


@dataclass
class RenderStats:
    poisson: list = field(default_factory=list)  # per placement: dict
    poisson_fallbacks: int = 0
    dropped_annotations: int = 0


def _alpha_over(canvas: np.ndarray, rgb: np.ndarray, alpha255: np.ndarray, x: int, y: int):
    """In-place alpha-over of a float RGB patch onto a float canvas.

    The patch may extend past the canvas (blur rings around items near the
    border); it is clipped.
    """
    h, w = alpha255.shape
    ch, cw = canvas.shape[:2]
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + w, cw), min(y + h, ch)
    if x0 >= x1 or y0 >= y1:
        return
    patch_rgb = rgb[y0 - y : y1 - y, x0 - x : x1 - x]
    patch_a = alpha255[y0 - y : y1 - y, x0 - x : x1 - x][..., None] / 255.0
    region = canvas[y0:y1, x0:x1]
    canvas[y0:y1, x0:x1] = patch_a * patch_rgb + (1.0 - patch_a) * region


def _finish(canvas: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(canvas), 0, 255).astype(np.uint8)


def composite_none(bg: np.ndarray, items: Sequence[tuple]) -> np.ndarray:
    """Plain alpha-over compositing in z order.

    ``items`` is a z-ordered sequence of (placement, transformed Cutout).
    """
    canvas = bg.astype(np.float64)
    for placement, cutout in items:
        rgba = cutout.pixels.astype(np.float64)
        _alpha_over(canvas, rgba[:, :, :3], rgba[:, :, 3], placement.x, placement.y)
    return _finish(canvas)


def _gaussian_kernel_1d(sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def composite_gaussian(bg: np.ndarray, items: Sequence[tuple], sigma: float = 2.0) -> np.ndarray:
    """Alpha-over after feathering each item's alpha with a Gaussian.

    Only the alpha channel is blurred (kernel radius ceil(3*sigma),
    normalized); the colors and the annotations are untouched.
    """
    kernel = _gaussian_kernel_1d(sigma)
    radius = (len(kernel) - 1) // 2
    canvas = bg.astype(np.float64)
    for placement, cutout in items:
        rgba = cutout.pixels.astype(np.float64)
        # The blur ring extends past the cutout canvas: pad alpha with zeros
        # and colors by edge replication so the ring has plausible colors.
        alpha = np.pad(rgba[:, :, 3], radius, mode="constant")
        rgb = np.pad(rgba[:, :, :3], ((radius, radius), (radius, radius), (0, 0)), mode="edge")
        alpha = ndimage.convolve1d(alpha, kernel, axis=0, mode="constant")
        alpha = ndimage.convolve1d(alpha, kernel, axis=1, mode="constant")
        _alpha_over(canvas, rgb, alpha, placement.x - radius, placement.y - radius)
    return _finish(canvas)


def motion_kernel(length: int, angle_degrees: float) -> np.ndarray:
    """Normalized 1-px-wide line kernel of odd length at the given angle."""
    if length < 3 or length % 2 == 0:
        raise ConfigError("motion length must be odd and >= 3")
    radius = (length - 1) // 2
    kernel = np.zeros((length, length), dtype=np.float64)
    theta = math.radians(angle_degrees)
    c, s = math.cos(theta), math.sin(theta)
    for t in range(-radius, radius + 1):
        col = int(math.floor(radius + t * c + 0.5))
        row = int(math.floor(radius + t * s + 0.5))
        kernel[row, col] = 1.0
    return kernel / kernel.sum()


def draw_motion_params(rng: np.random.Generator, length_range=(3, 11)) -> tuple:
    """Per-placement motion parameters: odd length and angle in [0, 180)."""
    lo, hi = length_range
    choices = list(range(lo, hi + 1, 2))
    length = int(choices[int(rng.integers(len(choices)))])
    angle = float(rng.uniform(0.0, 180.0))
    return length, angle


def composite_motion(
    bg: np.ndarray, items: Sequence[tuple], params: Sequence[tuple]
) -> np.ndarray:
    """Alpha-over after motion-blurring each item.

    The premultiplied RGBA is convolved with a normalized line kernel, then
    un-premultiplied; total premultiplied energy is conserved up to
    rounding.  ``params`` carries one (length, angle) pair per item.
    """
    canvas = bg.astype(np.float64)
    for (placement, cutout), (length, angle) in zip(items, params):
        kernel = motion_kernel(length, angle)
        radius = (length - 1) // 2
        rgba = cutout.pixels.astype(np.float64)
        alpha = np.pad(rgba[:, :, 3] / 255.0, radius, mode="constant")
        pre = np.pad(
            rgba[:, :, :3] * (rgba[:, :, 3:4] / 255.0),
            ((radius, radius), (radius, radius), (0, 0)),
            mode="constant",
        )
        alpha_b = ndimage.convolve(alpha, kernel, mode="constant")
        rgb_b = np.empty_like(pre)
        for ch in range(3):
            rgb_b[:, :, ch] = ndimage.convolve(pre[:, :, ch], kernel, mode="constant")
        safe = np.maximum(alpha_b, 1e-12)[..., None]
        rgb_b = np.clip(rgb_b / safe, 0.0, 255.0)
        _alpha_over(canvas, rgb_b, alpha_b * 255.0, placement.x - radius, placement.y - radius)
    return _finish(canvas)


def build_poisson_system(
    canvas: np.ndarray,
    placement,
    cutout: Cutout,
    opacity_cutoff_alpha: int = 243,
) -> Optional[PoissonSystem]:
    """Assemble the cloning system for one placement over the current canvas.

    The domain is the opaque mask, eroded where it touches the image border
    so a boundary always exists.  Returns None when the domain comes out
    empty (caller falls back to plain pasting).
    """
    bg_h, bg_w = canvas.shape[:2]
    mask = place_mask(cutout.alpha >= opacity_cutoff_alpha, placement.x, placement.y, bg_w, bg_h)
    mask[0, :] = mask[-1, :] = False
    mask[:, 0] = mask[:, -1] = False
    if not mask.any():
        return None

    ys, xs = np.nonzero(mask)
    y0, y1 = ys.min() - 1, ys.max() + 2
    x0, x1 = xs.min() - 1, xs.max() + 2

    source = np.zeros((bg_h, bg_w, 3), dtype=np.float64)
    region = cutout.pixels[:, :, :3].astype(np.float64) / 255.0
    source[
        placement.y : placement.y + cutout.height,
        placement.x : placement.x + cutout.width,
    ] = region
    rhs_full = np.zeros_like(source)
    rhs_full[
        placement.y : placement.y + cutout.height,
        placement.x : placement.x + cutout.width,
    ] = laplacian_rhs(region)

    values = canvas[y0:y1, x0:x1].astype(np.float64) / 255.0
    omega = mask[y0:y1, x0:x1]
    # Initial guess: the source values inside the domain.
    values[omega] = source[y0:y1, x0:x1][omega]
    return PoissonSystem(
        omega=omega,
        rhs=rhs_full[y0:y1, x0:x1],
        values=values,
        origin=(int(x0), int(y0)),
    )


def composite_poisson(
    bg: np.ndarray,
    items: Sequence[tuple],
    config: BlendConfig,
    stats: Optional[RenderStats] = None,
) -> np.ndarray:
    """Seamless cloning of each item, in z order, over the evolving canvas."""
    canvas = bg.astype(np.float64)
    for placement, cutout in items:
        system = build_poisson_system(canvas, placement, cutout, config.opacity_cutoff_alpha)
        if system is None:
            log.info(
                "placement z=%d: empty Poisson domain, falling back to plain paste",
                placement.z,
            )
            rgba = cutout.pixels.astype(np.float64)
            _alpha_over(canvas, rgba[:, :, :3], rgba[:, :, 3], placement.x, placement.y)
            if stats is not None:
                stats.poisson_fallbacks += 1
            continue
        solved, solve_stats = poisson_solve(
            system, config.poisson_tolerance, config.poisson_max_iters
        )
        x0, y0 = system.origin
        window = canvas[y0 : y0 + solved.shape[0], x0 : x0 + solved.shape[1]]
        window[system.omega] = np.clip(solved[system.omega], 0.0, 1.0) * 255.0
        if stats is not None:
            check = residual_max_norm(system, solved)
            stats.poisson.append(
                {
                    "z": placement.z,
                    "iterations": solve_stats["iterations"],
                    "residual": check,
                    "converged": solve_stats["converged"],
                }
            )
    return _finish(canvas)


def render_variants(
    bg: np.ndarray,
    layout: Layout,
    cutouts_by_id: dict,
    blend: BlendConfig,
    split: str,
    category: str = "object",
    min_visible_fraction: float = 0.05,
    methods: Optional[Sequence[str]] = None,
):
    """Render one image per blending method with shared annotations.

    Annotations derive from the unblended opaque masks, so every variant of
    a sample carries an identical annotation list.  Motion-blur kernels are
    drawn from a substream of the layout seed, one pair per placement.

    Returns (samples, stats).
    """
    methods = tuple(methods) if methods is not None else tuple(blend.methods)
    unknown = set(methods) - set(ALL_METHODS)
    if unknown:
        raise ConfigError(f"unknown blend methods: {sorted(unknown)}")

    items = []
    for placement in layout.placements:
        cutout = cutouts_by_id[placement.source_id]
        items.append((placement, transform_cutout(cutout, placement.scale, placement.rotation)))

    full_masks = [
        place_mask(
            c.alpha >= blend.opacity_cutoff_alpha, p.x, p.y, layout.bg_width, layout.bg_height
        )
        for p, c in items
    ]
    annotations = derive_annotations(
        layout, full_masks, category=category, min_visible_fraction=min_visible_fraction
    )

    motion_rng = substream(layout.seed, "motion")
    motion_params = [
        draw_motion_params(motion_rng, blend.motion_length_range) for _ in items
    ]

    stats = RenderStats()
    n_objects = sum(1 for p in layout.placements if p.role == "object")
    stats.dropped_annotations = n_objects - len(annotations)

    samples = []
    for method in methods:
        if method == METHOD_NONE:
            image = composite_none(bg, items)
        elif method == METHOD_GAUSSIAN:
            image = composite_gaussian(bg, items, blend.gaussian_sigma)
        elif method == METHOD_MOTION:
            image = composite_motion(bg, items, motion_params)
        else:
            image = composite_poisson(bg, items, blend, stats)
        samples.append(
            CompositeSample(
                split=split,
                sample_index=layout.sample_index,
                method=method,
                image=image,
                annotations=annotations,
            )
        )
    return samples, stats
