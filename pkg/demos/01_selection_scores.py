"""Walk through the object-agnostic quality scores on crafted images.

Builds four small images that each trip one selection filter, scores them,
and prints the filter chain's verdicts. Run from the repo root:

    python3 demos/01_selection_scores.py
"""

import numpy as np

from synthset.matting import Cutout, flood_fill_matte
from synthset.selection import (
    FilterConfig,
    border_variance,
    convexity_score,
    opaque_mask,
    size_filter,
    transparency_score,
)

config = FilterConfig()
rng = np.random.default_rng(7)


def white(h, w):
    return np.full((h, w, 3), 255, dtype=np.uint8)


print("== size filter ==")
for nbytes in (81920, 81919, 500_000):
    verdict = "keep" if size_filter(nbytes, config) else "reject"
    print(f"  stored size {nbytes:>7} bytes -> {verdict}")

print("\n== border variance (homogeneous vs busy frame) ==")
clean = white(200, 200)
clean[40:160, 40:160] = rng.integers(0, 120, size=(120, 120, 3), dtype=np.uint8)
busy = rng.integers(0, 256, size=(200, 200, 3), dtype=np.uint8)
for name, img in (("clean", clean), ("busy", busy)):
    variance = border_variance(img, config.border_margin_fraction)
    verdict = "keep" if variance < config.max_border_variance else "reject"
    print(f"  {name:>5}: frame variance {variance:10.2f} -> {verdict}")

print("\n== transparency score (soft matte detection) ==")
alpha = np.zeros((100, 100), dtype=np.uint8)
alpha[10:90, 10:90] = 255
crisp = Cutout(pixels=np.dstack([white(100, 100), alpha]))
soft_alpha = alpha.copy()
soft_alpha[10:30, 10:90] = 180  # a quarter of the support is translucent
soft = Cutout(pixels=np.dstack([white(100, 100), soft_alpha]))
for name, cut in (("crisp", crisp), ("soft", soft)):
    score = transparency_score(cut, config.opacity_cutoff_alpha)
    verdict = "keep" if score < config.max_transparency_score else "reject"
    print(f"  {name:>5}: transparency {score:.3f} -> {verdict}")

print("\n== convexity score (fragmented/cluttered mask detection) ==")
box = np.zeros((60, 60), dtype=bool)
box[10:50, 10:50] = True
plus = np.zeros((60, 60), dtype=bool)
plus[20:40, 5:55] = True
plus[5:55, 20:40] = True
for name, mask in (("box", box), ("plus", plus)):
    score = convexity_score(mask)
    verdict = "keep" if score >= config.min_convexity else "reject"
    print(f"  {name:>5}: convexity {score:.4f} -> {verdict}")

print("\n== flood-fill matting fallback ==")
photo = white(120, 120)
photo[30:90, 30:90] = rng.integers(0, 100, size=(60, 60, 3), dtype=np.uint8)
cutout = flood_fill_matte(photo, color_tolerance=30)
support = int((cutout.alpha > 0).sum())
print(f"  matte support {support} px (expected 3600)")
print(f"  convexity of the matte: {convexity_score(opaque_mask(cutout)):.4f}")
