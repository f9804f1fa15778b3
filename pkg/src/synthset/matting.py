"""Background removal: external-tool hook plus a deterministic flood-fill fallback.

The external path shells out to any command that turns an RGB file into an
RGBA file (e.g. rembg).  The fallback needs no models: it grows a background
region from the image border and works well on the homogeneous-background
photos the selection stage keeps anyway.
"""

import logging
import subprocess
import tempfile
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DataError, MattingError

log = logging.getLogger(__name__)

DEFAULT_FLOOD_TOLERANCE = 30.0
DEFAULT_MATTING_TIMEOUT = 60.0

_STRUCT_3X3 = np.ones((3, 3), dtype=bool)
_STRUCT_4CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass
class Cutout:
    """An RGBA object image: pixels plus provenance and optional quality scores."""

    pixels: np.ndarray  # (H, W, 4) uint8
    role: str = "object"  # "object" | "distractor"
    source_id: str = ""
    scores: Optional[dict] = field(default=None)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def longer_side(self) -> int:
        return max(self.width, self.height)

    @property
    def alpha(self) -> np.ndarray:
        return self.pixels[:, :, 3]


def remove_background_external(
    image: np.ndarray,
    command_template: str,
    timeout: float = DEFAULT_MATTING_TIMEOUT,
    role: str = "object",
    source_id: str = "",
) -> Cutout:
    """Run an external matting command on an RGB raster.

    The template must contain ``{in}`` and ``{out}`` placeholders and the
    command must write an alpha-carrying PNG the same size as the input.
    Failures raise MattingError so callers can record them per image.
    """
    if "{in}" not in command_template or "{out}" not in command_template:
        raise MattingError("command template must contain {in} and {out}")
    with tempfile.TemporaryDirectory(prefix="synthset-mat-") as tmp:
        in_path = Path(tmp) / "in.png"
        out_path = Path(tmp) / "out.png"
        Image.fromarray(image, mode="RGB").save(in_path)
        command = command_template.format_map({"in": str(in_path), "out": str(out_path)})
        try:
            proc = subprocess.run(
                command, shell=True, capture_output=True, timeout=timeout
            )
        except subprocess.TimeoutExpired:
            raise MattingError(f"matting command timed out after {timeout:.0f}s")
        if proc.returncode != 0:
            tail = proc.stderr.decode("utf-8", "replace").strip()[-200:]
            raise MattingError(f"matting command exited {proc.returncode}: {tail}")
        if not out_path.exists():
            raise MattingError("matting command produced no output file")
        try:
            out = Image.open(out_path)
            out.load()
        except Exception as exc:
            raise MattingError(f"malformed output: {exc}")
        if "A" not in out.getbands():
            raise MattingError("malformed output: no alpha channel")
        rgba = np.asarray(out.convert("RGBA"))
    if rgba.shape[:2] != image.shape[:2]:
        raise MattingError(
            f"malformed output: size {rgba.shape[1]}x{rgba.shape[0]} "
            f"!= input {image.shape[1]}x{image.shape[0]}"
        )
    if not (rgba[:, :, 3] > 0).any():
        raise MattingError("matting produced an empty matte")
    return Cutout(pixels=rgba.copy(), role=role, source_id=source_id)


def flood_fill_matte(
    image: np.ndarray,
    color_tolerance: float = DEFAULT_FLOOD_TOLERANCE,
    role: str = "object",
    source_id: str = "",
) -> Cutout:
    """Deterministic matte for homogeneous-background images.

    A background region is grown by BFS from every border pixel; a pixel
    joins when its RGB distance to the region's running mean is within
    ``color_tolerance``.  The alpha channel is binary (0 background,
    255 foreground), cleaned by one 3x3 opening then closing, and enclosed
    zero-alpha pockets are re-filled so all background stays 4-connected to
    the border.
    """
    h, w = image.shape[:2]
    if h < 3 or w < 3:
        raise DataError("image too small to matte (need at least 3x3)")
    # Flat python floats: the BFS touches every pixel, so scalar arithmetic
    # beats per-pixel numpy calls by a wide margin.
    flat = image.reshape(-1, 3).astype(np.float64).tolist()

    background = bytearray(h * w)
    visited = bytearray(h * w)
    mean_r = mean_g = mean_b = 0.0
    count = 0
    queue = deque()

    def join(idx):
        nonlocal count, mean_r, mean_g, mean_b
        background[idx] = 1
        visited[idx] = 1
        count += 1
        pr, pg, pb = flat[idx]
        mean_r += (pr - mean_r) / count
        mean_g += (pg - mean_g) / count
        mean_b += (pb - mean_b) / count
        queue.append(idx)

    # Border pixels seed the region unconditionally, in raster order.
    for c in range(w):
        join(c)
    for r in range(1, h - 1):
        join(r * w)
        join(r * w + w - 1)
    for c in range(w):
        join((h - 1) * w + c)

    tol2 = float(color_tolerance) ** 2
    while queue:
        idx = queue.popleft()
        r, c = divmod(idx, w)
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < h and 0 <= nc < w:
                nidx = nr * w + nc
                if not visited[nidx]:
                    pr, pg, pb = flat[nidx]
                    dr, dg, db = pr - mean_r, pg - mean_g, pb - mean_b
                    if dr * dr + dg * dg + db * db <= tol2:
                        join(nidx)
                    else:
                        # Rejected once, never reconsidered: keeps traversal
                        # order (and thus the matte) deterministic.
                        visited[nidx] = 1

    foreground = ~np.frombuffer(bytes(background), dtype=np.uint8).reshape(h, w).astype(bool)
    foreground = ndimage.binary_opening(foreground, structure=_STRUCT_3X3)
    foreground = ndimage.binary_closing(foreground, structure=_STRUCT_3X3)

    # Zero-alpha pockets enclosed by foreground would break border
    # connectivity; absorb them into the foreground.
    labels, n = ndimage.label(~foreground, structure=_STRUCT_4CONN)
    if n:
        border_labels = np.unique(
            np.concatenate(
                [labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]]
            )
        )
        border_labels = border_labels[border_labels != 0]
        enclosed = (~foreground) & ~np.isin(labels, border_labels)
        foreground |= enclosed

    if not foreground.any():
        raise DataError("no foreground")

    rgba = np.dstack([image, np.where(foreground, 255, 0).astype(np.uint8)])
    return Cutout(pixels=rgba, role=role, source_id=source_id)
