"""Exact polygon geometry on binary rasters.

Boundaries are traced along pixel edges, so every vertex sits on the integer
corner lattice and the shoelace area of a traced polygon equals the number of
enclosed cells exactly.  Coordinates are (x, y) with x = column and y = row;
a polygon is "counterclockwise" here when its signed shoelace area is
positive.
"""

import numpy as np

from .errors import DataError

# Directions on the corner lattice: right, down, left, up (y grows downward).
_RIGHT = (1, 0)
_DOWN = (0, 1)
_LEFT = (-1, 0)
_UP = (0, -1)


def _turn_left(d):
    return (d[1], -d[0])


def _turn_right(d):
    return (-d[1], d[0])


# Pixels flanking the edge leaving corner (x, y) in direction d, as
# (col, row) offsets relative to the corner: (ahead_left, ahead_right).
_FLANKS = {
    _RIGHT: ((0, -1), (0, 0)),
    _LEFT: ((-1, 0), (-1, -1)),
    _UP: ((-1, -1), (0, -1)),
    _DOWN: ((0, 0), (-1, 0)),
}


def signed_area(points) -> float:
    """Signed shoelace area; positive for counterclockwise polygons."""
    if len(points) < 3:
        return 0.0
    total = 0.0
    for (x1, y1), (x2, y2) in zip(points, points[1:] + points[:1]):
        total += x1 * y2 - x2 * y1
    return total / 2.0


def polygon_area(points) -> float:
    """Absolute shoelace area."""
    return abs(signed_area(points))


def _fg(mask, col, row):
    h, w = mask.shape
    if 0 <= row < h and 0 <= col < w:
        return bool(mask[row, col])
    return False


def _trace_loop(mask, start, visited_right_edges):
    """Walk one closed boundary loop, foreground kept on the right-hand side.

    At a saddle corner (two diagonal foreground pixels) the walk turns left,
    which keeps 8-connected foreground in a single loop.  Returns the vertex
    list (corners where the walk turns).
    """
    poly = []
    corner = start
    direction = _RIGHT
    while True:
        if direction == _RIGHT:
            visited_right_edges.add(corner)
        corner = (corner[0] + direction[0], corner[1] + direction[1])
        (lc, lr), (rc, rr) = _FLANKS[direction]
        ahead_left = _fg(mask, corner[0] + lc, corner[1] + lr)
        ahead_right = _fg(mask, corner[0] + rc, corner[1] + rr)
        if ahead_right and not ahead_left:
            next_direction = direction
        elif not ahead_left and not ahead_right:
            next_direction = _turn_right(direction)
        else:
            # Both ahead, or the diagonal saddle case: turn left.
            next_direction = _turn_left(direction)
        if next_direction != direction:
            poly.append(corner)
        direction = next_direction
        if corner == start and direction == _RIGHT:
            return poly


def trace_boundaries(mask: np.ndarray):
    """Trace all boundary loops of a binary raster.

    Returns (outer, holes): outer loops have positive signed area (one per
    8-connected foreground component), hole loops negative.
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    outer, holes = [], []
    visited = set()
    for row in range(h):
        for col in range(w):
            if not mask[row, col] or _fg(mask, col, row - 1):
                continue
            start = (col, row)
            if start in visited:
                continue
            poly = _trace_loop(mask, start, visited)
            if signed_area(poly) > 0:
                outer.append(poly)
            else:
                holes.append(poly)
    return outer, holes


def _topmost_leftmost(poly):
    return min((y, x) for x, y in poly)


def largest_contour(mask: np.ndarray):
    """Outer boundary polygon with the largest shoelace area.

    Ties go to the polygon whose topmost-leftmost vertex has the smaller
    (row, col).  Raises DataError on an empty mask.
    """
    outer, _ = trace_boundaries(mask)
    if not outer:
        raise DataError("empty mask: no foreground contour")
    return max(outer, key=lambda p: (signed_area(p), [-c for c in _topmost_leftmost(p)]))


def convex_hull(points):
    """Monotone-chain convex hull, counterclockwise, collinear vertices dropped.

    Raises DataError when all points are collinear.
    """
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) < 3:
        raise DataError("degenerate contour")

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DataError("degenerate contour")
    return hull


def rasterize_polygons(polygons, height: int, width: int) -> np.ndarray:
    """Even-odd scanline fill of one or more polygons onto an H x W grid.

    A pixel is inside when its center (col + 0.5, row + 0.5) sits inside an
    odd number of loops, so passing every traced loop of a mask (outer and
    holes together) reproduces that mask exactly, nesting included.
    """
    out = np.zeros((height, width), dtype=bool)
    edges = []
    for poly in polygons:
        for (x1, y1), (x2, y2) in zip(poly, poly[1:] + poly[:1]):
            if y1 != y2:
                edges.append((x1, y1, x2, y2))
    if not edges:
        return out
    for row in range(height):
        yc = row + 0.5
        xs = []
        for x1, y1, x2, y2 in edges:
            if (y1 <= yc < y2) or (y2 <= yc < y1):
                t = (yc - y1) / (y2 - y1)
                xs.append(x1 + t * (x2 - x1))
        xs.sort()
        for a, b in zip(xs[0::2], xs[1::2]):
            # Centers in the half-open span [a, b): cols with a <= c + 0.5 < b.
            lo = max(int(np.ceil(a - 0.5)), 0)
            hi = min(int(np.ceil(b - 0.5)) - 1, width - 1)
            if hi >= lo:
                out[row, lo : hi + 1] = True
    return out


def rasterize_polygons_union(polygons, height: int, width: int) -> np.ndarray:
    """Union of the individual polygon fills (COCO segmentation semantics)."""
    out = np.zeros((height, width), dtype=bool)
    for poly in polygons:
        out |= rasterize_polygons([poly], height, width)
    return out


def mask_tight_bbox(mask: np.ndarray):
    """Tight (x, y, w, h) box of the true pixels; raises DataError if empty."""
    rows = np.any(mask, axis=1)
    cols = np.any(mask, axis=0)
    if not rows.any():
        raise DataError("empty mask: no bounding box")
    r0, r1 = np.flatnonzero(rows)[[0, -1]]
    c0, c1 = np.flatnonzero(cols)[[0, -1]]
    return int(c0), int(r0), int(c1 - c0 + 1), int(r1 - r0 + 1)
