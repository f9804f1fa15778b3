"""Independent brute-force reference implementations.

These deliberately avoid the library's code paths: plain per-pixel loops,
gift-wrapping hull, dense linear solves.  Tests compare the fast library
implementations against these.
"""

import numpy as np
from scipy import ndimage


def border_variance_naive(image, margin_fraction):
    """Per-pixel loop version of the frame variance statistic."""
    h, w = image.shape[:2]
    my = max(1, int(np.floor(margin_fraction * h + 0.5)))
    mx = max(1, int(np.floor(margin_fraction * w + 0.5)))
    values = [[], [], []]
    for r in range(h):
        for c in range(w):
            inner = my <= r < h - my and mx <= c < w - mx
            if not inner or (h - 2 * my <= 0 or w - 2 * mx <= 0):
                for ch in range(3):
                    values[ch].append(float(image[r, c, ch]))
    variances = []
    for ch in range(3):
        data = values[ch]
        mean = sum(data) / len(data)
        variances.append(sum((v - mean) ** 2 for v in data) / len(data))
    return sum(variances) / 3.0


def transparency_naive(alpha, cutoff):
    nonzero = soft = 0
    for value in alpha.flatten().tolist():
        if value > 0:
            nonzero += 1
            if value < cutoff:
                soft += 1
    if nonzero == 0:
        raise ValueError("empty matte")
    return soft / nonzero


def shoelace_naive(points):
    total = 0.0
    n = len(points)
    for i in range(n):
        x1, y1 = points[i]
        x2, y2 = points[(i + 1) % n]
        total += x1 * y2 - x2 * y1
    return abs(total) / 2.0


def gift_wrap_hull(points):
    """Jarvis march; returns hull vertices, collinear points skipped."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) < 3:
        raise ValueError("degenerate")

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    start = min(pts)
    hull = [start]
    current = start
    while True:
        candidate = pts[0] if pts[0] != current else pts[-1]
        for p in pts:
            if p == current:
                continue
            turn = cross(current, candidate, p)
            if candidate == current or turn > 0 or (
                turn == 0
                and (p[0] - current[0]) ** 2 + (p[1] - current[1]) ** 2
                > (candidate[0] - current[0]) ** 2 + (candidate[1] - current[1]) ** 2
            ):
                candidate = p
        if candidate == start:
            break
        hull.append(candidate)
        current = candidate
        if len(hull) > len(pts) + 1:
            raise RuntimeError("gift wrap failed to close")
    if len(hull) < 3:
        raise ValueError("degenerate")
    return hull


def filled_components(mask):
    """(filled_mask, area) per 8-connected component, holes filled."""
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    out = []
    for i in range(1, n + 1):
        comp = labels == i
        filled = ndimage.binary_fill_holes(comp)
        out.append((filled, int(filled.sum())))
    return out


def alpha_over_naive(bg, rgb, alpha, x, y):
    """Scalar-loop alpha compositing for small fixtures."""
    out = bg.astype(np.float64).copy()
    h, w = alpha.shape
    for r in range(h):
        for c in range(w):
            rr, cc = y + r, x + c
            if 0 <= rr < out.shape[0] and 0 <= cc < out.shape[1]:
                a = alpha[r, c] / 255.0
                for ch in range(3):
                    out[rr, cc, ch] = a * rgb[r, c, ch] + (1 - a) * out[rr, cc, ch]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def convolve_naive_1d(signal, kernel):
    """Direct 1-D convolution with zero padding, same length as input."""
    radius = (len(kernel) - 1) // 2
    out = np.zeros_like(signal, dtype=np.float64)
    for i in range(len(signal)):
        acc = 0.0
        for j, k in enumerate(kernel):
            src = i + j - radius
            if 0 <= src < len(signal):
                acc += k * signal[src]
        out[i] = acc
    return out


def dense_poisson_solve(omega, rhs, boundary_values):
    """Assemble the discrete system densely and solve with Gaussian elimination.

    ``omega`` is the interior mask, ``rhs`` the guidance divergence, and
    ``boundary_values`` a full window holding the Dirichlet data outside
    omega.  Returns the solved window.
    """
    h, w = omega.shape
    index = -np.ones((h, w), dtype=int)
    coords = np.argwhere(omega)
    for k, (r, c) in enumerate(coords):
        index[r, c] = k
    n = len(coords)
    A = np.zeros((n, n))
    b = np.zeros(n)
    for k, (r, c) in enumerate(coords):
        A[k, k] = 4.0
        b[k] = rhs[r, c]
        for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if omega[rr, cc]:
                A[k, index[rr, cc]] = -1.0
            else:
                b[k] += boundary_values[rr, cc]
    x = np.linalg.solve(A, b)
    out = boundary_values.astype(np.float64).copy()
    for k, (r, c) in enumerate(coords):
        out[r, c] = x[k]
    return out
