"""Discrete Poisson system for seamless cloning, with a Gauss-Seidel solver.

For every interior pixel p the equation is

    4 f_p - sum_{q in N(p), q in Omega} f_q
        = sum_{q in N(p), q on boundary} f*_q + sum_q v_pq

where v is the source-gradient guidance and f* the fixed target values.
Values are normalized to [0, 1] per channel.  The solver sweeps the domain
in fixed raster order, so results are bit-reproducible; convergence is a
max-norm residual test after each sweep.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-4
DEFAULT_MAX_ITERS = 10_000

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]


@dataclass
class PoissonSystem:
    """One channel-stacked system on a window of the target image.

    ``values`` holds the Dirichlet data everywhere outside ``omega`` and the
    initial guess inside it; ``rhs`` is the guidance divergence.  ``origin``
    locates the window inside the target image.
    """

    omega: np.ndarray  # (H, W) bool, interior pixels
    rhs: np.ndarray  # (H, W, C) float64
    values: np.ndarray  # (H, W, C) float64, boundary + initial guess
    origin: tuple = (0, 0)  # (x, y) of the window in target coordinates

    def __post_init__(self):
        if self.omega[0, :].any() or self.omega[-1, :].any():
            raise DataError("omega touches the window edge (no room for boundary)")
        if self.omega[:, 0].any() or self.omega[:, -1].any():
            raise DataError("omega touches the window edge (no room for boundary)")

    @property
    def boundary(self) -> np.ndarray:
        """Pixels adjacent (4-connected) to omega but outside it."""
        o = self.omega
        grown = np.zeros_like(o)
        grown[1:, :] |= o[:-1, :]
        grown[:-1, :] |= o[1:, :]
        grown[:, 1:] |= o[:, :-1]
        grown[:, :-1] |= o[:, 1:]
        return grown & ~o


@njit(cache=True)
def _gauss_seidel(values, omega, rhs, tolerance, max_iters):  # pragma: no cover - jit
    h, w = omega.shape
    iters = 0
    residual = 0.0
    for _ in range(max_iters):
        iters += 1
        for y in range(1, h - 1):
            for x in range(1, w - 1):
                if omega[y, x]:
                    s = values[y - 1, x] + values[y + 1, x] + values[y, x - 1] + values[y, x + 1]
                    values[y, x] = (s + rhs[y, x]) * 0.25
        residual = 0.0
        for y in range(1, h - 1):
            for x in range(1, w - 1):
                if omega[y, x]:
                    s = values[y - 1, x] + values[y + 1, x] + values[y, x - 1] + values[y, x + 1]
                    r = abs(4.0 * values[y, x] - s - rhs[y, x])
                    if r > residual:
                        residual = r
        if residual <= tolerance:
            return iters, residual, True
    return iters, residual, False


def poisson_solve(
    system: PoissonSystem,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iters: int = DEFAULT_MAX_ITERS,
):
    """Gauss-Seidel solve of all channels; never raises on non-convergence.

    Returns (values, stats): the solved window and per-call stats
    {iterations, residual, converged}.  The solution is returned unclamped
    so it satisfies the discrete equation to the reported residual; range
    reduction to [0, 1] happens when pixels are written.  On
    non-convergence the best iterate is kept and a warning logged.
    """
    if tolerance <= 0:
        raise DataError("tolerance must be positive")
    values = np.ascontiguousarray(system.values, dtype=np.float64).copy()
    omega = np.ascontiguousarray(system.omega, dtype=np.bool_)
    rhs = np.ascontiguousarray(system.rhs, dtype=np.float64)

    total_iters = 0
    worst = 0.0
    converged = True
    for ch in range(values.shape[2]):
        chan = np.ascontiguousarray(values[:, :, ch])
        iters, residual, ok = _gauss_seidel(
            chan, omega, np.ascontiguousarray(rhs[:, :, ch]), tolerance, max_iters
        )
        values[:, :, ch] = chan
        total_iters += iters
        worst = max(worst, residual)
        converged &= ok
    if not converged:
        log.warning(
            "poisson solve did not converge (residual %.3g > %.3g after %d sweeps); "
            "using best iterate",
            worst,
            tolerance,
            max_iters,
        )
    stats = {"iterations": total_iters, "residual": float(worst), "converged": bool(converged)}
    return values, stats


def residual_max_norm(system: PoissonSystem, values: np.ndarray) -> float:
    """Independent (vectorized) residual check of a candidate solution."""
    f = values
    s = (
        np.roll(f, 1, axis=0)
        + np.roll(f, -1, axis=0)
        + np.roll(f, 1, axis=1)
        + np.roll(f, -1, axis=1)
    )
    res = np.abs(4.0 * f - s - system.rhs)
    if not system.omega.any():
        return 0.0
    return float(res[system.omega].max())


def laplacian_rhs(source: np.ndarray) -> np.ndarray:
    """Guidance divergence from source gradients, edge-replicated.

    For each pixel, sum over the 4 neighbors of (source_p - source_q);
    off-canvas neighbors contribute zero (replicated edge).
    """
    padded = np.pad(source, ((1, 1), (1, 1), (0, 0)), mode="edge")
    center = padded[1:-1, 1:-1]
    return (
        4.0 * center
        - padded[:-2, 1:-1]
        - padded[2:, 1:-1]
        - padded[1:-1, :-2]
        - padded[1:-1, 2:]
    )
