"""Shared numeric oracles: finite differences and brute-force grid search.

These stay independent of the code paths they check; the grid oracle only
ever calls the loss evaluation, never the solvers.
"""

import numpy as np
import pytest


def fd_gradient(f, z, h=1e-6):
    """Central-difference gradient of a scalar function."""
    z = np.asarray(z, dtype=float)
    g = np.zeros_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        g[i] = (f(z + e) - f(z - e)) / (2.0 * h)
    return g


def fd_jacobian(f, z, h=1e-6):
    """Central-difference Jacobian of a vector (or matrix) valued function."""
    z = np.asarray(z, dtype=float)
    cols = []
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        cols.append((np.asarray(f(z + e)) - np.asarray(f(z - e))) / (2.0 * h))
    return np.stack(cols, axis=-1)


def grid_refine_median(points, weights=None, resolution=1e-7, coarse=41):
    """Brute-force geometric median for d = 2: coarse scan of the bounding
    box, then repeated zooming around the best cell until the grid spacing
    falls below `resolution`. Only evaluates the loss."""
    pts = np.asarray(points, dtype=float)
    assert pts.shape[1] == 2, "grid oracle is 2-d only"
    w = np.full(len(pts), 1.0 / len(pts)) if weights is None else np.asarray(weights)
    span = np.ptp(pts, axis=0) + 1.0
    lo = pts.min(axis=0) - 0.25 * span
    hi = pts.max(axis=0) + 0.25 * span
    while True:
        xs = np.linspace(lo[0], hi[0], coarse)
        ys = np.linspace(lo[1], hi[1], coarse)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
        dists = np.linalg.norm(grid[:, None, :] - pts[None, :, :], axis=2)
        best = grid[int(np.argmin(dists @ w))]
        cell = (hi - lo) / (coarse - 1)
        if np.max(cell) <= resolution:
            return best
        lo = best - 2.0 * cell
        hi = best + 2.0 * cell


def random_spd(rng, d, spread=2.0):
    """Random SPD matrix with a moderate eigenvalue spread."""
    a = rng.standard_normal((d, d))
    q, _ = np.linalg.qr(a)
    eigs = np.exp(rng.uniform(-np.log(spread), np.log(spread), size=d))
    return (q * eigs) @ q.T


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
