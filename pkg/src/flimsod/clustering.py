"""Deterministic k-means over patch vectors.

Shared engine for both filter-estimation strategies.  Given identical points,
cluster count, and seed the result is bit-identical: k-means++ initialization
drawn from a seeded generator, Lloyd updates with ties broken toward the
lowest center index, empty clusters re-seeded to the farthest point.
"""

from dataclasses import dataclass, field

import numpy as np

MAX_ITER = 100
MOVEMENT_TOL = 1e-4


@dataclass
class ClusterResult:
    centers: np.ndarray       # (c, dim)
    assignments: np.ndarray   # (n,) index of the nearest center, ties -> lowest
    inertia: float            # total squared distance
    inertia_history: list = field(default_factory=list)


def _sq_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # broadcasting keeps summation order fixed regardless of BLAS threading
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ncd,ncd->nc", diff, diff)


def _plus_plus_init(points: np.ndarray, c: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((c, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = points[first]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for i in range(1, c):
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with chosen centers; c was already
            # capped at the distinct-point count, so this cannot starve
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[i] = points[idx]
        d2 = np.minimum(d2, ((points - centers[i]) ** 2).sum(axis=1))
    return centers


def kmeans(points, c: int, seed: int = 42) -> ClusterResult:
    """Lloyd k-means with k-means++ seeding, deterministic for a fixed seed.

    ``c`` is silently reduced to the number of distinct points when larger.
    Iterates until max center movement < 1e-4 or 100 rounds, then re-derives
    centers as exact cluster means so the returned result is self-consistent.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        points = points.reshape(len(points), -1)
    n = points.shape[0]
    if n == 0:
        raise ValueError("kmeans requires at least one point")
    if c < 1:
        raise ValueError(f"cluster count must be >= 1, got {c}")
    n_distinct = np.unique(points, axis=0).shape[0]
    c = min(c, n_distinct)

    rng = np.random.default_rng(seed)
    centers = _plus_plus_init(points, c, rng)
    history = []
    assignments = np.zeros(n, dtype=np.int64)
    for _ in range(MAX_ITER):
        d2 = _sq_distances(points, centers)
        assignments = np.argmin(d2, axis=1)  # argmin takes the lowest on ties
        history.append(float(d2[np.arange(n), assignments].sum()))
        counts = np.bincount(assignments, minlength=c)
        if np.any(counts == 0):
            dist_to_own = d2[np.arange(n), assignments]
            for ci in np.flatnonzero(counts == 0):
                far = int(np.argmax(dist_to_own))
                centers[ci] = points[far]
                dist_to_own[far] = -1.0  # keep later empties from reusing it
            continue
        sums = np.zeros_like(centers)
        np.add.at(sums, assignments, points)
        new_centers = sums / counts[:, None]
        movement = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if movement < MOVEMENT_TOL:
            break

    # settle: make assignments nearest w.r.t. returned centers and centers the
    # exact means of their clusters (usually a no-op after convergence)
    for _ in range(5):
        d2 = _sq_distances(points, centers)
        new_assign = np.argmin(d2, axis=1)
        counts = np.bincount(new_assign, minlength=c)
        if np.any(counts == 0):
            break  # keep the previous consistent state
        sums = np.zeros_like(centers)
        np.add.at(sums, new_assign, points)
        new_centers = sums / counts[:, None]
        stable = np.array_equal(new_assign, assignments) and np.allclose(
            new_centers, centers, atol=0, rtol=0
        )
        assignments, centers = new_assign, new_centers
        if stable:
            break

    d2 = _sq_distances(points, centers)
    inertia = float(d2[np.arange(n), assignments].sum())
    history.append(inertia)
    return ClusterResult(
        centers=centers,
        assignments=assignments,
        inertia=inertia,
        inertia_history=history,
    )


def nearest_member(points, center) -> int:
    """Index of the point closest to ``center`` (Euclidean, ties -> lowest)."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        points = points.reshape(len(points), -1)
    if points.shape[0] == 0:
        raise ValueError("nearest_member requires at least one point")
    d2 = ((points - np.asarray(center, dtype=np.float64)) ** 2).sum(axis=1)
    return int(np.argmin(d2))
