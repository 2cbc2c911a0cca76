"""Viewport/location user distance and average-linkage partitioning."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import TileSet


def fov_distance(a: TileSet, b: TileSet) -> float:
    """Viewport dissimilarity: 1 minus shared tiles over jointly covered tiles.

    Tiles outside both viewports drop out of the denominator, which therefore
    equals the union size.  Two empty viewports agree perfectly: distance 0.
    """
    union = a | b
    if not union:
        return 0.0
    return 1.0 - len(a & b) / len(union)


def combined_distance(fov_dist: float, d2d_m: float, d2d_min_m: float) -> float:
    """Scale viewport dissimilarity by relative seat distance."""
    if d2d_min_m <= 0:
        raise ValueError("minimum seat distance must be positive")
    return fov_dist * (d2d_m / d2d_min_m)


def build_distance_matrix(
    fovs: list[TileSet], positions: np.ndarray, d2d_min_m: float
) -> np.ndarray:
    """Symmetric zero-diagonal matrix of pairwise combined distances."""
    n = len(fovs)
    mat = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d2d = float(np.hypot(*(positions[i] - positions[j])))
            d = combined_distance(fov_distance(fovs[i], fovs[j]), d2d, d2d_min_m)
            mat[i, j] = mat[j, i] = d
    return mat


@dataclass(frozen=True)
class ClusterPartition:
    """Disjoint user groups (by local index into the distance matrix)."""

    clusters: tuple[tuple[int, ...], ...]

    def __iter__(self):
        return iter(self.clusters)

    def __len__(self) -> int:
        return len(self.clusters)


def agglomerate(distance: np.ndarray, k: int) -> ClusterPartition:
    """Merge the closest cluster pair (average linkage) until ``k`` remain.

    Inter-cluster distance is the mean over member pairs, updated
    incrementally with size weights.  Ties break on the smaller of the two
    clusters' minimum member ids, then on the other cluster's, so runs are
    reproducible under any input order.
    """
    d = np.asarray(distance, dtype=float)
    n = d.shape[0]
    if d.shape != (n, n):
        raise ValueError("distance matrix must be square")
    if not 1 <= k <= n:
        raise ValueError(f"cluster count {k} outside [1, {n}]")

    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    link = d.copy()

    while len(members) > k:
        best = None
        best_key = None
        ids = sorted(members)
        for ai in range(len(ids)):
            for bi in range(ai + 1, len(ids)):
                a, b = ids[ai], ids[bi]
                dist = link[a, b]
                lo, hi = sorted((min(members[a]), min(members[b])))
                key = (dist, lo, hi)
                if best_key is None or key < best_key:
                    best_key = key
                    best = (a, b)
        a, b = best
        na, nb = len(members[a]), len(members[b])
        for c in members:
            if c in (a, b):
                continue
            link[a, c] = link[c, a] = (na * link[a, c] + nb * link[b, c]) / (na + nb)
        members[a] = members[a] + members[b]
        del members[b]

    clusters = sorted((tuple(sorted(v)) for v in members.values()))
    return ClusterPartition(tuple(clusters))


def cluster_fov(partition_cluster: tuple[int, ...], fovs: list[TileSet]) -> TileSet:
    """Union of the member viewports: what a shared transmission must cover."""
    out = fovs[partition_cluster[0]]
    for idx in partition_cluster[1:]:
        out = out | fovs[idx]
    return out
