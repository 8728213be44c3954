"""
Latent geometry - Distances between direction branches of a track-like latent embedding
"""
from dataclasses import dataclass

import numpy as np

from utils.errors import ArgumentError, ShapeError


@dataclass
class BranchDistances:
    """Normalised distances between per-bin mean latents of two directions"""
    bin_centers: np.ndarray
    distances: np.ndarray  # B x B, rows = first direction, columns = second

    def to_dict(self) -> dict:
        return {'bin_centers': self.bin_centers.tolist(), 'distances': self.distances.tolist()}


def branch_distance_matrix(latents: np.ndarray, position: np.ndarray, direction: np.ndarray,
                           bin_width: float = 16.0) -> BranchDistances:
    """Bin positions, average latents per (direction, bin), compare the two branches"""
    latents = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    position = np.asarray(position, dtype=np.float64).reshape(-1)
    direction = np.asarray(direction).reshape(-1)
    if not latents.shape[0] == position.size == direction.size:
        raise ShapeError("latents, positions and directions must have the same row count")
    if bin_width <= 0:
        raise ArgumentError(f"bin width must be positive, got {bin_width}")
    values = np.unique(direction)
    if values.size != 2:
        raise ArgumentError(f"expected exactly two directions, got {values.size}")

    bins = np.floor((position - position.min()) / bin_width).astype(np.int64)
    shared = np.intersect1d(np.unique(bins[direction == values[0]]), np.unique(bins[direction == values[1]]))
    if shared.size == 0:
        raise ArgumentError("the two directions share no position bin")
    means = [
        np.array([latents[(direction == d) & (bins == b)].mean(axis=0) for b in shared])
        for d in values
    ]
    dist = np.linalg.norm(means[0][:, None, :] - means[1][None, :, :], axis=-1)
    top = dist.max()
    if top > 0:
        dist = dist / top
    centers = position.min() + (shared + 0.5) * bin_width
    return BranchDistances(bin_centers=centers, distances=dist)
