"""Synthetic multi-view testbeds built from Gaussian mixtures."""

from __future__ import annotations

import numpy as np

from .data import MultiViewDataset, synthesize_sensitive, synthesize_views
from .errors import BoundsError


def gaussian_mixture(n: int, k: int, dim: int, separation: float, spread: float, rng: np.random.Generator):
    """Balanced mixture with centers ``separation * e_j`` (dim >= k) and isotropic noise."""
    if dim < k:
        raise BoundsError(f"dim ({dim}) must be at least k ({k})")
    labels = np.arange(n) % k
    rng.shuffle(labels)
    centers = np.zeros((k, dim))
    centers[np.arange(k), np.arange(k)] = separation
    x = centers[labels] + rng.normal(scale=spread, size=(n, dim))
    return x, labels


def make_blobs(
    n: int = 1000,
    k: int = 4,
    dim: int = 8,
    separation: float = 6.0,
    spread: float = 1.0,
    transforms=("sigmoid", "relu"),
    p: float = 0.5,
    seed: int = 0,
) -> MultiViewDataset:
    """Separable clusters seen through one nonlinear view per transform; Bernoulli(p) groups."""
    rng = np.random.default_rng(seed)
    x, labels = gaussian_mixture(n, k, dim, separation, spread, rng)
    sensitive = synthesize_sensitive(n, p, seed + 1)
    return MultiViewDataset(synthesize_views(x, transforms), sensitive, labels, name="blobs")


def make_biased(
    n: int = 2000,
    rho: float = 0.9,
    k: int = 2,
    dim: int = 8,
    separation: float = 4.0,
    spread: float = 1.0,
    transforms=("sigmoid", "relu"),
    sensitive_feature: bool = True,
    seed: int = 0,
) -> MultiViewDataset:
    """Mixture whose binary sensitive bit equals ``label % 2`` with probability `rho`.

    With `sensitive_feature` the bit is also appended to the base table as a
    feature, so both views carry it directly. ``rho = 0.5`` makes group and cluster independent,
    ``rho = 1`` makes every cluster single-group.
    """
    if not 0.5 <= rho <= 1.0:
        raise BoundsError(f"rho must lie in [0.5, 1.0], got {rho}")
    rng = np.random.default_rng(seed)
    x, labels = gaussian_mixture(n, k, dim, separation, spread, rng)
    keep = rng.random(n) < rho
    sensitive = np.where(keep, labels % 2, 1 - labels % 2).astype(np.int64)
    table = np.column_stack([x, sensitive.astype(np.float64)]) if sensitive_feature else x
    return MultiViewDataset(synthesize_views(table, transforms), sensitive, labels, name=f"biased_rho{rho:g}")
