"""k-means, Student-t soft assignments and the consensus KL loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, StructuralError

Q_FLOOR = 1e-12


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    n_iter: int = 0
    history: list[float] = field(default_factory=list)


@dataclass
class ClusterState:
    centroids: list[np.ndarray]
    consensus: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        k = self.consensus.shape[1]
        if k < 2:
            raise BoundsError("need at least two clusters")
        for v, c in enumerate(self.centroids):
            if c.shape[0] != k:
                raise StructuralError(f"view {v} has {c.shape[0]} centroids, consensus has {k} columns")

    @property
    def n_clusters(self) -> int:
        return self.consensus.shape[1]

    @property
    def targets(self) -> np.ndarray:
        return np.argmax(self.consensus, axis=1)


def concat_views(latents) -> np.ndarray:
    n = latents[0].shape[0]
    for v, z in enumerate(latents):
        if z.shape[0] != n:
            raise StructuralError(f"latent {v} has {z.shape[0]} rows, latent 0 has {n}")
    return np.concatenate(latents, axis=1)


def _sq_dists(z, c):
    # explicit differences: exact zeros for coincident points, unlike the |z|^2 - 2zc + |c|^2 expansion
    diff = z[:, None, :] - c[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeans_pp(z, k, rng):
    n = z.shape[0]
    centers = np.empty((k, z.shape[1]))
    centers[0] = z[rng.integers(n)]
    closest = _sq_dists(z, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers[j] = z[idx]
        closest = np.minimum(closest, _sq_dists(z, centers[j : j + 1])[:, 0])
    return centers


def _lloyd(z, centers, max_iter):
    labels = None
    history = []
    rows = np.arange(len(z))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        d = _sq_dists(z, centers)
        # argmin returns the first minimum, so ties go to the lowest cluster index
        new_labels = np.argmin(d, axis=1)
        history.append(float(d[rows, new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels
        centers = _update_centers(z, labels, centers, d)
    if not converged:
        labels = np.argmin(_sq_dists(z, centers), axis=1)
    inertia = float(_sq_dists(z, centers)[rows, labels].sum())
    return centers, labels, inertia, it, history


def _update_centers(z, labels, old, d):
    k = old.shape[0]
    counts = np.bincount(labels, minlength=k)
    onehot = np.zeros((k, len(z)))
    onehot[labels, np.arange(len(z))] = 1.0
    sums = onehot @ z
    centers = old.copy()
    nonempty = counts > 0
    centers[nonempty] = sums[nonempty] / counts[nonempty, None]
    if np.all(nonempty):
        return centers
    # reseed each empty cluster on the point farthest from its own centroid
    own = d[np.arange(len(z)), labels].copy()
    taken = np.zeros(len(z), dtype=bool)
    for j in np.flatnonzero(~nonempty):
        cand = np.where(taken, -np.inf, own)
        far = int(np.argmax(cand))
        centers[j] = z[far]
        taken[far] = True
    return centers


def kmeans(z: np.ndarray, k: int, seed=0, n_init: int = 10, max_iter: int = 300) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding; keeps the restart with the lowest inertia."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise StructuralError(f"expected a matrix, got shape {z.shape}")
    n = z.shape[0]
    if not 1 <= k <= n:
        raise BoundsError(f"k must lie in [1, {n}], got {k}")
    if not np.all(np.isfinite(z)):
        raise StructuralError("k-means input contains non-finite values")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centers, labels, inertia, it, history = _lloyd(z, _kmeans_pp(z, k, rng), max_iter)
        if best is None or inertia < best.inertia:
            best = KMeansResult(centers, labels, inertia, it, history)
    return best


def one_hot_consensus(labels: np.ndarray, k: int) -> np.ndarray:
    labels = np.asarray(labels)
    if np.any(labels < 0) or np.any(labels >= k):
        raise BoundsError(f"labels must lie in [0, {k})")
    p = np.zeros((labels.shape[0], k))
    p[np.arange(labels.shape[0]), labels] = 1.0
    return p


def _log_kernel(z, centroids, alpha):
    d = _sq_dists(z, centroids)
    return -(alpha + 1.0) / 2.0 * np.log1p(d / alpha), d


def soft_assign(z: np.ndarray, centroids: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    """Row-normalized Student-t similarities between latent points and centroids."""
    if alpha <= 0:
        raise BoundsError(f"alpha must be positive, got {alpha}")
    if z.shape[1] != centroids.shape[1]:
        raise StructuralError(f"latent width {z.shape[1]} != centroid width {centroids.shape[1]}")
    logk, _ = _log_kernel(z, centroids, alpha)
    logk -= logk.max(axis=1, keepdims=True)
    q = np.exp(logk)
    return q / q.sum(axis=1, keepdims=True)


def kl_consensus_value(p: np.ndarray, q_per_view) -> float:
    """Batch-mean KL(P || Q^v) summed over views, with 0 log 0 = 0 and Q floored."""
    total = 0.0
    mask = p > 0
    for q in q_per_view:
        if q.shape != p.shape:
            raise StructuralError(f"Q shape {q.shape} != P shape {p.shape}")
        qf = np.maximum(q, Q_FLOOR)
        total += float(np.sum(p[mask] * np.log(p[mask] / qf[mask])))
    return total / p.shape[0]


def kl_consensus_loss(p: np.ndarray, z_views, centroids, alpha: float = 1.0):
    """Consensus KL loss with gradients for every latent block and centroid matrix.

    `p` must be one-hot, so each row contributes ``-log Q^v[i, target_i]``.
    Returns ``(loss, dz_views, dcentroids)``.
    """
    targets = np.argmax(p, axis=1)
    b = p.shape[0]
    rows = np.arange(b)
    loss = 0.0
    dz_views, dmus = [], []
    log_floor = np.log(Q_FLOOR)
    for z, mu in zip(z_views, centroids):
        if z.shape[0] != b:
            raise StructuralError(f"latent has {z.shape[0]} rows, P has {b}")
        logk, d = _log_kernel(z, mu, alpha)
        m = logk.max(axis=1, keepdims=True)
        log_norm = m[:, 0] + np.log(np.exp(logk - m).sum(axis=1))
        log_qt = logk[rows, targets] - log_norm
        loss -= float(np.sum(np.maximum(log_qt, log_floor))) / b

        q = np.exp(logk - log_norm[:, None])
        # d(-log q_t)/d(log k_j) = q_j - [j == t]; rows under the floor carry no gradient
        coef = q
        coef[rows, targets] -= 1.0
        coef[log_qt < log_floor] = 0.0
        # d(log k_j)/dz = -(alpha+1) (z - mu_j) / (alpha + d_j)
        w = coef * (-(alpha + 1.0) / (alpha + d)) / b
        dz = w.sum(axis=1, keepdims=True) * z - w @ mu
        dmu = -(w.T @ z - w.sum(axis=0)[:, None] * mu)
        dz_views.append(dz)
        dmus.append(dmu)
    return loss, dz_views, dmus
