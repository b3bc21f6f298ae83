"""Numerical laboratory for the KL-alignment fairness bound.

If the consensus clustering is independent of the sensitive attribute and a
view's joint (cluster, group) table is within KL distance ``eps`` of it, the
view's mutual information with the group is bounded by roughly
``0.5 * sqrt(eps / 8) * ln(2 / eps)``. This module samples such tables and
checks the ingredients (Pinsker, independence, monotone decay) empirically.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, DomainError, SamplingError, StructuralError

REPORT_COLUMNS = ("epsilon", "trials", "max_I", "mean_I", "pinsker_pass_rate", "leading_term", "sqrt_eps_scale")


@dataclass
class JointDistribution:
    table: np.ndarray

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=np.float64)
        if self.table.ndim != 2:
            raise StructuralError(f"joint table must be 2-D, got shape {self.table.shape}")
        if np.any(self.table < 0):
            raise ContractError("joint table has negative entries")
        if abs(self.table.sum() - 1.0) > 1e-12:
            raise ContractError(f"joint table sums to {self.table.sum()!r}, not 1")

    @property
    def cluster_marginal(self) -> np.ndarray:
        return self.table.sum(axis=1)

    @property
    def group_marginal(self) -> np.ndarray:
        return self.table.sum(axis=0)


def _check_prob_vector(p, name):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ContractError(f"{name} is not a probability vector")
    return p


def product_joint(cluster_marginal, group_marginal) -> JointDistribution:
    a = _check_prob_vector(cluster_marginal, "cluster_marginal")
    b = _check_prob_vector(group_marginal, "group_marginal")
    table = np.outer(a, b)
    # renormalize rounding so the sum check holds for any valid pair of marginals
    return JointDistribution(table / table.sum())


def kl_joint(q: JointDistribution, p: JointDistribution) -> float:
    """KL(q || p) in nats; ``math.inf`` when q puts mass where p has none."""
    qt, pt = q.table, p.table
    if qt.shape != pt.shape:
        raise StructuralError(f"shape mismatch {qt.shape} vs {pt.shape}")
    support = qt > 0
    if np.any(pt[support] == 0):
        return math.inf
    return max(float(np.sum(qt[support] * np.log(qt[support] / pt[support]))), 0.0)


def total_variation(q: JointDistribution, p: JointDistribution) -> float:
    if q.table.shape != p.table.shape:
        raise StructuralError(f"shape mismatch {q.table.shape} vs {p.table.shape}")
    return float(0.5 * np.abs(q.table - p.table).sum())


def mutual_information(j: JointDistribution) -> float:
    t = j.table
    outer = np.outer(t.sum(axis=1), t.sum(axis=0))
    nz = t > 0
    return max(float(np.sum(t[nz] * np.log(t[nz] / outer[nz]))), 0.0)


def theorem_bound(epsilon: float) -> float:
    """Leading term 0.5 * sqrt(eps/8) * ln(2/eps) of the mutual-information bound."""
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    if not epsilon < 2:
        raise DomainError(f"epsilon must be below 2 for ln(2/eps) > 0, got {epsilon}")
    return 0.5 * math.sqrt(epsilon / 8.0) * math.log(2.0 / epsilon)


def remainder_scale(epsilon: float) -> float:
    """sqrt(eps/2): the Pinsker radius, i.e. the scale of the unquantified remainder."""
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    return math.sqrt(epsilon / 2.0)


def _kl_rows(q, p):
    # row-wise KL for stacks of flattened tables; p has full support
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(q > 0, q * np.log(q / p), 0.0)
    return terms.sum(axis=1)


def sample_near_independent(
    base: JointDistribution,
    epsilon: float,
    trials: int,
    seed: int = 0,
    concentration: float = 1.0,
    max_retries: int = 1_000_000,
) -> list[JointDistribution]:
    """Draw tables with ``kl_joint(sample, base) <= epsilon``.

    Each trial draws a Dirichlet direction ``d`` and a target divergence
    ``u * epsilon`` (``u`` uniform), then moves along ``base + t (d - base)``
    to the largest ``t`` in [0, 1] whose divergence stays under the target.
    Per-trial generators are spawned from `seed`, so output does not depend
    on how trials are batched.
    """
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    if np.any(base.table <= 0):
        raise ContractError("base must have full support")
    if mutual_information(base) > 1e-12:
        raise ContractError("base must be a product (independent) joint")
    shape = base.table.shape
    p = base.table.reshape(-1)
    children = np.random.SeedSequence(seed).spawn(trials)
    directions = np.empty((trials, p.size))
    targets = np.empty(trials)
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        for _ in range(max_retries):
            d = rng.dirichlet(np.full(p.size, concentration))
            if np.all(np.isfinite(d)) and abs(d.sum() - 1.0) < 1e-9:
                break
        else:
            raise SamplingError(f"trial {i}: no valid direction after {max_retries} draws")
        directions[i] = d
        targets[i] = rng.uniform() * epsilon

    # divergence along the segment is convex in t and 0 at t=0, so bisection finds the crossing
    lo = np.zeros(trials)
    hi = np.ones(trials)
    full = _kl_rows(directions, p)
    done = full <= targets
    lo[done] = 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        q = p + mid[:, None] * (directions - p)
        under = _kl_rows(q, p) <= targets
        lo = np.where(under & ~done, mid, lo)
        hi = np.where(~under & ~done, mid, hi)
    samples = []
    for i in range(trials):
        q = p + lo[i] * (directions[i] - p)
        q = np.maximum(q, 0.0)
        q /= q.sum()
        sample = JointDistribution(q.reshape(shape))
        if kl_joint(sample, base) > epsilon:
            raise SamplingError(f"trial {i}: divergence {kl_joint(sample, base)} exceeds {epsilon}")
        samples.append(sample)
    return samples


def sweep(k: int, g: int, epsilons, trials: int, seed: int = 0, cluster_marginal=None, group_marginal=None) -> list[dict]:
    """Empirical mutual information near an independent joint, one row per epsilon."""
    if k < 1 or g < 1 or k * g < 2:
        raise StructuralError(f"need a table with at least two cells, got {k}x{g}")
    if trials < 1:
        raise StructuralError("trials must be positive")
    a = np.full(k, 1.0 / k) if cluster_marginal is None else cluster_marginal
    b = np.full(g, 1.0 / g) if group_marginal is None else group_marginal
    base = product_joint(a, b)
    rows = []
    for eps in epsilons:
        lead = theorem_bound(eps)
        samples = sample_near_independent(base, eps, trials, seed)
        mi = np.array([mutual_information(s) for s in samples])
        passes = sum(total_variation(s, base) <= math.sqrt(kl_joint(s, base) / 2.0) + 1e-15 for s in samples)
        rows.append(
            {
                "epsilon": float(eps),
                "trials": trials,
                "max_I": float(mi.max()),
                "mean_I": float(mi.mean()),
                "pinsker_pass_rate": passes / trials,
                "leading_term": lead,
                "sqrt_eps_scale": remainder_scale(eps),
            }
        )
    return rows


def write_report(rows: list[dict], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for r in rows:
            writer.writerow({c: repr(r[c]) if isinstance(r[c], float) else r[c] for c in REPORT_COLUMNS})


def read_report(path) -> list[dict]:
    with open(Path(path), newline="") as fh:
        return [
            {c: int(r[c]) if c == "trials" else float(r[c]) for c in REPORT_COLUMNS}
            for r in csv.DictReader(fh)
        ]
