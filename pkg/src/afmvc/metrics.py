"""ACC, NMI and BAL evaluation of cluster assignments."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ContractError, StructuralError


@dataclass
class MetricsReport:
    acc: float
    nmi: float
    bal: float
    contingency: np.ndarray
    per_cluster_group_counts: np.ndarray

    def as_dict(self) -> dict:
        d = asdict(self)
        d["contingency"] = self.contingency.tolist()
        d["per_cluster_group_counts"] = self.per_cluster_group_counts.tolist()
        return d


def _check_pair(a, b):
    a = np.asarray(a).reshape(-1)
    b = np.asarray(b).reshape(-1)
    if a.shape != b.shape:
        raise StructuralError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.size == 0:
        raise StructuralError("empty label vectors")
    return a, b


def contingency(pred, truth) -> np.ndarray:
    """Counts table indexed by (compacted pred id, compacted truth id)."""
    pred, truth = _check_pair(pred, truth)
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(truth, return_inverse=True)
    table = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def accuracy(pred, truth) -> float:
    """Best one-to-one matching accuracy (Hungarian on the contingency table)."""
    table = contingency(pred, truth)
    size = max(table.shape)
    padded = np.zeros((size, size), dtype=np.int64)
    padded[: table.shape[0], : table.shape[1]] = table
    rows, cols = linear_sum_assignment(-padded)
    return float(padded[rows, cols].sum() / table.sum())


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth, average: str = "arithmetic") -> float:
    table = contingency(pred, truth).astype(np.float64)
    n = table.sum()
    h_pred = _entropy(table.sum(axis=1))
    h_true = _entropy(table.sum(axis=0))
    if h_pred == 0.0 and h_true == 0.0:
        return 1.0
    if h_pred == 0.0 or h_true == 0.0:
        return 0.0
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))
    nz = table > 0
    mi = float(np.sum(table[nz] / n * np.log(table[nz] * n / outer[nz])))
    if average == "arithmetic":
        norm = (h_pred + h_true) / 2.0
    elif average == "geometric":
        norm = np.sqrt(h_pred * h_true)
    elif average == "max":
        norm = max(h_pred, h_true)
    else:
        raise ValueError(f"unknown normalization {average!r}")
    return float(min(max(mi / norm, 0.0), 1.0))


def group_counts(pred, sensitive, n_groups: int | None = None) -> np.ndarray:
    """|cluster_i ∩ group_j| for every occupied cluster id (rows follow sorted cluster ids)."""
    pred, sensitive = _check_pair(pred, sensitive)
    _, p = np.unique(pred, return_inverse=True)
    n_groups = n_groups or int(sensitive.max()) + 1
    table = np.zeros((p.max() + 1, n_groups), dtype=np.int64)
    np.add.at(table, (p, sensitive), 1)
    return table


def balance(pred, sensitive, n_groups: int | None = None, n_clusters: int | None = None) -> float:
    """Smallest within-cluster share of the least represented group.

    Groups are the ids ``0..n_groups-1`` (inferred from `sensitive` by
    default). Passing `n_clusters` asserts that every id below it is used.
    """
    pred = np.asarray(pred)
    if n_clusters is not None:
        missing = np.setdiff1d(np.arange(n_clusters), pred)
        if missing.size:
            raise ContractError(f"clusters {missing.tolist()} are empty")
    table = group_counts(pred, sensitive, n_groups)
    return float(np.min(table.min(axis=1) / table.sum(axis=1)))


def evaluate(pred, truth, sensitive) -> MetricsReport:
    return MetricsReport(
        acc=accuracy(pred, truth),
        nmi=nmi(pred, truth),
        bal=balance(pred, sensitive),
        contingency=contingency(pred, truth),
        per_cluster_group_counts=group_counts(pred, sensitive),
    )


def format_table(rows: dict) -> str:
    """Render ``{row_name: {"acc":..,"nmi":..,"bal":..}}`` as a fixed-width ACC/NMI/BAL table."""
    width = max([len(str(k)) for k in rows] + [7])
    lines = [f"{'':<{width}}  {'ACC':>6}  {'NMI':>6}  {'BAL':>6}"]
    for name, r in rows.items():
        lines.append(f"{name:<{width}}  {r['acc']:6.3f}  {r['nmi']:6.3f}  {r['bal']:6.3f}")
    return "\n".join(lines)
