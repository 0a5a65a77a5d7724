"""Partition-quality metrics: NMI, adjusted Rand index, average F1,
plus the posterior histogram of the inferred category count."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Sequence

import numpy as np

__all__ = ["nmi", "ari", "average_f1", "k_histogram", "MetricReport"]


def _aligned(a: Mapping[int, int], b: Mapping[int, int]):
    if set(a) != set(b):
        raise ValueError("partitions cover different document sets")
    keys = sorted(a)
    return np.array([a[k] for k in keys]), np.array([b[k] for k in keys])


def _contingency(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    _, xi = np.unique(x, return_inverse=True)
    _, yi = np.unique(y, return_inverse=True)
    table = np.zeros((xi.max() + 1, yi.max() + 1), dtype=np.int64)
    np.add.at(table, (xi, yi), 1)
    return table


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(a: Mapping[int, int], b: Mapping[int, int]) -> float:
    """Normalized mutual information 2 I(A;B) / (H(A)+H(B)), natural
    logs; 0 by convention when both partitions are single-cluster."""
    x, y = _aligned(a, b)
    if len(x) < 2:
        raise ValueError("need at least 2 documents")
    table = _contingency(x, y)
    n = table.sum()
    ha = _entropy(table.sum(axis=1))
    hb = _entropy(table.sum(axis=0))
    if ha + hb == 0.0:
        return 0.0
    pa = table.sum(axis=1) / n
    pb = table.sum(axis=0) / n
    mi = 0.0
    for i, j in zip(*np.nonzero(table)):
        pij = table[i, j] / n
        mi += pij * math.log(pij / (pa[i] * pb[j]))
    return 2.0 * mi / (ha + hb)


def ari(a: Mapping[int, int], b: Mapping[int, int]) -> float:
    """Hubert-Arabie adjusted Rand index via contingency pair counts;
    1 by convention when the partitions are identical and the
    chance-adjustment denominator degenerates to 0."""
    x, y = _aligned(a, b)
    if len(x) < 2:
        raise ValueError("need at least 2 documents")
    table = _contingency(x, y)

    def comb2(v):
        return (v * (v - 1) // 2).sum()

    n = table.sum()
    sum_ij = comb2(table)
    sum_a = comb2(table.sum(axis=1))
    sum_b = comb2(table.sum(axis=0))
    total = n * (n - 1) // 2
    expected = sum_a * sum_b / total
    maximum = (sum_a + sum_b) / 2.0
    if maximum == expected:
        # degenerate chance adjustment: both partitions trivial
        same = (np.count_nonzero(table, axis=0).max() == 1
                and np.count_nonzero(table, axis=1).max() == 1)
        return 1.0 if same else 0.0
    return float((sum_ij - expected) / (maximum - expected))


def average_f1(pred: Mapping[int, int], truth: Mapping[int, int],
               known: Iterable[int]):
    """Unweighted mean F1 over the known classes, plus per-class detail.

    Known class ids are shared between prediction and truth (dishes
    0..|K|-1 are identity-mapped; inferred new categories never count
    as a known class). F1 is 0 when its denominator is 0.
    """
    known = sorted(set(int(k) for k in known))
    if not known:
        raise ValueError("known class set is empty")
    x, y = _aligned(pred, truth)
    per_class = {}
    for k in known:
        tp = int(np.sum((x == k) & (y == k)))
        fp = int(np.sum((x == k) & (y != k)))
        fn = int(np.sum((x != k) & (y == k)))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else 0.0)
        per_class[k] = {"precision": precision, "recall": recall,
                        "f1": f1, "support": tp + fn}
    mean = sum(c["f1"] for c in per_class.values()) / len(known)
    return mean, per_class


def k_histogram(traces, burn_in: int = 0) -> Dict[int, float]:
    """Relative frequency of the inferred category count over the
    post-burn-in iterations of one or more chain traces."""
    if hasattr(traces, "n_categories"):
        traces = [traces]
    counts: Dict[int, int] = {}
    total = 0
    for trace in traces:
        ks = trace.n_categories if hasattr(trace, "n_categories") else list(trace)
        if burn_in >= len(ks):
            raise ValueError("burn_in must be smaller than the trace length")
        for k in ks[burn_in:]:
            counts[int(k)] = counts.get(int(k), 0) + 1
            total += 1
    return {k: c / total for k, c in sorted(counts.items())}


@dataclass
class MetricReport:
    """Scores for one final assignment against ground truth."""

    nmi: float
    ari: float
    avg_f1: float
    per_class: Dict[int, dict] = field(default_factory=dict)
    contingency: Sequence[Sequence[int]] = ()

    @classmethod
    def evaluate(cls, pred: Mapping[int, int], truth: Mapping[int, int],
                 known: Iterable[int]) -> "MetricReport":
        mean_f1, per_class = average_f1(pred, truth, known)
        x, y = _aligned(pred, truth)
        return cls(
            nmi=nmi(pred, truth),
            ari=ari(pred, truth),
            avg_f1=mean_f1,
            per_class=per_class,
            contingency=_contingency(x, y).tolist(),
        )

    def to_json(self) -> str:
        return json.dumps({
            "nmi": self.nmi,
            "ari": self.ari,
            "avg_f1": self.avg_f1,
            "per_class": {str(k): v for k, v in self.per_class.items()},
            "contingency": list(self.contingency),
        }, indent=2, sort_keys=True) + "\n"
