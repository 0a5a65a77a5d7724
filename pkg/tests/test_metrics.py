"""Clustering metrics against brute-force definitions: entropy sums for
NMI, explicit pair enumeration for ARI, hand confusion tables for F1."""

import itertools
import math
from collections import Counter

import numpy as np
import pytest

from opencat.metrics import MetricReport, ari, average_f1, k_histogram, nmi


def as_partition(labels):
    return {i: c for i, c in enumerate(labels)}


# -- independent oracles ------------------------------------------------------

def entropy_oracle(labels):
    n = len(labels)
    return -sum((c / n) * math.log(c / n) for c in Counter(labels).values())


def mutual_information_oracle(a, b):
    n = len(a)
    joint = Counter(zip(a, b))
    pa = Counter(a)
    pb = Counter(b)
    mi = 0.0
    for (x, y), c in joint.items():
        mi += (c / n) * math.log((c * n) / (pa[x] * pb[y]))
    return mi


def nmi_oracle(a, b):
    ha, hb = entropy_oracle(a), entropy_oracle(b)
    if ha + hb == 0:
        return 0.0
    return 2 * mutual_information_oracle(a, b) / (ha + hb)


def ari_oracle(a, b):
    """Hubert-Arabie ARI by enumerating all pairs."""
    n = len(a)
    same_both = diff_both = same_a = same_b = 0
    for i, j in itertools.combinations(range(n), 2):
        sa, sb = a[i] == a[j], b[i] == b[j]
        same_both += sa and sb
        diff_both += (not sa) and (not sb)
        same_a += sa
        same_b += sb
    total = n * (n - 1) // 2
    expected = same_a * same_b / total
    maximum = (same_a + same_b) / 2
    if maximum == expected:
        return 1.0 if same_a == same_b == same_both else 0.0
    return (same_both - expected) / (maximum - expected)


def all_partitions(n):
    """Every partition of n items, as canonical label sequences."""
    if n == 1:
        yield (0,)
        return
    for rest in all_partitions(n - 1):
        top = max(rest)
        for c in range(top + 2):
            yield rest + (c,)


# -- worked examples ----------------------------------------------------------

def test_nmi_identical_partitions():
    p = as_partition([0, 0, 1, 1, 2])
    assert nmi(p, p) == pytest.approx(1.0, abs=1e-12)


def test_nmi_independent_partitions():
    a = as_partition([0, 0, 1, 1])
    b = as_partition([0, 1, 0, 1])
    assert nmi(a, b) == pytest.approx(0.0, abs=1e-12)


def test_nmi_worked_example():
    a = as_partition([0, 0, 1, 1])
    b = as_partition([0, 0, 1, 2])
    assert nmi(a, b) == pytest.approx(0.8, abs=1e-12)


def test_nmi_single_cluster_convention():
    a = as_partition([0, 0, 0])
    assert nmi(a, a) == 0.0


def test_ari_identical():
    p = as_partition([0, 1, 1, 2])
    assert ari(p, p) == pytest.approx(1.0, abs=1e-12)


def test_ari_worked_example():
    a = as_partition([0, 0, 1, 1])
    b = as_partition([0, 0, 1, 2])
    assert ari(a, b) == pytest.approx(4 / 7, abs=1e-12)


def test_ari_degenerate_single_cluster():
    p = as_partition([0, 0, 0, 0])
    assert ari(p, p) == 1.0


def test_metrics_reject_mismatched_documents():
    with pytest.raises(ValueError):
        nmi({0: 0, 1: 0}, {0: 0, 2: 0})
    with pytest.raises(ValueError):
        ari({0: 0, 1: 0}, {1: 0, 2: 0})


# -- exhaustive and randomized oracle agreement -------------------------------

@pytest.mark.parametrize("n", range(2, 9))
def test_exhaustive_agreement_small_partitions(n):
    parts = list(all_partitions(n))
    rng = np.random.default_rng(n)
    if len(parts) <= 210:  # n <= 6: every pair of partitions
        pairs = list(itertools.product(parts, parts))
    else:  # n = 7, 8: every partition, each against sampled partners
        pairs = [(p, parts[rng.integers(len(parts))]) for p in parts for _ in range(3)]
    for pa, pb in pairs:
        a, b = as_partition(pa), as_partition(pb)
        assert nmi(a, b) == pytest.approx(nmi_oracle(pa, pb), abs=1e-12)
        assert ari(a, b) == pytest.approx(ari_oracle(pa, pb), abs=1e-12)


def test_random_large_partitions_match_pair_enumeration():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = 200
        a = tuple(rng.integers(0, rng.integers(2, 12), size=n).tolist())
        b = tuple(rng.integers(0, rng.integers(2, 12), size=n).tolist())
        assert ari(as_partition(a), as_partition(b)) == pytest.approx(
            ari_oracle(a, b), abs=1e-12)


def test_symmetry_and_relabeling_invariance():
    rng = np.random.default_rng(8)
    for _ in range(50):
        n = 30
        a = rng.integers(0, 4, size=n).tolist()
        b = rng.integers(0, 5, size=n).tolist()
        pa, pb = as_partition(a), as_partition(b)
        assert nmi(pa, pb) == pytest.approx(nmi(pb, pa), abs=1e-12)
        assert ari(pa, pb) == pytest.approx(ari(pb, pa), abs=1e-12)
        perm = rng.permutation(10)
        pa2 = as_partition([int(perm[c]) for c in a])
        assert nmi(pa2, pb) == pytest.approx(nmi(pa, pb), abs=1e-12)
        assert ari(pa2, pb) == pytest.approx(ari(pa, pb), abs=1e-12)
        assert 0.0 <= nmi(pa, pb) <= 1.0
        assert ari(pa, pb) <= 1.0


def test_ari_random_partitions_near_zero():
    rng = np.random.default_rng(9)
    vals = []
    for _ in range(30):
        a = as_partition(rng.integers(0, 5, size=2000).tolist())
        b = as_partition(rng.integers(0, 5, size=2000).tolist())
        vals.append(ari(a, b))
    assert abs(np.mean(vals)) < 0.01


# -- average F1 ---------------------------------------------------------------

def test_f1_perfect_prediction():
    truth = as_partition([0, 0, 1, 1, 2])
    mean, per_class = average_f1(truth, truth, [0, 1])
    assert mean == 1.0
    assert per_class[0]["f1"] == 1.0


def test_f1_worked_example():
    # class 0: precision 0.5, recall 1 -> 2/3; class 1: precision 1, recall 0.5 -> 2/3
    pred = as_partition([0, 0, 0, 0, 1, 2])
    truth = as_partition([0, 0, 1, 2, 1, 1])
    mean, per_class = average_f1(pred, truth, [0, 1])
    assert per_class[0]["precision"] == pytest.approx(0.5)
    assert per_class[0]["recall"] == pytest.approx(1.0)
    assert per_class[0]["f1"] == pytest.approx(2 / 3, abs=1e-12)
    assert per_class[1]["precision"] == pytest.approx(1.0)
    assert per_class[1]["recall"] == pytest.approx(1 / 3)
    assert mean == pytest.approx((2 / 3 + 0.5) / 2, abs=1e-12)


def test_f1_zero_denominator_convention():
    pred = as_partition([1, 1])
    truth = as_partition([1, 1])
    mean, per_class = average_f1(pred, truth, [0, 1])
    assert per_class[0]["f1"] == 0.0
    assert mean == 0.5


def test_f1_empty_known_set_rejected():
    with pytest.raises(ValueError):
        average_f1({0: 0}, {0: 0}, [])


def test_f1_hand_confusion_table():
    # confusion: pred rows 0/1/new vs truth 0/1/2
    pred = as_partition([0, 0, 1, 1, 1, 2, 2, 0])
    truth = as_partition([0, 1, 1, 1, 2, 2, 2, 0])
    mean, per_class = average_f1(pred, truth, [0, 1])
    # class 0: tp=2 fp=1 fn=0; class 1: tp=2 fp=1 fn=1
    assert per_class[0]["precision"] == pytest.approx(2 / 3)
    assert per_class[0]["recall"] == pytest.approx(1.0)
    assert per_class[1]["precision"] == pytest.approx(2 / 3)
    assert per_class[1]["recall"] == pytest.approx(2 / 3)
    f0 = 2 * (2 / 3) / (1 + 2 / 3)
    assert mean == pytest.approx((f0 + 2 / 3) / 2, abs=1e-12)


# -- K histogram --------------------------------------------------------------

class FakeTrace:
    def __init__(self, ks):
        self.n_categories = list(ks)


def test_k_histogram_point_mass():
    assert k_histogram(FakeTrace([4] * 10)) == {4: 1.0}


def test_k_histogram_pooled():
    h = k_histogram([FakeTrace([4] * 5), FakeTrace([5] * 5)])
    assert h == {4: 0.5, 5: 0.5}


def test_k_histogram_burn_in_and_sum():
    rng = np.random.default_rng(10)
    traces = [FakeTrace(rng.integers(2, 9, size=50).tolist()) for _ in range(3)]
    h = k_histogram(traces, burn_in=10)
    assert sum(h.values()) == pytest.approx(1.0, abs=1e-12)
    assert all(v > 0 for v in h.values())


def test_k_histogram_burn_in_too_large():
    with pytest.raises(ValueError):
        k_histogram(FakeTrace([4, 4]), burn_in=2)


def test_metric_report_json():
    pred = as_partition([0, 0, 1, 2])
    truth = as_partition([0, 0, 1, 1])
    report = MetricReport.evaluate(pred, truth, [0, 1])
    text = report.to_json()
    assert '"nmi"' in text and '"avg_f1"' in text
    assert 0 <= report.nmi <= 1
