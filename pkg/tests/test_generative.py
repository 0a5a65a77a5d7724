"""Forward sampler against franchise combinatorics (closed-form and
independently simulated table/dish counts), plus the Geweke comparison
machinery on trivial inputs."""

import numpy as np
import pytest

from opencat.generative import (
    GEWEKE_STATS,
    GenSpec,
    autocorrelation_time,
    forward_sample,
    geweke_compare,
    geweke_marginal_run,
    geweke_successive_run,
    label_split,
)
from opencat.sampler import make_rng
from opencat.state import HyperParams


def spec_of(n_docs=5, doc_length=6, L=3, P=4, gamma=1.0, alpha=1.0, **kw):
    hp = HyperParams.create(n_topics=L, vocab_size=P)
    return GenSpec(n_docs=n_docs, doc_length=doc_length, hypers=hp,
                   fixed_gamma=gamma, fixed_alpha=alpha, **kw)


# -- independent seating oracle ------------------------------------------------

def crp_counts_oracle(lengths, gamma, alpha, rng):
    """(K, M) by the sequential new-table / new-dish probabilities alone,
    without tracking any seating arrangement."""
    m = 0
    k = 0
    for n_d in lengths:
        for i in range(n_d):
            if rng.random() < alpha / (alpha + i):
                if rng.random() < gamma / (gamma + m):
                    k += 1
                m += 1
    return k, m


def expected_tables(lengths, alpha):
    return sum(alpha / (alpha + i) for n_d in lengths for i in range(n_d))


# -- structural checks ----------------------------------------------------------

def test_first_token_always_opens_table_and_dish():
    spec = spec_of(n_docs=1, doc_length=1)
    for seed in range(20):
        synth = forward_sample(spec, make_rng(seed))
        state = synth.state
        assert state.n_dishes == 1
        assert state.total_tables == 1
        assert state.table_of_token[0][0] == 0


def test_alpha_to_zero_gives_one_table_per_document():
    spec = spec_of(n_docs=4, doc_length=10, alpha=1e-12)
    synth = forward_sample(spec, make_rng(1))
    assert synth.state.total_tables == 4
    assert all(synth.state.n_tables(d) == 1 for d in range(4))


def test_gamma_to_zero_gives_one_dish():
    spec = spec_of(n_docs=4, doc_length=10, gamma=1e-12, alpha=5.0)
    synth = forward_sample(spec, make_rng(2))
    assert synth.state.n_dishes == 1


@pytest.mark.parametrize("seed", range(10))
def test_forward_state_passes_audit(seed):
    rng = make_rng(100 + seed)
    lengths = rng.integers(0, 15, size=6).tolist()
    spec = spec_of(n_docs=6, doc_length=lengths,
                   gamma=float(rng.gamma(2, 1)) + 0.1,
                   alpha=float(rng.gamma(2, 1)) + 0.1)
    synth = forward_sample(spec, rng)
    assert synth.state.audit()
    assert synth.corpus.total_tokens == sum(lengths)
    assert set(synth.truth) == set(range(6))


def test_expected_tables_and_dishes_match_oracle():
    lengths = [6] * 5
    gamma, alpha = 1.5, 0.8
    spec = spec_of(n_docs=5, doc_length=6, gamma=gamma, alpha=alpha)
    reps = 3000
    rng = make_rng(7)
    km = np.array([[s.state.n_dishes, s.state.total_tables]
                   for s in (forward_sample(spec, rng) for _ in range(reps))],
                  dtype=np.float64)
    oracle_rng = make_rng(8)
    km_o = np.array([crp_counts_oracle(lengths, gamma, alpha, oracle_rng)
                     for _ in range(reps)], dtype=np.float64)
    for j in range(2):
        se = np.hypot(km[:, j].std() / np.sqrt(reps), km_o[:, j].std() / np.sqrt(reps))
        assert abs(km[:, j].mean() - km_o[:, j].mean()) < 3 * se
    # M also has a closed form
    se_m = km[:, 1].std() / np.sqrt(reps)
    assert abs(km[:, 1].mean() - expected_tables(lengths, alpha)) < 3 * se_m


def test_seating_depends_only_on_length_multiset():
    gamma, alpha = 1.0, 1.2
    reps = 3000
    a = spec_of(n_docs=3, doc_length=[3, 5, 7], gamma=gamma, alpha=alpha)
    b = spec_of(n_docs=3, doc_length=[7, 3, 5], gamma=gamma, alpha=alpha)
    rng = make_rng(9)
    ka = np.array([forward_sample(a, rng).state.n_dishes for _ in range(reps)])
    kb = np.array([forward_sample(b, rng).state.n_dishes for _ in range(reps)])
    from scipy.stats import ks_2samp
    assert ks_2samp(ka, kb).pvalue > 1e-3


# -- planted categories and labeling ------------------------------------------

def planted_spec(rng=None):
    L, P = 4, 12
    hp = HyperParams.create(n_topics=L, vocab_size=P)
    mix = np.full((3, L), 0.1 / (L - 1))
    np.fill_diagonal(mix, 0.9)
    phi = np.full((L, P), 0.1 / (P - 3))
    for l in range(L):
        phi[l, 3 * l:3 * l + 3] = 0.9 / 3
        phi[l] /= phi[l].sum()
    labels = [0, 0, 1, 1, 2, 2]
    return GenSpec(n_docs=6, doc_length=20, hypers=hp, fixed_gamma=1.0,
                   fixed_alpha=1.0, planted_labels=labels,
                   topic_mix=mix, word_dists=phi)


def test_planted_labels_force_dishes_and_truth():
    spec = planted_spec()
    synth = forward_sample(spec, make_rng(11))
    for d, lab in enumerate(spec.planted_labels):
        assert synth.truth[d] == lab
        assert all(k == lab for k in synth.state.table_dish[d])
    assert synth.state.n_dishes >= 3
    assert synth.state.audit()
    np.testing.assert_allclose(synth.topic_mix[0], spec.topic_mix[0])
    np.testing.assert_allclose(synth.word_dists, spec.word_dists)


def test_label_split_fraction_and_consistency():
    spec = planted_spec()
    synth = forward_sample(spec, make_rng(12))
    labeled = label_split(synth, [0, 1], 0.5, make_rng(13))
    assert labeled.known_labels == {"cat0": 0, "cat1": 1}
    got = {d.doc_id: d.label for d in labeled.documents if d.label is not None}
    assert len(got) == 2  # one of two docs per known category
    for d, lab in got.items():
        assert synth.truth[d] == lab
    # category 2 never labeled
    assert all(synth.truth[d] in (0, 1) for d in got)


def test_label_split_rejects_non_prefix_known_set():
    synth = forward_sample(planted_spec(), make_rng(14))
    with pytest.raises(ValueError):
        label_split(synth, [1, 2], 0.5, make_rng(15))


# -- Geweke machinery -----------------------------------------------------------

def test_marginal_and_successive_runs_have_shape():
    spec = spec_of(n_docs=3, doc_length=4, L=2, P=3)
    a = geweke_marginal_run(spec, 20, make_rng(16))
    b = geweke_successive_run(spec, 10, 2, make_rng(17))
    assert a.shape == (20, len(GEWEKE_STATS))
    assert b.shape == (10, len(GEWEKE_STATS))
    assert np.isfinite(a).all() and np.isfinite(b).all()
    assert (a[:, 0] >= 1).all() and (b[:, 1] >= 1).all()


def test_geweke_compare_identical_samples():
    spec = spec_of(n_docs=3, doc_length=4, L=2, P=3)
    a = geweke_marginal_run(spec, 30, make_rng(18))
    ps = geweke_compare(a, a.copy())
    assert set(ps) == set(GEWEKE_STATS)
    assert all(p == 1.0 for p in ps.values())


def test_geweke_compare_detects_shift():
    rng = np.random.default_rng(19)
    a = rng.normal(0, 1, size=(2000, len(GEWEKE_STATS)))
    b = rng.normal(0, 1, size=(2000, len(GEWEKE_STATS)))
    b[:, 2] += 1.0
    ps = geweke_compare(a, b)
    assert ps["mean_table_size"] < 1e-6
    assert ps["K"] > 0.01


def test_geweke_compare_rejects_empty():
    with pytest.raises(ValueError):
        geweke_compare(np.empty((0, 4)), np.empty((0, 4)))


def test_autocorrelation_time_iid_and_correlated():
    rng = np.random.default_rng(20)
    iid = rng.normal(size=20_000)
    assert autocorrelation_time(iid) < 1.5
    repeated = np.repeat(rng.normal(size=2000), 10)
    assert autocorrelation_time(repeated) > 5.0
    assert autocorrelation_time(np.ones(100)) == 1.0
