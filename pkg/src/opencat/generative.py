"""Forward sampling of synthetic corpora and joint-distribution checks.

The forward sampler seats tokens by the franchise predictive (no
truncation), draws each category's topic distribution lazily and the
topic-word distributions once, then emits words. The two Geweke runs
target the same joint as the collapsed sampler and are compared with
per-statistic two-sample KS tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.stats import ks_2samp

from .corpus import Corpus, Document, Vocabulary
from .state import CrfState, HyperParams
from . import sampler as _sampler

__all__ = [
    "GenSpec",
    "SyntheticCorpus",
    "forward_sample",
    "label_split",
    "GEWEKE_STATS",
    "geweke_marginal_run",
    "geweke_successive_run",
    "geweke_compare",
    "autocorrelation_time",
]

GEWEKE_STATS = ("K", "M", "mean_table_size", "topic_entropy")


@dataclass(frozen=True)
class GenSpec:
    """Synthetic corpus blueprint.

    ``planted_labels`` forces the dish of every table in the listed
    documents (entry -1 leaves a document unforced). ``topic_mix`` /
    ``word_dists`` optionally pin the category-topic and topic-word
    distributions instead of drawing them from their Dirichlet priors,
    for well-separated benchmark corpora.
    """

    n_docs: int
    doc_length: Union[int, Sequence[int]]
    hypers: HyperParams
    fixed_gamma: Optional[float] = None
    fixed_alpha: Optional[float] = None
    planted_labels: Optional[Sequence[int]] = None
    topic_mix: Optional[np.ndarray] = None   # (n_planted_dishes, L)
    word_dists: Optional[np.ndarray] = None  # (L, P)

    def __post_init__(self):
        if self.n_docs < 1:
            raise ValueError("need at least one document")
        for name in ("fixed_gamma", "fixed_alpha"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.planted_labels is not None and len(self.planted_labels) != self.n_docs:
            raise ValueError("planted_labels must cover every document")

    def lengths(self) -> np.ndarray:
        if np.isscalar(self.doc_length):
            return np.full(self.n_docs, int(self.doc_length), dtype=np.int64)
        arr = np.asarray(self.doc_length, dtype=np.int64)
        if len(arr) != self.n_docs:
            raise ValueError("per-document lengths must cover every document")
        return arr


@dataclass
class SyntheticCorpus:
    corpus: Corpus
    truth: Dict[int, int]
    state: CrfState                 # latent seating matching the draw
    topic_mix: List[np.ndarray]     # theta_k per dish
    word_dists: np.ndarray          # phi, (L, P)


def _vote_category(votes, dish_tables):
    order = sorted(range(len(votes)), key=lambda k: (-votes[k], -dish_tables[k], k))
    return order[0]


def forward_sample(spec: GenSpec, rng) -> SyntheticCorpus:
    """Draw one corpus (words plus full latent record) from the
    generative process."""
    hp = spec.hypers
    L, P = hp.n_topics, hp.vocab_size
    gamma = spec.fixed_gamma if spec.fixed_gamma is not None else float(rng.gamma(hp.a_gamma, hp.b_gamma))
    alpha = spec.fixed_alpha if spec.fixed_alpha is not None else float(rng.gamma(hp.a_alpha, hp.b_alpha))
    phi = spec.word_dists if spec.word_dists is not None else rng.dirichlet(hp.beta, size=L)

    theta: List[np.ndarray] = []

    def new_theta(k):
        if spec.topic_mix is not None and k < len(spec.topic_mix):
            return np.asarray(spec.topic_mix[k], dtype=np.float64)
        return rng.dirichlet(hp.zeta)

    planted = spec.planted_labels
    n_planted = 0
    if planted is not None:
        n_planted = int(max(planted)) + 1
        for k in range(n_planted):
            theta.append(new_theta(k))
    dish_tables = [0] * n_planted
    total_tables = 0

    lengths = spec.lengths()
    words, tdoc, ydoc, tabdish = [], [], [], []
    for d in range(spec.n_docs):
        forced = planted[d] if planted is not None else -1
        dishes: List[int] = []
        sizes: List[int] = []
        w_d = np.zeros(lengths[d], dtype=np.int64)
        t_d = np.zeros(lengths[d], dtype=np.int64)
        y_d = np.zeros(lengths[d], dtype=np.int64)
        for i in range(int(lengths[d])):
            u = rng.random() * (i + alpha)
            tt = None
            acc = 0.0
            for t, s in enumerate(sizes):
                acc += s
                if u < acc:
                    tt = t
                    break
            if tt is None:  # open a table
                if forced >= 0:
                    k = forced
                else:
                    v = rng.random() * (total_tables + gamma)
                    k = None
                    acc = 0.0
                    for kk, mk in enumerate(dish_tables):
                        acc += mk
                        if v < acc:
                            k = kk
                            break
                    if k is None:
                        k = len(dish_tables)
                if k == len(dish_tables):
                    dish_tables.append(0)
                    theta.append(new_theta(k))
                tt = len(sizes)
                dishes.append(k)
                sizes.append(0)
                dish_tables[k] += 1
                total_tables += 1
            sizes[tt] += 1
            k = dishes[tt]
            y = int(rng.choice(L, p=theta[k]))
            w = int(rng.choice(P, p=phi[y]))
            t_d[i], y_d[i], w_d[i] = tt, y, w
        words.append(w_d)
        tdoc.append(t_d)
        ydoc.append(y_d)
        tabdish.append(dishes)

    state = CrfState(words, hp, gamma, alpha, n_known=0)
    state.table_of_token = tdoc
    state.topic_of_token = ydoc
    state.table_dish = tabdish
    state.n_dishes = len(dish_tables)
    while state._cap < state.n_dishes:
        state._grow_dishes()
    state.rebuild_counts()

    truth = {}
    for d in range(spec.n_docs):
        if planted is not None and planted[d] >= 0:
            truth[d] = int(planted[d])
        elif lengths[d] == 0:
            truth[d] = _vote_category(np.zeros(state.n_dishes), dish_tables)
        else:
            votes = np.bincount([tabdish[d][t] for t in tdoc[d]], minlength=state.n_dishes)
            truth[d] = _vote_category(votes, dish_tables)

    vocab = Vocabulary.placeholder(P)
    docs = tuple(Document(d, words[d]) for d in range(spec.n_docs))
    return SyntheticCorpus(Corpus(vocab, docs), truth, state, theta, phi)


def label_split(synth: SyntheticCorpus, known_categories: Sequence[int],
                fraction: float, rng) -> Corpus:
    """Attach labels to a fraction of the documents whose true category
    is known; returns a new Corpus suitable for semi-supervised runs.
    Known categories must be the dense prefix 0..|K|-1 of truth ids."""
    known = sorted(int(k) for k in known_categories)
    if known != list(range(len(known))):
        raise ValueError("known categories must be the dense prefix of truth ids")
    names = {k: f"cat{k}" for k in known}
    labeled = set()
    for k in known:
        members = [d for d, c in synth.truth.items() if c == k]
        n_train = int(round(fraction * len(members)))
        picked = rng.choice(len(members), size=n_train, replace=False)
        labeled.update(members[i] for i in picked)
    docs = tuple(
        Document(doc.doc_id, doc.tokens,
                 synth.truth[doc.doc_id] if doc.doc_id in labeled else None)
        for doc in synth.corpus.documents
    )
    return Corpus(synth.corpus.vocabulary, docs, {names[k]: k for k in known})


# -- Geweke joint-distribution check ----------------------------------------

def _statistics(state: CrfState) -> np.ndarray:
    sizes = [s for d in range(state.n_docs) for s in state.table_size[d]]
    total = int(state.topic_total.sum())
    if total:
        p = state.topic_total / total
        p = p[p > 0]
        entropy = float(-(p * np.log(p)).sum())
    else:
        entropy = 0.0
    return np.array([
        state.n_dishes,
        state.total_tables,
        float(np.mean(sizes)) if sizes else 0.0,
        entropy,
    ])


def geweke_marginal_run(spec: GenSpec, n_samples: int, rng) -> np.ndarray:
    """Independent forward draws; returns (n_samples, 4) statistics."""
    out = np.empty((n_samples, len(GEWEKE_STATS)))
    for i in range(n_samples):
        out[i] = _statistics(forward_sample(spec, rng).state)
    return out


def _regenerate_words(state: CrfState, rng):
    """Resample every word from its collapsed topic-word predictive."""
    hp = state.hypers
    for d in range(state.n_docs):
        w_d = state.words[d]
        y_d = state.topic_of_token[d]
        for n in range(len(w_d)):
            l, w = int(y_d[n]), int(w_d[n])
            state.topic_word[l, w] -= 1
            state.topic_total[l] -= 1
            weights = hp.beta + state.topic_word[l]
            cdf = np.cumsum(weights)
            w = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
            w_d[n] = w
            state.topic_word[l, w] += 1
            state.topic_total[l] += 1


def geweke_successive_run(spec: GenSpec, n_samples: int, thin: int, rng,
                          sweep_fn=None) -> np.ndarray:
    """Alternate latent sweeps with collapsed word regeneration, starting
    from a forward draw; emits statistics every ``thin`` sweeps."""
    if sweep_fn is None:
        sweep_fn = _sampler.gibbs_sweep
    resample = spec.fixed_gamma is None or spec.fixed_alpha is None
    state = forward_sample(spec, rng).state
    out = np.empty((n_samples, len(GEWEKE_STATS)))
    for i in range(n_samples):
        for _ in range(thin):
            sweep_fn(state, rng, resample_concentrations=resample)
            _regenerate_words(state, rng)
        out[i] = _statistics(state)
    return out


def autocorrelation_time(x: np.ndarray, max_lag: Optional[int] = None) -> float:
    """Integrated autocorrelation time, initial-positive-sequence cutoff."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    var = x.var()
    if n < 3 or var == 0:
        return 1.0
    if max_lag is None:
        max_lag = n // 3
    x0 = x - x.mean()
    tau = 1.0
    for lag in range(1, max_lag):
        rho = float(x0[:-lag] @ x0[lag:]) / ((n - lag) * var)
        if rho <= 0:
            break
        tau += 2.0 * rho
    return max(tau, 1.0)


def geweke_compare(stats_a: np.ndarray, stats_b: np.ndarray,
                   names: Sequence[str] = GEWEKE_STATS) -> Dict[str, float]:
    """Per-statistic two-sample KS p-values between a marginal run (a)
    and a successive run (b); the successive side is thinned to its
    estimated effective sample size first."""
    stats_a = np.atleast_2d(np.asarray(stats_a, dtype=np.float64))
    stats_b = np.atleast_2d(np.asarray(stats_b, dtype=np.float64))
    if stats_a.size == 0 or stats_b.size == 0:
        raise ValueError("empty statistic sequences")
    out = {}
    for j, name in enumerate(names):
        a = stats_a[:, j]
        b = stats_b[:, j]
        stride = max(1, math.ceil(autocorrelation_time(b)))
        b = b[::stride]
        if np.array_equal(a, stats_b[:, j]) or (a.std() == 0 and b.std() == 0 and a[0] == b[0]):
            out[name] = 1.0
            continue
        out[name] = float(ks_2samp(a, b).pvalue)
    return out
