"""Collapsed Gibbs sampler over the franchise representation.

One sweep resamples, in order: every token's table, every unclamped
table's dish, every token's topic, then the two concentration
parameters. Labeled documents are clamped: every table they open
serves the label's dish, and their dishes are never resampled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.special import gammaln

from .corpus import Corpus
from .state import NEW, CrfState, HyperParams

__all__ = [
    "ChainConfig",
    "ChainTrace",
    "category_predictive",
    "table_block_predictive",
    "topic_weights",
    "table_weights",
    "dish_log_weights",
    "sample_table",
    "sample_dish",
    "sample_topic",
    "resample_gamma",
    "resample_alpha",
    "sample_gamma",
    "sample_alpha",
    "init_state",
    "gibbs_sweep",
    "log_joint",
    "run_chain",
    "assign_documents",
    "make_rng",
]


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream); one per chain."""
    return np.random.Generator(np.random.Philox(key=(int(seed) << 16) + stream))


@dataclass(frozen=True)
class ChainConfig:
    max_iter: int = 3000
    burn_in: int = 0
    seed: int = 0
    audit_every: Optional[int] = None

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if not (0 <= self.burn_in < self.max_iter):
            raise ValueError("need 0 <= burn_in < max_iter")


@dataclass
class ChainTrace:
    """Per-iteration diagnostics for one chain."""

    iters: List[int] = field(default_factory=list)
    n_categories: List[int] = field(default_factory=list)
    n_tables: List[int] = field(default_factory=list)
    gamma: List[float] = field(default_factory=list)
    alpha: List[float] = field(default_factory=list)
    log_joint: List[float] = field(default_factory=list)

    def record(self, iteration: int, state: CrfState, lj: float):
        self.iters.append(iteration)
        self.n_categories.append(state.n_dishes)
        self.n_tables.append(state.total_tables)
        self.gamma.append(state.gamma)
        self.alpha.append(state.alpha)
        self.log_joint.append(float(lj))

    def __len__(self):
        return len(self.iters)

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("iter,K,M,gamma,alpha,log_joint\n")
            for row in zip(self.iters, self.n_categories, self.n_tables,
                           self.gamma, self.alpha, self.log_joint):
                fh.write("%d,%d,%d,%r,%r,%r\n" % row)

    @classmethod
    def read_csv(cls, path) -> "ChainTrace":
        trace = cls()
        with open(path, "r", encoding="utf-8") as fh:
            next(fh)
            for line in fh:
                it, k, m, g, a, lj = line.strip().split(",")
                trace.iters.append(int(it))
                trace.n_categories.append(int(k))
                trace.n_tables.append(int(m))
                trace.gamma.append(float(g))
                trace.alpha.append(float(a))
                trace.log_joint.append(float(lj))
        return trace


# -- collapsed predictives ------------------------------------------------

def category_predictive(state: CrfState, topic: int, dish: int = NEW) -> float:
    """Probability that a token of the given category carries ``topic``,
    with the token itself already excluded from the counts. ``NEW``
    gives the prior predictive."""
    hp = state.hypers
    if dish == NEW:
        return float(hp.zeta[topic] / hp.zeta_sum)
    return float((hp.zeta[topic] + state.dish_topic[dish, topic])
                 / (hp.zeta_sum + state.dish_total[dish]))


def _dish_predictives(state: CrfState, topic: int) -> np.ndarray:
    """category_predictive vectorized over active dishes; shape (K,)."""
    hp = state.hypers
    K = state.n_dishes
    return ((hp.zeta[topic] + state.dish_topic[:K, topic])
            / (hp.zeta_sum + state.dish_total[:K]))


def table_block_predictive(state: CrfState, topic_counts: np.ndarray,
                           dish: int = NEW) -> float:
    """Log joint probability of a table's topic multiset under a
    category, ascending-factorial (Polya urn) form. The table's own
    tokens must already be excluded from the counts."""
    hp = state.hypers
    if dish == NEW:
        base = hp.zeta
        total = hp.zeta_sum
    else:
        base = hp.zeta + state.dish_topic[dish]
        total = hp.zeta_sum + float(state.dish_total[dish])
    out = 0.0
    for l in np.nonzero(topic_counts)[0]:
        b = float(base[l])
        for j in range(int(topic_counts[l])):
            out += math.log(b + j)
    for j in range(int(topic_counts.sum())):
        out -= math.log(total + j)
    return out


def _block_log_predictives(state: CrfState, topic_counts: np.ndarray) -> np.ndarray:
    """table_block_predictive over all active dishes plus a new one;
    shape (K+1,), last entry is the new-dish value."""
    hp = state.hypers
    K = state.n_dishes
    base = np.empty((K + 1, hp.n_topics))
    base[:K] = hp.zeta + state.dish_topic[:K]
    base[K] = hp.zeta
    totals = np.empty(K + 1)
    totals[:K] = hp.zeta_sum + state.dish_total[:K]
    totals[K] = hp.zeta_sum
    out = np.zeros(K + 1)
    for l in np.nonzero(topic_counts)[0]:
        col = base[:, l]
        for j in range(int(topic_counts[l])):
            out += np.log(col + j)
    for j in range(int(topic_counts.sum())):
        out -= np.log(totals + j)
    return out


def topic_weights(state: CrfState, d: int, n: int) -> np.ndarray:
    """Unnormalized topic posterior for token (d, n): category-side
    prior times word-side likelihood, both collapsed. Token must be
    topic-detached."""
    hp = state.hypers
    k = state.table_dish[d][int(state.table_of_token[d][n])]
    w = int(state.words[d][n])
    prior = (hp.zeta + state.dish_topic[k]) / (hp.zeta_sum + state.dish_total[k])
    lik = (hp.beta[w] + state.topic_word[:, w]) / (hp.beta_sum + state.topic_total)
    return prior * lik


# -- categorical draws -----------------------------------------------------

def _choice(weights, total, rng) -> int:
    u = rng.random() * total
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if u < acc:
            return i
    return len(weights) - 1


def table_weights(state: CrfState, d: int, n: int):
    """Unnormalized table posterior for the detached token (d, n).

    Returns (weights, dish_weights): ``weights[t]`` for each existing
    table plus a final entry for opening a new one; ``dish_weights``
    are the conditional new-table dish weights (existing dishes plus a
    final new-dish entry), or None in clamped documents where the new
    table's dish is forced. The new-table weight marginalizes the dish
    choice exactly.
    """
    y = int(state.topic_of_token[d][n])
    f = _dish_predictives(state, y)
    sizes = state.table_size[d]
    dishes = state.table_dish[d]
    weights = [sizes[t] * f[dishes[t]] for t in range(len(sizes))]
    clamp = int(state.clamps[d])
    if clamp >= 0:
        weights.append(state.alpha * f[clamp])
        return weights, None
    gamma = state.gamma
    f_new = category_predictive(state, y, NEW)
    dish_w = np.append(state.dish_tables[: state.n_dishes] * f, gamma * f_new)
    weights.append(state.alpha * float(dish_w.sum()) / (state.total_tables + gamma))
    return weights, dish_w


def sample_table(state: CrfState, d: int, n: int, rng) -> Tuple[int, Optional[int]]:
    """Draw a table for the detached token (d, n) given its topic.

    Returns (table, dish_if_new): table is an existing index or NEW;
    dish_if_new is an existing dish id or NEW when a table is opened,
    None otherwise.
    """
    weights, dish_w = table_weights(state, d, n)
    n_tables = len(weights) - 1
    t = _choice(weights, sum(weights), rng)
    if t < n_tables:
        return t, None
    if dish_w is None:
        return NEW, int(state.clamps[d])
    k = _choice(dish_w, float(dish_w.sum()), rng)
    return NEW, (NEW if k == len(dish_w) - 1 else k)


def dish_log_weights(state: CrfState, topic_counts: np.ndarray) -> np.ndarray:
    """Unnormalized log dish posterior for a block-detached table with
    the given topic counts: log prior occupancy plus the block
    predictive; last entry is the new-dish weight."""
    K = state.n_dishes
    logw = _block_log_predictives(state, topic_counts)
    prior = np.concatenate([state.dish_tables[:K].astype(np.float64), [state.gamma]])
    with np.errstate(divide="ignore"):
        return logw + np.log(prior)


def sample_dish(state: CrfState, d: int, tt: int, rng,
                topic_counts: Optional[np.ndarray] = None) -> int:
    """Draw a dish for block-detached table tt of unclamped document d.
    Returns an existing dish id or NEW. Log-space with max-subtraction."""
    if state.clamps[d] >= 0:
        raise ValueError(f"document {d} is clamped; its dishes are not resampled")
    if topic_counts is None:
        mask = state.table_of_token[d] == tt
        topic_counts = np.bincount(state.topic_of_token[d][mask],
                                   minlength=state.hypers.n_topics)
    K = state.n_dishes
    logw = dish_log_weights(state, topic_counts)
    logw = logw - logw.max()
    w = np.exp(logw)
    idx = _choice(w, float(w.sum()), rng)
    return NEW if idx == K else idx


def sample_topic(state: CrfState, d: int, n: int, rng) -> int:
    """Draw a topic for the topic-detached token (d, n)."""
    # same distribution as topic_weights, with the l-constant prior
    # denominator dropped
    hp = state.hypers
    k = state.table_dish[d][int(state.table_of_token[d][n])]
    w = int(state.words[d][n])
    weights = (hp.zeta + state.dish_topic[k]) \
        * ((hp.beta[w] + state.topic_word[:, w]) / (hp.beta_sum + state.topic_total))
    cdf = weights.cumsum()
    u = rng.random() * cdf[-1]
    return int(cdf.searchsorted(u, side="right"))


# -- concentration parameters ----------------------------------------------

def resample_gamma(current: float, n_dishes: int, n_tables: int,
                   shape: float, scale: float, rng) -> float:
    """Exact conditional of the top-level concentration given the number
    of dishes K and tables M, via the beta auxiliary-variable scheme."""
    if n_tables == 0 or n_dishes == 0:
        return float(rng.gamma(shape, scale))
    eta = rng.beta(current + 1.0, n_tables)
    rate = 1.0 / scale - math.log(eta)
    odds = (shape + n_dishes - 1.0) / (n_tables * rate)
    use_upper = rng.random() < odds / (1.0 + odds)
    post_shape = shape + n_dishes if use_upper else shape + n_dishes - 1.0
    return float(rng.gamma(post_shape, 1.0 / rate))


def resample_alpha(current: float, table_counts, doc_lengths,
                   shape: float, scale: float, rng) -> float:
    """Exact conditional of the document-level concentration given the
    per-document table counts T_d and lengths n_d, via the
    beta/Bernoulli auxiliary-variable scheme."""
    lengths = np.asarray(doc_lengths, dtype=np.float64)
    tables = np.asarray(table_counts, dtype=np.float64)
    live = lengths >= 1
    if not live.any():
        return float(rng.gamma(shape, scale))
    nd = lengths[live]
    w = rng.beta(current + 1.0, nd)
    s = rng.random(len(nd)) < nd / (nd + current)
    post_shape = shape + tables[live].sum() - s.sum()
    rate = 1.0 / scale - np.log(w).sum()
    return float(rng.gamma(post_shape, 1.0 / rate))


def sample_gamma(state: CrfState, rng) -> float:
    hp = state.hypers
    return resample_gamma(state.gamma, state.n_dishes, state.total_tables,
                          hp.a_gamma, hp.b_gamma, rng)


def sample_alpha(state: CrfState, rng) -> float:
    hp = state.hypers
    table_counts = [state.n_tables(d) for d in range(state.n_docs)]
    doc_lengths = [state.doc_length(d) for d in range(state.n_docs)]
    return resample_alpha(state.alpha, table_counts, doc_lengths,
                          hp.a_alpha, hp.b_alpha, rng)


# -- chain -------------------------------------------------------------------

def init_state(corpus: Corpus, hypers: HyperParams, rng) -> CrfState:
    """Draw concentrations from their priors, pre-seed one dish per known
    category, then seat tokens sequentially: uniform topic, table from
    its conditional on the partially built state."""
    gamma = float(rng.gamma(hypers.a_gamma, hypers.b_gamma))
    alpha = float(rng.gamma(hypers.a_alpha, hypers.b_alpha))
    clamps = np.asarray([-1 if doc.label is None else doc.label
                         for doc in corpus.documents], dtype=np.int64)
    words = [doc.tokens for doc in corpus.documents]
    state = CrfState(words, hypers, gamma, alpha,
                     clamps=clamps, n_known=corpus.n_known)
    L = hypers.n_topics
    for d in range(state.n_docs):
        for n in range(state.doc_length(d)):
            y = int(rng.integers(L))
            state.topic_of_token[d][n] = y
            table, dish = sample_table(state, d, n, rng)
            state.attach_token(d, n, table, dish, y)
    return state


def gibbs_sweep(state: CrfState, rng, resample_concentrations: bool = True):
    """One full pass: tables, dishes, topics, then gamma and alpha."""
    for d in range(state.n_docs):
        for n in range(state.doc_length(d)):
            state.detach_token(d, n)
            table, dish = sample_table(state, d, n, rng)
            state.attach_token(d, n, table, dish, int(state.topic_of_token[d][n]))
    for d in range(state.n_docs):
        if state.clamps[d] >= 0:
            continue
        for tt in range(state.n_tables(d)):
            counts = state.detach_table_block(d, tt)
            k = sample_dish(state, d, tt, rng, topic_counts=counts)
            state.attach_table_block(d, tt, k, counts)
    for d in range(state.n_docs):
        for n in range(state.doc_length(d)):
            state.detach_topic(d, n)
            state.attach_topic(d, n, sample_topic(state, d, n, rng))
    if resample_concentrations:
        state.gamma = sample_gamma(state, rng)
        state.alpha = sample_alpha(state, rng)


def log_joint(state: CrfState) -> float:
    """Unnormalized log p(seating, dishes, topics, words | concentrations).

    CRF seating priors for tables and dishes plus the two collapsed
    Dirichlet-multinomial blocks. Chain diagnostic only; clamped
    documents contribute their (conditioned) seating terms as-is.
    """
    hp = state.hypers
    K = state.n_dishes
    out = 0.0
    for d in range(state.n_docs):
        n_d = state.doc_length(d)
        if n_d == 0:
            continue
        out += (state.n_tables(d) * math.log(state.alpha)
                + gammaln(state.alpha) - gammaln(state.alpha + n_d))
        out += sum(gammaln(s) for s in state.table_size[d])
    m = state.dish_tables[:K]
    occupied = m[m > 0]
    out += (len(occupied) * math.log(state.gamma)
            + gammaln(state.gamma) - gammaln(state.gamma + state.total_tables)
            + gammaln(occupied).sum())
    counts = state.dish_topic[:K]
    out += float((gammaln(hp.zeta + counts).sum(axis=1)
                  - gammaln(hp.zeta).sum()
                  + gammaln(hp.zeta_sum)
                  - gammaln(hp.zeta_sum + counts.sum(axis=1))).sum())
    out += float((gammaln(hp.beta + state.topic_word).sum(axis=1)
                  - gammaln(hp.beta).sum()
                  + gammaln(hp.beta_sum)
                  - gammaln(hp.beta_sum + state.topic_total)).sum())
    return out


def run_chain(corpus: Corpus, hypers: HyperParams, config: ChainConfig,
              on_sweep: Optional[Callable[[int, CrfState], None]] = None
              ) -> Tuple[CrfState, ChainTrace]:
    """Run one chain to completion; returns the final state and trace.
    Deterministic for fixed (corpus, hypers, config)."""
    rng = make_rng(config.seed)
    state = init_state(corpus, hypers, rng)
    trace = ChainTrace()
    for it in range(1, config.max_iter + 1):
        gibbs_sweep(state, rng)
        trace.record(it, state, log_joint(state))
        if config.audit_every and it % config.audit_every == 0:
            report = state.audit()
            if not report:
                raise RuntimeError(f"audit failed at iteration {it}: {report}")
        if on_sweep is not None:
            on_sweep(it, state)
    return state, trace


def document_votes(state: CrfState, d: int) -> np.ndarray:
    """Token counts by dish for document d; shape (K,)."""
    votes = np.zeros(state.n_dishes, dtype=np.int64)
    for tt, k in enumerate(state.table_dish[d]):
        votes[k] += state.table_size[d][tt]
    return votes


def assign_documents(state: CrfState) -> np.ndarray:
    """Map each document to the dish generating most of its tokens.

    Labeled documents keep their clamp. Ties break toward the dish with
    more tables corpus-wide, then the smaller id; empty documents take
    the globally most popular dish.
    """
    K = state.n_dishes
    m = state.dish_tables[:K]
    # lexicographic argmax: votes, then m_k, then -id
    def best(votes):
        order = sorted(range(K), key=lambda k: (-votes[k], -m[k], k))
        return order[0]

    global_top = best(np.zeros(K, dtype=np.int64))
    out = np.empty(state.n_docs, dtype=np.int64)
    for d in range(state.n_docs):
        if state.clamps[d] >= 0:
            out[d] = state.clamps[d]
        elif state.doc_length(d) == 0:
            out[d] = global_top
        else:
            out[d] = best(document_votes(state, d))
    return out
