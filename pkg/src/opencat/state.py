"""Chinese-restaurant-franchise latent state with incremental count tables.

Tokens sit at tables within their document; each table serves a dish
(a document category) shared across the corpus; each token also carries
a topic index. All sufficient statistics are maintained incrementally:

* ``table_size[d][t]``   tokens at table t of document d (s_dt)
* ``table_dish[d][t]``   dish served at that table (k_dt)
* ``dish_tables[k]``     tables serving dish k across the corpus (m_k)
* ``dish_topic[k, l]``   tokens with dish k and topic l
* ``topic_word[l, w]``   tokens with topic l and word w

A dish or table that empties during a detach is kept as a pending slot
until the matching attach resolves it: re-attaching identically reuses
the slot (so detach/attach round-trips are bit-identical), while
attaching elsewhere compacts the slot by swap-with-last. Dishes
0..n_known-1 back the known categories and are never removed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

__all__ = ["HyperParams", "CrfState", "AuditReport", "NEW"]

# sentinel for "open a new table" / "create a new dish"
NEW = -1


@dataclass(frozen=True)
class HyperParams:
    """Fixed model inputs: topic count, Dirichlet priors, Gamma priors.

    ``b_gamma`` and ``b_alpha`` are SCALE parameters (density
    proportional to x^(a-1) exp(-x/b)).
    """

    n_topics: int
    zeta: np.ndarray   # (L,) base Dirichlet over topics, per category
    beta: np.ndarray   # (P,) Dirichlet prior over words, per topic
    a_gamma: float = 1.0
    b_gamma: float = 0.001
    a_alpha: float = 5.0
    b_alpha: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "zeta", np.asarray(self.zeta, dtype=np.float64))
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=np.float64))
        if self.n_topics < 2:
            raise ValueError("need at least 2 topics")
        if self.zeta.shape != (self.n_topics,):
            raise ValueError(f"zeta must have shape ({self.n_topics},)")
        if self.beta.ndim != 1 or len(self.beta) < 1:
            raise ValueError("beta must be a 1-D vector over the vocabulary")
        if np.any(self.zeta <= 0) or np.any(self.beta <= 0):
            raise ValueError("zeta and beta entries must be strictly positive")
        for name in ("a_gamma", "b_gamma", "a_alpha", "b_alpha"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        object.__setattr__(self, "zeta_sum", float(self.zeta.sum()))
        object.__setattr__(self, "beta_sum", float(self.beta.sum()))

    @classmethod
    def create(cls, n_topics: int, vocab_size: int, zeta: float = 1.0,
               beta: float = 0.01, **kw) -> "HyperParams":
        """Symmetric-prior constructor with the default settings."""
        return cls(
            n_topics=n_topics,
            zeta=np.full(n_topics, float(zeta)),
            beta=np.full(vocab_size, float(beta)),
            **kw,
        )

    @property
    def vocab_size(self) -> int:
        return len(self.beta)


@dataclass
class AuditReport:
    ok: bool
    problems: List[str] = field(default_factory=list)

    def __bool__(self):
        return self.ok

    def __str__(self):
        return "ok" if self.ok else "; ".join(self.problems)


class CrfState:
    """Mutable sampler state for one chain. Single-threaded ownership."""

    def __init__(self, words, hypers: HyperParams, gamma: float, alpha: float,
                 clamps=None, n_known: int = 0):
        if gamma <= 0 or alpha <= 0:
            raise ValueError("concentrations must be strictly positive")
        self.hypers = hypers
        self.words = [np.asarray(w, dtype=np.int64) for w in words]
        n_docs = len(self.words)
        self.table_of_token = [np.full(len(w), -1, dtype=np.int64) for w in self.words]
        self.topic_of_token = [np.full(len(w), -1, dtype=np.int64) for w in self.words]
        self.table_dish: List[List[int]] = [[] for _ in range(n_docs)]
        self.table_size: List[List[int]] = [[] for _ in range(n_docs)]
        self.gamma = float(gamma)
        self.alpha = float(alpha)
        self.n_known = n_known
        if clamps is None:
            self.clamps = np.full(n_docs, -1, dtype=np.int64)
        else:
            self.clamps = np.asarray(clamps, dtype=np.int64).copy()
            if len(self.clamps) != n_docs:
                raise ValueError("clamps length must equal document count")
            if np.any(self.clamps >= n_known):
                raise ValueError("clamp values must name known dishes")
        L = hypers.n_topics
        P = hypers.vocab_size
        self._cap = max(8, 2 * n_known)
        self.dish_topic = np.zeros((self._cap, L), dtype=np.int64)
        self.dish_total = np.zeros(self._cap, dtype=np.int64)
        self.dish_tables = np.zeros(self._cap, dtype=np.int64)
        self.n_dishes = n_known  # known dishes pre-seeded, never removed
        self.total_tables = 0
        self.topic_word = np.zeros((L, P), dtype=np.int64)
        self.topic_total = np.zeros(L, dtype=np.int64)
        self._empty_table: Optional[tuple] = None
        self._empty_dish: Optional[int] = None

    # -- basic accessors ------------------------------------------------

    @property
    def n_docs(self) -> int:
        return len(self.words)

    def doc_length(self, d: int) -> int:
        return len(self.words[d])

    def n_tables(self, d: int) -> int:
        return len(self.table_dish[d])

    def active_dish_count(self) -> int:
        """Dishes currently serving at least one table (known ones always count)."""
        k = self.n_dishes
        return int(np.count_nonzero(self.dish_tables[:k]) +
                   np.count_nonzero(self.dish_tables[:self.n_known] == 0))

    # -- slot management ------------------------------------------------

    def _grow_dishes(self):
        new_cap = self._cap * 2
        L = self.hypers.n_topics
        for name in ("dish_topic", "dish_total", "dish_tables"):
            old = getattr(self, name)
            shape = (new_cap, L) if old.ndim == 2 else (new_cap,)
            fresh = np.zeros(shape, dtype=np.int64)
            fresh[: self._cap] = old
            setattr(self, name, fresh)
        self._cap = new_cap

    def _take_dish_slot(self) -> int:
        if self._empty_dish is not None:
            k = self._empty_dish
            self._empty_dish = None
            return k
        if self.n_dishes == self._cap:
            self._grow_dishes()
        k = self.n_dishes
        self.n_dishes += 1
        return k

    def _remove_dish(self, k: int):
        """Compact dish k (must be empty, not a known dish) by swap-with-last."""
        last = self.n_dishes - 1
        if k != last:
            self.dish_topic[k] = self.dish_topic[last]
            self.dish_total[k] = self.dish_total[last]
            self.dish_tables[k] = self.dish_tables[last]
            for dishes in self.table_dish:
                for t, dish in enumerate(dishes):
                    if dish == last:
                        dishes[t] = k
        self.dish_topic[last] = 0
        self.dish_total[last] = 0
        self.dish_tables[last] = 0
        self.n_dishes = last

    def _remove_table(self, d: int, tt: int):
        """Compact empty table tt of document d by swap-with-last."""
        last = self.n_tables(d) - 1
        if tt != last:
            self.table_dish[d][tt] = self.table_dish[d][last]
            self.table_size[d][tt] = self.table_size[d][last]
            tok = self.table_of_token[d]
            tok[tok == last] = tt
        self.table_dish[d].pop()
        self.table_size[d].pop()

    def _resolve_pending(self):
        if self._empty_table is not None:
            d, tt = self._empty_table
            self._empty_table = None
            if self.table_size[d][tt] == 0:
                self._remove_table(d, tt)
        if self._empty_dish is not None:
            k = self._empty_dish
            self._empty_dish = None
            if self.dish_tables[k] == 0:
                self._remove_dish(k)

    # -- per-token detach / attach (table + topic + word counts) --------

    def detach_token(self, d: int, n: int):
        """Remove token (d, n) from all count tables; its topic stays known."""
        tt = int(self.table_of_token[d][n])
        if tt < 0:
            raise RuntimeError(f"token ({d},{n}) already detached")
        assert self._empty_table is None and self._empty_dish is None
        k = self.table_dish[d][tt]
        l = int(self.topic_of_token[d][n])
        w = int(self.words[d][n])
        self.table_of_token[d][n] = -1
        self.table_size[d][tt] -= 1
        self.dish_topic[k, l] -= 1
        self.dish_total[k] -= 1
        self.topic_word[l, w] -= 1
        self.topic_total[l] -= 1
        if self.table_size[d][tt] == 0:
            self.dish_tables[k] -= 1
            self.total_tables -= 1
            self._empty_table = (d, tt)
            if self.dish_tables[k] == 0 and k >= self.n_known:
                self._empty_dish = k

    def attach_token(self, d: int, n: int, table: int, dish_if_new: Optional[int],
                     topic: int):
        """Seat token (d, n); ``table=NEW`` opens a table, then
        ``dish_if_new`` picks its dish (``NEW`` creates one)."""
        if self.table_of_token[d][n] >= 0:
            raise RuntimeError(f"token ({d},{n}) already attached")
        if table == NEW:
            if dish_if_new == NEW:
                k = self._take_dish_slot()
            else:
                k = int(dish_if_new)
            if self.clamps[d] >= 0 and k != self.clamps[d]:
                raise ValueError(f"document {d} is clamped to dish {self.clamps[d]}, got {k}")
            if self._empty_table is not None and self._empty_table[0] == d:
                tt = self._empty_table[1]
                self._empty_table = None
                self.table_dish[d][tt] = k
            else:
                tt = self.n_tables(d)
                self.table_dish[d].append(k)
                self.table_size[d].append(0)
            self.dish_tables[k] += 1
            self.total_tables += 1
            if self._empty_dish == k:
                self._empty_dish = None
        else:
            tt = int(table)
            k = self.table_dish[d][tt]
        self.table_of_token[d][n] = tt
        self.table_size[d][tt] += 1
        self.topic_of_token[d][n] = topic
        self.dish_topic[k, topic] += 1
        self.dish_total[k] += 1
        self.topic_word[topic, self.words[d][n]] += 1
        self.topic_total[topic] += 1
        self._resolve_pending()

    # -- table-block detach / attach (dish counts only) ------------------

    def detach_table_block(self, d: int, tt: int) -> np.ndarray:
        """Remove table tt of document d from the dish tables; the table
        keeps its seat assignments. Returns the table's topic counts."""
        assert self._empty_table is None and self._empty_dish is None
        k = self.table_dish[d][tt]
        if k < 0:
            raise RuntimeError(f"table ({d},{tt}) already block-detached")
        mask = self.table_of_token[d] == tt
        counts = np.bincount(self.topic_of_token[d][mask], minlength=self.hypers.n_topics)
        self.dish_topic[k] -= counts
        self.dish_total[k] -= int(counts.sum())
        self.dish_tables[k] -= 1
        self.total_tables -= 1
        self.table_dish[d][tt] = -1
        if self.dish_tables[k] == 0 and k >= self.n_known:
            self._empty_dish = k
        return counts

    def attach_table_block(self, d: int, tt: int, dish: int, counts: np.ndarray):
        """Re-serve table tt with ``dish`` (``NEW`` creates a dish)."""
        if self.table_dish[d][tt] >= 0:
            raise RuntimeError(f"table ({d},{tt}) already attached")
        k = self._take_dish_slot() if dish == NEW else int(dish)
        if self.clamps[d] >= 0 and k != self.clamps[d]:
            raise ValueError(f"document {d} is clamped to dish {self.clamps[d]}, got {k}")
        self.table_dish[d][tt] = k
        self.dish_topic[k] += counts
        self.dish_total[k] += int(counts.sum())
        self.dish_tables[k] += 1
        self.total_tables += 1
        if self._empty_dish == k:
            self._empty_dish = None
        self._resolve_pending()

    # -- per-token topic detach / attach (dish-topic + topic-word) -------

    def detach_topic(self, d: int, n: int) -> int:
        """Remove token (d, n)'s topic from the count tables; returns it."""
        l = int(self.topic_of_token[d][n])
        k = self.table_dish[d][int(self.table_of_token[d][n])]
        w = int(self.words[d][n])
        self.dish_topic[k, l] -= 1
        self.dish_total[k] -= 1
        self.topic_word[l, w] -= 1
        self.topic_total[l] -= 1
        self.topic_of_token[d][n] = -1
        return l

    def attach_topic(self, d: int, n: int, topic: int):
        k = self.table_dish[d][int(self.table_of_token[d][n])]
        self.topic_of_token[d][n] = topic
        self.dish_topic[k, topic] += 1
        self.dish_total[k] += 1
        self.topic_word[topic, self.words[d][n]] += 1
        self.topic_total[topic] += 1

    # -- consistency -----------------------------------------------------

    def rebuild_counts(self):
        """Recompute every count table from (words, table_of_token,
        topic_of_token, table_dish). Used by audit and checkpoint load."""
        L = self.hypers.n_topics
        P = self.hypers.vocab_size
        dish_topic = np.zeros((self._cap, L), dtype=np.int64)
        dish_tables = np.zeros(self._cap, dtype=np.int64)
        topic_word = np.zeros((L, P), dtype=np.int64)
        table_size = [[0] * self.n_tables(d) for d in range(self.n_docs)]
        total_tables = 0
        for d in range(self.n_docs):
            for tt, k in enumerate(self.table_dish[d]):
                dish_tables[k] += 1
                total_tables += 1
            tok = self.table_of_token[d]
            top = self.topic_of_token[d]
            for n in range(self.doc_length(d)):
                tt, l, w = int(tok[n]), int(top[n]), int(self.words[d][n])
                table_size[d][tt] += 1
                dish_topic[self.table_dish[d][tt], l] += 1
                topic_word[l, w] += 1
        self.table_size = table_size
        self.dish_topic = dish_topic
        self.dish_total = dish_topic.sum(axis=1)
        self.dish_tables = dish_tables
        self.total_tables = total_tables
        self.topic_word = topic_word
        self.topic_total = topic_word.sum(axis=1)

    def audit(self) -> AuditReport:
        """Rebuild all counts from assignments and compare with the
        incremental tables; check every structural invariant."""
        problems = []
        if self._empty_table is not None or self._empty_dish is not None:
            problems.append("pending empty slot not resolved")
        K = self.n_dishes
        fresh = self.snapshot()
        fresh.rebuild_counts()
        for d in range(self.n_docs):
            if sum(self.table_size[d]) != self.doc_length(d):
                problems.append(f"doc {d}: table sizes sum to {sum(self.table_size[d])}, n_d={self.doc_length(d)}")
            if self.table_size[d] != fresh.table_size[d]:
                problems.append(f"doc {d}: incremental table sizes disagree with rebuild")
            for tt, s in enumerate(self.table_size[d]):
                if s < 1:
                    problems.append(f"doc {d} table {tt}: empty table not removed")
                k = self.table_dish[d][tt]
                if not (0 <= k < K):
                    problems.append(f"doc {d} table {tt}: dish id {k} out of range")
            if self.clamps[d] >= 0:
                bad = [t for t, k in enumerate(self.table_dish[d]) if k != self.clamps[d]]
                if bad:
                    problems.append(f"doc {d}: tables {bad} violate clamp {self.clamps[d]}")
        if not np.array_equal(self.dish_tables[:K], fresh.dish_tables[:K]):
            problems.append("dish table counts disagree with rebuild")
        if self.total_tables != fresh.total_tables:
            problems.append(f"total tables {self.total_tables} != rebuilt {fresh.total_tables}")
        diff = np.argwhere(self.dish_topic[:K] != fresh.dish_topic[:K])
        for k, l in diff[:5]:
            problems.append(
                f"dish_topic[{k},{l}]={self.dish_topic[k, l]} but rebuild gives {fresh.dish_topic[k, l]}")
        diff = np.argwhere(self.topic_word != fresh.topic_word)
        for l, w in diff[:5]:
            problems.append(
                f"topic_word[{l},{w}]={self.topic_word[l, w]} but rebuild gives {fresh.topic_word[l, w]}")
        if not np.array_equal(self.dish_total[:K], self.dish_topic[:K].sum(axis=1)):
            problems.append("dish_total rows inconsistent with dish_topic")
        if not np.array_equal(self.topic_total, self.topic_word.sum(axis=1)):
            problems.append("topic_total inconsistent with topic_word")
        total = sum(self.doc_length(d) for d in range(self.n_docs))
        if int(self.dish_total[:K].sum()) != total:
            problems.append(f"dish counts cover {int(self.dish_total[:K].sum())} tokens, corpus has {total}")
        if int(self.topic_total.sum()) != total:
            problems.append(f"topic counts cover {int(self.topic_total.sum())} tokens, corpus has {total}")
        for k in range(self.n_known, K):
            if self.dish_tables[k] < 1:
                problems.append(f"dish {k}: empty unknown dish not removed")
        if np.any(self.dish_topic[:K] < 0) or np.any(self.topic_word < 0):
            problems.append("negative counts present")
        if np.any(self.dish_topic[K:]) or np.any(self.dish_tables[K:]):
            problems.append("counts present beyond active dish range")
        return AuditReport(not problems, problems)

    # -- copying / checkpointing -----------------------------------------

    def snapshot(self) -> "CrfState":
        """Deep copy; safe to hand to another thread between sweeps."""
        other = CrfState.__new__(CrfState)
        other.hypers = self.hypers
        other.words = [w.copy() for w in self.words]
        other.table_of_token = [a.copy() for a in self.table_of_token]
        other.topic_of_token = [a.copy() for a in self.topic_of_token]
        other.table_dish = [list(x) for x in self.table_dish]
        other.table_size = [list(x) for x in self.table_size]
        other.gamma = self.gamma
        other.alpha = self.alpha
        other.n_known = self.n_known
        other.clamps = self.clamps.copy()
        other._cap = self._cap
        other.dish_topic = self.dish_topic.copy()
        other.dish_total = self.dish_total.copy()
        other.dish_tables = self.dish_tables.copy()
        other.n_dishes = self.n_dishes
        other.total_tables = self.total_tables
        other.topic_word = self.topic_word.copy()
        other.topic_total = self.topic_total.copy()
        other._empty_table = self._empty_table
        other._empty_dish = self._empty_dish
        return other

    def equals(self, other: "CrfState") -> bool:
        """Exact structural equality of assignments and counts."""
        K = self.n_dishes
        return (
            self.n_dishes == other.n_dishes
            and self.total_tables == other.total_tables
            and self.gamma == other.gamma
            and self.alpha == other.alpha
            and all(np.array_equal(a, b) for a, b in zip(self.table_of_token, other.table_of_token))
            and all(np.array_equal(a, b) for a, b in zip(self.topic_of_token, other.topic_of_token))
            and self.table_dish == other.table_dish
            and self.table_size == other.table_size
            and np.array_equal(self.dish_topic[:K], other.dish_topic[:K])
            and np.array_equal(self.dish_tables[:K], other.dish_tables[:K])
            and np.array_equal(self.topic_word, other.topic_word)
        )

    def save(self, path):
        """Checkpoint to a single .npz file; counts are rebuilt on load."""
        doc_offsets = np.cumsum([0] + [self.doc_length(d) for d in range(self.n_docs)])
        table_offsets = np.cumsum([0] + [self.n_tables(d) for d in range(self.n_docs)])
        header = json.dumps({
            "n_topics": self.hypers.n_topics,
            "a_gamma": self.hypers.a_gamma, "b_gamma": self.hypers.b_gamma,
            "a_alpha": self.hypers.a_alpha, "b_alpha": self.hypers.b_alpha,
            "gamma": self.gamma, "alpha": self.alpha,
            "n_known": self.n_known, "n_dishes": self.n_dishes,
        })
        np.savez(
            path,
            header=np.frombuffer(header.encode("utf-8"), dtype=np.uint8),
            zeta=self.hypers.zeta,
            beta=self.hypers.beta,
            clamps=self.clamps,
            doc_offsets=doc_offsets,
            table_offsets=table_offsets,
            words=np.concatenate(self.words) if self.n_docs else np.zeros(0, np.int64),
            table_of_token=np.concatenate(self.table_of_token),
            topic_of_token=np.concatenate(self.topic_of_token),
            table_dish=np.asarray([k for d in self.table_dish for k in d], dtype=np.int64),
        )

    @classmethod
    def load(cls, path) -> "CrfState":
        with np.load(path) as data:
            header = json.loads(bytes(data["header"]).decode("utf-8"))
            hypers = HyperParams(
                n_topics=header["n_topics"], zeta=data["zeta"], beta=data["beta"],
                a_gamma=header["a_gamma"], b_gamma=header["b_gamma"],
                a_alpha=header["a_alpha"], b_alpha=header["b_alpha"],
            )
            doc_off = data["doc_offsets"]
            tab_off = data["table_offsets"]
            words = [data["words"][a:b] for a, b in zip(doc_off[:-1], doc_off[1:])]
            state = cls(words, hypers, header["gamma"], header["alpha"],
                        clamps=data["clamps"], n_known=header["n_known"])
            state.table_of_token = [data["table_of_token"][a:b].copy()
                                    for a, b in zip(doc_off[:-1], doc_off[1:])]
            state.topic_of_token = [data["topic_of_token"][a:b].copy()
                                    for a, b in zip(doc_off[:-1], doc_off[1:])]
            flat = data["table_dish"]
            state.table_dish = [list(map(int, flat[a:b])) for a, b in zip(tab_off[:-1], tab_off[1:])]
            state.n_dishes = header["n_dishes"]
            while state._cap < state.n_dishes:
                state._grow_dishes()
        state.rebuild_counts()
        return state
