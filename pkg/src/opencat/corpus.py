"""Sparse bag-of-words corpus ingestion and evaluation splits.

File formats (all plain UTF-8 text):

* bow file: first line ``D P NNZ`` (document count, vocabulary size,
  number of entries), then NNZ lines ``doc_id word_id count`` with
  0-based ids, ``count >= 1`` and non-decreasing ``doc_id``.
* vocabulary sidecar (optional): one term per line, line i names word i.
* labels file: lines ``doc_id category_name`` for labeled documents.
* truth file: same shape as the labels file but covering every document.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

__all__ = [
    "CorpusFormatError",
    "Vocabulary",
    "Document",
    "Corpus",
    "load_corpus",
    "save_corpus",
    "ground_truth_partition",
]


class CorpusFormatError(ValueError):
    """Malformed corpus, labels or truth file."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


@dataclass(frozen=True)
class Vocabulary:
    terms: tuple

    def __post_init__(self):
        if len(self.terms) == 0:
            raise ValueError("vocabulary must contain at least one term")
        if len(set(self.terms)) != len(self.terms):
            raise ValueError("vocabulary terms must be distinct")

    @property
    def size(self) -> int:
        return len(self.terms)

    @classmethod
    def placeholder(cls, size: int) -> "Vocabulary":
        return cls(tuple(f"w{i}" for i in range(size)))


@dataclass(frozen=True)
class Document:
    doc_id: int
    tokens: np.ndarray  # word ids, length n_d >= 0
    label: Optional[int] = None

    @property
    def length(self) -> int:
        return len(self.tokens)

    def __eq__(self, other):
        if not isinstance(other, Document):
            return NotImplemented
        return (
            self.doc_id == other.doc_id
            and self.label == other.label
            and np.array_equal(self.tokens, other.tokens)
        )


@dataclass(frozen=True)
class Corpus:
    vocabulary: Vocabulary
    documents: tuple
    known_labels: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.documents) == 0:
            raise ValueError("corpus must contain at least one document")
        P = self.vocabulary.size
        n_known = len(self.known_labels)
        if sorted(self.known_labels.values()) != list(range(n_known)):
            raise ValueError("known label ids must be dense 0..|K|-1")
        for doc in self.documents:
            if doc.length and (doc.tokens.min() < 0 or doc.tokens.max() >= P):
                raise ValueError(f"document {doc.doc_id} has token id outside 0..{P - 1}")
            if doc.label is not None and doc.label not in range(n_known):
                raise ValueError(f"document {doc.doc_id} labeled with unknown id {doc.label}")

    @property
    def n_docs(self) -> int:
        return len(self.documents)

    @property
    def vocab_size(self) -> int:
        return self.vocabulary.size

    @property
    def n_known(self) -> int:
        return len(self.known_labels)

    @property
    def total_tokens(self) -> int:
        return sum(doc.length for doc in self.documents)

    def labeled_ids(self):
        return [d.doc_id for d in self.documents if d.label is not None]

    def unlabeled_ids(self):
        return [d.doc_id for d in self.documents if d.label is None]

    def __eq__(self, other):
        if not isinstance(other, Corpus):
            return NotImplemented
        return (
            self.vocabulary == other.vocabulary
            and dict(self.known_labels) == dict(other.known_labels)
            and len(self.documents) == len(other.documents)
            and all(a == b for a, b in zip(self.documents, other.documents))
        )


def _parse_header(path, line):
    parts = line.split()
    if len(parts) != 3:
        raise CorpusFormatError(path, 1, f"expected header 'D P NNZ', got {line!r}")
    try:
        n_docs, vocab_size, nnz = (int(p) for p in parts)
    except ValueError:
        raise CorpusFormatError(path, 1, f"non-integer header field in {line!r}") from None
    if n_docs < 1 or vocab_size < 1 or nnz < 0:
        raise CorpusFormatError(path, 1, f"header values out of range: {line!r}")
    return n_docs, vocab_size, nnz


def _read_labels_file(path, n_docs):
    """Parse 'doc_id category_name' lines; returns {doc_id: name}."""
    by_doc = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise CorpusFormatError(path, lineno, f"expected 'doc_id category_name', got {line!r}")
            try:
                doc_id = int(parts[0])
            except ValueError:
                raise CorpusFormatError(path, lineno, f"non-integer doc id {parts[0]!r}") from None
            if doc_id < 0 or doc_id >= n_docs:
                raise CorpusFormatError(path, lineno, f"doc id {doc_id} outside 0..{n_docs - 1}")
            if doc_id in by_doc:
                raise CorpusFormatError(path, lineno, f"duplicate doc id {doc_id}")
            by_doc[doc_id] = parts[1]
    return by_doc


def load_corpus(bow_path, labels_path=None, vocab_path=None) -> Corpus:
    """Read a bow file (plus optional labels / vocabulary sidecars).

    Documents listed in the labels file carry labels; all others are
    unlabeled. Known-category names get dense ids in sorted name order.
    """
    bow_path = Path(bow_path)
    with open(bow_path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        n_docs, vocab_size, nnz = _parse_header(bow_path, header.strip())
        tokens_by_doc = [[] for _ in range(n_docs)]
        last_doc = -1
        n_entries = 0
        lineno = 1
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise CorpusFormatError(bow_path, lineno, f"expected 'doc_id word_id count', got {line!r}")
            try:
                doc_id, word_id, count = (int(p) for p in parts)
            except ValueError:
                raise CorpusFormatError(bow_path, lineno, f"non-integer field in {line!r}") from None
            if doc_id < 0 or doc_id >= n_docs:
                raise CorpusFormatError(bow_path, lineno, f"doc id {doc_id} outside 0..{n_docs - 1}")
            if word_id < 0 or word_id >= vocab_size:
                raise CorpusFormatError(bow_path, lineno, f"word id {word_id} outside 0..{vocab_size - 1}")
            if count < 1:
                raise CorpusFormatError(bow_path, lineno, f"count must be >= 1, got {count}")
            if doc_id < last_doc:
                raise CorpusFormatError(bow_path, lineno, f"doc ids must be non-decreasing, got {doc_id} after {last_doc}")
            last_doc = doc_id
            tokens_by_doc[doc_id].extend([word_id] * count)
            n_entries += 1
        if n_entries != nnz:
            raise CorpusFormatError(bow_path, lineno if nnz else 1, f"header declares {nnz} entries, found {n_entries}")

    if vocab_path is not None:
        with open(vocab_path, "r", encoding="utf-8") as fh:
            terms = tuple(line.rstrip("\n") for line in fh if line.strip())
        if len(terms) != vocab_size:
            raise CorpusFormatError(vocab_path, len(terms), f"vocabulary has {len(terms)} terms, bow header declares {vocab_size}")
        vocab = Vocabulary(terms)
    else:
        vocab = Vocabulary.placeholder(vocab_size)

    label_names = {}
    known = {}
    if labels_path is not None:
        label_names = _read_labels_file(labels_path, n_docs)
        known = {name: i for i, name in enumerate(sorted(set(label_names.values())))}

    docs = []
    for doc_id in range(n_docs):
        label = known[label_names[doc_id]] if doc_id in label_names else None
        docs.append(Document(doc_id, np.asarray(tokens_by_doc[doc_id], dtype=np.int64), label))
    return Corpus(vocab, tuple(docs), known)


def save_corpus(corpus: Corpus, bow_path, labels_path=None, vocab_path=None):
    """Write a corpus back to the bow format (run-length encoded tokens)."""
    entries = []
    for doc in corpus.documents:
        run_word, run_len = None, 0
        for w in doc.tokens:
            if w == run_word:
                run_len += 1
            else:
                if run_word is not None:
                    entries.append((doc.doc_id, int(run_word), run_len))
                run_word, run_len = w, 1
        if run_word is not None:
            entries.append((doc.doc_id, int(run_word), run_len))
    with open(bow_path, "w", encoding="utf-8") as fh:
        fh.write(f"{corpus.n_docs} {corpus.vocab_size} {len(entries)}\n")
        for doc_id, word_id, count in entries:
            fh.write(f"{doc_id} {word_id} {count}\n")
    if labels_path is not None:
        id_to_name = {i: name for name, i in corpus.known_labels.items()}
        with open(labels_path, "w", encoding="utf-8") as fh:
            for doc in corpus.documents:
                if doc.label is not None:
                    fh.write(f"{doc.doc_id} {id_to_name[doc.label]}\n")
    if vocab_path is not None:
        with open(vocab_path, "w", encoding="utf-8") as fh:
            for term in corpus.vocabulary.terms:
                fh.write(term + "\n")


def ground_truth_partition(corpus: Corpus, truth_path) -> dict:
    """Read the ground-truth file into {doc_id: dense category id}.

    Known categories keep their corpus label ids 0..|K|-1; remaining
    truth categories get ids |K|.. in sorted name order. Every document
    must appear, and labeled documents must agree with their labels.
    """
    names = _read_labels_file(truth_path, corpus.n_docs)
    missing = [d for d in range(corpus.n_docs) if d not in names]
    if missing:
        raise CorpusFormatError(truth_path, 0, f"truth file missing doc ids {missing[:10]}")
    ids = dict(corpus.known_labels)
    for name in sorted(set(names.values()) - set(ids)):
        ids[name] = len(ids)
    truth = {}
    for doc in corpus.documents:
        cat = ids[names[doc.doc_id]]
        if doc.label is not None and cat != doc.label:
            raise CorpusFormatError(
                truth_path, 0,
                f"doc {doc.doc_id} labeled {doc.label} but truth says {names[doc.doc_id]!r} (id {cat})",
            )
        truth[doc.doc_id] = cat
    return truth


def save_truth(truth: Mapping[int, int], path, id_to_name=None):
    """Write {doc_id: category id} as a truth/labels-format file."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc_id in sorted(truth):
            cat = truth[doc_id]
            name = id_to_name[cat] if id_to_name else f"cat{cat}"
            fh.write(f"{doc_id} {name}\n")
