"""Semi-supervised nonparametric topic model with open-set category
discovery: collapsed Gibbs inference over a Chinese-restaurant-franchise
state, a forward sampler for synthetic corpora, joint-distribution
correctness checks, and clustering/classification metrics."""

from .corpus import Corpus, CorpusFormatError, Document, Vocabulary, ground_truth_partition, load_corpus, save_corpus
from .state import NEW, AuditReport, CrfState, HyperParams
from .sampler import (
    ChainConfig,
    ChainTrace,
    assign_documents,
    gibbs_sweep,
    init_state,
    make_rng,
    run_chain,
)
from .generative import GenSpec, SyntheticCorpus, forward_sample, geweke_compare, geweke_marginal_run, geweke_successive_run, label_split
from .metrics import MetricReport, ari, average_f1, k_histogram, nmi

__version__ = "0.1.0"

__all__ = [
    "Corpus", "CorpusFormatError", "Document", "Vocabulary",
    "ground_truth_partition", "load_corpus", "save_corpus",
    "NEW", "AuditReport", "CrfState", "HyperParams",
    "ChainConfig", "ChainTrace", "assign_documents", "gibbs_sweep",
    "init_state", "make_rng", "run_chain",
    "GenSpec", "SyntheticCorpus", "forward_sample", "geweke_compare",
    "geweke_marginal_run", "geweke_successive_run", "label_split",
    "MetricReport", "ari", "average_f1", "k_histogram", "nmi",
]
