"""Zero-shot evaluation toolkit for spoken language models.

Four metrics over externally produced features, unit sequences or score
tables: phonetic ABX discriminability, spot-the-word accuracy,
acceptability accuracy, and semantic similarity; plus the supporting
machinery (k-means unit discovery, n-gram controls, pseudo-probability
scoring and the pair-balancing sampler).
"""

__version__ = "0.1.0"

from .abx import AbxCategory, AbxResult, abx_evaluate, asymmetric_abx, one_hot_encode, symmetrized_cell
from .distance import KERNEL_BACKEND, angular_frame_distance, dtw_distance, kl_frame_distance
from .errors import FormatError, ValidationError
from .metrics import paired_accuracy, pool, semantic_distance, similarity_score, spearman
from .quantizer import Codebook, kmeans_fit, quantize, read_codebook, write_codebook
from .sampler import Assignment, CandidateSet, balance_objective, sample_sentence_pairs, sample_word_pairs
from .scoring import NgramModel, SpanConfig, chain_rule_logprob, ngram_train, span_pseudo_logprob
from .types import FeatureSequence, MetricReport, ScoredPair, SimilarityRecord, TriphoneToken, UnitSequence

__all__ = [name for name in dir() if not name.startswith("_")]
