"""Pseudo-labelling, consensus filtering and ensembling for suicide-risk text classification."""

__version__ = "0.1.0"

from .annotator import (
    AnnotationPolicy,
    Annotator,
    annotate_post,
    parse_answer_triple,
    parse_moveon,
    refine_attempt,
    triple_to_label,
)
from .consensus import ConsensusReport, assemble_training_set, unanimous_filter
from .datasplit import Dataset, FoldAssignment, WhitespaceTokenizer, ingest, stratified_folds, truncate_middle
from .domain import AnswerTriple, Annotation, Post, ProbabilityVector, RiskLevel, YesNo, severity_rank
from .ensemble import EnsembleConfig, argmax_class, cv_average, weighted_vote
from .gateway import CompletionResult, DecodingConfig, LLMClient
from .metrics import MetricsReport, agreement_matrix, evaluate
from .prompts import PromptTemplate, render_classification_prompt, render_moveon_prompt
