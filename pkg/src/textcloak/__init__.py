"""textcloak: adversarial word-level perturbation of short texts to keep
attribute-inference classifiers from reading private traits out of them."""

from .candidates import (
    CandidatePool,
    WordCandidate,
    perturbation_subroutine,
    semantic_candidates,
    visual_candidates,
)
from .classifier import (
    BoeMlp,
    TextCnn,
    TrainConfig,
    adversarial_retrain,
    input_gradients,
    margin,
    predict,
    train,
)
from .corpus import (
    DatasetSplit,
    RawRecord,
    TokenizedDocument,
    Vocabulary,
    build_vocab,
    load_corpus,
    split,
    tokenize,
    tokenize_corpus,
)
from .embeddings import EmbeddingTable, load_embeddings
from .harness import MetricsReport, TransferMatrix, run_attack_batch, success_cdf, transfer_matrix
from .ngram import NgramModel, context_score, fit
from .optimizer import (
    AttackConfig,
    AttackOutcome,
    ImportanceProfile,
    adv4sg,
    choose_target,
    crossover,
    genetic_random,
    greedy_attack,
    run_attack,
    word_diff,
    word_importance,
)

__version__ = "0.1.0"
