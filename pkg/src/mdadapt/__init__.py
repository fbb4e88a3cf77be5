"""Multi-domain self-supervised adaptation for embedding models.

Contrastive adaptation with in-domain negative sampling, a momentum-encoder
memory bank, and multi-domain covariance alignment, plus a full
verification-style evaluation protocol (EER, minDCF, domain-to-domain
matrix) on a synthetic multi-domain benchmark.
"""

from .adapter import ContrastiveDomainAdapter
from .batching import MiniBatch, build_batch, negatives_for
from .datasets import (
    Corpus,
    CorpusSpec,
    Utterance,
    augment,
    benchmark_spec,
    combine_short,
    generate,
    load_corpus,
    sample_views,
    save_corpus,
    source_spec_for,
)
from .encoder import (
    EncoderParams,
    Segment,
    encode,
    encode_grad,
    init_params,
    load_params,
    momentum_update,
    save_params,
)
from .losses import LossConfig, LossValue, combined_loss, contrastive_loss, coral_loss, sim
from .membank import MemoryBank
from .metrics import (
    DomainMatrix,
    ScoreRecord,
    Trial,
    build_trials,
    domain_matrix,
    eer,
    min_dcf,
    project_2d,
    score_trials,
)
from .numerics import (
    GradCheckReport,
    compare_gradients,
    cosine,
    covariance,
    finite_diff_grad,
    frobenius_sq,
)
from .trainer import (
    PRESETS,
    TrainConfig,
    TrainLog,
    preset_loss_config,
    pretrain_supervised,
    run,
    train_step,
)

__version__ = "0.1.0"

__all__ = [
    "ContrastiveDomainAdapter",
    "Corpus",
    "CorpusSpec",
    "DomainMatrix",
    "EncoderParams",
    "GradCheckReport",
    "LossConfig",
    "LossValue",
    "MemoryBank",
    "MiniBatch",
    "PRESETS",
    "ScoreRecord",
    "Segment",
    "TrainConfig",
    "TrainLog",
    "Trial",
    "Utterance",
    "augment",
    "benchmark_spec",
    "build_batch",
    "build_trials",
    "combine_short",
    "combined_loss",
    "compare_gradients",
    "contrastive_loss",
    "coral_loss",
    "cosine",
    "covariance",
    "domain_matrix",
    "eer",
    "encode",
    "encode_grad",
    "finite_diff_grad",
    "frobenius_sq",
    "generate",
    "init_params",
    "load_corpus",
    "load_params",
    "min_dcf",
    "momentum_update",
    "negatives_for",
    "preset_loss_config",
    "pretrain_supervised",
    "project_2d",
    "run",
    "sample_views",
    "save_corpus",
    "save_params",
    "score_trials",
    "sim",
    "source_spec_for",
    "train_step",
]
