"""Scikit-learn style front door for the adaptation algorithm.

fit() adapts the encoder on an unlabeled multi-domain corpus; transform()
maps utterances (or raw frame matrices) to embedding vectors, so the adapter
slots into pipelines next to any other transformer.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .datasets import Corpus, Utterance
from .encoder import Segment, encode
from .exceptions import ConfigError
from .losses import LossConfig
from .trainer import TrainConfig, preset_loss_config, run
from .validation import as_matrix


def _as_utterances(X) -> list[Utterance]:
    """Accept a Corpus, a list of Utterance, or a list of frame matrices."""
    if isinstance(X, Corpus):
        return list(X.utterances)
    items = list(X)
    if not items:
        raise ConfigError("no input utterances")
    if isinstance(items[0], Utterance):
        return items
    out = []
    for i, frames in enumerate(items):
        out.append(
            Utterance(
                id=f"input{i:05d}",
                speaker_id=f"input{i:05d}",
                domain_id="input",
                frames=as_matrix(frames, f"X[{i}]"),
            )
        )
    return out


class ContrastiveDomainAdapter(BaseEstimator, TransformerMixin):
    """Self-supervised multi-domain adaptation of a frame-sequence encoder.

    Parameters mirror the training configuration; `preset` selects one rung
    of the ablation ladder (ssl_sd, ssl_sd_moco, idns, idns_moco, full_md)
    and the explicit loss knobs are applied on top of it.

    Attributes (after fit):
        encoder_: adapted encoder parameters.
        log_: per-step training log.
        n_features_in_: frame feature dimension seen during fit.

    Example:
        >>> corpus = generate(CorpusSpec(rng_seed=7))
        >>> adapter = ContrastiveDomainAdapter(steps=50).fit(corpus)
        >>> adapter.transform(corpus.split("eval")[:4]).shape
        (4, 16)
    """

    def __init__(
        self,
        preset: str = "full_md",
        steps: int = 200,
        batch_size: int = 32,
        learning_rate: float = 0.5,
        momentum: float = 0.999,
        bank_capacity: int = 512,
        hidden_dim: int = 32,
        embed_dim: int = 16,
        tau: float = 0.07,
        coral_weight: float = 1.0,
        min_per_domain: int = 3,
        view_min_len: int = 10,
        min_frames: int = 20,
        random_state: int = 0,
    ):
        self.preset = preset
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.bank_capacity = bank_capacity
        self.hidden_dim = hidden_dim
        self.embed_dim = embed_dim
        self.tau = tau
        self.coral_weight = coral_weight
        self.min_per_domain = min_per_domain
        self.view_min_len = view_min_len
        self.min_frames = min_frames
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        loss = preset_loss_config(
            self.preset, LossConfig(tau=self.tau, coral_weight=self.coral_weight)
        )
        return TrainConfig(
            steps=self.steps,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            bank_capacity=self.bank_capacity,
            hidden_dim=self.hidden_dim,
            embed_dim=self.embed_dim,
            min_per_domain=self.min_per_domain,
            view_min_len=self.view_min_len,
            min_frames=self.min_frames,
            rng_seed=self.random_state,
            loss=loss,
        )

    def fit(self, X, y=None):
        """Adapt the encoder on X (a Corpus, utterances, or frame matrices)."""
        utts = _as_utterances(X)
        corpus = X if isinstance(X, Corpus) else utts
        self.n_features_in_ = utts[0].feature_dim
        self.encoder_, self.log_ = run(self._train_config(), corpus)
        return self

    def transform(self, X) -> np.ndarray:
        """Embed each utterance (all its frames as one segment) to (n, d)."""
        if not hasattr(self, "encoder_"):
            raise NotFittedError("call fit before transform")
        utts = _as_utterances(X)
        embeddings = [
            encode(
                self.encoder_,
                Segment(frames=u.frames, source_utterance_id=u.id, domain_id=u.domain_id),
            )
            for u in utts
        ]
        return np.array(embeddings)
