"""The adaptation loop: batching, encoding, loss, update, bank maintenance.

One step does, in order: encode queries with the trainable parameters and
keys with the momentum copy (or the trainable parameters in baseline mode),
evaluate the combined loss, backpropagate the vector gradients into the
trainable parameters only, take a plain SGD step, move the momentum copy,
and finally enqueue the keys into the memory bank. Keys and bank entries are
constants to the gradient: only the query path (plus the key path in
baseline mode, where both views share parameters) reaches the update.

Plain SGD with a fixed learning rate keeps every run deterministic and every
gradient finite-difference-checkable.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .batching import MiniBatch, build_batch
from .datasets import Corpus, Utterance, augment, combine_short, sample_views
from .encoder import (
    EncoderParams,
    add_scaled,
    encode,
    encode_grad,
    init_params,
    momentum_update,
    params_to_vector,
    save_params,
    zeros_like,
)
from .exceptions import ConfigError, InfeasibleBatchError, NonFiniteLossError
from .losses import LossConfig, combined_loss
from .membank import MemoryBank

LOG_CSV_HEADER = ("step", "total", "cl", "coral", "bank_fill", "grad_norm")

# Warm-start stage defaults (supervised-contrastive pretraining on the
# single-domain source corpus; batch_size counts speakers there).
DEFAULT_WARM_STEPS = 300
DEFAULT_WARM_SPEAKERS = 16

# Ablation ladder, one preset per rung: single-domain contrastive baseline,
# + momentum encoder/bank, in-domain negatives alone, + bank, + alignment.
PRESETS: dict[str, dict] = {
    "ssl_sd": dict(sampling_mode="single_domain", use_bank=False, use_coral=False),
    "ssl_sd_moco": dict(
        sampling_mode="single_domain", use_bank=True, bank_negatives="all", use_coral=False
    ),
    "idns": dict(sampling_mode="in_domain", use_bank=False, use_coral=False),
    "idns_moco": dict(
        sampling_mode="in_domain", use_bank=True, bank_negatives="in_domain", use_coral=False
    ),
    "full_md": dict(
        sampling_mode="in_domain", use_bank=True, bank_negatives="in_domain", use_coral=True
    ),
}


def preset_loss_config(name: str, base: LossConfig | None = None) -> LossConfig:
    """LossConfig for a named ablation preset, keeping base tau/weight."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    base = base if base is not None else LossConfig()
    return replace(base, **PRESETS[name])


@dataclass(frozen=True)
class TrainConfig:
    """Everything one adaptation run needs besides the corpus.

    Defaults are the desk-scale benchmark operating point: 200 SGD steps at
    a fixed 0.5 learning rate over stratified batches of 32, momentum 0.999
    for the key encoder, bank capacity 512, and a 8->32->16 encoder.
    """

    steps: int = 200
    batch_size: int = 32
    learning_rate: float = 0.5
    momentum: float = 0.999
    bank_capacity: int = 512
    hidden_dim: int = 32
    embed_dim: int = 16
    min_per_domain: int = 3
    view_min_len: int = 10
    min_frames: int = 20
    gain_low: float = 0.9
    gain_high: float = 1.1
    augment_noise_scale: float = 0.05
    rng_seed: int = 0
    checkpoint_every: int = 0
    eval_every: int = 0
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError("momentum must be in [0, 1)")
        if self.bank_capacity < 1:
            raise ConfigError("bank_capacity must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if min(self.hidden_dim, self.embed_dim, self.view_min_len, self.min_frames) < 1:
            raise ConfigError("dims, view_min_len and min_frames must be >= 1")
        if self.min_per_domain < 1:
            raise ConfigError("min_per_domain must be >= 1")
        if not (0 < self.gain_low <= self.gain_high):
            raise ConfigError("need 0 < gain_low <= gain_high")
        if self.augment_noise_scale < 0:
            raise ConfigError("augment_noise_scale must be >= 0")
        if self.checkpoint_every < 0 or self.eval_every < 0:
            raise ConfigError("checkpoint_every and eval_every must be >= 0")


@dataclass
class TrainState:
    params: EncoderParams
    key_params: EncoderParams
    bank: MemoryBank
    rng: np.random.Generator
    step: int = 0


@dataclass(frozen=True)
class LogRecord:
    step: int
    total: float
    contrastive: float
    coral: float
    bank_fill: int
    grad_norm: float


@dataclass
class TrainLog:
    records: list[LogRecord] = field(default_factory=list)

    def append(self, rec: LogRecord) -> None:
        if self.records and rec.step <= self.records[-1].step:
            raise ConfigError("log steps must be strictly increasing")
        self.records.append(rec)

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(LOG_CSV_HEADER)
        for r in self.records:
            writer.writerow(
                [r.step, repr(r.total), repr(r.contrastive), repr(r.coral), r.bank_fill, repr(r.grad_norm)]
            )
        return out.getvalue()

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.to_csv())


def init_state(
    config: TrainConfig, input_dim: int, init: EncoderParams | None = None
) -> TrainState:
    """Fresh training state; the momentum copy starts as an exact clone.

    Args:
        init: optional warm-start parameters (e.g. from pretrain_supervised);
            random initialization otherwise.
    """
    rng = np.random.default_rng(config.rng_seed)
    params = init_params(input_dim, config.hidden_dim, config.embed_dim, rng)
    if init is not None:
        if init.input_dim != input_dim:
            raise ConfigError(
                f"warm-start encoder expects {init.input_dim}-dim frames, corpus has {input_dim}"
            )
        params = init
    return TrainState(
        params=params,
        key_params=replace(params),
        bank=MemoryBank(config.bank_capacity, config.embed_dim),
        rng=rng,
    )


def train_step(state: TrainState, batch: MiniBatch, config: TrainConfig) -> LogRecord:
    """Run one adaptation step in place; returns the log record.

    The memory bank only feeds the loss once it holds at least batch_size
    entries (warm-up), so early denominators are never dominated by a
    near-empty pool.

    Raises:
        NonFiniteLossError: loss or gradients went NaN/Inf; state is left
            unmodified for post-mortem inspection.
    """
    cfg = config.loss
    moco = cfg.use_bank
    queries = np.array([encode(state.params, it.query_view) for it in batch.items])
    key_encoder = state.key_params if moco else state.params
    keys = np.array([encode(key_encoder, it.key_view) for it in batch.items])
    if not (np.all(np.isfinite(queries)) and np.all(np.isfinite(keys))):
        raise NonFiniteLossError(
            f"step {state.step}: encoder produced non-finite embeddings"
        )

    bank_ready = moco and len(state.bank) >= config.batch_size
    loss_value, grad_q, grad_k = combined_loss(
        queries, keys, batch, cfg, state.bank if bank_ready else None
    )
    if not np.isfinite(loss_value.total):
        raise NonFiniteLossError(
            f"step {state.step}: non-finite loss {loss_value} "
            f"(bank_fill={len(state.bank)})"
        )

    grad = zeros_like(state.params)
    for i, item in enumerate(batch.items):
        grad = add_scaled(grad, encode_grad(state.params, item.query_view, grad_q[i]), 1.0)
        if not moco:
            grad = add_scaled(grad, encode_grad(state.params, item.key_view, grad_k[i]), 1.0)
    grad_norm = float(np.linalg.norm(params_to_vector(grad)))
    if not np.isfinite(grad_norm):
        raise NonFiniteLossError(f"step {state.step}: non-finite gradient norm")

    state.params = add_scaled(state.params, grad, -config.learning_rate)
    state.key_params = momentum_update(state.key_params, state.params, config.momentum)
    if moco:
        state.bank.enqueue((keys[i], it.domain_id) for i, it in enumerate(batch.items))
    state.step += 1
    return LogRecord(
        step=state.step,
        total=loss_value.total,
        contrastive=loss_value.contrastive,
        coral=loss_value.coral,
        bank_fill=len(state.bank),
        grad_norm=grad_norm,
    )


def run(
    config: TrainConfig,
    corpus: Corpus | list[Utterance],
    out_dir=None,
    eval_fn=None,
    init: EncoderParams | None = None,
) -> tuple[EncoderParams, TrainLog]:
    """Execute a full adaptation run; deterministic under the config seed.

    Args:
        corpus: training data; a Corpus contributes its dev split, after
            short-utterance combination.
        out_dir: if set and checkpoint_every > 0, periodic checkpoints are
            written there as step-numbered files plus `final.ckpt`.
        eval_fn: optional callback (state, step) invoked every eval_every
            steps; results are the caller's business (kept out of the log
            schema).
        init: optional warm-start encoder parameters.
    """
    if isinstance(corpus, Corpus):
        pool = corpus.split("dev")
        if not pool:
            raise ConfigError("corpus dev split is empty")
    else:
        pool = list(corpus)
        if not pool:
            raise ConfigError("no training utterances")
    pool = combine_short(pool, config.min_frames)
    if not pool:
        raise ConfigError(f"no utterance reaches min_frames={config.min_frames}")

    state = init_state(config, input_dim=pool[0].feature_dim, init=init)
    log = TrainLog()
    for _ in range(config.steps):
        batch = build_batch(
            pool,
            batch_size=config.batch_size,
            min_per_domain=config.min_per_domain,
            min_len=config.view_min_len,
            rng=state.rng,
            gain_range=(config.gain_low, config.gain_high),
            noise_scale=config.augment_noise_scale,
        )
        log.append(train_step(state, batch, config))
        if out_dir is not None and config.checkpoint_every > 0:
            if state.step % config.checkpoint_every == 0:
                save_params(state.params, f"{out_dir}/step{state.step:06d}.ckpt")
        if eval_fn is not None and config.eval_every > 0:
            if state.step % config.eval_every == 0:
                eval_fn(state, state.step)
    if out_dir is not None:
        save_params(state.params, f"{out_dir}/final.ckpt")
    return state.params, log


def pretrain_supervised(
    config: TrainConfig, corpus: Corpus | list[Utterance]
) -> EncoderParams:
    """Supervised-contrastive warm start on a (single-domain) source corpus.

    Stands in for the labeled source-domain stage the adapted model comes
    from: positives are views of two different utterances of one speaker,
    negatives are all other speakers in the batch, both views share the
    trainable parameters and both receive gradients. batch_size counts
    speakers here.
    """
    pool_list = corpus.split("dev") if isinstance(corpus, Corpus) else list(corpus)
    pool_list = combine_short(pool_list, config.min_frames)
    by_speaker: dict[str, list[Utterance]] = {}
    for u in pool_list:
        if u.num_frames >= 2 * config.view_min_len:
            by_speaker.setdefault(u.speaker_id, []).append(u)
    speakers = sorted(s for s, us in by_speaker.items() if len(us) >= 2)
    if len(speakers) < 2:
        raise InfeasibleBatchError("source corpus needs >= 2 speakers with >= 2 usable utterances")
    per_batch = min(config.batch_size, len(speakers))

    rng = np.random.default_rng(config.rng_seed)
    params = init_params(
        pool_list[0].feature_dim, config.hidden_dim, config.embed_dim, rng
    )
    loss_cfg = replace(
        config.loss, sampling_mode="single_domain", use_bank=False, use_coral=False
    )
    gain_range = (config.gain_low, config.gain_high)
    for step in range(config.steps):
        chosen = rng.choice(len(speakers), size=per_batch, replace=False)
        segs_q, segs_k = [], []
        for si in sorted(chosen.tolist()):
            us = by_speaker[speakers[si]]
            a, b = rng.choice(len(us), size=2, replace=False).tolist()
            view_a, _ = sample_views(us[a], config.view_min_len, rng)
            view_b, _ = sample_views(us[b], config.view_min_len, rng)
            segs_q.append(augment(view_a, gain_range, config.augment_noise_scale, rng))
            segs_k.append(augment(view_b, gain_range, config.augment_noise_scale, rng))
        queries = np.array([encode(params, s) for s in segs_q])
        keys = np.array([encode(params, s) for s in segs_k])
        partition = {"source": list(range(per_batch))}
        loss_value, grad_q, grad_k = combined_loss(queries, keys, partition, loss_cfg)
        if not np.isfinite(loss_value.total):
            raise NonFiniteLossError(f"pretrain step {step}: non-finite loss")
        grad = zeros_like(params)
        for i in range(per_batch):
            grad = add_scaled(grad, encode_grad(params, segs_q[i], grad_q[i]), 1.0)
            grad = add_scaled(grad, encode_grad(params, segs_k[i], grad_k[i]), 1.0)
        params = add_scaled(params, grad, -config.learning_rate)
    return params
