"""INI config files for corpus specs and training runs, plus run manifests.

Corpus spec files must list every field: the header of a corpus file doubles
as its regeneration recipe, so nothing may default silently. Train config
files may omit keys (defaults apply); unknown keys are always an error so a
typo cannot quietly fall back to a default.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .datasets import CorpusSpec
from .exceptions import ConfigError
from .losses import LossConfig
from .trainer import TrainConfig

_CORPUS_FIELDS = {
    "num_speakers": int,
    "num_domains": int,
    "utterances_per_speaker_per_domain": int,
    "frames_min": int,
    "frames_max": int,
    "feature_dim": int,
    "speaker_scale": float,
    "domain_shift_scale": float,
    "domain_transform_scale": float,
    "noise_scale": float,
    "eval_fraction": float,
    "rng_seed": int,
}

_TRAIN_FIELDS = {
    "steps": int,
    "batch_size": int,
    "learning_rate": float,
    "momentum": float,
    "bank_capacity": int,
    "hidden_dim": int,
    "embed_dim": int,
    "min_per_domain": int,
    "view_min_len": int,
    "min_frames": int,
    "gain_low": float,
    "gain_high": float,
    "augment_noise_scale": float,
    "rng_seed": int,
    "checkpoint_every": int,
    "eval_every": int,
}

_LOSS_FIELDS = {
    "tau": float,
    "coral_weight": float,
    "sampling_mode": str,
    "use_bank": bool,
    "bank_negatives": str,
    "use_coral": bool,
    "loss_form": str,
}


def _read_ini(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    return parser


def _convert(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            lowered = raw.strip().lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}") from exc


def _section_values(parser, section: str, fields: dict, require_all: bool) -> dict:
    if section not in parser:
        raise ConfigError(f"missing [{section}] section")
    out = {}
    seen = set()
    for key, raw in parser[section].items():
        if key not in fields:
            raise ConfigError(f"[{section}] unknown field {key!r}")
        out[key] = _convert(section, key, raw, fields[key])
        seen.add(key)
    if require_all:
        for key in fields:
            if key not in seen:
                raise ConfigError(f"[{section}] missing required field {key!r}")
    return out


def load_corpus_spec(path) -> CorpusSpec:
    """Parse a corpus spec file; every field is required."""
    values = _section_values(_read_ini(path), "corpus", _CORPUS_FIELDS, require_all=True)
    values["frames_per_utterance"] = (values.pop("frames_min"), values.pop("frames_max"))
    return CorpusSpec(**values)


def save_corpus_spec(spec: CorpusSpec, path) -> None:
    parser = configparser.ConfigParser()
    lo, hi = spec.frames_per_utterance
    parser["corpus"] = {
        "num_speakers": str(spec.num_speakers),
        "num_domains": str(spec.num_domains),
        "utterances_per_speaker_per_domain": str(spec.utterances_per_speaker_per_domain),
        "frames_min": str(lo),
        "frames_max": str(hi),
        "feature_dim": str(spec.feature_dim),
        "speaker_scale": repr(spec.speaker_scale),
        "domain_shift_scale": repr(spec.domain_shift_scale),
        "domain_transform_scale": repr(spec.domain_transform_scale),
        "noise_scale": repr(spec.noise_scale),
        "eval_fraction": repr(spec.eval_fraction),
        "rng_seed": str(spec.rng_seed),
    }
    with open(path, "w", encoding="ascii") as fh:
        parser.write(fh)


def load_train_config(path) -> TrainConfig:
    """Parse a train config file; omitted keys keep their defaults."""
    parser = _read_ini(path)
    train_values = _section_values(parser, "train", _TRAIN_FIELDS, require_all=False)
    loss_values = {}
    if "loss" in parser:
        loss_values = _section_values(parser, "loss", _LOSS_FIELDS, require_all=False)
    return TrainConfig(loss=LossConfig(**loss_values), **train_values)


def save_train_config(config: TrainConfig, path) -> None:
    parser = configparser.ConfigParser()
    train = {}
    for name in _TRAIN_FIELDS:
        value = getattr(config, name)
        train[name] = repr(value) if isinstance(value, float) else str(value)
    loss = {}
    for name in _LOSS_FIELDS:
        value = getattr(config.loss, name)
        loss[name] = repr(value) if isinstance(value, float) else str(value)
    parser["train"] = train
    parser["loss"] = loss
    with open(path, "w", encoding="ascii") as fh:
        parser.write(fh)


def config_snapshot(config: TrainConfig) -> dict:
    """JSON-safe dict of a TrainConfig (for manifests)."""
    snap = dataclasses.asdict(config)
    return snap


@dataclass
class RunManifest:
    """What a finished run consisted of, enough to reproduce it."""

    config: dict
    seed: int
    corpus_header_hash: str
    checkpoint_paths: list[str] = field(default_factory=list)
    metric_paths: list[str] = field(default_factory=list)
    created_at: str = ""

    def write(self, path) -> None:
        """Serialize to JSON; refuses to reference files that do not exist."""
        for ref in list(self.checkpoint_paths) + list(self.metric_paths):
            if not os.path.exists(ref):
                raise ConfigError(f"manifest references missing file {ref}")
        payload = dataclasses.asdict(self)
        if not payload["created_at"]:
            payload["created_at"] = datetime.now(timezone.utc).isoformat()
        with open(path, "w", encoding="ascii") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")


def load_manifest(path) -> RunManifest:
    with open(path, "r", encoding="ascii") as fh:
        payload = json.load(fh)
    return RunManifest(**payload)
