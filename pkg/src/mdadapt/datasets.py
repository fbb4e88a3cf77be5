"""Synthetic multi-domain speaker corpus: generation, preprocessing, sampling.

The generative model keeps inter-speaker and inter-domain variation as two
separately dialed knobs, which is exactly the confound the in-domain negative
sampling strategy targets:

    speaker s        ~ N(0, speaker_scale^2 * I)
    domain shift     mu_g ~ N(0, domain_shift_scale^2 * I)
    domain transform A_g = I + domain_transform_scale * G,  G_ij ~ N(0, 1)
    frame            x = A_g @ s + mu_g + noise_scale * eps, eps ~ N(0, I)

Everything is deterministic given the spec's rng_seed, including the
dev/eval speaker split, so a corpus file can be regenerated bit-identically
from its header alone.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .encoder import Segment
from .exceptions import ConfigError, ShapeError, TooShortError
from .validation import as_matrix

CORPUS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Utterance:
    """A frame sequence with speaker and domain labels; the unit of sampling."""

    id: str
    speaker_id: str
    domain_id: str
    frames: np.ndarray  # (num_frames, feature_dim)

    def __post_init__(self):
        frames = as_matrix(self.frames, "frames")
        if frames.shape[0] < 1:
            raise ShapeError("utterance needs at least one frame")
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class CorpusSpec:
    """Knobs of the synthetic benchmark generator.

    A speaker appears in every domain; eval speakers are disjoint from dev
    speakers. All scales must be >= 0 and counts >= 1.
    """

    num_speakers: int = 50
    num_domains: int = 6
    utterances_per_speaker_per_domain: int = 6
    frames_per_utterance: tuple[int, int] = (24, 48)
    feature_dim: int = 8
    speaker_scale: float = 1.0
    domain_shift_scale: float = 1.5
    domain_transform_scale: float = 0.25
    noise_scale: float = 0.3
    eval_fraction: float = 0.2
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "frames_per_utterance", tuple(int(v) for v in self.frames_per_utterance)
        )
        lo, hi = self.frames_per_utterance
        if self.num_speakers < 1 or self.num_domains < 1:
            raise ConfigError("num_speakers and num_domains must be >= 1")
        if self.utterances_per_speaker_per_domain < 1:
            raise ConfigError("utterances_per_speaker_per_domain must be >= 1")
        if not (1 <= lo <= hi):
            raise ConfigError(f"frames_per_utterance must satisfy 1 <= min <= max, got {lo, hi}")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be >= 1")
        for name in ("speaker_scale", "domain_shift_scale", "domain_transform_scale", "noise_scale"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not (0.0 < self.eval_fraction < 1.0):
            raise ConfigError("eval_fraction must be in (0, 1)")


@dataclass
class Corpus:
    """A generated benchmark: utterances plus the speaker split tags."""

    spec: CorpusSpec
    utterances: list[Utterance]
    domain_names: list[str]
    dev_speakers: list[str]
    eval_speakers: list[str]

    def __post_init__(self):
        if set(self.dev_speakers) & set(self.eval_speakers):
            raise ConfigError("dev and eval speaker sets must be disjoint")

    def split(self, tag: str) -> list[Utterance]:
        """Utterances whose speaker belongs to the dev or eval split."""
        if tag not in ("dev", "eval"):
            raise ConfigError(f"unknown split {tag!r}")
        keep = set(self.dev_speakers if tag == "dev" else self.eval_speakers)
        return [u for u in self.utterances if u.speaker_id in keep]


def _speaker_name(i: int) -> str:
    return f"spk{i:04d}"


def _domain_name(g: int) -> str:
    return f"dom{g:02d}"


def generate(spec: CorpusSpec) -> Corpus:
    """Draw a corpus from the generative model, deterministically by seed.

    Draw order is part of the file format contract (regeneration from the
    header must be bit-identical): speaker vectors, then per-domain shift and
    transform, then the split permutation, then per-utterance frame counts
    and noise.
    """
    rng = np.random.default_rng(spec.rng_seed)
    dim = spec.feature_dim

    speakers = rng.normal(0.0, spec.speaker_scale, size=(spec.num_speakers, dim))
    shifts = []
    transforms = []
    for _ in range(spec.num_domains):
        shifts.append(rng.normal(0.0, spec.domain_shift_scale, size=dim))
        g = rng.normal(0.0, 1.0, size=(dim, dim))
        transforms.append(np.eye(dim) + spec.domain_transform_scale * g)

    order = rng.permutation(spec.num_speakers)
    n_eval = int(round(spec.num_speakers * spec.eval_fraction))
    n_eval = min(max(n_eval, 1), spec.num_speakers - 1)
    eval_idx = set(order[:n_eval].tolist())

    lo, hi = spec.frames_per_utterance
    utterances: list[Utterance] = []
    for si in range(spec.num_speakers):
        for gi in range(spec.num_domains):
            base = transforms[gi] @ speakers[si] + shifts[gi]
            for ui in range(spec.utterances_per_speaker_per_domain):
                num_frames = int(rng.integers(lo, hi + 1))
                eps = rng.normal(0.0, 1.0, size=(num_frames, dim))
                frames = base + spec.noise_scale * eps
                utterances.append(
                    Utterance(
                        id=f"{_speaker_name(si)}_{_domain_name(gi)}_utt{ui:03d}",
                        speaker_id=_speaker_name(si),
                        domain_id=_domain_name(gi),
                        frames=frames,
                    )
                )

    all_speakers = [_speaker_name(i) for i in range(spec.num_speakers)]
    eval_speakers = [s for i, s in enumerate(all_speakers) if i in eval_idx]
    dev_speakers = [s for i, s in enumerate(all_speakers) if i not in eval_idx]
    return Corpus(
        spec=spec,
        utterances=utterances,
        domain_names=[_domain_name(g) for g in range(spec.num_domains)],
        dev_speakers=dev_speakers,
        eval_speakers=eval_speakers,
    )


def combine_short(utts: Sequence[Utterance], min_frames: int) -> list[Utterance]:
    """Splice short utterances of one speaker within one domain.

    Greedy, in input order: utterances already >= min_frames pass through;
    shorter ones accumulate per (speaker, domain) buffer and are emitted as
    one spliced utterance as soon as the buffer reaches min_frames. Leftover
    buffers below min_frames are dropped. Utterances from different speakers
    or domains are never merged.
    """
    out: list[Utterance] = []
    buffers: dict[tuple[str, str], list[Utterance]] = {}
    for u in utts:
        if u.num_frames >= min_frames:
            out.append(u)
            continue
        key = (u.speaker_id, u.domain_id)
        buf = buffers.setdefault(key, [])
        buf.append(u)
        if sum(b.num_frames for b in buf) >= min_frames:
            out.append(
                Utterance(
                    id="+".join(b.id for b in buf),
                    speaker_id=u.speaker_id,
                    domain_id=u.domain_id,
                    frames=np.concatenate([b.frames for b in buf], axis=0),
                )
            )
            buffers[key] = []
    return out


def sample_views(
    u: Utterance, min_len: int, rng: np.random.Generator
) -> tuple[Segment, Segment]:
    """Two contiguous, non-overlapping spans of >= min_len frames each.

    A boundary is drawn first, then a span on each side, so a 2*min_len
    utterance yields exactly the forced split [0, min_len) / [min_len, end).

    Raises:
        TooShortError: fewer than 2 * min_len frames (combine_short first).
    """
    total = u.num_frames
    if total < 2 * min_len:
        raise TooShortError(
            f"utterance {u.id} has {total} frames, need >= {2 * min_len} for two views"
        )
    boundary = int(rng.integers(min_len, total - min_len + 1))
    len1 = int(rng.integers(min_len, boundary + 1))
    start1 = int(rng.integers(0, boundary - len1 + 1))
    right = total - boundary
    len2 = int(rng.integers(min_len, right + 1))
    start2 = boundary + int(rng.integers(0, right - len2 + 1))
    view1 = Segment(
        frames=u.frames[start1 : start1 + len1],
        source_utterance_id=u.id,
        domain_id=u.domain_id,
        frame_offset=start1,
    )
    view2 = Segment(
        frames=u.frames[start2 : start2 + len2],
        source_utterance_id=u.id,
        domain_id=u.domain_id,
        frame_offset=start2,
    )
    return view1, view2


def augment(
    s: Segment,
    gain_range: tuple[float, float],
    noise_scale: float,
    rng: np.random.Generator,
) -> Segment:
    """Feature-level augmentation: one random gain, then per-frame noise.

    Raises:
        ConfigError: gain range not positive or inverted.
    """
    lo, hi = gain_range
    if not (0 < lo <= hi):
        raise ConfigError(f"gain_range must satisfy 0 < low <= high, got {gain_range}")
    gain = float(rng.uniform(lo, hi))
    noise = rng.normal(0.0, 1.0, size=s.frames.shape) if noise_scale > 0 else 0.0
    return Segment(
        frames=gain * s.frames + noise_scale * noise,
        source_utterance_id=s.source_utterance_id,
        domain_id=s.domain_id,
        frame_offset=s.frame_offset,
    )


# ---------------------------------------------------------------------------
# Corpus file: JSON lines. First line is the header (spec + split + domains),
# then one line per utterance. Floats serialize via repr, so loading is an
# exact round trip and regeneration from the header alone reproduces the file
# byte for byte.
# ---------------------------------------------------------------------------


def _header_dict(corpus: Corpus) -> dict:
    spec = asdict(corpus.spec)
    spec["frames_per_utterance"] = list(spec["frames_per_utterance"])
    return {
        "format_version": CORPUS_FORMAT_VERSION,
        "spec": spec,
        "domain_names": corpus.domain_names,
        "dev_speakers": corpus.dev_speakers,
        "eval_speakers": corpus.eval_speakers,
    }


def header_line(corpus: Corpus) -> str:
    return json.dumps(_header_dict(corpus), sort_keys=True)


def header_hash(corpus: Corpus) -> str:
    """SHA-256 of the header line; pins the generator inputs in manifests."""
    return hashlib.sha256(header_line(corpus).encode("ascii")).hexdigest()


def dump_corpus(corpus: Corpus) -> str:
    lines = [header_line(corpus)]
    for u in corpus.utterances:
        lines.append(
            json.dumps(
                {
                    "id": u.id,
                    "speaker": u.speaker_id,
                    "domain": u.domain_id,
                    "frames": u.frames.tolist(),
                },
                sort_keys=True,
            )
        )
    return "\n".join(lines) + "\n"


def save_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dump_corpus(corpus))


def _spec_from_header(header: dict) -> CorpusSpec:
    spec = dict(header["spec"])
    spec["frames_per_utterance"] = tuple(spec["frames_per_utterance"])
    return CorpusSpec(**spec)


def load_corpus(path) -> Corpus:
    """Read a corpus file; validates the stored split against the body."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ConfigError(f"{path}: empty corpus file")
    header = json.loads(lines[0])
    if header.get("format_version") != CORPUS_FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported corpus format version")
    utterances = []
    for line in lines[1:]:
        if not line.strip():
            continue
        rec = json.loads(line)
        utterances.append(
            Utterance(
                id=rec["id"],
                speaker_id=rec["speaker"],
                domain_id=rec["domain"],
                frames=np.array(rec["frames"], dtype=np.float64),
            )
        )
    return Corpus(
        spec=_spec_from_header(header),
        utterances=utterances,
        domain_names=list(header["domain_names"]),
        dev_speakers=list(header["dev_speakers"]),
        eval_speakers=list(header["eval_speakers"]),
    )


def regenerate_from_header(path) -> Corpus:
    """Rebuild the corpus from the header's spec alone (must be bit-identical)."""
    with open(path, "r", encoding="ascii") as fh:
        header = json.loads(fh.readline())
    return generate(_spec_from_header(header))


SOURCE_SEED_OFFSET = 90001  # keeps source speakers distinct from every target seed


def benchmark_spec() -> CorpusSpec:
    """The default multi-domain benchmark corpus.

    Fewer speakers than the plain default raise the rate of same-speaker
    collisions among single-domain negatives (the confound the method
    removes), and a larger eval split steadies the error rates.
    """
    return CorpusSpec(num_speakers=36, eval_fraction=1.0 / 3.0)


def source_spec_for(spec: CorpusSpec) -> CorpusSpec:
    """Single-domain source-corpus spec matched to a target spec.

    The warm-start stage pretrains on this corpus: same feature space and
    noise level, one canonical domain (no shift, no transform), its own
    deterministic seed so source speakers never coincide with target ones.
    """
    return CorpusSpec(
        num_speakers=spec.num_speakers,
        num_domains=1,
        utterances_per_speaker_per_domain=(
            spec.utterances_per_speaker_per_domain * spec.num_domains
        ),
        frames_per_utterance=spec.frames_per_utterance,
        feature_dim=spec.feature_dim,
        speaker_scale=spec.speaker_scale,
        domain_shift_scale=0.0,
        domain_transform_scale=0.0,
        noise_scale=spec.noise_scale,
        eval_fraction=spec.eval_fraction,
        rng_seed=spec.rng_seed + SOURCE_SEED_OFFSET,
    )
