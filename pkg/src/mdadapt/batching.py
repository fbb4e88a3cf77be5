"""Mini-batch assembly with domain-stratified composition.

Batches carry a partition of item indices by domain label so the contrastive
loss can restrict negatives to the anchor's domain and the alignment loss can
form per-domain covariances. Every represented domain gets at least
min_per_domain items (default 2: covariance needs two samples and every
anchor needs at least one in-domain negative).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import Corpus, Utterance, augment, sample_views
from .encoder import Segment
from .exceptions import ConfigError, InfeasibleBatchError

SAMPLING_MODES = ("single_domain", "in_domain")


@dataclass(frozen=True)
class BatchItem:
    """One utterance's two augmented views; view 1 queries, view 2 keys."""

    query_view: Segment
    key_view: Segment
    utterance_id: str
    domain_id: str


@dataclass(frozen=True)
class MiniBatch:
    items: tuple[BatchItem, ...]
    domain_partition: dict[str, list[int]]

    def __post_init__(self):
        seen: list[int] = []
        for domain, indices in self.domain_partition.items():
            for i in indices:
                if not (0 <= i < len(self.items)):
                    raise ConfigError(f"partition index {i} out of range")
                if self.items[i].domain_id != domain:
                    raise ConfigError(f"item {i} is not in domain {domain}")
            seen.extend(indices)
        if sorted(seen) != list(range(len(self.items))):
            raise ConfigError("domain partition must cover all item indices exactly once")

    def __len__(self) -> int:
        return len(self.items)

    def domain_of(self, index: int) -> str:
        return self.items[index].domain_id


def partition_by_domain(domains: list[str]) -> dict[str, list[int]]:
    """Index partition of a domain-label sequence, keys in first-seen order."""
    part: dict[str, list[int]] = {}
    for i, d in enumerate(domains):
        part.setdefault(d, []).append(i)
    return part


def build_batch(
    corpus: Corpus | list[Utterance],
    batch_size: int,
    min_per_domain: int = 2,
    min_len: int = 10,
    rng: np.random.Generator | None = None,
    gain_range: tuple[float, float] = (0.9, 1.1),
    noise_scale: float = 0.05,
) -> MiniBatch:
    """Sample a stratified batch of paired views.

    Utterances are drawn without replacement. Only domains with at least
    min_per_domain eligible utterances (>= 2 * min_len frames) participate;
    as many domains are represented as the batch size allows, each with at
    least min_per_domain items.

    Args:
        corpus: a Corpus (its dev split is used) or an explicit utterance list.

    Raises:
        InfeasibleBatchError: no domain composition can satisfy the request.
    """
    if rng is None:
        rng = np.random.default_rng()
    if isinstance(corpus, Corpus):
        pool = corpus.split("dev")
    else:
        pool = list(corpus)
    if batch_size < 2:
        raise InfeasibleBatchError("batch_size must be >= 2")
    if min_per_domain < 1:
        raise InfeasibleBatchError("min_per_domain must be >= 1")

    eligible: dict[str, list[Utterance]] = {}
    for u in pool:
        if u.num_frames >= 2 * min_len:
            eligible.setdefault(u.domain_id, []).append(u)
    candidates = sorted(d for d, us in eligible.items() if len(us) >= min_per_domain)
    if not candidates:
        raise InfeasibleBatchError(
            f"no domain has {min_per_domain} utterances with >= {2 * min_len} frames"
        )
    num_domains = min(len(candidates), batch_size // min_per_domain)
    if num_domains < 1:
        raise InfeasibleBatchError(
            f"batch_size {batch_size} cannot host {min_per_domain} items of any domain"
        )
    chosen_idx = rng.choice(len(candidates), size=num_domains, replace=False)
    chosen = [candidates[i] for i in sorted(chosen_idx.tolist())]
    if sum(len(eligible[d]) for d in chosen) < batch_size:
        raise InfeasibleBatchError(
            f"domains {chosen} hold too few eligible utterances for batch_size {batch_size}"
        )

    picked: list[Utterance] = []
    rest: list[Utterance] = []
    for d in chosen:
        us = eligible[d]
        take = rng.choice(len(us), size=min_per_domain, replace=False)
        take_set = set(take.tolist())
        picked.extend(us[i] for i in sorted(take_set))
        rest.extend(us[i] for i in range(len(us)) if i not in take_set)
    extra = batch_size - len(picked)
    if extra > 0:
        take = rng.choice(len(rest), size=extra, replace=False)
        picked.extend(rest[i] for i in sorted(take.tolist()))

    order = rng.permutation(len(picked))
    items = []
    for i in order.tolist():
        u = picked[i]
        view1, view2 = sample_views(u, min_len, rng)
        query = augment(view1, gain_range, noise_scale, rng)
        key = augment(view2, gain_range, noise_scale, rng)
        items.append(
            BatchItem(
                query_view=query,
                key_view=key,
                utterance_id=u.id,
                domain_id=u.domain_id,
            )
        )
    partition = partition_by_domain([it.domain_id for it in items])
    return MiniBatch(items=tuple(items), domain_partition=partition)


def negatives_for(batch: MiniBatch, anchor_index: int, mode: str) -> list[int]:
    """In-batch negative indices for an anchor.

    single_domain: every other item. in_domain: every other item sharing the
    anchor's domain label.
    """
    if mode not in SAMPLING_MODES:
        raise ConfigError(f"unknown sampling mode {mode!r}")
    if not (0 <= anchor_index < len(batch)):
        raise ConfigError(f"anchor index {anchor_index} out of range")
    if mode == "single_domain":
        return [j for j in range(len(batch)) if j != anchor_index]
    domain = batch.domain_of(anchor_index)
    return [j for j in batch.domain_partition[domain] if j != anchor_index]
