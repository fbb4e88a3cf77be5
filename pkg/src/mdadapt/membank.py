"""FIFO memory bank of domain-tagged key embeddings.

Enlarges the negative pool beyond the current mini-batch, compensating for
the smaller per-anchor pool that in-domain negative sampling leaves. Entries
are detached copies: they never receive or emit gradients, and the stored
arrays are write-protected to make accidental mutation loud.

The bank is transient training state and is not checkpointed.
"""

from __future__ import annotations

from collections import deque
from typing import Iterable

import numpy as np

from .exceptions import ConfigError, ShapeError

BANK_NEGATIVE_MODES = ("all", "in_domain")


class MemoryBank:
    """Bounded FIFO queue of (embedding, domain_id) pairs."""

    def __init__(self, capacity: int, embed_dim: int):
        if capacity < 1:
            raise ConfigError(f"bank capacity must be >= 1, got {capacity}")
        if embed_dim < 1:
            raise ConfigError(f"embed_dim must be >= 1, got {embed_dim}")
        self.capacity = int(capacity)
        self.embed_dim = int(embed_dim)
        self._entries: deque[tuple[np.ndarray, str]] = deque()
        self._by_domain: dict[str, deque[np.ndarray]] = {}

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def fill(self) -> int:
        return len(self._entries)

    def enqueue(self, embeddings: Iterable[tuple[np.ndarray, str]]) -> None:
        """Append entries in order, evicting from the front beyond capacity.

        Each embedding is copied and frozen on the way in (detached from
        whatever produced it).

        Raises:
            ShapeError: an embedding does not have length embed_dim.
        """
        for vec, domain in embeddings:
            arr = np.array(vec, dtype=np.float64, copy=True)
            if arr.shape != (self.embed_dim,):
                raise ShapeError(
                    f"bank stores {self.embed_dim}-dim embeddings, got shape {arr.shape}"
                )
            arr.setflags(write=False)
            self._entries.append((arr, domain))
            self._by_domain.setdefault(domain, deque()).append(arr)
            if len(self._entries) > self.capacity:
                old_vec, old_domain = self._entries.popleft()
                dq = self._by_domain[old_domain]
                dq.popleft()
                if not dq:
                    del self._by_domain[old_domain]

    def negatives(self, domain_id: str | None = None, mode: str = "all") -> list[np.ndarray]:
        """Bank entries usable as negatives, in FIFO order.

        all: every entry. in_domain: entries tagged with domain_id.
        """
        if mode not in BANK_NEGATIVE_MODES:
            raise ConfigError(f"unknown bank negatives mode {mode!r}")
        if mode == "all":
            return [vec for vec, _ in self._entries]
        if domain_id is None:
            raise ConfigError("in_domain bank negatives need a domain_id")
        return list(self._by_domain.get(domain_id, ()))

    def domains(self) -> list[str]:
        return sorted(self._by_domain)
