"""Contrastive and covariance-alignment losses with analytic gradients.

The contrastive objective is the temperature-scaled softmax over cosine
similarities (InfoNCE): per anchor, the positive is the paired view of the
same utterance and the negatives are the other keys, restricted to the
anchor's domain in in_domain mode and optionally extended with memory-bank
entries. Everything runs in log space; with tau = 0.07 the scaled cosines
reach +-14.3 and raw exponentials are an overflow waiting to happen.

The alignment loss averages the squared Frobenius distance between unbiased
per-domain covariances over unordered domain pairs, scaled by 1/(4 d^2).

Gradients are hand-derived and returned at the embedding-vector level; the
trainer chains them into encoder parameters. Memory-bank entries enter the
softmax as constants only: they shape the anchor's gradient but never
receive one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .batching import SAMPLING_MODES, MiniBatch
from .exceptions import ConfigError, InfeasibleAnchorError, ShapeError
from .membank import BANK_NEGATIVE_MODES, MemoryBank
from .numerics import NORM_FLOOR, cosine
from .validation import as_rows

LOSS_FORMS = ("infonce", "verbatim")


@dataclass(frozen=True)
class LossConfig:
    """Objective configuration.

    tau: softmax temperature (> 0).
    coral_weight: balance weight of the alignment term (>= 0).
    sampling_mode: where in-batch negatives come from.
    use_bank: extend negatives with memory-bank entries (momentum-encoder
        keys); also the switch that makes the trainer encode keys with the
        momentum copy.
    bank_negatives: use every bank entry or only same-domain ones.
    use_coral: add the covariance-alignment term.
    loss_form: "infonce" is the trained objective; "verbatim" is the raw
        softmax-ratio form kept for inspection only (its minimizer repels
        positives, so it is never a default).
    """

    tau: float = 0.07
    coral_weight: float = 1.0
    sampling_mode: str = "in_domain"
    use_bank: bool = True
    bank_negatives: str = "in_domain"
    use_coral: bool = True
    loss_form: str = "infonce"

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if self.coral_weight < 0:
            raise ConfigError(f"coral_weight must be >= 0, got {self.coral_weight}")
        if self.sampling_mode not in SAMPLING_MODES:
            raise ConfigError(f"unknown sampling_mode {self.sampling_mode!r}")
        if self.bank_negatives not in BANK_NEGATIVE_MODES:
            raise ConfigError(f"unknown bank_negatives {self.bank_negatives!r}")
        if self.loss_form not in LOSS_FORMS:
            raise ConfigError(f"unknown loss_form {self.loss_form!r}")


@dataclass(frozen=True)
class LossValue:
    """Combined objective with its components (total = cl + weight * coral)."""

    total: float
    contrastive: float
    coral: float


def sim(x, y, tau: float) -> float:
    """exp(cos(x, y) / tau); the similarity kernel of the contrastive loss."""
    if not tau > 0:
        raise ConfigError(f"tau must be > 0, got {tau}")
    return float(np.exp(cosine(x, y) / tau))


def _norms(rows: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms <= NORM_FLOOR):
        bad = int(np.argmin(norms))
        raise ShapeError(f"{what}[{bad}] has near-zero norm; cannot score")
    return norms


def contrastive_loss(
    queries,
    keys,
    partition: dict[str, list[int]] | MiniBatch,
    cfg: LossConfig,
    bank: MemoryBank | None = None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Contrastive loss over paired views plus vector-level gradients.

    Args:
        queries: (N, d) anchor embeddings (view 1).
        keys: (N, d) paired embeddings (view 2); keys[i] is the positive
            for queries[i].
        partition: domain -> item indices (a MiniBatch is accepted too).
        bank: optional negative pool; its entries are treated as constants.

    Returns:
        (loss, grad_queries, grad_keys) with gradient arrays shaped like the
        inputs. Bank entries receive no gradient.

    Raises:
        InfeasibleAnchorError: some anchor has no negatives under cfg.
    """
    if isinstance(partition, MiniBatch):
        partition = partition.domain_partition
    q = as_rows(queries, name="queries")
    k = as_rows(keys, name="keys")
    if q.shape != k.shape:
        raise ShapeError(f"queries/keys shape mismatch: {q.shape} vs {k.shape}")
    n, dim = q.shape
    if n < 2:
        raise ShapeError(f"need at least 2 paired views, got {n}")
    domain_of = {}
    for domain, indices in partition.items():
        for i in indices:
            domain_of[i] = domain
    if sorted(domain_of) != list(range(n)):
        raise ShapeError("partition must cover all row indices exactly once")

    qn = _norms(q, "queries")
    kn = _norms(k, "keys")

    loss = 0.0
    grad_q = np.zeros_like(q)
    grad_k = np.zeros_like(k)
    inv_n = 1.0 / n
    for i in range(n):
        domain = domain_of[i]
        if cfg.sampling_mode == "in_domain":
            neg_idx = [j for j in partition[domain] if j != i]
        else:
            neg_idx = [j for j in range(n) if j != i]
        bank_vecs: list[np.ndarray] = []
        if cfg.use_bank and bank is not None:
            bank_vecs = bank.negatives(domain_id=domain, mode=cfg.bank_negatives)
        if not neg_idx and not bank_vecs:
            raise InfeasibleAnchorError(
                f"anchor {i} (domain {domain}) has no negatives under "
                f"sampling_mode={cfg.sampling_mode}"
            )

        cand_idx = [i] + neg_idx  # positive first
        cand = k[cand_idx]
        cand_norm = kn[cand_idx]
        if bank_vecs:
            bank_arr = np.asarray(bank_vecs)
            cand = np.vstack([cand, bank_arr])
            cand_norm = np.concatenate([cand_norm, _norms(bank_arr, "bank")])

        cos = np.clip(cand @ q[i] / (cand_norm * qn[i]), -1.0, 1.0)
        scores = cos / cfg.tau
        shift = scores.max()
        expw = np.exp(scores - shift)
        z = expw.sum()
        p = expw / z

        if cfg.loss_form == "infonce":
            loss += inv_n * (shift + np.log(z) - scores[0])
            coef = inv_n * p
            coef[0] -= inv_n
        else:
            loss += inv_n * p[0]
            coef = -inv_n * p[0] * p
            coef[0] += inv_n * p[0]

        # d cos(q, c_j) / dq = (c_j / |c_j| - cos_j * q / |q|) / |q|
        w = coef / cfg.tau
        grad_q[i] += (
            (w / cand_norm) @ cand - float(w @ cos) * q[i] / qn[i]
        ) / qn[i]
        for pos, j in enumerate(cand_idx):
            grad_k[j] += (
                w[pos] / kn[j] * (q[i] / qn[i] - cos[pos] * k[j] / kn[j])
            )
    return float(loss), grad_q, grad_k


@dataclass(frozen=True)
class CoralResult:
    value: float
    grads: np.ndarray
    used_domains: tuple[str, ...]
    degenerate: bool


def coral_loss(embeddings, domains) -> CoralResult:
    """Pairwise covariance-alignment loss over domains, with gradients.

    Domains contributing fewer than 2 embeddings are excluded. With fewer
    than 2 usable domains the loss is 0 with zero gradient, flagged
    degenerate, and a warning is emitted.

    Args:
        embeddings: (n, d) rows.
        domains: per-row domain labels, length n.
    """
    x = as_rows(embeddings, name="embeddings")
    domains = list(domains)
    if len(domains) != x.shape[0]:
        raise ShapeError(f"{len(domains)} domain labels for {x.shape[0]} embeddings")
    n, dim = x.shape
    groups: dict[str, list[int]] = {}
    for i, d in enumerate(domains):
        groups.setdefault(d, []).append(i)
    used = tuple(sorted(g for g, idx in groups.items() if len(idx) >= 2))
    grads = np.zeros_like(x)
    if len(used) < 2:
        warnings.warn(
            "alignment loss needs >= 2 domains with >= 2 embeddings each; returning 0",
            RuntimeWarning,
            stacklevel=2,
        )
        return CoralResult(0.0, grads, used, True)

    centered: dict[str, np.ndarray] = {}
    covs: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    for g in used:
        rows = x[groups[g]]
        c = rows - rows.mean(axis=0)
        centered[g] = c
        counts[g] = rows.shape[0]
        covs[g] = c.T @ c / (rows.shape[0] - 1)

    m = len(used)
    scale = 2.0 / (m * (m - 1)) / (4.0 * dim * dim)
    value = 0.0
    for ai in range(m):
        for bi in range(ai + 1, m):
            a, b = used[ai], used[bi]
            diff = covs[a] - covs[b]
            value += float(np.sum(diff * diff))
            # d ||Sa - Sb||_F^2 / dXa = 4/(na-1) * centered_a @ (Sa - Sb)
            grads[groups[a]] += scale * (4.0 / (counts[a] - 1)) * (centered[a] @ diff)
            grads[groups[b]] -= scale * (4.0 / (counts[b] - 1)) * (centered[b] @ diff)
    return CoralResult(scale * value, grads, used, False)


def combined_loss(
    queries,
    keys,
    partition: dict[str, list[int]] | MiniBatch,
    cfg: LossConfig,
    bank: MemoryBank | None = None,
) -> tuple[LossValue, np.ndarray, np.ndarray]:
    """Contrastive plus weighted alignment loss; gradients for both views.

    The alignment term consumes all 2N embeddings (queries and keys) grouped
    by their item's domain.
    """
    if isinstance(partition, MiniBatch):
        partition = partition.domain_partition
    cl, grad_q, grad_k = contrastive_loss(queries, keys, partition, cfg, bank)
    coral_value = 0.0
    if cfg.use_coral:
        q = as_rows(queries, name="queries")
        k = as_rows(keys, name="keys")
        n = q.shape[0]
        domain_of = [None] * n
        for domain, indices in partition.items():
            for i in indices:
                domain_of[i] = domain
        stacked = np.vstack([q, k])
        result = coral_loss(stacked, domain_of + domain_of)
        coral_value = result.value
        grad_q = grad_q + cfg.coral_weight * result.grads[:n]
        grad_k = grad_k + cfg.coral_weight * result.grads[n:]
    total = cl + cfg.coral_weight * coral_value
    return LossValue(total=total, contrastive=cl, coral=coral_value), grad_q, grad_k
