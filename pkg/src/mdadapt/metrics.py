"""Verification-style evaluation: trials, EER, minDCF, domain matrix, PCA.

Scoring is plain cosine between enrollment and test embeddings. The error
rates sweep every distinct-score threshold (accept iff score >= threshold,
so the operating points are the corners of the ROC staircase plus the
reject-all end) and interpolate linearly between the two operating points
where the miss and false-alarm curves cross.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .datasets import Corpus
from .encoder import EncoderParams, Segment, encode
from .exceptions import (
    ConfigError,
    InsufficientSamplesError,
    ShapeError,
    UndefinedMetricError,
)
from .numerics import cosine, covariance
from .validation import as_rows

TRIAL_MODES = ("pooled", "matrix")


@dataclass(frozen=True)
class Trial:
    """One enrollment/test comparison."""

    enroll_id: str
    test_id: str
    enroll_embedding: np.ndarray
    test_embedding: np.ndarray
    is_target: bool
    enroll_domain: str
    test_domain: str


@dataclass(frozen=True)
class ScoreRecord:
    score: float
    is_target: bool

    def __post_init__(self):
        if not -1.0 <= self.score <= 1.0:
            raise ShapeError(f"cosine score out of [-1, 1]: {self.score}")


def score_trials(trials: list[Trial]) -> list[ScoreRecord]:
    return [ScoreRecord(cosine(t.enroll_embedding, t.test_embedding), t.is_target) for t in trials]


def _split_scores(records: list[ScoreRecord]) -> tuple[np.ndarray, np.ndarray]:
    tar = np.array([r.score for r in records if r.is_target], dtype=np.float64)
    non = np.array([r.score for r in records if not r.is_target], dtype=np.float64)
    if tar.size == 0 or non.size == 0:
        raise UndefinedMetricError(
            f"need both classes: {tar.size} target and {non.size} nontarget scores"
        )
    return tar, non


def _rate_curves(tar: np.ndarray, non: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """P_miss and P_fa at every staircase corner, in threshold order.

    Corner k uses threshold = k-th distinct score (accept iff score >=
    threshold); the final corner is the reject-all point. P_miss is
    nondecreasing and P_fa nonincreasing along the sweep.
    """
    thresholds = np.unique(np.concatenate([tar, non]))
    p_miss = np.empty(thresholds.size + 1)
    p_fa = np.empty(thresholds.size + 1)
    # searchsorted('left') counts scores strictly below the threshold
    p_miss[:-1] = np.searchsorted(np.sort(tar), thresholds, side="left") / tar.size
    p_fa[:-1] = 1.0 - np.searchsorted(np.sort(non), thresholds, side="left") / non.size
    p_miss[-1] = 1.0
    p_fa[-1] = 0.0
    return p_miss, p_fa


def _interpolate_crossing(p_miss: np.ndarray, p_fa: np.ndarray) -> float:
    diff = p_miss - p_fa
    k = int(np.argmax(diff >= 0.0))  # first corner at/above the crossing
    if k == 0:
        return float(p_miss[0])
    pm1, pf1 = p_miss[k - 1], p_fa[k - 1]
    pm2, pf2 = p_miss[k], p_fa[k]
    alpha = (pf1 - pm1) / ((pf1 - pm1) + (pm2 - pf2))
    return float(pm1 + alpha * (pm2 - pm1))


def eer(records: list[ScoreRecord]) -> float:
    """Equal error rate in percent.

    Raises:
        UndefinedMetricError: single-class input.
    """
    tar, non = _split_scores(records)
    p_miss, p_fa = _rate_curves(tar, non)
    return 100.0 * _interpolate_crossing(p_miss, p_fa)


def min_dcf(
    records: list[ScoreRecord],
    p_target: float = 0.05,
    c_miss: float = 1.0,
    c_fa: float = 1.0,
) -> float:
    """Minimum normalized detection cost over all thresholds.

    Normalized by min(c_miss * p_target, c_fa * (1 - p_target)), the cost of
    the better of accept-all/reject-all, so 1.0 means no better than a
    scoreless decision.
    """
    if not (0.0 < p_target < 1.0):
        raise ConfigError(f"p_target must be in (0, 1), got {p_target}")
    if c_miss <= 0 or c_fa <= 0:
        raise ConfigError("costs must be positive")
    tar, non = _split_scores(records)
    p_miss, p_fa = _rate_curves(tar, non)
    costs = c_miss * p_miss * p_target + c_fa * p_fa * (1.0 - p_target)
    floor = min(c_miss * p_target, c_fa * (1.0 - p_target))
    return float(costs.min() / floor)


# ---------------------------------------------------------------------------
# Trial construction
# ---------------------------------------------------------------------------


@dataclass
class TrialBuild:
    trials: list[Trial]
    skipped_cells: int
    domains: list[str]


def _top_domains(corpus: Corpus, utts, k: int) -> list[str]:
    """The k domains with the most eval speakers (ties: more utterances)."""
    speakers: dict[str, set[str]] = {}
    counts: dict[str, int] = {}
    for u in utts:
        speakers.setdefault(u.domain_id, set()).add(u.speaker_id)
        counts[u.domain_id] = counts.get(u.domain_id, 0) + 1
    ranked = sorted(
        speakers, key=lambda d: (-len(speakers[d]), -counts[d], d)
    )
    return sorted(ranked[:k])


def build_trials(
    corpus: Corpus,
    params: EncoderParams,
    enroll_frames: int = 80,
    mode: str = "pooled",
    num_domains: int = 6,
) -> TrialBuild:
    """Enrollment/test trials over the corpus eval split.

    Per speaker and domain, the first utterances are spliced into one
    enrollment segment of at least enroll_frames frames; the remaining
    utterances are the tests. Every enrollment is scored against every test
    utterance; targets share the speaker. Cells that cannot reach
    enroll_frames are skipped and counted.

    In matrix mode the trial set is restricted to the num_domains
    most-populated domains (the genre-to-genre protocol); pooled mode uses
    every domain.

    Raises:
        ConfigError: empty eval split or unknown mode.
    """
    if mode not in TRIAL_MODES:
        raise ConfigError(f"unknown trial mode {mode!r}")
    utts = corpus.split("eval")
    if not utts:
        raise ConfigError("corpus eval split is empty")
    if mode == "matrix":
        keep = set(_top_domains(corpus, utts, num_domains))
        utts = [u for u in utts if u.domain_id in keep]
        domains = sorted(keep)
    else:
        domains = sorted({u.domain_id for u in utts})

    cells: dict[tuple[str, str], list] = {}
    for u in utts:
        cells.setdefault((u.speaker_id, u.domain_id), []).append(u)

    enrollments: list[tuple[str, str, str, np.ndarray]] = []  # (id, speaker, domain, emb)
    tests: list[tuple[str, str, str, np.ndarray]] = []
    skipped = 0
    for (speaker, domain), cell_utts in sorted(cells.items()):
        total = 0
        cut = 0
        for u in cell_utts:
            total += u.num_frames
            cut += 1
            if total >= enroll_frames:
                break
        if total < enroll_frames:
            skipped += 1
            continue
        frames = np.concatenate([u.frames for u in cell_utts[:cut]], axis=0)
        seg = Segment(
            frames=frames,
            source_utterance_id=f"{speaker}@{domain}",
            domain_id=domain,
        )
        enrollments.append((f"{speaker}@{domain}", speaker, domain, encode(params, seg)))
        for u in cell_utts[cut:]:
            seg = Segment(frames=u.frames, source_utterance_id=u.id, domain_id=domain)
            tests.append((u.id, speaker, domain, encode(params, seg)))

    trials = [
        Trial(
            enroll_id=eid,
            test_id=tid,
            enroll_embedding=eemb,
            test_embedding=temb,
            is_target=espk == tspk,
            enroll_domain=edom,
            test_domain=tdom,
        )
        for eid, espk, edom, eemb in enrollments
        for tid, tspk, tdom, temb in tests
    ]
    return TrialBuild(trials=trials, skipped_cells=skipped, domains=domains)


# ---------------------------------------------------------------------------
# Genre-to-genre matrix
# ---------------------------------------------------------------------------


@dataclass
class DomainMatrix:
    """EER grid: rows = enrollment domains, columns = test domains + pooled.

    Unavailable cells (missing a class) hold NaN, never a fake zero.
    """

    enroll_domains: list[str]
    test_domains: list[str]  # the final implicit column pools all of these
    values: np.ndarray  # (K, K+1), percent

    def cell(self, enroll_domain: str, test_domain: str) -> float:
        i = self.enroll_domains.index(enroll_domain)
        j = (
            len(self.test_domains)
            if test_domain == "all"
            else self.test_domains.index(test_domain)
        )
        return float(self.values[i, j])

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["enroll"] + self.test_domains + ["all"])
        for i, dom in enumerate(self.enroll_domains):
            row = [dom]
            for v in self.values[i]:
                row.append("NA" if np.isnan(v) else repr(float(v)))
            writer.writerow(row)
        return out.getvalue()


def domain_matrix(trials: list[Trial], domains: list[str] | None = None) -> DomainMatrix:
    """EER per (enrollment domain, test domain) cell plus a pooled column.

    The pooled column is the EER over the union of the row's trials across
    all test domains in the grid.
    """
    if domains is None:
        domains = sorted({t.enroll_domain for t in trials})
    k = len(domains)
    if k == 0:
        raise ConfigError("no domains to build a matrix over")
    values = np.full((k, k + 1), np.nan)
    domain_set = set(domains)
    for i, g in enumerate(domains):
        row_trials = [
            t for t in trials if t.enroll_domain == g and t.test_domain in domain_set
        ]
        for j, h in enumerate(domains):
            cell = [t for t in row_trials if t.test_domain == h]
            values[i, j] = _safe_eer(cell)
        values[i, k] = _safe_eer(row_trials)
    return DomainMatrix(enroll_domains=list(domains), test_domains=list(domains), values=values)


def _safe_eer(trials: list[Trial]) -> float:
    try:
        return eer(score_trials(trials))
    except UndefinedMetricError:
        warnings.warn("matrix cell lacks a class; marked unavailable", RuntimeWarning)
        return float("nan")


# ---------------------------------------------------------------------------
# 2-D projection (principal components)
# ---------------------------------------------------------------------------


def project_2d(embeddings, speaker_ids, domain_ids) -> list[tuple[float, float, str, str]]:
    """Top-2 principal component coordinates with labels.

    Components are eigenvectors of the unbiased covariance, eigenvalues
    descending, each signed so its largest-magnitude loading is positive
    (deterministic orientation). Rank-deficient inputs legitimately produce
    a zero second coordinate.

    Raises:
        InsufficientSamplesError: fewer than 3 embeddings.
    """
    x = as_rows(embeddings, name="embeddings")
    speaker_ids = list(speaker_ids)
    domain_ids = list(domain_ids)
    if x.shape[0] < 3:
        raise InsufficientSamplesError(f"projection needs >= 3 embeddings, got {x.shape[0]}")
    if len(speaker_ids) != x.shape[0] or len(domain_ids) != x.shape[0]:
        raise ShapeError("labels must align with embeddings")
    cov = covariance(x)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:2]
    basis = eigvecs[:, order]
    if basis.shape[1] < 2:  # 1-D input: pad a zero second axis
        basis = np.hstack([basis, np.zeros((basis.shape[0], 1))])
    for c in range(2):
        lead = int(np.argmax(np.abs(basis[:, c])))
        if basis[lead, c] < 0:
            basis[:, c] = -basis[:, c]
    coords = (x - x.mean(axis=0)) @ basis
    return [
        (float(coords[i, 0]), float(coords[i, 1]), speaker_ids[i], domain_ids[i])
        for i in range(x.shape[0])
    ]


# ---------------------------------------------------------------------------
# File exports
# ---------------------------------------------------------------------------


def trials_to_csv(trials: list[Trial]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["enroll_id", "test_id", "label", "enroll_domain", "test_domain"])
    for t in trials:
        writer.writerow(
            [t.enroll_id, t.test_id, "target" if t.is_target else "nontarget",
             t.enroll_domain, t.test_domain]
        )
    return out.getvalue()


def pooled_metrics_csv(eer_percent: float, dcf: float) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["metric", "value"])
    writer.writerow(["eer_percent", repr(float(eer_percent))])
    writer.writerow(["min_dcf", repr(float(dcf))])
    return out.getvalue()


def summary_json(
    eer_percent: float, dcf: float, matrix: DomainMatrix | None = None
) -> str:
    payload: dict = {"eer_percent": eer_percent, "min_dcf": dcf}
    if matrix is not None:
        payload["matrix"] = {
            "enroll_domains": matrix.enroll_domains,
            "test_domains": matrix.test_domains + ["all"],
            "values": [
                [None if np.isnan(v) else v for v in row] for row in matrix.values
            ],
        }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def projection_csv(points: list[tuple[float, float, str, str]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["x", "y", "speaker", "domain"])
    for x, y, speaker, domain in points:
        writer.writerow([repr(float(x)), repr(float(y)), speaker, domain])
    return out.getvalue()
