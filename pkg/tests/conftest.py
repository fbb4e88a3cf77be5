import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mdadapt.datasets import CorpusSpec, generate


@pytest.fixture(scope="session")
def tiny_corpus():
    """Small two-domain corpus, enough for batching/training mechanics."""
    spec = CorpusSpec(
        num_speakers=8,
        num_domains=2,
        utterances_per_speaker_per_domain=3,
        frames_per_utterance=(24, 40),
        eval_fraction=0.25,
        rng_seed=11,
    )
    return generate(spec)


@pytest.fixture(scope="session")
def small_corpus():
    """Mid-size six-domain corpus for evaluation-protocol tests."""
    spec = CorpusSpec(
        num_speakers=12,
        num_domains=6,
        utterances_per_speaker_per_domain=5,
        eval_fraction=0.5,
        rng_seed=3,
    )
    return generate(spec)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
