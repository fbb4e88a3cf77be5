import numpy as np
import pytest

from mdadapt.batching import (
    BatchItem,
    MiniBatch,
    build_batch,
    negatives_for,
    partition_by_domain,
)
from mdadapt.datasets import CorpusSpec, generate
from mdadapt.encoder import Segment
from mdadapt.exceptions import ConfigError, InfeasibleBatchError


def _item(i, domain):
    seg = Segment(
        frames=np.full((3, 2), float(i)),
        source_utterance_id=f"u{i}",
        domain_id=domain,
    )
    return BatchItem(query_view=seg, key_view=seg, utterance_id=f"u{i}", domain_id=domain)


def _batch(domains):
    items = tuple(_item(i, d) for i, d in enumerate(domains))
    return MiniBatch(items=items, domain_partition=partition_by_domain(list(domains)))


class TestPartition:
    def test_definition(self):
        batch = _batch(["A", "A", "B", "B", "A", "B"])
        assert batch.domain_partition == {"A": [0, 1, 4], "B": [2, 3, 5]}

    def test_rejects_incomplete_partition(self):
        items = tuple(_item(i, "A") for i in range(3))
        with pytest.raises(ConfigError):
            MiniBatch(items=items, domain_partition={"A": [0, 1]})

    def test_rejects_wrong_domain(self):
        items = (_item(0, "A"), _item(1, "B"))
        with pytest.raises(ConfigError):
            MiniBatch(items=items, domain_partition={"A": [0, 1]})


class TestNegativesFor:
    def test_in_domain(self):
        batch = _batch(["A", "A", "B", "B", "A", "B"])
        assert negatives_for(batch, 0, "in_domain") == [1, 4]

    def test_single_domain(self):
        batch = _batch(["A", "A", "B", "B", "A", "B"])
        assert negatives_for(batch, 0, "single_domain") == [1, 2, 3, 4, 5]

    def test_modes_coincide_on_single_domain_batch(self):
        batch = _batch(["A"] * 5)
        for anchor in range(5):
            assert negatives_for(batch, anchor, "in_domain") == negatives_for(
                batch, anchor, "single_domain"
            )

    def test_in_domain_subset_of_single_domain(self, tiny_corpus, rng):
        batch = build_batch(tiny_corpus, batch_size=8, min_per_domain=2, min_len=5, rng=rng)
        for anchor in range(len(batch)):
            in_dom = set(negatives_for(batch, anchor, "in_domain"))
            all_neg = set(negatives_for(batch, anchor, "single_domain"))
            assert in_dom <= all_neg

    def test_bad_mode(self):
        with pytest.raises(ConfigError):
            negatives_for(_batch(["A", "A"]), 0, "everything")


class TestBuildBatch:
    def test_partition_covers_exactly_once(self, tiny_corpus, rng):
        batch = build_batch(tiny_corpus, batch_size=10, min_per_domain=2, min_len=5, rng=rng)
        indices = sorted(i for idx in batch.domain_partition.values() for i in idx)
        assert indices == list(range(10))

    def test_min_per_domain_guaranteed(self, tiny_corpus):
        for seed in range(20):
            batch = build_batch(
                tiny_corpus,
                batch_size=9,
                min_per_domain=3,
                min_len=5,
                rng=np.random.default_rng(seed),
            )
            for indices in batch.domain_partition.values():
                assert len(indices) >= 3

    def test_views_non_overlapping_same_utterance(self, tiny_corpus, rng):
        batch = build_batch(tiny_corpus, batch_size=8, min_per_domain=2, min_len=5, rng=rng)
        for item in batch.items:
            assert item.query_view.source_utterance_id == item.utterance_id
            assert item.key_view.source_utterance_id == item.utterance_id
            q = range(
                item.query_view.frame_offset,
                item.query_view.frame_offset + item.query_view.num_frames,
            )
            k = range(
                item.key_view.frame_offset,
                item.key_view.frame_offset + item.key_view.num_frames,
            )
            assert not (set(q) & set(k))

    def test_views_share_domain(self, tiny_corpus, rng):
        batch = build_batch(tiny_corpus, batch_size=8, min_per_domain=2, min_len=5, rng=rng)
        for item in batch.items:
            assert item.query_view.domain_id == item.domain_id
            assert item.key_view.domain_id == item.domain_id

    def test_no_replacement_within_batch(self, tiny_corpus, rng):
        batch = build_batch(tiny_corpus, batch_size=12, min_per_domain=2, min_len=5, rng=rng)
        ids = [item.utterance_id for item in batch.items]
        assert len(set(ids)) == len(ids)

    def test_deterministic_given_seed(self, tiny_corpus):
        a = build_batch(
            tiny_corpus, batch_size=8, min_per_domain=2, min_len=5,
            rng=np.random.default_rng(42),
        )
        b = build_batch(
            tiny_corpus, batch_size=8, min_per_domain=2, min_len=5,
            rng=np.random.default_rng(42),
        )
        assert [i.utterance_id for i in a.items] == [i.utterance_id for i in b.items]
        for x, y in zip(a.items, b.items):
            assert np.array_equal(x.query_view.frames, y.query_view.frames)
            assert np.array_equal(x.key_view.frames, y.key_view.frames)

    def test_golden_composition(self):
        # frozen at first run: seed-5 corpus, seed-77 batch rng
        spec = CorpusSpec(
            num_speakers=6,
            num_domains=2,
            utterances_per_speaker_per_domain=2,
            frames_per_utterance=(20, 30),
            rng_seed=5,
        )
        batch = build_batch(
            generate(spec), batch_size=4, min_per_domain=2, min_len=5,
            rng=np.random.default_rng(77),
        )
        assert [i.utterance_id for i in batch.items] == [
            "spk0005_dom00_utt001",
            "spk0001_dom01_utt000",
            "spk0002_dom00_utt001",
            "spk0005_dom01_utt000",
        ]

    def test_single_domain_corpus(self, rng):
        spec = CorpusSpec(
            num_speakers=4, num_domains=1, utterances_per_speaker_per_domain=3, rng_seed=2
        )
        batch = build_batch(generate(spec), batch_size=6, min_per_domain=2, min_len=5, rng=rng)
        assert list(batch.domain_partition) == ["dom00"]
        assert len(batch.domain_partition["dom00"]) == 6

    def test_infeasible_when_pool_too_small(self, rng):
        spec = CorpusSpec(
            num_speakers=2,
            num_domains=2,
            utterances_per_speaker_per_domain=2,
            eval_fraction=0.4,
            rng_seed=2,
        )
        corpus = generate(spec)
        with pytest.raises(InfeasibleBatchError):
            build_batch(corpus, batch_size=50, min_per_domain=2, min_len=5, rng=rng)

    def test_infeasible_batch_smaller_than_min_per_domain(self, tiny_corpus, rng):
        with pytest.raises(InfeasibleBatchError):
            build_batch(tiny_corpus, batch_size=2, min_per_domain=3, min_len=5, rng=rng)

    def test_short_utterances_excluded(self, rng):
        from mdadapt.datasets import Utterance

        utts = [
            Utterance(id=f"u{i}", speaker_id=f"s{i}", domain_id="A",
                      frames=rng.normal(size=(30, 2)))
            for i in range(4)
        ] + [
            Utterance(id="short", speaker_id="s9", domain_id="A",
                      frames=rng.normal(size=(8, 2)))
        ]
        batch = build_batch(utts, batch_size=4, min_per_domain=2, min_len=5, rng=rng)
        assert "short" not in [i.utterance_id for i in batch.items]
