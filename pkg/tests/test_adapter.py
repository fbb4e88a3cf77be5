import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mdadapt.adapter import ContrastiveDomainAdapter
from mdadapt.exceptions import ConfigError


@pytest.fixture(scope="module")
def fitted(tiny_corpus):
    adapter = ContrastiveDomainAdapter(
        preset="full_md", steps=8, batch_size=6, min_per_domain=2,
        view_min_len=5, random_state=0,
    )
    return adapter.fit(tiny_corpus)


# module-scoped fitted adapter needs the session corpus re-exposed here
@pytest.fixture(scope="module")
def tiny_corpus():
    from mdadapt.datasets import CorpusSpec, generate

    return generate(
        CorpusSpec(
            num_speakers=8, num_domains=2, utterances_per_speaker_per_domain=3,
            frames_per_utterance=(24, 40), eval_fraction=0.25, rng_seed=11,
        )
    )


class TestSklearnProtocol:
    def test_get_params_round_trip(self):
        adapter = ContrastiveDomainAdapter(steps=3, tau=0.11)
        params = adapter.get_params()
        assert params["steps"] == 3
        assert params["tau"] == 0.11
        rebuilt = ContrastiveDomainAdapter(**params)
        assert rebuilt.get_params() == params

    def test_set_params(self):
        adapter = ContrastiveDomainAdapter()
        adapter.set_params(steps=7, preset="idns")
        assert adapter.steps == 7
        assert adapter.preset == "idns"

    def test_clone(self, fitted):
        fresh = clone(fitted)
        assert not hasattr(fresh, "encoder_")
        assert fresh.get_params() == fitted.get_params()

    def test_transform_before_fit_raises(self, tiny_corpus):
        with pytest.raises(NotFittedError):
            ContrastiveDomainAdapter().transform(tiny_corpus.utterances[:2])


class TestFitTransform:
    def test_fit_sets_attributes(self, fitted, tiny_corpus):
        assert fitted.n_features_in_ == tiny_corpus.spec.feature_dim
        assert fitted.encoder_.embed_dim == fitted.embed_dim
        assert len(fitted.log_.records) == fitted.steps

    def test_transform_shapes(self, fitted, tiny_corpus):
        out = fitted.transform(tiny_corpus.utterances[:5])
        assert out.shape == (5, fitted.embed_dim)
        assert np.all(np.isfinite(out))

    def test_transform_accepts_raw_frames(self, fitted, rng):
        frames = [rng.normal(size=(12, 8)), rng.normal(size=(20, 8))]
        out = fitted.transform(frames)
        assert out.shape == (2, fitted.embed_dim)

    def test_deterministic_under_random_state(self, tiny_corpus):
        a = ContrastiveDomainAdapter(
            steps=4, batch_size=6, min_per_domain=2, view_min_len=5, random_state=3
        ).fit(tiny_corpus)
        b = ContrastiveDomainAdapter(
            steps=4, batch_size=6, min_per_domain=2, view_min_len=5, random_state=3
        ).fit(tiny_corpus)
        assert np.array_equal(a.transform(tiny_corpus.utterances[:3]),
                              b.transform(tiny_corpus.utterances[:3]))

    def test_fit_transform_equals_fit_then_transform(self, tiny_corpus):
        subset = tiny_corpus.utterances[:6]
        a = ContrastiveDomainAdapter(
            steps=4, batch_size=4, min_per_domain=2, view_min_len=5, random_state=1
        )
        out = a.fit_transform(subset)
        assert np.array_equal(out, a.transform(subset))

    def test_preset_wiring(self, tiny_corpus):
        adapter = ContrastiveDomainAdapter(
            preset="ssl_sd", steps=2, batch_size=6, min_per_domain=2, view_min_len=5
        )
        config = adapter._train_config()
        assert config.loss.sampling_mode == "single_domain"
        assert not config.loss.use_bank

    def test_unknown_preset_rejected_at_fit(self, tiny_corpus):
        adapter = ContrastiveDomainAdapter(preset="best")
        with pytest.raises(ConfigError):
            adapter.fit(tiny_corpus)

    def test_empty_input_rejected(self, fitted):
        with pytest.raises(ConfigError):
            fitted.transform([])
