import numpy as np
import pytest

from somvet.model import AeConfig, SomConfig, train_separate
from somvet.nn import LayerSpec
from somvet.som import DecaySchedule
from somvet.stamps import as_pixel_array
from somvet.synth import StampSetConfig, synth_stamp_set

# small dense autoencoder: fast to train, enough to cluster the archetypes
TINY_ENCODER = (
    LayerSpec("flatten"),
    LayerSpec("dense", features=32),
    LayerSpec("relu"),
    LayerSpec("dense", features=8),
)
TINY_DECODER = (
    LayerSpec("dense", features=32),
    LayerSpec("relu"),
    LayerSpec("dense", features=1024),
    LayerSpec("reshape", shape=(1, 32, 32)),
)


def shuffled_corpus(n_real, n_bogus, seed, **cfg_kwargs):
    cfg_kwargs.setdefault("amplitude", 10.0)
    cfg = StampSetConfig(**cfg_kwargs)
    stamps = synth_stamp_set(cfg, n_real, n_bogus, seed=seed)
    order = np.random.default_rng(seed).permutation(len(stamps))
    return [stamps[i] for i in order]


@pytest.fixture(scope="session")
def corpus_mixed():
    return shuffled_corpus(600, 1400, seed=42)


@pytest.fixture(scope="session")
def corpus_psf_pixels():
    return as_pixel_array(synth_stamp_set(StampSetConfig(), 300, 0, seed=3))


@pytest.fixture(scope="session")
def corpus_easy():
    # real vs pure-noise bogus only: linearly separable in any sane latent
    return shuffled_corpus(600, 600, seed=43, bogus_mix=(0.0, 0.0, 0.0, 1.0))


@pytest.fixture(scope="session")
def small_model(corpus_mixed):
    pixels = as_pixel_array(corpus_mixed)
    model, _ = train_separate(
        pixels,
        AeConfig(TINY_ENCODER, TINY_DECODER, epochs=6, learning_rate=0.1, momentum=0.9),
        SomConfig(m=6, sched=DecaySchedule(n_iters=4000)),
        seed=7,
    )
    return model
