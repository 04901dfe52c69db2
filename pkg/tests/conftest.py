import numpy as np
import pytest

from mgvae.bundle import Bundle
from mgvae.corpus import GenConfig, generate_corpus
from mgvae.model import ModelConfig
from mgvae.trainer import (BASELINE_SYSTEMS, MG_SYSTEMS, TrainConfig, load_items,
                           train_priors, train_step1)


def tiny_gen_config(seed: int = 11, per_style: int = 6) -> GenConfig:
    return GenConfig(seed=seed, utterances_per_style=per_style,
                     d_ac=6, d_ling=8, words_range=(2, 4), phrases_range=(1, 2),
                     frames_per_word=(4, 8), vocab_size=8)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny_corpus")
    manifest = generate_corpus(tiny_gen_config(), out)
    return manifest


@pytest.fixture(scope="session")
def tiny_bundle(tiny_corpus):
    """A small but fully trained bundle (all stages) for CLI/service tests."""
    cfg = ModelConfig(d_ac=tiny_corpus.d_ac, d_ling=tiny_corpus.d_ling,
                      d_z=tiny_corpus.latent_dim, hidden=8, width=8, init_seed=5)
    bundle = Bundle.fresh(cfg)
    train_cfg = TrainConfig(step1_epochs=3, step2_epochs=2, batch_size=4, seed=5)
    train_items = load_items(tiny_corpus, "train")
    valid_items = load_items(tiny_corpus, "valid")
    train_step1(bundle.model, train_items, valid_items, train_cfg)
    bundle.trained.add("step1")
    train_priors(bundle.model, bundle.suite, train_items, train_cfg, MG_SYSTEMS)
    bundle.trained.add("step2")
    train_priors(bundle.model, bundle.suite, train_items, train_cfg, BASELINE_SYSTEMS)
    bundle.trained.add("baselines")
    return bundle


@pytest.fixture(scope="session")
def tiny_checkpoint(tiny_bundle, tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "tiny.mgck"
    tiny_bundle.save(path)
    return path


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
