import numpy as np
import pytest

from mgvae.converters import PriorSuite
from mgvae.corpus import generate_corpus
from mgvae.model import ModelConfig, MultiGrainedVAE
from mgvae.pipelines import (MODES, PipelineError, SynthesisRequest, smoothness,
                             synthesize)

from conftest import tiny_gen_config


@pytest.fixture(scope="module")
def setup(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipe_corpus")
    manifest = generate_corpus(tiny_gen_config(seed=41), out)
    item = None
    for u in manifest.load_split(None):
        if u.n_words >= 3 and u.n_phrases >= 2:
            item = u
            break
    cfg = ModelConfig(d_ac=6, d_ling=8, d_z=2, hidden=5, width=5, init_seed=19)
    model = MultiGrainedVAE(cfg)
    suite = PriorSuite(cfg)
    return model, suite, item


def request(item, mode, **kw):
    return SynthesisRequest(y=item.y, word_seg=item.word_seg,
                            phrase_seg=item.phrase_seg, mode=mode, **kw)


def test_fg_latents_are_standard_normal_monte_carlo(setup):
    model, suite, item = setup
    rows = []
    for seed in range(100_000 // item.n_words + 1):
        res = synthesize(request(item, "FG", seed=seed), model, suite)
        rows.append(res.z_word)
    z = np.concatenate(rows, axis=0)[:100_000]
    np.testing.assert_allclose(z.mean(axis=0), [0.0, 0.0], atol=0.02)
    np.testing.assert_allclose(z.var(axis=0), [1.0, 1.0], rtol=0.02)


def test_fg_ignores_linguistic_features(setup):
    model, suite, item = setup
    a = synthesize(request(item, "FG", seed=5), model, suite)
    shuffled = item.y.copy()
    shuffled[:] = shuffled[::-1]
    req = SynthesisRequest(y=shuffled, word_seg=item.word_seg,
                           phrase_seg=item.phrase_seg, mode="FG", seed=5)
    b = synthesize(req, model, suite)
    np.testing.assert_array_equal(a.z_word, b.z_word)


def test_all_modes_produce_valid_shapes(setup):
    model, suite, item = setup
    for mode in MODES:
        res = synthesize(request(item, mode, seed=3), model, suite)
        assert res.z_word.shape == (item.n_words, 2)
        assert res.x_hat.shape == (item.frames, model.cfg.d_ac)
        assert res.trace["word"] is not None
        if mode.startswith("MG"):
            assert res.z_phrase is not None and res.z_phrase.shape == (item.n_phrases, 2)
            assert res.z_utterance is not None
        else:
            assert res.z_phrase is None and res.z_utterance is None


def test_temperature_zero_is_deterministic(setup):
    model, suite, item = setup
    for mode in MODES:
        a = synthesize(request(item, mode, temperature=0.0, seed=1), model, suite)
        b = synthesize(request(item, mode, temperature=0.0, seed=2), model, suite)
        assert a.z_word.tobytes() == b.z_word.tobytes(), mode
        assert a.x_hat.tobytes() == b.x_hat.tobytes(), mode


def test_mg_override_deterministic(setup):
    model, suite, item = setup
    a = synthesize(request(item, "MG+CP+AR", temperature=0.0,
                           z_u_override=np.array([0.5, -0.3])), model, suite)
    b = synthesize(request(item, "MG+CP+AR", temperature=0.0,
                           z_u_override=np.array([0.5, -0.3])), model, suite)
    assert a.z_word.tobytes() == b.z_word.tobytes()
    assert a.x_hat.tobytes() == b.x_hat.tobytes()
    np.testing.assert_array_equal(a.z_utterance, [[0.5, -0.3]])


def test_zero_init_cascade_propagates_override(setup):
    # fresh converters have zero-init heads: at temperature 0 every word latent
    # equals the utterance latent
    model, suite, item = setup
    fresh = PriorSuite(model.cfg, init_seed=77)
    for mode in ("MG+CP", "MG+CP+AR"):
        res = synthesize(request(item, mode, temperature=0.0,
                                 z_u_override=np.array([0.7, 0.1])), model, fresh)
        np.testing.assert_allclose(res.z_phrase,
                                   np.tile([0.7, 0.1], (item.n_phrases, 1)),
                                   atol=1e-12)
        np.testing.assert_allclose(res.z_word, np.tile([0.7, 0.1], (item.n_words, 1)),
                                   atol=1e-12)


def test_explicit_eps_replays(setup):
    model, suite, item = setup
    eps = {"utterance": np.ones((1, 2)) * 0.3,
           "phrase": np.ones((item.n_phrases, 2)) * -0.2,
           "word": np.ones((item.n_words, 2)) * 0.1}
    a = synthesize(request(item, "MG+CP+AR", eps=eps), model, suite)
    b = synthesize(request(item, "MG+CP+AR", eps=eps), model, suite)
    assert a.z_word.tobytes() == b.z_word.tobytes()


def test_override_rejected_outside_mg(setup):
    model, suite, item = setup
    for mode in ("FG", "FG+AR", "FG+CP", "FG+CP+AR"):
        with pytest.raises(PipelineError, match="MG"):
            synthesize(request(item, mode, z_u_override=np.array([0.1, 0.2])),
                       model, suite)


def test_unknown_mode_and_bad_temperature(setup):
    model, suite, item = setup
    with pytest.raises(PipelineError, match="unknown mode"):
        synthesize(request(item, "XX"), model, suite)
    with pytest.raises(PipelineError, match="temperature"):
        synthesize(request(item, "FG", temperature=-1.0), model, suite)


def test_trace_matches_converter_outputs(setup):
    # the pipeline reports the converters' own per-step distributions untouched
    model, suite, item = setup
    res = synthesize(request(item, "MG+CP+AR", temperature=0.0), model, suite)
    coarse_p = np.repeat(res.z_utterance, item.n_phrases, axis=0)
    params_p, z_p = suite.conv_phrase_ar.convert(item.y, item.phrase_seg, coarse_p)
    np.testing.assert_array_equal(res.trace["phrase"].mean, params_p.mean.data)
    coarse_w = z_p[item.word_to_phrase]
    params_w, _ = suite.conv_word_ar.convert(item.y, item.word_seg, coarse_w)
    np.testing.assert_array_equal(res.trace["word"].mean, params_w.mean.data)


# ---------------------------------------------------------------------------
# smoothness


def test_smoothness_constant_sequence():
    assert smoothness(np.tile([1.5, -2.0], (5, 1))) == 0.0


def test_smoothness_hand_value():
    assert smoothness(np.array([[0.0], [1.0], [0.0]])) == pytest.approx(1.0)


def test_smoothness_requires_two_rows():
    with pytest.raises(ValueError):
        smoothness(np.zeros((1, 2)))


def test_smoothness_iid_normal_expectation():
    # E ||a - b||^2 = 2 * d for independent standard normals; 1e5 pairs
    rng = np.random.default_rng(123)
    z = rng.standard_normal((100_001, 2))
    assert smoothness(z) == pytest.approx(4.0, rel=0.02)
