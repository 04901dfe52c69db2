import numpy as np
import pytest

from mgvae.bundle import Bundle
from mgvae.converters import ScheduleConfig
from mgvae.corpus import generate_corpus
from mgvae.model import ModelConfig, MultiGrainedVAE
from mgvae.trainer import (Adam, BASELINE_SYSTEMS, MG_SYSTEMS, TrainConfig,
                           TrainingDiverged, TrainLog, group_checksums, load_items,
                           train_priors, train_step1, validation_loss)

from conftest import tiny_gen_config


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("train_corpus")
    return generate_corpus(tiny_gen_config(seed=51, per_style=5), out)


def fresh_model(seed=3, **overrides):
    cfg = ModelConfig(d_ac=6, d_ling=8, d_z=2, hidden=6, width=6, init_seed=seed)
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return MultiGrainedVAE(cfg)


def short_config(**overrides):
    cfg = TrainConfig(step1_epochs=2, step2_epochs=2, batch_size=4, seed=7)
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


def test_step1_reduces_loss_and_logs(corpus):
    model = fresh_model()
    train = load_items(corpus, "train")
    cfg = short_config(step1_epochs=6, kl_weights=(0.1, 0.1, 0.1))
    log = train_step1(model, train, train[:4], cfg)
    vals = log.series("val_loss", step=1)
    assert len(vals) == 6
    assert vals[-1] < vals[0]  # noise-free validation loss is the stable signal
    assert all("wall_time" in r for r in log.records)


def test_step1_bitwise_reproducible(corpus):
    train = load_items(corpus, "train")
    results = []
    logs = []
    for _ in range(2):
        model = fresh_model(seed=5)
        log = train_step1(model, train, [], short_config())
        results.append(model.export_group_arrays())
        logs.append([{k: v for k, v in r.items() if k != "wall_time"}
                     for r in log.records])
    assert logs[0] == logs[1]
    for g in results[0]:
        for n in results[0][g]:
            assert results[0][g][n].tobytes() == results[1][g][n].tobytes()


def test_lr_zero_leaves_validation_loss_unchanged(corpus):
    model = fresh_model()
    train = load_items(corpus, "train")
    valid = train[:3]  # any fixed items work as a validation set
    before = validation_loss(model, valid)
    log = train_step1(model, train, valid, short_config(lr=0.0, step1_epochs=3))
    vals = log.series("val_loss", step=1)
    assert all(v == before for v in vals)
    assert validation_loss(model, valid) == before


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_aborts_with_snapshot(corpus):
    model = fresh_model()
    train = load_items(corpus, "train")
    cfg = short_config(lr=1e6, step1_epochs=30)  # blow up quickly
    with pytest.raises(TrainingDiverged) as exc_info:
        train_step1(model, train, [], cfg)
    assert exc_info.value.snapshot is not None
    # the snapshot is the last completed epoch: loadable, all values finite
    model.load_group_arrays(exc_info.value.snapshot)
    for group in exc_info.value.snapshot.values():
        for arr in group.values():
            assert np.isfinite(arr).all()


def test_step2_freezes_step1_parameters(corpus):
    model = fresh_model()
    train = load_items(corpus, "train")
    train_step1(model, train, [], short_config())
    before = group_checksums(model.export_group_arrays())
    bundle = Bundle(model=model, suite=__import__("mgvae.converters",
                                                  fromlist=["PriorSuite"]).PriorSuite(model.cfg))
    log = train_priors(model, bundle.suite, train, short_config(), MG_SYSTEMS)
    after = group_checksums(model.export_group_arrays())
    assert before == after
    assert log.series("fit_total", step=2)


def test_step2_fit_losses_decrease(corpus):
    from mgvae.converters import PriorSuite
    model = fresh_model()
    train = load_items(corpus, "train")
    train_step1(model, train, [], short_config(step1_epochs=4))
    suite = PriorSuite(model.cfg)
    log = train_priors(model, suite, train, short_config(step2_epochs=6), MG_SYSTEMS)
    totals = log.series("fit_total", step=2)
    assert totals[-1] < totals[0]


def test_step2_schedule_edge_pure_free_running(corpus):
    from mgvae.converters import PriorSuite
    model = fresh_model()
    train = load_items(corpus, "train")[:4]
    train_step1(model, train, [], short_config(step1_epochs=1))
    suite = PriorSuite(model.cfg)
    cfg = short_config(step2_epochs=2, schedule=ScheduleConfig(p_min=0.1, decay_epochs=0))
    log = train_priors(model, suite, train, cfg, ("conv_phrase_ar",))
    ratios = log.series("teacher_ratio", step=2)
    assert all(r == pytest.approx(0.1) for r in ratios)


def test_baselines_reduce_fit_loss(corpus):
    from mgvae.converters import PriorSuite
    model = fresh_model()
    train = load_items(corpus, "train")
    train_step1(model, train, [], short_config(step1_epochs=3))
    suite = PriorSuite(model.cfg)
    log = train_priors(model, suite, train, short_config(step2_epochs=5),
                       BASELINE_SYSTEMS)
    for name in BASELINE_SYSTEMS:
        series = log.series(f"fit_{name}", step=2)
        assert series[-1] < series[0], name


def test_priors_training_reproducible(corpus):
    from mgvae.converters import PriorSuite
    model = fresh_model()
    train = load_items(corpus, "train")
    train_step1(model, train, [], short_config(step1_epochs=1))
    outs = []
    for _ in range(2):
        suite = PriorSuite(model.cfg, init_seed=33)
        train_priors(model, suite, train, short_config(), ("prior_ar_word",))
        outs.append(suite.export_group_arrays()["prior_ar_word"])
    for n in outs[0]:
        assert outs[0][n].tobytes() == outs[1][n].tobytes()


def test_train_log_round_trip():
    log = TrainLog(records=[{"step": 1, "epoch": 1, "loss": 1.5, "val_loss": None}])
    text = log.to_jsonl()
    again = TrainLog.from_jsonl(text)
    assert again.records == log.records


def test_adam_moves_toward_minimum():
    import mgvae.autodiff as ad
    w = ad.param(np.array([4.0]), "w")
    opt = Adam({"w": w}, lr=0.1)
    for _ in range(200):
        opt.zero_grad()
        loss = ad.sum_all(ad.square(w))
        from mgvae.autodiff import backward
        backward(loss)
        opt.step()
    assert abs(float(w.data[0])) < 0.1


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0).validate()
    with pytest.raises(ValueError):
        TrainConfig(kl_weights=(1.0, 1.0)).validate()
    with pytest.raises(ValueError):
        TrainConfig(precision="f16").validate()
    cfg = TrainConfig(step2_epochs=8)
    assert cfg.schedule.decay_epochs == 4  # default: half the step-2 epochs


def test_precision_mismatch_rejected(corpus):
    model = fresh_model(precision="f32")
    with pytest.raises(ValueError, match="precision"):
        train_step1(model, load_items(corpus, "train"), [], short_config())


def test_checkpoint_round_trip_preserves_validation_loss(corpus, tmp_path):
    model = fresh_model()
    train = load_items(corpus, "train")
    valid = train[:3]
    train_step1(model, train, valid, short_config())
    bundle = Bundle(model=model,
                    suite=__import__("mgvae.converters",
                                     fromlist=["PriorSuite"]).PriorSuite(model.cfg),
                    trained={"step1"}, suite_seed=model.cfg.init_seed + 1)
    before = validation_loss(model, valid)
    path = tmp_path / "ck.mgck"
    bundle.save(path)
    reloaded = Bundle.load(path)
    after = validation_loss(reloaded.model, valid)
    assert before == after  # exact, not approximate


def test_fg_mode_has_no_checkpoint_groups(corpus, tmp_path):
    # FG samples straight from N(0, I): nothing to train, nothing persisted
    model = fresh_model()
    from mgvae.converters import PriorSuite
    bundle = Bundle(model=model, suite=PriorSuite(model.cfg), trained={"step1"},
                    suite_seed=0)
    path = tmp_path / "ck.mgck"
    bundle.save(path)
    from mgvae.checkpoint import load_checkpoint
    groups, meta = load_checkpoint(path)
    assert not any("fg" in g.lower() for g in groups)
    from mgvae.bundle import MODE_REQUIREMENTS
    assert MODE_REQUIREMENTS["FG"] == {"step1"}
