#!/usr/bin/env python3
"""End-to-end experiment: generate the default corpus, run both training
steps plus the word-level baselines, and print the ordering/diagnostic
numbers (reconstruction rows, style separation, word-latent smoothness).

Usage:
  python3 scripts/run_experiment.py --work /tmp/mgvae_run [--precision f32]
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

import numpy as np

from mgvae.bundle import Bundle
from mgvae.corpus import CorpusManifest, GenConfig, generate_corpus
from mgvae.converters import ScheduleConfig
from mgvae.evaluation import run_evaluation
from mgvae.metrics import latent_style_separation
from mgvae.model import ModelConfig
from mgvae.pipelines import SynthesisRequest, smoothness, synthesize
from mgvae.trainer import (BASELINE_SYSTEMS, MG_SYSTEMS, TrainConfig, load_items,
                           train_priors, train_step1)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--work", type=Path, required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--precision", choices=("f64", "f32"), default="f32")
    ap.add_argument("--epochs1", type=int, default=50)
    ap.add_argument("--epochs2", type=int, default=20)
    ap.add_argument("--baseline-epochs", type=int, default=10)
    ap.add_argument("--per-style", type=int, default=100)
    ap.add_argument("--step2-seeds", type=int, default=5)
    ap.add_argument("--beta", type=float, default=0.1,
                    help="per-level KL weight for this run (library default is 1.0)")
    ap.add_argument("--lr", type=float, default=1e-3)
    args = ap.parse_args()
    args.work.mkdir(parents=True, exist_ok=True)

    corpus_dir = args.work / "corpus"
    if not (corpus_dir / "manifest.json").exists():
        print("== generating corpus ==")
        generate_corpus(GenConfig(seed=args.seed,
                                  utterances_per_style=args.per_style), corpus_dir)
    manifest = CorpusManifest.load(corpus_dir / "manifest.json")
    train_items = load_items(manifest, "train")
    valid_items = load_items(manifest, "valid")
    test_items = load_items(manifest, "test")
    print(f"corpus: {len(train_items)} train / {len(valid_items)} valid / "
          f"{len(test_items)} test")

    model_cfg = ModelConfig(d_ac=manifest.d_ac, d_ling=manifest.d_ling,
                            d_z=manifest.latent_dim, precision=args.precision,
                            init_seed=args.seed)
    bundle = Bundle.fresh(model_cfg)
    cfg = TrainConfig(step1_epochs=args.epochs1, step2_epochs=args.epochs2,
                      seed=args.seed, precision=args.precision, lr=args.lr,
                      kl_weights=(args.beta, args.beta, args.beta))

    print("== step 1 ==")
    t0 = time.perf_counter()
    log1 = train_step1(bundle.model, train_items, valid_items, cfg)
    t_step1 = time.perf_counter() - t0
    losses = log1.series("loss", step=1)
    print(f"step1: {t_step1:.1f}s; loss {losses[0]:.4f} -> {losses[-1]:.4f} "
          f"(ratio {losses[-1] / losses[0]:.3f})")
    bundle.trained.add("step1")

    print("== step 2: short runs over seeds ==")
    core = ("prior_utterance", "conv_phrase_ar", "conv_word_ar")
    t0 = time.perf_counter()
    from mgvae.converters import PriorSuite
    from mgvae.trainer import compute_posterior_summaries
    summaries = compute_posterior_summaries(bundle.model, train_items)
    curves = []
    for s in range(args.step2_seeds):
        suite_s = PriorSuite(bundle.model.cfg, init_seed=1000 + s)
        cfg_s = TrainConfig(step2_epochs=10, seed=1000 + s, precision=args.precision,
                            lr=args.lr, schedule=ScheduleConfig(p_min=0.1, decay_epochs=5))
        log_s = train_priors(bundle.model, suite_s, train_items, cfg_s, core,
                             summaries=summaries)
        curves.append(log_s.series("fit_total", step=2))
    t_seeds = time.perf_counter() - t0
    med = np.median(np.asarray(curves), axis=0)
    print(f"5-seed step2: {t_seeds:.1f}s; median fit curve "
          f"{' '.join(f'{v:.3f}' for v in med)}")
    print(f"criterion decrease: {med[-1]:.4f} < {med[0]:.4f} -> {med[-1] < med[0]}")
    print(f"TOTAL timed training: {t_step1 + t_seeds:.1f}s")

    print("== step 2 (full) + baselines ==")
    t0 = time.perf_counter()
    train_priors(bundle.model, bundle.suite, train_items, cfg, MG_SYSTEMS,
                 summaries=summaries)
    bundle.trained.add("step2")
    cfg_b = TrainConfig(step2_epochs=args.baseline_epochs, seed=args.seed,
                        precision=args.precision, lr=args.lr)
    train_priors(bundle.model, bundle.suite, train_items, cfg_b, BASELINE_SYSTEMS,
                 summaries=summaries)
    bundle.trained.add("baselines")
    print(f"full step2 + baselines: {time.perf_counter() - t0:.1f}s")
    bundle.save(args.work / "model.mgck")

    print("== reconstruction rows (oracle / predicted) ==")
    report = run_evaluation(bundle, manifest, "test",
                            ["oracle-zu", "oracle-zw", "pred-zw"], seed=args.seed)
    print(report.table())
    (args.work / "table1.json").write_text(json.dumps(report.to_dict(), indent=2))

    print("== style separation ==")
    latents, labels = [], []
    for u in test_items:
        if u.style == "mixed":
            continue
        latents.append(bundle.model.oracle_latents(u).z_utterance.reshape(-1))
        labels.append(u.style)
    acc = latent_style_separation(np.asarray(latents), labels)
    print(f"nearest-centroid accuracy over {len(labels)} items: {acc:.3f}")

    print("== word-latent smoothness ==")
    vals = {"FG": [], "MG+CP+AR": []}
    for i, u in enumerate(test_items[:100]):
        if u.n_words < 2:
            continue
        for mode in vals:
            req = SynthesisRequest(y=u.y, word_seg=u.word_seg, phrase_seg=u.phrase_seg,
                                   mode=mode, seed=[args.seed, i])
            vals[mode].append(smoothness(synthesize(req, bundle.model,
                                                    bundle.suite).z_word))
    for mode, v in vals.items():
        print(f"  {mode}: mean {np.mean(v):.4f} over {len(v)} utterances")


if __name__ == "__main__":
    main()
