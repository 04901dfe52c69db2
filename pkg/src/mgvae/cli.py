"""Command-line entry point.

Subcommands: gen-corpus, train, synth, eval, export-latents, serve.
Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
Every run echoes its resolved configuration before doing work, and all
randomness is controlled by --seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .autodiff import ShapeError
from .bundle import Bundle
from .checkpoint import CheckpointError
from .converters import ScheduleConfig
from .corpus import CorpusError, CorpusManifest, GenConfig, generate_corpus
from .evaluation import expand_modes, run_evaluation
from .model import ModelConfig
from .pipelines import MODES, PipelineError, SynthesisRequest, synthesize
from .trainer import (BASELINE_SYSTEMS, MG_SYSTEMS, TrainConfig, TrainingDiverged,
                      TrainLog, load_items, train_priors, train_step1)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we reserve that
        raise UsageError(message)


def _echo_config(name: str, payload: dict) -> None:
    print(f"[{name}] resolved config: "
          f"{json.dumps(payload, sort_keys=True, default=str)}")


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _build_parser() -> _Parser:
    parser = _Parser(prog="mgvae", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a synthetic corpus")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--utterances-per-style", type=int, default=None)
    p.add_argument("--config", type=Path, default=None,
                   help="generator config JSON (overrides other flags)")

    p = sub.add_parser("train", help="run the training stages")
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path, help="checkpoint path")
    p.add_argument("--stage", choices=("1", "2", "baselines", "all"), default="all")
    p.add_argument("--init-from", type=Path, default=None,
                   help="checkpoint to continue from (required for stage 2/baselines)")
    p.add_argument("--epochs1", type=int, default=50)
    p.add_argument("--epochs2", type=int, default=20)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--kl-weights", default="1,1,1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision", choices=("f64", "f32"), default="f64")
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--latent-dim", type=int, default=2)
    p.add_argument("--no-residual", action="store_true")
    p.add_argument("--no-shared-decoder", action="store_true")
    p.add_argument("--ss-p-min", type=float, default=0.1)
    p.add_argument("--ss-decay", type=int, default=None,
                   help="teacher-forcing decay epochs (default: epochs2 / 2)")
    p.add_argument("--early-stop-patience", type=int, default=None)
    p.add_argument("--log", type=Path, default=None, help="training log (JSON lines)")

    p = sub.add_parser("synth", help="synthesize features for one utterance")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--utterance", required=True, help="utterance id from the manifest")
    p.add_argument("--mode", required=True, choices=MODES)
    p.add_argument("--z-u", default=None, help="utterance latent override 'x,y'")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("eval", help="metric report over a corpus split")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--modes", default="all",
                   help="'all', 'table1', or comma list of rows")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="report JSON path")

    p = sub.add_parser("export-latents", help="utterance latents with style labels")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--split", choices=("train", "valid", "test", "all"), default="all")
    p.add_argument("--include-fine", action="store_true",
                   help="also export phrase and word latents")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("serve", help="start the latent-explorer inference service")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--map-per-style", type=int, default=1500)
    p.add_argument("--ui-dir", type=Path, default=None)
    return parser


# ---------------------------------------------------------------------------
# subcommand implementations


def _cmd_gen_corpus(args) -> int:
    if args.config is not None:
        cfg = GenConfig.from_json(args.config.read_text(encoding="utf-8"))
        if args.seed != 0:
            cfg.seed = args.seed
    else:
        cfg = GenConfig(seed=args.seed)
    if args.utterances_per_style is not None:
        cfg.utterances_per_style = args.utterances_per_style
    _echo_config("gen-corpus", json.loads(cfg.to_json()))
    manifest = generate_corpus(cfg, args.out)
    print(f"wrote {len(manifest.items)} utterances to {args.out}")
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    kl = tuple(float(v) for v in args.kl_weights.split(","))
    if len(kl) != 3:
        raise UsageError("--kl-weights needs three comma-separated values")
    decay = args.ss_decay if args.ss_decay is not None else max(1, args.epochs2 // 2)
    return TrainConfig(lr=args.lr, batch_size=args.batch_size,
                       step1_epochs=args.epochs1, step2_epochs=args.epochs2,
                       kl_weights=kl, seed=args.seed, precision=args.precision,
                       schedule=ScheduleConfig(p_min=args.ss_p_min, decay_epochs=decay),
                       early_stop_patience=args.early_stop_patience)


def _cmd_train(args) -> int:
    config = _train_config(args)
    config.validate()
    manifest = CorpusManifest.load(args.corpus)
    stages = {"1": ("step1",), "2": ("step2",), "baselines": ("baselines",),
              "all": ("step1", "step2", "baselines")}[args.stage]

    if "step1" in stages:
        model_cfg = ModelConfig(d_ac=manifest.d_ac, d_ling=manifest.d_ling,
                                d_z=manifest.latent_dim, hidden=args.hidden,
                                residual=not args.no_residual,
                                shared_decoder=not args.no_shared_decoder,
                                precision=args.precision, init_seed=args.seed)
        bundle = Bundle.fresh(model_cfg)
    else:
        if args.init_from is None:
            raise UsageError(f"--init-from is required for stage {args.stage}")
        bundle = Bundle.load(args.init_from)
        if "step1" not in bundle.trained:
            raise UsageError("checkpoint has no step-1 training; run stage 1 first")
        if bundle.model.cfg.precision != args.precision:
            config.precision = bundle.model.cfg.precision

    _echo_config("train", {"train": asdict(config), "stages": list(stages),
                           "model": bundle.model.config_meta()})

    train_items = load_items(manifest, "train")
    valid_items = load_items(manifest, "valid")
    log = TrainLog()
    try:
        if "step1" in stages:
            log.records += train_step1(bundle.model, train_items, valid_items,
                                       config).records
            bundle.trained.add("step1")
        if "step2" in stages:
            log.records += train_priors(bundle.model, bundle.suite, train_items,
                                        config, MG_SYSTEMS).records
            bundle.trained.add("step2")
        if "baselines" in stages:
            log.records += train_priors(bundle.model, bundle.suite, train_items,
                                        config, BASELINE_SYSTEMS).records
            bundle.trained.add("baselines")
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        if exc.snapshot is not None and "step1" in stages:
            bundle.model.load_group_arrays(exc.snapshot)
            bundle.save(args.out)
            print(f"saved last good checkpoint to {args.out}", file=sys.stderr)
        if args.log is not None:
            args.log.parent.mkdir(parents=True, exist_ok=True)
            args.log.write_text(exc.log.to_jsonl(), encoding="utf-8")
        return EXIT_DIVERGED

    args.out.parent.mkdir(parents=True, exist_ok=True)
    bundle.save(args.out)
    if args.log is not None:
        args.log.parent.mkdir(parents=True, exist_ok=True)
        args.log.write_text(log.to_jsonl(), encoding="utf-8")
    print(f"saved checkpoint to {args.out} (stages: {sorted(bundle.trained)})")
    return EXIT_OK


def _find_item(manifest: CorpusManifest, uid: str):
    for item in manifest.items:
        if item.id == uid:
            return item
    raise CorpusError(f"utterance {uid!r} not found in manifest")


def _cmd_synth(args) -> int:
    bundle = Bundle.load(args.checkpoint)
    manifest = CorpusManifest.load(args.corpus)
    u = manifest.load_item(_find_item(manifest, args.utterance))
    z_u = None
    if args.z_u is not None:
        z_u = np.array([float(v) for v in args.z_u.split(",")], dtype=np.float64)
    _echo_config("synth", {"utterance": args.utterance, "mode": args.mode,
                           "z_u": None if z_u is None else z_u.tolist(),
                           "temperature": args.temperature, "seed": args.seed})
    bundle.require_mode(args.mode)
    req = SynthesisRequest(y=u.y, word_seg=u.word_seg, phrase_seg=u.phrase_seg,
                           mode=args.mode, z_u_override=z_u,
                           temperature=args.temperature, seed=args.seed)
    result = synthesize(req, bundle.model, bundle.suite)
    payload = {
        "utterance_id": u.id,
        "mode": result.mode,
        "temperature": args.temperature,
        "seed": args.seed,
        "z_utterance": None if result.z_utterance is None
        else result.z_utterance.reshape(-1).tolist(),
        "z_phrase": None if result.z_phrase is None else result.z_phrase.tolist(),
        "z_word": result.z_word.tolist(),
        "x_hat": result.x_hat.tolist(),
        "trace": {level: (None if tr is None else
                          {"mean": tr.mean.tolist(), "log_var": tr.log_var.tolist()})
                  for level, tr in result.trace.items()},
    }
    _write_json(args.out, payload)
    print(f"wrote synthesis result to {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    bundle = Bundle.load(args.checkpoint)
    manifest = CorpusManifest.load(args.corpus)
    rows = expand_modes(args.modes)
    _echo_config("eval", {"split": args.split, "rows": rows,
                          "temperature": args.temperature, "seed": args.seed})
    report = run_evaluation(bundle, manifest, args.split, rows,
                            temperature=args.temperature, seed=args.seed)
    print(report.table())
    if args.out is not None:
        _write_json(args.out, report.to_dict())
        print(f"wrote report to {args.out}")
    return EXIT_OK


def _cmd_export_latents(args) -> int:
    bundle = Bundle.load(args.checkpoint)
    if "step1" not in bundle.trained:
        raise PipelineError("export-latents requires a step-1 trained checkpoint")
    manifest = CorpusManifest.load(args.corpus)
    split = None if args.split == "all" else args.split
    _echo_config("export-latents", {"split": args.split,
                                    "include_fine": args.include_fine})
    items_payload = []
    for item in manifest.select(split):
        u = manifest.load_item(item)
        latents = bundle.model.oracle_latents(u)
        entry = {"id": u.id, "style": u.style, "split": item.split,
                 "z_utterance": latents.z_utterance.reshape(-1).tolist()}
        if args.include_fine:
            entry["z_phrase"] = latents.z_phrase.tolist()
            entry["z_word"] = latents.z_word.tolist()
        items_payload.append(entry)
    _write_json(args.out, {"latent_dim": manifest.latent_dim, "items": items_payload})
    print(f"wrote {len(items_payload)} latents to {args.out}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .service import ServiceState, serve_forever

    _echo_config("serve", {"host": args.host, "port": args.port,
                           "map_per_style": args.map_per_style,
                           "checkpoint": str(args.checkpoint),
                           "corpus": str(args.corpus)})
    state = ServiceState.load(args.checkpoint, args.corpus,
                              map_per_style=args.map_per_style)
    serve_forever(state, host=args.host, port=args.port, ui_dir=args.ui_dir)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    handlers = {
        "gen-corpus": _cmd_gen_corpus,
        "train": _cmd_train,
        "synth": _cmd_synth,
        "eval": _cmd_eval,
        "export-latents": _cmd_export_latents,
        "serve": _cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, CheckpointError, PipelineError, ShapeError, ValueError,
            KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
