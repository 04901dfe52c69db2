"""Two-step training: step 1 fits encoders and decoder(s) with the summed
multi-level ELBO; step 2 freezes them and fits the conditional prior and the
latent converters (plus the word-level baseline priors) to the frozen
posteriors, with scheduled sampling for the autoregressive systems.

All stochastic choices (shuffling, noise draws, scheduled-sampling coins,
oracle samples) come from one generator seeded by the config, so a run is
reproducible bit-for-bit at a fixed precision.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, backward
from .converters import (PriorSuite, ScheduleConfig, converter_fit_loss,
                         scheduled_sampling_ratio)
from .corpus import CorpusManifest, SegmentedUtterance
from .model import MultiGrainedVAE, PosteriorSummary

MG_SYSTEMS = ("prior_utterance", "conv_phrase_ar", "conv_word_ar", "conv_phrase",
              "conv_word")
BASELINE_SYSTEMS = ("prior_ar_word", "prior_cp_word", "prior_cp_ar_word")


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the last good parameter snapshot."""

    def __init__(self, message: str, snapshot: dict | None, log: "TrainLog"):
        super().__init__(message)
        self.snapshot = snapshot
        self.log = log


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 8
    step1_epochs: int = 50
    step2_epochs: int = 20
    kl_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    schedule: ScheduleConfig | None = None  # defaults to p_min 0.1, decay = step2/2
    seed: int = 0
    checkpoint_every: int = 0  # epochs between snapshots kept for divergence recovery
    precision: str = "f64"
    early_stop_patience: int | None = None

    def __post_init__(self):
        if self.schedule is None:
            self.schedule = ScheduleConfig(p_min=0.1,
                                           decay_epochs=max(1, self.step2_epochs // 2))

    def validate(self) -> None:
        if self.lr < 0 or self.batch_size < 1 or self.step1_epochs < 0 \
                or self.step2_epochs < 0:
            raise ValueError("train config: negative or zero-sized settings")
        if len(self.kl_weights) != 3 or any(w < 0 for w in self.kl_weights):
            raise ValueError("train config: three non-negative KL weights required")
        if self.precision not in ("f64", "f32"):
            raise ValueError(f"train config: unknown precision {self.precision}")
        self.schedule.validate()


@dataclass
class TrainLog:
    records: list[dict] = field(default_factory=list)

    def append(self, record: dict) -> None:
        self.records.append(record)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    @classmethod
    def from_jsonl(cls, text: str) -> "TrainLog":
        return cls(records=[json.loads(line) for line in text.splitlines() if line.strip()])

    def series(self, key: str, step: int | None = None) -> list[float]:
        return [r[key] for r in self.records
                if key in r and (step is None or r.get("step") == step)]


class Adam:
    """Stochastic gradient descent with bias-corrected adaptive moments."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, scale: float = 1.0) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad * scale
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[k] / b1c
            v_hat = self.v[k] / b2c
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


def group_checksums(groups: dict[str, dict[str, np.ndarray]]) -> dict[str, str]:
    out = {}
    for gname, tensors in groups.items():
        h = hashlib.sha256()
        for tname in sorted(tensors):
            h.update(tname.encode())
            h.update(np.ascontiguousarray(tensors[tname]).tobytes())
        out[gname] = h.hexdigest()
    return out


def load_items(manifest: CorpusManifest, split: str | None) -> list[SegmentedUtterance]:
    return list(manifest.load_split(split))


def _zero_noise(model: MultiGrainedVAE, u: SegmentedUtterance) -> dict[str, np.ndarray]:
    return {level: np.zeros((model.seg_for(u, level).n_segments, model.cfg.d_z))
            for level in ("utterance", "phrase", "word")}


def validation_loss(model: MultiGrainedVAE, items: Sequence[SegmentedUtterance],
                    betas: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> float:
    """Deterministic multi-level loss on the posterior mean path (noise = 0)."""
    if not items:
        return float("nan")
    total = 0.0
    for u in items:
        loss, _ = model.multi_level_loss(u, noise=_zero_noise(model, u), betas=betas)
        total += float(loss.data)
    return total / len(items)


def train_step1(model: MultiGrainedVAE, train_items: Sequence[SegmentedUtterance],
                valid_items: Sequence[SegmentedUtterance], config: TrainConfig
                ) -> TrainLog:
    """Fit encoders and decoder(s); prior/converter parameters are untouched."""
    config.validate()
    if config.precision != model.cfg.precision:
        raise ValueError(f"config precision {config.precision} != model "
                         f"{model.cfg.precision}")
    params = model.parameters()
    opt = Adam(params, lr=config.lr)
    rng = np.random.default_rng(config.seed)
    log = TrainLog()
    last_good = model.export_group_arrays()
    best_val = np.inf
    best_snapshot = None
    stall = 0
    for epoch in range(1, config.step1_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_items))
        epoch_loss = 0.0
        diag_sums: dict[str, float] = {}
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            opt.zero_grad()
            for idx in batch:
                u = train_items[idx]
                loss, diags = model.multi_level_loss(u, rng=rng, betas=config.kl_weights)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise TrainingDiverged(
                        f"step1 loss {value} at epoch {epoch}, item {u.id}",
                        last_good, log)
                backward(loss)
                epoch_loss += value
                for k, v in diags.items():
                    diag_sums[k] = diag_sums.get(k, 0.0) + v
            opt.step(scale=1.0 / len(batch))
        n = len(train_items)
        record = {"step": 1, "epoch": epoch, "loss": epoch_loss / n}
        record.update({k: v / n for k, v in diag_sums.items()})
        record["val_loss"] = (validation_loss(model, valid_items, config.kl_weights)
                              if valid_items else None)
        record["wall_time"] = time.perf_counter() - t0
        log.append(record)
        if config.checkpoint_every and epoch % config.checkpoint_every == 0:
            last_good = model.export_group_arrays()
        elif not config.checkpoint_every:
            last_good = model.export_group_arrays()
        if config.early_stop_patience is not None and valid_items:
            if record["val_loss"] < best_val - 1e-12:
                best_val = record["val_loss"]
                best_snapshot = model.export_group_arrays()
                stall = 0
            else:
                stall += 1
                if stall > config.early_stop_patience:
                    if best_snapshot is not None:
                        model.load_group_arrays(best_snapshot)
                    break
    return log


@dataclass
class _OracleChain:
    z_utterance: np.ndarray
    z_phrase: np.ndarray
    z_word: np.ndarray
    mean_phrase: np.ndarray
    mean_word: np.ndarray
    summary: PosteriorSummary


def _draw_oracle(summary: PosteriorSummary, d_z: int, rng: np.random.Generator
                 ) -> _OracleChain:
    eps_u = rng.standard_normal((1, d_z))
    eps_p = rng.standard_normal((summary.delta_phrase.shape[0], d_z))
    eps_w = rng.standard_normal((summary.delta_word.shape[0], d_z))
    z_u, z_p, z_w, mu_p, mu_w = summary.chain_sample(eps_u, eps_p, eps_w)
    return _OracleChain(z_u, z_p, z_w, mu_p, mu_w, summary)


def _system_fit_loss(name: str, suite: PriorSuite, u: SegmentedUtterance,
                     oracle: _OracleChain, p_teacher: float,
                     rng: np.random.Generator, d_z: int) -> Tensor:
    s = oracle.summary
    if name == "prior_utterance":
        predicted = suite.prior_utterance.predict(u.y, u.frames)
        return converter_fit_loss(s.mean_utterance, s.log_var_utterance, predicted)

    def coins(n: int) -> np.ndarray:
        return rng.random(n) < p_teacher

    if name in ("conv_phrase_ar", "conv_phrase"):
        coarse = np.repeat(oracle.z_utterance.reshape(1, -1), u.n_phrases, axis=0)
        conv = suite.system(name)
        kwargs = {}
        if conv.ar:
            kwargs = {"teacher": oracle.z_phrase, "teacher_mask": coins(u.n_phrases),
                      "eps": rng.standard_normal((u.n_phrases, d_z))}
        predicted, _ = conv.convert(u.y, u.phrase_seg, coarse, **kwargs)
        return converter_fit_loss(oracle.mean_phrase, s.log_var_phrase, predicted)
    if name in ("conv_word_ar", "conv_word"):
        coarse = oracle.z_phrase[u.word_to_phrase]
        conv = suite.system(name)
        kwargs = {}
        if conv.ar:
            kwargs = {"teacher": oracle.z_word, "teacher_mask": coins(u.n_words),
                      "eps": rng.standard_normal((u.n_words, d_z))}
        predicted, _ = conv.convert(u.y, u.word_seg, coarse, **kwargs)
        return converter_fit_loss(oracle.mean_word, s.log_var_word, predicted)
    if name == "prior_ar_word":
        predicted, _ = suite.prior_ar_word.run(
            u.n_words, teacher=oracle.z_word, teacher_mask=coins(u.n_words),
            eps=rng.standard_normal((u.n_words, d_z)))
        return converter_fit_loss(oracle.mean_word, s.log_var_word, predicted)
    if name == "prior_cp_word":
        predicted = suite.prior_cp_word.predict(u.y, u.word_seg)
        return converter_fit_loss(oracle.mean_word, s.log_var_word, predicted)
    if name == "prior_cp_ar_word":
        predicted, _ = suite.prior_cp_ar_word.run(
            u.y, u.word_seg, teacher=oracle.z_word, teacher_mask=coins(u.n_words),
            eps=rng.standard_normal((u.n_words, d_z)))
        return converter_fit_loss(oracle.mean_word, s.log_var_word, predicted)
    raise KeyError(f"unknown system {name!r}")


def compute_posterior_summaries(model: MultiGrainedVAE,
                                items: Sequence[SegmentedUtterance]
                                ) -> dict[str, PosteriorSummary]:
    return {u.id: model.posterior_summary(u) for u in items}


def train_priors(model: MultiGrainedVAE, suite: PriorSuite,
                 train_items: Sequence[SegmentedUtterance], config: TrainConfig,
                 systems: Sequence[str],
                 summaries: dict[str, PosteriorSummary] | None = None) -> TrainLog:
    """Shared step-2/baseline loop: encoders and decoder stay frozen.

    Oracle latents are posterior samples drawn per epoch from cached posterior
    summaries (computed here unless supplied); AR systems mix oracle and
    own-sample feedback per step with the scheduled-sampling ratio.
    """
    config.validate()
    frozen_before = group_checksums(model.export_group_arrays())
    if summaries is None:
        summaries = compute_posterior_summaries(model, train_items)
    opts = {name: Adam(suite.system(name).parameters(), lr=config.lr)
            for name in systems}
    rng = np.random.default_rng(config.seed + 1)
    d_z = model.cfg.d_z
    log = TrainLog()
    for epoch in range(1, config.step2_epochs + 1):
        t0 = time.perf_counter()
        p_teacher = scheduled_sampling_ratio(epoch - 1, config.schedule)
        order = rng.permutation(len(train_items))
        sums = {name: 0.0 for name in systems}
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            for opt in opts.values():
                opt.zero_grad()
            for idx in batch:
                u = train_items[idx]
                oracle = _draw_oracle(summaries[u.id], d_z, rng)
                for name in systems:
                    loss = _system_fit_loss(name, suite, u, oracle, p_teacher, rng, d_z)
                    value = float(loss.data)
                    if not np.isfinite(value):
                        raise TrainingDiverged(
                            f"fit loss {value} for {name} at epoch {epoch}",
                            suite.export_group_arrays(), log)
                    backward(loss)
                    sums[name] += value
            for opt in opts.values():
                opt.step(scale=1.0 / len(batch))
        n = len(train_items)
        record = {"step": 2, "epoch": epoch, "teacher_ratio": p_teacher,
                  "wall_time": time.perf_counter() - t0}
        for name in systems:
            record[f"fit_{name}"] = sums[name] / n
        record["fit_total"] = sum(sums[name] for name in systems) / n
        log.append(record)
    frozen_after = group_checksums(model.export_group_arrays())
    if frozen_before != frozen_after:
        raise RuntimeError("step-2 training mutated frozen step-1 parameters")
    return log


def train_step2(model: MultiGrainedVAE, suite: PriorSuite,
                train_items: Sequence[SegmentedUtterance], config: TrainConfig,
                systems: Sequence[str] = MG_SYSTEMS) -> TrainLog:
    """Fit the conditional prior and the (AR and non-AR) latent converters."""
    return train_priors(model, suite, train_items, config, systems)


def train_baselines(model: MultiGrainedVAE, suite: PriorSuite,
                    train_items: Sequence[SegmentedUtterance], config: TrainConfig,
                    systems: Sequence[str] = BASELINE_SYSTEMS) -> TrainLog:
    """Fit the word-level baseline priors to the word posteriors directly."""
    return train_priors(model, suite, train_items, config, systems)
