"""Text-conditional priors and autoregressive latent converters.

Systems built here (one parameter group each, checkpointable independently):

- ``prior_utterance``: conditional prior over the utterance latent from the
  utterance-level linguistic embedding (three FC layers including output).
- ``conv_phrase[_ar]`` / ``conv_word[_ar]``: latent converters predicting the
  finer-level latent distribution from the coarser sampled latent plus the
  level's linguistic embeddings; AR variants feed their previous emitted
  latent back into the unidirectional recurrent layer.
- ``prior_ar_word``: autoregressive word prior over previous latents only.
- ``prior_cp_word`` / ``prior_cp_ar_word``: word-level conditional priors,
  the AR flavor adding a feedback input to the same FC stack.

Each system owns its rate converter (two bidirectional recurrent layers over
the linguistic features followed by segment mean pooling) where it needs one.
Emitted samples are plain arrays: feedback is treated as an input, so no
gradient flows through sampled latents.
"""

from __future__ import annotations

from dataclasses import dataclass


import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import Dense, LSTMCell, Recurrent, SegmentSpec, segment_mean_pool
from .model import GaussianParams, ModelConfig


@dataclass
class ScheduleConfig:
    """Linear teacher-forcing decay: p(e) = max(p_min, 1 - e / decay_epochs)."""

    p_min: float = 0.1
    decay_epochs: int = 10

    def validate(self) -> None:
        if not (0.0 <= self.p_min <= 1.0) or self.decay_epochs < 0:
            raise ValueError(f"invalid schedule: p_min={self.p_min}, "
                             f"decay_epochs={self.decay_epochs}")


def scheduled_sampling_ratio(epoch: int, schedule: ScheduleConfig) -> float:
    schedule.validate()
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    if schedule.decay_epochs == 0:
        return schedule.p_min
    return max(schedule.p_min, 1.0 - epoch / schedule.decay_epochs)


def _collect(modules: dict[str, object]) -> dict[str, Tensor]:
    out: dict[str, Tensor] = {}
    for prefix, mod in modules.items():
        for k, t in mod.parameters().items():
            out[f"{prefix}.{k}"] = t
    return out


class RateConverter:
    """Frame-level linguistic features -> one embedding row per segment."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, name: str):
        dt = cfg.dtype
        self.rnn1 = Recurrent(cfg.d_ling, cfg.hidden, rng=rng, name=f"{name}.rnn1", dtype=dt)
        self.rnn2 = Recurrent(2 * cfg.hidden, cfg.hidden, rng=rng, name=f"{name}.rnn2", dtype=dt)
        self.d_out = 2 * cfg.hidden
        self._dtype = dt

    def __call__(self, y: np.ndarray | Tensor, seg: SegmentSpec) -> Tensor:
        y_t = y if isinstance(y, Tensor) else ad.constant(np.asarray(y, dtype=self._dtype))
        return segment_mean_pool(self.rnn2(self.rnn1(y_t)), seg)

    def parameters(self) -> dict[str, Tensor]:
        return _collect({"rnn1": self.rnn1, "rnn2": self.rnn2})


class _PriorMLP:
    """Three FC layers including the (zero-initialized) output layer."""

    def __init__(self, d_in: int, width: int, d_z: int, rng: np.random.Generator,
                 name: str, dtype):
        self.fc1 = Dense(width, d_in, "tanh", rng=rng, name=f"{name}.fc1", dtype=dtype)
        self.fc2 = Dense(width, width, "tanh", rng=rng, name=f"{name}.fc2", dtype=dtype)
        self.out = Dense(2 * d_z, width, "linear", zero_init=True, name=f"{name}.out",
                         dtype=dtype)
        self.d_z = d_z

    def __call__(self, x: Tensor) -> GaussianParams:
        h = self.out(self.fc2(self.fc1(x)))
        return GaussianParams(mean=ad.cols(h, 0, self.d_z),
                              log_var=ad.cols(h, self.d_z, 2 * self.d_z))

    def parameters(self) -> dict[str, Tensor]:
        return _collect({"fc1": self.fc1, "fc2": self.fc2, "out": self.out})


def _sample(mean: Tensor, log_var: Tensor, eps_row: np.ndarray, temperature: float
            ) -> np.ndarray:
    return mean.data + np.exp(0.5 * log_var.data) * (temperature * eps_row)


class UtteranceConditionalPrior:
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, name: str = "prior_utterance"):
        self.rate = RateConverter(cfg, rng, f"{name}.rate")
        self.net = _PriorMLP(self.rate.d_out, cfg.width, cfg.d_z, rng, f"{name}.net", cfg.dtype)

    def predict(self, y: np.ndarray, total_frames: int | None = None) -> GaussianParams:
        frames = total_frames if total_frames is not None else np.asarray(y).shape[0]
        emb = self.rate(y, SegmentSpec.single(frames))
        return self.net(emb)

    def parameters(self) -> dict[str, Tensor]:
        return _collect({"rate": self.rate, "net": self.net})


class LatentConverter:
    """Coarse latent + level embeddings -> finer-level latent distribution.

    One bidirectional recurrent layer over [embedding, coarse], one
    unidirectional recurrent layer whose step input additionally carries the
    previous emitted latent in AR mode, and a zero-initialized output layer.
    The predicted mean is coarse + delta when ``residual`` is on.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, name: str, ar: bool):
        dt = cfg.dtype
        self.ar = ar
        self.residual = cfg.residual
        self.d_z = cfg.d_z
        self.rate = RateConverter(cfg, rng, f"{name}.rate")
        bi_in = self.rate.d_out + cfg.d_z
        self.bi = Recurrent(bi_in, cfg.hidden, rng=rng, name=f"{name}.bi", dtype=dt)
        uni_in = 2 * cfg.hidden + cfg.d_z + (cfg.d_z if ar else 0)
        self.uni = LSTMCell(uni_in, cfg.hidden, rng=rng, name=f"{name}.uni", dtype=dt)
        self.out = Dense(2 * cfg.d_z, cfg.hidden, "linear", zero_init=True,
                         name=f"{name}.out", dtype=dt)
        self._dtype = dt

    def convert(self, y: np.ndarray, fine_seg: SegmentSpec, coarse_rows: np.ndarray, *,
                teacher: np.ndarray | None = None,
                teacher_mask: np.ndarray | None = None,
                eps: np.ndarray | None = None,
                temperature: float = 1.0) -> tuple[GaussianParams, np.ndarray]:
        """Predict per-segment Gaussians and emit latent samples.

        ``teacher`` supplies oracle latents for feedback (teacher forcing);
        ``teacher_mask`` selects, per step, oracle vs own-sample feedback
        (scheduled sampling). Without ``teacher`` the converter free-runs on
        its own samples. ``eps`` is the (K, d_z) noise block; zeros when
        omitted, scaled by ``temperature``.
        """
        k_total = fine_seg.n_segments
        coarse_rows = np.asarray(coarse_rows, dtype=self._dtype)
        if coarse_rows.shape != (k_total, self.d_z):
            raise ad.ShapeError(f"convert: coarse rows {coarse_rows.shape}, expected "
                                f"({k_total}, {self.d_z})")
        if eps is None:
            eps = np.zeros((k_total, self.d_z), dtype=self._dtype)
        eps = np.asarray(eps, dtype=self._dtype)
        if eps.shape != (k_total, self.d_z):
            raise ad.ShapeError(f"convert: eps {eps.shape}, expected ({k_total}, {self.d_z})")
        if teacher is not None:
            teacher = np.asarray(teacher, dtype=self._dtype)
            if teacher.shape != (k_total, self.d_z):
                raise ad.ShapeError(f"convert: teacher {teacher.shape}, expected "
                                    f"({k_total}, {self.d_z})")
        if teacher_mask is None:
            teacher_mask = np.full(k_total, teacher is not None)
        elif teacher is None:
            raise ValueError("teacher_mask given without teacher latents")

        emb = self.rate(y, fine_seg)
        coarse_t = ad.constant(coarse_rows)
        bi_out = self.bi(ad.concat([emb, coarse_t], axis=1))

        h, c = self.uni.initial_state(self._dtype)
        means: list[Tensor] = []
        log_vars: list[Tensor] = []
        samples = np.empty((k_total, self.d_z), dtype=self._dtype)
        prev = np.zeros((1, self.d_z), dtype=self._dtype)
        for t in range(k_total):
            parts = [ad.rows(bi_out, t, t + 1), ad.constant(coarse_rows[t:t + 1])]
            if self.ar:
                parts.append(ad.constant(prev))
            h, c = self.uni.step(ad.concat(parts, axis=1), h, c)
            head = self.out(h)
            delta = ad.cols(head, 0, self.d_z)
            log_var = ad.cols(head, self.d_z, 2 * self.d_z)
            mean = ad.add(delta, ad.constant(coarse_rows[t:t + 1])) if self.residual else delta
            means.append(mean)
            log_vars.append(log_var)
            samples[t] = _sample(mean, log_var, eps[t], temperature)
            if self.ar:
                prev = (teacher[t:t + 1] if teacher_mask[t] else samples[t:t + 1].copy())
        params = GaussianParams(mean=ad.concat(means, axis=0),
                                log_var=ad.concat(log_vars, axis=0))
        return params, samples

    def parameters(self) -> dict[str, Tensor]:
        return _collect({"rate": self.rate, "bi": self.bi, "uni": self.uni, "out": self.out})


class ARWordPrior:
    """Word prior conditioned on previous word latents only (no text)."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, name: str = "prior_ar_word"):
        dt = cfg.dtype
        self.d_z = cfg.d_z
        self.uni = LSTMCell(cfg.d_z, cfg.hidden, rng=rng, name=f"{name}.uni", dtype=dt)
        self.out = Dense(2 * cfg.d_z, cfg.hidden, "linear", zero_init=True,
                         name=f"{name}.out", dtype=dt)
        self._dtype = dt

    def run(self, n_steps: int, *, teacher: np.ndarray | None = None,
            teacher_mask: np.ndarray | None = None, eps: np.ndarray | None = None,
            temperature: float = 1.0) -> tuple[GaussianParams, np.ndarray]:
        if eps is None:
            eps = np.zeros((n_steps, self.d_z), dtype=self._dtype)
        eps = np.asarray(eps, dtype=self._dtype)
        if teacher_mask is None:
            teacher_mask = np.full(n_steps, teacher is not None)
        h, c = self.uni.initial_state(self._dtype)
        means: list[Tensor] = []
        log_vars: list[Tensor] = []
        samples = np.empty((n_steps, self.d_z), dtype=self._dtype)
        prev = np.zeros((1, self.d_z), dtype=self._dtype)
        for t in range(n_steps):
            h, c = self.uni.step(ad.constant(prev.copy()), h, c)
            head = self.out(h)
            mean = ad.cols(head, 0, self.d_z)
            log_var = ad.cols(head, self.d_z, 2 * self.d_z)
            means.append(mean)
            log_vars.append(log_var)
            samples[t] = _sample(mean, log_var, eps[t], temperature)
            prev = (np.asarray(teacher[t:t + 1], dtype=self._dtype)
                    if teacher_mask[t] else samples[t:t + 1].copy())
        return (GaussianParams(mean=ad.concat(means, axis=0),
                               log_var=ad.concat(log_vars, axis=0)), samples)

    def parameters(self) -> dict[str, Tensor]:
        return _collect({"uni": self.uni, "out": self.out})


class WordConditionalPrior:
    """Per-word conditional prior: the utterance-prior MLP applied per word."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, name: str = "prior_cp_word"):
        self.rate = RateConverter(cfg, rng, f"{name}.rate")
        self.net = _PriorMLP(self.rate.d_out, cfg.width, cfg.d_z, rng, f"{name}.net", cfg.dtype)
        self.d_z = cfg.d_z
        self._dtype = cfg.dtype

    def predict(self, y: np.ndarray, word_seg: SegmentSpec) -> GaussianParams:
        return self.net(self.rate(y, word_seg))

    def sample(self, y: np.ndarray, word_seg: SegmentSpec, *,
               eps: np.ndarray | None = None, temperature: float = 1.0
               ) -> tuple[GaussianParams, np.ndarray]:
        params = self.predict(y, word_seg)
        if eps is None:
            eps = np.zeros((word_seg.n_segments, self.d_z), dtype=self._dtype)
        z = params.mean.data + np.exp(0.5 * params.log_var.data) * (temperature *
                                                                    np.asarray(eps))
        return params, z.astype(self._dtype)

    def parameters(self) -> dict[str, Tensor]:
        return _collect({"rate": self.rate, "net": self.net})


class WordConditionalARPrior:
    """Word conditional prior with a feedback connection: the same FC stack,
    with the previous emitted latent appended to each word's embedding."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator,
                 name: str = "prior_cp_ar_word"):
        self.rate = RateConverter(cfg, rng, f"{name}.rate")
        self.net = _PriorMLP(self.rate.d_out + cfg.d_z, cfg.width, cfg.d_z, rng,
                             f"{name}.net", cfg.dtype)
        self.d_z = cfg.d_z
        self._dtype = cfg.dtype

    def run(self, y: np.ndarray, word_seg: SegmentSpec, *,
            teacher: np.ndarray | None = None, teacher_mask: np.ndarray | None = None,
            eps: np.ndarray | None = None, temperature: float = 1.0
            ) -> tuple[GaussianParams, np.ndarray]:
        m_total = word_seg.n_segments
        if eps is None:
            eps = np.zeros((m_total, self.d_z), dtype=self._dtype)
        eps = np.asarray(eps, dtype=self._dtype)
        if teacher_mask is None:
            teacher_mask = np.full(m_total, teacher is not None)
        emb = self.rate(y, word_seg)
        means: list[Tensor] = []
        log_vars: list[Tensor] = []
        samples = np.empty((m_total, self.d_z), dtype=self._dtype)
        prev = np.zeros((1, self.d_z), dtype=self._dtype)
        for t in range(m_total):
            x = ad.concat([ad.rows(emb, t, t + 1), ad.constant(prev.copy())], axis=1)
            params_t = self.net(x)
            means.append(params_t.mean)
            log_vars.append(params_t.log_var)
            samples[t] = _sample(params_t.mean, params_t.log_var, eps[t], temperature)
            prev = (np.asarray(teacher[t:t + 1], dtype=self._dtype)
                    if teacher_mask[t] else samples[t:t + 1].copy())
        return (GaussianParams(mean=ad.concat(means, axis=0),
                               log_var=ad.concat(log_vars, axis=0)), samples)

    def parameters(self) -> dict[str, Tensor]:
        return _collect({"rate": self.rate, "net": self.net})


def converter_fit_loss(posterior_mean: np.ndarray, posterior_log_var: np.ndarray,
                       predicted: GaussianParams) -> Tensor:
    """Mean over segments of KL(q || p_hat) between diagonal Gaussians.

    The posterior q is a constant target; gradients flow into the prediction
    only. Zero iff the distributions coincide on every segment.
    """
    mu_q = np.asarray(posterior_mean, dtype=predicted.mean.data.dtype)
    lv_q = np.asarray(posterior_log_var, dtype=predicted.mean.data.dtype)
    if mu_q.shape != predicted.mean.shape or lv_q.shape != predicted.log_var.shape:
        raise ad.ShapeError(f"fit loss: posterior {mu_q.shape} vs predicted "
                            f"{predicted.mean.shape}")
    k_total = mu_q.shape[0]
    mu_q_t = ad.constant(mu_q)
    lv_q_t = ad.constant(lv_q)
    var_ratio = ad.exp(ad.sub(lv_q_t, predicted.log_var))
    mean_term = ad.mul(ad.square(ad.sub(predicted.mean, mu_q_t)),
                       ad.exp(ad.affine(predicted.log_var, -1.0)))
    log_term = ad.affine(ad.sub(predicted.log_var, lv_q_t), 1.0, -1.0)
    inner = ad.add(ad.add(var_ratio, mean_term), log_term)
    return ad.affine(ad.sum_all(inner), 0.5 / k_total)


class PriorSuite:
    """All step-2 systems plus the word-level baselines, one group each."""

    GROUPS = ("prior_utterance", "conv_phrase_ar", "conv_word_ar", "conv_phrase",
              "conv_word", "prior_ar_word", "prior_cp_word", "prior_cp_ar_word")

    def __init__(self, cfg: ModelConfig, init_seed: int | None = None):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.init_seed + 1 if init_seed is None else init_seed)
        self.prior_utterance = UtteranceConditionalPrior(cfg, rng)
        self.conv_phrase_ar = LatentConverter(cfg, rng, "conv_phrase_ar", ar=True)
        self.conv_word_ar = LatentConverter(cfg, rng, "conv_word_ar", ar=True)
        self.conv_phrase = LatentConverter(cfg, rng, "conv_phrase", ar=False)
        self.conv_word = LatentConverter(cfg, rng, "conv_word", ar=False)
        self.prior_ar_word = ARWordPrior(cfg, rng)
        self.prior_cp_word = WordConditionalPrior(cfg, rng)
        self.prior_cp_ar_word = WordConditionalARPrior(cfg, rng)

    def system(self, name: str):
        if name not in self.GROUPS:
            raise KeyError(f"unknown system {name!r}")
        return getattr(self, name)

    def parameter_groups(self) -> dict[str, dict[str, Tensor]]:
        return {name: self.system(name).parameters() for name in self.GROUPS}

    def export_group_arrays(self) -> dict[str, dict[str, np.ndarray]]:
        return {g: {n: t.data.copy() for n, t in group.items()}
                for g, group in self.parameter_groups().items()}

    def load_group_arrays(self, groups: dict[str, dict[str, np.ndarray]]) -> None:
        own = self.parameter_groups()
        for gname, tensors in groups.items():
            if gname not in own:
                raise KeyError(f"unknown parameter group {gname!r}")
            for tname, arr in tensors.items():
                t = own[gname][tname]
                arr = np.asarray(arr, dtype=self.cfg.dtype)
                if arr.shape != t.data.shape:
                    raise ad.ShapeError(f"{gname}.{tname}: shape {arr.shape} vs "
                                        f"{t.data.shape}")
                t.data = arr.copy()
