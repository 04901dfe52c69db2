"""The six synthesis-time latent-sampling systems.

Every mode produces word-level latents for an input's linguistic features and
decodes them with the shared decoder:

- FG:        word latents drawn i.i.d. from N(0, I)
- FG+AR:     autoregressive word prior, free-running
- FG+CP:     per-word conditional prior
- FG+CP+AR:  per-word conditional prior with feedback
- MG+CP:     utterance prior -> non-AR converters, coarse to fine
- MG+CP+AR:  utterance prior -> AR converters, coarse to fine

``temperature`` scales the noise; 0 collapses every mode to its mean path.
A fixed utterance latent may override the prior draw in the MG modes only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .converters import PriorSuite
from .layers import SegmentSpec, containment_map
from .model import MultiGrainedVAE

MODES = ("FG", "FG+AR", "FG+CP", "FG+CP+AR", "MG+CP", "MG+CP+AR")
MG_MODES = ("MG+CP", "MG+CP+AR")


class PipelineError(ValueError):
    """Invalid synthesis request (bad mode, override on non-MG mode, ...)."""


@dataclass
class SynthesisRequest:
    y: np.ndarray
    word_seg: SegmentSpec
    phrase_seg: SegmentSpec
    mode: str
    z_u_override: np.ndarray | None = None
    temperature: float = 1.0
    seed: int | list[int] | None = None  # anything numpy seeds a Generator from
    eps: dict[str, np.ndarray] | None = None  # explicit noise per level

    def validate(self, d_z: int) -> None:
        if self.mode not in MODES:
            raise PipelineError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.temperature < 0:
            raise PipelineError("temperature must be >= 0")
        if self.z_u_override is not None:
            if self.mode not in MG_MODES:
                raise PipelineError(f"z_u override is only meaningful for MG modes, "
                                    f"not {self.mode}")
            arr = np.asarray(self.z_u_override, dtype=np.float64).reshape(-1)
            if arr.shape != (d_z,):
                raise PipelineError(f"z_u override must have {d_z} entries")


@dataclass
class GaussianTrace:
    mean: np.ndarray
    log_var: np.ndarray


@dataclass
class SynthesisResult:
    mode: str
    z_utterance: np.ndarray | None  # (1, d_z); None for FG-family modes
    z_phrase: np.ndarray | None     # (N, d_z); None for FG-family modes
    z_word: np.ndarray              # (M, d_z)
    x_hat: np.ndarray               # (frames, d_ac)
    trace: dict[str, GaussianTrace | None] = field(default_factory=dict)


def _noise(req: SynthesisRequest, level: str, shape: tuple[int, int],
           rng: np.random.Generator) -> np.ndarray:
    if req.eps is not None and level in req.eps:
        arr = np.asarray(req.eps[level], dtype=np.float64)
        if arr.shape != shape:
            raise PipelineError(f"eps[{level}] has shape {arr.shape}, expected {shape}")
        return arr
    return rng.standard_normal(shape)


def synthesize(req: SynthesisRequest, model: MultiGrainedVAE,
               suite: PriorSuite) -> SynthesisResult:
    d_z = model.cfg.d_z
    req.validate(d_z)
    if req.word_seg.total_frames != req.phrase_seg.total_frames or \
            req.word_seg.total_frames != np.asarray(req.y).shape[0]:
        raise PipelineError("linguistic features and segmentations disagree on frames")
    m_words = req.word_seg.n_segments
    n_phrases = req.phrase_seg.n_segments
    rng = np.random.default_rng(0 if req.seed is None else req.seed)
    tau = req.temperature
    trace: dict[str, GaussianTrace | None] = {"utterance": None, "phrase": None, "word": None}
    z_u = z_p = None

    if req.mode == "FG":
        eps_w = _noise(req, "word", (m_words, d_z), rng)
        z_w = tau * eps_w + 0.0  # + 0.0 folds -0.0 into +0.0 at temperature 0
        trace["word"] = GaussianTrace(mean=np.zeros((m_words, d_z)),
                                      log_var=np.zeros((m_words, d_z)))
    elif req.mode == "FG+AR":
        eps_w = _noise(req, "word", (m_words, d_z), rng)
        params, z_w = suite.prior_ar_word.run(m_words, eps=eps_w, temperature=tau)
        trace["word"] = GaussianTrace(params.mean.data.copy(), params.log_var.data.copy())
    elif req.mode == "FG+CP":
        eps_w = _noise(req, "word", (m_words, d_z), rng)
        params, z_w = suite.prior_cp_word.sample(req.y, req.word_seg, eps=eps_w,
                                                 temperature=tau)
        trace["word"] = GaussianTrace(params.mean.data.copy(), params.log_var.data.copy())
    elif req.mode == "FG+CP+AR":
        eps_w = _noise(req, "word", (m_words, d_z), rng)
        params, z_w = suite.prior_cp_ar_word.run(req.y, req.word_seg, eps=eps_w,
                                                 temperature=tau)
        trace["word"] = GaussianTrace(params.mean.data.copy(), params.log_var.data.copy())
    else:  # MG+CP / MG+CP+AR
        eps_u = _noise(req, "utterance", (1, d_z), rng)
        eps_p = _noise(req, "phrase", (n_phrases, d_z), rng)
        eps_w = _noise(req, "word", (m_words, d_z), rng)
        if req.z_u_override is not None:
            z_u = np.asarray(req.z_u_override, dtype=np.float64).reshape(1, d_z)
        else:
            params_u = suite.prior_utterance.predict(req.y, req.word_seg.total_frames)
            z_u = params_u.mean.data + np.exp(0.5 * params_u.log_var.data) * (tau * eps_u)
            trace["utterance"] = GaussianTrace(params_u.mean.data.copy(),
                                               params_u.log_var.data.copy())
        ar = req.mode == "MG+CP+AR"
        conv_p = suite.conv_phrase_ar if ar else suite.conv_phrase
        conv_w = suite.conv_word_ar if ar else suite.conv_word
        coarse_p = np.repeat(z_u.reshape(1, -1), n_phrases, axis=0)
        params_p, z_p = conv_p.convert(req.y, req.phrase_seg, coarse_p, eps=eps_p,
                                       temperature=tau)
        trace["phrase"] = GaussianTrace(params_p.mean.data.copy(),
                                        params_p.log_var.data.copy())
        word_to_phrase = containment_map(req.word_seg, req.phrase_seg)
        coarse_w = z_p[word_to_phrase]
        params_w, z_w = conv_w.convert(req.y, req.word_seg, coarse_w, eps=eps_w,
                                       temperature=tau)
        trace["word"] = GaussianTrace(params_w.mean.data.copy(),
                                      params_w.log_var.data.copy())

    x_hat = model.decode(req.y, np.asarray(z_w, dtype=model.cfg.dtype), req.word_seg,
                         level="word").data
    return SynthesisResult(mode=req.mode,
                           z_utterance=None if z_u is None else np.asarray(z_u, float),
                           z_phrase=None if z_p is None else np.asarray(z_p, float),
                           z_word=np.asarray(z_w, dtype=np.float64),
                           x_hat=np.asarray(x_hat, dtype=np.float64), trace=trace)


def smoothness(z_word: np.ndarray) -> float:
    """Mean squared Euclidean distance between consecutive word latents."""
    z = np.asarray(z_word, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise ValueError("smoothness requires at least 2 word latents")
    diffs = np.diff(z, axis=0)
    return float(np.mean(np.sum(diffs * diffs, axis=1)))
