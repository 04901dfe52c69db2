"""Evaluation rows over a corpus split: the six sampling systems plus the
oracle/predicted reconstruction rows (encoder latents at each level, and word
latents predicted from the oracle utterance latent by the AR converters)."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .bundle import Bundle
from .corpus import CorpusManifest, SegmentedUtterance
from .layers import SegmentSpec
from .metrics import ChannelMap, EvalReport, default_channel_map, evaluate_pairs
from .pipelines import MODES, PipelineError, SynthesisRequest, synthesize

ORACLE_ROWS = ("oracle-zu", "oracle-zw", "pred-zw")
ROW_CHOICES = MODES + ORACLE_ROWS


def expand_modes(spec: str) -> list[str]:
    """Expand an eval --modes argument: 'all', 'table1', or a comma list."""
    names: list[str] = []
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        if token == "all":
            names.extend(MODES)
        elif token == "table1":
            names.extend(ORACLE_ROWS)
        elif token in ROW_CHOICES:
            names.append(token)
        else:
            raise PipelineError(f"unknown eval row {token!r}; choices: all, table1, "
                                f"{', '.join(ROW_CHOICES)}")
    if not names:
        raise PipelineError("no eval rows requested")
    return names


def _require_row(bundle: Bundle, row: str) -> None:
    if row == "oracle-zu" or row == "oracle-zw":
        if "step1" not in bundle.trained:
            raise PipelineError(f"row {row} requires a step-1 trained checkpoint")
    elif row == "pred-zw":
        missing = {"step1", "step2"} - bundle.trained
        if missing:
            raise PipelineError(f"row {row} requires trained stages {sorted(missing)}")
    else:
        bundle.require_mode(row)


def predicted_word_latents(bundle: Bundle, u: SegmentedUtterance,
                           z_u: np.ndarray, *, ar: bool = True,
                           temperature: float = 0.0,
                           eps: dict[str, np.ndarray] | None = None
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Chain the latent converters from a given utterance latent."""
    suite = bundle.suite
    conv_p = suite.conv_phrase_ar if ar else suite.conv_phrase
    conv_w = suite.conv_word_ar if ar else suite.conv_word
    coarse_p = np.repeat(np.asarray(z_u).reshape(1, -1), u.n_phrases, axis=0)
    eps = eps or {}
    _, z_p = conv_p.convert(u.y, u.phrase_seg, coarse_p, eps=eps.get("phrase"),
                            temperature=temperature)
    coarse_w = z_p[u.word_to_phrase]
    _, z_w = conv_w.convert(u.y, u.word_seg, coarse_w, eps=eps.get("word"),
                            temperature=temperature)
    return z_p, z_w


def features_for_row(bundle: Bundle, u: SegmentedUtterance, row: str,
                     temperature: float, seed) -> np.ndarray:
    """Synthesized/reconstructed acoustic features for one eval row."""
    model = bundle.model
    if row == "oracle-zu":
        latents = model.oracle_latents(u)
        x_hat = model.decode(u.y, latents.z_utterance, SegmentSpec.single(u.frames),
                             level="utterance")
        return np.asarray(x_hat.data, dtype=np.float64)
    if row == "oracle-zw":
        latents = model.oracle_latents(u)
        x_hat = model.decode(u.y, latents.z_word, u.word_seg, level="word")
        return np.asarray(x_hat.data, dtype=np.float64)
    if row == "pred-zw":
        # predicted word latents are sampled from the converter chain at the
        # requested temperature, matching how the systems produce latents
        latents = model.oracle_latents(u)
        rng = np.random.default_rng(seed)
        eps = {"phrase": rng.standard_normal((u.n_phrases, model.cfg.d_z)),
               "word": rng.standard_normal((u.n_words, model.cfg.d_z))}
        _, z_w = predicted_word_latents(bundle, u, latents.z_utterance, ar=True,
                                        temperature=temperature, eps=eps)
        x_hat = model.decode(u.y, z_w, u.word_seg, level="word")
        return np.asarray(x_hat.data, dtype=np.float64)
    req = SynthesisRequest(y=u.y, word_seg=u.word_seg, phrase_seg=u.phrase_seg,
                           mode=row, temperature=temperature, seed=seed)
    return synthesize(req, model, bundle.suite).x_hat


def run_evaluation(bundle: Bundle, manifest: CorpusManifest, split: str,
                   rows: Sequence[str], *, temperature: float = 1.0, seed: int = 0,
                   cmap: ChannelMap | None = None) -> EvalReport:
    items = list(manifest.load_split(split))
    if not items:
        raise PipelineError(f"split {split!r} has no items")
    cmap = cmap or default_channel_map(manifest.d_ac)
    for row in rows:
        _require_row(bundle, row)
    refs = [np.asarray(u.x, dtype=np.float64) for u in items]
    report = EvalReport(split=split)
    for row in rows:
        syns = [features_for_row(bundle, u, row, temperature, [seed, i])
                for i, u in enumerate(items)]
        report.rows.append(evaluate_pairs(row, refs, syns, cmap))
    return report
