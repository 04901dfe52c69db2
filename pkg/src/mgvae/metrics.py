"""Objective evaluation metrics: spectral distortion (dB), global-variance
distance, pitch-channel RMSE over voiced frames, and latent diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import (FIRST_CEPSTRAL_CHANNEL, PITCH_CHANNEL, VOICING_CHANNEL)

MCD_CONST = 10.0 / math.log(10.0)


@dataclass(frozen=True)
class ChannelMap:
    """Channel roles for the metrics.

    ``cepstral`` lists the distortion channels directly (the energy-analogue
    channel is already excluded); ``pitch`` and ``voicing`` are single channels.
    """

    cepstral: tuple[int, ...]
    pitch: int = PITCH_CHANNEL
    voicing: int = VOICING_CHANNEL

    def validate(self, d_ac: int) -> None:
        idx = set(self.cepstral) | {self.pitch, self.voicing}
        if len(idx) != len(self.cepstral) + 2:
            raise ValueError("channel roles must be disjoint")
        if any(i < 0 or i >= d_ac for i in idx):
            raise ValueError(f"channel index out of range for d_ac={d_ac}")


def default_channel_map(d_ac: int = 12) -> ChannelMap:
    return ChannelMap(cepstral=tuple(range(FIRST_CEPSTRAL_CHANNEL, d_ac)))


def mcd(x_ref: np.ndarray, x_syn: np.ndarray, cmap: ChannelMap) -> float:
    """(10/ln 10) * mean over frames of sqrt(2 * sum of squared cepstral diffs)."""
    x_ref = np.asarray(x_ref, dtype=np.float64)
    x_syn = np.asarray(x_syn, dtype=np.float64)
    if x_ref.shape != x_syn.shape:
        raise ValueError(f"mcd: shapes {x_ref.shape} vs {x_syn.shape}")
    cmap.validate(x_ref.shape[1])
    diff = x_ref[:, list(cmap.cepstral)] - x_syn[:, list(cmap.cepstral)]
    per_frame = np.sqrt(2.0 * np.sum(diff * diff, axis=1))
    return float(MCD_CONST * per_frame.mean())


def global_variances(x: np.ndarray, cmap: ChannelMap) -> np.ndarray:
    """Per-channel variance over frames on the cepstral channels."""
    x = np.asarray(x, dtype=np.float64)
    return x[:, list(cmap.cepstral)].var(axis=0)


def gvd(x_ref_set: list[np.ndarray], x_syn_set: list[np.ndarray],
        cmap: ChannelMap) -> float:
    """Mean absolute difference of per-utterance global variance vectors."""
    if len(x_ref_set) != len(x_syn_set) or not x_ref_set:
        raise ValueError("gvd: reference and synthesis sets must pair up")
    per_utt = [np.abs(global_variances(r, cmap) - global_variances(s, cmap)).mean()
               for r, s in zip(x_ref_set, x_syn_set)]
    return float(np.mean(per_utt))


def f0_rmse(x_ref: np.ndarray, x_syn: np.ndarray, cmap: ChannelMap) -> float | None:
    """RMSE on the pitch channel over frames voiced in the reference.

    Returns None when no reference frame is voiced (explicitly undefined).
    """
    x_ref = np.asarray(x_ref, dtype=np.float64)
    x_syn = np.asarray(x_syn, dtype=np.float64)
    if x_ref.shape != x_syn.shape:
        raise ValueError(f"f0_rmse: shapes {x_ref.shape} vs {x_syn.shape}")
    cmap.validate(x_ref.shape[1])
    voiced = x_ref[:, cmap.voicing] > 0.5
    if not voiced.any():
        return None
    err = x_ref[voiced, cmap.pitch] - x_syn[voiced, cmap.pitch]
    return float(np.sqrt(np.mean(err * err)))


def latent_style_separation(latents: np.ndarray, labels: list[str]) -> float:
    """Leave-one-out nearest-centroid accuracy of style labels from latents.

    Ties go to the lowest style index (styles ordered by sorted label).
    """
    z = np.asarray(latents, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] != len(labels):
        raise ValueError("latents must be (n, d) with one label per row")
    styles = sorted(set(labels))
    if len(styles) < 2:
        raise ValueError("need at least 2 styles")
    index_of = {s: i for i, s in enumerate(styles)}
    y = np.array([index_of[l] for l in labels])
    counts = np.bincount(y, minlength=len(styles))
    if counts.min() < 2:
        raise ValueError("need at least 2 utterances per style")
    sums = np.zeros((len(styles), z.shape[1]))
    for s in range(len(styles)):
        sums[s] = z[y == s].sum(axis=0)
    correct = 0
    for i in range(len(y)):
        best_style = -1
        best_dist = np.inf
        for s in range(len(styles)):
            n = counts[s] - (1 if s == y[i] else 0)
            centroid = (sums[s] - (z[i] if s == y[i] else 0.0)) / n
            dist = float(np.sum((z[i] - centroid) ** 2))
            if dist < best_dist:  # ties keep the earlier (lowest) style index
                best_dist = dist
                best_style = s
        if best_style == y[i]:
            correct += 1
    return correct / len(y)


# ---------------------------------------------------------------------------
# evaluation report


@dataclass
class MetricSummary:
    mean: float | None
    stderr: float | None
    count: int

    @classmethod
    def from_values(cls, values: list[float]) -> "MetricSummary":
        vals = [v for v in values if v is not None]
        if not vals:
            return cls(mean=None, stderr=None, count=0)
        arr = np.asarray(vals, dtype=np.float64)
        se = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0
        return cls(mean=float(arr.mean()), stderr=se, count=len(arr))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "count": self.count}


@dataclass
class EvalRow:
    system: str
    mcd: MetricSummary
    gvd: MetricSummary
    f0_rmse: MetricSummary

    def to_dict(self) -> dict:
        return {"system": self.system, "mcd": self.mcd.to_dict(),
                "gvd": self.gvd.to_dict(), "f0_rmse": self.f0_rmse.to_dict()}


@dataclass
class EvalReport:
    split: str
    rows: list[EvalRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"split": self.split, "rows": [r.to_dict() for r in self.rows]}

    def table(self) -> str:
        def fmt(s: MetricSummary) -> str:
            if s.mean is None:
                return "undefined"
            return f"{s.mean:.4f} +/- {s.stderr:.4f}"

        width = max([len("system")] + [len(r.system) for r in self.rows]) + 2
        lines = [f"{'system':<{width}}{'MCD':>20}{'GVD':>20}{'F0ER':>20}"]
        for r in self.rows:
            lines.append(f"{r.system:<{width}}{fmt(r.mcd):>20}{fmt(r.gvd):>20}"
                         f"{fmt(r.f0_rmse):>20}")
        return "\n".join(lines)


def evaluate_pairs(system: str, refs: list[np.ndarray], syns: list[np.ndarray],
                   cmap: ChannelMap) -> EvalRow:
    """Per-utterance MCD / F0ER summaries plus per-utterance GVD terms."""
    mcds = [mcd(r, s, cmap) for r, s in zip(refs, syns)]
    gvds = [float(np.abs(global_variances(r, cmap) - global_variances(s, cmap)).mean())
            for r, s in zip(refs, syns)]
    f0s = [f0_rmse(r, s, cmap) for r, s in zip(refs, syns)]
    return EvalRow(system=system,
                   mcd=MetricSummary.from_values(mcds),
                   gvd=MetricSummary.from_values(gvds),
                   f0_rmse=MetricSummary.from_values(f0s))
