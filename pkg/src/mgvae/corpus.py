"""Data model, on-disk format, and synthetic corpus generator.

Each utterance pairs a frame-aligned acoustic matrix X (frames x d_ac) with a
linguistic matrix Y (frames x d_ling), plus word and phrase segmentations and
a style label. The generator plants a known ground-truth process:

    X = style offset (constant per utterance, per phrase for the mixed style)
      + per-phrase slow drift (rank-limited direction, fixed decay profile)
      + per-word constant rank-limited modulation
      + per-word-symbol content pattern (the part Y predicts exactly)
      + small frame noise

The drift and modulation draws live in fixed low-rank channel subspaces so a
small per-segment latent can represent them exactly; that is what makes
latent recovery checkable.

Channel roles: 0 is the pitch-like channel, 1 the voiced/unvoiced mask,
2 an energy analogue excluded from spectral distortion, 3+ cepstral-like.
Y is a deterministic function of the word symbols and segment structure only.

File format (little-endian): magic ``MGVAE1``; u32 frames, d_ac, d_ling,
n_words, n_phrases; word boundary pairs (u32 start, end) then phrase pairs;
X then Y as float32 row-major. Style and id live in the JSON manifest.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Iterator

import numpy as np

from .layers import SegmentSpec, containment_map

MAGIC = b"MGVAE1"

PITCH_CHANNEL = 0
VOICING_CHANNEL = 1
ENERGY_CHANNEL = 2
FIRST_CEPSTRAL_CHANNEL = 3

POSITIONAL_FEATURES = 4  # within-word, within-phrase, within-utterance, word length

SPLITS = ("train", "valid", "test")


class CorpusError(Exception):
    """Malformed corpus file or invariant violation."""


@dataclass
class SegmentedUtterance:
    """One training/eval item; validated on construction."""

    id: str
    style: str
    x: np.ndarray  # (frames, d_ac) acoustic
    y: np.ndarray  # (frames, d_ling) linguistic
    word_seg: SegmentSpec
    phrase_seg: SegmentSpec

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float32)
        self.y = np.asarray(self.y, dtype=np.float32)
        if self.x.ndim != 2 or self.y.ndim != 2:
            raise CorpusError(f"{self.id}: X and Y must be 2-d")
        if self.x.shape[0] != self.y.shape[0]:
            raise CorpusError(f"{self.id}: X has {self.x.shape[0]} frames, "
                              f"Y has {self.y.shape[0]}")
        frames = self.x.shape[0]
        if self.word_seg.total_frames != frames or self.phrase_seg.total_frames != frames:
            raise CorpusError(f"{self.id}: segmentations do not tile {frames} frames")
        if self.phrase_seg.n_segments > self.word_seg.n_segments:
            raise CorpusError(f"{self.id}: more phrases than words")
        try:
            self.word_to_phrase = containment_map(self.word_seg, self.phrase_seg)
        except ValueError as exc:
            raise CorpusError(f"{self.id}: {exc}") from exc

    @property
    def frames(self) -> int:
        return self.x.shape[0]

    @property
    def n_words(self) -> int:
        return self.word_seg.n_segments

    @property
    def n_phrases(self) -> int:
        return self.phrase_seg.n_segments


def save_utterance(u: SegmentedUtterance, path: str | Path) -> None:
    path = Path(path)
    frames, d_ac = u.x.shape
    d_ling = u.y.shape[1]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<5I", frames, d_ac, d_ling, u.n_words, u.n_phrases))
        for s, e in u.word_seg.boundaries:
            fh.write(struct.pack("<2I", s, e))
        for s, e in u.phrase_seg.boundaries:
            fh.write(struct.pack("<2I", s, e))
        fh.write(np.ascontiguousarray(u.x, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(u.y, dtype="<f4").tobytes())


def load_utterance(path: str | Path, *, id: str = "", style: str = "") -> SegmentedUtterance:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + 20:
        raise CorpusError(f"{path}: truncated header")
    if raw[:len(MAGIC)] != MAGIC:
        raise CorpusError(f"{path}: bad magic {raw[:len(MAGIC)]!r}")
    frames, d_ac, d_ling, n_words, n_phrases = struct.unpack_from("<5I", raw, len(MAGIC))
    off = len(MAGIC) + 20
    need = off + 8 * (n_words + n_phrases) + 4 * frames * (d_ac + d_ling)
    if len(raw) != need:
        raise CorpusError(f"{path}: expected {need} bytes, found {len(raw)}")
    word_bounds = []
    for _ in range(n_words):
        s, e = struct.unpack_from("<2I", raw, off)
        word_bounds.append((s, e))
        off += 8
    phrase_bounds = []
    for _ in range(n_phrases):
        s, e = struct.unpack_from("<2I", raw, off)
        phrase_bounds.append((s, e))
        off += 8
    x = np.frombuffer(raw, dtype="<f4", count=frames * d_ac, offset=off).reshape(frames, d_ac)
    off += 4 * frames * d_ac
    y = np.frombuffer(raw, dtype="<f4", count=frames * d_ling, offset=off).reshape(frames, d_ling)
    try:
        word_seg = SegmentSpec(tuple(word_bounds))
        phrase_seg = SegmentSpec(tuple(phrase_bounds))
    except ValueError as exc:
        raise CorpusError(f"{path}: {exc}") from exc
    return SegmentedUtterance(id=id or path.stem, style=style, x=x.copy(), y=y.copy(),
                              word_seg=word_seg, phrase_seg=phrase_seg)


# ---------------------------------------------------------------------------
# manifest


@dataclass
class ManifestItem:
    id: str
    path: str  # relative to the manifest's directory
    style: str
    split: str


@dataclass
class CorpusManifest:
    d_ac: int
    d_ling: int
    latent_dim: int
    styles: list[str]
    items: list[ManifestItem]
    root: Path | None = None  # directory the item paths are relative to

    def save(self, path: str | Path) -> None:
        path = Path(path)
        payload = {
            "format": "mgvae-corpus",
            "version": 1,
            "dims": {"d_ac": self.d_ac, "d_ling": self.d_ling, "latent_dim": self.latent_dim},
            "styles": self.styles,
            "items": [asdict(it) for it in self.items],
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CorpusManifest":
        path = Path(path)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CorpusError(f"{path}: unreadable manifest: {exc}") from exc
        if payload.get("format") != "mgvae-corpus":
            raise CorpusError(f"{path}: not a corpus manifest")
        dims = payload["dims"]
        items = [ManifestItem(**it) for it in payload["items"]]
        seen = set()
        for it in items:
            if it.split not in SPLITS:
                raise CorpusError(f"{path}: unknown split {it.split!r} for {it.id}")
            if it.id in seen:
                raise CorpusError(f"{path}: duplicate item id {it.id!r}")
            seen.add(it.id)
        return cls(d_ac=dims["d_ac"], d_ling=dims["d_ling"], latent_dim=dims["latent_dim"],
                   styles=list(payload["styles"]), items=items, root=path.parent)

    def select(self, split: str | None = None) -> list[ManifestItem]:
        if split is None:
            return list(self.items)
        return [it for it in self.items if it.split == split]

    def load_item(self, item: ManifestItem) -> SegmentedUtterance:
        if self.root is None:
            raise CorpusError("manifest has no root directory")
        u = load_utterance(self.root / item.path, id=item.id, style=item.style)
        if u.x.shape[1] != self.d_ac or u.y.shape[1] != self.d_ling:
            raise CorpusError(f"{item.id}: dims {u.x.shape[1]}x{u.y.shape[1]} do not match "
                              f"manifest {self.d_ac}x{self.d_ling}")
        return u

    def load_split(self, split: str | None = None) -> Iterator[SegmentedUtterance]:
        for item in self.select(split):
            yield self.load_item(item)


# ---------------------------------------------------------------------------
# synthetic generator


@dataclass
class StyleSpec:
    """Per-style acoustic offset; ``mixed`` styles borrow another style per phrase."""

    offset: list[float] = field(default_factory=list)
    mixed: bool = False


def default_styles(d_ac: int = 12) -> dict[str, StyleSpec]:
    def vec(pitch: float, cepstral: float) -> list[float]:
        v = [0.0] * d_ac
        v[PITCH_CHANNEL] = pitch
        for c in range(FIRST_CEPSTRAL_CHANNEL, min(FIRST_CEPSTRAL_CHANNEL + 4, d_ac)):
            v[c] = cepstral
        return v

    return {
        "normal": StyleSpec(offset=[0.0] * d_ac),
        "happy": StyleSpec(offset=vec(2.0, 1.2)),
        "sad": StyleSpec(offset=vec(-2.0, -1.2)),
        "mixed": StyleSpec(offset=[0.0] * d_ac, mixed=True),
    }


@dataclass
class GenConfig:
    seed: int = 0
    d_ac: int = 12
    d_ling: int = 16
    latent_dim: int = 2
    utterances_per_style: int = 100
    split_ratios: tuple[float, float, float] = (0.7, 0.05, 0.25)  # train, valid, test
    words_range: tuple[int, int] = (4, 8)
    phrases_range: tuple[int, int] = (2, 3)
    frames_per_word: tuple[int, int] = (10, 30)
    vocab_size: int = 20
    phrase_drift_scale: float = 0.6
    phrase_drift_rank: int = 2  # drift directions span a rank-limited subspace
    word_mod_scale: float = 0.8
    word_mod_rank: int = 2      # so a small latent can represent them exactly
    content_scale: float = 1.2
    noise_scale: float = 0.1
    unvoiced_word_prob: float = 0.25
    max_unvoiced_fraction: float = 0.3
    styles: dict[str, StyleSpec] = field(default_factory=dict)

    def __post_init__(self):
        if not self.styles:
            self.styles = default_styles(self.d_ac)

    def validate(self) -> None:
        non_mixed = [n for n, s in self.styles.items() if not s.mixed]
        if len(non_mixed) < 2:
            raise CorpusError("config: need at least 2 non-mixed styles")
        for name, s in self.styles.items():
            if not s.mixed and len(s.offset) != self.d_ac:
                raise CorpusError(f"config: style {name!r} offset length != d_ac")
        if self.d_ling <= POSITIONAL_FEATURES:
            raise CorpusError("config: d_ling must exceed the positional feature count")
        if self.utterances_per_style < 1 or self.vocab_size < 2:
            raise CorpusError("config: counts must be positive")
        if abs(sum(self.split_ratios) - 1.0) > 1e-9 or any(r < 0 for r in self.split_ratios):
            raise CorpusError("config: split ratios must be non-negative and sum to 1")
        lo, hi = self.words_range
        plo, phi = self.phrases_range
        if not (1 <= lo <= hi) or not (1 <= plo <= phi) or plo > lo:
            raise CorpusError("config: invalid words/phrases ranges")
        if self.frames_per_word[0] < 1 or self.frames_per_word[0] > self.frames_per_word[1]:
            raise CorpusError("config: invalid frames_per_word range")
        if self.word_mod_rank < 1 or self.phrase_drift_rank < 1:
            raise CorpusError("config: modulation ranks must be >= 1")

    def to_json(self) -> str:
        payload = asdict(self)
        payload["styles"] = {n: asdict(s) for n, s in self.styles.items()}
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "GenConfig":
        payload = json.loads(text)
        styles = {n: StyleSpec(**s) for n, s in payload.pop("styles", {}).items()}
        for key in ("split_ratios", "words_range", "phrases_range", "frames_per_word"):
            if key in payload:
                payload[key] = tuple(payload[key])
        cfg = cls(**payload)
        if styles:
            cfg.styles = styles
        return cfg


def _content_table(cfg: GenConfig) -> np.ndarray:
    """Fixed per-symbol acoustic pattern, exactly zero-mean over the vocabulary."""
    rng = np.random.default_rng([cfg.seed, 101])
    table = rng.normal(0.0, 1.0, size=(cfg.vocab_size, cfg.d_ac))
    table -= table.mean(axis=0)
    table[:, VOICING_CHANNEL] = 0.0
    return table * cfg.content_scale


def _embedding_table(cfg: GenConfig) -> np.ndarray:
    rng = np.random.default_rng([cfg.seed, 202])
    width = cfg.d_ling - POSITIONAL_FEATURES
    table = rng.normal(0.0, 1.0, size=(cfg.vocab_size, width))
    table -= table.mean(axis=0)
    return table


def _mixing_matrix(cfg: GenConfig, key: int, rank: int, scale: float) -> np.ndarray:
    """Fixed (d_ac, rank) map from low-dimensional draws to channel space,
    zero on the voicing channel, unit per-channel variance in expectation."""
    rng = np.random.default_rng([cfg.seed, key])
    mat = rng.normal(0.0, 1.0, size=(cfg.d_ac, rank)) * (scale / np.sqrt(rank))
    mat[VOICING_CHANNEL] = 0.0
    return mat


def linguistic_features(cfg: GenConfig, symbols: np.ndarray, word_seg: SegmentSpec,
                        phrase_seg: SegmentSpec) -> np.ndarray:
    """Frame-level Y from word symbols and segment structure alone."""
    table = _embedding_table(cfg)
    frames = word_seg.total_frames
    y = np.zeros((frames, cfg.d_ling), dtype=np.float64)
    word_of = word_seg.segment_of_frame()
    phrase_of = phrase_seg.segment_of_frame()
    lo, hi = cfg.frames_per_word
    for t in range(frames):
        m = word_of[t]
        ws, we = word_seg.boundaries[m]
        ps, pe = phrase_seg.boundaries[phrase_of[t]]
        y[t, :table.shape[1]] = table[symbols[m]]
        y[t, -4] = (t - ws) / (we - ws)
        y[t, -3] = (t - ps) / (pe - ps)
        y[t, -2] = t / frames
        y[t, -1] = ((we - ws) - lo) / max(1, hi - lo)
    return y.astype(np.float32)


def _make_utterance(cfg: GenConfig, rng: np.random.Generator, style_name: str,
                    uid: str, content: np.ndarray, drift_mix: np.ndarray,
                    mod_mix: np.ndarray) -> SegmentedUtterance:
    non_mixed = [n for n, s in cfg.styles.items() if not s.mixed]
    style = cfg.styles[style_name]

    n_words = int(rng.integers(cfg.words_range[0], cfg.words_range[1] + 1))
    n_phrases = int(rng.integers(cfg.phrases_range[0], min(cfg.phrases_range[1], n_words) + 1))
    # distribute words over phrases, each phrase non-empty
    cuts = np.sort(rng.choice(np.arange(1, n_words), size=n_phrases - 1, replace=False)) \
        if n_phrases > 1 else np.array([], dtype=int)
    words_per_phrase = np.diff(np.concatenate([[0], cuts, [n_words]]))

    symbols = rng.integers(0, cfg.vocab_size, size=n_words)
    word_lengths = rng.integers(cfg.frames_per_word[0], cfg.frames_per_word[1] + 1,
                                size=n_words)
    word_seg = SegmentSpec.from_lengths(word_lengths.tolist())
    phrase_lengths = []
    idx = 0
    for count in words_per_phrase:
        phrase_lengths.append(int(word_lengths[idx:idx + count].sum()))
        idx += count
    phrase_seg = SegmentSpec.from_lengths(phrase_lengths)
    frames = word_seg.total_frames

    x = np.zeros((frames, cfg.d_ac), dtype=np.float64)

    # style offset: constant for plain styles, per phrase for mixed
    for k, (s, e) in enumerate(phrase_seg.boundaries):
        if style.mixed:
            chosen = non_mixed[int(rng.integers(0, len(non_mixed)))]
            x[s:e] += np.asarray(cfg.styles[chosen].offset)
        else:
            x[s:e] += np.asarray(style.offset)

    # per-phrase slow drift: a rank-limited direction scaled by a fixed
    # within-phrase decay profile (the profile is learnable from positions)
    for s, e in phrase_seg.boundaries:
        direction = drift_mix @ rng.standard_normal(cfg.phrase_drift_rank)
        ramp = np.linspace(0.0, 1.0, e - s)[:, None]
        x[s:e] += direction * (1.2 - 0.9 * ramp)

    # per-word constant rank-limited modulation + content pattern
    for m, (s, e) in enumerate(word_seg.boundaries):
        mod = mod_mix @ rng.standard_normal(cfg.word_mod_rank)
        x[s:e] += mod + content[symbols[m]]

    noise = rng.normal(0.0, cfg.noise_scale, size=(frames, cfg.d_ac))
    noise[:, VOICING_CHANNEL] = 0.0
    x += noise

    # voicing mask: mostly voiced, occasional unvoiced stretch inside a word
    x[:, VOICING_CHANNEL] = 1.0
    for s, e in word_seg.boundaries:
        if rng.random() < cfg.unvoiced_word_prob:
            span = max(1, int((e - s) * cfg.max_unvoiced_fraction * rng.random()))
            start = s + int(rng.integers(0, e - s - span + 1))
            x[start:start + span, VOICING_CHANNEL] = 0.0

    y = linguistic_features(cfg, symbols, word_seg, phrase_seg)
    return SegmentedUtterance(id=uid, style=style_name, x=x.astype(np.float32), y=y,
                              word_seg=word_seg, phrase_seg=phrase_seg)


def _split_assignment(rng: np.random.Generator, n: int,
                      ratios: tuple[float, float, float]) -> list[str]:
    n_valid = int(np.floor(n * ratios[1]))
    n_test = int(np.floor(n * ratios[2]))
    order = rng.permutation(n)
    labels = ["train"] * n
    for i in order[:n_valid]:
        labels[i] = "valid"
    for i in order[n_valid:n_valid + n_test]:
        labels[i] = "test"
    return labels


def generate_corpus(cfg: GenConfig, out_dir: str | Path) -> CorpusManifest:
    """Write utterance files, manifest, and a config echo under ``out_dir``."""
    cfg.validate()
    out_dir = Path(out_dir)
    (out_dir / "utts").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    content = _content_table(cfg)
    drift_mix = _mixing_matrix(cfg, 303, cfg.phrase_drift_rank, cfg.phrase_drift_scale)
    mod_mix = _mixing_matrix(cfg, 404, cfg.word_mod_rank, cfg.word_mod_scale)

    items: list[ManifestItem] = []
    style_names = sorted(cfg.styles)
    for style_name in style_names:
        splits = _split_assignment(rng, cfg.utterances_per_style, cfg.split_ratios)
        for i in range(cfg.utterances_per_style):
            uid = f"{style_name}_{i:04d}"
            u = _make_utterance(cfg, rng, style_name, uid, content, drift_mix, mod_mix)
            rel = f"utts/{uid}.mgu"
            save_utterance(u, out_dir / rel)
            items.append(ManifestItem(id=uid, path=rel, style=style_name, split=splits[i]))

    manifest = CorpusManifest(d_ac=cfg.d_ac, d_ling=cfg.d_ling, latent_dim=cfg.latent_dim,
                              styles=style_names, items=items, root=out_dir)
    manifest.save(out_dir / "manifest.json")
    (out_dir / "gen_config.json").write_text(cfg.to_json(), encoding="utf-8")
    return manifest
