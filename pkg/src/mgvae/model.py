"""The multi-grained VAE: three resolution-specific encoders with residual
structure, a shared frame-level decoder, reparameterized sampling, and the
ELBO loss.

Residual structure: the phrase/word posterior mean is the (sampled, gradient-
blocked) coarser latent plus a learned delta from a zero-initialized head, so
a fresh model satisfies the residual identity exactly. Both the residual
connection and decoder sharing can be disabled independently for ablations.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict


import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import SegmentedUtterance
from .layers import Dense, Recurrent, SegmentSpec, broadcast_segments, segment_mean_pool

LEVELS = ("utterance", "phrase", "word")


@dataclass
class ModelConfig:
    d_ac: int = 12
    d_ling: int = 16
    d_z: int = 2
    hidden: int = 32  # recurrent hidden size H; bidirectional width is 2H
    width: int = 32   # merge width of the input/merge FC layers
    residual: bool = True
    shared_decoder: bool = True
    precision: str = "f64"  # "f64" | "f32"
    init_seed: int = 0

    @property
    def dtype(self):
        return np.float64 if self.precision == "f64" else np.float32


@dataclass
class GaussianParams:
    """Diagonal Gaussian over a (K, d_z) latent block."""

    mean: Tensor
    log_var: Tensor

    @property
    def n_segments(self) -> int:
        return self.mean.shape[0]


@dataclass
class LatentSet:
    z_utterance: np.ndarray  # (1, d_z)
    z_phrase: np.ndarray | None  # (N, d_z)
    z_word: np.ndarray  # (M, d_z)


def reparameterize(g: GaussianParams, noise: np.ndarray) -> Tensor:
    """z = mean + exp(log_var / 2) * noise, differentiable in mean and log_var."""
    eps = ad.constant(np.asarray(noise, dtype=g.mean.data.dtype))
    if eps.shape != g.mean.shape:
        raise ad.ShapeError(f"reparameterize: noise {eps.shape} vs mean {g.mean.shape}")
    return ad.add(g.mean, ad.mul(ad.exp(ad.affine(g.log_var, 0.5)), eps))


def kl_to_standard_normal(g: GaussianParams) -> Tensor:
    """KL(q || N(0, I)) summed over latent dims, averaged over segments."""
    inner = ad.add(ad.add(ad.square(g.mean), ad.exp(g.log_var)),
                   ad.affine(g.log_var, -1.0, -1.0))
    return ad.affine(ad.sum_all(inner), 0.5 / g.n_segments)


def reconstruction_error(x_hat: Tensor, x: Tensor) -> Tensor:
    """Per-frame, per-channel mean squared error."""
    return ad.mean_all(ad.square(ad.sub(x_hat, x)))


class EncoderStack:
    """Acoustic+linguistic merge FCs, two bidirectional recurrent layers,
    segment mean pooling, and linear mean / log-variance heads."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, name: str):
        dt = cfg.dtype
        self.fc_ac = Dense(cfg.width, cfg.d_ac, "tanh", rng=rng, name=f"{name}.fc_ac", dtype=dt)
        self.fc_ling = Dense(cfg.width, cfg.d_ling, "tanh", rng=rng, name=f"{name}.fc_ling",
                             dtype=dt)
        self.rnn1 = Recurrent(cfg.width, cfg.hidden, rng=rng, name=f"{name}.rnn1", dtype=dt)
        self.rnn2 = Recurrent(2 * cfg.hidden, cfg.hidden, rng=rng, name=f"{name}.rnn2", dtype=dt)
        self.head_mean = Dense(cfg.d_z, 2 * cfg.hidden, "linear", zero_init=True,
                               name=f"{name}.head_mean", dtype=dt)
        self.head_log_var = Dense(cfg.d_z, 2 * cfg.hidden, "linear", zero_init=True,
                                  name=f"{name}.head_log_var", dtype=dt)

    def __call__(self, x: Tensor, y: Tensor, seg: SegmentSpec) -> tuple[Tensor, Tensor]:
        h = ad.add(self.fc_ac(x), self.fc_ling(y))
        h = self.rnn2(self.rnn1(h))
        pooled = segment_mean_pool(h, seg)
        return self.head_mean(pooled), self.head_log_var(pooled)

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for prefix, mod in (("fc_ac", self.fc_ac), ("fc_ling", self.fc_ling),
                            ("rnn1", self.rnn1), ("rnn2", self.rnn2),
                            ("head_mean", self.head_mean), ("head_log_var", self.head_log_var)):
            for k, t in mod.parameters().items():
                out[f"{prefix}.{k}"] = t
        return out


class Decoder:
    """Linguistic+latent merge FCs, two bidirectional recurrent layers, and a
    linear output layer back to the acoustic width."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, name: str):
        dt = cfg.dtype
        self.fc_ling = Dense(cfg.width, cfg.d_ling, "tanh", rng=rng, name=f"{name}.fc_ling",
                             dtype=dt)
        self.fc_z = Dense(cfg.width, cfg.d_z, "tanh", rng=rng, name=f"{name}.fc_z", dtype=dt)
        self.rnn1 = Recurrent(cfg.width, cfg.hidden, rng=rng, name=f"{name}.rnn1", dtype=dt)
        self.rnn2 = Recurrent(2 * cfg.hidden, cfg.hidden, rng=rng, name=f"{name}.rnn2", dtype=dt)
        self.out = Dense(cfg.d_ac, 2 * cfg.hidden, "linear", rng=rng, name=f"{name}.out",
                         dtype=dt)

    def __call__(self, y: Tensor, z: Tensor, seg: SegmentSpec) -> Tensor:
        z_frames = broadcast_segments(z, seg)
        h = ad.add(self.fc_ling(y), self.fc_z(z_frames))
        h = self.rnn2(self.rnn1(h))
        return self.out(h)

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for prefix, mod in (("fc_ling", self.fc_ling), ("fc_z", self.fc_z),
                            ("rnn1", self.rnn1), ("rnn2", self.rnn2), ("out", self.out)):
            for k, t in mod.parameters().items():
                out[f"{prefix}.{k}"] = t
        return out


@dataclass
class LevelResult:
    params: GaussianParams
    z: Tensor
    x_hat: Tensor
    recon: Tensor
    kl: Tensor
    loss: Tensor


@dataclass
class ChainResult:
    levels: dict[str, LevelResult]

    def total_loss(self) -> Tensor:
        loss = self.levels["utterance"].loss
        loss = ad.add(loss, self.levels["phrase"].loss)
        return ad.add(loss, self.levels["word"].loss)

    def diagnostics(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for level, res in self.levels.items():
            out[f"recon_{level}"] = float(res.recon.data)
            out[f"kl_{level}"] = float(res.kl.data)
        return out

    def latents(self) -> LatentSet:
        return LatentSet(z_utterance=self.levels["utterance"].z.data.copy(),
                         z_phrase=self.levels["phrase"].z.data.copy(),
                         z_word=self.levels["word"].z.data.copy())


@dataclass
class PosteriorSummary:
    """Sample-independent posterior pieces for one utterance.

    ``delta_*`` hold the head outputs only; in residual mode the full phrase
    mean is ``z_utterance + delta_phrase`` for whichever z_utterance was drawn.
    """

    mean_utterance: np.ndarray
    log_var_utterance: np.ndarray
    delta_phrase: np.ndarray
    log_var_phrase: np.ndarray
    delta_word: np.ndarray
    log_var_word: np.ndarray
    word_to_phrase: np.ndarray
    residual: bool

    def chain_sample(self, eps_u: np.ndarray, eps_p: np.ndarray, eps_w: np.ndarray):
        """Draw (z_u, z_p, z_w) plus the mean chain the draws imply."""
        z_u = self.mean_utterance + np.exp(0.5 * self.log_var_utterance) * eps_u
        mu_p = self.delta_phrase + (z_u if self.residual else 0.0)
        z_p = mu_p + np.exp(0.5 * self.log_var_phrase) * eps_p
        coarse_w = z_p[self.word_to_phrase]
        mu_w = self.delta_word + (coarse_w if self.residual else 0.0)
        z_w = mu_w + np.exp(0.5 * self.log_var_word) * eps_w
        return z_u, z_p, z_w, mu_p, mu_w


class MultiGrainedVAE:
    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.init_seed)
        self.encoders = {level: EncoderStack(cfg, rng, f"enc_{level}") for level in LEVELS}
        if cfg.shared_decoder:
            self.decoders = {"shared": Decoder(cfg, rng, "decoder")}
        else:
            self.decoders = {level: Decoder(cfg, rng, f"dec_{level}") for level in LEVELS}

    # -- plumbing -----------------------------------------------------------

    def _const(self, arr: np.ndarray) -> Tensor:
        return ad.constant(np.asarray(arr, dtype=self.cfg.dtype))

    def seg_for(self, u: SegmentedUtterance, level: str) -> SegmentSpec:
        if level == "utterance":
            return SegmentSpec.single(u.frames)
        if level == "phrase":
            return u.phrase_seg
        if level == "word":
            return u.word_seg
        raise ValueError(f"unknown level: {level}")

    def decoder_for(self, level: str) -> Decoder:
        return self.decoders["shared"] if self.cfg.shared_decoder else self.decoders[level]

    # -- core operations ----------------------------------------------------

    def encode(self, u: SegmentedUtterance, level: str,
               coarse: np.ndarray | None = None) -> GaussianParams:
        """Posterior parameters for one level.

        ``coarse`` is the sampled coarser latent (z_utterance for the phrase
        level, z_phrase for the word level); it enters the mean additively as
        a constant, so no gradient flows into the coarser level.
        """
        seg = self.seg_for(u, level)
        mean, log_var = self.encoders[level](self._const(u.x), self._const(u.y), seg)
        if self.cfg.residual and level != "utterance":
            if coarse is None:
                raise ValueError(f"encode({level}): coarser latent required")
            coarse = np.asarray(coarse, dtype=self.cfg.dtype)
            if level == "phrase":
                rows = np.repeat(coarse.reshape(1, -1), u.n_phrases, axis=0)
            else:
                rows = coarse.reshape(u.n_phrases, -1)[u.word_to_phrase]
            mean = ad.add(mean, self._const(rows))
        return GaussianParams(mean=mean, log_var=log_var)

    def decode(self, y: np.ndarray | Tensor, z: Tensor | np.ndarray, seg: SegmentSpec,
               level: str = "word") -> Tensor:
        y_t = y if isinstance(y, Tensor) else self._const(y)
        z_t = z if isinstance(z, Tensor) else self._const(z)
        if z_t.shape[0] != seg.n_segments:
            raise ad.ShapeError(f"decode: z rows {z_t.shape} vs {seg.n_segments} segments")
        return self.decoder_for(level)(y_t, z_t, seg)

    def _noise(self, shape, noise, rng) -> np.ndarray:
        if noise is not None:
            arr = np.asarray(noise, dtype=self.cfg.dtype)
            if arr.shape != shape:
                raise ad.ShapeError(f"noise shape {arr.shape}, expected {shape}")
            return arr
        if rng is None:
            raise ValueError("either explicit noise or an rng is required")
        return rng.standard_normal(shape).astype(self.cfg.dtype)

    def forward_chain(self, u: SegmentedUtterance,
                      noise: dict[str, np.ndarray] | None = None,
                      rng: np.random.Generator | None = None,
                      betas: tuple[float, float, float] = (1.0, 1.0, 1.0),
                      upto: str = "word",
                      coarse_override: dict[str, np.ndarray] | None = None
                      ) -> ChainResult:
        """Run the full posterior chain and per-level reconstructions.

        The sampled coarser latents feed the finer encoders (gradient-blocked)
        within the same pass. ``upto`` limits how deep the chain runs.
        ``coarse_override[level]`` replaces the live sample as that level's
        coarse input; gradient checks use it to pin the blocked inputs at
        their unperturbed values.
        """
        noise = noise or {}
        coarse_override = coarse_override or {}
        x_t = self._const(u.x)
        y_t = self._const(u.y)
        depth = LEVELS.index(upto)
        levels: dict[str, LevelResult] = {}
        coarse_sample: np.ndarray | None = None
        for li, level in enumerate(LEVELS[:depth + 1]):
            seg = self.seg_for(u, level)
            g = self.encode(u, level, coarse=coarse_override.get(level, coarse_sample))
            eps = self._noise((seg.n_segments, self.cfg.d_z), noise.get(level), rng)
            z = reparameterize(g, eps)
            x_hat = self.decode(y_t, z, seg, level)
            recon = reconstruction_error(x_hat, x_t)
            kl = kl_to_standard_normal(g)
            loss = ad.add(recon, ad.affine(kl, betas[li]))
            levels[level] = LevelResult(params=g, z=z, x_hat=x_hat, recon=recon, kl=kl,
                                        loss=loss)
            coarse_sample = z.data
        return ChainResult(levels=levels)

    def elbo_loss(self, u: SegmentedUtterance, level: str,
                  noise: dict[str, np.ndarray] | None = None,
                  rng: np.random.Generator | None = None,
                  beta: float = 1.0) -> tuple[Tensor, dict[str, float]]:
        """Reconstruction + KL for one level (running the chain up to it)."""
        if level not in LEVELS:
            raise ValueError(f"unknown level: {level}")
        idx = LEVELS.index(level)
        betas = tuple(beta if i == idx else 1.0 for i in range(3))
        chain = self.forward_chain(u, noise=noise, rng=rng, betas=betas, upto=level)
        res = chain.levels[level]
        return res.loss, {"recon": float(res.recon.data), "kl": float(res.kl.data)}

    def multi_level_loss(self, u: SegmentedUtterance,
                         noise: dict[str, np.ndarray] | None = None,
                         rng: np.random.Generator | None = None,
                         betas: tuple[float, float, float] = (1.0, 1.0, 1.0),
                         coarse_override: dict[str, np.ndarray] | None = None,
                         ) -> tuple[Tensor, dict[str, float]]:
        """Sum of the three per-level ELBO losses from one shared chain pass."""
        chain = self.forward_chain(u, noise=noise, rng=rng, betas=betas,
                                   coarse_override=coarse_override)
        return chain.total_loss(), chain.diagnostics()

    # -- posterior summaries (frozen-encoder use) ----------------------------

    def posterior_summary(self, u: SegmentedUtterance) -> PosteriorSummary:
        out: dict[str, np.ndarray] = {}
        for level in LEVELS:
            seg = self.seg_for(u, level)
            mean, log_var = self.encoders[level](self._const(u.x), self._const(u.y), seg)
            out[f"mean_{level}"] = mean.data.copy()
            out[f"log_var_{level}"] = log_var.data.copy()
        return PosteriorSummary(
            mean_utterance=out["mean_utterance"], log_var_utterance=out["log_var_utterance"],
            delta_phrase=out["mean_phrase"], log_var_phrase=out["log_var_phrase"],
            delta_word=out["mean_word"], log_var_word=out["log_var_word"],
            word_to_phrase=u.word_to_phrase.copy(), residual=self.cfg.residual)

    def oracle_latents(self, u: SegmentedUtterance,
                       eps: dict[str, np.ndarray] | None = None,
                       rng: np.random.Generator | None = None) -> LatentSet:
        """Posterior chain latents; posterior means when eps is omitted."""
        summary = self.posterior_summary(u)
        if eps is None and rng is None:
            eps = {level: np.zeros((self.seg_for(u, level).n_segments, self.cfg.d_z))
                   for level in LEVELS}
        elif eps is None:
            eps = {level: rng.standard_normal((self.seg_for(u, level).n_segments, self.cfg.d_z))
                   for level in LEVELS}
        z_u, z_p, z_w, _, _ = summary.chain_sample(eps["utterance"], eps["phrase"],
                                                   eps["word"])
        return LatentSet(z_utterance=z_u, z_phrase=z_p, z_word=z_w)

    # -- parameters and persistence ------------------------------------------

    def parameter_groups(self) -> dict[str, dict[str, Tensor]]:
        groups = {f"enc_{level}": enc.parameters() for level, enc in self.encoders.items()}
        if self.cfg.shared_decoder:
            groups["decoder"] = self.decoders["shared"].parameters()
        else:
            for level, dec in self.decoders.items():
                groups[f"dec_{level}"] = dec.parameters()
        return groups

    def parameters(self) -> dict[str, Tensor]:
        flat: dict[str, Tensor] = {}
        for gname, group in self.parameter_groups().items():
            for tname, t in group.items():
                flat[f"{gname}.{tname}"] = t
        return flat

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

    def export_group_arrays(self) -> dict[str, dict[str, np.ndarray]]:
        return {g: {n: t.data.copy() for n, t in group.items()}
                for g, group in self.parameter_groups().items()}

    def config_meta(self) -> dict:
        return asdict(self.cfg)

    @classmethod
    def from_meta(cls, meta: dict) -> "MultiGrainedVAE":
        cfg = ModelConfig(**{k: (tuple(v) if isinstance(v, list) else v)
                             for k, v in meta.items()})
        return cls(cfg)
