"""A bundle ties a model and its prior suite to one checkpoint file and
records which training stages have run, so consumers can refuse synthesis
modes whose components are missing."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .converters import PriorSuite
from .model import ModelConfig, MultiGrainedVAE
from .pipelines import PipelineError

MODE_REQUIREMENTS = {
    "FG": frozenset({"step1"}),
    "FG+AR": frozenset({"step1", "baselines"}),
    "FG+CP": frozenset({"step1", "baselines"}),
    "FG+CP+AR": frozenset({"step1", "baselines"}),
    "MG+CP": frozenset({"step1", "step2"}),
    "MG+CP+AR": frozenset({"step1", "step2"}),
}


@dataclass
class Bundle:
    model: MultiGrainedVAE
    suite: PriorSuite
    trained: set[str] = field(default_factory=set)
    suite_seed: int | None = None

    @classmethod
    def fresh(cls, cfg: ModelConfig, suite_seed: int | None = None) -> "Bundle":
        model = MultiGrainedVAE(cfg)
        seed = cfg.init_seed + 1 if suite_seed is None else suite_seed
        return cls(model=model, suite=PriorSuite(cfg, init_seed=seed),
                   trained=set(), suite_seed=seed)

    def require_mode(self, mode: str) -> None:
        needed = MODE_REQUIREMENTS.get(mode)
        if needed is None:
            raise PipelineError(f"unknown mode {mode!r}")
        missing = needed - self.trained
        if missing:
            raise PipelineError(f"mode {mode} requires trained stages "
                                f"{sorted(missing)}; checkpoint has "
                                f"{sorted(self.trained)}")

    def save(self, path: str | Path) -> None:
        groups = self.model.export_group_arrays()
        groups.update(self.suite.export_group_arrays())
        meta = {"kind": "mgvae-bundle", "model": self.model.config_meta(),
                "suite_seed": self.suite_seed, "trained": sorted(self.trained)}
        save_checkpoint(path, groups, meta)

    @classmethod
    def load(cls, path: str | Path) -> "Bundle":
        groups, meta = load_checkpoint(path)
        if meta.get("kind") != "mgvae-bundle":
            raise ValueError(f"{path}: not a model bundle")
        model = MultiGrainedVAE.from_meta(meta["model"])
        suite_seed = meta.get("suite_seed")
        suite = PriorSuite(model.cfg, init_seed=suite_seed)
        model_names = set(model.parameter_groups())
        suite_names = set(suite.parameter_groups())
        model.load_group_arrays({g: t for g, t in groups.items() if g in model_names})
        suite.load_group_arrays({g: t for g, t in groups.items() if g in suite_names})
        unknown = set(groups) - model_names - suite_names
        if unknown:
            raise ValueError(f"{path}: unknown parameter groups {sorted(unknown)}")
        return cls(model=model, suite=suite, trained=set(meta.get("trained", [])),
                   suite_seed=suite_seed)
