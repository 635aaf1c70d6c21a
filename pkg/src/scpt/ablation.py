"""Adapter on/off ablation over seeds, with a resumable on-disk cache.

Each (variant, seed) cell trains every LOSO fold on a freshly generated
synthetic dataset. Finished cells are written to a JSON cache keyed by a hash
of the experiment settings and the package source, so an interrupted run
resumes and an unchanged rerun is free.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import build_loso, segment_dataset, synth_dataset
from .training import prepare_clips, run_loso

VARIANTS = ("dssa", "no_dssa")
# modules whose behaviour feeds into the trained accuracies
TRAINING_MODULES = ("config", "data", "dssa", "encoders", "losses", "mcp", "metrics", "model",
                    "signal_tfr", "training")


@dataclass
class AblationSettings:
    subjects: int = 12
    trials: int = 20
    confound: float = 0.8
    epochs: int = 30
    seeds: tuple = (0, 1, 2, 3, 4)
    num_frames: int = 2
    lr: float = 1e-4
    target: str = "arousal"

    def run_config(self, variant: str, seed: int) -> RunConfig:
        cfg = RunConfig()
        cfg.data.target = self.target
        cfg.train.epochs = self.epochs
        cfg.train.lr = self.lr
        cfg.train.seed = seed
        cfg.model.num_frames = self.num_frames
        cfg.model.use_dssa = variant == "dssa"
        cfg.loss.use_sub_loss = variant == "dssa"
        return cfg


@dataclass
class AblationResult:
    settings: dict
    cells: dict = field(default_factory=dict)  # "variant/seed" -> per-fold accuracies

    def accuracies(self, variant: str) -> dict:
        out = {}
        for key, folds in self.cells.items():
            v, s = key.split("/")
            if v == variant:
                out[int(s)] = float(np.mean(folds))
        return dict(sorted(out.items()))

    def median(self, variant: str) -> float:
        return float(np.median(list(self.accuracies(variant).values())))

    @property
    def margin(self) -> float:
        return self.median("dssa") - self.median("no_dssa")

    def table(self) -> str:
        seeds = sorted(self.accuracies("dssa"))
        lines = ["variant    " + " ".join(f"seed{s:<3d}" for s in seeds) + "  median"]
        for v in VARIANTS:
            acc = self.accuracies(v)
            cells = " ".join(f"{acc.get(s, float('nan')):.4f} " for s in seeds)
            lines.append(f"{v:<10s} {cells} {self.median(v):.4f}")
        lines.append(f"margin (dssa - no_dssa): {100 * self.margin:+.2f} points")
        return "\n".join(lines)


def source_digest() -> str:
    h = hashlib.sha256()
    for name in TRAINING_MODULES:
        path = Path(__file__).with_name(f"{name}.py")
        h.update(name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


def cache_key(settings: AblationSettings) -> str:
    blob = json.dumps(asdict(settings), sort_keys=True) + source_digest()
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def run_ablation(settings: AblationSettings | None = None, cache_dir=None, workers=None,
                 log=print) -> AblationResult:
    settings = settings or AblationSettings()
    result = AblationResult(asdict(settings))
    cache = None
    if cache_dir is not None:
        cache = Path(cache_dir) / f"ablation_{cache_key(settings)}.json"
        if cache.exists():
            result.cells = json.loads(cache.read_text())["cells"]

    for seed in settings.seeds:
        pending = [v for v in VARIANTS if f"{v}/{seed}" not in result.cells]
        if not pending:
            continue
        clips = segment_dataset(
            synth_dataset(settings.subjects, settings.trials, settings.confound, seed=seed)
        )
        plan = build_loso(clips, seed)
        for variant in pending:
            cfg = settings.run_config(variant, seed)
            t0 = time.perf_counter()
            rows = run_loso(cfg, prepare_clips(clips, cfg), plan, workers=workers)
            result.cells[f"{variant}/{seed}"] = [r["acc"] for r in rows]
            log(f"{variant} seed {seed}: mean LOSO acc "
                f"{np.mean(result.cells[f'{variant}/{seed}']):.4f} "
                f"({time.perf_counter() - t0:.0f}s)")
            if cache is not None:
                cache.parent.mkdir(parents=True, exist_ok=True)
                cache.write_text(json.dumps({"settings": result.settings, "cells": result.cells},
                                            indent=1))
    return result
