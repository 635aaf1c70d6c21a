"""Finite-difference check of the training objective's gradients.

The emotion subspace is a stop-gradient constant in training, so the
difference quotients are taken with the subspace frozen at its base-point
value. Every trainable tensor is probed at a few random coordinates and along
random full-tensor directions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .losses import LossWeights
from .model import build_model, gradcheck_profile
from .training import compute_losses

TABLE_WEIGHTS = LossWeights(0.1, 0.1, 0.6)


@dataclass
class GradcheckReport:
    max_rel_error: float
    per_tensor: dict = field(default_factory=dict)
    probes: int = 0
    seconds: float = 0.0

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _inputs(config, batch: int, frames_per_clip: int, rng):
    frames = rng.random((batch, config.num_frames, config.in_chans, config.img_size,
                         config.img_size))
    tfr = rng.random((batch, config.tfr_size, config.tfr_size))
    y = rng.integers(0, config.num_classes, batch)
    y_sub = rng.integers(0, config.num_subjects, batch)
    return (torch.as_tensor(frames), torch.as_tensor(tfr), torch.as_tensor(y),
            torch.as_tensor(y_sub))


def run_gradcheck(seed: int = 0, weights: LossWeights = TABLE_WEIGHTS, entries: int = 4,
                  directions: int = 2, h: float = 1e-6, normalization: str = "mean",
                  config=None) -> GradcheckReport:
    t0 = time.perf_counter()
    config = config or gradcheck_profile()
    rng = np.random.default_rng(seed)
    model = build_model(config, seed=seed, dtype=torch.float64)
    with torch.no_grad():
        for p in model.trainable_parameters():
            p.add_(0.2 * torch.as_tensor(rng.standard_normal(p.shape)))
    frames, tfr, y, y_sub = _inputs(config, 2, config.num_frames, rng)

    base = model(frames, tfr, mode="train")
    subspace = base.subspace.copy()

    def objective():
        out = model(frames, tfr, mode="train", subspace=subspace)
        total, _ = compute_losses(out, y, y_sub, weights, normalization)
        return total

    model.zero_grad()
    objective().backward()

    report = GradcheckReport(0.0)
    named = [(n, p) for n, p in model.named_parameters() if not n.startswith("backbone.")]
    with torch.no_grad():
        for name, p in named:
            grad = p.grad.detach().clone()
            flat = p.view(-1)
            k = min(entries, flat.numel())
            probes = [np.eye(1, flat.numel(), int(i)).ravel()
                      for i in rng.choice(flat.numel(), k, replace=False)]
            for _ in range(directions):
                v = rng.standard_normal(flat.numel())
                probes.append(v / np.linalg.norm(v))
            worst = 0.0
            for v in probes:
                v = torch.as_tensor(v).view_as(p)
                p.add_(h * v)
                f_plus = float(objective())
                p.sub_(2 * h * v)
                f_minus = float(objective())
                p.add_(h * v)
                numeric = (f_plus - f_minus) / (2 * h)
                analytic = float((grad * v).sum())
                worst = max(worst, relative_error(analytic, numeric))
                report.probes += 1
            report.per_tensor[name] = worst
            report.max_rel_error = max(report.max_rel_error, worst)
    report.seconds = time.perf_counter() - t0
    return report
