"""LOSO training loop, evaluation and fold orchestration."""

from __future__ import annotations

import copy
import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig
from .data import Fold, LOSOPlan, Sample, binarize_label
from .encoders import sample_frame_indices
from .errors import EmptyEvalSet, NonFinite, NonFiniteLoss
from .losses import (
    LossWeights,
    orthogonality_loss,
    specific_sparsity_loss,
    task_loss,
    total_loss,
)
from .metrics import accuracy, f1_binary, per_subject_summary
from .model import SCPTModel, build_model
from .signal_tfr import waveform_to_tfr

log = logging.getLogger(__name__)

LOG_FIELDS = ["epoch", "lr", "task", "specific", "orth", "sub", "total", "val_acc", "val_f1"]


@dataclass
class ClipTensors:
    """Model-ready arrays for a list of clips."""

    frames: list  # per clip (F, C, H, W) float32
    tfr: np.ndarray  # (n, Ht, Wt)
    valence: np.ndarray
    arousal: np.ndarray
    subjects: np.ndarray
    trials: np.ndarray

    def __len__(self):
        return len(self.frames)

    def labels(self, target: str, threshold: float = 5.0) -> np.ndarray:
        scores = self.valence if target == "valence" else self.arousal
        return np.array([binarize_label(s, threshold) for s in scores])

    def clip_frames(self, ids, T: int, mode: str, rng=None) -> np.ndarray:
        return np.stack(
            [self.frames[i][sample_frame_indices(len(self.frames[i]), T, mode, rng)] for i in ids]
        )


def prepare_clips(clips: list[Sample], cfg: RunConfig) -> ClipTensors:
    t = cfg.tfr
    tfr = np.stack(
        [
            waveform_to_tfr(
                c.waveform,
                cfg.model.tfr_size,
                (t.f_lo_hz, t.f_hi_hz),
                t.gamma,
                t.beta,
                t.voices_per_octave,
            ).values
            for c in clips
        ]
    ).astype(np.float32)
    return ClipTensors(
        frames=[np.asarray(c.frames, dtype=np.float32) for c in clips],
        tfr=tfr,
        valence=np.array([c.valence_score for c in clips]),
        arousal=np.array([c.arousal_score for c in clips]),
        subjects=np.array([c.subject_id for c in clips]),
        trials=np.array([c.trial_id for c in clips]),
    )


def _dtype(name: str) -> torch.dtype:
    return {"float32": torch.float32, "float64": torch.float64}[name]


def compute_losses(out, y, y_sub, weights: LossWeights, normalization="mean",
                   use_sub_loss=True):
    """Total objective for a forward output, with the float report."""
    task = task_loss(out.logits, y)
    zero = task.new_zeros(())
    spec_layers, orth_layers = [], []
    if out.specific:
        spec = specific_sparsity_loss(out.specific, normalization, spec_layers)
        orth = orthogonality_loss(out.shared, out.specific, normalization, orth_layers)
    else:
        spec = orth = zero
    if use_sub_loss and out.sub_logits is not None:
        sub = task_loss(out.sub_logits, y_sub)
    else:
        sub = zero
    return total_loss(task, spec, orth, sub, weights, spec_layers, orth_layers)


@torch.no_grad()
def predict(model: SCPTModel, clips: ClipTensors, ids, mode: str = "invariant",
            batch_size: int = 64) -> np.ndarray:
    model.eval()
    dtype = next(model.parameters()).dtype
    T = model.config.num_frames
    preds = []
    for start in range(0, len(ids), batch_size):
        b = ids[start : start + batch_size]
        frames = torch.as_tensor(clips.clip_frames(b, T, "eval"), dtype=dtype)
        tfr = torch.as_tensor(clips.tfr[b], dtype=dtype)
        preds.append(model(frames, tfr, mode=mode).logits.argmax(-1).numpy())
    return np.concatenate(preds) if preds else np.zeros(0, dtype=int)


def evaluate(model: SCPTModel, clips: ClipTensors, ids, mode: str = "invariant",
             target: str = "arousal", threshold: float = 5.0) -> dict:
    """Accuracy and positive-class F1, overall and per subject."""
    ids = np.asarray(ids, dtype=int)
    if len(ids) == 0:
        raise EmptyEvalSet("evaluation set is empty")
    mode = {"train_path": "train", "invariant_inference": "invariant"}.get(mode, mode)
    y = clips.labels(target, threshold)[ids]
    pred = predict(model, clips, ids, mode)
    per_subject = []
    for s in np.unique(clips.subjects[ids]):
        m = clips.subjects[ids] == s
        per_subject.append(
            {"subject": int(s), "acc": accuracy(y[m], pred[m]), "f1": f1_binary(y[m], pred[m])}
        )
    return {
        "acc": accuracy(y, pred),
        "f1": f1_binary(y, pred),
        "n": int(len(ids)),
        "per_subject": per_subject,
    }


def _trainable_state(model: SCPTModel) -> dict:
    return {
        n: p.detach().clone() for n, p in model.named_parameters() if not n.startswith("backbone.")
    }


def train_fold(fold: Fold, clips: ClipTensors, cfg: RunConfig, model: SCPTModel,
               max_steps: int | None = None):
    """Train on ``fold.train_ids`` and keep the best-validation-accuracy state.

    Returns ``(model, log_rows)``. ``max_steps`` stops early after that many
    optimizer steps (used by short checks).
    """
    tc, dc = cfg.train, cfg.data
    weights = cfg.loss_weights()
    dtype = next(model.parameters()).dtype
    T = model.config.num_frames
    y_all = clips.labels(dc.target, dc.threshold)
    rng = np.random.default_rng([tc.seed, fold.test_subject, 7])

    opt = torch.optim.AdamW(
        model.trainable_parameters(), lr=tc.lr, betas=(0.9, 0.999), eps=1e-8,
        weight_decay=tc.weight_decay,
    )
    sched = None
    if tc.schedule == "cosine" and tc.epochs > 0:
        sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=tc.epochs, eta_min=0.0)

    best_acc, best_state = -math.inf, None
    rows, steps = [], 0
    for epoch in range(tc.epochs):
        model.train()
        lr = opt.param_groups[0]["lr"]
        order = rng.permutation(fold.train_ids)
        sums = np.zeros(5)
        n_batches = 0
        for start in range(0, len(order), tc.batch_size):
            b = order[start : start + tc.batch_size]
            frames = torch.as_tensor(clips.clip_frames(b, T, "train", rng), dtype=dtype)
            tfr = torch.as_tensor(clips.tfr[b], dtype=dtype)
            y = torch.as_tensor(y_all[b])
            y_sub = torch.as_tensor(fold.subject_labels(clips.subjects[b]))
            out = model(frames, tfr, mode="train")
            try:
                total, rep = compute_losses(
                    out, y, y_sub, weights, cfg.loss.normalization, cfg.loss.use_sub_loss
                )
            except NonFinite as exc:
                raise NonFiniteLoss(
                    f"fold {fold.test_subject}: non-finite loss at epoch {epoch}, step {steps}"
                ) from exc
            opt.zero_grad(set_to_none=True)
            total.backward()
            opt.step()
            sums += [rep.task, rep.specific, rep.orth, rep.sub, rep.total]
            n_batches += 1
            steps += 1
            if max_steps is not None and steps >= max_steps:
                break
        if sched is not None:
            sched.step()

        row = dict(zip(LOG_FIELDS, [epoch, lr, *(sums / max(n_batches, 1))]))
        if len(fold.val_ids):
            val = evaluate(model, clips, fold.val_ids, tc.eval_mode, dc.target, dc.threshold)
            row["val_acc"], row["val_f1"] = val["acc"], val["f1"]
            if val["acc"] > best_acc:
                best_acc, best_state = val["acc"], _trainable_state(model)
        rows.append(row)
        log.debug("fold %d epoch %d %s", fold.test_subject, epoch, row)
        if max_steps is not None and steps >= max_steps:
            break

    if best_state is not None:
        with torch.no_grad():
            params = dict(model.named_parameters())
            for n, v in best_state.items():
                params[n].copy_(v)
    return model, rows


def fold_model(cfg: RunConfig, fold: Fold, fold_index: int, backbone_state=None) -> SCPTModel:
    mc = copy.copy(cfg.model)
    mc.num_subjects = max(len(fold.subject_index), 1)
    return build_model(mc, seed=cfg.train.seed + fold_index, dtype=_dtype(cfg.train.dtype),
                       backbone_state=backbone_state)


def write_log(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_FIELDS, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def write_results(results, path) -> dict:
    """Per-subject results CSV with a mean/std footer."""
    summary = per_subject_summary(results)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fold", "test_subject", "acc", "f1"])
        for r in results:
            w.writerow([r["fold"], r["test_subject"], f"{r['acc']:.6f}", f"{r['f1']:.6f}"])
        w.writerow(["mean", "", f"{summary['acc'][0]:.6f}", f"{summary['f1'][0]:.6f}"])
        w.writerow(["std", "", f"{summary['acc'][1]:.6f}", f"{summary['f1'][1]:.6f}"])
    return summary


def run_fold(cfg: RunConfig, clips: ClipTensors, plan: LOSOPlan, k: int, run_dir=None,
             backbone_state=None, eval_modes=("invariant",)) -> dict:
    torch.set_num_threads(1)
    fold = plan.folds[k]
    model = fold_model(cfg, fold, k, backbone_state)
    model, rows = train_fold(fold, clips, cfg, model)
    result = {"fold": k, "test_subject": fold.test_subject}
    for mode in eval_modes:
        m = evaluate(model, clips, fold.test_ids, mode, cfg.data.target, cfg.data.threshold)
        suffix = "" if mode == eval_modes[0] else f"_{mode}"
        result["acc" + suffix], result["f1" + suffix] = m["acc"], m["f1"]
    if run_dir is not None:
        from .io_formats import save_checkpoint

        fold_dir = Path(run_dir) / f"fold_{k:02d}"
        fold_dir.mkdir(parents=True, exist_ok=True)
        write_log(rows, fold_dir / "train_log.csv")
        save_checkpoint(model, fold_dir / "best.tensor", meta={
            "test_subject": fold.test_subject, "fold": k, "num_subjects": model.config.num_subjects,
        })
    result["log"] = rows
    return result


def worker_count() -> int:
    return max(int(os.environ.get("SCPT_THREADS", "1")), 1)


def run_loso(cfg: RunConfig, clips: ClipTensors, plan: LOSOPlan, folds=None, run_dir=None,
             backbone_state=None, eval_modes=("invariant",), workers: int | None = None):
    """Train and test every requested fold; folds run in parallel processes."""
    folds = list(range(len(plan))) if folds is None else list(folds)
    workers = workers or worker_count()
    args = [(cfg, clips, plan, k, run_dir, backbone_state, tuple(eval_modes)) for k in folds]
    if workers > 1 and len(folds) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_fold_star, args))
    else:
        results = [run_fold(*a) for a in args]
    if run_dir is not None:
        write_results(results, Path(run_dir) / "results.csv")
    return results


def _run_fold_star(args):
    return run_fold(*args)
