"""Command-line entry points.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import io_formats as iof
from .analysis import (
    cumulative_explained_variance,
    rank_directions,
    write_cev_csv,
    write_direction_csv,
    write_gnuplot,
)
from .config import RunConfig, load_config, save_config
from .data import build_loso, segment_dataset, synth_dataset
from .errors import AllZero, DegenerateInput, NumericalError, SCPTError
from .signal_tfr import band_crop, morse_cwt, normalize_tfr, resize_bilinear
from .training import evaluate, prepare_clips, run_loso

log = logging.getLogger("scpt")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="scpt", description="Prompt-tuned facial/rPPG emotion recognition toolkit")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    t = sub.add_parser("tfr", help="waveform file -> time-frequency tensor")
    t.add_argument("wave")
    t.add_argument("out")
    t.add_argument("--size", type=int, default=224)
    t.add_argument("--band", type=float, nargs=2, default=(0.05, 5.0), metavar=("LO", "HI"))
    t.add_argument("--gamma", type=float, default=3.0)
    t.add_argument("--beta", type=float, default=20.0)
    t.add_argument("--voices", type=int, default=16)
    t.add_argument("--pgm", help="also write an 8-bit PGM preview")

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--subjects", type=int, required=True)
    s.add_argument("--trials", type=int, required=True)
    s.add_argument("--confound", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("dir")

    tr = sub.add_parser("train", help="LOSO training")
    tr.add_argument("--config", help="configuration file (defaults when omitted)")
    tr.add_argument("--fold", default="all", help="fold index or 'all'")
    tr.add_argument("--backbone", help="checkpoint whose frozen.backbone.* tensors seed the trunk")
    tr.add_argument("data_dir")
    tr.add_argument("run_dir")

    e = sub.add_parser("eval", help="evaluate a fold checkpoint on its test subject")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--mode", choices=("train_path", "invariant"), default="invariant")
    e.add_argument("--results", help="append a row to this CSV")
    e.add_argument("data_dir")

    a = sub.add_parser("analyze", help="singular-direction relevance and CEV reports")
    a.add_argument("--run", required=True)
    a.add_argument("--data", help="dataset directory (defaults to the one used for training)")

    g = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tol", type=float, default=1e-4)
    return p


def _cmd_tfr(args) -> int:
    w = iof.read_waveform(args.wave)
    t = morse_cwt(w, args.gamma, args.beta, args.voices)
    t = normalize_tfr(resize_bilinear(band_crop(t, *args.band), args.size, args.size))
    iof.save_tfr(t, args.out)
    if args.pgm:
        iof.write_pgm(t.values, args.pgm)
    print(f"wrote {args.out} ({t.shape[0]}x{t.shape[1]})")
    return 0


def _cmd_synth(args) -> int:
    samples = synth_dataset(args.subjects, args.trials, args.confound, args.seed)
    path = iof.save_dataset(samples, args.dir)
    print(f"wrote {len(samples)} trials to {path}")
    return 0


def _load_clips(data_dir, cfg: RunConfig):
    clips = segment_dataset(iof.load_dataset(data_dir), cfg.data.clip_seconds)
    return clips, prepare_clips(clips, cfg)


def _cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    run_dir = Path(args.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, run_dir / "config.cfg")
    (run_dir / "data_dir.txt").write_text(str(Path(args.data_dir).resolve()) + "\n")

    clips, tensors = _load_clips(args.data_dir, cfg)
    plan = build_loso(clips, cfg.train.seed, cfg.data.val_fraction)
    with open(run_dir / "plan.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fold", "test_subject", "split", "sample"])
        for k, f in enumerate(plan.folds):
            for split, ids in (("train", f.train_ids), ("val", f.val_ids), ("test", f.test_ids)):
                w.writerows([k, f.test_subject, split, int(i)] for i in ids)

    if args.fold == "all":
        folds = None
    else:
        try:
            folds = [int(args.fold)]
        except ValueError:
            raise UsageError(f"--fold must be an integer or 'all', got {args.fold!r}")
        if not 0 <= folds[0] < len(plan):
            raise UsageError(f"fold {folds[0]} out of range (0..{len(plan) - 1})")
    backbone = iof.backbone_state(iof.load_checkpoint(args.backbone)) if args.backbone else None
    results = run_loso(cfg, tensors, plan, folds, run_dir, backbone)
    for r in results:
        print(f"fold {r['fold']:2d} subject {r['test_subject']:3d} acc {r['acc']:.4f} f1 {r['f1']:.4f}")
    return 0


def _find_config(checkpoint: Path) -> Path:
    for d in (checkpoint.parent, *checkpoint.parents):
        if (d / "config.cfg").exists():
            return d / "config.cfg"
    raise SCPTError(f"no config.cfg next to or above {checkpoint}")


def _load_fold_model(checkpoint: Path):
    cfg = load_config(_find_config(checkpoint))
    tensors = iof.load_checkpoint(checkpoint)
    meta = iof.checkpoint_meta(tensors)
    if "test_subject" not in meta:
        raise SCPTError(f"{checkpoint}: missing meta.test_subject")
    return cfg, iof.model_from_checkpoint(tensors, cfg.model), int(meta["test_subject"])


def _cmd_eval(args) -> int:
    ckpt = Path(args.checkpoint)
    cfg, model, subject = _load_fold_model(ckpt)
    clips, tensors = _load_clips(args.data_dir, cfg)
    ids = np.nonzero(tensors.subjects == subject)[0]
    m = evaluate(model, tensors, ids, args.mode, cfg.data.target, cfg.data.threshold)
    print(f"subject {subject} mode {args.mode} acc {m['acc']:.4f} f1 {m['f1']:.4f} n {m['n']}")
    if args.results:
        path = Path(args.results)
        new = not path.exists()
        with open(path, "a", newline="") as fh:
            w = csv.writer(fh)
            if new:
                w.writerow(["checkpoint", "test_subject", "mode", "acc", "f1"])
            w.writerow([str(ckpt), subject, args.mode, f"{m['acc']:.6f}", f"{m['f1']:.6f}"])
    return 0


@torch.no_grad()
def shared_cls_features(model, tensors, ids, batch_size: int = 64) -> np.ndarray:
    """Per-clip class-row shared correction at the last layer, averaged over frames."""
    model.eval()
    dtype = next(model.parameters()).dtype
    T = model.config.num_frames
    feats = []
    for start in range(0, len(ids), batch_size):
        b = ids[start : start + batch_size]
        frames = torch.as_tensor(tensors.clip_frames(b, T, "eval"), dtype=dtype)
        out = model(frames, torch.as_tensor(tensors.tfr[b], dtype=dtype), mode="invariant")
        if out.cls_shared is None:
            raise SCPTError("model has no adapters; nothing to analyze")
        feats.append(out.cls_shared.reshape(len(b), T, -1).mean(1).double().numpy())
    return np.concatenate(feats)


def _cmd_analyze(args) -> int:
    run = Path(args.run)
    data_dir = args.data or (run / "data_dir.txt").read_text().strip()
    checkpoints = sorted(run.glob("fold_*/best.tensor"))
    if not checkpoints:
        raise SCPTError(f"{run}: no fold checkpoints")
    cfg = load_config(run / "config.cfg")
    _, tensors = _load_clips(data_dir, cfg)
    labels = tensors.labels(cfg.data.target, cfg.data.threshold)
    S = cfg.model.subspace_rank
    rows = []
    for ckpt in checkpoints:
        _, model, subject = _load_fold_model(ckpt)
        ids = np.nonzero(tensors.subjects != subject)[0]
        feats = shared_cls_features(model, tensors, ids)
        try:
            rep = rank_directions(feats, labels[ids], min(S, min(feats.shape)))
            cev = cumulative_explained_variance(np.sort(rep.sigma)[::-1])
        except (DegenerateInput, AllZero) as exc:
            print(f"{ckpt.parent.name}: skipped ({exc})")
            continue
        write_direction_csv(rep, ckpt.parent / "directions.csv")
        write_cev_csv(cev, ckpt.parent / "cev.csv")
        write_gnuplot({"k": np.arange(1, len(cev) + 1), "cev": cev, "abs_r_pb": rep.abs_r},
                      ckpt.parent / "analysis.dat")
        rows.append([ckpt.parent.name, subject, f"{rep.abs_r[0]:.6f}",
                     f"{np.mean(rep.p_value < 0.05):.4f}", f"{cev[min(S, len(cev)) - 1]:.6f}"])
    with open(run / "analysis.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fold", "test_subject", "max_abs_r_pb", "frac_p_lt_0.05", "cev_at_S"])
        w.writerows(rows)
    print(f"analyzed {len(rows)} folds -> {run / 'analysis.csv'}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck

    rep = run_gradcheck(args.seed)
    worst = max(rep.per_tensor, key=rep.per_tensor.get)
    print(f"max relative gradient error {rep.max_rel_error:.3e} ({worst}); "
          f"{len(rep.per_tensor)} tensors, {rep.probes} probes, {rep.seconds:.1f}s")
    return 0 if rep.passed(args.tol) else 3


COMMANDS = {
    "tfr": _cmd_tfr,
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "analyze": _cmd_analyze,
    "gradcheck": _cmd_gradcheck,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (SCPTError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
