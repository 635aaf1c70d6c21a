"""
A prompted forward pass through the frozen trunk
================================================

The model starts as an exact copy of its frozen ViT: the rPPG token embedding,
the prompt output projection and both adapter branches are zero at
initialization. Once those weights move, train-path and invariant outputs
part ways, and only the train path sees the specific branch.
"""

import numpy as np
import torch

from scpt import build_model, tiny_profile

cfg = tiny_profile(num_frames=2)
model = build_model(cfg, seed=0, dtype=torch.float64)
frames = torch.rand(2, cfg.num_frames, 3, cfg.img_size, cfg.img_size, dtype=torch.float64)
tfr = torch.rand(2, cfg.tfr_size, cfg.tfr_size, dtype=torch.float64)

with torch.no_grad():
    out = model(frames, tfr)
    ref = model.backbone_forward(frames)
print("identical to the frozen trunk:", torch.equal(out.patch_tokens, ref[:, 1:]))
S = cfg.effective_subspace_rank
print("subspace basis is the canonical fallback:",
      np.array_equal(out.subspace[0], np.eye(cfg.dim)[:, :S]))

###############################################################################
# Nudge every trainable tensor and compare the two inference paths.

g = torch.Generator().manual_seed(1)
with torch.no_grad():
    for p in model.trainable_parameters():
        p.add_(0.1 * torch.randn(p.shape, generator=g, dtype=p.dtype))
    train = model(frames, tfr, mode="train")
    inv = model(frames, tfr, mode="invariant")
print("train-path logits ", train.logits.numpy().round(4).tolist())
print("invariant logits  ", inv.logits.numpy().round(4).tolist())

###############################################################################
# Scrambling the specific branch leaves invariant inference untouched.

with torch.no_grad():
    for name, p in model.named_parameters():
        if ".specific." in name:
            p.mul_(-3.0)
    print("invariant unchanged:", torch.equal(model(frames, tfr, mode="invariant").logits,
                                              inv.logits))

n_train = sum(p.numel() for p in model.trainable_parameters())
n_all = sum(p.numel() for p in model.parameters())
print(f"trainable parameters: {n_train} of {n_all} ({100 * n_train / n_all:.1f}%)")
