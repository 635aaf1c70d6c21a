"""Training objective: task CE plus sparsity, orthogonality and subject terms.

Correction matrices may carry leading batch dimensions; per-matrix values are
averaged over them. ``normalization="sum"`` gives the literal entrywise L1 and
squared Frobenius norms, ``"mean"`` divides by ``N*D`` and ``N**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .errors import InvalidLabel, NonFinite, ShapeMismatch


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.1
    lambda2: float = 0.1
    lambda3: float = 0.6

    def __post_init__(self):
        for v in (self.lambda1, self.lambda2, self.lambda3):
            if not (math.isfinite(v) and v >= 0):
                raise ValueError("loss weights must be finite and non-negative")


@dataclass
class LossReport:
    task: float
    specific: float
    orth: float
    sub: float
    total: float
    specific_per_layer: list = field(default_factory=list)
    orth_per_layer: list = field(default_factory=list)


def _check_labels(logits: torch.Tensor, y: torch.Tensor):
    y = torch.as_tensor(y, dtype=torch.long, device=logits.device)
    if y.dim() == 0:
        y = y.reshape(1)
    if logits.dim() == 1:
        logits = logits.unsqueeze(0)
    if len(y) != len(logits) or (y < 0).any() or (y >= logits.shape[-1]).any():
        raise InvalidLabel(f"labels {y.tolist()} invalid for {logits.shape[-1]} classes")
    return logits, y


def task_loss(logits: torch.Tensor, y) -> torch.Tensor:
    logits, y = _check_labels(logits, y)
    return F.cross_entropy(logits, y)


def _layer_l1(g: torch.Tensor, normalization: str) -> torch.Tensor:
    v = g.abs().sum(dim=(-2, -1))
    if normalization == "mean":
        v = v / (g.shape[-2] * g.shape[-1])
    elif normalization != "sum":
        raise ValueError(f"unknown normalization {normalization!r}")
    return v.mean()


def _layer_orth(sh: torch.Tensor, sp: torch.Tensor, normalization: str) -> torch.Tensor:
    if sh.shape != sp.shape:
        raise ShapeMismatch(f"shared {tuple(sh.shape)} vs specific {tuple(sp.shape)}")
    v = (sh @ sp.transpose(-2, -1)).pow(2).sum(dim=(-2, -1))
    if normalization == "mean":
        v = v / sh.shape[-2] ** 2
    elif normalization != "sum":
        raise ValueError(f"unknown normalization {normalization!r}")
    return v.mean()


def specific_sparsity_loss(corrections, normalization: str = "mean", per_layer=None):
    terms = [_layer_l1(torch.as_tensor(g), normalization) for g in corrections]
    if per_layer is not None:
        per_layer.extend(float(t.detach()) for t in terms)
    return torch.stack(terms).mean()


def orthogonality_loss(shared, specific, normalization: str = "mean", per_layer=None):
    if len(shared) != len(specific):
        raise ShapeMismatch("shared and specific lists differ in length")
    terms = [
        _layer_orth(torch.as_tensor(a), torch.as_tensor(b), normalization)
        for a, b in zip(shared, specific)
    ]
    if per_layer is not None:
        per_layer.extend(float(t.detach()) for t in terms)
    return torch.stack(terms).mean()


def subject_loss(specific_cls: torch.Tensor, head: torch.nn.Module, y_sub) -> torch.Tensor:
    return task_loss(head(specific_cls), y_sub)


def total_loss(
    task: torch.Tensor,
    specific: torch.Tensor,
    orth: torch.Tensor,
    sub: torch.Tensor,
    w: LossWeights,
    specific_per_layer=(),
    orth_per_layer=(),
):
    """Weighted objective and a float report of every component."""
    parts = [torch.as_tensor(v) for v in (task, specific, orth, sub)]
    if not all(torch.isfinite(p).all() for p in parts):
        raise NonFinite("non-finite loss component")
    task, specific, orth, sub = parts
    total = task + w.lambda1 * specific + w.lambda2 * orth + w.lambda3 * sub
    t, a, b, c = (float(p.detach()) for p in parts)
    report = LossReport(
        task=t,
        specific=a,
        orth=b,
        sub=c,
        total=t + w.lambda1 * a + w.lambda2 * b + w.lambda3 * c,
        specific_per_layer=list(specific_per_layer),
        orth_per_layer=list(orth_per_layer),
    )
    return total, report
