"""Decoupled shared/specific adapter and the truncated-SVD emotion subspace."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import RankOutOfRange, ShapeMismatch

SIGMA_FLOOR = 1e-12


def shared_correction(X: torch.Tensor, A: torch.Tensor, B: torch.Tensor) -> torch.Tensor:
    """Low-rank correction ``X A B^T``."""
    if A.shape != B.shape or X.shape[-1] != A.shape[0]:
        raise ShapeMismatch(
            f"X {tuple(X.shape)}, A {tuple(A.shape)}, B {tuple(B.shape)} do not agree"
        )
    return (X @ A) @ B.transpose(-2, -1)


def specific_correction(X: torch.Tensor, mlp: "SpecificMLP") -> torch.Tensor:
    return mlp(X)


class SpecificMLP(nn.Module):
    """Row-wise two-layer ReLU MLP whose output layer starts at zero."""

    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.dim = dim
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)
        nn.init.zeros_(self.fc2.weight)
        nn.init.zeros_(self.fc2.bias)

    def forward(self, x):
        if x.shape[-1] != self.dim:
            raise ShapeMismatch(f"expected width {self.dim}, got {x.shape[-1]}")
        return self.fc2(F.relu(self.fc1(x)))


class DSSALayer(nn.Module):
    def __init__(self, dim: int, rank: int, hidden: int | None = None):
        super().__init__()
        if not 1 <= rank < dim / 2:
            raise ValueError(f"adapter rank must satisfy 1 <= R < D/2, got R={rank}, D={dim}")
        self.A = nn.Parameter(torch.randn(dim, rank) / dim**0.5)
        self.B = nn.Parameter(torch.zeros(dim, rank))
        self.specific = SpecificMLP(dim, hidden or max(dim // 4, 1))

    def shared(self, x):
        return shared_correction(x, self.A, self.B)

    def forward(self, x, mode: str = "train"):
        """Return ``(shared, specific)``; specific is ``None`` in invariant mode."""
        sh = self.shared(x)
        sp = self.specific(x) if mode == "train" else None
        return sh, sp


def dssa_forward(
    X: torch.Tensor,
    cls: torch.Tensor,
    backbone,
    index: int,
    adapter: DSSALayer,
    scale: float,
    mode: str = "train",
) -> torch.Tensor:
    """One backbone layer plus ``scale`` times the adapter correction.

    ``X`` holds patch rows and ``cls`` the class row; the correction is
    evaluated on ``[cls, X]`` without the positional table.
    """
    out = backbone.layers[index](backbone.layer_input(cls, X, index))
    sh, sp = adapter(torch.cat([cls.unsqueeze(1), X], dim=1), mode)
    gamma = sh if sp is None else sh + sp
    return out + scale * gamma


@dataclass
class SubspaceFactors:
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray


def truncated_svd(M, S: int) -> SubspaceFactors:
    """Rank-``S`` SVD of ``M`` (or of each matrix in a stack).

    Each column of ``V`` has its largest-magnitude entry made positive. A
    matrix whose top singular value is below ``1e-12`` gets zero singular
    values and the canonical bases ``e_1..e_S``.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim < 2:
        raise ShapeMismatch("truncated_svd needs a matrix")
    N, D = M.shape[-2:]
    if not 1 <= S <= min(N, D):
        raise RankOutOfRange(f"S={S} outside [1, {min(N, D)}]")

    U, sigma, Vh = np.linalg.svd(M, full_matrices=False)
    U = U[..., :, :S]
    sigma = sigma[..., :S].copy()
    V = np.swapaxes(Vh[..., :S, :], -1, -2)

    pivot = np.take_along_axis(V, np.abs(V).argmax(axis=-2)[..., None, :], axis=-2)
    sign = np.where(pivot < 0, -1.0, 1.0)
    V = V * sign
    U = U * sign

    degenerate = sigma[..., 0] < SIGMA_FLOOR
    if np.any(degenerate):
        U[degenerate] = np.eye(N)[:, :S]
        V[degenerate] = np.eye(D)[:, :S]
        sigma[degenerate] = 0.0
    return SubspaceFactors(U, sigma, V)


def emotion_project(cls_feature: torch.Tensor, V) -> torch.Tensor:
    """``cls_feature @ V`` with ``V`` held constant for gradients."""
    V = torch.as_tensor(V, dtype=cls_feature.dtype, device=cls_feature.device).detach()
    if cls_feature.shape[-1] != V.shape[-2]:
        raise ShapeMismatch(f"feature width {cls_feature.shape[-1]} vs V {tuple(V.shape)}")
    return (cls_feature.unsqueeze(-2) @ V).squeeze(-2)
