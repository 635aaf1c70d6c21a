"""Modality-complementary prompter.

Each layer refines the prompt state with a single-head cross-attention in a
shared latent space: facial patch tokens query the previous prompts. The
output projection starts at zero, so untrained prompts pass through unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from .errors import NonFinite, ShapeMismatch


@dataclass
class PromptState:
    P: torch.Tensor
    layer_index: int = 0


def mcp_init(rppg_tokens: torch.Tensor, facial_shape=None) -> PromptState:
    if facial_shape is not None and tuple(rppg_tokens.shape[-2:]) != tuple(facial_shape[-2:]):
        raise ShapeMismatch(
            f"rPPG tokens {tuple(rppg_tokens.shape)} do not match facial tokens {tuple(facial_shape)}"
        )
    return PromptState(rppg_tokens, 0)


class MCPLayer(nn.Module):
    def __init__(self, dim: int, latent_dim: int | None = None):
        super().__init__()
        latent_dim = latent_dim or max(dim // 2, 1)
        self.latent_dim = latent_dim
        self.norm_f = nn.LayerNorm(dim)
        self.norm_p = nn.LayerNorm(dim)
        self.proj_f = nn.Linear(dim, latent_dim)
        self.proj_p = nn.Linear(dim, latent_dim)
        self.out = nn.Linear(latent_dim, dim)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, facial: torch.Tensor, prompts: torch.Tensor) -> torch.Tensor:
        if facial.shape != prompts.shape:
            raise ShapeMismatch(
                f"facial tokens {tuple(facial.shape)} and prompts {tuple(prompts.shape)} differ"
            )
        q = self.proj_f(self.norm_f(facial))
        kv = self.proj_p(self.norm_p(prompts))
        attn = torch.softmax(q @ kv.transpose(-2, -1) / math.sqrt(self.latent_dim), dim=-1)
        return prompts + self.out(attn @ kv)


def mcp_generate(
    facial_tokens: torch.Tensor, prev: PromptState, layer: MCPLayer, l: int
) -> PromptState:
    if prev.layer_index != l - 1:
        raise ValueError(f"prompt state is at layer {prev.layer_index}, expected {l - 1}")
    P = layer(facial_tokens, prev.P)
    if not torch.isfinite(P).all():
        raise NonFinite(f"non-finite prompts at layer {l}")
    return PromptState(P, l)


def inject(h: torch.Tensor, p: PromptState | torch.Tensor) -> torch.Tensor:
    """Residual prompt injection on patch rows."""
    P = p.P if isinstance(p, PromptState) else p
    if h.shape != P.shape:
        raise ShapeMismatch(f"tokens {tuple(h.shape)} and prompts {tuple(P.shape)} differ")
    return h + P
