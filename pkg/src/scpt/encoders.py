"""Frame sampling, patch embeddings, the physiological CNN and the frozen ViT."""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import EmptyClip, ShapeMismatch


def sample_frame_indices(
    num_frames: int, T: int, mode: str = "eval", rng: np.random.Generator | None = None
) -> np.ndarray:
    """Pick one frame per equal-length segment.

    Eval mode takes each segment's center, ``floor((2i+1) * n / (2T))``; train
    mode draws uniformly inside each segment. Clips shorter than ``T`` are
    padded by repeating the last frame.
    """
    if num_frames < 1:
        raise EmptyClip("cannot sample from an empty clip")
    if T < 1:
        raise ValueError("T must be >= 1")
    if num_frames < T:
        idx = np.arange(T)
        return np.minimum(idx, num_frames - 1)

    i = np.arange(T)
    if mode == "eval":
        return (2 * i + 1) * num_frames // (2 * T)
    if mode != "train":
        raise ValueError(f"unknown sampling mode {mode!r}")
    if rng is None:
        rng = np.random.default_rng(0)
    starts = i * num_frames // T
    stops = (i + 1) * num_frames // T
    return starts + (rng.random(T) * (stops - starts)).astype(int)


def sample_frames(video_frames, T: int, mode: str = "eval", rng=None) -> np.ndarray:
    """Return a ``T x C x H x W`` clip drawn from a sequence of frames."""
    frames = list(video_frames) if not isinstance(video_frames, np.ndarray) else video_frames
    if len(frames) == 0:
        raise EmptyClip("cannot sample from an empty clip")
    idx = sample_frame_indices(len(frames), T, mode, rng)
    return np.stack([np.asarray(frames[k]) for k in idx])


class PatchEmbed(nn.Module):
    """Linear map of non-overlapping square patches, rows in raster order."""

    def __init__(self, in_chans: int, patch_size: int, dim: int):
        super().__init__()
        self.in_chans = in_chans
        self.patch_size = patch_size
        self.proj = nn.Linear(in_chans * patch_size * patch_size, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        B, C, H, W = x.shape
        p = self.patch_size
        if C != self.in_chans or H % p or W % p:
            raise ShapeMismatch(
                f"input {tuple(x.shape)} incompatible with patch {p} and {self.in_chans} channels"
            )
        gh, gw = H // p, W // p
        patches = x.reshape(B, C, gh, p, gw, p).permute(0, 2, 4, 1, 3, 5)
        return self.proj(patches.reshape(B, gh * gw, C * p * p))


def _group_norm(channels: int) -> nn.GroupNorm:
    groups = math.gcd(channels, 8)
    return nn.GroupNorm(groups, channels)


class ResidualBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int = 2):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride, 1, bias=False)
        self.norm1 = _group_norm(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, 1, 1, bias=False)
        self.norm2 = _group_norm(out_ch)
        self.skip = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, 1, stride, bias=False), _group_norm(out_ch)
        )

    def forward(self, x):
        y = F.relu(self.norm1(self.conv1(x)))
        y = self.norm2(self.conv2(y))
        return F.relu(y + self.skip(x))


class PhysioEncoder(nn.Module):
    """Stem convolution plus three stride-2 residual blocks over a TFR image.

    The single-channel TFR is replicated to three channels. A final 1x1
    convolution maps to ``out_dim`` channels per spatial cell, so a ``224``
    input leaves a ``14 x 14`` grid.
    """

    def __init__(self, out_dim: int, channels=(16, 32, 64, 64)):
        super().__init__()
        stem, *widths = channels
        if len(widths) != 3:
            raise ValueError("channels must list the stem width and three block widths")
        self.stem = nn.Sequential(
            nn.Conv2d(3, stem, 3, 2, 1, bias=False), _group_norm(stem), nn.ReLU()
        )
        blocks, prev = [], stem
        for w in widths:
            blocks.append(ResidualBlock(prev, w, stride=2))
            prev = w
        self.blocks = nn.Sequential(*blocks)
        self.proj = nn.Conv2d(prev, out_dim, 1)
        nn.init.zeros_(self.proj.bias)

    downsample = 16

    def forward(self, tfr: torch.Tensor) -> torch.Tensor:
        if tfr.dim() == 3:
            tfr = tfr.unsqueeze(1)
        if tfr.dim() != 4 or tfr.shape[1] != 1:
            raise ShapeMismatch(f"expected (B, H, W) or (B, 1, H, W) TFR, got {tuple(tfr.shape)}")
        if tfr.shape[-1] % self.downsample or tfr.shape[-2] % self.downsample:
            raise ShapeMismatch(f"TFR size must be a multiple of {self.downsample}")
        x = tfr.expand(-1, 3, -1, -1)
        return self.proj(self.blocks(self.stem(x)))


class ViTLayer(nn.Module):
    """Pre-norm multi-head self-attention and MLP, each with a residual."""

    def __init__(self, dim: int, heads: int, mlp_ratio: float = 4.0):
        super().__init__()
        if dim % heads:
            raise ValueError("dim must be divisible by heads")
        self.dim = dim
        self.heads = heads
        self.norm1 = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def attention(self, x: torch.Tensor):
        B, n, D = x.shape
        hd = D // self.heads
        q, k, v = self.qkv(x).reshape(B, n, 3, self.heads, hd).permute(2, 0, 3, 1, 4)
        attn = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(hd), dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(B, n, D)
        return self.proj(out), attn

    def forward(self, x: torch.Tensor, return_attn: bool = False):
        if x.dim() != 3 or x.shape[-1] != self.dim:
            raise ShapeMismatch(f"expected (B, n, {self.dim}) tokens, got {tuple(x.shape)}")
        a, attn = self.attention(self.norm1(x))
        x = x + a
        x = x + self.fc2(F.gelu(self.fc1(self.norm2(x))))
        return (x, attn) if return_attn else x


def vit_layer_forward(x: torch.Tensor, layer: ViTLayer) -> torch.Tensor:
    squeeze = x.dim() == 2
    out = layer(x.unsqueeze(0) if squeeze else x)
    return out[0] if squeeze else out


class Backbone(nn.Module):
    """Frozen ViT trunk: class token, positional table, L layers, final norm.

    ``pos_every_layer`` re-adds the positional table before each layer instead
    of only before the first.
    """

    def __init__(
        self,
        dim: int,
        depth: int,
        heads: int,
        num_patches: int,
        mlp_ratio: float = 4.0,
        pos_every_layer: bool = True,
    ):
        super().__init__()
        self.dim = dim
        self.num_patches = num_patches
        self.pos_every_layer = pos_every_layer
        self.cls_token = nn.Parameter(torch.zeros(1, dim))
        self.pos_embed = nn.Parameter(torch.zeros(num_patches + 1, dim))
        self.layers = nn.ModuleList(ViTLayer(dim, heads, mlp_ratio) for _ in range(depth))
        self.norm = nn.LayerNorm(dim)
        self.reset_parameters()

    def reset_parameters(self):
        nn.init.trunc_normal_(self.cls_token, std=0.02)
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        for m in self.layers.modules():
            if isinstance(m, nn.Linear):
                nn.init.trunc_normal_(m.weight, std=0.02)
                nn.init.zeros_(m.bias)

    @property
    def depth(self) -> int:
        return len(self.layers)

    def layer_input(self, cls: torch.Tensor, patches: torch.Tensor, index: int) -> torch.Tensor:
        """``[cls, patches]`` plus the positional table where it applies."""
        seq = torch.cat([cls.unsqueeze(1), patches], dim=1)
        if self.pos_every_layer or index == 0:
            seq = seq + self.pos_embed
        return seq

    def forward(self, patches: torch.Tensor) -> torch.Tensor:
        """Plain backbone pass over patch tokens; returns ``(B, N+1, D)``."""
        cls = self.cls_token.expand(patches.shape[0], -1)
        seq = None
        for i, layer in enumerate(self.layers):
            seq = layer(self.layer_input(cls, patches, i))
            cls, patches = seq[:, 0], seq[:, 1:]
        return seq

    def freeze(self):
        for p in self.parameters():
            p.requires_grad_(False)
        return self
