"""The full prompt-tuned model: encoders, prompter, adapters and heads."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import torch
import torch.nn as nn

from .dssa import DSSALayer, emotion_project, truncated_svd
from .encoders import Backbone, PatchEmbed, PhysioEncoder
from .errors import ShapeMismatch
from .mcp import MCPLayer

FROZEN_PREFIX = "frozen."
TRAIN_PREFIX = "train."


@dataclass
class ModelConfig:
    img_size: int = 32
    patch_size: int = 16
    in_chans: int = 3
    dim: int = 64
    depth: int = 4
    heads: int = 4
    mlp_ratio: float = 4.0
    tfr_size: int = 32
    physio_channels: tuple = (16, 32, 64, 64)
    num_frames: int = 4
    use_mcp: bool = True
    use_dssa: bool = True
    rank: int = 8
    scale: float = 0.1
    subspace_rank: int = 16
    svd_scope: str = "sample"
    num_classes: int = 2
    num_subjects: int = 2
    pos_every_layer: bool = True
    backbone_seed: int = 0

    @property
    def grid(self) -> int:
        return self.img_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid**2

    @property
    def effective_subspace_rank(self) -> int:
        return min(self.subspace_rank, self.num_patches, self.dim)

    def validate(self):
        if self.img_size % self.patch_size:
            raise ShapeMismatch("img_size must be divisible by patch_size")
        tfr_grid, rem = divmod(self.tfr_size, PhysioEncoder.downsample)
        if rem or tfr_grid % self.grid:
            raise ShapeMismatch(
                f"TFR size {self.tfr_size} does not reduce to a multiple of the "
                f"{self.grid}x{self.grid} facial patch grid"
            )
        if self.svd_scope not in ("sample", "batch"):
            raise ValueError(f"unknown svd_scope {self.svd_scope!r}")
        return self


def tiny_profile(**overrides) -> ModelConfig:
    return replace(ModelConfig(), **overrides).validate()


def gradcheck_profile(**overrides) -> ModelConfig:
    base = ModelConfig(
        dim=8, depth=2, heads=2, num_frames=2, rank=2, physio_channels=(4, 4, 4, 4),
        num_subjects=3,
    )
    return replace(base, **overrides).validate()


def vit_base_profile(**overrides) -> ModelConfig:
    base = ModelConfig(
        img_size=224, patch_size=16, dim=768, depth=12, heads=12, tfr_size=224,
        num_frames=16, rank=8, scale=0.1, subspace_rank=16,
    )
    return replace(base, **overrides).validate()


@dataclass
class ModelOutput:
    logits: torch.Tensor
    sub_logits: torch.Tensor | None
    shared: list = field(default_factory=list)
    specific: list = field(default_factory=list)
    patch_tokens: torch.Tensor | None = None
    cls_features: torch.Tensor | None = None
    cls_shared: torch.Tensor | None = None
    subspace: np.ndarray | None = None


class SCPTModel(nn.Module):
    """Frozen ViT with rPPG prompts, shared/specific adapters and two heads.

    ``forward`` takes frames ``(B, T, C, H, W)`` and one TFR ``(B, Ht, Wt)``
    per clip. Per-frame projected class features are averaged over ``T``
    before the emotion head.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = c = config
        self.backbone = Backbone(
            c.dim, c.depth, c.heads, c.num_patches, c.mlp_ratio, c.pos_every_layer
        )
        self.face_embed = PatchEmbed(c.in_chans, c.patch_size, c.dim)
        self.physio = PhysioEncoder(c.dim, c.physio_channels)
        rppg_patch = c.tfr_size // PhysioEncoder.downsample // c.grid
        self.rppg_embed = PatchEmbed(c.dim, rppg_patch, c.dim)
        # zero rPPG tokens at init keep the first forward equal to the backbone's
        nn.init.zeros_(self.rppg_embed.proj.weight)
        nn.init.zeros_(self.rppg_embed.proj.bias)
        self.mcp = nn.ModuleList(MCPLayer(c.dim) for _ in range(c.depth)) if c.use_mcp else None
        self.dssa = (
            nn.ModuleList(DSSALayer(c.dim, c.rank) for _ in range(c.depth)) if c.use_dssa else None
        )
        self.head_emo = nn.Linear(c.effective_subspace_rank, c.num_classes)
        self.head_sub = nn.Linear(c.dim, c.num_subjects)

    # -- parameter partition -------------------------------------------------

    def checkpoint_names(self):
        for name, p in self.named_parameters():
            prefix = FROZEN_PREFIX if name.startswith("backbone.") else TRAIN_PREFIX
            yield prefix + name, p

    def trainable_parameters(self):
        return [p for n, p in self.named_parameters() if not n.startswith("backbone.")]

    def freeze_backbone(self):
        self.backbone.freeze()
        return self

    # -- forward ---------------------------------------------------------------

    def _prepare(self, frames, tfr):
        c = self.config
        if frames.dim() == 4:
            frames = frames.unsqueeze(1)
        B, T = frames.shape[:2]
        if tuple(frames.shape[2:]) != (c.in_chans, c.img_size, c.img_size):
            raise ShapeMismatch(f"frames {tuple(frames.shape)} do not match the model input")
        if tfr is not None and tfr.shape[0] != B:
            raise ShapeMismatch("one TFR per clip is required")
        return frames.reshape(B * T, *frames.shape[2:]), B, T

    def rppg_tokens(self, tfr: torch.Tensor) -> torch.Tensor:
        return self.rppg_embed(self.physio(tfr))

    def subspace_basis(self, shared_last: torch.Tensor) -> np.ndarray:
        """Right singular directions of the last shared correction, held constant."""
        S = self.config.effective_subspace_rank
        M = shared_last.detach().cpu().double().numpy()
        if self.config.svd_scope == "batch":
            V = truncated_svd(M.reshape(-1, M.shape[-1]), S).V
            return np.repeat(V[None], M.shape[0], axis=0)
        return truncated_svd(M, S).V

    def forward(self, frames, tfr=None, mode: str = "train", subspace=None) -> ModelOutput:
        if mode not in ("train", "invariant"):
            raise ValueError(f"unknown mode {mode!r}")
        c = self.config
        x, B, T = self._prepare(frames, tfr)
        h = self.face_embed(x)
        n_rows = h.shape[0]
        cls = self.backbone.cls_token.expand(n_rows, -1)

        prompts = None
        if self.mcp is not None:
            if tfr is None:
                raise ShapeMismatch("prompting requires a TFR input")
            r = self.rppg_tokens(tfr.to(h.dtype))
            if r.shape[1:] != h.shape[1:]:
                raise ShapeMismatch(f"rPPG tokens {tuple(r.shape)} vs facial {tuple(h.shape)}")
            prompts = r.repeat_interleave(T, dim=0)

        shared, specific = [], []
        spec_cls = None
        cls_shared = None
        for i, layer in enumerate(self.backbone.layers):
            if prompts is not None:
                prompts = self.mcp[i](h, prompts)
                xl = h + prompts
            else:
                xl = h
            out = layer(self.backbone.layer_input(cls, xl, i))
            if self.dssa is not None:
                # correction covers the class row too; losses and SVD use patch rows
                seq = torch.cat([cls.unsqueeze(1), xl], dim=1)
                sh, sp = self.dssa[i](seq, mode)
                gamma = sh if sp is None else sh + sp
                out = out + c.scale * gamma
                shared.append(sh[:, 1:])
                if sp is not None:
                    specific.append(sp[:, 1:])
                if i == c.depth - 1:
                    cls_shared = sh[:, 0]
                    if sp is not None:
                        spec_cls = sp[:, 0]
            cls, h = out[:, 0], out[:, 1:]

        shared_last = shared[-1] if shared else torch.zeros_like(h)
        if subspace is None:
            subspace = self.subspace_basis(shared_last)

        feats = self.backbone.norm(cls)
        z = emotion_project(feats, subspace).reshape(B, T, -1).mean(1)
        logits = self.head_emo(z)

        sub_logits = None
        if spec_cls is not None:
            sub_logits = self.head_sub(spec_cls.reshape(B, T, -1).mean(1))

        return ModelOutput(
            logits=logits,
            sub_logits=sub_logits,
            shared=shared,
            specific=specific,
            patch_tokens=h,
            cls_features=feats,
            cls_shared=cls_shared,
            subspace=subspace,
        )

    def backbone_forward(self, frames) -> torch.Tensor:
        """Frozen-backbone-only pass; returns per-frame ``(B*T, N+1, D)`` tokens."""
        x, _, _ = self._prepare(frames, None)
        return self.backbone(self.face_embed(x))


def build_model(
    config: ModelConfig,
    seed: int = 0,
    dtype: torch.dtype = torch.float32,
    backbone_state: dict | None = None,
) -> SCPTModel:
    """Seeded model with a frozen backbone.

    The backbone is drawn from ``config.backbone_seed`` (or copied from
    ``backbone_state``) so every fold shares it; the trainable parts come from
    ``seed``.
    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = SCPTModel(config)
        torch.manual_seed(config.backbone_seed)
        model.backbone.reset_parameters()
    model = model.to(dtype)
    if backbone_state is not None:
        with torch.no_grad():
            for name, p in model.backbone.named_parameters():
                p.copy_(torch.as_tensor(np.asarray(backbone_state[name]), dtype=dtype))
    return model.freeze_backbone()
