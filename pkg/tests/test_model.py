import numpy as np
import pytest
import torch

from scpt.errors import ShapeMismatch
from scpt.model import build_model, gradcheck_profile, vit_base_profile, tiny_profile


def inputs(cfg, B=2, seed=0, dtype=torch.float64):
    g = torch.Generator().manual_seed(seed)
    frames = torch.rand(B, cfg.num_frames, cfg.in_chans, cfg.img_size, cfg.img_size, generator=g)
    tfr = torch.rand(B, cfg.tfr_size, cfg.tfr_size, generator=g)
    return frames.to(dtype), tfr.to(dtype)


def perturb(params, scale=0.3, seed=1):
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in params:
            p.add_(scale * torch.randn(p.shape, generator=g, dtype=p.dtype))


class TestIdentityAtInit:
    def test_patch_tokens_equal_backbone_bitwise(self):
        cfg = tiny_profile(num_frames=2)
        model = build_model(cfg, seed=3, dtype=torch.float64)
        frames, tfr = inputs(cfg)
        with torch.no_grad():
            out = model(frames, tfr, mode="train")
            ref = model.backbone_forward(frames)
        assert torch.equal(out.patch_tokens, ref[:, 1:])
        assert torch.equal(out.cls_features, model.backbone.norm(ref[:, 0]))

    def test_logits_equal_head_on_leading_cls_coordinates(self):
        cfg = tiny_profile(num_frames=2)
        model = build_model(cfg, seed=3, dtype=torch.float64)
        frames, tfr = inputs(cfg)
        with torch.no_grad():
            out = model(frames, tfr)
            S = cfg.effective_subspace_rank
            np.testing.assert_array_equal(out.subspace[0], np.eye(cfg.dim)[:, :S])
            feats = model.backbone.norm(model.backbone_forward(frames)[:, 0])
            z = feats[:, :S].reshape(2, cfg.num_frames, S).mean(1)
            torch.testing.assert_close(out.logits, model.head_emo(z), rtol=0, atol=1e-12)


class TestInvariantPurity:
    def test_specific_weights_do_not_reach_invariant_logits(self):
        cfg = gradcheck_profile()
        model = build_model(cfg, seed=0, dtype=torch.float64)
        perturb(model.trainable_parameters())
        frames, tfr = inputs(cfg)
        with torch.no_grad():
            before = model(frames, tfr, mode="invariant").logits.clone()
            perturb([p for n, p in model.named_parameters() if ".specific." in n], 5.0, 9)
            after = model(frames, tfr, mode="invariant").logits
        assert torch.equal(before, after)

    def test_train_path_does_depend_on_specific(self):
        cfg = gradcheck_profile()
        model = build_model(cfg, seed=0, dtype=torch.float64)
        perturb(model.trainable_parameters())
        frames, tfr = inputs(cfg)
        with torch.no_grad():
            inv = model(frames, tfr, mode="invariant")
            tr = model(frames, tfr, mode="train")
        assert inv.sub_logits is None and tr.sub_logits is not None
        assert not torch.equal(inv.patch_tokens, tr.patch_tokens)


def test_gradient_reaches_physio_encoder_once_prompts_are_live():
    cfg = gradcheck_profile()
    model = build_model(cfg, seed=0, dtype=torch.float64)
    frames, tfr = inputs(cfg)
    physio = list(model.physio.parameters())

    model(frames, tfr).logits.sum().backward()
    assert all(p.grad is None or torch.all(p.grad == 0) for p in physio)

    model.zero_grad()
    perturb(list(model.rppg_embed.parameters()) + list(model.mcp.parameters()))
    model(frames, tfr).logits.sum().backward()
    assert any(p.grad is not None and p.grad.abs().sum() > 0 for p in physio)


def test_backbone_is_frozen_and_partitioned():
    model = build_model(tiny_profile(), seed=0)
    names = dict(model.checkpoint_names())
    assert all(not p.requires_grad for n, p in names.items() if n.startswith("frozen."))
    assert all(p.requires_grad for n, p in names.items() if n.startswith("train."))
    assert {n.split(".")[1] for n in names if n.startswith("frozen.")} == {"backbone"}
    trainable = {id(p) for p in model.trainable_parameters()}
    assert trainable == {id(p) for n, p in names.items() if n.startswith("train.")}


def test_backbone_shared_across_seeds_and_trainables_differ():
    cfg = tiny_profile()
    a, b = build_model(cfg, seed=0), build_model(cfg, seed=1)
    for (n, p), (_, q) in zip(a.named_parameters(), b.named_parameters()):
        if n.startswith("backbone."):
            assert torch.equal(p, q)
    assert not torch.equal(a.physio.proj.weight, b.physio.proj.weight)
    c = build_model(cfg, seed=0)
    assert all(torch.equal(p, q) for p, q in zip(a.parameters(), c.parameters()))


def test_backbone_state_is_loaded():
    cfg = tiny_profile()
    src = build_model(cfg, seed=0)
    state = {n: p.detach().numpy() + 1.0 for n, p in src.backbone.named_parameters()}
    m = build_model(cfg, seed=0, backbone_state=state)
    for n, p in m.backbone.named_parameters():
        np.testing.assert_array_equal(p.detach().numpy(), state[n])


def test_batch_scope_uses_one_basis():
    cfg = gradcheck_profile(svd_scope="batch")
    model = build_model(cfg, seed=0, dtype=torch.float64)
    perturb(model.trainable_parameters())
    frames, tfr = inputs(cfg, B=3)
    with torch.no_grad():
        V = model(frames, tfr).subspace
    assert V.shape == (3 * cfg.num_frames, cfg.dim, cfg.effective_subspace_rank)
    assert all(np.array_equal(V[0], V[k]) for k in range(len(V)))


def test_without_adapters_or_prompts():
    cfg = tiny_profile(use_dssa=False, use_mcp=False, num_frames=1)
    model = build_model(cfg, seed=0)
    out = model(*inputs(cfg, dtype=torch.float32))
    assert out.logits.shape == (2, 2) and out.sub_logits is None and out.shared == []


def test_shape_errors():
    cfg = tiny_profile()
    model = build_model(cfg, seed=0)
    with pytest.raises(ShapeMismatch):
        model(torch.zeros(1, 1, 3, 16, 16), torch.zeros(1, 32, 32))
    with pytest.raises(ShapeMismatch):
        model(torch.zeros(2, 1, 3, 32, 32), torch.zeros(1, 32, 32))
    with pytest.raises(ShapeMismatch):
        tiny_profile(tfr_size=40)


@pytest.mark.slow
def test_vit_base_profile_shapes():
    cfg = vit_base_profile(num_frames=1, depth=2)
    assert cfg.num_patches == 196 and cfg.effective_subspace_rank == 16
    model = build_model(cfg, seed=0)
    with torch.no_grad():
        out = model(torch.rand(1, 1, 3, 224, 224), torch.rand(1, 224, 224))
    assert out.patch_tokens.shape == (1, 196, 768)
    assert out.shared[-1].shape == (1, 196, 768)
    assert out.logits.shape == (1, 2)
