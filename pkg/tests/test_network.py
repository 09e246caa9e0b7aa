import numpy as np
import pytest
import torch
from torch import nn

from conftest import micro_config
from sppnet.errors import ConfigError, SamplingError, ShapeError
from sppnet.evaluation import count_params
from sppnet.network.blocks import LLSIEBlock, StemBlock, UNetBlock, build_lowlevel_block
from sppnet.network.common import Attention
from sppnet.network.encoder import ImageEncoder
from sppnet.network.mask_decoder import MaskDecoder
from sppnet.network.model import (
    ModelConfig,
    build_sppnet,
    encode_prompts,
    postprocess,
)
from sppnet.network.prompt_encoder import PromptEncoder
from sppnet.prompt_sampling import NEGATIVE, POSITIVE, PointPrompt


@pytest.fixture(scope="module")
def desk_model():
    config = ModelConfig()
    return build_sppnet(config, seed=0), config


def _micro_inputs(cfg, seed=0, dtype=torch.float32):
    gen = torch.Generator().manual_seed(seed)
    img = torch.randn(1, 3, cfg.encoder_input_size, cfg.encoder_input_size,
                      generator=gen, dtype=dtype)
    low = torch.randn(1, 3, cfg.llsie_input_size, cfg.llsie_input_size,
                      generator=gen, dtype=dtype)
    coords = torch.tensor([[[0.5, 0.5], [0.1, 0.2]]], dtype=dtype)
    labels = torch.tensor([[1, 0]])
    return img, low, coords, labels


# ---------------------------------------------------------------------------
# low-level blocks


def test_llsie_output_shape():
    block = LLSIEBlock(16)
    out = block(torch.randn(2, 3, 128, 128))
    assert out.shape == (2, 16, 128, 128)


@pytest.mark.parametrize("c", [8, 16, 32])
def test_block_param_formulas(c):
    # conv k*k*cin*cout + cout, depthwise 9c + c, two affine norms 4c
    assert count_params(LLSIEBlock(c)) == (27 * c + c) + (9 * c + c) + (c * c + c) + 4 * c
    assert count_params(UNetBlock(c)) == (27 * c + c) + (9 * c * c + c) + 4 * c
    assert count_params(StemBlock(c)) == (27 * c + c) + (9 * c * c + c) + (c * c + c) + 6 * c


@pytest.mark.parametrize("c", [8, 16, 32])
def test_block_param_ordering(c):
    assert count_params(LLSIEBlock(c)) < count_params(UNetBlock(c))
    assert count_params(UNetBlock(c)) < count_params(StemBlock(c))


def test_blocks_share_output_shape():
    x = torch.randn(1, 3, 32, 32)
    shapes = {
        kind: tuple(build_lowlevel_block(kind, 8)(x).shape)
        for kind in ("llsie", "unet_block", "stem_block")
    }
    assert set(shapes.values()) == {(1, 8, 32, 32)}


def test_unknown_block_kind():
    with pytest.raises(ConfigError, match="block kind"):
        build_lowlevel_block("resnet", 8)


def test_llsie_residual_passthrough():
    torch.manual_seed(0)
    block = LLSIEBlock(8)
    with torch.no_grad():
        block.depthwise.weight.zero_()
        block.depthwise.bias.zero_()
        block.pointwise.weight.zero_()
        block.pointwise.bias.zero_()
    block.norm_body = nn.Identity()
    x = torch.randn(1, 3, 16, 16)
    head_act = block.act(block.norm_head(block.head(x)))
    torch.testing.assert_close(block(x), head_act)


def test_block_rejects_wrong_channels():
    with pytest.raises(ShapeError):
        LLSIEBlock(8)(torch.randn(1, 4, 16, 16))


# ---------------------------------------------------------------------------
# encoder


def test_encoder_output_shape():
    torch.manual_seed(0)
    enc = ImageEncoder(input_size=256, patch_size=16, dim=64, depth=1,
                       num_heads=2, out_channels=256)
    out = enc(torch.randn(1, 3, 256, 256))
    assert out.shape == (1, 256, 16, 16)


def test_encoder_batch_independence():
    torch.manual_seed(0)
    enc = ImageEncoder(input_size=32, patch_size=8, dim=32, depth=1,
                       num_heads=2, out_channels=32)
    a = torch.randn(1, 3, 32, 32)
    b = torch.randn(1, 3, 32, 32)
    with torch.no_grad():
        fwd = enc(torch.cat([a, b]))
        swapped = enc(torch.cat([b, a]))
    torch.testing.assert_close(fwd[0], swapped[1])
    torch.testing.assert_close(fwd[1], swapped[0])


def test_encoder_indivisible_patch():
    with pytest.raises(ConfigError, match="divisible"):
        ImageEncoder(input_size=100, patch_size=16, dim=32, depth=1,
                     num_heads=2, out_channels=32)


def test_encoder_wrong_input_size():
    torch.manual_seed(0)
    enc = ImageEncoder(input_size=32, patch_size=8, dim=32, depth=1,
                       num_heads=2, out_channels=32)
    with pytest.raises(ShapeError):
        enc(torch.randn(1, 3, 64, 64))


def test_encoder_gradient_matches_finite_differences():
    torch.manual_seed(1)
    enc = ImageEncoder(input_size=32, patch_size=8, dim=32, depth=1,
                       num_heads=2, out_channels=32).double()
    gen = torch.Generator().manual_seed(2)
    x = torch.randn(1, 3, 32, 32, dtype=torch.float64, generator=gen)
    probe = torch.randn(1, 32, 4, 4, dtype=torch.float64, generator=gen)

    x_req = x.clone().requires_grad_(True)
    (enc(x_req) * probe).sum().backward()
    grad = x_req.grad

    rng = np.random.default_rng(3)
    h = 1e-6
    worst = 0.0
    for _ in range(150):
        c, i, j = rng.integers(0, 3), rng.integers(0, 32), rng.integers(0, 32)
        xp = x.clone(); xp[0, c, i, j] += h
        xm = x.clone(); xm[0, c, i, j] -= h
        with torch.no_grad():
            fd = float(((enc(xp) - enc(xm)) * probe).sum()) / (2 * h)
        a = float(grad[0, c, i, j])
        worst = max(worst, abs(fd - a) / max(abs(fd), abs(a), 1e-6))
    assert worst < 1e-4


# ---------------------------------------------------------------------------
# prompt encoder


def test_prompt_encoder_token_shape():
    torch.manual_seed(0)
    pe = PromptEncoder(128)
    coords = torch.tensor([[[0.25, 0.5], [0.75, 0.5]]])
    labels = torch.tensor([[1, 0]])
    tokens = pe(coords, labels)
    assert tokens.shape == (1, 3, 128)


def test_prompt_encoder_label_embeddings_differ():
    torch.manual_seed(0)
    pe = PromptEncoder(32)
    coords = torch.tensor([[[0.4, 0.6]]])
    pos = pe(coords, torch.tensor([[1]]))
    neg = pe(coords, torch.tensor([[0]]))
    assert not torch.allclose(pos[0, 1], neg[0, 1])


def test_prompt_encoder_deterministic():
    torch.manual_seed(0)
    pe = PromptEncoder(32)
    coords = torch.tensor([[[0.3, 0.3]]])
    labels = torch.tensor([[1]])
    torch.testing.assert_close(pe(coords, labels), pe(coords, labels))


def test_prompt_encoder_out_of_bounds():
    torch.manual_seed(0)
    pe = PromptEncoder(32)
    with pytest.raises(SamplingError, match="out of bounds"):
        pe(torch.tensor([[[1.5, 0.5]]]), torch.tensor([[1]]))


def test_encode_prompts_validates_pixels():
    prompts = [PointPrompt(3, 2, POSITIVE), PointPrompt(0, 0, NEGATIVE)]
    coords, labels = encode_prompts(prompts, (4, 5))
    assert coords.shape == (1, 2, 2) and labels.shape == (1, 2)
    assert coords[0, 0, 0] == pytest.approx(3.5 / 5)
    assert coords[0, 0, 1] == pytest.approx(2.5 / 4)
    with pytest.raises(SamplingError, match="out of bounds"):
        encode_prompts([PointPrompt(5, 0, POSITIVE)], (4, 5))


# ---------------------------------------------------------------------------
# mask decoder


def test_decoder_output_shape():
    torch.manual_seed(0)
    dec = MaskDecoder(dim=256, num_heads=4)
    pe = PromptEncoder(256)
    emb = torch.randn(1, 256, 16, 16)
    tokens = pe(torch.tensor([[[0.5, 0.5], [0.1, 0.1]]]), torch.tensor([[1, 0]]))
    out = dec(emb, tokens, pe.dense_grid(16, 16))
    assert out.shape == (1, 32, 64, 64)


def test_attention_rows_are_distributions():
    torch.manual_seed(0)
    attn = Attention(32, 4)
    q = torch.randn(2, 5, 32)
    k = torch.randn(2, 9, 32)
    w = attn.attention_weights(q, k)
    assert w.shape == (2, 4, 5, 9)
    torch.testing.assert_close(w.sum(-1), torch.ones(2, 4, 5), atol=1e-6, rtol=0)


def test_decoder_dim_mismatch():
    torch.manual_seed(0)
    dec = MaskDecoder(dim=32, num_heads=2)
    pe = PromptEncoder(32)
    tokens = pe(torch.tensor([[[0.5, 0.5]]]), torch.tensor([[1]]))
    with pytest.raises(ShapeError):
        dec(torch.randn(1, 64, 4, 4), tokens, pe.dense_grid(4, 4))


def test_decoder_gradient_matches_finite_differences():
    torch.manual_seed(4)
    dec = MaskDecoder(dim=32, num_heads=2).double()
    pe = PromptEncoder(32).double()
    gen = torch.Generator().manual_seed(5)
    emb = torch.randn(1, 32, 4, 4, dtype=torch.float64, generator=gen)
    tokens = pe(torch.tensor([[[0.5, 0.5], [0.2, 0.8]]], dtype=torch.float64),
                torch.tensor([[1, 0]]))
    grid = pe.dense_grid(4, 4)
    probe = torch.randn(1, 4, 16, 16, dtype=torch.float64, generator=gen)

    emb_req = emb.clone().requires_grad_(True)
    (dec(emb_req, tokens, grid) * probe).sum().backward()
    grad = emb_req.grad

    rng = np.random.default_rng(6)
    h = 1e-6
    worst = 0.0
    for _ in range(120):
        c, i, j = rng.integers(0, 32), rng.integers(0, 4), rng.integers(0, 4)
        ep = emb.clone(); ep[0, c, i, j] += h
        em = emb.clone(); em[0, c, i, j] -= h
        with torch.no_grad():
            fd = float(((dec(ep, tokens, grid) - dec(em, tokens, grid)) * probe).sum()) / (2 * h)
        a = float(grad[0, c, i, j])
        worst = max(worst, abs(fd - a) / max(abs(fd), abs(a), 1e-6))
    assert worst < 1e-4


# ---------------------------------------------------------------------------
# fusion and post-processing


def test_fusion_shapes_and_errors(desk_model):
    model, _ = desk_model
    out = model.fusion(torch.randn(1, 32, 64, 64), torch.randn(1, 16, 128, 128))
    assert out.shape == (1, 1, 64, 64)
    with pytest.raises(ShapeError, match="twice"):
        model.fusion(torch.randn(1, 32, 64, 64), torch.randn(1, 16, 100, 100))


def test_fusion_maxpool_preserves_constant(desk_model):
    model, _ = desk_model
    constant = torch.full((1, 16, 8, 8), 2.5)
    pooled = model.fusion.pool(constant)
    torch.testing.assert_close(pooled, torch.full((1, 16, 4, 4), 2.5))


def test_fusion_one_hot_projection():
    torch.manual_seed(0)
    from sppnet.network.model import FusionHead

    head = FusionHead(in_channels=6, num_classes=1)
    with torch.no_grad():
        head.proj.weight.zero_()
        head.proj.bias.zero_()
        head.proj.weight[0, 3, 0, 0] = 1.0  # select channel 3 of the concat
    dec = torch.randn(1, 4, 4, 4)
    low = torch.randn(1, 2, 8, 8)
    out = head(dec, low)
    torch.testing.assert_close(out[:, 0], dec[:, 3])


def test_postprocess_thresholds():
    ones = postprocess(torch.full((1, 4, 4), 3.0), (9, 7))
    assert ones.shape == (9, 7) and ones.all()
    zeros = postprocess(torch.zeros(1, 4, 4), (6, 6))
    assert not zeros.any()  # logit 0 is background (strict >)


def test_postprocess_constant_upsample():
    out = postprocess(torch.full((1, 3, 3), -1.25), (10, 11))
    assert out.shape == (10, 11) and not out.any()


def test_postprocess_bad_size():
    with pytest.raises(ShapeError):
        postprocess(torch.zeros(1, 4, 4), (0, 5))


# ---------------------------------------------------------------------------
# full model


def test_forward_shapes_desk(desk_model):
    model, cfg = desk_model
    img, low, coords, labels = _micro_inputs(cfg, seed=1)
    with torch.no_grad():
        emb = model.image_encoder(img)
        dec = model.mask_decoder(emb, model.prompt_encoder(coords, labels),
                                 model.prompt_encoder.dense_grid(16, 16))
        lowout = model.lowlevel(low)
        logits = model(img, low, coords, labels)
    assert emb.shape == (1, 256, 16, 16)
    assert dec.shape == (1, 32, 64, 64)
    assert lowout.shape == (1, 16, 128, 128)
    assert logits.shape == (1, 1, 64, 64)


def test_forward_deterministic():
    cfg = micro_config()
    model = build_sppnet(cfg, seed=0).eval()
    img, low, coords, labels = _micro_inputs(cfg, seed=2)
    with torch.no_grad():
        a = model(img, low, coords, labels)
        b = model(img, low, coords, labels)
    assert torch.equal(a, b)


def test_forward_label_swap_changes_logits():
    cfg = micro_config()
    model = build_sppnet(cfg, seed=0).eval()
    img, low, coords, _ = _micro_inputs(cfg, seed=3)
    with torch.no_grad():
        a = model(img, low, coords, torch.tensor([[1, 0]]))
        b = model(img, low, coords, torch.tensor([[0, 1]]))
    assert not torch.allclose(a, b)


def test_forward_finite_fuzz():
    cfg = micro_config()
    model = build_sppnet(cfg, seed=1).eval()
    rng = np.random.default_rng(0)
    for trial in range(25):
        scale = 10.0 ** rng.integers(-3, 4)
        gen = torch.Generator().manual_seed(trial)
        img = scale * torch.randn(1, 3, 32, 32, generator=gen)
        low = scale * torch.randn(1, 3, 32, 32, generator=gen)
        coords = torch.rand(1, 2, 2, generator=gen)
        labels = torch.tensor([[1, 0]])
        with torch.no_grad():
            out = model(img, low, coords, labels)
        assert torch.isfinite(out).all()


def test_forward_wrong_llsie_size():
    cfg = micro_config()
    model = build_sppnet(cfg, seed=0)
    img, _, coords, labels = _micro_inputs(cfg)
    with pytest.raises(ShapeError):
        model(img, torch.randn(1, 3, 16, 16), coords, labels)


# ---------------------------------------------------------------------------
# config validation


def test_config_validation_errors():
    with pytest.raises(ConfigError, match="divisible"):
        micro_config(encoder_input_size=30)
    with pytest.raises(ConfigError, match="llsie_input_size"):
        micro_config(llsie_input_size=64)
    with pytest.raises(ConfigError, match="embed_channels"):
        micro_config(embed_channels=64)
    with pytest.raises(ConfigError, match="block kind"):
        micro_config(block_kind="mystery")
    with pytest.raises(ConfigError):
        micro_config(decoder_dim=36, embed_channels=36)


def test_config_shape_arithmetic():
    desk = ModelConfig()
    assert (desk.embed_grid_size, desk.decoder_output_size) == (16, 64)
    full = ModelConfig(encoder_input_size=1024, patch_size=16, encoder_dim=32,
                       encoder_layers=1, encoder_heads=2, embed_channels=32,
                       decoder_dim=32, decoder_heads=2, llsie_input_size=512,
                       llsie_channels=8)
    assert (full.embed_grid_size, full.decoder_output_size) == (64, 256)
