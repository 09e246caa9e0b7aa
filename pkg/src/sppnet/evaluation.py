"""Metrics and model accounting: IoU/DSC, parameter and FLOPs counts, FPS,
seeded test-set evaluation, and the repeated-evaluation stability protocol.

FLOPs conventions (documented so the numbers are comparable):
  * one multiply-accumulate = 2 FLOPs;
  * conv: 2 * k^2 * (Cin/groups) * Cout * Hout * Wout, bias adds Cout*Hout*Wout;
  * transposed conv: 2 * k^2 * Cin * (Cout/groups) * Hin * Win plus bias at
    the output size;
  * linear over n positions: n * (2 * in * out + out if bias);
  * attention: the four projections as linears, plus 2*nq*nk*dim for scores,
    2*nq*nk*dim for the value product, nq*nk*heads for scaling and
    3*nq*nk*heads for softmax;
  * norms cost 4 and activations 1 FLOP per element; max-pool costs k^2
    comparisons per output element.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from sppnet.errors import ProfileError, ShapeError
from sppnet.network.blocks import LLSIEBlock, StemBlock, UNetBlock
from sppnet.network.common import Attention, LayerNorm2d, MLP
from sppnet.network.encoder import ImageEncoder
from sppnet.network.mask_decoder import MaskDecoder
from sppnet.network.model import ModelConfig, SPPNet
from sppnet.network.prompt_encoder import PromptEncoder
from sppnet.prompt_sampling import InstanceLabelMap, SamplerConfig, sample_prompt_pair


# ---------------------------------------------------------------------------
# overlap metrics


def _check_pair(pred, gt):
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ShapeError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    return pred, gt


def iou(pred, gt) -> float:
    """Intersection over union; 1.0 when both masks are empty."""
    pred, gt = _check_pair(pred, gt)
    union = int(np.logical_or(pred, gt).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(pred, gt).sum()) / union


def dsc(pred, gt) -> float:
    """Dice similarity 2|P&G| / (|P|+|G|); 1.0 when both masks are empty."""
    pred, gt = _check_pair(pred, gt)
    total = int(pred.sum()) + int(gt.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(pred, gt).sum()) / total


# ---------------------------------------------------------------------------
# parameter and FLOPs accounting


def count_params(module: nn.Module) -> int:
    """Learnable scalars only (buffers excluded)."""
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


def conv2d_flops(layer: nn.Conv2d, out_hw) -> int:
    h, w = out_hw
    k = layer.kernel_size[0] * layer.kernel_size[1]
    mac = k * (layer.in_channels // layer.groups) * layer.out_channels * h * w
    return 2 * mac + (layer.out_channels * h * w if layer.bias is not None else 0)


def convtranspose2d_flops(layer: nn.ConvTranspose2d, in_hw) -> int:
    h, w = in_hw
    k = layer.kernel_size[0] * layer.kernel_size[1]
    mac = k * layer.in_channels * (layer.out_channels // layer.groups) * h * w
    out_h, out_w = h * layer.stride[0], w * layer.stride[1]
    return 2 * mac + (layer.out_channels * out_h * out_w if layer.bias is not None else 0)


def linear_flops(layer: nn.Linear, n_positions: int) -> int:
    per = 2 * layer.in_features * layer.out_features
    if layer.bias is not None:
        per += layer.out_features
    return n_positions * per


def norm_flops(numel: int) -> int:
    return 4 * numel


def act_flops(numel: int) -> int:
    return numel


def attention_flops(attn: Attention, n_q: int, n_k: int) -> int:
    d, heads = attn.dim, attn.num_heads
    total = linear_flops(attn.q_proj, n_q) + linear_flops(attn.k_proj, n_k)
    total += linear_flops(attn.v_proj, n_k) + linear_flops(attn.out_proj, n_q)
    total += 2 * n_q * n_k * d          # scores
    total += n_q * n_k * heads          # scaling
    total += 3 * n_q * n_k * heads      # softmax
    total += 2 * n_q * n_k * d          # weights @ values
    return total


def mlp_flops(mlp: MLP, n_positions: int) -> int:
    total = 0
    for i, layer in enumerate(mlp.layers):
        total += linear_flops(layer, n_positions)
        if i < len(mlp.layers) - 1:
            total += act_flops(n_positions * layer.out_features)
    return total


def _leaf_flops(layer: nn.Module, hw) -> int:
    """Stride-1, padding-preserving leaves only (the low-level blocks)."""
    h, w = hw
    if isinstance(layer, nn.Conv2d):
        return conv2d_flops(layer, hw)
    if isinstance(layer, LayerNorm2d):
        return norm_flops(layer.weight.numel() * h * w)
    if isinstance(layer, (nn.ReLU, nn.GELU)):
        return 0  # counted by the caller, which knows the activation width
    if isinstance(layer, nn.MaxPool2d):
        k = layer.kernel_size if isinstance(layer.kernel_size, int) else layer.kernel_size[0]
        return k * k * h * w  # per output element, same-resolution pooling
    raise ProfileError(f"unsupported layer type: {type(layer).__name__}")


def block_flops(block: nn.Module, size: int) -> int:
    """Analytic FLOPs of a low-level block at size x size input."""
    hw = (size, size)
    n = size * size
    if isinstance(block, LLSIEBlock):
        c = block.channels
        total = sum(_leaf_flops(m, hw) for m in
                    (block.head, block.norm_head, block.depthwise, block.pointwise,
                     block.norm_body))
        return total + 2 * act_flops(c * n) + c * n  # two relus + residual add
    if isinstance(block, UNetBlock):
        total = sum(_leaf_flops(m, hw) for m in block.body
                    if not isinstance(m, (nn.ReLU, nn.GELU)))
        return total + 2 * act_flops(block.channels * n)
    if isinstance(block, StemBlock):
        c = block.channels
        total = sum(_leaf_flops(m, hw) for m in
                    (block.head, block.norm_head, block.conv_branch, block.norm_conv,
                     block.pool, block.pool_proj, block.norm_pool))
        return total + 2 * act_flops(c * n) + c * n  # two relus + branch merge add
    raise ProfileError(f"unsupported layer type: {type(block).__name__}")


def encoder_flops(encoder: ImageEncoder) -> int:
    g = encoder.grid_size
    n = g * g
    dim = encoder.patch_embed.out_channels
    total = conv2d_flops(encoder.patch_embed, (g, g))
    total += n * dim  # positional add
    for layer in encoder.layers:
        total += 2 * norm_flops(n * dim)
        total += attention_flops(layer.attn, n, n)
        total += mlp_flops(layer.mlp, n)
        total += 2 * n * dim  # two residual adds
    total += norm_flops(n * dim)
    neck_conv, neck_norm = encoder.neck[0], encoder.neck[1]
    total += conv2d_flops(neck_conv, (g, g))
    total += norm_flops(neck_conv.out_channels * n)
    return total


def prompt_encoder_flops(pe: PromptEncoder, num_points: int = 2) -> int:
    d = pe.dim
    per_point = 2 * 2 * (d // 2) + d + 2 * d  # fourier matmul, scale, sin/cos, label add
    return num_points * per_point


def decoder_flops(decoder: MaskDecoder, grid_hw, num_tokens: int = 3) -> int:
    h, w = grid_hw
    n_img = h * w
    d = decoder.dim
    # dense positional grid shares the prompt-encoder Fourier mapping
    total = n_img * (2 * 2 * (d // 2) + d)
    for block in decoder.blocks:
        total += attention_flops(block.self_attn, num_tokens, num_tokens)
        total += attention_flops(block.cross_tokens_to_image, num_tokens, n_img)
        total += mlp_flops(block.mlp, num_tokens)
        total += attention_flops(block.cross_image_to_tokens, n_img, num_tokens)
        total += 3 * norm_flops(num_tokens * d) + norm_flops(n_img * d)
        total += 3 * num_tokens * d + n_img * d  # residual adds
        total += 2 * n_img * d  # key = image + positional, twice per block
    up1, norm1, _, up2, _ = decoder.upscale
    total += convtranspose2d_flops(up1, (h, w))
    total += norm_flops(up1.out_channels * 4 * n_img)
    total += act_flops(up1.out_channels * 4 * n_img)
    total += convtranspose2d_flops(up2, (2 * h, 2 * w))
    total += act_flops(up2.out_channels * 16 * n_img)
    total += mlp_flops(decoder.token_head, 1)
    total += decoder.out_channels * 16 * n_img  # per-channel gain modulation
    return total


@dataclass(frozen=True)
class ComponentCost:
    name: str
    params: int
    flops: int


def profile_model(model: SPPNet, config: ModelConfig) -> list[ComponentCost]:
    """Per-component parameter and FLOPs table for one single-image forward."""
    g = config.embed_grid_size
    d_out = config.decoder_output_size
    rows = [
        ComponentCost("image_encoder", count_params(model.image_encoder),
                      encoder_flops(model.image_encoder)),
        ComponentCost("prompt_encoder", count_params(model.prompt_encoder),
                      prompt_encoder_flops(model.prompt_encoder)),
        ComponentCost("mask_decoder", count_params(model.mask_decoder),
                      decoder_flops(model.mask_decoder, (g, g))),
        ComponentCost(f"lowlevel({config.block_kind})", count_params(model.lowlevel),
                      block_flops(model.lowlevel, config.llsie_input_size)),
    ]
    fusion_flops = (
        4 * config.llsie_channels * d_out * d_out           # 2x2 max-pool
        + conv2d_flops(model.fusion.proj, (d_out, d_out))
    )
    rows.append(ComponentCost("fusion", count_params(model.fusion), fusion_flops))
    return rows


def estimate_flops(model: SPPNet, config: ModelConfig) -> int:
    """Analytic FLOPs for one forward at the configured resolution."""
    return sum(row.flops for row in profile_model(model, config))


def fps_benchmark(model: SPPNet, n_warmup: int = 2, n_timed: int = 8) -> float:
    """Single-image wall-clock frames/second after warmup (n_timed / elapsed)."""
    cfg = model.config
    gen = torch.Generator().manual_seed(0)
    image_full = torch.randn(1, 3, cfg.encoder_input_size, cfg.encoder_input_size,
                             generator=gen)
    image_llsie = torch.randn(1, 3, cfg.llsie_input_size, cfg.llsie_input_size,
                              generator=gen)
    coords = torch.tensor([[[0.5, 0.5], [0.1, 0.1]]])
    labels = torch.tensor([[1, 0]])
    model.eval()
    with torch.no_grad():
        for _ in range(n_warmup):
            model(image_full, image_llsie, coords, labels)
        t0 = time.perf_counter()
        for _ in range(n_timed):
            model(image_full, image_llsie, coords, labels)
        elapsed = time.perf_counter() - t0
    return n_timed / elapsed


# ---------------------------------------------------------------------------
# seeded evaluation and stability protocol


@dataclass
class EvalReport:
    per_image: list[tuple[str, float, float]]  # (id, iou, dsc)
    miou_mean: float
    miou_std: float
    dsc_mean: float
    dsc_std: float
    params_total: int
    flops_total: int
    fps: float | None

    def to_json(self) -> str:
        return json.dumps({
            "per_image": [
                {"id": i, "iou": v, "dsc": d} for i, v, d in self.per_image
            ],
            "miou_mean": self.miou_mean,
            "miou_std": self.miou_std,
            "dsc_mean": self.dsc_mean,
            "dsc_std": self.dsc_std,
            "params_total": self.params_total,
            "flops_total": self.flops_total,
            "fps": self.fps,
        }, indent=2)


def _seed_list(seed) -> list[int]:
    if isinstance(seed, (list, tuple)):
        return [int(s) for s in seed]
    return [int(seed)]


def evaluate(predictor, samples, sampler_cfg: SamplerConfig, seed) -> EvalReport:
    """One seeded prompt pair per test image, forward, restore size, score.

    `predictor` needs a `predict(sample, prompts) -> bool mask` method; when
    it also carries `.model`/`.config`, parameter and FLOPs totals are filled.
    """
    per_image = []
    for i, sample in enumerate(samples):
        rng = np.random.default_rng(_seed_list(seed) + [i])
        prompts = sample_prompt_pair(InstanceLabelMap(sample.instances),
                                     sampler_cfg, rng)
        pred = predictor.predict(sample, prompts)
        gt = sample.instances > 0
        per_image.append((sample.id, iou(pred, gt), dsc(pred, gt)))

    ious = np.array([r[1] for r in per_image])
    dscs = np.array([r[2] for r in per_image])
    model = getattr(predictor, "model", None)
    config = getattr(predictor, "config", None)
    params_total = count_params(model) if isinstance(model, nn.Module) else 0
    flops_total = (estimate_flops(model, config)
                   if isinstance(model, SPPNet) and config is not None else 0)
    return EvalReport(
        per_image=per_image,
        miou_mean=float(ious.mean()),
        miou_std=float(ious.std()),
        dsc_mean=float(dscs.mean()),
        dsc_std=float(dscs.std()),
        params_total=params_total,
        flops_total=flops_total,
        fps=None,
    )


@dataclass
class StabilityReport:
    iterations: int
    dsc_samples: list[float]
    min: float
    max: float
    mean: float
    std: float

    def to_json(self) -> str:
        return json.dumps({
            "iterations": self.iterations,
            "dsc_samples": self.dsc_samples,
            "min": self.min,
            "max": self.max,
            "mean": self.mean,
            "std": self.std,
        }, indent=2)


def stability_eval(predictor, samples, sampler_cfg: SamplerConfig,
                   iterations: int, base_seed: int) -> StabilityReport:
    """Re-evaluate the same model `iterations` times with fresh prompt draws
    and collect the mean-DSC distribution."""
    dsc_means = []
    for it in range(iterations):
        report = evaluate(predictor, samples, sampler_cfg, seed=[base_seed, it])
        dsc_means.append(report.dsc_mean)
    arr = np.array(dsc_means)
    return StabilityReport(
        iterations=iterations,
        dsc_samples=[float(v) for v in dsc_means],
        min=float(arr.min()),
        max=float(arr.max()),
        mean=float(arr.mean()),
        std=float(arr.std()),
    )
