"""Model assembly: config, fusion head, full forward pass, post-processing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from sppnet.errors import ConfigError, SamplingError, ShapeError
from sppnet.network.blocks import BLOCK_KINDS, build_lowlevel_block
from sppnet.network.encoder import ImageEncoder
from sppnet.network.mask_decoder import MaskDecoder
from sppnet.network.prompt_encoder import PromptEncoder
from sppnet.prompt_sampling import PointPrompt


@dataclass
class ModelConfig:
    """Architecture hyperparameters; the single source of shape arithmetic.

    The low-level branch input must be exactly twice the decoder output so
    one 2x2 stride-2 pooling aligns the two paths:
    llsie_input_size = 2 * (4 * encoder_input_size / patch_size).
    """

    encoder_input_size: int = 256
    patch_size: int = 16
    encoder_dim: int = 128
    encoder_layers: int = 4
    encoder_heads: int = 4
    embed_channels: int = 256
    decoder_dim: int = 256
    decoder_heads: int = 4
    llsie_input_size: int = 128
    llsie_channels: int = 16
    num_classes: int = 1
    block_kind: str = "llsie"

    def __post_init__(self):
        if self.encoder_input_size % self.patch_size != 0:
            raise ConfigError(
                f"encoder_input_size {self.encoder_input_size} not divisible by "
                f"patch_size {self.patch_size}"
            )
        if self.llsie_input_size != 2 * self.decoder_output_size:
            raise ConfigError(
                f"llsie_input_size must be 2 * decoder output size "
                f"({2 * self.decoder_output_size}), got {self.llsie_input_size}"
            )
        if self.embed_channels != self.decoder_dim:
            raise ConfigError(
                f"embed_channels ({self.embed_channels}) must equal decoder_dim "
                f"({self.decoder_dim}); the decoder consumes the embedding directly"
            )
        if self.decoder_dim % 8 != 0:
            raise ConfigError(f"decoder_dim must be divisible by 8, got {self.decoder_dim}")
        if self.encoder_dim % self.encoder_heads != 0:
            raise ConfigError("encoder_dim must be divisible by encoder_heads")
        if self.decoder_dim % self.decoder_heads != 0:
            raise ConfigError("decoder_dim must be divisible by decoder_heads")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        if self.block_kind not in BLOCK_KINDS:
            raise ConfigError(
                f"unknown block kind {self.block_kind!r}, expected one of {BLOCK_KINDS}"
            )

    @property
    def embed_grid_size(self) -> int:
        return self.encoder_input_size // self.patch_size

    @property
    def decoder_output_size(self) -> int:
        return 4 * self.embed_grid_size

    @property
    def decoder_out_channels(self) -> int:
        return self.decoder_dim // 8


class FusionHead(nn.Module):
    """Pool the low-level map 2x, concat with the decoder map, project to classes."""

    def __init__(self, in_channels: int, num_classes: int):
        super().__init__()
        self.pool = nn.MaxPool2d(kernel_size=2, stride=2)
        self.proj = nn.Conv2d(in_channels, num_classes, 1)

    def forward(self, decoder_out, lowlevel_out):
        if (lowlevel_out.shape[-2] != 2 * decoder_out.shape[-2]
                or lowlevel_out.shape[-1] != 2 * decoder_out.shape[-1]):
            raise ShapeError(
                f"low-level map {tuple(lowlevel_out.shape[-2:])} must be exactly twice "
                f"the decoder map {tuple(decoder_out.shape[-2:])}"
            )
        pooled = self.pool(lowlevel_out)
        return self.proj(torch.cat([decoder_out, pooled], dim=1))


class SPPNet(nn.Module):
    """Single-point-prompt segmentation network.

    forward(image_full, image_llsie, point_coords, point_labels) -> logits
    with shapes (B, 3, N, N), (B, 3, S, S), (B, P, 2) in [0, 1], (B, P)
    -> (B, num_classes, D, D) where D = 4 * N / patch_size and S = 2D.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.image_encoder = ImageEncoder(
            input_size=config.encoder_input_size,
            patch_size=config.patch_size,
            dim=config.encoder_dim,
            depth=config.encoder_layers,
            num_heads=config.encoder_heads,
            out_channels=config.embed_channels,
        )
        self.prompt_encoder = PromptEncoder(config.decoder_dim)
        self.mask_decoder = MaskDecoder(config.decoder_dim, config.decoder_heads)
        self.lowlevel = build_lowlevel_block(config.block_kind, config.llsie_channels)
        self.fusion = FusionHead(
            config.decoder_out_channels + config.llsie_channels, config.num_classes
        )

    def forward(self, image_full, image_llsie, point_coords, point_labels):
        cfg = self.config
        if image_llsie.ndim != 4 or image_llsie.shape[-2:] != (cfg.llsie_input_size,) * 2:
            raise ShapeError(
                f"low-level input must be {cfg.llsie_input_size}x{cfg.llsie_input_size}, "
                f"got {tuple(image_llsie.shape)}"
            )
        embedding = self.image_encoder(image_full)
        tokens = self.prompt_encoder(point_coords, point_labels)
        image_pe = self.prompt_encoder.dense_grid(*embedding.shape[-2:])
        decoder_out = self.mask_decoder(embedding, tokens, image_pe)
        lowlevel_out = self.lowlevel(image_llsie)
        return self.fusion(decoder_out, lowlevel_out)


def build_sppnet(config: ModelConfig, seed: int = 0) -> SPPNet:
    """Construct with a fixed torch seed so initialization is reproducible."""
    torch.manual_seed(seed)
    return SPPNet(config)


def encode_prompts(prompts: Sequence[PointPrompt], image_size) -> tuple[torch.Tensor, torch.Tensor]:
    """Validate pixel prompts against (H, W) and normalize to the unit square.

    Returns coords01 (1, P, 2) float32 and labels (1, P) int64 for the model.
    """
    h, w = image_size
    coords = []
    labels = []
    for p in prompts:
        if not (0 <= p.x < w and 0 <= p.y < h):
            raise SamplingError(
                f"point ({p.x}, {p.y}) out of bounds for image {w}x{h}"
            )
        coords.append(((p.x + 0.5) / w, (p.y + 0.5) / h))
        labels.append(p.label)
    coords01 = torch.tensor(coords, dtype=torch.float32).unsqueeze(0)
    label_t = torch.tensor(labels, dtype=torch.long).unsqueeze(0)
    return coords01, label_t


def postprocess(logits: torch.Tensor, original_size) -> np.ndarray:
    """Bilinearly upsample single-image logits to the original size and
    threshold at logit 0 (ties go to background). Returns a {0,1} uint8 mask."""
    h, w = int(original_size[0]), int(original_size[1])
    if h < 1 or w < 1:
        raise ShapeError(f"target size must be positive, got {(h, w)}")
    if logits.ndim == 2:
        logits = logits.unsqueeze(0)
    if logits.ndim != 3 or logits.shape[0] != 1:
        raise ShapeError(f"expected (1, D, D) logits, got {tuple(logits.shape)}")
    with torch.no_grad():
        up = F.interpolate(
            logits.unsqueeze(0).float(), size=(h, w), mode="bilinear", align_corners=False
        )
        return (up[0, 0] > 0).to(torch.uint8).cpu().numpy()
