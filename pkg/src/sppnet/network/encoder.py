"""Plain pre-norm ViT image encoder.

Stands in for a hierarchical lightweight transformer: patchify, add learned
positional embeddings, run pre-norm attention/MLP layers, then project to the
embedding channel count with a 1x1 neck. Depth, width and head count are
config-driven.
"""

import torch
from torch import nn

from sppnet.errors import ConfigError, ShapeError
from sppnet.network.common import Attention, LayerNorm2d, MLP

ENCODER_MLP_RATIO = 4


class EncoderLayer(nn.Module):
    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = MLP(dim, ENCODER_MLP_RATIO * dim, dim, num_layers=2, activation=nn.GELU)

    def forward(self, x):
        y = self.norm1(x)
        x = x + self.attn(y, y, y)
        return x + self.mlp(self.norm2(x))


class ImageEncoder(nn.Module):
    def __init__(self, input_size: int, patch_size: int, dim: int, depth: int,
                 num_heads: int, out_channels: int):
        super().__init__()
        if input_size % patch_size != 0:
            raise ConfigError(
                f"input size {input_size} not divisible by patch size {patch_size}"
            )
        self.input_size = input_size
        self.patch_size = patch_size
        self.grid_size = input_size // patch_size
        self.patch_embed = nn.Conv2d(3, dim, kernel_size=patch_size, stride=patch_size)
        self.pos_embed = nn.Parameter(0.02 * torch.randn(1, self.grid_size ** 2, dim))
        self.layers = nn.ModuleList(EncoderLayer(dim, num_heads) for _ in range(depth))
        self.norm = nn.LayerNorm(dim)
        self.neck = nn.Sequential(
            nn.Conv2d(dim, out_channels, 1),
            LayerNorm2d(out_channels),
        )

    def forward(self, image):
        if image.ndim != 4 or image.shape[1] != 3:
            raise ShapeError(f"expected (B, 3, H, W) input, got {tuple(image.shape)}")
        if image.shape[2] != self.input_size or image.shape[3] != self.input_size:
            raise ShapeError(
                f"encoder expects {self.input_size}x{self.input_size} input, "
                f"got {image.shape[2]}x{image.shape[3]}"
            )
        x = self.patch_embed(image)
        b, c, h, w = x.shape
        x = x.flatten(2).transpose(1, 2) + self.pos_embed
        for layer in self.layers:
            x = layer(x)
        x = self.norm(x)
        x = x.transpose(1, 2).reshape(b, c, h, w)
        return self.neck(x)
