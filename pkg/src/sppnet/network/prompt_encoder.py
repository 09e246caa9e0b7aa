"""Turns labeled points into decoder tokens.

Each point becomes a random-Fourier positional encoding of its normalized
(x, y) plus a learned embedding chosen by label; learned output token(s) are
prepended. The same Fourier matrix also produces the dense positional map the
decoder adds to image features in cross-attention.
"""

import math

import torch
from torch import nn

from sppnet.errors import ConfigError, SamplingError


class PromptEncoder(nn.Module):
    def __init__(self, dim: int, num_output_tokens: int = 1):
        super().__init__()
        if dim % 2 != 0:
            raise ConfigError(f"token dim must be even for Fourier features, got {dim}")
        self.dim = dim
        self.num_output_tokens = num_output_tokens
        # rows: label 0 = background point, label 1 = nucleus point
        self.label_embed = nn.Embedding(2, dim)
        self.output_tokens = nn.Embedding(num_output_tokens, dim)
        self.register_buffer("fourier", torch.randn(2, dim // 2))

    def encode_coords(self, coords01):
        """Fourier-feature encode (..., 2) coordinates normalized to [0, 1]."""
        x = (2.0 * coords01 - 1.0).to(self.fourier.dtype) @ self.fourier
        x = 2.0 * math.pi * x
        return torch.cat([x.sin(), x.cos()], dim=-1)

    def dense_grid(self, h: int, w: int):
        """Positional map (dim, h, w) for the image embedding grid."""
        device = self.fourier.device
        ys = (torch.arange(h, device=device, dtype=self.fourier.dtype) + 0.5) / h
        xs = (torch.arange(w, device=device, dtype=self.fourier.dtype) + 0.5) / w
        grid_y, grid_x = torch.meshgrid(ys, xs, indexing="ij")
        coords = torch.stack([grid_x, grid_y], dim=-1)
        return self.encode_coords(coords).permute(2, 0, 1)

    def forward(self, coords01, labels):
        """coords01: (B, P, 2) in [0, 1]; labels: (B, P) with values in {0, 1}.

        Returns (B, num_output_tokens + P, dim).
        """
        if coords01.ndim != 3 or coords01.shape[-1] != 2:
            raise SamplingError(f"expected (B, P, 2) coords, got {tuple(coords01.shape)}")
        if bool((coords01 < 0).any()) or bool((coords01 > 1).any()):
            raise SamplingError("point coordinate out of bounds")
        if bool((labels < 0).any()) or bool((labels > 1).any()):
            raise SamplingError("point labels must be 0 (background) or 1 (nucleus)")
        tokens = self.encode_coords(coords01) + self.label_embed(labels)
        out = self.output_tokens.weight.unsqueeze(0).expand(coords01.shape[0], -1, -1)
        return torch.cat([out, tokens], dim=1)
