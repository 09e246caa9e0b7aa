"""Two-way transformer decoder over prompt tokens and image embedding.

Each block runs token self-attention, token-to-image cross-attention, a token
MLP, and image-to-token cross-attention. The refined image path is upscaled
4x by two stride-2 transposed convs; the first (output) token is mapped
through an MLP to a per-channel gain that modulates the upscaled map, giving
a dim//8-channel feature map at 4x the embedding resolution.
"""

from torch import nn

from sppnet.errors import ConfigError, ShapeError
from sppnet.network.common import Attention, LayerNorm2d, MLP

DECODER_MLP_RATIO = 2


class TwoWayBlock(nn.Module):
    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        self.self_attn = Attention(dim, num_heads)
        self.norm1 = nn.LayerNorm(dim)
        self.cross_tokens_to_image = Attention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = MLP(dim, DECODER_MLP_RATIO * dim, dim, num_layers=2, activation=nn.GELU)
        self.norm3 = nn.LayerNorm(dim)
        self.cross_image_to_tokens = Attention(dim, num_heads)
        self.norm4 = nn.LayerNorm(dim)

    def forward(self, tokens, image, image_pe):
        tokens = self.norm1(tokens + self.self_attn(tokens, tokens, tokens))
        keys = image + image_pe
        tokens = self.norm2(tokens + self.cross_tokens_to_image(tokens, keys, image))
        tokens = self.norm3(tokens + self.mlp(tokens))
        image = self.norm4(image + self.cross_image_to_tokens(keys, tokens, tokens))
        return tokens, image


class MaskDecoder(nn.Module):
    def __init__(self, dim: int, num_heads: int, depth: int = 2):
        super().__init__()
        if dim % 8 != 0:
            raise ConfigError(f"decoder dim must be divisible by 8, got {dim}")
        self.dim = dim
        self.out_channels = dim // 8
        self.blocks = nn.ModuleList(TwoWayBlock(dim, num_heads) for _ in range(depth))
        self.upscale = nn.Sequential(
            nn.ConvTranspose2d(dim, dim // 4, kernel_size=2, stride=2),
            LayerNorm2d(dim // 4),
            nn.GELU(),
            nn.ConvTranspose2d(dim // 4, dim // 8, kernel_size=2, stride=2),
            nn.GELU(),
        )
        self.token_head = MLP(dim, dim, dim // 8, num_layers=3, activation=nn.GELU)

    def forward(self, embedding, tokens, image_pe):
        """embedding: (B, dim, h, w); tokens: (B, T, dim); image_pe: (dim, h, w).

        Returns (B, dim//8, 4h, 4w).
        """
        if embedding.ndim != 4 or embedding.shape[1] != self.dim:
            raise ShapeError(
                f"embedding channels {tuple(embedding.shape)} do not match decoder dim {self.dim}"
            )
        if tokens.ndim != 3 or tokens.shape[-1] != self.dim:
            raise ShapeError(f"tokens {tuple(tokens.shape)} do not match decoder dim {self.dim}")
        b, c, h, w = embedding.shape
        src = embedding.flatten(2).transpose(1, 2)
        pe = image_pe.flatten(1).transpose(0, 1).unsqueeze(0)
        for block in self.blocks:
            tokens, src = block(tokens, src, pe)
        out_token = tokens[:, 0]
        src = src.transpose(1, 2).reshape(b, c, h, w)
        upscaled = self.upscale(src)
        gain = self.token_head(out_token)
        return upscaled * gain[:, :, None, None]
