"""Low-level feature blocks that run in parallel with the image encoder.

All three take an RGB image and produce a same-resolution feature map with
`channels` channels, so they are drop-in alternatives for each other. The
depthwise-separable block is the default; the plain two-conv block and the
stem block exist for ablation comparisons.
"""

from torch import nn

from sppnet.errors import ConfigError, ShapeError
from sppnet.network.common import LayerNorm2d

BLOCK_KINDS = ("llsie", "unet_block", "stem_block")


def _check_rgb(x):
    if x.ndim != 4 or x.shape[1] != 3:
        raise ShapeError(f"expected (B, 3, H, W) input, got {tuple(x.shape)}")


class LLSIEBlock(nn.Module):
    """Head conv to lift channels, then a residual depthwise-separable stage.

    A 3x3 full convolution raises the 3-channel input to `channels` (separable
    convs do poorly on very low channel counts), after which a 3x3 depthwise +
    1x1 pointwise pair refines it under a residual connection:

        h = relu(norm(conv3x3(x)))
        y = relu(norm(pointwise(depthwise(h))) + h)
    """

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.head = nn.Conv2d(3, channels, 3, padding=1)
        self.norm_head = LayerNorm2d(channels)
        self.depthwise = nn.Conv2d(channels, channels, 3, padding=1, groups=channels)
        self.pointwise = nn.Conv2d(channels, channels, 1)
        self.norm_body = LayerNorm2d(channels)
        self.act = nn.ReLU()

    def forward(self, x):
        _check_rgb(x)
        h = self.act(self.norm_head(self.head(x)))
        return self.act(self.norm_body(self.pointwise(self.depthwise(h))) + h)


class UNetBlock(nn.Module):
    """Two successive 3x3 conv -> norm -> relu stages."""

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.body = nn.Sequential(
            nn.Conv2d(3, channels, 3, padding=1),
            LayerNorm2d(channels),
            nn.ReLU(),
            nn.Conv2d(channels, channels, 3, padding=1),
            LayerNorm2d(channels),
            nn.ReLU(),
        )

    def forward(self, x):
        _check_rgb(x)
        return self.body(x)


class StemBlock(nn.Module):
    """Wide 3x3 head conv, then parallel conv / max-pool+conv branches merged
    by addition. Stride 1 throughout so the output keeps the input resolution.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.head = nn.Conv2d(3, channels, 3, padding=1)
        self.norm_head = LayerNorm2d(channels)
        self.conv_branch = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm_conv = LayerNorm2d(channels)
        self.pool = nn.MaxPool2d(3, stride=1, padding=1)
        self.pool_proj = nn.Conv2d(channels, channels, 1)
        self.norm_pool = LayerNorm2d(channels)
        self.act = nn.ReLU()

    def forward(self, x):
        _check_rgb(x)
        h = self.act(self.norm_head(self.head(x)))
        a = self.norm_conv(self.conv_branch(h))
        b = self.norm_pool(self.pool_proj(self.pool(h)))
        return self.act(a + b)


def build_lowlevel_block(kind: str, channels: int) -> nn.Module:
    if kind == "llsie":
        return LLSIEBlock(channels)
    if kind == "unet_block":
        return UNetBlock(channels)
    if kind == "stem_block":
        return StemBlock(channels)
    raise ConfigError(f"unknown block kind {kind!r}, expected one of {BLOCK_KINDS}")
