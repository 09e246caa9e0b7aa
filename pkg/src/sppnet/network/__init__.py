"""Promptable segmentation model.

Feature maps follow the (channels, height, width) convention throughout;
batched tensors prepend a batch dimension.
"""

from sppnet.network.blocks import LLSIEBlock, StemBlock, UNetBlock, build_lowlevel_block
from sppnet.network.model import ModelConfig, SPPNet, build_sppnet, encode_prompts, postprocess

__all__ = [
    "LLSIEBlock",
    "UNetBlock",
    "StemBlock",
    "build_lowlevel_block",
    "ModelConfig",
    "SPPNet",
    "build_sppnet",
    "encode_prompts",
    "postprocess",
]
