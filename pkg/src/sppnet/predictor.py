"""Single-image inference wrapper: prepare inputs, forward, restore size."""

from __future__ import annotations

import numpy as np
import torch

from sppnet.data_io import ChannelStats, Sample, prepare_inputs
from sppnet.network.model import ModelConfig, SPPNet, encode_prompts, postprocess


class Predictor:
    """Binds a model to the preprocessing stats it was trained with."""

    def __init__(self, model: SPPNet, config: ModelConfig, stats: ChannelStats):
        self.model = model
        self.config = config
        self.stats = stats

    def predict_logits(self, sample: Sample, prompts) -> torch.Tensor:
        prepared = prepare_inputs(sample, self.config, self.stats)
        coords, labels = encode_prompts(prompts, prepared.original_size)
        dtype = next(self.model.parameters()).dtype
        with torch.no_grad():
            logits = self.model(
                prepared.image_full.unsqueeze(0).to(dtype),
                prepared.image_llsie.unsqueeze(0).to(dtype),
                coords.to(dtype),
                labels,
            )
        return logits[0]

    def predict(self, sample: Sample, prompts) -> np.ndarray:
        """Binary (H, W) mask at the sample's original resolution."""
        logits = self.predict_logits(sample, prompts)
        mask = postprocess(logits, (sample.image.shape[0], sample.image.shape[1]))
        return mask.astype(bool)
