"""Training recipe: dice loss, paired augmentation, dataset split, train loop.

Every step draws a fresh prompt pair per image; the loss is dice between
post-sigmoid probabilities and binary ground truth at decoder resolution.
Runs are reproducible bit-for-bit given (config, seed) on a single worker.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import torch

from sppnet.data_io import PreparedSample, Sample, compute_channel_stats, prepare_inputs
from sppnet.errors import ConfigError, DataError, DivergenceError, ShapeError
from sppnet.network.model import ModelConfig, SPPNet, encode_prompts
from sppnet.predictor import Predictor
from sppnet.prompt_sampling import InstanceLabelMap, SamplerConfig, sample_prompt_pair


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-4
    batch_size: int = 4
    max_epochs: int = 200
    early_stop_patience: int = 20
    aug_probability: float = 0.25
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("learning_rate, batch_size and max_epochs must be positive")
        if self.early_stop_patience < 1:
            raise ConfigError("early_stop_patience must be >= 1")
        if not 0.0 <= self.aug_probability <= 1.0:
            raise ConfigError("aug_probability must be in [0, 1]")
        fr = tuple(float(f) for f in self.split)
        if len(fr) != 3 or any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must be three positives summing to 1, got {fr}")
        object.__setattr__(self, "split", fr)


@dataclass
class TrainState:
    epoch: int = 0
    best_val_dsc: float = 0.0
    epochs_since_improvement: int = 0


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_dsc: float
    seconds: float


@dataclass
class TrainResult:
    records: list[EpochRecord]
    best_state: dict[str, torch.Tensor]
    best_val_dsc: float
    stats: "ChannelStats"  # noqa: F821
    stopped_early: bool


def dice_loss(pred, target, eps: float = 1e-6):
    """1 - dice overlap between probabilities in [0,1] and a binary target.

    Differentiable in `pred`; the eps smoothing keeps the empty/empty case at 0.
    """
    if tuple(pred.shape) != tuple(target.shape):
        raise ShapeError(f"pred {tuple(pred.shape)} and target {tuple(target.shape)} differ")
    p = pred.reshape(-1)
    g = target.reshape(-1).to(p.dtype)
    intersection = (p * g).sum()
    return 1.0 - (2.0 * intersection + eps) / (p.sum() + g.sum() + eps)


def flip_horizontal(image, mask):
    return image[:, ::-1].copy(), mask[:, ::-1].copy()


def rotate90(image, mask, quarter_turns: int):
    k = quarter_turns % 4
    return np.rot90(image, k).copy(), np.rot90(mask, k).copy()


def cutout(image, rng):
    """Zero one square patch (side = 25% of the shorter image side), image only."""
    h, w = image.shape[:2]
    side = max(1, round(0.25 * min(h, w)))
    top = int(rng.integers(0, h - side + 1))
    left = int(rng.integers(0, w - side + 1))
    out = image.copy()
    out[top:top + side, left:left + side] = 0
    return out


def augment(image, mask, cfg: TrainConfig, rng: np.random.Generator):
    """Apply flip / 90-degree rotation / cutout, each independently with
    probability cfg.aug_probability. Flip and rotation transform image and
    mask together; cutout touches the image only."""
    p = cfg.aug_probability
    if rng.random() < p:
        image, mask = flip_horizontal(image, mask)
    if rng.random() < p:
        image, mask = rotate90(image, mask, int(rng.integers(1, 4)))
    if rng.random() < p:
        image = cutout(image, rng)
    return image, mask


def split_dataset(sample_ids, fractions, seed: int):
    """Shuffle by seed and partition; floor sizes for val/test, remainder to train."""
    ids = list(sample_ids)
    if len(ids) < 3:
        raise DataError(f"need at least 3 samples to split, got {len(ids)}")
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be three positives summing to 1, got {fr}")
    n = len(ids)
    n_val = int(np.floor(fr[1] * n))
    n_test = int(np.floor(fr[2] * n))
    n_train = n - n_val - n_test
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in order]
    return (shuffled[:n_train],
            shuffled[n_train:n_train + n_val],
            shuffled[n_train + n_val:])


def _forward_batch(model: SPPNet, batch: list[tuple[PreparedSample, tuple]], dtype):
    """Stack prepared samples + prompt pairs and run one forward pass."""
    image_full = torch.stack([b[0].image_full for b in batch]).to(dtype)
    image_llsie = torch.stack([b[0].image_llsie for b in batch]).to(dtype)
    coords, labels = [], []
    for prepared, prompts in batch:
        c, lab = encode_prompts(prompts, prepared.original_size)
        coords.append(c[0])
        labels.append(lab[0])
    return model(image_full, image_llsie,
                 torch.stack(coords).to(dtype), torch.stack(labels))


def train_loop(model: SPPNet, train_samples: list[Sample], val_samples: list[Sample],
               train_cfg: TrainConfig, model_cfg: ModelConfig,
               sampler_cfg: SamplerConfig) -> TrainResult:
    """Adam + dice training with per-epoch validation DSC and early stopping.

    Returns the best-validation state dict and one record per epoch.
    """
    if not train_samples or not val_samples:
        raise DataError("train and validation sets must be nonempty")
    stats = compute_channel_stats(train_samples)
    optimizer = torch.optim.Adam(model.parameters(), lr=train_cfg.learning_rate,
                                 betas=(0.9, 0.999))
    state = TrainState()
    records: list[EpochRecord] = []
    best_state: dict[str, torch.Tensor] = {
        k: v.detach().clone() for k, v in model.state_dict().items()
    }
    stopped_early = False
    param_dtype = next(model.parameters()).dtype

    for epoch in range(1, train_cfg.max_epochs + 1):
        t0 = time.perf_counter()
        state.epoch = epoch
        rng = np.random.default_rng([train_cfg.seed, epoch])
        order = rng.permutation(len(train_samples))

        model.train()
        losses = []
        for start in range(0, len(order), train_cfg.batch_size):
            batch = []
            for idx in order[start:start + train_cfg.batch_size]:
                sample = train_samples[idx]
                image, mask = augment(sample.image, sample.instances, train_cfg, rng)
                aug_sample = Sample(id=sample.id, image=image, instances=mask)
                prepared = prepare_inputs(aug_sample, model_cfg, stats)
                prompts = sample_prompt_pair(InstanceLabelMap(mask), sampler_cfg, rng)
                batch.append((prepared, prompts))
            logits = _forward_batch(model, batch, param_dtype)
            probs = torch.sigmoid(logits[:, 0])
            targets = torch.stack([
                torch.from_numpy(b[0].gt_decoder.astype(np.float32)) for b in batch
            ]).to(probs.dtype)
            loss = torch.stack([
                dice_loss(probs[i], targets[i]) for i in range(len(batch))
            ]).mean()
            if not torch.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, step {start // train_cfg.batch_size}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))

        model.eval()
        predictor = Predictor(model, model_cfg, stats)
        dscs = []
        for i, sample in enumerate(val_samples):
            val_rng = np.random.default_rng([train_cfg.seed, epoch, 1, i])
            prompts = sample_prompt_pair(InstanceLabelMap(sample.instances),
                                         sampler_cfg, val_rng)
            pred = predictor.predict(sample, prompts)
            gt = sample.instances > 0
            denom = pred.sum() + gt.sum()
            dscs.append(1.0 if denom == 0 else 2.0 * float((pred & gt).sum()) / float(denom))
        val_dsc = float(np.mean(dscs))

        records.append(EpochRecord(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            val_dsc=val_dsc,
            seconds=time.perf_counter() - t0,
        ))
        if val_dsc > state.best_val_dsc or epoch == 1:
            state.best_val_dsc = max(val_dsc, state.best_val_dsc)
            state.epochs_since_improvement = 0
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        else:
            state.epochs_since_improvement += 1
            if state.epochs_since_improvement >= train_cfg.early_stop_patience:
                stopped_early = True
                break

    return TrainResult(records=records, best_state=best_state,
                       best_val_dsc=state.best_val_dsc, stats=stats,
                       stopped_early=stopped_early)
