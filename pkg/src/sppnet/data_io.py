"""Dataset ingestion, dual-resolution input preparation, and run configuration.

Datasets live under a root directory as `images/<id>.png` (8-bit RGB) plus
`masks/<id>.png` (single-channel instance label image, 16-bit recommended,
0 = background). Instance ids are renumbered to contiguous 1..n on load.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
import yaml
from PIL import Image

from sppnet.errors import ConfigError, DataError, ShapeError
from sppnet.network.model import ModelConfig
from sppnet.prompt_sampling import SamplerConfig


@dataclass
class Sample:
    id: str
    image: np.ndarray      # (H, W, 3) uint8
    instances: np.ndarray  # (H, W) int32, contiguous ids from 1


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel mean/std of [0,1]-scaled pixels over the training split."""

    mean: tuple[float, float, float]
    std: tuple[float, float, float]


def relabel_contiguous(labels: np.ndarray) -> np.ndarray:
    """Renumber nonzero labels to 1..n in order of first appearance
    (row-major scan); pixel sets are preserved."""
    flat = labels.ravel()
    values, first = np.unique(flat, return_index=True)
    keep = values != 0
    values, first = values[keep], first[keep]
    order = np.argsort(first)
    mapping = np.zeros(int(labels.max()) + 1, dtype=np.int32)
    mapping[values[order]] = np.arange(1, order.size + 1, dtype=np.int32)
    return mapping[labels]


def _load_mask(path: Path) -> np.ndarray:
    img = Image.open(path)
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise DataError(f"mask {path.name} must be single-channel, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise DataError(f"mask {path.name} must be integer-typed, got {arr.dtype}")
    return arr.astype(np.int64)


def load_dataset(root) -> list[Sample]:
    """Load paired image/mask PNGs sorted by id."""
    root = Path(root)
    image_dir, mask_dir = root / "images", root / "masks"
    if not image_dir.is_dir() or not mask_dir.is_dir():
        raise DataError(f"dataset root {root} must contain images/ and masks/")
    image_ids = {p.stem for p in image_dir.glob("*.png")}
    mask_ids = {p.stem for p in mask_dir.glob("*.png")}
    missing_masks = sorted(image_ids - mask_ids)
    missing_images = sorted(mask_ids - image_ids)
    if missing_masks:
        raise DataError(f"no mask for image id(s): {', '.join(missing_masks)}")
    if missing_images:
        raise DataError(f"no image for mask id(s): {', '.join(missing_images)}")

    samples = []
    for sample_id in sorted(image_ids):
        image = np.asarray(Image.open(image_dir / f"{sample_id}.png").convert("RGB"))
        mask = _load_mask(mask_dir / f"{sample_id}.png")
        if image.shape[:2] != mask.shape:
            raise DataError(
                f"dimension mismatch for id {sample_id}: image {image.shape[:2]} "
                f"vs mask {mask.shape}"
            )
        samples.append(Sample(
            id=sample_id,
            image=image.astype(np.uint8),
            instances=relabel_contiguous(mask),
        ))
    return samples


def compute_channel_stats(samples) -> ChannelStats:
    pixels = np.concatenate(
        [s.image.reshape(-1, 3).astype(np.float64) / 255.0 for s in samples]
    )
    mean = pixels.mean(axis=0)
    std = np.maximum(pixels.std(axis=0), 1e-6)
    return ChannelStats(mean=tuple(mean.tolist()), std=tuple(std.tolist()))


def resize_image(image: np.ndarray, size: int) -> torch.Tensor:
    """Bilinear resize of an (H, W, 3) uint8 image to a (3, size, size)
    float64 tensor scaled to [0, 1] (float64 so the later standardization
    does not amplify interpolation rounding)."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"expected (H, W, 3) image, got {image.shape}")
    if image.shape[0] < 1 or image.shape[1] < 1 or size < 1:
        raise ShapeError("degenerate image dimensions")
    t = torch.from_numpy(np.ascontiguousarray(image)).permute(2, 0, 1).double() / 255.0
    return F.interpolate(t.unsqueeze(0), size=(size, size), mode="bilinear",
                         align_corners=False)[0]


def nearest_resize_mask(mask: np.ndarray, out_hw) -> np.ndarray:
    """Nearest-neighbor resample of a 2D mask (sample at output pixel centers)."""
    h, w = mask.shape
    oh, ow = out_hw
    rows = np.minimum(((np.arange(oh) + 0.5) * h / oh).astype(np.int64), h - 1)
    cols = np.minimum(((np.arange(ow) + 0.5) * w / ow).astype(np.int64), w - 1)
    return mask[np.ix_(rows, cols)]


@dataclass
class PreparedSample:
    image_full: torch.Tensor    # (3, encoder_input_size, encoder_input_size)
    image_llsie: torch.Tensor   # (3, llsie_input_size, llsie_input_size)
    gt_decoder: np.ndarray      # (D, D) uint8 binary at decoder resolution
    original_size: tuple[int, int]


def prepare_inputs(sample: Sample, config: ModelConfig,
                   stats: ChannelStats) -> PreparedSample:
    """Resize for both network inputs, standardize by the training-split
    channel stats, and produce binary ground truth at decoder resolution."""
    mean = torch.tensor(stats.mean, dtype=torch.float64).view(3, 1, 1)
    std = torch.tensor(stats.std, dtype=torch.float64).view(3, 1, 1)
    image_full = ((resize_image(sample.image, config.encoder_input_size) - mean) / std).float()
    image_llsie = ((resize_image(sample.image, config.llsie_input_size) - mean) / std).float()
    d = config.decoder_output_size
    gt = nearest_resize_mask((sample.instances > 0).astype(np.uint8), (d, d))
    return PreparedSample(
        image_full=image_full,
        image_llsie=image_llsie,
        gt_decoder=gt,
        original_size=(sample.image.shape[0], sample.image.shape[1]),
    )


@dataclass
class RunConfig:
    """Everything one run needs; paths are resolved relative to the file."""

    model: ModelConfig
    train: "TrainConfig"  # noqa: F821 - resolved lazily to avoid an import cycle
    sampler: SamplerConfig
    dataset_root: Path
    output_dir: Path


def _build_section(cls, data: dict, section: str):
    import dataclasses

    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}' section: {', '.join(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad '{section}' section: {exc}") from exc


def load_run_config(path) -> RunConfig:
    from sppnet.training import TrainConfig  # deferred: training imports this module

    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a key/value mapping")
    known_top = {"model", "train", "sampler", "dataset_root", "output_dir", "seed"}
    unknown = sorted(set(raw) - known_top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    if "dataset_root" not in raw or "output_dir" not in raw:
        raise ConfigError("config must set dataset_root and output_dir")

    base = path.parent
    dataset_root = (base / raw["dataset_root"]).resolve()
    output_dir = (base / raw["output_dir"]).resolve()
    if not dataset_root.exists():
        raise ConfigError(f"dataset_root does not exist: {dataset_root}")

    model = _build_section(ModelConfig, raw.get("model") or {}, "model")
    train = _build_section(TrainConfig, raw.get("train") or {}, "train")
    sampler = _build_section(SamplerConfig, raw.get("sampler") or {}, "sampler")
    if "seed" in raw:  # top-level convenience: seeds both training and sampling
        import dataclasses

        train = dataclasses.replace(train, seed=int(raw["seed"]))
        sampler = dataclasses.replace(sampler, rng_seed=int(raw["seed"]))
    return RunConfig(model=model, train=train, sampler=sampler,
                     dataset_root=dataset_root, output_dir=output_dir)
