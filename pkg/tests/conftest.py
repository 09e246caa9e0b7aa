"""Shared synthetic-data helpers and model configs for the test suite."""

import numpy as np
import pytest
from PIL import Image

from sppnet.data_io import Sample, relabel_contiguous
from sppnet.network.model import ModelConfig


def micro_config(**overrides) -> ModelConfig:
    """Smallest config that exercises every stage (32x32 input, 4x4 grid)."""
    base = dict(
        encoder_input_size=32, patch_size=8, encoder_dim=32, encoder_layers=1,
        encoder_heads=2, embed_channels=32, decoder_dim=32, decoder_heads=2,
        llsie_input_size=32, llsie_channels=8, num_classes=1, block_kind="llsie",
    )
    base.update(overrides)
    return ModelConfig(**base)


def random_instance_map(h: int, w: int, rng: np.random.Generator,
                        max_instances: int = 4) -> np.ndarray:
    """Random non-overlapping L1 diamonds with contiguous ids (may be empty)."""
    labels = np.zeros((h, w), dtype=np.int32)
    yy, xx = np.ogrid[:h, :w]
    next_id = 1
    for _ in range(int(rng.integers(1, max_instances + 1))):
        cy, cx = int(rng.integers(0, h)), int(rng.integers(0, w))
        r = int(rng.integers(1, max(2, min(h, w) // 3)))
        blob = ((np.abs(yy - cy) + np.abs(xx - cx)) <= r) & (labels == 0)
        if blob.any():
            labels[blob] = next_id
            next_id += 1
    return relabel_contiguous(labels)


def brute_force_l1(labels: np.ndarray, instance_id: int) -> np.ndarray:
    """Independent oracle: per-pixel min over every non-instance pixel,
    including a one-pixel background ring outside the image."""
    h, w = labels.shape
    padded = np.full((h + 2, w + 2), -1, dtype=np.int64)
    padded[1:-1, 1:-1] = labels
    inside = padded == instance_id
    bg = np.argwhere(~inside)
    out = np.zeros((h, w), dtype=np.int32)
    for y, x in np.argwhere(inside):
        out[y - 1, x - 1] = int((np.abs(bg[:, 0] - y) + np.abs(bg[:, 1] - x)).min())
    return out


def synthetic_sample(sample_id: str, size: int, rng: np.random.Generator,
                     max_instances: int = 3) -> Sample:
    """Noisy RGB image with colored disk nuclei and a matching instance map."""
    labels = np.zeros((size, size), dtype=np.int32)
    yy, xx = np.ogrid[:size, :size]
    next_id = 1
    for _ in range(int(rng.integers(1, max_instances + 1))):
        cy, cx = int(rng.integers(2, size - 2)), int(rng.integers(2, size - 2))
        r = int(rng.integers(2, max(3, size // 4)))
        blob = ((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r) & (labels == 0)
        if blob.any():
            labels[blob] = next_id
            next_id += 1
    labels = relabel_contiguous(labels)
    image = np.full((size, size, 3), 40, dtype=np.int16)
    for i in range(1, int(labels.max()) + 1):
        color = rng.integers(120, 250, 3)
        image[labels == i] = color
    image = np.clip(image + rng.integers(-15, 16, image.shape), 0, 255).astype(np.uint8)
    return Sample(id=sample_id, image=image, instances=labels)


def blob_sample(size: int = 64, radius: int = 18, seed: int = 5) -> Sample:
    """Single high-contrast disk, used by the overfit-one sanity check."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    blob = (yy - size // 2) ** 2 + (xx - size // 2 + 2) ** 2 <= radius ** 2
    image = np.full((size, size, 3), 30, dtype=np.int16)
    image[blob] = (200, 80, 160)
    image = np.clip(image + rng.integers(-12, 13, image.shape), 0, 255).astype(np.uint8)
    return Sample(id="blob", image=image, instances=blob.astype(np.int32))


def write_dataset(root, samples) -> None:
    """Write samples as the on-disk layout: images/<id>.png + masks/<id>.png."""
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    for s in samples:
        Image.fromarray(s.image).save(root / "images" / f"{s.id}.png")
        Image.fromarray(s.instances.astype(np.uint16)).save(root / "masks" / f"{s.id}.png")


def dataset_samples(count: int, size: int, seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(count):
        s = synthetic_sample(f"img{i:03d}", size, rng)
        if s.instances.max() == 0:  # every sample needs at least one nucleus
            s.instances[size // 2, size // 2] = 1
        samples.append(s)
    return samples


@pytest.fixture
def tiny_dataset(tmp_path):
    """12 small samples on disk plus a matching run-config YAML."""
    root = tmp_path / "data"
    samples = dataset_samples(12, 24, seed=7)
    write_dataset(root, samples)
    config = tmp_path / "run.yaml"
    config.write_text(
        "dataset_root: data\n"
        "output_dir: out\n"
        "seed: 11\n"
        "model:\n"
        "  encoder_input_size: 32\n"
        "  patch_size: 8\n"
        "  encoder_dim: 32\n"
        "  encoder_layers: 1\n"
        "  encoder_heads: 2\n"
        "  embed_channels: 32\n"
        "  decoder_dim: 32\n"
        "  decoder_heads: 2\n"
        "  llsie_input_size: 32\n"
        "  llsie_channels: 8\n"
        "train:\n"
        "  learning_rate: 0.001\n"
        "  batch_size: 4\n"
        "  max_epochs: 2\n"
        "  early_stop_patience: 5\n"
        "  aug_probability: 0.25\n"
        "  split: [0.5, 0.25, 0.25]\n"
        "sampler:\n"
        "  k: 2\n"
        "  sigma: 1.0\n"
    )
    return config, tmp_path
