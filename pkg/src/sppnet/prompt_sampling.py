"""Center-neighborhood point sampling for promptable nuclei segmentation.

The positive prompt for a randomly chosen instance is drawn near its
distance-transform center: the center is the first (row-major) argmax of the
exact L1 distance to anything outside the instance, and the neighbor offset
is drawn from a normalized Gaussian window of half-width K around it. The
negative prompt is a uniformly random background pixel.

All draws are pure functions of (mask, config, rng); callers own the seeded
`numpy.random.Generator`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sppnet._kernels import l1_distance_inside
from sppnet.errors import ConfigError, SamplingError

POSITIVE = 1
NEGATIVE = 0


@dataclass(frozen=True)
class PointPrompt:
    """A labeled pixel: x is the column, y the row.

    `instance_id` records which instance a positive point was sampled for
    (0 for background points).
    """

    x: int
    y: int
    label: int
    instance_id: int = 0


@dataclass(frozen=True)
class SamplerConfig:
    k: int = 2
    sigma: float = 1.0
    rng_seed: int = 0
    require_inside_instance: bool = False

    def __post_init__(self):
        if self.k < 0:
            raise ConfigError(f"window half-width must be >= 0, got {self.k}")
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")


class InstanceLabelMap:
    """2D integer grid: 0 is background, instance ids run 1..num_instances.

    Ids must be contiguous; use `sppnet.data_io.relabel_contiguous` to
    normalize raw label images first.
    """

    __slots__ = ("labels", "num_instances")

    def __init__(self, labels):
        arr = np.asarray(labels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise SamplingError(f"label map must be 2D and nonempty, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise SamplingError(f"label map must be integer-typed, got {arr.dtype}")
        if arr.min() < 0:
            raise SamplingError("label map contains negative ids")
        ids = np.unique(arr)
        ids = ids[ids > 0]
        if ids.size and not np.array_equal(ids, np.arange(1, ids.size + 1)):
            raise SamplingError("instance ids must be contiguous starting at 1")
        self.labels = arr.astype(np.int32, copy=False)
        self.num_instances = int(ids.size)

    @property
    def shape(self):
        return self.labels.shape


@dataclass(frozen=True)
class DistanceMap:
    """Exact L1 distances for one instance: positive on its pixels, 0 elsewhere."""

    values: np.ndarray
    instance_id: int


@dataclass(frozen=True)
class GaussianKernel:
    """Normalized (2k+1)x(2k+1) Gaussian window; weights sum to 1."""

    k: int
    sigma: float
    weights: np.ndarray
    normalizer: float


def l1_distance_transform(mask: InstanceLabelMap, instance_id: int) -> DistanceMap:
    """Min L1 distance from each instance pixel to the nearest pixel outside
    the instance (other instances, background, or past the image border)."""
    if not 1 <= instance_id <= mask.num_instances:
        raise SamplingError(f"no such instance: {instance_id}")
    inside = mask.labels == instance_id
    if not inside.any():
        raise SamplingError(f"empty region: instance {instance_id} has no pixels")
    values = l1_distance_inside(np.ascontiguousarray(inside, dtype=np.uint8))
    return DistanceMap(values=values, instance_id=instance_id)


def find_center(dist: DistanceMap, instance_id: int) -> PointPrompt:
    """Argmax of the distance map; ties resolve to the first pixel in
    row-major scan order."""
    if dist.instance_id != instance_id:
        raise SamplingError(
            f"distance map was built for instance {dist.instance_id}, not {instance_id}"
        )
    values = dist.values
    if not values.any():
        raise SamplingError(f"degenerate instance: all-zero distance map for {instance_id}")
    flat = int(np.argmax(values))  # first maximum in row-major order
    y, x = divmod(flat, values.shape[1])
    return PointPrompt(x=int(x), y=int(y), label=POSITIVE, instance_id=instance_id)


def make_gaussian_kernel(k: int, sigma: float) -> GaussianKernel:
    if k < 0:
        raise ConfigError(f"window half-width must be >= 0, got {k}")
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    m = np.arange(-k, k + 1)
    mx, my = np.meshgrid(m, m)
    raw = np.exp(-(mx ** 2 + my ** 2) / (2.0 * sigma ** 2))
    normalizer = 1.0 / float(raw.sum())
    return GaussianKernel(k=k, sigma=float(sigma), weights=raw * normalizer,
                          normalizer=normalizer)


def sample_neighbor_offset(kernel, center, shape, rng, inside=None):
    """Draw a pixel from the kernel window around `center`.

    Offsets that leave the image (or, when `inside` is given, the instance)
    are dropped and the remaining weights renormalized. Returns (x, y); falls
    back to the center itself if nothing qualifies.
    """
    h, w = shape
    m = np.arange(-kernel.k, kernel.k + 1)
    mx, my = np.meshgrid(m, m)
    xs = (center.x + mx).ravel()
    ys = (center.y + my).ravel()
    ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    if inside is not None:
        ok &= inside[np.clip(ys, 0, h - 1), np.clip(xs, 0, w - 1)]
    candidates = np.flatnonzero(ok)
    if candidates.size == 0:
        return center.x, center.y
    weights = kernel.weights.ravel()[candidates]
    pick = candidates[rng.choice(candidates.size, p=weights / weights.sum())]
    return int(xs[pick]), int(ys[pick])


def sample_positive_point(mask: InstanceLabelMap, cfg: SamplerConfig,
                          rng: np.random.Generator) -> PointPrompt:
    """Pick an instance uniformly, find its center, draw a Gaussian neighbor."""
    if mask.num_instances == 0:
        raise SamplingError("no foreground: label map has no instances")
    instance_id = int(rng.integers(1, mask.num_instances + 1))
    dist = l1_distance_transform(mask, instance_id)
    center = find_center(dist, instance_id)
    kernel = make_gaussian_kernel(cfg.k, cfg.sigma)
    inside = (mask.labels == instance_id) if cfg.require_inside_instance else None
    x, y = sample_neighbor_offset(kernel, center, mask.shape, rng, inside=inside)
    return PointPrompt(x=x, y=y, label=POSITIVE, instance_id=instance_id)


def sample_negative_point(mask: InstanceLabelMap,
                          rng: np.random.Generator) -> PointPrompt:
    """Uniformly random background pixel."""
    flat = np.flatnonzero(mask.labels == 0)
    if flat.size == 0:
        raise SamplingError("no background: label map is fully covered by instances")
    pick = int(flat[rng.integers(flat.size)])
    y, x = divmod(pick, mask.shape[1])
    return PointPrompt(x=int(x), y=int(y), label=NEGATIVE, instance_id=0)


def sample_prompt_pair(mask: InstanceLabelMap, cfg: SamplerConfig,
                       rng: np.random.Generator):
    """One positive and one negative prompt, in that order."""
    return sample_positive_point(mask, cfg, rng), sample_negative_point(mask, rng)
