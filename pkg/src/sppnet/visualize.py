"""Small PNG overlay helpers for qualitative inspection (no plotting deps)."""

from __future__ import annotations

import numpy as np
from PIL import Image

from sppnet.prompt_sampling import POSITIVE

POS_COLOR = (0, 220, 0)
NEG_COLOR = (230, 40, 40)
BOUNDARY_COLOR = (255, 210, 0)


def mask_boundary(mask: np.ndarray) -> np.ndarray:
    """Pixels of `mask` that touch a non-mask 4-neighbor (or the border)."""
    m = mask.astype(bool)
    interior = m.copy()
    interior[1:, :] &= m[:-1, :]
    interior[:-1, :] &= m[1:, :]
    interior[:, 1:] &= m[:, :-1]
    interior[:, :-1] &= m[:, 1:]
    interior[0, :] = interior[-1, :] = False
    interior[:, 0] = interior[:, -1] = False
    return m & ~interior


def overlay_boundary(image: np.ndarray, mask: np.ndarray,
                     color=BOUNDARY_COLOR) -> np.ndarray:
    out = image.copy()
    out[mask_boundary(mask)] = color
    return out


def overlay_points(image: np.ndarray, prompts, radius: int = 2) -> np.ndarray:
    """Draw prompts as filled squares: green positive, red negative."""
    out = image.copy()
    h, w = out.shape[:2]
    for p in prompts:
        color = POS_COLOR if p.label == POSITIVE else NEG_COLOR
        y0, y1 = max(0, p.y - radius), min(h, p.y + radius + 1)
        x0, x1 = max(0, p.x - radius), min(w, p.x + radius + 1)
        out[y0:y1, x0:x1] = color
    return out


def save_png(array: np.ndarray, path) -> None:
    Image.fromarray(array.astype(np.uint8)).save(path)
