"""Single-point-prompt nuclei segmentation toolkit."""

__version__ = "0.1.0"

from sppnet._kernels import KERNEL_BACKEND

__all__ = ["KERNEL_BACKEND", "__version__"]
