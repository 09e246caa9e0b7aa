"""Backend selection for the distance-transform kernel.

Prefers the compiled extension when it was built; otherwise uses the
vectorized numpy implementation. Both produce bit-identical int32 maps
(see tests and benchmarks/bench_l1dist.py).
"""

from sppnet import _l1dist_py

try:
    from sppnet import _l1dist as _compiled
except ImportError:
    _compiled = None

HAVE_COMPILED = _compiled is not None
KERNEL_BACKEND = "compiled" if HAVE_COMPILED else "numpy"

l1_distance_inside = (
    _compiled.l1_distance_inside if HAVE_COMPILED else _l1dist_py.l1_distance_inside
)
