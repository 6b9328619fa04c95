"""NumPy implementation of the similarity kernels.

Used when the compiled extension is unavailable or explicitly disabled via
``PROTOCLF_KERNEL=pure``. Semantics match ``_native`` to floating-point
rounding; see ``benchmarks/bench_kernels.py`` for the speed comparison.
"""

import numpy as np

BACKEND = "pure"


def pairwise_cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine similarity between every row of ``a`` and every row of ``b``.

    Rows must be nonzero; the caller enforces that precondition.
    """
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    return (a @ b.T) / np.outer(na, nb)


def pairwise_neg_l2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Negated Euclidean distance between every row pair.

    Computed from explicit differences (not the Gram-matrix identity) so
    near-duplicate rows do not suffer cancellation.
    """
    diff = a[:, None, :] - b[None, :, :]
    return -np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
