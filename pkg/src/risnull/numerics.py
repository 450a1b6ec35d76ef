"""Shared complex-matrix helpers.

Everything downstream works on plain ``numpy`` arrays with dtype
``complex128``; there are no wrapper types. The two solver-facing helpers wrap
rank-revealing factorizations (SVD / LAPACK gelsd) so that no code path ever
forms an explicit inverse.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

# Relative singular-value cutoff used for rank decisions throughout.
DEFAULT_RANK_TOL = 1e-10


def sample_complex_gaussian(
    rows: int,
    cols: int,
    variance: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw a ``rows x cols`` matrix of circularly-symmetric complex Gaussians.

    Each entry has mean 0 and total variance ``variance``, split evenly
    between the real and imaginary parts.
    """
    if variance < 0:
        raise ValueError(f"variance must be nonnegative, got {variance}")
    scale = np.sqrt(variance / 2.0)
    re = rng.standard_normal((rows, cols))
    im = rng.standard_normal((rows, cols))
    return (scale * (re + 1j * im)).astype(np.complex128, copy=False)


class LeastNormSolution(NamedTuple):
    x: np.ndarray
    rank: int
    rank_deficient: bool


def least_norm_solve(a: np.ndarray, r: np.ndarray, tol: float = DEFAULT_RANK_TOL) -> LeastNormSolution:
    """Minimum-norm least-squares solution of ``a @ x = r``.

    Works for any shape (wide systems yield the least-norm solution, tall ones
    the least-squares solution). ``rank_deficient`` is set when the numerical
    rank falls short of ``min(a.shape)``.
    """
    a = np.asarray(a, dtype=np.complex128)
    r = np.asarray(r, dtype=np.complex128)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d coefficient matrix, got shape {a.shape}")
    x, _, rank, _ = np.linalg.lstsq(a, r, rcond=tol)
    return LeastNormSolution(x=x, rank=int(rank), rank_deficient=int(rank) < min(a.shape))


def numerical_rank(a: np.ndarray, tol: float = DEFAULT_RANK_TOL) -> int:
    """Rank of ``a`` from its singular values.

    A singular value counts while it exceeds ``tol`` times the largest one.
    The zero matrix has rank 0.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {a.shape}")
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))
