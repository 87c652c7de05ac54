"""Principal component analysis by covariance/Gram eigendecomposition."""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateRank

__all__ = ["pca"]

RANK_TOL = 1e-10


def pca(rows: np.ndarray, k: int):
    """Top-k principal components of an (n, d) matrix.

    Mean-centres the rows, then diagonalizes whichever of the d x d
    covariance or n x n Gram matrix is smaller.  Returns
    (components (d, k), explained_variance_ratio (k,), projections (n, k)).
    Component signs are fixed so each component's largest-magnitude entry is
    positive.  Raises DegenerateRank when k exceeds the numerical rank.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError("rows must be a 2D matrix")
    n, d = rows.shape
    if n < 2:
        raise ValueError("need at least 2 rows")
    if not 1 <= k <= min(n, d):
        raise ValueError(f"k must be in [1, {min(n, d)}], got {k}")
    x = rows - rows.mean(axis=0)
    denom = n - 1
    if d <= n:
        cov = (x.T @ x) / denom
        evals, evecs = np.linalg.eigh(cov)
        evals, evecs = evals[::-1], evecs[:, ::-1]
        components = evecs[:, :k]
    else:
        gram = (x @ x.T) / denom
        evals, evecs = np.linalg.eigh(gram)
        evals, evecs = evals[::-1], evecs[:, ::-1]
        components = x.T @ evecs[:, :k]
        norms = np.linalg.norm(components, axis=0)
        norms[norms == 0] = 1.0
        components = components / norms
    evals = np.clip(evals, 0.0, None)
    total = float(np.sum(x * x)) / denom
    if total <= 0.0:
        raise DegenerateRank("all rows identical: rank 0")
    rank = int(np.sum(evals > RANK_TOL * evals[0])) if evals[0] > 0 else 0
    if k > rank:
        raise DegenerateRank(f"requested {k} components, numerical rank {rank}")
    # sign convention: largest-magnitude entry of each component positive
    flip = components[np.argmax(np.abs(components), axis=0),
                      np.arange(k)] < 0
    components[:, flip] *= -1.0
    ratios = evals[:k] / total
    projections = x @ components
    return components, ratios, projections
