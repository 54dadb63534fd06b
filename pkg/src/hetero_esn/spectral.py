"""Spectral radius by block power iteration."""

from __future__ import annotations

import numpy as np
import scipy.linalg
from scipy import sparse

from .errors import NumericalError, ShapeError

# below this relative column norm a subspace direction is considered annihilated
_RANK_TOL = 1e-13


def _orthonormal_basis(Z: np.ndarray, scale: float) -> np.ndarray:
    """Orthonormal basis of range(Z), dropping numerically null directions."""
    Q, R, _ = scipy.linalg.qr(Z, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    keep = diag > _RANK_TOL * max(scale, 1e-300)
    return Q[:, keep]


def spectral_radius(
    W,
    tol: float = 1e-9,
    block: int = 4,
    max_iter: int = 10_000,
    max_restarts: int = 10,
    seed: int = 0,
) -> float:
    """Largest absolute eigenvalue of a square matrix.

    Runs power iteration on a block of ``block`` vectors and extracts
    Ritz values from the projected matrix, so a dominant complex pair
    (the common case for random non-symmetric reservoirs) converges
    like a single real eigenvalue. Convergence is declared when the
    relative Ritz residual ``||W v - lam v|| / |lam|`` falls below
    ``tol`` and ``|lam|`` agrees with the previous iteration to ``tol``
    (a roundoff-level Ritz value of a nilpotent block can have a tiny
    residual but is never stable). On stagnation the iteration restarts from a fresh random
    block of twice the size, up to ``max_restarts`` times.

    Nilpotent matrices shrink the iterated subspace to nothing and
    return exactly 0.0.
    """
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ShapeError(f"spectral_radius needs a square matrix, got {W.shape}")
    n = W.shape[0]
    if n == 0:
        return 0.0
    if sparse.issparse(W):
        W = W.tocsr()
        if W.nnz == 0:
            return 0.0
        # dense BLAS beats CSR once a quarter of the entries are filled
        if W.nnz > n * n // 4:
            W = W.toarray()
        scale = float(np.sqrt(W.multiply(W).sum())) if sparse.issparse(W) else float(np.linalg.norm(W))
    else:
        W = np.asarray(W, dtype=float)
        scale = float(np.linalg.norm(W))
    if scale == 0.0:
        return 0.0

    rng = np.random.default_rng(seed)
    m = min(block, n)
    for _restart in range(max_restarts + 1):
        Q = _orthonormal_basis(rng.standard_normal((n, m)), 1.0)
        prev = None
        for _ in range(max_iter):
            Z = W @ Q
            H = Q.T @ Z
            vals, vecs = np.linalg.eig(H)
            i = int(np.argmax(np.abs(vals)))
            lam = vals[i]
            resid = np.linalg.norm(Z @ vecs[:, i] - lam * (Q @ vecs[:, i]))
            if resid <= tol * abs(lam):
                if prev is not None and abs(abs(lam) - prev) <= tol * abs(lam):
                    return float(abs(lam))
                prev = abs(lam)
            else:
                prev = None
            Q = _orthonormal_basis(Z, scale)
            if Q.shape[1] == 0:
                return 0.0
        m = min(2 * m, n)
    raise NumericalError(
        f"power iteration did not converge after {max_restarts} restarts "
        f"x {max_iter} iterations (n={n})"
    )
