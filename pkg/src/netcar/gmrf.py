"""Banded Cholesky machinery for sampling Gaussian Markov random fields.

The precision is reordered with reverse Cuthill-McKee so that the Cholesky
factor is banded; LAPACK's banded routines then factor, solve and sample in
O(N b^2).
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.linalg.lapack import dpbtrf, dpbtrs, dtbtrs
from scipy.sparse.csgraph import reverse_cuthill_mckee


class FactorizationError(ArithmeticError):
    pass


def rcm_order(pattern: sp.spmatrix) -> np.ndarray:
    return np.asarray(reverse_cuthill_mckee(sp.csr_matrix(pattern), symmetric_mode=True), dtype=np.int64)


def bandwidth(mat: sp.spmatrix) -> int:
    coo = sp.tril(mat).tocoo()
    return int(np.max(coo.row - coo.col)) if coo.nnz else 0


def to_lower_banded(mat: sp.spmatrix, kd: int | None = None) -> np.ndarray:
    coo = sp.tril(mat).tocoo()
    kd = bandwidth(mat) if kd is None else kd
    ab = np.zeros((kd + 1, mat.shape[0]))
    ab[coo.row - coo.col, coo.col] = coo.data
    return ab


def cholesky_banded_lower(ab: np.ndarray) -> np.ndarray:
    c, info = dpbtrf(ab, lower=1)
    if info != 0:
        raise FactorizationError(f"precision not positive definite (LAPACK info {info})")
    return c


def solve_factored(c: np.ndarray, b: np.ndarray) -> np.ndarray:
    x, info = dpbtrs(c, b, lower=1)
    if info != 0:
        raise FactorizationError(f"banded solve failed (info {info})")
    return x


def whiten_transpose(c: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``L^-T z``: a draw with covariance ``Q^-1`` when ``z`` is standard normal."""
    x, info = dtbtrs(c, z.reshape(len(z), -1), uplo="L", trans="T")
    if info != 0:
        raise FactorizationError(f"triangular solve failed (info {info})")
    return x.reshape(z.shape)


def krige(x: np.ndarray, V: np.ndarray, C, target=None) -> np.ndarray:
    """Conditioning-by-kriging correction onto ``C x = target``.

    ``V = Q^-1 C^T`` are the prior covariance columns of the constraints.
    """
    Cx = C @ x
    if target is not None:
        Cx = Cx - target
    CV = C @ V
    return x - V @ np.linalg.solve(CV, Cx)


class BandedGMRF:
    """N(Q^-1 b, Q^-1) for a sparse SPD ``Q``, optionally constrained.

    Parameters
    ----------
    Q : sparse matrix
        Symmetric positive definite precision.
    constraints : sparse or dense matrix, optional
        Rows of ``C`` in ``C x = 0``.
    """

    def __init__(self, Q, constraints=None, perm=None):
        Q = sp.csr_matrix(Q)
        self.dim = Q.shape[0]
        self.perm = rcm_order(Q) if perm is None else np.asarray(perm)
        self.iperm = np.empty_like(self.perm)
        self.iperm[self.perm] = np.arange(self.dim)
        Qp = Q[self.perm][:, self.perm]
        self.factor = cholesky_banded_lower(to_lower_banded(Qp))
        self.C = None
        if constraints is not None and constraints.shape[0]:
            C = sp.csr_matrix(constraints)
            self.C = C[:, self.perm]
            self.V = solve_factored(self.factor, self.C.T.toarray())

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        return solve_factored(self.factor, b[self.perm])[self.iperm]

    def sample(self, rng, b=None, size=None) -> np.ndarray:
        k = 1 if size is None else size
        z = rng.standard_normal((self.dim, k))
        x = whiten_transpose(self.factor, z)
        if b is not None:
            mu = solve_factored(self.factor, np.asarray(b, dtype=float)[self.perm])
            x = x + mu.reshape(-1, 1)
        if self.C is not None:
            x = krige(x, self.V, self.C)
        x = x[self.iperm]
        return x[:, 0] if size is None else x.T
