"""CAR-family precision matrices and sum-to-zero constraints.

Multivariate precisions use unit-major ordering: entry ``i * J + j`` is
unit ``i`` at level ``j``, so the MCAR precision is ``(D - rho W) kron Omega``.
Builders are scale free; variances enter through ``Omega``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .network import AdjacencyMatrix, ComponentLabeling, connected_components

PSD_RTOL = 1e-8
LOG_2PI = math.log(2 * math.pi)


class PriorError(ValueError):
    pass


@dataclass(frozen=True)
class CARSpec:
    family: str  # "intrinsic" | "proper"
    multivariate: bool = True
    cross_independent: bool = False
    rho: float | None = None
    rho_per_level: tuple[float, ...] | None = None
    J: int = 2

    def __post_init__(self):
        if self.family not in ("intrinsic", "proper"):
            raise PriorError(f"unknown CAR family {self.family!r}")
        if self.family == "intrinsic" and (self.rho is not None or self.rho_per_level):
            raise PriorError("intrinsic CAR takes no rho")
        if self.rho is not None:
            _check_rho(self.rho)
        if self.rho_per_level is not None:
            if self.rho is not None:
                raise PriorError("give either rho or rho_per_level, not both")
            if len(self.rho_per_level) != self.J:
                raise PriorError("rho_per_level needs one value per level")
            for r in self.rho_per_level:
                _check_rho(r)

    @property
    def proper(self) -> bool:
        return self.family == "proper"


def _check_rho(rho):
    if not (0.0 < float(rho) < 1.0):
        raise PriorError(f"rho must lie in (0, 1), got {rho}")


@dataclass(frozen=True)
class CrossLevelPrecision:
    """J x J cross-level precision ``Omega``; its inverse holds the
    conditional variances and the between-level correlation."""

    Omega: np.ndarray

    def __post_init__(self):
        om = np.atleast_2d(np.asarray(self.Omega, dtype=float))
        if om.shape[0] != om.shape[1] or not np.allclose(om, om.T, rtol=0, atol=1e-12 * np.abs(om).max()):
            raise PriorError("Omega must be square and symmetric")
        om = 0.5 * (om + om.T)
        lam = np.linalg.eigvalsh(om)
        if lam.min() <= 0:
            raise PriorError(f"Omega is not positive definite (smallest eigenvalue {lam.min():.3g})")
        object.__setattr__(self, "Omega", om)

    @classmethod
    def from_covariance(cls, variances, correlation: float = 0.0) -> "CrossLevelPrecision":
        s = np.sqrt(np.asarray(variances, dtype=float))
        J = len(s)
        R = np.full((J, J), correlation)
        np.fill_diagonal(R, 1.0)
        return cls(np.linalg.inv(np.outer(s, s) * R))

    @property
    def J(self) -> int:
        return self.Omega.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        return np.linalg.inv(self.Omega)

    @property
    def variances(self) -> np.ndarray:
        return np.diag(self.covariance).copy()

    @property
    def correlation(self) -> float:
        c = self.covariance
        return float(c[0, 1] / math.sqrt(c[0, 0] * c[1, 1])) if self.J > 1 else 0.0

    def log_det(self) -> float:
        return float(np.linalg.slogdet(self.Omega)[1])


class GraphSpectrum:
    """Eigenvalues of ``D^-1/2 W D^-1/2`` for O(n) log-determinants of ``D - rho W``."""

    def __init__(self, W: AdjacencyMatrix):
        m = W.degrees.astype(float)
        if np.any(m == 0):
            raise PriorError("isolated unit (no neighbours); run drop_islands first")
        self.n = W.n
        self.log_det_D = float(np.sum(np.log(m)))
        d = 1.0 / np.sqrt(m)
        A = W.to_sparse().toarray() * d[:, None] * d[None, :]
        mu = np.linalg.eigvalsh(A)
        self.n_components = connected_components(W).n_components
        # each component contributes one eigenvalue equal to 1
        self.mu = mu
        # generalized determinant of D - W: product of its nonzero eigenvalues
        lap = np.linalg.eigvalsh(np.diag(m) - W.to_sparse().toarray())
        self.log_pdet = float(np.sum(np.log(np.sort(lap)[self.n_components:])))

    def log_det(self, rho: float) -> float:
        """log|D - rho W| for rho < 1; generalized determinant at rho == 1."""
        if rho == 1.0:
            return self.log_pdet
        return self.log_det_D + float(np.sum(np.log1p(-rho * self.mu)))

    def d_log_det(self, rho: float) -> float:
        return float(-np.sum(self.mu / (1.0 - rho * self.mu)))


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Linear constraints ``C x = 0``, one row per (component, level)."""

    C: sp.csr_matrix
    labels: tuple[tuple[int, int], ...] = ()

    def __len__(self):
        return self.C.shape[0]

    def residual(self, x) -> np.ndarray:
        return self.C @ np.asarray(x).ravel()


@dataclass(frozen=True, eq=False)
class PrecisionMatrix:
    Q: sp.csr_matrix
    rank_deficiency: int
    n: int
    J: int = 1
    layout: str = "unit-major"
    family: str = "intrinsic"
    rho: float | tuple | None = None
    log_det: float | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.Q.shape[0]

    def dense(self) -> np.ndarray:
        return self.Q.toarray()

    def log_density(self, x) -> float:
        """Gaussian log-density; generalized for intrinsic priors.

        For rank-deficient ``Q`` this is the density on the subspace
        orthogonal to the null space, normalised with the generalized
        determinant.
        """
        x = np.asarray(x, dtype=float).ravel()
        r = self.dim - self.rank_deficiency
        quad = float(x @ (self.Q @ x))
        return 0.5 * self.log_det - 0.5 * r * LOG_2PI - 0.5 * quad


def car_matrix(W: AdjacencyMatrix, Omega_D, Omega_W) -> sp.csr_matrix:
    """``kron(D, Omega_D) - kron(W, Omega_W)`` in unit-major layout."""
    D = sp.diags(W.degrees.astype(float))
    Ws = W.to_sparse()
    Q = sp.kron(D, sp.csr_matrix(np.atleast_2d(Omega_D))) - sp.kron(Ws, sp.csr_matrix(np.atleast_2d(Omega_W)))
    Q = sp.csr_matrix(Q)
    Q.sort_indices()
    return Q


def _require_neighbours(W: AdjacencyMatrix):
    if np.any(W.degrees == 0):
        bad = np.flatnonzero(W.degrees == 0)[:10].tolist()
        raise PriorError(f"units {bad} have no neighbours; call drop_islands before building a CAR prior")


def icar_precision(W: AdjacencyMatrix, spectrum: GraphSpectrum | None = None) -> PrecisionMatrix:
    """``Q = D - W``; rank deficiency equals the number of components."""
    _require_neighbours(W)
    spec = spectrum or GraphSpectrum(W)
    Q = car_matrix(W, [[1.0]], [[1.0]])
    return PrecisionMatrix(Q, spec.n_components, W.n, 1, family="intrinsic", log_det=spec.log_det(1.0))


def pcar_precision(W: AdjacencyMatrix, rho: float, spectrum: GraphSpectrum | None = None) -> PrecisionMatrix:
    """``Q = D - rho W`` for ``0 < rho < 1``; positive definite."""
    _check_rho(rho)
    _require_neighbours(W)
    spec = spectrum or GraphSpectrum(W)
    Q = car_matrix(W, [[1.0]], [[rho]])
    return PrecisionMatrix(Q, 0, W.n, 1, family="proper", rho=float(rho), log_det=spec.log_det(rho))


def sum_to_zero_constraints(labeling: ComponentLabeling, J: int = 1) -> ConstraintSet:
    """One constraint per (component, level): the level's values sum to zero."""
    labels = np.asarray(labeling.labels)
    n = len(labels)
    rows, cols, tags = [], [], []
    r = 0
    for c in range(labeling.n_components):
        members = np.flatnonzero(labels == c)
        for j in range(J):
            rows.append(np.full(len(members), r))
            cols.append(members * J + j)
            tags.append((c, j))
            r += 1
    if r == 0:
        return ConstraintSet(sp.csr_matrix((0, n * J)), ())
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    C = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(r, n * J))
    return ConstraintSet(C, tuple(tags))


def mcar_precision(W: AdjacencyMatrix, spec: CARSpec, Omega: CrossLevelPrecision, spectrum: GraphSpectrum | None = None):
    """Joint MCAR precision ``(D - rho W) kron Omega`` and its constraints.

    ``rho = 1`` for the intrinsic family. With ``cross_independent`` the
    off-diagonal entries of ``Omega`` must be zero.
    """
    om = Omega.Omega if isinstance(Omega, CrossLevelPrecision) else CrossLevelPrecision(Omega).Omega
    J = om.shape[0]
    if spec.J != J:
        raise PriorError(f"spec has J={spec.J} but Omega is {J}x{J}")
    if spec.rho_per_level is not None:
        raise PriorError("per-level rho needs modelG_precision")
    if spec.cross_independent and np.any(om[~np.eye(J, dtype=bool)] != 0):
        raise PriorError("cross-independent prior requires a diagonal Omega")
    _require_neighbours(W)
    spectrum = spectrum or GraphSpectrum(W)
    log_det_om = float(np.linalg.slogdet(om)[1])
    if spec.proper:
        if spec.rho is None:
            raise PriorError("proper CAR requires rho")
        rho = float(spec.rho)
        Q = car_matrix(W, om, rho * om)
        ld = J * spectrum.log_det(rho) + W.n * log_det_om
        prec = PrecisionMatrix(Q, 0, W.n, J, family="proper", rho=rho, log_det=ld)
        return prec, ConstraintSet(sp.csr_matrix((0, W.n * J)), ())
    k = spectrum.n_components
    Q = car_matrix(W, om, om)
    ld = J * spectrum.log_det(1.0) + (W.n - k) * log_det_om
    prec = PrecisionMatrix(Q, J * k, W.n, J, family="intrinsic", log_det=ld)
    return prec, sum_to_zero_constraints(connected_components(W), J)


def modelG_coefficients(rho_per_level, Omega: np.ndarray):
    """Coefficient matrices ``(Omega, L diag(rho) L^T)`` with ``Omega = L L^T``."""
    L = np.linalg.cholesky(Omega)
    rho = np.asarray(rho_per_level, dtype=float)
    return Omega, (L * rho) @ L.T


def modelG_precision(W: AdjacencyMatrix, rho_per_level, Omega: CrossLevelPrecision, spectrum: GraphSpectrum | None = None) -> PrecisionMatrix:
    """PMCAR with one autoregression coefficient per level.

    In level-major order the precision is
    ``(L kron I) blockdiag(D - rho_j W) (L^T kron I)`` with ``Omega = L L^T``;
    in unit-major order that is ``kron(D, Omega) - kron(W, L diag(rho) L^T)``.
    Equal coefficients give back the PMCAR precision.
    """
    om = Omega.Omega if isinstance(Omega, CrossLevelPrecision) else CrossLevelPrecision(Omega).Omega
    rho = tuple(float(r) for r in rho_per_level)
    if len(rho) != om.shape[0]:
        raise PriorError("need one rho per level")
    for r in rho:
        _check_rho(r)
    _require_neighbours(W)
    spectrum = spectrum or GraphSpectrum(W)
    A, B = modelG_coefficients(rho, om)
    Q = car_matrix(W, A, B)
    ld = sum(spectrum.log_det(r) for r in rho) + W.n * float(np.linalg.slogdet(om)[1])
    return PrecisionMatrix(Q, 0, W.n, len(rho), family="proper", rho=rho, log_det=ld)


def write_precision(path, prec: PrecisionMatrix) -> None:
    """Coordinate text export (row col value) with a JSON header line."""
    header = {
        "schema": "netcar/precision",
        "version": 1,
        "n": prec.n,
        "J": prec.J,
        "layout": prec.layout,
        "family": prec.family,
        "rho": prec.rho,
        "rank_deficiency": prec.rank_deficiency,
    }
    coo = prec.Q.tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + json.dumps(header) + "\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {float(v)!r}\n")


def read_precision(path) -> tuple[dict, sp.csr_matrix]:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline()[1:])
        data = np.loadtxt(fh, ndmin=2)
    dim = header["n"] * header["J"]
    if data.size == 0:
        return header, sp.csr_matrix((dim, dim))
    Q = sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(dim, dim))
    return header, Q
