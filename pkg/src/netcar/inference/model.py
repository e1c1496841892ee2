"""Hierarchical Poisson models A-G on a network lattice.

First stage ``Y_ij ~ Poisson(E_i lambda_ij)``; second stage
``log lambda_ij = beta_0j + sum_m beta_mj X_ijm + theta_ij + phi_ij``.
The seven models differ in the priors for ``theta`` (independent or
correlated bivariate Gaussian) and ``phi`` (CAR family member).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammaln, multigammaln

from ..network import AdjacencyMatrix, NetworkLattice, connected_components
from ..priors import (
    CARSpec,
    GraphSpectrum,
    PriorError,
    modelG_coefficients,
    sum_to_zero_constraints,
)

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2 * math.pi)
ETA_CLAMP = 30.0

MODEL_IDS = ("A", "B", "C", "D", "E", "F", "G")

# id -> (theta prior, CAR family, cross-level independent, per-level rho)
MODEL_TABLE = {
    "A": ("independent", "intrinsic", True, False),
    "B": ("independent", "proper", True, False),
    "C": ("independent", "intrinsic", False, False),
    "D": ("independent", "proper", False, False),
    "E": ("correlated", "intrinsic", False, False),
    "F": ("correlated", "proper", False, False),
    "G": ("correlated", "proper", False, True),
}


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class HyperpriorConfig:
    """Hyperpriors shared by all models.

    ``theta_gamma`` and ``omega_gamma`` are (shape, rate) of Gamma priors on
    precisions. Wishart priors are placed on precision matrices with
    ``wishart_df`` degrees of freedom and scale ``wishart_scale``
    (identity when None). ``omega_diag_prior`` selects the prior for the
    diagonal ``Omega`` of models A and B: ``"flat_variance"`` is the improper
    flat prior on each conditional variance, ``"gamma"`` uses ``omega_gamma``.
    """

    beta_prior_variance: float = 1000.0
    theta_gamma: tuple[float, float] = (1.0, 0.00005)
    wishart_df: float = 2.0
    wishart_scale: tuple | None = None
    omega_diag_prior: str = "flat_variance"
    omega_gamma: tuple[float, float] = (1.0, 0.00005)

    def __post_init__(self):
        if not self.beta_prior_variance > 0:
            raise ModelError("beta_prior_variance must be positive")
        for name in ("theta_gamma", "omega_gamma"):
            a, b = getattr(self, name)
            if not (a > 0 and b > 0):
                raise ModelError(f"{name} parameters must be positive")
        if self.omega_diag_prior not in ("flat_variance", "gamma"):
            raise ModelError(f"unknown omega_diag_prior {self.omega_diag_prior!r}")
        if self.wishart_scale is not None:
            S = np.asarray(self.wishart_scale, dtype=float)
            if np.linalg.eigvalsh(S).min() <= 0:
                raise ModelError("wishart_scale must be positive definite")

    def scale(self, J: int) -> np.ndarray:
        if self.wishart_scale is None:
            return np.eye(J)
        return np.asarray(self.wishart_scale, dtype=float)

    def wishart_ok(self, J: int) -> bool:
        return self.wishart_df > J - 1


@dataclass(frozen=True)
class ModelSpec:
    id: str
    theta_prior: str
    phi_spec: CARSpec
    hyperpriors: HyperpriorConfig = field(default_factory=HyperpriorConfig)

    def __post_init__(self):
        if self.id not in MODEL_TABLE:
            raise ModelError(f"unknown model id {self.id!r}")
        theta, family, indep, per_level = MODEL_TABLE[self.id]
        s = self.phi_spec
        if (
            self.theta_prior != theta
            or s.family != family
            or s.cross_independent != indep
            or (s.rho_per_level is not None) != per_level
        ):
            raise ModelError(f"model {self.id} must pair {theta} theta with {family} CAR "
                             f"(cross_independent={indep}, per-level rho={per_level})")

    @property
    def J(self) -> int:
        return self.phi_spec.J

    @property
    def per_level_rho(self) -> bool:
        return self.phi_spec.rho_per_level is not None


def model_spec(model_id: str, J: int = 2, hyperpriors: HyperpriorConfig | None = None, rho_init: float = 0.5) -> ModelSpec:
    """Table of prior choices for models A-G (``rho_init`` seeds ``rho``)."""
    if model_id not in MODEL_TABLE:
        raise ModelError(f"unknown model id {model_id!r}; expected one of {MODEL_IDS}")
    theta, family, indep, per_level = MODEL_TABLE[model_id]
    if family == "intrinsic":
        car = CARSpec("intrinsic", True, indep, J=J)
    elif per_level:
        car = CARSpec("proper", True, indep, rho_per_level=(rho_init,) * J, J=J)
    else:
        car = CARSpec("proper", True, indep, rho=rho_init, J=J)
    return ModelSpec(model_id, theta, car, hyperpriors or HyperpriorConfig())


@dataclass(frozen=True)
class FixedEffectsDesign:
    """Covariates ``X[i, j, m]`` (without intercept) and their scaling."""

    X: np.ndarray
    names: tuple[str, ...]
    scaling: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def M(self) -> int:
        return self.X.shape[2]

    @classmethod
    def empty(cls, n: int, J: int = 2) -> "FixedEffectsDesign":
        return cls(np.zeros((n, J, 0)), ())

    def take(self, idx) -> "FixedEffectsDesign":
        return replace(self, X=self.X[np.asarray(idx)])


def scale_covariates(raw: Mapping[str, Sequence], categorical: Mapping[str, object] | None = None, J: int = 2) -> FixedEffectsDesign:
    """Standardize numeric covariates and expand categorical ones.

    Numeric columns become ``(x - mean) / sd`` with the sample standard
    deviation. A categorical column with reference level ``r`` becomes one
    indicator per non-reference level (sorted), named ``"name[level]"``.
    The same covariates are used for every severity level.
    """
    categorical = dict(categorical or {})
    cols, names, scaling = [], [], {}
    for name, values in raw.items():
        if name in categorical:
            vals = np.asarray(values, dtype=object)
            ref = categorical[name]
            levels = sorted({v for v in vals.tolist()} - {ref}, key=str)
            if ref not in set(vals.tolist()):
                logger.warning("reference level %r of %s is absent from the data", ref, name)
            for lev in levels:
                cols.append((vals == lev).astype(float))
                names.append(f"{name}[{lev}]")
            continue
        x = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ModelError(f"covariate {name} has non-finite values")
        sd = float(np.std(x, ddof=1)) if len(x) > 1 else 0.0
        if not sd > 0:
            raise ModelError(f"covariate {name} is constant")
        mu = float(np.mean(x))
        cols.append((x - mu) / sd)
        names.append(name)
        scaling[name] = (mu, sd)
    if not cols:
        n = len(next(iter(raw.values()))) if raw else 0
        return FixedEffectsDesign.empty(n, J)
    Xm = np.column_stack(cols)
    X = np.repeat(Xm[:, None, :], J, axis=1)
    return FixedEffectsDesign(X, tuple(names), scaling)


@dataclass
class LatentState:
    """One point of the parameter space.

    ``Sigma_theta`` is the covariance of ``(theta_i1, ..., theta_iJ)``;
    ``Omega`` the cross-level precision of the CAR prior.
    """

    beta: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    Sigma_theta: np.ndarray
    Omega: np.ndarray
    rho: float | np.ndarray | None = None

    def copy(self) -> "LatentState":
        rho = self.rho if self.rho is None or np.isscalar(self.rho) else np.array(self.rho)
        return LatentState(self.beta.copy(), self.theta.copy(), self.phi.copy(),
                           self.Sigma_theta.copy(), self.Omega.copy(), rho)


def hyper_names(spec: ModelSpec) -> list[str]:
    J = spec.J
    names = [f"sigma2_theta{j + 1}" for j in range(J)]
    if spec.theta_prior == "correlated" and J == 2:
        names.append("rho_theta")
    if spec.per_level_rho:
        names += [f"rho{j + 1}" for j in range(J)]
    elif spec.phi_spec.proper:
        names.append("rho")
    names += [f"sigma2_phi{j + 1}" for j in range(J)]
    if not spec.phi_spec.cross_independent and J == 2:
        names.append("rho_phi")
    return names


def hyper_values(spec: ModelSpec, state: LatentState) -> list[float]:
    S = state.Sigma_theta
    out = list(np.diag(S))
    if spec.theta_prior == "correlated" and spec.J == 2:
        out.append(S[0, 1] / math.sqrt(S[0, 0] * S[1, 1]))
    if spec.per_level_rho:
        out += list(np.asarray(state.rho, dtype=float))
    elif spec.phi_spec.proper:
        out.append(float(state.rho))
    C = np.linalg.inv(state.Omega)
    out += list(np.diag(C))
    if not spec.phi_spec.cross_independent and spec.J == 2:
        out.append(C[0, 1] / math.sqrt(C[0, 0] * C[1, 1]))
    return [float(v) for v in out]


class PoissonLikelihood:
    """``Y_ij ~ Poisson(E_i exp(eta_ij))`` with ``eta`` clamped to +-30."""

    def __init__(self, Y, E, clamp: float = ETA_CLAMP):
        self.Y = np.asarray(Y, dtype=float)
        self.E = np.asarray(E, dtype=float).reshape(-1, 1)
        self.logE = np.log(self.E)
        self.lgy = gammaln(self.Y + 1.0)
        self.clamp = clamp
        self.n_clamped = 0

    def take(self, idx):
        return PoissonLikelihood(self.Y[idx], self.E[idx, 0], self.clamp)

    def _clip(self, eta):
        c = np.clip(eta, -self.clamp, self.clamp)
        k = int(np.count_nonzero(c != eta))
        if k:
            self.n_clamped += k
        return c

    def pointwise(self, eta) -> np.ndarray:
        eta = self._clip(np.asarray(eta, dtype=float))
        return self.Y * (self.logE + eta) - self.E * np.exp(eta) - self.lgy

    def grad(self, eta) -> np.ndarray:
        eta = self._clip(np.asarray(eta, dtype=float))
        return self.Y - self.E * np.exp(eta)

    def curvature(self, eta) -> np.ndarray:
        """Negative second derivative of the pointwise log-likelihood."""
        eta = self._clip(np.asarray(eta, dtype=float))
        return self.E * np.exp(eta)

    def start(self) -> np.ndarray:
        return np.log((self.Y + 0.5) / self.E)

    # column-wise versions used by the sampler's per-level updates
    def level(self, j):
        return self.Y[:, j], self.E[:, 0], self.logE[:, 0], self.lgy[:, j]

    def level_pointwise(self, j, x):
        y, E, logE, lgy = self.level(j)
        x = np.clip(x, -self.clamp, self.clamp)
        return y * (logE + x) - E * np.exp(x) - lgy

    def level_grad_curv(self, j, x):
        y, E, _, _ = self.level(j)
        mu = E * np.exp(np.clip(x, -self.clamp, self.clamp))
        return y - mu, mu


class GaussianLikelihood:
    """Gaussian pseudo-likelihood ``Y_ij ~ N(eta_ij, s2)`` for test harnesses."""

    def __init__(self, Y, s2: float = 1.0):
        self.Y = np.asarray(Y, dtype=float)
        self.s2 = float(s2)
        self.n_clamped = 0

    def take(self, idx):
        return GaussianLikelihood(self.Y[idx], self.s2)

    def pointwise(self, eta):
        r = self.Y - eta
        return -0.5 * (LOG_2PI + math.log(self.s2)) - 0.5 * r * r / self.s2

    def grad(self, eta):
        return (self.Y - eta) / self.s2

    def curvature(self, eta):
        return np.full_like(np.asarray(eta, dtype=float), 1.0 / self.s2)

    def start(self):
        return self.Y.copy()

    def level_pointwise(self, j, x):
        return -0.5 * (LOG_2PI + math.log(self.s2)) - 0.5 * (self.Y[:, j] - x) ** 2 / self.s2

    def level_grad_curv(self, j, x):
        return (self.Y[:, j] - x) / self.s2, np.full_like(x, 1.0 / self.s2)

    def conjugate_level(self, j):
        """Precision and precision-weighted mean contributed to level ``j``."""
        return np.full(self.Y.shape[0], 1.0 / self.s2), self.Y[:, j] / self.s2


class NullLikelihood:
    """No data term: the sampler then explores the joint prior."""

    def __init__(self, n: int, J: int = 2):
        self.n, self.J = n, J
        self.Y = np.zeros((n, J))
        self.n_clamped = 0

    def take(self, idx):
        return NullLikelihood(len(idx), self.J)

    def pointwise(self, eta):
        return np.zeros_like(np.asarray(eta, dtype=float))

    def grad(self, eta):
        return np.zeros_like(np.asarray(eta, dtype=float))

    def curvature(self, eta):
        return np.zeros_like(np.asarray(eta, dtype=float))

    def level_pointwise(self, j, x):
        return np.zeros_like(x)

    def level_grad_curv(self, j, x):
        return np.zeros_like(x), np.zeros_like(x)

    def conjugate_level(self, j):
        return np.zeros(self.n), np.zeros(self.n)


def _wishart_logpdf(P, df, scale) -> float:
    J = P.shape[0]
    ld_P = np.linalg.slogdet(P)[1]
    ld_S = np.linalg.slogdet(scale)[1]
    tr = np.trace(np.linalg.solve(scale, P))
    return float(0.5 * (df - J - 1) * ld_P - 0.5 * tr - 0.5 * df * J * math.log(2)
                 - 0.5 * df * ld_S - multigammaln(0.5 * df, J))


def _gamma_logpdf(x, a, b) -> float:
    return float(a * math.log(b) - gammaln(a) + (a - 1) * math.log(x) - b * x)


class PoissonCARModel:
    """Evaluable joint density of one of models A-G.

    Use :func:`build_model` to construct. Arrays are held in the order of
    the lattice segments; ``ids`` are the segment identifiers.
    """

    def __init__(self, W: AdjacencyMatrix, Y, E, design: FixedEffectsDesign, spec: ModelSpec,
                 ids=None, likelihood=None, sum_to_zero: bool = True):
        Y = np.asarray(Y)
        E = np.asarray(E, dtype=float)
        n, J = Y.shape
        if W.n != n or E.shape != (n,) or design.X.shape[:2] != (n, J):
            raise ModelError("dimensions of W, Y, E and X disagree")
        if spec.J != J:
            raise ModelError(f"model spec has J={spec.J}, data have J={J}")
        if np.any(~np.isfinite(E)) or np.any(E <= 0):
            raise ModelError("exposure must be positive and finite")
        self.W = W
        self.Y = Y
        self.E = E
        self.design = design
        self.spec = spec
        self.n, self.J = n, J
        self.ids = np.arange(n) if ids is None else np.asarray(ids)
        if len(np.unique(self.ids)) != n:
            raise ModelError("segment ids must be unique")
        self.likelihood = likelihood if likelihood is not None else PoissonLikelihood(Y, E)
        self.labeling = connected_components(W, self.ids)
        self.n_components = self.labeling.n_components
        if not spec.phi_spec.proper:
            if self.n_components > 1 and not sum_to_zero:
                raise ModelError("intrinsic CAR on a disconnected lattice needs sum-to-zero constraints")
            self.constraints = sum_to_zero_constraints(self.labeling, J) if sum_to_zero else None
        else:
            self.constraints = None
        self.spectrum = GraphSpectrum(W)
        self.Ws = W.to_sparse()
        self.m = W.degrees.astype(float)
        self.Xf = np.concatenate([np.ones((n, J, 1)), design.X], axis=2)
        self.beta_names = ("(Intercept)",) + tuple(design.names)

    @property
    def P(self) -> int:
        return self.Xf.shape[2]

    @property
    def rank_deficiency(self) -> int:
        return 0 if self.spec.phi_spec.proper else self.n_components

    # ----- predictor and likelihood -------------------------------------
    def fixed_part(self, beta) -> np.ndarray:
        return np.einsum("ijm,mj->ij", self.Xf, beta)

    def linear_predictor(self, state: LatentState) -> np.ndarray:
        return self.fixed_part(state.beta) + state.theta + state.phi

    def pointwise_loglik(self, eta) -> np.ndarray:
        return self.likelihood.pointwise(eta)

    def log_likelihood(self, eta) -> float:
        return float(np.sum(self.likelihood.pointwise(eta)))

    # ----- priors -------------------------------------------------------
    def phi_coefficients(self, Omega, rho):
        """``(Omega_D, Omega_W)`` so that ``Q_phi = kron(D, Omega_D) - kron(W, Omega_W)``."""
        if self.spec.per_level_rho:
            return modelG_coefficients(rho, Omega)
        r = 1.0 if not self.spec.phi_spec.proper else float(rho)
        return Omega, r * Omega

    def phi_log_det(self, Omega, rho) -> float:
        ld_om = float(np.linalg.slogdet(Omega)[1])
        sp_ = self.spectrum
        if self.spec.per_level_rho:
            return sum(sp_.log_det(float(r)) for r in rho) + self.n * ld_om
        if not self.spec.phi_spec.proper:
            return self.J * sp_.log_det(1.0) + (self.n - self.n_components) * ld_om
        return self.J * sp_.log_det(float(rho)) + self.n * ld_om

    def phi_quadratic(self, phi, Omega, rho) -> float:
        A, B = self.phi_coefficients(Omega, rho)
        DP = phi * self.m[:, None]
        WP = self.Ws @ phi
        return float(np.sum((phi.T @ DP) * A) - np.sum((phi.T @ WP) * B))

    def log_prior_phi(self, phi, Omega, rho) -> float:
        r = self.n * self.J - self.J * self.rank_deficiency
        return 0.5 * self.phi_log_det(Omega, rho) - 0.5 * r * LOG_2PI - 0.5 * self.phi_quadratic(phi, Omega, rho)

    def log_prior_theta(self, theta, Sigma) -> float:
        Pm = np.linalg.inv(Sigma)
        quad = float(np.sum((theta @ Pm) * theta))
        return -0.5 * self.n * (self.J * LOG_2PI + np.linalg.slogdet(Sigma)[1]) - 0.5 * quad

    def log_prior_beta(self, beta) -> float:
        v = self.spec.hyperpriors.beta_prior_variance
        return float(-0.5 * beta.size * (LOG_2PI + math.log(v)) - 0.5 * np.sum(beta * beta) / v)

    def log_hyperprior(self, state: LatentState) -> float:
        hp = self.spec.hyperpriors
        J = self.J
        lp = 0.0
        if self.spec.theta_prior == "independent":
            a, b = hp.theta_gamma
            for s2 in np.diag(state.Sigma_theta):
                lp += _gamma_logpdf(1.0 / s2, a, b)
        else:
            lp += _wishart_logpdf(np.linalg.inv(state.Sigma_theta), hp.wishart_df, hp.scale(J))
        if self.spec.phi_spec.cross_independent:
            tau = np.diag(state.Omega)
            if hp.omega_diag_prior == "gamma":
                a, b = hp.omega_gamma
                lp += sum(_gamma_logpdf(t, a, b) for t in tau)
            # flat on the variance 1/tau: constant, improper
        else:
            lp += _wishart_logpdf(state.Omega, hp.wishart_df, hp.scale(J))
        # Uniform(0, 1) on rho: zero log-density inside the support
        if state.rho is not None:
            r = np.atleast_1d(state.rho)
            if np.any(r <= 0) or np.any(r >= 1):
                return -math.inf
        return lp

    def log_joint(self, state: LatentState) -> float:
        eta = self.linear_predictor(state)
        return (
            self.log_likelihood(eta)
            + self.log_prior_beta(state.beta)
            + self.log_prior_theta(state.theta, state.Sigma_theta)
            + self.log_prior_phi(state.phi, state.Omega, state.rho)
            + self.log_hyperprior(state)
        )

    def grad_log_joint(self, state: LatentState) -> dict:
        """Gradient of :meth:`log_joint` for the latent blocks and rho."""
        eta = self.linear_predictor(state)
        g = self.likelihood.grad(eta)
        v = self.spec.hyperpriors.beta_prior_variance
        out = {
            "beta": np.einsum("ijm,ij->mj", self.Xf, g) - state.beta / v,
            "theta": g - state.theta @ np.linalg.inv(state.Sigma_theta),
        }
        A, B = self.phi_coefficients(state.Omega, state.rho)
        phi = state.phi
        out["phi"] = g - ((phi * self.m[:, None]) @ A - (self.Ws @ phi) @ B)
        if self.spec.phi_spec.proper:
            WP = self.Ws @ phi
            if self.spec.per_level_rho:
                L = np.linalg.cholesky(state.Omega)
                U = phi @ L
                WU = WP @ L
                out["rho"] = np.array([
                    0.5 * self.spectrum.d_log_det(float(r)) + 0.5 * float(U[:, j] @ WU[:, j])
                    for j, r in enumerate(np.asarray(state.rho))
                ])
            else:
                out["rho"] = (0.5 * self.J * self.spectrum.d_log_det(float(state.rho))
                              + 0.5 * float(np.sum((phi.T @ WP) * state.Omega)))
        return out

    def default_state(self) -> LatentState:
        J, P = self.J, self.P
        beta = np.zeros((P, J))
        if isinstance(self.likelihood, PoissonLikelihood):
            tot_y = self.Y.sum(axis=0) + 0.5
            beta[0] = np.log(tot_y / self.E.sum())
        spec = self.spec.phi_spec
        if spec.rho_per_level is not None:
            rho = np.array(spec.rho_per_level, dtype=float)
        elif spec.proper:
            rho = float(spec.rho)
        else:
            rho = None
        return LatentState(beta, np.zeros((self.n, J)), np.zeros((self.n, J)),
                           0.25 * np.eye(J), 4.0 * np.eye(J), rho)


def build_model(lattice: NetworkLattice | AdjacencyMatrix, Y, E, X: FixedEffectsDesign | None, spec: ModelSpec,
                likelihood=None, sum_to_zero: bool = True) -> PoissonCARModel:
    """Assemble a model from a lattice (or bare adjacency) and data arrays.

    ``Y`` and ``E`` may be :class:`CountMatrix` / :class:`ExposureVector`
    or plain arrays aligned with the lattice segments.
    """
    if isinstance(lattice, NetworkLattice):
        W, ids = lattice.adjacency, lattice.ids
    else:
        W, ids = lattice, None
    Yv = getattr(Y, "Y", Y)
    Ev = getattr(E, "E", E)
    Yv = np.asarray(Yv)
    if X is None:
        X = FixedEffectsDesign.empty(Yv.shape[0], Yv.shape[1])
    try:
        return PoissonCARModel(W, Yv, Ev, X, spec, ids=ids, likelihood=likelihood, sum_to_zero=sum_to_zero)
    except PriorError as exc:
        raise ModelError(str(exc)) from exc
