"""Synthetic lattices and data drawn from the model family."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.spatial import Delaunay

from .events import CountMatrix
from .exposure import ExposureVector
from .gmrf import BandedGMRF, krige
from .inference.model import FixedEffectsDesign, ModelSpec, scale_covariates
from .network import NetworkLattice, Segment, build_lattice, connected_components
from .priors import CrossLevelPrecision, car_matrix, modelG_coefficients, sum_to_zero_constraints

TOPOLOGIES = ("path", "grid-dual", "random-planar")


@dataclass(frozen=True)
class TrueParameters:
    """Generating values: ``beta`` is (M + 1) x J with the intercept first,
    ``Sigma_theta`` the covariance of theta, ``Omega`` the CAR cross-level
    precision, ``rho`` a scalar, a per-level tuple, or None (intrinsic)."""

    beta: np.ndarray
    Sigma_theta: np.ndarray
    Omega: np.ndarray
    rho: float | tuple | None = None

    def __post_init__(self):
        CrossLevelPrecision(self.Omega)
        CrossLevelPrecision(np.linalg.inv(self.Sigma_theta))
        if self.rho is not None:
            for r in np.atleast_1d(self.rho):
                if not 0 < r < 1:
                    raise ValueError(f"rho must lie in (0, 1), got {r}")

    @classmethod
    def from_summary(cls, beta, sigma2_theta, rho_theta, sigma2_phi, rho_phi, rho=None):
        """Build from variances and correlations (the reported parameterization)."""
        St = CrossLevelPrecision.from_covariance(sigma2_theta, rho_theta).covariance
        Om = CrossLevelPrecision.from_covariance(sigma2_phi, rho_phi).Omega
        return cls(np.asarray(beta, dtype=float), St, Om, rho)


def default_truth(model_id: str = "F") -> TrueParameters:
    """Moderate generating values with one covariate."""
    rho = {"A": None, "C": None, "E": None, "G": (0.7, 0.95)}.get(model_id, 0.9)
    rho_theta = 0.5 if model_id in "EFG" else 0.0
    rho_phi = 0.0 if model_id in "AB" else 0.8
    beta = np.array([[-1.0, 0.5], [0.6, -0.4]])
    return TrueParameters.from_summary(beta, (0.05, 0.05), rho_theta, (2.0, 2.0), rho_phi, rho)


@dataclass(frozen=True)
class SynthConfig:
    n: int = 200
    topology: str = "grid-dual"
    length_range: tuple[float, float] = (50.0, 400.0)
    exposure_range: tuple[float, float] = (5.0, 50.0)
    n_covariates: int = 1
    seed: int = 0
    truth: TrueParameters = field(default_factory=default_truth)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"topology must be one of {TOPOLOGIES}")
        a, b = self.length_range
        if not 0 < a <= b:
            raise ValueError("length_range must satisfy 0 < low <= high")
        lo, hi = self.exposure_range
        if not 0 < lo <= hi:
            raise ValueError("exposure_range must satisfy 0 < low <= high")


def _bent_polyline(p, q, L):
    """Polyline from p to q with length L (>= |pq|), bent at the midpoint."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    d = float(np.hypot(*(q - p)))
    if L <= d * (1 + 1e-12):
        return [tuple(p), tuple(q)]
    h = math.sqrt((L / 2) ** 2 - (d / 2) ** 2)
    t = (q - p) / d
    mid = 0.5 * (p + q) + h * np.array([-t[1], t[0]])
    return [tuple(p), tuple(mid), tuple(q)]


def _bfs_edge_prefix(edges, n_keep):
    """First ``n_keep`` edges of a breadth-first traversal of the line graph."""
    inc: dict = {}
    for k, (u, v) in enumerate(edges):
        inc.setdefault(u, []).append(k)
        inc.setdefault(v, []).append(k)
    seen = [False] * len(edges)
    out, queue = [], deque([0])
    seen[0] = True
    while queue and len(out) < n_keep:
        k = queue.popleft()
        out.append(k)
        for x in edges[k]:
            for k2 in inc[x]:
                if not seen[k2]:
                    seen[k2] = True
                    queue.append(k2)
    return out


def simulate_lattice(config: SynthConfig) -> NetworkLattice:
    """A connected lattice of ``config.n`` segments with the chosen topology."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 101]))
    n = config.n
    a, b = config.length_range
    L = rng.uniform(a, b, n)
    if config.topology == "path":
        x = np.concatenate([[0.0], np.cumsum(L)])
        segs = [Segment(i, [(x[i], 0.0), (x[i + 1], 0.0)]) for i in range(n)]
        return build_lattice(segs)
    if config.topology == "grid-dual":
        k = 2
        while 2 * k * (k - 1) < n:
            k += 1
        s = a
        edges = []
        for r in range(k):
            for c in range(k):
                if c + 1 < k:
                    edges.append((r * k + c, r * k + c + 1))
                if r + 1 < k:
                    edges.append((r * k + c, (r + 1) * k + c))
        xy = np.array([(c * s, r * s) for r in range(k) for c in range(k)], dtype=float)
    else:
        nv = n // 2 + 8
        while True:
            pts = rng.uniform(0, 1, (nv, 2))
            tri = Delaunay(pts)
            es = set()
            for simplex in tri.simplices:
                for i in range(3):
                    u, v = sorted((int(simplex[i]), int(simplex[(i + 1) % 3])))
                    es.add((u, v))
            if len(es) >= n:
                break
            nv += 8
        edges = sorted(es)
        xy = pts
    keep = _bfs_edge_prefix(edges, n)
    chosen = [edges[k2] for k2 in keep]
    if config.topology == "random-planar":
        dmax = max(float(np.hypot(*(xy[u] - xy[v]))) for u, v in chosen)
        xy = xy * (a / dmax)
    segs = [Segment(i, _bent_polyline(xy[u], xy[v], L[i])) for i, (u, v) in enumerate(chosen)]
    return build_lattice(segs)


def phi_precision(lattice, spec: ModelSpec, truth: TrueParameters):
    W = lattice.adjacency
    if spec.per_level_rho:
        A, B = modelG_coefficients(truth.rho, truth.Omega)
    elif spec.phi_spec.proper:
        A, B = truth.Omega, float(truth.rho) * truth.Omega
    else:
        A, B = truth.Omega, truth.Omega
    return car_matrix(W, A, B)


def sample_phi(lattice, spec: ModelSpec, truth: TrueParameters, rng, size: int | None = None) -> np.ndarray:
    """Draws of ``phi`` (n x J, or size x n x J) from the model's GMRF prior.

    Intrinsic priors are sampled with precision ``Q + C^T C`` and then
    conditioned on ``C phi = 0`` by kriging.
    """
    n, J = lattice.n, spec.J
    Q = phi_precision(lattice, spec, truth)
    k = 1 if size is None else size
    if spec.phi_spec.proper:
        x = BandedGMRF(Q).sample(rng, size=k)
    else:
        C = sum_to_zero_constraints(connected_components(lattice.adjacency), J).C.toarray()
        Qd = Q.toarray() + C.T @ C
        Lc = np.linalg.cholesky(Qd)
        z = rng.standard_normal((n * J, k))
        xs = sla.solve_triangular(Lc.T, z, lower=False)
        V = sla.cho_solve((Lc, True), C.T)
        x = krige(xs, V, C).T
    x = x.reshape(k, n, J)
    return x[0] if size is None else x


@dataclass
class SimulatedData:
    counts: CountMatrix
    exposure: ExposureVector
    design: FixedEffectsDesign
    phi: np.ndarray
    theta: np.ndarray
    eta: np.ndarray
    covariates: dict

    def __iter__(self):
        return iter((self.counts, self.exposure, self.design))


def simulate_covariates(n: int, M: int, seed: int) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 202]))
    return {f"x{m + 1}": rng.standard_normal(n) for m in range(M)}


def simulate_data(lattice: NetworkLattice, spec: ModelSpec, truth: TrueParameters, seed: int,
                  exposure_range=(5.0, 50.0), covariates: dict | None = None, E=None) -> SimulatedData:
    """Forward simulation ``Y ~ Poisson(E exp(X beta + theta + phi))``.

    Exposure is log-uniform on ``exposure_range`` unless ``E`` is given.
    Covariates default to standard normal columns, one per non-intercept
    row of ``truth.beta``.
    """
    n, J = lattice.n, spec.J
    beta = np.asarray(truth.beta, dtype=float)
    if beta.shape[1] != J:
        raise ValueError("truth.beta must have one column per level")
    M = beta.shape[0] - 1
    ss = np.random.SeedSequence([seed, 303])
    r_phi, r_theta, r_E, r_Y = (np.random.default_rng(s) for s in ss.spawn(4))
    if covariates is None:
        covariates = simulate_covariates(n, M, seed)
    design = scale_covariates(covariates, J=J) if M else FixedEffectsDesign.empty(n, J)
    if design.M != M:
        raise ValueError("number of covariates does not match truth.beta")
    phi = sample_phi(lattice, spec, truth, r_phi)
    Lt = np.linalg.cholesky(truth.Sigma_theta)
    theta = r_theta.standard_normal((n, J)) @ Lt.T
    Xf = np.concatenate([np.ones((n, J, 1)), design.X], axis=2)
    eta = np.einsum("ijm,mj->ij", Xf, beta) + theta + phi
    if E is None:
        lo, hi = exposure_range
        E = np.exp(r_E.uniform(math.log(lo), math.log(hi), n))
    E = np.asarray(E, dtype=float)
    Y = r_Y.poisson(E[:, None] * np.exp(eta))
    ids = lattice.ids
    ev = ExposureVector(E, lattice.lengths / 1000.0, E / (lattice.lengths / 1000.0), ids)
    return SimulatedData(CountMatrix(Y, ids), ev, design, phi, theta, eta, covariates)
