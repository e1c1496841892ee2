"""Block Gibbs / Metropolis sampler for models A-G.

The sampler works on the augmented predictor ``eta = X beta + theta + phi``.
One sweep updates

1. ``eta`` cell by cell: the conditional is likelihood times the Gaussian
   implied by ``theta``; an independence Metropolis step uses a Laplace
   approximation around the conditional mode (exact draws for Gaussian
   likelihoods);
2. ``(beta, phi)`` jointly from their Gaussian conditional given ``eta``
   through a banded Cholesky factor of the ``phi`` precision, with
   conditioning by kriging onto the sum-to-zero constraints;
3. ``Sigma_theta`` (Gamma or Wishart), ``Omega`` (Gamma, Wishart, or a
   Wishart-proposal Metropolis step for model G) and ``rho`` (random walk on
   the logit scale).

Units are processed in a canonical order: sorted by segment id, then
reverse Cuthill-McKee. Each parameter block draws from its own Philox
stream keyed by ``(seed, block id)``. Together these make the chains
invariant to the order in which segments are supplied.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.linalg.lapack import dpbtrf, dpbtrs, dtbtrs
from scipy.stats import wishart

from ..gmrf import rcm_order
from ..network import connected_components
from ..priors import modelG_coefficients
from .diagnostics import effective_sample_size
from .model import (
    LatentState,
    ModelError,
    PoissonCARModel,
    _gamma_logpdf,
    _wishart_logpdf,
    hyper_names,
    hyper_values,
)

logger = logging.getLogger(__name__)

STREAM_IDS = {"eta": 0, "beta_phi": 1, "theta_hyper": 2, "omega": 3, "rho": 4, "scale": 5}
FIXABLE = ("Sigma_theta", "Omega", "rho")
RHO_TARGET_ACCEPT = 0.44
SCALE_TARGET_ACCEPT = 0.35
NEWTON_STEPS = 6


class _Adapter:
    """Batch-wise tuning of random-walk step sizes during burn-in."""

    def __init__(self, k: int, start: float, target: float, batch: int = 50):
        self.scale = np.full(k, start)
        self.target = target
        self.batch = batch
        self.acc = np.zeros(k)
        self.tries = 0
        self.total_acc = np.zeros(k)
        self.total_tries = 0

    def record(self, acc, adapt: bool):
        acc = np.asarray(acc, dtype=float)
        self.total_acc += acc
        self.total_tries += 1
        if not adapt:
            return
        self.acc += acc
        self.tries += 1
        if self.tries == self.batch:
            rate = self.acc / self.batch
            self.scale *= np.exp(2.0 * np.clip(rate - self.target, -0.3, 0.3))
            self.acc[:] = 0
            self.tries = 0

    @property
    def rate(self):
        return (self.total_acc / max(self.total_tries, 1)).tolist()


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 20000
    burn_in: int = 5000
    thin: int = 5
    seed: int = 0
    rho_steps: int = 4
    store_latent: bool = True

    def __post_init__(self):
        for name in ("iterations", "thin", "rho_steps"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v <= 0:
                raise ModelError(f"{name} must be a positive integer, got {v!r}")
        if not isinstance(self.burn_in, (int, np.integer)) or not 0 <= self.burn_in < self.iterations:
            raise ModelError("burn_in must satisfy 0 <= burn_in < iterations")
        if (self.iterations - self.burn_in) % self.thin:
            raise ModelError("iterations - burn_in must be a multiple of thin")
        if self.seed is None:
            raise ModelError("a seed is required")

    @property
    def n_kept(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class PosteriorChains:
    """Kept draws in the segment order of the model.

    ``draws`` holds ``beta`` (S, P, J), ``hyper`` (S, H) and, when stored,
    ``eta``, ``theta`` and ``phi`` (S, n, J).
    """

    draws: dict
    hyper_names: list
    beta_names: tuple
    segment_ids: np.ndarray
    model_id: str
    config: ChainConfig
    diagnostics: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def n_kept(self) -> int:
        return self.draws["beta"].shape[0]

    @property
    def lam(self) -> np.ndarray:
        """Fitted rate draws ``exp(eta)``."""
        return np.exp(self.draws["eta"])

    def hyper(self, name: str) -> np.ndarray:
        return self.draws["hyper"][:, self.hyper_names.index(name)]

    def scalar_draws(self) -> dict:
        """Every scalar parameter (beta entries and hyperparameters) by name."""
        out = {}
        J = self.draws["beta"].shape[2]
        for m, nm in enumerate(self.beta_names):
            for j in range(J):
                out[f"beta[{nm}][{j + 1}]"] = self.draws["beta"][:, m, j]
        for k, nm in enumerate(self.hyper_names):
            out[nm] = self.draws["hyper"][:, k]
        return out

    def summary(self, probs=(0.025, 0.25, 0.5, 0.75, 0.975)) -> dict:
        out = {}
        for name, x in self.scalar_draws().items():
            q = np.quantile(x, probs)
            out[name] = {"mean": float(np.mean(x)), "sd": float(np.std(x, ddof=1)) if len(x) > 1 else 0.0,
                         **{f"q{p:g}": float(v) for p, v in zip(probs, q)}}
        return out


class _Sampler:
    def __init__(self, model: PoissonCARModel, config: ChainConfig, init: LatentState | None, fixed: Iterable[str]):
        self.model = model
        self.cfg = config
        self.fixed = set(fixed)
        bad = self.fixed - set(FIXABLE)
        if bad:
            raise ModelError(f"cannot fix {sorted(bad)}; fixable: {FIXABLE}")
        spec = model.spec
        self.spec = spec
        n, J, P = model.n, model.J, model.P
        self.n, self.J, self.P = n, J, P
        self.N = n * J

        # canonical unit order
        canon = np.argsort(model.ids, kind="stable")
        Wc = model.W.subset(canon)
        rcm = rcm_order(Wc.to_sparse())
        self.order = canon[rcm]
        W = model.W.subset(self.order)
        self.Wint = W
        self.Ws = W.to_sparse().tocsr()
        self.m = W.degrees.astype(float)
        self.lik = model.likelihood.take(self.order)
        self.Xf = model.Xf[self.order]

        # banded storage layout of the phi-block precision
        pairs = W.pairs
        a = np.maximum(pairs[:, 0], pairs[:, 1])
        b = np.minimum(pairs[:, 0], pairs[:, 1])
        bw = int(np.max(a - b)) if len(a) else 0
        self.kd = J * (bw + 1) - 1
        N = self.N
        units = np.arange(n)
        self.diag_idx, self.off_idx = {}, {}
        for j in range(J):
            for k in range(j + 1):
                self.diag_idx[(j, k)] = (j - k) * N + units * J + k
            for k in range(J):
                self.off_idx[(j, k)] = ((a - b) * J + j - k) * N + b * J + k
        self.ab = np.zeros((self.kd + 1, N))

        # design in unit-major vec layout
        Xt = np.zeros((N, P * J))
        for j in range(J):
            Xt[j::J, j::J] = self.Xf[:, j, :]
        self.Xt = Xt

        self.constrained = not spec.phi_spec.proper and model.constraints is not None
        if self.constrained:
            lab = connected_components(W).labels
            C = np.zeros((lab.max() + 1) * J * N).reshape(-1, N)
            for c in range(lab.max() + 1):
                members = np.nonzero(lab == c)[0]
                for j in range(J):
                    C[c * J + j, members * J + j] = 1.0
            self.C = C
        self.k = model.rank_deficiency
        self.spectrum = model.spectrum

        hp = spec.hyperpriors
        self.hp = hp
        self.S0inv = np.linalg.inv(hp.scale(J))
        if not hp.wishart_ok(J) and (spec.theta_prior == "correlated" or not spec.phi_spec.cross_independent):
            raise ModelError("wishart_df must exceed J - 1")
        if (spec.phi_spec.cross_independent and hp.omega_diag_prior == "flat_variance"
                and (n - self.k) / 2.0 - 1.0 <= 0):
            raise ModelError("too few units for the flat variance prior on Omega")

        st = (init or model.default_state()).copy()
        self.beta = np.array(st.beta, dtype=float)
        self.theta = np.array(st.theta, dtype=float)[self.order]
        self.phi = np.array(st.phi, dtype=float)[self.order]
        self.Sigma = np.array(st.Sigma_theta, dtype=float)
        self.Omega = np.array(st.Omega, dtype=float)
        if spec.per_level_rho:
            self.rho = np.array(st.rho, dtype=float)
        elif spec.phi_spec.proper:
            self.rho = float(st.rho)
        else:
            self.rho = None
        if self.constrained:
            r = self.C @ self.phi.ravel()
            if np.max(np.abs(r)) > 1e-8:
                # centre the starting phi within each component
                lab = connected_components(W).labels
                for c in range(lab.max() + 1):
                    sel = lab == c
                    self.phi[sel] -= self.phi[sel].mean(axis=0)
        self.eta = self.fixed_part() + self.theta + self.phi

        seeds = {k: np.random.SeedSequence([int(config.seed), v]) for k, v in STREAM_IDS.items()}
        self.rng = {k: np.random.Generator(np.random.Philox(s)) for k, s in seeds.items()}
        n_rho = J if spec.per_level_rho else 1
        self.rho_scale = np.full(n_rho, 0.6)
        self.stats = {"eta_accept": 0.0, "eta_tries": 0, "rho_accept": np.zeros(n_rho), "rho_tries": 0,
                      "omega_accept": 0, "omega_tries": 0, "rejected_sweeps": 0}
        self._rho_batch = np.zeros(n_rho)
        self._rho_batch_tries = 0
        self.theta_scale = _Adapter(J, 0.1, SCALE_TARGET_ACCEPT)
        self.phi_scale = _Adapter(J, 0.1, SCALE_TARGET_ACCEPT)

    # ------------------------------------------------------------------
    def fixed_part(self) -> np.ndarray:
        return np.einsum("ijm,mj->ij", self.Xf, self.beta)

    def phi_coefficients(self):
        if self.spec.per_level_rho:
            return modelG_coefficients(self.rho, self.Omega)
        r = 1.0 if self.rho is None else self.rho
        return self.Omega, r * self.Omega

    # ----- eta ----------------------------------------------------------
    def update_eta(self):
        rng = self.rng["eta"]
        Pm = np.linalg.inv(self.Sigma)
        mu = self.fixed_part() + self.phi
        for j in range(self.J):
            v = 1.0 / Pm[j, j]
            dev = (self.eta - mu) @ Pm[:, j] - Pm[j, j] * (self.eta[:, j] - mu[:, j])
            m = mu[:, j] - v * dev
            conj = getattr(self.lik, "conjugate_level", None)
            if conj is not None:
                prec_l, lin_l = conj(j)
                prec = 1.0 / v + prec_l
                mean = (m / v + lin_l) / prec
                self.eta[:, j] = mean + rng.standard_normal(self.n) / np.sqrt(prec)
                self.stats["eta_accept"] += 1.0
                continue
            y = self.lik.Y[:, j]
            s0 = np.log((y + 0.5) / self.lik.E[:, 0])
            h0 = y + 0.5
            x = (m / v + h0 * s0) / (1.0 / v + h0)
            for _ in range(NEWTON_STEPS):
                g, h = self.lik.level_grad_curv(j, x)
                step = (g - (x - m) / v) / (h + 1.0 / v)
                x = x + np.clip(step, -2.0, 2.0)
            _, h = self.lik.level_grad_curv(j, x)
            sd = 1.0 / np.sqrt(h + 1.0 / v)
            cur = self.eta[:, j]
            prop = x + sd * rng.standard_normal(self.n)
            u = rng.random(self.n)
            f_prop = self.lik.level_pointwise(j, prop) - 0.5 * (prop - m) ** 2 / v
            f_cur = self.lik.level_pointwise(j, cur) - 0.5 * (cur - m) ** 2 / v
            lq_cur = -0.5 * ((cur - x) / sd) ** 2
            lq_prop = -0.5 * ((prop - x) / sd) ** 2
            log_a = f_prop - f_cur + lq_cur - lq_prop
            ok = np.isfinite(log_a) & (np.log(u) < log_a)
            self.eta[ok, j] = prop[ok]
            self.stats["eta_accept"] += ok.mean()
        self.stats["eta_tries"] += self.J

    # ----- (beta, phi) --------------------------------------------------
    def update_beta_phi(self):
        rng = self.rng["beta_phi"]
        J, P, N = self.J, self.P, self.N
        Pm = np.linalg.inv(self.Sigma)
        A_D, A_W = self.phi_coefficients()
        # entries outside the touched index sets stay zero between sweeps
        buf = self.ab
        bf = buf.reshape(-1)
        for (j, k), idx in self.diag_idx.items():
            bf[idx] = self.m * A_D[j, k] + Pm[j, k]
        for (j, k), idx in self.off_idx.items():
            bf[idx] = -A_W[j, k]
        c, info = dpbtrf(buf, lower=1)
        if info != 0:
            raise np.linalg.LinAlgError(f"phi precision not positive definite (info {info})")
        # A_phi,beta and right-hand sides
        Xt = self.Xt
        A_pb = (Xt.reshape(self.n, J, P * J).transpose(0, 2, 1) @ Pm).transpose(0, 2, 1).reshape(N, P * J)
        b_phi = (self.eta @ Pm).ravel()
        rhs = [A_pb, b_phi[:, None]]
        if self.constrained:
            rhs.append(self.C.T)
        sol, info = dpbtrs(c, np.hstack(rhs), lower=1)
        if info != 0:
            raise np.linalg.LinAlgError("banded solve failed")
        nb = P * J
        Z, u = sol[:, :nb], sol[:, nb]
        v_beta = self.hp.beta_prior_variance
        S = Xt.T @ A_pb + np.eye(nb) / v_beta - A_pb.T @ Z
        r = Xt.T @ b_phi - A_pb.T @ u
        Ls = np.linalg.cholesky(S)
        mean_b = np.linalg.solve(S, r)
        zb = rng.standard_normal(nb)
        beta = mean_b + np.linalg.solve(Ls.T, zb)
        z = rng.standard_normal(N)
        w, info = dtbtrs(c, z[:, None], uplo="L", trans="T")
        if info != 0:
            raise np.linalg.LinAlgError("triangular solve failed")
        phi = u - Z @ beta + w[:, 0]
        if self.constrained:
            Vc = sol[:, nb + 1:]
            yb = -np.linalg.solve(S, A_pb.T @ Vc)
            yp = Vc - Z @ yb
            corr = np.linalg.solve(self.C @ yp, self.C @ phi)
            beta = beta - yb @ corr
            phi = phi - yp @ corr
        if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(phi))):
            raise FloatingPointError("non-finite (beta, phi) draw")
        self.beta = beta.reshape(P, J)
        self.phi = phi.reshape(self.n, J)

    # ----- hyperparameters ---------------------------------------------
    def update_sigma_theta(self):
        rng = self.rng["theta_hyper"]
        th = self.theta
        n, J = self.n, self.J
        if self.spec.theta_prior == "independent":
            a, b = self.hp.theta_gamma
            tau = rng.gamma(a + 0.5 * n, 1.0 / (b + 0.5 * np.sum(th * th, axis=0)))
            self.Sigma = np.diag(1.0 / tau)
        else:
            scale = np.linalg.inv(self.S0inv + th.T @ th)
            Pm = wishart.rvs(df=self.hp.wishart_df + n, scale=scale, random_state=rng)
            self.Sigma = np.linalg.inv(np.atleast_2d(Pm))

    def _phi_cross(self):
        DP = self.phi * self.m[:, None]
        WP = self.Ws @ self.phi
        return self.phi.T @ DP, self.phi.T @ WP

    def update_omega(self, SD, SW):
        rng = self.rng["omega"]
        n, J, k = self.n, self.J, self.k
        spec = self.spec
        if spec.per_level_rho:
            rbar = float(np.mean(self.rho))
            scale = np.linalg.inv(self.S0inv + SD - rbar * SW)
            df = self.hp.wishart_df + n
            prop = np.atleast_2d(wishart.rvs(df=df, scale=scale, random_state=rng))

            def logw(Om):
                L = np.linalg.cholesky(Om)
                M = L @ np.diag(self.rho) @ L.T
                return 0.5 * np.sum(M * SW) - 0.5 * rbar * np.sum(Om * SW)

            log_a = logw(prop) - logw(self.Omega)
            self.stats["omega_tries"] += 1
            if np.log(rng.random()) < log_a:
                self.Omega = prop
                self.stats["omega_accept"] += 1
            return
        r = 1.0 if self.rho is None else self.rho
        S = SD - r * SW
        if spec.phi_spec.cross_independent:
            s = np.diag(S)
            if self.hp.omega_diag_prior == "flat_variance":
                shape = 0.5 * (n - k) - 1.0
                rate = 0.5 * s
            else:
                a, b = self.hp.omega_gamma
                shape = a + 0.5 * (n - k)
                rate = b + 0.5 * s
            tau = rng.gamma(shape, 1.0 / rate)
            self.Omega = np.diag(tau)
        else:
            scale = np.linalg.inv(self.S0inv + S)
            self.Omega = np.atleast_2d(wishart.rvs(df=self.hp.wishart_df + n - k, scale=scale, random_state=rng))

    def update_rho(self, SW, adapt: bool):
        rng = self.rng["rho"]
        sp_ = self.spectrum
        if self.spec.per_level_rho:
            L = np.linalg.cholesky(self.Omega)
            U = self.phi @ L
            WU = self.Ws @ U
            coef = np.einsum("ij,ij->j", U, WU)
            mult = np.ones(self.J)
            rhos = self.rho
        else:
            coef = np.array([np.sum(self.Omega * SW)])
            mult = np.array([float(self.J)])
            rhos = np.array([self.rho])
        rhos = np.array(rhos, dtype=float)
        acc = np.zeros(len(rhos))
        for _ in range(self.cfg.rho_steps):
            for j in range(len(rhos)):
                r = rhos[j]
                x = math.log(r) - math.log1p(-r)
                xp = x + self.rho_scale[j] * rng.standard_normal()
                rp = 1.0 / (1.0 + math.exp(-xp))
                if not 0.0 < rp < 1.0:
                    continue

                def target(q):
                    return 0.5 * mult[j] * sp_.log_det(q) + 0.5 * q * coef[j] + math.log(q) + math.log1p(-q)

                if math.log(rng.random()) < target(rp) - target(r):
                    rhos[j] = rp
                    acc[j] += 1
        acc /= self.cfg.rho_steps
        self.stats["rho_accept"] += acc
        self.stats["rho_tries"] += 1
        if adapt:
            self._rho_batch += acc
            self._rho_batch_tries += 1
            if self._rho_batch_tries == 50:
                rate = self._rho_batch / 50
                self.rho_scale *= np.exp(np.clip(rate - RHO_TARGET_ACCEPT, -0.3, 0.3) * 2.0)
                self._rho_batch[:] = 0
                self._rho_batch_tries = 0
        self.rho = rhos if self.spec.per_level_rho else float(rhos[0])

    # ----- non-centred scale moves --------------------------------------
    # theta_j (or phi_j) is multiplied by a while its precision row and
    # column are divided by a, leaving the whitened effects unchanged.
    # This lets the variances move even when the centred updates are
    # tightly coupled to the current effects.
    def _theta_hyper_logpdf(self, Pm) -> float:
        if self.spec.theta_prior == "independent":
            a, b = self.hp.theta_gamma
            return sum(_gamma_logpdf(t, a, b) for t in np.diag(Pm))
        return _wishart_logpdf(Pm, self.hp.wishart_df, self.hp.scale(self.J))

    def _omega_hyper_logpdf(self, Om) -> float:
        hp = self.hp
        if self.spec.phi_spec.cross_independent:
            tau = np.diag(Om)
            if hp.omega_diag_prior == "gamma":
                a, b = hp.omega_gamma
                return sum(_gamma_logpdf(t, a, b) for t in tau)
            return float(-2.0 * np.sum(np.log(tau)))
        return _wishart_logpdf(Om, hp.wishart_df, hp.scale(self.J))

    def _theta_logpdf(self, theta, Pm) -> float:
        return 0.5 * self.n * np.linalg.slogdet(Pm)[1] - 0.5 * float(np.sum((theta.T @ theta) * Pm))

    def _phi_logpdf(self, phi, Omega) -> float:
        A, B = (modelG_coefficients(self.rho, Omega) if self.spec.per_level_rho
                else (Omega, (1.0 if self.rho is None else self.rho) * Omega))
        quad = float(np.sum((phi.T @ (phi * self.m[:, None])) * A) - np.sum((phi.T @ (self.Ws @ phi)) * B))
        return 0.5 * self.model.phi_log_det(Omega, self.rho) - 0.5 * quad

    def _scale_block(self, kind: str, adapt: bool):
        rng = self.rng["scale"]
        J = self.J
        if kind == "theta":
            x, H = self.theta, np.linalg.inv(self.Sigma)
            diag_only = self.spec.theta_prior == "independent"
            dens, hyper, dim, ad = self._theta_logpdf, self._theta_hyper_logpdf, self.n, self.theta_scale
        else:
            x, H = self.phi, self.Omega
            diag_only = self.spec.phi_spec.cross_independent
            dens, hyper, dim, ad = self._phi_logpdf, self._omega_hyper_logpdf, self.n - self.k, self.phi_scale
        cur = dens(x, H) + hyper(H)
        acc = np.zeros(J)
        for j in range(J):
            la = ad.scale[j] * rng.standard_normal()
            a = math.exp(la)
            d = np.ones(J)
            d[j] = 1.0 / a
            H2 = H * np.outer(d, d)
            x2 = x.copy()
            x2[:, j] *= a
            eta_j = self.eta[:, j] + (a - 1.0) * x[:, j]
            dl = float(np.sum(self.lik.level_pointwise(j, eta_j) - self.lik.level_pointwise(j, self.eta[:, j])))
            new = dens(x2, H2) + hyper(H2)
            jac = dim * la - (2.0 if diag_only else J + 1.0) * la
            log_a = dl + new - cur + jac
            if np.isfinite(log_a) and math.log(rng.random()) < log_a:
                x, H, cur = x2, H2, new
                self.eta[:, j] = eta_j
                acc[j] = 1
        ad.record(acc, adapt)
        if kind == "theta":
            self.theta, self.Sigma = x, np.linalg.inv(H)
        else:
            self.phi, self.Omega = x, H

    # ------------------------------------------------------------------
    def sweep(self, adapt: bool):
        saved = (self.eta.copy(), self.beta.copy(), self.phi.copy())
        try:
            with np.errstate(over="raise", invalid="raise"):
                self.update_eta()
                self.update_beta_phi()
        except (FloatingPointError, np.linalg.LinAlgError) as exc:
            self.eta, self.beta, self.phi = saved
            self.stats["rejected_sweeps"] += 1
            logger.warning("sweep rejected: %s", exc)
        self.theta = self.eta - self.fixed_part() - self.phi
        if "Sigma_theta" not in self.fixed:
            self.update_sigma_theta()
        SD, SW = self._phi_cross()
        if "Omega" not in self.fixed:
            self.update_omega(SD, SW)
        if self.rho is not None and "rho" not in self.fixed:
            self.update_rho(SW, adapt)
        if "Sigma_theta" not in self.fixed:
            self._scale_block("theta", adapt)
        if "Omega" not in self.fixed:
            self._scale_block("phi", adapt)

    def state(self) -> LatentState:
        inv = np.empty_like(self.order)
        inv[self.order] = np.arange(self.n)
        rho = None if self.rho is None else (np.array(self.rho) if self.spec.per_level_rho else float(self.rho))
        return LatentState(self.beta.copy(), self.theta[inv], self.phi[inv], self.Sigma.copy(), self.Omega.copy(), rho)

    def run(self) -> PosteriorChains:
        cfg = self.cfg
        S = cfg.n_kept
        names = hyper_names(self.spec)
        out = {"beta": np.empty((S, self.P, self.J)), "hyper": np.empty((S, len(names)))}
        if cfg.store_latent:
            for key in ("eta", "theta", "phi"):
                out[key] = np.empty((S, self.n, self.J))
        s = 0
        t0 = time.perf_counter()
        self.lik.n_clamped = 0
        for t in range(cfg.iterations):
            self.sweep(adapt=t < cfg.burn_in)
            if t >= cfg.burn_in and (t - cfg.burn_in + 1) % cfg.thin == 0:
                out["beta"][s] = self.beta
                st = LatentState(self.beta, self.theta, self.phi, self.Sigma, self.Omega, self.rho)
                out["hyper"][s] = hyper_values(self.spec, st)
                if cfg.store_latent:
                    for key in ("eta", "theta", "phi"):
                        out[key][s, self.order] = getattr(self, key)
                s += 1
        elapsed = time.perf_counter() - t0
        if self.lik.n_clamped:
            logger.warning("eta clamped to +-30 in %d likelihood evaluations", self.lik.n_clamped)
        st = self.stats
        diag = {
            "eta_acceptance": st["eta_accept"] / max(st["eta_tries"], 1),
            "rho_acceptance": (st["rho_accept"] / max(st["rho_tries"], 1)).tolist(),
            "omega_acceptance": st["omega_accept"] / st["omega_tries"] if st["omega_tries"] else None,
            "rejected_sweeps": st["rejected_sweeps"],
            "clamped_evaluations": int(self.lik.n_clamped),
            "rho_proposal_scale": self.rho_scale.tolist(),
            "theta_scale_acceptance": self.theta_scale.rate,
            "phi_scale_acceptance": self.phi_scale.rate,
            "seconds": elapsed,
            "seconds_per_iteration": elapsed / cfg.iterations,
        }
        chains = PosteriorChains(out, names, self.model.beta_names, np.asarray(self.model.ids),
                                 self.spec.id, cfg, diag)
        ess = {k: float(effective_sample_size(v)) for k, v in chains.scalar_draws().items()}
        diag["ess"] = ess
        return chains


def run_mcmc(model: PoissonCARModel, config: ChainConfig | dict | None = None, init: LatentState | None = None,
             fixed: Iterable[str] = ()) -> PosteriorChains:
    """Run one chain.

    Parameters
    ----------
    model : PoissonCARModel
    config : ChainConfig or mapping of its fields
    init : LatentState, optional
        Starting point; also supplies the values of ``fixed`` parameters.
    fixed : iterable of {"Sigma_theta", "Omega", "rho"}
        Hyperparameters held at their initial values.
    """
    if config is None:
        config = ChainConfig()
    elif isinstance(config, dict):
        config = ChainConfig(**config)
    return _Sampler(model, config, init, fixed).run()
