"""Information criteria and quantile classes of fitted rates."""
from __future__ import annotations

import logging
import warnings

import numpy as np
from scipy.special import logsumexp

logger = logging.getLogger(__name__)

WAIC_VARIANCE_WARN = 0.4
MIN_DRAWS = 100


def _eta_draws(chains) -> np.ndarray:
    eta = chains.draws.get("eta") if hasattr(chains, "draws") else chains
    if eta is None:
        raise ValueError("chains were run without storing eta draws")
    return np.asarray(eta, dtype=float)


def pointwise_loglik_draws(chains, model) -> np.ndarray:
    """Log-likelihood of every kept draw at every (segment, level) cell."""
    eta = _eta_draws(chains)
    return np.stack([model.pointwise_loglik(e) for e in eta])


def _check_draws(S: int, min_draws: int):
    if S < min_draws:
        raise ValueError(f"at least {min_draws} kept draws are required, got {S}")


def dic(chains, model, min_draws: int = MIN_DRAWS, return_parts: bool = False):
    """Deviance information criterion ``Dbar + p_D``.

    Deviance is ``-2`` times the full Poisson log-likelihood and
    ``p_D = Dbar - D(posterior mean of eta)``.
    """
    eta = _eta_draws(chains)
    _check_draws(eta.shape[0], min_draws)
    dev = np.array([-2.0 * np.sum(model.pointwise_loglik(e)) for e in eta])
    dbar = float(np.mean(dev))
    d_hat = float(-2.0 * np.sum(model.pointwise_loglik(eta.mean(axis=0))))
    p_d = dbar - d_hat
    value = dbar + p_d
    if return_parts:
        return {"DIC": value, "Dbar": dbar, "D_hat": d_hat, "p_D": p_d}
    return value


def waic(chains, model, min_draws: int = MIN_DRAWS, return_parts: bool = False):
    """Widely applicable information criterion ``-2 (lppd - p_WAIC)``.

    ``p_WAIC`` sums the sample variance (ddof 1) of the pointwise
    log-likelihood over cells. Cells whose variance exceeds 0.4 indicate an
    unreliable estimate; a warning reports how many there are.
    """
    ll = pointwise_loglik_draws(chains, model)
    S = ll.shape[0]
    _check_draws(S, min_draws)
    lppd_cells = logsumexp(ll, axis=0) - np.log(S)
    var_cells = np.var(ll, axis=0, ddof=1) if S > 1 else np.zeros(ll.shape[1:])
    n_bad = int(np.count_nonzero(var_cells > WAIC_VARIANCE_WARN))
    if n_bad:
        warnings.warn(f"{n_bad} cells have pointwise log-likelihood variance > {WAIC_VARIANCE_WARN}; WAIC may be unreliable",
                      RuntimeWarning, stacklevel=2)
    lppd = float(np.sum(lppd_cells))
    p_w = float(np.sum(var_cells))
    value = -2.0 * (lppd - p_w)
    if return_parts:
        return {"WAIC": value, "lppd": lppd, "p_WAIC": p_w, "n_high_variance": n_bad}
    return value


def decile_boundaries(values, n_classes: int = 10) -> np.ndarray:
    """Interior class boundaries at quantiles ``k / n_classes``."""
    return np.quantile(np.asarray(values, dtype=float), np.arange(1, n_classes) / n_classes)


def quantile_classes(values, n_classes: int = 10) -> np.ndarray:
    """Labels ``1..n_classes`` by empirical quantile, ``n_classes`` = highest.

    A value equal to a boundary falls in the lower class, so constant input
    lands entirely in class 1.
    """
    b = decile_boundaries(values, n_classes)
    return np.searchsorted(b, np.asarray(values, dtype=float), side="left") + 1


def rate_quantile_classes(chains, n_classes: int = 10) -> np.ndarray:
    """Per severity level, decile class of the posterior mean rate (n x J)."""
    lam = np.exp(_eta_draws(chains)).mean(axis=0)
    return np.column_stack([quantile_classes(lam[:, j], n_classes) for j in range(lam.shape[1])])


def posterior_mean_rates(chains) -> np.ndarray:
    return np.exp(_eta_draws(chains)).mean(axis=0)
