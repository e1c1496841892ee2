"""Chain diagnostics: autocorrelation and effective sample size."""
from __future__ import annotations

import numpy as np


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Autocorrelation along axis 0 via FFT (biased estimator, lag 0 = 1)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    xc = x - x.mean(axis=0)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size, axis=0)
    acov = np.fft.irfft(f * np.conj(f), size, axis=0)[:n] / n
    with np.errstate(invalid="ignore", divide="ignore"):
        return acov / acov[0]


def effective_sample_size(x: np.ndarray) -> np.ndarray | float:
    """ESS with Geyer's initial monotone positive sequence.

    Works along axis 0; a constant chain returns the chain length.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    x2 = x.reshape(x.shape[0], -1)
    n = x2.shape[0]
    out = np.empty(x2.shape[1])
    rho = autocorrelation(x2) if n > 1 else np.ones((1, x2.shape[1]))
    for k in range(x2.shape[1]):
        r = rho[:, k]
        if n < 4 or not np.isfinite(r[0]):
            out[k] = n
            continue
        npair = (n - 1) // 2
        pairs = r[: 2 * npair].reshape(npair, 2).sum(axis=1)
        neg = np.nonzero(pairs <= 0)[0]
        m = neg[0] if len(neg) else npair
        g = np.minimum.accumulate(pairs[:m]) if m else pairs[:0]
        tau = -1.0 + 2.0 * g.sum()
        out[k] = n / max(tau, 1.0 / np.log10(max(n, 10)))
    return float(out[0]) if scalar else out.reshape(x.shape[1:])


def monte_carlo_se(x: np.ndarray) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    return np.std(x, axis=0, ddof=1) / np.sqrt(effective_sample_size(x))
