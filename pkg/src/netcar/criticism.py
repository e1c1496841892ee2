"""Posterior predictive criticism by balanced accuracy.

Observed and predicted counts are binned into classes (by default Zero and
One-or-more) and compared through a confusion matrix. Rows are the actual
class and columns the predicted class::

                 pred 0   pred >=1
    actual 0       A         B
    actual >=1     C         D

``sensitivity = A / (A + B)`` is the recall of the Zero class and
``specificity = D / (C + D)`` the recall of the One-or-more class.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

DEFAULT_LEVELS = ("mean", 0.025, 0.25, 0.5, 0.75, 0.975)
DEFAULT_GROUPS = (0, 1, 2, 3)


@dataclass(frozen=True)
class ConfusionMatrix:
    A: int
    B: int
    C: int
    D: int

    def __post_init__(self):
        for k in "ABCD":
            if getattr(self, k) < 0:
                raise ValueError("confusion counts must be non-negative")

    @property
    def n(self) -> int:
        return self.A + self.B + self.C + self.D

    def as_array(self) -> np.ndarray:
        return np.array([[self.A, self.B], [self.C, self.D]])


@dataclass(frozen=True)
class AccuracyReport:
    """Accuracy measures; an undefined measure is ``nan`` and named in
    ``undefined_class`` (``"zero"`` or ``"positive"``)."""

    sensitivity: float
    specificity: float
    accuracy: float
    balanced_accuracy: float
    undefined_class: str | None = None


def _as_counts(x) -> np.ndarray:
    return np.asarray(getattr(x, "Y", x))


def classify(x, thresholds: Sequence[float] = (1,)) -> np.ndarray:
    """Class index of each count: number of thresholds ``<= x``."""
    return np.searchsorted(np.asarray(thresholds, dtype=float), np.asarray(x, dtype=float), side="right")


def confusion_binary(observed, predicted, threshold: float = 1) -> ConfusionMatrix:
    obs = np.asarray(observed)
    pred = np.asarray(predicted)
    if obs.shape != pred.shape:
        raise ValueError("observed and predicted must align")
    o = obs >= threshold
    p = pred >= threshold
    return ConfusionMatrix(int(np.sum(~o & ~p)), int(np.sum(~o & p)), int(np.sum(o & ~p)), int(np.sum(o & p)))


def confusion_multiclass(observed, predicted, thresholds: Sequence[float] = (1,)) -> np.ndarray:
    """K x K table (rows actual, columns predicted) for K = len(thresholds) + 1."""
    K = len(thresholds) + 1
    o = classify(observed, thresholds)
    p = classify(predicted, thresholds)
    return np.bincount(o * K + p, minlength=K * K).reshape(K, K)


def accuracy_measures(cm: ConfusionMatrix) -> AccuracyReport:
    n0, n1 = cm.A + cm.B, cm.C + cm.D
    sens = cm.A / n0 if n0 else math.nan
    spec = cm.D / n1 if n1 else math.nan
    acc = (cm.A + cm.D) / cm.n if cm.n else math.nan
    if n0 and n1:
        # exact rational mean, rounded once
        ba = float(Fraction(cm.A, n0) / 2 + Fraction(cm.D, n1) / 2)
        return AccuracyReport(sens, spec, acc, ba)
    if n0:
        return AccuracyReport(sens, spec, acc, sens, "positive")
    if n1:
        return AccuracyReport(sens, spec, acc, spec, "zero")
    return AccuracyReport(sens, spec, acc, math.nan, "both")


def balanced_accuracy(observed, predicted, thresholds: Sequence[float] = (1,)) -> float:
    """Mean per-class recall over the classes present in ``observed``."""
    T = confusion_multiclass(observed, predicted, thresholds)
    rows = T.sum(axis=1)
    present = rows > 0
    return float(np.mean(np.diag(T)[present] / rows[present]))


def _batch_balanced_accuracy(obs_class: np.ndarray, pred_class: np.ndarray, K: int) -> np.ndarray:
    """Balanced accuracy of each row of ``pred_class`` against ``obs_class``."""
    rows = np.bincount(obs_class, minlength=K)
    present = np.nonzero(rows)[0]
    hits = np.zeros((pred_class.shape[0], len(present)))
    for c_i, c in enumerate(present):
        sel = obs_class == c
        hits[:, c_i] = np.sum(pred_class[:, sel] == c, axis=1)
    return np.mean(hits / rows[present], axis=1)


@dataclass
class QuantileGrid:
    """Posterior summaries of fitted counts ``mu_ij = E_i lambda_ij``.

    ``values[level]`` is the n x J array for summary ``level`` (``"mean"``
    or a probability).
    """

    levels: tuple
    values: dict = field(default_factory=dict)

    @classmethod
    def from_draws(cls, mu_draws: np.ndarray, levels=DEFAULT_LEVELS) -> "QuantileGrid":
        mu_draws = np.asarray(mu_draws, dtype=float)
        if np.any(mu_draws < 0):
            raise ValueError("fitted counts must be non-negative")
        vals = {}
        probs = [lv for lv in levels if lv != "mean"]
        if probs:
            q = np.quantile(mu_draws, probs, axis=0)
            vals.update({p: q[k] for k, p in enumerate(probs)})
        if "mean" in levels:
            vals["mean"] = mu_draws.mean(axis=0)
        return cls(tuple(levels), vals)

    @classmethod
    def from_chains(cls, chains, E, levels=DEFAULT_LEVELS) -> "QuantileGrid":
        E = np.asarray(getattr(E, "E", E), dtype=float)
        return cls.from_draws(E[None, :, None] * chains.lam, levels)


def balanced_accuracy_distribution(grid: QuantileGrid, observed, N: int = 5000, seed: int = 0,
                                   thresholds: Sequence[float] = (1,)) -> dict:
    """Balanced accuracy of ``N`` Poisson replicates per (severity, level).

    Each replicate draws one count per segment with mean equal to that
    segment's summary at the given level. Severity ``j`` (0-based column)
    and level index ``k`` use the RNG substream ``(seed, j, k)``.

    Returns
    -------
    dict mapping ``(j, level)`` to an array of ``N`` balanced accuracies.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    obs = _as_counts(observed)
    if obs.ndim == 1:
        obs = obs[:, None]
    K = len(thresholds) + 1
    out = {}
    for k, level in enumerate(grid.levels):
        mu = np.asarray(grid.values[level], dtype=float)
        if mu.ndim == 1:
            mu = mu[:, None]
        if mu.shape != obs.shape:
            raise ValueError("grid and observed counts must align")
        for j in range(obs.shape[1]):
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), j, k]))
            oc = classify(obs[:, j], thresholds)
            res = np.empty(N)
            step = max(1, 2_000_000 // max(len(oc), 1))
            for s0 in range(0, N, step):
                s1 = min(N, s0 + step)
                draws = rng.poisson(mu[:, j], size=(s1 - s0, len(oc)))
                res[s0:s1] = _batch_balanced_accuracy(oc, classify(draws, thresholds), K)
            out[(j, level)] = res
    return out


@dataclass(frozen=True)
class HistogramTable:
    """Histograms of predictions grouped by observed count class."""

    group_labels: tuple
    edges: np.ndarray
    counts: np.ndarray  # groups x bins
    group_sizes: np.ndarray
    group_means: np.ndarray


def grouped_histogram(predicted, observed, groups: Sequence[int] = DEFAULT_GROUPS, bins: int = 30) -> HistogramTable:
    """Bin predictions by observed group; the last group pools ``>= groups[-1]``.

    Bins are ``bins`` equal-width intervals over the pooled predicted range.
    Empty groups are dropped.
    """
    pred = np.asarray(predicted, dtype=float).ravel()
    obs = np.asarray(observed).ravel()
    if pred.shape != obs.shape:
        raise ValueError("predicted and observed must align")
    lo, hi = float(pred.min()), float(pred.max())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    g = np.minimum(np.searchsorted(np.asarray(groups), obs, side="right") - 1, len(groups) - 1)
    labels, counts, sizes, means = [], [], [], []
    for k, gv in enumerate(groups):
        sel = g == k
        if not sel.any():
            continue
        labels.append(f"{gv}+" if k == len(groups) - 1 else str(gv))
        counts.append(np.histogram(pred[sel], bins=edges)[0])
        sizes.append(int(sel.sum()))
        means.append(float(pred[sel].mean()))
    return HistogramTable(tuple(labels), edges, np.array(counts).reshape(len(labels), bins),
                          np.array(sizes), np.array(means))
