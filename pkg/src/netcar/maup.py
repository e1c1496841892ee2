"""Re-aggregation of data onto a contracted network and rate comparison."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import spearmanr

from .events import CountMatrix
from .exposure import ExposureVector
from .inference.criteria import quantile_classes
from .network import ContractionMap, NetworkLattice


@dataclass(frozen=True)
class Reaggregated:
    counts: CountMatrix
    exposure: ExposureVector
    covariates: dict


def reaggregate(original: NetworkLattice, contracted: NetworkLattice, cmap: ContractionMap, counts: CountMatrix,
                exposure: ExposureVector, covariates: dict | None = None, categorical=()) -> Reaggregated:
    """Carry counts, exposure and raw covariates over to merged segments.

    Counts are summed. The merged segment's flow is the length-weighted mean
    of its constituents' floored flows, so its exposure (merged length times
    that flow) is the sum of constituent exposures. Numeric covariates take
    the length-weighted mean and categorical ones the value of the longest
    constituent. A segment that was not merged keeps all its values.
    """
    pos = {int(s): k for k, s in enumerate(original.ids)}
    L = original.lengths
    Y = np.asarray(counts.Y)
    E = np.asarray(exposure.E, dtype=float)
    n_new = contracted.n
    Y2 = np.zeros((n_new, Y.shape[1]), dtype=np.int64)
    E2 = np.empty(n_new)
    km2 = contracted.lengths / 1000.0
    cov2 = {c: [None] * n_new for c in (covariates or {})}
    for k, nid in enumerate(contracted.ids):
        members = [pos[o] for o in cmap.merged[int(nid)]]
        Y2[k] = Y[members].sum(axis=0)
        if len(members) == 1:
            E2[k] = E[members[0]]
        else:
            E2[k] = math.fsum(E[members])
        longest = max(members, key=lambda m: (L[m], -int(original.ids[m])))
        for c, vals in (covariates or {}).items():
            if c in categorical:
                cov2[c][k] = vals[longest]
            elif len(members) == 1:
                cov2[c][k] = float(vals[members[0]])
            else:
                w = L[members]
                cov2[c][k] = float(np.dot(w, np.asarray([float(vals[m]) for m in members])) / w.sum())
    flow2 = E2 / km2
    ev = ExposureVector(E2, km2, flow2, contracted.ids.copy())
    return Reaggregated(CountMatrix(Y2, contracted.ids.copy()), ev, cov2)


@dataclass(frozen=True)
class RateComparison:
    spearman: np.ndarray  # per level
    class_agreement: np.ndarray  # per level, fraction on the diagonal
    class_tables: np.ndarray  # J x K x K (rows original, columns contracted)
    original_rates: np.ndarray
    mapped_rates: np.ndarray


def compare_rates(original_ids, original_rates, cmap: ContractionMap, contracted_ids, contracted_rates,
                  n_classes: int = 10) -> RateComparison:
    """Map contracted rates back to original segments and compare."""
    o2n = cmap.original_to_new
    cpos = {int(s): k for k, s in enumerate(contracted_ids)}
    idx = np.array([cpos[o2n[int(s)]] for s in original_ids])
    orig = np.asarray(original_rates, dtype=float)
    mapped = np.asarray(contracted_rates, dtype=float)[idx]
    J = orig.shape[1]
    rho = np.empty(J)
    agree = np.empty(J)
    tables = np.zeros((J, n_classes, n_classes), dtype=np.int64)
    for j in range(J):
        if np.ptp(orig[:, j]) == 0 or np.ptp(mapped[:, j]) == 0:
            rho[j] = 1.0 if np.array_equal(orig[:, j], mapped[:, j]) else math.nan
        else:
            rho[j] = spearmanr(orig[:, j], mapped[:, j]).statistic
        a = quantile_classes(orig[:, j], n_classes) - 1
        b = quantile_classes(mapped[:, j], n_classes) - 1
        np.add.at(tables[j], (a, b), 1)
        agree[j] = np.trace(tables[j]) / len(a)
    return RateComparison(rho, agree, tables, orig, mapped)
