"""Coefficient histograms, Laplacian fits, and the chi-square distance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class CoeffHistogram:
    """Sparse normalized distribution of one coefficient's quantized values.

    support is strictly increasing, one bin per distinct integer value;
    mass entries are positive and sum to 1; count is the original sample
    count the masses were normalized from.
    """

    support: np.ndarray
    mass: np.ndarray
    count: int

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CoeffHistogram):
            return NotImplemented
        return (
            self.count == other.count
            and bool(np.array_equal(self.support, other.support))
            and bool(np.array_equal(self.mass, other.mass))
        )


@dataclass(frozen=True)
class LaplacianParams:
    mu: float
    beta: float


def build_histogram(values: np.ndarray) -> CoeffHistogram:
    """Histogram of integer values with unit-width bins centered on integers."""
    arr = np.asarray(values).reshape(-1)
    if arr.size == 0:
        raise ValueError("cannot build a histogram from no values")
    support, counts = np.unique(arr.astype(np.int64), return_counts=True)
    total = int(arr.size)
    return CoeffHistogram(support=support, mass=counts / total, count=total)


def fit_laplacian(h: CoeffHistogram) -> LaplacianParams:
    """Closed-form Laplacian ML fit.

    mu is the weighted median of the support (lower median on ties), the
    minimizer of sum(mass * |x - mu|); beta is that weighted absolute
    deviation at mu. A single-bin histogram gives beta = 0.
    """
    cum = np.cumsum(h.mass)
    half = 0.5 * cum[-1]
    idx = int(np.searchsorted(cum, half, side="left"))
    mu = float(h.support[idx])
    beta = float(np.sum(h.mass * np.abs(h.support - mu)))
    return LaplacianParams(mu=mu, beta=beta)


def chi2(a: CoeffHistogram, b: CoeffHistogram) -> float:
    """Chi-square distance sum((x - y)^2 / (x + y)) over the union of supports.

    Bins present in only one histogram contribute that histogram's mass;
    both-zero bins cannot occur on the union.
    """
    union = np.union1d(a.support, b.support)
    xa = np.zeros(union.size)
    xb = np.zeros(union.size)
    xa[np.searchsorted(union, a.support)] = a.mass
    xb[np.searchsorted(union, b.support)] = b.mass
    return float(np.sum((xa - xb) ** 2 / (xa + xb)))


def is_degenerate(h: CoeffHistogram) -> bool:
    """True when every sample fell in a single bin: no information about q1."""
    return h.support.size == 1
