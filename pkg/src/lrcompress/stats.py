"""Activation-rate statistics for a batch of layer inputs.

The activation rate of a neuron is the fraction of samples where its
response is strictly positive. Ranking neurons by rate and asking how
few of them carry half the total rate mass gives a single skew number
(the half-mass fraction); comparing it between two batches quantifies
how much a domain change concentrates the activity.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .compress import ActivationBatch
from .errors import DimensionError, NoActivationsError

__all__ = [
    "ActivationProfile",
    "SkewReport",
    "activation_rates",
    "compare_profiles",
    "profile_from_rates",
    "write_rate_curve",
    "write_skew_curves",
]


@dataclass(frozen=True)
class ActivationProfile:
    """Per-neuron rates in [0, 1], a descending ranking, and the half-mass point."""

    rates: np.ndarray
    ranked_indices: np.ndarray
    half_mass_fraction: float

    @property
    def ranked_rates(self) -> np.ndarray:
        """Rates sorted non-increasing, the plot-ready curve."""
        return self.rates[self.ranked_indices]


@dataclass(frozen=True)
class SkewReport:
    """Half-mass fractions of two profiles plus their ratio and curves."""

    source_half_mass: float
    target_half_mass: float
    ratio: float
    source_curve: np.ndarray
    target_curve: np.ndarray


def profile_from_rates(rates) -> ActivationProfile:
    """Build a profile from already-computed per-neuron rates.

    Ties in the ranking break toward the lower index. The half-mass
    fraction is count/n for the smallest count of top-ranked neurons
    whose rates sum to at least half the total.
    """
    rates = np.asarray(rates, dtype=np.float64).reshape(-1)
    if rates.size == 0:
        raise DimensionError("rate vector must be non-empty")
    if (rates < 0).any() or (rates > 1).any() or not np.isfinite(rates).all():
        raise DimensionError("rates must lie in [0, 1]")
    total = float(rates.sum())
    if total == 0.0:
        raise NoActivationsError("no activations")
    order = np.argsort(-rates, kind="stable")
    cumulative = np.cumsum(rates[order])
    count = int(np.searchsorted(cumulative, 0.5 * total, side="left")) + 1
    return ActivationProfile(
        rates=rates,
        ranked_indices=order,
        half_mass_fraction=count / rates.size,
    )


def activation_rates(acts: ActivationBatch, threshold: float = 0.0) -> ActivationProfile:
    """Profile of a batch: rate[i] = fraction of samples with x[i, :] > threshold.

    The strict > 0 test means post-ReLU zeros count as inactive. A higher
    threshold is available for inputs that are not ReLU-gated.
    """
    counts = (acts.x > threshold).sum(axis=1)
    return profile_from_rates(counts / acts.samples)


def compare_profiles(source: ActivationProfile, target: ActivationProfile) -> SkewReport:
    """Skew report between two equal-width profiles (ratio = source / target)."""
    if source.rates.size != target.rates.size:
        raise DimensionError(
            f"profiles cover {source.rates.size} and {target.rates.size} neurons"
        )
    return SkewReport(
        source_half_mass=source.half_mass_fraction,
        target_half_mass=target.half_mass_fraction,
        ratio=source.half_mass_fraction / target.half_mass_fraction,
        source_curve=source.ranked_rates,
        target_curve=target.ranked_rates,
    )


def write_rate_curve(profile: ActivationProfile, path) -> None:
    """Ranked-rate curve as CSV with columns rank, rate."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "rate"])
        for rank, rate in enumerate(profile.ranked_rates):
            writer.writerow([rank, repr(float(rate))])


def write_skew_curves(report: SkewReport, path) -> None:
    """Both ranked-rate curves side by side: rank, source_rate, target_rate."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "source_rate", "target_rate"])
        for rank, (src, tgt) in enumerate(zip(report.source_curve, report.target_curve)):
            writer.writerow([rank, repr(float(src)), repr(float(tgt))])
