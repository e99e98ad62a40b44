"""Bjontegaard-style average metric difference between two RD curves.

Each curve's metric is fitted as a polynomial in log10(bpp); the
difference of the fits is integrated exactly over the overlapping
log-rate interval and divided by its length. Positive output means the
test curve sits above the reference on average.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RdPoint:
    bpp: float
    metrics: dict[str, float] = field(default_factory=dict)


class RdCurve:
    """Rate-distortion points with strictly increasing bpp."""

    def __init__(self, points: list[RdPoint]):
        if len(points) < 2:
            raise ValueError("an RD curve needs at least 2 points")
        bpps = [p.bpp for p in points]
        if any(b <= 0 for b in bpps):
            raise ValueError("bpp values must be positive")
        if any(b2 <= b1 for b1, b2 in zip(bpps, bpps[1:])):
            raise ValueError("bpp must be strictly increasing")
        self.points = list(points)

    def log_rates(self) -> np.ndarray:
        return np.log10([p.bpp for p in self.points])

    def metric_values(self, key: str) -> np.ndarray:
        try:
            return np.asarray([p.metrics[key] for p in self.points], dtype=np.float64)
        except KeyError:
            raise KeyError(f"metric {key!r} missing from a curve point") from None


def _fit(curve: RdCurve, key: str) -> np.ndarray:
    degree = min(3, len(curve.points) - 1)
    return np.polyfit(curve.log_rates(), curve.metric_values(key), degree)


def bd_delta(reference: RdCurve, test: RdCurve, metric_key: str) -> float:
    """Average (test - reference) of the fitted curves over the shared
    log-rate interval, via exact polynomial integration."""
    poly_ref = _fit(reference, metric_key)
    poly_test = _fit(test, metric_key)
    lo = max(reference.log_rates().min(), test.log_rates().min())
    hi = min(reference.log_rates().max(), test.log_rates().max())
    if hi <= lo:
        raise ValueError("rate ranges do not overlap")
    n = max(len(poly_ref), len(poly_test))
    diff = np.zeros(n)
    diff[n - len(poly_test):] += poly_test
    diff[n - len(poly_ref):] -= poly_ref
    integral = np.polyint(diff)
    return float((np.polyval(integral, hi) - np.polyval(integral, lo)) / (hi - lo))
