"""Per-run counters: packet accounting, latency and protocol extras."""

import math
from dataclasses import dataclass, field

import numba
import numpy as np

# 10 bins per decade from 1 us to 1 s; out-of-range latencies go to the end bins
HIST_DECADE_BINS = 10
HIST_MIN_EXP = -6
HIST_BINS = 6 * HIST_DECADE_BINS
HIST_EDGES = 10.0 ** (HIST_MIN_EXP + np.arange(HIST_BINS + 1) / HIST_DECADE_BINS)


@numba.njit(cache=True)
def latency_bin(latency_s):
    if latency_s <= 0.0:
        return 0
    idx = int(math.floor((math.log10(latency_s) - HIST_MIN_EXP) * HIST_DECADE_BINS))
    return min(max(idx, 0), HIST_BINS - 1)


@dataclass
class Metrics:
    """Counts cover packets generated after the warm-up only."""

    protocol: str
    slot_duration: float
    generated: int = 0
    delivered: int = 0
    dropped: int = 0
    residual: int = 0
    latency_sum_slots: float = 0.0
    latency_hist: np.ndarray = field(default_factory=lambda: np.zeros(HIST_BINS, dtype=np.int64))
    extras: dict = field(default_factory=dict)

    @property
    def drop_probability(self):
        return self.dropped / self.generated if self.generated else None

    @property
    def mean_latency(self):
        """Mean delivery latency in seconds, ``None`` without deliveries."""
        if not self.delivered:
            return None
        return self.latency_sum_slots / self.delivered * self.slot_duration

    @property
    def conserved(self):
        return self.generated == self.delivered + self.dropped + self.residual

    def same_counts(self, other):
        return (self.generated, self.delivered, self.dropped, self.residual,
                self.latency_sum_slots) == (other.generated, other.delivered, other.dropped,
                                            other.residual, other.latency_sum_slots) \
            and np.array_equal(self.latency_hist, other.latency_hist)

    def summary(self):
        drop = self.drop_probability
        lat = self.mean_latency
        parts = [f"{self.protocol}: generated={self.generated} delivered={self.delivered}",
                 f"dropped={self.dropped} residual={self.residual}",
                 "drop_prob=" + ("n/a" if drop is None else f"{drop:.4g}"),
                 "mean_latency=" + ("n/a" if lat is None else f"{lat:.4g} s")]
        parts += [f"{k}={v:.4g}" for k, v in self.extras.items()]
        return " ".join(parts)
