"""Poisson packet arrivals and bounded drop-oldest user buffers."""

from collections import deque
from dataclasses import dataclass

import numpy as np

from .validation import ConfigError, check_int, check_real, check_rng


@dataclass(frozen=True)
class Packet:
    owner: int
    gen_time: float  # slots since simulation start
    seq: int = 0


class UserBuffer:
    """FIFO of at most ``capacity`` packets; a push into a full buffer evicts the oldest."""

    def __init__(self, capacity):
        self.capacity = check_int(capacity, "capacity", min_value=1)
        self.queue = deque()
        self.dropped = 0

    def __len__(self):
        return len(self.queue)

    def __repr__(self):
        return f"UserBuffer(capacity={self.capacity}, size={len(self.queue)}, dropped={self.dropped})"

    @property
    def head(self):
        return self.queue[0] if self.queue else None

    def push(self, pkt):
        """Append ``pkt`` and return the evicted packet, if any."""
        evicted = None
        if len(self.queue) == self.capacity:
            evicted = self.queue.popleft()
            self.dropped += 1
        self.queue.append(pkt)
        return evicted

    def pop_head(self):
        if not self.queue:
            raise IndexError("pop from an empty user buffer")
        return self.queue.popleft()

    @property
    def active(self):
        return len(self.queue) > 0


def buffer_push(buffer, pkt):
    return buffer.push(pkt)


def buffer_pop_head(buffer):
    return buffer.pop_head()


def is_active(buffer):
    return buffer.active


@dataclass(frozen=True)
class TrafficConfig:
    """Per-user Poisson rate ``per_user_rate`` (packets/slot) for ``n_users`` users."""

    n_users: int
    per_user_rate: float
    horizon: float

    def __post_init__(self):
        check_int(self.n_users, "n_users", min_value=1)
        check_real(self.per_user_rate, "per_user_rate", min_value=0.0)
        check_real(self.horizon, "horizon", min_value=0.0, strict=True)

    @classmethod
    def from_total_rate(cls, total_rate, n_users, horizon):
        total_rate = check_real(total_rate, "lambda_total", min_value=0.0)
        return cls(n_users, total_rate / n_users, horizon)

    @property
    def total_rate(self):
        return self.n_users * self.per_user_rate


def generate_arrivals(rate, duration, rng=None):
    """Sorted arrival times of a homogeneous Poisson process on ``[0, duration)``.

    The count is drawn first and the epochs are then placed uniformly, which
    gives exactly the Poisson sample path law.
    """
    rate = check_real(rate, "rate", min_value=0.0)
    duration = check_real(duration, "duration", min_value=0.0, strict=True)
    rng = check_rng(rng)
    n = rng.poisson(rate * duration)
    times = rng.uniform(0.0, duration, size=n)
    times.sort()
    return times


def user_streams(seed_seq, n_users):
    """One independent Generator per user, spawned from ``seed_seq``."""
    return [np.random.default_rng(child) for child in seed_seq.spawn(n_users)]


def generate_traffic(per_user_rate, n_users, duration, seed_seq):
    """Merged arrivals of ``n_users`` independent Poisson sources.

    Returns ``(times, owners)`` sorted by time. User ``k`` draws from the
    ``k``-th child of ``seed_seq``, so adding users never perturbs the
    existing streams.
    """
    if duration <= 0:
        raise ConfigError("duration", f"must be > 0, got {duration}")
    parts = [generate_arrivals(per_user_rate, duration, rng)
             for rng in user_streams(seed_seq, n_users)]
    times = np.concatenate(parts) if parts else np.empty(0)
    owners = np.concatenate([np.full(len(p), k, dtype=np.int64) for k, p in enumerate(parts)]) \
        if parts else np.empty(0, dtype=np.int64)
    order = np.argsort(times, kind="stable")
    return times[order], owners[order]
