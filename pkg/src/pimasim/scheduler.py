"""Slot-count optimisation for the data-transmission sub-frame.

Given an (estimated) number of active users, the base station picks how many
slots to open and spreads all K users over them as evenly as possible, heavier
slots first. The slot count maximises the expected number of successful
(single-transmitter) slots per slot opened.
"""

from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np

from .validation import ConfigError, check_int, check_rng


def _check_counts(n_users, nu):
    n_users = check_int(n_users, "n_users", min_value=1)
    nu = check_int(nu, "nu", min_value=0, max_value=n_users)
    return n_users, nu


def success_prob(n_users, nu, users_in_slot, exact=False):
    """Probability that exactly one of the ``users_in_slot`` users is active.

    ``nu`` active users are drawn uniformly among ``n_users``. With ``exact``
    the value is returned as a ``Fraction``.
    """
    n_users, nu = _check_counts(n_users, nu)
    u = check_int(users_in_slot, "users_in_slot", min_value=1, max_value=n_users)
    if nu == 0 or n_users - u < nu - 1:
        value = Fraction(0)
    else:
        value = Fraction(u * comb(n_users - u, nu - 1), comb(n_users, nu))
    return value if exact else float(value)


@dataclass(frozen=True)
class SlotLoad:
    n_users: int
    loads: tuple

    @property
    def n_slots(self):
        return len(self.loads)


def users_per_slot(n_users, n_slots):
    n_users = check_int(n_users, "n_users", min_value=1)
    n_slots = check_int(n_slots, "n_slots", min_value=1, max_value=n_users)
    base, extra = divmod(n_users, n_slots)
    return SlotLoad(n_users, tuple(base + 1 if l < extra else base for l in range(n_slots)))


def _efficiency(K, nu, L):
    # loads take two values only: `extra` slots of base+1 users, the rest base
    base, extra = divmod(K, L)
    hits = 0
    for u, count in ((base + 1, extra), (base, L - extra)):
        if count and u and nu and K - u >= nu - 1:
            hits += count * u * comb(K - u, nu - 1)
    return Fraction(hits, L * comb(K, nu))


def frame_efficiency(n_users, nu, n_slots, exact=False):
    """Expected successful slots divided by the number of slots."""
    n_users, nu = _check_counts(n_users, nu)
    n_slots = check_int(n_slots, "n_slots", min_value=1, max_value=n_users)
    value = _efficiency(n_users, nu, n_slots)
    return value if exact else float(value)


def optimal_slots(n_users, nu, method="scan"):
    """Slot count maximising the frame efficiency, shortest frame on ties.

    ``method="scan"`` evaluates every candidate; ``"binary"`` assumes the
    efficiency is unimodal in the slot count and bisects on its forward
    difference.
    """
    n_users, nu = _check_counts(n_users, nu)
    if nu == 0:
        return 1

    def eff(L):
        return _efficiency(n_users, nu, L)

    if method == "scan":
        best, best_eff = 1, eff(1)
        for L in range(2, n_users + 1):
            e = eff(L)
            if e > best_eff:
                best, best_eff = L, e
        return best
    if method == "binary":
        lo, hi = 1, n_users
        while lo < hi:
            mid = (lo + hi) // 2
            if eff(mid) < eff(mid + 1):
                lo = mid + 1
            else:
                hi = mid
        return lo
    raise ValueError(f"unknown search method {method!r}")


@dataclass(frozen=True)
class ScheduleTable:
    """Optimal slot count and efficiency for each active count ``0..K``."""

    n_users: int
    slots: tuple
    efficiency: tuple

    def __getitem__(self, nu):
        return self.slots[nu]

    def __len__(self):
        return len(self.slots)

    def as_array(self):
        return np.asarray(self.slots, dtype=np.int64)


def build_table(n_users, method="scan"):
    n_users = check_int(n_users, "n_users", min_value=1)
    slots = tuple(optimal_slots(n_users, nu, method) for nu in range(n_users + 1))
    eff = tuple(float(_efficiency(n_users, nu, L)) for nu, L in enumerate(slots))
    return ScheduleTable(n_users, slots, eff)


@dataclass(frozen=True)
class FrameSchedule:
    """Slot index (1-based) per user; the frame has ``n_slots`` data slots."""

    slot_of: np.ndarray
    n_slots: int

    def __post_init__(self):
        if self.slot_of.size and self.slot_of.max() != self.n_slots:
            raise ConfigError("slot_of", "largest slot index must equal the slot count")

    def users_in(self, slot):
        return np.flatnonzero(self.slot_of == slot)


def deal_slots(permutation, loads):
    """Assign users to slots by dealing ``permutation`` in blocks of ``loads``."""
    slot_of = np.empty(len(permutation), dtype=np.int64)
    start = 0
    for l, u in enumerate(loads, start=1):
        slot_of[permutation[start:start + u]] = l
        start += u
    return slot_of


def build_schedule(nu_hat, table, rng=None, skip_empty=False):
    """Random balanced assignment of every user to one of ``table[nu_hat]`` slots.

    All users are scheduled since the base station cannot tell which of them
    are active. With ``skip_empty`` an estimate of zero opens no slot at all.
    """
    K = table.n_users
    nu_hat = check_int(nu_hat, "nu_hat", min_value=0, max_value=K)
    rng = check_rng(rng)
    perm = rng.permutation(K)
    if skip_empty and nu_hat == 0:
        return FrameSchedule(np.zeros(K, dtype=np.int64), 0)
    L2 = table[nu_hat]
    return FrameSchedule(deal_slots(perm, users_per_slot(K, L2).loads), L2)
