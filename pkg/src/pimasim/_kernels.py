"""Compiled engines used for long runs and sweeps.

Each kernel mirrors the matching engine in ``engines`` draw-for-draw (numba
Generators reproduce numpy's streams), so the two paths must agree exactly for
a given seed; the test-suite checks this. Buffers are ring buffers holding
arrival indices.
"""

import math

import numba
import numpy as np

from .metrics import HIST_BINS, Metrics, latency_bin

RIVEST_STEP = 1.0 / (math.e - 2.0)


@numba.njit(cache=True)
def _push(idx, k, buf, head, size, times, warmup):
    """Queue arrival ``idx`` at user ``k``; return 1 if a post-warm-up packet was evicted."""
    cap = buf.shape[1]
    dropped = 0
    if size[k] == cap:
        if times[buf[k, head[k]]] >= warmup:
            dropped = 1
        head[k] = (head[k] + 1) % cap
        size[k] -= 1
    buf[k, (head[k] + size[k]) % cap] = idx
    size[k] += 1
    return dropped


@numba.njit(cache=True)
def _advance(pos, until, times, owners, buf, head, size, warmup, counters):
    n = times.shape[0]
    while pos < n and times[pos] < until:
        counters[1] += _push(pos, owners[pos], buf, head, size, times, warmup)
        pos += 1
    return pos


@numba.njit(cache=True)
def _deliver(k, slot_start, buf, head, size, times, warmup, slot_duration, counters, lat, hist):
    cap = buf.shape[1]
    idx = buf[k, head[k]]
    head[k] = (head[k] + 1) % cap
    size[k] -= 1
    gen = times[idx]
    if gen >= warmup:
        counters[0] += 1
        latency = slot_start - gen
        lat[0] += latency
        hist[latency_bin(latency * slot_duration)] += 1


@numba.njit(cache=True)
def _residual(buf, head, size, times, warmup):
    cap = buf.shape[1]
    res = 0
    for k in range(buf.shape[0]):
        for j in range(size[k]):
            if times[buf[k, (head[k] + j) % cap]] >= warmup:
                res += 1
    return res


@numba.njit(cache=True)
def pima_kernel(times, owners, n_users, capacity, pia_slots, n_samples, noise_power,
                boundaries, table, perfect, skip_empty, at_boundary, end, warmup, slot_duration, rng):
    buf = np.zeros((n_users, capacity), dtype=np.int64)
    head = np.zeros(n_users, dtype=np.int64)
    size = np.zeros(n_users, dtype=np.int64)
    active = np.zeros(n_users, dtype=np.bool_)
    counters = np.zeros(2, dtype=np.int64)  # delivered, dropped
    lat = np.zeros(1)
    hist = np.zeros(HIST_BINS, dtype=np.int64)
    pos = 0
    frames = 0
    data_slots = 0
    n_meas = 0
    abs_err = 0
    slot_total = 0
    m1 = float(n_samples)

    while frames * pia_slots + data_slots < end:
        start = frames * pia_slots + data_slots
        pos = _advance(pos, start, times, owners, buf, head, size, warmup, counters)
        nu = 0
        for k in range(n_users):
            active[k] = size[k] > 0
            if active[k]:
                nu += 1
        power = rng.gamma(m1, (nu + noise_power) / m1)
        if perfect:
            nu_hat = nu
        else:
            nu_hat = np.searchsorted(boundaries, power)
        perm = rng.permutation(n_users)
        if skip_empty and nu_hat == 0:
            n_slots = 0
        else:
            n_slots = table[nu_hat]

        base = n_users // max(n_slots, 1)
        extra = n_users - base * max(n_slots, 1)
        first = 0
        for l in range(n_slots):
            load = base + 1 if l < extra else base
            slot_start = (frames + 1) * pia_slots + (data_slots + l)
            if not at_boundary:
                pos = _advance(pos, slot_start, times, owners, buf, head, size, warmup, counters)
            n_tx = 0
            sender = -1
            for j in range(first, first + load):
                k = perm[j]
                if active[k] and size[k] > 0 and times[buf[k, head[k]]] < start:
                    n_tx += 1
                    sender = k
            first += load
            if n_tx == 1:
                _deliver(sender, slot_start, buf, head, size, times, warmup, slot_duration,
                         counters, lat, hist)

        if start >= warmup:
            n_meas += 1
            abs_err += abs(nu - nu_hat)
            slot_total += n_slots
        frames += 1
        data_slots += n_slots

    pos = _advance(pos, np.inf, times, owners, buf, head, size, warmup, counters)
    residual = _residual(buf, head, size, times, warmup)
    return counters, lat[0], hist, residual, n_meas, abs_err, slot_total, frames, data_slots


@numba.njit(cache=True)
def tdma_kernel(times, owners, n_users, capacity, end, warmup, slot_duration):
    buf = np.zeros((n_users, capacity), dtype=np.int64)
    head = np.zeros(n_users, dtype=np.int64)
    size = np.zeros(n_users, dtype=np.int64)
    counters = np.zeros(2, dtype=np.int64)
    lat = np.zeros(1)
    hist = np.zeros(HIST_BINS, dtype=np.int64)
    pos = 0
    frames = 0
    while frames * n_users < end:
        for k in range(n_users):
            slot_start = frames * n_users + k
            pos = _advance(pos, slot_start, times, owners, buf, head, size, warmup, counters)
            if size[k] > 0:
                _deliver(k, slot_start, buf, head, size, times, warmup, slot_duration,
                         counters, lat, hist)
        frames += 1
    pos = _advance(pos, np.inf, times, owners, buf, head, size, warmup, counters)
    return counters, lat[0], hist, _residual(buf, head, size, times, warmup)


@numba.njit(cache=True)
def saloha_kernel(times, owners, n_users, capacity, n_theta, binary_feedback, end, warmup,
                  slot_duration, rng):
    buf = np.zeros((n_users, capacity), dtype=np.int64)
    head = np.zeros(n_users, dtype=np.int64)
    size = np.zeros(n_users, dtype=np.int64)
    counters = np.zeros(2, dtype=np.int64)
    lat = np.zeros(1)
    hist = np.zeros(HIST_BINS, dtype=np.int64)
    pos = 0
    backlog = 0.0
    g_sum = 0.0
    for slot in range(end):
        if slot >= warmup:
            g_sum += backlog
        slot_start = float(slot)
        pos = _advance(pos, slot_start, times, owners, buf, head, size, warmup, counters)
        alpha = 1.0 if backlog < 1.0 else 1.0 / backlog
        n_tx = 0
        sender = -1
        for k in range(n_users):
            if size[k] > 0 and rng.random() < alpha:
                n_tx += 1
                sender = k
        if n_tx == 1:
            _deliver(sender, slot_start, buf, head, size, times, warmup, slot_duration,
                     counters, lat, hist)
        if binary_feedback:
            grow = n_tx != 1
        else:
            grow = n_tx > 1
        if grow:
            backlog = backlog + n_theta + RIVEST_STEP
        else:
            backlog = max(n_theta, backlog + n_theta - 1.0)
    pos = _advance(pos, np.inf, times, owners, buf, head, size, warmup, counters)
    return counters, lat[0], hist, _residual(buf, head, size, times, warmup), g_sum


def run_fast(config, times, owners, rng, regions=None, table=None):
    """Compiled counterpart of ``engines.run_protocol`` on pre-drawn streams."""
    K, end, warm = config.n_users, config.end_slot, config.warmup_slots
    times = np.ascontiguousarray(times, dtype=np.float64)
    owners = np.ascontiguousarray(owners, dtype=np.int64)
    extras = {}
    if config.protocol == "pima":
        (counters, lat, hist, residual, n_meas, abs_err, slot_total,
         _, _) = pima_kernel(times, owners, K, config.buffer, config.pia_slots, config.n_samples,
                             config.noise_power, regions.boundaries, table.as_array(),
                             config.perfect_estimation, config.skip_empty_frames,
                             config.pima_arrivals == "frame", end, warm,
                             config.slot_duration, rng)
        if n_meas:
            extras = {"mean_abs_count_error": abs_err / n_meas, "mean_data_slots": slot_total / n_meas}
    elif config.protocol == "tdma":
        counters, lat, hist, residual = tdma_kernel(times, owners, K, config.buffer, end, warm,
                                                    config.slot_duration)
    else:
        n_theta = K * -math.expm1(-config.per_user_rate)
        counters, lat, hist, residual, g_sum = saloha_kernel(
            times, owners, K, config.buffer, n_theta, config.backoff_rule == "binary", end, warm,
            config.slot_duration, rng)
        if config.horizon_slots:
            extras = {"mean_backlog_estimate": g_sum / config.horizon_slots}

    m = Metrics(config.protocol, config.slot_duration, extras=extras)
    m.generated = int(np.count_nonzero(times >= warm))
    m.delivered, m.dropped = int(counters[0]), int(counters[1])
    m.residual = int(residual)
    m.latency_sum_slots = float(lat)
    m.latency_hist = hist
    return m
