"""Slot-accurate reference engines for PIMA, TDMA and stabilised slotted ALOHA.

These engines work on ``Packet`` objects and emit one ``DeliveryEvent`` per
delivered or dropped packet, which keeps them easy to trace. ``_kernels``
holds compiled twins that consume the random streams in the same order and
must reproduce these results exactly; the sweeps use the twins.

Time is measured in slots from the simulation start. A frame clock is kept as
``frames * pia_slots + data_slots`` so it never accumulates rounding drift.
"""

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .estimator import ActivityPrior, estimate_active, map_boundaries, practical_thresholds, sample_received_power
from .metrics import Metrics, latency_bin
from .scheduler import build_schedule, build_table
from .traffic import Packet, UserBuffer, generate_traffic
from .validation import ConfigError

IDLE, SUCCESS, COLLISION = 0, 1, 2
RIVEST_STEP = 1.0 / (math.e - 2.0)


@dataclass(frozen=True)
class DeliveryEvent:
    packet: Packet
    time: float  # slots; transmission start for deliveries, eviction instant for drops
    outcome: str  # "delivered" | "dropped"

    @property
    def latency(self):
        return self.time - self.packet.gen_time


@dataclass(frozen=True)
class FrameTrace:
    frame: int
    start: float
    active: int
    estimate: int
    slots: int
    successes: int
    collisions: int

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


class ArrivalFeed:
    """Pushes pre-drawn arrivals into the user buffers as the clock passes them."""

    def __init__(self, times, owners, buffers):
        self.times = times
        self.owners = owners
        self.buffers = buffers
        self.pos = 0
        self._seq = [0] * len(buffers)

    def advance(self, until, events):
        """Push every arrival strictly before ``until``; evictions become drop events."""
        times, owners = self.times, self.owners
        while self.pos < len(times) and times[self.pos] < until:
            k = int(owners[self.pos])
            pkt = Packet(k, float(times[self.pos]), self._seq[k])
            self._seq[k] += 1
            evicted = self.buffers[k].push(pkt)
            if evicted is not None:
                events.append(DeliveryEvent(evicted, pkt.gen_time, "dropped"))
            self.pos += 1

    @property
    def exhausted(self):
        return self.pos >= len(self.times)


class PimaEngine:
    """Frames made of an activity-sensing interval followed by scheduled data slots.

    Only users holding a packet at the frame start take part in the frame, and
    they may only send a packet that was already queued at that instant. With
    ``queue_at_boundary`` (the default) packets generated during a frame reach
    the buffer, and may evict, only when the next frame starts; otherwise they
    are queued as they arrive but still wait for the next frame.
    """

    def __init__(self, n_users, capacity, model, pia_slots, regions=None, table=None,
                 perfect_estimation=False, skip_empty=False, queue_at_boundary=True):
        self.n_users = n_users
        self.buffers = [UserBuffer(capacity) for _ in range(n_users)]
        self.model = model
        self.pia_slots = pia_slots
        self.regions = regions if regions is not None else practical_thresholds(n_users, model.noise_power)
        self.table = table if table is not None else build_table(n_users)
        self.perfect_estimation = perfect_estimation
        self.skip_empty = skip_empty
        self.queue_at_boundary = queue_at_boundary
        self.frames = 0
        self.data_slots = 0

    @property
    def clock(self):
        return self.frames * self.pia_slots + self.data_slots

    def run_frame(self, feed, rng):
        events = []
        start = self.clock
        feed.advance(start, events)
        active = [b.active for b in self.buffers]
        nu = sum(active)

        power = sample_received_power(nu, self.model, rng)
        nu_hat = nu if self.perfect_estimation else estimate_active(power, self.regions)
        schedule = build_schedule(nu_hat, self.table, rng, skip_empty=self.skip_empty)

        successes = collisions = 0
        for slot in range(1, schedule.n_slots + 1):
            slot_start = (self.frames + 1) * self.pia_slots + (self.data_slots + slot - 1)
            if not self.queue_at_boundary:
                feed.advance(slot_start, events)
            senders = [k for k in schedule.users_in(slot)
                       if active[k] and self.buffers[k].active and self.buffers[k].head.gen_time < start]
            if len(senders) == 1:
                pkt = self.buffers[senders[0]].pop_head()
                events.append(DeliveryEvent(pkt, slot_start, "delivered"))
                successes += 1
            elif len(senders) > 1:
                collisions += 1

        trace = FrameTrace(self.frames, start, nu, int(nu_hat), schedule.n_slots, successes, collisions)
        self.frames += 1
        self.data_slots += schedule.n_slots
        return events, trace


class TdmaEngine:
    """Fixed frames of ``n_users`` slots; user ``k`` owns slot ``k``."""

    def __init__(self, n_users, capacity):
        self.n_users = n_users
        self.buffers = [UserBuffer(capacity) for _ in range(n_users)]
        self.frames = 0

    @property
    def clock(self):
        return self.frames * self.n_users

    def run_frame(self, feed):
        events = []
        base = self.clock
        for k, buf in enumerate(self.buffers):
            slot_start = base + k
            feed.advance(slot_start, events)
            if buf.active:
                events.append(DeliveryEvent(buf.pop_head(), slot_start, "delivered"))
        self.frames += 1
        return events


def update_backlog(backlog, n_theta, outcome, rule="rivest"):
    """Pseudo-Bayesian backlog estimate for the next slot.

    ``rule="rivest"`` treats idle slots like successes. ``rule="binary"`` only
    distinguishes success from everything else.
    """
    if rule == "binary":
        grow = outcome != SUCCESS
    elif rule == "rivest":
        grow = outcome == COLLISION
    else:
        raise ValueError(f"unknown backoff rule {rule!r}")
    if grow:
        return backlog + n_theta + RIVEST_STEP
    return max(n_theta, backlog + n_theta - 1.0)


def transmit_probability(backlog):
    return 1.0 if backlog < 1.0 else 1.0 / backlog


class SalohaEngine:
    """Slotted ALOHA where every queued user sends with probability ``min(1, 1/G)``."""

    def __init__(self, n_users, capacity, per_user_rate, rule="rivest"):
        self.n_users = n_users
        self.buffers = [UserBuffer(capacity) for _ in range(n_users)]
        self.n_theta = n_users * -math.expm1(-per_user_rate)
        self.rule = rule
        self.backlog = 0.0
        self.slot = 0

    def step(self, feed, rng):
        events = []
        slot_start = float(self.slot)
        feed.advance(slot_start, events)
        alpha = transmit_probability(self.backlog)
        senders = [k for k, buf in enumerate(self.buffers) if buf.active and rng.random() < alpha]
        if len(senders) == 1:
            events.append(DeliveryEvent(self.buffers[senders[0]].pop_head(), slot_start, "delivered"))
            outcome = SUCCESS
        else:
            outcome = IDLE if not senders else COLLISION
        self.backlog = update_backlog(self.backlog, self.n_theta, outcome, self.rule)
        self.slot += 1
        return events, outcome


def decision_regions(config):
    if config.prior is None:
        return practical_thresholds(config.n_users, config.noise_power)
    return map_boundaries(ActivityPrior(np.asarray(config.prior)), config.n_users,
                          config.noise_power, config.n_samples)


def simulation_streams(config):
    """Arrivals and protocol Generator for ``config.seed``.

    The root seed sequence spawns a traffic branch (one child per user) and a
    protocol branch, so the same seed gives the same traffic to every protocol.
    """
    traffic_ss, protocol_ss = np.random.SeedSequence(config.seed).spawn(2)
    end = config.end_slot
    if end > 0:
        times, owners = generate_traffic(config.per_user_rate, config.n_users, end, traffic_ss)
    else:
        times, owners = np.empty(0), np.empty(0, dtype=np.int64)
    return times, owners, np.random.default_rng(protocol_ss)


def run_protocol(config, trace=None):
    """Reference simulation of one configuration.

    ``trace``, if given, is a callable receiving one ``FrameTrace`` per PIMA frame.
    """
    times, owners, rng = simulation_streams(config)
    K, end = config.n_users, config.end_slot
    events = []
    extras = {}

    if config.protocol == "pima":
        engine = PimaEngine(K, config.buffer, config.power_model, config.pia_slots,
                            regions=decision_regions(config),
                            perfect_estimation=config.perfect_estimation,
                            skip_empty=config.skip_empty_frames,
                            queue_at_boundary=config.pima_arrivals == "frame")
        feed = ArrivalFeed(times, owners, engine.buffers)
        n_frames = abs_err = slots = 0
        while engine.clock < end:
            ev, tr = engine.run_frame(feed, rng)
            events += ev
            if tr.start >= config.warmup_slots:
                n_frames += 1
                abs_err += abs(tr.active - tr.estimate)
                slots += tr.slots
            if trace is not None:
                trace(tr)
        if n_frames:
            extras = {"mean_abs_count_error": abs_err / n_frames, "mean_data_slots": slots / n_frames}
    elif config.protocol == "tdma":
        engine = TdmaEngine(K, config.buffer)
        feed = ArrivalFeed(times, owners, engine.buffers)
        while engine.clock < end:
            events += engine.run_frame(feed)
    elif config.protocol == "saloha":
        engine = SalohaEngine(K, config.buffer, config.per_user_rate, config.backoff_rule)
        feed = ArrivalFeed(times, owners, engine.buffers)
        g_sum = 0.0
        while engine.slot < end:
            if engine.slot >= config.warmup_slots:
                g_sum += engine.backlog
            ev, _ = engine.step(feed, rng)
            events += ev
        if config.horizon_slots:
            extras = {"mean_backlog_estimate": g_sum / config.horizon_slots}
    else:
        raise ConfigError("protocol", f"unknown protocol {config.protocol!r}")

    feed.advance(math.inf, events)
    return collect_metrics(config, times, engine.buffers, events, extras)


def collect_metrics(config, times, buffers, events, extras=None):
    warm = config.warmup_slots
    m = Metrics(config.protocol, config.slot_duration, extras=extras or {})
    m.generated = int(np.count_nonzero(times >= warm))
    for ev in events:
        if ev.packet.gen_time < warm:
            continue
        if ev.outcome == "dropped":
            m.dropped += 1
        else:
            m.delivered += 1
            lat = ev.time - ev.packet.gen_time
            m.latency_sum_slots += lat
            m.latency_hist[latency_bin(lat * config.slot_duration)] += 1
    m.residual = sum(1 for b in buffers for p in b.queue if p.gen_time >= warm)
    return m
