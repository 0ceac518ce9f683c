"""Simulation configuration shared by the engines, the harness and the CLI."""

import dataclasses
import logging
import warnings
from dataclasses import dataclass

from .estimator import PowerModel, required_samples
from .validation import ConfigError, check_int, check_probability, check_real

log = logging.getLogger(__name__)

PROTOCOLS = ("pima", "tdma", "saloha")
BACKOFF_RULES = ("rivest", "binary")
ARRIVAL_MODES = ("frame", "continuous")


@dataclass(frozen=True)
class SimConfig:
    """One simulation cell.

    Rates are in packets per slot, durations in slots unless suffixed. The PIA
    length is set either by ``m1`` or, when that is ``None``, by ``pe_target``.
    ``prior`` switches PIMA from half-way thresholds to MAP regions.
    ``pima_arrivals="frame"`` queues packets generated during a PIMA frame at
    the next frame boundary; ``"continuous"`` queues them on arrival.
    """

    protocol: str = "pima"
    n_users: int = 20
    lambda_total: float = 0.7
    buffer: int = 3
    slot_duration: float = 0.125e-3
    bandwidth: float = 100e6
    noise_power: float = 0.1
    pe_target: float = 0.3
    m1: int = None
    seed: int = 0
    horizon_slots: int = 1_000_000
    warmup_slots: int = 10_000
    prior: tuple = None
    perfect_estimation: bool = False
    skip_empty_frames: bool = False
    backoff_rule: str = "rivest"
    pima_arrivals: str = "frame"

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError("protocol", f"unknown protocol {self.protocol!r}, expected one of {PROTOCOLS}")
        check_int(self.n_users, "n_users", min_value=1)
        check_real(self.lambda_total, "lambda_total", min_value=0.0)
        check_int(self.buffer, "buffer", min_value=1)
        check_real(self.slot_duration, "slot_duration", min_value=0.0, strict=True)
        check_real(self.bandwidth, "bandwidth", min_value=0.0, strict=True)
        check_real(self.noise_power, "noise_power", min_value=0.0, strict=True)
        if self.m1 is None:
            check_probability(self.pe_target, "pe_target")
        else:
            check_int(self.m1, "m1", min_value=1)
        check_int(self.seed, "seed", min_value=0, max_value=2 ** 64 - 1)
        check_int(self.horizon_slots, "horizon_slots", min_value=0)
        check_int(self.warmup_slots, "warmup_slots", min_value=0)
        if self.backoff_rule not in BACKOFF_RULES:
            raise ConfigError("backoff_rule", f"expected one of {BACKOFF_RULES}")
        if self.pima_arrivals not in ARRIVAL_MODES:
            raise ConfigError("pima_arrivals", f"expected one of {ARRIVAL_MODES}")
        if self.prior is not None:
            if len(self.prior) != self.n_users + 1:
                raise ConfigError("prior", f"needs {self.n_users + 1} entries")
            object.__setattr__(self, "prior", tuple(float(p) for p in self.prior))
        if self.lambda_total > self.n_users:
            warnings.warn(f"lambda_total={self.lambda_total} exceeds one packet per user per slot",
                          stacklevel=2)

    @property
    def n_samples(self):
        if self.m1 is not None:
            return self.m1
        return required_samples(self.n_users, self.noise_power, self.pe_target)

    @property
    def power_model(self):
        return PowerModel(self.noise_power, self.n_samples, self.bandwidth)

    @property
    def pia_seconds(self):
        return self.n_samples / self.bandwidth

    @property
    def pia_slots(self):
        return self.pia_seconds / self.slot_duration

    @property
    def per_user_rate(self):
        return self.lambda_total / self.n_users

    @property
    def end_slot(self):
        return self.warmup_slots + self.horizon_slots

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def resolved(self):
        """Every field plus the derived PIA sizing, for logging and provenance."""
        out = dataclasses.asdict(self)
        out["n_samples"] = self.n_samples
        out["L1_us"] = self.pia_seconds * 1e6
        return out
