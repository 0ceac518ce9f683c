"""Active-user counting from the aggregate received power of activity signals.

Every active user sends ``M1`` unit-power complex Gaussian symbols; the base
station averages the received power, which is Erlang distributed with shape
``M1`` and mean ``nu + noise``, and maps it to a count through a set of
decision regions.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, column_or_1d

from .validation import (ConfigError, check_int, check_probability, check_real,
                         check_rng)

PRIOR_FLOOR = 1e-12


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


def q_function(x):
    """Standard normal upper tail probability."""
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def q_inverse(p):
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("q_inverse needs probabilities in (0, 1)")
    return math.sqrt(2.0) * special.erfcinv(2.0 * p)


@dataclass(frozen=True)
class PowerModel:
    """Measurement model for the activity-sensing interval.

    ``noise_power`` is linear and relative to the unit power received from
    each active user. ``n_samples`` is M1; the interval lasts ``M1 / W``.
    """

    noise_power: float = 0.1
    n_samples: int = 4373
    bandwidth: float = 1e8

    def __post_init__(self):
        check_real(self.noise_power, "noise_power", min_value=0.0, strict=True)
        check_int(self.n_samples, "n_samples", min_value=1)
        check_real(self.bandwidth, "bandwidth", min_value=0.0, strict=True)

    @property
    def pia_duration(self):
        return self.n_samples / self.bandwidth

    @classmethod
    def from_target(cls, n_users, noise_power, pe_target, bandwidth=1e8):
        return cls(noise_power, required_samples(n_users, noise_power, pe_target), bandwidth)

    def mean(self, nu):
        return nu + self.noise_power

    def std(self, nu):
        return (nu + self.noise_power) / math.sqrt(self.n_samples)


@dataclass(frozen=True)
class ActivityPrior:
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size < 2:
            raise ConfigError("prior", "needs one entry per count 0..K (K >= 1)")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ConfigError("prior", "entries must be non-negative and sum to 1")
        object.__setattr__(self, "probs", probs)

    @property
    def n_users(self):
        return self.probs.size - 1

    @classmethod
    def uniform(cls, n_users):
        return cls(np.full(n_users + 1, 1.0 / (n_users + 1)))

    @classmethod
    def binomial(cls, n_users, p_active):
        return cls(stats.binom.pmf(np.arange(n_users + 1), n_users, p_active))

    @classmethod
    def point_mass(cls, n_users, b):
        probs = np.zeros(n_users + 1)
        probs[b] = 1.0
        return cls(probs)


class DecisionRegions:
    """Boundaries ``eps[0] < ... < eps[K-1]``; region ``b`` is ``[eps[b-1], eps[b]]``.

    A power exactly on ``eps[b]`` is assigned to region ``b``.
    """

    def __init__(self, boundaries):
        boundaries = np.asarray(boundaries, dtype=float)
        if boundaries.ndim != 1 or boundaries.size < 1:
            raise ConfigError("boundaries", "need at least one boundary")
        if np.any(np.diff(boundaries) <= 0):
            raise ConfigError("boundaries", "must be strictly increasing")
        self.boundaries = boundaries

    @property
    def n_users(self):
        return self.boundaries.size

    def interval(self, b):
        b = check_int(b, "b", min_value=0, max_value=self.n_users)
        lo = 0.0 if b == 0 else self.boundaries[b - 1]
        hi = math.inf if b == self.n_users else self.boundaries[b]
        return lo, hi

    def estimate(self, power):
        """Vectorised region lookup."""
        return np.searchsorted(self.boundaries, power, side="left")

    def __repr__(self):
        return f"DecisionRegions(K={self.n_users}, boundaries={self.boundaries!r})"


def sample_received_power(nu, model, rng=None, size=None, symbol_level=False):
    """Draw the averaged received power for ``nu`` active users.

    By default the Erlang law is sampled directly. ``symbol_level`` instead
    synthesises the ``M1`` noisy superposed symbols and averages their power,
    which is slow and only meant for validating the shortcut.
    """
    nu = check_int(nu, "nu", min_value=0)
    rng = check_rng(rng)
    m1 = model.n_samples
    if not symbol_level:
        return rng.gamma(m1, (nu + model.noise_power) / m1, size=size)

    n_draws = 1 if size is None else int(np.prod(size))
    out = np.empty(n_draws)
    for i in range(n_draws):
        noise = math.sqrt(model.noise_power / 2) * (rng.standard_normal(m1) + 1j * rng.standard_normal(m1))
        users = math.sqrt(0.5) * (rng.standard_normal((nu, m1)) + 1j * rng.standard_normal((nu, m1)))
        out[i] = np.mean(np.abs(noise + users.sum(axis=0)) ** 2)
    return out[0] if size is None else out.reshape(size)


def practical_thresholds(n_users, noise_power):
    """Boundaries half-way between consecutive mean powers."""
    n_users = check_int(n_users, "n_users", min_value=1)
    noise_power = check_real(noise_power, "noise_power", min_value=0.0, strict=True)
    return DecisionRegions(np.arange(n_users) + noise_power + 0.5)


class DegeneratePriorError(ValueError):
    def __init__(self, b):
        self.b = b
        super().__init__(f"no decision boundary between counts {b} and {b + 1}; prior too skewed")


def gaussian_boundary(mean0, var0, p0, mean1, var1, p1, single_log=False):
    """Point in ``(mean0, mean1)`` where the prior-weighted Gaussian densities meet.

    Returns ``None`` when no crossing lies between the means, which happens for
    strongly uneven priors.

    With ``single_log`` the log term is not doubled, which corresponds to densities
    written as ``exp(-(x - m)^2 / var)``; this is the quadratic as commonly quoted
    for this detector but it is not the MAP point for true Gaussians.
    """
    p0 = max(p0, PRIOR_FLOOR)
    p1 = max(p1, PRIOR_FLOOR)
    log_ratio = math.log(p1 * math.sqrt(var0) / (p0 * math.sqrt(var1)))
    a = 1.0 / var1 - 1.0 / var0
    b = 2.0 * mean0 / var0 - 2.0 * mean1 / var1
    c = mean1 ** 2 / var1 - mean0 ** 2 / var0 - (1.0 if single_log else 2.0) * log_ratio

    if abs(a) < 1e-14 * max(1.0 / var0, 1.0 / var1):
        roots = [-c / b]
    else:
        disc = b * b - 4.0 * a * c
        if disc < 0:
            return None
        # cancellation-free pair of roots
        qq = -0.5 * (b + math.copysign(math.sqrt(disc), b))
        roots = [qq / a, c / qq] if qq != 0 else [-b / (2 * a)]
    inside = [r for r in roots if mean0 < r < mean1]
    return inside[0] if inside else None


def map_boundaries(prior, n_users, noise_power, n_samples, single_log=False):
    """MAP decision regions under the Gaussian approximation of the power law."""
    if not isinstance(prior, ActivityPrior):
        prior = ActivityPrior(prior)
    n_users = check_int(n_users, "n_users", min_value=1)
    if prior.n_users != n_users:
        raise ConfigError("prior", f"has {prior.probs.size} entries, expected {n_users + 1}")
    check_int(n_samples, "n_samples", min_value=1)
    model = PowerModel(noise_power, n_samples)

    eps = np.empty(n_users)
    for b in range(n_users):
        root = gaussian_boundary(model.mean(b), model.std(b) ** 2, prior.probs[b],
                                 model.mean(b + 1), model.std(b + 1) ** 2, prior.probs[b + 1],
                                 single_log=single_log)
        if root is None:
            raise DegeneratePriorError(b)
        eps[b] = root
    return DecisionRegions(eps)


def estimate_active(power, regions):
    if np.any(np.asarray(power) < 0):
        raise ValueError("received power cannot be negative")
    est = regions.estimate(power)
    return int(est) if np.ndim(est) == 0 else est


def conditional_error_prob(b, regions, n_samples, noise_power, exact=False):
    """Probability that ``b`` active users are mis-counted.

    The default uses the Gaussian approximation (one tail term per finite
    region edge). ``exact`` integrates the Erlang law instead.
    """
    K = regions.n_users
    b = check_int(b, "b", min_value=0, max_value=K)
    mean = b + noise_power
    lo, hi = regions.interval(b)
    if exact:
        law = stats.gamma(n_samples, scale=mean / n_samples)
        upper = law.sf(hi) if b < K else 0.0
        lower = law.cdf(lo) if b > 0 else 0.0
        return float(upper + lower)
    root_m = math.sqrt(n_samples)
    upper = q_function(root_m * (hi - mean) / mean) if b < K else 0.0
    lower = q_function(root_m * (mean - lo) / mean) if b > 0 else 0.0
    return float(upper + lower)


def approx_error_prob(b, n_samples, noise_power):
    """Two-sided approximation valid for the half-way thresholds."""
    return float(2.0 * q_function(math.sqrt(n_samples) / (2.0 * (b + noise_power))))


def average_error_prob(prior, regions, n_samples, noise_power, exact=False):
    if not isinstance(prior, ActivityPrior):
        prior = ActivityPrior(prior)
    pe = np.array([conditional_error_prob(b, regions, n_samples, noise_power, exact)
                   for b in range(regions.n_users + 1)])
    return float(pe @ prior.probs)


def required_samples(n_users, noise_power, pe_target):
    """Smallest ``M1`` meeting ``pe_target`` when all ``n_users`` are active."""
    n_users = check_int(n_users, "n_users", min_value=1)
    noise_power = check_real(noise_power, "noise_power", min_value=0.0, strict=True)
    pe_target = check_probability(pe_target, "pe_target")
    m1 = (2.0 * (n_users + noise_power) * float(q_inverse(pe_target / 2.0))) ** 2
    return max(1, math.ceil(m1))


class ActiveCountEstimator(ClassifierMixin, BaseEstimator):
    """Count classifier over measured activity powers.

    Parameters
    ----------
    n_users : int
        Largest count that can be returned.
    noise_power : float
        Linear noise power relative to one active user.
    n_samples : int
        Symbols averaged per measurement (M1).
    thresholds : {"practical", "map"}
        ``"map"`` places boundaries from a prior; the prior is ``prior`` if
        given, otherwise the label frequencies seen by ``fit``.
    prior : array-like of shape (n_users + 1,), optional
    """

    def __init__(self, n_users=20, noise_power=0.1, n_samples=4373,
                 thresholds="practical", prior=None):
        self.n_users = n_users
        self.noise_power = noise_power
        self.n_samples = n_samples
        self.thresholds = thresholds
        self.prior = prior

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_features=1)
        if X.shape[1] != 1:
            raise ValueError("expected a single power feature")
        K = check_int(self.n_users, "n_users", min_value=1)
        if self.thresholds == "practical":
            self.regions_ = practical_thresholds(K, self.noise_power)
        elif self.thresholds == "map":
            if self.prior is not None:
                prior = ActivityPrior(self.prior)
            elif y is not None:
                y = column_or_1d(y).astype(int)
                if y.min() < 0 or y.max() > K:
                    raise ValueError(f"labels must lie in 0..{K}")
                # add-one smoothing keeps unseen counts reachable
                counts = np.bincount(y, minlength=K + 1) + 1.0
                prior = ActivityPrior(counts / counts.sum())
            else:
                prior = ActivityPrior.uniform(K)
            self.prior_ = prior
            self.regions_ = map_boundaries(prior, K, self.noise_power, self.n_samples)
        else:
            raise ValueError(f"unknown thresholds mode {self.thresholds!r}")
        self.classes_ = np.arange(K + 1)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "regions_")
        X = check_array(X)
        return estimate_active(np.clip(X[:, 0], 0.0, None), self.regions_)

    def error_profile(self, exact=False):
        """Per-count misclassification probability of the fitted regions."""
        check_is_fitted(self, "regions_")
        return np.array([conditional_error_prob(b, self.regions_, self.n_samples,
                                                self.noise_power, exact)
                         for b in range(self.regions_.n_users + 1)])
