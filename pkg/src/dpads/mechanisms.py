"""Differentially-private selection primitives.

Two families are implemented:

* Randomized response (RR): the private argmax is returned with boosted
  probability, any other candidate uniformly otherwise (epsilon-greedy).
* Select noisy max (SNM): i.i.d. noise with rate ``epsilon / (2 * delta)`` is
  added to every score and the noisy argmax is returned. Gumbel noise gives the
  exponential mechanism, which has a closed-form selection distribution.

Every sampling function takes an explicit :class:`numpy.random.Generator`;
nothing here holds global state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, InvalidInputError, InvalidParameterError

# Rows per block when sampling many SNM trials at once.
_CHUNK_ROWS = 1 << 16


class Mechanism(str, Enum):
    RR = "rr"
    SNM = "snm"


class Noise(str, Enum):
    GUMBEL = "gumbel"
    EXPONENTIAL = "exponential"
    LAPLACE = "laplace"


class Bounding(str, Enum):
    NONE = "none"
    SCALED = "scaled"
    CLIPPED = "clipped"


@dataclass(frozen=True)
class MechanismConfig:
    """Which randomized selection to run and with what privacy parameters.

    ``delta`` is the score sensitivity. Scaled bounding maps scores into
    [0, 1], so ``delta`` is forced to 1 there. RR ignores noise, delta and
    bounding; they are normalized so equal RR configs compare equal.
    """

    kind: Mechanism = Mechanism.RR
    epsilon: float = 1.0
    noise: Noise = Noise.GUMBEL
    delta: float = 1.0
    bounding: Bounding = Bounding.NONE

    def __post_init__(self):
        try:
            kind = Mechanism(self.kind)
            noise = Noise(self.noise)
            bounding = Bounding(self.bounding)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        epsilon = float(self.epsilon)
        delta = float(self.delta)
        if math.isnan(epsilon) or epsilon < 0:
            raise InvalidParameterError(f"epsilon must be >= 0, got {self.epsilon}")
        if kind is Mechanism.SNM and epsilon == 0:
            raise InvalidParameterError("SNM requires epsilon > 0 (noise rate 0 is undefined)")
        if kind is Mechanism.RR:
            noise, delta, bounding = Noise.GUMBEL, 1.0, Bounding.NONE
        elif bounding is Bounding.SCALED:
            delta = 1.0
        if not (delta > 0 and math.isfinite(delta)):
            raise InvalidParameterError(f"delta must be a positive finite number, got {self.delta}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "noise", noise)
        object.__setattr__(self, "bounding", bounding)
        object.__setattr__(self, "epsilon", epsilon)
        object.__setattr__(self, "delta", delta)

    @property
    def rate(self) -> float:
        """Noise rate ``epsilon / (2 * delta)``; the noise scale is its inverse."""
        return self.epsilon / (2.0 * self.delta)

    @property
    def has_closed_form(self) -> bool:
        return self.kind is Mechanism.RR or self.noise is Noise.GUMBEL

    def label(self) -> str:
        if self.kind is Mechanism.RR:
            return "rr"
        return f"snm-{self.noise.value}-{self.bounding.value}"


@dataclass(frozen=True)
class SelectionDistribution:
    """Probability of selecting each candidate.

    ``trials`` is ``None`` for a closed-form distribution and the number of
    Monte Carlo draws for an estimated one.
    """

    probabilities: np.ndarray
    trials: Optional[int] = None

    @property
    def exact(self) -> bool:
        return self.trials is None

    def __len__(self):
        return len(self.probabilities)

    def __getitem__(self, i):
        return self.probabilities[i]


def _as_scores(scores, name="scores") -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(s)):
        raise InvalidInputError(f"{name} must be finite")
    return s


def _argmax(s: np.ndarray) -> int:
    # np.argmax returns the first maximum, i.e. ties go to the lowest index.
    return int(np.argmax(s))


def scale_scores(scores: Sequence[float]) -> np.ndarray:
    """Min-max normalize scores into [0, 1]; a constant vector maps to zeros."""
    s = _as_scores(scores)
    lo, hi = s.min(), s.max()
    if hi == lo:
        return np.zeros_like(s)
    return (s - lo) / (hi - lo)


def clip_scores(private: Sequence[float], public: Sequence[float], delta: float) -> np.ndarray:
    """Clamp each private score to within ``delta / 2`` of its public score."""
    priv = _as_scores(private, "private")
    pub = _as_scores(public, "public")
    if priv.shape != pub.shape:
        raise InvalidInputError(
            f"private and public scores differ in length ({priv.size} vs {pub.size})"
        )
    if not delta > 0:
        raise InvalidParameterError(f"delta must be > 0, got {delta}")
    half = delta / 2.0
    return np.maximum(np.minimum(pub + half, priv), pub - half)


def bound_scores(config: MechanismConfig, scores, public=None) -> np.ndarray:
    """Apply the configured sensitivity bounding to private scores."""
    if config.bounding is Bounding.SCALED:
        return scale_scores(scores)
    if config.bounding is Bounding.CLIPPED:
        if public is None:
            raise ConfigurationError("clipped bounding needs public scores")
        return clip_scores(scores, public, config.delta)
    return _as_scores(scores)


def rr_distribution(scores: Sequence[float], epsilon: float) -> SelectionDistribution:
    s = _as_scores(scores)
    if math.isnan(epsilon) or epsilon < 0:
        raise InvalidParameterError(f"epsilon must be >= 0, got {epsilon}")
    a = s.size
    # Written with e^-eps so large epsilon does not overflow.
    tail = math.exp(-epsilon)
    norm = 1.0 + (a - 1) * tail
    p = np.full(a, tail / norm)
    p[_argmax(s)] = 1.0 / norm
    return SelectionDistribution(p)


def exp_mech_distribution(scores: Sequence[float], epsilon: float, delta: float) -> SelectionDistribution:
    """Softmax of ``scores * epsilon / (2 * delta)``, the Gumbel-SNM distribution."""
    s = _as_scores(scores)
    if not epsilon > 0:
        raise InvalidParameterError(f"epsilon must be > 0, got {epsilon}")
    if not delta > 0:
        raise InvalidParameterError(f"delta must be > 0, got {delta}")
    z = s * (epsilon / (2.0 * delta))
    w = np.exp(z - z.max())
    return SelectionDistribution(w / w.sum())


def sample_noise(noise: Noise, rate: float, rng: np.random.Generator, size=None):
    """Draw noise with the given rate (scale ``1 / rate``)."""
    if not (rate > 0 and math.isfinite(rate)):
        raise InvalidParameterError(f"noise rate must be positive and finite, got {rate}")
    scale = 1.0 / rate
    noise = Noise(noise)
    if noise is Noise.GUMBEL:
        return rng.gumbel(0.0, scale, size)
    if noise is Noise.EXPONENTIAL:
        return rng.exponential(scale, size)
    return rng.laplace(0.0, scale, size)


def snm_select(scores, config: MechanismConfig, rng: np.random.Generator) -> int:
    """Index of the maximum noisy score. ``scores`` must already be bounded."""
    if config.kind is not Mechanism.SNM:
        raise ConfigurationError("snm_select needs an SNM config")
    s = _as_scores(scores)
    return _argmax(s + sample_noise(config.noise, config.rate, rng, s.size))


def _rr_keep(a: int, epsilon: float) -> float:
    """Probability of reporting the argmax outright before the uniform fallback."""
    tail = math.exp(-epsilon)
    return (1.0 - tail) / (1.0 + (a - 1) * tail)


def rr_select(scores, epsilon: float, rng: np.random.Generator) -> int:
    """Keep the argmax with probability ``keep``, otherwise answer uniformly."""
    s = _as_scores(scores)
    if s.size == 1:
        return 0
    if rng.random() < _rr_keep(s.size, epsilon):
        return _argmax(s)
    return int(rng.integers(s.size))


def select(config: MechanismConfig, scores, rng: np.random.Generator, public=None) -> int:
    """Bound the scores per ``config`` and draw one selection."""
    bounded = bound_scores(config, scores, public)
    if config.kind is Mechanism.RR:
        return rr_select(bounded, config.epsilon, rng)
    return snm_select(bounded, config, rng)


def exact_distribution(config: MechanismConfig, scores, public=None) -> Optional[SelectionDistribution]:
    """Closed-form selection distribution, or ``None`` when none is known."""
    bounded = bound_scores(config, scores, public)
    if config.kind is Mechanism.RR:
        return rr_distribution(bounded, config.epsilon)
    if config.noise is Noise.GUMBEL:
        return exp_mech_distribution(bounded, config.epsilon, config.delta)
    return None


def estimate_distribution(
    config: MechanismConfig,
    scores,
    public=None,
    trials: int = 100_000,
    rng: Optional[np.random.Generator] = None,
) -> SelectionDistribution:
    """Monte Carlo estimate of the configured mechanism's selection frequencies."""
    if trials < 1:
        raise InvalidParameterError(f"trials must be >= 1, got {trials}")
    if rng is None:
        rng = np.random.default_rng()
    bounded = bound_scores(config, scores, public)
    a = bounded.size
    if config.kind is Mechanism.RR:
        keep = rng.random(trials) < _rr_keep(a, config.epsilon)
        picks = np.where(keep, _argmax(bounded), rng.integers(a, size=trials))
        counts = np.bincount(picks, minlength=a)
    else:
        counts = np.zeros(a, dtype=np.int64)
        remaining = trials
        while remaining:
            rows = min(remaining, _CHUNK_ROWS)
            noisy = bounded + sample_noise(config.noise, config.rate, rng, (rows, a))
            counts += np.bincount(noisy.argmax(axis=1), minlength=a)
            remaining -= rows
    return SelectionDistribution(counts / trials, trials=trials)


def selection_distribution(
    config: MechanismConfig,
    scores,
    public=None,
    rng: Optional[np.random.Generator] = None,
    trials: int = 100_000,
) -> SelectionDistribution:
    """Exact distribution where a closed form exists, Monte Carlo otherwise."""
    exact = exact_distribution(config, scores, public)
    if exact is not None:
        return exact
    if len(np.atleast_1d(scores)) == 1:
        return SelectionDistribution(np.ones(1))
    return estimate_distribution(config, scores, public, trials, rng)


@dataclass(frozen=True)
class DPRatioCheck:
    """Result of comparing selection distributions on two neighbouring inputs."""

    ratio: float
    slack: float
    index: Optional[int]
    dist_a: SelectionDistribution
    dist_b: SelectionDistribution

    def within(self, epsilon: float) -> bool:
        return self.ratio <= epsilon + self.slack


def _log_sd(p: float, trials: Optional[int]) -> float:
    # Delta-method standard deviation of log(p_hat).
    if trials is None:
        return 0.0
    return math.sqrt((1.0 - p) / (p * trials))


def dp_ratio_check(
    config: MechanismConfig,
    scores_a,
    scores_b,
    public=None,
    trials: int = 1_000_000,
    rng: Optional[np.random.Generator] = None,
    method: str = "auto",
    z: float = 3.0,
) -> DPRatioCheck:
    """Estimate ``max_i |log(P_a(i) / P_b(i))|`` with a ``z``-sigma Monte Carlo slack.

    ``method`` is ``"auto"`` (closed form when available), ``"exact"`` or
    ``"monte_carlo"``. An index with zero probability on exactly one side gives
    an infinite ratio.
    """
    a = _as_scores(scores_a, "scores_a")
    b = _as_scores(scores_b, "scores_b")
    if a.shape != b.shape:
        raise InvalidInputError("neighbouring score vectors must have equal length")
    if method not in ("auto", "exact", "monte_carlo"):
        raise ConfigurationError(f"unknown method {method!r}")
    if rng is None:
        rng = np.random.default_rng()

    def dist(s):
        if method != "monte_carlo":
            d = exact_distribution(config, s, public)
            if d is not None:
                return d
            if method == "exact":
                raise ConfigurationError(f"no closed form for {config.label()}")
        return estimate_distribution(config, s, public, trials, rng)

    da, db = dist(a), dist(b)
    pa, pb = da.probabilities, db.probabilities
    if np.any((pa > 0) != (pb > 0)):
        return DPRatioCheck(math.inf, 0.0, int(np.argmax((pa > 0) != (pb > 0))), da, db)
    both = (pa > 0) & (pb > 0)
    logs = np.full(pa.size, -1.0)
    logs[both] = np.abs(np.log(pa[both]) - np.log(pb[both]))
    idx = int(np.argmax(logs))
    slack = z * math.hypot(_log_sd(pa[idx], da.trials), _log_sd(pb[idx], db.trials))
    return DPRatioCheck(float(logs[idx]), slack, idx, da, db)


def verify_dp_ratio(config, scores_a, scores_b, public=None, trials=1_000_000, rng=None, method="auto") -> float:
    """Max absolute log probability ratio between two neighbouring inputs."""
    return dp_ratio_check(config, scores_a, scores_b, public, trials, rng, method).ratio


def expected_value(dist, values) -> float:
    p = dist.probabilities if isinstance(dist, SelectionDistribution) else np.asarray(dist, dtype=float)
    v = np.asarray(values, dtype=float)
    if p.shape != v.shape:
        raise InvalidInputError(f"distribution and values differ in length ({p.size} vs {v.size})")
    return math.fsum(p * v)
