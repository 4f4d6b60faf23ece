"""Laplace-noise publication of a population proportion.

Covers the confidential bit database, the accuracy/privacy production
technology that links an ``(alpha, beta)`` accuracy target to the privacy
loss and cohort size a publisher must buy, the noisy release itself, and the
checks that certify its privacy and accuracy guarantees.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CohortSizeError, DomainError, ShapeError

#: Largest admissible failure probability, exclusive: 1 / (1 + sqrt(e)).
BETA_MAX = 1.0 / (1.0 + math.sqrt(math.e))

#: Sensitivity of the unnormalized cohort sum to one flipped bit.
SENSITIVITY = 1.0

#: Identifier recorded in run output for the bit generator behind every draw.
GENERATOR_ID = "numpy.random.PCG64"


def make_rng(seed) -> np.random.Generator:
    """Return a PCG64 generator; pass generators through unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class AccuracyTarget:
    """An ``(alpha, beta)`` accuracy requirement.

    The published proportion must lie within ``alpha`` of the truth with
    probability at least ``1 - beta``.
    """

    alpha: float
    beta: float

    @property
    def m(self) -> float:
        """The production constant ``1/2 + ln(1/beta)``."""
        return 0.5 + math.log(1.0 / self.beta)

    @property
    def accuracy(self) -> float:
        """Accuracy level ``I = 1 - alpha``."""
        return 1.0 - self.alpha


def make_accuracy_target(alpha: float, beta: float) -> AccuracyTarget:
    """Validate ``(alpha, beta)`` and build an :class:`AccuracyTarget`.

    Raises
    ------
    DomainError
        If ``alpha`` is outside ``(0, 1)`` or ``beta`` is outside
        ``(0, 1/(1+sqrt(e)))``.
    """
    alpha = float(alpha)
    beta = float(beta)
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if not (0.0 < beta < BETA_MAX):
        raise DomainError(
            f"beta must lie in (0, 1/(1+sqrt(e)) = {BETA_MAX:.6f}), got {beta}"
        )
    return AccuracyTarget(alpha, beta)


def _check_n(n) -> int:
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise DomainError(f"population size must be a positive integer, got {n}")
    return int(n)


def epsilon_for(target: AccuracyTarget, n: int) -> float:
    """Privacy loss ``m / (alpha * n)`` each cohort member must sell."""
    n = _check_n(n)
    return target.m / (target.alpha * n)


def cohort_size(target: AccuracyTarget, n: int) -> float:
    """Real-valued cohort size ``H = n - (1 - I) n / m``.

    Use :func:`required_cohort` when an integer head count is needed.
    """
    n = _check_n(n)
    return n - target.alpha * n / target.m


def required_cohort(target: AccuracyTarget, n: int) -> int:
    """Integer cohort size: the ceiling of :func:`cohort_size`.

    Rounding up keeps the accuracy guarantee intact; rounding down would not.
    """
    return math.ceil(cohort_size(target, n))


def bias_correction(target: AccuracyTarget, n: int) -> float:
    """Additive term ``alpha n / (2 m)`` that centres the unsampled mass."""
    n = _check_n(n)
    return target.alpha * n / (2.0 * target.m)


@dataclass(frozen=True)
class BitDatabase:
    """The confidential database: one bit per individual."""

    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 1 or bits.size < 1:
            raise DomainError("database needs at least one row")
        if not np.all((bits == 0) | (bits == 1)):
            raise DomainError("every database entry must be 0 or 1")
        bits = bits.astype(np.int8)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def n(self) -> int:
        return int(self.bits.size)

    @property
    def histogram(self) -> tuple[int, int]:
        """Counts of ``(zeros, ones)``."""
        ones = int(self.bits.sum())
        return (self.n - ones, ones)


def true_statistic(db: BitDatabase) -> float:
    """Exact proportion of ones in the database."""
    return float(db.bits.sum()) / db.n


def laplace_from_uniform(scale, u):
    """Inverse-CDF Laplace transform of ``u`` in ``(-1/2, 1/2)``.

    Works elementwise on arrays.
    """
    u = np.asarray(u, dtype=float)
    out = -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))
    return out if out.ndim else float(out)


def centered_uniforms(rng: np.random.Generator, size=None):
    """Draw from the open interval ``(-1/2, 1/2)``.

    ``Generator.random`` is half-open on ``[0, 1)``; the single value that
    maps to ``-1/2`` is replaced by a fresh draw.
    """
    u = rng.random(size) - 0.5
    if size is None:
        while u == -0.5:
            u = rng.random() - 0.5
        return u
    bad = u == -0.5
    while bad.any():
        u[bad] = rng.random(int(bad.sum())) - 0.5
        bad = u == -0.5
    return u


def laplace_sample(scale: float, rng: np.random.Generator) -> float:
    """One Laplace(0, ``scale``) draw from a single uniform."""
    if not scale > 0:
        raise DomainError(f"Laplace scale must be positive, got {scale}")
    return laplace_from_uniform(scale, centered_uniforms(rng))


@dataclass(frozen=True)
class PublishedStatistic:
    value: float
    epsilon: float
    cohort_size: int
    bias_correction: float
    noise_draw: float
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "epsilon": self.epsilon,
            "cohort_size": self.cohort_size,
            "bias_correction": self.bias_correction,
            "seed": self.seed,
        }


def _validate_cohort(db: BitDatabase, cohort, target: AccuracyTarget) -> np.ndarray:
    idx = np.asarray(cohort, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= db.n):
        raise IndexError(f"cohort index out of range for a database of {db.n} rows")
    if np.unique(idx).size != idx.size:
        raise IndexError("cohort indices must be distinct")
    need = required_cohort(target, db.n)
    if idx.size != need:
        raise CohortSizeError(
            f"cohort has {idx.size} members; the target needs ceil(H) = {need}"
        )
    return idx


def gr_publish(
    db: BitDatabase,
    cohort: Sequence[int],
    target: AccuracyTarget,
    rng,
    *,
    noise_draw: float | None = None,
) -> PublishedStatistic:
    """Publish the noisy proportion computed on the purchased cohort.

    ``value = (sum of cohort bits + alpha N / (2m) + Lap(1/eps)) / N``.

    Parameters
    ----------
    rng
        A ``numpy.random.Generator`` or an integer seed. Integer seeds are
        recorded on the result.
    noise_draw
        Use this value instead of drawing Laplace noise. For audits and
        degenerate tests only.
    """
    idx = _validate_cohort(db, cohort, target)
    n = db.n
    eps = epsilon_for(target, n)
    seed = None if isinstance(rng, np.random.Generator) else rng
    if noise_draw is None:
        noise_draw = laplace_sample(1.0 / eps, make_rng(rng))
    partial = float(db.bits[idx].sum())
    bias = bias_correction(target, n)
    value = (partial + bias + noise_draw) / n
    return PublishedStatistic(
        value=value,
        epsilon=eps,
        cohort_size=int(idx.size),
        bias_correction=bias,
        noise_draw=float(noise_draw),
        seed=seed,
    )


def are_neighbors(hist_a: Sequence[int], hist_b: Sequence[int]) -> bool:
    """True iff the histograms have equal l1 norm and l1 distance 2."""
    a = np.asarray(hist_a)
    b = np.asarray(hist_b)
    if a.shape != b.shape:
        raise ShapeError(f"histogram shapes differ: {a.shape} vs {b.shape}")
    return bool(np.abs(a).sum() == np.abs(b).sum() and np.abs(a - b).sum() == 2)


def dp_certificate(target: AccuracyTarget, n: int) -> float:
    """Supremum of the log density ratio of published outputs on neighbours.

    A one-bit flip moves the cohort sum by at most 1, and Laplace noise of
    scale ``1/eps`` turns a unit shift into a log-ratio of at most ``eps``.
    """
    return SENSITIVITY * epsilon_for(target, n)


def log_density_ratio(x, center_a: float, center_b: float, scale: float):
    """``log p_a(x) - log p_b(x)`` for two Laplace densities sharing ``scale``."""
    x = np.asarray(x, dtype=float)
    out = (np.abs(x - center_b) - np.abs(x - center_a)) / scale
    return out if out.ndim else float(out)


def adversarial_database(n: int, cohort: Sequence[int], unsampled_bit: int) -> BitDatabase:
    """Cohort bits all 0, every unsampled bit set to ``unsampled_bit``.

    The two settings of ``unsampled_bit`` are the extreme databases for the
    publication error.
    """
    bits = np.full(n, unsampled_bit, dtype=np.int8)
    bits[np.asarray(cohort, dtype=np.int64)] = 0
    return BitDatabase(bits)


def _failure_count(partial, bias, truth_sum, n, alpha, scale, trials, rng, suppress):
    if suppress:
        noise = np.zeros(trials)
    else:
        noise = laplace_from_uniform(scale, centered_uniforms(rng, trials))
    err = np.abs((partial + bias + noise) / n - truth_sum / n)
    return int(np.count_nonzero(err > alpha))


def empirical_accuracy(
    db: BitDatabase,
    target: AccuracyTarget,
    cohort: Sequence[int],
    trials: int,
    rng,
    *,
    jobs: int = 1,
    suppress_noise: bool = False,
) -> float:
    """Fraction of independent publications with ``|s_hat - s| > alpha``.

    With ``jobs > 1`` the trials are split into contiguous partitions, each
    fed by ``rng.spawn(jobs)[j]``; results are deterministic for a fixed
    (seed, jobs) pair.
    """
    if trials < 1:
        raise DomainError("trials must be at least 1")
    idx = _validate_cohort(db, cohort, target)
    n = db.n
    eps = epsilon_for(target, n)
    partial = float(db.bits[idx].sum())
    truth = float(db.bits.sum())
    bias = bias_correction(target, n)
    rng = make_rng(rng)
    args = (partial, bias, truth, n, target.alpha, 1.0 / eps)

    if jobs <= 1:
        fails = _failure_count(*args, trials, rng, suppress_noise)
    else:
        sizes = [trials // jobs + (j < trials % jobs) for j in range(jobs)]
        streams = rng.spawn(jobs)
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            fails = sum(
                pool.map(
                    lambda pair: _failure_count(*args, pair[0], pair[1], suppress_noise),
                    zip(sizes, streams),
                )
            )
    return fails / trials
