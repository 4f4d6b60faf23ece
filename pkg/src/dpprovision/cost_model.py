"""Continuum cost curves for data accuracy.

A population of privacy-preference parameters ``gamma`` is summarised by a
:class:`QuantileModel`. Given the model, the population measure ``N`` and the
failure probability ``beta``, accuracy ``I`` is bought either at a uniform
VCG price (the marginal participant's ``gamma``) or at personalised Lindahl
prices (each participant's own ``gamma``).

Notation used in code: ``H(I)`` is the cohort measure, ``eps(I)`` the per-person
privacy loss, ``p = H(I)/N`` the quantile level of the marginal participant.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special

from .dp_core import BETA_MAX
from .errors import DomainError, ModelError, QuadratureError, QuantileDerivativeWarning

#: Sweeps clamp accuracy into this closed interval; direct calls must be interior.
I_FLOOR = 1e-6
I_CEIL = 1.0 - 1e-6

_QUAD_RTOL = 1e-9
_QUAD_LIMIT = 200


def _ndtr(x):
    return special.ndtr(x)


def _ndtri(p):
    return special.ndtri(p)


def _npdf(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def _check_level(p):
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DomainError(f"quantile level must lie in (0, 1), got {p}")
    return arr


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


class QuantileModel:
    """Distribution of privacy preferences ``gamma`` on the positive axis.

    Subclasses supply ``cdf``, ``pdf``, ``quantile`` and the integrals the
    cost curves need. ``lower_mean(p)`` is the quantile-level partial mean
    ``int_0^p Q(u) du``, which equals ``partial_expectation(quantile(p))``
    whenever the distribution has no atoms.
    """

    kind: str = ""
    degenerate: bool = False

    def cdf(self, x):
        raise NotImplementedError

    def pdf(self, x):
        raise NotImplementedError

    def quantile(self, p):
        raise NotImplementedError

    def quantile_derivative(self, p):
        """``Q'(p) = 1 / f(Q(p))``."""
        p = _check_level(p)
        return _scalar(1.0 / self.pdf(self.quantile(p)))

    def partial_expectation(self, q: float) -> float:
        raise NotImplementedError

    def lower_mean(self, p: float) -> float:
        return self.partial_expectation(self.quantile(p))

    def cdf_integral(self, q: float) -> float:
        """``int_0^q F(g) dg`` by adaptive quadrature."""
        if q <= 0:
            return 0.0
        val, abserr = integrate.quad(
            self.cdf, 0.0, q, epsabs=0.0, epsrel=1e-12, limit=_QUAD_LIMIT,
            points=[min(self.quantile(0.5), q / 2)],
        )
        if abserr > _QUAD_RTOL * abs(val) + 1e-300:
            raise QuadratureError(f"cdf integral to {q} reached only {abserr:.2e} abs error")
        return float(val)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.quantile(rng.random(size).clip(1e-300, None))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class LogNormal(QuantileModel):
    mu: float = 0.0
    sigma: float = 1.0

    kind = "lognormal"

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma) and math.isfinite(self.mu)):
            raise ModelError(f"lognormal needs finite mu and sigma > 0, got {self.mu}, {self.sigma}")

    @property
    def mean(self) -> float:
        return math.exp(self.mu + 0.5 * self.sigma**2)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(np.where(x > 0, x, 1.0)) - self.mu) / self.sigma
        return _scalar(np.where(x > 0, _ndtr(z), 0.0))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        safe = np.where(x > 0, x, 1.0)
        z = (np.log(safe) - self.mu) / self.sigma
        return _scalar(np.where(x > 0, _npdf(z) / (self.sigma * safe), 0.0))

    def quantile(self, p):
        p = _check_level(p)
        return _scalar(np.exp(self.mu + self.sigma * _ndtri(p)))

    def quantile_derivative(self, p):
        p = _check_level(p)
        z = _ndtri(p)
        return _scalar(self.sigma * np.exp(self.mu + self.sigma * z) / _npdf(z))

    def partial_expectation(self, q: float) -> float:
        if q <= 0:
            return 0.0
        if math.isinf(q):
            return self.mean
        z = (math.log(q) - self.mu) / self.sigma
        return self.mean * float(_ndtr(z - self.sigma))

    def lower_mean(self, p: float) -> float:
        _check_level(p)
        return self.mean * float(_ndtr(_ndtri(p) - self.sigma))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": {"mu": self.mu, "sigma": self.sigma}}


class NormalMixture(QuantileModel):
    """Finite mixture of normals with negligible mass below zero."""

    kind = "mixture"
    #: Largest tolerated ``F(0)``.
    NEGATIVE_MASS_TOL = 1e-6

    def __init__(self, weights, means, sigmas):
        w = np.asarray(weights, dtype=float)
        mu = np.asarray(means, dtype=float)
        sd = np.asarray(sigmas, dtype=float)
        if not (w.ndim == mu.ndim == sd.ndim == 1 and w.size == mu.size == sd.size and w.size):
            raise ModelError("weights, means and sigmas must be equal-length, non-empty")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ModelError(f"mixture weights must be positive and sum to 1, got {w.tolist()}")
        if np.any(sd <= 0) or not np.all(np.isfinite(mu)):
            raise ModelError("mixture components need finite means and positive sigmas")
        self.weights, self.means, self.sigmas = w, mu, sd
        f0 = float(self.cdf(0.0))
        if f0 >= self.NEGATIVE_MASS_TOL:
            raise ModelError(f"mixture puts {f0:.3g} mass on gamma <= 0")
        self._components = list(zip(w.tolist(), mu.tolist(), sd.tolist()))
        self._lo = float(np.min(mu - 40 * sd))
        self._hi = float(np.max(mu + 40 * sd))

    def __repr__(self):
        return (f"NormalMixture(weights={self.weights.tolist()}, means={self.means.tolist()}, "
                f"sigmas={self.sigmas.tolist()})")

    def __eq__(self, other):
        return isinstance(other, NormalMixture) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(repr(self))

    @property
    def mean(self) -> float:
        return float(self.weights @ self.means)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - self.means) / self.sigmas
        return _scalar(_ndtr(z) @ self.weights)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - self.means) / self.sigmas
        return _scalar((_npdf(z) / self.sigmas) @ self.weights)

    def _cdf_scalar(self, x: float) -> float:
        return sum(
            w * 0.5 * math.erfc((m - x) / (sd * math.sqrt(2.0)))
            for w, m, sd in self._components
        )

    def quantile(self, p):
        """Invert the CDF: safeguarded bracketing (Brent) for scalars,
        vectorised bisection to floating-point resolution for arrays."""
        p = _check_level(p)
        if p.ndim == 0:
            target = float(p)
            return optimize.brentq(lambda x: self._cdf_scalar(x) - target, self._lo, self._hi,
                                   xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
        lo = np.full(p.shape, self._lo)
        hi = np.full(p.shape, self._hi)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            done = (mid <= lo) | (mid >= hi)
            if np.all(done):
                break
            below = np.asarray(self.cdf(mid)) < p
            lo = np.where(below & ~done, mid, lo)
            hi = np.where(~below & ~done, mid, hi)
        return _scalar(0.5 * (lo + hi))

    def partial_expectation(self, q: float) -> float:
        if q <= 0:
            return 0.0
        zq = (q - self.means) / self.sigmas
        z0 = -self.means / self.sigmas
        terms = self.means * (_ndtr(zq) - _ndtr(z0)) - self.sigmas * (_npdf(zq) - _npdf(z0))
        return float(self.weights @ terms)

    def sample(self, rng, size):
        return self.quantile(rng.random(size).clip(1e-300, None))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": {
                "weights": self.weights.tolist(),
                "means": self.means.tolist(),
                "sigmas": self.sigmas.tolist(),
            },
        }


class Empirical(QuantileModel):
    """Step distribution over a finite positive sample.

    ``quantile(p)`` is the order statistic at position ``ceil(p n)``.
    """

    kind = "empirical"

    def __init__(self, sample):
        s = np.sort(np.asarray(sample, dtype=float).ravel())
        if s.size < 1:
            raise ModelError("empirical model needs at least one value")
        if not np.all(np.isfinite(s)) or s[0] <= 0:
            raise ModelError("empirical gamma values must be positive and finite")
        s.setflags(write=False)
        self.values = s
        self.n = int(s.size)
        self.degenerate = bool(s[0] == s[-1])
        self._cumsum = np.concatenate([[0.0], np.cumsum(s)])

    def __repr__(self):
        return f"Empirical(n={self.n})"

    def __eq__(self, other):
        return isinstance(other, Empirical) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.kind, self.values.tobytes()))

    @property
    def mean(self) -> float:
        return float(self._cumsum[-1] / self.n)

    def _rank(self, p):
        return np.clip(np.ceil(np.asarray(p) * self.n).astype(np.int64), 1, self.n)

    def cdf(self, x):
        return _scalar(np.searchsorted(self.values, np.asarray(x, dtype=float), side="right") / self.n)

    def pdf(self, x):
        raise ModelError("an empirical model has no density")

    def quantile(self, p):
        p = _check_level(p)
        return _scalar(self.values[self._rank(p) - 1])

    def quantile_derivative(self, p):
        """Central difference over one order statistic on each side."""
        if self.degenerate:
            raise DomainError("point-mass model has a degenerate density; Q' is undefined")
        p = float(_check_level(p))
        warnings.warn("Q' of an empirical model is a finite-difference estimate",
                      QuantileDerivativeWarning, stacklevel=2)
        h = 1.0 / self.n
        lo = max(p - h, 0.5 * h)
        hi = min(p + h, 1.0 - 0.5 * h)
        return (self.quantile(hi) - self.quantile(lo)) / (hi - lo)

    def partial_expectation(self, q: float) -> float:
        k = int(np.searchsorted(self.values, q, side="right"))
        return float(self._cumsum[k] / self.n)

    def lower_mean(self, p: float) -> float:
        p = float(_check_level(p))
        j = int(self._rank(p))
        return float((self._cumsum[j - 1] + (p * self.n - (j - 1)) * self.values[j - 1]) / self.n)

    def cdf_integral(self, q: float) -> float:
        k = int(np.searchsorted(self.values, q, side="left"))
        return float((k * q - self._cumsum[k]) / self.n)

    def sample(self, rng, size):
        return rng.choice(self.values, size=size)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": {"sample": self.values.tolist()}}


def model_from_dict(spec: dict) -> QuantileModel:
    """Inverse of ``QuantileModel.to_dict``."""
    try:
        kind = spec["kind"]
        params = spec.get("params", {})
        if kind == "lognormal":
            return LogNormal(float(params.get("mu", 0.0)), float(params.get("sigma", 1.0)))
        if kind == "mixture":
            return NormalMixture(params["weights"], params["means"], params["sigmas"])
        if kind == "empirical":
            return Empirical(params["sample"])
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed model spec: {exc}") from exc
    raise ModelError(f"unknown model kind {spec.get('kind')!r}")


def quantile(model: QuantileModel, p):
    return model.quantile(p)


def partial_expectation(model: QuantileModel, q: float) -> float:
    """``int_0^q g dF(g)``."""
    if q < 0:
        raise DomainError(f"partial expectation needs q >= 0, got {q}")
    return model.partial_expectation(q)


@dataclass(frozen=True)
class CostCurve:
    """Cost of accuracy for a population of measure ``n`` at failure prob ``beta``."""

    model: QuantileModel
    n: float
    beta: float
    regime: str = "vcg"

    def __post_init__(self):
        if not self.n > 0:
            raise DomainError(f"population measure must be positive, got {self.n}")
        if not (0.0 < self.beta < BETA_MAX):
            raise DomainError(f"beta must lie in (0, {BETA_MAX:.6f}), got {self.beta}")
        if self.regime not in ("vcg", "lindahl"):
            raise DomainError(f"regime must be 'vcg' or 'lindahl', got {self.regime!r}")

    @property
    def m(self) -> float:
        return 0.5 + math.log(1.0 / self.beta)

    def with_regime(self, regime: str) -> "CostCurve":
        return CostCurve(self.model, self.n, self.beta, regime)

    def _check(self, I):
        if not (0.0 < I < 1.0):
            raise DomainError(f"accuracy must lie strictly inside (0, 1), got {I}")
        if self.cohort(I) <= 0:
            raise DomainError(f"cohort H({I}) is empty")

    def cohort(self, I: float) -> float:
        return self.n - (1.0 - I) * self.n / self.m

    def cohort_slope(self) -> float:
        return self.n / self.m

    def epsilon(self, I: float) -> float:
        return self.m / ((1.0 - I) * self.n)

    def epsilon_slope(self, I: float) -> float:
        return self.m / ((1.0 - I) ** 2 * self.n)

    def level(self, I: float) -> float:
        """Quantile level ``H(I)/N`` of the marginal participant."""
        return 1.0 - (1.0 - I) / self.m

    def cost(self, I: float) -> float:
        return c_vcg(self, I) if self.regime == "vcg" else c_lindahl(self, I)

    def marginal(self, I: float) -> float:
        return dc_vcg(self, I) if self.regime == "vcg" else dc_lindahl(self, I)


def c_vcg(curve: CostCurve, I: float) -> float:
    """Uniform-price cost ``Q(H/N) H eps``."""
    curve._check(I)
    return float(curve.model.quantile(curve.level(I))) * curve.cohort(I) * curve.epsilon(I)


def c_lindahl_forms(curve: CostCurve, I: float) -> tuple[float, float]:
    """Lindahl cost two ways: ``N * lower_mean * eps`` and the integrated-by-parts
    ``[Q H - N int_0^Q F] eps``."""
    curve._check(I)
    p = curve.level(I)
    eps = curve.epsilon(I)
    direct = curve.n * curve.model.lower_mean(p) * eps
    q = float(curve.model.quantile(p))
    by_parts = (q * curve.cohort(I) - curve.n * curve.model.cdf_integral(q)) * eps
    return direct, by_parts


def c_lindahl(curve: CostCurve, I: float, *, check: bool = False) -> float:
    """Personalised-price cost ``N int_0^{Q(H/N)} g dF eps``.

    With ``check=True`` the integrated-by-parts form is also evaluated and a
    relative disagreement above 1e-8 raises :class:`QuadratureError`.
    """
    if not check:
        curve._check(I)
        return curve.n * curve.model.lower_mean(curve.level(I)) * curve.epsilon(I)
    direct, by_parts = c_lindahl_forms(curve, I)
    if abs(direct - by_parts) > 1e-8 * abs(direct):
        raise QuadratureError(f"Lindahl cost forms disagree at I={I}: {direct!r} vs {by_parts!r}")
    return direct


def _require_density(curve: CostCurve):
    if curve.model.degenerate:
        raise DomainError("marginal cost is undefined for a point-mass preference model")


def dc_vcg(curve: CostCurve, I: float) -> float:
    """Analytic ``dC^VCG/dI``.

    Uses ``H eps = m/(1-I) - 1``, so the derivative is
    ``Q * m/(1-I)^2 + Q' * (H'/N) * H eps``.
    """
    curve._check(I)
    _require_density(curve)
    p = curve.level(I)
    q = float(curve.model.quantile(p))
    dq = float(curve.model.quantile_derivative(p))
    h_eps = curve.m / (1.0 - I) - 1.0
    return q * curve.m / (1.0 - I) ** 2 + dq * h_eps / curve.m


def dc_lindahl(curve: CostCurve, I: float) -> float:
    """Analytic ``dC^L/dI = [Q H - N int_0^Q F] eps' + Q H' eps``.

    The bracket is evaluated as ``N * lower_mean(H/N)``, its closed form.
    """
    curve._check(I)
    _require_density(curve)
    p = curve.level(I)
    q = float(curve.model.quantile(p))
    bracket = curve.n * curve.model.lower_mean(p)
    return bracket * curve.epsilon_slope(I) + q * curve.cohort_slope() * curve.epsilon(I)


def second_difference(marginal: Callable[[float], float], I: float, step: float = 1e-5) -> float:
    """Central difference of a marginal-cost function, i.e. ``d^2 C / dI^2``."""
    return (marginal(I + step) - marginal(I - step)) / (2.0 * step)


def soc_vcg(curve: CostCurve, I: float, step: float = 1e-5) -> float:
    """``d^2 C^VCG / dI^2`` at ``I``; positive means locally convex."""
    curve._check(I)
    if not (0.0 < I - step and I + step < 1.0):
        raise DomainError(f"second difference at {I} leaves (0, 1)")
    return second_difference(lambda x: dc_vcg(curve, x), I, step)


def soc_lindahl(curve: CostCurve, I: float, step: float = 1e-5) -> float:
    curve._check(I)
    if not (0.0 < I - step and I + step < 1.0):
        raise DomainError(f"second difference at {I} leaves (0, 1)")
    return second_difference(lambda x: dc_lindahl(curve, x), I, step)


def clamp_accuracy(I: float) -> float:
    return min(max(I, I_FLOOR), I_CEIL)


SWEEP_COLUMNS = ("I", "C_vcg", "C_lindahl", "dC_vcg", "dC_lindahl", "soc")


def sweep(curve: CostCurve, grid) -> list[dict]:
    """Evaluate every curve quantity on ``grid``.

    Grid points must lie in ``(0, 1)``; they are then clamped to
    ``[I_FLOOR, I_CEIL]``.
    """
    rows = []
    for raw in grid:
        raw = float(raw)
        if not (0.0 < raw < 1.0):
            raise DomainError(f"sweep grid point {raw} is outside (0, 1)")
        I = clamp_accuracy(raw)
        step = min(1e-5, 0.5 * I, 0.5 * (1.0 - I))
        rows.append({
            "I": I,
            "C_vcg": c_vcg(curve, I),
            "C_lindahl": c_lindahl(curve, I, check=True),
            "dC_vcg": dc_vcg(curve, I),
            "dC_lindahl": dc_lindahl(curve, I),
            "soc": soc_vcg(curve, I, step),
        })
    return rows
