"""Procurement of privacy-loss rights from a finite population.

Three mechanisms share one skeleton: sort consumers by ``gamma`` (ties by id),
cut off at ``k``, and pay the cohort. MinCostAuction (VCG) and FairQuery pay
everyone the threshold bidder's unit price; Lindahl procurement pays each
participant exactly ``gamma_i`` per unit of privacy loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dp_core import AccuracyTarget, BETA_MAX, epsilon_for, required_cohort
from .errors import BudgetError, DomainError, MismatchError, ThresholdError

#: Surplus below this counts as an individual-rationality violation.
IR_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Consumer:
    id: int
    bit: int
    gamma: float
    eta: float
    income: float


@dataclass(frozen=True, eq=False)
class Population:
    """Column-oriented, immutable population of consumers.

    Arrays are indexed by position; ``ids`` holds the consumer identifiers.
    """

    ids: np.ndarray
    bits: np.ndarray
    gamma: np.ndarray
    eta: np.ndarray
    income: np.ndarray

    def __post_init__(self):
        cols = {}
        for name, dtype in (("ids", np.int64), ("bits", np.int8), ("gamma", float),
                            ("eta", float), ("income", float)):
            arr = np.array(getattr(self, name), dtype=dtype).ravel()
            arr.setflags(write=False)
            cols[name] = arr
            object.__setattr__(self, name, arr)
        n = cols["ids"].size
        if any(a.size != n for a in cols.values()):
            raise DomainError("population columns have different lengths")
        if np.unique(cols["ids"]).size != n:
            raise DomainError("consumer ids must be distinct")
        if not np.all((cols["bits"] == 0) | (cols["bits"] == 1)):
            raise DomainError("bits must be 0 or 1")
        if n and not np.all(cols["gamma"] > 0):
            raise DomainError("gamma must be positive")
        if n and not np.all(cols["eta"] >= 0):
            raise DomainError("eta must be nonnegative")
        if n and not np.all(cols["income"] > 0):
            raise DomainError("income must be positive")

    @classmethod
    def from_consumers(cls, consumers) -> "Population":
        consumers = list(consumers)
        return cls(
            ids=[c.id for c in consumers],
            bits=[c.bit for c in consumers],
            gamma=[c.gamma for c in consumers],
            eta=[c.eta for c in consumers],
            income=[c.income for c in consumers],
        )

    @classmethod
    def from_gammas(cls, gammas, *, bits=None, eta=None) -> "Population":
        """Convenience constructor for auction instances: ids 0..n-1."""
        g = np.asarray(gammas, dtype=float)
        n = g.size
        return cls(
            ids=np.arange(n),
            bits=np.zeros(n, dtype=np.int8) if bits is None else bits,
            gamma=g,
            eta=np.zeros(n) if eta is None else eta,
            income=np.ones(n),
        )

    @property
    def n(self) -> int:
        return int(self.ids.size)

    @property
    def eta_bar(self) -> float:
        return float(self.eta.max())

    @property
    def eta_sum(self) -> float:
        return float(self.eta.sum())

    @property
    def consumers(self) -> list[Consumer]:
        return [
            Consumer(int(i), int(b), float(g), float(e), float(y))
            for i, b, g, e, y in zip(self.ids, self.bits, self.gamma, self.eta, self.income)
        ]

    def with_gamma(self, position: int, gamma: float) -> "Population":
        g = self.gamma.copy()
        g[position] = gamma
        return replace(self, gamma=g)

    def __len__(self):
        return self.n


@dataclass(frozen=True, eq=False)
class AuctionOutcome:
    """Result of one procurement.

    ``selected`` holds positions into the population, in purchase order.
    ``unit_prices`` is the per-unit price paid to each selected consumer;
    it is constant for the uniform-price mechanisms.
    """

    mechanism: str
    n: int
    selected: np.ndarray
    selected_ids: np.ndarray
    epsilon: float
    unit_prices: np.ndarray
    payments: np.ndarray
    total_cost: float
    alpha: float
    beta: float
    extra: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return int(self.selected.size)

    @property
    def unit_price(self) -> float | None:
        """Common per-unit price, or ``None`` for Lindahl."""
        if self.mechanism == "lindahl":
            return None
        return float(self.unit_prices[0]) if self.k else None

    def payment_to(self, position: int) -> float:
        hit = np.nonzero(self.selected == position)[0]
        return float(self.payments[hit[0]]) if hit.size else 0.0

    def to_dict(self) -> dict:
        out = {
            "mechanism": self.mechanism,
            "n": self.n,
            "alpha": self.alpha,
            "beta": self.beta,
            "epsilon": self.epsilon,
            "selected_ids": [int(i) for i in self.selected_ids],
            "payments": [float(p) for p in self.payments],
            "total_cost": self.total_cost,
        }
        out.update(self.extra)
        return out


def sorted_order(pop: Population) -> np.ndarray:
    """Positions sorted by ascending gamma, ties broken by ascending id."""
    return np.lexsort((pop.ids, pop.gamma))


def _outcome(mechanism, pop, chosen, eps, unit_prices, alpha, beta, **extra):
    payments = unit_prices * eps
    return AuctionOutcome(
        mechanism=mechanism,
        n=pop.n,
        selected=chosen,
        selected_ids=pop.ids[chosen],
        epsilon=eps,
        unit_prices=unit_prices,
        payments=payments,
        total_cost=float(payments.sum()),
        alpha=alpha,
        beta=beta,
        extra=extra,
    )


def min_cost_auction(pop: Population, target: AccuracyTarget) -> AuctionOutcome:
    """VCG procurement: buy from the ``ceil(H)`` cheapest consumers at the
    unit price set by the first excluded bidder."""
    k = required_cohort(target, pop.n)
    if k >= pop.n:
        raise ThresholdError(
            f"the target needs {k} of {pop.n} consumers; no threshold bidder remains"
        )
    order = sorted_order(pop)
    price = float(pop.gamma[order[k]])
    eps = epsilon_for(target, pop.n)
    return _outcome("vcg", pop, order[:k], eps, np.full(k, price), target.alpha, target.beta)


def fair_query(pop: Population, budget: float, beta: float) -> AuctionOutcome:
    """Budgeted procurement.

    Picks the largest ``k < n`` whose cost ``k * gamma_(k+1) / (n - k)``
    fits within ``budget`` (inclusive). Each member sells ``1/(n-k)`` units of
    privacy loss at unit price ``gamma_(k+1)``. The implied accuracy
    ``alpha(k) = m (n - k) / n`` is reported alongside.
    """
    if not budget > 0:
        raise DomainError(f"budget must be positive, got {budget}")
    if not (0.0 < beta < BETA_MAX):
        raise DomainError(f"beta must lie in (0, {BETA_MAX:.6f}), got {beta}")
    n = pop.n
    if n < 2:
        raise ThresholdError("FairQuery needs at least two consumers")
    order = sorted_order(pop)
    g = pop.gamma[order]
    ks = np.arange(1, n)
    costs = ks * g[ks] / (n - ks)
    feasible = np.nonzero(costs <= budget)[0]
    if feasible.size == 0:
        raise BudgetError(f"budget {budget} cannot buy one right (needs {costs[0]})")
    k = int(ks[feasible[-1]])
    eps = 1.0 / (n - k)
    m = 0.5 + math.log(1.0 / beta)
    implied_alpha = m * (n - k) / n
    return _outcome("fairquery", pop, order[:k], eps, np.full(k, float(g[k])),
                    implied_alpha, beta, budget=float(budget))


def lindahl_procurement(pop: Population, target: AccuracyTarget) -> AuctionOutcome:
    """Price-discriminating procurement at each participant's own ``gamma``."""
    k = required_cohort(target, pop.n)
    if k > pop.n:
        raise DomainError(f"the target needs {k} of {pop.n} consumers")
    order = sorted_order(pop)
    chosen = order[:k]
    eps = epsilon_for(target, pop.n)
    return _outcome("lindahl", pop, chosen, eps, pop.gamma[chosen].copy(),
                    target.alpha, target.beta)


def _check_outcome(outcome: AuctionOutcome, pop: Population):
    if outcome.n != pop.n or outcome.selected.size and (
        outcome.selected.min() < 0 or outcome.selected.max() >= pop.n
    ):
        raise MismatchError("outcome refers to consumers outside the population")
    if not np.array_equal(pop.ids[outcome.selected], outcome.selected_ids):
        raise MismatchError("outcome ids do not match the population")


def verify_individual_rationality(outcome: AuctionOutcome, pop: Population) -> bool:
    """True iff every selected consumer's surplus ``payment - gamma * eps`` is
    nonnegative (to ``IR_TOLERANCE``). Unselected consumers are never paid by
    construction of :class:`AuctionOutcome`."""
    _check_outcome(outcome, pop)
    surplus = outcome.payments - pop.gamma[outcome.selected] * outcome.epsilon
    return bool(np.all(surplus >= -IR_TOLERANCE))


def utility(outcome: AuctionOutcome, position: int, true_gamma: float) -> float:
    """Quasilinear utility net of the constant log-income term."""
    hit = np.nonzero(outcome.selected == position)[0]
    if not hit.size:
        return 0.0
    return float(outcome.payments[hit[0]] - true_gamma * outcome.epsilon)


def misreport_gain(pop: Population, target: AccuracyTarget, i: int, reported_gamma: float) -> float:
    """Utility change for consumer at position ``i`` from reporting
    ``reported_gamma`` instead of the truth in the VCG auction."""
    if not reported_gamma > 0:
        raise DomainError(f"reported gamma must be positive, got {reported_gamma}")
    if not 0 <= i < pop.n:
        raise IndexError(f"consumer index {i} out of range")
    truth = float(pop.gamma[i])
    honest = min_cost_auction(pop, target)
    lied = min_cost_auction(pop.with_gamma(i, reported_gamma), target)
    return utility(lied, i, truth) - utility(honest, i, truth)


def is_envy_free(outcome: AuctionOutcome, pop: Population) -> bool:
    """Uniform payments, and no excluded consumer would profit at that payment."""
    _check_outcome(outcome, pop)
    if outcome.k == 0:
        return True
    if not np.all(outcome.payments == outcome.payments[0]):
        return False
    out = np.setdiff1d(np.arange(pop.n), outcome.selected)
    return bool(np.all(pop.gamma[out] * outcome.epsilon >= outcome.payments[0] - IR_TOLERANCE))
