"""Equilibrium accuracy under the three provision regimes.

Competitive (VCG) supply sets marginal cost equal to the largest taste for
accuracy ``eta_bar``; the Lindahl monopsonist does the same with its lower
marginal cost; the planner equates VCG marginal cost with the summed tastes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cost_model import I_CEIL, I_FLOOR, CostCurve, QuantileModel, dc_vcg, soc_lindahl, soc_vcg
from .errors import DomainError, NoBracketError, NonMonotoneWarning

ROOT_TOL = 1e-10
RESIDUAL_RTOL = 1e-8
PARETO_TIE_TOL = 1e-8

EQUILIBRIUM = "equilibrium"
STATIONARY = "stationary, not certified"
ZERO_PROVISION = "zero provision"
OVER_DEMAND = "no interior root: demand exceeds marginal cost on the bracket"


def _scan_grid(lo: float, hi: float) -> np.ndarray:
    # Dense near I = 1 where eps(I) has its pole.
    body = np.linspace(lo, min(0.99, hi), 120)
    tail = 1.0 - np.logspace(-2, math.log10(1.0 - hi), 24)
    grid = np.unique(np.concatenate([body, tail[tail > body[-1]], [hi]]))
    return grid[(grid >= lo) & (grid <= hi)]


@dataclass(frozen=True)
class RootResult:
    root: float
    level: float
    residual: float
    bracket: tuple[float, float]
    soc: float
    status: str
    crossings: int

    @property
    def certified(self) -> bool:
        return self.status == EQUILIBRIUM

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "level": self.level,
            "residual": self.residual,
            "bracket": list(self.bracket),
            "soc": self.soc,
            "status": self.status,
            "crossings": self.crossings,
        }


def solve_marginal_cost_root(
    curve: CostCurve, level: float, *, lo: float = I_FLOOR, hi: float = I_CEIL
) -> RootResult:
    """Smallest ``I`` in ``[lo, hi]`` where ``curve.marginal(I) == level``.

    A grid pre-scan locates the first sign change of ``marginal - level``,
    then bisection narrows it to ``ROOT_TOL`` (and further, up to floating
    resolution, if the residual is still above ``RESIDUAL_RTOL * (1 + level)``).

    Raises
    ------
    NoBracketError
        ``side="below"`` if marginal cost exceeds ``level`` everywhere,
        ``side="above"`` if it stays below ``level`` everywhere.
    """
    if not level > 0:
        raise DomainError(f"demand level must be positive, got {level}")

    def g(x):
        return curve.marginal(x) - level

    grid = _scan_grid(lo, hi)
    vals = np.array([g(x) for x in grid])
    signs = np.sign(vals)
    changes = np.nonzero(signs[:-1] * signs[1:] <= 0)[0]
    # a zero at a grid point shows up twice; count crossings, not cells
    crossings = int(np.count_nonzero(np.diff(signs[signs != 0]) != 0)) + int(np.any(signs == 0))
    if changes.size == 0:
        side = "below" if vals[0] > 0 else "above"
        raise NoBracketError(
            f"marginal cost minus {level:.6g} keeps sign {'+' if side == 'below' else '-'} "
            f"on [{lo}, {hi}]",
            side=side,
        )
    if crossings > 1:
        warnings.warn(
            f"marginal cost crosses {level:.6g} {crossings} times; taking the smallest root",
            NonMonotoneWarning,
            stacklevel=2,
        )
    j = int(changes[0])
    a, b = float(grid[j]), float(grid[j + 1])
    fa = float(vals[j])
    bracket = (a, b)
    if fa == 0.0:
        x = a
    else:
        tol = RESIDUAL_RTOL * (1.0 + level)
        while True:
            mid = 0.5 * (a + b)
            if mid <= a or mid >= b:
                break
            fm = g(mid)
            if fm == 0.0:
                a = b = mid
                break
            if (fm > 0) == (fa > 0):
                a, fa = mid, fm
            else:
                b = mid
            if b - a < ROOT_TOL and abs(fm) < tol:
                break
        x = min((a, b, 0.5 * (a + b)), key=lambda t: abs(g(t)))

    step = min(1e-5, 0.5 * x, 0.5 * (1.0 - x))
    soc_fn = soc_vcg if curve.regime == "vcg" else soc_lindahl
    soc = soc_fn(curve, x, step)
    return RootResult(
        root=x,
        level=level,
        residual=g(x),
        bracket=bracket,
        soc=soc,
        status=EQUILIBRIUM if soc > 0 else STATIONARY,
        crossings=crossings,
    )


def solve_competitive_root(curve_vcg: CostCurve, eta_bar: float) -> RootResult:
    if not eta_bar > 0:
        raise DomainError(f"eta_bar must be positive, got {eta_bar}")
    return solve_marginal_cost_root(curve_vcg.with_regime("vcg"), eta_bar)


def solve_competitive(curve_vcg: CostCurve, eta_bar: float) -> float:
    """Free-rider equilibrium accuracy: ``dC^VCG/dI = eta_bar``."""
    return solve_competitive_root(curve_vcg, eta_bar).root


def solve_lindahl_root(curve_lindahl: CostCurve, eta_bar: float) -> RootResult:
    if not eta_bar > 0:
        raise DomainError(f"eta_bar must be positive, got {eta_bar}")
    return solve_marginal_cost_root(curve_lindahl.with_regime("lindahl"), eta_bar)


def solve_lindahl_supply(curve_lindahl: CostCurve, eta_bar: float) -> float:
    """Monopsonist accuracy: ``dC^L/dI = eta_bar``."""
    return solve_lindahl_root(curve_lindahl, eta_bar).root


def solve_pareto_root(curve_vcg: CostCurve, eta_sum: float) -> RootResult:
    if not eta_sum > 0:
        raise DomainError(f"eta_sum must be positive, got {eta_sum}")
    return solve_marginal_cost_root(curve_vcg.with_regime("vcg"), eta_sum)


def solve_pareto(curve_vcg: CostCurve, eta_sum: float) -> float:
    """Planner's accuracy: ``dC^VCG/dI = sum of eta``."""
    return solve_pareto_root(curve_vcg, eta_sum).root


def private_foc_price(curve: CostCurve, I: float) -> float:
    """Accuracy price implied by the private first-order condition, in its
    two-term form ``Q H eps' + [Q + Q' H/N] H' eps``.

    Algebraically identical to :func:`~dpprovision.cost_model.dc_vcg`; kept
    separate as a transcription cross-check.
    """
    curve._check(I)
    p = curve.level(I)
    q = float(curve.model.quantile(p))
    dq = float(curve.model.quantile_derivative(p))
    h = curve.cohort(I)
    return (q * h * curve.epsilon_slope(I)
            + (q + dq * h / curve.n) * curve.cohort_slope() * curve.epsilon(I))


@dataclass
class RegimeComparison:
    n: float
    beta: float
    eta_bar: float
    eta_sum: float
    i_vcg: float | None = None
    i_lindahl: float | None = None
    i_pareto: float | None = None
    tags: dict = field(default_factory=dict)
    roots: dict = field(default_factory=dict)
    foc_crosscheck: float | None = None

    @property
    def m(self) -> float:
        return 0.5 + math.log(1.0 / self.beta)

    @property
    def p_i(self) -> float:
        """Equilibrium accuracy price in both private regimes."""
        return self.eta_bar

    def _eps(self, i):
        return None if i is None else self.m / ((1.0 - i) * self.n)

    @property
    def eps_vcg(self):
        return self._eps(self.i_vcg)

    @property
    def eps_lindahl(self):
        return self._eps(self.i_lindahl)

    @property
    def eps_pareto(self):
        return self._eps(self.i_pareto)

    @property
    def all_interior(self) -> bool:
        return None not in (self.i_vcg, self.i_lindahl, self.i_pareto)

    def ordering_checks(self) -> dict:
        """Suboptimality ordering; empty unless all three roots are interior.

        No relation between the Lindahl and Pareto levels is asserted. When
        ``eta_sum == eta_bar`` the planner and competitive conditions coincide,
        so equality (to ``PARETO_TIE_TOL``) replaces the strict comparison.
        """
        if not self.all_interior:
            return {}
        checks = {
            "i_vcg<i_lindahl": self.i_vcg < self.i_lindahl,
            "eps_vcg<eps_lindahl": self.eps_vcg < self.eps_lindahl,
        }
        if self.eta_sum > self.eta_bar:
            checks["i_vcg<i_pareto"] = self.i_vcg < self.i_pareto
            checks["eps_vcg<eps_pareto"] = self.eps_vcg < self.eps_pareto
        else:
            checks["i_vcg==i_pareto"] = abs(self.i_vcg - self.i_pareto) <= PARETO_TIE_TOL
        return checks

    @property
    def ordering_holds(self) -> bool | None:
        checks = self.ordering_checks()
        return all(checks.values()) if checks else None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "beta": self.beta,
            "m": self.m,
            "eta_bar": self.eta_bar,
            "eta_sum": self.eta_sum,
            "p_i": self.p_i,
            "i_vcg": self.i_vcg,
            "i_lindahl": self.i_lindahl,
            "i_pareto": self.i_pareto,
            "eps_vcg": self.eps_vcg,
            "eps_lindahl": self.eps_lindahl,
            "eps_pareto": self.eps_pareto,
            "lindahl_vs_pareto": (
                None if not self.all_interior
                else ("lindahl<pareto" if self.i_lindahl < self.i_pareto
                      else "lindahl>=pareto")
            ),
            "ordering": self.ordering_checks(),
            "ordering_holds": self.ordering_holds,
            "tags": self.tags,
            "diagnostics": {
                "roots": {k: v.to_dict() for k, v in self.roots.items()},
                "foc_crosscheck_rel": self.foc_crosscheck,
                "free_rider": "only the consumer with eta = eta_bar buys accuracy; "
                              "all others purchase zero",
            },
        }


def compare_regimes(
    model: QuantileModel, n: float, beta: float, eta_bar: float, eta_sum: float
) -> RegimeComparison:
    """Solve all three regimes; regimes without an interior root are tagged
    instead of raising."""
    if not eta_bar > 0:
        raise DomainError(f"eta_bar must be positive, got {eta_bar}")
    if eta_sum < eta_bar:
        raise DomainError(f"eta_sum ({eta_sum}) must be at least eta_bar ({eta_bar})")
    curve = CostCurve(model, n, beta, "vcg")
    out = RegimeComparison(n=n, beta=beta, eta_bar=eta_bar, eta_sum=eta_sum)
    jobs = (
        ("vcg", "i_vcg", solve_competitive_root, eta_bar),
        ("lindahl", "i_lindahl", solve_lindahl_root, eta_bar),
        ("pareto", "i_pareto", solve_pareto_root, eta_sum),
    )
    for name, attr, solver, level in jobs:
        try:
            res = solver(curve, level)
        except NoBracketError as exc:
            out.tags[name] = ZERO_PROVISION if exc.side == "below" else OVER_DEMAND
            continue
        setattr(out, attr, res.root)
        out.roots[name] = res
        out.tags[name] = res.status
    if out.i_vcg is not None:
        direct = dc_vcg(curve, out.i_vcg)
        out.foc_crosscheck = abs(private_foc_price(curve, out.i_vcg) - direct) / abs(direct)
    return out
