"""Verification suites behind ``dpprovision verify`` and the acceptance tests.

Every suite returns a :class:`SuiteReport` listing named checks with the
measured statistic and the threshold it was held to.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import auction as au
from .cost_model import (
    CostCurve, LogNormal, NormalMixture, c_lindahl, c_lindahl_forms, c_vcg, dc_lindahl, dc_vcg,
)
from .dp_core import (
    BETA_MAX, adversarial_database, cohort_size, dp_certificate, empirical_accuracy, epsilon_for,
    log_density_ratio, make_accuracy_target, required_cohort,
)
from .equilibrium import compare_regimes, private_foc_price
from .errors import NonMonotoneWarning
from .population_io import PopulationConfig, generate_population

#: The three worked configurations and the rounded figures quoted for them.
EXAMPLE_CONFIGS = (
    # alpha, beta, eps*N as quoted, H/N as quoted, eps*N to 6 sig, H/N to 5 sig
    (0.2, 0.1, 14, 0.93, 14.0129, 0.92864),
    (0.05, 0.05, 70, 0.99, 69.915, 0.98569),
    (0.4, 1.0 / 3.0, 4, 0.75, 3.9965, 0.74978),
)

SUITES = ("example", "accuracy", "dp", "auction", "derivatives", "ordering", "convergence")

DEFAULT_SCALE = {
    "example": 1000,
    "accuracy": 100_000,
    "dp": 100,
    "auction": 1000,
    "derivatives": 19,
    "ordering": 200,
    "convergence": 100_000,
}

#: 2-component positive-support mixture used wherever a non-lognormal model is needed.
REFERENCE_MIXTURE = dict(weights=[0.6, 0.4], means=[2.0, 5.0], sigmas=[0.35, 0.8])


@dataclass
class Check:
    name: str
    passed: bool
    measured: object = None
    threshold: object = None

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed),
                "measured": self.measured, "threshold": self.threshold}


@dataclass
class SuiteReport:
    suite: str
    seed: int | None
    scale: int
    checks: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, passed, measured=None, threshold=None):
        self.checks.append(Check(name, bool(passed), measured, threshold))

    def to_dict(self):
        return {
            "suite": self.suite,
            "seed": self.seed,
            "scale": self.scale,
            "passed": self.passed,
            "summary": self.summary,
            "checks": [c.to_dict() for c in self.checks],
        }


def _digits(x: float) -> int:
    s = repr(x)
    return len(s.split(".")[1]) if "." in s else 0


def example_rows(n: int = 1000) -> list[dict]:
    """Privacy loss and cohort share for each worked configuration."""
    rows = []
    for alpha, beta, eps_q, share_q, eps_ref, share_ref in EXAMPLE_CONFIGS:
        t = make_accuracy_target(alpha, beta)
        eps_n = epsilon_for(t, n) * n
        share = cohort_size(t, n) / n
        rows.append({
            "alpha": alpha,
            "beta": beta,
            "m": t.m,
            "eps_times_n": eps_n,
            "cohort_share": share,
            "closed_eps_times_n": t.m / alpha,
            "closed_cohort_share": 1.0 - alpha / t.m,
            "quoted_eps_times_n": eps_q,
            "quoted_cohort_share": share_q,
            "reference_eps_times_n": eps_ref,
            "reference_cohort_share": share_ref,
        })
    return rows


def suite_example(seed=None, scale=1000, jobs=1) -> SuiteReport:
    rep = SuiteReport("example", seed, scale)
    for row in example_rows(scale):
        tag = f"({row['alpha']}, {row['beta']:.4g})"
        for key, closed, quoted, ref in (
            ("eps_times_n", "closed_eps_times_n", "quoted_eps_times_n", "reference_eps_times_n"),
            ("cohort_share", "closed_cohort_share", "quoted_cohort_share", "reference_cohort_share"),
        ):
            v = row[key]
            rel = abs(v - row[closed]) / abs(row[closed])
            rep.add(f"{tag} {key} closed form", rel <= 1e-6, rel, 1e-6)
            # quoted references are rounded or truncated in their last digit
            ulp = 10.0 ** -_digits(row[ref])
            rep.add(f"{tag} {key} ~ {row[ref]}", abs(v - row[ref]) < ulp, v, row[ref])
            q = row[quoted]
            rounded = round(v) if isinstance(q, int) else round(v, _digits(q))
            rep.add(f"{tag} {key} rounds to {q}", rounded == q, rounded, q)
    rep.summary["rows"] = example_rows(scale)
    return rep


def suite_accuracy(seed=0, scale=100_000, jobs=1, n=1000) -> SuiteReport:
    """Empirical failure rate on both extreme databases for each worked config."""
    rep = SuiteReport("accuracy", seed, scale)
    streams = np.random.SeedSequence(seed).spawn(2 * len(EXAMPLE_CONFIGS))
    j = 0
    for alpha, beta, *_ in EXAMPLE_CONFIGS:
        t = make_accuracy_target(alpha, beta)
        cohort = np.arange(required_cohort(t, n))
        bound = beta + 3.0 * math.sqrt(beta * (1.0 - beta) / scale)
        for unsampled in (1, 0):
            db = adversarial_database(n, cohort, unsampled)
            rng = np.random.Generator(np.random.PCG64(streams[j]))
            j += 1
            rate = empirical_accuracy(db, t, cohort, scale, rng, jobs=jobs)
            rep.add(f"alpha={alpha} beta={beta:.4g} unsampled={unsampled}", rate <= bound,
                    rate, bound)
    return rep


def suite_dp(seed=None, scale=100, jobs=1, n=1000) -> SuiteReport:
    """Certificate identity, production identity and log-ratio tightness."""
    rep = SuiteReport("dp", seed, scale)
    side = max(1, int(round(math.sqrt(scale))))
    alphas = np.linspace(0.01, 0.99, side)
    betas = np.linspace(0.005, BETA_MAX - 0.005, max(1, scale // side))
    worst_identity = 0.0
    cert_exact = True
    tight = True
    for a in alphas:
        for b in betas:
            t = make_accuracy_target(a, b)
            eps = epsilon_for(t, n)
            cert_exact &= dp_certificate(t, n) == eps
            worst_identity = max(worst_identity, abs(eps * (n - cohort_size(t, n)) - 1.0))
            # neighbours shift the cohort sum by one; scan outputs incl. both tails
            xs = np.linspace(-50.0 / eps, 50.0 / eps, 2001)
            ratio = log_density_ratio(xs, 1.0, 0.0, 1.0 / eps)
            tight &= bool(np.max(np.abs(ratio)) <= eps * (1 + 1e-12))
            tight &= bool(abs(ratio[-1] - eps) <= 1e-12 * eps)
    npts = len(alphas) * len(betas)
    rep.add("certificate == epsilon_for", cert_exact, npts, "all equal")
    rep.add("eps*(N-H) == 1", worst_identity <= 1e-10, worst_identity, 1e-10)
    rep.add("log density ratio <= eps, attained in tail", tight, npts, "all points")
    return rep


def _fd(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2.0 * h)


def suite_derivatives(seed=None, scale=19, jobs=1, n=1000, beta=0.1) -> SuiteReport:
    rep = SuiteReport("derivatives", seed, scale)
    grid = np.linspace(0.05, 0.95, scale)
    models = {"lognormal(0,1)": LogNormal(0.0, 1.0), "mixture": NormalMixture(**REFERENCE_MIXTURE)}
    for label, model in models.items():
        curve = CostCurve(model, n, beta)
        err_v = err_l = err_ibp = err_foc = 0.0
        for I in grid:
            a = dc_vcg(curve, I)
            err_v = max(err_v, abs(a - _fd(lambda x: c_vcg(curve, x), I)) / abs(a))
            b = dc_lindahl(curve, I)
            err_l = max(err_l, abs(b - _fd(lambda x: c_lindahl(curve, x), I)) / abs(b))
            d, p = c_lindahl_forms(curve, I)
            err_ibp = max(err_ibp, abs(d - p) / abs(d))
            err_foc = max(err_foc, abs(private_foc_price(curve, I) - a) / abs(a))
        rep.add(f"{label} dC_vcg vs central difference", err_v <= 1e-5, err_v, 1e-5)
        rep.add(f"{label} dC_lindahl vs central difference", err_l <= 1e-5, err_l, 1e-5)
        rep.add(f"{label} C_lindahl two forms", err_ibp <= 1e-8, err_ibp, 1e-8)
        rep.add(f"{label} expanded FOC vs dC_vcg", err_foc <= 1e-8, err_foc, 1e-8)
    return rep


def random_model(rng: np.random.Generator):
    if rng.random() < 0.5:
        return LogNormal(float(rng.uniform(-1.0, 1.0)), float(rng.uniform(0.3, 1.5)))
    w = float(rng.uniform(0.2, 0.8))
    m1 = float(rng.uniform(1.0, 3.0))
    m2 = m1 + float(rng.uniform(1.0, 4.0))
    # sigma <= mean / 5.5 keeps F(0) below 1e-6
    s1, s2 = m1 * float(rng.uniform(0.05, 0.18)), m2 * float(rng.uniform(0.05, 0.18))
    return NormalMixture([w, 1.0 - w], [m1, m2], [s1, s2])


def random_equilibrium_config(rng: np.random.Generator) -> dict:
    """A configuration whose competitive root is interior by construction."""
    model = random_model(rng)
    beta = float(rng.uniform(0.01, BETA_MAX - 0.01))
    n = float(10 ** rng.integers(2, 6))
    i_target = float(rng.uniform(0.05, 0.9))
    eta_bar = dc_vcg(CostCurve(model, n, beta), i_target)
    eta_sum = eta_bar * float(rng.uniform(1.5, 200.0))
    return dict(model=model, n=n, beta=beta, eta_bar=eta_bar, eta_sum=eta_sum)


def suite_ordering(seed=0, scale=200, jobs=1) -> SuiteReport:
    rep = SuiteReport("ordering", seed, scale)
    rng = np.random.Generator(np.random.PCG64(seed))
    grid = np.linspace(0.05, 0.95, 19)
    passed = 0
    failures = []
    for idx in range(scale):
        cfg = random_equilibrium_config(rng)
        curve = CostCurve(cfg["model"], cfg["n"], cfg["beta"])
        pointwise = all(0.0 < dc_lindahl(curve, I) < dc_vcg(curve, I) for I in grid)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonMonotoneWarning)
            cmp = compare_regimes(**cfg)
        ok = pointwise and cmp.all_interior and bool(cmp.ordering_holds)
        passed += ok
        if not ok:
            failures.append({"index": idx, "model": cfg["model"].to_dict(), "beta": cfg["beta"],
                             "n": cfg["n"], "pointwise": pointwise,
                             "comparison": cmp.to_dict()["ordering"], "tags": cmp.tags})
    rep.add("0 < dC_L < dC_VCG, I_VCG < I_L, I_VCG < I_0, eps_VCG < eps_0",
            passed == scale, f"{passed}/{scale}", f"{scale}/{scale}")
    rep.summary["failures"] = failures[:10]
    return rep


def suite_convergence(seed=0, scale=100_000, jobs=1, alpha=0.4, beta=1.0 / 3.0) -> SuiteReport:
    rep = SuiteReport("convergence", seed, scale)
    cfg = PopulationConfig(n=scale, seed=seed)
    pop = generate_population(cfg)
    target = make_accuracy_target(alpha, beta)
    curve = CostCurve(LogNormal(0.0, 1.0), scale, beta)
    I = 1.0 - alpha
    vcg = au.min_cost_auction(pop, target).total_cost
    lin = au.lindahl_procurement(pop, target).total_cost
    cv, cl = c_vcg(curve, I), c_lindahl(curve, I, check=True)
    rv, rl = abs(vcg / cv - 1.0), abs(lin / cl - 1.0)
    rep.add("VCG auction cost vs C_VCG", rv <= 0.02, rv, 0.02)
    rep.add("Lindahl auction cost vs C_L", rl <= 0.02, rl, 0.02)
    rep.summary.update(auction_vcg=vcg, continuum_vcg=cv, auction_lindahl=lin, continuum_lindahl=cl)
    return rep


# --- auction properties -------------------------------------------------------

def deviation_grid(gammas: np.ndarray, i: int) -> np.ndarray:
    """Reports covering every region where consumer ``i``'s outcome can change."""
    others = np.unique(np.delete(gammas, i))
    pts = [others, others * (1 - 1e-9), others * (1 + 1e-9),
           [gammas[i], others.min() * 0.5, others.max() * 2.0]]
    return np.unique(np.concatenate([np.ravel(p) for p in pts]))


def brute_force_selection(gammas, ids, k) -> list:
    return sorted(range(len(gammas)), key=lambda j: (gammas[j], ids[j]))[:k]


def _pick_target(n: int, rng: np.random.Generator | None):
    """An admissible target with 1 <= ceil(H) < n, or ``None``."""
    choices = [(0.4, 1.0 / 3.0), (0.2, 0.1), (0.6, 0.2), (0.9, 0.3), (0.95, 0.05)]
    if rng is not None:
        choices = [choices[int(rng.integers(len(choices)))]] + choices
    for a, b in choices:
        t = make_accuracy_target(a, b)
        k = required_cohort(t, n)
        if 1 <= k < n:
            return t
    return None


def check_auction_instance(gammas, target) -> dict:
    """All auction properties on one instance; returns the measured extremes."""
    pop = au.Population.from_gammas(gammas)
    g = pop.gamma
    vcg = au.min_cost_auction(pop, target)
    lin = au.lindahl_procurement(pop, target)
    k = vcg.k
    worst_gain = -math.inf
    for i in range(pop.n):
        for r in deviation_grid(g, i):
            worst_gain = max(worst_gain, au.misreport_gain(pop, target, i, float(r)))
    order = np.sort(g)
    strict_expected = order[k] > order[:k].min()
    return {
        "max_gain": worst_gain,
        "ir_vcg": au.verify_individual_rationality(vcg, pop),
        "ir_lindahl": au.verify_individual_rationality(lin, pop),
        "envy_free": au.is_envy_free(vcg, pop),
        "selection": list(vcg.selected) == brute_force_selection(list(g), list(pop.ids), k)
                     and list(lin.selected) == list(vcg.selected),
        "cost_dominance": lin.total_cost <= vcg.total_cost * (1 + 1e-12),
        "strictness": (lin.total_cost < vcg.total_cost) == bool(strict_expected),
    }


def auction_instances(seed: int, random_count: int):
    """Exhaustive gamma in {1,2,3}^n for n <= 5, structured n = 6..12, then random."""
    for n in range(2, 6):
        t = _pick_target(n, None)
        for combo in itertools.product((1.0, 2.0, 3.0), repeat=n):
            yield np.array(combo), t
    for n in range(6, 13):
        t = _pick_target(n, None)
        base = np.arange(1.0, n + 1.0)
        for g in (base, base[::-1].copy(), np.ones(n), np.where(base % 2 == 0, 1.0, 2.0),
                  np.repeat([1.0, 5.0], [n // 2, n - n // 2])):
            yield g, t
    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(random_count):
        n = int(rng.integers(2, 13))
        g = rng.lognormal(0.0, 1.0, n)
        if rng.random() < 0.3:
            g = np.round(g, 0) + 1.0  # induce ties
        t = _pick_target(n, rng)
        if t is not None:
            yield g, t


def suite_auction(seed=0, scale=1000, jobs=1) -> SuiteReport:
    rep = SuiteReport("auction", seed, scale)
    count = 0
    worst = -math.inf
    agg = {k: True for k in ("ir_vcg", "ir_lindahl", "envy_free", "selection",
                             "cost_dominance", "strictness")}
    for g, t in auction_instances(seed, scale):
        if t is None:
            continue
        res = check_auction_instance(g, t)
        count += 1
        worst = max(worst, res["max_gain"])
        for key in agg:
            agg[key] &= bool(res[key])
    rep.add("truthfulness: max misreport gain", worst <= 1e-12, worst, 1e-12)
    rep.add("individual rationality (VCG)", agg["ir_vcg"], count, "all")
    rep.add("individual rationality (Lindahl)", agg["ir_lindahl"], count, "all")
    rep.add("envy-freeness (VCG)", agg["envy_free"], count, "all")
    rep.add("selection matches brute-force sort", agg["selection"], count, "all")
    rep.add("Lindahl cost <= VCG cost", agg["cost_dominance"], count, "all")
    rep.add("strict iff threshold exceeds cheapest selected", agg["strictness"], count, "all")
    rep.summary["instances"] = count
    return rep


RUNNERS = {
    "example": suite_example,
    "accuracy": suite_accuracy,
    "dp": suite_dp,
    "auction": suite_auction,
    "derivatives": suite_derivatives,
    "ordering": suite_ordering,
    "convergence": suite_convergence,
}


def run_suite(name: str, seed: int = 0, scale: int | None = None, jobs: int = 1) -> SuiteReport:
    if name not in RUNNERS:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return RUNNERS[name](seed=seed, scale=scale or DEFAULT_SCALE[name], jobs=jobs)
