"""Synthetic populations, CSV persistence and the empirical bridge to cost curves."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .auction import Population
from .cost_model import Empirical, QuantileModel, model_from_dict
from .dp_core import make_rng
from .errors import ModelError, ParseError, RangeError

CSV_HEADER = ("id", "bit", "gamma", "eta", "income")


@dataclass(frozen=True)
class PopulationConfig:
    """Recipe for :func:`generate_population`.

    ``eta_model`` is ``{"a", "b", "eta_bar"}`` for a Beta(a, b) scaled onto
    ``[0, eta_bar]``; ``income_model`` is ``{"mu", "sigma"}`` of a lognormal.
    """

    n: int
    gamma_model: dict = field(default_factory=lambda: {"kind": "lognormal",
                                                       "params": {"mu": 0.0, "sigma": 1.0}})
    eta_model: dict = field(default_factory=lambda: {"a": 2.0, "b": 5.0, "eta_bar": 1.0})
    bit_prevalence: float = 0.5
    gamma_bit_correlation: float = 0.0
    income_model: dict = field(default_factory=lambda: {"mu": 10.0, "sigma": 0.5})
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 2:
            raise ModelError(f"population size must be an integer >= 2, got {self.n}")
        if not 0.0 <= self.bit_prevalence <= 1.0:
            raise ModelError(f"bit prevalence must lie in [0, 1], got {self.bit_prevalence}")
        if not -1.0 <= self.gamma_bit_correlation <= 1.0:
            raise ModelError(f"correlation must lie in [-1, 1], got {self.gamma_bit_correlation}")
        try:
            a, b, bar = (float(self.eta_model[k]) for k in ("a", "b", "eta_bar"))
            mu, sigma = float(self.income_model["mu"]), float(self.income_model["sigma"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"malformed eta or income model: {exc}") from exc
        if not (a > 0 and b > 0 and bar > 0 and math.isfinite(bar)):
            raise ModelError("eta model needs a, b, eta_bar > 0")
        if not (sigma > 0 and math.isfinite(mu)):
            raise ModelError("income model needs finite mu and sigma > 0")
        model_from_dict(self.gamma_model)

    @classmethod
    def from_dict(cls, data: dict) -> "PopulationConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ModelError(f"unknown config fields: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "PopulationConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


def generate_population(config: PopulationConfig) -> Population:
    """Draw a population deterministically from ``config.seed``.

    ``gamma`` and the bit share a Gaussian copula: latent normals ``z1, z2``
    with correlation ``rho``; ``gamma = Q(Phi(z1))`` and ``bit = z2 > Phi^-1(1 - prevalence)``.
    ``eta`` and income are drawn independently.
    """
    rng = make_rng(config.seed)
    n = int(config.n)
    model = model_from_dict(config.gamma_model)
    rho = float(config.gamma_bit_correlation)

    z1 = rng.standard_normal(n)
    z2 = rho * z1 + math.sqrt(max(0.0, 1.0 - rho * rho)) * rng.standard_normal(n)
    u = special.ndtr(z1)
    # keep u strictly inside (0, 1) for the quantile call
    u = np.clip(u, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    if isinstance(model, Empirical):
        gamma = model.quantile(u)
    else:
        gamma = np.asarray(model.quantile(u), dtype=float)
    prev = float(config.bit_prevalence)
    if prev <= 0.0:
        bits = np.zeros(n, dtype=np.int8)
    elif prev >= 1.0:
        bits = np.ones(n, dtype=np.int8)
    else:
        bits = (z2 > special.ndtri(1.0 - prev)).astype(np.int8)

    em = config.eta_model
    eta = float(em["eta_bar"]) * rng.beta(float(em["a"]), float(em["b"]), n)
    income = rng.lognormal(float(config.income_model["mu"]),
                           float(config.income_model["sigma"]), n)
    if np.any(gamma <= 0):
        raise ModelError("gamma model produced nonpositive draws")
    return Population(ids=np.arange(n), bits=bits, gamma=gamma, eta=eta, income=income)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dumps_population(pop: Population) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for i, b, g, e, y in zip(pop.ids, pop.bits, pop.gamma, pop.eta, pop.income):
        w.writerow((int(i), int(b), _fmt(g), _fmt(e), _fmt(y)))
    return buf.getvalue()


def save_population(pop: Population, path) -> None:
    """Write ``id,bit,gamma,eta,income`` with 17 significant digits."""
    Path(path).write_text(dumps_population(pop), encoding="utf-8")


def loads_population(text: str) -> Population:
    rows = csv.reader(io.StringIO(text))
    try:
        header = next(rows)
    except StopIteration:
        raise ParseError("empty file", line=1) from None
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise ParseError(f"expected header {','.join(CSV_HEADER)}, got {','.join(header)}", line=1)

    cols = {k: [] for k in CSV_HEADER}
    last_id = None
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise ParseError(f"expected {len(CSV_HEADER)} fields, got {len(row)}", line=lineno)
        try:
            i, b = int(row[0]), int(row[1])
            g, e, y = float(row[2]), float(row[3]), float(row[4])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        if last_id is not None and i <= last_id:
            raise RangeError(f"ids must be strictly ascending, got {i} after {last_id}", line=lineno)
        if b not in (0, 1):
            raise RangeError(f"bit must be 0 or 1, got {b}", line=lineno)
        if not (g > 0 and math.isfinite(g)):
            raise RangeError(f"gamma must be positive, got {row[2]}", line=lineno)
        if not (e >= 0 and math.isfinite(e)):
            raise RangeError(f"eta must be nonnegative, got {row[3]}", line=lineno)
        if not (y > 0 and math.isfinite(y)):
            raise RangeError(f"income must be positive, got {row[4]}", line=lineno)
        last_id = i
        for k, v in zip(CSV_HEADER, (i, b, g, e, y)):
            cols[k].append(v)

    if len(cols["id"]) < 2:
        raise RangeError(f"population needs at least 2 rows, got {len(cols['id'])}")
    return Population(ids=cols["id"], bits=cols["bit"], gamma=cols["gamma"],
                      eta=cols["eta"], income=cols["income"])


def load_population(path) -> Population:
    return loads_population(Path(path).read_text(encoding="utf-8"))


def empirical_quantile_model(pop: Population) -> Empirical:
    """Step-distribution model over the population's gammas.

    A single-valued population yields a model with ``degenerate`` set, which
    the marginal-cost functions refuse.
    """
    if pop.n < 2:
        raise RangeError(f"need at least 2 consumers, got {pop.n}")
    if np.any(pop.gamma <= 0):
        raise RangeError("gamma must be positive")
    return Empirical(pop.gamma)


def load_model(path) -> QuantileModel:
    """Read a ``{kind, params}`` JSON model file."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc), line=exc.lineno) from None
    return model_from_dict(data)
