"""Batch command-line front end.

Every command writes its result to ``--out`` (or stdout) and a run manifest
to ``<out>.manifest.json`` (or stderr): command, effective config, seed,
package version, RNG identifier and a SHA-256 digest of each output.

Exit codes
----------
0  success
2  usage error (argparse)
3  DomainError: a parameter is out of range
4  ThresholdError: no threshold bidder for the VCG price
5  NoBracketError / a regime without an interior equilibrium
6  ParseError or RangeError in an input file
7  a verification suite or ordering assertion failed
8  BudgetError: FairQuery budget cannot buy a single right
9  ModelError: invalid distribution specification
10 any other package error
11 an input or output file could not be read or written
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import auction as au
from .cost_model import SWEEP_COLUMNS, CostCurve, sweep
from .dp_core import (
    GENERATOR_ID, BitDatabase, dp_certificate, cohort_size, gr_publish, make_accuracy_target,
    make_rng, required_cohort, true_statistic,
)
from .equilibrium import OVER_DEMAND, ZERO_PROVISION, compare_regimes
from .errors import (
    BudgetError, DomainError, ModelError, NoBracketError, ParseError, ProvisionError,
    ThresholdError,
)
from .population_io import (
    PopulationConfig, dumps_population, empirical_quantile_model, generate_population,
    load_model, load_population,
)
from .verify import SUITES, example_rows, run_suite

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_THRESHOLD = 4
EXIT_NO_BRACKET = 5
EXIT_PARSE = 6
EXIT_CHECK_FAILED = 7
EXIT_BUDGET = 8
EXIT_MODEL = 9
EXIT_OTHER = 10
EXIT_IO = 11

_ERROR_CODES = (
    (ParseError, EXIT_PARSE),
    (ModelError, EXIT_MODEL),
    (DomainError, EXIT_DOMAIN),
    (ThresholdError, EXIT_THRESHOLD),
    (NoBracketError, EXIT_NO_BRACKET),
    (BudgetError, EXIT_BUDGET),
    (ProvisionError, EXIT_OTHER),
)


class UsageError(Exception):
    """A required option was supplied neither as a flag nor through --config."""


class CommandResult:
    """Serialized output of one command plus its exit status."""

    def __init__(self, payload: str, status: int = EXIT_OK):
        self.payload = payload
        self.status = status


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"missing required option(s): {flags}")


def _model_and_n(args):
    if args.population is not None:
        pop = load_population(args.population)
        model = empirical_quantile_model(pop)
        n = args.n if args.n is not None else pop.n
        return model, n, pop
    _require(args, "model", "n")
    return load_model(args.model), args.n, None


def parse_grid(spec: str) -> list[float]:
    """``"start:stop:step"`` (inclusive) or a comma-separated list."""
    try:
        if ":" in spec:
            start, stop, step = (float(x) for x in spec.split(":"))
            if step <= 0:
                raise ValueError("step must be positive")
            count = int(round((stop - start) / step)) + 1
            return [round(start + i * step, 12) for i in range(count)]
        return [float(x) for x in spec.split(",") if x.strip()]
    except ValueError as exc:
        raise DomainError(f"bad grid {spec!r}: {exc}") from None


# --- commands ---------------------------------------------------------------

def cmd_example(args) -> CommandResult:
    report = run_suite("example", seed=args.seed, scale=args.n or 1000)
    if args.format == "json":
        return CommandResult(_json(report.to_dict()),
                             EXIT_OK if report.passed else EXIT_CHECK_FAILED)
    lines = [f"{'alpha':>6} {'beta':>7} {'eps*N':>10} {'H/N':>9}   quoted",
             "-" * 48]
    for row in example_rows(args.n or 1000):
        lines.append(
            f"{row['alpha']:>6.2f} {row['beta']:>7.4f} {row['eps_times_n']:>10.4f} "
            f"{row['cohort_share']:>9.5f}   eps~{row['quoted_eps_times_n']}/N, "
            f"H~{row['quoted_cohort_share']}N"
        )
    lines.append(f"checks: {sum(c.passed for c in report.checks)}/{len(report.checks)} passed")
    return CommandResult("\n".join(lines) + "\n", EXIT_OK if report.passed else EXIT_CHECK_FAILED)


def cmd_gen_pop(args) -> CommandResult:
    data = dict(args.config_data or {})
    if args.n is not None:
        data["n"] = args.n
    if args.seed is not None:
        data["seed"] = args.seed
    if "n" not in data or "seed" not in data:
        raise UsageError("gen-pop needs --n and --seed (flags or config)")
    config = PopulationConfig.from_dict(data)
    args.effective_config = config.to_dict()
    return CommandResult(dumps_population(generate_population(config)))


def _procure(pop, mechanism, args):
    if mechanism == "fairquery":
        _require(args, "budget", "beta")
        return au.fair_query(pop, args.budget, args.beta)
    _require(args, "alpha", "beta")
    target = make_accuracy_target(args.alpha, args.beta)
    if mechanism == "vcg":
        return au.min_cost_auction(pop, target)
    return au.lindahl_procurement(pop, target)


def cmd_auction(args) -> CommandResult:
    _require(args, "population")
    pop = load_population(args.population)
    outcome = _procure(pop, args.mechanism, args)
    report = outcome.to_dict()
    report["individually_rational"] = au.verify_individual_rationality(outcome, pop)
    return CommandResult(_json(report))


def cmd_publish(args) -> CommandResult:
    _require(args, "population", "alpha", "beta", "seed")
    pop = load_population(args.population)
    target = make_accuracy_target(args.alpha, args.beta)
    outcome = _procure(pop, args.mechanism, args)
    db = BitDatabase(pop.bits)
    stat = gr_publish(db, outcome.selected, target, make_rng(args.seed))
    stat_dict = stat.to_dict()
    stat_dict["seed"] = args.seed
    truth = true_statistic(db)
    report = {
        "mechanism": args.mechanism,
        "generator_id": GENERATOR_ID,
        "outcome": outcome.to_dict(),
        "statistic": stat_dict,
        "true_statistic": truth,
        "error": stat.value - truth,
        "within_alpha": abs(stat.value - truth) <= target.alpha,
        "certificates": {
            "dp_epsilon": dp_certificate(target, pop.n),
            "sensitivity": 1.0,
            "accuracy": {
                "alpha": target.alpha,
                "beta": target.beta,
                "m": target.m,
                "cohort_real": cohort_size(target, pop.n),
                "cohort_required": required_cohort(target, pop.n),
                "cohort_purchased": outcome.k,
            },
            "individually_rational": au.verify_individual_rationality(outcome, pop),
        },
    }
    return CommandResult(_json(report))


def cmd_cost_sweep(args) -> CommandResult:
    _require(args, "beta", "grid")
    model, n, _ = _model_and_n(args)
    curve = CostCurve(model, n, args.beta)
    rows = sweep(curve, parse_grid(args.grid))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS + ("ordered",))
    violations = 0
    for r in rows:
        ok = 0.0 < r["dC_lindahl"] < r["dC_vcg"]
        violations += not ok
        w.writerow([repr(float(r[c])) for c in SWEEP_COLUMNS] + [int(ok)])
    return CommandResult(buf.getvalue(), EXIT_CHECK_FAILED if violations else EXIT_OK)


def cmd_equilibrium(args) -> CommandResult:
    model, n, pop = _model_and_n(args)
    if pop is not None:
        args.eta_bar = pop.eta_bar if args.eta_bar is None else args.eta_bar
        args.eta_sum = pop.eta_sum if args.eta_sum is None else args.eta_sum
    _require(args, "beta", "eta_bar", "eta_sum")
    cmp = compare_regimes(model, n, args.beta, args.eta_bar, args.eta_sum)
    status = EXIT_OK
    if any(t in (ZERO_PROVISION, OVER_DEMAND) for t in cmp.tags.values()):
        status = EXIT_NO_BRACKET
    elif cmp.ordering_holds is False:
        status = EXIT_CHECK_FAILED
    return CommandResult(_json(cmp.to_dict()), status)


def cmd_verify(args) -> CommandResult:
    _require(args, "seed")
    names = SUITES if args.suite == "all" else (args.suite,)
    reports = [run_suite(s, seed=args.seed, scale=args.scale, jobs=args.jobs) for s in names]
    passed = all(r.passed for r in reports)
    payload = {"passed": passed, "suites": [r.to_dict() for r in reports]}
    return CommandResult(_json(payload), EXIT_OK if passed else EXIT_CHECK_FAILED)


# --- plumbing ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="RNG seed (required for randomized commands)")
    common.add_argument("--out", type=Path, help="output file; stdout when omitted")
    common.add_argument("--jobs", type=int, default=1, help="parallel partitions for Monte Carlo")
    common.add_argument("--config", type=Path, help="JSON file supplying option values")

    parser = argparse.ArgumentParser(
        prog="dpprovision",
        description="Private provision of differentially private statistics.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("example", parents=[common], help="reproduce the worked example table")
    p.add_argument("--n", type=int, help="population size (default 1000)")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(func=cmd_example)

    p = sub.add_parser("gen-pop", parents=[common], help="generate a synthetic population CSV")
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_gen_pop)

    for name, func, mechs in (("auction", cmd_auction, ("vcg", "lindahl", "fairquery")),
                              ("publish", cmd_publish, ("vcg", "lindahl"))):
        p = sub.add_parser(name, parents=[common], help=f"run {name} on a population file")
        p.add_argument("--population", type=Path)
        p.add_argument("--mechanism", choices=mechs, default="vcg")
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
        if name == "auction":
            p.add_argument("--budget", type=float, help="FairQuery budget")
        p.set_defaults(func=func)

    for name, func in (("cost-sweep", cmd_cost_sweep), ("equilibrium", cmd_equilibrium)):
        p = sub.add_parser(name, parents=[common])
        src = p.add_mutually_exclusive_group()
        src.add_argument("--model", type=Path, help="JSON quantile model {kind, params}")
        src.add_argument("--population", type=Path, help="population CSV (empirical model)")
        p.add_argument("--n", type=float, help="population measure N")
        p.add_argument("--beta", type=float)
        if name == "cost-sweep":
            p.add_argument("--grid", default=None, help='"start:stop:step" or "a,b,c"')
        else:
            p.add_argument("--eta-bar", type=float)
            p.add_argument("--eta-sum", type=float)
        p.set_defaults(func=func)

    p = sub.add_parser("verify", parents=[common], help="run a verification suite")
    p.add_argument("--suite", choices=SUITES + ("all",), default="all")
    p.add_argument("--scale", type=int, help="trials / instances / population size")
    p.set_defaults(func=cmd_verify)
    return parser


def _apply_config(args):
    args.config_data = None
    if args.config is None:
        return
    try:
        data = json.loads(Path(args.config).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{args.config}: {exc.msg}", line=exc.lineno) from None
    if not isinstance(data, dict):
        raise ParseError(f"{args.config}: expected a JSON object", line=1)
    args.config_data = data
    if args.command == "gen-pop":
        return
    for key, value in data.items():
        dest = key.replace("-", "_")
        if getattr(args, dest, None) is None:
            setattr(args, dest, Path(value) if dest in ("model", "population", "out") else value)


def _manifest(args, outputs, caught) -> dict:
    config = {k: v for k, v in vars(args).items()
              if k not in ("func", "config_data", "effective_config")}
    if getattr(args, "effective_config", None):
        config["population_config"] = args.effective_config
    return {
        "command": args.command,
        "config": config,
        "seed": args.seed,
        "artifact_version": __version__,
        "generator_id": GENERATOR_ID,
        "outputs": outputs,
        "warnings": sorted({f"{w.category.__name__}: {w.message}" for w in caught}),
    }


def _emit(args, result, caught) -> None:
    data = result.payload.encode("utf-8")
    digest = hashlib.sha256(data).hexdigest()
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_bytes(data)
        manifest = _manifest(args, [{"path": str(args.out), "sha256": digest}], caught)
        Path(str(args.out) + ".manifest.json").write_text(_json(manifest))
    else:
        sys.stdout.write(result.payload)
        sys.stdout.flush()
        manifest = _manifest(args, [{"path": "-", "sha256": digest}], caught)
        print(json.dumps(manifest, sort_keys=True, default=_jsonable), file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            result = args.func(args)
        _emit(args, result, caught)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ProvisionError as exc:
        code = next(code for cls, code in _ERROR_CODES if isinstance(exc, cls))
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return result.status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
