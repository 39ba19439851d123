import sys
import json
import math
import hashlib
import logging
import argparse
from pathlib import Path
from typing import Any, Dict, Iterator, List, Literal, Optional, Tuple

import numpy as np
from decouple import Config, Csv, RepositoryEnv
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

import settings
import factor_lp
from dist_core import sample
from exact_eval import certify_instance, evaluate, exact_opt, random_instance, spm_factor
from helpers import (
    BudgetExceededError,
    DistributionError,
    EnumerationBudget,
    FeasibilityError,
    InstanceError,
    MechanismOutcome,
    PostedPriceError,
    PriceVector,
    RevenueEstimate,
)
from mechanisms import EagerSecondPrice, SequentialPostedPrice, uniform_esp_search, uniform_price_search
from myerson import AuctionInstance, KUnit, PositionAuction, load_instance, optimal_auction
from position_auction import exact_pa_values, pa_spm


logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SIMULATED = ("opt", "mp", "up", "me", "ue", "pa-spm")
PROGRAMS = ("spm-n", "esp", "esp-n")


#---------------CONFIG------------------------#

def parse_ints(text: str) -> Tuple[int, ...]:
    """``"1..10"``, ``"1,2,5"`` or a mix such as ``"1..3,8"``."""
    values: List[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            values.extend(range(int(lo), int(hi) + 1))
        else:
            values.append(int(part))
    return tuple(values)


def read_table_config(path: str) -> Dict[str, Any]:
    """
    Bound-table selection from a ``KEY=VALUE`` file. Keys are WHICH, N, H, K,
    TOLERANCE and SLOW; lists are comma separated and ``a..b`` is a range.
    """
    env = Config(RepositoryEnv(path))
    options: Dict[str, Any] = {}
    which = env("WHICH", default=None, cast=Csv())
    if which:
        options["which"] = tuple(which)
    for key, field in (("N", "ns"), ("H", "Hs"), ("K", "ks")):
        raw = env(key, default=None)
        if raw:
            options[field] = parse_ints(raw)
    tolerance = env("TOLERANCE", default=None)
    if tolerance is not None:
        options["tolerance"] = float(tolerance)
    if env("SLOW", default=False, cast=bool):
        options["slow"] = True
    return options


class RunConfig(BaseModel):
    """Validated options of one CLI invocation; hashed into every report."""
    model_config = ConfigDict(extra="forbid")

    command: Literal["tables", "certify", "simulate", "lp-solve", "checks"]
    which: Tuple[str, ...] = factor_lp.TABLES
    ns: Tuple[int, ...] = tuple(range(1, 11))
    Hs: Tuple[int, ...] = tuple(range(1, 11))
    ks: Tuple[int, ...] = ()
    golden: bool = False
    slow: bool = False
    tolerance: float = 1e-4
    seed: Optional[int] = None
    trials: int = 10_000
    output: Optional[str] = None
    format: Optional[Literal["csv", "md", "json"]] = None
    instance: Optional[str] = None
    suite: int = 0
    n_max: int = 3
    support: int = 3
    H: int = 1
    factor: Optional[float] = None
    mechanism: str = "mp"
    outcome_log: Optional[str] = None
    program: str = "spm-n"
    n: str = "2"
    k: int = 200
    max_profiles: Optional[int] = None
    max_threshold_profiles: Optional[int] = None
    inject_fault: bool = False

    @model_validator(mode="after")
    def _check_command(self) -> "RunConfig":
        if self.command in ("simulate", "certify") and self.seed is None:
            raise ValueError(f"--seed is required for {self.command}")
        if self.command == "simulate" and not self.instance:
            raise ValueError("simulate needs --instance")
        if self.command == "simulate" and self.mechanism not in SIMULATED:
            raise ValueError(f"--mechanism must be one of {SIMULATED}")
        if self.command == "certify" and not (self.instance or self.suite):
            raise ValueError("certify needs --instance or --suite")
        if self.command != "tables" and self.format not in (None, "json"):
            raise ValueError(f"{self.command} reports are json only")
        if self.program not in PROGRAMS:
            raise ValueError(f"--program must be one of {PROGRAMS}")
        if self.trials < 1:
            raise ValueError("--trials must be positive")
        return self

    def budget(self) -> EnumerationBudget:
        return EnumerationBudget(
            max_profiles=self.max_profiles or settings.PROFILE_BUDGET,
            max_threshold_profiles=self.max_threshold_profiles or settings.THRESHOLD_BUDGET,
        )

    def canonical(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", exclude={"output", "outcome_log"})

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.canonical(), sort_keys=True).encode()).hexdigest()


def report(config: RunConfig, result: Dict[str, Any]) -> str:
    payload = {
        "command": config.command,
        "config": config.canonical(),
        "config_hash": config.config_hash(),
        "version": settings.VERSION,
        "result": result,
    }
    return json.dumps(payload, sort_keys=True, indent=2)


def emit(text: str, output: Optional[str]) -> None:
    if output:
        Path(output).write_text(text)
        logger.info(f"wrote {output}")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


#---------------COMMANDS------------------------#

def cmd_tables(config: RunConfig) -> int:
    table_config = factor_lp.TableConfig(
        which=config.which, ns=config.ns, Hs=config.Hs, ks=config.ks,
        tolerance=config.tolerance, slow=config.slow,
    )
    table = factor_lp.bound_tables(table_config)
    status = EXIT_OK
    problems = table.dominance_violations()
    for problem in problems:
        logger.error(f"dominance: {problem}")
    if problems:
        status = EXIT_FAIL
    mismatches = []
    if config.golden:
        diff = table.compare_golden(config.tolerance)
        mismatches = diff.to_dict(orient="records")
        if len(diff):
            logger.error(f"{len(diff)} cells differ from the reference values:\n{diff.to_string(index=False)}")
            status = EXIT_FAIL
        else:
            logger.info(f"all cells match the reference values within {config.tolerance:g}")

    fmt = config.format or "md"
    if fmt == "csv":
        if config.output:
            table.to_csv(config.output)
        else:
            table.to_csv(sys.stdout)
    elif fmt == "md":
        emit(table.to_markdown(), config.output)
    else:
        result = {"cells": table.to_records(), "golden_mismatches": mismatches, "dominance_violations": problems}
        emit(report(config, result), config.output)
    return status


def _mc_certificate(instance: AuctionInstance, factor: float, config: RunConfig, rng: np.random.Generator) -> Dict:
    opt_stream, mp_stream = rng.spawn(2)
    opt = evaluate(instance, "opt", config.trials, opt_stream, config.budget())
    mp = evaluate(instance, "mp", config.trials, mp_stream, config.budget())
    up = uniform_price_search(instance).revenue
    margin = max(mp.mean, up) - factor * opt.mean
    sigma = math.hypot(factor * opt.stderr, mp.stderr)
    passed = margin >= -4 * sigma
    if passed and margin < 0:
        logger.warning(f"Monte-Carlo near miss: margin {margin:.6f} within 4 sigma ({sigma:.6f})")
    return {
        "opt": opt.to_dict(), "mp": mp.to_dict(), "up": up, "factor": factor,
        "margin": margin, "sigma": sigma, "passed": passed, "exact": False,
    }


def _certify_one(instance: AuctionInstance, config: RunConfig, rng: np.random.Generator) -> Dict:
    if isinstance(instance.feasibility, PositionAuction):
        pa = exact_pa_values(instance, config.budget())
        factor = pa.bound if config.factor is None else config.factor
        margin = pa.spm - factor * pa.opt
        return dict(pa.to_dict(), factor=factor, margin=margin, passed=margin >= -1e-9, exact=True)
    try:
        cert = certify_instance(instance, factor=config.factor, budget=config.budget())
        return dict(cert.to_dict(), exact=True)
    except BudgetExceededError as e:
        logger.info(f"{e}; certifying by Monte-Carlo")
    factor = config.factor
    if factor is None:
        if not isinstance(instance.feasibility, KUnit):
            raise FeasibilityError("certification supports k-unit and position-auction instances")
        factor = spm_factor(instance)
    return _mc_certificate(instance, factor, config, rng)


def random_suite(config: RunConfig) -> Iterator[Tuple[int, AuctionInstance]]:
    rng = np.random.default_rng(config.seed)
    for _ in range(config.suite):
        n = int(rng.integers(1, config.n_max + 1))
        size = int(rng.integers(1, config.support + 1))
        seed = int(rng.integers(2**32))
        yield seed, random_instance(seed, n, size, KUnit(config.H))


def cmd_certify(config: RunConfig) -> int:
    rng = np.random.default_rng(config.seed)
    entries = []
    if config.instance:
        entry = _certify_one(load_instance(config.instance), config, rng)
        entries.append(dict(entry, source=config.instance))
    for seed, instance in random_suite(config):
        entries.append(dict(_certify_one(instance, config, rng), source=f"random:{seed}", n=instance.n))
    failed = [e for e in entries if not e["passed"]]
    result = {
        "instances": entries,
        "checked": len(entries),
        "failed": len(failed),
        "min_margin": min(e["margin"] for e in entries),
    }
    logger.info(f"certified {len(entries) - len(failed)} of {len(entries)} instances")
    emit(report(config, result), config.output)
    return EXIT_FAIL if failed else EXIT_OK


def simulate_outcomes(
    instance: AuctionInstance, mechanism: str, trials: int, rng: np.random.Generator
) -> Iterator[MechanismOutcome]:
    """One outcome per trial of the tagged mechanism; values and prices use separate child streams."""
    value_stream, price_stream = rng.spawn(2)
    values = np.column_stack([sample(d, value_stream, size=trials) for d in instance.bidders])
    if mechanism == "opt":
        auction = optimal_auction(instance)
        for row in values:
            yield auction(row.tolist())
        return
    if mechanism in ("mp", "me"):
        kind = SequentialPostedPrice if mechanism == "mp" else EagerSecondPrice
        thresholds = optimal_auction(instance).resample_matrix(price_stream, trials)
        for row, t in zip(values, thresholds):
            yield kind(instance, PriceVector.from_thresholds(t, instance.tops))(row.tolist())
        return
    if mechanism == "up":
        fixed = SequentialPostedPrice(instance, PriceVector.uniform(uniform_price_search(instance).price, instance.n))
    else:
        fixed = EagerSecondPrice(instance, PriceVector.uniform(uniform_esp_search(instance).price, instance.n))
    for row in values:
        yield fixed(row.tolist())


def cmd_simulate(config: RunConfig) -> int:
    instance = load_instance(config.instance)
    rng = np.random.default_rng(config.seed)
    budget = config.budget()
    result: Dict[str, Any] = {"mechanism": config.mechanism, "trials": config.trials, "n": instance.n}

    if config.mechanism == "pa-spm":
        if config.outcome_log:
            logger.warning("position-auction runs report expected clicks; no per-trial outcome log is written")
        simulated = pa_spm(instance, config.trials, rng, budget)
        estimate = simulated.revenue
        result["position_auction"] = simulated.to_dict()
        try:
            opt = exact_pa_values(instance, budget).opt
        except BudgetExceededError:
            opt = None
    else:
        revenues = np.empty(config.trials)
        log = open(config.outcome_log, "w") if config.outcome_log else None
        try:
            for t, outcome in enumerate(simulate_outcomes(instance, config.mechanism, config.trials, rng)):
                revenues[t] = outcome.revenue
                if log:
                    log.write(outcome.to_json() + "\n")
        finally:
            if log:
                log.close()
        estimate = RevenueEstimate.from_moments([(float(revenues.sum()), float(revenues @ revenues), config.trials)])
        try:
            opt = exact_opt(instance, budget).revenue
        except BudgetExceededError:
            opt = None

    result["revenue"] = estimate.to_dict()
    result["exact_opt"] = opt
    if opt:
        ratio = estimate.mean / opt
        result["ratio"] = ratio
        result["ratio_ci"] = [ratio - 1.96 * estimate.stderr / opt, ratio + 1.96 * estimate.stderr / opt]
    logger.info(f"{config.mechanism}: revenue {estimate.mean:.6f} +- {estimate.stderr:.6f}")
    emit(report(config, result), config.output)
    return EXIT_OK


def cmd_lp_solve(config: RunConfig) -> int:
    n = math.inf if config.n.lower() in ("inf", "infinity") else int(config.n)
    if config.program == "spm-n":
        lp = factor_lp.build_lp_spm_n(n, config.k)
    elif config.program == "esp":
        lp = factor_lp.build_lp_esp(config.k)
    else:
        lp = factor_lp.build_lp_esp_n(n, config.k)
    solution = factor_lp.solve_lp(lp)
    optimal = solution.status == factor_lp.OPTIMAL
    result = {
        "lp": lp.name,
        "shape": list(lp.shape),
        "status": solution.status,
        "value": solution.objective if optimal else None,
        "reciprocal": solution.reciprocal if optimal else None,
        "iterations": solution.iterations,
        "bland_pivots": solution.bland_pivots,
        "certified": solution.certify(lp),
    }
    emit(report(config, result), config.output)
    return EXIT_OK if optimal else EXIT_FAIL


def cmd_checks(config: RunConfig) -> int:
    rng = np.random.default_rng(config.seed if config.seed is not None else 0)
    r_kernel = factor_lp.flipped_r_kernel if config.inject_fault else factor_lp.kernel_r_n
    reports = [factor_lp.monotone_kernel_check(n_max=config.n_max, r_kernel=r_kernel)]
    for n, H, s_total in factor_lp.extremal_cells():
        reports.append(factor_lp.polynomial_extremal_check(n, H, s_total, config.trials, rng))
    failed = [r for r in reports if not r.passed]
    for r in failed:
        logger.error(f"{r.name} failed: {r.witness}")
    result = {"checks": [r.to_dict() for r in reports], "failed": len(failed)}
    emit(report(config, result), config.output)
    return EXIT_FAIL if failed else EXIT_OK


COMMANDS = {
    "tables": cmd_tables,
    "certify": cmd_certify,
    "simulate": cmd_simulate,
    "lp-solve": cmd_lp_solve,
    "checks": cmd_checks,
}


#---------------ARGUMENTS------------------------#

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", "-o", help="Write the result here instead of stdout")
    common.add_argument("--format", choices=["csv", "md", "json"], help="Output format (tables: default md)")
    common.add_argument("--seed", type=int, help="Root seed; required for simulate and certify")
    common.add_argument("--trials", type=int, help="Monte-Carlo trials (default 10000)")
    common.add_argument("--max-profiles", type=int, help="Override the value-profile enumeration budget")
    common.add_argument("--max-threshold-profiles", type=int, help="Override the threshold-profile budget")

    parser = argparse.ArgumentParser(
        prog="app.py",
        description="Approximation bounds and simulations for posted-price and eager second-price mechanisms.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python src/app.py tables --which multiunit --H 1..10 --golden
  python src/app.py tables --which esp-k --k 50
  python src/app.py certify --instance src/instances/two_uniform.json --seed 1
  python src/app.py certify --suite 100 --seed 7
  python src/app.py simulate --instance src/instances/two_uniform.json --mechanism mp --trials 20000 --seed 3
  python src/app.py lp-solve --program esp --k 400
  python src/app.py checks --n-max 50 --trials 10000
""",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    tables = commands.add_parser("tables", parents=[common], help="Regenerate bound tables")
    tables.add_argument("--which", help=f"Comma-separated tables from {', '.join(factor_lp.TABLES)}")
    tables.add_argument("--n", dest="ns", help="Bidder counts, e.g. 1..10")
    tables.add_argument("--H", dest="Hs", help="Unit counts, e.g. 1..10")
    tables.add_argument("--k", dest="ks", help="Discretization grid sizes, e.g. 200,400")
    tables.add_argument("--golden", action="store_true", help="Compare against the reference values")
    tables.add_argument("--slow", action="store_true", help="Include k = 1600")
    tables.add_argument("--tolerance", type=float)
    tables.add_argument("--config", help="KEY=VALUE file with WHICH, N, H, K, TOLERANCE, SLOW")

    certify = commands.add_parser("certify", parents=[common], help="Certify revenue guarantees")
    certify.add_argument("--instance", help="Instance JSON file")
    certify.add_argument("--suite", type=int, default=0, help="Number of random instances")
    certify.add_argument("--n-max", type=int, default=3, help="Largest bidder count in the random suite")
    certify.add_argument("--support", type=int, default=3, help="Largest support size in the random suite")
    certify.add_argument("--H", type=int, default=1, help="Units in the random suite")
    certify.add_argument("--factor", type=float, help="Override the certified factor")

    simulate = commands.add_parser("simulate", parents=[common], help="Simulate a mechanism on an instance")
    simulate.add_argument("--instance", required=True)
    simulate.add_argument("--mechanism", choices=SIMULATED, default="mp")
    simulate.add_argument("--outcome-log", help="JSON-lines file with one outcome per trial")

    lp = commands.add_parser("lp-solve", parents=[common], help="Solve one factor-revealing LP")
    lp.add_argument("--program", choices=PROGRAMS, default="spm-n")
    lp.add_argument("--n", default="2", help="Bidder count or inf")
    lp.add_argument("--k", type=int, default=200)

    checks = commands.add_parser("checks", parents=[common], help="Kernel and polynomial property checks")
    checks.add_argument("--n-max", type=int, default=50)
    checks.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    # unset flags must not mask values from a --config file
    options = {k: v for k, v in vars(args).items() if v is not None and v is not False and k != "config"}
    if getattr(args, "config", None):
        options = {**read_table_config(args.config), **options}
    for key in ("ns", "Hs", "ks"):
        if isinstance(options.get(key), str):
            options[key] = parse_ints(options[key])
    if isinstance(options.get("which"), str):
        options["which"] = tuple(w.strip() for w in options["which"].split(",") if w.strip())
    return RunConfig(**options)


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=settings.LOG_LEVEL, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        config = config_from_args(args)
        factor_lp.TableConfig(which=config.which)
    except (ValidationError, ValueError) as e:
        logger.error(f"invalid options: {e}")
        return EXIT_USAGE
    try:
        return COMMANDS[config.command](config)
    except (DistributionError, InstanceError, FeasibilityError, BudgetExceededError, FileNotFoundError) as e:
        logger.error(str(e))
        return EXIT_USAGE
    except PostedPriceError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
