"""Command-line interface: ``erpm {enumerate,simulate,estimate,loglik,gof}``.

Exit codes: 0 success, 1 invalid input, 2 estimation did not converge,
3 degeneracy (diverging parameters, MLE at infinity, constant statistic).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .diagnostics import gof
from .errors import (
    DegeneracyError,
    DegenerateStatisticError,
    ERPMError,
    MLEAtInfinityError,
)
from .estimation import estimate
from .exact import ModelSpec, exact_distribution
from .io import (
    DataValidationError,
    emit_results,
    format_results_table,
    load_dataset,
    parse_model_config,
    write_trace_csv,
)
from .likelihood import PathConfig, path_sampling_loglik
from .partition import SizeBounds
from .sampler import ChainConfig, run_chain
from .statistics import CovariateStore, StatisticSpec, UnknownCovariateError, observed_statistics

log = logging.getLogger("erpm")

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_DEGENERATE = 0, 1, 2, 3


def _add_data_args(p: argparse.ArgumentParser, required: bool) -> None:
    p.add_argument("--partition", required=required, help="CSV with actor_id,group_id")
    p.add_argument("--attributes", help="CSV with actor_id and one column per attribute")
    p.add_argument("--dyadic", action="append", default=[],
                   help="edge-list CSV actor_i,actor_j[,value]; NAME=PATH sets the covariate name")


def _load(args):
    if not args.partition:
        return None
    return load_dataset(args.partition, args.attributes, args.dyadic)


def _data_record(args) -> dict:
    rec = {}
    if args.partition:
        rec["partition"] = str(Path(args.partition).resolve())
    if args.attributes:
        rec["attributes"] = str(Path(args.attributes).resolve())
    rec["dyadic"] = [d if "=" in d else str(Path(d).resolve()) for d in args.dyadic]
    return rec


def _actors(args, data) -> int:
    if data is not None:
        return data.partition.n
    if args.n is None:
        raise DataValidationError("give --partition or --n")
    return args.n


def _check_covariates(m: ModelSpec, cov: CovariateStore | None, n: int) -> CovariateStore:
    cov = cov if cov is not None else CovariateStore(n)
    try:
        cov.validate(m.specs)
    except UnknownCovariateError as exc:
        raise DataValidationError(str(exc.args[0])) from exc
    return cov


# -- subcommands ---------------------------------------------------------------------------------


def cmd_enumerate(args) -> int:
    data = _load(args)
    n = _actors(args, data)
    cfg = parse_model_config(args.model, n)
    if not cfg.has_alpha:
        raise DataValidationError("enumerate needs model.alpha in the config")
    cov = _check_covariates(cfg.model, data.covariates if data else None, n)
    dist = exact_distribution(cfg.model, cov, n)
    print(f"partitions in support: {len(dist.rgs)}")
    print(f"log normalizing constant: {dist.log_kappa:.10g}")
    for name, e in zip(cfg.model.names, dist.expected_statistics()):
        print(f"E[{name}] = {e:.6g}")
    if data is not None:
        print(f"probability of observed partition: {dist.probability_of(data.partition):.6g}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["partition", "probability", *cfg.model.names])
            for p, pr, s in zip(dist.partitions, dist.probabilities, dist.stats):
                w.writerow([repr(p), repr(float(pr)), *(repr(float(x)) for x in s)])
    return EXIT_OK


def cmd_simulate(args) -> int:
    data = _load(args)
    n = _actors(args, data)
    cfg = parse_model_config(args.model, n)
    if not cfg.has_alpha:
        raise DataValidationError("simulate needs model.alpha in the config")
    cov = _check_covariates(cfg.model, data.covariates if data else None, n)
    sc = cfg.sampler
    chain_cfg = ChainConfig(
        sc.mixture,
        args.burnin if args.burnin is not None else sc.burn_in,
        args.thin if args.thin is not None else sc.thinning,
        args.seed,
        sc.bounds_mode,
        "observed" if data is not None else "random_valid",
        sc.backend,
        sc.refresh_every,
    )
    trace = run_chain(cfg.model, cov, chain_cfg, args.samples,
                      initial=data.partition if data else None, n=n)
    write_trace_csv(args.out, cfg.model.names, trace.stats, trace.num_groups())
    means = trace.stats.mean(axis=0) if len(trace) else np.zeros(len(cfg.model.specs))
    for name, v in zip(cfg.model.names, means):
        print(f"mean {name} = {v:.6g}")
    print(f"acceptance rates (merge/split, permute, transfer): {trace.acceptance_rates()}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    data = _load(args)
    cfg = parse_model_config(args.model, data.partition.n)
    cov = _check_covariates(cfg.model, data.covariates, data.partition.n)
    s_obs = observed_statistics(data.partition, cfg.model.specs, cov)
    result = estimate(cfg.model, s_obs, cov, data.partition, cfg.estimation, args.seed)
    loglik = None
    if args.loglik and result.converged:
        pc = _path_config(cfg.path, args.seed)
        loglik = path_sampling_loglik(cfg.model.with_alpha(result.alpha_hat), s_obs, cov,
                                      data.partition, pc).loglik
    paths = emit_results(args.out, result, cfg.resolved(), args.seed, _data_record(args), loglik)
    sys.stdout.write(format_results_table(result, loglik))
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def _path_config(pc: PathConfig, seed: int, **overrides) -> PathConfig:
    d = {k: getattr(pc, k) for k in pc.__dataclass_fields__}
    d["seed"] = seed
    d.update({k: v for k, v in overrides.items() if v is not None})
    return PathConfig(**d)


def _load_fit(args):
    with open(args.fit) as fh:
        fit = json.load(fh)
    rec = fit.get("data", {})
    if not args.partition:
        args.partition = rec.get("partition")
    if not args.attributes:
        args.attributes = rec.get("attributes")
    if not args.dyadic:
        args.dyadic = rec.get("dyadic", [])
    data = _load(args)
    if data is None:
        raise DataValidationError("no partition file given or recorded in the fit")
    conf = fit["config"]
    specs = [StatisticSpec(**d) for d in fit["specs"]]
    lo, hi = conf["model"]["bounds"]
    m = ModelSpec(specs, fit["alpha_hat"], SizeBounds(lo, hi))
    cfg = parse_model_config({k: v for k, v in conf.items() if k != "model"}
                             | {"model": {"statistics": fit["specs"], "bounds": [lo, hi]}},
                             data.partition.n)
    cov = _check_covariates(m, data.covariates, data.partition.n)
    return fit, data, cov, m, cfg


def cmd_loglik(args) -> int:
    fit, data, cov, m, cfg = _load_fit(args)
    s_obs = observed_statistics(data.partition, m.specs, cov)
    pc = _path_config(cfg.path, args.seed, M=args.bridges, draws_per_bridge=args.draws)
    res = path_sampling_loglik(m, s_obs, cov, data.partition, pc)
    print(f"log-likelihood: {res.loglik:.4f} (MC s.e. {res.standard_error:.4f})")
    print(f"reference log-likelihood: {res.reference_loglik:.4f}")
    if args.out:
        Path(args.out).write_text(json.dumps(res.to_dict() | {"seed": args.seed}, indent=2,
                                             sort_keys=True) + "\n")
    return EXIT_OK


def cmd_gof(args) -> int:
    fit, data, cov, m, cfg = _load_fit(args)
    aux = [a.strip() for a in args.aux.split(",")] if args.aux else None
    report = gof(m, cov, data.partition, args.sims, args.seed, aux, cfg.sampler)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "gof_report.json").write_text(
        json.dumps(report.to_dict() | {"seed": args.seed}, indent=2, sort_keys=True) + "\n")
    report.write_values_csv(out / "gof_values.csv")
    for name in report.names:
        s = report.summary(name)
        mark = "  <-- outside 95% band" if s["flagged"] else ""
        print(f"{name}: observed {s['observed']:.4g}, simulated mean {s['mean']:.4g} "
              f"(sd {s['sd']:.3g}){mark}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="erpm", description="Exponential random partition models")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate", help="exact distribution by enumeration (small n)")
    _add_data_args(p, required=False)
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("simulate", help="draw partitions by MCMC")
    _add_data_args(p, required=False)
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--burnin", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="fit a model to an observed partition")
    _add_data_args(p, required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--loglik", action="store_true", help="also estimate the log-likelihood")
    p.add_argument("--out", required=True, help="result JSON path or output directory")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("loglik", help="path-sampling log-likelihood of a fitted model")
    _add_data_args(p, required=False)
    p.add_argument("--fit", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bridges", type=int)
    p.add_argument("--draws", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_loglik)

    p = sub.add_parser("gof", help="goodness of fit via auxiliary statistics")
    _add_data_args(p, required=False)
    p.add_argument("--fit", required=True)
    p.add_argument("--sims", type=int, default=1000)
    p.add_argument("--aux", help="comma-separated auxiliaries, e.g. size_hist,icc:age")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_gof)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DegeneracyError, MLEAtInfinityError, DegenerateStatisticError) as exc:
        print(f"degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ERPMError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
