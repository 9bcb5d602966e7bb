"""``mixot`` command line: distances, estimators, probes and rate benchmarks.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure,
3 when ``rate-bench --assert`` finds a slope outside its expected band.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .errors import ConfigError, MixotError, UnsupportedError
from .rng import stream

log = logging.getLogger("mixot")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ASSERT = 0, 1, 2, 3
SUBCOMMANDS = ("distance", "estimate", "probe", "rate-bench", "catalog")


EPILOG = """\
flags (every subcommand):
  --config PATH   JSON config file
  --output PATH   write results here
  --seed U64      override the config seed (the effective seed is printed)
  -v, --verbose   more logging

probe:       --probe NAME
rate-bench:  --scenario NAME  --scale FLOAT  --threads N  --assert
environment: MIXOT_THREADS is the fallback for --threads

exit codes: 0 ok, 1 config/usage error, 2 runtime failure, 3 --assert failed
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 means runtime failure here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file")
    common.add_argument("--output", metavar="PATH", help="write results here")
    common.add_argument("--seed", type=_seed, metavar="U64", help="override the config seed")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")

    parser = _Parser(
        prog="mixot",
        description="Optimal-transport tools for mixing measures of finite mixtures.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    sub.add_parser("distance", parents=[common],
                   help="W1, W2, KS and MMD between two mixing measures",
                   description="Config keys: kernel, G, H, optional gamma and data_range.")
    sub.add_parser("estimate", parents=[common], help="fit a mixing measure to data",
                   description="Config keys: kernel, estimator, and either data (list or "
                               "path to a .npy/.txt file) or truth plus n to simulate.")
    p = sub.add_parser("probe", parents=[common], help="run an identifiability probe",
                       description="Config keys are passed to the probe as keyword overrides.")
    p.add_argument("--probe", required=True, metavar="NAME",
                   help="one of: " + ", ".join(sorted(PROBES)))
    p = sub.add_parser("rate-bench", parents=[common], help="Monte Carlo convergence-rate experiment",
                       description="Runs a built-in scenario (--scenario) or an ExperimentConfig "
                                   "JSON file (--config). --output receives the raw CSV and a "
                                   "sibling .summary.json.")
    p.add_argument("--scenario", metavar="NAME", help="built-in scenario name (see `catalog`)")
    p.add_argument("--scale", type=_positive_float, default=1.0, metavar="FLOAT",
                   help="multiply replicates and shrink the ladder top (smoke runs)")
    p.add_argument("--threads", type=_positive_int, metavar="N",
                   help="worker processes (default: $MIXOT_THREADS or 1)")
    p.add_argument("--assert", dest="check", action="store_true",
                   help="exit 3 if a fitted slope misses its expected band")
    sub.add_parser("catalog", parents=[common], help="list built-in rate scenarios")
    return parser


def _load_config(path):
    if not path:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    return obj


def _emit(pairs, output=None):
    """Print ``key=value`` lines; mirror them to ``output`` as JSON."""
    for k, v in pairs.items():
        if isinstance(v, float):
            v = format(v, ".10g")
        elif isinstance(v, (dict, list)):
            v = json.dumps(_jsonable(v), sort_keys=True)
        print(f"{k}={v}")
    if output:
        with open(output, "w") as fh:
            json.dump(_jsonable(pairs), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _need(cfg, *keys):
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise ConfigError(f"config is missing {', '.join(missing)}")


# -- subcommands ----------------------------------------------------------------


def cmd_distance(args, cfg, seed):
    from .estimators import ks_distance, median_heuristic_gamma, mmd_distance
    from .kernels import GaussianLocation, make_kernel
    from .measures import MixingMeasure, wasserstein
    from .mixtures import MixtureModel

    _need(cfg, "kernel", "G", "H")
    kernel = make_kernel(cfg["kernel"])
    try:
        G, H = MixingMeasure.from_dict(cfg["G"]), MixingMeasure.from_dict(cfg["H"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad mixing measure: {exc}") from None
    out = {"seed": seed, "W1": wasserstein(G, H, 1)[0], "W2": wasserstein(G, H, 2)[0]}
    out["KS"] = ks_distance(G, H, kernel, cfg.get("data_range"))
    if isinstance(kernel, GaussianLocation):
        gamma = cfg.get("gamma")
        if gamma is None:
            # bandwidth from a pooled sample of both mixtures
            rng = stream(seed, "distance-gamma")
            pooled = np.concatenate([MixtureModel(kernel, G).sample(rng, 500),
                                     MixtureModel(kernel, H).sample(rng, 500)])
            pooled = pooled.reshape(1000, -1)
            gamma = median_heuristic_gamma(pooled)
        out["MMD"] = mmd_distance(G, H, kernel.cov, float(gamma))
        out["gamma"] = float(gamma)
    else:
        out["MMD"] = float("nan")
    _emit(out, args.output)
    return EXIT_OK


def _load_data(spec):
    if isinstance(spec, str):
        try:
            return np.load(spec) if spec.endswith(".npy") else np.loadtxt(spec, ndmin=1)
        except OSError as exc:
            raise ConfigError(f"cannot read data file: {exc}") from None
    return np.asarray(spec, dtype=float)


def cmd_estimate(args, cfg, seed):
    from dataclasses import replace

    from .estimators import EstimatorConfig, estimate
    from .kernels import make_kernel
    from .measures import MixingMeasure
    from .mixtures import MixtureModel, ProductMixtureModel

    _need(cfg, "kernel", "estimator")
    kernel = make_kernel(cfg["kernel"])
    ecfg = replace(EstimatorConfig.from_dict(dict(cfg["estimator"])), seed=seed)
    model = cfg.get("model", "plain")
    if model not in ("plain", "product"):
        raise ConfigError("model must be plain or product")
    if "data" in cfg:
        data = _load_data(cfg["data"])
    else:
        _need(cfg, "truth", "n")
        truth = MixingMeasure.from_dict(cfg["truth"])
        rng = stream(seed, "estimate-data")
        if model == "plain":
            data = MixtureModel(kernel, truth).sample(rng, int(cfg["n"]))
        else:
            data = ProductMixtureModel(kernel, truth, int(cfg.get("N", 1))).sample_sequences(
                int(cfg["n"]), rng)
    res = estimate(data, kernel, ecfg, kind=model)
    out = {"seed": seed, "estimator": ecfg.estimator, "k": ecfg.k,
           "objective": float(res.objective)}
    out.update({"estimate": res.estimate.to_dict(), "diagnostics": res.to_dict()["diagnostics"]})
    _emit(out, args.output)
    return EXIT_OK


def _probe_heat(seed, theta=(0.3, 1.7)):
    from .identifiability import pde_residual
    return {"residual": pde_residual("gaussian-location-scale", "heat", list(theta))}


def _probe_gamma_pde(seed, theta=(2.0, 1.5)):
    from .identifiability import pde_residual
    return {"residual": pde_residual("gamma", "gamma-shift", list(theta))}


def _probe_skew_pde(seed, theta=(0.0, 1.0, 1.0)):
    from .identifiability import pde_residual
    return {
        "residual_1": pde_residual("skew-normal", "skew-normal-1", list(theta)),
        "residual_2": pde_residual("skew-normal", "skew-normal-2", list(theta)),
    }


def _probe_gram(seed, kernel="gaussian-location", m=2, atoms=((-1.0,), (1.0,))):
    from .identifiability import strong_identifiability_gram
    eig, verdict = strong_identifiability_gram(kernel, m, np.asarray(atoms, dtype=float))
    return {"min_eigenvalue": eig, "verdict": verdict}


def _measure(d):
    from .measures import MixingMeasure
    return MixingMeasure.from_dict(d)


def _probe_inverse_bound(seed, kernel="gaussian-location", phi="ks-cdf", k=2,
                         G0=None, exponent=1, pair_budget=60, radius=None):
    from .estimators import PhiClass
    from .identifiability import inverse_bound_probe
    G0 = _measure(G0 or {"atoms": [[-1.0], [1.0]], "weights": [0.5, 0.5]})
    rep = inverse_bound_probe(kernel, PhiClass(phi, k=k), G0, k, radius=radius,
                              pair_budget=pair_budget, seed=seed, exponent=exponent)
    return rep.to_dict()


def _probe_escape(seed, G0=None):
    from .estimators import PhiClass
    from .identifiability import escape_probe
    G0 = _measure(G0 or {"atoms": [[-1.0], [1.0]], "weights": [0.5, 0.5]})
    return escape_probe(PhiClass("ks-cdf"), G0).to_dict()


def _probe_gamma_path(seed, G0=None, strict=True):
    from .identifiability import gamma_pathological_path
    G0 = _measure(G0 or {"atoms": [[2.0, 1.5], [3.0, 1.5]], "weights": [0.5, 0.5]})
    return gamma_pathological_path(G0, strict=strict).to_dict()


def _probe_singularity(seed, gap=1, r=3, budget=10_000):
    from .identifiability import singularity_system_probe
    return singularity_system_probe(gap, r, budget=budget, seed=seed)[2].to_dict()


def _probe_product(seed, G0=None, N=2, budget=200):
    from .identifiability import product_identifiability_probe
    G0 = _measure(G0 or {"atoms": [[0.2], [0.7]], "weights": [0.4, 0.6]})
    return product_identifiability_probe(G0, N, budget=budget, seed=seed)[2].to_dict()


def _probe_n1(seed, kernel="gamma", G0=None, N_range=(1, 2, 3)):
    from .identifiability import n1_probe
    G0 = _measure(G0 or {"atoms": [[2.0, 1.5], [3.0, 1.5]], "weights": [0.5, 0.5]})
    n1, reports = n1_probe(kernel, G0, tuple(N_range), seed=seed)
    return {"n1": n1, "reports": [r.to_dict() for r in reports]}


PROBES = {
    "heat-pde": _probe_heat,
    "gamma-pde": _probe_gamma_pde,
    "skew-normal-pde": _probe_skew_pde,
    "gram": _probe_gram,
    "inverse-bound": _probe_inverse_bound,
    "escape": _probe_escape,
    "gamma-path": _probe_gamma_path,
    "singularity": _probe_singularity,
    "product-identifiability": _probe_product,
    "n1": _probe_n1,
}


def cmd_probe(args, cfg, seed):
    try:
        fn = PROBES[args.probe]
    except KeyError:
        raise ConfigError(f"unknown probe {args.probe!r}; choose from {sorted(PROBES)}") from None
    try:
        result = fn(seed, **cfg)
    except TypeError as exc:
        raise ConfigError(f"bad options for probe {args.probe}: {exc}") from None
    if "probe" in result:
        result["label"] = result.pop("probe")
    _emit({"seed": seed, "probe": args.probe, **result}, args.output)
    return EXIT_OK


def cmd_rate_bench(args, cfg, seed):
    from dataclasses import replace

    from .bench import ExperimentConfig, get_scenario, run_experiment
    from .errors import ExperimentFailed

    if bool(args.scenario) == bool(args.config):
        raise ConfigError("give exactly one of --scenario or --config")
    exp = get_scenario(args.scenario) if args.scenario else ExperimentConfig.from_dict(cfg)
    if args.seed is not None:
        exp = replace(exp, seed=seed)
    if args.scale != 1.0:
        exp = exp.scaled(args.scale)
    print(f"seed={exp.seed}")
    sys.stdout.flush()

    def progress(done, total):
        if done % max(1, total // 20) == 0 or done == total:
            log.info("%s: %d/%d replicates", exp.scenario, done, total)

    try:
        result = run_experiment(exp, threads=args.threads, progress=progress)
    except ExperimentFailed as exc:
        if args.output and getattr(exc, "result", None) is not None:
            exc.result.write_csv(args.output)
        raise
    if args.output:
        result.write_csv(args.output)
        result.write_summary(_summary_path(args.output))
    s = result.summary
    for key in ("scenario", "slope", "slope_se", "r2", "rungs", "replicates", "metric",
                "failed", "expected_ok"):
        v = s[key]
        print(f"{key}={format(v, '.6g') if isinstance(v, float) else v}")
    for name, fit in result.fits.items():
        if fit is not None:
            print(f"fit.{name}.slope={fit.slope:.6g}")
    if args.check and s["expected_ok"] is False:
        print("assert=fail", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def _summary_path(path):
    root, ext = os.path.splitext(path)
    return (root if ext == ".csv" else path) + ".summary.json"


def cmd_catalog(args, cfg, seed):
    from .bench import scenario_catalog

    rows = []
    print(f"seed={seed}")
    for exp in scenario_catalog():
        band = json.dumps(exp.expected_slope, sort_keys=True) if exp.expected_slope else "-"
        print(f"{exp.scenario}\t{exp.estimator['estimator']}\t{band}\t{exp.anchor}")
        rows.append(exp.to_dict())
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


COMMANDS = {
    "distance": cmd_distance,
    "estimate": cmd_estimate,
    "probe": cmd_probe,
    "rate-bench": cmd_rate_bench,
    "catalog": cmd_catalog,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = _load_config(args.config)
        if args.command == "rate-bench":
            # the experiment config carries its own seed field
            seed = args.seed
        else:
            seed = args.seed if args.seed is not None else int(cfg.pop("seed", 0))
        return COMMANDS[args.command](args, cfg, seed)
    except (ConfigError, UnsupportedError) as exc:
        print(f"mixot: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MixotError, RuntimeError, ValueError, ArithmeticError, OSError) as exc:
        print(f"mixot: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
