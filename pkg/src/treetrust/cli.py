"""Command-line front end: simulate, audit, explain, report.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical or
undefined-metric failure. All outputs are byte-deterministic for a fixed
config and seed; only the run manifest carries a timestamp.
"""

import argparse
import configparser
import csv
import json
import os
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import ensemble as ens
from . import explain, harness
from .data import (
    NoiseLevel,
    SyntheticSpec,
    add_noise,
    generate_synthetic,
)
from .errors import (
    ConfigError,
    ExplainError,
    FitError,
    IngestionError,
    InvalidSpecError,
    ModelIOError,
    TreeTrustError,
    UndefinedMetricError,
)
from .kernels import get_backend

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

SEED_ENV_VAR = "TREETRUST_SEED"


def _resolve_seed(flag_value, config_value=None):
    """Flag beats config beats TREETRUST_SEED beats 0."""
    if flag_value is not None:
        return flag_value
    if config_value is not None:
        return config_value
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(
                f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None
    return 0


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)


def _float_cell(value):
    return repr(float(value))


def cmd_simulate(args):
    if args.n < 2 or args.d < 1:
        raise ConfigError("simulate needs --n >= 2 and --d >= 1")
    seed = _resolve_seed(args.seed)
    spec = SyntheticSpec(n_samples=args.n, n_features=args.d, seed=seed)
    data, coefficients = generate_synthetic(spec)
    noise = NoiseLevel.from_name(args.noise)
    if noise is not NoiseLevel.NONE:
        data = add_noise(data, noise, seed + 1)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data_path = out / "data.csv"
    with open(data_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(list(data.feature_names) + ["target"])
        for r in range(data.n_samples):
            writer.writerow([_float_cell(v) for v in data.X[r]]
                            + [_float_cell(data.y[r])])
    coef_path = out / "coefficients.csv"
    with open(coef_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["feature_index", "feature_name", "kind",
                         "coefficient"])
        for j, kind in enumerate(data.kinds):
            writer.writerow([j, data.feature_names[j], kind.kind,
                             _float_cell(coefficients[j])])
    print(f"wrote {data_path} ({data.n_samples} rows) and {coef_path}")
    return 0


def _parse_config_file(path):
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise IngestionError(f"config file not found: {path}")
    if "experiment" not in parser:
        raise ConfigError(f"{path}: missing [experiment] section")
    return parser


def _config_from_ini(parser, args):
    exp = parser["experiment"]
    experiment = exp.get("kind", fallback=None)
    if experiment is None:
        raise ConfigError("config: [experiment] needs a 'kind' key")
    experiment = experiment.strip().lower()
    if experiment not in harness.EXPERIMENTS:
        raise ConfigError(f"unknown experiment name {experiment!r}")

    family = (args.family or exp.get("family", ens.FAMILY_XGB)).strip().lower()
    noise_name = args.noise or exp.get("noise", "none")
    default_iters = (harness.REDUNDANCY_ITERATIONS
                     if experiment == harness.EXPERIMENT_REDUNDANCY else 50)
    n_iterations = args.iters or exp.getint("iterations",
                                            fallback=default_iters)
    k = args.k or exp.getint("k", fallback=3)
    root_seed = _resolve_seed(args.seed,
                              exp.getint("root_seed", fallback=None))

    params = None
    if "params" in parser:
        section = parser["params"]
        overrides = {}
        for key, cast in (("n_trees", int), ("max_depth", int),
                          ("min_samples_leaf", int), ("learning_rate", float),
                          ("row_subsample", float),
                          ("feature_subsample", float), ("tie_break", str)):
            if key in section:
                overrides[key] = cast(section.get(key))
        params = replace(ens.default_params(family), **overrides)

    synthetic = None
    csv_path = None
    csv_schema = None
    d_values = [None]
    if "data" in parser:
        section = parser["data"]
        source = section.get("source", "synthetic").strip().lower()
        if source == "synthetic":
            n_samples = section.getint("n_samples", fallback=300)
            d_values = [int(v) for v in
                        section.get("n_features", "5").split(",")]
        elif source == "csv":
            csv_path = section.get("path", fallback=None)
            if csv_path is None:
                raise ConfigError("config: csv source needs a 'path' key")
            if "schema" not in parser:
                raise ConfigError("config: csv source needs a [schema] section")
            csv_schema = {name: role.strip().lower()
                          for name, role in parser["schema"].items()}
        else:
            raise ConfigError(f"unknown data source {source!r}")
    elif experiment != harness.EXPERIMENT_REDUNDANCY:
        raise ConfigError("config: missing [data] section")

    search_budget = 8
    if "search" in parser:
        search_budget = parser["search"].getint("budget", fallback=8)

    shuffle = exp.getboolean("shuffle", fallback=False)

    configs = []
    for d in d_values:
        if csv_path is None and experiment != harness.EXPERIMENT_REDUNDANCY:
            synthetic = SyntheticSpec(n_samples=n_samples, n_features=d,
                                      seed=root_seed)
        configs.append(harness.ExperimentConfig(
            experiment=experiment,
            family=family,
            n_iterations=n_iterations,
            noise=NoiseLevel.from_name(noise_name),
            synthetic=synthetic,
            csv_path=csv_path,
            csv_schema=csv_schema,
            k=k,
            root_seed=root_seed,
            params=params,
            search_budget=search_budget,
            shuffle=shuffle,
        ))
        if csv_path is not None or experiment == harness.EXPERIMENT_REDUNDANCY:
            break
    return configs


def _write_manifest(out, args, root_seed, configs):
    manifest = {
        "tool": "treetrust",
        "version": __version__,
        "backend": get_backend(),
        "config_file": str(args.config),
        "output_dir": str(out),
        "root_seed": root_seed,
        "workers": args.workers,
        "n_runs": len(configs),
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    _write_text(out / "manifest.json",
                json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def cmd_audit(args):
    parser = _parse_config_file(args.config)
    configs = _config_from_ini(parser, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out, args, configs[0].root_seed, configs)

    reports = []
    for config in configs:
        report = harness.run_experiment(config, workers=args.workers)
        reports.append(report)
        if len(configs) > 1:
            name = f"iterations_d{config.synthetic.n_features}.csv"
        else:
            name = "iterations.csv"
        _write_text(out / name, harness.iterations_csv(report))
    _write_text(out / "aggregate.json", harness.aggregate_json(reports))
    _write_text(out / "plot.csv", harness.plot_csv(reports))
    print(f"audit complete: {len(reports)} run(s), reports in {out}")
    return 0


def _load_feature_matrix(path, target_name):
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot open {path}: {exc}") from None
    with handle:
        reader = csv.reader(handle)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError(f"{path}: file is empty") from None
        drop = header.index(target_name) if target_name in header else None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise IngestionError(
                    f"{path}: line {lineno} has {len(row)} fields")
            cells = [c for i, c in enumerate(row) if i != drop]
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                raise IngestionError(
                    f"{path}: non-numeric value on line {lineno}") from None
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    names = tuple(h for i, h in enumerate(header) if i != drop)
    return np.array(rows, dtype=np.float64), names


def cmd_explain(args):
    model = ens.load_model(args.model)
    X, names = _load_feature_matrix(args.data, args.target)
    if X.shape[1] != model.n_features:
        raise IngestionError(
            f"{args.data} has {X.shape[1]} feature columns, model expects "
            f"{model.n_features}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    gain = explain.gain_importance(model, normalize=True)
    shap = explain.shap_global(model, X)
    explain.write_importance_csv(out / "importance.csv", [gain, shap], names)

    if args.local:
        phi = explain.shap_matrix(model, X)
        base = explain._ensemble_base(model)
        raw = ens.predict(model, X)
        with open(out / "local_attributions.csv", "w", newline="",
                  encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["row", "base"]
                            + [f"phi_{n}" for n in names] + ["prediction"])
            for r in range(X.shape[0]):
                writer.writerow([r, _float_cell(base)]
                                + [_float_cell(v) for v in phi[r]]
                                + [_float_cell(raw[r])])
    print(f"explanations written to {out}")
    return 0


def cmd_report(args):
    config_dict, records = harness.read_iterations_csv(args.iterations)
    aggregates = harness.aggregate(
        records,
        prediction_corr_flag=config_dict.get("prediction_corr_flag", 0.7),
        k=config_dict.get("k", 3))
    payload = {"reports": [{
        "config": config_dict,
        "backend": get_backend(),
        "aggregates": harness._jsonable(aggregates),
    }]}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "aggregate.json",
                json.dumps(payload, sort_keys=True, indent=2,
                           allow_nan=False) + "\n")
    print(f"re-aggregated {len(records)} records into {out / 'aggregate.json'}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="treetrust",
        description="Tree-ensemble feature-importance audit tool")
    parser.add_argument("--version", action="version",
                        version=f"treetrust {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    p_sim.add_argument("--n", type=int, required=True, help="sample count")
    p_sim.add_argument("--d", type=int, required=True, help="feature count")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--noise", default="none",
                       choices=["none", "low", "medium", "high"])
    p_sim.add_argument("--out", default=".", help="output directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_audit = sub.add_parser("audit", help="run a configured experiment")
    p_audit.add_argument("--config", required=True)
    p_audit.add_argument("--out", required=True)
    p_audit.add_argument("--seed", type=int, default=None)
    p_audit.add_argument("--workers", type=int,
                         default=os.cpu_count() or 1)
    p_audit.add_argument("--noise", default=None,
                         choices=["none", "low", "medium", "high"])
    p_audit.add_argument("--family", default=None,
                         choices=list(ens.FAMILIES))
    p_audit.add_argument("--iters", type=int, default=None)
    p_audit.add_argument("--k", type=int, default=None)
    p_audit.set_defaults(func=cmd_audit)

    p_exp = sub.add_parser("explain",
                           help="gain and SHAP importances for a saved model")
    p_exp.add_argument("--model", required=True)
    p_exp.add_argument("--data", required=True)
    p_exp.add_argument("--target", default="target",
                       help="target column to drop if present")
    p_exp.add_argument("--local", action="store_true",
                       help="also write per-row local attributions")
    p_exp.add_argument("--out", required=True)
    p_exp.set_defaults(func=cmd_explain)

    p_rep = sub.add_parser("report",
                           help="re-aggregate from a per-iteration CSV")
    p_rep.add_argument("--iterations", required=True)
    p_rep.add_argument("--out", required=True)
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidSpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestionError, ModelIOError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (UndefinedMetricError, FitError, ExplainError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except TreeTrustError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
