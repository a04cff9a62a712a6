"""Experiment orchestration over paired models, plus report aggregation.

Every iteration derives its seeds from ``root_seed + iteration`` with fixed
per-purpose offsets, so a full run is replayable from the config alone and
iterations can execute on a worker pool in any order.
"""

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import data as data_mod
from . import ensemble as ens
from . import explain, metrics
from .data import DataSet, NoiseLevel, SyntheticSpec, add_noise, generate_synthetic, load_csv
from .errors import ConfigError, UndefinedMetricError
from .kernels import get_backend

EXPERIMENT_ACCURACY = "accuracy"
EXPERIMENT_INPUT = "input_perturbation"
EXPERIMENT_SEED = "seed_perturbation"
EXPERIMENT_HYPERPARAM = "hyperparam_perturbation"
EXPERIMENT_REDUNDANCY = "redundancy"
EXPERIMENTS = (EXPERIMENT_ACCURACY, EXPERIMENT_INPUT, EXPERIMENT_SEED,
               EXPERIMENT_HYPERPARAM, EXPERIMENT_REDUNDANCY)

REDUNDANCY_SAMPLES = 1000
REDUNDANCY_FEATURES = 10
REDUNDANCY_ITERATIONS = 30

# fixed per-purpose seed offsets
_DATA = 1
_NOISE = 2
_SPLIT = 3
_FIT_A = 4
_FIT_B = 5
_SEARCH_A = 6
_SEARCH_B = 7
_SHUFFLE = 8


def _derive_seed(iteration_seed, purpose):
    return (iteration_seed * 1_000_003 + purpose) % (2 ** 63)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    family: str = ens.FAMILY_XGB
    n_iterations: int = 50
    noise: NoiseLevel = NoiseLevel.NONE
    synthetic: SyntheticSpec | None = None
    csv_path: str | None = None
    csv_schema: dict | None = None
    k: int = 3
    root_seed: int = 0
    params: ens.HyperParams | None = None     # None -> family defaults
    space: ens.SearchSpace = field(default_factory=ens.SearchSpace)
    search_budget: int = 8
    shuffle: bool = False
    prediction_corr_flag: float = 0.7
    holdout_fraction: float = 0.2

    def resolved_params(self):
        if self.params is not None:
            return self.params
        return ens.default_params(self.family)

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.family not in ens.FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}")
        if self.n_iterations < 1:
            raise ConfigError("n_iterations must be at least 1")
        if self.experiment != EXPERIMENT_REDUNDANCY:
            if (self.synthetic is None) == (self.csv_path is None):
                raise ConfigError(
                    "exactly one data source (synthetic or csv) is required")
        if self.experiment == EXPERIMENT_ACCURACY and self.synthetic is None:
            raise ConfigError(
                "accuracy experiment needs a synthetic source with known "
                "coefficients")
        if self.experiment == EXPERIMENT_HYPERPARAM and self.search_budget < 1:
            raise ConfigError("search_budget must be at least 1")
        if self.synthetic is not None:
            self.synthetic.validate()
        self.resolved_params().validate()
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction must lie in (0, 1)")


@dataclass
class IterationRecord:
    iteration: int
    gain_corr: metrics.CorrelationPair | None = None
    shap_corr: metrics.CorrelationPair | None = None
    prediction_corr: metrics.CorrelationPair | None = None
    rank_outcomes_gain: list | None = None
    rank_outcomes_shap: list | None = None
    model_metric: float = math.nan
    gain_vector: np.ndarray | None = None
    ties_flagged: bool = False


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    records: list
    aggregates: dict
    backend: str


def _load_source(config, iteration_seed):
    """Resolve the iteration's dataset; synthetic sources are redrawn."""
    if config.synthetic is not None:
        spec = replace(config.synthetic,
                       seed=_derive_seed(iteration_seed, _DATA))
        return generate_synthetic(spec)
    return load_csv(config.csv_path, config.csv_schema), None


def _split(data, iteration_seed, holdout_fraction):
    rng = np.random.default_rng(_derive_seed(iteration_seed, _SPLIT))
    n = data.n_samples
    perm = rng.permutation(n)
    n_eval = max(1, int(round(holdout_fraction * n)))
    return data.subset(perm[n_eval:]), data.subset(perm[:n_eval])


def _holdout_metric(model, eval_data):
    raw = ens.predict(model, eval_data.X)
    if model.task == ens.TASK_CLASSIFICATION:
        try:
            return ens.auroc(raw, eval_data.y)
        except UndefinedMetricError:
            # single-class holdout draw; reported as missing
            return math.nan
    return float(np.sqrt(np.mean((eval_data.y - raw) ** 2)))


def _importances(model, X):
    gain = explain.gain_importance(model, normalize=True).scores
    shap = explain.shap_global(model, X).scores
    return gain, shap


def _accuracy_iteration(config, i):
    iteration_seed = config.root_seed + i
    (data, coefficients) = _load_source(config, iteration_seed)
    if config.noise is not NoiseLevel.NONE:
        data = add_noise(data, config.noise,
                         _derive_seed(iteration_seed, _NOISE))
    train, eval_data = _split(data, iteration_seed, config.holdout_fraction)
    params = replace(config.resolved_params(),
                     seed=_derive_seed(iteration_seed, _FIT_A))
    model = ens.fit(train, params, config.family, train.task)
    gain, shap = _importances(model, train.X)
    truth = np.abs(coefficients)
    return IterationRecord(
        iteration=i,
        gain_corr=metrics.correlation_pair(gain, truth),
        shap_corr=metrics.correlation_pair(shap, truth),
        rank_outcomes_gain=metrics.topk_rank_accuracy(truth, gain, config.k),
        rank_outcomes_shap=metrics.topk_rank_accuracy(truth, shap, config.k),
        model_metric=_holdout_metric(model, eval_data),
        ties_flagged=(metrics.has_ties(gain) or metrics.has_ties(shap)
                      or metrics.has_ties(truth)),
    )


def _stability_iteration(config, i):
    """One paired-model iteration for the three stability experiments."""
    iteration_seed = config.root_seed + i
    data, _ = _load_source(config, iteration_seed)
    train, eval_data = _split(data, iteration_seed, config.holdout_fraction)
    task = train.task
    seed_a = _derive_seed(iteration_seed, _FIT_A)

    base_params = config.resolved_params()
    if config.experiment == EXPERIMENT_INPUT:
        # same hyperparameters and fit seed; noise is the only difference
        params_a = replace(base_params, seed=seed_a)
        params_b = params_a
        train_a = train
        train_b = add_noise(train, config.noise,
                            _derive_seed(iteration_seed, _NOISE))
    elif config.experiment == EXPERIMENT_SEED:
        params_a = replace(base_params, seed=seed_a)
        params_b = replace(base_params,
                           seed=_derive_seed(iteration_seed, _FIT_B))
        train_a = train_b = train
    else:
        params_a = ens.random_search(
            train, config.space, config.search_budget,
            _derive_seed(iteration_seed, _SEARCH_A), config.family, task)
        params_b = ens.random_search(
            train, config.space, config.search_budget,
            _derive_seed(iteration_seed, _SEARCH_B), config.family, task)
        train_a = train_b = train

    model_a = ens.fit(train_a, params_a, config.family, task)
    model_b = ens.fit(train_b, params_b, config.family, task)
    gain_a, shap_a = _importances(model_a, train_a.X)
    gain_b, shap_b = _importances(model_b, train_b.X)
    pred_a = ens.predict(model_a, train.X)
    pred_b = ens.predict(model_b, train.X)
    return IterationRecord(
        iteration=i,
        gain_corr=metrics.correlation_pair(gain_a, gain_b),
        shap_corr=metrics.correlation_pair(shap_a, shap_b),
        prediction_corr=metrics.correlation_pair(pred_a, pred_b),
        model_metric=_holdout_metric(model_a, eval_data),
        ties_flagged=(metrics.has_ties(gain_a) or metrics.has_ties(gain_b)
                      or metrics.has_ties(shap_a) or metrics.has_ties(shap_b)),
    )


def redundancy_dataset(root_seed):
    """1000 rows whose 10 columns are exact copies of one uniform signal."""
    rng = np.random.default_rng(_derive_seed(root_seed, _DATA))
    signal = rng.random(REDUNDANCY_SAMPLES)
    X = np.tile(signal[:, None], (1, REDUNDANCY_FEATURES))
    y = (signal > np.median(signal)).astype(np.float64)
    kinds = tuple(data_mod.FeatureKind(data_mod.KIND_CONTINUOUS)
                  for _ in range(REDUNDANCY_FEATURES))
    return DataSet(X, y, kinds, ens.TASK_CLASSIFICATION,
                   data_mod.default_feature_names(REDUNDANCY_FEATURES))


def _redundancy_iteration(config, i):
    iteration_seed = config.root_seed + i
    data = redundancy_dataset(config.root_seed)
    d = data.n_features
    if config.shuffle:
        perm = np.random.default_rng(
            _derive_seed(iteration_seed, _SHUFFLE)).permutation(d)
    else:
        perm = np.arange(d)
    shuffled = DataSet(np.ascontiguousarray(data.X[:, perm]), data.y,
                       data.kinds, data.task, data.feature_names)
    train, eval_data = _split(shuffled, iteration_seed,
                              config.holdout_fraction)
    params = replace(config.resolved_params(),
                     seed=_derive_seed(iteration_seed, _FIT_A))
    model = ens.fit(train, params, config.family, data.task)
    scores = explain.gain_importance(model, normalize=True).scores
    share = np.zeros(d)
    share[perm] = scores    # map column positions back to original identities
    return IterationRecord(
        iteration=i,
        model_metric=_holdout_metric(model, eval_data),
        gain_vector=share,
        ties_flagged=metrics.has_ties(scores),
    )


_ITERATION_FN = {
    EXPERIMENT_ACCURACY: _accuracy_iteration,
    EXPERIMENT_INPUT: _stability_iteration,
    EXPERIMENT_SEED: _stability_iteration,
    EXPERIMENT_HYPERPARAM: _stability_iteration,
    EXPERIMENT_REDUNDANCY: _redundancy_iteration,
}


def _run_one(args):
    config, i = args
    return _ITERATION_FN[config.experiment](config, i)


def run_experiment(config, workers=1):
    """Run all iterations of one configuration and aggregate the results."""
    config.validate()
    jobs = [(config, i) for i in range(config.n_iterations)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_one, jobs))
    else:
        records = [_run_one(job) for job in jobs]
    records.sort(key=lambda r: r.iteration)
    aggregates = aggregate(records,
                           prediction_corr_flag=config.prediction_corr_flag,
                           k=config.k)
    return ExperimentReport(config, records, aggregates, get_backend())


def _summary(values):
    """Mean/std over defined entries; NaN entries are excluded and counted."""
    arr = np.asarray(values, dtype=np.float64)
    defined = arr[~np.isnan(arr)]
    summary = {
        "n_defined": int(defined.shape[0]),
        "n_undefined": int(arr.shape[0] - defined.shape[0]),
    }
    if defined.shape[0] > 0:
        summary["mean"] = float(np.mean(defined))
        summary["std"] = float(np.std(defined))
    else:
        summary["mean"] = None
        summary["std"] = None
    return summary


def aggregate(records, prediction_corr_flag=0.7, k=3):
    """Recomputable summary of per-iteration records."""
    if not records:
        raise ConfigError("cannot aggregate zero records")
    out = {"n_iterations": len(records), "correlations": {}}

    columns = {
        "gain_spearman": lambda r: r.gain_corr.spearman if r.gain_corr else None,
        "gain_pearson": lambda r: r.gain_corr.pearson if r.gain_corr else None,
        "shap_spearman": lambda r: r.shap_corr.spearman if r.shap_corr else None,
        "shap_pearson": lambda r: r.shap_corr.pearson if r.shap_corr else None,
        "prediction_spearman":
            lambda r: r.prediction_corr.spearman if r.prediction_corr else None,
        "prediction_pearson":
            lambda r: r.prediction_corr.pearson if r.prediction_corr else None,
    }
    for name, get in columns.items():
        values = [get(r) for r in records]
        if all(v is None for v in values):
            continue
        out["correlations"][name] = _summary(
            [math.nan if v is None else v for v in values])

    out["model_metric"] = _summary([r.model_metric for r in records])

    rank = {}
    for method, attr in (("gain", "rank_outcomes_gain"),
                         ("tree_shap", "rank_outcomes_shap")):
        lists = [getattr(r, attr) for r in records]
        if all(l is None for l in lists):
            continue
        per_rank = {}
        for r_pos in range(1, k + 1):
            counts = {c: 0 for c in metrics.CATEGORIES}
            total = 0
            for outcomes in lists:
                if outcomes is None or len(outcomes) < r_pos:
                    continue
                counts[outcomes[r_pos - 1].category] += 1
                total += 1
            if total:
                per_rank[str(r_pos)] = {c: counts[c] / total
                                        for c in metrics.CATEGORIES}
        rank[method] = per_rank
    if rank:
        out["rank_accuracy"] = rank

    shares = [r.gain_vector for r in records if r.gain_vector is not None]
    if shares:
        stacked = np.vstack(shares)
        argmax = np.argmax(stacked, axis=1)
        out["redundancy"] = {
            "mean_share": [float(v) for v in np.mean(stacked, axis=0)],
            "argmax_counts": {str(int(f)): int(np.sum(argmax == f))
                              for f in np.unique(argmax)},
            "n_distinct_argmax": int(np.unique(argmax).shape[0]),
        }

    flagged = [r.iteration for r in records
               if r.prediction_corr is not None
               and not math.isnan(r.prediction_corr.pearson)
               and r.prediction_corr.pearson < prediction_corr_flag]
    out["flagged_iterations"] = flagged
    out["prediction_corr_flag"] = prediction_corr_flag
    out["tie_iterations"] = [r.iteration for r in records if r.ties_flagged]
    return out


# --- report serialization ---------------------------------------------------

def config_to_dict(config):
    params = config.resolved_params()
    out = {
        "experiment": config.experiment,
        "family": config.family,
        "n_iterations": config.n_iterations,
        "noise": config.noise.value,
        "k": config.k,
        "root_seed": config.root_seed,
        "search_budget": config.search_budget,
        "shuffle": config.shuffle,
        "prediction_corr_flag": config.prediction_corr_flag,
        "holdout_fraction": config.holdout_fraction,
        "params": {
            "n_trees": params.n_trees,
            "max_depth": params.max_depth,
            "min_samples_leaf": params.min_samples_leaf,
            "learning_rate": params.learning_rate,
            "row_subsample": params.row_subsample,
            "feature_subsample": params.feature_subsample,
            "tie_break": params.tie_break,
            "seed": params.seed,
        },
    }
    if config.synthetic is not None:
        out["synthetic"] = {
            "n_samples": config.synthetic.n_samples,
            "n_features": config.synthetic.n_features,
            "seed": config.synthetic.seed,
        }
    if config.csv_path is not None:
        out["csv_path"] = str(config.csv_path)
        out["csv_schema"] = dict(sorted(config.csv_schema.items()))
    if config.experiment == EXPERIMENT_HYPERPARAM:
        sp = config.space
        out["space"] = {
            "n_trees": list(sp.n_trees),
            "max_depth": list(sp.max_depth),
            "learning_rate": list(sp.learning_rate),
            "min_samples_leaf": list(sp.min_samples_leaf),
            "row_subsample": list(sp.row_subsample),
            "feature_subsample": list(sp.feature_subsample),
            "tie_break": sp.tie_break,
        }
    return out


def _jsonable(obj):
    """Replace NaN floats with None so the JSON output is standard."""
    if isinstance(obj, float):
        return None if math.isnan(obj) else obj
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def aggregate_json(reports):
    """Canonical aggregate JSON (sorted keys, NaN as null) for 1+ reports."""
    payload = {"reports": [
        {"config": config_to_dict(r.config),
         "backend": r.backend,
         "aggregates": _jsonable(r.aggregates)}
        for r in reports]}
    return json.dumps(payload, sort_keys=True, indent=2,
                      allow_nan=False) + "\n"


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def iterations_csv(report):
    """Per-iteration CSV with the config echoed in a leading comment line."""
    config = report.config
    header = ["iteration", "gain_spearman", "gain_pearson", "shap_spearman",
              "shap_pearson", "prediction_spearman", "prediction_pearson",
              "model_metric", "ties_flagged"]
    has_ranks = any(r.rank_outcomes_gain is not None for r in report.records)
    if has_ranks:
        for method in ("gain", "shap"):
            for r_pos in range(1, config.k + 1):
                header += [f"{method}_rank{r_pos}_category",
                           f"{method}_rank{r_pos}_position"]
    has_shares = any(r.gain_vector is not None for r in report.records)
    if has_shares:
        d = len(next(r.gain_vector for r in report.records
                     if r.gain_vector is not None))
        header += [f"gain_share_f{j}" for j in range(d)]

    buf = io.StringIO()
    buf.write("# config " + json.dumps(config_to_dict(config),
                                       sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for rec in report.records:
        row = [rec.iteration]
        for pair in (rec.gain_corr, rec.shap_corr, rec.prediction_corr):
            if pair is None:
                row += ["", ""]
            else:
                row += [_fmt(pair.spearman), _fmt(pair.pearson)]
        row.append(_fmt(rec.model_metric))
        row.append(int(rec.ties_flagged))
        if has_ranks:
            for outcomes in (rec.rank_outcomes_gain, rec.rank_outcomes_shap):
                for r_pos in range(config.k):
                    if outcomes is None or len(outcomes) <= r_pos:
                        row += ["", ""]
                    else:
                        row += [outcomes[r_pos].category,
                                outcomes[r_pos].rank_position]
        if has_shares:
            if rec.gain_vector is None:
                row += [""] * d
            else:
                row += [_fmt(float(v)) for v in rec.gain_vector]
        writer.writerow(row)
    return buf.getvalue()


def read_iterations_csv(path):
    """Rebuild (config_dict, records) from an iterations CSV file."""
    with open(path, encoding="utf-8") as handle:
        first = handle.readline()
        if not first.startswith("# config "):
            raise ConfigError(f"{path}: missing config comment line")
        config_dict = json.loads(first[len("# config "):])
        reader = csv.reader(handle)
        header = next(reader)
        rows = list(reader)

    col = {name: i for i, name in enumerate(header)}
    k = 0
    while f"gain_rank{k + 1}_category" in col:
        k += 1
    share_cols = [name for name in header if name.startswith("gain_share_f")]

    def parse_float(text):
        return math.nan if text == "" else float(text)

    def parse_pair(row, prefix):
        s = row[col[f"{prefix}_spearman"]]
        p = row[col[f"{prefix}_pearson"]]
        if s == "" and p == "":
            return None
        return metrics.CorrelationPair(parse_float(s), parse_float(p))

    records = []
    for row in rows:
        rec = IterationRecord(iteration=int(row[col["iteration"]]))
        rec.gain_corr = parse_pair(row, "gain")
        rec.shap_corr = parse_pair(row, "shap")
        rec.prediction_corr = parse_pair(row, "prediction")
        rec.model_metric = parse_float(row[col["model_metric"]])
        rec.ties_flagged = row[col["ties_flagged"]] == "1"
        for method, attr in (("gain", "rank_outcomes_gain"),
                             ("shap", "rank_outcomes_shap")):
            outcomes = []
            for r_pos in range(1, k + 1):
                cat = row[col[f"{method}_rank{r_pos}_category"]]
                if cat == "":
                    break
                outcomes.append(metrics.RankOutcome(
                    cat, int(row[col[f"{method}_rank{r_pos}_position"]])))
            if outcomes:
                setattr(rec, attr, outcomes)
        if share_cols and row[col[share_cols[0]]] != "":
            rec.gain_vector = np.array(
                [float(row[col[name]]) for name in share_cols])
        records.append(rec)
    return config_dict, records


def plot_csv(reports):
    """Plot-ready long format: one row per iterated correlation value."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["experiment", "family", "method", "n_features", "noise",
                     "iteration", "metric", "value"])
    for report in reports:
        config = report.config
        if config.synthetic is not None:
            d = config.synthetic.n_features
        elif config.experiment == EXPERIMENT_REDUNDANCY:
            d = REDUNDANCY_FEATURES
        else:
            d = ""
        for rec in report.records:
            rows = []
            if rec.gain_corr is not None:
                rows.append(("gain", "spearman", rec.gain_corr.spearman))
            if rec.shap_corr is not None:
                rows.append(("tree_shap", "spearman", rec.shap_corr.spearman))
            if rec.prediction_corr is not None:
                rows.append(("prediction", "spearman",
                             rec.prediction_corr.spearman))
                rows.append(("prediction", "pearson",
                             rec.prediction_corr.pearson))
            for method, metric_name, value in rows:
                writer.writerow([config.experiment, config.family, method, d,
                                 config.noise.value, rec.iteration,
                                 metric_name,
                                 "" if math.isnan(value) else repr(value)])
    return buf.getvalue()
