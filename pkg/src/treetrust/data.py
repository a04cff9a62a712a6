"""Synthetic data generation, input noise, and CSV ingestion."""

import csv
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import IngestionError, InvalidSpecError

KIND_CONTINUOUS = "continuous"
KIND_CATEGORICAL = "categorical"

TASK_CLASSIFICATION = "classification"
TASK_REGRESSION = "regression"

COEFFICIENT_RANGE = 10.0

# cell spellings treated as missing on ingestion
_MISSING = {"", "?", "na", "n/a", "nan", "null", "none"}


class NoiseLevel(Enum):
    """Input-perturbation strength, as a multiple of each feature's std."""

    NONE = "none"
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @property
    def multiplier(self):
        return {"none": 0.0, "low": 0.5, "medium": 1.0, "high": 2.0}[self.value]

    @classmethod
    def from_name(cls, name):
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise InvalidSpecError(
                f"unknown noise level {name!r}; expected one of "
                f"{[l.value for l in cls]}") from None


@dataclass(frozen=True)
class FeatureKind:
    """Declared type of one feature column.

    ``threshold`` is the binarization cut used when generating categorical
    columns; it is None for continuous features and for ingested categorical
    columns (which arrive already discrete).
    """

    kind: str
    threshold: float | None = None

    def __post_init__(self):
        if self.kind not in (KIND_CONTINUOUS, KIND_CATEGORICAL):
            raise InvalidSpecError(f"unknown feature kind {self.kind!r}")
        if self.kind == KIND_CONTINUOUS and self.threshold is not None:
            raise InvalidSpecError("continuous features take no threshold")
        if self.threshold is not None and not 0.0 <= self.threshold < 1.0:
            raise InvalidSpecError("categorical threshold must lie in [0, 1)")

    @property
    def is_categorical(self):
        return self.kind == KIND_CATEGORICAL


@dataclass(frozen=True)
class SyntheticSpec:
    """Full recipe for one synthetic dataset draw.

    When ``coefficients`` or ``kinds`` are omitted they are drawn from the
    seed (kind with equal probability, coefficient uniform in [-10, 10],
    binarization threshold uniform in [0, 1)).
    """

    n_samples: int
    n_features: int
    seed: int
    coefficients: tuple | None = None
    kinds: tuple | None = None

    def validate(self):
        if self.n_features < 1:
            raise InvalidSpecError("n_features must be at least 1")
        if self.n_samples < 2:
            raise InvalidSpecError("n_samples must be at least 2")
        if self.coefficients is not None:
            if len(self.coefficients) != self.n_features:
                raise InvalidSpecError("coefficients length != n_features")
            for c in self.coefficients:
                if abs(c) > COEFFICIENT_RANGE:
                    raise InvalidSpecError(
                        f"coefficient {c} outside [-10, 10]")
        if self.kinds is not None and len(self.kinds) != self.n_features:
            raise InvalidSpecError("kinds length != n_features")


@dataclass
class DataSet:
    """Feature matrix plus target and per-feature metadata.

    ``X`` is float64 with no missing values; classification targets are 0/1.
    """

    X: np.ndarray
    y: np.ndarray
    kinds: tuple
    task: str
    feature_names: tuple
    dropped_rows: int = 0

    @property
    def n_samples(self):
        return self.X.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]

    def subset(self, rows):
        return DataSet(self.X[rows], self.y[rows], self.kinds, self.task,
                       self.feature_names, self.dropped_rows)


def default_feature_names(n_features):
    return tuple(f"f{j}" for j in range(n_features))


def generate_synthetic(spec):
    """Draw a classification dataset from a synthetic recipe.

    Every feature starts as an i.i.d. uniform draw on [0, 1); categorical
    columns are then binarized at the column's threshold. The label is 1
    where the coefficient-weighted sum of the *uniform draws* strictly
    exceeds its median, else 0, so binarization hides part of each
    categorical feature's signal from the model (this is what caps the
    reference models near 90% AUROC rather than letting them saturate).
    Returns the dataset and the ground-truth coefficient vector.

    Draw order from the seed: kind flags, binarization thresholds,
    coefficients, then the n-by-d uniform matrix (row-major).
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    d = spec.n_features
    n = spec.n_samples

    if spec.kinds is None:
        categorical = rng.random(d) < 0.5
        cuts = rng.random(d)
        kinds = tuple(
            FeatureKind(KIND_CATEGORICAL, float(cuts[j])) if categorical[j]
            else FeatureKind(KIND_CONTINUOUS)
            for j in range(d))
    else:
        kinds = tuple(spec.kinds)

    if spec.coefficients is None:
        coefficients = rng.uniform(-COEFFICIENT_RANGE, COEFFICIENT_RANGE, d)
    else:
        coefficients = np.asarray(spec.coefficients, dtype=np.float64)

    latent = rng.random((n, d))
    X = latent.copy()
    for j, kind in enumerate(kinds):
        if kind.is_categorical:
            X[:, j] = (latent[:, j] >= kind.threshold).astype(np.float64)

    scores = latent @ coefficients
    y = (scores > np.median(scores)).astype(np.float64)
    data = DataSet(X, y, kinds, TASK_CLASSIFICATION,
                   default_feature_names(d))
    return data, coefficients


def add_noise(data, level, seed):
    """Add independent N(0, (multiplier * sigma_j)^2) noise to every column.

    Labels are untouched; constant columns pass through unchanged. Each call
    draws fresh noise from ``seed``.
    """
    if data.n_samples == 0:
        raise InvalidSpecError("cannot noise an empty dataset")
    mult = level.multiplier
    if mult == 0.0:
        return replace_matrix(data, data.X.copy())
    rng = np.random.default_rng(seed)
    sigma = data.X.std(axis=0)
    noised = data.X + rng.standard_normal(data.X.shape) * (mult * sigma)
    return replace_matrix(data, noised)


def replace_matrix(data, X):
    return DataSet(X, data.y.copy(), data.kinds, data.task,
                   data.feature_names, data.dropped_rows)


ROLE_CONTINUOUS = "continuous"
ROLE_CATEGORICAL = "categorical"
ROLE_TARGET = "target"
ROLE_IGNORE = "ignore"
_ROLES = {ROLE_CONTINUOUS, ROLE_CATEGORICAL, ROLE_TARGET, ROLE_IGNORE}


def load_csv(path, schema):
    """Ingest a headered CSV file under a column-role schema.

    ``schema`` maps column name -> one of continuous / categorical / target /
    ignore; exactly one target is required, and file columns absent from the
    schema are ignored. Rows with a missing target or missing feature value
    are dropped and counted. Categorical text columns are integer-coded by
    sorted unique value.
    """
    for name, role in schema.items():
        if role not in _ROLES:
            raise IngestionError(
                f"unknown role {role!r} for column {name!r}")
    targets = [name for name, role in schema.items() if role == ROLE_TARGET]
    if len(targets) != 1:
        raise IngestionError(
            f"schema must name exactly one target column, got {targets}")
    target_col = targets[0]

    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot open {path}: {exc}") from None
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        missing_cols = [n for n in schema
                        if n not in header and schema[n] != ROLE_IGNORE]
        if missing_cols:
            raise IngestionError(
                f"{path}: schema columns not present in file: {missing_cols}")

        feature_cols = [(i, name) for i, name in enumerate(header)
                        if schema.get(name) in (ROLE_CONTINUOUS,
                                                ROLE_CATEGORICAL)]
        if not feature_cols:
            raise IngestionError(f"{path}: schema declares no feature columns")
        target_idx = header.index(target_col)

        raw_rows = []
        dropped = 0
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise IngestionError(
                    f"{path}: line {lineno} has {len(row)} fields, "
                    f"expected {len(header)}")
            cells = [c.strip() for c in row]
            wanted = [cells[i] for i, _ in feature_cols] + [cells[target_idx]]
            if any(c.lower() in _MISSING for c in wanted):
                dropped += 1
                continue
            raw_rows.append(wanted)

    if not raw_rows:
        raise IngestionError(f"{path}: no usable data rows")

    n = len(raw_rows)
    d = len(feature_cols)
    X = np.empty((n, d), dtype=np.float64)
    kinds = []
    for j, (_, name) in enumerate(feature_cols):
        texts = [raw_rows[r][j] for r in range(n)]
        is_cat = schema[name] == ROLE_CATEGORICAL
        try:
            X[:, j] = [float(t) for t in texts]
        except ValueError:
            if not is_cat:
                bad = next(t for t in texts if not _is_float(t))
                raise IngestionError(
                    f"{path}: non-numeric value {bad!r} in continuous "
                    f"column {name!r}") from None
            codes = {t: i for i, t in enumerate(sorted(set(texts)))}
            X[:, j] = [codes[t] for t in texts]
        kinds.append(FeatureKind(KIND_CATEGORICAL) if is_cat
                     else FeatureKind(KIND_CONTINUOUS))

    try:
        y = np.array([float(raw_rows[r][d]) for r in range(n)])
    except ValueError:
        raise IngestionError(
            f"{path}: target column {target_col!r} must be numeric") from None

    task = (TASK_CLASSIFICATION
            if set(np.unique(y)) <= {0.0, 1.0} else TASK_REGRESSION)
    names = tuple(name for _, name in feature_cols)
    return DataSet(X, y, tuple(kinds), task, names, dropped_rows=dropped)


def _is_float(text):
    try:
        float(text)
        return True
    except ValueError:
        return False
