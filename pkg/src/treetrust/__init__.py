"""treetrust: train tree ensembles from scratch and audit the accuracy and
stability of gain and Tree SHAP global feature importances."""

__version__ = "0.1.0"

from .data import (
    DataSet,
    FeatureKind,
    NoiseLevel,
    SyntheticSpec,
    add_noise,
    generate_synthetic,
    load_csv,
)
from .ensemble import (
    Ensemble,
    HyperParams,
    SearchSpace,
    Tree,
    auroc,
    fit,
    load_model,
    predict,
    predict_proba,
    random_search,
    save_model,
)
from .explain import (
    ImportanceVector,
    LocalAttribution,
    exact_shapley_oracle,
    gain_importance,
    shap_global,
    tree_shap_local,
)
from .harness import ExperimentConfig, ExperimentReport, run_experiment
from .metrics import (
    CorrelationPair,
    RankOutcome,
    pearson,
    spearman,
    topk_rank_accuracy,
)

__all__ = [
    "__version__",
    "DataSet", "FeatureKind", "NoiseLevel", "SyntheticSpec",
    "add_noise", "generate_synthetic", "load_csv",
    "Ensemble", "HyperParams", "SearchSpace", "Tree",
    "auroc", "fit", "predict", "predict_proba", "random_search",
    "save_model", "load_model",
    "ImportanceVector", "LocalAttribution",
    "exact_shapley_oracle", "gain_importance", "shap_global",
    "tree_shap_local",
    "ExperimentConfig", "ExperimentReport", "run_experiment",
    "CorrelationPair", "RankOutcome", "pearson", "spearman",
    "topk_rank_accuracy",
]
