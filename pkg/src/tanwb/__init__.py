"""Tree-augmented naive Bayes workbench.

Learn TAN classifiers from categorical case records, score them by
patient-grouped cross-validation, sweep biopsy thresholds, build ROC/PR
curves, fit cubic ANOVA diagnostics, and generate synthetic datasets for
closed-loop verification.
"""

from .dataset import (
    BiopsyEvent,
    CaseRecord,
    Dataset,
    FoldPlan,
    Severity,
    build_fold_plan,
    derive_class,
    parse_dataset,
    resolve_episode_label,
    summarize,
)
from .errors import (
    DatasetError,
    EvaluationError,
    ModelError,
    RankDeficiencyError,
    SchemaError,
)
from .evaluation import (
    ConfusionCounts,
    CurvePoint,
    Metrics,
    ScoredCase,
    ScoreSet,
    ThresholdReport,
    area_under_curve,
    confusion_at_threshold,
    filter_subpopulation,
    metrics_from_counts,
    pr_curve,
    roc_curve,
    run_cross_validation,
    threshold_sweep,
)
from .regression import RegressionReport, fit_cubic, fit_curve_relationship, predict_poly
from .schema import Schema, Variable, load_schema, save_schema, schema_hash
from .synthetic import (
    GroundTruthModel,
    make_dependent_truth,
    make_published_cohort_model,
    sample_dataset,
    structure_recovery_score,
)
from .tan import (
    CountCube,
    TanModel,
    TanStructure,
    conditional_mutual_information,
    estimate_cpts,
    learn_structure,
    max_weight_spanning_tree,
    orient_tree,
    posterior,
    tabulate_counts,
)

__version__ = "0.1.0"
