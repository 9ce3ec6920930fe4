"""Exception types shared across the workbench."""


class SchemaError(ValueError):
    """Schema file is malformed or violates schema invariants."""


class DatasetError(ValueError):
    """Case data does not conform to the schema (bad state, column, or date)."""


class ModelError(ValueError):
    """A model is structurally invalid or cannot answer the query."""


class EvaluationError(ValueError):
    """Cross-validation or curve construction cannot proceed on this input."""


class RankDeficiencyError(ValueError):
    """Regression design matrix is collinear."""
