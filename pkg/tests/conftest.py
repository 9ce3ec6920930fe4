import datetime as dt

import numpy as np
import pytest

from tanwb.dataset import CaseRecord, Dataset, Severity
from tanwb.schema import ROLE_CLASS, ROLE_DEMOGRAPHIC, ROLE_IMAGING, Schema, Variable


def make_schema(feature_states, names=None, with_age=False):
    """Schema with the given per-feature state tuples and a binary class."""
    variables = []
    for i, states in enumerate(feature_states):
        if with_age and i == 0:
            name = "Age Group"
            role = ROLE_DEMOGRAPHIC
        else:
            name = names[i] if names else f"F{i}"
            role = ROLE_IMAGING
        variables.append(Variable(name=name, states=tuple(states), role=role))
    variables.append(
        Variable(name="Class", states=("negative", "positive"), role=ROLE_CLASS)
    )
    return Schema(variables=tuple(variables), class_variable_name="Class")


def make_dataset(schema, rows):
    """Rows are (patient_id, states tuple, severity); dates are sequential."""
    base = dt.date(2010, 1, 1)
    records = tuple(
        CaseRecord(
            patient_id=pid,
            exam_date=base + dt.timedelta(days=i),
            states=tuple(states),
            outcome=sev,
        )
        for i, (pid, states, sev) in enumerate(rows)
    )
    return Dataset(schema=schema, records=records)


def random_dataset(rng, n_features=3, n_states=(2, 3), n_rows=50, pos_rate=0.4):
    """Dataset of iid random categorical rows, half-ish positive."""
    states = [int(rng.integers(n_states[0], n_states[1] + 1)) for _ in range(n_features)]
    schema = make_schema([tuple(f"s{k}" for k in range(s)) for s in states])
    rows = []
    for i in range(n_rows):
        sev = Severity.INVASIVE if rng.random() < pos_rate else Severity.BENIGN
        rows.append(
            (f"p{i}", tuple(int(rng.integers(0, s)) for s in states), sev)
        )
    return make_dataset(schema, rows)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
