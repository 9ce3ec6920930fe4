import datetime as dt
import io
import json
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tanwb.dataset import (
    BiopsyEvent,
    Severity,
    build_fold_plan,
    derive_class,
    parse_dataset,
    render_dataset,
    resolve_episode_label,
    summarize,
)
from tanwb.errors import DatasetError, SchemaError
from tanwb.schema import Schema, Variable, load_schema, save_schema, schema_from_dict
from tanwb.synthetic import PUBLISHED_SEVERITY_COUNTS, published_schema

from conftest import make_dataset, make_schema

D = dt.date


def ev(pid, side, date, sev):
    return BiopsyEvent(patient_id=pid, breast_side=side, date=date, severity=sev)


# ---------------------------------------------------------------------------
# load_schema


class TestLoadSchema:
    def test_published_schema_has_30_features_plus_class(self, tmp_path):
        path = tmp_path / "schema.json"
        save_schema(published_schema(), path)
        schema = load_schema(path)
        assert schema.n_features == 30
        assert len(schema.variables) == 31
        assert schema.class_variable.role == "class"

    def test_minimal_two_variable_schema(self):
        schema = schema_from_dict(
            {
                "variables": [
                    {"name": "f", "states": ["a", "b"], "role": "imaging"},
                    {"name": "c", "states": ["neg", "pos"], "role": "class"},
                ],
                "class_variable": "c",
            }
        )
        assert schema.n_features == 1
        assert schema.features[0].states == ("a", "b")

    def test_mass_margin_circumscribed_states(self):
        schema = published_schema()
        var = schema.features[schema.feature_index("Mass Margin Circumscribed")]
        assert var.states == ("missing", "present")

    def test_duplicate_variable_name_rejected(self):
        with pytest.raises(SchemaError, match="duplicate"):
            schema_from_dict(
                {
                    "variables": [
                        {"name": "f", "states": ["a", "b"], "role": "imaging"},
                        {"name": "f", "states": ["a", "b"], "role": "imaging"},
                        {"name": "c", "states": ["n", "p"], "role": "class"},
                    ],
                    "class_variable": "c",
                }
            )

    def test_single_state_variable_rejected(self):
        with pytest.raises(SchemaError, match="at least 2 states"):
            Variable(name="f", states=("only",), role="imaging")

    def test_missing_class_variable_rejected(self):
        with pytest.raises(SchemaError, match="class"):
            schema_from_dict(
                {
                    "variables": [
                        {"name": "f", "states": ["a", "b"], "role": "imaging"}
                    ],
                    "class_variable": "c",
                }
            )

    def test_load_from_file(self, tmp_path):
        doc = {
            "variables": [
                {"name": "f", "states": ["a", "b"], "role": "imaging"},
                {"name": "c", "states": ["n", "p"], "role": "class"},
            ],
            "class_variable": "c",
        }
        path = tmp_path / "s.json"
        path.write_text(json.dumps(doc))
        assert load_schema(path).n_features == 1


# ---------------------------------------------------------------------------
# parse_dataset


def two_feature_schema():
    return make_schema([("a", "b"), ("missing", "No", "Yes")],
                       names=["Personal History", "Palpable Lump"])


class TestParseDataset:
    def test_three_valid_rows(self):
        csv_text = (
            "patient_id,exam_date,Personal History,Palpable Lump,outcome\n"
            "p1,2010-01-01,a,No,Benign\n"
            "p2,2010-01-02,b,Yes,Invasive\n"
            "p3,2010-01-03,a,missing,LG\n"
        )
        data = parse_dataset(io.StringIO(csv_text), two_feature_schema())
        assert len(data) == 3
        assert data.records[1].states == (1, 2)
        assert data.records[2].outcome == Severity.LG

    def test_empty_cell_maps_to_missing_state(self):
        csv_text = (
            "patient_id,exam_date,Personal History,Palpable Lump,outcome\n"
            "p1,2010-01-01,a,,Benign\n"
        )
        data = parse_dataset(io.StringIO(csv_text), two_feature_schema())
        assert data.records[0].states[1] == 0  # "missing"

    def test_unknown_state_reports_row_and_column(self):
        csv_text = (
            "patient_id,exam_date,Personal History,Palpable Lump,outcome\n"
            "p1,2010-01-01,a,No,Benign\n"
            "p2,2010-01-02,Maybe,No,Benign\n"
        )
        with pytest.raises(DatasetError, match=r"row 3.*Personal History.*Maybe"):
            parse_dataset(io.StringIO(csv_text), two_feature_schema())

    def test_empty_cell_without_missing_state_rejected(self):
        csv_text = (
            "patient_id,exam_date,Personal History,Palpable Lump,outcome\n"
            "p1,2010-01-01,,No,Benign\n"
        )
        with pytest.raises(DatasetError, match="no 'missing' state"):
            parse_dataset(io.StringIO(csv_text), two_feature_schema())

    def test_unknown_column_rejected(self):
        csv_text = (
            "patient_id,exam_date,Personal History,Palpable Lump,bogus,outcome\n"
            "p1,2010-01-01,a,No,x,Benign\n"
        )
        with pytest.raises(DatasetError, match="unknown column 'bogus'"):
            parse_dataset(io.StringIO(csv_text), two_feature_schema())

    def test_missing_feature_column_rejected(self):
        csv_text = "patient_id,exam_date,Personal History,outcome\np1,2010-01-01,a,Benign\n"
        with pytest.raises(DatasetError, match="Palpable Lump"):
            parse_dataset(io.StringIO(csv_text), two_feature_schema())

    def test_malformed_date_rejected(self):
        csv_text = (
            "patient_id,exam_date,Personal History,Palpable Lump,outcome\n"
            "p1,01/02/2010,a,No,Benign\n"
        )
        with pytest.raises(DatasetError, match="malformed date"):
            parse_dataset(io.StringIO(csv_text), two_feature_schema())

    def test_outcomes_joined_from_events(self):
        csv_text = (
            "patient_id,exam_date,Personal History,Palpable Lump\n"
            "p1,2010-01-01,a,No\n"
        )
        events = [
            ev("p1", "left", D(2010, 1, 10), Severity.BENIGN),
            ev("p1", "left", D(2010, 3, 1), Severity.HG),
            ev("p1", "right", D(2011, 1, 1), Severity.INVASIVE),
        ]
        data = parse_dataset(io.StringIO(csv_text), two_feature_schema(), events=events)
        assert data.records[0].outcome == Severity.HG

    def test_exam_with_no_following_events_rejected(self):
        csv_text = (
            "patient_id,exam_date,Personal History,Palpable Lump\n"
            "p1,2012-01-01,a,No\n"
        )
        events = [ev("p1", "left", D(2010, 1, 10), Severity.BENIGN)]
        with pytest.raises(DatasetError, match="no biopsy events"):
            parse_dataset(io.StringIO(csv_text), two_feature_schema(), events=events)


# ---------------------------------------------------------------------------
# resolve_episode_label


class TestEpisodeLabel:
    def test_benign_then_hg_in_window(self):
        events = [
            ev("p", "left", D(2010, 1, 1), Severity.BENIGN),
            ev("p", "left", D(2010, 4, 1), Severity.HG),
        ]
        assert resolve_episode_label(events) == Severity.HG

    def test_singleton(self):
        assert resolve_episode_label([ev("p", "left", D(2010, 1, 1), Severity.LG)]) == Severity.LG

    def test_max_over_three_in_window(self):
        events = [
            ev("p", "left", D(2010, 1, 1), Severity.INTG),
            ev("p", "left", D(2010, 1, 1) + dt.timedelta(days=100), Severity.INVASIVE),
            ev("p", "left", D(2010, 1, 1) + dt.timedelta(days=150), Severity.BENIGN),
        ]
        # brute-force oracle: max over events within the 183-day window
        window = [e.severity for e in events if (e.date - D(2010, 1, 1)).days <= 183]
        assert resolve_episode_label(events) == max(window) == Severity.INVASIVE

    def test_event_beyond_window_excluded(self):
        first = D(2010, 1, 1)
        inside = ev("p", "left", first + dt.timedelta(days=183), Severity.HG)
        outside = ev("p", "left", first + dt.timedelta(days=184), Severity.HG)
        start = ev("p", "left", first, Severity.BENIGN)
        assert resolve_episode_label([start, inside]) == Severity.HG
        assert resolve_episode_label([start, outside]) == Severity.BENIGN

    def test_empty_events_rejected(self):
        with pytest.raises(DatasetError):
            resolve_episode_label([])

    def test_mixed_sides_rejected(self):
        events = [
            ev("p", "left", D(2010, 1, 1), Severity.BENIGN),
            ev("p", "right", D(2010, 1, 2), Severity.BENIGN),
        ]
        with pytest.raises(DatasetError, match="multiple"):
            resolve_episode_label(events)

    @settings(max_examples=60, deadline=None)
    @given(
        severities=st.lists(st.sampled_from(list(Severity)), min_size=1, max_size=6),
        offsets=st.lists(st.integers(0, 180), min_size=6, max_size=6),
        extra=st.sampled_from(list(Severity)),
    )
    def test_monotone_in_added_severity(self, severities, offsets, extra):
        base = D(2012, 6, 1)
        events = [
            ev("p", "left", base + dt.timedelta(days=offsets[i]), s)
            for i, s in enumerate(severities)
        ]
        label = resolve_episode_label(events)
        # an extra event inside the window at severity >= label never lowers it
        if extra >= label:
            extended = events + [ev("p", "left", base, extra)]
            assert resolve_episode_label(extended) >= label


# ---------------------------------------------------------------------------
# derive_class


class TestDeriveClass:
    def test_lg_is_positive_under_bm(self):
        assert derive_class(Severity.LG, "bm") == 1

    def test_lg_is_negative_under_b1m1(self):
        assert derive_class(Severity.LG, "b1m1") == 0

    def test_benign_is_negative_under_bm(self):
        assert derive_class(Severity.BENIGN, "bm") == 0

    def test_published_population_split_bm(self):
        # published case mix: 3569 / 134 / 179 / 216 / 1509
        counts = Counter()
        for sev, n in PUBLISHED_SEVERITY_COUNTS.items():
            counts[derive_class(sev, "bm")] += n
        assert counts[0] == 3569 and counts[1] == 2038

    def test_published_population_split_b1m1(self):
        counts = Counter()
        for sev, n in PUBLISHED_SEVERITY_COUNTS.items():
            counts[derive_class(sev, "b1m1")] += n
        assert counts[0] == 3703 and counts[1] == 1904

    def test_partition_and_nesting(self):
        for sev in Severity:
            assert derive_class(sev, "bm") in (0, 1)
            assert derive_class(sev, "b1m1") in (0, 1)
            # B1M1 negatives are a superset of BM negatives
            if derive_class(sev, "bm") == 0:
                assert derive_class(sev, "b1m1") == 0

    def test_unknown_task_rejected(self):
        with pytest.raises(DatasetError):
            derive_class(Severity.BENIGN, "nope")


# ---------------------------------------------------------------------------
# build_fold_plan


def singleton_rows(n, severity, prefix="p"):
    return [(f"{prefix}{i}", (0,), severity) for i in range(n)]


class TestFoldPlan:
    def test_ten_singletons_k10(self):
        schema = make_schema([("a", "b")])
        data = make_dataset(schema, singleton_rows(10, Severity.BENIGN))
        plan = build_fold_plan(data, 10, seed=0)
        assert sorted(plan.assignment) == list(range(10))

    def test_patient_cases_stay_together(self):
        schema = make_schema([("a", "b")])
        rows = singleton_rows(12, Severity.BENIGN) + [
            ("shared", (0,), Severity.HG),
            ("shared", (1,), Severity.BENIGN),
            ("shared", (0,), Severity.LG),
        ]
        data = make_dataset(schema, rows)
        plan = build_fold_plan(data, 5, seed=3)
        folds = {plan.assignment[i] for i, r in enumerate(data.records)
                 if r.patient_id == "shared"}
        assert len(folds) == 1

    def test_balanced_strata_40_benign_40_invasive(self):
        schema = make_schema([("a", "b")])
        rows = singleton_rows(40, Severity.BENIGN, "b") + singleton_rows(
            40, Severity.INVASIVE, "m"
        )
        data = make_dataset(schema, rows)
        plan = build_fold_plan(data, 10, seed=11)
        per_fold = Counter()
        for i, rec in enumerate(data.records):
            per_fold[(plan.assignment[i], rec.outcome)] += 1
        for fold in range(10):
            assert per_fold[(fold, Severity.BENIGN)] == 4
            assert per_fold[(fold, Severity.INVASIVE)] == 4

    def test_deterministic_given_seed(self):
        schema = make_schema([("a", "b")])
        data = make_dataset(schema, singleton_rows(37, Severity.BENIGN))
        assert build_fold_plan(data, 7, seed=5) == build_fold_plan(data, 7, seed=5)
        assert build_fold_plan(data, 7, seed=5) != build_fold_plan(data, 7, seed=6)

    def test_k_exceeding_patients_rejected(self):
        schema = make_schema([("a", "b")])
        data = make_dataset(schema, singleton_rows(3, Severity.BENIGN))
        with pytest.raises(DatasetError, match="exceeds"):
            build_fold_plan(data, 4, seed=0)

    @settings(max_examples=40, deadline=None)
    @given(
        n_patients=st.integers(2, 25),
        cases_per=st.lists(st.integers(1, 4), min_size=25, max_size=25),
        k=st.integers(2, 6),
        seed=st.integers(0, 10),
    )
    def test_every_case_assigned_and_patients_atomic(self, n_patients, cases_per, k, seed):
        if k > n_patients:
            return
        schema = make_schema([("a", "b")])
        rows = []
        for p in range(n_patients):
            for c in range(cases_per[p]):
                sev = Severity.INVASIVE if (p + c) % 3 == 0 else Severity.BENIGN
                rows.append((f"p{p}", (c % 2,), sev))
        data = make_dataset(schema, rows)
        plan = build_fold_plan(data, k, seed=seed)
        assert len(plan.assignment) == len(data)
        assert all(0 <= f < k for f in plan.assignment)
        by_patient = {}
        for i, rec in enumerate(data.records):
            by_patient.setdefault(rec.patient_id, set()).add(plan.assignment[i])
        assert all(len(folds) == 1 for folds in by_patient.values())


# ---------------------------------------------------------------------------
# summarize


class TestSummarize:
    def test_hand_counted_fixture(self):
        schema = make_schema([("a", "b"), ("x", "y", "z")])
        data = make_dataset(
            schema,
            [
                ("p1", (0, 0), Severity.BENIGN),
                ("p2", (0, 2), Severity.BENIGN),
                ("p3", (1, 2), Severity.INVASIVE),
            ],
        )
        s = summarize(data)
        assert s.n_cases == 3
        assert s.state_counts["F0"] == {"a": 2, "b": 1}
        assert s.state_counts["F1"] == {"x": 1, "y": 0, "z": 2}
        assert s.outcome_counts == {"Benign": 2, "Invasive": 1}

    def test_all_missing_column(self):
        schema = make_schema([("missing", "present")])
        data = make_dataset(
            schema, [(f"p{i}", (0,), Severity.BENIGN) for i in range(5)]
        )
        s = summarize(data)
        assert s.state_counts["F0"]["missing"] == 5

    def test_age_group_breakdown(self):
        schema = make_schema([("Younger", "Middle", "Older")], with_age=True)
        data = make_dataset(
            schema,
            [
                ("p1", (2,), Severity.INVASIVE),
                ("p2", (2,), Severity.BENIGN),
                ("p3", (0,), Severity.BENIGN),
            ],
        )
        s = summarize(data)
        assert s.outcome_by_age_group["Older"] == {"Benign": 1, "Invasive": 1}
        assert s.outcome_by_age_group["Younger"] == {"Benign": 1}

    def test_render_parse_round_trip(self):
        schema = make_schema([("a", "b"), ("missing", "No", "Yes")],
                             names=["F0", "Palpable Lump"])
        data = make_dataset(
            schema,
            [
                ("p1", (0, 1), Severity.BENIGN),
                ("p1", (1, 0), Severity.HG),
                ("p2", (1, 2), Severity.LG),
            ],
        )
        rendered = render_dataset(data)
        reparsed = parse_dataset(io.StringIO(rendered), schema)
        assert summarize(reparsed) == summarize(data)
        assert reparsed == data
