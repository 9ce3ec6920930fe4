"""HTTP decision service: per-case prediction and threshold-tradeoff lookup.

Serves a trained model and precomputed threshold sweeps over JSON. The
artifacts are immutable once loaded; handlers are read-only, so concurrent
identical requests always return identical responses. Reloading swaps the
whole artifact set atomically.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, ConfigDict

from .evaluation import ThresholdReport, format_metric, lookup_threshold_row, read_sweep_csv
from .model_io import load_model
from .schema import Schema, load_schema
from .tan import TanModel, posterior


class PredictRequest(BaseModel):
    features: dict[str, str]


class PredictResponse(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    probability: float
    task: str
    model_id: str


@dataclass(frozen=True)
class ServiceArtifacts:
    schema: Schema
    model: TanModel
    task: str
    model_id: str
    model_schema_hash: str
    sweeps: dict  # subpopulation ("" = whole population) -> ThresholdReport


def load_artifacts(
    model_path: Union[str, Path],
    schema_path: Union[str, Path],
    sweep_paths: Sequence[Union[str, Path]] = (),
) -> ServiceArtifacts:
    schema = load_schema(schema_path)
    model, doc = load_model(model_path)
    digest = hashlib.sha256(Path(model_path).read_bytes()).hexdigest()
    sweeps: dict[str, ThresholdReport] = {}
    for path in sweep_paths:
        report = read_sweep_csv(path)
        sweeps[report.subpopulation] = report
    return ServiceArtifacts(
        schema=schema,
        model=model,
        task=doc["task"],
        model_id="sha256:" + digest,
        model_schema_hash=doc["schema_hash"],
        sweeps=sweeps,
    )


def _error(status: int, message: str, details: Sequence[str] = ()) -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"error": message, "details": list(details)}
    )


def create_app(
    artifacts: ServiceArtifacts | None, ui_dir: Union[str, Path, None] = None
) -> FastAPI:
    app = FastAPI(title="tanwb decision service")
    app.state.artifacts = artifacts

    def current() -> ServiceArtifacts | None:
        return app.state.artifacts

    @app.post("/api/predict")
    def handle_predict(req: PredictRequest):
        art = current()
        if art is None:
            return _error(503, "no model loaded")
        features = art.schema.features
        known = {v.name for v in features}
        problems = [
            f"unknown feature: {name!r}"
            for name in req.features
            if name not in known
        ]
        states = []
        for var in features:
            label = req.features.get(var.name)
            if label is None:
                problems.append(f"missing feature: {var.name!r}")
            elif label not in var.states:
                problems.append(
                    f"unknown state {label!r} for feature {var.name!r}"
                )
            else:
                states.append(var.states.index(label))
        if problems:
            return _error(400, "invalid features", problems)
        prob = posterior(art.model, states)
        return PredictResponse(
            probability=prob, task=art.task, model_id=art.model_id
        )

    @app.get("/api/threshold")
    def handle_threshold_lookup(t: float, subpop: str = ""):
        art = current()
        if art is None or not art.sweeps:
            return _error(503, "no sweep loaded")
        if not 0.0 <= t <= 1.0:
            return _error(400, f"threshold {t} outside [0, 1]")
        report = art.sweeps.get(subpop)
        if report is None:
            return _error(
                404,
                f"no sweep loaded for subpopulation {subpop!r}",
                [f"available: {sorted(art.sweeps)}"],
            )
        row = lookup_threshold_row(report, t)
        c, m = row.counts, row.metrics
        return {
            "requested": t,
            "threshold": c.threshold,
            "subpopulation": subpop,
            "task": report.task,
            "grid_points": report.grid_points,
            "counts": {
                "positive_biopsies": c.tp,
                "negative_biopsies": c.fp,
                "avoided": c.avoided_negatives,
                "missed": c.fn,
                "missed_by_severity": c.missed_by_severity,
                "avoided_by_severity": c.avoided_by_severity,
            },
            "metrics": {
                "ppv": m.ppv,
                "sensitivity": m.sensitivity,
                "specificity": m.specificity,
            },
            "metrics_formatted": {
                "ppv": format_metric(m.ppv),
                "sensitivity": format_metric(m.sensitivity),
                "specificity": format_metric(m.specificity),
            },
        }

    @app.get("/api/model")
    def handle_model_info():
        art = current()
        if art is None:
            return _error(503, "no model loaded")
        structure = art.model.structure
        feature_names = [v.name for v in art.schema.features]
        edges = [
            {"child": feature_names[i], "parent": feature_names[p]}
            for i, p in enumerate(structure.feature_parent)
            if p is not None
        ]
        return {
            "model_id": art.model_id,
            "schema_hash": art.model_schema_hash,
            "task": art.task,
            "alpha": art.model.smoothing_alpha,
            "root_feature": feature_names[structure.root_feature],
            "edges": edges,
            "n_features": len(feature_names),
            "variables": [
                {"name": v.name, "states": list(v.states), "role": v.role}
                for v in art.schema.variables
            ],
            "subpopulations": sorted(art.sweeps),
        }

    @app.get("/api/schema")
    def handle_schema():
        art = current()
        if art is None:
            return _error(503, "no model loaded")
        return art.schema.to_dict()

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
