"""Command-line entry point; thin wiring over the library and the service.

Every artifact embeds the run configuration, and identical configurations
produce byte-identical outputs. TANWB_THREADS caps fold parallelism.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import evaluation, regression, synthetic
from .dataset import TASKS, build_fold_plan, load_biopsy_events, parse_dataset, summarize
from .dataset import render_summary, save_dataset
from .errors import DatasetError
from .model_io import load_model, save_model
from .schema import load_schema
from .tan import fit, posterior

DEFAULT_FOLDS = 10
DEFAULT_ALPHA = 0.5
DEFAULT_GRID = 5001
DEFAULT_SUBPOP_GRID = 2001
DEFAULT_SEED = 0


def _threads() -> int | None:
    raw = os.environ.get("TANWB_THREADS")
    if raw is None:
        return None
    try:
        return max(1, int(raw))
    except ValueError:
        raise DatasetError(f"TANWB_THREADS must be an integer, got {raw!r}") from None


def _load_data(args):
    schema = load_schema(args.schema)
    events = load_biopsy_events(args.events) if getattr(args, "events", None) else None
    data = parse_dataset(args.data, schema, events=events)
    return schema, data


def _config(args, keys) -> dict:
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.truth:
        truth = synthetic.load_ground_truth(args.truth)
    else:
        truth = synthetic.make_published_cohort_model(seed=args.truth_seed)
    data = synthetic.sample_dataset(truth, args.n, seed=args.seed)
    config = _config(args, ("n", "seed", "truth", "truth_seed", "out"))
    schema_doc = {**truth.schema.to_dict(), "config": config}
    with open(out / "schema.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(schema_doc, fh, indent=2)
        fh.write("\n")
    save_dataset(data, out / "dataset.csv", config=config)
    synthetic.save_ground_truth(truth, out / "truth.json", config=config)
    print(f"wrote {out / 'schema.json'}, {out / 'dataset.csv'}, {out / 'truth.json'}")
    return 0


def cmd_train(args) -> int:
    schema, data = _load_data(args)
    model = fit(data, args.task, alpha=args.alpha, weight_kind=args.weights)
    config = _config(args, ("schema", "data", "task", "alpha", "weights", "events"))
    save_model(model, schema, args.task, args.out, extra={"config": config})
    print(f"wrote {args.out}")
    return 0


def cmd_crossval(args) -> int:
    schema, data = _load_data(args)
    plan = build_fold_plan(data, args.folds, seed=args.seed)
    scores = evaluation.run_cross_validation(
        data, plan, args.task, alpha=args.alpha, weight_kind=args.weights,
        max_workers=_threads(),
    )
    config = _config(
        args, ("schema", "data", "task", "folds", "seed", "alpha", "weights", "events")
    )
    evaluation.write_scores_csv(scores, args.out, config=config)
    print(f"wrote {args.out} ({len(scores)} cases)")
    return 0


def cmd_sweep(args) -> int:
    scores, score_config = evaluation.read_scores_csv(args.scores)
    subpop = args.subpop or ""
    if subpop:
        scores = evaluation.filter_subpopulation(scores, subpop)
        if not scores.scored:
            raise DatasetError(f"no cases in subpopulation {subpop!r}")
    grid = args.grid if args.grid else (DEFAULT_SUBPOP_GRID if subpop else DEFAULT_GRID)
    config = {**score_config, **_config(args, ("scores", "subpop")), "grid": grid}
    report = evaluation.threshold_sweep(scores, grid, subpopulation=subpop, config=config)
    evaluation.write_sweep_csv(report, args.out)
    print(f"wrote {args.out} ({grid} thresholds)")
    return 0


def cmd_curves(args) -> int:
    scores, score_config = evaluation.read_scores_csv(args.scores)
    subpop = args.subpop or ""
    if subpop:
        scores = evaluation.filter_subpopulation(scores, subpop)
        if not scores.scored:
            raise DatasetError(f"no cases in subpopulation {subpop!r}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kinds = ("roc", "pr") if args.kind == "both" else (args.kind,)
    config = {**score_config, **_config(args, ("scores", "subpop", "mode"))}
    for kind in kinds:
        summary = evaluation.curve_summary(scores, kind, mode=args.mode)
        stem = kind if not subpop else f"{kind}_{subpop}"
        evaluation.write_curves_csv(summary, out / f"{stem}.csv", config=config)
        sidecar = evaluation.curve_sidecar(summary, config=config)
        with open(out / f"{stem}.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")
        if summary.mode == evaluation.MODE_POOLED:
            print(f"{kind}: area={sidecar['area']:.6f} -> {out / (stem + '.csv')}")
        else:
            print(
                f"{kind}: mean area={sidecar['area_mean']:.6f} "
                f"[{sidecar['area_min']:.6f}, {sidecar['area_max']:.6f}] "
                f"-> {out / (stem + '.csv')}"
            )
    return 0


def cmd_fitpoly(args) -> int:
    report = evaluation.read_sweep_csv(args.sweep)
    reg = regression.fit_sweep_relationship(report, args.relationship)
    text = regression.render_report_text(reg)
    doc = {
        "config": {**_config(args, ("sweep", "relationship")),
                   **(report.config or {})},
        "report": regression.report_to_dict(reg),
    }
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    json_path = args.json_out or str(Path(args.out).with_suffix(".json"))
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {args.out} and {json_path} (R-Square {reg.r_square:.6f})")
    return 0


def cmd_summarize(args) -> int:
    schema, data = _load_data(args)
    text = render_summary(summarize(data), schema)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_predict(args) -> int:
    import hashlib

    schema = load_schema(args.schema)
    model, doc = load_model(args.model)
    if args.features.startswith("@"):
        features = json.loads(Path(args.features[1:]).read_text(encoding="utf-8"))
    else:
        features = json.loads(args.features)
    states = []
    for var in schema.features:
        if var.name not in features:
            raise DatasetError(f"missing feature: {var.name!r}")
        states.append(var.state_index(features[var.name]))
    extra = set(features) - {v.name for v in schema.features}
    if extra:
        raise DatasetError(f"unknown features: {sorted(extra)}")
    digest = hashlib.sha256(Path(args.model).read_bytes()).hexdigest()
    print(
        json.dumps(
            {
                "probability": posterior(model, states),
                "task": doc["task"],
                "model_id": "sha256:" + digest,
            }
        )
    )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app, load_artifacts

    artifacts = load_artifacts(args.model, args.schema, args.sweep or [])
    app = create_app(artifacts, ui_dir=args.ui)
    host, _, port = args.bind.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tanwb",
        description="tree-augmented naive Bayes workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(fn=fn)
        return p

    p = add("synth", cmd_synth, "generate a synthetic dataset from a ground-truth model")
    p.add_argument("--n", type=int, default=synthetic.PUBLISHED_TOTAL_CASES)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--truth", help="existing ground-truth model JSON to sample from")
    p.add_argument("--truth-seed", type=int, default=DEFAULT_SEED,
                   help="construction seed for the default published-cohort model")
    p.add_argument("--out", required=True, help="output directory")

    for name, fn, help_text in (
        ("train", cmd_train, "fit a TAN model and serialize it"),
        ("crossval", cmd_crossval, "k-fold cross-validation, emit pooled scores CSV"),
    ):
        p = add(name, fn, help_text)
        p.add_argument("--schema", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--task", choices=TASKS, default="bm")
        p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
        p.add_argument("--weights", choices=("cmi", "mi"), default="cmi",
                       help="tree edge weights: conditional MI (default) or plain MI")
        p.add_argument("--events", help="optional biopsy-events CSV for outcome labeling")
        p.add_argument("--out", required=True)
        if name == "crossval":
            p.add_argument("--folds", type=int, default=DEFAULT_FOLDS)
            p.add_argument("--seed", type=int, default=DEFAULT_SEED)

    p = add("sweep", cmd_sweep, "threshold sweep table from a scores CSV")
    p.add_argument("--scores", required=True)
    p.add_argument("--grid", type=int, default=None,
                   help=f"grid points (default {DEFAULT_GRID}, "
                        f"{DEFAULT_SUBPOP_GRID} with --subpop)")
    p.add_argument("--subpop", help="restrict to one age-group state")
    p.add_argument("--out", required=True)

    p = add("curves", cmd_curves, "ROC/PR curve CSVs plus area sidecars")
    p.add_argument("--scores", required=True)
    p.add_argument("--kind", choices=("roc", "pr", "both"), default="both")
    p.add_argument("--mode", choices=(evaluation.MODE_POOLED, evaluation.MODE_PER_FOLD),
                   default=evaluation.MODE_POOLED)
    p.add_argument("--subpop", help="restrict to one age-group state")
    p.add_argument("--out", required=True, help="output directory")

    p = add("fitpoly", cmd_fitpoly, "cubic regression diagnostics over a sweep")
    p.add_argument("--sweep", required=True)
    p.add_argument("--relationship", choices=regression.RELATIONSHIPS,
                   default=regression.RELATIONSHIP_PRECISION_ON_RECALL)
    p.add_argument("--out", required=True, help="text report path")
    p.add_argument("--json-out", help="JSON report path (default: .json next to --out)")

    p = add("summarize", cmd_summarize, "variable/outcome summary table")
    p.add_argument("--schema", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--events", help="optional biopsy-events CSV for outcome labeling")
    p.add_argument("--out")

    p = add("predict", cmd_predict, "posterior for one feature vector")
    p.add_argument("--model", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--features", required=True,
                   help="JSON mapping of feature name to state label, or @file")

    p = add("serve", cmd_serve, "start the HTTP decision service")
    p.add_argument("--model", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--sweep", action="append",
                   help="sweep CSV to serve for threshold lookups (repeatable)")
    p.add_argument("--bind", default="127.0.0.1:8000")
    p.add_argument("--ui", help="static directory for the what-if console")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
