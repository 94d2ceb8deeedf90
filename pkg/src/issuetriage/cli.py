"""Command-line interface driving training, evaluation, explanation,
drift monitoring and the HTTP service.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import classify, datagen, driftmon, evalharness, explain as explainmod, service, textpipe
from .classify import ClassifierKind, TrainConfig
from .corpus import filter_closed, ground_truth, load_corpus

logger = logging.getLogger(__name__)

ALL_KINDS = [k.value for k in ClassifierKind]


def load_config(path) -> dict:
    """Read a config file: JSON if it starts with '{', else key=value lines."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return json.loads(text)
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = _coerce(value.strip())
    return out


def _coerce(value: str):
    for conv in (int, float):
        try:
            return conv(value)
        except ValueError:
            pass
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    if "," in value:
        return [v.strip() for v in value.split(",")]
    return value


def _train_config(cfg: dict) -> TrainConfig:
    fields = {f for f in TrainConfig.__dataclass_fields__}
    return TrainConfig(**{k: v for k, v in cfg.items() if k in fields})


def _corpus_vectors(corpus_path):
    reports = filter_closed(load_corpus(corpus_path).reports)
    docs = [textpipe.preprocess(r) for r in reports]
    vocab = textpipe.build_vocabulary(docs)
    X = [textpipe.vectorize(d, vocab) for d in docs]
    y = [ground_truth(r) for r in reports]
    return reports, vocab, X, y


def cmd_train(args, cfg):
    ensemble = None
    if args.ensemble_kinds:
        ensemble = {"mode": args.ensemble_mode, "k": args.ensemble_k,
                    "kinds": args.ensemble_kinds.split(",")}
    artifact = service.train_job(
        args.corpus, args.as_of, kind=args.kind,
        config=_train_config(cfg), out_path=args.out, ensemble=ensemble,
    )
    print(json.dumps({
        "artifact": str(args.out),
        "descriptor": artifact.descriptor,
        "classes": list(artifact.classes),
        "training_span": artifact.training_span,
        "fingerprint": artifact.fingerprint,
    }, indent=2))


def cmd_predict(args, cfg):
    artifact = service.load_artifact(args.model)
    model = artifact.model
    tokens = textpipe.tokenize(args.text)
    vec = textpipe.vectorize(tokens, model.vocab)
    if vec.nnz == 0:
        print("no usable terms in input", file=sys.stderr)
        return 1
    if isinstance(model, classify.EnsembleModel):
        team = classify.predict_ensemble(model, vec)
    else:
        team = classify.predict(model, vec)
    out = {"predicted_team": team}
    if args.explain:
        out["explanation"] = explainmod.explain(
            args.text, model, explainmod.ExplainerConfig(K=args.k, seed=cfg.get("seed", 0))
        ).to_json_dict()
    print(json.dumps(out, indent=2))


def cmd_evaluate(args, cfg):
    _, _, X, y = _corpus_vectors(args.corpus)
    kinds = args.kinds.split(",") if args.kinds else ALL_KINDS
    config = _train_config(cfg)
    print(f"{'classifier':<24} accuracy")
    for kind in kinds:
        try:
            result = evalharness.kfold_cv(ClassifierKind(kind), X, y,
                                          k_folds=args.folds, config=config)
            print(f"{kind:<24} {result}")
        except Exception as exc:
            print(f"{kind:<24} failed: {exc}")


def cmd_windows(args, cfg):
    reports = load_corpus(args.corpus).reports
    study = (evalharness.sliding_window_study if args.protocol == "sliding"
             else evalharness.cumulative_window_study)
    results = study(reports, kind=args.kind, max_delta=args.max_delta,
                    config=_train_config(cfg))
    if args.out:
        evalharness.write_window_csv(args.out, results)
        print(f"wrote {len(results)} cells to {args.out}")
    for delta, acc in evalharness.mean_accuracy_per_delta(results).items():
        print(f"delta {delta:>2}: mean accuracy {acc:.4f}")


def cmd_explain(args, cfg):
    artifact = service.load_artifact(args.model)
    config = explainmod.ExplainerConfig(K=args.k, seed=cfg.get("seed", 0))
    if args.top2:
        first, second = explainmod.explain_top2(args.text, artifact.model, config)
        print(first.render_text())
        print()
        print(second.render_text())
    else:
        print(explainmod.explain(args.text, artifact.model, config).render_text())


def cmd_monitor(args, cfg):
    values = [float(line) for line in Path(args.accuracy_file).read_text().split()]
    result = driftmon.pelt_segment(values, penalty=args.penalty,
                                   min_segment=args.min_segment, cost=args.cost)
    print(f"change points: {list(result.change_points)}")
    print(f"segment means: {[round(m, 4) for m in result.segment_means]}")
    alert = driftmon.online_detect(values, penalty=args.penalty,
                                   min_history=args.min_history)
    print("no deterioration alert" if alert is None else f"ALERT {alert.to_json()}")


def cmd_simulate_drift(args, cfg):
    cells = driftmon.run_simulation_study(
        repetitions=args.reps, seed=args.seed, penalty=args.penalty,
        use_fast=not args.no_fast,
    )
    header = f"{'mode':<8} {'drop':<6} {'rate':<6} {'min':<4} {'avg':<7} {'max':<4} {'std':<6} min_acc_at_det"
    print(header)
    for c in cells:
        acc = "" if c.mode == "sudden" else f"{c.min_mean_accuracy_at_detection:.4f}"
        print(f"{c.mode:<8} {round(c.drop_points*100):<6} {c.detection_rate:<6.3f} "
              f"{c.min_time:<4} {c.avg_time:<7.2f} {c.max_time:<4} {c.std_time:<6.2f} {acc}")
    if args.out:
        driftmon.write_study_csv(args.out, cells)
        print(f"wrote {args.out}")


def cmd_serve(args, cfg):
    import uvicorn

    artifact = service.load_artifact(args.model) if args.model else None
    svc = service.TriageService(artifact=artifact, log_path=args.log)
    app = service.create_app(svc, corpus_path=args.corpus, artifact_path=args.model,
                             train_kind=args.kind)
    uvicorn.run(app, host=args.host, port=args.port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="issuetriage",
                                     description="Automated issue-report assignment")
    parser.add_argument("--config", help="config file (key=value lines or JSON)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on the trailing 12 months")
    p.add_argument("--corpus", required=True)
    p.add_argument("--as-of", required=True, help="month YYYY-MM; trains on the 12 months before it")
    p.add_argument("--kind", default="linear_svc", choices=ALL_KINDS)
    p.add_argument("--ensemble-mode", default="SELECTED", choices=["SELECTED", "BEST"])
    p.add_argument("--ensemble-k", type=int, default=3)
    p.add_argument("--ensemble-kinds", help="comma list; presence switches to ensemble training")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict", help="assign a single report text")
    p.add_argument("--model", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--explain", action="store_true")
    p.add_argument("--k", type=int, default=6)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("evaluate", help="cross-validated accuracy per classifier kind")
    p.add_argument("--corpus", required=True)
    p.add_argument("--kinds", help="comma list, default all")
    p.add_argument("--folds", type=int, default=10)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("windows", help="sliding/cumulative window study")
    p.add_argument("--corpus", required=True)
    p.add_argument("--protocol", required=True, choices=["sliding", "cumulative"])
    p.add_argument("--kind", default="linear_svc", choices=ALL_KINDS)
    p.add_argument("--max-delta", type=int, default=12)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_windows)

    p = sub.add_parser("explain", help="explain an assignment")
    p.add_argument("--model", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--top2", action="store_true")
    p.set_defaults(fn=cmd_explain)

    p = sub.add_parser("monitor", help="segment a daily-accuracy series and check for drift")
    p.add_argument("--accuracy-file", required=True, help="one accuracy value per line")
    p.add_argument("--penalty", type=float, default=driftmon.DEFAULT_PENALTY)
    p.add_argument("--min-segment", type=int, default=2)
    p.add_argument("--min-history", type=int, default=driftmon.DEFAULT_MIN_HISTORY)
    p.add_argument("--cost", default="l1", choices=["l1", "l2"])
    p.set_defaults(fn=cmd_monitor)

    p = sub.add_parser("simulate-drift", help="sudden/gradual deterioration study")
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--penalty", type=float, default=driftmon.DEFAULT_PENALTY)
    p.add_argument("--no-fast", action="store_true", help="disable the compiled kernel")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_simulate_drift)

    p = sub.add_parser("serve", help="run the HTTP assignment service")
    p.add_argument("--model", help="artifact to load at startup")
    p.add_argument("--corpus", help="corpus used by /admin/retrain")
    p.add_argument("--kind", default="linear_svc", choices=ALL_KINDS)
    p.add_argument("--log", help="append-only assignment event log (JSONL)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config) if args.config else {}
    return args.fn(args, cfg) or 0


if __name__ == "__main__":
    sys.exit(main())
