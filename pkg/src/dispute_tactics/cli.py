"""The ``dispute`` command.

Exit codes: 0 on success, 1 on data or validation failure, 2 on usage
errors. Every JSON output embeds a run manifest without wall-clock fields,
so repeated runs with the same inputs produce byte-identical files; the
timestamps live in a ``<out>.manifest.json`` sidecar.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

from threadpoolctl import threadpool_limits

from . import __version__, analysis, stats
from .checkpoint import CheckpointError, load_model, save_model
from .corpus import (Corpus, CorpusError, CorpusValidationError, corpus_checksum, corpus_stats,
                     load_schema, parse_corpus, split_corpus, validate_corpus, write_corpus)
from .neural import TrainConfig, TrainingDiverged
from .report import ReportError, render_report, write_csv, write_report
from .taxonomy import from_vector, sort_labels

SEED_ENV = "DISPUTE_SEED"


class UsageError(Exception):
    """Bad flag combination detected after argparse succeeded."""


# -- manifest and output helpers --------------------------------------------

def _manifest(args, config: dict, checksums: dict) -> dict:
    return {
        "command": args.command,
        "argv": list(args.argv),
        "config": config,
        "seed": args.seed,
        "corpus_checksum": checksums,
        "version": __version__,
    }


def _now() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _write_sidecar(out: Path, manifest: dict, started: str) -> None:
    side = dict(manifest, started=started, finished=_now())
    Path(str(out) + ".manifest.json").write_text(_dump(side), encoding="utf-8")


def _emit(doc: dict, out: Optional[str], manifest: dict, started: str) -> None:
    doc = dict(doc, manifest=manifest)
    if out is None:
        sys.stdout.write(_dump(doc))
        return
    path = Path(out)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dump(doc), encoding="utf-8")
    _write_sidecar(path, manifest, started)


def _load(path: str, schema: Optional[str] = None, unknown: str = "reject") -> Corpus:
    return parse_corpus(path, load_schema(schema) if schema else None, unknown=unknown)


def _on_off(value: str) -> bool:
    return value == "on"


def _ratios(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# -- subcommands ------------------------------------------------------------

def cmd_validate(args) -> int:
    corpus = parse_corpus(args.file, load_schema(args.schema) if args.schema else None,
                          unknown=args.unknown, strict=False)
    violations = validate_corpus(corpus, require_outcome=args.require_outcome)
    doc = {"n_conversations": len(corpus), "valid": not violations,
           "violations": [asdict(v) for v in violations]}
    sys.stdout.write(_dump(doc))
    if violations:
        print(f"{args.file}: {len(violations)} violation(s)", file=sys.stderr)
        return 1
    return 0


def cmd_stats(args) -> int:
    started = _now()
    corpus = _load(args.file, args.schema, args.unknown)
    manifest = _manifest(args, {"schema": args.schema, "unknown": args.unknown},
                         {args.file: corpus_checksum(args.file)})
    _emit(corpus_stats(corpus).to_dict(), args.out, manifest, started)
    return 0


def cmd_split(args) -> int:
    started = _now()
    corpus = _load(args.file, args.schema, args.unknown)
    parts = split_corpus(corpus, args.ratios, args.seed)
    names = ("train", "dev", "test") if len(parts) == 3 else tuple(f"part{i}" for i in range(len(parts)))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, part in zip(names, parts):
        write_corpus(part, out_dir / f"{name}.jsonl")
    manifest = _manifest(args, {"ratios": list(args.ratios)}, {args.file: corpus_checksum(args.file)})
    doc = {"splits": {n: [c.conv_id for c in p] for n, p in zip(names, parts)}}
    _emit(doc, str(out_dir / "split.json"), manifest, started)
    return 0


ANALYSES = ("rebuttal-mean", "pmi", "attacks", "users", "mirroring")


def run_analyses(corpus: Corpus, which: str, n_resamples: int, seed: int,
                 anchor: str = "last", mirror_mean: str = "micro") -> dict:
    chosen = ANALYSES if which == "all" else (which,)
    out: dict = {}
    if "rebuttal-mean" in chosen:
        scores = analysis.conversation_scores(corpus)
        out["rebuttal_mean"] = {
            mode: analysis.escalation_correlation(corpus, mode, n_resamples, seed).to_dict()
            for mode in ("micro", "macro")
        }
        out["rebuttal_mean"]["per_conversation"] = [asdict(s) for s in scores]
    if "pmi" in chosen:
        try:
            out["pmi"] = analysis.attack_pmi_table(corpus)
        except ValueError:
            if which != "all":
                raise
            out["pmi"] = {}
    if "attacks" in chosen:
        out["attacks"] = analysis.attack_report(corpus, anchor).to_dict()
    if "users" in chosen:
        profiles = analysis.user_profiles(corpus)
        out["users"] = dict(analysis.profile_summary(profiles), profiles=profiles)
    if "mirroring" in chosen:
        res = analysis.mirroring(corpus, mirror_mean)
        out["mirroring"] = {
            "positive_fraction": res.positive_fraction,
            "n_users": res.n_users,
            "n_defined": res.n_defined,
            "scores": [{"user_id": s.user_id, "conv_id": s.conv_id,
                        "m": s.m if s.defined else None} for s in res.scores],
        }
    return out


def cmd_analyze(args) -> int:
    started = _now()
    corpus = _load(args.file, args.schema, args.unknown)
    report = run_analyses(corpus, args.which, args.resamples, args.seed, args.anchor, args.mirror_mean)
    config = {"which": args.which, "resamples": args.resamples, "anchor": args.anchor,
              "mirror_mean": args.mirror_mean, "schema": args.schema}
    manifest = _manifest(args, config, {args.file: corpus_checksum(args.file)})
    _emit(report, args.out, manifest, started)
    if args.markdown:
        md = render_report(report)
        if args.out:
            Path(args.out).with_suffix(".md").write_text(md, encoding="utf-8")
        else:
            sys.stderr.write(md)
    return 0


def _train_config(args) -> dict:
    """File config merged under explicit flags."""
    cfg: dict = {}
    if args.config:
        cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(cfg, dict):
            raise ValueError(f"{args.config}: config must be a JSON object")
    flags = {"task": args.task, "mode": args.mode, "context": args.context, "multitask": args.multitask,
             "k": args.k, "aux_weight": args.aux_weight, "reference": args.reference,
             "max_epochs": args.epochs, "patience": args.patience, "learning_rate": args.lr,
             "batch_size": args.batch_size, "min_freq": args.min_freq}
    cfg.update({k: v for k, v in flags.items() if v is not None})
    defaults = {"task": "tactics", "mode": "lp", "context": "off", "multitask": "off", "k": 20,
                "aux_weight": 1.0, "reference": "max", "min_freq": 2, "max_size": 10_000}
    for k, v in defaults.items():
        cfg.setdefault(k, v)
    for key in ("context", "multitask"):
        if isinstance(cfg[key], str):
            cfg[key] = _on_off(cfg[key])
    cfg["seed"] = args.seed
    return cfg


def cmd_train(args) -> int:
    from .tasks.escalation import train_escalation
    from .tasks.tactics import train_tactic_model

    started = _now()
    cfg = _train_config(args)
    checksums: dict = {}
    if args.data:
        if args.train or args.dev:
            raise UsageError("use either --data or --train/--dev, not both")
        corpus = _load(args.data, args.schema, args.unknown)
        checksums[args.data] = corpus_checksum(args.data)
        train, dev, test = split_corpus(corpus, tuple(cfg.get("ratios", (0.7, 0.2, 0.1))), args.seed)
        cfg["split"] = {"train": [c.conv_id for c in train], "dev": [c.conv_id for c in dev],
                        "test": [c.conv_id for c in test]}
    elif args.train and args.dev:
        train = _load(args.train, args.schema, args.unknown)
        dev = _load(args.dev, args.schema, args.unknown)
        checksums = {args.train: corpus_checksum(args.train), args.dev: corpus_checksum(args.dev)}
    else:
        raise UsageError("train needs --data FILE or both --train and --dev")
    tc = TrainConfig.from_dict(cfg)
    cfg["train_config"] = tc.to_dict()
    if cfg["task"] == "tactics":
        model = train_tactic_model(train, dev, cfg["mode"], cfg["context"], cfg["multitask"], tc, cfg["k"],
                                   cfg["aux_weight"], cfg["min_freq"], cfg["max_size"],
                                   reference=cfg["reference"])
    elif cfg["task"] == "escalation":
        model = train_escalation(train, dev, tc, cfg["aux_weight"], cfg["min_freq"], cfg["max_size"])
    else:
        raise ValueError(f"unknown task {cfg['task']!r}")
    manifest = _manifest(args, cfg, checksums)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out, manifest)
    _write_sidecar(out, manifest, started)
    return 0


def _eval_corpus(args, model_manifest: Optional[dict]) -> Corpus:
    corpus = _load(args.data, args.schema, args.unknown)
    if args.split == "all":
        return corpus
    split = (model_manifest or {}).get("config", {}).get("split")
    if split is None:
        return corpus
    wanted = set(split[args.split])
    return Corpus(tuple(c for c in corpus if c.conv_id in wanted), corpus.label_schema_version)


def cmd_evaluate(args) -> int:
    from .checkpoint import load_manifest
    from .tasks.escalation import EscalationModel, evaluate_escalation
    from .tasks.tactics import evaluate_tactics

    started = _now()
    model = load_model(args.model)
    corpus = _eval_corpus(args, load_manifest(args.model))
    if len(corpus) == 0:
        raise ValueError("no conversations to evaluate")
    if isinstance(model, EscalationModel):
        metrics = evaluate_escalation(model, corpus)
    else:
        metrics = evaluate_tactics(model, corpus)
    if not args.per_sample:
        metrics.pop("per_sample")
    manifest = _manifest(args, {"model": args.model, "split": args.split},
                         {args.data: corpus_checksum(args.data), args.model: corpus_checksum(args.model)})
    _emit(metrics, args.out, manifest, started)
    return 0


def cmd_predict(args) -> int:
    from .tasks.escalation import EscalationModel, predict_escalation
    from .tasks.tactics import predict_tactics

    started = _now()
    model = load_model(args.model)
    corpus = _load(args.data, args.schema, args.unknown)
    lines = []
    for conv in corpus:
        if isinstance(model, EscalationModel):
            rec = {"conv_id": conv.conv_id, "escalation_score": predict_escalation(model, conv)}
        else:
            vecs = predict_tactics(model, conv)
            rec = {"conv_id": conv.conv_id,
                   "predictions": [[lab.name for lab in sort_labels(from_vector(v))] for v in vecs]}
        lines.append(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("".join(lines), encoding="utf-8")
    manifest = _manifest(args, {"model": args.model},
                         {args.data: corpus_checksum(args.data), args.model: corpus_checksum(args.model)})
    _write_sidecar(out, manifest, started)
    return 0


def _per_sample(path: str) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    rows = doc.get("per_sample") if isinstance(doc, dict) else None
    if not rows:
        raise ValueError(f"{path}: no per-sample scores (run evaluate with --per-sample)")
    if "jaccard" in rows[0]:
        return {(r["conv_id"], r["index"]): r["jaccard"] for r in rows}
    raise ValueError(f"{path}: per-sample entries carry no Jaccard scores")


def cmd_compare(args) -> int:
    started = _now()
    a, b = (_per_sample(p) for p in args.metrics)
    if set(a) != set(b):
        raise ValueError("metrics files cover different utterances; evaluate both on the same data")
    keys = sorted(a)
    res = stats.paired_permutation_test([a[k] for k in keys], [b[k] for k in keys],
                                        args.resamples, args.seed)
    doc = {"a": args.metrics[0], "b": args.metrics[1], "mean_a": sum(a.values()) / len(a),
           "mean_b": sum(b.values()) / len(b), "test": res.to_dict()}
    manifest = _manifest(args, {"resamples": args.resamples}, {p: corpus_checksum(p) for p in args.metrics})
    _emit(doc, args.out, manifest, started)
    return 0


def cmd_report(args) -> int:
    try:
        report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ReportError(f"{args.report}: not valid JSON ({exc.msg})") from None
    if args.out_dir is None:
        if args.format == "csv":
            raise UsageError("--format csv needs --out-dir")
        sys.stdout.write(render_report(report))
        return 0
    if args.format == "csv":
        write_csv(report, Path(args.out_dir))
        if not args.no_figures:
            from .report import write_figures
            write_figures(report, Path(args.out_dir))
    else:
        write_report(report, args.out_dir, figures=not args.no_figures)
    return 0


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS keeps a subcommand's unset flag from clobbering a global one.
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help=f"random seed (default: ${SEED_ENV} or 0)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="BLAS threads (default 1)")

    corpus_opts = argparse.ArgumentParser(add_help=False)
    corpus_opts.add_argument("--schema", help="label schema JSON (raw label -> canonical name)")
    corpus_opts.add_argument("--unknown", choices=("reject", "other"), default="reject",
                             help="policy for labels missing from the schema")

    p = argparse.ArgumentParser(prog="dispute", parents=[common],
                                description="Dispute-tactic corpus tools, analyses and classifiers.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)
    parents = [common, corpus_opts]

    s = sub.add_parser("validate", parents=parents, help="check a corpus against the taxonomy")
    s.add_argument("file")
    s.add_argument("--require-outcome", action="store_true", help="flag conversations without an outcome")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("stats", parents=parents, help="corpus statistics as JSON")
    s.add_argument("file")
    s.add_argument("--out")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("split", parents=parents, help="seeded train/dev/test split by conversation")
    s.add_argument("file")
    s.add_argument("--ratios", type=_ratios, default=(0.7, 0.2, 0.1))
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("analyze", parents=parents, help="disagreement analyses")
    s.add_argument("file")
    s.add_argument("--which", choices=ANALYSES + ("all",), default="all")
    s.add_argument("--out")
    s.add_argument("--resamples", type=int, default=stats.DEFAULT_RESAMPLES)
    s.add_argument("--anchor", choices=("last", "first"), default="last")
    s.add_argument("--mirror-mean", choices=("micro", "macro"), default="micro")
    s.add_argument("--markdown", action="store_true", help="also write a markdown rendering")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("train", parents=parents, help="train a tactic or escalation model")
    s.add_argument("--task", choices=("tactics", "escalation"))
    s.add_argument("--mode", choices=("br", "lp"))
    s.add_argument("--context", choices=("on", "off"))
    s.add_argument("--multitask", choices=("on", "off"))
    s.add_argument("--config", help="JSON config; command-line flags take precedence")
    s.add_argument("--data", help="single corpus, split internally with --seed")
    s.add_argument("--train")
    s.add_argument("--dev")
    s.add_argument("--out", required=True)
    s.add_argument("--k", type=int)
    s.add_argument("--aux-weight", type=float)
    s.add_argument("--reference", choices=("max", "median", "min"))
    s.add_argument("--epochs", type=int)
    s.add_argument("--patience", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--min-freq", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=parents, help="score a model on a corpus")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split", choices=("test", "dev", "train", "all"), default="test",
                   help="with a model trained via --data, restrict to that split (default test)")
    s.add_argument("--out")
    s.add_argument("--no-per-sample", dest="per_sample", action="store_false")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("predict", parents=parents, help="write predictions as JSONL")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("compare", parents=[common], help="paired permutation test between two runs")
    s.add_argument("--metrics", nargs=2, required=True, metavar=("A", "B"))
    s.add_argument("--per-sample", action="store_true", help="compare per-sample Jaccard (the only mode)")
    s.add_argument("--resamples", type=int, default=stats.DEFAULT_RESAMPLES)
    s.add_argument("--out")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("report", parents=[common], help="render a report as markdown, CSV and figures")
    s.add_argument("report")
    s.add_argument("--out-dir")
    s.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_report)
    return p


def _resolve_seed(seed: Optional[int]) -> int:
    if seed is not None:
        return seed
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def run(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    args.threads = getattr(args, "threads", 1)
    try:
        args.seed = _resolve_seed(getattr(args, "seed", None))
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dispute: error: {exc}", file=sys.stderr)
        return 2
    except CorpusValidationError as exc:
        print(f"dispute: invalid corpus: {exc}", file=sys.stderr)
        print("run 'dispute validate' for the full violation list", file=sys.stderr)
        return 1
    except CorpusError as exc:
        print(f"dispute: corpus error: {exc}", file=sys.stderr)
        return 1
    except (CheckpointError, ReportError) as exc:
        print(f"dispute: {exc}", file=sys.stderr)
        return 1
    except TrainingDiverged as exc:
        print(f"dispute: training diverged: {exc}; try a lower --lr", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"dispute: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
