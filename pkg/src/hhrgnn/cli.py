"""Command-line entry point: gen, train, eval, explain, gradcheck.

Exit status is 0 on success, 1 for invalid input (one-line message on
stderr) and 2 for unexpected internal failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import graphstore as gs
from .explain import export_relation_scores, parse_node_spec
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .sparsela import RelationSpec, compile_relations
from .trainer import OptimHyper, evaluate, grad_check_model, toy_graph, train

GRADCHECK_TOLERANCE = 1e-4


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    relations: list[dict]
    layer_dims: list[int] = field(default_factory=lambda: [32, 8])
    dropout: float = 0.6
    seeds: list[int] = field(default_factory=lambda: [0])
    lr: float = 0.008
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 5e-4
    max_epochs: int = 500
    patience: int = 20
    train_per_class: int = 20
    val_count: int = 500
    split_seed: int = 0
    num_classes: int | None = None
    data_dir: str | None = None
    out_dir: str | None = None

    @classmethod
    def from_json(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise UsageError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise UsageError(f"unknown config key: {unknown[0]}")
        if "relations" not in doc:
            raise UsageError("config needs a 'relations' list")
        cfg = cls(**doc)
        cfg.hyper()
        for r in cfg.relations:
            RelationSpec.from_json(r)
        if not cfg.seeds:
            raise UsageError("seeds must be a non-empty list")
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_json(doc)

    def hyper(self) -> OptimHyper:
        return OptimHyper(lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps,
                          weight_decay=self.weight_decay, max_epochs=self.max_epochs,
                          patience=self.patience)

    def model_config(self, num_classes: int, seed: int) -> ModelConfig:
        if self.num_classes is not None and self.num_classes != num_classes:
            raise UsageError(f"config says {self.num_classes} classes, data has {num_classes}")
        return ModelConfig(relations=[RelationSpec.from_json(r) for r in self.relations],
                           layer_dims=tuple(self.layer_dims), num_classes=num_classes,
                           dropout=self.dropout, seed=seed)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_json(path: Path, doc):
    gs._atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _history_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "val_accuracy", "val_macro_f1", "epoch_seconds"])
    for h in history:
        w.writerow([h.epoch, repr(h.train_loss), repr(h.val_accuracy),
                    repr(h.val_macro_f1), repr(h.epoch_seconds)])
    return buf.getvalue()


def _splits_for(graph, data_dir: Path, cfg: RunConfig) -> gs.SplitSet:
    path = data_dir / "splits.json"
    if path.is_file():
        return gs.load_splits(path, graph)
    return gs.make_splits(graph, cfg.train_per_class, cfg.val_count, cfg.split_seed)


def _train_one(graph, splits, cfg: RunConfig, seed: int, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    config = cfg.model_config(graph.num_classes, seed)
    params, history, relations = train(graph, splits, config, cfg.hyper())
    test = evaluate(params, graph, relations, splits.test)
    val = evaluate(params, graph, relations, splits.val)
    best_epoch = max(history, key=lambda h: (h.val_accuracy, -h.val_loss)).epoch
    metrics = {"seed": seed, "best_epoch": best_epoch,
               "test": test.to_json(), "val": val.to_json()}
    save_checkpoint(config, params, out / "checkpoint.json")
    gs.save_splits(splits, out / "splits.json")
    gs._atomic_write_text(out / "history.csv", _history_csv(history))
    export_relation_scores(params, graph, relations, None, out / "relation_scores.csv")
    _write_json(out / "metrics.json", metrics)
    return metrics


def cmd_gen(args):
    planted = {"nodes_per_class", "p_in", "p_out"}
    apc = {"authors_per_class", "papers", "conferences", "p_ap_in", "p_ap_out", "p_pc"}
    given = {k for k, v in vars(args).items() if v is not None}
    wrong = given & (apc if args.kind == "planted" else planted)
    if wrong:
        raise UsageError(f"--{sorted(wrong)[0].replace('_', '-')} does not apply to --kind {args.kind}")
    common = {"seed": args.seed}
    for key, attr in (("num_classes", "classes"), ("feature_dim", "feature_dim"),
                      ("signal", "signal")):
        if getattr(args, attr) is not None:
            common[key] = getattr(args, attr)
    if args.kind == "planted":
        extra = {k: getattr(args, k) for k in planted if getattr(args, k) is not None}
        graph = gs.generate_homogeneous(gs.GenParamsHomogeneous(**common, **extra))
    else:
        rename = {"papers": "num_papers", "conferences": "num_conferences"}
        extra = {rename.get(k, k): getattr(args, k) for k in apc if getattr(args, k) is not None}
        graph = gs.generate_heterogeneous(gs.GenParamsHeterogeneous(**common, **extra))
    gs.save_graph(graph, args.out)
    print(json.dumps({"num_nodes": graph.num_nodes, "num_edges": int(len(graph.edges)),
                      "num_labeled": len(graph.labels)}))
    return 0


def cmd_train(args):
    cfg = RunConfig.load(args.config)
    data = Path(args.data or cfg.data_dir or "")
    out = Path(args.out or cfg.out_dir or "")
    if not str(data) or not str(out):
        raise UsageError("--data and --out are required (or data_dir/out_dir in the config)")
    graph = gs.load_graph(data)
    splits = _splits_for(graph, data, cfg)
    if len(cfg.seeds) == 1:
        metrics = _train_one(graph, splits, cfg, cfg.seeds[0], out)
        print(json.dumps(metrics["test"], sort_keys=True))
        return 0
    runs = [_train_one(graph, splits, cfg, s, out / f"seed_{s}") for s in cfg.seeds]
    acc = [r["test"]["accuracy"] for r in runs]
    f1 = [r["test"]["macro_f1"] for r in runs]
    summary = {"seeds": list(cfg.seeds),
               "test_accuracy_mean": float(np.mean(acc)), "test_accuracy_std": float(np.std(acc)),
               "test_macro_f1_mean": float(np.mean(f1)), "test_macro_f1_std": float(np.std(f1))}
    _write_json(out / "metrics.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return 0


def _load_model(data, model_path):
    graph = gs.load_graph(data)
    config, params = load_checkpoint(model_path)
    if config.num_classes != graph.num_classes:
        raise UsageError("checkpoint and data disagree on the number of classes")
    relations = compile_relations(graph, config.relations)
    return graph, config, params, relations


def cmd_eval(args):
    data, model = Path(args.data), Path(args.model)
    graph, config, params, relations = _load_model(data, model)
    for candidate in (data / "splits.json", model.parent / "splits.json"):
        if candidate.is_file():
            splits = gs.load_splits(candidate, graph)
            break
    else:
        raise UsageError("no splits.json next to the data or the checkpoint")
    metrics = evaluate(params, graph, relations, getattr(splits, args.split))
    print(json.dumps(metrics.to_json(), sort_keys=True))
    return 0


def cmd_explain(args):
    graph, config, params, relations = _load_model(Path(args.data), Path(args.model))
    nodes = parse_node_spec(args.nodes, graph.num_nodes)
    export_relation_scores(params, graph, relations, nodes, args.out)
    return 0


def cmd_gradcheck(args):
    graph = toy_graph(num_nodes=args.nodes, seed=args.seed)
    err = grad_check_model(graph=graph, seed=args.seed)
    print(f"{err:.3e}")
    return 0 if err < GRADCHECK_TOLERANCE else 1


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hhrgnn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic graph directory")
    g.add_argument("--kind", choices=["planted", "apc"], required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--classes", type=int)
    g.add_argument("--feature-dim", type=int)
    g.add_argument("--signal", type=float)
    g.add_argument("--nodes-per-class", type=int)
    g.add_argument("--p-in", type=float)
    g.add_argument("--p-out", type=float)
    g.add_argument("--authors-per-class", type=int)
    g.add_argument("--papers", type=int)
    g.add_argument("--conferences", type=int)
    g.add_argument("--p-ap-in", type=float)
    g.add_argument("--p-ap-out", type=float)
    g.add_argument("--p-pc", type=float)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train and write checkpoint, history and metrics")
    t.add_argument("--data")
    t.add_argument("--config", required=True)
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="print metrics of a checkpoint as JSON")
    e.add_argument("--data", required=True)
    e.add_argument("--model", required=True)
    e.add_argument("--split", choices=["train", "val", "test"], default="test")
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("explain", help="export relation-scores as CSV")
    x.add_argument("--data", required=True)
    x.add_argument("--model", required=True)
    x.add_argument("--nodes", default="all")
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_explain)

    c = sub.add_parser("gradcheck", help="compare backward() with finite differences")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--nodes", type=int, default=30)
    c.set_defaults(func=cmd_gradcheck)
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError, TypeError) as exc:
        # TypeError covers RunConfig(**doc) with wrongly shaped values
        msg = str(exc).replace("\n", " ")
        print(f"hhrgnn: error: {msg}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"hhrgnn: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
