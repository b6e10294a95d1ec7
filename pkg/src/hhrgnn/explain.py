"""Relation-score export for interpretability plots."""

from __future__ import annotations

import io
from pathlib import Path
from typing import Sequence

import numpy as np

from .graphstore import _atomic_write_text
from .model import ModelParams, RelationScoreReport, predict

HEADER = "node_id,layer,relation_name,alpha_raw,alpha_normalized\n"


def score_table(report: RelationScoreReport, nodes: Sequence[int]):
    """Yield (node, layer, relation, raw, normalised) rows.

    Layers count from 1. The self relation has raw score 1; normalised
    scores divide by the per-(node, layer) total including that 1.
    """
    names = report.relation_names
    for i in nodes:
        for k, alpha in enumerate(report.alphas, start=1):
            raw = np.concatenate([[1.0], alpha[i]])
            norm = raw / raw.sum()
            for name, a, b in zip(names, raw, norm):
                yield int(i), k, name, float(a), float(b)


def export_relation_scores(params: ModelParams, graph, relations, nodes, path,
                           relation_names: Sequence[str] | None = None) -> Path:
    """Eval-mode forward, then write one CSV row per (node, layer, relation)."""
    _, report = predict(params, relations, graph.features)
    if relation_names is not None:
        report.relation_names = list(relation_names)
    nodes = list(range(graph.num_nodes)) if nodes is None else [int(i) for i in nodes]
    bad = [i for i in nodes if not 0 <= i < graph.num_nodes]
    if bad:
        raise ValueError(f"node id {bad[0]} out of range")
    buf = io.StringIO()
    buf.write(HEADER)
    for i, k, name, raw, norm in score_table(report, nodes):
        buf.write(f"{i},{k},{name},{raw!r},{norm!r}\n")
    _atomic_write_text(Path(path), buf.getvalue())
    return Path(path)


def parse_node_spec(spec: str, num_nodes: int) -> list[int]:
    """``all``, ``first:20``, ``0-19`` or ``3,5,8-10``."""
    spec = spec.strip()
    if spec == "all":
        return list(range(num_nodes))
    if spec.startswith("first:"):
        return list(range(min(int(spec[6:]), num_nodes)))
    out = []
    for part in spec.split(","):
        if "-" in part:
            lo, hi = (int(x) for x in part.split("-", 1))
            if hi < lo:
                raise ValueError(f"bad node range {part!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    for i in out:
        if not 0 <= i < num_nodes:
            raise ValueError(f"node id {i} out of range")
    return out
