"""Reading the learned relation scores.

Every node gets one score per relation and layer. Normalising the scores
together with the fixed self score of 1 gives the share of each hop in the
node's representation.
"""

# %%
import tempfile
from pathlib import Path

import numpy as np

from hhrgnn import (GenParamsHomogeneous, ModelConfig, RelationSpec, generate_homogeneous,
                    make_splits, predict, train)
from hhrgnn.explain import export_relation_scores

graph = generate_homogeneous(GenParamsHomogeneous(nodes_per_class=60, seed=3))
splits = make_splits(graph, 20, 30, seed=3)
relations = [RelationSpec.power(r) for r in range(4)]
config = ModelConfig(relations=relations, layer_dims=(16, 8), num_classes=3, dropout=0.5)
params, _, compiled = train(graph, splits, config)

# %%
_, report = predict(params, compiled, graph.features)
for k, alpha in enumerate(report.alphas, start=1):
    shares = np.hstack([np.ones((len(alpha), 1)), alpha])
    shares /= shares.sum(1, keepdims=True)
    mean = ", ".join(f"{n}={s:.2f}" for n, s in zip(report.relation_names, shares.mean(0)))
    print(f"layer {k}: {mean}")

# %%
# Low-degree nodes have little to gain from their neighbourhood; compare
# their 1-hop score with that of well-connected nodes.
deg = np.bincount(graph.edges[:, 1], minlength=graph.num_nodes)
a1 = report.alphas[0][:, 0]
lo, hi = deg <= np.percentile(deg, 25), deg >= np.percentile(deg, 75)
print(f"layer-1 hop1 score: low degree {a1[lo].mean():.3f}, high degree {a1[hi].mean():.3f}")

# %%
out = Path(tempfile.mkdtemp()) / "relation_scores.csv"
export_relation_scores(params, graph, compiled, range(5), out)
print(out.read_text())
