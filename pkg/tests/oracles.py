"""Independent reference computations used by the tests.

Nothing here imports the code under test except plain data containers.
"""

import itertools

import numpy as np


def walk_counts(n, undirected_edges, r):
    """Number of length-r walks between every node pair, by enumeration."""
    nbrs = {i: set() for i in range(n)}
    for a, b in undirected_edges:
        if a != b:
            nbrs[a].add(b)
            nbrs[b].add(a)
    counts = np.zeros((n, n))
    for start in range(n):
        frontier = {start: 1}
        for _ in range(r):
            nxt = {}
            for node, c in frontier.items():
                for m in nbrs[node]:
                    nxt[m] = nxt.get(m, 0) + c
            frontier = nxt
        for end, c in frontier.items():
            counts[start, end] = c
    return counts


def typed_path_counts(n, edges, path):
    """Count sequences i=v0, v1, ..., vk where each step v_{s+1} -> v_s is an
    edge of type path[s] (messages flow into the row node)."""
    into = {}
    for s, d, t in edges:
        if s != d:
            into.setdefault((d, t), set()).add(s)
    counts = np.zeros((n, n))
    for i in range(n):
        def walk(node, step):
            if step == len(path):
                counts[i, node] += 1
                return
            for nxt in into.get((node, path[step]), ()):
                walk(nxt, step + 1)
        walk(i, 0)
    return counts


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def hhr_forward_dense(X, mats, layers, classifier):
    """Straight-line HHR-GNN forward with dense relation matrices.

    ``mats[r]`` is the dense relation matrix (mats[0] = identity),
    ``layers`` a list of (W list, ntn list) pairs. Loops over nodes
    explicitly for the bilinear scores.
    """
    H = X
    alphas = []
    for W, ntn in layers:
        hops = [relu(M @ H @ w) for M, w in zip(mats, W)]
        n = H.shape[0]
        alpha = np.zeros((n, len(ntn)))
        for i in range(n):
            for r, S in enumerate(ntn):
                alpha[i, r] = sigmoid(hops[0][i] @ S @ hops[r + 1][i])
        blocks = [hops[0]] + [hops[r + 1] * alpha[:, [r]] for r in range(len(ntn))]
        H = np.concatenate(blocks, axis=1)
        alphas.append(alpha)
    return H @ classifier, alphas


def xent_sum(logits, labels, mask):
    total = 0.0
    for i in mask:
        z = logits[i]
        total -= z[labels[i]] - np.log(np.sum(np.exp(z)))
    return total


def central_diff(f, x, h=1e-5):
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for idx in itertools.product(*map(range, x.shape)):
        old = x[idx]
        x[idx] = old + h
        up = f(x)
        x[idx] = old - h
        down = f(x)
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g
