"""Checking the hand-written backward pass against finite differences."""

# %%
import numpy as np

from hhrgnn import diffcore as dc
from hhrgnn import grad_check_model

for seed in range(3):
    print(f"seed {seed}: max relative error {grad_check_model(seed=seed):.2e}")

# %%
# A single primitive, by hand: d/dS of sum(sigmoid(h0 S hr^T)) per row.
rng = np.random.default_rng(0)
h0, hr, S = rng.standard_normal((4, 3)), rng.standard_normal((4, 3)), rng.standard_normal((3, 3))


def loss(s):
    tape = dc.Tape()
    score = dc.batched_bilinear(tape.constant(h0), tape.constant(hr), tape.variable(s, "S"))
    out = dc.sigmoid(score)
    return out, tape


def total(s):
    return float(loss(s)[0].value.sum())


out, tape = loss(S)
grads = dc.backward(dc.matmul(tape.constant(np.ones((1, 4))), out))
numeric = dc.numerical_gradient(lambda p: total(p["S"]), {"S": S}, 1e-6)["S"]
print("bilinear slice error:", dc.relative_error(grads["S"], numeric))

# %%
# Break an adjoint on purpose and watch the check catch it.
good = dc.ADJOINTS["row_scale"]
dc.ADJOINTS["row_scale"] = lambda node, g: (g * node.inputs[1].value,
                                           np.zeros_like(node.inputs[1].value))
try:
    print(f"with a broken row_scale adjoint: {grad_check_model():.2e}")
finally:
    dc.ADJOINTS["row_scale"] = good
