"""Poke at the reverse-mode engine that trains the model.

Every gradient in this package comes from a small tape built out of numpy
ops; nothing is imported for the calculus. This script builds expressions
by hand, runs backward(), and holds the results against central finite
differences, first where the answer is known in closed form, then on the
complete forecasting model.
"""

import numpy as np

from ensograph import ModelConfig, Tensor, backward, forward, grad_check, init_params
from ensograph import adiff

# --- a case with a closed-form answer: d/dx sum(tanh(x @ w)) ------------
rng = np.random.default_rng(1)
x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
w = Tensor(rng.standard_normal((4, 2)), requires_grad=True)

loss = adiff.reduce_sum(adiff.tanh(adiff.matmul(x, w)))
backward(loss)

y = np.tanh(x.data @ w.data)
by_hand = (1.0 - y ** 2) @ w.data.T  # chain rule, written out
print("closed form vs backward():",
      np.max(np.abs(x.grad - by_hand)), "max abs difference")

# --- the same comparison, but numerically, for both tensors ------------
x64 = Tensor(x.data.astype(np.float64), requires_grad=True)
w64 = Tensor(w.data.astype(np.float64), requires_grad=True)
for res in grad_check(lambda: adiff.reduce_sum(adiff.tanh(adiff.matmul(x64, w64))),
                      {"x": x64, "w": w64}):
    print(f"  {res.name}: max rel err {res.max_rel_err:.2e} "
          f"({'ok' if res.passed else 'FAIL'})")

# --- an unused parameter reads back an exact zero gradient -------------
spare = Tensor(rng.standard_normal(5), requires_grad=True)
spare.zero_grad()
backward(adiff.reduce_sum(adiff.mul(x, 2.0)))
print("unused parameter gradient is exactly zero:", not spare.grad.any())

# --- now the whole model, end to end ------------------------------------
config = ModelConfig(
    n_nodes=5,
    horizon=2,
    residual_channels=4,
    conv_channels=4,
    skip_channels=4,
    end_channels=8,
    graph={"embed_dim": 3, "topk": 3},
    seed=7,
)
params = init_params(config, dtype=np.float64)
inputs = rng.standard_normal((2, 1, 5, config.window))
probe = rng.standard_normal((2, config.horizon, 5))


def model_loss():
    out = forward(params, config, Tensor(inputs))
    return adiff.reduce_sum(adiff.mul(out, probe))


results = grad_check(model_loss, dict(params.items()))
worst = max(results, key=lambda r: r.max_rel_err)
print(f"\nfull model: {len(results)} parameter tensors "
      f"({sum(p.data.size for _, p in params.items())} values) checked")
print(f"worst tensor: {worst.name}, max rel err {worst.max_rel_err:.2e}")
print("all passed" if all(r.passed for r in results) else "SOME FAILED")
