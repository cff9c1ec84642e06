"""A look inside one ensemble member: shapes, gates, gradients and initializers.

Run with ``python demos/network_internals.py``; finishes in about a second.
"""
import numpy as np

from lstm_ensemble.nn import (CellState, InitializerScheme, LstmParameters, backward, cell_step,
                              forward, gradient_check, init_parameters, param_count)

m, n = 3, 1
print(f"LSTM blocks for m={m}, n={n}: {param_count(m, n)} weights and biases")
for name, block in LstmParameters.zeros(m, n).blocks().items():
    print(f"  {name:<12} {np.shape(block)}")

# One step by hand. With all-zero weights every sigmoid gate sits at 0.5
# and the candidate at 0, so the state stays at zero.
zero = LstmParameters.zeros(m, n)
state, gates = cell_step(zero, np.array([1.0]), CellState.zeros(m), return_gates=True)
print("\nzero weights, x = 1:")
print("  forget", gates.forget, " candidate", gates.candidate, " s", state.s)

# Random weights: follow the hidden state along a short noisy sequence.
rng = np.random.default_rng(0)
params = init_parameters(InitializerScheme.GLOROT_UNIFORM, m, n, seed=0)
seq = rng.normal(0, 1, 12)
state = CellState.zeros(m)
for t, x in enumerate(seq):
    state = cell_step(params, np.array([x]), state)
    if t % 4 == 3:
        print(f"  t={t:2d}  x={x:+.3f}  h={np.round(state.h, 3)}")
p, cache = forward(params, seq)
print(f"prediction after 12 steps: {p:.4f}")

# Backprop through time against central differences.
report = gradient_check(params, seq, 1.0)
print("\ngradient check (step 1e-5):", "passed" if report.passed else f"flagged {report.flagged}")
for name in ("w_forget", "u_candidate", "b_output", "w_out"):
    print(f"  {name:<12} max relative error {report.max_rel_error[name]:.2e}")
grads = backward(params, seq, 1.0, None, cache)
print(f"d loss / d b_out = {float(grads.b_out):+.4f} (prediction minus label: {p - 1.0:+.4f})")

# The eleven starting points of the ensemble. Square recurrent blocks have
# fan_in == fan_out, so GlorotNormal and VarianceScaling coincide here, and
# no draw this small reaches the truncation bound of TruncatedNormal.
print("\ninitial recurrent weights per scheme (spread of u_forget):")
for scheme in InitializerScheme:
    u = init_parameters(scheme, m, n, seed=7).u_forget
    print(f"  {scheme.value:<16} min {u.min():+.3f}  max {u.max():+.3f}")
