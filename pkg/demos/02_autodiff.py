#!/usr/bin/env python3
"""Tour of the reverse-mode tape: scalar ops, matrix ops, the SPD solve,
and the finite-difference gradient checker."""

import numpy as np

from lstmkf import Tape, Tensor, gradient_check
from lstmkf.rng import philox

# A tape records every operation; backward() walks it in reverse and
# accumulates vector-Jacobian products into a per-tensor gradient map.
tape = Tape()
x = Tensor(np.array([[1.0], [2.0]]))
w = Tensor(np.array([[0.5, -0.3], [0.1, 0.9]]))
y = tape.matmul(w, x)
loss = tape.sum(tape.hadamard(y, y))
grads = tape.backward(loss)
print("loss:", float(loss.value[0, 0]))
print("d loss / d w:\n", grads[w])
print("d loss / d x:\n", grads[x])

# Gradients flow through the SPD solve used by the filter update. The
# backward pass reuses the forward Cholesky factor rather than refactoring.
tape = Tape()
rng = philox(3, 0)
base = Tensor(rng.standard_normal((3, 3)))
rhs = Tensor(rng.standard_normal((3, 1)))
gram = tape.add(tape.matmul(base, tape.transpose(base)), Tensor(3.0 * np.eye(3)))
solution = tape.solve_spd(gram, rhs)
grads = tape.backward(tape.sum(solution))
print("\nSPD solve: |d sum(x) / d rhs| =", np.abs(grads[rhs]).sum().round(6))

# detach() cuts the graph: the optimizer uses it to truncate BPTT.
tape = Tape()
a = Tensor(np.array([[2.0]]))
b = tape.scale(a, 3.0)
c = tape.scale(b.detach(), 5.0)
grads = tape.backward(c)
print("gradient reaches a through detach():", grads.get(a))


# The checker re-runs the whole forward pass twice per parameter entry
# (central differences) and compares against one reverse sweep.
def build():
    t = Tape()
    z = t.matmul(m, v)
    return t, t.sum(t.hadamard(z, z))


m = Tensor(philox(4, 0).standard_normal((4, 4)))
v = Tensor(philox(4, 1).standard_normal((4, 1)))
report = gradient_check(build, [m, v], step=1e-5, tolerance=1e-6)
print(f"\ngradient check: passed={report.passed}, "
      f"max relative error {report.max_relative_error:.2e}")
