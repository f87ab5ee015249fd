"""Ruin probability with Erlang-mixture claims, and its parameter gradient.

Claims are an equal mixture of Erlang(2, theta1) and Erlang(2, theta2).
Larger thetas mean smaller claims, so both partial derivatives of psi(x)
are negative.  A Monte-Carlo run checks three of the values.

    python demos/ruin.py
"""

import numpy as np

from sfmsens.ruin import erlang_mixture, ruin_probability
from sfmsens.simulate import ruin_frequency

spec = erlang_mixture(1.0, 2.0)
print(f"safety loading {spec.loading:.3f}")
res = ruin_probability(spec, np.arange(0.0, 10.5, 1.0))
print("\n   x     psi(x)     dpsi/dth1   dpsi/dth2")
for x, p, d in zip(res.x, res.psi, res.dpsi):
    print(f"{x:4.0f}  {p:.6f}  {d[0]:+.6f}  {d[1]:+.6f}")

print("\nsimulated (200000 paths)")
for x in (0.0, 1.0, 5.0):
    r = ruin_frequency(spec.lam, spec.premium, spec.alpha, spec.M, x, seed=3, paths=200_000)
    exact = ruin_probability(spec, [x], derivatives=False).psi[0]
    print(f"  x = {x:3.0f}  {float(r.estimate.value):.5f} +- {float(r.estimate.se):.5f}   exact {exact:.5f}")

# the parameters enter symmetrically
a = ruin_probability(erlang_mixture(1.5, 2.5), [2.0], derivatives=False).psi[0]
b = ruin_probability(erlang_mixture(2.5, 1.5), [2.0], derivatives=False).psi[0]
print(f"\npsi(2) at (1.5, 2.5) and (2.5, 1.5): {a:.12f} {b:.12f}")
