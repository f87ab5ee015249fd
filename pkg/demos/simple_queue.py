"""Two-phase fluid queue: how the stationary and transient content respond to a and b.

The queue fills at rate 1 in phase 1 and drains at rate 1 in phase 2; a is
the rate of leaving phase 1 and b the rate of leaving phase 2.  Everything
printed here is computed by the general machinery and compared with the
closed forms that exist for this small model.

    python demos/simple_queue.py
"""

import numpy as np
from scipy.optimize import brentq

from sfmsens.simple import SimpleClosedForm, param_model
from sfmsens.stationary import stationary
from sfmsens.transient import Transient

a, b = 1.0, 0.5
pm = param_model(a, b)
cf = SimpleClosedForm(a, b)
st = stationary(pm)

print("stationary empty-buffer probability")
print(f"  p-          = {st.p_minus[0]:.10f}   closed form {cf.p_minus:.10f}")
print(f"  dp-/da, /db = {st.dp.slabs[:, 0, 0]}   closed form {cf.dp_minus}")

# raising a makes phase 1 shorter, so less fluid builds up near the origin
# but the tail gets thinner: the density derivative changes sign once
root = brentq(lambda x: st.ddensity_row(x)[0, 0], 0.1, 5.0)
print(f"\ndpi+/da changes sign at x = {root:.6f} (closed form {cf.dpi_da_root:.6f})")
for x in (0.5, 1.0, root, 2.0, 4.0):
    print(f"  x = {x:5.3f}  pi+ = {st.density_row(x)[0]:.6f}  dpi+/da = {st.ddensity_row(x)[0, 0]:+.6f}")

# start with level 1 in the draining phase: the buffer cannot empty before t = 1
tr = Transient(pm, 1.0, [1.0])
print("\ntransient P(empty at t) and its gradient (Euler inversion)")
for t in (1.5, 2.0, 5.0, 10.0, 50.0):
    res = tr.p_dp_time(t).value[:, 0]
    print(f"  t = {t:5.1f}  p- = {res[0]:.8f}  d/da = {res[1]:+.6f}  d/db = {res[2]:+.6f}")
print(f"  limit      p- = {cf.p_minus:.8f}")

busy = -(tr.bundle(1e-20j).Psi[0, 0].imag / 1e-20)
print(f"\nmean busy period by complex step: {busy:.12f} (2/(a-b) = {2 / (a - b):.12f})")
