"""Analyse a model written as JSON: stationary law, gradients and a simulation check.

    python demos/model_file.py [demos/models/three_phase.json]
"""

import sys
from pathlib import Path

import numpy as np

from sfmsens.model import drift, load_model
from sfmsens.simulate import SimConfig, simulate_paths
from sfmsens.stationary import stationary
from sfmsens.transient import Transient

path = sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent / "models" / "three_phase.json"
pm = load_model(path)
model = pm.model
print(f"phases {model.names}, rates c = {model.c}, mean drift {drift(model):+.4f}")

st = stationary(pm)
print("\nmass at level 0:", np.round(st.boundary_row(), 6))
print("gradient of that mass (rows = parameters):")
print(np.round(st.dp.slabs[:, 0, :], 6))
for x in (0.5, 1.0, 2.0):
    print(f"pi({x}) = {np.round(st.density_row(x), 6)}")

n_m = model.sizes[1]
tr = Transient(pm, 1.0, np.full(n_m, 1.0 / n_m))
g = np.zeros(model.m)
g[model.index("-")] = 1.0 / n_m
ens = simulate_paths(model, SimConfig(seed=1, paths=100_000, horizon=5.0, level=1.0, g=g), [2.0, 5.0])
print("\nP(empty at t) per minus/zero phase: inversion vs 100000 simulated paths")
for t in (2.0, 5.0):
    exact = tr.p_time(t).value
    est = ens.boundary_mass(t)
    sim = est.value[model.index("-0")]
    print(f"  t = {t}: {np.round(exact, 5)}  vs  {np.round(sim, 5)}")
