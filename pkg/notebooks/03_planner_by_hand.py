"""
What the planner sees
=====================

The archive header carries, for every level, the bytes each bitplane costs
and the worst-case error of dropping the lowest ``d`` planes.  Planning runs
on those tables alone, without touching the payload.
"""

import io

import numpy as np

import ipcomp

x = np.linspace(0, 4 * np.pi, 33 * 33).reshape(33, 33)
field = np.sin(x) * np.cos(x.T)
eb = 1e-4
data = ipcomp.compress(ipcomp.FieldGrid.from_array(field), eb, "linear")

index = ipcomp.read_header(io.BytesIO(data))
print(f"{index.header.levels} levels, header + index = {index.data_offset} bytes")
for level in range(index.header.levels, 0, -1):
    rec = index.records[level]
    used = [d for d in range(33) if rec.delta[d] > 0]
    first = used[0] if used else 33
    print(f"level {level}: {rec.count:4d} points, {rec.loaded_size(32):5d} bytes, "
          f"first lossy drop at d={first}, dropping all costs {rec.delta[32]:.3g}")

###############################################################################
# Build the model directly and compare the two planning modes.

model = ipcomp.ErrorModel.from_index(index)
for E in (2 * eb, 100 * eb, 1.0):
    plan = ipcomp.plan_for_error(model, E)
    print(f"E={E:<8g} -> {plan.nbytes:5d} bytes, bound {plan.bound:.3g}, planes {plan.loaded}")

budget = model.mandatory_size() + 500
plan = ipcomp.plan_for_size(model, budget)
print(f"S={budget} -> {plan.nbytes} bytes, bound {plan.bound:.3g}, planes {plan.loaded}")
