"""
Progressive retrieval of a smooth field
=======================================

Compress once, then pull the field back at three fidelities, each time
loading only the bitplanes the new request still needs.
"""

import numpy as np

import ipcomp

# a smooth 3-D field: a few sinusoids on a 64^3 grid
n = 64
i, j, k = np.meshgrid(*[np.linspace(0, 1, n)] * 3, indexing="ij")
field = np.sin(2 * np.pi * (1.5 * i + 0.5 * j)) + 0.4 * np.cos(2 * np.pi * (3 * k - j))

value_range = np.ptp(field)
eb = 1e-5 * value_range
data = ipcomp.compress(ipcomp.FieldGrid.from_array(field), eb)
print(f"archive: {len(data)} bytes, compression ratio {field.nbytes / len(data):.1f}")

archive = ipcomp.Archive(data)
model = archive.error_model()

###############################################################################
# A first coarse look.  The planner picks, per level, how many bitplanes to
# load so that the guaranteed error stays under the request.

plan = ipcomp.plan_for_error(model, 1e-2 * value_range)
coarse, session = ipcomp.reconstruct(archive, plan)
err = np.abs(coarse.as_array() - field).max()
print(f"1e-2 request: loaded {session.bytes_loaded} bytes, bound {plan.bound:.3g}, actual {err:.3g}")
print("  planes per level (finest first):", plan.loaded)

###############################################################################
# Tighten the request.  ``refine`` reads only the planes that are new, and
# the result is bit-for-bit what a fresh retrieval would give.

for rel in (1e-3, 1e-5):
    plan = ipcomp.plan_for_error(model, rel * value_range)
    before = session.bytes_loaded
    finer, session = ipcomp.refine(archive, session, coarse, plan)
    err = np.abs(finer.as_array() - field).max()
    print(f"{rel:g} request: +{session.bytes_loaded - before} bytes, "
          f"bound {plan.bound:.3g}, actual {err:.3g}")
    assert finer.tobytes() == ipcomp.reconstruct(archive, plan)[0].tobytes()
    coarse = finer

###############################################################################
# Sessions survive a round trip through bytes, which is how the command line
# hands them from one invocation to the next.

restored = ipcomp.RetrievalSession.from_bytes(session.to_bytes())
print("session plan after restore:", restored.plan.loaded)
