"""
Rate-distortion sweep
=====================

Error-driven and size-driven retrieval over one archive, printed as a
table.  Pipe the numbers into any plotting tool to get the usual curves.
"""

import numpy as np

import ipcomp

rng = np.random.default_rng(7)
n = 64
axes = np.meshgrid(*[np.linspace(0, 1, n)] * 3, indexing="ij")
field = sum(
    rng.uniform(0.2, 1) * np.sin(2 * np.pi * sum(f * a for f, a in zip(rng.uniform(0.5, 6, 3), axes)))
    for _ in range(5)
)

eb = 1e-4 * np.ptp(field)
for interp in ("linear", "cubic"):
    data = ipcomp.compress(ipcomp.FieldGrid.from_array(field), eb, interp)
    print(f"\n{interp}: {ipcomp.bitrate(len(data), field.size):.2f} bits/value stored")
    archive = ipcomp.Archive(data)
    model = archive.error_model()

    print("  requested E/eb   bits/value   bound/eb   actual/eb")
    for power in (0, 2, 4, 6, 8, 10, 12):
        plan = ipcomp.plan_for_error(model, eb * 2.0**power)
        grid, session = ipcomp.reconstruct(archive, plan)
        actual = np.abs(grid.as_array() - field).max()
        rate = ipcomp.bitrate(session.bytes_loaded, field.size)
        print(f"  {2**power:>14}   {rate:>10.3f}   {plan.bound / eb:>8.2f}   {actual / eb:>9.2f}")

    print("  budget bits/value   bound/eb   actual/eb   psnr")
    for rate in (0.25, 0.5, 1, 2, 4):
        plan = ipcomp.plan_for_size(model, rate * field.size / 8)
        grid, _ = ipcomp.reconstruct(archive, plan)
        m = ipcomp.metrics(field, grid)
        print(f"  {rate:>17}   {plan.bound / eb:>8.2f}   {m['max_err'] / eb:>9.2f}   {m['psnr']:.1f}")
