"""Heat kernel between two points of an arc, recovered from source-to-solution data on small patches.

Run with ``python demos/patch_reconstruction.py`` (takes a few seconds).
"""
import math

import numpy as np

from fracext import kernels, recon, sts
from fracext.spectra import Arc, Circle

m = Circle(1.0)
O = Arc(m, 0.0, math.pi / 2)
x, z = -math.pi / 4, math.pi / 4
op = sts.StsOperator(m, O, "frac_neumann", 0.5, n_modes=801)
data = recon.measure_patch_data(op, Arc(m, x, 0.65), Arc(m, z, 0.5))
print(f"probes: {data.n_probes}, Gram condition {data.gram_condition:.2e}")

rt = recon.recover_taylor_coefficients(data, 8, x, z)
print("m  a_m / a_1        error estimate")
for k in range(1, 9):
    print(f"{k}  {rt.normalized[k]:<+16.8e} {rt.errors[k] / abs(rt.table.values[1]):.1e}")

t = np.linspace(0.5, 2.0, 7)
hr = recon.reconstruct_heat(data, x, z, t)
truth = np.array([kernels.heat(m, ti, [x], [z])[0] for ti in t])
print("\nt      truth            reconstructed    rel. error")
for ti, a, b in zip(t, truth, hr.values):
    print(f"{ti:<6.3f} {a:<16.10f} {b:<16.10f} {abs(b / a - 1):.2%}")
print(f"audit clean: {hr.audit_clean}")
