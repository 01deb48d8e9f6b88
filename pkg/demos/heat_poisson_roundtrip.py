"""Poisson kernel from the heat kernel and back again, on the unit circle.

Run with ``python demos/heat_poisson_roundtrip.py``.
"""
import math

import numpy as np

from fracext import kernels, transforms
from fracext.spectra import Circle

m = Circle(1.0)
s = 0.5
x, z = 0.0, math.pi / 2

print("y      eigen sum        heat transform   ratio")
for y in (0.25, 0.5, 1.0, 2.0):
    a = float(kernels.neumann_poisson_eigen(m, s, y, x, z)[0])
    b = kernels.neumann_poisson_from_heat(m, s, y, x, z)
    print(f"{y:<6} {a:<16.10f} {b:<16.10f} {b / a:.12f}")
print(f"Gamma(s) = {math.gamma(s):.12f}")

table = transforms.neumann_taylor_coeffs(m, s, x, z, 20)
t = np.linspace(0.5, 2.0, 7)
rec = transforms.heat_from_taylor(table, t).values
truth = np.array([kernels.heat(m, ti, [x], [z])[0] for ti in t])
print("\nt      heat kernel      from 20 Taylor coefficients")
for ti, a, b in zip(t, truth, rec):
    print(f"{ti:<6.3f} {a:<16.10f} {b:.10f}")
