"""Splitting the single layer potential at distance M/lam.

The near part zeta(lam |x-y| / M) K carries the logarithmic singularity on a
collar of width 2M/lam, so its norm decays faster than the full operator.  The
far part applied to a density solves the Helmholtz equation up to an error
term supported where the cutoff varies; this script measures that residual
with a five-point Laplacian and shows where it lives.

Run:  python demos/04_near_far_split.py
"""

import math

import numpy as np

from layerlab import diagnostics as D

for lam in (100.0, 200.0):
    rep = D.diagnose(lam, quasimode=False)
    print(f"lam = {lam:5.0f}: near {rep.near_norm:.3e}, far {rep.far_norm:.3e}, full {rep.full_norm:.3e}")

a = D.near_diagonal_norm("SLP-near", 100.0).value
b = D.near_diagonal_norm("SLP-near", 400.0).value
print(f"near-part slope between lam = 100 and 400: {math.log(b / a) / math.log(4):+.3f}\n")

for lam in (100.0, 200.0, 400.0):
    q = D.quasimode_error(lam)
    print(f"lam = {lam:5.0f}: ||E f|| / ||f|| = {q.total / q.f_norm:8.3f}, "
          f"collar share {q.collar / q.total:.4f}, finite-difference floor {q.away / q.f_norm:.2e}")

# a single boundary node as the density: the error term is a ring around it
lam, h = 100.0, 1 / 2000
nb = int(math.ceil(0.5 / h * (1 - 1e-12)))
spike = np.zeros(nb)
spike[nb // 2] = 1.0
q = D.quasimode_error(lam, f=spike, keep_field=True)
print(f"\nspike density: share of the residual in M/lam <= |x - y| <= 2M/lam "
      f"is {D.annulus_fraction(q, q.grid[2][nb // 2]):.3f}")
