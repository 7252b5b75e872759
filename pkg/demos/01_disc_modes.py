"""Dirichlet and Neumann modes of the unit disc as sharp examples.

A Dirichlet eigenfunction J_k(lam r) e^{ik theta} with lam = j_{k,1} is the
single layer potential of a multiple of e^{ik theta}, so its size on the disc
against the size of its boundary density gives a lower bound on the SLP norm.
Continuing it into the annulus 1 < |x| < 2 keeps the Helmholtz equation and
the ratio decays like lam^{-5/6}.

The Neumann mode with lam = j'_{k,1} is the double layer potential of its own
trace; that ratio decays only like lam^{-1/3}, the whispering-gallery rate.

Run:  python demos/01_disc_modes.py
"""

import math

from layerlab import examples as E
from layerlab.scaling import fit_power_law

print("Dirichlet modes continued into the annulus")
print(f"{'k':>5} {'lam':>10} {'ratio':>12} {'||u||_B1 lam/sqrt(pi)':>24}")
rows = [E.annulus_slp_example(k) for k in (45, 90, 180, 360, 720)]
for k, r in zip((45, 90, 180, 360, 720), rows):
    print(f"{k:5d} {r.lam:10.3f} {r.ratio:12.5e} {r.extras['norm_B1_scaled']:24.15f}")
fit = fit_power_law([r.lam for r in rows], [r.ratio for r in rows])
print(f"fitted exponent {fit.exponent:+.4f}  (the bound is -5/6 = {-5 / 6:+.4f})\n")

print("Neumann modes (first radial index)")
print(f"{'k':>5} {'lam':>10} {'ratio':>12} {'ratio lam^(1/3)':>16}")
rows = [E.disc_neumann_dlp_example(k) for k in (20, 40, 80, 160)]
for k, r in zip((20, 40, 80, 160), rows):
    print(f"{k:5d} {r.lam:10.3f} {r.ratio:12.5e} {r.ratio * r.lam ** (1 / 3):16.5f}")
fit = fit_power_law([r.lam for r in rows], [r.ratio for r in rows])
print(f"fitted exponent {fit.exponent:+.4f}; the scaled ratio creeps up to sqrt(0.8086) = {math.sqrt(0.8086):.4f}")

print("\nNeumann modes with lam/k near 2 stay of unit size")
for k in (20, 50, 100):
    l = E.neumann_index_near(k)
    r = E.disc_neumann_dlp_example(k, l)
    print(f"k = {k:3d}, l = {l:2d}: lam/k = {r.lam / k:.3f}, ratio = {r.ratio:.4f}")
