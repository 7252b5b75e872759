"""Sharp examples for the double layer operator between two curves.

Flat pair: a density concentrated on a window of width lam^{-1/2} on the line
{x1 = 0} is mapped by the double layer operator onto a second segment; the
ratio grows like lam^{1/4}.  Curved pair: a parabola and its evolute, where
the phase |x - y| is stationary to higher order, give lam^{1/6} with a window
of width lam^{-1/3}.

Run:  python demos/03_appendix_pairs.py   (about a minute)
"""

from layerlab.examples import dlo_curved_example, dlo_flat_example, phase_defect
from layerlab.scaling import fit_power_law

GRID = [100.0, 200.0, 400.0, 800.0]

for name, gen, target in (("flat", dlo_flat_example, 0.25), ("curved", dlo_curved_example, 1 / 6)):
    rows = [gen(lam) for lam in GRID]
    print(f"{name} pair")
    for r in rows:
        print(f"  lam = {r.lam:6.0f}  ratio = {r.ratio:.5f}")
    fit = fit_power_law(GRID, [r.ratio for r in rows])
    print(f"  exponent {fit.exponent:+.4f} (target {target:+.4f})\n")

# on the curved pair the phase defect is cubic in s: doubling s multiplies it by 8
for s in (0.02, 0.04, 0.08):
    print(f"phase defect at s = {s:.2f}: {float(phase_defect(0.0, s)):+.3e}")
