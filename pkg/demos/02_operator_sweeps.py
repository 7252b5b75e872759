"""Boundary-to-boundary operator norms and their power laws.

The single layer operator on the unit circle is a Fourier multiplier, so its
norm is exact and decays like lam^{-2/3}; on a straight segment the glancing
set is the whole segment and the decay is only lam^{-1/2}.  Each sample is
also computed at twice the mesh density as a refinement certificate.

Run:  python demos/02_operator_sweeps.py   (a minute or two)
"""

from layerlab.scaling import fit_power_law, sweep

GRID = [100.0, 200.0, 400.0, 800.0]
SEGMENT = {"name": "segment", "p": [-0.5, 0.0], "q": [0.5, 0.0]}

for label, kind, geom, target in (("SLO on the circle", "SLO", "circle", -2 / 3),
                                  ("SLO on a segment", "SLO", SEGMENT, -1 / 2)):
    res = sweep(kind, geom, GRID, p=10)
    print(label)
    for s in res.samples:
        change = "n/a" if s.refinement_change is None else f"{s.refinement_change:.1e}"
        print(f"  lam = {s.lam:6.0f}  norm = {s.norm:.6e}  p -> 2p change {change}  [{s.status}]")
    fit = fit_power_law(res)
    print(f"  exponent {fit.exponent:+.4f} +- {fit.stderr:.4f} (target {target:+.4f}), "
          f"log-corrected {fit.log_exponent:+.4f}, preferred model: {fit.model}\n")
