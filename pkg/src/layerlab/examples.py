"""Sharp-example families for the layer potentials and operators.

Every generator returns an :class:`ExampleResult` with ``ratio =
numerator / denominator``; feeding the ratios of a geometric lambda grid to
:func:`layerlab.scaling.fit_power_law` exhibits the rate.

Closed forms rest on

    int_{|x|<R} |a J_k(lam r)|^2 dx
        = a^2 pi R^2 [(1 - k^2/(lam R)^2) J_k(lam R)^2 + J_k'(lam R)^2],

and the quadrature routes rebuild the same fields from boundary data with
the assembled operators (Green's representation ``u = S(d_nu u) - D(u)``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import specfun
from .geometry import (
    APPENDIX_EPS,
    QuadratureSet,
    annulus,
    appendix_sigma_closed_form,
    box,
    disc,
    make_geometry,
    quadrature,
    trapezoid_count,
)
from .operators import (
    AssemblyError,
    CirculantOperator,
    LatticeOperator,
    OperatorMatrix,
    PolarOperator,
    assemble,
    operator_norm,
    weighted_l2,
)

METHODS = ("closed-form", "quadrature", "both")
CSV_COLUMNS = ("family", "lambda", "k", "numerator", "denominator", "ratio", "method", "p")
BOTH_RTOL = 1e-4


@dataclass
class ExampleResult:
    family: str
    lam: float
    k: Optional[int]
    numerator: float
    denominator: float
    ratio: float
    method: str
    p: Optional[float] = None
    alt_ratio: Optional[float] = None  # second evaluation when method == "both"
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        expect = self.numerator / self.denominator if self.denominator else 0.0
        if not math.isclose(self.ratio, expect, rel_tol=1e-14, abs_tol=0.0):
            raise ValueError("ratio must equal numerator / denominator")

    @property
    def agreement(self):
        """Relative gap between the two evaluations (``method == "both"``)."""
        if self.alt_ratio is None:
            return None
        return abs(self.alt_ratio - self.ratio) / abs(self.ratio)

    def row(self):
        return [
            self.family,
            repr(float(self.lam)),
            "" if self.k is None else str(int(self.k)),
            repr(float(self.numerator)),
            repr(float(self.denominator)),
            repr(float(self.ratio)),
            self.method,
            "" if self.p is None else repr(float(self.p)),
        ]


def write_csv(results, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in results:
            w.writerow(r.row())


def read_csv(path):
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append(
                ExampleResult(
                    family=rec["family"],
                    lam=float(rec["lambda"]),
                    k=int(rec["k"]) if rec["k"] else None,
                    numerator=float(rec["numerator"]),
                    denominator=float(rec["denominator"]),
                    ratio=float(rec["ratio"]),
                    method=rec["method"],
                    p=float(rec["p"]) if rec["p"] else None,
                )
            )
    return out


def _result(family, lam, k, num, den, method, p=None, alt=None, **extras):
    ratio = num / den if den else 0.0
    return ExampleResult(family, float(lam), k, float(num), float(den), float(ratio), method, p, alt, extras)


# ---------------------------------------------------------------------------
# bumps
# ---------------------------------------------------------------------------


def _raw_bump(z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - z[inside] ** 2))
    return out


_BUMP_L2 = None


def bump(z):
    """Smooth nonnegative bump on (-1, 1) with unit L2(R) norm."""
    global _BUMP_L2
    if _BUMP_L2 is None:
        from scipy.integrate import quad

        _BUMP_L2 = math.sqrt(quad(lambda t: float(_raw_bump(np.array([t]))[0] ** 2), -1.0, 1.0, epsabs=0, epsrel=1e-13)[0])
    return _raw_bump(z) / _BUMP_L2


# ---------------------------------------------------------------------------
# disc / annulus closed forms
# ---------------------------------------------------------------------------


def l2_ball_closed_form(a, k, lam, R=1.0):
    """Squared L2 norm of ``a J_k(lam r) e^{ik theta}`` over ``|x| < R``."""
    if not lam > 0 or not R > 0:
        raise ValueError("lambda and R must be positive")
    x = lam * R
    j, jp = specfun.bessel_j_and_deriv(k, x)
    return a * a * math.pi * R * R * ((1.0 - (k / x) ** 2) * j * j + jp * jp)


def l2_ball_quadrature(a, k, lam, R=1.0, p=12.0, r0=0.0):
    """Same quantity on the polar rule of the disc (or annulus ``r0 < r < R``).

    The integrand does not depend on the angle, so the angular trapezoid sum
    is exact and only the radial Gauss panels are evaluated.
    """
    region = disc(R) if r0 == 0 else annulus(r0, R)
    q = quadrature(region, p, lam, n_theta=8, materialize=False)
    r, wr = q.info["radii"], q.info["radial_weights"]
    vals = np.array([specfun.bessel_j(k, lam * ri) for ri in r])
    return float(2 * math.pi * np.sum(r * wr * (a * vals) ** 2))


def dirichlet_eigen(k, s=1):
    """``(lam, a)`` with lam = j_{k,s} and ``a = 1/(lam J_k'(lam))``, so that
    ``u = a J_k(lam r) e^{ik theta}`` vanishes on the unit circle and
    ``d_r u = e^{ik theta}`` there."""
    lam = specfun.bessel_zero("J", k, s).location
    return lam, 1.0 / (lam * specfun.bessel_j_deriv(k, lam))


def neumann_eigen(k, s=1):
    """``(lam, a)`` with lam = j'_{k,s} and ``a = 1/J_k(lam)``: ``u = e^{ik theta}``
    on the unit circle and ``d_r u = 0``."""
    lam = specfun.bessel_zero("Jprime", k, s).location
    return lam, 1.0 / specfun.bessel_j(k, lam)


def _mode_density(q: QuadratureSet, k):
    theta = np.arctan2(q.nodes[:, 1], q.nodes[:, 0])
    return np.exp(1j * k * theta)


def annulus_slp_example(k, method="closed-form", p=10.0, R2=2.0, eps=0.5):
    """Dirichlet mode of the unit disc continued into the annulus ``1 < |x| < R2``.

    ``u = a J_k(lam r) e^{ik theta}`` with lam = j_{k,1}.  The numerator is
    ``||u||_{L2(annulus)} = sqrt(N(R2) - N(1))`` with ``N`` the closed form,
    the denominator the L2 norm of ``e^{ik theta}`` over both circles.  The
    quadrature route evaluates ``u = S(d_nu u) - D(u)`` from the two annulus
    circles on the annulus polar rule.
    """
    if k < 10:
        raise ValueError("the annulus family needs k >= 10")
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    lam, a = dirichlet_eigen(k)
    n_out = l2_ball_closed_form(a, k, lam, R2)
    n_in = l2_ball_closed_form(a, k, lam, 1.0)
    num = math.sqrt(n_out - n_in)
    den = math.sqrt(2 * math.pi * (1.0 + R2))
    extras = {
        "norm_B1": math.sqrt(n_in),
        "norm_B1_scaled": math.sqrt(n_in) * lam / math.sqrt(math.pi),
        f"norm_B{1 + eps:g}": math.sqrt(l2_ball_closed_form(a, k, lam, 1.0 + eps)),
    }
    if method == "closed-form":
        return _result("annulus-slp", lam, k, num, den, method, **extras)
    qnum = _annulus_green_norm(k, lam, a, p, R2)
    extras["numerator_quadrature"] = qnum
    if method == "quadrature":
        return _result("annulus-slp", lam, k, qnum, den, method, p, **extras)
    return _result("annulus-slp", lam, k, num, den, method, p, alt=qnum / den, **extras)


def _annulus_green_norm(k, lam, a, p, R2):
    geom = make_geometry("annulus-boundary", R1=1.0, R2=R2)
    N = trapezoid_count(2 * math.pi * R2, p, lam)
    bq = quadrature(geom, p, lam, n_theta=N)
    dq = quadrature(annulus(1.0, R2), p, lam, n_theta=N, materialize=False)
    e = _mode_density(bq, k)
    outer = bq.piece == 0
    j2, jp2 = specfun.bessel_j_and_deriv(k, lam * R2)
    # outward normals of the annulus: +r on the outer circle, -r on the inner one
    dnu_u = np.where(outer, a * lam * jp2, -a * lam * specfun.bessel_j_deriv(k, lam)) * e
    u_b = np.where(outer, a * j2, 0.0) * e
    S = PolarOperator("SLP", lam, bq, dq)
    D = PolarOperator("DLP", lam, bq, dq)
    u = S.apply(dnu_u) - D.apply(u_b)
    w = np.repeat(dq.info["radii"] * dq.info["radial_weights"] * 2 * math.pi / N, N)
    return weighted_l2(w, u)


def disc_dirichlet_slp_field(k, p=10.0):
    """``u = S(e^{ik theta})`` on the unit-disc polar rule for lam = j_{k,1};
    returns ``(lam, ||u||_{L2(B1)})``.  Exactly ``||u|| = sqrt(pi)/lam``."""
    lam, _ = dirichlet_eigen(k)
    bq = quadrature(make_geometry("circle"), p, lam)
    dq = quadrature(disc(1.0), p, lam, n_theta=len(bq), materialize=False)
    u = PolarOperator("SLP", lam, bq, dq).apply(_mode_density(bq, k))
    N = len(bq)
    w = np.repeat(dq.info["radii"] * dq.info["radial_weights"] * 2 * math.pi / N, N)
    return lam, weighted_l2(w, u)


def disc_neumann_dlp_example(k, l=1, method="closed-form", p=10.0):
    """Neumann mode of the unit disc: lam = j'_{k,l}, ``u|_{dB} = e^{ik theta}``.

    ratio = ||u||_{L2(B1)} / ||e^{ik theta}||_{L2(dB1)}
          = sqrt(pi (1 - k^2/lam^2)) / sqrt(2 pi).
    The quadrature route evaluates ``u = -D(e^{ik theta})`` on the polar rule.
    """
    if k < 5 or l < 1:
        raise ValueError("the disc Neumann family needs k >= 5 and l >= 1")
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    lam, a = neumann_eigen(k, l)
    num = math.sqrt(math.pi * (1.0 - (k / lam) ** 2))
    den = math.sqrt(2 * math.pi)
    extras = {"l": l, "norm_closed_form_general": math.sqrt(l2_ball_closed_form(a, k, lam, 1.0))}
    if method == "closed-form":
        return _result("disc-neumann", lam, k, num, den, method, **extras)
    bq = quadrature(make_geometry("circle"), p, lam)
    dq = quadrature(disc(1.0), p, lam, n_theta=len(bq), materialize=False)
    u = -PolarOperator("DLP", lam, bq, dq).apply(_mode_density(bq, k))
    N = len(bq)
    w = np.repeat(dq.info["radii"] * dq.info["radial_weights"] * 2 * math.pi / N, N)
    qnum = weighted_l2(w, u)
    extras["numerator_quadrature"] = qnum
    if method == "quadrature":
        return _result("disc-neumann", lam, k, qnum, den, method, p, **extras)
    return _result("disc-neumann", lam, k, num, den, method, p, alt=qnum / den, **extras)


def neumann_index_near(k, target=2.0, lo=1.9, hi=2.1, max_index=400):
    """Smallest ``l`` with ``j'_{k,l} / k`` in ``[lo, hi]``, nearest to ``target``."""
    best = None
    for l in range(1, max_index + 1):
        x = specfun.bessel_zero("Jprime", k, l).location / k
        if lo <= x <= hi and (best is None or abs(x - target) < abs(best[1] - target)):
            best = (l, x)
        if x > hi:
            break
    if best is None:
        raise ValueError(f"no zero of J'_{k} with ratio in [{lo}, {hi}]")
    return best[0]


# ---------------------------------------------------------------------------
# flat piece: dE into the box
# ---------------------------------------------------------------------------


def flat_dE_example(lam, p=10.0, modulated=True, profile: Optional[Callable] = None, scale=1.0):
    """dE of a tangentially modulated bump on the bottom side of [-1,1] x [0,1].

    ``f(x1) = e^{i lam x1} f0(x1)``, ``f0`` a fixed L2-normalised bump on
    [-1, 1]; the numerator is ``||dE(f dsigma)||_{L2(box)}`` on the cell-midpoint
    lattice, the denominator ``||f||_{L2}`` on the same boundary rule.
    ``profile`` replaces ``f0``; ``scale = 0`` gives the zero density.
    """
    if lam < 20:
        raise ValueError("the flat family needs lambda >= 20")
    bq = quadrature(make_geometry("segment"), p, lam, rule="midpoint")
    dq = quadrature(box(), p, lam, materialize=False)
    x1 = bq.nodes[:, 0]
    f0 = profile(x1) if profile is not None else bump(x1)
    f = scale * f0 * (np.exp(1j * lam * x1) if modulated else 1.0)
    den = weighted_l2(bq, f)
    if den == 0.0:
        return _result("flat-dE", lam, None, 0.0, 0.0, "quadrature", p)
    u = LatticeOperator("dE", lam, bq, dq).apply(f)
    num = weighted_l2(np.full(dq.info["count"], dq.info["hx"] * dq.info["hy"]), u)
    fam = "flat-dE" if modulated else "flat-dE-unmodulated"
    return _result(fam, lam, None, num, den, "quadrature", p)


# ---------------------------------------------------------------------------
# double layer operator, flat and curved constructions
# ---------------------------------------------------------------------------


def dlo_flat_example(lam, M=1.0, p=10.0):
    """Density ``chi(M lam^{1/2} x2)`` on {x1 = 0, |x2| < 1}, DLP onto
    {1/2 < x1 < 3/2, x2 = 0}.  The source normal is +x1, towards the target."""
    if lam < 50 or M < 1:
        raise ValueError("the flat DLO family needs lambda >= 50 and M >= 1")
    w = 1.0 / (M * math.sqrt(lam))
    src = quadrature(make_geometry("segment", p=(0.0, -w), q=(0.0, w)), p, lam, min_panels=8)
    tgt = quadrature(make_geometry("segment", p=(0.5, 0.0), q=(1.5, 0.0)), p, lam)
    chi = bump(src.nodes[:, 1] / w)
    A = assemble("DLP", lam, src, tgt, p=p)
    num = weighted_l2(tgt, A.apply(chi))
    den = weighted_l2(src, chi)
    d = tgt.nodes[:, None, :] - src.nodes[None, :, :]
    cosang = np.sum(d * src.normals[None], axis=-1) / np.hypot(d[..., 0], d[..., 1])
    return _result(
        "dlo-flat", lam, None, num, den, "quadrature", p,
        M=M, chi_norm_exact=1.0 / math.sqrt(M * math.sqrt(lam)),
        alignment_defect=float(np.max(np.abs(cosang - 1.0))),
    )


def appendix_pair(eps=APPENDIX_EPS):
    """(gamma~, sigma, param_of): the unit-speed parabola, its evolute in closed
    form and the map from arclength to the common parameter."""
    g = make_geometry("appendix-gamma", eps=eps).pieces[0]
    sigma = appendix_sigma_closed_form(eps)
    return g, sigma, g.param_of


def phase_defect(sx, sy, eps=APPENDIX_EPS):
    """``|gamma~(sy) - sigma~(sx)| - |gamma~(sx) - sigma~(sx)|``, both curves in
    the arclength parameter of gamma~."""
    g, sigma, t_of = appendix_pair(eps)
    sx, sy = np.atleast_1d(sx), np.atleast_1d(sy)
    xs = sigma.point(t_of(sx))
    return np.hypot(*(g.point(sy) - xs).T) - np.hypot(*(g.point(sx) - xs).T)


def dlo_curved_example(lam, M=1.0, p=10.0, eps=APPENDIX_EPS):
    """Density ``chi(M lam^{1/3} s)`` on the parabola (arclength ``s``), DLP onto
    its evolute restricted to the window ``|s| <= 1/(M lam^{1/3})`` (same
    arclength parameter, carried over through the osculating-circle map)."""
    if lam < 50:
        raise ValueError("the curved DLO family needs lambda >= 50")
    w = 1.0 / (M * lam ** (1.0 / 3.0))
    g, sigma, t_of = appendix_pair(eps)
    if w > min(-g.t0, g.t1):
        raise ValueError("window exceeds the appendix parameter range; raise M or lambda")
    kap = g.curvature(np.linspace(-w, w, 65))
    if np.min(np.abs(kap)) < 1e-8:
        raise ValueError("curvature degenerates in the window")
    g_win = make_geometry("appendix-gamma", eps=eps)
    g_win = type(g_win)("gamma-window", (replace(g, t0=-w, t1=w),), {})
    ta, tb = t_of(np.array([-w, w]))
    s_win = type(g_win)("sigma-window", (replace(sigma, t0=float(ta), t1=float(tb)),), {})
    src = quadrature(g_win, p, lam, min_panels=8)
    tgt = quadrature(s_win, p, lam, min_panels=8)
    chi = bump(src.param / w)
    A = assemble("DLP", lam, src, tgt, p=p)
    num = weighted_l2(tgt, A.apply(chi))
    den = weighted_l2(src, chi)
    return _result("dlo-curved", lam, None, num, den, "quadrature", p, M=M, window=w)


# ---------------------------------------------------------------------------
# single layer operator through the spectral measure
# ---------------------------------------------------------------------------


def slo_sharpness_via_dE(geometry, lam, p=10.0, check_entries=False):
    """Norm of the boundary restriction of dE, once as ``(S+ - S-)/(2 pi i)`` and
    once from the directly assembled kernel ``J0(lam r)/(4 pi)``.

    ``geometry`` is ``"circle"`` or ``"segment"`` (or a segment spec dict).
    """
    name = geometry["name"] if isinstance(geometry, dict) else str(geometry)
    params = {k: v for k, v in geometry.items() if k != "name"} if isinstance(geometry, dict) else {}
    if name == "circle":
        geom = make_geometry("circle", **params)
        q = quadrature(geom, p, lam)
        sp, sm = CirculantOperator("SLO", lam, q, "+"), CirculantOperator("SLO", lam, q, "-")
        diff = (sp.symbol - sm.symbol) / (2j * math.pi)
        via = float(np.max(np.abs(diff)))
        direct = operator_norm(CirculantOperator("dE", lam, q)).value
        extras = {"nodes": len(q)}
        if check_entries:
            extras["entry_gap"] = float(np.max(np.abs((sp.row - sm.row) / (2j * math.pi) - sp.row.imag / math.pi)))
    elif name == "segment":
        geom = make_geometry("segment", **params)
        q = quadrature(geom, p, lam)
        Ap = assemble("SLO", lam, q, geometry=geom, sign="+", p=p)
        Am = assemble("SLO", lam, q, geometry=geom, sign="-", p=p)
        E = OperatorMatrix("dE", lam, q, q, (Ap.entries - Am.entries) / (2j * math.pi), p)
        del Am
        via = operator_norm(E).value
        Ed = assemble("dE", lam, q, p=p)
        direct = operator_norm(Ed).value
        extras = {"nodes": len(q), "direct_entry_gap": float(np.max(np.abs(E.entries - Ed.entries)))}
        if check_entries:
            extras["entry_gap"] = float(np.max(np.abs(E.entries - Ap.entries.imag / math.pi)))
    else:
        raise AssemblyError(f"SLO sharpness is set up on 'circle' or 'segment', not {name!r}")
    return _result(f"slo-dE-{name}", lam, None, via, 1.0, "both", p, alt=direct, **extras)


FAMILIES = {
    "annulus-slp": annulus_slp_example,
    "flat-dE": flat_dE_example,
    "disc-neumann": disc_neumann_dlp_example,
    "dlo-flat": dlo_flat_example,
    "dlo-curved": dlo_curved_example,
    "slo-dE-circle": lambda lam, p=10.0: slo_sharpness_via_dE("circle", lam, p),
    "slo-dE-segment": lambda lam, p=10.0: slo_sharpness_via_dE("segment", lam, p),
}
