"""Boundary curves, planar domains and their quadrature rules.

Curves are parametrised maps ``t -> R^2`` carrying first and second
derivatives; the normal is the tangent rotated clockwise times an
``orientation`` sign (for a counter-clockwise closed curve this is the outward
normal).  Closed curves get periodic trapezoid nodes, open arcs get
Gauss-Legendre panels.  Domains (disc, annulus, box) get polar or tensor rules
whose structure is kept so that the operators module can exploit it.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

PANEL_ORDER = 16
DEFAULT_BOUNDARY_BUDGET = 8000
DEFAULT_DOMAIN_BUDGET = 4_000_000
APPENDIX_EPS = 0.3

_GL_CACHE: dict = {}


def gauss_legendre(n: int):
    """Nodes and weights on [0, 1]."""
    if n not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = (0.5 * (x + 1.0), 0.5 * w)
    return _GL_CACHE[n]


class BudgetExceeded(RuntimeError):
    """Raised when a quadrature would exceed the configured node budget."""

    def __init__(self, what, required, cap, lam_limit=None):
        self.what, self.required, self.cap, self.lam_limit = what, required, cap, lam_limit
        msg = f"{what} quadrature needs {required} nodes, budget is {cap}"
        if lam_limit is not None:
            msg += f"; at this p the budget allows lambda <= {lam_limit:.4g}"
        super().__init__(msg)


def node_budget():
    """(boundary cap, domain cap), overridable by ``LAYERLAB_BUDGET``.

    The variable holds ``B`` or ``B:D`` (e.g. ``16000:1e7``).
    """
    raw = os.environ.get("LAYERLAB_BUDGET", "").strip()
    if not raw:
        return DEFAULT_BOUNDARY_BUDGET, DEFAULT_DOMAIN_BUDGET
    parts = raw.split(":")
    try:
        b = int(float(parts[0]))
        d = int(float(parts[1])) if len(parts) > 1 else DEFAULT_DOMAIN_BUDGET
    except ValueError as exc:
        raise ValueError(f"LAYERLAB_BUDGET must look like 'B' or 'B:D', got {raw!r}") from exc
    if b <= 0 or d <= 0:
        raise ValueError("LAYERLAB_BUDGET entries must be positive")
    return b, d


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Curve:
    """A parametrised planar curve on ``[t0, t1]``.

    ``f``, ``df``, ``ddf`` map a parameter array of shape (n,) to arrays of
    shape (n, 2).
    """

    name: str
    f: Callable
    df: Callable
    ddf: Callable
    t0: float
    t1: float
    closed: bool = False
    orientation: float = 1.0

    def __call__(self, t):
        return self.f(np.atleast_1d(np.asarray(t, dtype=float)))

    def point(self, t):
        return self(t)

    def deriv(self, t):
        return self.df(np.atleast_1d(np.asarray(t, dtype=float)))

    def deriv2(self, t):
        return self.ddf(np.atleast_1d(np.asarray(t, dtype=float)))

    def speed(self, t):
        return np.hypot(*self.deriv(t).T)

    def tangent(self, t):
        d = self.deriv(t)
        return d / np.hypot(*d.T)[:, None]

    def normal(self, t):
        tx, ty = self.tangent(t).T
        return self.orientation * np.stack([ty, -tx], axis=1)

    def curvature(self, t):
        """Curvature, positive when the curve bends away from the normal.

        With this sign convention a counter-clockwise circle of radius R has
        curvature 1/R for its outward normal.
        """
        d, dd = self.deriv(t), self.deriv2(t)
        cross = d[:, 0] * dd[:, 1] - d[:, 1] * dd[:, 0]
        return self.orientation * cross / np.hypot(*d.T) ** 3

    def length(self, n_panels=64):
        x, w = gauss_legendre(PANEL_ORDER)
        edges = np.linspace(self.t0, self.t1, n_panels + 1)
        t = (edges[:-1, None] + np.diff(edges)[:, None] * x).ravel()
        ww = (np.diff(edges)[:, None] * w).ravel()
        return float(np.sum(self.speed(t) * ww))


def circle(R=1.0, center=(0.0, 0.0), clockwise=False):
    if not R > 0:
        raise ValueError(f"circle radius must be positive, got {R}")
    cx, cy = map(float, center)
    s = -1.0 if clockwise else 1.0

    def f(t):
        return np.stack([cx + R * np.cos(t), cy + s * R * np.sin(t)], axis=1)

    def df(t):
        return np.stack([-R * np.sin(t), s * R * np.cos(t)], axis=1)

    def ddf(t):
        return np.stack([-R * np.cos(t), -s * R * np.sin(t)], axis=1)

    # a clockwise circle (inner annulus boundary) keeps the normal pointing
    # away from the annulus, i.e. towards the centre
    return Curve(f"circle({R:g})", f, df, ddf, 0.0, 2 * math.pi, closed=True)


def segment(p, q, name=None):
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    d = q - p
    if not np.hypot(*d) > 0:
        raise ValueError("degenerate segment: endpoints coincide")

    def f(t):
        return p[None, :] + t[:, None] * d[None, :]

    def df(t):
        return np.broadcast_to(d, (t.size, 2)).copy()

    def ddf(t):
        return np.zeros((t.size, 2))

    return Curve(name or f"segment({p.tolist()},{q.tolist()})", f, df, ddf, 0.0, 1.0)


def parabola(eps=APPENDIX_EPS):
    """t -> (t+1, (t+1)^2) with the normal pointing to the concave side."""

    def f(t):
        return np.stack([t + 1.0, (t + 1.0) ** 2], axis=1)

    def df(t):
        return np.stack([np.ones_like(t), 2.0 * (t + 1.0)], axis=1)

    def ddf(t):
        return np.stack([np.zeros_like(t), np.full_like(t, 2.0)], axis=1)

    return Curve("parabola", f, df, ddf, -eps, eps, orientation=-1.0)


def appendix_sigma_closed_form(eps=APPENDIX_EPS):
    """t -> (-4(t+1)^3, 3(t+1)^2 + 1/2), parametrised like the parabola."""

    def f(t):
        u = t + 1.0
        return np.stack([-4.0 * u**3, 3.0 * u**2 + 0.5], axis=1)

    def df(t):
        u = t + 1.0
        return np.stack([-12.0 * u**2, 6.0 * u], axis=1)

    def ddf(t):
        u = t + 1.0
        return np.stack([-24.0 * u, np.full_like(t, 6.0)], axis=1)

    return Curve("appendix-sigma", f, df, ddf, -eps, eps)


def ellipse_arc(a, b, t0=0.0, t1=0.5 * math.pi):
    """Counter-clockwise ellipse arc (a cos t, b sin t), outward normal."""

    def f(t):
        return np.stack([a * np.cos(t), b * np.sin(t)], axis=1)

    def df(t):
        return np.stack([-a * np.sin(t), b * np.cos(t)], axis=1)

    def ddf(t):
        return np.stack([-a * np.cos(t), -b * np.sin(t)], axis=1)

    return Curve(f"ellipse({a:g},{b:g})", f, df, ddf, t0, t1)


class ArcLengthError(RuntimeError):
    pass


def _arclength(curve: Curve, anchor: float, t):
    """s(t) = signed arclength from ``anchor`` (32-point Gauss on each interval)."""
    x, w = gauss_legendre(32)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    h = t - anchor
    pts = anchor + h[:, None] * x[None, :]
    sp = curve.speed(pts.ravel()).reshape(pts.shape)
    return h * (sp @ w)


def unit_speed_reparam(curve: Curve, anchor: Optional[float] = None, tol=1e-14, maxiter=50) -> Curve:
    """Reparametrise ``curve`` by arclength measured from ``anchor``.

    ``anchor`` defaults to 0 when 0 lies in the parameter window, otherwise to
    ``t0``; with that choice the map is idempotent.
    """
    if anchor is None:
        anchor = 0.0 if curve.t0 <= 0.0 <= curve.t1 else curve.t0
    probe = np.linspace(curve.t0, curve.t1, 257)
    if np.min(curve.speed(probe)) <= 1e-12:
        raise ValueError("curve speed vanishes in the parameter window")
    s0 = float(_arclength(curve, anchor, curve.t0)[0])
    s1 = float(_arclength(curve, anchor, curve.t1)[0])
    # coarse inverse table for Newton seeds
    table_t = np.linspace(curve.t0, curve.t1, 513)
    table_s = _arclength(curve, anchor, table_t)

    def t_of_s(s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        t = np.interp(s, table_s, table_t)
        for _ in range(maxiter):
            r = _arclength(curve, anchor, t) - s
            dt = r / curve.speed(t)
            t = t - dt
            if np.all(np.abs(dt) <= tol * (1.0 + np.abs(t))):
                return t
        raise ArcLengthError(f"arclength inversion did not converge (max step {np.max(np.abs(dt)):.3e})")

    def f(s):
        return curve.f(t_of_s(s))

    def df(s):
        d = curve.df(t_of_s(s))
        return d / np.hypot(*d.T)[:, None]

    def ddf(s):
        t = t_of_s(s)
        d, dd = curve.df(t), curve.ddf(t)
        sp2 = np.sum(d * d, axis=1)
        proj = np.sum(d * dd, axis=1) / sp2
        return (dd - proj[:, None] * d) / sp2[:, None]

    out = Curve(
        curve.name if curve.name.endswith("~") else curve.name + "~",
        f,
        df,
        ddf,
        s0,
        s1,
        closed=curve.closed,
        orientation=curve.orientation,
    )
    object.__setattr__(out, "param_of", t_of_s)
    object.__setattr__(out, "base", curve)
    return out


def osculating_locus(curve: Curve, name=None) -> Curve:
    """The evolute ``sigma = gamma + n / kappa`` of ``curve``.

    ``n`` is the unit normal towards the centre of curvature.  The returned
    curve shares the parameter of ``curve``.
    """
    probe = np.linspace(curve.t0, curve.t1, 257)
    kappa_probe = curve.curvature(probe)
    if np.min(np.abs(kappa_probe)) < 1e-10:
        raise ValueError("curvature vanishes in the parameter window")

    def centre(t):
        d, dd = curve.df(t), curve.ddf(t)
        sp2 = np.sum(d * d, axis=1)
        cross = d[:, 0] * dd[:, 1] - d[:, 1] * dd[:, 0]
        # gamma + (|g'|^2 / cross) * J g', J = rotation by +90 degrees
        jd = np.stack([-d[:, 1], d[:, 0]], axis=1)
        return curve.f(t) + (sp2 / cross)[:, None] * jd

    def df(t, h=1e-5):
        return (centre(t + h) - centre(t - h)) / (2 * h)

    def ddf(t, h=1e-4):
        return (centre(t + h) - 2 * centre(t) + centre(t - h)) / h**2

    return Curve(name or f"evolute({curve.name})", centre, df, ddf, curve.t0, curve.t1)


# ---------------------------------------------------------------------------
# boundary geometries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryGeometry:
    name: str
    pieces: tuple
    params: dict = field(default_factory=dict)

    @property
    def closed(self):
        return all(c.closed for c in self.pieces)

    def length(self):
        return sum(c.length() for c in self.pieces)


def make_geometry(spec, **params) -> BoundaryGeometry:
    """Build a boundary from a name and parameters.

    Accepted names: ``circle`` (R), ``annulus-boundary`` (R1, R2), ``segment``
    (p, q), ``square-boundary`` (the boundary of [-1,1] x [0,1]),
    ``appendix-gamma`` and ``appendix-sigma`` (eps).
    ``spec`` may also be a dict ``{"name": ..., **params}``.
    """
    if isinstance(spec, dict):
        params = {**{k: v for k, v in spec.items() if k != "name"}, **params}
        spec = spec["name"]
    name = str(spec).lower().replace("_", "-")
    if name == "circle":
        R = float(params.get("R", 1.0))
        return BoundaryGeometry("circle", (circle(R),), {"R": R})
    if name in ("annulus-boundary", "annulus"):
        R1, R2 = float(params.get("R1", 1.0)), float(params.get("R2", 2.0))
        if not 0 < R1 < R2:
            raise ValueError(f"annulus needs 0 < R1 < R2, got {R1}, {R2}")
        inner = circle(R1, clockwise=True)
        inner = Curve(f"circle({R1:g})-inner", inner.f, inner.df, inner.ddf, inner.t0, inner.t1, True)
        return BoundaryGeometry("annulus-boundary", (circle(R2), inner), {"R1": R1, "R2": R2})
    if name == "segment":
        p = params.get("p", (-1.0, 0.0))
        q = params.get("q", (1.0, 0.0))
        return BoundaryGeometry("segment", (segment(p, q),), {"p": tuple(p), "q": tuple(q)})
    if name in ("square-boundary", "box", "square"):
        corners = [(-1.0, 0.0), (1.0, 0.0), (1.0, 1.0), (-1.0, 1.0)]
        pieces = tuple(
            segment(corners[i], corners[(i + 1) % 4], name=f"side{i}") for i in range(4)
        )
        return BoundaryGeometry("square-boundary", pieces, {})
    if name == "appendix-gamma":
        eps = float(params.get("eps", APPENDIX_EPS))
        g = unit_speed_reparam(parabola(eps))
        g = _renamed(g, "appendix-gamma")
        return BoundaryGeometry("appendix-gamma", (g,), {"eps": eps})
    if name == "appendix-sigma":
        eps = float(params.get("eps", APPENDIX_EPS))
        return BoundaryGeometry("appendix-sigma", (appendix_sigma_closed_form(eps),), {"eps": eps})
    raise ValueError(f"unknown geometry {spec!r}")


def _renamed(curve, name):
    out = Curve(name, curve.f, curve.df, curve.ddf, curve.t0, curve.t1, curve.closed, curve.orientation)
    for attr in ("param_of", "base"):
        if hasattr(curve, attr):
            object.__setattr__(out, attr, getattr(curve, attr))
    return out


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


@dataclass
class QuadratureSet:
    """Nodes and positive weights on a boundary or a domain.

    Boundary rules also carry normals, curvature and the per-node parameter
    information used by the singular corrections (``piece``, ``panel``,
    ``param``, ``speed``).  ``structure`` describes exploitable layouts
    (``"trapezoid"``, ``"panels"``, ``"polar"``, ``"lattice"``).
    """

    nodes: np.ndarray
    weights: np.ndarray
    host: str
    structure: str
    p: float
    lam: float
    normals: Optional[np.ndarray] = None
    curvature: Optional[np.ndarray] = None
    speed: Optional[np.ndarray] = None
    param: Optional[np.ndarray] = None
    piece: Optional[np.ndarray] = None
    panel: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.weights)

    def validate(self):
        if not np.all(self.weights > 0):
            raise ValueError("quadrature weights must be positive")
        if self.nodes.shape != (len(self.weights), 2):
            raise ValueError("nodes/weights shape mismatch")
        if self.normals is not None and not np.allclose(np.hypot(*self.normals.T), 1.0, atol=1e-12):
            raise ValueError("normals are not unit vectors")
        return self

    def total(self):
        return float(np.sum(self.weights))


@dataclass(frozen=True)
class DomainRegion:
    """``kind`` in {disc, annulus, box, custom}; ``params`` e.g. R, R1/R2, bounds."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "annulus":
            R1, R2 = self.params.get("R1", 1.0), self.params.get("R2", 2.0)
            if not 0 < R1 < R2:
                raise ValueError(f"annulus needs 0 < R1 < R2, got {R1}, {R2}")
        if self.kind == "disc" and not self.params.get("R", 1.0) > 0:
            raise ValueError("disc radius must be positive")
        if self.kind not in ("disc", "annulus", "box", "custom"):
            raise ValueError(f"unknown domain kind {self.kind!r}")

    def area(self):
        if self.kind == "disc":
            return math.pi * self.params.get("R", 1.0) ** 2
        if self.kind == "annulus":
            return math.pi * (self.params.get("R2", 2.0) ** 2 - self.params.get("R1", 1.0) ** 2)
        if self.kind == "box":
            (x0, x1), (y0, y1) = self.bounds()
            return (x1 - x0) * (y1 - y0)
        raise ValueError("area of a custom region is unknown")

    def bounds(self):
        return self.params.get("bounds", ((-1.0, 1.0), (0.0, 1.0)))


def disc(R=1.0):
    return DomainRegion("disc", {"R": float(R)})


def annulus(R1=1.0, R2=2.0):
    return DomainRegion("annulus", {"R1": float(R1), "R2": float(R2)})


def box(bounds=((-1.0, 1.0), (0.0, 1.0))):
    return DomainRegion("box", {"bounds": tuple(tuple(map(float, b)) for b in bounds)})


def _check_density(p, lam):
    if p < 4:
        raise ValueError(f"points per wavelength must be >= 4, got {p}")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")


def target_spacing(p, lam):
    return 2.0 * math.pi / (p * lam)


def trapezoid_count(length, p, lam, minimum=64):
    n = max(int(math.ceil(length / target_spacing(p, lam))), minimum)
    return n + (n % 2)


def _panel_gap_fraction(order=PANEL_ORDER):
    x, _ = gauss_legendre(order)
    # spacing across a panel junction is the sum of both end gaps
    return max(np.max(np.diff(x)), 2 * x[0])


def panel_edges(curve: Curve, p, lam, order=PANEL_ORDER, grade=0, min_panels=2):
    """Uniform parameter panels sized for the spacing rule, optional end grading."""
    t = np.linspace(curve.t0, curve.t1, 2049)
    sp_max = float(np.max(curve.speed(t)))
    L_param = curve.t1 - curve.t0
    h = target_spacing(p, lam)
    n = max(min_panels, int(math.ceil(L_param * sp_max * _panel_gap_fraction(order) / h)))
    edges = np.linspace(curve.t0, curve.t1, n + 1)
    if grade > 0:
        first, last = edges[1] - edges[0], edges[-1] - edges[-2]
        left = curve.t0 + first * 0.5 ** np.arange(grade, 0, -1)
        right = curve.t1 - last * 0.5 ** np.arange(1, grade + 1)
        edges = np.unique(np.concatenate([edges, left, right]))
    return edges


def _panel_rule(curve, edges, order, piece_id, panel_offset):
    x, w = gauss_legendre(order)
    dt = np.diff(edges)
    t = (edges[:-1, None] + dt[:, None] * x[None, :]).ravel()
    wt = (dt[:, None] * w[None, :]).ravel()
    panel = np.repeat(np.arange(len(dt)) + panel_offset, order)
    return t, wt, panel


def _boundary_rule(geom: BoundaryGeometry, p, lam, rule, order, grade, n_closed=None, min_panels=2):
    pts, wts, nrm, kap, spd, prm, pcs, pnl = ([] for _ in range(8))
    panel_count = 0
    info = {"panel_edges": [], "order": order, "n_trap": [], "rules": []}
    structure = None
    for k, c in enumerate(geom.pieces):
        if c.closed and rule in ("default", "trapezoid"):
            n = trapezoid_count(c.length(), p, lam)
            if n_closed is not None:
                if n_closed < n:
                    raise ValueError(f"{n_closed} nodes under-resolve {c.name} (needs {n})")
                n = int(n_closed)
            t = c.t0 + (c.t1 - c.t0) * np.arange(n) / n
            wt = np.full(n, (c.t1 - c.t0) / n)
            panel = np.full(n, -1)
            info["n_trap"].append(n)
            info["panel_edges"].append(None)
            info["rules"].append("trapezoid")
            structure = "trapezoid" if structure in (None, "trapezoid") else "mixed"
        elif rule == "midpoint":
            L = c.length()
            n = max(int(math.ceil(L / target_spacing(p, lam))), 8)
            t = c.t0 + (c.t1 - c.t0) * (np.arange(n) + 0.5) / n
            wt = np.full(n, (c.t1 - c.t0) / n)
            panel = np.full(n, -1)
            info["n_trap"].append(n)
            info["panel_edges"].append(None)
            info["rules"].append("midpoint")
            structure = "midpoint" if structure in (None, "midpoint") else "mixed"
        else:
            edges = panel_edges(c, p, lam, order, grade=grade, min_panels=min_panels)
            t, wt, panel = _panel_rule(c, edges, order, k, panel_count)
            panel_count += len(edges) - 1
            info["panel_edges"].append(edges)
            info["n_trap"].append(None)
            info["rules"].append("panels")
            structure = "panels" if structure in (None, "panels") else "mixed"
        sp = c.speed(t)
        pts.append(c.point(t))
        wts.append(wt * sp)
        nrm.append(c.normal(t))
        kap.append(c.curvature(t))
        spd.append(sp)
        prm.append(t)
        pcs.append(np.full(t.size, k))
        pnl.append(panel)
    cat = np.concatenate
    return QuadratureSet(
        nodes=cat(pts),
        weights=cat(wts),
        host=geom.name,
        structure=structure,
        p=p,
        lam=lam,
        normals=cat(nrm),
        curvature=cat(kap),
        speed=cat(spd),
        param=cat(prm),
        piece=cat(pcs),
        panel=cat(pnl),
        info=info,
    )


def _radial_rule(r0, r1, p, lam, order=PANEL_ORDER):
    h = target_spacing(p, lam)
    n = max(1, int(math.ceil((r1 - r0) * _panel_gap_fraction(order) / h)))
    edges = np.linspace(r0, r1, n + 1)
    x, w = gauss_legendre(order)
    dr = np.diff(edges)
    r = (edges[:-1, None] + dr[:, None] * x).ravel()
    wr = (dr[:, None] * w).ravel()
    return r, wr


def _domain_rule(region: DomainRegion, p, lam, n_theta=None, rule="default"):
    if region.kind in ("disc", "annulus"):
        if region.kind == "disc":
            r0, r1 = 0.0, region.params.get("R", 1.0)
        else:
            r0, r1 = region.params.get("R1", 1.0), region.params.get("R2", 2.0)
        r, wr = _radial_rule(r0, r1, p, lam)
        n = n_theta or trapezoid_count(2 * math.pi * r1, p, lam)
        theta = 2 * math.pi * np.arange(n) / n
        info = {"radii": r, "radial_weights": wr, "n_theta": n, "R": r1, "r0": r0}
        return info, r.size * n
    if region.kind == "box":
        (x0, x1), (y0, y1) = region.bounds()
        h = target_spacing(p, lam)
        if rule in ("default", "midpoint", "lattice"):
            nx = max(int(math.ceil((x1 - x0) / h)), 8)
            ny = max(int(math.ceil((y1 - y0) / h)), 8)
            info = {"nx": nx, "ny": ny, "bounds": ((x0, x1), (y0, y1))}
            return info, nx * ny
        raise ValueError(f"unknown box rule {rule!r}")
    raise ValueError(f"no quadrature for domain kind {region.kind!r}")


def quadrature(
    target,
    p: float = 10.0,
    lam: float = 1.0,
    *,
    rule: str = "default",
    order: int = PANEL_ORDER,
    grade: int = 0,
    n_theta: Optional[int] = None,
    materialize: bool = True,
    min_panels: int = 2,
) -> QuadratureSet:
    """Quadrature on a boundary geometry or a domain region.

    Boundary: node spacing at most ``2 pi / (p lam)``.  Closed curves use the
    periodic trapezoid rule, open arcs Gauss-Legendre panels of ``order``
    points (``rule="midpoint"`` gives uniform midpoints instead).
    Domain: discs and annuli use radial Gauss panels times equispaced angles
    (``n_theta`` can be set to align with a boundary rule; on a boundary it
    fixes the node count of every closed piece); boxes use a
    cell-midpoint lattice.  Raises :class:`BudgetExceeded` past the node caps.
    """
    _check_density(p, lam)
    bcap, dcap = node_budget()
    if isinstance(target, BoundaryGeometry):
        q = _boundary_rule(target, p, lam, rule, order, grade, n_theta, min_panels)
        if len(q) > bcap:
            lam_limit = lam * bcap / len(q)
            raise BudgetExceeded("boundary", len(q), bcap, lam_limit)
        return q.validate()
    if isinstance(target, DomainRegion):
        info, count = _domain_rule(target, p, lam, n_theta, rule)
        if count > dcap:
            lam_limit = lam * math.sqrt(dcap / count)
            raise BudgetExceeded("domain", count, dcap, lam_limit)
        if target.kind in ("disc", "annulus"):
            r, wr, n = info["radii"], info["radial_weights"], info["n_theta"]
            theta = 2 * math.pi * np.arange(n) / n
            if materialize:
                nodes = np.stack(
                    [np.outer(r, np.cos(theta)).ravel(), np.outer(r, np.sin(theta)).ravel()], axis=1
                )
                weights = np.repeat(r * wr * 2 * math.pi / n, n)
            else:
                nodes = np.zeros((0, 2))
                weights = np.zeros(0)
            q = QuadratureSet(nodes, weights, target.kind, "polar", p, lam, info=info)
            q.info["count"] = count
            return q if not materialize else q.validate()
        (x0, x1), (y0, y1) = info["bounds"]
        nx, ny = info["nx"], info["ny"]
        hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
        xs = x0 + hx * (np.arange(nx) + 0.5)
        ys = y0 + hy * (np.arange(ny) + 0.5)
        info.update(xs=xs, ys=ys, hx=hx, hy=hy, count=count)
        if materialize:
            X, Y = np.meshgrid(xs, ys)  # row-major in y
            nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
            weights = np.full(count, hx * hy)
        else:
            nodes, weights = np.zeros((0, 2)), np.zeros(0)
        q = QuadratureSet(nodes, weights, "box", "lattice", p, lam, info=info)
        return q if not materialize else q.validate()
    raise TypeError(f"cannot build a quadrature on {type(target).__name__}")


def total_weight(q: QuadratureSet) -> float:
    """Sum of weights, also for unmaterialised structured rules."""
    if len(q.weights):
        return q.total()
    if q.structure == "polar":
        return float(np.sum(q.info["radii"] * q.info["radial_weights"]) * 2 * math.pi)
    if q.structure == "lattice":
        return q.info["hx"] * q.info["hy"] * q.info["count"]
    return 0.0
