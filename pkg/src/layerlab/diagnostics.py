"""Near/off-diagonal splitting of the layer kernels and the quasimode error.

The kernel is cut as ``K = zeta(lam r / M) K + (1 - zeta(lam r / M)) K``.  The
near part is small in operator norm; the far part ``v = S~ f`` is smooth and
solves the Helmholtz equation up to the error term

    (-Delta - lam^2) v = E f,

whose kernel lives on ``M/lam <= |x - y| <= 2M/lam``.  :func:`quasimode_error`
measures ``E f`` with a five-point Laplacian on a lattice.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .geometry import BudgetExceeded, QuadratureSet, node_budget
from .operators import LatticeOperator, NormEstimate, build_operator, operator_norm

DEFAULT_M = 4.0
_LOOKUP_POINTS = 4097
_QUANTUM = 2.0**-40  # zeta is rounded to this grid so that zeta + (1 - zeta) == 1 exactly


def _profile(z):
    """exp(1 - 1/(1 - (z-1)^2)) on 1 <= z < 2."""
    u = z - 1.0
    out = np.zeros_like(z)
    ok = u < 1.0
    out[ok] = np.exp(1.0 - 1.0 / (1.0 - u[ok] ** 2))
    return out


_ZG = np.linspace(1.0, 2.0, _LOOKUP_POINTS)
_SPLINE = CubicSpline(_ZG, _profile(_ZG))


@dataclass(frozen=True)
class CutoffSpec:
    """Plateau cutoff ``zeta``: 1 on |z| <= 1, 0 on |z| >= 2, scaled by ``lam / M``."""

    M: float = DEFAULT_M

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError("M must be positive")

    @staticmethod
    def zeta(z):
        z = np.abs(np.asarray(z, dtype=float))
        out = np.where(z <= 1.0, 1.0, 0.0)
        mid = (z > 1.0) & (z < 2.0)
        if np.any(mid):
            out[mid] = np.clip(_SPLINE(z[mid]), 0.0, 1.0)
        return np.round(out / _QUANTUM) * _QUANTUM

    def near(self, lam):
        """Near weight as a function of distance ``r``."""
        s = lam / self.M
        return lambda r: self.zeta(s * np.asarray(r))

    def far(self, lam):
        s = lam / self.M
        return lambda r: 1.0 - self.zeta(s * np.asarray(r))


def split_weights(cutoff: CutoffSpec, lam, x, y):
    """``(near, far)`` with ``near = zeta(lam |x - y| / M)`` and ``near + far = 1``."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.sqrt(np.sum(d * d, axis=-1))
    if np.any(r == 0):
        raise ValueError("split weights need x != y")
    near = cutoff.zeta(lam * r / cutoff.M)
    far = 1.0 - near
    if np.ndim(near) == 0:
        return float(near), float(far)
    return near, far


def _kind(kind):
    k = str(kind).upper().replace("_", "-")
    if k not in ("SLP-NEAR", "DLP-NEAR", "SLP-FAR", "DLP-FAR"):
        raise ValueError("kind must be SLP-near, DLP-near, SLP-far or DLP-far")
    base, part = k.split("-")
    return base, part.lower()


def near_diagonal_norm(kind, lam, M=DEFAULT_M, geometry="disc", p=10.0, **norm_kw) -> NormEstimate:
    """Norm of the cut kernel ``zeta(lam r/M) K`` (``-near``) or of its complement
    (``-far``) from the boundary into the domain of ``geometry``."""
    if lam < 20:
        raise ValueError("near-diagonal norms need lambda >= 20")
    base, part = _kind(kind)
    cut = CutoffSpec(M)
    w = cut.near(lam) if part == "near" else cut.far(lam)
    A = build_operator(base, lam, geometry, p, near_weight=w)
    return operator_norm(A, **norm_kw)


@dataclass
class DiagnosticReport:
    lam: float
    M: float
    near_norm: float
    far_norm: float
    full_norm: float
    quasimode_residual: Optional[float] = None
    collar_residual: Optional[float] = None
    kind: str = "SLP"
    geometry: str = "disc"
    p: float = 10.0

    def to_json(self, path=None):
        keys = ("lam", "M", "near_norm", "far_norm", "quasimode_residual", "collar_residual")
        d = {("lambda" if k == "lam" else k): getattr(self, k) for k in keys}
        d.update(kind=self.kind, geometry=self.geometry, p=self.p, full_norm=self.full_norm)
        text = json.dumps(d, indent=2, ensure_ascii=False)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text


def diagnose(lam, M=DEFAULT_M, kind="SLP", geometry="disc", p=10.0, quasimode=True, h=None):
    """Near, far and full norms for one lambda plus the quasimode residual of a
    fixed bump density on a straight segment."""
    near = near_diagonal_norm(f"{kind}-near", lam, M, geometry, p).value
    far = near_diagonal_norm(f"{kind}-far", lam, M, geometry, p).value
    full = operator_norm(build_operator(kind, lam, geometry, p)).value
    rep = DiagnosticReport(lam, M, near, far, full, kind=kind, geometry=str(geometry), p=p)
    if quasimode:
        q = quasimode_error(lam, M, h=h)
        rep.quasimode_residual = q.total / q.f_norm
        rep.collar_residual = q.collar / q.f_norm
    return rep


# ---------------------------------------------------------------------------
# quasimode error
# ---------------------------------------------------------------------------


@dataclass
class QuasimodeResult:
    """L2 norms of ``(-Delta_h - lam^2) v`` on the grid interior.

    ``collar``: points within ``4M/lam`` of the segment, ``away``: the rest
    (pure finite-difference error), ``total``: both together.
    """

    lam: float
    M: float
    h: float
    total: float
    collar: float
    away: float
    f_norm: float
    fd_budget: float  # lam^4 h^2 ||f||, the consistency scale of the 5-point stencil
    residual_field: Optional[np.ndarray] = None
    grid: Optional[tuple] = None
    extras: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.total)


def default_density(x1, a, b, lam, modulated=False):
    from .examples import bump

    c, half = 0.5 * (a + b), 0.5 * (b - a)
    f = bump((x1 - c) / half) / math.sqrt(half)
    return f * np.exp(1j * lam * x1) if modulated else f.astype(complex)


def quasimode_error(lam, M=DEFAULT_M, f=None, h=None, segment=(-0.25, 0.25), margin=None,
                    keep_field=False) -> QuasimodeResult:
    """Quasimode error of the far part of the single layer potential.

    The source is the segment ``[a, b] x {0}`` carrying the midpoint rule with
    spacing ``h`` (default ``1/(20 lam)``); the lattice has the same spacing
    and extends ``margin`` (default ``5M/lam``) beyond the segment, so the
    error kernel's support is inside the grid.  ``f`` is a callable of ``x1``
    or an array on the boundary nodes (default: unit-norm bump).
    """
    h = 1.0 / (20.0 * lam) if h is None else float(h)
    if h > 1.0 / (20.0 * lam) * (1 + 1e-12):
        raise ValueError("grid spacing must satisfy h <= 1/(20 lam)")
    margin = 5.0 * M / lam if margin is None else float(margin)
    if margin < 2.0 * M / lam:
        raise ValueError("margin must be at least 2M/lam")
    a, b = map(float, segment)
    nb = int(math.ceil((b - a) / h * (1 - 1e-12)))
    h = (b - a) / nb
    m = int(math.ceil(margin / h))
    nx, ny = nb + 2 * m, 2 * m
    _, dcap = node_budget()
    if nx * ny > dcap:
        raise BudgetExceeded("quasimode grid", nx * ny, dcap, lam * math.sqrt(dcap / (nx * ny)))
    x1 = a + h * (np.arange(nb) + 0.5)
    nodes = np.stack([x1, np.zeros(nb)], axis=1)
    p_eff = 2 * math.pi / (lam * h)
    bq = QuadratureSet(nodes, np.full(nb, h), "segment", "midpoint", p_eff, lam,
                       normals=np.tile([0.0, -1.0], (nb, 1)), curvature=np.zeros(nb),
                       speed=np.ones(nb), param=x1, piece=np.zeros(nb, int), panel=np.full(nb, -1),
                       info={"rules": ["midpoint"]})
    xs = a - m * h + h * (np.arange(nx) + 0.5)
    ys = -m * h + h * (np.arange(ny) + 0.5)
    dq = QuadratureSet(np.zeros((0, 2)), np.zeros(0), "grid", "lattice", p_eff, lam,
                       info=dict(nx=nx, ny=ny, xs=xs, ys=ys, hx=h, hy=h, count=nx * ny,
                                 bounds=((xs[0] - h / 2, xs[-1] + h / 2), (ys[0] - h / 2, ys[-1] + h / 2))))
    if f is None:
        fv = default_density(x1, a, b, lam)
    elif callable(f):
        fv = np.asarray(f(x1), dtype=complex)
    else:
        fv = np.asarray(f, dtype=complex)
    f_norm = float(np.sqrt(h * np.sum(np.abs(fv) ** 2)))
    if f_norm == 0.0:
        return QuasimodeResult(lam, M, h, 0.0, 0.0, 0.0, 0.0, 0.0)
    op = LatticeOperator("SLP", lam, bq, dq, near_weight=CutoffSpec(M).far(lam), far=True)
    v = op.apply(fv).reshape(ny, nx)
    lap = (v[2:, 1:-1] + v[:-2, 1:-1] + v[1:-1, 2:] + v[1:-1, :-2] - 4.0 * v[1:-1, 1:-1]) / (h * h)
    res = -lap - lam * lam * v[1:-1, 1:-1]
    X, Y = np.meshgrid(xs[1:-1], ys[1:-1])
    dist = np.hypot(np.maximum(np.maximum(a - X, X - b), 0.0), Y)
    collar = dist < 4.0 * M / lam
    e2 = np.abs(res) ** 2 * h * h
    c2, a2 = float(np.sum(e2[collar])), float(np.sum(e2[~collar]))
    out = QuasimodeResult(lam, M, h, math.sqrt(c2 + a2), math.sqrt(c2), math.sqrt(a2), f_norm,
                          lam**4 * h * h * f_norm)
    if keep_field:
        out.residual_field, out.grid = res, (xs[1:-1], ys[1:-1], x1)
    return out


def annulus_fraction(result: QuasimodeResult, source_x):
    """Share of the residual mass in ``M/lam <= |x - y| <= 2M/lam`` around the
    boundary point ``(source_x, 0)`` (needs ``keep_field=True``)."""
    xs, ys, _ = result.grid
    X, Y = np.meshgrid(xs, ys)
    r = np.hypot(X - source_x, Y)
    lo, hi = result.M / result.lam, 2 * result.M / result.lam
    # one grid cell of slack on both edges of the band
    band = (r >= lo - result.h) & (r <= hi + result.h)
    e2 = np.abs(result.residual_field) ** 2
    return float(np.sum(e2[band]) / np.sum(e2))


def to_json(report: DiagnosticReport, path=None):
    return report.to_json(path)
