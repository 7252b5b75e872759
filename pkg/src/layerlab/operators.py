"""Nyström discretisations of the layer potentials and operators, and their norms.

Kinds
-----
SLP, DLP  boundary density -> field on a domain (or on a distinct curve)
SLO, DLO  boundary density -> trace on the same boundary
dE        spectral-measure kernel J0(lam r)/(4 pi), to a domain or a boundary

A dense :class:`OperatorMatrix` stores ``A`` with ``(A @ (w * f))`` approximating
the integral, ``w`` the source weights.  Norms are taken between the weighted
spaces, i.e. of ``W_t^{1/2} A W_s^{1/2}``.

Singular quadrature (d = 2):

* closed curves, trapezoid nodes: the kernel is split as
  ``M1(t,s) log(4 sin^2((t-s)/2)) + M2(t,s)`` and the log part is integrated
  with the trigonometric product weights (Kress splitting);
* open arcs, Gauss-Legendre panels: for every target close to a panel the
  panel's weights are recomputed by integrating kernel times the Lagrange
  basis on a geometrically graded sub-rule centred at the closest point.

Structured operators (:class:`CirculantOperator`, :class:`PolarOperator`,
:class:`LatticeOperator`) exploit aligned node layouts and expose the same
``scaled_matvec`` / ``scaled_rmatvec`` interface as the dense matrices.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.fft as sfft

from . import specfun
from .geometry import (
    BudgetExceeded,
    QuadratureSet,
    gauss_legendre,
    node_budget,
)
from .kernels import dlp_radial, slp_radial, spectral_radial

log = logging.getLogger(__name__)

KINDS = ("SLP", "DLP", "SLO", "DLO", "dE")
POTENTIALS = ("SLP", "DLP", "dE")
EULER_GAMMA = specfun.EULER_GAMMA


class AssemblyError(ValueError):
    pass


class NormNotConverged(RuntimeError):
    def __init__(self, estimate):
        self.estimate = estimate
        super().__init__(
            f"power iteration stopped after {estimate.iterations} iterations, "
            f"value {estimate.value:.6e}, residual {estimate.residual:.2e}"
        )


def _kind(kind):
    k = {"slp": "SLP", "dlp": "DLP", "slo": "SLO", "dlo": "DLO", "de": "dE"}.get(str(kind).lower())
    if k is None:
        raise ValueError(f"unknown operator kind {kind!r}; expected one of {KINDS}")
    return k


# ---------------------------------------------------------------------------
# kernel evaluation on node arrays
# ---------------------------------------------------------------------------


def kernel_values(kind, lam, x, y, nu_y=None, sign="+"):
    """Kernel at pairs (x[k], y[k]); kind SLP/SLO, DLP/DLO or dE."""
    d = x - y
    r = np.hypot(d[..., 0], d[..., 1])
    if kind in ("SLP", "SLO"):
        v = slp_radial(lam, r)
    elif kind in ("DLP", "DLO"):
        v = dlp_radial(lam, r) * np.sum(d * nu_y, axis=-1)
    else:
        return spectral_radial(lam, r).astype(complex)
    return np.conj(v) if sign == "-" else v


def pair_kernel(kind, lam, x, y, nu_y=None, sign="+", near_weight=None):
    """Full matrix of kernel values K(x_i - y_j)."""
    X = x[:, None, :]
    Y = y[None, :, :]
    N = None if nu_y is None else nu_y[None, :, :]
    d = X - Y
    r = np.hypot(d[..., 0], d[..., 1])
    if np.any(r == 0):
        raise AssemblyError("source and target nodes collide")
    if kind in ("SLP", "SLO"):
        v = slp_radial(lam, r)
    elif kind in ("DLP", "DLO"):
        v = dlp_radial(lam, r) * np.sum(d * N, axis=-1)
    else:
        v = spectral_radial(lam, r).astype(complex)
    if sign == "-" and kind != "dE":
        v = np.conj(v)
    if near_weight is not None:
        v = v * near_weight(r)
    return v


# ---------------------------------------------------------------------------
# dense matrices
# ---------------------------------------------------------------------------


@dataclass
class OperatorMatrix:
    kind: str
    lam: float
    source: QuadratureSet
    target: QuadratureSet
    entries: np.ndarray
    p: float
    sign: str = "+"
    note: str = ""

    def __post_init__(self):
        m, n = self.entries.shape
        if n != len(self.source.weights) or m != len(self.target.weights):
            raise AssemblyError("matrix shape does not match the quadrature sets")
        if not np.all(np.isfinite(self.entries)):
            raise AssemblyError("non-finite matrix entries")

    @property
    def shape(self):
        return self.entries.shape

    def apply(self, density):
        """Field on the target nodes; source weights applied to ``density``."""
        density = np.asarray(density)
        if density.shape[0] != self.shape[1]:
            raise ValueError(f"density has length {density.shape[0]}, expected {self.shape[1]}")
        return self.entries @ (self.source.weights.reshape((-1,) + (1,) * (density.ndim - 1)) * density)

    def scaled(self):
        """Dense ``W_t^{1/2} A W_s^{1/2}``."""
        return np.sqrt(self.target.weights)[:, None] * self.entries * np.sqrt(self.source.weights)[None, :]

    def scaled_matvec(self, v):
        ws = np.sqrt(self.source.weights)[:, None]
        wt = np.sqrt(self.target.weights)[:, None]
        return wt * (self.entries @ (ws * v))

    def scaled_rmatvec(self, u):
        ws = np.sqrt(self.source.weights)[:, None]
        wt = np.sqrt(self.target.weights)[:, None]
        return ws * (self.entries.conj().T @ (wt * u))

    def adjoint(self):
        """The L^2 adjoint, as a matrix acting with the target weights."""
        return OperatorMatrix(
            self.kind + "*", self.lam, self.target, self.source, self.entries.conj().T.copy(),
            self.p, self.sign, note="adjoint",
        )

    def save(self, path):
        save_matrix(path, self.entries, kind=self.kind, lam=self.lam, p=self.p)


MAGIC = b"LLMATRX1"


def save_matrix(path, entries, *, kind, lam, p):
    """Binary container: magic, uint32 header length, JSON header, data.

    The header is ``{"kind", "lambda", "dims": [m, n], "p"}``; data are the
    row-major complex entries as little-endian float64 (re, im) pairs.
    """
    entries = np.ascontiguousarray(entries, dtype=np.complex128)
    header = json.dumps(
        {"kind": kind, "lambda": float(lam), "dims": list(entries.shape), "p": float(p)}
    ).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(entries.astype("<c16").tobytes(order="C"))


def load_matrix(path):
    """Inverse of :func:`save_matrix`; returns ``(header, entries)``."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path} is not a layerlab matrix file")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n))
        m, k = header["dims"]
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != m * k:
        raise ValueError("matrix file is truncated")
    return header, data.reshape(m, k).astype(complex)


def _check_dense_budget(m, n):
    bcap, _ = node_budget()
    if m * n > bcap * bcap:
        raise BudgetExceeded("dense matrix", m * n, bcap * bcap)


# -- Kress splitting on closed curves ---------------------------------------


def kress_log_weights(N):
    """R_m, m = 0..N-1: trapezoid product weights for log(4 sin^2((t - s)/2))."""
    if N % 2:
        raise ValueError("Kress weights need an even number of nodes")
    n = N // 2
    c = np.zeros(N)
    c[1:n] = 1.0 / np.arange(1, n)
    s = (np.fft.ifft(c) * N).real  # sum_l cos(l m pi / n)/l
    m = np.arange(N)
    return -(2 * math.pi / n) * s - (math.pi / n**2) * np.where(m % 2 == 0, 1.0, -1.0)


def _closed_piece_matrix(kind, lam, q: QuadratureSet, idx, sign="+"):
    """Kress-corrected block for one closed piece; returns entries (before weights)."""
    x = q.nodes[idx]
    nu = q.normals[idx]
    sp = q.speed[idx]
    kap = q.curvature[idx]
    t = q.param[idx]
    N = len(idx)
    n = N // 2
    h = math.pi / n
    R = kress_log_weights(N)
    diff = (np.arange(N)[None, :] - np.arange(N)[:, None]) % N
    Rm = R[diff]
    d = x[:, None, :] - x[None, :, :]
    r = np.hypot(d[..., 0], d[..., 1])
    np.fill_diagonal(r, 1.0)
    logterm = np.log(4.0 * np.sin(0.5 * (t[:, None] - t[None, :])) ** 2 + np.eye(N))
    if kind == "dE":
        K = spectral_radial(lam, r).astype(complex)
        np.fill_diagonal(K, 1.0 / (4 * math.pi))
        return K
    if kind == "SLO":
        h0, _ = specfun.hankel01(lam * r)
        M = 0.25j * h0 * sp[None, :]
        M1 = -(1.0 / (4 * math.pi)) * h0.real * sp[None, :]
        M2 = M - M1 * logterm
        diag = (0.25j - (EULER_GAMMA + np.log(0.5 * lam * sp)) / (2 * math.pi)) * sp
        m1_diag = -sp / (4 * math.pi)  # J0(0) = 1
    else:  # DLO
        _, h1 = specfun.hankel01(lam * r)
        proj = np.sum(d * nu[None, :, :], axis=-1) / r
        M = 0.25j * lam * h1 * proj * sp[None, :]
        M1 = -(lam / (4 * math.pi)) * h1.real * proj * sp[None, :]
        M2 = M - M1 * logterm
        diag = -kap * sp / (4 * math.pi)
        m1_diag = 0.0
    np.fill_diagonal(M1, m1_diag)
    np.fill_diagonal(M2, diag)
    A = Rm * M1 + h * M2
    if sign == "-":
        A = A.conj()  # product weights are real
    w = q.weights[idx]
    return A / w[None, :]


# -- graded panel corrections on open arcs ----------------------------------


def _barycentric_weights(x):
    w = np.array([1.0 / np.prod(xj - np.delete(x, j)) for j, xj in enumerate(x)])
    return w / np.max(np.abs(w))


def _lagrange(xnodes, bw, u):
    """Lagrange basis of ``xnodes`` evaluated at ``u`` (shape (..., k))."""
    diff = u[..., None] - xnodes
    exact = np.abs(diff) < 1e-15
    diff = np.where(exact, 1.0, diff)
    terms = bw / diff
    L = terms / np.sum(terms, axis=-1, keepdims=True)
    hit = exact.any(axis=-1)
    if hit.any():
        L[hit] = exact[hit].astype(float)
    return L


GRADE_RATIO = 0.2
GRADE_LEVELS = 12
SUB_ORDER = 16


def _graded_rule(c, ratio=GRADE_RATIO, levels=GRADE_LEVELS, order=SUB_ORDER):
    """Nodes/weights on [0, 1] graded geometrically towards c (array of shape (P,))."""
    g, gw = gauss_legendre(order)
    # interval endpoints measured from c: 0, d r^L, ..., d r, d
    frac = np.concatenate([[0.0], ratio ** np.arange(levels, -1, -1)])  # increasing, ends at 1
    lo, hi = frac[:-1], frac[1:]
    sub = (lo[:, None] + (hi - lo)[:, None] * g[None, :]).ravel()
    subw = ((hi - lo)[:, None] * gw[None, :]).ravel()
    c = np.asarray(c)[:, None]
    right = c + (1.0 - c) * sub[None, :]
    left = c - c * sub[None, :]
    u = np.concatenate([left, right], axis=1)
    w = np.concatenate([c * subw[None, :], (1.0 - c) * subw[None, :]], axis=1)
    return u, w


def _closest_param(curve, a, b, x, t_seed, iters=8):
    t = t_seed.copy()
    for _ in range(iters):
        y = curve.f(t)
        d1 = curve.df(t)
        d2 = curve.ddf(t)
        g = np.sum((y - x) * d1, axis=1)
        gp = np.sum(d1 * d1, axis=1) + np.sum((y - x) * d2, axis=1)
        t = np.clip(t - g / gp, a, b)
    return t


def _panel_corrections(kind, lam, src: QuadratureSet, tgt_nodes, entries, geometry, sign="+",
                       self_map=None, near_factor=1.0, chunk_points=1_500_000):
    """Overwrite entries for (target, panel) pairs that are close.

    ``geometry`` supplies the curve objects; ``self_map[i]`` gives the source
    index coinciding with target ``i`` (or -1).
    """
    order = src.info["order"]
    xg, _ = gauss_legendre(order)
    bw = _barycentric_weights(xg)
    pairs = []  # (target, piece, panel_global, a, b, first_index)
    for k, edges in enumerate(src.info["panel_edges"]):
        if edges is None:
            continue
        curve = geometry.pieces[k]
        on_piece = np.nonzero(src.piece == k)[0]
        first_panel = int(src.panel[on_piece[0]])
        for pi in range(len(edges) - 1):
            a, b = edges[pi], edges[pi + 1]
            cols = on_piece[pi * order:(pi + 1) * order]
            probe_t = np.concatenate([[a], src.param[cols], [b]])
            probe = curve.f(probe_t)
            plen = float(np.sum(src.weights[cols]))
            d = np.hypot(tgt_nodes[:, None, 0] - probe[None, :, 0], tgt_nodes[:, None, 1] - probe[None, :, 1])
            dmin = d.min(axis=1)
            near = np.nonzero(dmin < near_factor * plen)[0]
            for i in near:
                seed = probe_t[int(np.argmin(d[i]))]
                pairs.append((i, k, first_panel + pi, a, b, cols[0], seed))
    if not pairs:
        return entries
    per_pair = 2 * (GRADE_LEVELS + 1) * SUB_ORDER
    chunk = max(1, chunk_points // per_pair)
    for start in range(0, len(pairs), chunk):
        block = pairs[start:start + chunk]
        by_piece = {}
        for j, pr in enumerate(block):
            by_piece.setdefault(pr[1], []).append(j)
        for k, js in by_piece.items():
            curve = geometry.pieces[k]
            ti = np.array([block[j][0] for j in js])
            a = np.array([block[j][3] for j in js])
            b = np.array([block[j][4] for j in js])
            col0 = np.array([block[j][5] for j in js])
            seed = np.array([block[j][6] for j in js])
            x = tgt_nodes[ti]
            if self_map is not None:
                own = self_map[ti]
                is_self = (own >= 0) & (src.piece[np.maximum(own, 0)] == k) & (
                    src.panel[np.maximum(own, 0)] == src.panel[col0]
                )
                seed = np.where(is_self, src.param[np.maximum(own, 0)], seed)
            else:
                is_self = np.zeros(len(js), bool)
            c_t = _closest_param(curve, a, b, x, seed)
            c_t = np.where(is_self, seed, c_t)
            cu = (c_t - a) / (b - a)
            u, w = _graded_rule(cu)
            s = a[:, None] + (b - a)[:, None] * u
            ys = curve.f(s.ravel()).reshape(s.shape + (2,))
            nus = curve.normal(s.ravel()).reshape(s.shape + (2,))
            sps = curve.speed(s.ravel()).reshape(s.shape)
            dd = x[:, None, :] - ys
            hit = np.hypot(dd[..., 0], dd[..., 1]) == 0.0
            if hit.any():  # sub-node rounded onto the target; its weight is ~1e-16
                w = np.where(hit, 0.0, w)
                ys = ys.copy()
                ys[hit] += 1e-9
            kv = kernel_values(kind, lam, x[:, None, :], ys, nus, sign)
            L = _lagrange(2 * xg - 1, bw, 2 * u - 1)  # (P, S, order)
            wts = np.einsum("ps,psj->pj", kv * sps * w * (b - a)[:, None], L)
            cols = col0[:, None] + np.arange(order)[None, :]
            entries[ti[:, None], cols] = wts / src.weights[cols]
    return entries


def assemble(kind, lam, source: QuadratureSet, target: Optional[QuadratureSet] = None, *,
             geometry=None, sign="+", near_weight: Optional[Callable] = None, p=None) -> OperatorMatrix:
    """Dense Nyström matrix of ``kind`` from ``source`` to ``target``.

    SLO/DLO need ``target`` to be ``source`` (or None).  For panel rules the
    boundary ``geometry`` is required for the singular corrections.
    ``near_weight(r)`` multiplies the kernel (used for near/far splits; no
    singular correction is applied then).
    """
    kind = _kind(kind)
    p = source.p if p is None else p
    if kind in ("SLO", "DLO") or (kind == "dE" and target is None):
        target = source if target is None else target
        if target is not source:
            raise AssemblyError(f"{kind} needs source and target to be the same boundary rule")
    if target is None:
        raise AssemblyError(f"{kind} needs a target quadrature")
    m, n = len(target), len(source)
    _check_dense_budget(m, n)
    same = target is source
    if same and kind in ("SLP", "DLP"):
        raise AssemblyError(f"{kind} targets coincide with the source nodes; use {kind[0]}LO")
    if "midpoint" in source.info.get("rules", ()) and same and kind != "dE":
        raise AssemblyError("midpoint boundary rules carry no singular correction")
    E = np.empty((m, n), dtype=complex)
    rows = max(1, ROW_BLOCK_ENTRIES // max(n, 1))
    for i0 in range(0, m, rows):
        sl = slice(i0, min(m, i0 + rows))
        E[sl] = _raw_block(kind, lam, target.nodes[sl], source, sign, near_weight,
                           diag_offset=i0 if same else None)
    if same and near_weight is None and kind != "dE":
        for k in np.unique(source.piece):
            if source.info["rules"][k] == "trapezoid":
                idx = np.nonzero(source.piece == k)[0]
                E[np.ix_(idx, idx)] = _closed_piece_matrix(kind, lam, source, idx, sign)
    if near_weight is None and kind != "dE" and np.any(source.panel >= 0):
        if geometry is None:
            if same:
                raise AssemblyError("panel-based SLO/DLO needs the boundary geometry")
        else:
            E = _panel_corrections(kind, lam, source, target.nodes, E, geometry, sign,
                                   self_map=np.arange(n) if same else None)
    return OperatorMatrix(kind, lam, source, target, E, p, sign)


ROW_BLOCK_ENTRIES = 2_000_000


def _raw_block(kind, lam, x, source, sign, near_weight, diag_offset=None):
    """Kernel rows for targets ``x``; the diagonal (when source is target) gets
    the continuous limit for dE and zero otherwise (to be corrected)."""
    d = x[:, None, :] - source.nodes[None, :, :]
    r = np.hypot(d[..., 0], d[..., 1])
    diag = None
    if diag_offset is not None:
        ii = np.arange(x.shape[0])
        diag = (ii, ii + diag_offset)
        r[diag] = 1.0
    if np.any(r < 1e-13):
        raise AssemblyError("node collision between source and target")
    if kind in ("SLP", "SLO"):
        v = slp_radial(lam, r)
    elif kind in ("DLP", "DLO"):
        v = dlp_radial(lam, r) * np.sum(d * source.normals[None, :, :], axis=-1)
    else:
        v = spectral_radial(lam, r).astype(complex)
    if sign == "-" and kind != "dE":
        v = v.conj()
    if near_weight is not None:
        if diag is not None:
            r[diag] = 0.0
        v = v * near_weight(r)
    if diag is not None:
        v[diag] = 1.0 / (4 * math.pi) if (kind == "dE" and near_weight is None) else 0.0
        if kind == "dE" and near_weight is not None:
            v[diag] = near_weight(np.zeros(1))[0] / (4 * math.pi)
    return v


# ---------------------------------------------------------------------------
# structured operators
# ---------------------------------------------------------------------------


class CirculantOperator:
    """SLO/DLO/dE on a circle with trapezoid nodes; diagonal in Fourier space."""

    def __init__(self, kind, lam, quad: QuadratureSet, sign="+", near_weight=None):
        kind = _kind(kind)
        if quad.structure != "trapezoid" or len(np.unique(quad.piece)) != 1:
            raise AssemblyError("circulant path needs a single circle with trapezoid nodes")
        self.kind, self.lam, self.source, self.target, self.sign = kind, lam, quad, quad, sign
        self.p = quad.p
        N = len(quad)
        R = float(np.mean(np.hypot(*quad.nodes.T)))
        self.R = R
        t = 2 * math.pi * np.arange(N) / N
        n = N // 2
        h = math.pi / n
        dist = 2 * R * np.abs(np.sin(0.5 * t))
        r = np.where(np.arange(N) == 0, 1.0, dist)
        if kind == "dE":
            row = spectral_radial(lam, r).astype(complex) * R * h
            row[0] = R * h / (4 * math.pi)
        elif near_weight is not None:
            if kind == "SLO":
                k0 = slp_radial(lam, r)
            else:
                k0 = dlp_radial(lam, r) * (-dist**2 / (2 * R))
            row = k0 * near_weight(dist) * R * h
            row[0] = 0.0
        else:
            Rw = kress_log_weights(N)
            logterm = np.log(4 * np.sin(0.5 * t) ** 2 + (np.arange(N) == 0))
            if kind == "SLO":
                h0, _ = specfun.hankel01(lam * r)
                M = 0.25j * h0 * R
                M1 = -(1 / (4 * math.pi)) * h0.real * R
                diag = (0.25j - (EULER_GAMMA + math.log(0.5 * lam * R)) / (2 * math.pi)) * R
                m1_diag = -R / (4 * math.pi)
            else:
                _, h1 = specfun.hankel01(lam * r)
                proj = -dist**2 / (2 * R) / r
                M = 0.25j * lam * h1 * proj * R
                M1 = -(lam / (4 * math.pi)) * h1.real * proj * R
                diag = -(1 / R) * R / (4 * math.pi)
                m1_diag = 0.0
            M2 = M - M1 * logterm
            M1[0] = m1_diag
            M2[0] = diag
            row = Rw * M1 + h * M2
        if sign == "-":
            row = row.conj()
        self.row = row  # c_m: (A W f)_i = sum_j c_{j-i} f_j
        self.symbol = np.fft.fft(row)  # eigenvalue of the mode exp(-i k theta)
        self.shape = (N, N)

    def modes(self):
        N = self.shape[0]
        return np.fft.fftfreq(N, 1.0 / N).astype(int)

    def apply(self, density):
        f = np.asarray(density)
        return np.fft.fft(self.symbol * np.fft.ifft(f, axis=0).T).T if f.ndim == 2 else np.fft.fft(
            self.symbol * np.fft.ifft(f)
        )

    def scaled_matvec(self, v):
        return np.fft.fft(self.symbol[:, None] * np.fft.ifft(v, axis=0), axis=0)

    def scaled_rmatvec(self, u):
        return np.fft.fft(self.symbol.conj()[:, None] * np.fft.ifft(u, axis=0), axis=0)

    def singular_values(self):
        return np.abs(self.symbol)

    def dense(self):
        N = self.shape[0]
        idx = (np.arange(N)[None, :] - np.arange(N)[:, None]) % N
        return self.row[idx] / self.source.weights[None, :]


class PolarOperator:
    """Potential from concentric circles (trapezoid, N nodes each) to a polar rule
    with the same N angles.  Each angular mode decouples."""

    def __init__(self, kind, lam, boundary: QuadratureSet, domain: QuadratureSet, sign="+",
                 near_weight=None, radii_chunk=64, oversample_at=16.0, max_oversample=256):
        kind = _kind(kind)
        if kind not in POTENTIALS:
            raise AssemblyError("polar path is for potentials (SLP, DLP, dE)")
        if domain.structure != "polar":
            raise AssemblyError("polar path needs a polar domain rule")
        N = domain.info["n_theta"]
        self.kind, self.lam, self.source, self.target, self.sign = kind, lam, boundary, domain, sign
        self.p = boundary.p
        self.N = N
        pieces = np.unique(boundary.piece)
        self.circles = []
        for k in pieces:
            idx = np.nonzero(boundary.piece == k)[0]
            if len(idx) != N:
                raise AssemblyError("boundary circles must carry the domain's angular count")
            rad = np.hypot(*boundary.nodes[idx].T)
            ang = np.mod(np.arctan2(boundary.nodes[idx, 1], boundary.nodes[idx, 0]), 2 * math.pi)
            slot = np.rint(ang * N / (2 * math.pi)).astype(int) % N
            if not np.allclose(ang, 2 * math.pi * slot / N, atol=1e-9) or len(np.unique(slot)) != N:
                raise AssemblyError("boundary nodes are not aligned with the polar angles")
            self.circles.append((idx, slot, float(np.mean(rad)), boundary.normals[idx], boundary.weights[idx]))
        self.radii = domain.info["radii"]
        self.rw = domain.info["radial_weights"]
        nc = len(self.circles)
        # sym[a, c, k]: field at (r_a, theta_i) from f = e^{i k theta} on circle c is sym * e^{i k theta_i}
        self.sym = np.empty((len(self.radii), nc, N), dtype=complex)
        for c, (idx, slot, R, nu, w) in enumerate(self.circles):
            wq = float(w[0])
            if not np.allclose(w, wq):
                raise AssemblyError("polar path needs equal boundary weights per circle")
            # outward-normal sign relative to the radial direction
            nsign = float(np.sign(np.mean(np.sum(nu * boundary.nodes[idx], axis=1))))
            # radii close to the circle see a nearly singular trapezoid sum; their
            # symbols are computed on an oversampled angular grid, which integrates
            # the kernel against the trigonometric interpolant of the density
            dist = np.abs(self.radii - R) * N / R
            over = np.ones(len(self.radii), dtype=int)
            close = dist < oversample_at
            over[close] = 2 ** np.ceil(np.log2(oversample_at / np.maximum(dist[close], 1e-3))).astype(int)
            over = np.minimum(over, max_oversample)
            freq = np.fft.fftfreq(N, 1.0 / N).astype(int)
            for m in np.unique(over):
                rows = np.nonzero(over == m)[0]
                Nf = N * int(m)
                thf = 2 * math.pi * np.arange(Nf) / Nf
                ys = R * np.stack([np.cos(thf), np.sin(thf)], axis=1)
                nus = nsign * ys / R
                for a0 in range(0, len(rows), radii_chunk):
                    sel = rows[a0:a0 + radii_chunk]
                    ra = self.radii[sel]
                    x = np.stack([ra, np.zeros_like(ra)], axis=1)
                    d = x[:, None, :] - ys[None, :, :]
                    r = np.hypot(d[..., 0], d[..., 1])
                    if np.any(r < 1e-13):
                        raise AssemblyError("domain radius coincides with a boundary circle")
                    if kind == "SLP":
                        K = slp_radial(lam, r)
                    elif kind == "DLP":
                        K = dlp_radial(lam, r) * np.sum(d * nus[None, :, :], axis=-1)
                    else:
                        K = spectral_radial(lam, r).astype(complex)
                    if sign == "-" and kind != "dE":
                        K = K.conj()
                    if near_weight is not None:
                        K = K * near_weight(r)
                    # sum_m K(theta_m) w exp(-i k theta_m), coarse modes only
                    full = np.fft.fft(K * (wq * N / Nf), axis=1)
                    self.sym[sel, c, :] = full[:, freq % Nf]
        self.shape = (len(self.radii) * N, len(boundary))
        self._tw = np.sqrt(self.radii * self.rw * 2 * math.pi / N)  # per-radius sqrt weight
        self._sw = [np.sqrt(c[4][0]) for c in self.circles]
        self._sw_nodes = np.sqrt(boundary.weights)

    def _mode_matrices(self):
        return self._tw[:, None, None] * self.sym / np.array(self._sw)[None, :, None]

    def singular_values(self):
        M = self._mode_matrices()  # (n_r, nc, N): per mode, the map C^nc -> C^{n_r}
        if M.shape[1] == 1:
            return np.sqrt(np.sum(np.abs(M[:, 0, :]) ** 2, axis=0))
        Mk = np.transpose(M, (2, 0, 1))
        return np.linalg.svd(Mk, compute_uv=False)[:, 0]

    def _to_modes(self, v):
        """Boundary vectors (len(boundary), b) -> mode coefficients (nc, N, b)."""
        out = []
        for idx, slot, *_ in self.circles:
            ordered = np.empty((self.N,) + v.shape[1:], dtype=complex)
            ordered[slot] = v[idx]
            out.append(np.fft.ifft(ordered, axis=0))  # f_j = sum_k F_k e^{i k theta_j}
        return np.stack(out)

    def _from_modes(self, F, n_total):
        out = np.empty((n_total,) + F.shape[2:], dtype=complex)
        for c, (idx, slot, *_) in enumerate(self.circles):
            vals = np.fft.fft(F[c], axis=0)
            out[idx] = vals[slot]
        return out

    def apply(self, density):
        density = np.asarray(density, dtype=complex)
        squeeze = density.ndim == 1
        v = density[:, None] if squeeze else density
        F = self._to_modes(v)  # (nc, N, b)
        G = np.einsum("ack,ckb->akb", self.sym, F)  # (n_r, N, b)
        u = np.fft.fft(G, axis=1)  # (n_r, N_theta, b)
        u = u.reshape(-1, v.shape[1])
        return u[:, 0] if squeeze else u

    def scaled_matvec(self, v):
        return np.repeat(self._tw, self.N)[:, None] * self.apply(v / self._sw_nodes[:, None])

    def rapply(self, u):
        """Conjugate transpose of :meth:`apply`."""
        b = u.shape[1]
        U = u.reshape(len(self.radii), self.N, b)
        Uh = np.fft.ifft(U, axis=1) * self.N  # adjoint of fft
        Fh = np.einsum("ack,akb->ckb", self.sym.conj(), Uh)
        out = np.empty((self.shape[1], b), dtype=complex)
        for c, (idx, slot, *_) in enumerate(self.circles):
            vals = np.fft.fft(Fh[c], axis=0) / self.N  # adjoint of ifft
            out[idx] = vals[slot]
        return out

    def scaled_rmatvec(self, u):
        return self.rapply(np.repeat(self._tw, self.N)[:, None] * u) / self._sw_nodes[:, None]


class LatticeOperator:
    """Potential from axis-aligned straight sources to a cell-midpoint lattice.

    Sources: the ``midpoint`` rule on segments lying on lines ``y = const`` or
    ``x = const`` with node positions on the lattice coordinates.  Every target
    row (or column) sees a Toeplitz matrix, applied by FFT.
    """

    def __init__(self, kind, lam, boundary: QuadratureSet, domain: QuadratureSet, sign="+",
                 near_weight=None, far=False):
        kind = _kind(kind)
        if domain.structure != "lattice":
            raise AssemblyError("lattice path needs a lattice domain rule")
        self.kind, self.lam, self.source, self.target, self.sign = kind, lam, boundary, domain, sign
        self.p = boundary.p
        xs, ys = domain.info["xs"], domain.info["ys"]
        self.xs, self.ys = xs, ys
        hx, hy = domain.info["hx"], domain.info["hy"]
        nx, ny = len(xs), len(ys)
        self.nx, self.ny = nx, ny
        self.lines = []
        for k in np.unique(boundary.piece):
            idx = np.nonzero(boundary.piece == k)[0]
            pts = boundary.nodes[idx]
            nu = boundary.normals[idx]
            w = boundary.weights[idx]
            if np.ptp(pts[:, 1]) < 1e-12:  # horizontal: along x
                pos = np.rint((pts[:, 0] - xs[0]) / hx).astype(int)
                if not np.allclose(xs[0] + pos * hx, pts[:, 0], atol=1e-9 * max(1, abs(xs[0]))):
                    raise AssemblyError("horizontal source nodes are off the lattice columns")
                axis, const, n_along, n_across, h_along = 0, pts[0, 1], nx, ny, hx
                across = ys
            elif np.ptp(pts[:, 0]) < 1e-12:
                pos = np.rint((pts[:, 1] - ys[0]) / hy).astype(int)
                if not np.allclose(ys[0] + pos * hy, pts[:, 1], atol=1e-9 * max(1, abs(ys[0]))):
                    raise AssemblyError("vertical source nodes are off the lattice rows")
                axis, const, n_along, n_across, h_along = 1, pts[0, 0], ny, nx, hy
                across = xs
            else:
                raise AssemblyError("lattice path needs axis-aligned straight sources")
            L = sfft.next_fast_len(2 * n_along - 1)
            lag = np.arange(-(n_along - 1), n_along)
            # kernel table: rows = across coordinate, cols = lag
            if axis == 0:
                dx = lag[None, :] * h_along + np.zeros((n_across, 1))
                dy = (across - const)[:, None] + np.zeros_like(dx)
            else:
                dy = lag[None, :] * h_along + np.zeros((n_across, 1))
                dx = (across - const)[:, None] + np.zeros_like(dy)
            r = np.hypot(dx, dy)
            nvec = nu[0]
            if not np.allclose(nu, nvec):
                raise AssemblyError("lattice sources must be straight")
            table = self._kernel(kind, lam, dx, dy, r, nvec, sign, near_weight, far)
            wq = w[0]
            if not np.allclose(w, wq):
                raise AssemblyError("lattice sources need uniform weights")
            circ = np.zeros((n_across, L), dtype=complex)
            circ[:, lag % L] = table * wq
            self.lines.append(dict(idx=idx, pos=pos, axis=axis, L=L, n_along=n_along,
                                   fhat=sfft.fft(circ, axis=1), w=wq))
        self.shape = (nx * ny, len(boundary))
        self._sw = np.sqrt(boundary.weights)
        self._tw = math.sqrt(hx * hy)

    @staticmethod
    def _kernel(kind, lam, dx, dy, r, nvec, sign, near_weight, far):
        out = np.zeros(r.shape, dtype=complex)
        if far:
            ok = r > 0
        else:
            ok = np.ones(r.shape, bool)
            if np.any(r == 0):
                raise AssemblyError("lattice target coincides with a source node")
        rr = r[ok]
        if kind == "SLP":
            v = slp_radial(lam, rr)
        elif kind == "DLP":
            v = dlp_radial(lam, rr) * (dx[ok] * nvec[0] + dy[ok] * nvec[1])
        else:
            v = spectral_radial(lam, rr).astype(complex)
        if sign == "-" and kind != "dE":
            v = v.conj()
        if near_weight is not None:
            v = v * near_weight(rr)
        out[ok] = v
        return out

    def apply(self, density):
        density = np.asarray(density, dtype=complex)
        squeeze = density.ndim == 1
        f = density[:, None] if squeeze else density
        b = f.shape[1]
        u = np.zeros((self.ny, self.nx, b), dtype=complex)
        for ln in self.lines:
            L, n_along = ln["L"], ln["n_along"]
            g = np.zeros((L, b), dtype=complex)
            g[ln["pos"]] = f[ln["idx"]]
            ghat = sfft.fft(g, axis=0)  # (L, b)
            for cols in self._column_chunks(ln, b):
                conv = sfft.ifft(ln["fhat"][:, :, None] * ghat[None, :, cols], axis=1)[:, :n_along, :]
                if ln["axis"] == 0:
                    u[:, :, cols] += conv  # (ny, nx, b)
                else:
                    u[:, :, cols] += np.transpose(conv, (1, 0, 2))  # conv is (nx, ny, b)
        u = u.reshape(self.nx * self.ny, b)
        return u[:, 0] if squeeze else u

    def rapply(self, field):
        """Adjoint of :meth:`apply` without weights (plain conjugate transpose)."""
        field = np.asarray(field, dtype=complex)
        b = field.shape[1]
        U = field.reshape(self.ny, self.nx, b)
        out = np.zeros((self.shape[1], b), dtype=complex)
        for ln in self.lines:
            L, n_along = ln["L"], ln["n_along"]
            V = U if ln["axis"] == 0 else np.transpose(U, (1, 0, 2))
            for cols in self._column_chunks(ln, b):
                pad = np.zeros((V.shape[0], L, cols.stop - cols.start), dtype=complex)
                pad[:, :n_along] = V[:, :, cols]
                corr = sfft.ifft(ln["fhat"].conj()[:, :, None] * sfft.fft(pad, axis=1), axis=1)
                g = corr.sum(axis=0)  # (L, b)
                out[ln["idx"], cols] += g[ln["pos"]]
        return out

    CHUNK_ENTRIES = 8_000_000

    def _column_chunks(self, ln, b):
        per = ln["fhat"].size
        step = max(1, self.CHUNK_ENTRIES // per)
        return [slice(j, min(b, j + step)) for j in range(0, b, step)]

    def scaled_matvec(self, v):
        return self._tw * self.apply(v / self._sw[:, None])

    def scaled_rmatvec(self, u):
        # T = tw A W_s^{1/2} where apply = A W_s  ->  T^H u = W_s^{-1/2} apply^H (tw u)
        return self.rapply(self._tw * u) / self._sw[:, None]


# ---------------------------------------------------------------------------
# norm estimation
# ---------------------------------------------------------------------------


@dataclass
class NormEstimate:
    value: float
    iterations: int
    residual: float
    p: float
    method: str = "power"
    refined: Optional[float] = None  # value at doubled p, when computed
    history: list = field(default_factory=list)

    @property
    def refinement_change(self):
        if self.refined is None:
            return None
        return abs(self.refined - self.value) / self.refined


def start_block(n, b):
    """Deterministic start vectors: all-ones first, then chirps; orthonormalised."""
    i = np.arange(n)
    cols = [np.ones(n, dtype=complex)]
    golden = (math.sqrt(5) - 1) / 2
    for j in range(1, b):
        a = golden * j
        cols.append(np.exp(1j * math.pi * a * (i * i) / n + 0.37j * j * i) * (1.0 + 0.25 * np.cos(j * i)))
    V = np.stack(cols, axis=1)
    Q, _ = np.linalg.qr(V)
    return Q


def operator_norm(A, tol=1e-8, maxiter=1000, block=8, exact=True, raise_on_fail=True) -> NormEstimate:
    """Largest singular value of ``W_t^{1/2} A W_s^{1/2}``.

    Block power iteration on the Gram operator with a Rayleigh-Ritz step; the
    iteration stops when ``|s_m - s_{m-1}| / s_m <= tol`` for the top Ritz
    value.  Structured operators diagonalised by the DFT return their exact
    largest singular value when ``exact`` is set.
    """
    p = getattr(A, "p", float("nan"))
    if exact and hasattr(A, "singular_values"):
        s = A.singular_values()
        return NormEstimate(float(np.max(s)), 0, 0.0, p, method="fourier")
    n = A.shape[1]
    b = max(1, min(block, n))
    V = start_block(n, b)
    prev = None
    hist = []
    for it in range(1, maxiter + 1):
        W = A.scaled_matvec(V)
        # Rayleigh-Ritz on span(V): W = T V
        _, s, vh = np.linalg.svd(W, full_matrices=False)
        sigma = float(s[0])
        hist.append(sigma)
        if sigma == 0.0:
            return NormEstimate(0.0, it, 0.0, p, history=hist)
        if prev is not None:
            res = abs(sigma - prev) / sigma
            if res <= tol:
                return NormEstimate(sigma, it, res, p, history=hist)
        prev = sigma
        Z = A.scaled_rmatvec(W @ vh.conj().T)  # T^H T applied to Ritz vectors
        V, _ = np.linalg.qr(Z)
    est = NormEstimate(sigma, maxiter, abs(sigma - hist[-2]) / sigma if len(hist) > 1 else float("inf"), p,
                       history=hist)
    if raise_on_fail:
        raise NormNotConverged(est)
    return est


def dense_norm(A):
    """Reference value through a full SVD (small matrices only)."""
    return float(np.linalg.svd(A.scaled(), compute_uv=False)[0])


def apply(A, density):
    """Weighted matrix-vector product: field on the target nodes."""
    return A.apply(density)


def weighted_l2(q_or_weights, values):
    w = q_or_weights.weights if isinstance(q_or_weights, QuadratureSet) else q_or_weights
    return float(np.sqrt(np.sum(w * np.abs(values) ** 2)))


# ---------------------------------------------------------------------------
# operator factory
# ---------------------------------------------------------------------------

SEGMENT_PAIR = (((0.0, -1.0), (0.0, 1.0)), ((0.5, 0.0), (1.5, 0.0)))


def geometry_spec(geometry):
    """Normalise a geometry argument to ``(name, params)``."""
    if isinstance(geometry, dict):
        params = {k: v for k, v in geometry.items() if k != "name"}
        return str(geometry["name"]).lower(), params
    return str(geometry).lower(), {}


def build_operator(kind, lam, geometry, p=10.0, *, sign="+", near_weight=None, structured=True):
    """Discretise ``kind`` for a named geometry, choosing the fastest exact layout.

    ``geometry`` names (or ``{"name": ..., **params}`` dicts):

    * ``circle`` / ``disc``: SLO, DLO on the circle; SLP, DLP, dE into the disc;
    * ``circle-boundary``: dE from the circle to itself;
    * ``annulus``: potentials from both circles into ``R1 < |x| < R2``;
    * ``box``: potentials from the boundary of [-1,1] x [0,1] into the box;
    * ``segment``: SLO, DLO, dE on one straight segment;
    * ``segment-pair``: potentials from {x1 = 0, |x2| < 1} to
      {1/2 < x1 < 3/2, x2 = 0}.
    """
    from .geometry import annulus, box, disc, make_geometry, quadrature, trapezoid_count

    kind = _kind(kind)
    name, params = geometry_spec(geometry)
    if name in ("circle", "disc", "circle-boundary"):
        R = float(params.get("R", 1.0))
        geom = make_geometry("circle", R=R)
        if kind in ("SLO", "DLO") or name == "circle-boundary":
            q = quadrature(geom, p, lam)
            if structured:
                return CirculantOperator(kind, lam, q, sign=sign, near_weight=near_weight)
            return assemble(kind, lam, q, geometry=geom, sign=sign, near_weight=near_weight, p=p)
        q = quadrature(geom, p, lam)
        d = quadrature(disc(R), p, lam, n_theta=len(q), materialize=structured is False)
        if structured:
            return PolarOperator(kind, lam, q, d, sign=sign, near_weight=near_weight)
        return assemble(kind, lam, q, d, sign=sign, near_weight=near_weight, p=p)
    if name == "annulus":
        R1, R2 = float(params.get("R1", 1.0)), float(params.get("R2", 2.0))
        geom = make_geometry("annulus-boundary", R1=R1, R2=R2)
        if kind not in POTENTIALS:
            raise AssemblyError("the annulus layout carries potentials only")
        N = trapezoid_count(2 * math.pi * R2, p, lam)
        q = quadrature(geom, p, lam, n_theta=N)
        d = quadrature(annulus(R1, R2), p, lam, n_theta=N, materialize=structured is False)
        if structured:
            return PolarOperator(kind, lam, q, d, sign=sign, near_weight=near_weight)
        return assemble(kind, lam, q, d, sign=sign, near_weight=near_weight, p=p)
    if name in ("box", "square-boundary", "square"):
        if kind not in POTENTIALS:
            raise AssemblyError("the box layout carries potentials only")
        geom = make_geometry("square-boundary")
        q = quadrature(geom, p, lam, rule="midpoint")
        d = quadrature(box(), p, lam, materialize=structured is False)
        if structured:
            return LatticeOperator(kind, lam, q, d, sign=sign, near_weight=near_weight)
        return assemble(kind, lam, q, d, sign=sign, near_weight=near_weight, p=p)
    if name == "segment":
        geom = make_geometry("segment", **params)
        q = quadrature(geom, p, lam)
        k = {"SLP": "SLO", "DLP": "DLO"}.get(kind, kind)
        return assemble(k, lam, q, geometry=geom, sign=sign, near_weight=near_weight, p=p)
    if name == "segment-pair":
        (a0, a1), (b0, b1) = params.get("source", SEGMENT_PAIR[0]), params.get("target", SEGMENT_PAIR[1])
        src = quadrature(make_geometry("segment", p=a0, q=a1), p, lam)
        tgt = quadrature(make_geometry("segment", p=b0, q=b1), p, lam)
        k = {"SLO": "SLP", "DLO": "DLP"}.get(kind, kind)
        return assemble(k, lam, src, tgt, sign=sign, near_weight=near_weight, p=p)
    raise AssemblyError(f"no operator layout for geometry {name!r}")
