"""Helmholtz kernels in two and three dimensions.

    K+(x - y) = (i/4) H0^(1)(lam r)              (d = 2)
    K+(x - y) = exp(i lam r) / (4 pi r)          (d = 3)
    K-        = conj(K+)                         (real lam)
    K~        = (K+ - K-) / (2 pi i) = Im(K+)/pi  (spectral measure)

The double layer kernel is the derivative in the source variable ``y`` along
the normal ``nu_y``.  In 2-D,

    d/dnu_y K+(x - y) = (i lam / 4) H1^(1)(lam r) <x - y, nu_y> / r,

and in 3-D

    d/dnu_y K+(x - y) = exp(i lam r) (1 - i lam r) <x - y, nu_y> / (4 pi r^3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import specfun

FAMILIES = ("SLP-kernel", "DLP-kernel", "spectral-measure-kernel")


class CoincidentPointsError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    family: str = "SLP-kernel"
    sign: str = "+"
    dimension: int = 2
    lam: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.sign not in ("+", "-"):
            raise ValueError("sign must be '+' (outgoing) or '-' (incoming)")
        if self.dimension not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")


def _diff(x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    d = x - y
    r = np.sqrt(np.sum(d * d, axis=-1))
    if np.any(r == 0):
        raise CoincidentPointsError("kernel evaluated at coincident points")
    return d, r


def slp_radial(lam, r, dimension=2):
    """Outgoing kernel as a function of distance (array input, r > 0)."""
    r = np.asarray(r, dtype=float)
    if dimension == 2:
        h0, _ = specfun.hankel01(lam * r)
        return 0.25j * h0
    return np.exp(1j * lam * r) / (4 * math.pi * r)


def dlp_radial(lam, r, dimension=2):
    """Radial factor g(r) with d/dnu_y K+ = g(r) <x - y, nu_y>."""
    r = np.asarray(r, dtype=float)
    if dimension == 2:
        _, h1 = specfun.hankel01(lam * r)
        return 0.25j * lam * h1 / r
    return np.exp(1j * lam * r) * (1 - 1j * lam * r) / (4 * math.pi * r**3)


def spectral_radial(lam, r, dimension=2):
    """K~ = Im(K+)/pi computed directly: J0(lam r)/(4 pi) or sin(lam r)/(4 pi^2 r)."""
    r = np.asarray(r, dtype=float)
    if dimension == 2:
        return specfun.bessel_j0_array(lam * r) / (4 * math.pi)
    return np.sin(lam * r) / (4 * math.pi**2 * r)


def eval_kernel(spec: KernelSpec, x, y):
    """Kernel value(s) at x - y; x and y broadcast over leading axes."""
    if spec.family == "DLP-kernel":
        raise ValueError("use eval_dlp_kernel for the double layer kernel")
    d, r = _diff(x, y)
    if d.shape[-1] != spec.dimension:
        raise ValueError(f"points must be {spec.dimension}-dimensional")
    if spec.family == "spectral-measure-kernel":
        out = spectral_radial(spec.lam, r, spec.dimension)
        return out if np.ndim(out) else float(out)
    out = slp_radial(spec.lam, r, spec.dimension)
    if spec.sign == "-":
        out = np.conj(out)
    return out if np.ndim(out) else complex(out)


def eval_dlp_kernel(lam, x, y, nu_y, dimension=2, sign="+"):
    """d/dnu_y of the outgoing (or incoming) kernel at x - y."""
    d, r = _diff(x, y)
    nu_y = np.asarray(nu_y, dtype=float)
    proj = np.sum(d * nu_y, axis=-1)
    out = dlp_radial(lam, r, dimension) * proj
    if sign == "-":
        out = np.conj(out)
    return out if np.ndim(out) else complex(out)


def hankel_kernel_3d(lam, r):
    """3-D kernel through the half-integer Hankel function.

    K = (i/4) (lam / (2 pi r))^{1/2} H^(1)_{1/2}(lam r); used to cross-check the
    closed form.
    """
    return 0.25j * math.sqrt(lam / (2 * math.pi * r)) * specfun.hankel(1, 0.5, lam * r)
