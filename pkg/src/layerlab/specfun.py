"""Bessel and Hankel functions of integer and half-integer order, real argument.

Two engines live here:

* a scalar engine for arbitrary order ``0 <= nu <~ 2000`` (ascending series for
  small arguments, Miller backward recurrence with sum-rule / closed-form
  normalisation otherwise, Neumann series or Hankel asymptotics for ``Y``,
  forward recurrence for higher ``Y`` orders);
* a vectorised engine for orders 0 and 1 used by the dense kernel assembly.

Nothing here depends on an external special-function library.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

EULER_GAMMA = 0.57721566490153286061
TWO_OVER_PI = 2.0 / math.pi

#: validated window of the scalar engine
MAX_ORDER = 2000.0
MAX_ARG = 1.0e3

_SERIES_MAX_ARG = 2.0
_ASYMP_MIN_ARG = 25.0
_RESCALE = 1.0e200
_LOG10_RESCALE = 200
_UNDERFLOW = 1.0e-300


class SpecfunError(ArithmeticError):
    """Base class for special-function failures."""


class BesselUnderflowError(SpecfunError):
    """|J_nu(x)| is below 1e-300; carries the base-10 exponent that was found."""

    def __init__(self, nu, x, log10_abs):
        self.nu, self.x, self.log10_abs = nu, x, log10_abs
        super().__init__(f"J_{nu}({x}) underflows: |J| ~ 1e{log10_abs:.1f}")


class BesselOverflowError(SpecfunError):
    """|Y_nu(x)| exceeds the floating point range."""


class BesselZeroError(SpecfunError):
    """Root refinement failed; ``bracket`` is the last known sign-change interval."""

    def __init__(self, msg, bracket):
        self.bracket = bracket
        super().__init__(f"{msg} (bracket {bracket})")


class OutsideValidatedWindow(UserWarning):
    pass


def check_order(nu) -> float:
    """Return ``nu`` as float after checking it is a non-negative (half-)integer."""
    nu = float(nu)
    if nu < 0 or not float(2 * nu).is_integer():
        raise ValueError(f"order must be a non-negative integer or half-integer, got {nu}")
    return nu


def _check_arg(x) -> float:
    x = float(x)
    if not x > 0 or not math.isfinite(x):
        raise ValueError(f"argument must be positive and finite, got {x}")
    return x


def _window(nu, x):
    if nu > MAX_ORDER or x > MAX_ARG:
        warnings.warn(
            f"(nu={nu}, x={x}) lies outside the validated window "
            f"nu <= {MAX_ORDER:g}, x <= {MAX_ARG:g}",
            OutsideValidatedWindow,
            stacklevel=3,
        )


# ---------------------------------------------------------------------------
# scalar engine
# ---------------------------------------------------------------------------


def _series_j(nu, x):
    """Ascending series, returned as (value, log10|value|) to survive underflow."""
    q = -0.25 * x * x
    term, total, k = 1.0, 1.0, 0
    while True:
        k += 1
        term *= q / (k * (nu + k))
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    log10_pref = (nu * math.log(0.5 * x) - math.lgamma(nu + 1.0)) / math.log(10.0)
    if total == 0.0:
        return 0.0, -math.inf
    log10_abs = log10_pref + math.log10(abs(total))
    if log10_abs < -307:
        return 0.0, log10_abs
    return math.copysign(10.0**log10_pref * abs(total), total), log10_abs


def _sweep(nu, x, extra=1):
    """Unnormalised backward recurrence down to order frac(nu) (or -1/2).

    Returns ``(orders, values, deficit)``: ``values[i] * 1e-200**deficit[i]`` is
    proportional to J_{orders[i]}(x) with a common constant.
    """
    frac = nu - math.floor(nu)
    m = max(nu + extra, x)
    start = int(m + 20.0 * m ** (1.0 / 3.0) + 30.0)
    start += start % 2
    lowest = -1 if frac > 0 else 0
    n_total = start - lowest + 1
    values = np.empty(n_total)
    at_scale = np.empty(n_total, dtype=int)
    f_hi, f = 0.0, 1e-30
    n_scales = 0
    for i, n in enumerate(range(start, lowest - 1, -1)):
        values[i] = f
        at_scale[i] = n_scales
        if n == lowest:
            break
        order = n + frac
        f_hi, f = f, (2.0 * order / x) * f - f_hi
        if abs(f) > _RESCALE:
            f /= _RESCALE
            f_hi /= _RESCALE
            n_scales += 1
    orders = np.arange(start, lowest - 1, -1) + frac
    return orders[::-1], values[::-1], (n_scales - at_scale)[::-1]


def _miller(nu, x, extra=1):
    """Normalised J_nu .. J_{nu+extra} via backward recurrence.

    Returns ``(values, log10_scale, base)``: ``values[i] * 10**log10_scale`` is
    J_{nu+i}(x).  For integer orders ``base`` holds J_0, J_1 and the two
    Neumann sums needed for Y_0, Y_1; it is ``None`` for half-integers.
    """
    orders, vals, deficit = _sweep(nu, x, extra)
    # bring every entry to the final scale; two or more rescales back is below
    # 1e-200 relative and flushes to zero
    v = vals * np.power(1.0 / _RESCALE, np.minimum(deficit, 2))
    frac = nu - math.floor(nu)
    if frac > 0:
        c = math.sqrt(2.0 / (math.pi * x))
        jm, jp = c * math.cos(x), c * math.sin(x)  # J_{-1/2}, J_{1/2}
        norm = jm / v[0] if abs(jm) >= abs(jp) else jp / v[1]
        base = None
        i0 = int(round(nu + 0.5))
    else:
        n = np.arange(len(v))
        k = n // 2
        even = (n % 2 == 0) & (n > 0)
        norm = 1.0 / (v[0] + 2.0 * v[even].sum())
        sign = np.where(k % 2 == 0, 1.0, -1.0)
        s_y0 = np.sum(sign[even] * v[even] / k[even])
        # sum_k (-1)^k (J_{2k-1} - J_{2k+1}) / k over odd n = 2k - 1
        odd = n % 2 == 1
        kk = (n[odd] + 1) // 2
        nxt = np.append(v, 0.0)[n[odd] + 2]
        s_y1 = np.sum(np.where(kk % 2 == 0, 1.0, -1.0) * (v[odd] - nxt) / kk)
        base = (v[0] * norm, v[1] * norm, s_y0 * norm, s_y1 * norm)
        i0 = int(nu)
    raw = vals[i0 : i0 + extra + 1] * norm
    d = deficit[i0 : i0 + extra + 1]
    log_scale = -_LOG10_RESCALE * int(d.max())
    values = [float(r) * 10.0 ** (_LOG10_RESCALE * (int(d.max()) - int(e))) for r, e in zip(raw, d)]
    return values, log_scale, base


def _j_pair(nu, x):
    """(J_nu, J_{nu+1}, log10 scale) with values scaled by 10**scale."""
    if x <= _SERIES_MAX_ARG:
        a, la = _series_j(nu, x)
        b, lb = _series_j(nu + 1.0, x)
        if la >= -300:
            return a, b, 0
        # deep underflow: express both relative to J_nu's exponent
        sa, sb = _series_scaled(nu, x), _series_scaled(nu + 1.0, x)
        shift = math.floor(sa[1])
        return sa[0] * 10.0 ** (sa[1] - shift), sb[0] * 10.0 ** (sb[1] - shift), shift
    vals, log_scale, _ = _miller(nu, x, extra=1)
    return vals[0], vals[1], log_scale


def _series_scaled(nu, x):
    q = -0.25 * x * x
    term, total, k = 1.0, 1.0, 0
    while True:
        k += 1
        term *= q / (k * (nu + k))
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    log10_pref = (nu * math.log(0.5 * x) - math.lgamma(nu + 1.0)) / math.log(10.0)
    return math.copysign(1.0, total), log10_pref + math.log10(abs(total))


def _finish(value, log_scale, nu, x):
    if value == 0.0:
        return 0.0
    log10_abs = math.log10(abs(value)) + log_scale
    if log10_abs < math.log10(_UNDERFLOW):
        raise BesselUnderflowError(nu, x, log10_abs)
    half = log_scale // 2  # two factors so that 10**log_scale itself never underflows
    return value * 10.0**half * 10.0 ** (log_scale - half)


def bessel_j(nu, x) -> float:
    """J_nu(x) for non-negative integer or half-integer ``nu`` and ``x > 0``.

    Raises :class:`BesselUnderflowError` when ``|J_nu(x)| < 1e-300``.
    """
    nu, x = check_order(nu), _check_arg(x)
    _window(nu, x)
    if nu == 0.5:
        return math.sqrt(2.0 / (math.pi * x)) * math.sin(x)
    a, _, s = _j_pair(nu, x)
    return _finish(a, s, nu, x)


def bessel_j_deriv(nu, x) -> float:
    """J'_nu(x) = (nu/x) J_nu(x) - J_{nu+1}(x)."""
    nu, x = check_order(nu), _check_arg(x)
    _window(nu, x)
    a, b, s = _j_pair(nu, x)
    return _finish((nu / x) * a - b, s, nu, x)


def bessel_j_and_deriv(nu, x):
    nu, x = check_order(nu), _check_arg(x)
    _window(nu, x)
    a, b, s = _j_pair(nu, x)
    return _finish(a, s, nu, x), _finish((nu / x) * a - b, s, nu, x)


def _hankel_asymptotic(nu, x):
    """(J_nu, Y_nu) from the large-argument Hankel expansion (small nu only)."""
    mu = 4.0 * nu * nu
    p, q = 1.0, 0.0
    term = 1.0
    k = 0
    while True:
        k += 1
        term *= (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if k % 4 == 1:
            q += term
        elif k % 4 == 2:
            p -= term
        elif k % 4 == 3:
            q -= term
        else:
            p += term
        if abs(term) < 1e-17 or k > 60:
            break
    chi = x - (0.5 * nu + 0.25) * math.pi
    c = math.sqrt(2.0 / (math.pi * x))
    return (
        c * (p * math.cos(chi) - q * math.sin(chi)),
        c * (p * math.sin(chi) + q * math.cos(chi)),
    )


def _y01(x):
    """(J0, J1, Y0, Y1) for the integer-order Y seed."""
    if x >= _ASYMP_MIN_ARG:
        j0, y0 = _hankel_asymptotic(0.0, x)
        j1, y1 = _hankel_asymptotic(1.0, x)
        return j0, j1, y0, y1
    _, _, base = _miller(0.0, x, extra=1)
    j0, j1, s_y0, s_y1 = base
    lg = math.log(0.5 * x) + EULER_GAMMA
    y0 = TWO_OVER_PI * (lg * j0 - 2.0 * s_y0)
    y1 = TWO_OVER_PI * (lg * j1 - j0 / x + s_y1)
    return j0, j1, y0, y1


def _y_pair(nu, x):
    """(Y_nu, Y_{nu+1}) by forward recurrence from closed forms / Y0, Y1."""
    if nu - math.floor(nu) > 0:
        c = math.sqrt(2.0 / (math.pi * x))
        ym, y = c * math.sin(x), -c * math.cos(x)  # Y_{-1/2}, Y_{1/2}
        order = 0.5
    else:
        _, _, ym, y = _y01(x)  # Y0, Y1
        order = 1.0
        if nu == 0.0:
            return ym, y
    while order < nu + 1.0 - 1e-12:
        ym, y = y, (2.0 * order / x) * y - ym
        order += 1.0
        if not math.isfinite(y):
            raise BesselOverflowError(f"Y_{order}({x}) overflows")
    return ym, y


def bessel_y(nu, x) -> float:
    """Y_nu(x) (Weber function)."""
    nu, x = check_order(nu), _check_arg(x)
    _window(nu, x)
    return _y_pair(nu, x)[0]


def bessel_y_deriv(nu, x) -> float:
    nu, x = check_order(nu), _check_arg(x)
    _window(nu, x)
    y, y1 = _y_pair(nu, x)
    return (nu / x) * y - y1


def hankel(kind, nu, x) -> complex:
    """Hankel function H^(1)_nu(x) = J + iY, or H^(2) = conj(H^(1)) for real x."""
    if kind not in (1, 2):
        raise ValueError("kind must be 1 or 2")
    nu, x = check_order(nu), _check_arg(x)
    _window(nu, x)
    if nu == 0.5:
        c = math.sqrt(2.0 / (math.pi * x))
        h1 = complex(c * math.sin(x), -c * math.cos(x))
    else:
        a, _, s = _j_pair(nu, x)
        try:
            j = _finish(a, s, nu, x)
        except BesselUnderflowError:
            j = 0.0  # negligible next to Y, which is ~1/|J| there
        h1 = complex(j, _y_pair(nu, x)[0])
    return h1 if kind == 1 else h1.conjugate()


def hankel_deriv(kind, nu, x) -> complex:
    nu, x = check_order(nu), _check_arg(x)
    h = complex(bessel_j_deriv(nu, x), bessel_y_deriv(nu, x))
    return h if kind == 1 else h.conjugate()


def jn_sequence(nmax: int, x: float) -> np.ndarray:
    """J_0(x) .. J_nmax(x) from a single backward sweep.

    Entries that would underflow raise :class:`BesselUnderflowError`.
    """
    x = _check_arg(x)
    nmax = int(nmax)
    m = max(nmax + 1, x)
    start = int(m + 20.0 * m ** (1.0 / 3.0) + 30.0)
    start += start % 2
    out = np.zeros(nmax + 1)
    scale = np.zeros(nmax + 1, dtype=int)
    f_hi, f = 0.0, 1e-30
    s_even, n_scales = 0.0, 0
    for n in range(start, -1, -1):
        if n <= nmax:
            out[n] = f
            scale[n] = n_scales
        if n % 2 == 0 and n > 0:
            s_even += f
        if n == 0:
            break
        f_hi, f = f, (2.0 * n / x) * f - f_hi
        if abs(f) > _RESCALE:
            f /= _RESCALE
            f_hi /= _RESCALE
            s_even /= _RESCALE
            n_scales += 1
    norm = 1.0 / (f + 2.0 * s_even)
    log10_extra = -_LOG10_RESCALE * (n_scales - scale).astype(float)
    with np.errstate(divide="ignore"):
        log10_abs = np.log10(np.abs(out * norm)) + log10_extra
    bad = log10_abs < math.log10(_UNDERFLOW)
    if np.any(bad):
        n_bad = int(np.argmax(bad))
        raise BesselUnderflowError(n_bad, x, float(log10_abs[n_bad]))
    return out * norm * 10.0**log10_extra


def yn_sequence(nmax: int, x: float) -> np.ndarray:
    """Y_0(x) .. Y_nmax(x) by forward recurrence."""
    x = _check_arg(x)
    _, _, y0, y1 = _y01(x)
    out = np.empty(int(nmax) + 1)
    out[0] = y0
    if nmax >= 1:
        out[1] = y1
    for n in range(1, int(nmax)):
        out[n + 1] = (2.0 * n / x) * out[n] - out[n - 1]
    if not np.all(np.isfinite(out)):
        raise BesselOverflowError(f"Y_n({x}) overflows below n={nmax}")
    return out


def circle_modes(nmax: int, x: float):
    """(J_k(x), J'_k(x), H_k(x), H'_k(x)) for k = 0..nmax as arrays."""
    j = jn_sequence(nmax + 1, x)
    y = yn_sequence(nmax + 1, x)
    k = np.arange(nmax + 1)
    jd = (k / x) * j[:-1] - j[1:]
    yd = (k / x) * y[:-1] - y[1:]
    h = j[:-1] + 1j * y[:-1]
    hd = jd + 1j * yd
    return j[:-1], jd, h, hd


# ---------------------------------------------------------------------------
# zeros
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BesselZero:
    order: float
    index: int
    kind: str  # "J" or "Jprime"
    location: float
    residual: float


def _airy_zero(s, prime=False):
    """|a_s| (or |a'_s|) from the standard large-s expansion; adequate as a seed."""
    if prime:
        t = 3.0 * math.pi * (4 * s - 3) / 8.0
        if s == 1:
            return 1.0187929716
        return t ** (2.0 / 3.0) * (1.0 - 7.0 / 48.0 * t**-2)
    if s == 1:
        return 2.3381074105
    t = 3.0 * math.pi * (4 * s - 1) / 8.0
    return t ** (2.0 / 3.0) * (1.0 + 5.0 / 48.0 * t**-2)


def zero_guess(kind, nu, s):
    """McMahon (large s) or transition-region (large nu) estimate of a zero."""
    mu = 4.0 * nu * nu
    prime = kind == "Jprime"
    if s >= nu or nu < 2:
        if prime:
            b = (s + 0.5 * nu - 0.75) * math.pi
            if nu == 0:
                b += math.pi  # positive zeros of J0' are the zeros of J1
                mu = 4.0
                return b - (mu - 1) / (8 * b) - 4 * (mu - 1) * (7 * mu - 31) / (3 * (8 * b) ** 3)
            return b - (mu + 3) / (8 * b) - 4 * (7 * mu * mu + 82 * mu - 9) / (3 * (8 * b) ** 3)
        b = (s + 0.5 * nu - 0.25) * math.pi
        return b - (mu - 1) / (8 * b) - 4 * (mu - 1) * (7 * mu - 31) / (3 * (8 * b) ** 3)
    a = _airy_zero(s, prime)
    c = (0.5 * nu) ** (1.0 / 3.0)
    if prime:
        return nu + a * c + (3.0 / 10.0) * a * a / c - 1.0 / (10.0 * a) / c
    return nu + a * c + (3.0 / 10.0) * a * a / c


def _zero_fn(kind, nu):
    if kind == "J":

        def f(x):
            j, jd = bessel_j_and_deriv(nu, x)
            return j, jd

    else:

        def f(x):
            j, jd = bessel_j_and_deriv(nu, x)
            jdd = -jd / x - (1.0 - nu * nu / (x * x)) * j
            return jd, jdd

    return f


def bessel_zero(kind, nu, s: int, *, step=0.25, maxiter=100) -> BesselZero:
    """s-th positive zero of J_nu (``kind="J"``) or J'_nu (``kind="Jprime"``).

    The zero is bracketed by a sign-change scan (so the index is certain) and
    then refined by a safeguarded Newton iteration seeded from the asymptotic
    estimate, stopping when ``|dx| < 1e-12 x``.  Positive zeros of J'_0 exclude
    the origin, i.e. they coincide with the zeros of J_1.
    """
    if kind in ("J-zero", "j"):
        kind = "J"
    if kind in ("Jprime-zero", "jprime", "J'"):
        kind = "Jprime"
    if kind not in ("J", "Jprime"):
        raise ValueError(f"unknown zero kind {kind!r}")
    nu = check_order(nu)
    s = int(s)
    if s < 1:
        raise ValueError("zero index must be >= 1")
    f = _zero_fn(kind, nu)

    guess = zero_guess(kind, nu, s)
    # scan for the s-th sign change starting below the first zero
    x = max(nu, 0.1) if kind == "J" or nu > 0 else 0.1
    # jump close to the guess when it is safely far out: zeros below lo are
    # then counted from a coarser scan of the same function
    fx = f(x)[0]
    count = 0
    lo = hi = None
    while count < s:
        xn = x + step
        fn = f(xn)[0]
        if fx == 0.0:
            fx = fn
        elif fn == 0.0 or (fn > 0) != (fx > 0):
            count += 1
            if count == s:
                lo, hi = x, xn
                break
        x, fx = xn, fn
        if x > guess + 50.0 + 10.0 * s:
            raise BesselZeroError("scan overran the asymptotic estimate", (x - step, x))

    flo = f(lo)[0]
    root = guess if lo < guess < hi else 0.5 * (lo + hi)
    for _ in range(maxiter):
        val, der = f(root)
        if val == 0.0:
            break
        if (val > 0) == (flo > 0):
            lo, flo = root, val
        else:
            hi = root
        dx = -val / der if der != 0 else math.inf
        new = root + dx
        if not (lo < new < hi):
            new = 0.5 * (lo + hi)
            dx = new - root
        root = new
        if abs(dx) < 1e-12 * root:
            break
    else:
        raise BesselZeroError(f"no convergence for {kind}-zero (nu={nu}, s={s})", (lo, hi))
    val, der = f(root)
    residual = abs(val) / (abs(der) * root) if der != 0 else math.inf
    return BesselZero(order=nu, index=s, kind=kind, location=root, residual=residual)


# ---------------------------------------------------------------------------
# vectorised orders 0 and 1
# ---------------------------------------------------------------------------

_MILLER_START = 84  # adequate for x <= 25


def _j01y01_small(x):
    """Miller sweep on an array with x <= 25; Neumann series for Y0, Y1."""
    f2 = np.zeros_like(x)  # J_{n+2}
    f1 = np.zeros_like(x)  # J_{n+1}
    f = np.full_like(x, 1e-30)  # J_n
    s_even = np.zeros_like(x)
    s_y0 = np.zeros_like(x)
    s_y1 = np.zeros_like(x)
    j1 = np.zeros_like(x)
    for n in range(_MILLER_START, -1, -1):
        k = (n + 1) // 2
        if n % 2 == 0 and n > 0:
            s_even = s_even + f
            s_y0 = s_y0 + ((-1) ** k / k) * f
        elif n % 2 == 1:
            s_y1 = s_y1 + ((-1) ** k / k) * (f - f2)
        if n == 1:
            j1 = f
        if n == 0:
            break
        f2, f1, f = f1, f, (2.0 * n / x) * f - f1
        big = np.abs(f) > _RESCALE
        if big.any():
            c = np.where(big, 1.0 / _RESCALE, 1.0)
            f, f1, f2 = f * c, f1 * c, f2 * c
            s_even, s_y0, s_y1, j1 = s_even * c, s_y0 * c, s_y1 * c, j1 * c
    norm = 1.0 / (f + 2.0 * s_even)
    j0 = f * norm
    j1 = j1 * norm
    lg = np.log(0.5 * x) + EULER_GAMMA
    y0 = TWO_OVER_PI * (lg * j0 - 2.0 * s_y0 * norm)
    y1 = TWO_OVER_PI * (lg * j1 - j0 / x + s_y1 * norm)
    return j0, j1, y0, y1


def _h01_large(x):
    """H0^(1), H1^(1) from the Hankel expansion, x > 25."""
    inv = 1.0 / (8.0 * x)
    p0 = np.ones_like(x)
    q0 = np.zeros_like(x)
    p1 = np.ones_like(x)
    q1 = np.zeros_like(x)
    t0 = np.ones_like(x)
    t1 = np.ones_like(x)
    nterms = 18 if x.min() < 40 else (12 if x.min() < 100 else 8)
    for k in range(1, nterms + 1):
        c = (2 * k - 1) ** 2
        t0 = t0 * ((0.0 - c) / k) * inv
        t1 = t1 * ((4.0 - c) / k) * inv
        r = k % 4
        if r == 1:
            q0 += t0
            q1 += t1
        elif r == 2:
            p0 -= t0
            p1 -= t1
        elif r == 3:
            q0 -= t0
            q1 -= t1
        else:
            p0 += t0
            p1 += t1
    amp = np.sqrt(TWO_OVER_PI / x)
    # rotate after the exponential: x - pi/4 would lose ulp(x) of phase
    e = np.exp(1j * x) * np.exp(-0.25j * np.pi)
    h0 = amp * e * (p0 + 1j * q0)
    h1 = amp * (-1j * e) * (p1 + 1j * q1)
    return h0, h1


def hankel01(x):
    """Vectorised (H0^(1)(x), H1^(1)(x)) for an array of positive arguments."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("hankel01 requires positive arguments")
    h0 = np.empty(x.shape, dtype=complex)
    h1 = np.empty(x.shape, dtype=complex)
    small = x <= _ASYMP_MIN_ARG
    if small.any():
        j0, j1, y0, y1 = _j01y01_small(x[small])
        h0[small] = j0 + 1j * y0
        h1[small] = j1 + 1j * y1
    large = ~small
    if large.any():
        a, b = _h01_large(x[large])
        h0[large] = a
        h1[large] = b
    return h0, h1


def bessel_j0_array(x):
    """Vectorised J0 for non-negative arguments (J0(0) = 1)."""
    x = np.asarray(x, dtype=float)
    out = np.ones(x.shape)
    pos = x > 0
    if pos.any():
        out[pos] = hankel01(x[pos])[0].real
    return out


def bessel_j1_array(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape)
    pos = x > 0
    if pos.any():
        out[pos] = hankel01(x[pos])[1].real
    return out
