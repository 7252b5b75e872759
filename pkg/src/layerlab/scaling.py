"""Norm sweeps over geometric lambda grids and log-log power-law fits.

A sweep evaluates one norm (or one sharp-example ratio) per lambda, each at
mesh density ``p`` together with a re-run at ``2p`` as a refinement
certificate.  Fits are ordinary least squares of ``log norm`` on ``log lam``;
a second model with an extra ``log log lam`` column absorbs the logarithmic
factors of the upper bounds and is reported alongside.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import BudgetExceeded
from .operators import NormNotConverged, build_operator, geometry_spec, operator_norm

log = logging.getLogger(__name__)

CSV_COLUMNS = ("kind", "geometry", "lambda", "norm", "p", "residual")
REFINE_RTOL = 0.01
# statuses whose norm enters a fit; the certificate outcome is reported separately
FIT_STATUSES = ("ok", "unrefined", "uncertified")


@dataclass
class Sample:
    lam: float
    norm: float
    p: float
    residual: float
    refined: Optional[float] = None
    status: str = "ok"

    @property
    def refinement_change(self):
        if self.refined is None or not np.isfinite(self.norm):
            return None
        return abs(self.refined - self.norm) / abs(self.refined)


@dataclass
class SweepResult:
    kind: str
    geometry: str
    samples: list
    config_hash: str = ""
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        lams = [s.lam for s in self.samples]
        if any(b <= a for a, b in zip(lams, lams[1:])):
            raise ValueError("sweep lambdas must be strictly increasing")

    def ok(self):
        # unrefined samples stay in the fit (their certificate is reported, and
        # the CSV round trip has no status column)
        return [s for s in self.samples if s.status in FIT_STATUSES and np.isfinite(s.norm)]

    def arrays(self):
        good = self.ok()
        return np.array([s.lam for s in good]), np.array([s.norm for s in good])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for s in self.samples:
                w.writerow([self.kind, self.geometry, repr(float(s.lam)), repr(float(s.norm)), repr(float(s.p)),
                            repr(float(s.residual))])

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                kind = rec.get("kind") or rec.get("family")
                rows.append((kind, rec["geometry"], float(rec["lambda"]), float(rec["norm"]), float(rec["p"]),
                             float(rec["residual"])))
        if not rows:
            raise ValueError(f"{path}: no samples")
        samples = [Sample(lam, norm, p, res, status="ok" if np.isfinite(norm) else "failed")
                   for _, _, lam, norm, p, res in rows]
        return cls(rows[0][0], rows[0][1], samples)


@dataclass
class ScalingFit:
    exponent: float
    intercept: float
    stderr: float
    r2: float
    n: int
    log_exponent: Optional[float] = None  # exponent of the lam^e (log lam)^c model
    log_power: Optional[float] = None  # its c
    log_stderr: Optional[float] = None
    log_r2: Optional[float] = None
    model: str = "power"  # model preferred by adjusted r^2 (reported, not enforced)

    @property
    def log_corrected(self):
        return self.model == "power*log"

    def report(self):
        return {"exponent": self.exponent, "stderr": self.stderr, "r2": self.r2, "model": self.model,
                "intercept": self.intercept, "n": self.n, "log_exponent": self.log_exponent,
                "log_power": self.log_power, "log_r2": self.log_r2}

    def to_json(self, path=None):
        text = json.dumps(self.report(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def _ols(X, y):
    """Least squares with the textbook standard errors and r^2."""
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    n, k = X.shape
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    r2 = min(max(r2, 0.0), 1.0)
    dof = n - k
    if dof > 0:
        cov = ss_res / dof * np.linalg.inv(X.T @ X)
        se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    else:
        se = np.full(k, np.nan)
    return beta, se, r2, ss_res


def fit_power_law(samples, norms=None, log_correction=True) -> ScalingFit:
    """Fit ``norm = C lam^e``; ``samples`` is a SweepResult, a list of
    :class:`Sample`, an array of lambdas (with ``norms``) or ``(lam, norm)`` pairs."""
    if isinstance(samples, SweepResult):
        lam, nrm = samples.arrays()
    elif norms is not None:
        lam, nrm = np.asarray(samples, dtype=float), np.asarray(norms, dtype=float)
    else:
        items = list(samples)
        if items and isinstance(items[0], Sample):
            items = [(s.lam, s.norm) for s in items if s.status in FIT_STATUSES]
        lam, nrm = (np.array(v, dtype=float) for v in zip(*items)) if items else (np.array([]), np.array([]))
    if len(np.unique(lam)) < 3:
        raise ValueError("a power-law fit needs at least 3 distinct lambdas")
    if np.any(nrm <= 0) or not np.all(np.isfinite(nrm)):
        raise ValueError("norms must be positive and finite")
    x, y = np.log(lam), np.log(nrm)
    X = np.stack([np.ones_like(x), x], axis=1)
    beta, se, r2, ss1 = _ols(X, y)
    fit = ScalingFit(float(beta[1]), float(beta[0]), float(se[1]), float(r2), len(x))
    if log_correction and len(x) >= 4 and np.all(lam > 1.0):
        X2 = np.column_stack([X, np.log(x)])
        b2, se2, r22, ss2 = _ols(X2, y)
        fit.log_exponent, fit.log_power = float(b2[1]), float(b2[2])
        fit.log_stderr, fit.log_r2 = float(se2[1]), float(r22)
        n = len(x)
        adj1 = 1 - (1 - fit.r2) * (n - 1) / max(n - 2, 1)
        adj2 = 1 - (1 - r22) * (n - 1) / max(n - 3, 1)
        fit.model = "power*log" if adj2 > adj1 + 1e-12 else "power"
    return fit


def geometric_grid(lmin, lmax, points):
    if points < 2 or not 0 < lmin < lmax:
        raise ValueError("need 0 < lmin < lmax and at least 2 points")
    # powers of the exact ratio keep octave grids exact (geomspace drifts by ulps)
    r = (lmax / lmin) ** (1.0 / (points - 1))
    vals = [float(lmin * r**i) for i in range(points - 1)]
    return vals + [float(lmax)]


def config_hash(config: dict) -> str:
    text = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _check_grid(lams):
    lams = [float(v) for v in lams]
    if len(lams) < 4:
        raise ValueError("a sweep needs at least 4 lambdas")
    ratios = np.array(lams[1:]) / np.array(lams[:-1])
    if np.any(ratios <= 1) or not np.allclose(ratios, ratios[0], rtol=1e-6):
        raise ValueError("the lambda grid must be geometric and increasing")
    return lams


def norm_sample(kind, lam, geometry, p, refine=True):
    """One operator norm with its ``2p`` certificate."""
    e = operator_norm(build_operator(kind, lam, geometry, p))
    s = Sample(float(lam), e.value, float(p), e.residual)
    if refine:
        try:
            s.refined = operator_norm(build_operator(kind, lam, geometry, 2 * p)).value
        except BudgetExceeded as exc:
            log.warning("no 2p certificate at lam=%g: %s", lam, exc)
            s.status = "uncertified"
            return s
        if s.refinement_change > REFINE_RTOL:
            s.status = "unrefined"
            log.warning("%s on %s at lam=%g moved %.2f%% under p -> 2p", kind, geometry, lam,
                        100 * s.refinement_change)
    return s


def example_sample(family, lam, p, refine=True, **kw):
    """One sharp-example ratio with its ``2p`` certificate (``lam`` is the order
    ``k`` for the families parametrised by order)."""
    from .examples import FAMILIES

    gen = FAMILIES[family]
    if family in ("annulus-slp", "disc-neumann"):
        r = gen(int(lam), **kw)
        return Sample(r.lam, r.ratio, float("nan") if r.p is None else r.p, 0.0)
    r = gen(lam, p=p, **kw)
    s = Sample(float(lam), r.ratio, float(p), 0.0 if r.agreement is None else r.agreement)
    if refine:
        try:
            s.refined = gen(lam, p=2 * p, **kw).ratio
        except BudgetExceeded as exc:
            log.warning("no 2p certificate at lam=%g: %s", lam, exc)
            s.status = "uncertified"
            return s
        if s.refinement_change > REFINE_RTOL:
            s.status = "unrefined"
    return s


def sweep(kind, geometry, lams, p=10.0, refine=True, family=False, strict_grid=True, **kw) -> SweepResult:
    """Norms (or example ratios when ``family``) over a geometric lambda grid.

    Failures (budget refusals, non-convergence) are recorded as samples with
    a non-``ok`` status and a NaN norm; the sweep keeps going.
    """
    if p < 8:
        raise ValueError("sweeps need p >= 8")
    lams = _check_grid(lams) if strict_grid else [float(v) for v in lams]
    name, params = geometry_spec(geometry)
    config = {"kind": kind, "geometry": name, "params": params, "lams": lams, "p": p, "refine": refine,
              "family": family, **kw}
    samples = []
    for lam in lams:
        try:
            if family:
                s = example_sample(kind, lam, p, refine, **kw)
            else:
                s = norm_sample(kind, lam, geometry, p, refine)
        except BudgetExceeded as exc:
            log.warning("lam=%g refused: %s", lam, exc)
            s = Sample(lam, float("nan"), p, float("nan"), status="budget")
        except NormNotConverged as exc:
            s = Sample(lam, exc.estimate.value, p, exc.estimate.residual, status="unconverged")
        samples.append(s)
    # order families report lam = j_{k,1}; keep the grid order
    return SweepResult(str(kind), name, samples, config_hash(config), config)
