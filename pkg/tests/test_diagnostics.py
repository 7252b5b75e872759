import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from layerlab import diagnostics as D
from layerlab import kernels as K
from layerlab.operators import build_operator, operator_norm

CUT = D.CutoffSpec(4.0)


def test_split_weight_examples():
    lam, M = 50.0, 4.0
    y = np.array([0.0, 0.0])
    assert D.split_weights(CUT, lam, [0.5 * M / lam, 0.0], y) == (1.0, 0.0)
    assert D.split_weights(CUT, lam, [0.0, 3 * M / lam], y) == (0.0, 1.0)
    near, far = D.split_weights(CUT, lam, [1.5 * M / lam, 0.0], y)
    assert 0 < near < 1 and 0 < far < 1 and near + far == 1.0
    with pytest.raises(ValueError):
        D.split_weights(CUT, lam, y, y)
    with pytest.raises(ValueError):
        D.CutoffSpec(0.0)


@given(z=st.floats(-5.0, 5.0))
def test_zeta_profile(z):
    v = float(D.CutoffSpec.zeta(np.array([z]))[0])
    assert 0.0 <= v <= 1.0
    if abs(z) <= 1:
        assert v == 1.0
    if abs(z) >= 2:
        assert v == 0.0


def test_zeta_is_monotone_on_the_transition():
    z = np.linspace(1.0, 2.0, 2001)
    assert np.all(np.diff(D.CutoffSpec.zeta(z)) <= 0)


@given(r=st.floats(1e-4, 1.0), lam=st.floats(20.0, 800.0), M=st.floats(1.0, 8.0))
def test_partition_of_unity(r, lam, M):
    c = D.CutoffSpec(M)
    near, far = c.near(lam)(np.array([r])), c.far(lam)(np.array([r]))
    assert near[0] + far[0] == 1.0
    k = K.slp_radial(lam, np.array([r]))[0]
    # the weights are exact; the two products add back to the kernel up to one rounding each
    assert abs(near[0] * k + far[0] * k - k) <= 2.0**-52 * abs(k)


def test_slp_near_two_point_slope():
    a = D.near_diagonal_norm("SLP-near", 100.0).value
    b = D.near_diagonal_norm("SLP-near", 400.0).value
    assert math.log(b / a) / math.log(4.0) <= -1.3


def test_near_norm_shrinks_with_M():
    for kind in ("SLP-near", "DLP-near"):
        a = D.near_diagonal_norm(kind, 100.0, M=4.0).value
        b = D.near_diagonal_norm(kind, 100.0, M=2.0).value
        assert b <= a


def test_near_plus_far_bounds_full():
    for lam in (50.0, 100.0):
        rep = D.diagnose(lam, quasimode=False)
        assert rep.near_norm + rep.far_norm >= rep.full_norm


def test_near_norm_validates_input():
    with pytest.raises(ValueError):
        D.near_diagonal_norm("SLP-near", 10.0)
    with pytest.raises(ValueError):
        D.near_diagonal_norm("SLO-near", 50.0)


def test_quasimode_zero_density():
    q = D.quasimode_error(50.0, f=lambda x: 0 * x)
    assert q.total == 0.0 and q.collar == 0.0


def test_quasimode_ratio_stable_under_doubling():
    q1 = D.quasimode_error(100.0, h=1 / 2000)
    q2 = D.quasimode_error(200.0)
    ratio = (q2.total / q2.f_norm) / (q1.total / q1.f_norm)
    assert 0.3 <= ratio <= 3.0
    # outside the collar the far part solves the equation: what is left is stencil error
    for q in (q1, q2):
        assert q.away <= q.fd_budget


def test_quasimode_spike_lives_in_the_cutoff_annulus():
    lam = 100.0
    h = 1 / (20 * lam)
    nb = int(math.ceil(0.5 / h * (1 - 1e-12)))
    f = np.zeros(nb)
    f[nb // 2] = 1.0
    q = D.quasimode_error(lam, f=f, keep_field=True)
    x_src = q.grid[2][nb // 2]
    assert D.annulus_fraction(q, x_src) >= 0.9


def test_quasimode_grid_rules():
    with pytest.raises(ValueError):
        D.quasimode_error(100.0, h=1 / 1000)
    with pytest.raises(ValueError):
        D.quasimode_error(100.0, margin=0.01)


def test_quasimode_budget(monkeypatch):
    monkeypatch.setenv("LAYERLAB_BUDGET", "8000:1000")
    with pytest.raises(D.BudgetExceeded):
        D.quasimode_error(100.0)


def test_report_json(tmp_path):
    rep = D.diagnose(50.0, p=8)
    path = tmp_path / "diag.json"
    text = rep.to_json(path)
    d = json.loads(path.read_text())
    assert d == json.loads(text)
    for key in ("lambda", "M", "near_norm", "far_norm", "quasimode_residual", "collar_residual"):
        assert key in d
    assert d["lambda"] == 50.0 and d["collar_residual"] <= d["quasimode_residual"]


def test_far_part_of_lattice_matches_full_minus_near():
    lam = 40.0
    full = build_operator("SLP", lam, "box", 8)
    near = build_operator("SLP", lam, "box", 8, near_weight=CUT.near(lam))
    far = build_operator("SLP", lam, "box", 8, near_weight=CUT.far(lam))
    f = np.random.default_rng(2).normal(size=full.shape[1]) + 0j
    a, b, c = full.apply(f), near.apply(f), far.apply(f)
    assert np.max(np.abs(b + c - a)) <= 1e-12 * np.max(np.abs(a))
    assert operator_norm(near).value + operator_norm(far).value >= operator_norm(full).value
