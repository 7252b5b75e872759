import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from layerlab import examples as E
from layerlab import specfun
from layerlab.scaling import fit_power_law


def test_closed_form_dirichlet_normalisation():
    for k in (0, 4, 25):
        lam, a = E.dirichlet_eigen(k)
        assert abs(E.l2_ball_closed_form(a, k, lam) - math.pi / lam**2) <= 1e-12 * math.pi / lam**2


def test_closed_form_neumann_normalisation():
    for k, l in ((3, 1), (12, 2), (40, 1)):
        lam, a = E.neumann_eigen(k, l)
        exact = math.pi * (1 - k**2 / lam**2)
        assert abs(E.l2_ball_closed_form(a, k, lam) - exact) <= 1e-11 * exact


def test_closed_form_against_frozen_quadrature(frozen):
    rec = frozen["ball_l2_k5_R2"]
    lam = specfun.bessel_zero("J", 5, 1).location
    assert abs(lam - rec["lam"]) < 1e-12
    for v in (E.l2_ball_closed_form(1.0, 5, lam, 2.0), E.l2_ball_quadrature(1.0, 5, lam, 2.0)):
        assert abs(v - rec["value"]) <= 1e-8 * rec["value"]


def test_closed_form_domain():
    with pytest.raises(ValueError):
        E.l2_ball_closed_form(1.0, 2, -1.0)
    with pytest.raises(ValueError):
        E.l2_ball_closed_form(1.0, 2, 3.0, R=0.0)


def test_annulus_exact_disc_identity():
    r = E.annulus_slp_example(50)
    assert abs(r.extras["norm_B1_scaled"] - 1) <= 1e-10
    assert r.extras["norm_B1"] < r.extras["norm_B1.5"]


def test_annulus_two_point_slope():
    r50, r100 = E.annulus_slp_example(50), E.annulus_slp_example(100)
    slope = math.log(r100.ratio / r50.ratio) / math.log(r100.lam / r50.lam)
    assert abs(slope + 5 / 6) <= 0.1


def test_annulus_both_routes_agree():
    r = E.annulus_slp_example(30, method="both")
    assert r.agreement <= 1e-3
    assert r.agreement <= E.BOTH_RTOL


def test_annulus_rejects_small_order():
    with pytest.raises(ValueError):
        E.annulus_slp_example(5)


def test_dirichlet_field_norm_by_quadrature():
    lam, nrm = E.disc_dirichlet_slp_field(20)
    assert abs(nrm * lam / math.sqrt(math.pi) - 1) <= 1e-3


def test_flat_zero_density():
    r = E.flat_dE_example(50.0, scale=0.0)
    assert r.ratio == 0.0


def test_flat_modulation_drives_the_rate():
    mod = [E.flat_dE_example(lam).ratio for lam in (100.0, 200.0)]
    unmod = [E.flat_dE_example(lam, modulated=False).ratio for lam in (100.0, 200.0)]
    assert unmod[1] / unmod[0] < mod[1] / mod[0]


def test_neumann_tataru_band():
    vals = [E.disc_neumann_dlp_example(k) for k in (20, 50, 100, 200)]
    scaled = [r.ratio * r.lam ** (1 / 3) for r in vals]
    # j'_{k,1} = k + 0.8086 k^{1/3} + ... puts the limit at sqrt(0.8086) = 0.899
    assert all(0.8 <= s <= 0.95 for s in scaled)


def test_neumann_index_near_two():
    k = 50
    l = E.neumann_index_near(k)
    r = E.disc_neumann_dlp_example(k, l)
    assert 1.9 <= r.lam / k <= 2.1
    floor = math.sqrt(math.pi * (1 - 1 / 3.61)) / math.sqrt(2 * math.pi)
    assert r.ratio >= floor


def test_neumann_both_routes_agree():
    r = E.disc_neumann_dlp_example(5, 1, method="both")
    assert r.agreement <= 1e-4
    lam, a = E.neumann_eigen(5, 1)
    closed = E.l2_ball_closed_form(a, 5, lam)
    assert abs(E.l2_ball_quadrature(a, 5, lam) - closed) <= 1e-8 * closed


def test_dlo_flat_normal_alignment_and_chi_norm():
    scaled = []
    for lam in (100.0, 400.0):
        r = E.dlo_flat_example(lam)
        # 1 - cos(angle) with angle <= w / (1/2) = 2 lam^{-1/2}: at most 2 / lam
        scaled.append(r.extras["alignment_defect"] * lam)
        assert abs(r.denominator - r.extras["chi_norm_exact"]) <= 1e-6 * r.extras["chi_norm_exact"]
    assert max(scaled) <= 2.0 and abs(scaled[1] / scaled[0] - 1) < 0.05


def test_dlo_curved_phase_is_stationary_to_third_order():
    rng = np.random.default_rng(11)
    pairs = rng.uniform(-0.05, 0.05, size=(100, 2))
    sx, sy = pairs[:, 0], pairs[:, 1]
    d = E.phase_defect(sx, sy)
    delta = sy - sx
    X = np.stack([delta, delta**2, delta**3], axis=1)
    coef, *_ = np.linalg.lstsq(X, d, rcond=None)
    # the first two orders vanish; the cubic term carries the defect
    amp = np.max(np.abs(delta))
    assert abs(coef[2]) * amp**3 > 10 * (abs(coef[0]) * amp + abs(coef[1]) * amp**2)


def test_dlo_curved_exponent_is_robust_in_M():
    lams = [100.0, 200.0, 400.0, 800.0]
    e1 = fit_power_law(lams, [E.dlo_curved_example(l, M=1.0).ratio for l in lams]).exponent
    e2 = fit_power_law(lams, [E.dlo_curved_example(l, M=2.0).ratio for l in lams]).exponent
    assert abs(e1 - e2) <= 0.03


def test_dlo_curved_window_guard():
    with pytest.raises(ValueError):
        E.dlo_curved_example(60.0, M=0.1)


def test_slo_dE_identities():
    for geom in ("circle", "segment"):
        r = E.slo_sharpness_via_dE(geom, 100.0, check_entries=True)
        assert r.extras["entry_gap"] <= 1e-12
        assert r.agreement <= 1e-6


def test_example_csv_round_trip(tmp_path):
    rows = [E.annulus_slp_example(20), E.flat_dE_example(50.0), E.disc_neumann_dlp_example(6, method="both")]
    path = tmp_path / "ex.csv"
    E.write_csv(rows, path)
    back = E.read_csv(path)
    assert [r.row() for r in back] == [r.row() for r in rows]
    assert path.read_text().splitlines()[0] == ",".join(E.CSV_COLUMNS)


def test_ratio_invariant_enforced():
    with pytest.raises(ValueError):
        E.ExampleResult("x", 1.0, None, 2.0, 1.0, 3.0, "closed-form")


@given(k=st.integers(10, 300))
def test_annulus_ratios_positive(k):
    r = E.annulus_slp_example(k)
    assert r.ratio > 0 and math.isfinite(r.ratio)
    assert abs(r.extras["norm_B1_scaled"] - 1) <= 1e-10


@given(k=st.integers(5, 300), l=st.integers(1, 5))
def test_neumann_ratios_positive(k, l):
    r = E.disc_neumann_dlp_example(k, l)
    assert 0 < r.ratio < math.sqrt(0.5)


def test_bump_is_unit_norm():
    from scipy.integrate import quad

    v = quad(lambda t: float(E.bump(np.array([t]))[0] ** 2), -1, 1, epsabs=0, epsrel=1e-12)[0]
    assert abs(v - 1) < 1e-10
