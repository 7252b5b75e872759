import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from layerlab import geometry as G


def test_circle_length_and_curvature():
    g = G.make_geometry("circle", R=1.0)
    c = g.pieces[0]
    assert abs(g.length() - 2 * math.pi) < 1e-10
    t = np.linspace(0, 2 * math.pi, 50)
    assert np.allclose(c.curvature(t), 1.0, atol=1e-10)
    assert np.allclose(c(0.0), c(2 * math.pi), atol=1e-12)


def test_sigma_closed_form_at_zero():
    s = G.make_geometry("appendix-sigma").pieces[0]
    assert np.allclose(s(0.0), [[-4.0, 3.5]], atol=1e-14)


def test_gamma_curvature_two_ways():
    g = G.make_geometry("appendix-gamma").pieces[0]
    k_param = g.curvature(0.0)[0]
    # second difference of the unit-speed curve: |gamma''| is the curvature
    h = 1e-4
    pts = g(np.array([-h, 0.0, h]))
    k_fd = np.hypot(*((pts[0] - 2 * pts[1] + pts[2]) / h**2))
    assert abs(abs(k_param) - k_fd) < 1e-6
    # the parabola y = x^2 has curvature 2 / (1 + 4x^2)^{3/2} at x = 1
    assert abs(abs(k_param) - 2 / 5**1.5) < 1e-10


def test_invalid_geometries():
    with pytest.raises(ValueError):
        G.make_geometry("circle", R=0.0)
    with pytest.raises(ValueError):
        G.make_geometry("segment", p=(1, 1), q=(1, 1))
    with pytest.raises(ValueError):
        G.make_geometry("annulus-boundary", R1=2.0, R2=1.0)
    with pytest.raises(ValueError):
        G.annulus(1.0, 1.0)
    with pytest.raises(ValueError):
        G.make_geometry("triangle")


def test_unit_speed_segment_and_circle():
    seg = G.unit_speed_reparam(G.segment((0, 0), (3, 4)))
    s = np.linspace(seg.t0, seg.t1, 20)
    assert np.allclose(seg.speed(s), 1.0, atol=1e-8)
    assert abs(seg.t1 - seg.t0 - 5.0) < 1e-12
    circ = G.unit_speed_reparam(G.circle(2.0))
    s = np.linspace(circ.t0, circ.t1, 20)
    assert np.allclose(circ.speed(s), 1.0, atol=1e-8)
    assert np.allclose(circ(s), G.circle(2.0)(s / 2), atol=1e-12)


def test_parabola_arclength(frozen):
    g = G.unit_speed_reparam(G.parabola(0.2))
    assert abs(g.t1 - frozen["parabola_arclength_0.2"]) < 1e-9
    assert np.allclose(g.param_of(g.t1), 0.2, atol=1e-12)


def test_reparam_idempotent():
    g = G.unit_speed_reparam(G.parabola())
    gg = G.unit_speed_reparam(g)
    s = np.linspace(g.t0, g.t1, 41)
    assert abs(gg.t0 - g.t0) < 1e-10 and abs(gg.t1 - g.t1) < 1e-10
    assert np.max(np.abs(gg(s) - g(s))) < 1e-10


def test_reparam_rejects_stationary_curve():
    c = G.Curve("cusp", lambda t: np.stack([t**2, t**3], 1), lambda t: np.stack([2 * t, 3 * t**2], 1),
                lambda t: np.stack([2 + 0 * t, 6 * t], 1), -1.0, 1.0)
    with pytest.raises(ValueError):
        G.unit_speed_reparam(c)


def test_osculating_locus_of_circle_is_centre():
    loc = G.osculating_locus(G.circle(1.5, center=(0.3, -0.2)))
    assert np.allclose(loc(np.linspace(0, 6, 11)), [0.3, -0.2], atol=1e-12)


def test_osculating_locus_of_appendix_parabola():
    g = G.make_geometry("appendix-gamma").pieces[0]
    loc = G.osculating_locus(g)
    t = np.linspace(-0.3, 0.3, 31)
    closed = G.appendix_sigma_closed_form()(g.param_of(t))
    assert np.max(np.abs(loc(t) - closed)) < 1e-8
    assert np.allclose(G.osculating_locus(G.parabola())(0.0), [[-4.0, 3.5]], atol=1e-12)


def test_ellipse_evolute(frozen):
    for rec in frozen["ellipse_evolute"]:
        loc = G.osculating_locus(G.ellipse_arc(rec["a"], rec["b"], 0.05, 1.5))
        assert np.allclose(loc(rec["t"]), [[rec["x"], rec["y"]]], atol=1e-8)


def test_osculating_locus_rejects_flat_curve():
    with pytest.raises(ValueError):
        G.osculating_locus(G.segment((0, 0), (1, 0)))


def test_quadrature_examples():
    q = G.quadrature(G.make_geometry("circle"), p=10, lam=100)
    assert len(q) >= 1000 and abs(q.total() - 2 * math.pi) < 1e-8
    assert abs(G.quadrature(G.disc(1.0), p=6, lam=50).total() - math.pi) < 1e-8
    assert abs(G.quadrature(G.annulus(1, 2), p=10, lam=50).total() - 3 * math.pi) < 1e-8
    assert abs(G.quadrature(G.box(), p=10, lam=50).total() - 2.0) < 1e-12


@pytest.mark.parametrize("name", ["circle", "segment", "square-boundary", "appendix-gamma", "annulus-boundary"])
@pytest.mark.parametrize("lam", [20.0, 137.0])
def test_boundary_spacing_rule(name, lam):
    p = 8.0
    q = G.quadrature(G.make_geometry(name), p=p, lam=lam)
    h = 2 * math.pi / (p * lam)
    for k in np.unique(q.piece):
        pts = q.nodes[q.piece == k]
        gaps = np.hypot(*np.diff(pts, axis=0).T)
        assert gaps.max() <= h * (1 + 1e-9)
    assert np.all(q.weights > 0)


def test_domain_spacing_rule():
    lam, p = 40.0, 8.0
    q = G.quadrature(G.disc(), p=p, lam=lam)
    r = q.info["radii"]
    h = 2 * math.pi / (p * lam)
    assert np.max(np.diff(r)) <= h and r[-1] * 2 * math.pi / q.info["n_theta"] <= h * (1 + 1e-12)


def test_normals_point_outward_on_convex_curves():
    for g in (G.make_geometry("circle", R=2.0), G.make_geometry("square-boundary")):
        q = G.quadrature(g, p=8, lam=30)
        centroid = q.nodes.T @ q.weights / q.total()
        assert np.all(np.sum((q.nodes - centroid) * q.normals, axis=1) > 0)


def test_annulus_normals_leave_the_annulus():
    q = G.quadrature(G.make_geometry("annulus-boundary"), p=8, lam=30)
    radial = np.sum(q.nodes * q.normals, axis=1) / np.hypot(*q.nodes.T)
    assert np.allclose(radial[q.piece == 0], 1.0) and np.allclose(radial[q.piece == 1], -1.0)


@pytest.mark.parametrize("name", ["circle", "appendix-gamma", "appendix-sigma", "segment"])
def test_refinement_converges(name):
    g = G.make_geometry(name)
    L1 = G.quadrature(g, p=10, lam=40).total()
    L2 = G.quadrature(g, p=20, lam=40).total()
    assert abs(L1 - L2) <= 1e-9 * L2


def test_budget_refusal(monkeypatch):
    monkeypatch.setenv("LAYERLAB_BUDGET", "500:1e4")
    with pytest.raises(G.BudgetExceeded) as err:
        G.quadrature(G.make_geometry("circle"), p=10, lam=100)
    assert err.value.required > 500 and err.value.lam_limit < 100
    with pytest.raises(G.BudgetExceeded):
        G.quadrature(G.disc(), p=10, lam=100)
    monkeypatch.setenv("LAYERLAB_BUDGET", "lots")
    with pytest.raises(ValueError):
        G.node_budget()


def test_density_checks():
    with pytest.raises(ValueError):
        G.quadrature(G.make_geometry("circle"), p=3, lam=10)
    with pytest.raises(ValueError):
        G.quadrature(G.make_geometry("circle"), p=10, lam=0)


@given(R=st.floats(0.2, 5.0), lam=st.floats(1.0, 60.0))
def test_circle_rule_sums_to_length(R, lam):
    q = G.quadrature(G.make_geometry("circle", R=R), p=8, lam=lam)
    assert abs(q.total() - 2 * math.pi * R) <= 1e-12 * 2 * math.pi * R
    assert np.allclose(np.hypot(*q.normals.T), 1.0, atol=1e-12)


@given(R1=st.floats(0.1, 2.0), gap=st.floats(0.05, 2.0), lam=st.floats(1.0, 40.0))
def test_annulus_rule_sums_to_area(R1, gap, lam):
    q = G.quadrature(G.annulus(R1, R1 + gap), p=6, lam=lam)
    exact = math.pi * ((R1 + gap) ** 2 - R1**2)
    assert abs(q.total() - exact) <= 1e-10 * exact


@given(eps=st.floats(0.05, 0.5))
def test_unit_speed_property(eps):
    g = G.unit_speed_reparam(G.parabola(eps))
    s = np.linspace(g.t0, g.t1, 33)
    assert np.allclose(g.speed(s), 1.0, atol=1e-8)
    assert np.allclose(g(s), G.parabola(eps)(g.param_of(s)), atol=1e-12)
