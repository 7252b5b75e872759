import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from layerlab import geometry as G
from layerlab import operators as O
from layerlab import specfun


def circle_quad(lam, p=10, R=1.0):
    g = G.make_geometry("circle", R=R)
    return g, G.quadrature(g, p, lam)


def angles(q):
    return np.arctan2(q.nodes[:, 1], q.nodes[:, 0])


def test_dE_constant_on_circle(frozen):
    for rec in frozen["dE_circle_constant"]:
        g, q = circle_quad(rec["lam"])
        A = O.assemble("dE", rec["lam"], q)
        out = A.apply(np.ones(len(q)))
        assert np.max(np.abs(out - rec["value"])) < 1e-6


def test_dlo_diagonal_is_curvature_limit():
    for R in (0.5, 1.0, 3.0):
        g, q = circle_quad(10.0, R=R)
        A = O.assemble("DLO", 10.0, q, geometry=g)
        assert np.allclose(np.diag(A.entries), -1 / (4 * math.pi * R), rtol=1e-12, atol=0)


def test_slo_circle_eigenvalues(frozen):
    for lam in (5.0, 37.0):
        g, q = circle_quad(lam)
        A = O.assemble("SLO", lam, q, geometry=g)
        th = angles(q)
        for rec in (r for r in frozen["circle_slo_eigen"] if r["lam"] == lam):
            f = np.exp(1j * rec["k"] * th)
            ev = complex(rec["re"], rec["im"])
            err = np.max(np.abs(A.apply(f) - ev * f))
            assert err <= 1e-4 * max(abs(ev), 1e-3), (lam, rec["k"], err)


def test_circulant_matches_dense_kress():
    lam = 23.0
    g, q = circle_quad(lam)
    for kind in ("SLO", "DLO", "dE"):
        C = O.CirculantOperator(kind, lam, q)
        D = O.assemble(kind, lam, q, geometry=g)
        assert np.max(np.abs(C.dense() - D.entries)) <= 1e-12 * np.max(np.abs(D.entries))
        f = np.cos(3 * angles(q)) + 0.5j
        assert np.allclose(C.apply(f), D.apply(f), atol=1e-12)


def test_norm_of_identity():
    n = 50
    w = np.full(n, 1.0 / n)
    q = G.QuadratureSet(np.zeros((n, 2)), w, "t", "none", 10.0, 1.0)
    # entries are kernel values, so the identity operator carries 1/w on the diagonal
    A = O.OperatorMatrix("dE", 1.0, q, q, np.diag(1.0 / w).astype(complex), 10.0)
    assert np.allclose(A.apply(np.arange(n)), np.arange(n))
    assert abs(O.operator_norm(A).value - 1.0) < 1e-12


def test_norm_of_rank_one():
    rng = np.random.default_rng(3)
    m, n = 40, 30
    qs = G.QuadratureSet(rng.normal(size=(n, 2)), rng.uniform(0.1, 1.0, n), "s", "none", 10.0, 1.0)
    qt = G.QuadratureSet(rng.normal(size=(m, 2)), rng.uniform(0.1, 1.0, m), "t", "none", 10.0, 1.0)
    u = rng.normal(size=m) + 1j * rng.normal(size=m)
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    A = O.OperatorMatrix("SLP", 1.0, qs, qt, np.outer(u, v.conj()), 10.0)
    # T = W_t^{1/2} u v^H W_s^{1/2}: norm ||u||_{w_t} * ||W_s v||_{1/w_s}
    expected = O.weighted_l2(qt, u) * math.sqrt(np.sum(qs.weights * np.abs(v) ** 2))
    est = O.operator_norm(A)
    assert abs(est.value - expected) <= 1e-10 * expected
    assert est.residual <= 1e-8


def test_circle_slo_norm_at_200(frozen):
    lam = 200.0
    A = O.build_operator("SLO", lam, "circle", 10)
    ref = frozen["circle_slo_norm_200"]
    assert abs(O.operator_norm(A).value - ref) <= 1e-2 * ref
    # the power iteration on the same operator agrees with the Fourier value
    est = O.operator_norm(A, exact=False)
    assert abs(est.value - ref) <= 1e-2 * ref and est.residual <= 1e-8


def test_power_iteration_matches_svd():
    g, q = circle_quad(15.0)
    d = G.quadrature(G.disc(), 8, 15.0)
    A = O.assemble("SLP", 15.0, q, d)
    assert abs(O.operator_norm(A, tol=1e-12).value - O.dense_norm(A)) <= 1e-9 * O.dense_norm(A)


def test_adjoint_norm_identity():
    lam = 12.0
    g, q = circle_quad(lam)
    d = G.quadrature(G.annulus(1.2, 1.8), 8, lam)
    A = O.assemble("DLP", lam, q, d)
    a = O.operator_norm(A, tol=1e-14).value
    b = O.operator_norm(A.adjoint(), tol=1e-14).value
    assert abs(a - b) <= 1e-10 * a


def _disc_targets(lam, p=12):
    return G.quadrature(G.disc(0.9), p, lam)


@pytest.mark.parametrize("k", [0, 3, 10])
def test_dirichlet_eigenfunction_by_slp(k):
    lam = specfun.bessel_zero("J", k, 1).location
    g, q = circle_quad(lam, p=16)
    tgt = _disc_targets(lam)
    u = O.assemble("SLP", lam, q, tgt).apply(np.exp(1j * k * angles(q)))
    a = 1 / (lam * specfun.bessel_j_deriv(k, lam))
    r, th = np.hypot(*tgt.nodes.T), np.arctan2(tgt.nodes[:, 1], tgt.nodes[:, 0])
    exact = a * np.array([specfun.bessel_j(k, lam * v) for v in r]) * np.exp(1j * k * th)
    assert O.weighted_l2(tgt, u - exact) <= 1e-3 * O.weighted_l2(tgt, exact)


@pytest.mark.parametrize("k", [0, 3, 10])
def test_neumann_eigenfunction_by_dlp(k):
    lam = specfun.bessel_zero("Jprime", k, 1).location
    g, q = circle_quad(lam, p=16)
    tgt = _disc_targets(lam)
    u = -O.assemble("DLP", lam, q, tgt).apply(np.exp(1j * k * angles(q)))
    a = 1 / specfun.bessel_j(k, lam)
    r, th = np.hypot(*tgt.nodes.T), np.arctan2(tgt.nodes[:, 1], tgt.nodes[:, 0])
    exact = a * np.array([specfun.bessel_j(k, lam * v) for v in r]) * np.exp(1j * k * th)
    assert O.weighted_l2(tgt, u - exact) <= 1e-3 * O.weighted_l2(tgt, exact)


@pytest.mark.parametrize("k,lam", [(2, 9.3), (7, 21.0)])
def test_green_representation(k, lam):
    # u = J_k(lam r) e^{ik theta} with both Cauchy data nonzero
    g, q = circle_quad(lam, p=16)
    th = angles(q)
    dn = lam * specfun.bessel_j_deriv(k, lam) * np.exp(1j * k * th)
    tr = specfun.bessel_j(k, lam) * np.exp(1j * k * th)
    tgt = _disc_targets(lam)
    field = O.assemble("SLP", lam, q, tgt).apply(dn) - O.assemble("DLP", lam, q, tgt).apply(tr)
    r, tt = np.hypot(*tgt.nodes.T), np.arctan2(tgt.nodes[:, 1], tgt.nodes[:, 0])
    u = np.array([specfun.bessel_j(k, lam * v) for v in r]) * np.exp(1j * k * tt)
    assert O.weighted_l2(tgt, u - field) <= 1e-3 * O.weighted_l2(tgt, u)


def test_zero_density_and_length_mismatch():
    A = O.build_operator("SLP", 20.0, "disc", 8, structured=False)
    assert np.all(A.apply(np.zeros(A.shape[1])) == 0)
    with pytest.raises(ValueError):
        A.apply(np.zeros(A.shape[1] + 1))


def test_container_round_trip(tmp_path):
    A = O.build_operator("SLO", 30.0, "circle", 8, structured=False)
    path = tmp_path / "slo.llm"
    A.save(path)
    header, E = O.load_matrix(path)
    assert header == {"kind": "SLO", "lambda": 30.0, "dims": list(A.shape), "p": 8.0}
    assert E.tobytes() == A.entries.tobytes()
    raw = path.read_bytes()
    assert raw[:8] == O.MAGIC
    (path.parent / "bad").write_bytes(b"nope")
    with pytest.raises(ValueError):
        O.load_matrix(path.parent / "bad")


@pytest.mark.parametrize("kind", ["SLP", "DLP", "dE"])
def test_polar_matches_dense(kind):
    lam, p = 18.0, 8
    geom = G.make_geometry("circle")
    q = G.quadrature(geom, p, lam)
    d = G.quadrature(G.disc(), p, lam, n_theta=len(q))
    P = O.PolarOperator(kind, lam, q, d, oversample_at=0.0)
    D = O.assemble(kind, lam, q, d)
    f = np.exp(2j * angles(q)) + np.sin(angles(q))
    assert np.allclose(P.apply(f), D.apply(f), rtol=0, atol=1e-12 * np.max(np.abs(D.apply(f))))
    u = np.random.default_rng(0).normal(size=(D.shape[0], 2))
    assert np.allclose(P.scaled_rmatvec(u), D.scaled_rmatvec(u), atol=1e-10)
    assert abs(O.operator_norm(P).value - O.dense_norm(D)) <= 1e-10 * O.dense_norm(D)


def test_polar_annulus_matches_dense():
    lam, p = 12.0, 8
    P = O.build_operator("SLP", lam, "annulus", p)
    # same layout, plain kernel sums
    P0 = O.PolarOperator("SLP", lam, P.source, G.quadrature(G.annulus(), p, lam, n_theta=P.N), oversample_at=0.0)
    D = O.assemble("SLP", lam, P.source, G.quadrature(G.annulus(), p, lam, n_theta=P.N))
    assert abs(O.operator_norm(P0).value - O.dense_norm(D)) <= 1e-10 * O.dense_norm(D)
    # oversampling near the circles only refines the quadrature
    assert abs(O.operator_norm(P).value - O.dense_norm(D)) <= 2e-2 * O.dense_norm(D)


@pytest.mark.parametrize("kind", ["SLP", "DLP", "dE"])
def test_lattice_matches_dense(kind):
    lam, p = 15.0, 8
    L = O.build_operator(kind, lam, "box", p)
    D = O.build_operator(kind, lam, "box", p, structured=False)
    f = np.random.default_rng(1).normal(size=D.shape[1]) + 0j
    assert np.allclose(L.apply(f), D.apply(f), atol=1e-12 * np.max(np.abs(D.apply(f))))
    assert abs(O.operator_norm(L).value - O.operator_norm(D).value) <= 1e-7 * O.operator_norm(D).value


def test_segment_slo_apply(frozen):
    for rec in frozen["segment_slo_apply"]:
        lam, x = rec["lam"], rec["x"]
        geom = G.make_geometry("segment", p=(-1.0, 0.0), q=(1.0, 0.0))
        # add x as an extra target via a second rule on the same segment
        q = G.quadrature(geom, 16, lam)
        A = O.assemble("SLO", lam, q, geometry=geom)
        f = np.cos(3 * q.nodes[:, 0]) + q.nodes[:, 0] ** 2
        # interpolate the output along the segment at x with the panel's Legendre nodes
        out = A.apply(f)
        pan = q.panel[np.argmin(np.abs(q.nodes[:, 0] - x))]
        sel = q.panel == pan
        xs, vals = q.nodes[sel, 0], out[sel]
        c = np.polynomial.polynomial.polyfit(xs - x, vals, len(xs) - 1)
        ref = complex(rec["re"], rec["im"])
        assert abs(c[0] - ref) <= 1e-6 * abs(ref)


def test_slo_rejects_distinct_target():
    g, q = circle_quad(10.0)
    d = G.quadrature(G.disc(), 8, 10.0)
    with pytest.raises(O.AssemblyError):
        O.assemble("SLO", 10.0, q, d)


def test_node_collision_is_reported():
    g, q = circle_quad(10.0)
    with pytest.raises(O.AssemblyError):
        O.assemble("SLP", 10.0, q, q)


def test_dense_budget_refusal(monkeypatch):
    monkeypatch.setenv("LAYERLAB_BUDGET", "100")
    g = G.make_geometry("segment")
    with pytest.raises(G.BudgetExceeded):
        O.build_operator("SLO", 40.0, "segment", 10)


def test_start_block_is_deterministic_and_orthonormal():
    a, b = O.start_block(64, 5), O.start_block(64, 5)
    assert np.array_equal(a, b)
    assert np.allclose(a.conj().T @ a, np.eye(5), atol=1e-12)


@given(lam=st.floats(5.0, 60.0), R=st.floats(0.5, 2.0))
def test_circulant_norm_is_symbol_max(lam, R):
    q = G.quadrature(G.make_geometry("circle", R=R), 8, lam)
    C = O.CirculantOperator("SLO", lam, q)
    power = O.operator_norm(C, exact=False, tol=1e-12).value
    assert abs(power - np.max(np.abs(C.symbol))) <= 1e-6 * power


@given(seed=st.integers(0, 2**31 - 1))
def test_adjoint_property_random(seed):
    rng = np.random.default_rng(seed)
    m, n = int(rng.integers(3, 30)), int(rng.integers(3, 30))
    qs = G.QuadratureSet(np.zeros((n, 2)), rng.uniform(0.1, 1, n), "s", "none", 10.0, 1.0)
    qt = G.QuadratureSet(np.zeros((m, 2)), rng.uniform(0.1, 1, m), "t", "none", 10.0, 1.0)
    A = O.OperatorMatrix("SLP", 1.0, qs, qt, rng.normal(size=(m, n)) + 1j * rng.normal(size=(m, n)), 10.0)
    a = O.operator_norm(A, tol=1e-14, maxiter=5000).value
    b = O.operator_norm(A.adjoint(), tol=1e-14, maxiter=5000).value
    assert abs(a - b) <= 1e-10 * a


def test_potential_onto_shifted_copy_collides():
    g, q = circle_quad(10.0)
    d = G.QuadratureSet(q.nodes[:5].copy(), q.weights[:5].copy(), "t", "none", 10.0, 10.0)
    with pytest.raises(O.AssemblyError):
        O.assemble("DLP", 10.0, q, d)
