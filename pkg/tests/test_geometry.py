import numpy as np
import pytest
import sympy as sp

from colombeau import boxes
from colombeau import geometry as G
from colombeau.expr import coords

X1, = coords(1)
X2 = coords(2)


def log_line() -> G.ChartedManifold:
    """(0.5, 3) with a second chart in logarithmic coordinates."""
    (x,) = coords(1)
    charts = {"a": G.Chart("a", ((0.5, 3.0),)), "b": G.Chart("b", ((np.log(0.5), np.log(3.0)),))}
    return G.ChartedManifold("logline", 1, charts, {("a", "b"): (sp.log(x),), ("b", "a"): (sp.exp(x),)})


@pytest.mark.parametrize("make", [G.circle, G.torus, log_line])
def test_cocycle_condition(make):
    assert make().cocycle_residual() < 1e-10


def test_torus_has_four_charts_and_wraps_angles():
    t = G.torus()
    assert sorted(t.charts) == ["AA", "AB", "BA", "BB"]
    p = np.array([[-1.0, 2.0]])
    assert np.allclose(t.transition("AA", "BB", p), [[2 * np.pi - 1.0, 2.0]])


def test_dual_and_tensor_transitions():
    m = log_line()
    pts = np.array([[0.7], [1.3], [2.5]])
    up = G.tangent(m).transition_matrix("a", "b", pts)[:, 0, 0]
    down = G.cotangent(m).transition_matrix("a", "b", pts)[:, 0, 0]
    mixed = G.tensor_bundle(m, 1, 1).transition_matrix("a", "b", pts)[:, 0, 0]
    assert np.allclose(up, 1 / pts[:, 0])
    assert np.allclose(down, 1 / up)
    assert np.allclose(mixed, up * down)


def test_two_dimensional_tensor_transition_is_kronecker():
    t = G.torus()
    pts = boxes.grid(((-1.0, 1.0), (0.5, 2.5)), 3)
    a = G.tangent(t).transition_matrix("AA", "AB", pts)
    b = G.cotangent(t).transition_matrix("AA", "AB", pts)
    ab = G.tensor_bundle(t, 1, 1).transition_matrix("AA", "AB", pts)
    assert np.allclose(ab, np.einsum("pij,pkl->pikjl", a, b).reshape(len(pts), 4, 4))


def test_section_overlap_compatibility():
    m = log_line()
    good = G.SmoothSection(G.tangent(m), {"a": ["x"], "b": ["1"]})
    bad = G.SmoothSection(G.tangent(m), {"a": ["x"], "b": ["exp(x)"]})
    assert good.compatibility_residual() < 1e-10
    assert bad.compatibility_residual() > 0.1


def test_lie_of_scalar_along_coordinate_field():
    m = G.box_manifold([(-1.0, 1.0)])
    f = G.SmoothSection(G.line(m), {"main": "sin(x)*exp(x)"})
    lf = G.classical_lie(G.vector_field(m, ["1"]), f)
    assert sp.simplify(lf.chart_exprs("main")[()] - sp.diff(sp.sin(X1) * sp.exp(X1), X1)) == 0


def test_bracket_of_dilation_and_translation():
    m = G.box_manifold([(-1.0, 1.0)])
    br = G.classical_bracket(G.vector_field(m, ["x"]), G.vector_field(m, ["1"]))
    assert br.chart_exprs("main")[0] == -1


def test_bracket_against_flow_finite_difference():
    # flow of x d/dx is x e^t; (phi_-t)_* Y at x is e^{-t} Y(x e^t)
    m = G.box_manifold([(-1.0, 1.0)])
    br = G.classical_bracket(G.vector_field(m, ["x"]), G.vector_field(m, ["1 + x^2"]))
    x = np.linspace(-0.9, 0.9, 7)
    h = 1e-5
    pushed = lambda t: np.exp(-t) * (1 + (x * np.exp(t)) ** 2)
    fd = (pushed(h) - pushed(-h)) / (2 * h)
    assert np.allclose(br("main", x[:, None])[:, 0], fd, atol=1e-8)


def test_lie_of_zero_is_zero():
    m = G.box_manifold([(-1.0, 1.0), (-1.0, 1.0)])
    zero = G.SmoothSection(G.tensor_bundle(m, 1, 1), {"main": [["0", "0"], ["0", "0"]]})
    out = G.classical_lie(G.vector_field(m, ["y", "x^2"]), zero)
    assert all(e == 0 for e in out.chart_exprs("main").ravel())


PLANE = G.box_manifold([(-1.0, 1.0), (-1.0, 1.0)])
XF = G.vector_field(PLANE, ["1 + y^2", "sin(x)"])
YF = G.vector_field(PLANE, ["x*y", "cos(y)"])


def test_commutator_of_lie_derivatives_on_scalars():
    f = G.SmoothSection(G.line(PLANE), {"main": "exp(x)*y^3"})
    lhs = G.classical_lie(XF, G.classical_lie(YF, f)).chart_exprs("main")[()] - \
        G.classical_lie(YF, G.classical_lie(XF, f)).chart_exprs("main")[()]
    rhs = G.classical_lie(G.classical_bracket(XF, YF), f).chart_exprs("main")[()]
    pts = boxes.grid(PLANE.chart("main").domain, 9)
    gap = sp.lambdify(X2, lhs - rhs, "numpy")(pts[:, 0], pts[:, 1])
    assert np.max(np.abs(gap)) < 1e-8


def _outer(v: G.SmoothSection, w: G.SmoothSection) -> G.SmoothSection:
    a, b = v.chart_exprs("main"), w.chart_exprs("main")
    return G.SmoothSection(G.tensor_bundle(PLANE, 1, 1), {"main": np.multiply.outer(a, b)})


def test_leibniz_and_contraction_for_classical_lie():
    w = G.SmoothSection(G.cotangent(PLANE), {"main": ["x^2", "exp(y)"]})
    lhs = G.classical_lie(XF, _outer(YF, w)).chart_exprs("main")
    rhs = _outer(G.classical_lie(XF, YF), w).chart_exprs("main") + _outer(YF, G.classical_lie(XF, w)).chart_exprs("main")
    assert all(sp.simplify(e) == 0 for e in (lhs - rhs).ravel())
    pairing = G.SmoothSection(G.line(PLANE), {"main": np.trace(_outer(YF, w).chart_exprs("main"))})
    assert sp.simplify(np.trace(lhs) - G.classical_lie(XF, pairing).chart_exprs("main")[()]) == 0


def test_flat_connection_is_directional_derivative_with_zero_curvature():
    flat = G.SmoothConnection.flat(PLANE)
    s = G.vector_field(PLANE, ["x*y", "y^2"])
    cov = G.classical_covderiv(flat, XF, s).chart_exprs("main")
    want = [sum(XF.chart_exprs("main")[i] * sp.diff(s.chart_exprs("main")[k], X2[i]) for i in range(2)) for k in range(2)]
    assert all(sp.simplify(c - w) == 0 for c, w in zip(cov, want))
    assert all(e == 0 for e in G.classical_curvature(flat).chart_exprs("main").ravel())


CONF_U = sp.Rational(1, 10) * sp.sin(X2[0])


def test_levi_civita_of_conformal_metric_matches_closed_formula():
    g = G.conformal_metric(G.torus(), CONF_U)
    gamma = G.levi_civita_classical(g).chart_gamma("AA")
    du = [sp.diff(CONF_U, v) for v in X2]
    for i in range(2):
        for j in range(2):
            for k in range(2):
                want = int(i == k) * du[j] + int(j == k) * du[i] - int(i == j) * du[k]
                assert sp.simplify(gamma[i, j, k] - want) == 0


def test_conformal_scalar_curvature_oracle():
    g = G.conformal_metric(G.torus(), CONF_U)
    scal = G.scalar_curvature_exprs(g.chart_exprs("AA"), X2)
    oracle = -2 * sp.exp(-2 * CONF_U) * (sp.diff(CONF_U, X2[0], 2) + sp.diff(CONF_U, X2[1], 2))
    pts = boxes.grid(((-3.0, 3.0), (-3.0, 3.0)), 64)
    gap = sp.lambdify(X2, scal - oracle, "numpy")(pts[:, 0], pts[:, 1])
    assert np.max(np.abs(gap)) < 1e-6


def test_levi_civita_is_torsion_free_and_metric():
    g = G.metric(PLANE, [["1 + x^2", "x*y/4"], ["x*y/4", "2 + sin(y)"]])
    conn = G.levi_civita_classical(g)
    assert all(e == 0 for e in G.torsion_exprs(conn.chart_gamma("main")).ravel())
    pts = boxes.grid(PLANE.chart("main").domain, 7)
    for d in (["1", "0"], ["0", "1"]):
        nabla_g = G.classical_covderiv(conn, G.vector_field(PLANE, d), g).chart_exprs("main")
        vals = np.array([sp.lambdify(X2, e, "numpy")(pts[:, 0], pts[:, 1]) * np.ones(len(pts)) for e in nabla_g.ravel()])
        assert np.max(np.abs(vals)) < 1e-8


def test_named_instances():
    assert G.named_manifold("torus").n == 2
    assert G.named_bundle(G.torus(), "tensor(1,2)").fiber == (2, 2, 2)
    with pytest.raises(G.GeometryError):
        G.named_manifold("sphere")
    with pytest.raises(G.GeometryError):
        G.named_bundle(G.torus(), "spinor")
    with pytest.raises(G.GeometryError):
        G.torus().chart("CC")
