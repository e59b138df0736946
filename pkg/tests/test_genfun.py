import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from colombeau import distributions as D
from colombeau import genfun as F
from colombeau import geometry as G
from colombeau import smoothing as S
from colombeau.mollifiers import make_mollifier
from trees import DIRECTION, EPS, FAMILY, LINE, MANIFOLD, POINTS, TANGENT, expected_degree, random_trees

RHO = make_mollifier(1, 4)


def scalar(spec) -> F.Embed:
    return F.embed(D.DistributionalSection.scalar(LINE, D.parse_spec(spec)))


def smooth(expr) -> F.SmoothCoeff:
    return F.sigma(G.SmoothSection(LINE, {"main": expr}))


def value(r, eps=EPS, order=0, family=FAMILY):
    return F.evaluate(r, family, eps, POINTS, order).data


def test_embedded_delta_is_scaled_mollifier():
    got = value(scalar("delta(0)"), 0.5)[0, :]
    assert np.allclose(got, RHO(-POINTS / 0.5) / 0.5, rtol=1e-12, atol=1e-14)


def test_smooth_coefficient_ignores_the_net():
    a = value(smooth("cos(x)"), 0.5)
    b = value(smooth("cos(x)"), 0.125)
    assert np.array_equal(a, b) and np.allclose(a[0], np.cos(POINTS[:, 0]))


def test_product_is_pointwise():
    h, d = scalar("heaviside(0.1)"), scalar("delta(0)")
    assert np.allclose(value(h * d), value(h) * value(d), rtol=1e-14)


def test_degrees_of_nodes():
    h, d = scalar("heaviside(0)"), scalar("delta(0)")
    assert F.total_degree(smooth("x")) == 0
    assert F.total_degree(h) == 1
    assert F.total_degree(h * d * d) == 3
    assert F.total_degree(h * d + h) == 2
    assert F.total_degree(F.lie_hat(G.vector_field(MANIFOLD, ["x"]), h * d)) == 2
    g = F.embed(D.DistributionalSection.uniform(G.tensor_bundle(MANIFOLD, 0, 2), [D.SmoothDensity("1 + x^2")]))
    assert F.total_degree(F.MetricChristoffel(g)) is None
    assert F.total_degree(F.inverse_metric(g)) is None


def test_differentials_beyond_degree_are_exact_zeros():
    r = scalar("heaviside(0)") * scalar("delta(0.2)")
    for j in (3, 4):
        assert np.all(F.differential(r, j, FAMILY, [DIRECTION] * j, EPS, POINTS, 1).data == 0.0)


def test_first_differential_of_product_rule():
    h, d = scalar("heaviside(0)"), scalar("delta(0.2)")
    hp = F.evaluate(h, {"R": DIRECTION["R"]}, EPS, POINTS).data
    dp = F.evaluate(d, {"R": DIRECTION["R"]}, EPS, POINTS).data
    want = hp * value(d) + value(h) * dp
    got = F.differential(h * d, 1, FAMILY, [DIRECTION], EPS, POINTS).data
    assert np.allclose(got, want, rtol=1e-12, atol=1e-14)


def test_direction_count_checked():
    with pytest.raises(F.GenFunError):
        F.differential(scalar("delta(0)"), 2, FAMILY, [DIRECTION], EPS, POINTS)


def test_missing_net_reported():
    with pytest.raises(F.GenFunError, match="no net"):
        F.evaluate(scalar("delta(0)"), {"TM": FAMILY["TM"]}, EPS, POINTS)


def test_shape_errors():
    v = F.sigma(G.vector_field(MANIFOLD, ["1"]))
    with pytest.raises(F.GenFunError):
        F.Add(v, smooth("1"))
    with pytest.raises(F.GenFunError):
        F.contract(v, 0, 1)
    with pytest.raises(F.GenFunError):
        F.lie_tilde(smooth("1"), v)
    with pytest.raises(F.GenFunError):
        F.MetricChristoffel(v)
    with pytest.raises(F.GenFunError):
        F.scalar_mul(v, smooth("1"))


def test_degenerate_metric_rejected():
    g = F.embed(D.DistributionalSection.uniform(G.tensor_bundle(MANIFOLD, 0, 2), [D.SmoothDensity("0")]))
    pts = np.array([[0.0], [0.5]])
    with pytest.raises(F.SingularMetricError):
        F.evaluate(F.MetricChristoffel(g), {"T0,2M": FAMILY["R"]}, 0.01, pts)


def test_contraction_of_vector_with_covector():
    w = F.sigma(G.SmoothSection(G.cotangent(MANIFOLD), {"main": ["exp(x)"]}))
    v = F.embed(D.DistributionalSection.uniform(TANGENT, [D.delta(0.1)]))
    paired = F.contract(F.tensor(w, v), 0, 1)
    want = np.exp(POINTS[:, 0]) * value(v)[0, :, 0]
    assert np.allclose(value(paired)[0], want, rtol=1e-13)


def test_components_reconstruct_vector_section():
    v = F.embed(D.DistributionalSection.uniform(TANGENT, [D.parse_spec("delta(0.1) + heaviside(-0.2)")]))
    parts = F.components(v)
    assert len(parts) == 1 and parts[0].bundle.slots == ()
    back = F.reconstruct(parts, v.bundle)
    assert np.allclose(value(back, order=1), value(v, order=1), rtol=1e-14, atol=1e-15)


@pytest.mark.parametrize("tree", random_trees(8, seed=7), ids=lambda r: F.structure(r)[:40])
def test_record_round_trip(tree):
    back = F.from_record(F.to_record(tree))
    assert F.structure(back) == F.structure(tree)
    assert np.allclose(value(back, order=1), value(tree, order=1), rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("tree", random_trees(12, seed=11), ids=lambda r: F.structure(r)[:40])
def test_series_differential_matches_interpolation(tree):
    deg = F.total_degree(tree)
    assert deg == expected_degree(tree)
    ds = [F.differential(tree, j, FAMILY, [DIRECTION] * j, EPS, POINTS, 1).data for j in range(deg + 2)]
    scale = max(np.max(np.abs(d)) for d in ds)
    for j, d in enumerate(ds):
        ref = F.interpolation_differential(tree, j, FAMILY, DIRECTION, EPS, POINTS, 1)
        assert np.max(np.abs(d - ref)) <= 1e-9 * max(scale, 1e-300)


def test_restriction_of_tree_matches_parent_inside():
    r = smooth("cos(x)") * scalar("delta(0.1) + heaviside(-0.3)")
    v = [(-1.5, 1.5)]
    fam_v = F.restrict_family({"R": FAMILY["R"]}, v)
    core = fam_v["R"].partition.weights.core
    eps = 0.5 * fam_v["R"].agreement_eps(core)
    pts = np.linspace(core[0][0], core[0][1], 17)[:, None]
    got = F.evaluate(F.restrict_gensec(r, v), fam_v, eps, pts, 1).data
    want = F.evaluate(r, {"R": FAMILY["R"]}, eps, pts, 1).data
    assert np.max(np.abs(got - want)) <= 1e-12 * np.max(np.abs(want))


@settings(max_examples=20, deadline=None)
@given(c=st.floats(-5, 5), p=st.floats(-0.5, 0.5))
def test_scale_and_add_are_linear(c, p):
    a = scalar(f"delta({p})")
    b = scalar(f"heaviside({-p})")
    assert np.allclose(value(F.Scale(c, a)), c * value(a), rtol=1e-14, atol=1e-14)
    assert np.allclose(value(a + b), value(b + a), rtol=1e-14, atol=1e-14)
    assert np.allclose(value(a - a), 0.0, atol=1e-13)


@settings(max_examples=10, deadline=None)
@given(shift=st.floats(-0.4, 0.4))
def test_shifted_family_is_affine_in_t(shift):
    r = scalar("delta(0)") * scalar("heaviside(0.1)")
    fam = F.shifted_family(FAMILY, DIRECTION, shift)
    coef = F.interpolation_coefficients(r, FAMILY, DIRECTION, EPS, POINTS, 2)
    want = coef[0] + shift * coef[1] + shift**2 * coef[2]
    assert np.allclose(F.evaluate(r, fam, EPS, POINTS).data, want, rtol=1e-10, atol=1e-12)


def test_atlas_family_on_circle():
    c = G.circle()
    line = G.line(c)
    nets = {k: S.convolution_net(4, c.chart(k).domain) for k in c.charts}
    fam = {"R": S.AtlasNet(line, nets, S.circle_weights())}
    r = F.embed(D.DistributionalSection.uniform(line, [D.SmoothDensity("sin(x)")])) - \
        F.sigma(G.SmoothSection.uniform(line, "sin(x)"))
    pts = np.linspace(-3.0, 3.0, 9)[:, None]
    assert np.max(np.abs(F.evaluate(r, fam, 0.05, pts, 0, "A").data)) < 1e-6
