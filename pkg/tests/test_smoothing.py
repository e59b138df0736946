import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from colombeau import boxes
from colombeau import distributions as D
from colombeau import geometry as G
from colombeau import smoothing as S
from colombeau.maps import Diffeomorphism
from colombeau.mollifiers import make_mollifier

DOMAIN = (-2.0, 2.0)
M = G.box_manifold([DOMAIN])
LINE = G.line(M)
NET = S.convolution_net(4, [DOMAIN])
RHO = make_mollifier(1, 4)
X = np.linspace(-1.0, 1.0, 21)[:, None]


def section(spec):
    d = D.parse_spec(spec) if isinstance(spec, str) else spec
    return D.DistributionalSection.scalar(LINE, d)


def test_delta_closed_form():
    eps = 0.1
    x = np.linspace(-0.15, 0.15, 31)[:, None]
    got = NET.apply(eps, section("delta(0)"), "main", x, 0).value[:, 0]
    assert np.allclose(got, RHO(-x / eps) / eps, rtol=1e-12, atol=1e-14)


def test_smooth_density_against_direct_quadrature():
    eps = 0.3
    got = NET.apply(eps, section("smooth(exp(x)*cos(2*x))"), "main", X[::4], 0).value[:, 0]
    for x, g in zip(X[::4, 0], got):
        ref, _ = quad(lambda y: np.exp(y) * np.cos(2 * y) * RHO([(y - x) / eps])[0] / eps, x - eps, x + eps,
                      epsabs=1e-14, limit=200)
        assert g == pytest.approx(ref, rel=1e-10, abs=1e-12)


def test_heaviside_derivative_is_smoothed_delta():
    eps = 0.2
    jh = NET.apply(eps, section("heaviside(0)"), "main", X, 1)
    jd = NET.apply(eps, section("delta(0)"), "main", X, 0)
    assert np.allclose(jh[(1,)], jd.value, atol=1e-10)


def test_zero_section_maps_to_zero():
    assert np.all(NET.apply(0.2, section(D.zero(1)), "main", X, 2).data == 0.0)


def test_reproduction_slope_on_smooth_functions():
    eps = 2.0 ** -np.arange(2, 6)
    u = section("smooth(sin(x))")
    for order in range(3):
        errs = []
        for e in eps:
            j = NET.apply(e, u, "main", X, order)
            exact = [np.sin, np.cos, lambda t: -np.sin(t)][order](X[:, 0])
            errs.append(np.max(np.abs(j[(order,)][:, 0] - exact)))
        slope = np.polyfit(np.log(1 / eps), -np.log(errs), 1)[0]
        assert slope >= NET.q + 1 - 0.25


def test_boundary_too_close_raises():
    with pytest.raises(S.SmoothingDomainError, match="shrink eps or K"):
        NET.apply(1.5, section("delta(0)"), "main", X, 0)


@settings(max_examples=30, deadline=None)
@given(p=st.floats(-0.9, 0.9), eps=st.floats(0.02, 0.5))
def test_locality_of_point_masses(p, eps):
    far = X[np.abs(X[:, 0] - p) > NET.radius(eps)]
    if len(far):
        assert np.all(NET.apply(eps, section(D.delta(p)), "main", far, 1).data == 0.0)


def test_transport_rejects_non_identity_diagonal():
    scalar = NET.entries[0][0]
    with pytest.raises(ValueError):
        S.VectorSmoothingOperatorNet([[scalar, None], [None, scalar]], transport=[["2", "0"], ["0", "1"]])


# ----------------------------------------------------------------------------
# operator Lie derivative


def test_lie_so_of_zero_field_is_zero():
    net = S.lie_so(G.vector_field(M, ["0"]), NET)
    assert np.all(net.apply(0.1, section("delta(0.1)"), "main", X, 1).data == 0.0)


@pytest.mark.parametrize("spec", ["delta(0)", "heaviside(0.2)", "smooth(sin(x))"])
def test_lie_so_of_translation_field_vanishes(spec):
    net = S.lie_so(G.vector_field(M, ["1"]), NET)
    assert np.max(np.abs(net.apply(0.1, section(spec), "main", X, 1).data)) < 1e-10


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_lie_so_pairings_decay_for_dilation_field():
    net = S.lie_so(G.vector_field(M, ["x"]), NET)
    wit = D.WitnessFunction(0.1, 0.8)
    u = section("delta(0)")
    eps = 2.0 ** -np.arange(2, 6)
    vals = []
    for e in eps:
        val, _ = quad(lambda t: net.apply(e, u, "main", [[t]], 0).value[0, 0] * wit([[t]])[0], -e, e,
                      epsabs=1e-17, epsrel=1e-12, limit=400)
        vals.append(abs(val))
    slope = np.polyfit(np.log(1 / eps), -np.log(vals), 1)[0]
    assert slope >= 1 - 0.25


# ----------------------------------------------------------------------------
# restriction and gluing


def test_restriction_agrees_with_parent_near_the_point():
    u_box, v = (-1.0, 2.0), [(0.0, 1.0)]
    net = S.convolution_net(4, [u_box])
    line = G.line(G.box_manifold([u_box]))
    line_v = G.line(G.box_manifold(v))
    r = S.restrict_so(net, v)
    u = D.DistributionalSection.scalar(line, D.delta(0.5))
    uv = D.DistributionalSection(line_v, {"main": [D.restrict_dist(D.delta(0.5), v)]})
    x = boxes.grid([(0.25, 0.75)], 33)
    eps0 = r.agreement_eps(((0.25, 0.75),))
    assert eps0 > 0
    for eps in (0.5 * eps0, 0.25 * eps0):
        want = net.apply(eps, u, "main", x, 1).data
        got = r.apply(eps, uv, "main", x, 1).data
        assert np.max(np.abs(got - want)) <= 1e-12 * np.max(np.abs(want))


def test_restriction_kills_distributions_supported_outside():
    v = [(0.0, 1.0)]
    line_v = G.line(G.box_manifold(v))
    r = S.restrict_so(S.convolution_net(4, [(-1.0, 2.0)]), v)
    u = D.DistributionalSection(line_v, {"main": [D.restrict_dist(D.delta(1.5), v)]})
    core = r.partition.weights.core
    assert np.all(r.apply(0.05, u, "main", boxes.grid(core, 17), 1).data == 0.0)


def test_partition_must_sum_to_one():
    bad = S.PartitionOfUnity([S.Cutoff([(-0.5, 0.0)], [(-0.6, 0.1)])], [(-0.5, 0.5)])
    with pytest.raises(S.PartitionError):
        bad.check()


def test_cutoff_plateau_must_be_interior():
    with pytest.raises(S.PartitionError):
        S.Cutoff([(-1.0, 1.0)], [(-1.0, 1.5)])


def test_interval_partition_sums_to_one():
    part = S.interval_partition([(-1.0, 1.0)], 3, 0.2)
    assert part.check() < 1e-12


def test_glued_net_reproduces_smooth_functions():
    cover = [((-1.0, 1.0),), ((0.0, 2.0),)]
    part = S.PartitionOfUnity([S.Cutoff([(-0.6, 0.4)], [(-0.7, 0.8)]), S.Cutoff([(0.6, 1.6)], [(0.3, 1.7)])],
                              [(-0.5, 1.5)])
    glued = S.glue_so(cover, [S.convolution_net(4, list(cover[0])), S.convolution_net(2, list(cover[1]))], part)
    line = G.line(G.box_manifold([(-1.0, 2.0)]))
    u = D.DistributionalSection.scalar(line, D.SmoothDensity("sin(x)"))
    x = boxes.grid([(-0.4, 1.4)], 19)
    errs = [np.max(np.abs(glued.apply(e, u, "main", x, 0).value[:, 0] - np.sin(x[:, 0]))) for e in (0.04, 0.02)]
    assert errs[1] < errs[0] < 1e-4


# ----------------------------------------------------------------------------
# pushforward and atlases


def test_pushforward_of_convolution_by_translation_is_convolution():
    mu = Diffeomorphism.translation([0.25], [DOMAIN])
    pushed = S.pushforward_so(mu, NET)
    m2 = G.box_manifold([mu.target[0]])
    u = D.DistributionalSection.scalar(G.line(m2), D.parse_spec("heaviside(0.3) + delta(0.6)", 1, mu.target))
    net2 = S.convolution_net(4, list(mu.target))
    x = np.linspace(-0.5, 1.0, 13)[:, None]
    assert np.allclose(pushed.apply(0.1, u, "main", x, 1).data, net2.apply(0.1, u, "main", x, 1).data, atol=1e-10)


def test_circle_atlas_reproduces_sine():
    c = G.circle()
    line = G.line(c)
    nets = {k: S.convolution_net(4, c.chart(k).domain) for k in c.charts}
    an = S.AtlasNet(line, nets, S.circle_weights())
    u = D.DistributionalSection.uniform(line, [D.SmoothDensity("sin(x)")])
    x = np.linspace(-3.0, 3.0, 13)[:, None]
    assert np.max(np.abs(an.apply(0.05, u, "A", x, 0).value[:, 0] - np.sin(x[:, 0]))) < 1e-6
