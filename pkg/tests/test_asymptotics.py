import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from colombeau import asymptotics as A
from colombeau import distributions as D
from colombeau import genfun as F
from colombeau import geometry as G
from colombeau import smoothing as S
from trees import FAMILY, LINE

K = ((-1.0, 1.0),)


def scalar(spec) -> F.Embed:
    return F.embed(D.DistributionalSection.scalar(LINE, D.parse_spec(spec)))


def smooth(expr) -> F.SmoothCoeff:
    return F.sigma(G.SmoothSection(LINE, {"main": expr}))


# ----------------------------------------------------------------------------
# grids and fits


def test_dyadic_grid_values():
    assert A.EpsGrid(3, 6).values == (2.0**-3, 2.0**-4, 2.0**-5, 2.0**-6)
    assert A.EpsGrid(3, 6).cut(0.1).values == (2.0**-4, 2.0**-5, 2.0**-6)
    assert len(A.EpsGrid(1, 8)) == 8


def test_counted_grid_is_log_spaced():
    vals = np.array(A.EpsGrid(2, 10, count=5).values)
    assert vals[0] == 2.0**-2 and vals[-1] == 2.0**-10
    assert np.allclose(np.diff(np.log2(vals)), -2.0)


@pytest.mark.parametrize("args", [dict(k_min=5, k_max=4), dict(k_min=1, k_max=4, count=1)])
def test_bad_grids_rejected(args):
    with pytest.raises(A.ConfigurationError):
        A.EpsGrid(**args)


@settings(max_examples=40, deadline=None)
@given(c=st.floats(1e-3, 1e3), s=st.floats(-4, 6))
def test_fit_recovers_exact_power_law(c, s):
    eps = np.array(A.EpsGrid(3, 10).values)
    fit = A.fit_slope(eps, c * eps**s)
    assert fit.slope == pytest.approx(s, abs=1e-9)
    assert math.exp(fit.log_constant) == pytest.approx(c, rel=1e-8)
    assert fit.residual < 1e-9


def test_fit_excludes_noise_floor():
    eps = np.array(A.EpsGrid(1, 8).values)
    vals = eps**3
    noise = np.where(eps < 2.0**-5, vals, 0.0)
    fit = A.fit_slope(eps, vals, noise)
    assert fit.used == 5 and fit.slope == pytest.approx(3.0)
    assert any("roundoff" in f for f in fit.flags)


def test_fit_all_zero_is_flagged_zero():
    fit = A.fit_slope([0.5, 0.25, 0.125], [0.0, 0.0, 0.0])
    assert fit.zero and fit.slope == math.inf


def test_fit_input_errors():
    with pytest.raises(ValueError):
        A.fit_slope([0.5, 0.25], [1.0])
    with pytest.raises(ValueError):
        A.fit_slope([0.5, 0.25], [1.0, -1.0])


# ----------------------------------------------------------------------------
# sweeps


def test_delta_is_moderate_of_degree_one():
    rep = A.moderateness_test(scalar("delta(0)"), FAMILY, seminorm=A.Seminorm(K))
    assert rep.verdict == "moderate(1)" and rep.slope == pytest.approx(-1.0, abs=0.05)


def test_delta_squared_is_moderate_of_degree_two():
    d = scalar("delta(0)")
    rep = A.moderateness_test(d * d, FAMILY, seminorm=A.Seminorm(K))
    assert rep.verdict == "moderate(2)" and rep.slope == pytest.approx(-2.0, abs=0.05)


def test_embedded_smooth_function_minus_coefficient_is_negligible():
    r = scalar("smooth(sin(x))") - smooth("sin(x)")
    psi = S.convolution_net(4, [(-2.0, 2.0)], support_radius=0.6) - FAMILY["R"]
    rep = A.negligibility_test(r, FAMILY, [{"R": psi}], A.Seminorm(K, 1), 3, A.EpsGrid(1, 8))
    assert rep.passed and rep.verdict == "negligible(3)" and rep.slope > 4.5


def test_delta_is_not_negligible():
    rep = A.negligibility_test(scalar("delta(0)"), FAMILY, m_target=1, grid=A.EpsGrid(1, 8))
    assert not rep.passed and rep.verdict == "failed"


def test_negligibility_order_needs_moments():
    net = {"R": S.convolution_net(1, [(-2.0, 2.0)])}
    with pytest.raises(A.ConfigurationError, match="vanishing moments"):
        A.negligibility_test(scalar("delta(0)"), net, m_target=3)


def test_derivative_free_test_needs_certificate():
    r = scalar("smooth(sin(x))") - smooth("sin(x)")
    with pytest.raises(A.PreconditionError):
        A.negligibility_noderiv(r, FAMILY, [])
    cert = A.moderateness_test(r, FAMILY)
    rep = A.negligibility_noderiv(r, FAMILY, [cert], m_target=3, grid=A.EpsGrid(1, 8))
    assert rep.passed and rep.certificate == cert.key()


def test_short_grid_rejected():
    with pytest.raises(A.ConfigurationError):
        A.moderateness_test(scalar("delta(0)"), FAMILY, grid=A.EpsGrid(3, 5))


def test_evaluation_failure_names_eps():
    with pytest.raises(A.SweepError) as info:
        A.moderateness_test(scalar("delta(0)"), FAMILY, grid=A.EpsGrid(0, 4))
    assert info.value.eps == 1.0 and "eps=1" in str(info.value)


def test_residual_check_threshold():
    ok = A.residual_check("zero", [0.5, 0.25], lambda e: 1e-12)
    bad = A.residual_check("big", [0.5, 0.25], lambda e: e)
    assert ok.verdict == "identity" and ok.passed
    assert bad.verdict == "failed" and not bad.passed


# ----------------------------------------------------------------------------
# association


def test_heaviside_times_delta_is_associated_with_half_delta():
    r = scalar("heaviside(0)") * scalar("delta(0)")
    half = D.DistributionalSection.scalar(LINE, D.parse_spec("0.5*delta(0)"))
    rep = A.association_test(r, half, A.default_witnesses(), FAMILY, A.EpsGrid(3, 8))
    assert rep.passed and rep.verdict == "associated"


def test_delta_is_not_associated_with_zero():
    rep = A.association_test(scalar("delta(0)"), D.zero(1), A.default_witnesses(), FAMILY, A.EpsGrid(3, 8))
    assert not rep.passed


def test_generalized_pairing_of_smooth_function():
    psi = D.WitnessFunction(0.1, 0.7, "1 + x")
    got = A.generalized_pairing(smooth("exp(x)"), FAMILY, 0.1, psi)
    want = D.pair(D.SmoothDensity("exp(x)"), psi)
    assert got == pytest.approx(want, rel=1e-10)


# ----------------------------------------------------------------------------
# output


def _reports():
    return [A.residual_check("a", [0.5, 0.25], lambda e: 0.0, scenario="s", seminorm="K=[-1,1];m=2"),
            A.moderateness_test(scalar("delta(0)"), FAMILY, scenario="s")]


def test_csv_columns_and_rows():
    rows = list(csv.reader(io.StringIO(A.reports_to_csv(_reports()))))
    assert tuple(rows[0]) == A.CSV_COLUMNS
    assert len(rows) == 1 + 2 + len(A.EpsGrid())
    assert all(len(r) == len(A.CSV_COLUMNS) for r in rows)


def test_json_is_sorted_and_parseable():
    text = A.reports_to_json(_reports(), {"scenario": "s"})
    doc = json.loads(text)
    assert doc["scenario"] == "s" and doc["note"] == A.SURROGATE_NOTE
    keys = [f"{r['scenario']}|{r['test']}|{r['seminorm']}|j={r['j']}" for r in doc["reports"]]
    assert keys == sorted(keys)
    assert A.reports_to_json(list(reversed(_reports())), {"scenario": "s"}) == text
