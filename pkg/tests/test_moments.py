import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import gaussian_moments_by_quad, closed_form_moments
from trf.moments import (
    Abs,
    Cos,
    Custom,
    GaussianBump,
    Identity,
    LeakyCombo,
    Quadratic,
    QuadratureError,
    ReLU,
    RFFPair,
    Sign,
    Sin,
    Step,
    Ternary,
    UnsupportedActivation,
    activation_from_name,
    builtin_activations,
    hermite_rule,
    moments_closed_form,
    moments_of,
    moments_quadrature,
    moments_ternary_closed,
    moments_ternary_alt,
)

TABLE_KINDS = [
    ("abs", Abs()),
    ("relu", ReLU()),
    ("leaky", LeakyCombo(1.0, 0.1)),
    ("leaky", LeakyCombo(0.3, 2.0)),
    ("quadratic", Quadratic(1.0, 1.0, 0.0)),
    ("quadratic", Quadratic(-0.5, 2.0, 3.0)),
    ("gaussian_bump", GaussianBump()),
    ("cos", Cos()),
    ("sin", Sin()),
    ("identity", Identity()),
    ("sign", Sign()),
    ("step", Step()),
    ("rff", RFFPair()),
]


def _params(kind):
    if isinstance(kind, LeakyCombo):
        return {"a_plus": kind.a_plus, "a_minus": kind.a_minus}
    if isinstance(kind, Quadratic):
        return {"a2": kind.a2, "a1": kind.a1, "a0": kind.a0}
    return {}


@pytest.mark.parametrize("tau", [0.25, 1.0, 3.7])
@pytest.mark.parametrize("name,kind", TABLE_KINDS)
def test_closed_forms_match_table(name, kind, tau):
    got = moments_closed_form(kind, tau).as_tuple()
    want = closed_form_moments(name, tau, **_params(kind))
    np.testing.assert_allclose(got, want, rtol=1e-13, atol=1e-15)


def test_paper_examples():
    d = moments_closed_form(ReLU(), 1.0)
    assert d.d0 == pytest.approx(0.5 * (0.5 - 1 / math.pi), rel=1e-14)
    assert d.d0 == pytest.approx(0.090845, abs=1e-6)
    assert d.d2 == pytest.approx(0.039789, abs=1e-6)
    d = moments_closed_form(Sign(), 1.0)
    assert d.as_tuple() == pytest.approx((1 - 2 / math.pi, 2 / math.pi, 0.0), abs=1e-15)
    assert moments_closed_form(Identity(), 3.7).as_tuple() == (0.0, 1.0, 0.0)
    assert moments_closed_form(Sin(), 1.0).d1 == pytest.approx(0.367879, abs=1e-6)


def test_definitions_hold_against_aux():
    for kind in builtin_activations():
        if isinstance(kind, RFFPair):
            continue
        for tau in (0.25, 1.0, 4.0):
            d = moments_closed_form(kind, tau)
            mean, second, dmean, ddmean = d.aux
            assert d.d0 == pytest.approx(second - mean**2 - tau * dmean**2, abs=1e-10)
            assert d.d1 == pytest.approx(dmean**2, abs=1e-10)
            assert d.d2 == pytest.approx(ddmean**2 / 4, abs=1e-10)


def test_custom_has_no_closed_form():
    with pytest.raises(UnsupportedActivation):
        moments_closed_form(Custom(np.tanh), 1.0)


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------


def test_quadrature_identity():
    d = moments_quadrature(Identity(), 2.0, nodes=64)
    assert d.d1 == pytest.approx(1.0, abs=1e-12)
    assert d.d2 == pytest.approx(0.0, abs=1e-12)


def test_quadrature_relu_matches_closed_form():
    q = moments_quadrature(ReLU(), 1.0, nodes=128).as_tuple()
    np.testing.assert_allclose(q, moments_closed_form(ReLU(), 1.0).as_tuple(), atol=1e-8)


def test_breakpoints_matter_for_kinks():
    closed = moments_closed_form(ReLU(), 1.0).as_tuple()
    plain = moments_quadrature(Custom(lambda t: np.maximum(t, 0)), 1.0, nodes=128, breakpoints=())
    split = moments_quadrature(Custom(lambda t: np.maximum(t, 0), kinks=(0.0,)), 1.0, nodes=128)
    assert np.max(np.abs(np.subtract(plain.as_tuple(), closed))) > 1e-4
    np.testing.assert_allclose(split.as_tuple(), closed, atol=1e-12)


def test_degenerate_ternary_is_sign():
    d = moments_quadrature(Ternary(0.0, 0.0), 1.0, nodes=256)
    assert d.d1 == pytest.approx(2 / math.pi, abs=1e-6)
    assert d.d2 == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("tau", [0.25, 1.0, 4.0])
@pytest.mark.parametrize("kind", builtin_activations() + [Quadratic(0.0, 2.5, 0.0), Ternary(-1.3, 0.2)],
                         ids=lambda k: type(k).__name__)
def test_closed_vs_quadrature(kind, tau):
    closed = moments_closed_form(kind, tau).as_tuple()
    quad = moments_of(kind, tau, nodes=512).as_tuple()
    np.testing.assert_allclose(quad, closed, atol=1e-7, rtol=0)


@pytest.mark.parametrize("kind", [ReLU(), Sign(), Ternary(-0.4, 0.9), GaussianBump(), Sin()],
                         ids=lambda k: type(k).__name__)
def test_quadrature_against_adaptive_oracle(kind):
    ref = gaussian_moments_by_quad(kind, 1.3, kind.breakpoints)
    np.testing.assert_allclose(moments_of(kind, 1.3).as_tuple(), ref, atol=1e-9)


@pytest.mark.parametrize("kind", builtin_activations(), ids=lambda k: type(k).__name__)
def test_quadrature_converged(kind):
    a = moments_of(kind, 1.0, nodes=256).as_tuple()
    b = moments_of(kind, 1.0, nodes=512).as_tuple()
    np.testing.assert_allclose(a, b, atol=1e-9, rtol=0)


@pytest.mark.parametrize("kind", builtin_activations(), ids=lambda k: type(k).__name__)
@pytest.mark.parametrize("tau", [0.25, 1.0, 4.0])
def test_d0_nonnegative(kind, tau):
    assert moments_of(kind, tau).d0 >= -1e-9
    assert moments_closed_form(kind, tau).d0 >= -1e-9


@given(st.floats(-5, 5))
def test_quadratic_scaling(a1):
    d = moments_closed_form(Quadratic(0.0, a1, 0.0), 2.0)
    assert d.d1 == a1 * a1 * moments_closed_form(Identity(), 2.0).d1


def test_quadrature_reports_bad_node():
    with pytest.raises(QuadratureError, match="node"):
        moments_quadrature(Custom(lambda t: np.where(t > 3, np.nan, t)), 1.0)
    with pytest.raises(ValueError):
        moments_quadrature(ReLU(), 1.0, nodes=16)


def test_hermite_rule_exactness():
    x, w = hermite_rule(40)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    # E[z^{2k}] = (2k - 1)!!
    for k in range(1, 10):
        assert w @ x ** (2 * k) == pytest.approx(math.prod(range(1, 2 * k, 2)), rel=1e-11)
    assert hermite_rule(40) is hermite_rule(40)


# --------------------------------------------------------------------------
# ternary moments
# --------------------------------------------------------------------------


def test_ternary_closed_examples():
    d = moments_ternary_closed(0.0, 0.0, 1.0)
    assert d.d1 == pytest.approx(2 / math.pi, rel=1e-15)
    assert d.d2 == 0.0
    s = math.sqrt(math.log(2 / math.pi) + 1)  # (2/pi) e^{-s^2} = e^{-1}
    assert s == pytest.approx(0.7405, abs=1e-4)
    d = moments_ternary_closed(-s, s, 1.0)
    assert d.d1 == pytest.approx(math.exp(-1), rel=1e-12)
    q = moments_quadrature(Ternary(-s, s), 1.0, nodes=512)
    assert q.d1 == pytest.approx(math.exp(-1), abs=1e-9)


@given(st.floats(0.0, 4.0), st.floats(0.1, 5.0))
def test_symmetric_ternary_has_no_d2(s, tau):
    assert moments_ternary_closed(-s, s, tau).d2 == pytest.approx(0.0, abs=1e-30)


@settings(max_examples=30, deadline=None)
@given(st.floats(-2.5, 2.5), st.floats(0.0, 2.5), st.floats(0.3, 3.0))
def test_ternary_closed_vs_quadrature(lo, width, tau):
    sm, sp = lo, lo + width
    closed = moments_ternary_closed(sm, sp, tau).as_tuple()
    quad = moments_of(Ternary(sm, sp), tau).as_tuple()
    np.testing.assert_allclose(quad, closed, atol=1e-9)


def test_alternative_threshold_equations_disagree():
    d1, d2 = moments_ternary_alt(0.0, 0.0, 1.0)
    assert d1 == pytest.approx(4 / math.pi**2)
    assert d1 != pytest.approx(moments_ternary_closed(0.0, 0.0, 1.0).d1)


def test_ternary_rejects_swapped_thresholds():
    with pytest.raises(ValueError):
        Ternary(1.0, -1.0)
    with pytest.raises(ValueError):
        moments_ternary_closed(1.0, 0.0, 1.0)


def test_activation_lookup():
    assert isinstance(activation_from_name("ReLU"), ReLU)
    assert isinstance(activation_from_name("arccos0"), Step)
    with pytest.raises(KeyError):
        activation_from_name("swish")


def test_tau_validation():
    for bad in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(ValueError):
            moments_closed_form(ReLU(), bad)
