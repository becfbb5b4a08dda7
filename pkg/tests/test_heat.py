from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectralflow.errors import AccuracyError, DomainError, FitError, InvalidInputError
from spectralflow.heat import (
    HeatCoefficients, anomaly_2d, anomaly_4d, fit_heat_coefficients, heat_trace, heat_trace_bounded,
    mass_shift, min_usable_t, seeley_dewitt,
)
from spectralflow.manifolds import (
    RoundSphere, curvature_invariants, product_spectrum, rectangular_torus, sphere_spectrum, torus_spectrum,
)

TWO_PI = 2 * math.pi


@pytest.fixture(scope="module")
def s2():
    return sphere_spectrum(2, 1.0, 8000)


@pytest.fixture(scope="module")
def s2_fit(s2):
    return fit_heat_coefficients(s2, 4)


def sphere2_extrapolated():
    """a_4 of the unit sphere by high-precision summation and polynomial extrapolation in t."""
    mp.mp.dps = 40
    ts = [mp.mpf(1) / 100 / 2 ** j for j in range(4)]
    vals = []
    for t in ts:
        kmax = int(mp.sqrt(120 / t)) + 10
        K = mp.fsum((2 * k + 1) * mp.exp(-k * (k + 1) * t) for k in range(kmax))
        vals.append((K - 1 / t - mp.mpf(1) / 3) / t)
    # Neville extrapolation to t = 0 of a smooth function of t
    P = list(vals)
    for m in range(1, len(ts)):
        for i in range(len(ts) - m):
            P[i] = (ts[i + m] * P[i] - ts[i] * P[i + 1]) / (ts[i + m] - ts[i])
    return float(P[0])


def test_circle_trace_is_theta_function():
    sp = torus_spectrum([[TWO_PI]], 4e4)
    for t in (0.01, 0.1, 1.0, 3.0):
        ref = float(mp.jtheta(3, 0, mp.exp(-t)))
        assert heat_trace(sp, t, tol=1e-14) == pytest.approx(ref, rel=1e-13)


def test_trace_excludes_zero_modes_on_request():
    sp = sphere_spectrum(2, 1.0, 100)
    full = heat_trace(sp, 0.5)
    pos = heat_trace(sp, 0.5, include_zero_modes=False)
    assert full - pos == pytest.approx(1.0)


def test_truncation_error_reports_min_t():
    sp = sphere_spectrum(2, 1.0, 10)
    with pytest.raises(AccuracyError) as err:
        heat_trace(sp, 1e-3, tol=1e-10)
    t_ok = err.value.min_t
    assert t_ok is not None and t_ok > 1e-3
    heat_trace(sp, t_ok * 1.01, tol=1e-10)


def test_tail_bound_is_an_upper_bound():
    full = sphere_spectrum(2, 1.0, 3000)
    cut = sphere_spectrum(2, 1.0, 200)
    for t in (1e-4, 2e-4, 4e-4):
        true_tail = heat_trace(full, t) - heat_trace(cut, t)
        val, bound = heat_trace_bounded(cut, t)
        assert true_tail <= bound
        assert bound < 50 * true_tail


def test_negative_time_rejected():
    with pytest.raises(DomainError):
        heat_trace(sphere_spectrum(2, 1.0, 5), -1.0)


@given(st.floats(0.01, 5.0), st.floats(0.01, 5.0))
@settings(max_examples=40, deadline=None)
def test_trace_decreasing_in_t(t1, t2):
    sp = sphere_spectrum(3, 1.0, 400)
    lo, hi = sorted((t1, t2))
    assert heat_trace(sp, lo) >= heat_trace(sp, hi)


def test_product_trace_factorizes():
    a = torus_spectrum([[TWO_PI]], 2e4)
    b = sphere_spectrum(2, 1.0, 300)
    prod = product_spectrum(a, b, 2e4)
    for t in (0.05, 0.3):
        assert heat_trace(prod, t, tol=1e-12) == pytest.approx(heat_trace(a, t) * heat_trace(b, t), rel=1e-12)


def test_sphere_fit(s2_fit):
    c = s2_fit
    assert c.normalized
    assert c[0] == pytest.approx(1.0, abs=1e-5)
    assert c[2] == pytest.approx(1 / 3, abs=1e-4)
    assert c[4] == pytest.approx(sphere2_extrapolated(), abs=1e-3)
    assert abs(c[1]) < 1e-3 and abs(c[3]) < 1e-3
    assert c.fit_diagnostics.error_bound < 1e-3


def test_extrapolation_oracle_value():
    assert sphere2_extrapolated() == pytest.approx(1 / 15, abs=1e-6)


def test_a0_is_volume(s2_fit):
    for spec, sp, order in ((RoundSphere(3, 1.0), sphere_spectrum(3, 1.0, 4000), 4),
                            (rectangular_torus(TWO_PI, 3 * math.pi), torus_spectrum([[TWO_PI, 0], [0, 3 * math.pi]], 4e4), 4)):
        c = fit_heat_coefficients(sp, order)
        vol = curvature_invariants(spec).vol
        assert c[0] == pytest.approx((4 * math.pi) ** (-spec.dim / 2) * vol, rel=1e-6)


def test_sphere3_matches_exact_trace():
    # on the unit 3-sphere K(t) = e^t sqrt(pi)/(4 t^1.5) up to exponentially small terms
    c = fit_heat_coefficients(sphere_spectrum(3, 1.0, 4000), 5)
    r = math.sqrt(math.pi) / 4
    expect = [r, 0, r, 0, r / 2, 0]
    for k, e in enumerate(expect):
        assert c[k] == pytest.approx(e, abs=1e-4)


def test_seeley_dewitt_closed_forms():
    s2 = seeley_dewitt(curvature_invariants(RoundSphere(2, 1.0)))
    assert (s2[0], s2[2], s2[4]) == pytest.approx((1.0, 1 / 3, 1 / 15), rel=1e-14)
    s3 = seeley_dewitt(curvature_invariants(RoundSphere(3, 1.0)))
    r = math.sqrt(math.pi) / 4
    assert (s3[0], s3[2], s3[4]) == pytest.approx((r, r, r / 2), rel=1e-14)
    flat = seeley_dewitt(curvature_invariants(rectangular_torus(TWO_PI, TWO_PI)))
    assert flat[0] == pytest.approx(math.pi) and flat[2] == 0 and flat[4] == 0
    assert s2[1] == s2[3] == 0


def test_seeley_dewitt_matches_fit_for_s4():
    sp = sphere_spectrum(4, 1.0, 8000)
    fit = fit_heat_coefficients(sp, 4)
    closed = seeley_dewitt(curvature_invariants(RoundSphere(4, 1.0)))
    errs = fit.fit_diagnostics.coefficient_errors
    for k in (0, 2, 4):
        assert abs(fit[k] - closed[k]) <= errs[k]
    assert abs(fit[4] - closed[4]) < 1e-3


def test_mass_shift_matches_refit(s2):
    shifted = fit_heat_coefficients(s2.shifted(1.0), 4)
    base = seeley_dewitt(curvature_invariants(RoundSphere(2, 1.0)))
    pred = mass_shift(base, 1.0)
    assert pred[2] == pytest.approx(-2 / 3, rel=1e-14)
    for k in range(5):
        assert shifted[k] == pytest.approx(pred[k], abs=1e-4)
    # the constant-E closed form agrees with the series shift (D = -Lap - E, E = -m^2)
    e_form = seeley_dewitt(curvature_invariants(RoundSphere(2, 1.0)), E_const=-1.0)
    assert e_form[4] == pytest.approx(pred[4], rel=1e-14)


def test_scaled_coefficients(s2_fit):
    c = 2.5
    refit = fit_heat_coefficients(sphere_spectrum(2, 1.0, 8000).scaled(c), 4)
    pred = s2_fit.scaled(c)
    for k in (0, 2):
        assert refit[k] == pytest.approx(pred[k], rel=1e-5)


def test_anomalies():
    s2 = curvature_invariants(RoundSphere(2, 1.0))
    assert anomaly_2d(s2) == pytest.approx(1 / 3)
    s4 = curvature_invariants(RoundSphere(4, 1.0))
    assert anomaly_4d(s4, 1.0, 7.0) == pytest.approx(-s4.int_E4 / (16 * math.pi ** 2))
    with pytest.raises(DomainError):
        anomaly_2d(s4)
    with pytest.raises(DomainError):
        anomaly_4d(s2, 1.0, 1.0)


def test_fit_guards(s2):
    with pytest.raises(InvalidInputError):
        fit_heat_coefficients(s2, 11)
    with pytest.raises(FitError):
        fit_heat_coefficients(sphere_spectrum(2, 1.0, 3), 2)
    with pytest.raises(AccuracyError):
        fit_heat_coefficients(sphere_spectrum(2, 1.0, 50), 2, t_grid=np.geomspace(1e-4, 0.5, 20))


def test_min_usable_t_monotone_in_cutoff():
    a = min_usable_t(sphere_spectrum(2, 1.0, 100), 1e-10)
    b = min_usable_t(sphere_spectrum(2, 1.0, 1000), 1e-10)
    assert b < a


def test_coefficient_serialization(s2_fit):
    d = s2_fit.to_dict()
    assert set(d) == {"dim", "coeffs", "residual", "error_bound"}
    back = HeatCoefficients.from_dict(d)
    assert back.coeffs == s2_fit.coeffs
    assert s2_fit.to_json() == s2_fit.to_json()
