from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectralflow.acceptance import circle_data, sphere2_data
from spectralflow.errors import AccuracyError, InvalidInputError
from spectralflow.heat import fit_heat_coefficients, seeley_dewitt
from spectralflow.manifolds import Spectrum, curvature_invariants, rectangular_torus, sphere_spectrum, torus_spectrum
from spectralflow.thermo import (
    canonical_moments, entropy_from_free_energy, entropy_variation, holographic_flow, rg_entropy_consistency,
    thermo_profile,
)
from spectralflow.zeta import ZetaData, zeta_analytic

TWO_PI = 2 * math.pi


def two_level():
    return Spectrum(1, [0.0, 1.0], [1, 1], 1, "exact", 1.0, total_modes=2)


def test_two_level_system():
    beta = np.array([1e-6, 0.5, 2.0, 30.0])
    p = thermo_profile(two_level(), beta)
    q = np.exp(-beta) / (1 + np.exp(-beta))
    assert p.S == pytest.approx(np.log1p(np.exp(-beta)) + beta * q, rel=1e-12)
    assert p.sigma == pytest.approx(q * (1 - q), rel=1e-12)
    assert p.S[0] == pytest.approx(math.log(2), abs=1e-6)
    assert p.sigma[0] == pytest.approx(0.25, abs=1e-6)
    assert p.S[-1] < 1e-11


def test_single_level():
    sp = Spectrum(1, [0.0], [3], 3, "exact", 1.0, total_modes=3)
    p = thermo_profile(sp, [0.1, 1.0, 10.0])
    assert np.all(p.sigma == 0)
    assert p.S == pytest.approx(math.log(3))


def test_moments_are_overflow_safe():
    lnZ, E, var = canonical_moments([1000.0, 1001.0], [1, 1], 50.0)
    assert lnZ == pytest.approx(-50000 + math.log1p(math.exp(-50)))
    assert np.isfinite(E) and var >= 0


@given(st.floats(0.05, 20.0))
@settings(max_examples=30, deadline=None)
def test_entropy_decreases_with_beta(b):
    p = thermo_profile(sphere_spectrum(2, 1.0, 200), [b])
    assert p.sigma[0] >= 0
    assert p.dS_dbeta[0] == pytest.approx(-b * p.sigma[0])
    assert p.dS_dbeta[0] <= 0


def test_entropy_is_minus_free_energy_slope():
    sp = sphere_spectrum(2, 1.0, 200)
    beta = np.geomspace(0.02, 5.0, 25)
    p = thermo_profile(sp, beta)
    assert entropy_from_free_energy(sp, beta) == pytest.approx(p.S, rel=1e-9)
    assert p.S == pytest.approx(p.lnZ + beta * p.E_avg, rel=1e-14)
    assert p.F == pytest.approx(-p.lnZ / beta)


def test_entropy_invariant_under_energy_shift():
    sp = sphere_spectrum(2, 1.0, 200)
    beta = np.geomspace(0.05, 2.0, 7)
    a, b = thermo_profile(sp, beta), thermo_profile(sp.shifted(3.0), beta)
    assert b.S == pytest.approx(a.S, rel=1e-12)
    assert b.sigma == pytest.approx(a.sigma, rel=1e-10)


def test_truncation_reported():
    sp = sphere_spectrum(2, 1.0, 10)
    with pytest.raises(AccuracyError) as err:
        thermo_profile(sp, [0.01, 1.0])
    b_ok = err.value.min_t
    assert b_ok > 0.01
    thermo_profile(sp, [b_ok * 1.01])


def test_bad_beta():
    with pytest.raises(InvalidInputError):
        thermo_profile(two_level(), [0.0, 1.0])


def test_profile_export():
    p = thermo_profile(two_level(), [0.5, 1.0])
    rows = p.to_csv().strip().splitlines()
    assert len(rows) == 2 and len(rows[0].split(",")) == len(p.FIELDS)
    assert set(json.loads(p.to_json())) == set(p.FIELDS)


# --------------------------------------------------------------------------
# entropy variation and holographic trajectory


def test_entropy_variation():
    s2 = fit_heat_coefficients(sphere_spectrum(2, 1.0, 8000), 4)
    assert entropy_variation(s2) == pytest.approx(1 / 3, abs=1e-4)
    assert entropy_variation(s2, 3.0) == pytest.approx(1.0, abs=3e-4)
    flat = seeley_dewitt(curvature_invariants(rectangular_torus(TWO_PI, TWO_PI)))
    assert entropy_variation(flat) == 0
    s3 = fit_heat_coefficients(sphere_spectrum(3, 1.0, 4000), 4)
    assert abs(entropy_variation(s3)) < 1e-3


def test_holographic_zero_source():
    zd = ZetaData(2, 0.0, 0.0, {}, 0, 4, 0.0, 0.0)
    traj = holographic_flow(zd, 2.0, np.linspace(0, 3, 7))
    assert np.all(traj.lambda_rho == 2.0) and np.all(traj.dF_drho == 0)


def test_holographic_torus():
    c = seeley_dewitt(curvature_invariants(rectangular_torus(TWO_PI, TWO_PI)))
    zd = zeta_analytic(torus_spectrum(np.eye(2) * TWO_PI, 4e4), c, 4)
    rho = np.linspace(0, 5, 21)
    traj = holographic_flow(zd, 1.0, rho)
    assert traj.dF_drho == pytest.approx(0.5 * zd.zeta0_prime + rho, abs=1e-15)
    assert traj.dS_drho == pytest.approx(-traj.dF_drho)
    # dlambda/drho from finite differences of the closed-form trajectory
    fd = np.gradient(traj.lambda_rho, rho, edge_order=2)
    assert fd == pytest.approx(traj.dlambda_drho, abs=1e-12)
    assert np.diff(traj.lambda_rho, 2) / (rho[1] - rho[0]) ** 2 == pytest.approx(zd.zeta0, abs=1e-10)


def test_holographic_odd_dimension_warns():
    zd = ZetaData(3, 0.0, 0.1, {}, 0, 5, 0.0, 0.0)
    with pytest.warns(UserWarning):
        holographic_flow(zd, 0.0, [0.0, 1.0])
    with pytest.raises(InvalidInputError):
        holographic_flow(ZetaData(2, 0.0, 0.0, {}, 0, 4, 0.0, 0.0), 0.0, [-1.0])


def test_holographic_export():
    traj = holographic_flow(ZetaData(2, -1.0, 0.5, {}, 0, 4, 0.0, 0.0), 1.0, [0.0, 0.5])
    d = json.loads(traj.to_json())
    assert d["zeta0"] == -1.0 and len(d["rho"]) == 2
    assert len(traj.to_csv().strip().splitlines()) == 2


# --------------------------------------------------------------------------
# log-det flow


def test_circle_log_det_flow():
    sp, c, zd = circle_data()
    rep = rg_entropy_consistency(sp, c, zd, 10.0, 10.0 / math.e)
    assert rep.expected == pytest.approx(2.0, abs=1e-8)
    assert rep.residual < 1e-10
    assert rep.flow_residual < 1e-6


def test_trivial_step():
    sp, c, zd = sphere2_data()
    rep = rg_entropy_consistency(sp, c, zd, 5.0, 5.0)
    assert rep.delta_log_det == 0 and rep.residual == 0


def test_massive_sphere_closes_without_zero_modes():
    sp = sphere_spectrum(2, 1.0, 8000).shifted(1.0)
    c = fit_heat_coefficients(sp, 6)
    zd = zeta_analytic(sp, c, 6)
    rep = rg_entropy_consistency(sp, c, zd, 20.0, 5.0)
    assert rep.zero_modes == 0
    assert rep.flow_residual < 1e-6
    assert rep.delta_log_det == pytest.approx(-rep.flow_log_part, rel=1e-6)


def test_window_below_one_skips_flow():
    sp, c, zd = sphere2_data()
    rep = rg_entropy_consistency(sp, c, zd, 2.0, 0.5)
    assert rep.flow_log_part is None and rep.flow_residual is None
    assert rep.residual < 1e-12
    with pytest.raises(InvalidInputError):
        rg_entropy_consistency(sp, c, zd, 1.0, 2.0)
