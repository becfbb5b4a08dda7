"""Canonical thermodynamics of spectra, entropy variation, and holographic trajectories.

Units have k_B = 1. Energies are eigenvalues (zero modes included), so
Z(beta) = sum_k m_k exp(-beta lam_k) is the heat trace at t = beta.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import AccuracyError, InvalidInputError
from .flow import RGStepReport, rg_eigenvalue_step
from .heat import HeatCoefficients, min_usable_t
from .manifolds import Spectrum
from .zeta import ZetaData, log_det

THERMO_TAIL_RTOL = 1e-12


def canonical_moments(energies, multiplicities, beta: float) -> tuple[float, float, float]:
    """ln Z, <E> and Var E for discrete levels at inverse temperature ``beta``.

    Weights are shifted by the ground energy before exponentiation and the
    variance is accumulated around the mean, so neither overflows nor cancels.
    """
    E = np.asarray(energies, dtype=float)
    m = np.asarray(multiplicities, dtype=float)
    logw = np.log(m) - beta * (E - E.min())
    lnZ = float(logsumexp(logw)) - beta * float(E.min())
    p = np.exp(logw - logsumexp(logw))
    mean = float(np.sum(p * E))
    var = float(np.sum(p * (E - mean) ** 2))
    return lnZ, mean, var


@dataclass
class ThermoProfile:
    beta: np.ndarray
    lnZ: np.ndarray
    F: np.ndarray
    E_avg: np.ndarray
    S: np.ndarray
    sigma: np.ndarray
    dS_dbeta: np.ndarray

    FIELDS = ("beta", "lnZ", "F", "E_avg", "S", "sigma", "dS_dbeta")

    @property
    def Z(self) -> np.ndarray:
        return np.exp(self.lnZ)

    @property
    def temperature(self) -> np.ndarray:
        return 1.0 / self.beta

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for row in zip(*(getattr(self, f) for f in self.FIELDS)):
            w.writerow([format(float(x), ".17g") for x in row])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({f: [float(x) for x in getattr(self, f)] for f in self.FIELDS}, sort_keys=True)


def _check_tail(spec: Spectrum, beta: np.ndarray, tol: float):
    # relative tail of Z, <E> and <E^2> at the smallest beta
    b = float(beta.min())
    lam, mult = spec.eigenvalues, spec.multiplicities
    for p in (0, 1, 2):
        head = float(np.sum(mult * lam ** p * np.exp(-b * (lam - lam[0]))) * math.exp(-b * lam[0]))
        bound = float(spec.tail_bound(b, p))
        if head > 0 and bound > tol * head:
            b_ok = max(min_usable_t(spec, tol, relative=True, power=q) for q in (0, 1, 2))
            raise AccuracyError(
                f"truncated spectrum misses a fraction {bound / head:.3g} of the moment "
                f"of order {p} at beta={b:.3g}; use beta >= {b_ok:.6g} or raise the cutoff", min_t=b_ok)


def thermo_profile(spec: Spectrum, beta_grid, tol: float = THERMO_TAIL_RTOL) -> ThermoProfile:
    """Partition-function thermodynamics on a grid of inverse temperatures.

    Derivatives in beta come from spectral moments, not finite differences:
    d ln Z/d beta = -<E>, d^2 ln Z/d beta^2 = sigma, dS/d beta = -beta sigma.
    """
    beta = np.atleast_1d(np.asarray(beta_grid, dtype=float))
    if beta.ndim != 1 or beta.size == 0 or np.any(~(beta > 0)):
        raise InvalidInputError("beta_grid must be a nonempty list of positive reals")
    _check_tail(spec, beta, tol)
    lnZ, E, var = np.empty_like(beta), np.empty_like(beta), np.empty_like(beta)
    for i, b in enumerate(beta):
        lnZ[i], E[i], var[i] = canonical_moments(spec.eigenvalues, spec.multiplicities, b)
    return ThermoProfile(beta, lnZ, -lnZ / beta, E, lnZ + beta * E, var, -beta * var)


def entropy_from_free_energy(spec: Spectrum, beta_grid, rel_step: float = 1e-3,
                             tol: float = THERMO_TAIL_RTOL) -> np.ndarray:
    """S = -dF/dT by Richardson-extrapolated central differences in T."""
    T = 1.0 / np.atleast_1d(np.asarray(beta_grid, dtype=float))

    def F(temps):
        return thermo_profile(spec, 1.0 / temps, tol).F

    def central(h):
        return (F(T + h) - F(T - h)) / (2 * h)

    h = rel_step * T
    return -(4 * central(h / 2) - central(h)) / 3


def entropy_variation(coeffs: HeatCoefficients, constant: float = 1.0) -> float:
    """Rate of entropy change along the RG flow, ``constant`` times a_n."""
    if coeffs.order < coeffs.dim:
        raise InvalidInputError(f"need coefficients through order {coeffs.dim}")
    return constant * coeffs.top


@dataclass
class HoloTrajectory:
    rho: np.ndarray
    zeta0: float
    zeta0_prime: float
    lambda0: float
    dF_drho: np.ndarray
    lambda_rho: np.ndarray
    dlambda_drho: np.ndarray
    dS_drho: np.ndarray
    entropy_constant: float = 1.0

    FIELDS = ("rho", "lambda_rho", "dlambda_drho", "dF_drho", "dS_drho")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for row in zip(*(getattr(self, f) for f in self.FIELDS)):
            w.writerow([format(float(x), ".17g") for x in row])
        return buf.getvalue()

    def to_json(self) -> str:
        d = {f: [float(x) for x in getattr(self, f)] for f in self.FIELDS}
        d.update(zeta0=self.zeta0, zeta0_prime=self.zeta0_prime, lambda0=self.lambda0,
                 entropy_constant=self.entropy_constant)
        return json.dumps(d, sort_keys=True)


def holographic_flow(zd: ZetaData, lambda0: float, rho_grid, entropy_constant: float = 1.0) -> HoloTrajectory:
    """Closed-form solution of d lambda/d rho = -zeta'(0)/2 + rho zeta(0).

    The bulk free energy obeys dF/d rho = zeta'(0)/2 - rho zeta(0) and the
    entropy is taken as -entropy_constant * F.
    """
    rho = np.atleast_1d(np.asarray(rho_grid, dtype=float))
    if np.any(rho < 0):
        raise InvalidInputError("rho must be nonnegative")
    if zd.dim % 2:
        warnings.warn(f"boundary dimension {zd.dim} is odd; the trajectory is usually "
                      "applied to even-dimensional boundaries", stacklevel=2)
    z0, zp = zd.zeta0, zd.zeta0_prime
    dF = 0.5 * zp - rho * z0
    lam = lambda0 - 0.5 * zp * rho + 0.5 * z0 * rho ** 2
    dlam = -0.5 * zp + z0 * rho
    return HoloTrajectory(rho, z0, zp, float(lambda0), dF, lam, dlam, -entropy_constant * dF,
                          float(entropy_constant))


@dataclass
class EntropyConsistency:
    lam: float
    lam_prime: float
    delta_log_det: float
    expected: float
    zeta0: float
    a_n: float
    zero_modes: int
    flow_log_part: float | None

    @property
    def residual(self) -> float:
        return abs(self.delta_log_det - self.expected)

    @property
    def flow_residual(self) -> float | None:
        """|Delta ln det + log_part - 2 ln(lam/lam') h|, zero when the two pipelines agree."""
        if self.flow_log_part is None:
            return None
        zm = 2 * math.log(self.lam / self.lam_prime) * self.zero_modes
        return abs(self.delta_log_det + self.flow_log_part - zm)


def rg_entropy_consistency(spec: Spectrum, coeffs: HeatCoefficients, zd: ZetaData,
                           lam: float, lam_prime: float) -> EntropyConsistency:
    """Compare ln det(lam) - ln det(lam') with -2 ln(lam/lam') zeta(0).

    The flow module's log part 2 ln(lam/lam') a_n is cross-reported; the two
    differ by the zero-mode term since zeta(0) = a_n - h.
    """
    if not (lam >= lam_prime > 0):
        raise InvalidInputError("need lam >= lam' > 0")
    dld = log_det(zd, lam) - log_det(zd, lam_prime)
    expected = -2 * math.log(lam / lam_prime) * zd.zeta0
    report: RGStepReport | None = None
    if lam_prime > 1:
        report = rg_eigenvalue_step(spec, coeffs, lam, lam_prime)
    return EntropyConsistency(lam, lam_prime, dld, expected, zd.zeta0, coeffs.top, spec.zero_modes,
                              None if report is None else report.log_part)
