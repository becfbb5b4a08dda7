"""Heat traces, small-t coefficient extraction, and closed-form Seeley-DeWitt coefficients.

Coefficients are stored in the normalization where the (4 pi)^(-n/2) factor is
absorbed, i.e.

    Tr exp(-tD) ~ sum_k a_k t^((k - n)/2),    t -> 0+.

Operators are written D = -Lap - E. A mass term m^2 therefore corresponds to
E = -m^2.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AccuracyError, DomainError, FitError, InvalidInputError
from .manifolds import CurvatureData, Spectrum

# relative truncation error tolerated at each fit abscissa
FIT_TAIL_RTOL = 1e-13
FIT_T_MAX = 0.5
FIT_T_FLOOR = 1e-6
FIT_POINTS = 24
FIT_BASIS_SIZE = 11
MAX_CONDITION = 1e13

_CHUNK = 4_000_000


def _trace_sum(lam: np.ndarray, mult: np.ndarray, t: np.ndarray, power: int = 0) -> np.ndarray:
    """sum_k mult_k lam_k^power exp(-lam_k t) for each t, fixed reduction order."""
    out = np.empty(t.size)
    weights = mult * lam ** power if power else mult.astype(float)
    rows = max(1, _CHUNK // max(lam.size, 1))
    for i in range(0, t.size, rows):
        tc = t[i:i + rows]
        out[i:i + rows] = (np.exp(-np.outer(tc, lam)) * weights).sum(axis=1)
    return out


def heat_trace_bounded(spec: Spectrum, t, include_zero_modes: bool = True):
    """Heat trace together with a guaranteed bound on the truncated tail.

    Returns
    -------
    value, bound : float or ndarray
        Shapes follow ``t``.
    """
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(tt <= 0):
        raise DomainError("heat trace needs t > 0")
    lam, mult = (spec.eigenvalues, spec.multiplicities) if include_zero_modes else spec.positive()
    val = _trace_sum(lam, mult, tt.ravel()).reshape(tt.shape)
    bound = np.asarray(spec.tail_bound(tt), dtype=float)
    if np.ndim(t) == 0:
        return float(val[0]), float(bound[0])
    return val, bound


def min_usable_t(spec: Spectrum, tol: float, relative: bool = False, power: int = 0) -> float:
    """Smallest t at which the tail bound drops below ``tol``.

    With ``relative=True`` the bound is compared with tol times the trace.
    """
    def ok(t):
        b = float(spec.tail_bound(t, power))
        if relative:
            return b <= tol * float(_trace_sum(spec.eigenvalues, spec.multiplicities, np.array([t]), power)[0])
        return b <= tol

    hi = 1.0
    while not ok(hi):
        hi *= 4
        if hi > 1e12:
            return math.inf
    lo = hi / 4
    while ok(lo):
        lo /= 4
        if lo < 1e-300:
            return 0.0
    for _ in range(60):
        mid = math.sqrt(lo * hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def heat_trace(spec: Spectrum, t, include_zero_modes: bool = True, tol: float | None = None):
    """Tr exp(-t D) summed over the listed spectrum.

    If ``tol`` is given and the truncation bound exceeds it, an
    ``AccuracyError`` carrying the minimum usable t is raised.
    """
    val, bound = heat_trace_bounded(spec, t, include_zero_modes)
    if tol is not None and np.max(bound) > tol:
        t_ok = min_usable_t(spec, tol)
        raise AccuracyError(
            f"heat trace tail bound {np.max(bound):.3g} exceeds tol {tol:.3g}; "
            f"with cutoff {spec.cutoff:.6g} use t >= {t_ok:.6g}", min_t=t_ok)
    return val


@dataclass
class FitDiagnostics:
    residual_norm: float
    error_bound: float
    coefficient_errors: dict
    t_grid: list
    condition: float
    extra_terms: int


@dataclass
class HeatCoefficients:
    """Normalized heat coefficients a_k of t^((k-n)/2), k = 0..order."""

    dim: int
    coeffs: dict
    normalized: bool = True
    fit_diagnostics: FitDiagnostics | None = field(default=None, repr=False)

    def __getitem__(self, k: int) -> float:
        return self.coeffs[k]

    @property
    def order(self) -> int:
        return max(self.coeffs)

    @property
    def top(self) -> float:
        """The coefficient a_n multiplying t^0."""
        return self.coeffs[self.dim]

    def expansion(self, t, order: int | None = None):
        K = self.order if order is None else order
        t = np.asarray(t, dtype=float)
        return sum(self.coeffs[k] * t ** ((k - self.dim) / 2) for k in range(K + 1))

    def scaled(self, c: float) -> "HeatCoefficients":
        """Coefficients for the operator c*D."""
        return HeatCoefficients(self.dim, {k: v * c ** ((k - self.dim) / 2) for k, v in self.coeffs.items()})

    def to_dict(self) -> dict:
        d = {"dim": self.dim, "coeffs": {str(k): float(v) for k, v in sorted(self.coeffs.items())}}
        if self.fit_diagnostics is not None:
            d["residual"] = self.fit_diagnostics.residual_norm
            d["error_bound"] = self.fit_diagnostics.error_bound
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "HeatCoefficients":
        return cls(int(d["dim"]), {int(k): float(v) for k, v in d["coeffs"].items()})


def default_t_grid(spec: Spectrum, points: int = FIT_POINTS) -> np.ndarray:
    """Log-spaced grid on [t_min, 0.5]; t_min is where the tail becomes negligible."""
    t_min = max(min_usable_t(spec, FIT_TAIL_RTOL, relative=True), FIT_T_FLOOR)
    if not t_min < FIT_T_MAX / 50:
        raise FitError(
            f"spectrum cutoff {spec.cutoff:.6g} too small for a heat-coefficient fit "
            f"(t_min={t_min:.3g}); enlarge the cutoff", min_t=t_min)
    return np.geomspace(t_min, FIT_T_MAX, points)


def _lstsq(t: np.ndarray, y: np.ndarray, n: int, nterms: int):
    expo = (np.arange(nterms) - n) / 2
    w = t ** (n / 2)
    A = t[:, None] ** expo[None, :] * w[:, None]
    scale = np.linalg.norm(A, axis=0)
    As = A / scale
    coef, _, rank, sv = np.linalg.lstsq(As, y * w, rcond=None)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    coef = coef / scale
    resid = float(np.linalg.norm(A @ coef - y * w))
    return coef, cond, resid, As, sv


def fit_heat_coefficients(spec: Spectrum, order: int, t_grid=None,
                          extra_terms: int | None = None) -> HeatCoefficients:
    """Least-squares extraction of a_0..a_order from the full heat trace.

    The trace (zero modes included) is fitted with weights t^(n/2) against
    t^((k-n)/2). Terms above ``order`` are fitted as nuisance parameters and
    discarded, which keeps truncation of the asymptotic series out of the
    reported coefficients. ``error_bound`` is the largest change in a reported
    coefficient when two nuisance terms are dropped.
    """
    n = spec.dim
    if order < 0 or order > n + 8:
        raise InvalidInputError(f"fit order must lie in [0, n+8] = [0, {n + 8}]")
    t = default_t_grid(spec) if t_grid is None else np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or np.any(t <= 0):
        raise InvalidInputError("t_grid must be a 1-d array of positive reals")
    if extra_terms is None:
        extra_terms = max(0, FIT_BASIS_SIZE - 1 - order)
    nterms = order + 1 + extra_terms
    if t.size < nterms + 2:
        raise FitError(f"t_grid has {t.size} points for {nterms} basis functions")
    y, bound = heat_trace_bounded(spec, t, include_zero_modes=True)
    bad = bound > 1e-10 * np.abs(y)
    if np.any(bad):
        t_ok = min_usable_t(spec, 1e-10, relative=True)
        raise AccuracyError(
            f"t_grid reaches t={t[bad].min():.3g} where the spectral tail is not negligible; "
            f"use t >= {t_ok:.3g} or a larger cutoff", min_t=t_ok)
    coef, cond, resid, As, sv = _lstsq(t, y, n, nterms)
    if cond > MAX_CONDITION:
        raise FitError(f"design matrix condition {cond:.3g} exceeds {MAX_CONDITION:.0e}; "
                       "use a narrower basis or a wider t_grid")
    if extra_terms >= 2:
        coef2 = _lstsq(t, y, n, nterms - 2)[0]
        errs = np.abs(coef[:order + 1] - coef2[:order + 1])
    else:
        # covariance propagation of the residual through the scaled design
        dof = max(t.size - nterms, 1)
        sigma = resid / math.sqrt(dof)
        scale = np.linalg.norm(t[:, None] ** ((np.arange(nterms) - n) / 2)[None, :] * (t ** (n / 2))[:, None], axis=0)
        cov = np.linalg.pinv(As.T @ As)
        errs = sigma * np.sqrt(np.abs(np.diag(cov)))[:order + 1] / scale[:order + 1]
    diag = FitDiagnostics(
        residual_norm=resid,
        error_bound=float(errs.max()),
        coefficient_errors={k: float(e) for k, e in enumerate(errs)},
        t_grid=[float(x) for x in t],
        condition=cond,
        extra_terms=extra_terms,
    )
    return HeatCoefficients(n, {k: float(coef[k]) for k in range(order + 1)}, True, diag)


def seeley_dewitt(curv: CurvatureData, f_const: float = 1.0, E_const: float = 0.0) -> HeatCoefficients:
    """Closed-form a_0, a_2, a_4 for D = -Lap - E with constant E and smearing f.

    Odd coefficients vanish on closed manifolds. With constant E its Laplacian
    integrates to zero, and on a closed manifold so does Lap R.
    """
    n = curv.dim
    if n < 1:
        raise DomainError(f"unsupported dimension {n}")
    pref = (4 * math.pi) ** (-n / 2) * f_const
    E, vol = E_const, curv.vol
    a0 = pref * vol
    a2 = pref / 6 * (curv.int_R + 6 * E * vol)
    int_lap_E = 0.0
    a4 = pref / 360 * (60 * int_lap_E + 60 * E * curv.int_R + 180 * E * E * vol
                       + 12 * curv.int_LapR + 5 * curv.int_R2 - 2 * curv.int_Ric2 + 2 * curv.int_Riem2)
    return HeatCoefficients(n, {0: a0, 1: 0.0, 2: a2, 3: 0.0, 4: a4})


def mass_shift(coeffs: HeatCoefficients, m2: float) -> HeatCoefficients:
    """Coefficients of D + m2 from those of D, via the series of exp(-t m2)."""
    out = {}
    for k in coeffs.coeffs:
        out[k] = sum((-m2) ** j / math.factorial(j) * coeffs.coeffs[k - 2 * j] for j in range(k // 2 + 1))
    return HeatCoefficients(coeffs.dim, out)


def anomaly_2d(curv: CurvatureData) -> float:
    """Integrated two-dimensional trace anomaly, (1/24 pi) * integral of R."""
    if curv.dim != 2:
        raise DomainError(f"anomaly_2d needs a surface, got dim {curv.dim}")
    return curv.int_R / (24 * math.pi)


def anomaly_4d(curv: CurvatureData, a_charge: float, c_charge: float) -> float:
    """Integrated four-dimensional trace anomaly -(a E4 - c W^2) / 16 pi^2."""
    if curv.dim != 4:
        raise DomainError(f"anomaly_4d needs dim 4, got {curv.dim}")
    return -(a_charge * curv.int_E4 - c_charge * curv.int_W2) / (16 * math.pi ** 2)
