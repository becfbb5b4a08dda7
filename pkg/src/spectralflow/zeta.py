"""Spectral zeta function, its continuation through the Mellin split, and determinants.

The continuation splits the Mellin integral at t = 1::

    Gamma(s) zeta(s) = sum_{k<=K} a_k / (s + (k-n)/2) - h/s
                       + int_0^1 t^(s-1) R_K(t) dt
                       + sum_{lam>0} m lam^(-s) Gamma(s, lam)

with R_K the remainder of the full heat trace after the first K+1 terms of
its expansion and h the number of zero modes.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special

from .errors import AccuracyError, DomainError, InvalidInputError
from .heat import HeatCoefficients, _trace_sum, min_usable_t
from .manifolds import Spectrum

EULER_GAMMA = float(np.euler_gamma)

_GL_HI = np.polynomial.legendre.leggauss(20)
_GL_LO = np.polynomial.legendre.leggauss(10)


@dataclass
class ZetaData:
    dim: int
    zeta0: float
    zeta0_prime: float
    residues: dict
    zero_modes_subtracted: int
    expansion_order: int
    error_estimate: float
    a_n: float
    coefficient_error: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["residues"] = {repr(float(k)): float(v) for k, v in sorted(self.residues.items())}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    CSV_FIELDS = ("dim", "zeta0", "zeta0_prime", "zero_modes_subtracted", "expansion_order",
                  "error_estimate", "a_n", "coefficient_error")

    def csv_row(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow(
            [format(getattr(self, f), ".17g") if isinstance(getattr(self, f), float) else getattr(self, f)
             for f in self.CSV_FIELDS])
        return buf.getvalue()


def upper_gamma(s: float, x: np.ndarray) -> np.ndarray:
    """Unnormalized upper incomplete gamma Gamma(s, x) for real s and x > 0."""
    x = np.asarray(x, dtype=float)
    if s > 0:
        return special.gammaincc(s, x) * special.gamma(s)
    if s == 0:
        return special.exp1(x)
    if float(s).is_integer():
        k = int(-s)
        return x ** (-k) * special.expn(k + 1, x)
    # downward recurrence Gamma(s, x) = (Gamma(s+1, x) - x^s e^-x) / s
    return (upper_gamma(s + 1, x) - x ** s * np.exp(-x)) / s


def zeta_value_bounded(spec: Spectrum, s: float) -> tuple[float, float]:
    """Direct sum in the convergent region plus a Weyl-law tail correction.

    Returns the value and an error estimate for the correction.
    """
    n = spec.dim
    if not s > n / 2:
        raise DomainError(f"series converges only for s > n/2 = {n / 2}; use zeta_analytic")
    lam, mult = spec.positive()
    head = float(np.sum(mult * lam ** (-s)))
    if spec.total_modes is not None:
        rest = spec.total_modes - spec.mode_count
        bound = rest * spec.cutoff ** (-s)
        return head, float(bound)
    cut = spec.cutoff
    half = n / 2
    c_top = spec.mode_count / cut ** half
    N_half = float(spec.counting_function(cut / 2))
    c_half = N_half / (cut / 2) ** half
    tail = c_top * half * cut ** (half - s) / (s - half)
    # spread of the Weyl constant plus the size of the last listed shell,
    # which bounds the step-function vs integral discrepancy
    err = abs(tail) * abs(c_top - c_half) / c_top + float(mult[-1] * lam[-1] ** (-s))
    return head + tail, float(err)


def zeta_value(spec: Spectrum, s: float) -> float:
    """zeta(s) = sum over positive eigenvalues of m lam^-s, for s > n/2."""
    return zeta_value_bounded(spec, s)[0]


class _Split:
    """Pieces of the Mellin split that do not depend on s."""

    def __init__(self, spec: Spectrum, coeffs: HeatCoefficients, order: int):
        n = spec.dim
        if coeffs.dim != n:
            raise InvalidInputError(f"coefficients are for dim {coeffs.dim}, spectrum has dim {n}")
        if order < n + 2:
            raise InvalidInputError(f"expansion order must be at least n+2 = {n + 2}")
        if coeffs.order < order:
            raise AccuracyError(f"coefficients available to order {coeffs.order}, need {order}")
        self.spec, self.n, self.K = spec, n, order
        self.a = np.array([coeffs.coeffs[k] for k in range(order + 1)])
        self.expo = (np.arange(order + 1) - n) / 2
        self.h = spec.zero_modes
        self.lam_pos, self.mult_pos = spec.positive()
        self._choose_lower_limit()
        self._build_nodes()

    def remainder(self, t: np.ndarray) -> np.ndarray:
        full = _trace_sum(self.spec.eigenvalues, self.spec.multiplicities, t)
        return full - (self.a[None, :] * t[:, None] ** self.expo[None, :]).sum(axis=1)

    def _choose_lower_limit(self):
        t_valid = min(max(min_usable_t(self.spec, 1e-14, relative=True), 1e-12), 1e-2)
        probe = np.geomspace(t_valid, 1.0, 60)
        r = np.abs(self.remainder(probe))
        i = int(np.argmin(r))
        self.t0 = float(probe[i])
        self.r_t0 = float(r[i])

    def _build_nodes(self):
        x0 = math.log(self.t0)
        panels = max(1, math.ceil(-x0))
        edges = np.linspace(x0, 0.0, panels + 1)
        self.nodes, self.weights, self.weights_lo, self.nodes_lo = [], [], [], []
        for (xg, wg), store_x, store_w in ((_GL_HI, self.nodes, self.weights), (_GL_LO, self.nodes_lo, self.weights_lo)):
            for a, b in zip(edges[:-1], edges[1:]):
                store_x.append((b - a) / 2 * xg + (a + b) / 2)
                store_w.append((b - a) / 2 * wg)
        self.nodes, self.weights = np.concatenate(self.nodes), np.concatenate(self.weights)
        self.nodes_lo, self.weights_lo = np.concatenate(self.nodes_lo), np.concatenate(self.weights_lo)
        self.r_hi = self.remainder(np.exp(self.nodes))
        self.r_lo = self.remainder(np.exp(self.nodes_lo))

    def remainder_integral(self, s: float) -> tuple[float, float]:
        """int_0^1 t^(s-1) R_K dt and its error estimate."""
        # t^(s-1) dt = t^s dx with x = ln t
        hi = float(np.sum(self.weights * np.exp(s * self.nodes) * self.r_hi))
        lo = float(np.sum(self.weights_lo * np.exp(s * self.nodes_lo) * self.r_lo))
        p = (self.K + 1 - self.n) / 2
        if s + p <= 0:
            raise DomainError(f"remainder integral diverges at s={s}; raise the expansion order")
        below = self.r_t0 * self.t0 ** s / (s + p)
        return hi, abs(hi - lo) + abs(below)

    def upper(self, s: float) -> tuple[float, float]:
        lam, m = self.lam_pos, self.mult_pos
        val = float(np.sum(m * lam ** (-s) * upper_gamma(s, lam)))
        # unlisted modes: lam^-s Gamma(s, lam) <= 2 e^-lam / lam once lam > 2|s-1|
        cut = max(self.spec.cutoff, 1.0, 2 * abs(s - 1))
        return val, 2.0 / cut * float(self.spec.tail_bound(1.0))


def _split_for(spec, coeffs, order):
    return _Split(spec, coeffs, coeffs.order if order is None else order)


def zeta_analytic(spec: Spectrum, coeffs: HeatCoefficients, order: int | None = None,
                  tol: float = 1e-6) -> ZetaData:
    """zeta(0), zeta'(0) and the poles of zeta from the Mellin split.

    zeta(0) = a_n - h. zeta'(0) is the finite part gamma_E (a_n - h) + G(0),
    where G collects every s-regular term of the split at s = 0.
    """
    sp = _split_for(spec, coeffs, order)
    n, K, a, h = sp.n, sp.K, sp.a, sp.h
    a_n = float(a[n]) if n <= K else 0.0
    z0 = a_n - h
    finite = sum(a[k] / ((k - n) / 2) for k in range(K + 1) if k != n)
    rem, rem_err = sp.remainder_integral(0.0)
    up, up_err = sp.upper(0.0)
    zp = EULER_GAMMA * z0 + finite + rem + up
    err = rem_err + up_err
    if err > tol:
        raise AccuracyError(f"continuation error estimate {err:.3g} exceeds tol {tol:.3g}; "
                            "increase the expansion order or the spectral cutoff")
    residues = {}
    coef_err = _coefficient_error(coeffs, n, K, sp.t0)
    for k in range(min(n, K + 1)):
        s_k = (n - k) / 2
        residues[s_k] = float(a[k] / math.gamma(s_k))
    return ZetaData(n, float(z0), float(zp), residues, h, K, float(err), a_n, coef_err)


def _coefficient_error(coeffs: HeatCoefficients, n: int, K: int, t0: float, s: float = 0.0) -> float:
    """Propagate fit uncertainties of the a_k into Gamma(s) zeta(s), or into zeta'(0) at s = 0.

    An error e_k in a_k is cancelled by the split only down to t0; the
    unmatched piece on (0, t0) is e_k t0^(s + (k-n)/2) / |s + (k-n)/2|, with a
    logarithm in place of the pole for k = n at s = 0.
    """
    diag = coeffs.fit_diagnostics
    if diag is None:
        return 0.0
    total = 0.0
    for k, e in diag.coefficient_errors.items():
        if k > K:
            continue
        q = s + (k - n) / 2
        if abs(q) < 1e-12:
            total += e * (EULER_GAMMA + abs(math.log(t0)))
        else:
            total += e * t0 ** q / abs(q)
    return float(total)


def zeta_continued(spec: Spectrum, coeffs: HeatCoefficients, s: float,
                   order: int | None = None) -> tuple[float, float]:
    """zeta(s) at a real, non-pole s through the split; returns (value, error).

    The error includes the propagated uncertainty of fitted coefficients.
    """
    sp = _split_for(spec, coeffs, order)
    n, K, a = sp.n, sp.K, sp.a
    poles = [k for k in range(K + 1) if abs(s + (k - n) / 2) < 1e-12 and a[k] != 0]
    if poles or abs(s) < 1e-12:
        raise DomainError(f"s={s} is a pole of Gamma(s) zeta(s); use zeta_analytic for s=0")
    live = a != 0
    expansion = float(np.sum(a[live] / (s + sp.expo[live]))) - sp.h / s
    rem, rem_err = sp.remainder_integral(s)
    up, up_err = sp.upper(s)
    coef_err = _coefficient_error(coeffs, n, K, sp.t0, s)
    inv_gamma = float(special.rgamma(s))
    return inv_gamma * (expansion + rem + up), abs(inv_gamma) * (rem_err + up_err + coef_err)


def log_det(zd: ZetaData, scale: float) -> float:
    """Renormalized log-determinant -zeta'(0) - ln(scale^2) zeta(0)."""
    if not scale > 0:
        raise InvalidInputError("scale must be positive")
    return -zd.zeta0_prime - math.log(scale ** 2) * zd.zeta0


def effective_action(zd: ZetaData, mu: float) -> float:
    """Renormalized one-loop effective action -zeta'(0)/2 - ln(mu^2) zeta(0)/2."""
    if not mu > 0:
        raise InvalidInputError("mu must be positive")
    return -0.5 * zd.zeta0_prime - 0.5 * math.log(mu ** 2) * zd.zeta0
