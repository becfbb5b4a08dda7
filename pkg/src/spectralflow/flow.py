"""Ricci flow on model families, the Polyakov operator, and the RG eigenvalue step.

Ricci flow is dg/dt = -2 Ric. On a round sphere this keeps the metric round
with r^2 = r0^2 - 2(n-1) t. On a two-torus with metric exp(2u) g0 it reduces
to du/dt = exp(-2u) Lap_0 u.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np
from scipy import integrate, sparse

from .errors import AccuracyError, DomainError, ExtinctionError, InvalidInputError, StabilityError
from .heat import HeatCoefficients, heat_trace_bounded
from .manifolds import CurvatureData, Spectrum, periodic_laplacian, sphere_spectrum

# dt <= DT_SAFETY * min exp(2u) / (1/hx^2 + 1/hy^2); 0.5 is the monotonicity limit
DT_SAFETY = 0.5
ODE_CHECK_TOL = 1e-6
MIN_GRID = 8


# --------------------------------------------------------------------------
# Ricci flow


@dataclass
class FlowState:
    """Point on a flow trajectory: ``family`` is "sphere" or "conformal_torus"."""

    family: str
    time: float
    radius: float | None = None
    dim: int | None = None
    u: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.time < 0:
            raise InvalidInputError("flow time must be nonnegative")
        if self.family == "sphere":
            if not (self.radius and self.radius > 0):
                raise DomainError("sphere radius must stay positive")
        elif self.family == "conformal_torus":
            if self.u is None or not np.all(np.isfinite(self.u)):
                raise DomainError("conformal factor must be finite on the grid")
        else:
            raise InvalidInputError(f"unknown flow family {self.family!r}")


def extinction_time(n: int, r0: float) -> float:
    return math.inf if n == 1 else r0 ** 2 / (2 * (n - 1))


def integrate_sphere_flow(n: int, r0: float, times) -> np.ndarray:
    """r(t)^2 from a numerical solution of dr/dt = -(n-1)/r."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.size == 0 or times.max() == 0:
        return np.full(times.shape, r0 ** 2)
    t_ext = extinction_time(n, r0)
    if times.max() >= t_ext:
        raise ExtinctionError(f"sphere collapses at t = {t_ext:.6g}", t_ext)
    sol = integrate.solve_ivp(lambda t, r: -(n - 1) / r, (0.0, float(times.max())), [r0],
                              method="DOP853", t_eval=np.sort(times), rtol=1e-12, atol=1e-14)
    if not sol.success:
        raise AccuracyError(f"sphere flow integration failed: {sol.message}")
    r = np.empty_like(times)
    r[np.argsort(times)] = sol.y[0]
    return r ** 2


def ricci_flow_sphere(n: int, r0: float, t: float, check: bool = True) -> float:
    """Radius of the round n-sphere after Ricci flow time ``t``.

    The closed form is cross-checked against an ODE integration when
    ``check`` is set.
    """
    if n < 1:
        raise InvalidInputError("sphere dimension must be positive")
    if not r0 > 0:
        raise InvalidInputError("initial radius must be positive")
    if t < 0:
        raise DomainError("flow time must be nonnegative")
    t_ext = extinction_time(n, r0)
    if t >= t_ext:
        raise ExtinctionError(f"t = {t:.6g} is at or past extinction T_ext = {t_ext:.6g}", t_ext)
    r2 = r0 ** 2 - 2 * (n - 1) * t
    if check and t > 0:
        r2_ode = float(integrate_sphere_flow(n, r0, [t])[0])
        if abs(r2_ode - r2) > ODE_CHECK_TOL * max(1.0, r0 ** 2):
            raise AccuracyError(f"ODE cross-check disagrees: {r2_ode!r} vs {r2!r}")
    return math.sqrt(r2)


def sphere_flow_trajectory(n: int, r0: float, times, k_count: int = 3) -> np.ndarray:
    """Rows (t, r, lambda_1, ..., lambda_k) of distinct positive eigenvalues.

    Eigenvalues are recomputed from the closed-form spectrum at each radius;
    they scale as lambda_k(0) r0^2 / r(t)^2.
    """
    rows = []
    for t in np.asarray(times, dtype=float):
        r = ricci_flow_sphere(n, r0, float(t), check=False)
        lam = sphere_spectrum(n, r, k_count).positive()[0]
        rows.append([t, r, *lam[:k_count]])
    return np.array(rows)


def _check_grid(u: np.ndarray, lengths) -> tuple[float, ...]:
    u = np.asarray(u)
    if u.ndim != len(lengths):
        raise InvalidInputError(f"grid has {u.ndim} axes but {len(lengths)} lengths were given")
    if min(u.shape) < MIN_GRID:
        raise InvalidInputError(f"grid resolution must be at least {MIN_GRID} per period")
    if any(not L > 0 for L in lengths):
        raise InvalidInputError("period lengths must be positive")
    if not np.all(np.isfinite(u)):
        raise InvalidInputError("grid values must be finite")
    return tuple(L / m for L, m in zip(lengths, u.shape))


def max_stable_dt(u: np.ndarray, lengths=(2 * math.pi, 2 * math.pi)) -> float:
    hx, hy = _check_grid(u, lengths)
    return DT_SAFETY * float(np.exp(2 * np.min(u))) / (1 / hx ** 2 + 1 / hy ** 2)


def iterate_conformal_flow(u0, dt: float, steps: int,
                           lengths=(2 * math.pi, 2 * math.pi)) -> Iterator[FlowState]:
    """Yield the conformal-torus flow state after each explicit step.

    The area density w = exp(2u) is advanced conservatively,
    w <- w + 2 dt Lap_0 u, so the discrete area is preserved up to rounding.
    """
    u = np.array(u0, dtype=float)
    lengths = tuple(float(L) for L in lengths)
    if u.ndim != 2:
        raise InvalidInputError("conformal factor must be a 2-d grid")
    _check_grid(u, lengths)
    if not dt > 0 or steps < 0:
        raise InvalidInputError("need dt > 0 and steps >= 0")
    lap = periodic_laplacian(u.shape, tuple(L / m for L, m in zip(lengths, u.shape)))
    w = np.exp(2 * u)
    for i in range(steps):
        limit = max_stable_dt(u, lengths)
        if dt > limit:
            raise StabilityError(f"step {i}: dt = {dt:.3g} exceeds stability limit {limit:.3g}")
        w = w + 2 * dt * (lap @ u.ravel()).reshape(u.shape)
        u = 0.5 * np.log(w)
        yield FlowState("conformal_torus", (i + 1) * dt, u=u)


def ricci_flow_conformal_torus(u0, dt: float, steps: int, lengths=(2 * math.pi, 2 * math.pi)) -> np.ndarray:
    """Conformal factor after ``steps`` explicit Euler steps of Ricci flow."""
    u = np.array(u0, dtype=float)
    for state in iterate_conformal_flow(u0, dt, steps, lengths):
        u = state.u
    return u


def conformal_flow_history(u0, dt: float, steps: int, lengths=(2 * math.pi, 2 * math.pi)) -> dict:
    """Area and oscillation sup|u - mean u| at every step, starting with the initial data."""
    u0 = np.asarray(u0, dtype=float)
    cell = float(np.prod([L / m for L, m in zip(lengths, u0.shape)]))
    area = [float(np.exp(2 * u0).sum() * cell)]
    osc = [float(np.abs(u0 - u0.mean()).max())]
    times = [0.0]
    u = u0
    for state in iterate_conformal_flow(u0, dt, steps, lengths):
        u = state.u
        times.append(state.time)
        area.append(float(np.exp(2 * u).sum() * cell))
        osc.append(float(np.abs(u - u.mean()).max()))
    return {"time": np.array(times), "area": np.array(area), "oscillation": np.array(osc), "u": u}


# --------------------------------------------------------------------------
# Polyakov operator


def _shift(f, k, axis):
    return np.roll(f, -k, axis=axis)


def _lap(f: np.ndarray, spacing, axes) -> np.ndarray:
    out = np.zeros_like(f)
    for ax, h in zip(axes, spacing):
        out += (_shift(f, 1, ax) - 2 * f + _shift(f, -1, ax)) / h ** 2
    return out


def polyakov_potential(phi, lengths=None) -> np.ndarray:
    """V = (|grad phi|^2 + Lap phi)/2 for the metric exp(phi) g0, by central differences."""
    phi = np.asarray(phi, dtype=float)
    lengths = (2 * math.pi,) * phi.ndim if lengths is None else tuple(lengths)
    h = _check_grid(phi, lengths)
    axes = range(phi.ndim)
    grad2 = sum(((_shift(phi, 1, a) - _shift(phi, -1, a)) / (2 * ha)) ** 2 for a, ha in zip(axes, h))
    return 0.5 * (grad2 + _lap(phi, h, axes))


def polyakov_operator(g, lengths=None) -> sparse.csr_matrix:
    """Sparse matrix of -g Lap + (Lap g)/2 on a periodic 2-d grid (scalar g)."""
    g = np.asarray(g, dtype=float)
    lengths = (2 * math.pi,) * g.ndim if lengths is None else tuple(lengths)
    h = _check_grid(g, lengths)
    if g.ndim != 2:
        raise InvalidInputError("polyakov_operator expects a 2-d grid")
    L = periodic_laplacian(g.shape, h)
    lap_g = _lap(g, h, range(2)).ravel()
    return (-sparse.diags(g.ravel()) @ L + sparse.diags(0.5 * lap_g)).tocsr()


def _quad_form(g, a, b) -> float:
    """sum over components i, j and grid points of g_ij a_i b_j."""
    return float((g * a[:, None] * b[None, :]).sum())


@dataclass
class PolyakovCheck:
    lhs: float
    rhs: float
    residual: float
    relative: float


def polyakov_identity_check(phi, g, lengths=None) -> PolyakovCheck:
    """Discrete integration by parts <d phi, g d phi> = -<phi, g Lap phi> + <phi, (Lap g) phi>/2.

    Forward differences with edge-averaged g on the left and the standard
    three-point Laplacian on the right make the identity exact up to rounding.
    ``phi`` may be a scalar grid or carry a leading component axis, in which
    case ``g`` has two leading (symmetric) component axes.
    """
    phi = np.asarray(phi, dtype=float)
    g = np.asarray(g, dtype=float)
    if g.shape == phi.shape:
        phi, g = phi[None], g[None, None]
    if g.shape != phi.shape[:1] * 2 + phi.shape[1:]:
        raise InvalidInputError(f"metric shape {g.shape} does not match field shape {phi.shape}")
    if not np.allclose(g, np.swapaxes(g, 0, 1), rtol=0, atol=0):
        raise InvalidInputError("target metric must be symmetric in its component indices")
    grid_ndim = phi.ndim - 1
    lengths = (2 * math.pi,) * grid_ndim if lengths is None else tuple(lengths)
    h = _check_grid(phi[0], lengths)
    cell = float(np.prod(h))
    axes = [a + 1 for a in range(grid_ndim)]
    lhs = 0.0
    for a, ha in zip(axes, h):
        d = (_shift(phi, 1, a) - phi) / ha
        g_edge = 0.5 * (g + _shift(g, 1, a + 1))
        lhs += _quad_form(g_edge, d, d)
    lap_phi = _lap(phi, h, axes)
    lap_g = _lap(g, h, [a + 1 for a in axes])
    rhs1 = -_quad_form(g, phi, lap_phi)
    rhs2 = 0.5 * _quad_form(lap_g, phi, phi)
    lhs, rhs1, rhs2 = lhs * cell, rhs1 * cell, rhs2 * cell
    rhs = rhs1 + rhs2
    res = abs(lhs - rhs)
    scale = max(abs(lhs), abs(rhs1), abs(rhs2))
    return PolyakovCheck(lhs, rhs, res, res / scale if scale > 0 else 0.0)


# --------------------------------------------------------------------------
# beta function from a_2


@dataclass
class BetaA2:
    """Decomposition of a_2(g, D) for a constant target metric factor.

    ``curvature_term`` is (g/6) int R. ``laplacian_term`` is -(1/2) int Lap g,
    which vanishes for constant g on a closed manifold. ``flow_driver`` is the
    trace of the Ricci-flow velocity after substituting Lap g -> -2 Ric.
    """

    a2: float
    curvature_term: float
    laplacian_term: float
    flow_driver: float
    substitution: str = "Lap g_ij -> -2 R_ij (harmonic coordinates)"


def beta_a2(curv: CurvatureData, g_const: float = 1.0) -> BetaA2:
    if curv.dim != 2:
        raise DomainError(f"beta_a2 needs two-dimensional target data, got dim {curv.dim}")
    curvature_term = g_const / 6 * curv.int_R
    laplacian_term = 0.0
    return BetaA2(curvature_term + laplacian_term, curvature_term, laplacian_term, -curv.int_R)


# --------------------------------------------------------------------------
# RG eigenvalue step


@dataclass
class RGStepReport:
    lam: float
    lam_prime: float
    tau: float
    raw_integral: float
    divergent_part: float
    log_part: float
    convergent_part: float
    a_n_used: float
    renormalized_shift: float
    measured_log_part: float
    truncation_bound: float
    quadrature_error: float

    @property
    def closure_error(self) -> float:
        return self.raw_integral - self.divergent_part - self.log_part - self.convergent_part

    @property
    def slope_tau(self) -> float:
        """Renormalized d lambda / d tau, equal to -a_n."""
        return -self.log_part / self.tau if self.tau else -self.a_n_used

    @property
    def slope_t(self) -> float:
        """Slope after the sign flip t = -tau."""
        return -self.slope_tau

    @property
    def measured_slope_t(self) -> float:
        """Slope from the quadrature with the power-law parts removed."""
        return self.measured_log_part / self.tau if self.tau else self.a_n_used

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(closure_error=self.closure_error, slope_t=self.slope_t,
                 measured_slope_t=self.measured_slope_t)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _power_integral(p: float, a: float, b: float) -> float:
    """int_a^b t^(p-1) dt."""
    return math.log(b / a) if p == 0 else (b ** p - a ** p) / p


def rg_eigenvalue_step(spec: Spectrum, coeffs: HeatCoefficients, lam: float, lam_prime: float,
                       order: int | None = None) -> RGStepReport:
    """Split int_{lam^-2}^{lam'^-2} K(t) dt/t into power-divergent, log and convergent parts.

    K is the full trace (zero modes included), matching the fitted expansion.
    Minimal subtraction keeps only the logarithmic part, so the renormalized
    eigenvalue shift is -2 ln(lam/lam') a_n.
    """
    n = spec.dim
    if coeffs.dim != n:
        raise InvalidInputError(f"coefficients are for dim {coeffs.dim}, spectrum has dim {n}")
    if not (lam >= lam_prime > 1):
        raise DomainError("need lam >= lam' > 1 so that 0 < lam^-2 <= lam'^-2 < 1")
    K = coeffs.order if order is None else order
    if K < n + 2 or coeffs.order < K:
        raise AccuracyError(f"need heat coefficients through order {max(K, n + 2)}, have {coeffs.order}")
    a = np.array([coeffs.coeffs[k] for k in range(K + 1)])
    t_lo, t_hi = lam ** -2, lam_prime ** -2
    tau = math.log(t_hi / t_lo)
    a_n = float(a[n])
    div = sum(2 * a[k] / (k - n) * lam ** (n - k) * (math.exp(-tau * (n - k) / 2) - 1) for k in range(n))
    conv = sum(2 * a[k] / (k - n) * (math.exp(tau * (k - n) / 2) - 1) / lam ** (k - n)
               for k in range(n + 1, K + 1))
    log_part = 2 * math.log(lam / lam_prime) * a_n
    if tau == 0:
        return RGStepReport(lam, lam_prime, 0.0, 0.0, 0.0, 0.0, 0.0, a_n, 0.0, 0.0, 0.0, 0.0)

    tail = float(heat_trace_bounded(spec, t_lo)[1])
    val0 = float(heat_trace_bounded(spec, t_lo)[0])
    if tail > 1e-12 * abs(val0):
        raise AccuracyError(f"spectral tail not negligible at t = {t_lo:.3g}; enlarge the cutoff",
                            min_t=t_lo)
    # integrate in x = ln t: int K(t) dt/t = int K(e^x) dx
    raw, qerr = integrate.quad(lambda x: heat_trace_bounded(spec, math.exp(x))[0],
                               math.log(t_lo), math.log(t_hi), epsabs=0.0, epsrel=1e-13, limit=200)
    qerr += tail * tau
    measured = raw - div - conv
    # size of the last retained term stands in for the first omitted one
    trunc = abs(a[K]) * abs(_power_integral((K - n) / 2, t_lo, t_hi))
    diag = coeffs.fit_diagnostics
    if diag is not None:
        trunc += sum(e * abs(_power_integral((k - n) / 2, t_lo, t_hi))
                     for k, e in diag.coefficient_errors.items() if k <= K)
    return RGStepReport(lam, lam_prime, tau, float(raw), float(div), float(log_part), float(conv),
                        a_n, -float(log_part), float(measured), float(trunc), float(qerr))


def rg_flow_eigenvalues(eigenvalues, a_n: float, scales) -> dict:
    """Renormalized eigenvalues along a decreasing sequence of cutoffs.

    Each step shifts every eigenvalue by -2 ln(lam/lam') a_n. Eigenvalues are
    tracked by index; ``crossings`` lists steps where the order changed.
    """
    lam0 = np.asarray(eigenvalues, dtype=float)
    scales = np.asarray(scales, dtype=float)
    if scales.ndim != 1 or scales.size < 1 or np.any(np.diff(scales) > 0) or np.any(scales <= 0):
        raise InvalidInputError("scales must be positive and nonincreasing")
    rows = [lam0]
    crossings = []
    for i in range(1, scales.size):
        nxt = rows[-1] - 2 * math.log(scales[i - 1] / scales[i]) * a_n
        if np.any(np.argsort(nxt, kind="stable") != np.argsort(rows[-1], kind="stable")):
            crossings.append(i)
        rows.append(nxt)
    return {"scales": scales, "eigenvalues": np.array(rows), "crossings": crossings}
