"""Model closed manifolds: exact and discretized Laplace spectra, curvature integrals.

Eigenvalues follow the positive-Laplacian convention, so every spectrum is
contained in ``[0, inf)``. The zero eigenvalue is kept as an explicit entry
and its multiplicity is mirrored in ``Spectrum.zero_modes``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

import numpy as np
from scipy import linalg, sparse, special
from scipy.sparse import linalg as splinalg

from .errors import InvalidInputError, UnsupportedManifoldError

EXACT = "exact"
DISCRETIZED = "discretized"

# relative tolerance used to merge numerically equal eigenvalues
EXACT_RTOL = 1e-12
DISCRETE_RTOL = 1e-9

# safety factor on the empirical Weyl constant used in tail bounds
WEYL_SAFETY = 1.5


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Sorted eigenvalue/multiplicity table of a Laplace-type operator.

    Parameters
    ----------
    dim : int
        Dimension of the underlying manifold.
    eigenvalues : ndarray
        Strictly increasing, nonnegative.
    multiplicities : ndarray of int
        Positive multiplicities aligned with ``eigenvalues``.
    zero_modes : int
        Kernel dimension; equals the multiplicity of eigenvalue 0 if present.
    source : {"exact", "discretized"}
    cutoff : float
        Every eigenvalue of the operator below ``cutoff`` is listed.
    total_modes : int, optional
        Size of the operator when it is a finite matrix. Enables an exact
        tail bound instead of the Weyl-law estimate.
    """

    dim: int
    eigenvalues: np.ndarray
    multiplicities: np.ndarray
    zero_modes: int
    source: str
    cutoff: float
    total_modes: int | None = None

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        mult = np.asarray(self.multiplicities, dtype=np.int64)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "multiplicities", mult)
        if self.dim < 1:
            raise InvalidInputError(f"dimension must be positive, got {self.dim}")
        if lam.ndim != 1 or lam.shape != mult.shape or lam.size == 0:
            raise InvalidInputError("eigenvalues and multiplicities must be equal-length, nonempty 1-d arrays")
        if np.any(lam < 0):
            raise InvalidInputError("eigenvalues must be nonnegative")
        if np.any(np.diff(lam) <= 0):
            raise InvalidInputError("eigenvalues must be strictly increasing")
        if np.any(mult <= 0):
            raise InvalidInputError("multiplicities must be positive")
        if self.source not in (EXACT, DISCRETIZED):
            raise InvalidInputError(f"unknown spectrum source {self.source!r}")
        h = int(mult[0]) if lam[0] == 0.0 else 0
        if h != self.zero_modes:
            raise InvalidInputError(f"zero_modes={self.zero_modes} but eigenvalue 0 has multiplicity {h}")
        if lam[-1] > self.cutoff * (1 + 1e-12):
            raise InvalidInputError("listed eigenvalue exceeds cutoff")
        if self.total_modes is not None and self.total_modes < self.mode_count:
            raise InvalidInputError("total_modes smaller than listed mode count")

    @property
    def entries(self) -> list[tuple[float, int]]:
        return [(float(v), int(m)) for v, m in zip(self.eigenvalues, self.multiplicities)]

    @property
    def mode_count(self) -> int:
        return int(self.multiplicities.sum())

    def positive(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues and multiplicities with the kernel removed."""
        keep = self.eigenvalues > 0
        return self.eigenvalues[keep], self.multiplicities[keep]

    def counting_function(self, lam) -> np.ndarray:
        """N(lam): number of eigenvalues <= lam, counted with multiplicity."""
        cum = np.cumsum(self.multiplicities)
        idx = np.searchsorted(self.eigenvalues, np.asarray(lam, dtype=float), side="right")
        return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0)

    def shifted(self, m2: float) -> "Spectrum":
        """Spectrum of the operator plus the constant ``m2`` (a mass term)."""
        lam = self.eigenvalues + m2
        if lam[0] < 0:
            raise InvalidInputError("shift would produce negative eigenvalues")
        h = int(self.multiplicities[0]) if lam[0] == 0 else 0
        return Spectrum(self.dim, lam, self.multiplicities, h, self.source, self.cutoff + m2, self.total_modes)

    def scaled(self, c: float) -> "Spectrum":
        if c <= 0:
            raise InvalidInputError("scale factor must be positive")
        return Spectrum(self.dim, self.eigenvalues * c, self.multiplicities, self.zero_modes,
                        self.source, self.cutoff * c, self.total_modes)

    def weyl_constant(self) -> float:
        """Safety-inflated bound A with N(lam) <= A lam^(n/2) near and above the cutoff."""
        half = self.dim / 2
        lam, mult = self.eigenvalues, self.multiplicities
        cum = np.cumsum(mult)
        sel = (lam >= self.cutoff / 4) & (lam > 0)
        if not np.any(sel):
            sel = lam > 0
        if not np.any(sel):
            return float(cum[-1]) / self.cutoff ** half * WEYL_SAFETY
        return WEYL_SAFETY * float(np.max(cum[sel] / lam[sel] ** half))

    def tail_bound(self, t, power: int = 0):
        """Upper bound on sum over unlisted modes of lam^power exp(-lam t).

        For finite operators the bound is exact; otherwise it integrates the
        Weyl-law envelope N(lam) <= A lam^(n/2) by parts, which is valid once
        cutoff * t >= power (the summand is then decreasing).
        """
        t = np.asarray(t, dtype=float)
        cut = self.cutoff
        if self.total_modes is not None:
            rest = self.total_modes - self.mode_count
            if rest == 0:
                return np.zeros_like(t)
            peak = np.where(cut * t >= power, cut, power / t)
            return rest * peak ** power * np.exp(-peak * t)
        a = self.dim / 2 + power + 1
        A = self.weyl_constant()
        with np.errstate(over="ignore", invalid="ignore"):
            val = A * t ** (-(a - 1)) * special.gammaincc(a, cut * t) * special.gamma(a)
        return np.where(cut * t >= power, val, np.inf)


# --------------------------------------------------------------------------
# manifold descriptions


@dataclass(frozen=True)
class FlatTorus:
    basis: tuple  # rows are lattice vectors

    @property
    def dim(self) -> int:
        return len(self.basis)


@dataclass(frozen=True)
class RoundSphere:
    n: int
    radius: float = 1.0

    @property
    def dim(self) -> int:
        return self.n


@dataclass(frozen=True)
class Product:
    left: "ManifoldSpec"
    right: "ManifoldSpec"

    @property
    def dim(self) -> int:
        return self.left.dim + self.right.dim


@dataclass(frozen=True, eq=False)
class ConformalTorus:
    """Rectangular torus with metric exp(2u) (dx^2 + dy^2), u sampled on a periodic grid."""

    lengths: tuple
    u: np.ndarray = field(repr=False)

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "lengths", tuple(float(x) for x in self.lengths))

    @property
    def dim(self) -> int:
        return 2

    @property
    def spacing(self) -> tuple[float, float]:
        return self.lengths[0] / self.u.shape[0], self.lengths[1] / self.u.shape[1]


ManifoldSpec = Union[FlatTorus, RoundSphere, Product, ConformalTorus]


def circle(length: float) -> FlatTorus:
    return FlatTorus(((float(length),),))


def rectangular_torus(*lengths: float) -> FlatTorus:
    n = len(lengths)
    return FlatTorus(tuple(tuple(float(lengths[i]) if i == j else 0.0 for j in range(n)) for i in range(n)))


def validate_manifold(spec: ManifoldSpec) -> None:
    if isinstance(spec, FlatTorus):
        B = np.asarray(spec.basis, dtype=float)
        if B.ndim != 2 or B.shape[0] != B.shape[1] or B.shape[0] == 0:
            raise InvalidInputError("torus basis must be a square, nonempty matrix")
        if not np.all(np.isfinite(B)):
            raise InvalidInputError("torus basis must be finite")
        if abs(np.linalg.det(B)) <= 1e-12 * np.prod(np.linalg.norm(B, axis=1)):
            raise InvalidInputError("torus basis vectors are linearly dependent")
    elif isinstance(spec, RoundSphere):
        if int(spec.n) != spec.n or spec.n < 1:
            raise InvalidInputError("sphere dimension must be a positive integer")
        if not spec.radius > 0 or not math.isfinite(spec.radius):
            raise InvalidInputError("sphere radius must be positive")
    elif isinstance(spec, Product):
        validate_manifold(spec.left)
        validate_manifold(spec.right)
    elif isinstance(spec, ConformalTorus):
        if spec.u.ndim != 2 or min(spec.u.shape) < 1:
            raise InvalidInputError("conformal factor must be a nonempty 2-d grid")
        if len(spec.lengths) != 2 or min(spec.lengths) <= 0:
            raise InvalidInputError("conformal torus needs two positive side lengths")
        if not np.all(np.isfinite(spec.u)):
            raise InvalidInputError("conformal factor must be finite")
    else:
        raise UnsupportedManifoldError(f"unknown manifold type {type(spec).__name__}")


def volume(spec: ManifoldSpec) -> float:
    validate_manifold(spec)
    if isinstance(spec, FlatTorus):
        return float(abs(np.linalg.det(np.asarray(spec.basis, dtype=float))))
    if isinstance(spec, RoundSphere):
        n = spec.n
        return 2 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2) * spec.radius ** n
    if isinstance(spec, Product):
        return volume(spec.left) * volume(spec.right)
    hx, hy = spec.spacing
    return float(np.exp(2 * spec.u).sum() * hx * hy)


# --------------------------------------------------------------------------
# spectra


def _group(values: np.ndarray, weights: np.ndarray, rtol: float) -> tuple[np.ndarray, np.ndarray]:
    """Merge sorted values closer than rtol (relative), summing weights."""
    order = np.argsort(values, kind="stable")
    v, w = values[order], weights[order]
    if v.size == 0:
        return v, w
    scale = np.maximum(np.abs(v[1:]), 1.0)
    breaks = np.flatnonzero(np.diff(v) > rtol * scale) + 1
    starts = np.concatenate(([0], breaks))
    # representative: first member of each cluster, so output is order independent
    return v[starts], np.add.reduceat(w, starts)


def _integer_form(ginv: np.ndarray) -> tuple[float, np.ndarray] | None:
    """Write ginv = s * Q with Q a small integer matrix, if possible."""
    ref = np.max(np.abs(ginv))
    q = ginv / ref
    fracs = [[Fraction(float(x)).limit_denominator(1000) for x in row] for row in q]
    approx = np.array([[float(f) for f in row] for row in fracs])
    if np.max(np.abs(approx - q)) > 1e-12:
        return None
    den = math.lcm(*[f.denominator for row in fracs for f in row])
    Q = np.array([[int(f * den) for f in row] for row in fracs], dtype=np.int64)
    return ref / den, Q


def torus_spectrum(basis, cutoff: float) -> Spectrum:
    """Exact Laplace spectrum of R^n / (lattice spanned by the rows of ``basis``).

    Eigenvalues are 4 pi^2 |w|^2 over dual-lattice vectors w.
    """
    B = np.atleast_2d(np.asarray(basis, dtype=float))
    validate_manifold(FlatTorus(tuple(map(tuple, B))))
    if not cutoff > 0:
        raise InvalidInputError("cutoff must be positive")
    n = B.shape[0]
    ginv = np.linalg.inv(B @ B.T)
    bounds = np.floor(np.linalg.norm(B, axis=1) * math.sqrt(cutoff) / (2 * math.pi)).astype(int) + 1
    iform = _integer_form(ginv)
    if iform is not None:
        s, Q = iform
        # integer norms: compare against the cutoff in integer units
        limit = cutoff / (4 * math.pi ** 2 * s)
        limit_int = math.floor(limit * (1 + 1e-14))
    keys, counts = [], []
    rest = [np.arange(-b, b + 1) for b in bounds[1:]]
    tail = (np.stack([g.ravel() for g in np.meshgrid(*rest, indexing="ij")], axis=1)
            if rest else np.zeros((1, 0), dtype=np.int64))
    first = np.arange(-bounds[0], bounds[0] + 1)
    step = max(1, 2_000_000 // tail.shape[0])
    for lo in range(0, first.size, step):
        head = first[lo:lo + step]
        m = np.concatenate([np.repeat(head, tail.shape[0])[:, None],
                            np.tile(tail, (head.size, 1))], axis=1).astype(np.int64)
        if iform is not None:
            norm = np.einsum("ij,jk,ik->i", m, Q, m)
            norm = norm[norm <= limit_int]
        else:
            mf = m.astype(float)
            norm = np.einsum("ij,jk,ik->i", mf, ginv, mf) * 4 * math.pi ** 2
            norm = norm[norm <= cutoff * (1 + 1e-14)]
        u, c = np.unique(norm, return_counts=True)
        keys.append(u)
        counts.append(c)
    keys = np.concatenate(keys)
    counts = np.concatenate(counts).astype(np.int64)
    if iform is not None:
        u, inv = np.unique(keys, return_inverse=True)
        mult = np.bincount(inv, weights=counts).astype(np.int64)
        lam = u.astype(float) * (4 * math.pi ** 2 * s)
    else:
        lam, mult = _group(keys, counts, EXACT_RTOL)
    lam[0] = 0.0
    return Spectrum(n, lam, mult, int(mult[0]), EXACT, float(cutoff))


def sphere_multiplicity(n: int, k: int) -> int:
    """Dimension of degree-k spherical harmonics on S^n."""
    if k == 0:
        return 1
    if n == 1:
        return 2
    return (2 * k + n - 1) * math.comb(k + n - 2, k) // (n - 1)


def sphere_spectrum(n: int, r: float, k_max: int) -> Spectrum:
    """Exact spectrum of the round n-sphere of radius r, degrees 0..k_max."""
    validate_manifold(RoundSphere(n, r))
    if k_max < 0 or int(k_max) != k_max:
        raise InvalidInputError("k_max must be a nonnegative integer")
    k = np.arange(k_max + 1, dtype=float)
    lam = k * (k + n - 1) / r ** 2
    mult = np.array([sphere_multiplicity(n, int(j)) for j in range(k_max + 1)], dtype=np.int64)
    return Spectrum(n, lam, mult, 1, EXACT, float(lam[-1]) if k_max > 0 else 0.0)


def product_spectrum(a: Spectrum, b: Spectrum, cutoff: float) -> Spectrum:
    """Spectrum of the product manifold, complete below ``cutoff``."""
    if cutoff > min(a.cutoff, b.cutoff) * (1 + 1e-12):
        raise InvalidInputError(
            f"cutoff {cutoff} exceeds completeness guarantee min({a.cutoff}, {b.cutoff})")
    vals, wts = [], []
    for la, ma in zip(a.eigenvalues, a.multiplicities):
        if la > cutoff:
            break
        j = np.searchsorted(b.eigenvalues, cutoff - la, side="right")
        vals.append(la + b.eigenvalues[:j])
        wts.append(ma * b.multiplicities[:j])
    discrete = DISCRETIZED in (a.source, b.source)
    lam, mult = _group(np.concatenate(vals), np.concatenate(wts),
                       DISCRETE_RTOL if discrete else EXACT_RTOL)
    total = a.total_modes * b.total_modes if a.total_modes and b.total_modes else None
    return Spectrum(a.dim + b.dim, lam, mult, a.zero_modes * b.zero_modes,
                    DISCRETIZED if discrete else EXACT, float(cutoff), total)


def _periodic_laplacian_1d(n: int, h: float) -> sparse.csr_matrix:
    if n == 1:
        return sparse.csr_matrix((1, 1))
    main = -2.0 * np.ones(n)
    off = np.ones(n - 1)
    L = sparse.diags([off, main, off], [-1, 0, 1], shape=(n, n), format="lil")
    L[0, n - 1] += 1.0
    L[n - 1, 0] += 1.0
    return (L.tocsr() / h ** 2)


def periodic_laplacian(shape: tuple[int, int], spacing: tuple[float, float]) -> sparse.csr_matrix:
    """Second-order five-point Laplacian with periodic wrap, C-order flattening."""
    nx, ny = shape
    hx, hy = spacing
    Lx = _periodic_laplacian_1d(nx, hx)
    Ly = _periodic_laplacian_1d(ny, hy)
    return (sparse.kron(Lx, sparse.eye(ny)) + sparse.kron(sparse.eye(nx), Ly)).tocsr()


def conformal_torus_matrices(spec: ConformalTorus) -> tuple[sparse.csr_matrix, np.ndarray]:
    """Stiffness matrix -Lap_0 and mass weights exp(2u) for the discrete problem."""
    A = -periodic_laplacian(spec.u.shape, spec.spacing)
    return A, np.exp(2 * spec.u).ravel()


def conformal_torus_spectrum(spec: ConformalTorus, count: int) -> Spectrum:
    """Lowest eigenvalues of the discrete operator -exp(-2u) Lap_0.

    Solves the symmetric generalized problem (-Lap_0) v = lam exp(2u) v. At
    least ``count`` modes are returned; the list is extended to close a
    degenerate cluster cut by ``count`` so the completeness contract holds.
    """
    validate_manifold(spec)
    if min(spec.u.shape) < 8:
        raise InvalidInputError("conformal torus grid needs at least 8 points per period")
    N = spec.u.size
    if count < 1 or count > N:
        raise InvalidInputError(f"count must lie in [1, {N}], got {count}")
    A, w = conformal_torus_matrices(spec)
    s = 1.0 / np.sqrt(w)
    Bmat = sparse.diags(s) @ A @ sparse.diags(s)
    want = min(count + 8, N)
    if N <= 1600 or want >= N - 1:
        ev = linalg.eigh(Bmat.toarray(), eigvals_only=True)[:want]
    else:
        ev = splinalg.eigsh(Bmat.tocsc(), k=want, sigma=-1e-3, which="LM", return_eigenvectors=False)
        ev = np.sort(ev)
    scale = max(abs(ev[-1]), 1.0)
    ev = np.where(np.abs(ev) < 1e-9 * scale, 0.0, ev)
    take = count
    while take < ev.size and abs(ev[take] - ev[take - 1]) <= DISCRETE_RTOL * max(abs(ev[take]), 1.0):
        take += 1
    if take == ev.size and take < N:
        raise InvalidInputError("degenerate cluster at the requested count is too large to close")
    lam, mult = _group(ev[:take], np.ones(take, dtype=np.int64), DISCRETE_RTOL)
    h = int(mult[0]) if lam[0] == 0 else 0
    return Spectrum(2, lam, mult, h, DISCRETIZED, float(lam[-1]), total_modes=N)


def spectrum_of(spec: ManifoldSpec, cutoff: float | None = None, k_max: int | None = None,
                count: int | None = None) -> Spectrum:
    """Dispatch to the spectrum constructor matching ``spec``."""
    validate_manifold(spec)
    if isinstance(spec, FlatTorus):
        if cutoff is None:
            raise InvalidInputError("flat torus spectrum needs a cutoff")
        return torus_spectrum(spec.basis, cutoff)
    if isinstance(spec, RoundSphere):
        if k_max is None:
            if cutoff is None:
                raise InvalidInputError("sphere spectrum needs k_max or cutoff")
            n, r = spec.n, spec.radius
            # largest k with k(k+n-1)/r^2 <= cutoff
            k_max = int((-(n - 1) + math.sqrt((n - 1) ** 2 + 4 * cutoff * r * r)) / 2)
        return sphere_spectrum(spec.n, spec.radius, k_max)
    if isinstance(spec, Product):
        if cutoff is None:
            raise InvalidInputError("product spectrum needs a cutoff")
        a = spectrum_of(spec.left, cutoff=cutoff)
        b = spectrum_of(spec.right, cutoff=cutoff)
        return product_spectrum(a, b, min(cutoff, a.cutoff, b.cutoff))
    if count is None:
        raise InvalidInputError("conformal torus spectrum needs a count")
    return conformal_torus_spectrum(spec, count)


# --------------------------------------------------------------------------
# curvature


@dataclass(frozen=True)
class CurvatureData:
    """Integrated curvature invariants. ``int_X`` means the integral of X dV."""

    dim: int
    vol: float
    int_R: float
    int_R2: float
    int_Ric2: float
    int_Riem2: float
    int_LapR: float
    int_E4: float
    int_W2: float
    euler_char: int | None


def _constant_curvature(spec) -> tuple[int, float, float, float, float]:
    """(dim, vol, R, |Ric|^2, |Riem|^2) for families with constant pointwise invariants."""
    if isinstance(spec, FlatTorus):
        return spec.dim, volume(spec), 0.0, 0.0, 0.0
    if isinstance(spec, RoundSphere):
        n, K = spec.n, 1.0 / spec.radius ** 2
        return n, volume(spec), n * (n - 1) * K, n * (n - 1) ** 2 * K * K, 2 * n * (n - 1) * K * K
    if isinstance(spec, Product):
        a = _constant_curvature(spec.left)
        b = _constant_curvature(spec.right)
        return a[0] + b[0], a[1] * b[1], a[2] + b[2], a[3] + b[3], a[4] + b[4]
    raise UnsupportedManifoldError(f"no closed-form curvature for {type(spec).__name__}")


def _weyl_squared(n: int, R: float, ric2: float, riem2: float) -> float:
    if n < 4:
        return 0.0
    return riem2 - 4.0 / (n - 2) * ric2 + 2.0 / ((n - 1) * (n - 2)) * R * R


def _euler(dim: int, int_R: float, int_E4: float) -> int | None:
    if dim == 2:
        chi = int_R / (4 * math.pi)
    elif dim == 4:
        chi = int_E4 / (32 * math.pi ** 2)
    else:
        return None
    return round(chi) if abs(chi - round(chi)) < 1e-8 else None


def curvature_invariants(spec: ManifoldSpec) -> CurvatureData:
    """Closed-form (or grid-quadrature, for conformal tori) curvature integrals."""
    validate_manifold(spec)
    if isinstance(spec, ConformalTorus):
        hx, hy = spec.spacing
        lap_u = (periodic_laplacian(spec.u.shape, spec.spacing) @ spec.u.ravel()).reshape(spec.u.shape)
        dA = np.exp(2 * spec.u) * hx * hy
        R = -2 * np.exp(-2 * spec.u) * lap_u
        int_R = float(np.sum(R * dA))
        int_R2 = float(np.sum(R * R * dA))
        lap_R = periodic_laplacian(spec.u.shape, spec.spacing) @ R.ravel()
        # Lap_g R dA_g = Lap_0 R dx dy in two dimensions
        int_LapR = float(lap_R.sum() * hx * hy)
        return CurvatureData(2, float(dA.sum()), int_R, int_R2, int_R2 / 2, int_R2, int_LapR,
                             0.0, 0.0, _euler(2, int_R, 0.0))
    n, vol, R, ric2, riem2 = _constant_curvature(spec)
    if isinstance(spec, RoundSphere):
        w2 = 0.0  # conformally flat
    else:
        w2 = max(_weyl_squared(n, R, ric2, riem2), 0.0)
    int_R = R * vol
    int_E4 = (riem2 - 4 * ric2 + R * R) * vol
    return CurvatureData(n, vol, int_R, R * R * vol, ric2 * vol, riem2 * vol, 0.0,
                         int_E4, w2 * vol, _euler(n, int_R, int_E4))


# --------------------------------------------------------------------------
# serialization


def manifold_to_dict(spec: ManifoldSpec) -> dict:
    if isinstance(spec, FlatTorus):
        return {"kind": "flat_torus", "basis": [list(map(float, row)) for row in spec.basis]}
    if isinstance(spec, RoundSphere):
        return {"kind": "round_sphere", "n": int(spec.n), "radius": float(spec.radius)}
    if isinstance(spec, Product):
        return {"kind": "product", "left": manifold_to_dict(spec.left), "right": manifold_to_dict(spec.right)}
    if isinstance(spec, ConformalTorus):
        return {"kind": "conformal_torus", "lengths": list(spec.lengths), "u": spec.u.tolist()}
    raise UnsupportedManifoldError(f"unknown manifold type {type(spec).__name__}")


def manifold_from_dict(d: dict) -> ManifoldSpec:
    try:
        kind = d["kind"]
        if kind == "flat_torus":
            spec = FlatTorus(tuple(tuple(float(x) for x in row) for row in d["basis"]))
        elif kind == "round_sphere":
            spec = RoundSphere(int(d["n"]), float(d.get("radius", 1.0)))
        elif kind == "product":
            spec = Product(manifold_from_dict(d["left"]), manifold_from_dict(d["right"]))
        elif kind == "conformal_torus":
            spec = ConformalTorus(tuple(d["lengths"]), np.asarray(d["u"], dtype=float))
        else:
            raise InvalidInputError(f"unknown manifold kind {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidInputError):
            raise
        raise InvalidInputError(f"malformed manifold document: {exc}") from exc
    validate_manifold(spec)
    return spec


def manifold_to_json(spec: ManifoldSpec) -> str:
    return json.dumps(manifold_to_dict(spec), sort_keys=True)


def manifold_from_json(text: str) -> ManifoldSpec:
    try:
        return manifold_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"manifold JSON does not parse: {exc}") from exc


def _number(tok: str) -> float:
    tok = tok.strip().lower()
    if tok in ("pi", "2pi", "tau"):
        return math.pi if tok == "pi" else 2 * math.pi
    v = float(tok)
    if not math.isfinite(v):
        raise ValueError(tok)
    return v


def parse_manifold(text: str) -> ManifoldSpec:
    """Parse the compact command-line form.

    Accepted forms::

        circle:L
        sphere:n:r
        torus:L1,L2,...              rectangular torus
        lattice:a,b;c,d              rows are lattice vectors
        conformal:Lx,Ly:N:amp        u = amp cos(2 pi x / Lx) on an N x N grid
        product:<spec>*<spec>
    """
    try:
        kind, _, rest = text.partition(":")
        kind = kind.strip().lower()
        if kind == "product":
            left, sep, right = rest.partition("*")
            if not sep:
                raise ValueError("product needs two factors separated by '*'")
            spec = Product(parse_manifold(left), parse_manifold(right))
        elif kind == "circle":
            spec = circle(_number(rest))
        elif kind == "sphere":
            parts = rest.split(":")
            if len(parts) not in (1, 2):
                raise ValueError("sphere:n[:r]")
            n = int(parts[0])
            spec = RoundSphere(n, _number(parts[1]) if len(parts) == 2 else 1.0)
        elif kind == "torus":
            spec = rectangular_torus(*[_number(x) for x in rest.split(",")])
        elif kind == "lattice":
            spec = FlatTorus(tuple(tuple(_number(x) for x in row.split(",")) for row in rest.split(";")))
        elif kind == "conformal":
            parts = rest.split(":")
            if len(parts) != 3:
                raise ValueError("conformal:Lx,Ly:N:amp")
            lx, ly = (_number(x) for x in parts[0].split(","))
            N = int(parts[1])
            amp = _number(parts[2])
            x = np.arange(N) * lx / N
            u = amp * np.cos(2 * np.pi * x / lx)[:, None] * np.ones((1, N))
            spec = ConformalTorus((lx, ly), u)
        else:
            raise ValueError(f"unknown manifold kind {kind!r}")
    except InvalidInputError:
        raise
    except (ValueError, IndexError) as exc:
        raise InvalidInputError(f"cannot parse manifold {text!r}: {exc}") from exc
    validate_manifold(spec)
    return spec
