from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg

from spectralflow.errors import InvalidInputError, UnsupportedManifoldError
from spectralflow.manifolds import (
    ConformalTorus, FlatTorus, Product, RoundSphere, Spectrum, circle, conformal_torus_spectrum,
    curvature_invariants, manifold_from_json, manifold_to_json, parse_manifold, product_spectrum,
    rectangular_torus, sphere_multiplicity, sphere_spectrum, spectrum_of, torus_spectrum, volume,
)

TWO_PI = 2 * math.pi


def brute_torus(basis, cutoff):
    """Enumerate 4 pi^2 |w|^2 over dual vectors by plain loops."""
    B = np.asarray(basis, dtype=float)
    # |m_i| = |<w, b_i>| <= |w| |b_i|
    reach = int(np.linalg.norm(B, axis=1).max() * math.sqrt(cutoff) / TWO_PI) + 1
    dual = np.linalg.inv(B).T
    counts = {}
    for m in itertools.product(range(-reach, reach + 1), repeat=B.shape[0]):
        w = np.asarray(m) @ dual
        lam = 4 * math.pi ** 2 * float(w @ w)
        if lam <= cutoff * (1 + 1e-12):
            key = round(lam, 9)
            counts[key] = counts.get(key, 0) + 1
    return sorted(counts.items())


def harmonic_dimension(n, k):
    # dim of harmonic homogeneous polynomials of degree k in n+1 variables
    d = math.comb(k + n, n)
    return d - (math.comb(k + n - 2, n) if k >= 2 else 0)


# --------------------------------------------------------------------------
# spectra


def test_square_torus_small_cutoff():
    sp = torus_spectrum(np.eye(2) * TWO_PI, 5)
    assert sp.entries == [(0.0, 1), (1.0, 4), (2.0, 4), (4.0, 4), (5.0, 8)]
    assert sp.zero_modes == 1


def test_circle_lowest_mode():
    for L in (1.0, 3.7, TWO_PI):
        sp = torus_spectrum([[L]], 5 * (TWO_PI / L) ** 2)
        lam, m = sp.positive()
        assert lam[0] == pytest.approx((TWO_PI / L) ** 2, rel=1e-14)
        assert m[0] == 2


def test_degenerate_basis_rejected():
    with pytest.raises(InvalidInputError):
        torus_spectrum([[1.0, 2.0], [2.0, 4.0]], 10.0)


@pytest.mark.parametrize("basis", [
    [[1.0, 0.0], [0.3, 1.2]],
    [[TWO_PI, 0.0], [0.0, 3.0]],
    [[1.0, 0.0, 0.0], [0.2, 1.1, 0.0], [0.0, 0.4, 0.9]],
])
def test_torus_matches_brute_force(basis):
    cutoff = 400.0
    sp = torus_spectrum(basis, cutoff)
    ref = brute_torus(basis, cutoff)
    assert len(ref) == len(sp.entries)
    for (lam, m), (rl, rm) in zip(sp.entries, ref):
        assert lam == pytest.approx(rl, rel=1e-9, abs=1e-9)
        assert m == rm


def test_sphere_examples():
    assert sphere_spectrum(2, 1.0, 2).entries == [(0.0, 1), (2.0, 3), (6.0, 5)]
    sp = sphere_spectrum(3, 1.0, 1)
    assert sp.entries[1] == (3.0, 4)
    a, b = sphere_spectrum(2, 1.0, 10), sphere_spectrum(2, 2.0, 10)
    np.testing.assert_allclose(b.eigenvalues, a.eigenvalues / 4, rtol=1e-15)
    np.testing.assert_array_equal(a.multiplicities, b.multiplicities)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_sphere_multiplicity_oracle(n):
    for k in range(0, 12):
        assert sphere_multiplicity(n, k) == harmonic_dimension(n, k)


def test_product_equals_square_torus():
    s1 = torus_spectrum([[TWO_PI]], 5)
    prod = product_spectrum(s1, s1, 5)
    assert prod.entries == torus_spectrum(np.eye(2) * TWO_PI, 5).entries
    assert prod.entries[0] == (0.0, 1)
    assert prod.eigenvalues.max() <= 5


def test_product_matches_pairwise_sums():
    a = sphere_spectrum(2, 1.0, 20)
    b = torus_spectrum([[3.0]], 300)
    cut = 200.0
    prod = product_spectrum(a, b, cut)
    ref = {}
    for la, ma in a.entries:
        for lb, mb in b.entries:
            if la + lb <= cut:
                key = round(la + lb, 9)
                ref[key] = ref.get(key, 0) + ma * mb
    assert [(round(l, 9), m) for l, m in prod.entries] == sorted(ref.items())
    assert prod.dim == 3


def test_product_cutoff_guard():
    a = sphere_spectrum(2, 1.0, 3)
    with pytest.raises(InvalidInputError):
        product_spectrum(a, a, a.cutoff + 1)


def test_spectrum_invariants_enforced():
    with pytest.raises(InvalidInputError):
        Spectrum(1, [1.0, 1.0], [1, 1], 0, "exact", 2.0)
    with pytest.raises(InvalidInputError):
        Spectrum(1, [0.0, 1.0], [1, 1], 0, "exact", 2.0)
    with pytest.raises(InvalidInputError):
        Spectrum(1, [1.0, 3.0], [1, 1], 0, "exact", 2.0)


@pytest.mark.parametrize("spec,cut", [
    (circle(TWO_PI), 4e8),
    (rectangular_torus(TWO_PI, 3.0), 2e4),
    (RoundSphere(2, 1.0), None),
    (RoundSphere(3, 1.5), None),
])
def test_weyl_law(spec, cut):
    sp = spectrum_of(spec, cutoff=cut, k_max=400 if cut is None else None)
    assert sp.mode_count >= 10 ** 4
    n = sp.dim
    lam = sp.eigenvalues[-1]
    ratio = sp.mode_count * (4 * math.pi) ** (n / 2) * math.gamma(n / 2 + 1) / (volume(spec) * lam ** (n / 2))
    assert abs(ratio - 1) < 0.05


@given(st.floats(0.3, 5.0), st.floats(0.3, 5.0), st.floats(0.5, 3.0))
@settings(max_examples=25, deadline=None)
def test_torus_scaling_covariance(a, b, c):
    base = torus_spectrum([[a, 0.0], [0.0, b]], 300.0)
    big = torus_spectrum([[a * c, 0.0], [0.0, b * c]], 300.0 / c ** 2)
    np.testing.assert_allclose(big.eigenvalues, base.eigenvalues / c ** 2, rtol=1e-10)
    np.testing.assert_array_equal(big.multiplicities, base.multiplicities)


# --------------------------------------------------------------------------
# conformal torus


def dense_conformal(u, lengths):
    """Eigenvalues of -exp(-2u) Lap_0 assembled entry by entry."""
    nx, ny = u.shape
    hx, hy = lengths[0] / nx, lengths[1] / ny
    N = nx * ny
    A = np.zeros((N, N))
    idx = lambda i, j: (i % nx) * ny + (j % ny)
    for i in range(nx):
        for j in range(ny):
            p = idx(i, j)
            A[p, p] += 2 / hx ** 2 + 2 / hy ** 2
            A[p, idx(i + 1, j)] -= 1 / hx ** 2
            A[p, idx(i - 1, j)] -= 1 / hx ** 2
            A[p, idx(i, j + 1)] -= 1 / hy ** 2
            A[p, idx(i, j - 1)] -= 1 / hy ** 2
    return linalg.eigh(A, np.diag(np.exp(2 * u.ravel())), eigvals_only=True)


def test_conformal_matches_dense_oracle():
    N = 16
    x = np.arange(N) * TWO_PI / N
    u = 0.1 * np.cos(x)[:, None] * np.ones((1, N))
    sp = conformal_torus_spectrum(ConformalTorus((TWO_PI, TWO_PI), u), 40)
    ref = dense_conformal(u, (TWO_PI, TWO_PI))
    got = np.repeat(sp.eigenvalues, sp.multiplicities)
    np.testing.assert_allclose(got, ref[:got.size], rtol=1e-10, atol=1e-10)


def test_conformal_flat_limit():
    sp = conformal_torus_spectrum(ConformalTorus((TWO_PI, TWO_PI), np.zeros((64, 64))), 5)
    assert sp.zero_modes == 1
    lam, m = sp.positive()
    h = TWO_PI / 64
    assert abs(lam[0] - 1) < h ** 2
    assert m[0] == 4


def test_conformal_constant_scaling():
    base = conformal_torus_spectrum(ConformalTorus((TWO_PI, TWO_PI), np.zeros((16, 16))), 30)
    c = 0.37
    sc = conformal_torus_spectrum(ConformalTorus((TWO_PI, TWO_PI), np.full((16, 16), c)), 30)
    np.testing.assert_allclose(sc.eigenvalues, base.eigenvalues * math.exp(-2 * c), rtol=1e-9, atol=1e-12)


def test_conformal_large_grid_uses_sparse_solver():
    N = 48
    x = np.arange(N) * TWO_PI / N
    u = 0.05 * np.sin(x)[:, None] * np.ones((1, N))
    sp = conformal_torus_spectrum(ConformalTorus((TWO_PI, TWO_PI), u), 10)
    ref = dense_conformal(u, (TWO_PI, TWO_PI))
    got = np.repeat(sp.eigenvalues, sp.multiplicities)
    np.testing.assert_allclose(got, ref[:got.size], rtol=1e-8, atol=1e-10)


def test_conformal_count_validation():
    spec = ConformalTorus((TWO_PI, TWO_PI), np.zeros((8, 8)))
    with pytest.raises(InvalidInputError):
        conformal_torus_spectrum(spec, 65)
    with pytest.raises(InvalidInputError):
        conformal_torus_spectrum(ConformalTorus((TWO_PI, TWO_PI), np.zeros((4, 8))), 3)


# --------------------------------------------------------------------------
# curvature


def test_flat_curvature_vanishes():
    c = curvature_invariants(rectangular_torus(1.0, 2.0))
    assert (c.int_R, c.int_R2, c.int_Ric2, c.int_Riem2, c.int_E4, c.int_W2) == (0, 0, 0, 0, 0, 0)
    assert c.euler_char == 0


def test_sphere_gauss_bonnet():
    c = curvature_invariants(RoundSphere(2, 1.0))
    assert c.int_R == pytest.approx(8 * math.pi, rel=1e-15)
    assert c.euler_char == 2
    assert c.int_R == pytest.approx(4 * math.pi * c.euler_char)
    c3 = curvature_invariants(RoundSphere(2, 3.0))
    assert c3.int_R == pytest.approx(8 * math.pi, rel=1e-14)


def test_s4_invariants():
    c = curvature_invariants(RoundSphere(4, 1.0))
    assert c.int_W2 == 0.0
    assert c.int_E4 / (32 * math.pi ** 2) == pytest.approx(2, abs=1e-10)
    assert c.euler_char == 2


def test_product_s2xs2_euler():
    c = curvature_invariants(Product(RoundSphere(2, 1.0), RoundSphere(2, 1.0)))
    assert c.euler_char == 4
    assert c.int_W2 >= 0


def test_conformal_curvature_integrates_to_zero():
    N = 32
    x = np.arange(N) * TWO_PI / N
    u = 0.2 * np.cos(x)[:, None] + 0.1 * np.sin(2 * x)[None, :]
    c = curvature_invariants(ConformalTorus((TWO_PI, TWO_PI), u))
    assert abs(c.int_R) < 1e-12
    assert c.euler_char == 0
    assert c.int_R2 > 0


def test_unsupported_curvature():
    with pytest.raises((UnsupportedManifoldError, InvalidInputError)):
        curvature_invariants("klein bottle")


# --------------------------------------------------------------------------
# serialization and parsing


@pytest.mark.parametrize("spec", [
    circle(2.5),
    FlatTorus(((1.0, 0.0), (0.5, 2.0))),
    RoundSphere(3, 0.7),
    Product(RoundSphere(2, 1.0), circle(TWO_PI)),
    ConformalTorus((TWO_PI, 3.0), np.arange(64.0).reshape(8, 8) / 100),
])
def test_json_roundtrip(spec):
    back = manifold_from_json(manifold_to_json(spec))
    assert manifold_to_json(back) == manifold_to_json(spec)


def test_parse_manifold_forms():
    assert parse_manifold("sphere:2:1") == RoundSphere(2, 1.0)
    assert parse_manifold("circle:2pi") == circle(TWO_PI)
    assert isinstance(parse_manifold("product:circle:1*sphere:2"), Product)
    assert parse_manifold("conformal:2pi,2pi:16:0.1").u.shape == (16, 16)
    for bad in ("blob:1", "sphere:x", "lattice:1,2;2,4", "circle:0", "product:circle:1"):
        with pytest.raises(InvalidInputError):
            parse_manifold(bad)
