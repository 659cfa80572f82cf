import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sdwave.spectral import (
    BasisSpec,
    GridField,
    SpectralField,
    eigenvalue,
    first_eigenvalue,
    grid_integral,
    inner_product,
    set_transform_backend,
    sobolev_norm,
    to_coeffs,
    to_coeffs_dense,
    to_coeffs_dst,
    to_grid,
    to_grid_dense,
    to_grid_dst,
)

bases = st.builds(BasisSpec, st.integers(1, 3), st.integers(1, 8),
                  st.sampled_from([Fraction(1), Fraction(3, 2), Fraction(2)]))


def random_field(basis, rng):
    return SpectralField(basis, rng.standard_normal(basis.shape))


@pytest.mark.parametrize("k, lam", [((1,), 1), ((1, 1, 1), 3), ((2, 3), 13)])
def test_eigenvalue_examples(k, lam):
    assert eigenvalue(k) == lam


@pytest.mark.parametrize("d", [1, 2, 3])
def test_first_eigenvalue_is_dimension(d):
    assert first_eigenvalue(BasisSpec(d, 4)) == d


def test_eigenvalue_rejects_zero_index():
    with pytest.raises(ValueError):
        eigenvalue((0, 1))


def test_basis_validation():
    with pytest.raises(ValueError):
        BasisSpec(4, 2)
    with pytest.raises(ValueError):
        BasisSpec(1, 0)
    with pytest.raises(ValueError):
        BasisSpec(1, 4, Fraction(1, 2))


@pytest.mark.parametrize("d, n", [(1, 1), (1, 17), (2, 5), (3, 4)])
def test_grid_has_enough_points(d, n):
    b = BasisSpec(d, n)
    assert b.grid_shape == (b.intervals - 1,) * d
    assert b.intervals - 1 >= math.ceil(b.oversampling * n)


def test_zero_round_trip():
    b = BasisSpec(2, 5)
    g = to_grid(b.zeros())
    assert np.all(g.values == 0)
    assert np.all(to_coeffs(g).coeffs == 0)


def test_single_mode_samples_sine_product():
    b = BasisSpec(2, 4)
    f = b.mode((2, 3))
    x = b.grid_points
    expected = (2 / math.pi) * np.outer(np.sin(2 * x), np.sin(3 * x))
    assert np.allclose(to_grid(f).values, expected, atol=1e-14)
    assert np.allclose(to_coeffs(to_grid(f)).coeffs, f.coeffs, atol=1e-14)


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("n", [1, 8, 32])
def test_round_trip_identity(d, n, rng):
    if d == 3 and n == 32:
        n = 16  # keeps the 3-D case quick; 32^3 is covered by the DST-only test below
    b = BasisSpec(d, n)
    f = random_field(b, rng)
    back = to_coeffs(to_grid(f)).coeffs
    assert np.linalg.norm(back - f.coeffs) <= 1e-12 * np.linalg.norm(f.coeffs)


def test_round_trip_3d_32_dst(rng):
    b = BasisSpec(3, 32)
    f = random_field(b, rng)
    back = to_coeffs_dst(to_grid_dst(f)).coeffs
    assert np.linalg.norm(back - f.coeffs) <= 1e-12 * np.linalg.norm(f.coeffs)


@given(bases, st.integers(0, 2**32 - 1))
def test_dense_and_dst_backends_agree(b, seed):
    f = random_field(b, np.random.default_rng(seed))
    g1, g2 = to_grid_dense(f), to_grid_dst(f)
    assert np.allclose(g1.values, g2.values, rtol=0, atol=1e-12 * max(1, np.abs(g1.values).max()))
    u = GridField(b, np.random.default_rng(seed + 1).standard_normal(b.grid_shape))
    assert np.allclose(to_coeffs_dense(u).coeffs, to_coeffs_dst(u).coeffs, atol=1e-12)


def test_backend_switch(rng):
    b = BasisSpec(1, 8)
    f = random_field(b, rng)
    try:
        set_transform_backend("dst")
        a = to_grid(f).values
        set_transform_backend("dense")
        c = to_grid(f).values
    finally:
        set_transform_backend("auto")
    assert np.allclose(a, c, atol=1e-13)
    with pytest.raises(ValueError):
        set_transform_backend("fftw")


def test_shape_mismatch():
    b = BasisSpec(1, 4)
    with pytest.raises(ValueError):
        SpectralField(b, np.zeros(5))
    with pytest.raises(ValueError):
        GridField(b, np.zeros(3))
    with pytest.raises(ValueError):
        SpectralField(b, [1.0, np.nan, 0.0, 0.0])


def test_sobolev_examples():
    b3 = BasisSpec(3, 2)
    assert sobolev_norm(b3.mode((1, 1, 1)), -1) == pytest.approx(3**-0.5, rel=1e-15)
    b1 = BasisSpec(1, 3)
    assert sobolev_norm(b1.mode(2), 2) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        sobolev_norm(b1.mode(1), 2.5)


@given(bases, st.integers(0, 2**32 - 1))
def test_l2_norm_is_parseval(b, seed):
    f = random_field(b, np.random.default_rng(seed))
    assert sobolev_norm(f, 0) == pytest.approx(np.linalg.norm(f.coeffs), rel=1e-13)


@given(bases, st.integers(0, 2**32 - 1))
def test_discrete_poincare(b, seed):
    f = random_field(b, np.random.default_rng(seed))
    assert sobolev_norm(f, 1) ** 2 >= first_eigenvalue(b) * sobolev_norm(f, 0) ** 2 * (1 - 1e-13)


def test_inner_product_examples():
    b = BasisSpec(1, 2)
    assert inner_product(b.mode(1), b.mode(2)) == 0
    assert inner_product(b.mode(1), b.mode(1)) == 1
    assert inner_product(SpectralField(b, [1, 2]), SpectralField(b, [3, -1])) == 1
    with pytest.raises(ValueError):
        inner_product(b.mode(1), BasisSpec(1, 3).mode(1))


@given(bases, st.integers(0, 2**32 - 1))
def test_inner_product_matches_quadrature(b, seed):
    rng = np.random.default_rng(seed)
    f, g = random_field(b, rng), random_field(b, rng)
    quad = grid_integral(b, to_grid(f).values * to_grid(g).values)
    assert quad == pytest.approx(inner_product(f, g), abs=1e-10)


def test_eigenvalue_monotone():
    assert eigenvalue((2, 1)) > eigenvalue((1, 1))
    assert eigenvalue((2, 3, 2)) > eigenvalue((2, 2, 2))


def test_field_arithmetic():
    b = BasisSpec(1, 3)
    f = SpectralField(b, [1.0, 2.0, 3.0])
    assert np.array_equal((f + f - f).coeffs, f.coeffs)
    assert np.array_equal((2 * f).coeffs, [2, 4, 6])
    assert np.array_equal(f.laplacian().coeffs, [-1, -8, -27])
    assert np.allclose(f.apply_power(-1).coeffs, [1, 0.5, 1 / 3])
