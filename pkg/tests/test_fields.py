import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgolab.fields import (
    FieldFormatError,
    Grid3,
    dealias,
    dealiased_product,
    fft3,
    ifft3,
    inner_product_l2,
    integrate,
    join8,
    random_field,
    read_field,
    smooth_cutoff,
    spectral_curl,
    spectral_divergence,
    spectral_gradient,
    spectral_jacobian,
    spectral_laplacian,
    split8,
    write_field,
)

G = Grid3(16, 1.0)
modes = st.tuples(*[st.integers(-7, 7)] * 3)


def test_grid_coordinates():
    g = Grid3(8, 2.0)
    assert g.h == 0.25
    np.testing.assert_allclose(g.x, -1.0 + 0.25 * np.arange(8))
    assert g.padded(3) == Grid3(24, 6.0)


@pytest.mark.parametrize("n,L", [(4, 1.0), (16, 0.0), (16, -1.0)])
def test_grid_rejects_bad_sizes(n, L):
    with pytest.raises(ValueError):
        Grid3(n, L)


def test_nyquist_wavenumber_is_zeroed():
    k = G.xi_deriv[0][:, 0, 0]
    assert k[G.n // 2] == 0.0
    assert k[1] == pytest.approx(2 * np.pi)


@settings(max_examples=30, deadline=None)
@given(m=modes)
def test_gradient_of_plane_wave(m):
    xi = G.lattice_frequency(m)
    u = G.plane_wave(xi)
    grad = spectral_gradient(u, G)
    np.testing.assert_allclose(grad, 1j * xi[:, None, None, None] * u, atol=1e-9)
    np.testing.assert_allclose(spectral_laplacian(u, G), -(xi @ xi) * u, atol=1e-8)


def test_laplacian_is_div_grad(rng):
    f = random_field(G, rng, ncomp=1, band=6)
    np.testing.assert_allclose(
        spectral_laplacian(f, G), spectral_divergence(spectral_gradient(f, G), G), atol=1e-10
    )


def test_vector_identities(rng):
    f = random_field(G, rng, ncomp=1, band=7)
    v = random_field(G, rng, ncomp=3, band=7)
    assert np.abs(spectral_curl(spectral_gradient(f, G), G)).max() < 1e-10
    assert np.abs(spectral_divergence(spectral_curl(v, G), G)).max() < 1e-10
    J = spectral_jacobian(v, G)
    np.testing.assert_allclose(np.trace(J), spectral_divergence(v, G), atol=1e-10)


def test_integration_by_parts_is_exact_on_full_grid(rng):
    # holds for arbitrary grid functions because the Nyquist wavenumber is zero
    f = rng.standard_normal(G.shape) + 1j * rng.standard_normal(G.shape)
    v = rng.standard_normal((3,) + G.shape)
    lhs = integrate(f * spectral_divergence(v, G), G)
    rhs = -integrate(np.sum(spectral_gradient(f, G) * v, axis=0), G)
    assert abs(lhs - rhs) < 1e-10 * (abs(lhs) + 1)


def test_dealias_and_products(rng):
    f = random_field(G, rng, ncomp=1, band=5)
    np.testing.assert_allclose(dealias(f, G), f, atol=1e-12)
    g = G.plane_wave(G.lattice_frequency((7, 0, 0)))
    assert np.abs(dealias(g, G)).max() < 1e-12
    prod = dealiased_product(f, f, G)
    np.testing.assert_allclose(prod, f * f, atol=1e-12)


def test_random_field_band_and_determinism():
    a = random_field(G, np.random.default_rng(1), band=3)
    b = random_field(G, np.random.default_rng(1), band=3)
    np.testing.assert_array_equal(a, b)
    spec = np.abs(fft3(a))
    outside = (np.abs(G.modes) >= 3).any(axis=0)
    assert spec[:, outside].max() < 1e-10 * spec.max()
    assert a.shape == (8,) + G.shape


def test_split_join_roundtrip(rng):
    w = rng.standard_normal((8,) + G.shape)
    np.testing.assert_array_equal(join8(*split8(w)), w)


def test_fft_roundtrip(rng):
    w = rng.standard_normal((3,) + G.shape)
    np.testing.assert_allclose(ifft3(fft3(w)), w, atol=1e-13)


def test_integrate_constant_and_pairing():
    one = np.ones(G.shape)
    assert integrate(one, G) == pytest.approx(1.0)
    w = np.ones((8,) + G.shape) * 1j
    # bilinear, no conjugation
    assert inner_product_l2(w, w, G) == pytest.approx(-8.0)
    with pytest.raises(ValueError):
        inner_product_l2(w, w[:3], G)


def test_smooth_cutoff_profile():
    g = Grid3(32)
    chi = smooth_cutoff(g, 0.2, 0.3)
    assert np.all(chi[g.radius <= 0.2] == 1.0)
    assert np.all(chi[g.radius >= 0.3] == 0.0)
    assert chi.min() >= 0 and chi.max() <= 1
    with pytest.raises(ValueError):
        smooth_cutoff(g, 0.3, 0.2)


@pytest.mark.parametrize("ncomp", [1, 3, 8])
def test_field_file_roundtrip(tmp_path, rng, ncomp):
    shape = G.shape if ncomp == 1 else (ncomp,) + G.shape
    a = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    p = tmp_path / "f.cgo8"
    write_field(p, a, G)
    b, g = read_field(p)
    assert g == G
    np.testing.assert_array_equal(a, b)
    assert p.read_bytes()[:8] == b"CGO8F001"
    assert p.stat().st_size == 24 + ncomp * G.n**3 * 16


def test_field_file_x_varies_fastest(tmp_path):
    a = np.zeros(G.shape, complex)
    a[1, 0, 0] = 5.0
    p = tmp_path / "f.cgo8"
    write_field(p, a, G)
    payload = np.frombuffer(p.read_bytes()[24:], dtype="<c16")
    assert payload[1] == 5.0


def test_field_file_errors(tmp_path):
    p = tmp_path / "f.cgo8"
    with pytest.raises(FieldFormatError):
        write_field(p, np.zeros((2,) + G.shape), G)
    p.write_bytes(b"short")
    with pytest.raises(FieldFormatError):
        read_field(p)
    write_field(p, np.zeros(G.shape), G)
    raw = bytearray(p.read_bytes())
    p.write_bytes(b"XXXXXXXX" + bytes(raw[8:]))
    with pytest.raises(FieldFormatError, match="magic"):
        read_field(p)
    p.write_bytes(bytes(raw[:-16]))
    with pytest.raises(FieldFormatError, match="payload"):
        read_field(p)


def test_fejer_envelope_is_nonnegative_trig_polynomial():
    from cgolab.fields import fejer_envelope

    e = fejer_envelope(G, 3)
    assert e.min() >= -1e-14
    assert e.max() == pytest.approx(1.0)
    assert e[G.n // 2, G.n // 2, G.n // 2] == pytest.approx(1.0)
    spec = np.abs(fft3(e))
    assert spec[(np.abs(G.modes) > 3).any(axis=0)].max() < 1e-12 * spec.max()


def test_localized_random_field_band(rng):
    from cgolab.fields import localized_random_field

    w = localized_random_field(G, rng, band=2, envelope_order=3)
    spec = np.abs(fft3(w))
    assert spec[:, (np.abs(G.modes) > 4).any(axis=0)].max() < 1e-10 * spec.max()
