"""Periodic-box spectral calculus and field storage.

Fields are plain numpy arrays whose trailing three axes index the grid.
Scalars have shape ``(n, n, n)``, vectors ``(3, n, n, n)`` and 8-vectors
``(8, n, n, n)`` with the layout ``(w1, w2[0:3], w3[0:3], w4)``.

Derivatives use the wavenumber ``2*pi/L * m`` with the Nyquist entry set
to zero. That keeps every first-order operator real-symmetric on the
lattice, so discrete integration by parts is exact and the Laplacian is
the composition ``div(grad(.))``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid3",
    "FieldFormatError",
    "split8",
    "join8",
    "fft3",
    "ifft3",
    "spectral_gradient",
    "spectral_divergence",
    "spectral_curl",
    "spectral_laplacian",
    "spectral_jacobian",
    "dealias",
    "dealiased_product",
    "inner_product_l2",
    "integrate",
    "dot",
    "cross",
    "read_field",
    "write_field",
    "smooth_cutoff",
    "random_field",
    "localized_random_field",
]

_AXES = (-3, -2, -1)
MAGIC = b"CGO8F001"
_HEADER = struct.Struct("<8sIdI")
_WORKERS = 1


def set_workers(n: int) -> None:
    """Set the number of threads used by the FFT backend."""
    global _WORKERS
    _WORKERS = max(1, int(n))


@dataclass(frozen=True)
class Grid3:
    """Uniform periodic grid on the box ``[-L/2, L/2)^3``.

    Parameters
    ----------
    n : int
        Samples per axis, a power of two (at least 8) or an integer
        multiple of one when a padded solve grid is built.
    box_length : float
        Side length ``L`` of the periodic box.
    """

    n: int = 32
    box_length: float = 1.0

    def __post_init__(self):
        if self.n < 8:
            raise ValueError(f"grid needs n >= 8, got {self.n}")
        if not self.box_length > 0:
            raise ValueError(f"box length must be positive, got {self.box_length}")

    @property
    def h(self) -> float:
        return self.box_length / self.n

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @cached_property
    def x(self) -> np.ndarray:
        """1-D sample positions ``-L/2 + j*L/n``."""
        return -0.5 * self.box_length + np.arange(self.n) * self.h

    @cached_property
    def coords(self) -> np.ndarray:
        return np.array(np.meshgrid(self.x, self.x, self.x, indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(np.sum(self.coords**2, axis=0))

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer lattice indices ``m`` per axis, shape ``(3, n, n, n)``."""
        m = np.fft.fftfreq(self.n, 1.0 / self.n)
        return np.array(np.meshgrid(m, m, m, indexing="ij"))

    @cached_property
    def xi(self) -> np.ndarray:
        """Frequencies ``2*pi*m/L`` including the Nyquist entry."""
        return (2 * np.pi / self.box_length) * self.modes

    @cached_property
    def xi_deriv(self) -> np.ndarray:
        """Derivative wavenumbers: ``xi`` with the Nyquist entry zeroed."""
        k = self.xi.copy()
        k[np.abs(self.modes) == self.n // 2] = 0.0
        return k

    @cached_property
    def xi_deriv_sq(self) -> np.ndarray:
        return np.sum(self.xi_deriv**2, axis=0)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Boolean mask of modes kept by the 2/3 rule (``|m| < n/3`` per axis)."""
        return np.all(np.abs(self.modes) < self.n / 3.0, axis=0)

    def lattice_frequency(self, m) -> np.ndarray:
        """Frequency vector ``2*pi*m/L`` for an integer 3-vector ``m``."""
        return (2 * np.pi / self.box_length) * np.asarray(m, dtype=float)

    def plane_wave(self, xi) -> np.ndarray:
        """``exp(i xi.x)`` sampled on the grid."""
        xi = np.asarray(xi, dtype=float)
        return np.exp(1j * np.einsum("i,i...->...", xi, self.coords))

    def padded(self, factor: int) -> "Grid3":
        """Grid with the same spacing on a box ``factor`` times larger."""
        return Grid3(self.n * factor, self.box_length * factor)

    def check(self, *arrays) -> None:
        for a in arrays:
            if np.shape(a)[-3:] != self.shape:
                raise ValueError(
                    f"field of shape {np.shape(a)} does not live on grid n={self.n}"
                )


class FieldFormatError(ValueError):
    """Raised for malformed CGO8F001 files."""


def split8(w):
    """Return the views ``(w1, w2, w3, w4)`` of an 8-vector field."""
    return w[0], w[1:4], w[4:7], w[7]


def join8(w1, w2, w3, w4) -> np.ndarray:
    """Stack scalar/vector parts back into an ``(8, ...)`` array."""
    w1, w4 = np.asarray(w1), np.asarray(w4)
    return np.concatenate([w1[None], np.asarray(w2), np.asarray(w3), w4[None]])


def fft3(f):
    return sfft.fftn(f, axes=_AXES, workers=_WORKERS)


def ifft3(f):
    return sfft.ifftn(f, axes=_AXES, workers=_WORKERS)


def dot(a, b):
    """Bilinear dot product over the leading 3-axis."""
    return np.einsum("i...,i...->...", a, b)


def cross(a, b):
    """Cross product over the leading 3-axis (broadcasts constant vectors)."""
    a, b = np.broadcast_arrays(a, b)
    return np.stack(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def spectral_gradient(f, grid: Grid3):
    """Gradient via the multiplier ``i xi``."""
    grid.check(f)
    F = fft3(f)
    return ifft3(1j * grid.xi_deriv * F[..., None, :, :, :])


def spectral_divergence(v, grid: Grid3):
    grid.check(v)
    return ifft3(np.sum(1j * grid.xi_deriv * fft3(v), axis=-4))


def spectral_curl(v, grid: Grid3):
    grid.check(v)
    return ifft3(1j * cross(grid.xi_deriv, fft3(v)))


def spectral_laplacian(f, grid: Grid3):
    grid.check(f)
    return ifft3(-grid.xi_deriv_sq * fft3(f))


def spectral_jacobian(v, grid: Grid3):
    """Matrix ``J[i, j] = d_j v_i`` of a vector field."""
    grid.check(v)
    V = fft3(v)
    return ifft3(1j * grid.xi_deriv[None, :] * V[:, None])


def dealias(f, grid: Grid3):
    """Project onto the modes kept by the 2/3 rule."""
    return ifft3(fft3(f) * grid.dealias_mask)


def dealiased_product(f, g, grid: Grid3):
    """Pointwise product with both factors truncated to the 2/3 band.

    The output itself is not truncated, so the product of two fields that
    already live in the band is exact.
    """
    grid.check(f, g)
    return dealias(f, grid) * dealias(g, grid)


def smooth_cutoff(grid: Grid3, r_in: float, r_out: float) -> np.ndarray:
    """C-infinity radial cutoff: 1 for ``|x| <= r_in``, 0 for ``|x| >= r_out``."""
    if not 0 <= r_in < r_out:
        raise ValueError(f"need 0 <= r_in < r_out, got {r_in}, {r_out}")
    t = np.clip((grid.radius - r_in) / (r_out - r_in), 0.0, 1.0)

    def ramp(u):
        out = np.zeros_like(u)
        pos = u > 0
        out[pos] = np.exp(-1.0 / u[pos])
        return out

    a, b = ramp(1.0 - t), ramp(t)
    return a / (a + b)


def random_field(grid: Grid3, rng: np.random.Generator, ncomp: int = 8, band: int | None = None):
    """Random complex field whose Fourier support is ``max_j |m_j| < band``.

    ``band`` defaults to ``n // 8``, which leaves room for products of
    such fields with smooth material coefficients to stay resolved on the
    grid. Coefficients are standard complex normals
    scaled by ``1 / (1 + |m|^2)`` to keep the field smooth.
    """
    band = max(2, grid.n // 8) if band is None else int(band)
    m = grid.modes
    keep = (np.abs(m) < band).all(axis=0)
    weight = keep / (1.0 + np.sum(m.astype(float) ** 2, axis=0))
    shape = (ncomp,) + grid.shape
    coeff = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    out = ifft3(coeff * weight) * grid.n**3 / max(1, int(keep.sum())) ** 0.5
    return out[0] if ncomp == 1 else out


def fejer_envelope(grid: Grid3, order: int) -> np.ndarray:
    """Product of 1-D Fejer kernels of ``order`` centered at the origin.

    A nonnegative trigonometric polynomial with ``|m| <= order`` per axis
    and maximum 1 at ``x = 0``.
    """
    out = np.ones(grid.shape)
    m = np.arange(-order, order + 1)
    w = 1.0 - np.abs(m) / (order + 1)
    for ax in range(3):
        phase = np.exp(2j * np.pi * np.multiply.outer(m, grid.coords[ax]) / grid.box_length)
        out = out * np.tensordot(w, phase, axes=1).real
    return out / out.max()


def localized_random_field(
    grid: Grid3, rng: np.random.Generator, ncomp: int = 8, band: int = 2, envelope_order: int = 4
):
    """:func:`random_field` concentrated near the origin.

    The field is multiplied by :func:`fejer_envelope`, so it stays a
    trigonometric polynomial with ``|m| <= band - 1 + envelope_order``
    while most of its mass sits where phantoms live.
    """
    return random_field(grid, rng, ncomp, band) * fejer_envelope(grid, envelope_order)


def integrate(f, grid: Grid3):
    """Grid quadrature ``h^3 * sum(f)`` over the last three axes."""
    return np.sum(f, axis=_AXES) * grid.h**3


def inner_product_l2(u, v, grid: Grid3) -> complex:
    """Conjugation-free pairing ``h^3 * sum_j sum_x u_j v_j``."""
    grid.check(u, v)
    if np.shape(u) != np.shape(v):
        raise ValueError(f"shape mismatch {np.shape(u)} vs {np.shape(v)}")
    return complex(np.sum(u * v) * grid.h**3)


def write_field(path, field, grid: Grid3) -> None:
    """Write a 1-, 3- or 8-component complex field in CGO8F001 format.

    The payload is component-major with x varying fastest, stored as
    interleaved little-endian float64 (re, im) pairs.
    """
    a = np.asarray(field, dtype=np.complex128)
    if a.ndim == 3:
        a = a[None]
    ncomp = a.shape[0]
    if ncomp not in (1, 3, 8) or a.shape[1:] != grid.shape:
        raise FieldFormatError(f"cannot store field of shape {np.shape(field)}")
    # array index order is (comp, x, y, z); x-fastest means z is the slowest
    payload = np.ascontiguousarray(a.transpose(0, 3, 2, 1)).astype("<c16")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, grid.n, float(grid.box_length), ncomp))
        fh.write(payload.tobytes())
    tmp.replace(path)


def read_field(path) -> tuple[np.ndarray, Grid3]:
    """Read a CGO8F001 file; returns ``(array, grid)``.

    Scalar files come back with shape ``(n, n, n)``.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FieldFormatError("file shorter than the CGO8F001 header")
    magic, n, box, ncomp = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FieldFormatError(f"bad magic {magic!r}")
    if ncomp not in (1, 3, 8):
        raise FieldFormatError(f"unsupported component count {ncomp}")
    if n < 1 or n > 4096:
        raise FieldFormatError(f"grid dimension {n} out of range")
    expected = ncomp * n**3 * 16
    if len(raw) - _HEADER.size != expected:
        raise FieldFormatError(
            f"payload has {len(raw) - _HEADER.size} bytes, header implies {expected}"
        )
    grid = Grid3(n, box)
    data = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
    a = data.reshape(ncomp, n, n, n).transpose(0, 3, 2, 1).astype(np.complex128)
    return (a[0] if ncomp == 1 else a), grid
