"""The 8x8 operator algebra acting on 8-vector fields ``w = (w1, w2, w3, w4)``.

Conventions
-----------
``P(i grad) w = i (div w2, grad w1 + curl w3, -curl w2 + grad w4, div w3)``.

``V = (k - kappa) I + M`` with the zeroth-order part

``M w = (i/2) (alpha.w2, beta w1 - beta x w3, alpha x w2 + alpha w4, beta.w3)``

and its pointwise transpose

``M^T w = (i/2) (beta.w2, alpha w1 - alpha x w3, beta x w2 + beta w4, alpha.w3)``.

The signs of the cross-product entries are the ones for which the two
factorizations below reproduce the weak potentials exactly; the test suite
pins them down. With ``Pcal = P - k + V`` and ``PcalPrime = P + k - V^T``
the bilinear pairing satisfies

``<Q w, phi>  = -<PcalPrime w, PcalPrime phi> - sum_j <grad w_j, grad phi_j> + k^2 <w, phi>``
``<Qt w, phi> = -<Pcal w, Pcal phi>           - sum_j <grad w_j, grad phi_j> + k^2 <w, phi>``

because ``P(i grad)`` is antisymmetric for the conjugation-free pairing.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .fields import (
    Grid3,
    cross,
    dealias,
    dot,
    integrate,
    join8,
    spectral_curl,
    spectral_divergence,
    spectral_gradient,
    spectral_jacobian,
    spectral_laplacian,
    split8,
)
from .materials import DerivedMaterialFields

__all__ = [
    "WeakPotential",
    "apply_P",
    "apply_P_symbol",
    "apply_M",
    "apply_Mt",
    "apply_V",
    "apply_Vt",
    "apply_Pcal",
    "apply_PcalPrime",
    "q_bilinear",
    "q_strong_apply",
    "q_algebraic_apply",
    "factorization_terms",
    "factorization_residual",
    "rescale_to_field8",
    "maxwell_residual",
    "l2_norm",
]

KINDS = ("Q", "Qtilde")


def l2_norm(f, grid: Grid3) -> float:
    """Quadrature L2 norm ``(h^3 sum |f|^2)^(1/2)`` over all components."""
    return float(np.sqrt(np.sum(np.abs(f) ** 2) * grid.h**3))


def _as_column(z, like):
    """Reshape a constant 3-vector so it broadcasts against ``like``."""
    z = np.asarray(z)
    if z.ndim == 1:
        return z.reshape((3,) + (1,) * (np.ndim(like) - 1))
    return z


def apply_P(w, grid: Grid3):
    """First-order operator ``P(i grad)`` applied spectrally."""
    w1, w2, w3, w4 = split8(w)
    return 1j * join8(
        spectral_divergence(w2, grid),
        spectral_gradient(w1, grid) + spectral_curl(w3, grid),
        -spectral_curl(w2, grid) + spectral_gradient(w4, grid),
        spectral_divergence(w3, grid),
    )


def apply_P_symbol(w, z):
    """``P(i z)``: the operator ``P(i grad)`` with ``grad`` replaced by ``z``.

    ``z`` may be a constant (complex) 3-vector or a vector field. For
    ``U`` on a grid, ``P(i grad)(exp(z.x) U) = exp(z.x) (P U + P(i z) U)``.
    """
    w1, w2, w3, w4 = split8(w)
    zc = _as_column(z, w2)
    return 1j * join8(
        dot(zc, w2),
        zc * w1 + cross(zc, w3),
        -cross(zc, w2) + zc * w4,
        dot(zc, w3),
    )


def apply_M(w, d: DerivedMaterialFields):
    """Zeroth-order part ``M`` of ``V``."""
    w1, w2, w3, w4 = split8(w)
    a, b = d.alpha, d.beta
    return 0.5j * join8(dot(a, w2), b * w1 - cross(b, w3), cross(a, w2) + a * w4, dot(b, w3))


def apply_Mt(w, d: DerivedMaterialFields):
    """Pointwise transpose ``M^T``."""
    w1, w2, w3, w4 = split8(w)
    a, b = d.alpha, d.beta
    return 0.5j * join8(dot(b, w2), a * w1 - cross(a, w3), cross(b, w2) + b * w4, dot(a, w3))


def apply_V(w, d: DerivedMaterialFields):
    return (d.k - d.kappa) * w + apply_M(w, d)


def apply_Vt(w, d: DerivedMaterialFields):
    return (d.k - d.kappa) * w + apply_Mt(w, d)


def apply_Pcal(w, d: DerivedMaterialFields):
    """``P(i grad) - k + V``."""
    return apply_P(w, d.grid) - d.k * w + apply_V(w, d)


def apply_PcalPrime(w, d: DerivedMaterialFields):
    """``P(i grad) + k - V^T``."""
    return apply_P(w, d.grid) + d.k * w - apply_Vt(w, d)


def _matrix_divergence(a, b, grid: Grid3):
    """Row-wise divergence of the symmetric matrix ``a b^T + b a^T``."""
    S = a[:, None] * b[None, :] + b[:, None] * a[None, :]
    return spectral_divergence(S, grid)


@dataclass(frozen=True, eq=False)
class WeakPotential:
    """Weak potential ``Q`` or ``Qtilde`` tied to one set of material fields.

    The strong-form coefficients are computed lazily and cached on the
    instance, which is immutable once built.
    """

    kind: str
    source: DerivedMaterialFields

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")

    @property
    def tilde(self) -> bool:
        return self.kind == "Qtilde"

    @property
    def grid(self) -> Grid3:
        return self.source.grid

    @cached_property
    def coefficients(self) -> dict:
        """Multiplier fields of the strong form."""
        d, g = self.source, self.grid
        ja = spectral_jacobian(d.alpha, g)
        jb = spectral_jacobian(d.beta, g)
        return {
            "qa": 0.25 * (dot(d.alpha, d.alpha) - 4 * d.theta),
            "qb": 0.25 * (dot(d.beta, d.beta) - 4 * d.theta),
            "sym_grad_alpha": 0.5 * (ja + ja.swapaxes(0, 1)),
            "sym_grad_beta": 0.5 * (jb + jb.swapaxes(0, 1)),
            "div_alpha": spectral_divergence(d.alpha, g),
            "div_beta": spectral_divergence(d.beta, g),
            "grad_kappa": spectral_gradient(d.kappa, g),
        }


def q_bilinear(Q: WeakPotential, w, phi) -> complex:
    """Evaluate the weak display ``<Q w, phi>`` (or ``<Qtilde w, phi>``).

    Products of the two arguments are dealiased; products of material
    coefficients with those products are taken pointwise.
    """
    d, g = Q.source, Q.grid
    g.check(w, phi)
    w1, w2, w3, w4 = split8(dealias(w, g))
    p1, p2, p3, p4 = split8(dealias(phi, g))
    al, be = d.alpha, d.beta
    sign = -1.0
    if Q.tilde:
        al, be, sign = be, al, 1.0
    grad = lambda f: spectral_gradient(f, g)  # noqa: E731

    t = 0.25 * (dot(al, al) - 4 * d.theta) * (w1 * p1 + dot(w3, p3))
    t = t + sign * 0.5 * dot(al, grad(w1 * p1 - dot(w3, p3)) + _matrix_divergence(w3, p3, g))
    t = t + 0.25 * (dot(be, be) - 4 * d.theta) * (w4 * p4 + dot(w2, p2))
    t = t + sign * 0.5 * dot(be, grad(w4 * p4 - dot(w2, p2)) + _matrix_divergence(w2, p2, g))
    if Q.tilde:
        t = t + 2j * d.kappa * spectral_divergence(cross(w3, p2) - cross(w2, p3), g)
    else:
        flux = w1 * p2 + w2 * p1 + w3 * p4 + w4 * p3
        t = t - 2j * d.kappa * spectral_divergence(flux, g)
    return complex(integrate(t, g))


def _mat_vec(S, v):
    return np.einsum("ij...,j...->i...", S, v)


def q_strong_apply(Q: WeakPotential, w, dealias_input: bool = False):
    """Pointwise multiplier form of the weak potential.

    The result ``F`` satisfies ``<F, phi> = q_bilinear(Q, w, phi)`` for band
    limited ``w`` and ``phi``. Set ``dealias_input`` to truncate ``w`` to
    the 2/3 band first; solvers leave it off so that grid products are
    exact.
    """
    Q.grid.check(w)
    if dealias_input:
        w = dealias(w, Q.grid)
    c = Q.coefficients
    w1, w2, w3, w4 = split8(w)
    qa, qb, da, db, gk = c["qa"], c["qb"], c["div_alpha"], c["div_beta"], c["grad_kappa"]
    Sa, Sb = c["sym_grad_alpha"], c["sym_grad_beta"]
    if not Q.tilde:
        o1 = (qa + 0.5 * da) * w1 + 2j * dot(gk, w2)
        o2 = qb * w2 + _mat_vec(Sb, w2) - 0.5 * db * w2 + 2j * gk * w1
        o3 = qa * w3 + _mat_vec(Sa, w3) - 0.5 * da * w3 + 2j * gk * w4
        o4 = (qb + 0.5 * db) * w4 + 2j * dot(gk, w3)
    else:
        o1 = (qb - 0.5 * db) * w1
        o2 = qa * w2 - _mat_vec(Sa, w2) + 0.5 * da * w2 - 2j * cross(gk, w3)
        o3 = qb * w3 - _mat_vec(Sb, w3) + 0.5 * db * w3 + 2j * cross(gk, w2)
        o4 = (qa - 0.5 * da) * w4
    return join8(o1, o2, o3, o4)


def q_algebraic_apply(Q: WeakPotential, w):
    """``Pcal PcalPrime + Delta + k^2`` (``PcalPrime Pcal`` for Qtilde).

    Independent of the strong-form coefficients; used as a cross-check.
    """
    d = Q.source
    if Q.tilde:
        out = apply_PcalPrime(apply_Pcal(w, d), d)
    else:
        out = apply_Pcal(apply_PcalPrime(w, d), d)
    return out + spectral_laplacian(w, d.grid) + d.k**2 * w


def factorization_terms(d: DerivedMaterialFields, w, phi, kind: str = "Q") -> dict:
    """Separate pieces of the factorization identity.

    Returns ``first_order`` (``<PcalPrime w, PcalPrime phi>`` for Q or
    ``<Pcal w, Pcal phi>`` for Qtilde), ``gradient``
    (``sum_j <grad w_j, grad phi_j>``) and ``mass`` (``k^2 <w, phi>``).
    """
    g = d.grid
    op = apply_Pcal if kind == "Qtilde" else apply_PcalPrime
    first = integrate(dot(op(w, d), op(phi, d)), g)
    gw = spectral_gradient(w, g)
    gp = spectral_gradient(phi, g)
    return {
        "first_order": complex(first),
        "gradient": complex(integrate(np.sum(gw * gp, axis=(0, 1)), g)),
        "mass": complex(d.k**2 * integrate(dot(w, phi), g)),
    }


def factorization_residual(
    d: DerivedMaterialFields, w, phi, kind: str = "Q", potential: WeakPotential | None = None
) -> float:
    """Relative defect of the factorization identity for one ``(w, phi)``.

    The defect ``first_order + gradient - mass + <Q w, phi>`` is divided by
    the sum of the four term magnitudes.

    ``potential`` overrides the weak potential whose display is evaluated;
    by default it is built from ``d``. Passing a potential built from
    altered fields while keeping ``d`` fixed is how mutation tests are run.
    """
    Q = potential or WeakPotential(kind, d)
    t = factorization_terms(d, w, phi, kind)
    q = q_bilinear(Q, w, phi)
    defect = t["first_order"] + t["gradient"] - t["mass"] + q
    scale = abs(t["first_order"]) + abs(t["gradient"]) + abs(t["mass"]) + abs(q)
    if scale == 0.0:
        return 0.0
    return abs(defect) / scale


def rescale_to_field8(E, H, d: DerivedMaterialFields):
    """Map Maxwell fields ``(E, H)`` to the 8-vector ``X = (phi, e, h, psi)``."""
    g = d.grid
    ms = d.material
    mu, gam, om = ms.mu, d.gamma, ms.omega
    Phi = (1j / om) * spectral_divergence(gam * E, g)
    Psi = (1j / om) * spectral_divergence(mu * H, g)
    sqrt_mu, sqrt_gam = np.sqrt(mu), np.sqrt(gam)
    return join8(Phi / (gam * sqrt_mu), sqrt_gam * E, sqrt_mu * H, Psi / (sqrt_gam * mu))


def maxwell_residual(E, H, d: DerivedMaterialFields) -> tuple[float, float]:
    """L2 norms of ``curl E - i omega mu H`` and ``curl H + i omega gamma E``."""
    g = d.grid
    om = d.material.omega
    r1 = spectral_curl(E, g) - 1j * om * d.material.mu * H
    r2 = spectral_curl(H, g) + 1j * om * d.gamma * E
    return l2_norm(r1, g), l2_norm(r2, g)
