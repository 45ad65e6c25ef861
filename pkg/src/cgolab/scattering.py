"""Scattering functional, parameter-difference equations and the
Schrodinger-system reformulation used to conclude uniqueness.

Sign and scale conventions
--------------------------
For the lattice frequency ``rho`` the limit functional of the a-choice is

``t_a(rho) = <(Q2 - Q1) A1 exp(i rho.x), B2> = (i/4) int r_alpha(x) exp(i rho.x) dx``

where ``r_alpha = (alpha2 - alpha1).(alpha2 + alpha1) - 4 (theta2 - theta1)
+ 2 div(alpha2 - alpha1)``; the b-choice pairs with ``r_beta`` in the same
way. For real-valued material fields this gives
``t(-rho) = -conj(t(rho))``.

With ``g_j = gamma_j^(1/2)`` and ``G = g1 + g2`` the Schrodinger form of the
first equation is ``-Delta f + V f + a f + b g = -(g1 g2 / (2 G)) r_alpha``
identically when ``Delta g_j / g_j = |alpha_j|^2 / 4 + div(alpha_j) / 2``
holds; the mu-branch is analogous with ``m_j = mu_j^(1/2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cgo import (
    CgoDirection,
    amplitudes,
    assemble_v2,
    solve_cgo,
)
from .fields import (
    Grid3,
    dot,
    fft3,
    smooth_cutoff,
    spectral_divergence,
    spectral_laplacian,
)
from .materials import DerivedMaterialFields, MaterialSet, derive
from .operators import WeakPotential, l2_norm, q_bilinear

__all__ = [
    "ScatteringSample",
    "UniquenessCoefficients",
    "IdentityCheck",
    "limit_amplitudes",
    "limit_functional",
    "fourier_functional",
    "residual_alpha_field",
    "residual_beta_field",
    "lattice_ball",
    "scatter_scan",
    "omega_indicator",
    "assemble_uniqueness_coeffs",
    "equivalence_fields",
    "equivalence_residual",
    "schrodinger_system_residual",
    "full_identity_check",
    "pair_difference",
]


@dataclass(frozen=True)
class ScatteringSample:
    """Value of the limit functional at one lattice frequency."""

    rho: tuple[int, int, int]
    variant: str
    t_value: complex


def _check_pair(d1: DerivedMaterialFields, d2: DerivedMaterialFields) -> Grid3:
    if d1.grid != d2.grid:
        raise ValueError(f"grid mismatch: {d1.grid} vs {d2.grid}")
    if d1.omega != d2.omega:
        raise ValueError("both phantoms must share omega")
    return d1.grid


def limit_amplitudes(variant: str, rho_hat) -> tuple[np.ndarray, np.ndarray]:
    """Limits ``(A1, B2)`` as functions of the unit vector ``rho / |rho|``.

    Uses ``eta1 x eta2 = rho_hat``, which holds for every admissible
    ``eta1``; the limits therefore do not depend on the direction pair.
    """
    r = np.asarray(rho_hat, dtype=float)
    z = np.zeros(3)
    if variant == "a":
        return (
            np.concatenate([[-1], z, z, [0]]).astype(complex),
            np.concatenate([[-1j], z, r, [0]]).astype(complex),
        )
    if variant == "b":
        return (
            np.concatenate([[0], z, z, [-1]]).astype(complex),
            np.concatenate([[0], -r, z, [-1j]]).astype(complex),
        )
    raise ValueError(f"variant must be 'a' or 'b', got {variant!r}")


def _rho_hat(rho):
    nr = np.linalg.norm(rho)
    return rho / nr if nr > 0 else np.array([1.0, 0.0, 0.0])


def pair_difference(Q1: WeakPotential, Q2: WeakPotential, w, phi) -> complex:
    """``<(Q2 - Q1) w, phi>`` from two weak-form evaluations."""
    return q_bilinear(Q2, w, phi) - q_bilinear(Q1, w, phi)


def limit_functional(
    d1: DerivedMaterialFields, d2: DerivedMaterialFields, variant: str, m
) -> ScatteringSample:
    """``<(Q2 - Q1) A1 exp(i rho.x), B2>`` at ``rho = 2 pi m / L``.

    Evaluated through the weak-form pairing with a constant ``B2``.
    """
    g = _check_pair(d1, d2)
    m = tuple(int(v) for v in m)
    rho = g.lattice_frequency(m)
    A1, B2 = limit_amplitudes(variant, _rho_hat(rho))
    wave = g.plane_wave(rho)
    w = A1[:, None, None, None] * wave
    phi = B2[:, None, None, None] * np.ones((1,) + g.shape)
    t = pair_difference(WeakPotential("Q", d1), WeakPotential("Q", d2), w, phi)
    return ScatteringSample(m, variant, t)


def residual_alpha_field(d1: DerivedMaterialFields, d2: DerivedMaterialFields):
    """``(alpha2 - alpha1).(alpha2 + alpha1) - 4 (theta2 - theta1) + 2 div(alpha2 - alpha1)``.

    Material-only products are taken pointwise; they involve no test
    field, so there is nothing to dealias.
    """
    g = _check_pair(d1, d2)
    da = d2.alpha - d1.alpha
    return dot(da, d2.alpha + d1.alpha) - 4 * (d2.theta - d1.theta) + 2 * spectral_divergence(da, g)


def residual_beta_field(d1: DerivedMaterialFields, d2: DerivedMaterialFields):
    """The mu-branch analogue of :func:`residual_alpha_field`."""
    g = _check_pair(d1, d2)
    db = d2.beta - d1.beta
    return dot(db, d2.beta + d1.beta) - 4 * (d2.theta - d1.theta) + 2 * spectral_divergence(db, g)


def _fourier_pairing(field, m, grid: Grid3) -> complex:
    """``int field(x) exp(i rho.x) dx`` through the FFT (``rho = 2 pi m / L``)."""
    F = fft3(np.conj(field))
    idx = tuple(int(v) % grid.n for v in m)
    # sum f e^{+i rho x} = conj(sum conj(f) e^{-i rho x})
    phase = np.exp(1j * (grid.lattice_frequency(m) @ np.full(3, grid.x[0])))
    return complex(np.conj(F[idx]) * phase * grid.h**3)


def fourier_functional(
    d1: DerivedMaterialFields, d2: DerivedMaterialFields, variant: str, m
) -> ScatteringSample:
    """``(i/4) int r exp(i rho.x)`` with ``r`` the residual field of ``variant``."""
    g = _check_pair(d1, d2)
    r = residual_alpha_field(d1, d2) if variant == "a" else residual_beta_field(d1, d2)
    m = tuple(int(v) for v in m)
    return ScatteringSample(m, variant, 0.25j * _fourier_pairing(r, m, g))


def lattice_ball(radius: float) -> list[tuple[int, int, int]]:
    """Integer vectors ``m`` with ``|m| <= radius`` in lexicographic order."""
    R = int(np.floor(radius))
    out = []
    for i in range(-R, R + 1):
        for j in range(-R, R + 1):
            for k in range(-R, R + 1):
                if i * i + j * j + k * k <= radius * radius + 1e-9:
                    out.append((i, j, k))
    return out


def scatter_scan(
    d1: DerivedMaterialFields,
    d2: DerivedMaterialFields,
    radius: float = 8.0,
    variants=("a", "b"),
    method: str = "fourier",
) -> list[ScatteringSample]:
    """Limit functional over the lattice ball ``|m| <= radius``.

    ``method="fourier"`` reads all values from one FFT of each residual
    field; ``method="pairing"`` evaluates the weak-form pairing per
    frequency (slower, independent code path).
    """
    g = _check_pair(d1, d2)
    ball = lattice_ball(radius)
    out = []
    for variant in variants:
        if method == "pairing":
            out.extend(limit_functional(d1, d2, variant, m) for m in ball)
            continue
        if method != "fourier":
            raise ValueError(f"unknown method {method!r}")
        r = residual_alpha_field(d1, d2) if variant == "a" else residual_beta_field(d1, d2)
        F = np.conj(fft3(np.conj(r)))
        for m in ball:
            idx = tuple(v % g.n for v in m)
            phase = np.exp(1j * (g.lattice_frequency(m) @ np.full(3, g.x[0])))
            out.append(ScatteringSample(m, variant, complex(0.25j * F[idx] * phase * g.h**3)))
    return out


def omega_indicator(ms1: MaterialSet, ms2: MaterialSet) -> np.ndarray:
    """Mollified indicator of the region where either phantom is active.

    Equal to 1 on the smallest centered ball containing every grid point
    where a parameter departs from its background, and 0 outside
    ``r_omega``. When that ball already reaches ``r_omega`` the indicator
    is the sharp characteristic function of the ``r_omega`` ball.
    """
    g = ms1.grid
    active = np.zeros(g.shape, dtype=bool)
    for ms in (ms1, ms2):
        active |= ms.mu != ms.mu0
        active |= ms.eps != ms.eps0
        active |= ms.sigma != 0
    r_omega = min(ms1.r_omega, ms2.r_omega)
    r_in = float(g.radius[active].max()) if active.any() else 0.0
    if r_in + g.h < r_omega:
        return smooth_cutoff(g, r_in + g.h, r_omega)
    return (g.radius < r_omega).astype(float)


@dataclass(frozen=True, eq=False)
class UniquenessCoefficients:
    """Coefficient fields ``V, W, a, b, c, d`` of the Schrodinger system."""

    V: np.ndarray
    W: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    indicator: np.ndarray
    grid: Grid3


def assemble_uniqueness_coeffs(
    d1: DerivedMaterialFields, d2: DerivedMaterialFields
) -> UniquenessCoefficients:
    g = _check_pair(d1, d2)
    om2 = d1.omega**2
    g1, g2 = np.sqrt(d1.gamma), np.sqrt(d2.gamma)
    mu1, mu2 = d1.material.mu, d2.material.mu
    m1, m2 = np.sqrt(mu1), np.sqrt(mu2)
    G, Mm = g1 + g2, m1 + m2
    ind = omega_indicator(d1.material, d2.material)
    return UniquenessCoefficients(
        V=spectral_laplacian(G, g) / G,
        W=spectral_laplacian(Mm, g) / Mm,
        a=ind * om2 * g1 * g2 * (mu1 + mu2),
        b=ind * om2 * g1 * g2 * (d1.gamma + d2.gamma) * Mm / G,
        c=ind * om2 * m1 * m2 * (d1.gamma + d2.gamma),
        d=ind * om2 * m1 * m2 * (mu1 + mu2) * G / Mm,
        indicator=ind,
        grid=g,
    )


def _schrodinger_fields(f, gg, coeffs: UniquenessCoefficients):
    g = coeffs.grid
    e1 = -spectral_laplacian(f, g) + coeffs.V * f + coeffs.a * f + coeffs.b * gg
    e2 = -spectral_laplacian(gg, g) + coeffs.W * gg + coeffs.c * gg + coeffs.d * f
    return e1, e2


def schrodinger_system_residual(f, g_field, coeffs: UniquenessCoefficients) -> tuple[float, float]:
    """L2 norms of the left-hand sides of the two Schrodinger equations."""
    coeffs.grid.check(f, g_field)
    e1, e2 = _schrodinger_fields(f, g_field, coeffs)
    return l2_norm(e1, coeffs.grid), l2_norm(e2, coeffs.grid)


def equivalence_fields(d1: DerivedMaterialFields, d2: DerivedMaterialFields) -> dict:
    """Schrodinger-form fields and the predicted multiples of the residuals.

    Keys ``schr_alpha``, ``pred_alpha``, ``schr_beta``, ``pred_beta``, with
    ``pred_alpha = -(g1 g2 / (2 (g1 + g2))) r_alpha`` and
    ``pred_beta = -(m1 m2 / (2 (m1 + m2))) r_beta``.
    """
    coeffs = assemble_uniqueness_coeffs(d1, d2)
    g1, g2 = np.sqrt(d1.gamma), np.sqrt(d2.gamma)
    m1, m2 = np.sqrt(d1.material.mu), np.sqrt(d2.material.mu)
    f, gg = g2 - g1, m2 - m1
    e1, e2 = _schrodinger_fields(f, gg, coeffs)
    return {
        "schr_alpha": e1,
        "pred_alpha": -(g1 * g2 / (2 * (g1 + g2))) * residual_alpha_field(d1, d2),
        "schr_beta": e2,
        "pred_beta": -(m1 * m2 / (2 * (m1 + m2))) * residual_beta_field(d1, d2),
    }


def _relative_gap(a, b) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return float(np.linalg.norm(a - b) / scale) if scale > 0 else 0.0


def equivalence_residual(d1: DerivedMaterialFields, d2: DerivedMaterialFields) -> tuple[float, float]:
    """Relative L2 gap between each Schrodinger-form field and its prediction.

    Both entries are 0 when the two fields vanish together.
    """
    e = equivalence_fields(d1, d2)
    return _relative_gap(e["schr_alpha"], e["pred_alpha"]), _relative_gap(
        e["schr_beta"], e["pred_beta"]
    )


@dataclass(frozen=True)
class IdentityCheck:
    """Pieces of the remainder decomposition of the limit functional.

    ``lhs = -<(Q2 - Q1) exp(i rho.x) A1, B2>``; ``rhs`` is the two-term
    remainder expression; ``full_pairing`` is
    ``<(Q2 - Q1) w1, v2>`` in factored form. The exact relation is
    ``rhs = lhs + full_pairing``; ``defect`` measures it relative to the
    sum of magnitudes. ``literal_gap = |rhs - lhs|`` equals
    ``|full_pairing|`` and vanishes only when the two parameter sets
    produce the same boundary data.
    """

    lhs: complex
    rhs: complex
    full_pairing: complex
    defect: float
    literal_gap: float
    s: float


def full_identity_check(
    ms1: MaterialSet,
    ms2: MaterialSet,
    direction: CgoDirection,
    variant: str,
    pad: int = 1,
    **solver_kwargs,
) -> IdentityCheck:
    """Evaluate the remainder decomposition with full CGO solutions.

    ``R_zeta1`` solves the Q-equation of phantom 1; ``S_zeta2`` comes from the
    Qtilde-equation of phantom 2. All pairings use the factored form and
    ``exp(zeta1.x) exp(zeta2.x) = exp(i rho.x)``.
    """
    d1, d2 = derive(ms1.embed(pad)), derive(ms2.embed(pad))
    g = _check_pair(d1, d2)
    Q1, Q2 = WeakPotential("Q", d1), WeakPotential("Q", d2)
    amp = amplitudes(direction, variant)
    sol1 = solve_cgo(d1, direction, variant, "w1", **solver_kwargs)
    sol2 = solve_cgo(WeakPotential("Qtilde", d2), direction, variant, "v2", **solver_kwargs)
    v2 = assemble_v2(sol2, d2)

    const = lambda v: np.asarray(v, dtype=complex)[:, None, None, None] * np.ones((1,) + g.shape)  # noqa: E731
    wave = g.plane_wave(direction.rho)
    U1 = const(amp.A_zeta1) + sol1.remainder
    U2 = const(v2.B) + v2.S
    A1, B2 = const(amp.A1), const(amp.B2)

    full = pair_difference(Q1, Q2, wave * U1, U2)
    lhs = -pair_difference(Q1, Q2, wave * A1, B2)
    rhs = pair_difference(Q1, Q2, wave * U1, U2 - B2) + pair_difference(
        Q1, Q2, B2, wave * (U1 - A1)
    )
    scale = abs(lhs) + abs(rhs) + abs(full)
    defect = abs(rhs - (lhs + full)) / scale if scale > 0 else 0.0
    return IdentityCheck(
        lhs=complex(lhs),
        rhs=complex(rhs),
        full_pairing=complex(full),
        defect=float(defect),
        literal_gap=float(abs(rhs - lhs)),
        s=direction.s,
    )
