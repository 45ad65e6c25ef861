"""Complex geometrical optics solutions built with a Faddeev-multiplier solver.

A CGO solution has the form ``exp(zeta.x) (A + R(x))`` with a complex
frequency ``zeta`` satisfying ``zeta.zeta = -k^2``. The exponential is never
sampled on the grid; fields are carried in factored form ``(U, zeta)``.

Fourier convention: ``grad`` acts as ``i xi``. In this convention the
conjugated operator ``-Delta - 2 zeta.grad`` has the symbol
``p_zeta(xi) = |xi|^2 - 2 i zeta.xi`` on which every weighted norm is built.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .fields import Grid3, fft3, ifft3, smooth_cutoff
from .materials import DerivedMaterialFields, MaterialSet, derive
from .operators import (
    WeakPotential,
    apply_Mt,
    apply_P,
    apply_P_symbol,
    apply_V,
    q_strong_apply,
)

__all__ = [
    "CgoDirection",
    "AmplitudeChoice",
    "CgoSolution",
    "CarlemanProbe",
    "DivergenceError",
    "ConsistencyError",
    "W1Assembly",
    "V2Assembly",
    "DecayRow",
    "DecayTable",
    "make_directions",
    "random_eta1",
    "amplitudes",
    "faddeev_multiplier",
    "faddeev_symbol",
    "faddeev_solve",
    "conjugated_operator",
    "solve_remainder",
    "solve_cgo",
    "solve_potential",
    "xnorm",
    "xdotnorm",
    "assemble_w1",
    "assemble_v2",
    "s_equation_residual",
    "decay_scan",
    "carleman_ratio",
    "ynorm",
    "DEFAULT_TOL",
    "DEFAULT_MAX_ITER",
    "DEFAULT_REG_FLOOR",
]

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 50
DEFAULT_REG_FLOOR = 1e-6
#: Consecutive non-contracting iterations tolerated before giving up.
DIVERGENCE_PATIENCE = 3
VARIANTS = ("a", "b")


class DivergenceError(RuntimeError):
    """The fixed-point iteration stopped contracting."""

    def __init__(self, message, s=None, eta1=None):
        super().__init__(message)
        self.s = s
        self.eta1 = eta1


class ConsistencyError(RuntimeError):
    """An internal structural property failed (e.g. decoupled components)."""


@dataclass(frozen=True, eq=False)
class CgoDirection:
    """Geometry ``(rho, eta1, eta2, s, k, zeta1, zeta2, tau)``."""

    rho: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    s: float
    k: float
    zeta1: np.ndarray
    zeta2: np.ndarray
    tau: float

    def zeta(self, which: int) -> np.ndarray:
        if which == 1:
            return self.zeta1
        if which == 2:
            return self.zeta2
        raise ValueError(f"which_zeta must be 1 or 2, got {which!r}")


def _zeta_norm(z) -> float:
    return float(np.sqrt(np.sum(np.abs(z) ** 2)))


def make_directions(rho, eta1_seed, s: float, k: float) -> CgoDirection:
    """Build the pair ``zeta1, zeta2`` with ``zeta1 + zeta2 = i rho``.

    Raises
    ------
    ValueError
        If ``rho`` vanishes, ``s < 1`` or ``eta1_seed`` is parallel to ``rho``.
    """
    rho = np.asarray(rho, dtype=float)
    seed = np.asarray(eta1_seed, dtype=float)
    if s < 1:
        raise ValueError(f"s must be at least 1, got {s}")
    nr = np.linalg.norm(rho)
    if nr == 0:
        raise ValueError("rho must be nonzero")
    e = seed - rho * (seed @ rho) / (nr * nr)
    ne = np.linalg.norm(e)
    if ne <= 1e-12 * max(1.0, np.linalg.norm(seed)):
        raise ValueError("eta1_seed is parallel to rho")
    eta1 = e / ne
    eta2 = np.cross(rho, eta1) / nr
    tau = float(np.sqrt(s * s + nr * nr / 4))
    sk = np.sqrt(s * s + k * k)
    zeta1 = -tau * eta1 + 1j * (rho / 2 - sk * eta2)
    zeta2 = tau * eta1 + 1j * (rho / 2 + sk * eta2)
    return CgoDirection(rho, eta1, eta2, float(s), float(k), zeta1, zeta2, tau)


def random_eta1(rho, rng: np.random.Generator) -> np.ndarray:
    """Unit vector drawn uniformly from the circle orthogonal to ``rho``."""
    rho = np.asarray(rho, dtype=float)
    rhat = rho / np.linalg.norm(rho)
    trial = np.eye(3)[np.argmin(np.abs(rhat))]
    u = trial - rhat * (trial @ rhat)
    u /= np.linalg.norm(u)
    v = np.cross(rhat, u)
    phi = rng.uniform(0.0, 2 * np.pi)
    return np.cos(phi) * u + np.sin(phi) * v


@dataclass(frozen=True, eq=False)
class AmplitudeChoice:
    """Constant 8-vectors for one variant of the amplitude choice.

    ``variant`` is ``"a"`` (``a = eta1, b = 0``) or ``"b"``
    (``a = 0, b = eta2 x rho / |rho|``).
    """

    variant: str
    a: np.ndarray
    b: np.ndarray
    A_zeta1: np.ndarray
    A_zeta2: np.ndarray
    B_zeta2: np.ndarray
    A1: np.ndarray
    B2: np.ndarray


def _vec8(s1, v2, v3, s4) -> np.ndarray:
    return np.concatenate([[s1], v2, v3, [s4]]).astype(complex)


def amplitudes(direction: CgoDirection, variant: str) -> AmplitudeChoice:
    """Amplitudes ``A_zeta1, A_zeta2, B_zeta2`` and their large-``s`` limits."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be 'a' or 'b', got {variant!r}")
    dr = direction
    zero = np.zeros(3)
    rhat = dr.rho / np.linalg.norm(dr.rho)
    if variant == "a":
        a, b = dr.eta1.copy(), zero
        A1 = _vec8(-1, zero, zero, 0)
        B2 = _vec8(-1j, zero, np.cross(dr.eta1, dr.eta2), 0)
    else:
        a, b = zero, np.cross(dr.eta2, dr.rho) / np.linalg.norm(dr.rho)
        A1 = _vec8(0, zero, zero, -1)
        B2 = _vec8(0, -rhat, zero, -1j)
    z1, z2, k = dr.zeta1, dr.zeta2, dr.k
    c1 = np.sqrt(2) / _zeta_norm(z1)
    c2 = np.sqrt(2) / _zeta_norm(z2)
    A_zeta1 = c1 * _vec8(z1 @ a, 1j * k * a, 1j * k * b, z1 @ b)
    A_zeta2 = -c2 * _vec8(0, a, b, 0)
    B_zeta2 = -c2 * _vec8(
        1j * (z2 @ a),
        1j * np.cross(z2, b) - k * a,
        -1j * np.cross(z2, a) - k * b,
        1j * (z2 @ b),
    )
    return AmplitudeChoice(variant, a, b, A_zeta1, A_zeta2, B_zeta2, A1, B2)


def faddeev_multiplier(direction: CgoDirection, which_zeta: int, xi) -> complex:
    """``p_zeta(xi) = |xi|^2 - 2 i zeta.xi`` at one frequency vector."""
    xi = np.asarray(xi, dtype=float)
    z = direction.zeta(which_zeta)
    return complex(xi @ xi - 2j * (z @ xi))


def faddeev_symbol(zeta, grid: Grid3) -> np.ndarray:
    """``p_zeta`` sampled on the derivative wavenumbers of ``grid``."""
    xi = grid.xi_deriv
    return grid.xi_deriv_sq - 2j * np.einsum("i,i...->...", np.asarray(zeta), xi)


def _null_modes(grid: Grid3) -> np.ndarray:
    """Modes on which every spectral derivative vanishes (includes xi = 0)."""
    return np.all(grid.xi_deriv == 0, axis=0)


def _inverse_symbol(zeta, grid: Grid3, reg_floor: float):
    """Reciprocal symbol, the mask of excluded modes and their count.

    Excluded modes are the null modes plus every mode with
    ``|p_zeta| < reg_floor |zeta|``; the reciprocal is set to zero there.
    The lattice always contains exact zeros of ``p_zeta`` (for ``zeta1``
    the mode ``xi = -rho`` is one), so dividing by a floored symbol would
    amplify those modes by ``1 / (reg_floor |zeta|)``.
    """
    p = faddeev_symbol(zeta, grid)
    null = _null_modes(grid)
    small = (np.abs(p) < reg_floor * _zeta_norm(zeta)) & ~null
    excluded = null | small
    inv = np.zeros_like(p)
    inv[~excluded] = 1.0 / p[~excluded]
    return inv, excluded, int(small.sum())


def faddeev_solve(f, zeta, grid: Grid3, reg_floor: float = DEFAULT_REG_FLOOR, return_count=False):
    """Invert ``-Delta - 2 zeta.grad`` componentwise in Fourier space.

    Modes where every derivative vanishes (the zero mode and the Nyquist
    corners) and modes with ``|p_zeta| < reg_floor |zeta|`` are mapped to
    zero; the operator (nearly) annihilates them on the periodic box. The
    count of excluded near-characteristic modes is returned on request.
    """
    inv, _, count = _inverse_symbol(zeta, grid, reg_floor)
    out = ifft3(fft3(f) * inv)
    return (out, count) if return_count else out


def conjugated_operator(u, zeta, grid: Grid3):
    """``(-Delta - 2 zeta.grad) u`` evaluated spectrally."""
    return ifft3(faddeev_symbol(zeta, grid) * fft3(u))


def _weighted_norm(w, weight, grid: Grid3) -> float:
    coeffs = fft3(w) / grid.n**3
    return float(np.sqrt(np.sum(np.abs(coeffs) ** 2 * weight**2) * grid.box_length**3))


def xnorm(w, zeta, grid: Grid3, b: float) -> float:
    """Norm with Fourier weight ``(|zeta| + |p_zeta|)^b``.

    Normalized so that ``b = 0`` gives the quadrature L2 norm.
    """
    weight = (_zeta_norm(zeta) + np.abs(faddeev_symbol(zeta, grid))) ** b
    return _weighted_norm(w, weight, grid)


def xdotnorm(w, zeta, grid: Grid3, b: float, reg_floor: float = DEFAULT_REG_FLOOR) -> float:
    """Homogeneous variant with weight ``|p_zeta|^b``.

    For ``b < 0`` the modulus is floored as in :func:`faddeev_solve`.
    """
    mag = np.abs(faddeev_symbol(zeta, grid))
    if b < 0:
        mag = np.maximum(mag, reg_floor * _zeta_norm(zeta))
    return _weighted_norm(w, mag**b, grid)


@dataclass(frozen=True, eq=False)
class CgoSolution:
    """Accepted remainder of one CGO construction.

    Attributes
    ----------
    remainder : Field8 on the solve grid, multiplied by the cutoff so it
        vanishes outside ``r_omega_dblprime``.
    raw_remainder : the fixed point before the cutoff.
    substitution_residual : ``X^{-1/2}`` norm of the equation residual on
        the modes the periodic operator can reach, relative to ``Q A``.
    zero_mode_defect : largest Fourier coefficient of ``Q (A + R)`` on the
        excluded modes, relative to ``max |Q A|``. The periodic operator
        cannot produce those modes (the constant mode in particular), so
        this part of the right-hand side is left unmatched; it shrinks as
        the solve box grows.
    """

    direction: CgoDirection
    amplitude: AmplitudeChoice | None
    which: str
    zeta: np.ndarray
    amp_vector: np.ndarray
    potential: WeakPotential
    remainder: np.ndarray
    raw_remainder: np.ndarray
    iterations: int
    contraction_history: tuple
    converged: bool
    regularized_modes: int
    substitution_residual: float
    zero_mode_defect: float
    xnorm_half: float = field(default=float("nan"))

    @property
    def grid(self) -> Grid3:
        return self.potential.grid

    @property
    def source(self) -> DerivedMaterialFields:
        return self.potential.source

    @property
    def contraction_factor(self) -> float:
        """Largest update ratio after the first iteration (0 when none)."""
        return max(self.contraction_history[1:], default=0.0)


def solve_potential(ms: MaterialSet, kind: str, pad: int = 1) -> WeakPotential:
    """Weak potential on a box ``pad`` times larger with the phantom centered."""
    return WeakPotential(kind, derive(ms.embed(pad)))


def _constant_field(vec, grid: Grid3) -> np.ndarray:
    return np.asarray(vec, dtype=complex)[:, None, None, None] * np.ones((1,) + grid.shape)


def solve_remainder(
    Qpot: WeakPotential,
    rhs_amp,
    direction: CgoDirection,
    which_zeta: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    reg_floor: float = DEFAULT_REG_FLOOR,
    amplitude: AmplitudeChoice | None = None,
    cutoff: bool = True,
) -> CgoSolution:
    """Fixed-point solve of ``(-Delta - 2 zeta.grad + Q) R = -Q A``.

    Iterates ``R <- faddeev_solve(-Q(A + R))`` from ``R = 0`` until the
    relative update drops below ``tol``.

    Raises
    ------
    DivergenceError
        When the update ratio stays at or above 1 for
        ``DIVERGENCE_PATIENCE`` consecutive iterations or becomes
        non-finite. A larger ``s`` is the usual remedy.
    """
    grid = Qpot.grid
    zeta = direction.zeta(which_zeta)
    A = _constant_field(rhs_amp, grid)
    inv, excluded, nreg = _inverse_symbol(zeta, grid, reg_floor)
    R = np.zeros_like(A)
    history: list[float] = []
    prev = None
    streak = 0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        R_new = ifft3(fft3(-q_strong_apply(Qpot, A + R)) * inv)
        upd = float(np.linalg.norm(R_new - R))
        size = float(np.linalg.norm(R_new))
        if not np.isfinite(upd):
            raise DivergenceError(
                f"non-finite update at s={direction.s:g}", direction.s, direction.eta1
            )
        if prev is not None and prev > 0:
            ratio = upd / prev
            history.append(ratio)
            streak = streak + 1 if ratio >= 1.0 else 0
            if streak >= DIVERGENCE_PATIENCE:
                raise DivergenceError(
                    f"fixed point not contracting at s={direction.s:g}, "
                    f"eta1={np.round(direction.eta1, 6).tolist()} "
                    f"(ratios {np.round(history[-DIVERGENCE_PATIENCE:], 3).tolist()}); "
                    "increase s",
                    direction.s,
                    direction.eta1,
                )
        prev = upd
        R = R_new
        if upd <= tol * size or upd == 0.0:
            converged = True
            break
    log.debug("solve s=%g zeta%d: %d iterations, history %s", direction.s, which_zeta, it, history)

    ms = Qpot.source.material
    chi = smooth_cutoff(grid, ms.r_omega_prime, ms.r_omega_dblprime) if cutoff else 1.0
    sub, zdef = _substitution_residual(Qpot, A, R, zeta, grid, excluded)
    sol = CgoSolution(
        direction=direction,
        amplitude=amplitude,
        which="w1" if which_zeta == 1 else "v2",
        zeta=zeta,
        amp_vector=np.asarray(rhs_amp, dtype=complex),
        potential=Qpot,
        remainder=chi * R,
        raw_remainder=R,
        iterations=it,
        contraction_history=tuple(history),
        converged=converged,
        regularized_modes=nreg,
        substitution_residual=sub,
        zero_mode_defect=zdef,
    )
    object.__setattr__(sol, "xnorm_half", xnorm(sol.remainder, zeta, grid, 0.5))
    return sol


def _substitution_residual(Qpot, A, R, zeta, grid, excluded):
    QA = q_strong_apply(Qpot, A)
    res_hat = fft3(conjugated_operator(R, zeta, grid) + q_strong_apply(Qpot, A + R))
    mean = np.abs(res_hat[:, excluded]).max() / grid.n**3
    res = ifft3(res_hat * ~excluded)
    ref = xnorm(QA, zeta, grid, -0.5)
    if ref == 0.0:
        return 0.0, 0.0
    return xnorm(res, zeta, grid, -0.5) / ref, float(mean / np.abs(QA).max())


def solve_cgo(
    d_or_potential,
    direction: CgoDirection,
    variant: str,
    which: str = "w1",
    **kwargs,
) -> CgoSolution:
    """Solve for ``R_zeta1`` (``which="w1"``, potential Q) or ``R_zeta2``
    (``which="v2"``, potential Qtilde) with the amplitudes of ``variant``."""
    amp = amplitudes(direction, variant)
    kind = "Q" if which == "w1" else "Qtilde"
    if isinstance(d_or_potential, WeakPotential):
        Qpot = d_or_potential
        if Qpot.kind != kind:
            raise ValueError(f"{which} needs a {kind} potential, got {Qpot.kind}")
    else:
        Qpot = WeakPotential(kind, d_or_potential)
    if which == "w1":
        return solve_remainder(Qpot, amp.A_zeta1, direction, 1, amplitude=amp, **kwargs)
    if which == "v2":
        return solve_remainder(Qpot, amp.A_zeta2, direction, 2, amplitude=amp, **kwargs)
    raise ValueError(f"which must be 'w1' or 'v2', got {which!r}")


def _conj_pcal_prime(U, zeta, d: DerivedMaterialFields):
    """``exp(-zeta.x) PcalPrime (exp(zeta.x) U)``."""
    return apply_P(U, d.grid) + apply_P_symbol(U, zeta) + d.kappa * U - apply_Mt(U, d)


def _conj_pcal(U, zeta, d: DerivedMaterialFields):
    """``exp(-zeta.x) Pcal (exp(zeta.x) U)``."""
    return apply_P(U, d.grid) + apply_P_symbol(U, zeta) - d.k * U + apply_V(U, d)


def _vanishing_ratio(v, mask) -> float:
    outer = np.linalg.norm(v[0][mask]) + np.linalg.norm(v[7][mask])
    inner = np.linalg.norm(v[1:4][:, mask]) + np.linalg.norm(v[4:7][:, mask])
    return float(outer / inner) if inner > 0 else float("inf") if outer > 0 else 0.0


@dataclass(frozen=True, eq=False)
class W1Assembly:
    """Factored ``w1 = exp(zeta1.x) U`` and ``v = PcalPrime w1 = exp(zeta1.x) v``.

    ``vanishing_ratio`` is ``(|v1| + |v4|) / (|v2| + |v3|)`` over the ball
    of radius ``r_omega_dblprime``, computed from the uncut remainder so
    that the cutoff transition does not enter.
    """

    U: np.ndarray
    zeta: np.ndarray
    v: np.ndarray
    vanishing_ratio: float
    grid: Grid3


def assemble_w1(sol: CgoSolution) -> W1Assembly:
    if sol.which != "w1":
        raise ValueError("assemble_w1 needs a solution for R_zeta1")
    d, g = sol.source, sol.grid
    U_raw = _constant_field(sol.amp_vector, g) + sol.raw_remainder
    v = _conj_pcal_prime(U_raw, sol.zeta, d)
    mask = g.radius <= d.material.r_omega_dblprime
    ratio = _vanishing_ratio(v, mask)
    U = _constant_field(sol.amp_vector, g) + sol.remainder
    return W1Assembly(U=U, zeta=sol.zeta, v=v, vanishing_ratio=ratio, grid=g)


@dataclass(frozen=True, eq=False)
class V2Assembly:
    """``v2 = exp(zeta2.x) (B_zeta2 + S_zeta2)`` with the decoupling check."""

    B: np.ndarray
    S: np.ndarray
    zeta: np.ndarray
    decoupling_ratio: float
    grid: Grid3


def assemble_v2(sol: CgoSolution, d2: DerivedMaterialFields | None = None, check_tol=1e-8):
    """``S = P(i grad + i zeta2) R - k R + V (A + R)`` from the cut remainder.

    Raises
    ------
    ConsistencyError
        If the first or last remainder component exceeds ``check_tol``
        relative to the whole remainder.
    """
    if sol.which != "v2":
        raise ValueError("assemble_v2 needs a solution for R_zeta2")
    d = d2 if d2 is not None else sol.source
    g = sol.grid
    if abs(sol.amp_vector[0]) + abs(sol.amp_vector[7]) != 0:
        raise ConsistencyError("A_zeta2 must have vanishing first and last components")
    R = sol.remainder
    total = np.linalg.norm(R)
    outer = np.linalg.norm(R[0]) + np.linalg.norm(R[7])
    ratio = float(outer / total) if total > 0 else 0.0
    if ratio > check_tol:
        raise ConsistencyError(f"R_zeta2 components 1 and 4 do not vanish (ratio {ratio:.3e})")
    zeta = sol.zeta
    A = _constant_field(sol.amp_vector, g)
    S = apply_P(R, g) + apply_P_symbol(R, zeta) - d.k * R + apply_V(A + R, d)
    B = _b_vector(sol.amp_vector, zeta, d.k)
    return V2Assembly(B=B, S=S, zeta=zeta, decoupling_ratio=ratio, grid=g)


def _b_vector(amp, zeta, k):
    """``(P(i zeta) - k) A`` for a constant 8-vector ``A``."""
    amp = np.asarray(amp, dtype=complex)
    return apply_P_symbol(amp[:, None], zeta)[:, 0] - k * amp


def s_equation_residual(sol: CgoSolution, Q2: WeakPotential | None = None) -> float:
    """Relative residual of ``(-Delta - 2 zeta2.grad + Q2) S + Q2 B = 0``.

    Uses the uncut remainder. Then ``B + S`` is the conjugate of
    ``Pcal(exp(zeta2.x)(A + R))``, and ``Pcal (PcalPrime Pcal) =
    (Pcal PcalPrime) Pcal`` carries the Qtilde equation solved by ``R`` over
    to the Q equation for ``S``. The norm is ``X^{-1/2}`` with the modes
    excluded by :func:`faddeev_solve` left out.
    """
    d, g = sol.source, sol.grid
    Q2 = Q2 or WeakPotential("Q", d)
    U = _constant_field(sol.amp_vector, g) + sol.raw_remainder
    BS = _conj_pcal(U, sol.zeta, d)
    B = _constant_field(_b_vector(sol.amp_vector, sol.zeta, d.k), g)
    S = BS - B
    res = conjugated_operator(S, sol.zeta, g) + q_strong_apply(Q2, BS)
    _, excluded, _ = _inverse_symbol(sol.zeta, g, DEFAULT_REG_FLOOR)
    res = ifft3(fft3(res) * ~excluded)
    ref = xnorm(q_strong_apply(Q2, B), sol.zeta, g, -0.5)
    if ref == 0.0:
        return 0.0
    return xnorm(res, sol.zeta, g, -0.5) / ref


@dataclass(frozen=True)
class DecayRow:
    """One sample of a decay scan."""

    level: float
    sample_index: int
    s: float
    eta1: tuple[float, float, float]
    r_xnorm_sq: float
    s_xnorm_sq: float
    qa_xnorm_sq: float


@dataclass(frozen=True)
class DecayTable:
    rows: tuple[DecayRow, ...]

    QUANTITIES = ("r_xnorm_sq", "s_xnorm_sq", "qa_xnorm_sq")

    @property
    def levels(self) -> list[float]:
        return sorted({r.level for r in self.rows})

    def means(self, quantity: str) -> list[float]:
        """Per-level mean of ``quantity`` in increasing level order."""
        if quantity not in self.QUANTITIES:
            raise ValueError(f"unknown quantity {quantity!r}")
        out = []
        for lev in self.levels:
            vals = [getattr(r, quantity) for r in self.rows if r.level == lev]
            out.append(float(np.mean(vals)))
        return out


def decay_scan(
    ms: MaterialSet,
    variant: str,
    rho,
    lambda_levels,
    samples_per_level: int,
    rng: np.random.Generator,
    pad: int = 1,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    reg_floor: float = DEFAULT_REG_FLOOR,
) -> DecayTable:
    """Averaged decay of ``R_zeta1``, ``S_zeta2`` and ``Q1 A_zeta1``.

    For each level ``lam`` draws ``s`` uniformly in ``[lam, 2 lam]`` and
    ``eta1`` uniformly on the circle orthogonal to ``rho``, then records
    ``|R_zeta1|^2`` and ``|S_zeta2|^2`` in ``X^{1/2}`` and ``|Q A_zeta1|^2``
    in ``X^{-1/2}``. The remainders are the cut (compactly supported) ones.
    Divergence errors propagate.
    """
    d = derive(ms.embed(pad))
    Q1 = WeakPotential("Q", d)
    Q2t = WeakPotential("Qtilde", d)
    g = d.grid
    rows = []
    for lam in lambda_levels:
        for i in range(samples_per_level):
            s = float(rng.uniform(lam, 2 * lam))
            eta1 = random_eta1(rho, rng)
            dr = make_directions(rho, eta1, s, d.k)
            kw = dict(tol=tol, max_iter=max_iter, reg_floor=reg_floor)
            sol1 = solve_cgo(Q1, dr, variant, "w1", **kw)
            sol2 = solve_cgo(Q2t, dr, variant, "v2", **kw)
            S = assemble_v2(sol2, d).S
            QA = q_strong_apply(Q1, _constant_field(sol1.amp_vector, g))
            rows.append(
                DecayRow(
                    level=float(lam),
                    sample_index=i,
                    s=s,
                    eta1=tuple(float(x) for x in dr.eta1),
                    r_xnorm_sq=sol1.xnorm_half**2,
                    s_xnorm_sq=xnorm(S, dr.zeta2, g, 0.5) ** 2,
                    qa_xnorm_sq=xnorm(QA, dr.zeta1, g, -0.5) ** 2,
                )
            )
    return DecayTable(tuple(rows))


def carleman_ratio(u, zeta, grid: Grid3, Qpot: WeakPotential | None = None) -> float:
    """``|u|_{X^{1/2}} / |(-Delta - 2 zeta.grad + Q) u|_{X^{-1/2}}``.

    The operator is the one whose symbol is ``p_zeta`` in this package's
    Fourier convention. ``Qpot=None`` means the background (``Q = 0``).

    Raises
    ------
    ValueError
        If the denominator vanishes (for instance ``u = 0``).
    """
    Lu = conjugated_operator(u, zeta, grid)
    if Qpot is not None:
        Lu = Lu + q_strong_apply(Qpot, u)
    den = xnorm(Lu, zeta, grid, -0.5)
    if den == 0.0:
        raise ValueError("carleman_ratio needs (L + Q) u != 0")
    return xnorm(u, zeta, grid, 0.5) / den


@dataclass(frozen=True)
class CarlemanProbe:
    """Parameters of the multiplier ``m(xi)``.

    ``m(xi) = (||xi|^2 - tau^2|^2 / M + tau^2 xi_3^2 / M + M tau^2)^(1/2)``.
    """

    M: float
    tau: float
    R_support: float

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError("M must be positive")
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @property
    def satisfies_threshold(self) -> bool:
        """Whether ``tau > 8 M R_support``."""
        return self.tau > 8 * self.M * self.R_support

    def multiplier(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        mag2 = np.sum(xi**2, axis=0)
        t2 = self.tau**2
        return np.sqrt(np.abs(mag2 - t2) ** 2 / self.M + t2 * xi[2] ** 2 / self.M + self.M * t2)


def ynorm(u, probe: CarlemanProbe, grid: Grid3, b: float) -> float:
    """``|m^b u_hat|`` normalized like :func:`xnorm` (sums over components)."""
    weight = probe.multiplier(grid.xi_deriv) ** b
    return _weighted_norm(u, weight, grid)
