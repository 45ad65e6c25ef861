"""Electromagnetic parameter phantoms and the derived material symbols.

A phantom is a homogeneous background ``(mu0, eps0, sigma=0)`` plus a sum
of smooth compactly supported bumps placed inside the ball of radius
``r_omega``. From it, :func:`derive` computes the complex permittivity
``gamma = eps + i sigma / omega`` and the symbols that enter the
8-vector operators.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .fields import Grid3, spectral_gradient

__all__ = [
    "Bump",
    "PhantomSpec",
    "MaterialSet",
    "DerivedMaterialFields",
    "PhantomError",
    "bump_profile",
    "build_phantom",
    "derive",
    "estimate_lipschitz_A",
    "DEFAULT_RADII",
]

#: Nested ball radii (r_omega, r_omega', r_omega'') as fractions of L.
DEFAULT_RADII = (0.20, 0.28, 0.36)
LIPSCHITZ_FLOOR_DELTA = 0.01
TARGETS = ("mu", "eps", "sigma")


class PhantomError(ValueError):
    """Invalid phantom description."""


@dataclass(frozen=True)
class Bump:
    """One smooth bump ``amplitude * exp(c (1 - 1/(1 - r^2)))``.

    ``r`` is the distance to ``center`` divided by ``radius`` and ``c`` is
    the ``smoothness`` parameter; larger values concentrate the bump and
    flatten its edge. The bump equals ``amplitude`` at its center and
    vanishes identically for ``r >= 1``.
    """

    target: str
    center: tuple[float, float, float]
    radius: float
    amplitude: float
    smoothness: float = 1.0

    def __post_init__(self):
        if self.target not in TARGETS:
            raise PhantomError(f"bump target must be one of {TARGETS}, got {self.target!r}")
        if len(self.center) != 3:
            raise PhantomError("bump center needs three coordinates")
        if not self.radius > 0:
            raise PhantomError(f"bump radius must be positive, got {self.radius}")
        if not self.smoothness > 0:
            raise PhantomError(f"bump smoothness must be positive, got {self.smoothness}")


@dataclass(frozen=True)
class PhantomSpec:
    """Background constants, bumps and nested radii (absolute units)."""

    omega: float = 1.0
    eps0: float = 1.0
    mu0: float = 1.0
    bumps: tuple[Bump, ...] = ()
    radii: tuple[float, float, float] | None = None
    eps_floor: float | None = None
    mu_floor: float | None = None


def bump_profile(grid: Grid3, center, radius, smoothness=1.0) -> np.ndarray:
    """Unit-height C-infinity bump supported in the ball ``|x - c| < radius``."""
    d = grid.coords - np.asarray(center, dtype=float)[:, None, None, None]
    r2 = np.sum(d**2, axis=0) / radius**2
    out = np.zeros(grid.shape)
    inside = r2 < 1.0
    out[inside] = np.exp(smoothness * (1.0 - 1.0 / (1.0 - r2[inside])))
    return out


@dataclass(frozen=True, eq=False)
class MaterialSet:
    """Sampled parameters ``mu, eps, sigma`` of one phantom."""

    grid: Grid3
    omega: float
    eps0: float
    mu0: float
    mu: np.ndarray
    eps: np.ndarray
    sigma: np.ndarray
    r_omega: float
    r_omega_prime: float
    r_omega_dblprime: float
    spec: PhantomSpec | None = field(default=None, repr=False)

    def embed(self, factor: int) -> "MaterialSet":
        """Same phantom on a box ``factor`` times larger (background outside)."""
        if factor == 1:
            return self
        big = self.grid.padded(factor)
        lo = (big.n - self.grid.n) // 2

        def pad(a, background):
            out = np.full(big.shape, background, dtype=float)
            out[lo : lo + self.grid.n, lo : lo + self.grid.n, lo : lo + self.grid.n] = a
            return out

        return replace(
            self,
            grid=big,
            mu=pad(self.mu, self.mu0),
            eps=pad(self.eps, self.eps0),
            sigma=pad(self.sigma, 0.0),
        )


@dataclass(frozen=True, eq=False)
class DerivedMaterialFields:
    """Symbols computed from a :class:`MaterialSet`.

    Attributes
    ----------
    gamma : complex array, ``eps + i sigma / omega``
    alpha : complex (3, n, n, n), spectral gradient of ``log gamma``
    beta : real (3, n, n, n), spectral gradient of ``log mu``
    kappa : complex array, ``omega (mu gamma)^(1/2)``
    k : float, ``omega (eps0 mu0)^(1/2)``
    theta : complex array, ``omega^2 (gamma mu - eps0 mu0)``
    d_diag : tuple of the four diagonal blocks ``(mu^.5, gamma^.5, mu^.5, gamma^.5)``
    lipschitz_A : float
    """

    material: MaterialSet
    gamma: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    kappa: np.ndarray
    k: float
    theta: np.ndarray
    d_diag: tuple
    lipschitz_A: float

    @property
    def grid(self) -> Grid3:
        return self.material.grid

    @property
    def omega(self) -> float:
        return self.material.omega


def build_phantom(spec: PhantomSpec, grid: Grid3 | None = None) -> MaterialSet:
    """Sample a phantom on ``grid``.

    Raises
    ------
    PhantomError
        If a bump leaves the ball of radius ``r_omega`` or drives a
        parameter below its positivity floor.
    """
    grid = grid or Grid3()
    L = grid.box_length
    radii = spec.radii or tuple(f * L for f in DEFAULT_RADII)
    r_omega, r_prime, r_dbl = radii
    if not 0 < r_omega < r_prime < r_dbl < 0.4 * L:
        raise PhantomError(f"radii must satisfy 0 < r < r' < r'' < 0.4 L, got {radii}")
    if spec.omega <= 0 or spec.eps0 <= 0 or spec.mu0 <= 0:
        raise PhantomError("omega, eps0 and mu0 must be positive")
    eps_floor = spec.eps_floor if spec.eps_floor is not None else 0.1 * spec.eps0
    mu_floor = spec.mu_floor if spec.mu_floor is not None else 0.1 * spec.mu0

    params = {
        "mu": np.full(grid.shape, float(spec.mu0)),
        "eps": np.full(grid.shape, float(spec.eps0)),
        "sigma": np.zeros(grid.shape),
    }
    for i, b in enumerate(spec.bumps):
        reach = np.linalg.norm(b.center) + b.radius
        if reach > r_omega + 1e-12:
            raise PhantomError(
                f"bump {i} reaches radius {reach:.4g}, outside r_omega={r_omega:.4g}"
            )
        params[b.target] += b.amplitude * bump_profile(grid, b.center, b.radius, b.smoothness)

    if params["mu"].min() < mu_floor:
        raise PhantomError(f"mu falls to {params['mu'].min():.4g}, below floor {mu_floor:.4g}")
    if params["eps"].min() < eps_floor:
        raise PhantomError(f"eps falls to {params['eps'].min():.4g}, below floor {eps_floor:.4g}")
    if params["sigma"].min() < 0:
        raise PhantomError("sigma must be nonnegative")

    return MaterialSet(
        grid=grid,
        omega=float(spec.omega),
        eps0=float(spec.eps0),
        mu0=float(spec.mu0),
        r_omega=float(r_omega),
        r_omega_prime=float(r_prime),
        r_omega_dblprime=float(r_dbl),
        spec=spec,
        **params,
    )


def derive(ms: MaterialSet) -> DerivedMaterialFields:
    """Compute ``gamma, alpha, beta, kappa, k, theta, D`` with principal branches."""
    grid, omega = ms.grid, ms.omega
    gamma = ms.eps + 1j * ms.sigma / omega
    if gamma.real.min() <= 0:
        raise PhantomError("Re gamma must stay positive")
    mu = ms.mu
    sqrt_mu = np.sqrt(mu)
    sqrt_gamma = np.sqrt(gamma)
    alpha = spectral_gradient(np.log(gamma), grid)
    beta = spectral_gradient(np.log(mu), grid).real
    kappa = omega * np.sqrt(mu * gamma)
    k = float(omega * np.sqrt(ms.eps0 * ms.mu0))
    theta = omega**2 * (gamma * mu - ms.eps0 * ms.mu0)
    d = DerivedMaterialFields(
        material=ms,
        gamma=gamma,
        alpha=alpha,
        beta=beta,
        kappa=kappa,
        k=k,
        theta=theta,
        d_diag=(sqrt_mu, sqrt_gamma, sqrt_mu, sqrt_gamma),
        lipschitz_A=0.0,
    )
    return replace(d, lipschitz_A=estimate_lipschitz_A(d))


def estimate_lipschitz_A(d: DerivedMaterialFields) -> float:
    """``max(1.01, max|alpha|, max|beta|)`` over the grid."""
    a = np.sqrt(np.sum(np.abs(d.alpha) ** 2, axis=0)).max()
    b = np.sqrt(np.sum(np.abs(d.beta) ** 2, axis=0)).max()
    return float(max(1.0 + LIPSCHITZ_FLOOR_DELTA, a, b))
