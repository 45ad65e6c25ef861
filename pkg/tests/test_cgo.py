import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgolab.cgo import (
    CarlemanProbe,
    DivergenceError,
    amplitudes,
    assemble_v2,
    assemble_w1,
    carleman_ratio,
    conjugated_operator,
    decay_scan,
    faddeev_multiplier,
    faddeev_solve,
    faddeev_symbol,
    make_directions,
    random_eta1,
    s_equation_residual,
    solve_cgo,
    xdotnorm,
    xnorm,
    ynorm,
)
from cgolab.fields import Grid3, fft3, localized_random_field, random_field, smooth_cutoff
from cgolab.materials import PhantomSpec, build_phantom, derive
from cgolab.operators import WeakPotential, l2_norm

G = Grid3(32)
lattice = st.tuples(*[st.integers(-6, 6)] * 3).filter(lambda m: m != (0, 0, 0))


@settings(max_examples=60, deadline=None)
@given(
    m=lattice,
    s=st.floats(1.0, 200.0),
    k=st.floats(0.0, 50.0),
    seed=st.tuples(*[st.floats(-1, 1)] * 3),
)
def test_zeta_algebra(m, s, k, seed):
    rho = G.lattice_frequency(m)
    seed = np.asarray(seed)
    if np.linalg.norm(np.cross(seed, rho)) < 1e-3 * np.linalg.norm(rho):
        seed = seed + np.array([0.3, -0.7, 0.2])
        if np.linalg.norm(np.cross(seed, rho)) < 1e-3 * np.linalg.norm(rho):
            return
    dr = make_directions(rho, seed, s, k)
    scale = max(1.0, k * k, s * s, rho @ rho)
    for z in (dr.zeta1, dr.zeta2):
        assert abs(z @ z + k * k) < 1e-12 * scale
        assert abs(z.real @ z.imag) < 1e-12 * scale
        assert abs(z.real @ z.real - (z.imag @ z.imag - k * k)) < 1e-12 * scale
    assert np.abs(dr.zeta1 + dr.zeta2 - 1j * rho).max() < 1e-12 * np.sqrt(scale)
    assert abs(dr.eta1 @ rho) < 1e-12 * np.linalg.norm(rho)
    np.testing.assert_allclose(np.cross(dr.eta1, dr.eta2), rho / np.linalg.norm(rho), atol=1e-12)


def test_make_directions_rejects_bad_input():
    rho = G.lattice_frequency((1, 0, 0))
    with pytest.raises(ValueError, match="nonzero"):
        make_directions(np.zeros(3), (0, 1, 0), 8, 1)
    with pytest.raises(ValueError, match="at least 1"):
        make_directions(rho, (0, 1, 0), 0.5, 1)
    with pytest.raises(ValueError, match="parallel"):
        make_directions(rho, (2, 0, 0), 8, 1)


def test_random_eta1_is_unit_and_orthogonal(rng):
    rho = G.lattice_frequency((1, 2, -1))
    for _ in range(10):
        e = random_eta1(rho, rng)
        assert abs(np.linalg.norm(e) - 1) < 1e-14 and abs(e @ rho) < 1e-12


@pytest.mark.parametrize("variant", ["a", "b"])
def test_amplitudes_approach_limits(variant):
    rho = G.lattice_frequency((1, 0, 0))
    errs = []
    for s in (10.0, 100.0, 1000.0):
        dr = make_directions(rho, (0, 1, 0), s, 3.0)
        amp = amplitudes(dr, variant)
        assert amp.A_zeta2[0] == 0 and amp.A_zeta2[7] == 0
        errs.append(np.abs(amp.A_zeta1 - amp.A1).max() + np.abs(amp.B_zeta2 - amp.B2).max())
    assert errs[2] < errs[1] < errs[0] and errs[2] < 1e-2


def test_amplitudes_reject_unknown_variant():
    dr = make_directions(G.lattice_frequency((1, 0, 0)), (0, 1, 0), 8, 1)
    with pytest.raises(ValueError):
        amplitudes(dr, "c")


def test_faddeev_symbol_and_multiplier_agree():
    dr = make_directions(G.lattice_frequency((0, 1, 0)), (1, 0, 0), 8, 2.0)
    p = faddeev_symbol(dr.zeta1, G)
    idx = (3, 30, 5)
    xi = G.xi_deriv[(slice(None),) + idx]
    assert p[idx] == pytest.approx(faddeev_multiplier(dr, 1, xi))
    # exact lattice zero at xi = -rho
    assert faddeev_multiplier(dr, 1, -dr.rho) == pytest.approx(0, abs=1e-10)


def test_conjugated_operator_on_plane_wave():
    dr = make_directions(G.lattice_frequency((1, 1, 0)), (0, 0, 1), 8, 2.0)
    xi = G.lattice_frequency((2, -1, 3))
    u = G.plane_wave(xi)
    np.testing.assert_allclose(
        conjugated_operator(u, dr.zeta1, G), faddeev_multiplier(dr, 1, xi) * u, atol=1e-9
    )


def test_faddeev_solve_inverts_on_reachable_modes(rng):
    dr = make_directions(G.lattice_frequency((1, 0, 0)), (0, 1, 0), 8, 10.0)
    f = random_field(G, rng, ncomp=1, band=8)
    u, count = faddeev_solve(f, dr.zeta1, G, return_count=True)
    assert count >= 1  # xi = -rho is always on the lattice
    back = conjugated_operator(u, dr.zeta1, G)
    D = np.abs(fft3(f) - fft3(back))
    p = faddeev_symbol(dr.zeta1, G)
    excluded = np.all(G.xi_deriv == 0, axis=0) | (np.abs(p) < 1e-6 * np.linalg.norm(dr.zeta1))
    assert excluded.sum() >= count
    assert D[~excluded].max() < 1e-10 * np.abs(fft3(f)).max()


def test_xnorm_b0_is_l2_and_weights_order(rng):
    dr = make_directions(G.lattice_frequency((1, 0, 0)), (0, 1, 0), 8, 1.0)
    w = random_field(G, rng)
    assert xnorm(w, dr.zeta1, G, 0.0) == pytest.approx(l2_norm(w, G), rel=1e-12)
    assert xdotnorm(w, dr.zeta1, G, 0.5) <= xnorm(w, dr.zeta1, G, 0.5)
    assert xnorm(w, dr.zeta1, G, -0.5) <= xnorm(w, dr.zeta1, G, 0.0) / np.sqrt(np.linalg.norm(dr.zeta1))
    assert np.isfinite(xdotnorm(w, dr.zeta1, G, -0.5))


@pytest.fixture(scope="module")
def weak_solutions(corpus):
    d = derive(corpus.build("mu_bump"))
    dr = make_directions(d.grid.lattice_frequency((1, 0, 0)), (0, 1, 0.3), 8.0, d.k)
    return d, dr, {
        which: solve_cgo(d, dr, "a", which) for which in ("w1", "v2")
    }


def test_weak_bump_solution_converges(weak_solutions):
    d, dr, sols = weak_solutions
    for sol in sols.values():
        assert sol.converged
        assert sol.iterations <= 10
        assert sol.contraction_factor < 0.5
        assert sol.substitution_residual < 10 * 1e-10
        outside = d.grid.radius >= d.material.r_omega_dblprime
        assert np.abs(sol.remainder[:, outside]).max() < 1e-12
        assert sol.zero_mode_defect < 1e-2


def test_decoupling_of_second_remainder(weak_solutions):
    _, _, sols = weak_solutions
    v2 = assemble_v2(sols["v2"])
    assert v2.decoupling_ratio < 1e-8
    with pytest.raises(ValueError):
        assemble_v2(sols["w1"])
    with pytest.raises(ValueError):
        assemble_w1(sols["v2"])


def test_background_has_zero_remainder():
    d = derive(build_phantom(PhantomSpec(omega=3.0), G))
    dr = make_directions(G.lattice_frequency((1, 0, 0)), (0, 1, 0), 8.0, d.k)
    sol = solve_cgo(d, dr, "b", "w1")
    assert sol.converged and np.abs(sol.remainder).max() == 0
    assert assemble_w1(sol).vanishing_ratio < 1e-14


def test_strong_bump_diverges_at_small_s(corpus):
    d = derive(corpus.build("strong_mu_bump"))
    dr = make_directions(d.grid.lattice_frequency((1, 0, 0)), (0, 1, 0), 1.0, d.k)
    with pytest.raises(DivergenceError) as info:
        solve_cgo(d, dr, "a", "w1")
    assert info.value.s == 1.0
    np.testing.assert_allclose(info.value.eta1, dr.eta1)
    assert "increase s" in str(info.value)


def test_solve_cgo_checks_potential_kind(weak_solutions):
    d, dr, _ = weak_solutions
    with pytest.raises(ValueError, match="Qtilde"):
        solve_cgo(WeakPotential("Q", d), dr, "a", "v2")
    with pytest.raises(ValueError):
        solve_cgo(d, dr, "a", "w3")


@pytest.mark.xfail(strict=True, reason="aliasing and excluded modes keep the residual near 1e-3 at n=32")
def test_s_equation_residual_reaches_1e_6(weak_solutions):
    _, _, sols = weak_solutions
    assert s_equation_residual(sols["v2"]) < 1e-6


def test_s_equation_residual_decreases_with_s(corpus):
    d = derive(corpus.build("mu_bump"))
    Qt = WeakPotential("Qtilde", d)
    res = []
    for s in (8.0, 16.0, 32.0):
        dr = make_directions(d.grid.lattice_frequency((1, 0, 0)), (0, 1, 0.3), s, d.k)
        res.append(s_equation_residual(solve_cgo(Qt, dr, "a", "v2")))
    assert res[0] > res[1] > res[2]
    assert res[0] < 1e-2


def test_decay_scan_table(corpus):
    ms = corpus.build("mu_bump")
    rho = ms.grid.lattice_frequency((1, 0, 0))
    t1 = decay_scan(ms, "a", rho, (4, 16), 2, np.random.default_rng(3))
    t2 = decay_scan(ms, "a", rho, (4, 16), 2, np.random.default_rng(3))
    assert t1 == t2
    assert t1.levels == [4.0, 16.0] and len(t1.rows) == 4
    for r in t1.rows:
        assert r.level <= r.s <= 2 * r.level
    for q in t1.QUANTITIES:
        m = t1.means(q)
        assert len(m) == 2 and m[1] < m[0]
    with pytest.raises(ValueError):
        t1.means("nope")


def test_carleman_ratio_bounded_on_background(rng):
    d = derive(build_phantom(PhantomSpec(omega=3.0), G))
    chi = smooth_cutoff(G, 0.1, 0.2)
    u = chi * localized_random_field(G, rng)
    rho = G.lattice_frequency((1, 0, 0))
    r = [carleman_ratio(u, make_directions(rho, (0, 1, 0), s, d.k).zeta1, G) for s in (8, 16, 32)]
    assert max(r) / min(r) < 10
    with pytest.raises(ValueError):
        carleman_ratio(np.zeros_like(u), make_directions(rho, (0, 1, 0), 8, d.k).zeta1, G)


def test_carleman_probe():
    with pytest.raises(ValueError):
        CarlemanProbe(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        CarlemanProbe(1.0, 0.0, 1.0)
    p = CarlemanProbe(M=1.0, tau=10.0, R_support=1.0)
    assert p.satisfies_threshold
    assert not CarlemanProbe(M=2.0, tau=10.0, R_support=1.0).satisfies_threshold
    # at |xi| = tau with xi_3 = 0 the multiplier reduces to sqrt(M) tau
    assert p.multiplier(np.array([10.0, 0.0, 0.0])) == pytest.approx(10.0)
    w = np.ones((1,) + G.shape)
    assert ynorm(w, p, G, 0.0) == pytest.approx(1.0)
    # the zero mode carries m(0) = (tau^4 / M + M tau^2)^(1/2)
    assert ynorm(w, p, G, 1.0) == pytest.approx(np.sqrt(1e4 + 1e2))
