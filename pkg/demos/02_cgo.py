"""Construct CGO solutions for a weak bump and inspect their structure.

Run with ``python demos/02_cgo.py``. Takes about a minute because the
vanishing-component check uses a box three times larger than the phantom grid.
"""

import numpy as np

from cgolab.cgo import assemble_v2, assemble_w1, decay_scan, make_directions, solve_cgo, solve_potential
from cgolab.corpus import load_corpus

corpus = load_corpus()
ms = corpus.build(corpus.cgo_phantom)
rho = corpus.grid.lattice_frequency((1, 0, 0))

Q = solve_potential(ms, "Q", pad=3)
Qt = solve_potential(ms, "Qtilde", pad=3)
dr = make_directions(rho, (0, 1, 0.3), 8.0, Q.source.k)
print("zeta1 =", np.round(dr.zeta1, 3))

sol1 = solve_cgo(Q, dr, "a", "w1")
print(f"R_zeta1: {sol1.iterations} iterations, contraction {sol1.contraction_factor:.2e}")
print(f"first/last components of Pcal' w1 relative to the middle: {assemble_w1(sol1).vanishing_ratio:.2e}")

sol2 = solve_cgo(Qt, dr, "a", "v2")
print(f"R_zeta2 decoupling ratio: {assemble_v2(sol2).decoupling_ratio:.1e}")

table = decay_scan(corpus.build("mu_bump"), "a", rho, (4, 8, 16), 4, np.random.default_rng(1))
print("mean |R|^2 in X^1/2 per level:", ["%.2e" % v for v in table.means("r_xnorm_sq")])
