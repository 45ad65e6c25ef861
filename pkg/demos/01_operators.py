"""Build a phantom, derive its coefficient fields and check the factorization.

Run with ``python demos/01_operators.py``.
"""

import numpy as np

from cgolab.corpus import load_corpus
from cgolab.fields import localized_random_field
from cgolab.materials import derive
from cgolab.operators import factorization_residual

corpus = load_corpus()
ms = corpus.build("mixed")
d = derive(ms)
print(f"grid {d.grid.n}^3, omega={ms.omega}, k={d.k:.3f}")
print(f"max |alpha| = {np.abs(d.alpha).max():.3e}, max |theta| = {np.abs(d.theta).max():.3e}")

rng = np.random.default_rng(0)
for _ in range(3):
    w = localized_random_field(d.grid, rng)
    phi = localized_random_field(d.grid, rng)
    print(
        "factorization residual  Q: %.2e   Qtilde: %.2e"
        % (factorization_residual(d, w, phi, "Q"), factorization_residual(d, w, phi, "Qtilde"))
    )
