"""Scattering functional for corpus pairs and the Schrodinger-form reduction.

Run with ``python demos/03_scattering.py``.
"""

from cgolab.corpus import load_corpus
from cgolab.materials import derive
from cgolab.scattering import equivalence_residual, scatter_scan

corpus = load_corpus()
radius = corpus.detection["rho_radius"]
for pair in corpus.pairs:
    d1, d2 = derive(corpus.build(pair.first)), derive(corpus.build(pair.second))
    samples = scatter_scan(d1, d2, radius)
    tmax = {v: max(abs(s.t_value) for s in samples if s.variant == v) for v in "ab"}
    gaps = equivalence_residual(d1, d2)
    print(
        f"{pair.name:15s} max|t_a|={tmax['a']:.3e} (threshold {pair.detection_threshold['a']:.3e})"
        f"  max|t_b|={tmax['b']:.3e}  equivalence gaps {gaps[0]:.1e} {gaps[1]:.1e}"
    )
