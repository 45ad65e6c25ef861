"""Brute-force oracle for the corpus detection thresholds.

For every phantom pair in ``src/cgolab/data/corpus.json`` this script
evaluates the a- and b-choice residual fields from closed-form bump
derivatives (no FFTs, no package code), sums the scattering functional
``(i/4) h^3 sum r(x) exp(i rho.x)`` directly over the lattice ball and
stores ``oracle_max_abs_t`` together with
``detection_threshold = threshold_fraction * oracle_max_abs_t``.

Run from the repository root::

    python3 tools/compute_thresholds.py            # rewrite the manifest
    python3 tools/compute_thresholds.py --check    # compare only
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

CORPUS = Path(__file__).resolve().parents[1] / "src" / "cgolab" / "data" / "corpus.json"


def bump_with_derivatives(coords, center, radius, smoothness):
    """Value, gradient and Laplacian of ``exp(c (1 - 1/(1 - u)))``, ``u = r^2/R^2``."""
    d = coords - np.asarray(center, dtype=float)[:, None, None, None]
    u = np.sum(d**2, axis=0) / radius**2
    inside = u < 1.0
    c = smoothness
    val = np.zeros(u.shape)
    d1 = np.zeros(u.shape)  # db/du
    d2 = np.zeros(u.shape)  # d2b/du2
    q = 1.0 / (1.0 - u[inside])
    b = np.exp(c * (1.0 - q))
    val[inside] = b
    d1[inside] = -c * b * q**2
    d2[inside] = -c * b * (-c * q**4 + 2.0 * q**3)
    grad_u = 2.0 * d / radius**2
    lap_u = 6.0 / radius**2
    grad = d1 * grad_u
    lap = d2 * np.sum(grad_u**2, axis=0) + d1 * lap_u
    return val, grad, lap


def parameter_fields(entry, coords):
    """``(gamma, grad gamma, lap gamma, mu, grad mu, lap mu, omega)`` in closed form."""
    omega = float(entry.get("omega", 1.0))
    eps0 = float(entry.get("eps0", 1.0))
    mu0 = float(entry.get("mu0", 1.0))
    shape = coords.shape[1:]
    fields = {
        "gamma": [np.full(shape, eps0, dtype=complex), np.zeros((3,) + shape, complex), np.zeros(shape, complex)],
        "mu": [np.full(shape, mu0, dtype=complex), np.zeros((3,) + shape, complex), np.zeros(shape, complex)],
    }
    for b in entry["bumps"]:
        val, grad, lap = bump_with_derivatives(coords, b["center"], b["radius"], b.get("smoothness", 1.0))
        if b["target"] == "mu":
            scale, key = b["amplitude"], "mu"
        elif b["target"] == "eps":
            scale, key = b["amplitude"], "gamma"
        else:
            scale, key = 1j * b["amplitude"] / omega, "gamma"
        fields[key][0] += scale * val
        fields[key][1] += scale * grad
        fields[key][2] += scale * lap
    return fields["gamma"], fields["mu"], omega


def log_gradient(f):
    """Gradient and divergence of ``grad log p`` from ``(p, grad p, lap p)``."""
    p, gp, lp = f
    vec = gp / p
    div = lp / p - np.sum(gp * gp, axis=0) / p**2
    return vec, div


def residuals(e1, e2, coords):
    g1, m1, omega = parameter_fields(e1, coords)
    g2, m2, omega2 = parameter_fields(e2, coords)
    assert omega == omega2, "paired phantoms must share omega"
    theta1 = omega**2 * (g1[0] * m1[0] - 1.0)
    theta2 = omega**2 * (g2[0] * m2[0] - 1.0)
    out = {}
    for variant, (f1, f2) in {"a": (g1, g2), "b": (m1, m2)}.items():
        v1, div1 = log_gradient(f1)
        v2, div2 = log_gradient(f2)
        out[variant] = np.sum((v2 - v1) * (v2 + v1), axis=0) - 4 * (theta2 - theta1) + 2 * (div2 - div1)
    return out


def max_abs_t(r, x, box_length, radius):
    R = int(np.floor(radius))
    m = np.arange(-R, R + 1)
    E = np.exp(1j * 2 * np.pi / box_length * np.outer(m, x))
    h = x[1] - x[0]
    T = 0.25j * h**3 * np.einsum("ijk,ai,bj,ck->abc", r, E, E, E, optimize=True)
    mm = m[:, None, None] ** 2 + m[None, :, None] ** 2 + m[None, None, :] ** 2
    return float(np.abs(T[mm <= radius**2 + 1e-9]).max())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--check", action="store_true", help="report without rewriting the manifest")
    args = ap.parse_args(argv)

    corpus = json.loads(CORPUS.read_text(encoding="utf-8"))
    n = int(corpus["grid"]["n"])
    L = float(corpus["grid"]["box_length"])
    x = -L / 2 + np.arange(n) * L / n
    coords = np.stack(np.meshgrid(x, x, x, indexing="ij"))
    radius = float(corpus["detection"]["rho_radius"])
    frac = float(corpus["detection"]["threshold_fraction"])

    for pair in corpus["pairs"]:
        e1 = corpus["phantoms"][pair["first"]]
        e2 = corpus["phantoms"][pair["second"]]
        res = residuals(e1, e2, coords)
        oracle = {v: max_abs_t(r, x, L, radius) for v, r in res.items()}
        pair["oracle_max_abs_t"] = oracle
        pair["detection_threshold"] = {v: frac * t for v, t in oracle.items()}
        print(f"{pair['name']:>16}: " + "  ".join(f"{v}: {t:.6e}" for v, t in oracle.items()))

    if not args.check:
        CORPUS.write_text(json.dumps(corpus, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
