"""Configuration-driven command line runner.

Usage::

    cgolab COMMAND --config run.cfg [--out DIR] [--seed N] [--threads N] [--verbose]

Commands: ``phantom``, ``check-ops``, ``cgo-solve``, ``decay-scan``,
``scatter-scan`` and ``uniqueness``. Every run writes its outputs
atomically into ``--out`` together with ``manifest.json``, which records
the config text and its SHA-256, the seed, library versions, the
thresholds in force and a digest of every output file.

Config format
-------------
Plain ``key = value`` lines grouped under ``[section]`` headers. ``#``
starts a comment. Sections:

``[run]``
    ``seed``, ``out``.
``[grid]``
    ``n`` (power of two), ``L``.
``[phantom]`` and ``[phantom2]``
    ``corpus`` (a name from the bundled corpus), ``file`` (a JSON phantom
    description), ``omega``, ``eps0``, ``mu0``.
``[bump]`` (repeatable)
    ``phantom`` (1 or 2, default 1), ``target``, ``center`` (three
    numbers), ``radius``, ``amplitude``, ``smoothness``.
``[directions]``
    ``rho`` (lattice vectors separated by ``;``), ``s``, ``lambda_levels``,
    ``samples``, ``variant``, ``eta1``, ``pad``.
``[solver]``
    ``tol``, ``max_iter``, ``reg_floor``.
``[scatter]``
    ``radius``, ``variants``, ``method``.
``[checks]``
    ``samples`` (random pairs per operator check).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import platform
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .cgo import (
    DEFAULT_MAX_ITER,
    DEFAULT_REG_FLOOR,
    DEFAULT_TOL,
    ConsistencyError,
    DecayTable,
    DivergenceError,
    assemble_v2,
    assemble_w1,
    decay_scan,
    make_directions,
    random_eta1,
    solve_cgo,
    solve_potential,
)
from .corpus import load_corpus, spec_from_dict
from .fields import Grid3, localized_random_field, set_workers, write_field
from .materials import Bump, MaterialSet, PhantomError, PhantomSpec, build_phantom, derive
from .operators import (
    apply_P,
    apply_Pcal,
    factorization_residual,
    l2_norm,
    maxwell_residual,
    rescale_to_field8,
)
from .scattering import (
    assemble_uniqueness_coeffs,
    equivalence_residual,
    residual_alpha_field,
    residual_beta_field,
    scatter_scan,
    schrodinger_system_residual,
)

log = logging.getLogger("cgolab")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_INVARIANT = 4

#: Thresholds used by the command-level invariant checks.
THRESHOLDS = {
    "zeta_algebra": 1e-12,
    "p_antisymmetry": 1e-10,
    "factorization": 1e-8,
    "maxwell_vacuum": 1e-10,
    "maxwell_wrong_dispersion_min": 1e-2,
    "equal_pair_max_abs_t": 1e-10,
    "schrodinger_zero": 1e-6,
}

SECTIONS = {
    "run": {"seed", "out"},
    "grid": {"n", "L"},
    "phantom": {"corpus", "file", "omega", "eps0", "mu0"},
    "phantom2": {"corpus", "file", "omega", "eps0", "mu0"},
    "bump": {"phantom", "target", "center", "radius", "amplitude", "smoothness"},
    "directions": {"rho", "s", "lambda_levels", "samples", "variant", "eta1", "pad"},
    "solver": {"tol", "max_iter", "reg_floor"},
    "scatter": {"radius", "variants", "method"},
    "checks": {"samples"},
}
REPEATABLE = {"bump"}


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


class InvariantFailure(RuntimeError):
    """A command-level check did not hold."""


# ----------------------------------------------------------------------------
# config parsing


@dataclass
class _Entry:
    value: str
    line: int


@dataclass
class _Block:
    name: str
    line: int
    entries: dict = field(default_factory=dict)


def _tokenize(text: str, source: str) -> list[_Block]:
    blocks: list[_Block] = []
    seen_single: set[str] = set()
    current: _Block | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno, source)
            name = line[1:-1].strip().lower()
            if name not in SECTIONS:
                raise ConfigError(f"unknown section [{name}]", lineno, source)
            if name not in REPEATABLE:
                if name in seen_single:
                    raise ConfigError(f"section [{name}] given twice", lineno, source)
                seen_single.add(name)
            current = _Block(name, lineno)
            blocks.append(current)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, source)
        if current is None:
            raise ConfigError("key outside of any [section]", lineno, source)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SECTIONS[current.name]:
            raise ConfigError(f"unknown key {key!r} in [{current.name}]", lineno, source)
        if key in current.entries:
            raise ConfigError(f"duplicate key {key!r} in [{current.name}]", lineno, source)
        if value == "":
            raise ConfigError(f"empty value for {key!r}", lineno, source)
        current.entries[key] = _Entry(value, lineno)
    return blocks


def _num(entry: _Entry, source: str, kind=float, positive=False):
    try:
        v = kind(entry.value)
    except ValueError:
        raise ConfigError(f"cannot read {entry.value!r} as {kind.__name__}", entry.line, source) from None
    if kind is float and not np.isfinite(v):
        raise ConfigError(f"non-finite number {entry.value!r}", entry.line, source)
    if positive and not v > 0:
        raise ConfigError(f"expected a positive value, got {entry.value!r}", entry.line, source)
    return v


def _list(entry: _Entry, source: str, kind=float, sep=","):
    parts = [p for p in (x.strip() for x in entry.value.replace(sep, " ").split()) if p]
    return [_num(_Entry(p, entry.line), source, kind) for p in parts]


@dataclass(frozen=True)
class RunConfig:
    """Parsed run configuration.

    ``phantoms`` holds one or two :class:`PhantomSpec`. ``rho`` entries are
    integer lattice vectors ``m``; the physical frequency is ``2 pi m / L``.
    """

    text: str
    grid_n: int = 32
    box_length: float = 1.0
    phantoms: tuple[PhantomSpec, ...] = (PhantomSpec(),)
    rho: tuple[tuple[int, int, int], ...] = ((1, 0, 0),)
    s_values: tuple[float, ...] = (8.0,)
    lambda_levels: tuple[float, ...] = (4.0, 8.0, 16.0)
    samples: int = 8
    variant: str = "a"
    eta1: tuple[float, float, float] | None = None
    pad: int = 1
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    reg_floor: float = DEFAULT_REG_FLOOR
    scatter_radius: float = 8.0
    scatter_variants: tuple[str, ...] = ("a", "b")
    scatter_method: str = "fourier"
    check_samples: int = 5
    seed: int = 0
    out: str | None = None

    @property
    def grid(self) -> Grid3:
        return Grid3(self.grid_n, self.box_length)

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


def _phantom_from_block(block: _Block, source: str, base_dir: Path) -> PhantomSpec:
    e = block.entries
    if "corpus" in e and "file" in e:
        raise ConfigError("give either 'corpus' or 'file', not both", e["file"].line, source)
    spec = PhantomSpec()
    if "corpus" in e:
        try:
            spec = load_corpus().spec(e["corpus"].value)
        except KeyError:
            raise ConfigError(f"unknown corpus phantom {e['corpus'].value!r}", e["corpus"].line, source) from None
    if "file" in e:
        path = (base_dir / e["file"].value).resolve()
        if not path.is_file():
            raise ConfigError(f"phantom file {str(path)!r} does not exist", e["file"].line, source)
        try:
            spec = spec_from_dict(json.loads(path.read_text(encoding="utf-8")))
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot read phantom file: {exc}", e["file"].line, source) from None
    updates = {}
    for key in ("omega", "eps0", "mu0"):
        if key in e:
            updates[key] = _num(e[key], source, positive=True)
    return replace(spec, **updates)


def _bump_from_block(block: _Block, source: str) -> tuple[int, Bump]:
    e = block.entries
    for key in ("target", "center", "radius", "amplitude"):
        if key not in e:
            raise ConfigError(f"[bump] is missing {key!r}", block.line, source)
    which = _num(e["phantom"], source, int) if "phantom" in e else 1
    if which not in (1, 2):
        raise ConfigError("bump 'phantom' must be 1 or 2", e["phantom"].line, source)
    center = _list(e["center"], source)
    if len(center) != 3:
        raise ConfigError("bump center needs three numbers", e["center"].line, source)
    try:
        bump = Bump(
            target=e["target"].value,
            center=tuple(center),
            radius=_num(e["radius"], source),
            amplitude=_num(e["amplitude"], source),
            smoothness=_num(e["smoothness"], source) if "smoothness" in e else 1.0,
        )
    except PhantomError as exc:
        raise ConfigError(str(exc), block.line, source) from None
    return which, bump


def parse_config(text: str, source: str = "<config>", base_dir: Path | None = None) -> RunConfig:
    """Parse config text into a :class:`RunConfig`.

    Raises
    ------
    ConfigError
        With the offending line number for syntax and value errors.
    """
    base_dir = base_dir or Path.cwd()
    blocks = _tokenize(text, source)
    by_name = {b.name: b for b in blocks if b.name not in REPEATABLE}
    kw: dict = {"text": text}

    def get(section, key):
        b = by_name.get(section)
        return b.entries.get(key) if b else None

    if (e := get("run", "seed")) is not None:
        kw["seed"] = _num(e, source, int)
        if kw["seed"] < 0:
            raise ConfigError("seed must be nonnegative", e.line, source)
    if (e := get("run", "out")) is not None:
        kw["out"] = e.value
    if (e := get("grid", "n")) is not None:
        n = _num(e, source, int, positive=True)
        if n < 8 or n & (n - 1):
            raise ConfigError(f"grid n must be a power of two >= 8, got {n}", e.line, source)
        kw["grid_n"] = n
    if (e := get("grid", "L")) is not None:
        kw["box_length"] = _num(e, source, positive=True)

    phantoms = [PhantomSpec(), None]
    for idx, name in enumerate(("phantom", "phantom2")):
        if name in by_name:
            phantoms[idx] = _phantom_from_block(by_name[name], source, base_dir)
    for b in blocks:
        if b.name == "bump":
            which, bump = _bump_from_block(b, source)
            if phantoms[which - 1] is None:
                raise ConfigError("bump refers to phantom 2 but [phantom2] is absent", b.line, source)
            spec = phantoms[which - 1]
            phantoms[which - 1] = replace(spec, bumps=spec.bumps + (bump,))
    kw["phantoms"] = tuple(p for p in phantoms if p is not None)

    if (e := get("directions", "rho")) is not None:
        rhos = []
        for chunk in e.value.split(";"):
            parts = chunk.replace(",", " ").split()
            try:
                m = tuple(int(p) for p in parts)
            except ValueError:
                raise ConfigError(f"rho entries must be integers, got {chunk.strip()!r}", e.line, source) from None
            if len(m) != 3 or m == (0, 0, 0):
                raise ConfigError(f"rho needs three integers, not all zero: {chunk.strip()!r}", e.line, source)
            rhos.append(m)
        kw["rho"] = tuple(rhos)
    if (e := get("directions", "s")) is not None:
        kw["s_values"] = tuple(_list(e, source))
        if any(s < 1 for s in kw["s_values"]):
            raise ConfigError("every s must be at least 1", e.line, source)
    if (e := get("directions", "lambda_levels")) is not None:
        kw["lambda_levels"] = tuple(_list(e, source))
        if any(v < 1 for v in kw["lambda_levels"]):
            raise ConfigError("every lambda level must be at least 1", e.line, source)
    if (e := get("directions", "samples")) is not None:
        kw["samples"] = _num(e, source, int, positive=True)
    if (e := get("directions", "variant")) is not None:
        if e.value not in ("a", "b"):
            raise ConfigError(f"variant must be 'a' or 'b', got {e.value!r}", e.line, source)
        kw["variant"] = e.value
    if (e := get("directions", "eta1")) is not None:
        v = _list(e, source)
        if len(v) != 3:
            raise ConfigError("eta1 needs three numbers", e.line, source)
        kw["eta1"] = tuple(v)
    if (e := get("directions", "pad")) is not None:
        kw["pad"] = _num(e, source, int, positive=True)
    if (e := get("solver", "tol")) is not None:
        kw["tol"] = _num(e, source, positive=True)
    if (e := get("solver", "max_iter")) is not None:
        kw["max_iter"] = _num(e, source, int, positive=True)
    if (e := get("solver", "reg_floor")) is not None:
        kw["reg_floor"] = _num(e, source, positive=True)
    if (e := get("scatter", "radius")) is not None:
        kw["scatter_radius"] = _num(e, source, positive=True)
    if (e := get("scatter", "variants")) is not None:
        vs = tuple(e.value.replace(",", " ").split())
        if not vs or any(v not in ("a", "b") for v in vs):
            raise ConfigError(f"variants must be drawn from 'a', 'b', got {e.value!r}", e.line, source)
        kw["scatter_variants"] = vs
    if (e := get("scatter", "method")) is not None:
        if e.value not in ("fourier", "pairing"):
            raise ConfigError(f"method must be 'fourier' or 'pairing', got {e.value!r}", e.line, source)
        kw["scatter_method"] = e.value
    if (e := get("checks", "samples")) is not None:
        kw["check_samples"] = _num(e, source, int, positive=True)
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {str(path)!r} does not exist")
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, source=str(path), base_dir=path.parent)


# ----------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


class Outputs:
    """Collects output files written atomically into one directory."""

    def __init__(self, root: Path):
        self.root = root
        root.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def _register(self, name: str) -> Path:
        if name not in self.files:
            self.files.append(name)
        return self.root / name

    def csv(self, name: str, header, rows) -> None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
        _atomic_write(self._register(name), buf.getvalue().encode("utf-8"))

    def field(self, name: str, data, grid: Grid3) -> None:
        write_field(self._register(name), data, grid)

    def json(self, name: str, obj) -> None:
        text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
        _atomic_write(self._register(name), text.encode("utf-8"))

    def digests(self) -> dict:
        return {
            name: hashlib.sha256((self.root / name).read_bytes()).hexdigest()
            for name in sorted(self.files)
        }


@dataclass
class Context:
    config: RunConfig
    out: Outputs
    rng: np.random.Generator
    seed: int
    checks: dict = field(default_factory=dict)

    def record(self, name: str, value: float, threshold: float, passed: bool) -> None:
        self.checks[name] = {"value": float(value), "threshold": float(threshold), "passed": bool(passed)}
        log.info("check %-28s value=%.3e threshold=%.1e %s", name, value, threshold, "pass" if passed else "FAIL")


def _build(cfg: RunConfig, spec: PhantomSpec) -> MaterialSet:
    try:
        return build_phantom(spec, cfg.grid)
    except PhantomError as exc:
        raise ConfigError(f"invalid phantom: {exc}") from None


def _pair(cfg: RunConfig):
    if len(cfg.phantoms) != 2:
        raise ConfigError("this command needs both [phantom] and [phantom2]")
    ms1, ms2 = (_build(cfg, p) for p in cfg.phantoms)
    if ms1.omega != ms2.omega:
        raise ConfigError("paired phantoms must share omega")
    return ms1, ms2


def _rho_physical(cfg: RunConfig, m) -> np.ndarray:
    return cfg.grid.lattice_frequency(m)


# ----------------------------------------------------------------------------
# commands


def cmd_phantom(ctx: Context) -> None:
    """Write ``mu``, ``eps``, ``sigma``, ``gamma``, ``alpha`` and ``beta`` per phantom."""
    cfg = ctx.config
    for i, spec in enumerate(cfg.phantoms, start=1):
        ms = _build(cfg, spec)
        d = derive(ms)
        for name, data in (
            ("mu", ms.mu),
            ("eps", ms.eps),
            ("sigma", ms.sigma),
            ("gamma", d.gamma),
            ("alpha", d.alpha),
            ("beta", d.beta),
        ):
            ctx.out.field(f"phantom{i}_{name}.cgo8", data, ms.grid)
        ctx.out.csv(
            f"phantom{i}_summary.csv",
            ["quantity", "value"],
            [
                ("omega", ms.omega),
                ("k", d.k),
                ("lipschitz_A", d.lipschitz_A),
                ("mu_min", ms.mu.min()),
                ("mu_max", ms.mu.max()),
                ("eps_min", ms.eps.min()),
                ("eps_max", ms.eps.max()),
                ("sigma_max", ms.sigma.max()),
                ("r_omega", ms.r_omega),
                ("r_omega_prime", ms.r_omega_prime),
                ("r_omega_dblprime", ms.r_omega_dblprime),
            ],
        )


def _vacuum_plane_wave(grid: Grid3, m, omega: float, polarization):
    xi = grid.lattice_frequency(m)
    e0 = np.asarray(polarization, dtype=complex)
    e0 = e0 - xi * (xi @ e0) / (xi @ xi)
    phase = grid.plane_wave(xi)
    E = e0[:, None, None, None] * phase
    H = (np.cross(xi, e0) / omega)[:, None, None, None] * phase
    return E, H


def cmd_check_ops(ctx: Context) -> None:
    """Operator invariant suite on phantom 1; fails with exit 4 on any miss."""
    cfg = ctx.config
    d = derive(_build(cfg, cfg.phantoms[0]))
    g, rng = d.grid, ctx.rng

    err = 0.0
    for _ in range(cfg.check_samples):
        m = cfg.rho[int(rng.integers(len(cfg.rho)))]
        rho = _rho_physical(cfg, m)
        s = float(rng.uniform(1.0, 64.0))
        dr = make_directions(rho, random_eta1(rho, rng), s, d.k)
        z1, z2 = dr.zeta1, dr.zeta2
        scale = max(1.0, d.k**2, s * s)
        for z in (z1, z2):
            err = max(err, abs(z @ z + d.k**2) / scale)
            err = max(err, abs(z.real @ z.imag) / scale)
            err = max(err, abs(z.real @ z.real - (z.imag @ z.imag - d.k**2)) / scale)
        err = max(err, float(np.abs(z1 + z2 - 1j * rho).max()) / np.sqrt(scale))
    ctx.record("zeta_algebra", err, THRESHOLDS["zeta_algebra"], err < THRESHOLDS["zeta_algebra"])

    anti, fac = 0.0, {"Q": 0.0, "Qtilde": 0.0}
    for _ in range(cfg.check_samples):
        w, phi = localized_random_field(g, rng), localized_random_field(g, rng)
        a = np.sum(apply_P(w, g) * phi)
        b = np.sum(w * apply_P(phi, g))
        anti = max(anti, abs(a + b) / max(abs(a) + abs(b), 1e-300))
        for kind in fac:
            fac[kind] = max(fac[kind], factorization_residual(d, w, phi, kind))
    ctx.record("p_antisymmetry", anti, THRESHOLDS["p_antisymmetry"], anti < THRESHOLDS["p_antisymmetry"])
    for kind, v in fac.items():
        ctx.record(f"factorization_{kind}", v, THRESHOLDS["factorization"], v < THRESHOLDS["factorization"])

    m = (1, 0, 0)
    omega = float(np.linalg.norm(g.lattice_frequency(m)))
    vac = derive(build_phantom(PhantomSpec(omega=omega), g))
    E, H = _vacuum_plane_wave(g, m, omega, (0.3, 1.0, 0.5j))
    r = max(maxwell_residual(E, H, vac)) / l2_norm(E, g)
    X = rescale_to_field8(E, H, vac)
    px = l2_norm(apply_Pcal(X, vac), g) / l2_norm(X, g)
    tol = THRESHOLDS["maxwell_vacuum"]
    ctx.record("maxwell_vacuum", r, tol, r < tol)
    ctx.record("pcal_vacuum", px, tol, px < tol)
    wrong = derive(build_phantom(PhantomSpec(omega=1.1 * omega), g))
    rw = max(maxwell_residual(E, H, wrong)) / l2_norm(E, g)
    lo = THRESHOLDS["maxwell_wrong_dispersion_min"]
    ctx.record("maxwell_wrong_dispersion", rw, lo, rw >= lo)


def _solve_both(ms, cfg, rho, eta1, s):
    tolkw = dict(tol=cfg.tol, max_iter=cfg.max_iter, reg_floor=cfg.reg_floor)
    Q = solve_potential(ms, "Q", cfg.pad)
    Qt = solve_potential(ms, "Qtilde", cfg.pad)
    dr = make_directions(rho, eta1, s, Q.source.k)
    out = []
    for pot, which in ((Q, "w1"), (Qt, "v2")):
        sol = solve_cgo(pot, dr, cfg.variant, which, **tolkw)
        if not sol.converged:
            raise DivergenceError(
                f"no convergence in {cfg.max_iter} iterations at s={s:g}, "
                f"eta1={np.round(dr.eta1, 6).tolist()}",
                s,
                dr.eta1,
            )
        out.append(sol)
    return dr, out


def cmd_cgo_solve(ctx: Context) -> None:
    """Solve ``R_zeta1`` and ``R_zeta2`` for every configured ``(rho, s)``."""
    cfg = ctx.config
    ms = _build(cfg, cfg.phantoms[0])
    rows = []
    idx = 0
    for m in cfg.rho:
        rho = _rho_physical(cfg, m)
        for s in cfg.s_values:
            eta1 = np.asarray(cfg.eta1) if cfg.eta1 is not None else random_eta1(rho, ctx.rng)
            dr, sols = _solve_both(ms, cfg, rho, eta1, s)
            for sol in sols:
                if sol.which == "w1":
                    diag_name, diag = "vanishing_ratio", assemble_w1(sol).vanishing_ratio
                else:
                    try:
                        diag_name, diag = "decoupling_ratio", assemble_v2(sol).decoupling_ratio
                    except ConsistencyError as exc:
                        raise InvariantFailure(str(exc)) from None
                ctx.out.field(f"remainder_{idx:03d}_{sol.which}.cgo8", sol.remainder, sol.grid)
                rows.append(
                    (
                        idx, *m, s, *dr.eta1, sol.which, cfg.variant, sol.iterations,
                        sol.converged, sol.contraction_factor, sol.substitution_residual,
                        sol.zero_mode_defect, sol.regularized_modes, sol.xnorm_half,
                        diag_name, diag,
                    )
                )
            idx += 1
    ctx.out.csv(
        "cgo_diagnostics.csv",
        [
            "index", "m1", "m2", "m3", "s", "eta1x", "eta1y", "eta1z", "which", "variant",
            "iterations", "converged", "contraction_factor", "substitution_residual",
            "zero_mode_defect", "excluded_modes", "xnorm_half", "diagnostic", "diagnostic_value",
        ],
        rows,
    )


def cmd_decay_scan(ctx: Context) -> None:
    """Decay table per quantity; exit 4 unless every mean strictly decreases."""
    cfg = ctx.config
    ms = _build(cfg, cfg.phantoms[0])
    rho = _rho_physical(cfg, cfg.rho[0])
    table: DecayTable = decay_scan(
        ms, cfg.variant, rho, cfg.lambda_levels, cfg.samples, ctx.rng,
        pad=cfg.pad, tol=cfg.tol, max_iter=cfg.max_iter, reg_floor=cfg.reg_floor,
    )
    header = ["level", "sample_index", "s", "eta1x", "eta1y", "eta1z", "value"]
    for q in table.QUANTITIES:
        ctx.out.csv(
            f"decay_{q}.csv",
            header,
            [(r.level, r.sample_index, r.s, *r.eta1, getattr(r, q)) for r in table.rows],
        )
    summary = []
    for q in table.QUANTITIES:
        means = table.means(q)
        summary.extend((q, lev, mean) for lev, mean in zip(table.levels, means))
        worst = max((b / a for a, b in zip(means, means[1:])), default=0.0)
        ctx.record(f"decreasing_{q}", worst, 1.0, worst < 1.0)
    ctx.out.csv("decay_means.csv", ["quantity", "level", "mean"], summary)


def cmd_scatter_scan(ctx: Context) -> None:
    """Limit functional over the lattice ball; equal pairs must give zero."""
    cfg = ctx.config
    ms1, ms2 = _pair(cfg)
    d1, d2 = derive(ms1), derive(ms2)
    samples = scatter_scan(d1, d2, cfg.scatter_radius, cfg.scatter_variants, cfg.scatter_method)
    ctx.out.csv(
        "scatter.csv",
        ["m1", "m2", "m3", "variant", "re", "im"],
        [(*smp.rho, smp.variant, smp.t_value.real, smp.t_value.imag) for smp in samples],
    )
    mx = max(abs(smp.t_value) for smp in samples)
    log.info("max |t| = %.6e over %d samples", mx, len(samples))
    if cfg.phantoms[0] == cfg.phantoms[1]:
        tol = THRESHOLDS["equal_pair_max_abs_t"]
        ctx.record("equal_pair_max_abs_t", mx, tol, mx < tol)
    else:
        ctx.checks["max_abs_t"] = {"value": float(mx)}


def cmd_uniqueness(ctx: Context) -> None:
    """Coefficient fields and the chain-consistency report for a pair."""
    cfg = ctx.config
    ms1, ms2 = _pair(cfg)
    d1, d2 = derive(ms1), derive(ms2)
    co = assemble_uniqueness_coeffs(d1, d2)
    for name in ("V", "W", "a", "b", "c", "d", "indicator"):
        ctx.out.field(f"coeff_{name}.cgo8", getattr(co, name), co.grid)
    f = np.sqrt(d2.gamma) - np.sqrt(d1.gamma)
    gg = np.sqrt(ms2.mu) - np.sqrt(ms1.mu)
    r_f, r_g = schrodinger_system_residual(f, gg, co)
    gap_a, gap_b = equivalence_residual(d1, d2)
    samples = scatter_scan(d1, d2, cfg.scatter_radius, ("a", "b"), "fourier")
    t_a = max(abs(s.t_value) for s in samples if s.variant == "a")
    t_b = max(abs(s.t_value) for s in samples if s.variant == "b")
    g = co.grid
    ra = l2_norm(residual_alpha_field(d1, d2), g)
    rb = l2_norm(residual_beta_field(d1, d2), g)
    ctx.out.csv(
        "uniqueness_report.csv",
        ["quantity", "value"],
        [
            ("residual_alpha_l2", ra),
            ("residual_beta_l2", rb),
            ("schrodinger_f_l2", r_f),
            ("schrodinger_g_l2", r_g),
            ("equivalence_gap_alpha", gap_a),
            ("equivalence_gap_beta", gap_b),
            ("max_abs_t_a", t_a),
            ("max_abs_t_b", t_b),
        ],
    )
    scatter_zero = max(t_a, t_b) < THRESHOLDS["equal_pair_max_abs_t"]
    schr_zero = max(r_f, r_g) < THRESHOLDS["schrodinger_zero"]
    ctx.record("chain_consistency", float(scatter_zero != schr_zero), 0.5, scatter_zero == schr_zero)


COMMANDS = {
    "phantom": cmd_phantom,
    "check-ops": cmd_check_ops,
    "cgo-solve": cmd_cgo_solve,
    "decay-scan": cmd_decay_scan,
    "scatter-scan": cmd_scatter_scan,
    "uniqueness": cmd_uniqueness,
}


# ----------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cgolab", description="CGO and scattering experiment runner")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="run configuration file")
    p.add_argument("--out", help="output directory (overrides [run] out)")
    p.add_argument("--seed", type=int, help="RNG seed (overrides [run] seed)")
    p.add_argument("--threads", type=int, default=1, help="FFT worker threads")
    p.add_argument("--verbose", action="store_true", help="log progress to stderr")
    return p


def _versions() -> dict:
    return {
        "cgolab": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config)
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    seed = args.seed if args.seed is not None else cfg.seed
    out_dir = Path(args.out or cfg.out or "cgolab_out")
    set_workers(args.threads)
    ctx = Context(cfg, Outputs(out_dir), np.random.default_rng(seed), seed)

    status, code, message = "ok", EXIT_OK, None
    try:
        COMMANDS[args.command](ctx)
        failed = [k for k, v in ctx.checks.items() if v.get("passed") is False]
        if failed:
            status, code, message = "invariant_failure", EXIT_INVARIANT, "failed checks: " + ", ".join(failed)
    except ConfigError as exc:
        status, code, message = "config_error", EXIT_CONFIG, str(exc)
    except DivergenceError as exc:
        status, code, message = "divergence", EXIT_DIVERGENCE, str(exc)
    except InvariantFailure as exc:
        status, code, message = "invariant_failure", EXIT_INVARIANT, str(exc)

    if message:
        print(f"{status}: {message}", file=sys.stderr)
    ctx.out.json(
        "manifest.json",
        {
            "command": args.command,
            "status": status,
            "exit_code": code,
            "message": message,
            "config_sha256": cfg.sha256,
            "config_text": cfg.text,
            "seed": seed,
            "threads": args.threads,
            "versions": _versions(),
            "thresholds": {
                **THRESHOLDS,
                "solver_tol": cfg.tol,
                "solver_max_iter": cfg.max_iter,
                "solver_reg_floor": cfg.reg_floor,
            },
            "checks": ctx.checks,
            "outputs": ctx.out.digests(),
        },
    )
    return code


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
