import csv
import json

import pytest

from cgolab.cli import (
    EXIT_CONFIG,
    EXIT_DIVERGENCE,
    EXIT_INVARIANT,
    EXIT_OK,
    ConfigError,
    parse_config,
    run,
)


def _write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def _run(tmp_path, command, text, *extra, out="out"):
    cfg = _write(tmp_path, text)
    return run([command, "--config", str(cfg), "--out", str(tmp_path / out), *extra])


def _manifest(tmp_path, out="out"):
    return json.loads((tmp_path / out / "manifest.json").read_text())


def test_parse_full_config():
    cfg = parse_config(
        """
        # comment
        [run]
        seed = 11
        [grid]
        n = 16
        L = 2.0
        [phantom]
        omega = 3
        [bump]
        target = mu
        center = 0, 0, 0.05
        radius = 0.2
        amplitude = 0.1
        smoothness = 2
        [phantom2]
        corpus = background
        [bump]
        phantom = 2
        target = eps
        center = 0 0 0
        radius = 0.1
        amplitude = 0.2
        [directions]
        rho = 1 0 0; 0, 1, 2
        s = 8, 16
        lambda_levels = 4 8
        samples = 2
        variant = b
        eta1 = 0 1 0
        pad = 2
        [solver]
        tol = 1e-9
        max_iter = 20
        reg_floor = 1e-7
        [scatter]
        radius = 3
        variants = a
        method = pairing
        """
    )
    assert cfg.seed == 11 and cfg.grid_n == 16 and cfg.box_length == 2.0
    assert cfg.phantoms[0].omega == 3 and cfg.phantoms[0].bumps[0].center == (0, 0, 0.05)
    assert cfg.phantoms[1].bumps[0].target == "eps" and cfg.phantoms[1].omega == 10.0
    assert cfg.rho == ((1, 0, 0), (0, 1, 2))
    assert cfg.s_values == (8.0, 16.0) and cfg.lambda_levels == (4.0, 8.0)
    assert cfg.variant == "b" and cfg.eta1 == (0.0, 1.0, 0.0) and cfg.pad == 2
    assert (cfg.tol, cfg.max_iter, cfg.reg_floor) == (1e-9, 20, 1e-7)
    assert cfg.scatter_variants == ("a",) and cfg.scatter_method == "pairing"
    assert len(cfg.sha256) == 64


@pytest.mark.parametrize(
    "text,line,match",
    [
        ("[grid]\nn = 30\n", 2, "power of two"),
        ("[grid]\nn = abc\n", 2, "cannot read"),
        ("[nope]\n", 1, "unknown section"),
        ("[grid]\nsize = 3\n", 2, "unknown key"),
        ("[grid]\nn = 16\nn = 32\n", 3, "duplicate"),
        ("[grid]\n[grid]\n", 2, "twice"),
        ("n = 16\n", 1, "outside"),
        ("[grid]\njust text\n", 2, "key = value"),
        ("[grid\n", 1, "malformed"),
        ("[directions]\n\nrho = 1 0\n", 3, "three integers"),
        ("[directions]\nrho = 0 0 0\n", 2, "not all zero"),
        ("[directions]\nvariant = c\n", 2, "variant"),
        ("[directions]\ns = 0.5\n", 2, "at least 1"),
        ("[solver]\ntol = -1\n", 2, "positive"),
        ("[solver]\ntol = nan\n", 2, "non-finite"),
        ("[bump]\ntarget = mu\n", 1, "missing"),
        ("[bump]\nphantom = 2\ntarget = mu\ncenter = 0 0 0\nradius = .1\namplitude = 1\n", 1, "phantom2"),
        ("[bump]\ntarget = chi\ncenter = 0 0 0\nradius = .1\namplitude = 1\n", 1, "target"),
        ("[phantom]\ncorpus = nothing\n", 2, "unknown corpus"),
        ("[phantom]\nfile = missing.json\n", 2, "does not exist"),
        ("[scatter]\nmethod = fast\n", 2, "method"),
        ("[grid]\nn =\n", 2, "empty"),
    ],
)
def test_config_errors_carry_line_numbers(text, line, match):
    with pytest.raises(ConfigError, match=match) as info:
        parse_config(text, source="t.cfg")
    assert info.value.line == line
    assert f"t.cfg:{line}:" in str(info.value)


def test_phantom_file_is_loaded_relative_to_config(tmp_path):
    (tmp_path / "ph.json").write_text(
        json.dumps({"omega": 2.0, "bumps": [{"target": "mu", "center": [0, 0, 0], "radius": 0.1, "amplitude": 0.5}]})
    )
    cfg_path = _write(tmp_path, "[phantom]\nfile = ph.json\nmu0 = 1.5\n")
    from cgolab.cli import load_config

    cfg = load_config(cfg_path)
    assert cfg.phantoms[0].omega == 2.0 and cfg.phantoms[0].mu0 == 1.5
    assert cfg.phantoms[0].bumps[0].amplitude == 0.5


def test_missing_config_file_is_config_error(tmp_path, capsys):
    code = run(["phantom", "--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    assert "does not exist" in capsys.readouterr().err


def test_invalid_phantom_is_config_error(tmp_path):
    text = "[bump]\ntarget = mu\ncenter = 0.3 0 0\nradius = 0.1\namplitude = 0.1\n"
    assert _run(tmp_path, "phantom", text) == EXIT_CONFIG
    assert _manifest(tmp_path)["status"] == "config_error"


def test_check_ops_on_background_passes(tmp_path):
    assert _run(tmp_path, "check-ops", "[phantom]\nomega = 10\n[checks]\nsamples = 2\n") == EXIT_OK
    man = _manifest(tmp_path)
    assert man["status"] == "ok" and man["exit_code"] == 0
    assert all(c["passed"] for c in man["checks"].values())
    assert {"config_sha256", "seed", "versions", "thresholds", "outputs"} <= set(man)
    assert set(man["versions"]) >= {"cgolab", "numpy", "scipy"}


def test_phantom_command_writes_fields(tmp_path):
    assert _run(tmp_path, "phantom", "[phantom]\ncorpus = mixed\n") == EXIT_OK
    from cgolab.fields import read_field

    mu, grid = read_field(tmp_path / "out" / "phantom1_mu.cgo8")
    assert grid.n == 32 and abs(mu.real.max() - 1.02) < 1e-12
    alpha, _ = read_field(tmp_path / "out" / "phantom1_alpha.cgo8")
    assert alpha.shape == (3, 32, 32, 32)
    assert "phantom1_summary.csv" in _manifest(tmp_path)["outputs"]


EQUAL_PAIR = "[phantom]\ncorpus = mixed\n[phantom2]\ncorpus = mixed\n"


def test_scatter_scan_equal_pair(tmp_path):
    assert _run(tmp_path, "scatter-scan", EQUAL_PAIR) == EXIT_OK
    raw = (tmp_path / "out" / "scatter.csv").read_bytes()
    assert raw.startswith(b"m1,m2,m3,variant,re,im\r\n")
    rows = list(csv.DictReader((tmp_path / "out" / "scatter.csv").open(newline="")))
    assert len(rows) == 2 * 2109
    assert max(abs(complex(float(r["re"]), float(r["im"]))) for r in rows) < 1e-10
    assert _manifest(tmp_path)["checks"]["equal_pair_max_abs_t"]["passed"]


def test_scatter_scan_needs_two_phantoms(tmp_path):
    assert _run(tmp_path, "scatter-scan", "[phantom]\ncorpus = mixed\n") == EXIT_CONFIG


def test_uniqueness_reports_chain(tmp_path):
    text = "[phantom]\ncorpus = background\n[phantom2]\ncorpus = eps_contrast\n"
    assert _run(tmp_path, "uniqueness", text) == EXIT_OK
    rows = dict(csv.reader((tmp_path / "out" / "uniqueness_report.csv").open(newline="")))
    assert float(rows["max_abs_t_a"]) > 1e-3
    assert float(rows["schrodinger_f_l2"]) > 1e-6
    for name in ("V", "W", "a", "b", "c", "d", "indicator"):
        assert (tmp_path / "out" / f"coeff_{name}.cgo8").exists()


def test_uniqueness_equal_pair(tmp_path):
    assert _run(tmp_path, "uniqueness", EQUAL_PAIR) == EXIT_OK
    assert _manifest(tmp_path)["checks"]["chain_consistency"]["passed"]


def test_cgo_solve_diagnostics(tmp_path):
    text = "[phantom]\ncorpus = mu_bump\n[directions]\nrho = 1 0 0\ns = 8\n"
    assert _run(tmp_path, "cgo-solve", text) == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "out" / "cgo_diagnostics.csv").open(newline="")))
    assert [r["which"] for r in rows] == ["w1", "v2"]
    assert all(r["converged"] == "true" for r in rows)
    assert float(rows[1]["diagnostic_value"]) < 1e-8
    assert (tmp_path / "out" / "remainder_000_w1.cgo8").exists()


def test_cgo_solve_divergence_exit_code(tmp_path, capsys):
    text = "[phantom]\ncorpus = strong_mu_bump\n[directions]\ns = 1\n"
    assert _run(tmp_path, "cgo-solve", text) == EXIT_DIVERGENCE
    err = capsys.readouterr().err
    assert "s=1" in err and "eta1=" in err
    assert _manifest(tmp_path)["status"] == "divergence"


def test_cgo_solve_max_iter_is_divergence(tmp_path):
    text = "[phantom]\ncorpus = mu_bump\n[solver]\nmax_iter = 2\n"
    assert _run(tmp_path, "cgo-solve", text) == EXIT_DIVERGENCE


def test_invariant_failure_exit_code(tmp_path):
    # an under-resolved strong bump breaks the 1e-8 factorization check
    text = (
        "[grid]\nn = 16\n[phantom]\nomega = 3\n"
        "[bump]\ntarget = mu\ncenter = 0 0 0\nradius = 0.19\namplitude = 0.5\nsmoothness = 2\n"
        "[checks]\nsamples = 1\n"
    )
    assert _run(tmp_path, "check-ops", text) == EXIT_INVARIANT
    man = _manifest(tmp_path)
    assert man["status"] == "invariant_failure" and not man["checks"]["factorization_Q"]["passed"]


def test_decay_scan_outputs(tmp_path):
    text = "[phantom]\ncorpus = mu_bump\n[directions]\nlambda_levels = 4, 16\nsamples = 1\n"
    assert _run(tmp_path, "decay-scan", text) == EXIT_OK
    for q in ("r_xnorm_sq", "s_xnorm_sq", "qa_xnorm_sq"):
        rows = list(csv.DictReader((tmp_path / "out" / f"decay_{q}.csv").open(newline="")))
        assert list(rows[0]) == ["level", "sample_index", "s", "eta1x", "eta1y", "eta1z", "value"]
        assert len(rows) == 2


def test_seed_override_and_determinism(tmp_path):
    text = "[phantom]\ncorpus = mu_bump\n[directions]\nrho = 0 1 1\ns = 8\n"
    cfg = _write(tmp_path, text)
    outs = []
    for name, seed in (("a", "5"), ("b", "5"), ("c", "6")):
        assert run(["cgo-solve", "--config", str(cfg), "--out", str(tmp_path / name), "--seed", seed]) == 0
        outs.append((tmp_path / name / "cgo_diagnostics.csv").read_bytes())
    assert outs[0] == outs[1] and outs[0] != outs[2]
    assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()
    assert _manifest(tmp_path, "a")["seed"] == 5


def test_threads_flag_validation(tmp_path):
    cfg = _write(tmp_path, "[phantom]\n")
    assert run(["phantom", "--config", str(cfg), "--out", str(tmp_path / "o"), "--threads", "0"]) == EXIT_CONFIG
