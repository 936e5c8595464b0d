import json

import numpy as np
import pytest

from conftest import make_spec
from fracrb import cli
from fracrb.config import OUTPUT_ENV, ConfigError, parse_config
from fracrb.fom_solver import build_operators
from fracrb.problems import BUILTINS, ExpressionError, compile_expression, evaluate_desired_state
from fracrb.rb_offline import RbSpace, greedy_train, project_operators
from fracrb.storage import StorageError, load_rb_space, persist_rb_space

SMALL = "problem = example1\nK = 8\nn_el = 12\nn_train = 5\neps = 1e-7\n"


def test_builtin_defaults():
    cfg = parse_config("problem = example1")
    assert (cfg.alpha, cfg.gamma, cfg.T) == (0.7, 1e-6, 1.0)
    cfg2 = parse_config("problem = example2")
    assert cfg2.alpha == 0.99 and cfg2.gamma == 1e-8
    assert parse_config("problem = example3").gamma == 1e-7
    assert parse_config("problem = example3\ngamma = 1e-3").gamma == 1e-3


@pytest.mark.parametrize("text,message", [
    ("problem = example1\ngamma = 0", "gamma must be positive"),
    ("problem = example9", "unknown builtin id"),
    ("K = 4", "problem"),
    ("problem = example1\nbogus = 1", "unknown key"),
    ("problem = example1\nK = 2.5", "K"),
    ("problem = example1\nalpha = 1.5", "alpha"),
    ("problem = x*t\nalpha = 0.5", "gamma"),
    ("problem = __import__('os')\nalpha = 0.5\ngamma = 1", "problem"),
    ("problem = example1\nindicator = magic", "indicator"),
])
def test_config_errors(text, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(text)


def test_config_from_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nproblem = example2\nmu = 1.25  # inline\n")
    cfg = parse_config(str(path))
    assert cfg.problem == "example2" and cfg.mu == 1.25


def test_output_env_override(monkeypatch, tmp_path):
    cfg = parse_config("problem = example1\noutput_dir = here")
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    assert cfg.output_path() == tmp_path


def test_desired_state_boundary_zeros():
    t = np.linspace(0, 1, 7)
    for problem in ("example1", "example2"):
        for x in (0.0, 1.0):
            np.testing.assert_allclose(evaluate_desired_state(problem, x, t, 1e-3), 0.0, atol=1e-14)


def test_example1_formula_point():
    # x = 0.5, t = 0.5, gamma = 1: q = -1/4
    q = -0.25
    expected = 2 * (-0.5) ** 3 * q + 12 * 0.5 * 0.25 * q + 3 * 0.25 * (-1) * q + 0.25 * 0.125 * q
    assert evaluate_desired_state("example1", 0.5, 0.5, 1.0) == pytest.approx(expected, rel=1e-14)
    assert BUILTINS["example1"].alpha == 0.7


def test_inline_expression():
    f = compile_expression("sin(pi*x)*t + gamma")
    assert f(0.5, 2.0, 0.1) == pytest.approx(2.1)
    with pytest.raises(ExpressionError):
        compile_expression("x.__class__")
    with pytest.raises(ExpressionError):
        compile_expression("open('f')")


def test_persist_roundtrip(tmp_path, small_ex1):
    spec, ops = small_ex1
    space, rb, _ = greedy_train(spec, [0.6, 1.4], eps=1e-300, N_max=2, pod_tol=1e-6, ops=ops)
    path = persist_rb_space(space, rb, tmp_path / "s.npz", spec)
    loaded, rb2 = load_rb_space(path, spec)
    np.testing.assert_array_equal(loaded.Z_y, space.Z_y)
    np.testing.assert_array_equal(rb2.B_N, rb.B_N)
    assert loaded.S_N == space.S_N
    with pytest.raises(StorageError, match="different problem"):
        load_rb_space(path, make_spec(K=spec.K, n_el=spec.mesh.n_el * 2))


def test_persist_empty_space(tmp_path, small_ex1):
    spec, ops = small_ex1
    empty = RbSpace.empty(ops.n_dof)
    path = persist_rb_space(empty, project_operators(empty, ops), tmp_path / "e.npz", spec)
    assert load_rb_space(path, spec)[0].N == 0


def test_load_failures(tmp_path):
    with pytest.raises(StorageError, match="no trained"):
        load_rb_space(tmp_path / "missing.npz")
    bad = tmp_path / "bad.npz"
    bad.write_bytes(b"not a zip")
    with pytest.raises(StorageError, match="corrupt"):
        load_rb_space(bad)


def _run(tmp_path, monkeypatch, command, text=SMALL):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(text)
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "out"))
    return cli.main([command, str(cfg_path)])


def test_cli_pipeline(tmp_path, monkeypatch):
    out = tmp_path / "out"
    assert _run(tmp_path, monkeypatch, "solve-rb") == cli.EXIT_IO  # not trained yet
    assert _run(tmp_path, monkeypatch, "solve-fom") == 0
    rows = (out / "fom_solution.csv").read_text().splitlines()
    assert rows[1].startswith("slot,t_state")
    assert len(rows) == 2 + 8 * 11
    meta = json.loads((out / "fom_solution.json").read_text())
    assert "J" in meta and "timings" in meta and meta["config"]["problem"] == "example1"
    for command in ("train", "solve-rb", "compare", "bounds"):
        assert _run(tmp_path, monkeypatch, command) == 0, command
    assert len((out / "compare.csv").read_text().splitlines()) == 2 + 8
    assert json.loads((out / "bounds.json").read_text())["bound_valid"] is True
    assert (out / "greedy_report.txt").read_text().startswith("# greedy report")


def test_cli_deterministic(tmp_path, monkeypatch):
    out = tmp_path / "out"
    contents = []
    for _ in range(2):
        assert _run(tmp_path, monkeypatch, "solve-fom") == 0
        assert _run(tmp_path, monkeypatch, "train") == 0
        assert _run(tmp_path, monkeypatch, "compare") == 0
        contents.append([(out / f).read_bytes() for f in ("fom_solution.csv", "greedy_report.txt", "compare.csv")])
    # the greedy report carries wall-clock seconds; compare the deterministic columns
    a, b = contents
    assert a[0] == b[0] and a[2] == b[2]
    strip = lambda raw: [line.rsplit(b",", 1)[0] for line in raw.splitlines()]  # noqa: E731
    assert strip(a[1]) == strip(b[1])


def test_cli_caputo_study(tmp_path, monkeypatch):
    assert _run(tmp_path, monkeypatch, "caputo-study") == 0
    lines = (tmp_path / "out" / "caputo_study.csv").read_text().splitlines()
    assert lines[1] == "alpha,K,max_error,fitted_order"
    for line in lines[2:]:
        alpha, _, _, order = map(float, line.split(","))
        assert abs(order - (2 - alpha)) <= 0.15


def test_cli_exit_codes(tmp_path, monkeypatch):
    assert _run(tmp_path, monkeypatch, "solve-fom", "problem = example1\ngamma = 0\n") == cli.EXIT_CONFIG
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "o2"))
    assert cli.main(["solve-fom", str(tmp_path / "nope.cfg")]) == cli.EXIT_IO
    assert cli.main(["caputo-study", "problem = example2"]) == 0
    assert _run(tmp_path, monkeypatch, "train") == 0
    other = SMALL.replace("n_el = 12", "n_el = 14")
    assert _run(tmp_path, monkeypatch, "solve-rb", other) == cli.EXIT_IO
