import csv
import shutil
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from minkbvp.cli import run_command
from minkbvp.config import ConfigError, load_config, parse_config, serialize
from minkbvp.shooting import BoundaryCondition

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = """
weight { T = 2; breaks = [1]; values = [1, -10] }
nonlinearity { kind = exp_power; p = 2 }
bc = neumann
"""


def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.bc is BoundaryCondition.NEUMANN
    assert cfg.weight.breaks == (1.0,) and cfg.weight.values == (1.0, -10.0)
    assert cfg.nonlinearity.lam == 1.0 and cfg.nonlinearity.kappa is None
    assert cfg.solver.rtol == 1e-10 and cfg.solver.extension == "negative_part"
    assert cfg.scan == (1e-3, 12.0, 2000)
    prob = cfg.build_problem()
    assert prob.weight(1.5) == -10.0 and prob.nonlin(1.0) == pytest.approx(1.718281828459045)


def test_multiline_blocks_and_comments():
    cfg = parse_config("""
    # leading comment
    weight {
        T = 3   # inline
        breaks = [1, 2]
        values = [2, -1, -1]
    }
    nonlinearity { kind = power_exp; p = 2.5; kappa = 3; lambda = 0.5 }
    solver { extension = zero }
    output { samples = 11 }
    """)
    assert cfg.weight.T == 3.0 and cfg.nonlinearity.lam == 0.5
    assert cfg.solver.extension == "zero" and cfg.output.samples == 11


@pytest.mark.parametrize("text, key, message", [
    (MINIMAL.replace("p = 2", "p = 0.5"), "p", "p must exceed 1"),
    ("nonlinearity { kind = power; p = 2 }", "weight", "missing block 'weight'"),
    (MINIMAL + "solver { tol = 1 }", "tol", "unknown key 'tol'"),
    (MINIMAL + "colour = red", "colour", "unknown key 'colour'"),
    (MINIMAL.replace("values = [1, -10]", "values = [1]"), "values", "values needs 2"),
    (MINIMAL.replace("T = 2", "T = -2"), "T", "T must be positive"),
    (MINIMAL.replace("exp_power", "cubic"), "kind", "kind must be one of"),
    (MINIMAL + "solver { rtol = abc }", "rtol", "rtol must be a number"),
    (MINIMAL + "solver { extension = odd }", "extension", "extension must be one of"),
    (MINIMAL + "bc = dirichlet", "bc", "duplicate key"),
    ("weight { T = 2", "weight", "not closed"),
])
def test_rejections_name_key(text, key, message):
    with pytest.raises(ConfigError, match=message) as exc:
        parse_config(text)
    assert exc.value.key == key


def test_error_reports_line():
    with pytest.raises(ConfigError, match="^line 4: ") as exc:
        parse_config("weight { T = 2; breaks = [1]; values = [1, -10] }\n"
                     "nonlinearity {\n kind = power\n p = 0.5\n}\n")
    assert exc.value.line == 4


def test_power_exp_needs_kappa():
    with pytest.raises(ConfigError, match="kappa"):
        parse_config(MINIMAL.replace("exp_power", "power_exp"))


def test_samples_file(tmp_path):
    (tmp_path / "a.txt").write_text("0 1\n1 1\n1.5 -2\n2 -2\n", encoding="utf-8")
    text = "weight { T = 2; samples_file = a.txt }\nnonlinearity { kind = power; p = 2 }\n"
    cfg = parse_config(text, base_dir=tmp_path)
    assert cfg.build_problem().weight(1.25) == pytest.approx(-0.5)
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config(text.replace("a.txt", "b.txt"), base_dir=tmp_path)


def test_round_trip_shipped_configs():
    for path in CONFIGS.glob("*.cfg"):
        cfg = load_config(path)
        assert parse_config(serialize(cfg)) == cfg


_num = st.floats(0.01, 50, allow_nan=False).map(lambda x: round(x, 6))


@settings(max_examples=50, deadline=None)
@given(T=_num, vals=st.lists(st.floats(-20, 20, allow_nan=False), min_size=1, max_size=5),
       kind=st.sampled_from(["power", "exp_power", "power_exp"]), p=st.floats(1.01, 6),
       kappa=st.floats(0.01, 100), lam=st.floats(1e-4, 10), n=st.integers(2, 5000),
       ext=st.sampled_from(["negative_part", "zero", "natural"]))
def test_round_trip(T, vals, kind, p, kappa, lam, n, ext):
    k = len(vals)
    breaks = ", ".join(repr(T * j / k) for j in range(1, k))
    text = (f"weight {{ T = {T!r}; breaks = [{breaks}]; values = [{', '.join(map(repr, vals))}] }}\n"
            f"nonlinearity {{ kind = {kind}; p = {p!r}; lambda = {lam!r}"
            + (f"; kappa = {kappa!r}" if kind == "power_exp" else "") + " }\n"
            f"solver {{ n_scan = {n}; extension = {ext} }}\n")
    cfg = parse_config(text)
    again = parse_config(serialize(cfg))
    assert again == cfg
    assert serialize(again) == serialize(cfg)


# -- command line ------------------------------------------------------------------

@pytest.fixture()
def cfg_dir(tmp_path):
    for p in CONFIGS.glob("*.cfg"):
        shutil.copy(p, tmp_path)
    return tmp_path


def _read(path):
    with open(path, encoding="utf-8") as fh:
        return [r for r in csv.reader(fh) if r and not r[0].startswith("#")]


def test_cli_solve(cfg_dir, capsys):
    out = cfg_dir / "res"
    code = run_command(["solve", "--config", str(cfg_dir / "fig1.cfg"), "--lambda", "1",
                        "--out", str(out), "--trajectories"])
    assert code == 0
    rows = _read(out / "solutions.csv")
    assert rows[0][:2] == ["index", "u0"] and len(rows) == 2
    assert float(rows[1][1]) == pytest.approx(0.99166876, rel=1e-7)
    traj = _read(out / "solution_000.csv")
    assert traj[0] == ["t", "u", "uprime", "v"] and len(traj) == 202
    assert "1 solution(s)" in capsys.readouterr().out


def test_cli_solve_default_output_dir(cfg_dir):
    assert run_command(["solve", "--config", str(cfg_dir / "fig2.cfg")]) == 0
    assert len(_read(cfg_dir / "out" / "fig2" / "solutions.csv")) == 3


def test_cli_no_solution(cfg_dir):
    # a positive mean weight has no positive Neumann solution
    text = (cfg_dir / "fig1.cfg").read_text(encoding="utf-8").replace("[1, -10]", "[1, -0.5]")
    (cfg_dir / "pos.cfg").write_text(text, encoding="utf-8")
    assert run_command(["solve", "--config", str(cfg_dir / "pos.cfg"), "--out", str(cfg_dir)]) == 1


def test_cli_certify_failure_record(cfg_dir, capsys):
    report = cfg_dir / "cert.txt"
    code = run_command(["certify", "--config", str(cfg_dir / "fig2.cfg"), "--kappa", "30",
                        "--report", str(report)])
    assert code == 0
    text = report.read_text(encoding="utf-8")
    assert "failed_condition = g_SE" in text and "constants_status = failed" in text
    assert "degree_f_sharp = 1" in text
    assert text == capsys.readouterr().out


def test_cli_certify_constants(cfg_dir, capsys):
    assert run_command(["certify", "--config", str(cfg_dir / "fig2.cfg"), "--kappa", "45"]) == 0
    lines = dict(l.split(" = ", 1) for l in capsys.readouterr().out.splitlines())
    assert lines["constants_status"] == "ok"
    assert float(lines["R"]) == pytest.approx(3.46875)
    assert float(lines["K"]) == 40.0


def test_cli_branch(cfg_dir, capsys):
    out = cfg_dir / "b"
    code = run_command(["branch", "--config", str(cfg_dir / "fig1.cfg"), "--param", "lambda",
                        "--start", "3", "--min", "1", "--max", "3", "--out", str(out)])
    assert code == 0
    rows = _read(out / "branch.csv")
    assert rows[0][:3] == ["arclength_index", "param", "u0"]
    assert {len(r) for r in rows} == {6}
    assert "left parameter range" in capsys.readouterr().out


def test_cli_bad_config(cfg_dir, capsys):
    (cfg_dir / "bad.cfg").write_text(MINIMAL.replace("p = 2", "p = 0.5"), encoding="utf-8")
    assert run_command(["solve", "--config", str(cfg_dir / "bad.cfg")]) == 2
    assert "p must exceed 1" in capsys.readouterr().err
    assert run_command(["solve", "--config", str(cfg_dir / "missing.cfg")]) == 2
    assert run_command(["solve", "--config", str(cfg_dir / "fig1.cfg"), "--kappa", "2"]) == 2


def test_cli_usage_errors():
    assert run_command(["frobnicate"]) == 2
    assert run_command(["solve"]) == 2
    assert run_command(["reproduce-figure", "4"]) == 2
