import csv
import io
import os
import subprocess
import sys

import pytest

from household_merton import allocation, cli
from household_merton.core_model import AgentSpec, ProblemSpec

BASE = """r = 0.048
sigma = 0.15
lambda_theta = 0.2712
sigma_theta = 0.0655
theta_bar = 0.9456
theta0 = 0.9456
T = 1
x = 1
gamma.1 = -9
rho.1 = 0.01
gamma.2 = -3
rho.2 = 0.01
gamma.3 = -2
rho.3 = 0.01
role.3 = terminal
"""


def write(tmp_path, text, name="run.conf"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_default_config_allocate(capsys):
    code, out, _ = run(["allocate"], capsys)
    assert code == 0
    row = table(out)[0]
    assert float(row["y"]) == 3.0
    # at y = 3 the more risk-averse consumer holds more
    assert float(row["x1"]) > float(row["x2"])
    assert float(row["residual"]) <= 1e-10


def test_allocate_zero_wealth(capsys):
    code, out, _ = run(["allocate", "--x", "0"], capsys)
    assert code == 0
    row = table(out)[0]
    assert row["x1"] == row["x2"] == row["x_terminal"] == "0"
    assert row["y"] == "inf"


def test_missing_key(tmp_path, capsys):
    cfg = write(tmp_path, BASE.replace("lambda_theta = 0.2712\n", ""))
    code, _, err = run(["allocate", "--config", cfg], capsys)
    assert code == 2 and "lambda_theta" in err


def test_unknown_key(tmp_path, capsys):
    cfg = write(tmp_path, BASE + "kappa = 2\n")
    code, _, err = run(["allocate", "--config", cfg], capsys)
    assert code == 2 and "kappa" in err


def test_bad_value_and_validation(tmp_path, capsys):
    assert run(["allocate", "--config", write(tmp_path, BASE.replace("x = 1", "x = abc"))], capsys)[0] == 2
    code, _, err = run(["allocate", "--config", write(tmp_path, BASE.replace("gamma.1 = -9", "gamma.1 = 0"))],
                       capsys)
    assert code == 2 and "gamma must be nonzero" in err


def test_config_parsing_details():
    raw = cli.parse_config_text("a = 1  # note\n\n# whole line\nb=2\n")
    assert raw == {"a": "1", "b": "2"}
    with pytest.raises(cli.ConfigError):
        cli.parse_config_text("a = 1\na = 2\n")
    with pytest.raises(cli.ConfigError):
        cli.parse_config_text("no equals sign\n")
    cfg = cli.build_config(cli.parse_config_text(BASE.replace("role.3 = terminal\n", "")))
    assert cfg.spec.terminal.gamma == -2.0 and len(cfg.spec.consumers) == 2


def test_sweep_x(tmp_path, capsys):
    out = tmp_path / "s.csv"
    code, _, _ = run(["sweep", "--var", "x", "--from", "1", "--to", "1000", "--steps", "7",
                      "--log-grid", "--out", str(out)], capsys)
    assert code == 0
    text = out.read_text()
    assert text.splitlines()[0] == "var,x1_frac,x2_frac,x_terminal_frac,csp,y"
    rows = table(text)
    term = [float(r["x_terminal_frac"]) for r in rows]
    assert all(b > a for a, b in zip(term, term[1:]))


@pytest.mark.parametrize("var,lo,hi,idx", [("gamma1", -12, -3, 0), ("gamma3", -2, -1, 2)])
def test_sweep_gamma_matches_allocation(capsys, var, lo, hi, idx):
    code, out, _ = run(["sweep", "--var", var, "--from", str(lo), "--to", str(hi), "--steps", "5"], capsys)
    assert code == 0
    rows = table(out)
    base = cli.load_config(cli.default_config_path()).spec
    for r in rows:
        g = float(r["var"])
        agents = list(base.agents)
        agents[idx] = AgentSpec(g, agents[idx].rho, agents[idx].role)
        spec = ProblemSpec(base.market, tuple(agents[:2]), agents[2], base.total_wealth_x)
        res = allocation.allocate_at_y(spec, 3.0)
        assert float(r["x1_frac"]) == pytest.approx(res.fractions[0], rel=1e-12)
        assert float(r["x_terminal_frac"]) == pytest.approx(res.fractions[2], rel=1e-12)
    # at fixed y > 1 a more negative gamma raises y**(1/(gamma-1)), so the share
    # of the swept agent falls as its gamma rises
    own = [float(r["x1_frac" if idx == 0 else "x_terminal_frac"]) for r in rows]
    assert all(b < a for a, b in zip(own, own[1:]))


def test_sweep_rejects_bad_grid(capsys):
    assert run(["sweep", "--var", "x", "--from", "2", "--to", "1"], capsys)[0] == 2
    assert run(["sweep", "--var", "kappa", "--from", "1", "--to", "2"], capsys)[0] == 2


def test_sweep_parallel_matches_serial(capsys):
    argv = ["sweep", "--var", "theta0", "--from", "0.2", "--to", "1.2", "--steps", "4"]
    _, serial, _ = run(argv, capsys)
    _, parallel, _ = run(argv + ["--jobs", "2"], capsys)
    assert serial == parallel


def test_csp_compare(capsys):
    code, out, _ = run(["csp-compare"], capsys)
    assert code == 0
    rows = table(out)
    assert len(rows) == 16
    for fam in ("rho", "gamma"):
        c = {r["label"]: r["csp"] for r in rows if r["family"] == fam}
        assert c["122"] == c["212"] and c["121"] == c["211"]


def test_riccati_dump(tmp_path, capsys):
    code, out, _ = run(["riccati", "--agent", "2"], capsys)
    assert code == 0
    rows = table(out)
    assert (rows[0]["A1"], rows[0]["A2"], rows[0]["A3"]) == ("0", "0", "0")
    assert max(float(r["residual"]) for r in rows[1:-1]) <= 1e-6
    assert abs(float(rows[-1]["A1_closed"]) - float(rows[-1]["A1"])) <= 1e-10
    assert run(["riccati", "--agent", "9"], capsys)[0] == 2


def test_riccati_printed_pole_blank(tmp_path, capsys):
    text = BASE.replace("lambda_theta = 0.2712", "lambda_theta = 0.2").replace(
        "sigma_theta = 0.0655", "sigma_theta = 1").replace("T = 1", "T = 2").replace(
        "gamma.1 = -9", "gamma.1 = 0.5")
    code, out, _ = run(["riccati", "--config", write(tmp_path, text), "--agent", "1"], capsys)
    assert code == 0
    rows = table(out)
    blank = [float(r["s"]) for r in rows if r["A1_printed"] == ""]
    assert blank and min(blank) > 1.0
    assert all(r["A1_closed"] != "" for r in rows)


def test_singularity_exit_code(tmp_path, capsys):
    text = BASE.replace("lambda_theta = 0.2712", "lambda_theta = 0.2").replace(
        "sigma_theta = 0.0655", "sigma_theta = 1").replace("T = 1", "T = 6").replace(
        "gamma.1 = -9", "gamma.1 = 0.5")
    cfg = write(tmp_path, text)
    code, _, err = run(["allocate", "--config", cfg], capsys)
    assert code == 3 and "singularity" in err
    out = tmp_path / "sweep.csv"
    assert run(["sweep", "--config", cfg, "--var", "theta0", "--from", "0.1", "--to", "1",
                "--out", str(out)], capsys)[0] == 3
    assert not out.exists()


def test_verify_small(tmp_path, capsys):
    out = tmp_path / "v.csv"
    code, _, _ = run(["verify", "--paths", "100", "--steps", "12", "--out", str(out)], capsys)
    assert code in (0, 1)
    rows = table(out.read_text())
    assert rows and set(rows[0]) == {"check_name", "agent", "estimate", "std_error", "reference",
                                     "z_score", "pass"}


@pytest.mark.slow
def test_verify_default_passes(tmp_path, capsys):
    out = tmp_path / "v.csv"
    code, _, _ = run(["verify", "--out", str(out)], capsys)
    assert code == 0
    assert all(r["pass"] == "true" for r in table(out.read_text()))


def test_outputs_deterministic(capsys):
    a = run(["csp-compare", "--scenario", "gamma"], capsys)[1]
    b = run(["csp-compare", "--scenario", "gamma"], capsys)[1]
    assert a == b


def test_console_script_entry():
    env = dict(os.environ)
    res = subprocess.run([sys.executable, "-m", "household_merton.cli", "allocate"], capture_output=True,
                         text=True, env=env)
    assert res.returncode == 0 and res.stdout.startswith("y,")
