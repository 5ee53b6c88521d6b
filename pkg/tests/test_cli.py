import csv
import json
import subprocess
import sys

import pytest

from rsep.cli import EXIT, load_config, main, parse_config, run
from rsep.errors import ConfigError
from rsep.report import dumps

RSEP_EUCLIDEAN = """\
[metric]
family = rsep
roots = 0, 1, 2, 3, 4
Q = euclidean

[sampling]
count = 60
seed = 4

[solve]
draws = 3
"""


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_all_checks_pass_on_rsep_family(tmp_path):
    cfg = write(tmp_path, RSEP_EUCLIDEAN.replace("[solve]", "[checks]\nrun = all\n\n[solve]"))
    out = tmp_path / "report.json"
    assert main(["check", "--config", cfg, "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["status"] == "pass"
    names = [c["name"] for c in report["checks"]]
    assert names[:4] == ["separability", "r-factor", "potential", "pseudo-stackel"]
    assert "laplace" in names and "solve" in names
    assert all(c["verdict"] == "pass" for c in report["checks"])


def test_exponential_family_fails_pseudo_stackel(tmp_path):
    cfg = write(tmp_path, '[metric]\nfamily = csep\nh1 = "exp(q1)"\nh2 = "1 + q2^2"\n'
                          'h3 = "2 + cos(q3)"\n[checks]\nrun = pseudo-stackel\n')
    assert main(["check", "--config", cfg]) == EXIT["fail"] == 2


def test_unknown_key_is_a_config_error(tmp_path, capsys):
    cfg = write(tmp_path, "[metric]\nfamily = rsep\nroots = 0, 1, 2, 3, 4\n\n"
                          "[tolerances]\ntollerance = 1e-8\n")
    assert main(["check", "--config", cfg, "--json"]) == 1
    captured = capsys.readouterr()
    assert "tollerance" in captured.err and "line 6" in captured.err
    payload = json.loads(captured.out)
    assert payload["key"] == "tollerance" and payload["line"] == 6


@pytest.mark.parametrize("text, key", [
    ("[metric]\nfamily = torus\n", "family"),
    ("[sampling]\ncount = many\n", "count"),
    ("[bogus]\nx = 1\n", None),
    ("[checks]\nrun = separability, telepathy\n", "run"),
])
def test_invalid_configs(text, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    if key:
        assert info.value.key == key


def test_report_is_deterministic(tmp_path):
    cfg = load_config(write(tmp_path, RSEP_EUCLIDEAN))
    cfg.checks = ("separability", "pseudo-stackel", "solve")
    _, a = run(cfg, "check")
    _, b = run(cfg, "check")
    for r in (a, b):
        r.pop("timestamp")
        r.pop("_stdout", None)
    assert dumps(a) == dumps(b)
    assert list(a)[:3] == ["tool", "version", "command"]


def test_failed_dependency_blocks_dependents(tmp_path):
    cfg = write(tmp_path, '[metric]\nfamily = raw\ng11 = "1"\ng22 = "1"\ng33 = "1 + q1*q2"\n'
                          '[domain]\nlower = 0.1, 1.1, 2.1\nupper = 0.9, 1.9, 2.9\n'
                          '[checks]\nrun = separability, r-factor, solve\n')
    out = tmp_path / "r.json"
    assert main(["check", "--config", cfg, "--out", str(out)]) == 2
    checks = {c["name"]: c["verdict"] for c in json.loads(out.read_text())["checks"]}
    assert checks["separability"] == "fail"
    assert checks["solve"] == "skipped"


def test_seed_override_is_echoed(tmp_path):
    cfg = write(tmp_path, RSEP_EUCLIDEAN + "\n[checks]\nrun = separability\n")
    out = tmp_path / "r.json"
    assert main(["check", "--config", cfg, "--seed", "9", "--points", "20", "--out", str(out)]) == 0
    echo = json.loads(out.read_text())["config"]
    assert echo["seed"] == 9 and echo["points"] == 20


def test_curvature_dump(tmp_path, capsys):
    cfg = write(tmp_path, "[metric]\nfamily = sphere\nchart = stereographic\nradius = 2\n"
                          "[curvature]\npoint = 0, 0, 0\n")
    assert main(["curvature", "--config", cfg, "--json"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["curvature"]["scalar"] == pytest.approx(1.5)


def test_chart_csv(tmp_path):
    out = tmp_path / "chart.csv"
    cfg = write(tmp_path, f"[chart]\nroots = 0, 1, 2, 3, 4\ngrid = 3\ncsv = {out}\n")
    assert main(["chart", "--config", cfg]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 27
    assert list(rows[0]) == ["q1", "q2", "q3", "lambda", "x1", "x2", "x3", "QE"]


def test_sphere_command(capsys):
    assert main(["sphere"]) == 0
    assert "status: pass" in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rsep", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "sphere" in proc.stdout


def test_float_formatting():
    assert dumps([1.0, 0.1, float("nan")]) == '[1.0, 0.10000000000000001, "nan"]'
    assert dumps({"b": 1, "a": [2]}) == '{\n  "b": 1,\n  "a": [2]\n}'
