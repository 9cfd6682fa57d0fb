import json
from pathlib import Path

import pytest

from gdeform import cli

CONFIGS = Path(__file__).resolve().parent.parent / "demos" / "configs"


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


BASE = """
geometry = "conformal"
surface = "cylinder"
order = 2
form_source = "builtin_isothermic"
[grid]
u_range = [0.1, 2.0]
v_range = [-0.5, 0.5]
nu = 10
nv = 10
"""


def test_example_configs_exit_codes(capsys):
    assert cli.main(["--config", str(CONFIGS / "conformal_cylinder_order2.toml"), "--quiet"]) == 0
    assert cli.main(["--config", str(CONFIGS / "conformal_cylinder_order3.toml")]) == 4
    err = capsys.readouterr().err
    assert "rigidity witnessed" in err
    assert cli.main(["--config", str(CONFIGS / "malformed_surface.toml")]) == 2
    assert "offset 7" in capsys.readouterr().err


def test_report_schema_and_determinism(tmp_path):
    cfg = write(tmp_path, BASE)
    out = str(tmp_path / "r.json")
    assert cli.main(["--config", cfg, "--report", out, "--quiet"]) == 0
    first = Path(out).read_text()
    assert cli.main(["--config", cfg, "--report", out, "--quiet"]) == 0
    assert Path(out).read_text() == first
    rep = json.loads(first)
    for key in ("report_version", "config_echo", "geometry", "verdicts", "residuals", "flagged_points", "timing_ms"):
        assert key in rep
    assert rep["report_version"] == 1 and rep["timing_ms"] is None
    assert rep["verdicts"]["order_0"] == "pass" and rep["verdicts"]["order_1"] == "pass"
    assert set(rep["residuals"]["closure"]) == {"max", "mean", "argmax_point"}
    assert rep["form_provenance"]["source"] == "builtin_isothermic"


def test_timing_and_mesh(tmp_path):
    mesh = tmp_path / "mesh.csv"
    cfg = write(tmp_path, BASE + f'[checks]\nreport_timing = true\n[outputs]\nmesh = "{mesh}"\n'
                + f'report = "{tmp_path / "r.json"}"\n')
    assert cli.main(["--config", cfg, "--quiet"]) == 0
    assert json.loads((tmp_path / "r.json").read_text())["timing_ms"] > 0
    lines = mesh.read_text().splitlines()
    assert lines[0] == "u,v,value" and len(lines) == 1 + 8 * 8


@pytest.mark.parametrize("extra,override", [
    ("bogus = 1\n", None),
    ("", "order=5"),
    ("", "grid.nu=4"),
    ("", "grid.spacing=1"),
    ("", "geometry=\"hyperbolic\""),
    ("", "form_source=\"table\""),
    ("", "surface=\"(u, v, w)\""),
    ("", "noequals"),
])
def test_config_errors_exit_2(tmp_path, extra, override):
    # unknown keys must sit before the first table header to stay top-level
    cfg = write(tmp_path, extra + BASE)
    args = ["--config", cfg, "--quiet"] + (["--override", override] if override else [])
    assert cli.main(args) == 2


def test_missing_and_malformed_files(tmp_path):
    assert cli.main(["--config", str(tmp_path / "nope.toml"), "--quiet"]) == 2
    assert cli.main(["--config", write(tmp_path, "geometry = [", "bad.toml"), "--quiet"]) == 2
    with pytest.raises(SystemExit) as info:
        cli.main([])
    assert info.value.code == 2


def test_geometry_violation_exit_3(tmp_path):
    cfg = write(tmp_path, BASE)
    args = ["--config", cfg, "--quiet", "--override", 'geometry="projective"',
            "--override", 'surface="(1, u, v, 0)"', "--override", 'form_source="zero"']
    assert cli.main(args) == 3


def test_certification_failure_exit_4(tmp_path):
    cfg = write(tmp_path, BASE)
    assert cli.main(["--config", cfg, "--quiet", "--override", 'surface="(u, v, u*v)"',
                     "--override", "grid.u_range=[0.1, 0.7]", "--override", "grid.v_range=[0.2, 0.8]"]) == 4


def test_projective_builtin_with_bridge(tmp_path):
    out = tmp_path / "r.json"
    cfg = write(tmp_path, BASE)
    args = ["--config", cfg, "--quiet", "--report", str(out),
            "--override", 'geometry="projective"', "--override", 'surface="quadric"',
            "--override", 'form_source="builtin"', "--override", "checks.bridge=true",
            "--override", "grid.u_range=[0.2, 1.0]", "--override", "grid.v_range=[0.2, 1.0]",
            "--override", "checks.probe_points=2"]
    assert cli.main(args) == 0
    rep = json.loads(out.read_text())
    assert rep["bridge"]["ok"] and rep["triviality"]["trivial"] is False
    assert all(p["certified"] for p in rep["probes"])


def test_explicit_table_form(tmp_path):
    # a constant o(4,1) element is not admissible, so order 0 fails
    row = lambda *xs: "[" + ", ".join(f'"{x}"' for x in xs) + "]"  # noqa: E731
    du = "[" + ", ".join([row(0, 1, 0, 0, 0), row(-1, 0, 0, 0, 0), row(0, 0, 0, 0, 0),
                          row(0, 0, 0, 0, 0), row(0, 0, 0, 0, 0)]) + "]"
    text = BASE.replace('"builtin_isothermic"', '"table"') + f"[form_table]\ndu = {du}\ndv = {du}\n"
    out = tmp_path / "r.json"
    assert cli.main(["--config", write(tmp_path, text), "--quiet", "--report", str(out)]) == 4
    rep = json.loads(out.read_text())
    assert rep["verdicts"]["algebra_valued"] == "pass"
    assert rep["verdicts"]["order_0"] == "fail"
