import json
import math

import numpy as np
import pytest
import yaml

from giantatom.cli import EXIT_CONVERGENCE, EXIT_INVALID, EXIT_OK, EXIT_USAGE, main, ordered_map, thread_count
from giantatom.core import AtomSpec, ValidationError, WaveguideModel, equidistant_layout
from giantatom.io import (
    dump_yaml,
    format_value,
    layout_to_data,
    load_layout,
    parse_layout_data,
    parse_number,
    parse_range,
    write_csv,
)


@pytest.mark.parametrize(
    "text, value",
    [("2", 2.0), ("pi", math.pi), ("4pi", 4 * math.pi), ("pi/2", math.pi / 2), ("-pi", -math.pi),
     ("2*pi", 2 * math.pi), ("-0.5*pi", -0.5 * math.pi), ("3e-2", 0.03), (".5", 0.5)],
)
def test_parse_number(text, value):
    assert parse_number(text) == pytest.approx(value)


def test_parse_range():
    assert np.allclose(parse_range("0:4pi:5"), np.linspace(0, 4 * math.pi, 5))
    assert np.allclose(parse_range("0.01:10:4:log"), [0.01, 0.1, 1.0, 10.0])
    assert parse_range("1,2,pi").tolist() == [1.0, 2.0, math.pi]
    for bad in ("", "1:2", "1:2:x", "1:2:0", "0:1:3:log", "abc"):
        with pytest.raises(ValidationError):
            parse_range(bad)


def test_layout_yaml_round_trip(tmp_path):
    lay = equidistant_layout(3, 0.5, 0.7)
    atom = AtomSpec((0.0, 5.0, 9.9))
    wg = WaveguideModel(v=2.0, J0=0.1)
    path = tmp_path / "lay.yaml"
    dump_yaml(layout_to_data(lay, atom, wg), path)
    back = load_layout(path)
    assert back.layouts[0].positions.tolist() == lay.positions.tolist()
    assert back.layouts[0].strengths().tolist() == lay.strengths().tolist()
    assert back.atom == atom and back.waveguide == wg


def test_multi_atom_yaml():
    f = parse_layout_data({"atoms": [{"points": [{"x": 0}, {"x": 2}]}, {"label": "q", "points": [{"x": 1}]}]})
    assert [lay.label for lay in f.layouts] == ["a", "q"]
    with pytest.raises(ValidationError):
        parse_layout_data({"atom": {"levels": [0, 1]}})
    with pytest.raises(ValidationError):
        parse_layout_data({"points": [{"strength": 1.0}]})


def test_format_and_csv(capsys):
    assert format_value(0.1) == "0.1"
    assert format_value(np.float64(1 / 3)) == repr(1 / 3)
    assert format_value(np.bool_(True)) == "true"
    write_csv("-", ["a", "b"], [(1, 0.5)])
    assert capsys.readouterr().out == "a,b\n1,0.5\n"


def test_threads(monkeypatch):
    monkeypatch.delenv("GIANTATOM_THREADS", raising=False)
    assert thread_count() == 1
    monkeypatch.setenv("GIANTATOM_THREADS", "4")
    assert thread_count() == 4
    assert ordered_map(lambda x: x * x, range(20)) == [x * x for x in range(20)]
    monkeypatch.setenv("GIANTATOM_THREADS", "zero")
    with pytest.raises(ValidationError):
        thread_count()


def _run(tmp_path, *argv):
    out = tmp_path / "out.csv"
    code = main([*argv, "--out", str(out)])
    return code, out


def _rows(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), [line.split(",") for line in lines[1:]]


def test_spectrum_command(tmp_path):
    code, out = _run(tmp_path, "spectrum", "--N", "10", "--phi", "0:4pi:2000")
    assert code == EXIT_OK
    header, rows = _rows(out)
    assert header == ["phi", "gamma_rel", "lamb_shift"]
    assert len(rows) == 2000
    gamma = np.array([float(r[1]) for r in rows])
    assert gamma.max() == pytest.approx(1.0) and gamma.min() >= 0
    side = json.loads((tmp_path / "out.csv.json").read_text())
    assert side["N"] == 10 and side["columns"] == header


def test_two_atom_command(tmp_path):
    code, out = _run(tmp_path, "two-atom", "--topology", "braided", "--phi", "0:2pi:1000")
    assert code == EXIT_OK
    header, rows = _rows(out)
    assert header == ["phi", "topology", "g", "Gamma_a", "Gamma_b", "Gamma_coll"]
    assert len(rows) == 1000 and {r[1] for r in rows} == {"braided"}


def test_dfi_command(tmp_path):
    code, out = _run(tmp_path, "dfi", "--topology", "braided")
    assert code == EXIT_OK
    _, rows = _rows(out)
    phis = sorted(float(r[1]) for r in rows)
    assert phis[0] == pytest.approx(math.pi / 2, abs=1e-9)


def test_layout_file_input(tmp_path):
    path = tmp_path / "lay.yaml"
    dump_yaml(layout_to_data(equidistant_layout(2, 1.0)), path)
    code, out = _run(tmp_path, "spectrum", "--layout", str(path), "--phi", "0,pi")
    assert code == EXIT_OK
    _, rows = _rows(out)
    assert float(rows[1][1]) == pytest.approx(0.0, abs=1e-15)


def test_repeat_runs_are_byte_identical(tmp_path, monkeypatch):
    argv = ["inversion-scan", "--phi", "6.9:6.92:3", "--rabi", "0.1,0.3"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main([*argv, "--out", str(a)]) == EXIT_OK
    monkeypatch.setenv("GIANTATOM_THREADS", "3")
    assert main([*argv, "--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_inversion_scan_auto_phase(tmp_path):
    code, out = _run(tmp_path, "inversion-scan", "--rabi", "0.1:1:4:log")
    assert code == EXIT_OK
    header, rows = _rows(out)
    assert header[-1] == "inverted" and any(r[-1] == "true" for r in rows)


def test_delay_commands(tmp_path):
    code, out = _run(tmp_path, "threshold")
    assert code == EXIT_OK
    _, rows = _rows(out)
    assert [int(r[1]) for r in rows] == [1, 1, 2, 2, 2]
    side = json.loads((tmp_path / "out.csv.json").read_text())
    assert 0.8 <= side["results"]["transition"] <= 1.2
    code, out = _run(tmp_path, "probe", "--N", "2", "--gamma-tau", "2")
    assert code == EXIT_OK
    code, out = _run(tmp_path, "dde", "--N", "2", "--gamma-tau", "2", "--t-end", "5")
    assert code == EXIT_OK
    header, rows = _rows(out)
    assert header == ["t", "re_c", "im_c", "pop", "energy_total"] and float(rows[0][3]) == 1.0


def test_evolve_and_steady(tmp_path):
    code, out = _run(tmp_path, "evolve", "--levels", "2", "--N", "1", "--phi", "1.0", "--t-end", "1",
                     "--dt", "0.001", "--store-every", "100")
    assert code == EXIT_OK
    header, rows = _rows(out)
    assert header[0] == "t" and header[-1] == "trace_err"
    assert float(rows[-1][2]) == pytest.approx(math.exp(-1.0), rel=1e-6)
    code, out = _run(tmp_path, "steady", "--rabi", "0.3")
    assert code == EXIT_OK


def test_design_command(tmp_path):
    omega = np.linspace(0.1, 2 * math.pi, 8)
    from giantatom.design import DesignProblem
    target = DesignProblem(omega, np.zeros_like(omega), 3).model(np.array([1.0, 2.0, 1.0]))
    problem = tmp_path / "p.yaml"
    problem.write_text(yaml.safe_dump({"target": [{"omega": float(w), "gamma": float(g)}
                                                  for w, g in zip(omega, target)], "design": {"n_points": 3}}))
    sol = tmp_path / "sol.yaml"
    code, out = _run(tmp_path, "design", "--problem", str(problem), "--solution", str(sol))
    assert code == EXIT_OK
    fitted = load_layout(sol)
    assert np.allclose(np.abs(fitted.layouts[0].strengths()), [1, 2, 1], atol=1e-6)


def test_oracle_command(tmp_path):
    code, out = _run(tmp_path, "oracle", "--N", "1", "--modes", "1024,2048")
    assert code == EXIT_OK
    _, rows = _rows(out)
    assert float(rows[-1][1]) == pytest.approx(1.0, rel=0.01)


def test_exit_codes(tmp_path, capsys):
    assert main(["spectrum", "--layout", str(tmp_path / "missing.yaml")]) == EXIT_INVALID
    assert "not found" in capsys.readouterr().err
    assert main(["spectrum", "--bogus"]) == EXIT_USAGE
    assert main(["nonsense"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE
    assert main(["spectrum", "--phi", "1:2"]) == EXIT_INVALID
    assert main(["evolve", "--dt", "1", "--t-end", "2", "--out", str(tmp_path / "x.csv")]) == EXIT_CONVERGENCE
    assert main(["--version"]) == EXIT_OK
