import json

import numpy as np
import pytest

from nonautojulia import cli
from nonautojulia.core import Polynomial, constant_seq


def write_seq(path, c):
    path.write_text(json.dumps(constant_seq(Polynomial([c, 0, 1])).to_json()))
    return str(path)


@pytest.fixture
def z2(tmp_path):
    return write_seq(tmp_path / "z2.json", 0)


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_render_pgm(tmp_path, z2, capsys):
    out = tmp_path / "k.pgm"
    code, stdout, _ = run(["render", "--seq", z2, "--grid", "256", "--depth", "20", "--out", str(out)], capsys)
    assert code == 0
    data = out.read_bytes()
    header = b"P5\n256 256\n255\n"
    assert data.startswith(header) and len(data) == len(header) + 256 * 256
    img = np.frombuffer(data[len(header):], dtype=np.uint8)
    assert (img == 255).sum() == json.loads(stdout)["cells_in_K"]


def test_invariance(z2, capsys):
    code, stdout, _ = run(["invariance", "--seq", z2, "--grid", "256", "--depth", "20", "--samples", "50"], capsys)
    rep = json.loads(stdout)
    assert code == 0 and rep["pass"] and rep["n"] == 3


@pytest.mark.parametrize("argv", [
    ["render", "--grid", "500"],
    ["render", "--grid", "8192"],
    ["render", "--depth", "0"],
    ["render", "--time", "-1"],
])
def test_bad_flags(argv, z2, capsys):
    code, _, err = run(argv + ["--seq", z2], capsys)
    assert code == 2 and err.startswith("error:")


def test_missing_seq(capsys):
    assert run(["render"], capsys)[0] == 2


def test_malformed_json(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"kind": "explicit",\n "tail": [}')
    code, _, err = run(["render", "--seq", str(p)], capsys)
    assert code == 2 and "line 2" in err


def test_unreadable(tmp_path, capsys):
    assert run(["render", "--seq", str(tmp_path / "nope.json")], capsys)[0] == 2


def test_thm71_refusal(tmp_path, capsys):
    code, _, err = run(["thm71", "--seq", write_seq(tmp_path / "c.json", 0.3), "--grid", "256"], capsys)
    assert code == 2 and "outside Theorem 7.1 hypothesis" in err


def test_thm71_ok(z2, capsys):
    code, stdout, _ = run(["thm71", "--seq", z2, "--grid", "256", "--depth", "30"], capsys)
    assert code == 0 and json.loads(stdout)["constant"] < 1.1


def test_plbuild_deterministic(z2, tmp_path, capsys):
    outs = []
    for k in range(2):
        path = tmp_path / f"pl{k}.json"
        code, _, _ = run(["plbuild", "--seq", z2, "--rho", "4", "--grid", "256", "--depth", "3",
                          "--out", str(path)], capsys)
        assert code == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    assert json.loads(outs[0])["pass"]


def test_plbuild_rho_too_small(z2, capsys):
    code, _, err = run(["plbuild", "--seq", z2, "--rho", "1", "--grid", "256", "--depth", "3"], capsys)
    assert code == 2


def test_separation(capsys):
    code, stdout, _ = run(["separation", "--grid", "256", "--depth", "30"], capsys)
    rep = json.loads(stdout)
    assert code == 0 and rep["components"] == 2


def test_dumps_complex():
    assert json.loads(cli.dumps({"z": 1 + 2j, "b": np.bool_(True)})) == {"b": True, "z": [1.0, 2.0]}


def test_thm72_checks_skip_uncounted_rows():
    rows = [{"j": j, "component_count": c, "max_diameter": 2.0 ** (-j - 1),
             "min_single_step_derivative_on_J": 2.0} for j, c in ((1, 4), (2, 8), (3, 1))]
    rep = {"rows": rows, "violation_ratios": [0.5, 1.0, 2.0]}
    assert cli.thm72_checks(rep, 3)["component_counts"]
    assert not cli.thm72_checks(rep, None)["component_counts"]
