import json
import math
import subprocess
import sys

import numpy as np
import pytest

from ticert import __version__
from ticert.cli import dumps, main
from ticert.fixtures import fixture_path


@pytest.fixture
def run(tmp_path, capsys):
    def go(*args, chain="two_state"):
        spec = args[1] if len(args) > 1 and str(args[1]).endswith(".json") else None
        argv = [args[0], spec or str(fixture_path(chain)), "--out", str(tmp_path / "out")]
        argv += list(args[2:] if spec else args[1:])
        code = main(argv)
        out = capsys.readouterr()
        return code, out.out, out.err

    go.out = tmp_path / "out"
    return go


class TestSubcommands:
    def test_info(self, run):
        code, out, _ = run("info")
        data = json.loads(out)
        assert code == 0
        assert data["mu"] == [0.5, 0.5]
        assert data["spectral_gap"] == pytest.approx(2.0)
        assert json.loads((run.out / "info.json").read_text()) == data

    def test_fisher_and_entropy(self, run):
        code, out, _ = run("fisher", "--nu", "0.9,0.1")
        assert json.loads(out)["fisher_information"] == pytest.approx(1 - 2 * math.sqrt(0.09))
        code, out, _ = run("entropy", "--nu", "1,0")
        assert json.loads(out)["relative_entropy"] == pytest.approx(math.log(2))

    def test_wasserstein(self, run):
        code, out, _ = run("wasserstein", "--nu", "0.2,0.8", "--p", "1")
        data = json.loads(out)
        assert code == 0
        assert data["value"] == pytest.approx(0.3)
        assert data["kantorovich_dual"] == pytest.approx(0.3)
        lines = (run.out / "plan.csv").read_text().splitlines()
        assert lines[0] == "x_index,y_index,mass"

    def test_fklograte(self, run):
        code, out, _ = run("fklograte", "--f", "0,2", "--t", "2")
        data = json.loads(out)
        for key in ("lograte", "dual", "expm"):
            assert data[key] == pytest.approx(math.sqrt(2), abs=1e-8)

    def test_certify(self, run):
        code, out, _ = run("certify", "--ineq", "w1i", "--probes", "30")
        data = json.loads(out)
        assert code == 0
        assert data["constant_estimate"] == pytest.approx(0.5, abs=1e-4)
        assert len((run.out / "certificate_ledger.csv").read_text().splitlines()) == 31

    def test_certify_divergent(self, run):
        code, out, _ = run("certify", "--ineq", "w2i")
        data = json.loads(out)
        assert code == 0
        assert data["diverged"] and data["constant_estimate"] is None

    def test_sweep(self, run):
        code, out, _ = run("sweep", "--ineq", "w1i", "--n-max", "2", "--probes", "10")
        data = json.loads(out)
        assert code == 0 and data["strictly_increasing"]
        assert data["constants"][1] == pytest.approx(2 - math.sqrt(2), abs=1e-4)

    def test_sanov(self, run):
        code, out, _ = run("sanov", "--F", "linear", "--n-list", "1,2,3")
        data = json.loads(out)
        assert code == 0
        assert max(abs(g) for g in data["gap"]) <= 1e-6

    def test_deviate_ok_and_violated(self, run):
        code, _, _ = run("deviate", "--C", "0.5", "--paths", "5000", "--nu0", "0,1")
        assert code == 0
        code, _, err = run("deviate", "--C", "0.01", "--paths", "5000", "--nu0", "0,1")
        assert code == 2
        assert "bound violated" in err


class TestErrors:
    def test_bad_measure(self, run):
        code, _, err = run("fisher", "--nu", "0.5,0.2")
        assert code == 1
        assert err.startswith("error [cli.ParseError]")

    def test_bad_chain_file(self, run, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"states": ["a", "b"],\n "rates": [[-1, 1],\n [1, -2]]}')
        code, _, err = run("info", str(bad))
        assert code == 1
        assert "error [chain_core.InvariantViolation]" in err and "bad.json:3: row 1" in err

    def test_budget(self, run):
        code, _, err = run("sweep", "--n-max", "5", "--budget", "8")
        assert code == 1
        assert "budget.BudgetExceeded" in err

    def test_not_lipschitz(self, run):
        code, _, err = run("deviate", "--C", "0.5", "--f", "0,3", "--paths", "10")
        assert code == 1
        assert "certify.NotLipschitz" in err

    def test_bad_n(self, run):
        code, _, _ = run("certify", "--n", "0")
        assert code == 1


def test_dumps_canonical():
    text = dumps({"b": 1.5, "a": [1, 2]})
    assert text.endswith("\n")
    assert text.index('"a"') < text.index('"b"')
    with pytest.raises(ValueError):
        dumps({"x": float("nan")})


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ticert.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert __version__ in proc.stdout


def test_csv_byte_identical(tmp_path, capsys):
    spec = str(fixture_path("cycle4"))
    for rep in (1, 2):
        assert main(["sanov", spec, "--out", str(tmp_path / str(rep)), "--F", "clipw2", "--n-list", "1,2"]) == 0
        assert main(["deviate", spec, "--out", str(tmp_path / str(rep)), "--C", "2", "--paths", "3000",
                     "--seed", "9", "--workers", str(rep)]) == 0
    capsys.readouterr()
    for name in ("sanov.csv", "deviation.csv", "sanov.json", "deviation.json"):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "2" / name).read_bytes()
