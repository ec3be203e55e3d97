import csv
import subprocess
import sys

import pytest

from helmdd.cli import build_parser, main


def cfg(tmp_path, body):
    path = tmp_path / "c.cfg"
    path.write_text(body + f"\noutput.dir = {tmp_path / 'out'}\n")
    return str(path)


BASE = "problem.wave_number = 8\nproblem.n_ppwl = 5\n"


def test_run_writes_outputs(tmp_path, capsys):
    code = main(["run", "--config", cfg(tmp_path, BASE + "decomp.N = 2\ncoarse.method = oras")])
    assert code == 0
    out = tmp_path / "out"
    assert (out / "table.md").exists() and (out / "table.csv").exists()
    hist = list((out / "history").glob("*.csv"))
    assert len(hist) == 1 and hist[0].name == "oras_min_p5_k8_N2.csv"
    assert "converged" in capsys.readouterr().out


def test_sweep_with_skip_and_cap(tmp_path):
    body = BASE + "decomp.N = 2, 100000\ncoarse.method = ras\nkrylov.max_iter = 2"
    assert main(["sweep", "--quiet", "--config", cfg(tmp_path, body)]) == 0
    rows = list(csv.DictReader((tmp_path / "out" / "table.csv").open()))
    assert [r["entry"] for r in rows] == ["×", "−"]


def test_sweep_error_exit(tmp_path, monkeypatch):
    import helmdd.bench.experiment as ex

    monkeypatch.setattr(ex, "build_preconditioner", lambda *a, **k: 1 / 0)
    assert main(["sweep", "--quiet", "--config", cfg(tmp_path, BASE + "decomp.N = 2")]) == 1


def test_eig_dump(tmp_path):
    body = BASE + "decomp.N = 2\ncoarse.method = h-geneo\ncoarse.nu = 4"
    assert main(["eig-dump", "--config", cfg(tmp_path, body), "--subdomain", "1"]) == 0
    path = tmp_path / "out" / "spectra" / "h-geneo_sub1.csv"
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == 4 and rows[0]["subdomain"] == "1"
    re = [float(r["re_lambda"]) for r in rows]
    assert re == sorted(re)


@pytest.mark.parametrize("body,args", [
    (BASE + "coarse.method = oras", ["--subdomain", "0"]),  # not a spectral method
    (BASE + "decomp.N = 2\ncoarse.method = dtn\ncoarse.nu = 2", ["--subdomain", "5"]),
])
def test_eig_dump_config_errors(tmp_path, body, args):
    assert main(["eig-dump", "--config", cfg(tmp_path, body)] + args) == 2


def test_config_error_exit(tmp_path, capsys):
    body = BASE + "coarse.method = grid\nkrylov.method = gmres"
    assert main(["run", "--config", cfg(tmp_path, body)]) == 2
    assert "fgmres" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "helmdd.cli", "run", "--config",
                          cfg(tmp_path, BASE + "decomp.N = 1")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
