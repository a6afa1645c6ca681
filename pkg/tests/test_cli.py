import argparse
import json

import numpy as np
import pytest

from conftest import diag_instance
from ddrp import io
from ddrp.cli import main, parse_schedule
from ddrp.diagnostics import read_csv_rows


def write_items(directory, columns, suffix=".csv"):
    directory.mkdir(parents=True, exist_ok=True)
    for j, col in enumerate(np.asarray(columns, dtype=float).T):
        io.write_matrix(directory / f"item{j:02d}{suffix}", col)
    return directory


@pytest.fixture
def toy_dirs(tmp_path):
    U = np.array([[1.0, 1.0], [0.0, 1.0]])
    write_items(tmp_path / "u", U)
    write_items(tmp_path / "y", np.diag([2.0, 1.0]) @ U)
    write_items(tmp_path / "test", np.array([[2.0], [1.0]]))
    return tmp_path


def reconstruct(root, method, *extra):
    out = root / f"rec_{method}"
    code = main(["reconstruct", "--train-inputs", str(root / "u"), "--train-outputs", str(root / "y"),
                 "--test-outputs", str(root / "test"), "--method", method, "--out", str(out), *extra])
    return code, out


def test_schedule_parsing():
    assert parse_schedule("10:100:10") == list(range(10, 101, 10))
    assert parse_schedule("50,100") == [50, 100]
    with pytest.raises(argparse.ArgumentTypeError):
        parse_schedule("0:3")


def test_gen_and_split(tmp_path):
    assert main(["gen", "--kind", "blobs", "--side", "12", "--count", "9", "--seed", "7",
                 "--out", str(tmp_path / "d")]) == 0
    assert len(list((tmp_path / "d").glob("*.pgm"))) == 9
    manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
    assert manifest["command"] == "gen" and manifest["flags"]["seed"] == 7
    assert main(["gen", "--side", "12", "--count", "9", "--test-count", "2",
                 "--out", str(tmp_path / "s")]) == 0
    assert len(list((tmp_path / "s" / "train").glob("*.pgm"))) == 7
    assert len(list((tmp_path / "s" / "test").glob("*.pgm"))) == 2


def test_gen_usage_errors(tmp_path, capsys):
    assert main(["gen", "--side", "8", "--count", "0", "--out", str(tmp_path)]) == 2
    assert main(["gen", "--side", "8", "--count", "3", "--test-count", "3", "--out", str(tmp_path)]) == 2
    assert main(["bogus"]) == 2


def test_radon(tmp_path, capsys):
    d = tmp_path / "imgs"
    d.mkdir()
    io.write_pgm(d / "a.pgm", np.zeros((8, 8)))
    io.write_pgm(d / "b.pgm", np.eye(8))
    assert main(["radon", "--in", str(d), "--angles", "5", "--out", str(tmp_path / "s")]) == 0
    a = io.read_ddrp(tmp_path / "s" / "a.ddrp")
    assert a.shape == (12, 5) and not a.any()
    assert io.read_ddrp(tmp_path / "s" / "b.ddrp").sum(axis=0) == pytest.approx(8.0)
    assert main(["radon", "--in", str(d), "--angles", "5", "--bins", "11", "--out", str(tmp_path / "x")]) == 2
    assert "12" in capsys.readouterr().err
    assert main(["radon", "--in", str(tmp_path / "missing"), "--angles", "5", "--out", str(tmp_path / "x")]) == 1


@pytest.mark.parametrize("method", ["frame", "qr", "cgs", "mgs", "householder"])
def test_reconstruct_toy(toy_dirs, method):
    code, out = reconstruct(toy_dirs, method)
    assert code == 0
    u = io.read_ddrp(out / "item00.ddrp").ravel()
    np.testing.assert_allclose(u, [1.0, 1.0], atol=1e-6 if method != "frame" else 1e-14)
    rows = read_csv_rows(out / "metrics.csv")
    assert float(rows[0]["residual"]) <= 1e-12


def test_reconstruct_exact_training_output(tmp_path, rng):
    U = rng.random((16, 5))
    T = rng.standard_normal((24, 16))
    write_items(tmp_path / "u", U)
    write_items(tmp_path / "y", T @ U)
    write_items(tmp_path / "test", (T @ U)[:, [3]])
    write_items(tmp_path / "truth", U[:, [3]])
    code, out = reconstruct(tmp_path, "frame", "--truth", str(tmp_path / "truth"))
    assert code == 0
    np.testing.assert_allclose(io.read_ddrp(out / "item00.ddrp").ravel(), U[:, 3], atol=1e-8)
    assert float(read_csv_rows(out / "metrics.csv")[0]["rel_l2"]) <= 1e-8


def test_reconstruct_singular_gram_hint(tmp_path, capsys):
    write_items(tmp_path / "u", np.array([[1.0, 2.0], [0.0, 0.0]]))
    write_items(tmp_path / "y", np.array([[1.0, 2.0], [0.0, 0.0]]))
    write_items(tmp_path / "test", np.array([[1.0], [0.0]]))
    code, _ = reconstruct(tmp_path, "frame")
    assert code == 1
    assert "--reg truncate" in capsys.readouterr().err
    code, out = reconstruct(tmp_path, "frame", "--reg", "truncate")
    assert code == 0


def test_reconstruct_count_mismatch(tmp_path):
    write_items(tmp_path / "u", np.eye(3))
    write_items(tmp_path / "y", np.eye(3)[:, :2])
    write_items(tmp_path / "test", np.ones((3, 1)))
    assert reconstruct(tmp_path, "qr")[0] == 1


@pytest.fixture
def near_dep_dirs(tmp_path, rng):
    U = rng.random((30, 100))
    write_items(tmp_path / "u", U)
    write_items(tmp_path / "y", rng.standard_normal((120, 30)) @ U)
    return tmp_path


def diagnose(root, *extra):
    return main(["diagnose", "--train-inputs", str(root / "u"), "--train-outputs", str(root / "y"),
                 "--out", str(root / "diag"), *extra])


def test_diagnose_eps(near_dep_dirs):
    assert diagnose(near_dep_dirs, "--eps", "--methods", "cgs,qr", "--n", "10:100:10",
                    "--plot", str(near_dep_dirs / "eps.svg")) == 0
    rows = read_csv_rows(near_dep_dirs / "diag" / "eps.csv")
    assert len(rows) == 20
    assert (near_dep_dirs / "eps.svg").exists()


def test_diagnose_bench(near_dep_dirs):
    assert diagnose(near_dep_dirs, "--bench", "--methods", "frame,qr", "--n", "50,100",
                    "--reps", "5", "--reg", "truncate") == 0
    rows = read_csv_rows(near_dep_dirs / "diag" / "bench.csv")
    assert len(rows) == 4 and all(r["reps"] == "5" for r in rows)


def test_diagnose_usage(near_dep_dirs):
    assert diagnose(near_dep_dirs) == 2
    assert diagnose(near_dep_dirs, "--bench", "--reps", "2") == 2
    assert diagnose(near_dep_dirs, "--eps", "--n", "200") == 2
    assert diagnose(near_dep_dirs, "--assume") == 2


@pytest.mark.parametrize("path", ["ortho", "frame"])
def test_diagnose_assume_diagonal(tmp_path, path):
    ts, u, _ = diag_instance()
    write_items(tmp_path / "u", ts.inputs)
    write_items(tmp_path / "y", ts.outputs)
    io.write_matrix(tmp_path / "udag.csv", u)
    assert diagnose(tmp_path, "--assume", "--u-dagger", str(tmp_path / "udag.csv"), "--path", path) == 0
    l1 = [float(r["l1_partial_sum"]) for r in read_csv_rows(tmp_path / "diag" / "assume_l1.csv")]
    np.testing.assert_allclose(l1, np.cumsum(1.0 / np.arange(1, 9) ** 2), atol=1e-12)
    probes = read_csv_rows(tmp_path / "diag" / "probes.csv")
    assert len(probes) == 8 and float(probes[-1]["pairing"]) <= 1e-10
