import numpy as np
import pytest

from conftest import diag_instance, random_injective
from ddrp.datasets import near_dependent_columns
from ddrp.diagnostics import (
    BENCH_HEADER,
    EPS_HEADER,
    assumption_report,
    bench_reconstruction,
    ortho_error_curve,
    plot_bench,
    plot_eps_curve,
    read_csv_rows,
    recon_error_metrics,
    reconstruction_sequence,
    weak_convergence_probe,
    write_assumption_csvs,
    write_bench_csv,
    write_eps_csv,
    write_probe_csv,
)
from ddrp.errors import DimensionMismatch
from ddrp.frames import Regularization
from ddrp.ortho import Method, TrainingSet

# sum_{i<=m} i^-2 for m = 1..8, summed by hand in exact fractions
L1_EXPECTED = np.cumsum([1 / i**2 for i in range(1, 9)])


@pytest.mark.parametrize("path", ["ortho", "frame"])
def test_assumption_report_diagonal(path):
    ts, u, _ = diag_instance()
    rep = assumption_report(ts, u, path=path)
    np.testing.assert_allclose(rep.l1_partial_sums, L1_EXPECTED, atol=1e-12)
    assert rep.l1_partial_sums[-1] == pytest.approx(1.527422052154195, abs=1e-12)
    assert set(rep.beta_sq_sums) == {(n, i) for n in range(1, 9) for i in range(n + 1, 9)}
    assert rep.beta_max <= 1e-12
    assert rep.c_max <= 1e-12
    assert all(v >= 0 for v in rep.c_sq_sums.values())


def test_assumption_report_full_n_is_empty():
    ts, u, _ = diag_instance()
    rep = assumption_report(ts, u, schedule=[8])
    assert rep.beta_sq_sums == {} and rep.c_sq_sums == {}
    assert rep.beta_max == 0.0 and rep.c_max == 0.0


def test_assumption_report_nonorthogonal(rng):
    T = random_injective(rng, 12, 6)
    U = rng.standard_normal((6, 6))
    rep = assumption_report(TrainingSet(U, T @ U), U @ rng.standard_normal(6), path="frame")
    assert rep.beta_max > 0 and np.isfinite(rep.beta_max)
    assert np.all(np.diff(rep.l1_partial_sums) >= 0)
    with pytest.raises(DimensionMismatch):
        assumption_report(TrainingSet(U, T @ U), np.ones(5))


def test_assumption_csvs(tmp_path):
    ts, u, _ = diag_instance()
    paths = write_assumption_csvs(assumption_report(ts, u), tmp_path)
    rows = read_csv_rows(tmp_path / "assume_l1.csv")
    assert len(rows) == 8 and float(rows[-1]["l1_partial_sum"]) == pytest.approx(L1_EXPECTED[-1])
    assert len(read_csv_rows(tmp_path / "assume_beta.csv")) == 28
    assert len(paths) == 3


@pytest.mark.parametrize("method", [Method.FRAME, Method.MODIFIED_GS, Method.QR])
def test_probe_diagonal_instance(method):
    ts, u, T = diag_instance()
    R = reconstruction_sequence(ts, T @ u, method)
    table = weak_convergence_probe(R, u, u)
    p = table.pairings[0]
    assert p[-1] <= 1e-10
    assert np.all(p[:-1] > 0)
    assert np.all(np.diff(p) < 0)
    assert table.decreasing_fraction[0] == 1.0


def test_probe_zero_and_exact_capture(rng):
    T = random_injective(rng, 10, 6)
    U = rng.standard_normal((6, 5))
    ts = TrainingSet(U, T @ U)
    u = U[:, :3] @ rng.standard_normal(3)
    R = reconstruction_sequence(ts, T @ u)
    table = weak_convergence_probe(R, u, np.column_stack([np.zeros(6), u, rng.standard_normal(6)]))
    np.testing.assert_array_equal(table.pairings[0], 0.0)
    assert np.all(table.pairings[1:, 2:] <= 1e-10)
    with pytest.raises(DimensionMismatch):
        weak_convergence_probe(R, u, np.ones(4))


def test_reconstruction_sequence_with_dropped_columns():
    U = np.eye(3)
    Y = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    ts = TrainingSet(U, Y)
    R = reconstruction_sequence(ts, [2.0, 1.0], Method.MODIFIED_GS)
    np.testing.assert_allclose(R[:, 0], R[:, 1])
    np.testing.assert_allclose(Y @ R[:, 2], [2.0, 1.0])
    F = reconstruction_sequence(ts, [2.0, 1.0], Method.FRAME, reg=Regularization.truncate())
    np.testing.assert_allclose(Y @ F, Y @ R, atol=1e-12)


def test_eps_curve_schema(tmp_path, rng):
    ts = TrainingSet(np.eye(12), near_dependent_columns(30, 12, 0.99, seed=1))
    rows = ortho_error_curve(ts, ["cgs", "qr"], [1, 6, 12], seeds=[0, 1])
    assert len(rows) == 12
    assert {(r.method, r.seed) for r in rows} == {(m, s) for m in ("cgs", "qr") for s in (0, 1)}
    assert all(r.eps_ortho <= 1e-15 for r in rows if r.n == 1)
    out = read_csv_rows(write_eps_csv(rows, tmp_path / "eps.csv"))
    assert tuple(out[0]) == EPS_HEADER and len(out) == 12
    plot_eps_curve(rows, tmp_path / "eps.svg")
    assert (tmp_path / "eps.svg").read_text().lstrip().startswith("<?xml")
    with pytest.raises(ValueError):
        ortho_error_curve(ts, ["qr"], [13])


def test_eps_ordering_ill_conditioned():
    ts = TrainingSet(np.eye(200), near_dependent_columns(500, 200, 0.999, seed=5))
    rows = {r.method: r.eps_ortho for r in ortho_error_curve(ts, ["cgs", "qr"], [200])}
    assert rows["cgs"] >= rows["qr"]


def test_bench_schema(tmp_path, rng):
    T = random_injective(rng, 30, 20)
    U = rng.standard_normal((20, 20))
    ts = TrainingSet(U, T @ U)
    recs = bench_reconstruction(ts, ["frame", "qr", "mgs"], [5, 10], repetitions=3)
    assert len(recs) == 6
    assert all(r.seconds > 0 and r.reps == 3 and (r.h, r.k) == (30, 20) for r in recs)
    out = read_csv_rows(write_bench_csv(recs, tmp_path / "b.csv"))
    assert tuple(out[0]) == BENCH_HEADER and len(out) == 6
    plot_bench(recs, tmp_path / "b.svg")
    with pytest.raises(ValueError):
        bench_reconstruction(ts, ["qr"], [5], repetitions=2)


def test_probe_csv(tmp_path):
    ts, u, T = diag_instance()
    table = weak_convergence_probe(reconstruction_sequence(ts, T @ u), u, u)
    rows = read_csv_rows(write_probe_csv(table, tmp_path / "p.csv"))
    assert len(rows) == 8 and set(rows[0]) == {"probe", "n", "pairing"}


def test_recon_error_metrics():
    u = np.array([0.6, 0.8, 0.0])
    assert recon_error_metrics(u, u) == {"rel_l2": 0.0, "max_abs": 0.0}
    assert recon_error_metrics(np.zeros(3), u) == pytest.approx({"rel_l2": 1.0, "max_abs": 0.8})
    v = 2 * u
    m = recon_error_metrics(v + 0.1 * np.eye(3)[0], v)
    assert m["rel_l2"] == pytest.approx(0.05)
    assert recon_error_metrics(np.zeros(2), np.zeros(2))["rel_l2"] == 0.0
    with pytest.raises(DimensionMismatch):
        recon_error_metrics(np.zeros(2), np.zeros(3))
