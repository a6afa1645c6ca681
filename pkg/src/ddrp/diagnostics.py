"""Finite-scale checks of the convergence assumptions, error curves and timings.

CSV schemas (fixed headers):

    eps curves      method,n,seed,eps_ortho
    benchmarks      method,n,h,k,seconds,reps
    probes          probe,n,pairing
    l1 sums         m,l1_partial_sum
    beta / c table  n,i,beta_sq_sum  and  n,i,c_sq_sum
"""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import DimensionMismatch
from .frames import (
    Regularization,
    build_frame_system,
    expansion_coefficients,
    input_dual_coefficients,
    reconstruct_frame,
)
from .ortho import (
    DEFAULT_TOLERANCES,
    Method,
    ToleranceConfig,
    TrainingSet,
    orthonormalize,
    reconstruct_ortho,
)

EPS_HEADER = ("method", "n", "seed", "eps_ortho")
BENCH_HEADER = ("method", "n", "h", "k", "seconds", "reps")
PROBE_HEADER = ("probe", "n", "pairing")


@dataclass(frozen=True)
class AssumptionReport:
    """Observed quantities behind the weak-convergence assumptions.

    ``beta_sq_sums`` and ``c_sq_sums`` map ``(n, i)`` with ``n < i <= N`` to
    the squared coefficient sums. For ``i <= n`` the expansion of
    ``T^{-1} P_{Y_n} y_i`` is the unit vector ``e_i``, so those entries are
    omitted. Empty tables report a supremum of 0.
    """

    path: str
    l1_partial_sums: np.ndarray
    beta_sq_sums: dict
    beta_max: float
    c_sq_sums: dict
    c_max: float


@dataclass(frozen=True)
class ProbeTable:
    pairings: np.ndarray  # probes x N
    decreasing_fraction: np.ndarray  # per probe

    def rows(self):
        for p, row in enumerate(self.pairings):
            for n, value in enumerate(row, start=1):
                yield p, n, float(value)


@dataclass(frozen=True)
class EpsRow:
    method: str
    n: int
    seed: int
    eps_ortho: float


@dataclass(frozen=True)
class BenchRecord:
    method: str
    n: int
    h: int
    k: int
    seconds: float
    reps: int
    samples: tuple = field(default=(), compare=False, repr=False)


def _squared_sum_table(family, schedule, reg):
    """``sum_j beta_j^2`` for the expansion of ``P_{span(f_1..f_n)} f_i`` in ``f_1..f_n``."""
    N = family.shape[1]
    table = {}
    for n in schedule:
        if n >= N:
            continue
        fs = build_frame_system(family[:, :n], reg)
        B = fs.solve(family[:, :n].T @ family[:, n:])
        sq = np.einsum("ji,ji->i", B, B)
        for offset, value in enumerate(sq):
            table[(n, n + 1 + offset)] = float(value)
    return table


def assumption_report(
    ts_full: TrainingSet,
    u_dagger,
    schedule=None,
    path: str = "ortho",
    method=Method.MODIFIED_GS,
    reg: Regularization | None = None,
    cfg: ToleranceConfig = DEFAULT_TOLERANCES,
) -> AssumptionReport:
    """Tabulate the l1 coefficient sums and the beta / c coefficient bounds.

    ``path="ortho"`` orthonormalizes the training inputs (``ubar_i``) and
    carries ``ybar_i = T ubar_i`` along; the l1 sums use ``<u, ubar_i>`` and
    beta expands ``P_{Y_n} ybar_i`` in ``ybar_1..ybar_n``. ``path="frame"``
    uses the dual-frame coefficients ``<u, S^{-1} u_i>`` of the inputs and
    expands the raw outputs. The c table always expands ``T^{-1} P_{Y_n} y_i``
    in the raw inputs.
    """
    u_dagger = np.asarray(u_dagger, dtype=np.float64).reshape(-1)
    if u_dagger.shape[0] != ts_full.inputs.shape[0]:
        raise DimensionMismatch(f"u has length {u_dagger.shape[0]}, inputs have {ts_full.inputs.shape[0]} rows")
    N = ts_full.count
    schedule = list(range(1, N + 1)) if schedule is None else sorted({int(n) for n in schedule})
    if any(not 1 <= n <= N for n in schedule):
        raise ValueError(f"schedule entries must lie in 1..{N}")

    if path == "ortho":
        sys = orthonormalize(ts_full.swapped(), method, cfg)
        terms = np.abs(sys.ortho_outputs.T @ u_dagger)
        beta_family = sys.preimages
    elif path == "frame":
        terms = np.abs(input_dual_coefficients(ts_full.inputs, u_dagger, reg))
        beta_family = ts_full.outputs
    else:
        raise ValueError(f"unknown path {path!r}")

    beta = _squared_sum_table(beta_family, schedule, reg)
    c_table = {}
    for n in schedule:
        if n >= N:
            continue
        C = expansion_coefficients(ts_full, n, reg)[:, n:]
        for offset, value in enumerate(np.einsum("ji,ji->i", C, C)):
            c_table[(n, n + 1 + offset)] = float(value)
    return AssumptionReport(
        path=path,
        l1_partial_sums=np.cumsum(terms),
        beta_sq_sums=beta,
        beta_max=max(beta.values(), default=0.0),
        c_sq_sums=c_table,
        c_max=max(c_table.values(), default=0.0),
    )


def reconstruction_sequence(
    ts: TrainingSet,
    y,
    method=Method.FRAME,
    reg: Regularization | None = None,
    cfg: ToleranceConfig = DEFAULT_TOLERANCES,
) -> np.ndarray:
    """Columns ``u_1, ..., u_N`` of projected solutions on the nested spans."""
    method = Method(method)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    N = ts.count
    out = np.empty((ts.inputs.shape[0], N))
    if method is Method.FRAME:
        for n in range(1, N + 1):
            head = ts.head(n)
            out[:, n - 1] = reconstruct_frame(build_frame_system(head, reg), head, y).u_n
        return out
    # a prefix of the kept columns is the orthonormal system of the prefix
    sys = orthonormalize(ts, method, cfg)
    terms = sys.preimages * (sys.ortho_outputs.T @ y)
    partial = np.cumsum(terms, axis=1)
    kept = np.asarray(sys.kept_indices)
    for n in range(1, N + 1):
        m = int(np.searchsorted(kept, n - 1, side="right"))
        out[:, n - 1] = partial[:, m - 1] if m else 0.0
    return out


def weak_convergence_probe(reconstructions, u_dagger, probes) -> ProbeTable:
    """``|<u_n - u, phi>|`` for each probe ``phi`` and each ``n``.

    ``reconstructions`` holds ``u_n`` in column ``n - 1``; ``probes`` holds
    one probe per column. The trend statistic is the fraction of steps
    ``n -> n + 1`` on which the pairing strictly decreases.
    """
    R = np.asarray(reconstructions, dtype=np.float64)
    if R.ndim == 1:
        R = R.reshape(-1, 1)
    u = np.asarray(u_dagger, dtype=np.float64).reshape(-1)
    P = np.asarray(probes, dtype=np.float64)
    if P.ndim == 1:
        P = P.reshape(-1, 1)
    if R.shape[0] != u.shape[0] or P.shape[0] != u.shape[0]:
        raise DimensionMismatch(f"reconstructions {R.shape}, u {u.shape}, probes {P.shape}")
    pairings = np.abs(P.T @ (R - u[:, None]))
    steps = pairings.shape[1] - 1
    if steps > 0:
        frac = np.sum(np.diff(pairings, axis=1) < 0.0, axis=1) / steps
    else:
        frac = np.zeros(pairings.shape[0])
    return ProbeTable(pairings, frac)


def _permutation(count, seed):
    return np.random.default_rng(seed).permutation(count)


def ortho_error_curve(
    ts: TrainingSet,
    methods,
    schedule,
    seeds=(0,),
    cfg: ToleranceConfig = DEFAULT_TOLERANCES,
) -> list[EpsRow]:
    """Orthonormality error of each backend on the first ``n`` columns of seeded permutations."""
    rows = []
    for seed in seeds:
        perm = _permutation(ts.count, seed)
        for method in methods:
            method = Method(method)
            for n in schedule:
                if not 1 <= n <= ts.count:
                    raise ValueError(f"n={n} outside 1..{ts.count}")
                sys = orthonormalize(ts.subset(perm[:n]), method, cfg)
                rows.append(EpsRow(method.value, int(n), int(seed), sys.ortho_error))
    return rows


def _reconstruct_once(ts, method, y, reg, cfg):
    if method is Method.FRAME:
        return reconstruct_frame(build_frame_system(ts, reg), ts, y)
    return reconstruct_ortho(orthonormalize(ts, method, cfg), y)


def bench_reconstruction(
    ts: TrainingSet,
    methods,
    schedule,
    repetitions: int = 5,
    y=None,
    threads: int | None = 1,
    reg: Regularization | None = None,
    cfg: ToleranceConfig = DEFAULT_TOLERANCES,
) -> list[BenchRecord]:
    """Median wall-clock time of a full reconstruction (system build plus solve).

    One untimed warm-up precedes the timed repetitions. ``threads`` caps the
    BLAS thread pool (``None`` leaves it alone).
    """
    if repetitions < 3:
        raise ValueError("at least 3 repetitions are required")
    if y is None:
        y = ts.outputs.sum(axis=1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    records = []
    limits = threadpool_limits(threads) if threads else None
    try:
        for method in methods:
            method = Method(method)
            for n in schedule:
                head = ts.head(n)
                _reconstruct_once(head, method, y, reg, cfg)
                samples = []
                for _ in range(repetitions):
                    t0 = time.perf_counter()
                    _reconstruct_once(head, method, y, reg, cfg)
                    samples.append(max(time.perf_counter() - t0, 1e-9))
                records.append(BenchRecord(
                    method.value, int(n), ts.outputs.shape[0], ts.inputs.shape[0],
                    statistics.median(samples), repetitions, tuple(samples),
                ))
    finally:
        if limits is not None:
            limits.restore_original_limits()
    return records


def recon_error_metrics(u_n, u_truth) -> dict:
    """Relative l2 error and maximum absolute deviation."""
    a = np.asarray(u_n, dtype=np.float64).reshape(-1)
    b = np.asarray(u_truth, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise DimensionMismatch(f"reconstruction has {a.size} entries, truth has {b.size}")
    diff = a - b
    err = np.linalg.norm(diff)
    ref = np.linalg.norm(b)
    if ref == 0.0:
        rel = 0.0 if err == 0.0 else float("inf")
    else:
        rel = float(err / ref)
    return {"rel_l2": rel, "max_abs": float(np.abs(diff).max(initial=0.0))}


# Writers -------------------------------------------------------------------

def _write_rows(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _fmt(x: float) -> str:
    return repr(float(x))


def write_eps_csv(rows, path):
    return _write_rows(path, EPS_HEADER, ((r.method, r.n, r.seed, _fmt(r.eps_ortho)) for r in rows))


def write_bench_csv(records, path):
    return _write_rows(
        path, BENCH_HEADER,
        ((r.method, r.n, r.h, r.k, _fmt(r.seconds), r.reps) for r in records),
    )


def write_probe_csv(table: ProbeTable, path):
    return _write_rows(path, PROBE_HEADER, ((p, n, _fmt(v)) for p, n, v in table.rows()))


def write_assumption_csvs(report: AssumptionReport, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    return [
        _write_rows(out_dir / "assume_l1.csv", ("m", "l1_partial_sum"),
                    ((m, _fmt(v)) for m, v in enumerate(report.l1_partial_sums, start=1))),
        _write_rows(out_dir / "assume_beta.csv", ("n", "i", "beta_sq_sum"),
                    ((n, i, _fmt(v)) for (n, i), v in sorted(report.beta_sq_sums.items()))),
        _write_rows(out_dir / "assume_c.csv", ("n", "i", "c_sq_sum"),
                    ((n, i, _fmt(v)) for (n, i), v in sorted(report.c_sq_sums.items()))),
    ]


def read_csv_rows(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


# Plots ---------------------------------------------------------------------

def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed element ids so identical data gives identical SVG bytes
    matplotlib.rcParams["svg.hashsalt"] = "ddrp"
    fig, ax = plt.subplots(figsize=(6, 4))
    return plt, fig, ax


def _series(points):
    groups: dict = {}
    for key, x, y in points:
        groups.setdefault(key, []).append((x, y))
    return {k: sorted(v) for k, v in groups.items()}


def plot_eps_curve(rows, path):
    """Error curves over n, one line per (method, seed), log-scaled y axis."""
    plt, fig, ax = _figure()
    for (method, seed), pts in _series(((r.method, r.seed), r.n, r.eps_ortho) for r in rows).items():
        xs, ys = zip(*pts)
        # exact zeros cannot be drawn on a log axis
        ys = [max(v, np.finfo(np.float64).tiny) for v in ys]
        ax.plot(xs, ys, marker="o", markersize=3, label=f"{method} (seed {seed})")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("eps_ortho")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_bench(records, path):
    plt, fig, ax = _figure()
    for method, pts in _series((r.method, r.n, r.seconds) for r in records).items():
        xs, ys = zip(*pts)
        ax.plot(xs, ys, marker="o", markersize=3, label=method)
    ax.set_xlabel("n")
    ax.set_ylabel("median seconds")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
