"""Command-line pipeline: ``gen -> radon -> reconstruct -> diagnose``.

Exit codes: 0 success, 1 data or numerical failure, 2 usage error.
Every command writes ``manifest.json`` into its output directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__, diagnostics, io
from .datasets import SplitSpec, SyntheticKind, gen_synthetic, load_corpus, split, write_corpus
from .errors import DDRPError, DimensionMismatch, SingularGram
from .frames import Regularization, build_frame_system, input_dual_coefficients, reconstruct_frame
from .operators import SinogramGeometry, min_bins, radon_forward
from .ortho import Method, ToleranceConfig, TrainingSet, orthonormalize, reconstruct_ortho

logger = logging.getLogger("ddrp")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
RESERVED_FILES = {"corpus.csv", "metrics.csv", "manifest.json"}
MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


# Argument types ------------------------------------------------------------

def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text} must be at least 1")
    return value


def regularization(text: str) -> Regularization:
    try:
        return Regularization.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def parse_schedule(text: str) -> list[int]:
    """``"10:100:10"`` (inclusive range), ``"50,100"`` or a mix of both."""
    values: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            bits = [int(b) for b in part.split(":")]
            if len(bits) == 2:
                bits.append(1)
            if len(bits) != 3 or bits[2] < 1:
                raise argparse.ArgumentTypeError(f"bad range {part!r}; use start:stop[:step]")
            values.extend(range(bits[0], bits[1] + 1, bits[2]))
        else:
            values.append(int(part))
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(f"schedule {text!r} must contain positive integers")
    return values


def schedule(text: str) -> list[int]:
    try:
        return parse_schedule(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def method_list(text: str) -> list[Method]:
    try:
        return [Method(m.strip().lower()) for m in text.split(",") if m.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def int_list(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def default_threads() -> int:
    env = os.environ.get("DDRP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logger.warning("ignoring invalid DDRP_THREADS=%r", env)
    return 1


# Shared helpers ------------------------------------------------------------

def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _jsonable(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (Method, Regularization, SyntheticKind)):
        return str(value)
    return value


def write_manifest(out_dir: Path, args, inputs: dict, seeds: dict, started: str) -> Path:
    flags = {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in ("func",)}
    manifest = {
        "command": args.command,
        "flags": flags,
        "inputs": dict(sorted(inputs.items())),
        "seeds": seeds,
        "version": __version__,
        "started": started,
        "finished": _utcnow(),
    }
    path = out_dir / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def item_paths(directory: Path) -> list[Path]:
    """Corpus items in filename order: PGM images if any, else DDRP, else CSV matrices."""
    if not directory.is_dir():
        raise DDRPError(f"{directory} is not a directory")
    files = [p for p in sorted(directory.iterdir()) if p.is_file() and p.name not in RESERVED_FILES]
    for suffix in (".pgm", ".ddrp", ".csv"):
        chosen = [p for p in files if p.suffix.lower() == suffix]
        if chosen:
            return chosen
    raise DDRPError(f"no .pgm, .ddrp or .csv items in {directory}")


def load_items(directory: Path):
    """Stack the items of a directory as columns; returns (matrix, ids, item shape, paths)."""
    paths = item_paths(directory)
    arrays = [io.read_item(p) for p in paths]
    shape = arrays[0].shape
    for p, a in zip(paths, arrays):
        if a.shape != shape:
            raise DimensionMismatch(f"{p.name} has shape {a.shape}, expected {shape}")
    return np.column_stack([a.ravel() for a in arrays]), [p.stem for p in paths], shape, paths


def checksums(paths) -> dict:
    return {str(p): io.sha256_file(p) for p in paths}


def _is_image(shape) -> bool:
    return len(shape) == 2 and shape[0] == shape[1] and shape[0] > 1


# Commands ------------------------------------------------------------------

def cmd_gen(args) -> int:
    started = _utcnow()
    out = Path(args.out)
    corpus = gen_synthetic(args.kind, args.side, args.count, args.seed)
    if args.test_count:
        train, test = split(corpus, SplitSpec(args.count - args.test_count, args.test_count, args.shuffle_seed))
        write_corpus(train, out / "train", binary=not args.ascii)
        write_corpus(test, out / "test", binary=not args.ascii)
    else:
        write_corpus(corpus, out, binary=not args.ascii)
    write_manifest(out, args, {}, {"seed": args.seed, "shuffle_seed": args.shuffle_seed}, started)
    logger.info("wrote %d %s images to %s", args.count, args.kind.value, out)
    return EXIT_OK


def cmd_radon(args) -> int:
    started = _utcnow()
    src = Path(args.input)
    corpus = load_corpus(src, args.side)
    bins = args.bins if args.bins is not None else min_bins(corpus.side)
    if bins < min_bins(corpus.side):
        raise UsageError(f"--bins {bins} is too small for side {corpus.side}; minimum is {min_bins(corpus.side)}")
    geom = SinogramGeometry(corpus.side, args.angles, bins)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def project(item):
        ident, img = item
        io.write_ddrp(out / f"{ident}.ddrp", radon_forward(img, geom))

    with threadpool_limits(args.threads), ThreadPoolExecutor(max_workers=args.threads) as pool:
        list(pool.map(project, zip(corpus.ids, corpus.items)))
    inputs = checksums(src / f"{ident}.pgm" for ident in corpus.ids)
    write_manifest(out, args, inputs, {}, started)
    logger.info("projected %d images (side %d, K=%d, M=%d) into %s",
                len(corpus), corpus.side, geom.num_angles, geom.num_bins, out)
    return EXIT_OK


def _training_set(args):
    U, uids, ushape, upaths = load_items(Path(args.train_inputs))
    Y, yids, _, ypaths = load_items(Path(args.train_outputs))
    if U.shape[1] != Y.shape[1]:
        raise DimensionMismatch(
            f"{U.shape[1]} training inputs but {Y.shape[1]} training outputs"
        )
    return TrainingSet(U, Y), ushape, list(upaths) + list(ypaths)


def cmd_reconstruct(args) -> int:
    started = _utcnow()
    ts, ushape, used = _training_set(args)
    Ytest, test_ids, _, test_paths = load_items(Path(args.test_outputs))
    if Ytest.shape[0] != ts.outputs.shape[0]:
        raise DimensionMismatch(
            f"test outputs have length {Ytest.shape[0]}, training outputs {ts.outputs.shape[0]}"
        )
    used += list(test_paths)
    truth = None
    if args.truth:
        truth, _, _, truth_paths = load_items(Path(args.truth))
        if truth.shape[1] != Ytest.shape[1]:
            raise DimensionMismatch(f"{truth.shape[1]} truth items for {Ytest.shape[1]} test items")
        used += list(truth_paths)

    cfg = ToleranceConfig(dependence_tol=args.tol)
    with threadpool_limits(args.threads):
        if args.method is Method.FRAME:
            fs = build_frame_system(ts, args.reg)
            solve = lambda y: reconstruct_frame(fs, ts, y)  # noqa: E731
        else:
            sys_ = orthonormalize(ts, args.method, cfg)
            solve = lambda y: reconstruct_ortho(sys_, y)  # noqa: E731
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(solve, Ytest.T))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for j, (ident, rec) in enumerate(zip(test_ids, results)):
        u = rec.u_n.reshape(ushape)
        io.write_ddrp(out / f"{ident}.ddrp", u)
        if _is_image(ushape):
            io.write_pgm(out / f"{ident}.pgm", u)
        row = [ident, repr(rec.residual), "", ""]
        if truth is not None:
            m = diagnostics.recon_error_metrics(rec.u_n, truth[:, j])
            row[2:] = [repr(m["rel_l2"]), repr(m["max_abs"])]
        rows.append(row)
    diagnostics._write_rows(out / "metrics.csv", ("item", "residual", "rel_l2", "max_abs"), rows)
    write_manifest(out, args, checksums(used), {}, started)
    logger.info("reconstructed %d items with %s into %s", len(rows), args.method.value, out)
    return EXIT_OK


def _read_vector(path) -> np.ndarray:
    return io.read_item(Path(path)).ravel()


def cmd_diagnose(args) -> int:
    started = _utcnow()
    if not (args.eps or args.bench or args.assume):
        raise UsageError("choose at least one of --eps, --bench, --assume")
    if args.assume and not args.u_dagger:
        raise UsageError("--assume needs --u-dagger")
    ts, _, used = _training_set(args)
    N = ts.count
    sched = args.n or list(range(1, N + 1))
    if max(sched) > N:
        raise UsageError(f"schedule reaches n={max(sched)} but only {N} training pairs are available")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = ToleranceConfig(dependence_tol=args.tol)

    eps_rows = bench = None
    if args.eps:
        methods = [m for m in args.methods if m is not Method.FRAME]
        with threadpool_limits(args.threads):
            eps_rows = diagnostics.ortho_error_curve(ts, methods, sched, args.seeds, cfg)
        diagnostics.write_eps_csv(eps_rows, out / "eps.csv")
    if args.bench:
        bench = diagnostics.bench_reconstruction(
            ts, args.methods, sched, args.reps, threads=args.threads, reg=args.reg, cfg=cfg,
        )
        diagnostics.write_bench_csv(bench, out / "bench.csv")
    if args.assume:
        u_dagger = _read_vector(args.u_dagger)
        used.append(Path(args.u_dagger))
        with threadpool_limits(args.threads):
            report = diagnostics.assumption_report(ts, u_dagger, sched, path=args.path, reg=args.reg, cfg=cfg)
            diagnostics.write_assumption_csvs(report, out)
            if args.y:
                y = _read_vector(args.y)
                used.append(Path(args.y))
            else:
                # equals T u when u lies in the span of the training inputs
                y = ts.outputs @ input_dual_coefficients(ts.inputs, u_dagger, args.reg)
            if args.probes:
                probes = io.read_item(Path(args.probes))
                used.append(Path(args.probes))
            else:
                probes = u_dagger.reshape(-1, 1)
            method = Method.FRAME if args.path == "frame" else Method.MODIFIED_GS
            seq = diagnostics.reconstruction_sequence(ts, y, method, args.reg, cfg)
            table = diagnostics.weak_convergence_probe(seq, u_dagger, probes)
        diagnostics.write_probe_csv(table, out / "probes.csv")

    if args.plot:
        plot = Path(args.plot)
        if eps_rows is not None:
            diagnostics.plot_eps_curve(eps_rows, plot)
        if bench is not None:
            target = plot.with_name(plot.stem + "_bench.svg") if eps_rows is not None else plot
            diagnostics.plot_bench(bench, target)
    write_manifest(out, args, checksums(used), {"seeds": args.seeds}, started)
    return EXIT_OK


# Parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddrp", description="Data-driven regularization by projection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic PGM corpus")
    p.add_argument("--kind", type=SyntheticKind, choices=list(SyntheticKind), default=SyntheticKind.DIGITSLIKE)
    p.add_argument("--side", type=positive_int, required=True)
    p.add_argument("--count", type=positive_int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-count", type=positive_int, default=None,
                   help="also split into train/ and test/ subdirectories")
    p.add_argument("--shuffle-seed", type=int, default=None)
    p.add_argument("--ascii", action="store_true", help="write P2 instead of P5")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("radon", help="parallel-beam sinograms of a PGM corpus")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--side", type=positive_int, default=None)
    p.add_argument("--angles", type=positive_int, required=True)
    p.add_argument("--bins", type=positive_int, default=None, help="default: ceil(sqrt(2) * side)")
    p.add_argument("--threads", type=positive_int, default=default_threads())
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_radon)

    def training_args(p):
        p.add_argument("--train-inputs", required=True)
        p.add_argument("--train-outputs", required=True)
        p.add_argument("--reg", type=regularization, default=Regularization.none(),
                       help="none | truncate:<rcond> | ridge:<lambda>")
        p.add_argument("--tol", type=float, default=1e-10, help="dependence threshold for the backends")
        p.add_argument("--threads", type=positive_int, default=default_threads())
        p.add_argument("--out", required=True)

    p = sub.add_parser("reconstruct", help="reconstruct test items from training pairs")
    training_args(p)
    p.add_argument("--test-outputs", required=True)
    p.add_argument("--method", type=Method, choices=list(Method), default=Method.FRAME)
    p.add_argument("--truth", default=None, help="directory of ground-truth inputs for metrics.csv")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("diagnose", help="error curves, timings and assumption checks")
    training_args(p)
    p.add_argument("--eps", action="store_true", help="orthonormality error curves")
    p.add_argument("--bench", action="store_true", help="reconstruction timings")
    p.add_argument("--assume", action="store_true", help="assumption report and weak-convergence probes")
    p.add_argument("--methods", type=method_list, default=[Method.QR, Method.FRAME])
    p.add_argument("--n", type=schedule, default=None, help="e.g. 10:100:10 or 50,100")
    p.add_argument("--seeds", type=int_list, default=[0])
    p.add_argument("--reps", type=positive_int, default=5)
    p.add_argument("--path", choices=("ortho", "frame"), default="ortho")
    p.add_argument("--u-dagger", default=None)
    p.add_argument("--y", default=None)
    p.add_argument("--probes", default=None, help="matrix file with one probe per column")
    p.add_argument("--plot", default=None, metavar="OUT.svg")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "diagnose" and args.bench and args.reps < 3:
            raise UsageError("--reps must be at least 3")
        if args.command == "gen" and args.test_count and args.test_count >= args.count:
            raise UsageError("--test-count must be smaller than --count")
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ddrp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SingularGram as exc:
        print(f"ddrp: error: {exc}\nhint: rerun with --reg truncate (or --reg ridge:<lambda>)", file=sys.stderr)
        return EXIT_FAILURE
    except (DDRPError, OSError) as exc:
        print(f"ddrp: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
