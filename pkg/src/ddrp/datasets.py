"""Image corpora: PGM ingestion, synthetic generators and train/test splits.

Images are vectorized by row-major flattening everywhere in the package.
"""

from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import io
from .errors import DimensionMismatch, EmptyCorpus, FormatError, InsufficientItems

logger = logging.getLogger(__name__)


class SyntheticKind(str, enum.Enum):
    BLOBS = "blobs"
    DIGITSLIKE = "digitslike"
    SMOOTH_RANDOM = "smoothrandom"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Corpus:
    """Equally sized square images with unique identifiers.

    ``source`` is ``"directory:<path>"`` or ``"synthetic:<kind>:<seed>"``;
    ``skipped`` lists ``(filename, reason)`` pairs rejected while loading.
    """

    items: tuple
    ids: tuple
    side: int
    source: str
    skipped: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if len(self.items) != len(self.ids):
            raise DimensionMismatch("items and identifiers differ in length")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("corpus identifiers must be unique")
        for img in self.items:
            if img.shape != (self.side, self.side):
                raise DimensionMismatch(f"item of shape {img.shape} in a side-{self.side} corpus")

    def __len__(self) -> int:
        return len(self.items)

    def matrix(self) -> np.ndarray:
        """Stack the images as columns (s*s x count)."""
        if not self.items:
            return np.zeros((self.side * self.side, 0))
        return np.column_stack([img.ravel() for img in self.items])

    def select(self, indices) -> "Corpus":
        indices = list(indices)
        return Corpus(
            items=tuple(self.items[i] for i in indices),
            ids=tuple(self.ids[i] for i in indices),
            side=self.side,
            source=self.source,
        )


@dataclass(frozen=True)
class SplitSpec:
    train_count: int
    test_count: int
    shuffle_seed: int | None = None

    def __post_init__(self):
        if self.train_count < 1 or self.test_count < 1:
            raise ValueError("train and test counts must be positive")


def load_corpus(directory, expected_side: int | None = None) -> Corpus:
    """Load every ``*.pgm`` in ``directory`` in filename order.

    Files that fail to parse, are not square, or do not match
    ``expected_side`` (or the side of the first good file) are skipped and
    listed in ``Corpus.skipped``.
    """
    directory = Path(directory)
    paths = sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() == ".pgm")
    items, ids, skipped = [], [], []
    side = expected_side
    for path in paths:
        try:
            img = io.read_pgm(path)
        except FormatError as exc:
            skipped.append((path.name, str(exc)))
            continue
        if img.shape[0] != img.shape[1]:
            skipped.append((path.name, f"not square: {img.shape[1]}x{img.shape[0]}"))
            continue
        if side is None:
            side = img.shape[0]
        if img.shape[0] != side:
            skipped.append((path.name, f"side {img.shape[0]} != expected {side}"))
            continue
        items.append(img)
        ids.append(path.stem)
    for name, reason in skipped:
        logger.warning("skipping %s: %s", name, reason)
    if not items:
        raise EmptyCorpus(f"no usable PGM images in {directory}")
    return Corpus(tuple(items), tuple(ids), side, f"directory:{directory}", tuple(skipped))


def write_corpus(corpus: Corpus, out_dir, binary: bool = True) -> Path:
    """Write one PGM per item plus ``corpus.csv`` (identifier, checksum)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for ident, img in zip(corpus.ids, corpus.items):
        path = out_dir / f"{ident}.pgm"
        io.write_pgm(path, img, binary=binary)
        rows.append((ident, io.sha256_file(path)))
    manifest = out_dir / "corpus.csv"
    with manifest.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["identifier", "checksum"])
        writer.writerows(rows)
    return manifest


# Synthetic generators --------------------------------------------------------

def _grid(side):
    r = np.arange(side, dtype=np.float64)
    return np.meshgrid(r, r, indexing="ij")


def _normalize(img):
    lo, hi = img.min(), img.max()
    if hi - lo <= 0:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


def _blobs(rng, side):
    yy, xx = _grid(side)
    img = np.zeros((side, side))
    for _ in range(rng.integers(1, 5)):
        cy, cx = rng.uniform(0.15, 0.85, size=2) * (side - 1)
        sigma = rng.uniform(side / 14, side / 5)
        amp = rng.uniform(0.3, 1.0)
        img += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
    return img / img.max()


def _segment_distance(yy, xx, p, q):
    d = q - p
    denom = d @ d
    t = np.clip(((yy - p[0]) * d[0] + (xx - p[1]) * d[1]) / denom, 0.0, 1.0) if denom > 0 else 0.0
    return np.hypot(yy - (p[0] + t * d[0]), xx - (p[1] + t * d[1]))


def _digitslike(rng, side):
    """A few thick anti-aliased pen strokes (line segments and arcs)."""
    yy, xx = _grid(side)
    dist = np.full((side, side), np.inf)
    lo, hi = 0.2 * (side - 1), 0.8 * (side - 1)
    for _ in range(rng.integers(1, 4)):
        if rng.random() < 0.5:
            pts = rng.uniform(lo, hi, size=(rng.integers(2, 4), 2))
        else:
            c = rng.uniform(0.35, 0.65, size=2) * (side - 1)
            radii = rng.uniform(0.12, 0.3, size=2) * side
            a0 = rng.uniform(0, 2 * np.pi)
            ang = a0 + np.linspace(0, rng.uniform(np.pi / 2, 2 * np.pi), 12)
            pts = np.column_stack([c[0] + radii[0] * np.sin(ang), c[1] + radii[1] * np.cos(ang)])
        for p, q in zip(pts[:-1], pts[1:]):
            dist = np.minimum(dist, _segment_distance(yy, xx, p, q))
    width = rng.uniform(0.045, 0.075) * side
    return np.clip(width + 0.5 - dist, 0.0, 1.0)


def _smooth_random(rng, side):
    noise = rng.standard_normal((side, side))
    return _normalize(ndimage.gaussian_filter(noise, sigma=side / 12, mode="wrap"))


_GENERATORS = {
    SyntheticKind.BLOBS: _blobs,
    SyntheticKind.DIGITSLIKE: _digitslike,
    SyntheticKind.SMOOTH_RANDOM: _smooth_random,
}


def gen_synthetic(kind, side: int, count: int, seed: int, tol: float = 1e-10, max_tries: int = 100) -> Corpus:
    """Deterministic synthetic corpus.

    While fewer than ``side**2`` images have been accepted, an image whose
    component outside the span of the previous ones is at most
    ``tol * ||image||`` is discarded and redrawn.
    """
    kind = SyntheticKind(kind)
    if side < 1 or count < 1:
        raise ValueError("side and count must be positive")
    rng = np.random.default_rng(seed)
    draw = _GENERATORS[kind]
    dim = side * side
    basis = np.empty((dim, min(count, dim)))
    rank = 0
    items = []
    for _ in range(count):
        for _attempt in range(max_tries):
            img = draw(rng, side)
            v = img.ravel()
            norm = np.linalg.norm(v)
            if norm == 0.0:
                continue
            if rank >= dim:
                break
            res = v.copy()
            for _pass in range(2):
                res -= basis[:, :rank] @ (basis[:, :rank].T @ res)
            rnorm = np.linalg.norm(res)
            if rnorm > tol * norm:
                basis[:, rank] = res / rnorm
                rank += 1
                break
        else:
            raise RuntimeError(f"could not draw an independent {kind.value} image in {max_tries} tries")
        items.append(img)
    ids = tuple(f"{kind.value}_{i:05d}" for i in range(count))
    return Corpus(tuple(items), ids, side, f"synthetic:{kind.value}:{seed}")


def split(corpus: Corpus, spec: SplitSpec) -> tuple[Corpus, Corpus]:
    """Disjoint train/test corpora, optionally after a seeded shuffle."""
    if spec.train_count + spec.test_count > len(corpus):
        raise InsufficientItems(
            f"need {spec.train_count} + {spec.test_count} items, corpus has {len(corpus)}"
        )
    order = np.arange(len(corpus))
    if spec.shuffle_seed is not None:
        order = np.random.default_rng(spec.shuffle_seed).permutation(len(corpus))
    train = order[:spec.train_count]
    test = order[spec.train_count:spec.train_count + spec.test_count]
    return corpus.select(train), corpus.select(test)


def near_dependent_columns(dim: int, count: int, correlation: float = 0.999, seed: int = 0) -> np.ndarray:
    """Unit columns ``sqrt(rho) a + sqrt(1 - rho) z_i`` with ``z_i`` orthogonal to ``a``.

    Pairwise correlations are ``rho + (1 - rho) <z_i, z_j>``, i.e. within
    about ``(1 - rho) / sqrt(dim)`` of ``rho``.
    """
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(dim)
    a /= np.linalg.norm(a)
    Z = rng.standard_normal((dim, count))
    Z -= np.outer(a, a @ Z)
    Z /= np.linalg.norm(Z, axis=0)
    Y = np.sqrt(correlation) * a[:, None] + np.sqrt(1.0 - correlation) * Z
    return Y / np.linalg.norm(Y, axis=0)
