"""Forward operators used to generate training pairs, plus the reference oracle.

The Radon projector is pixel driven: every pixel deposits its intensity on
the detector at offset ``t = (x - c) cos(theta) + (y - c) sin(theta)`` from
the centre, split linearly between the two nearest bins. Bins have unit
width and their centres are symmetric about ``t = 0``. This makes the
operator exactly linear and mass conserving per angle.

Images are flattened row-major (``x`` is the column index, ``y`` the row
index); sinograms are M x K arrays and flatten row-major as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, GeometryMismatch, InvalidTrainingPair
from .ortho import TrainingSet


def min_bins(side: int) -> int:
    """Smallest detector that covers the image diagonal."""
    return max(2, math.ceil(math.sqrt(2.0) * side))


@dataclass(frozen=True)
class SinogramGeometry:
    image_side: int
    num_angles: int
    num_bins: int

    def __post_init__(self):
        if self.image_side < 1 or self.num_angles < 1:
            raise GeometryMismatch("image side and angle count must be positive")
        if self.num_bins < min_bins(self.image_side):
            raise GeometryMismatch(
                f"{self.num_bins} bins cannot cover a {self.image_side}x{self.image_side} image; "
                f"need at least {min_bins(self.image_side)}"
            )

    @classmethod
    def for_side(cls, side: int, num_angles: int, num_bins: int | None = None) -> "SinogramGeometry":
        return cls(side, num_angles, min_bins(side) if num_bins is None else num_bins)

    @property
    def angles(self) -> np.ndarray:
        return np.arange(self.num_angles) * (np.pi / self.num_angles)

    @property
    def num_pixels(self) -> int:
        return self.image_side ** 2

    @property
    def sinogram_shape(self) -> tuple[int, int]:
        return self.num_bins, self.num_angles

    @property
    def num_measurements(self) -> int:
        return self.num_bins * self.num_angles


@lru_cache(maxsize=16)
def projection_matrix(geom: SinogramGeometry) -> sp.csr_matrix:
    """Sparse (M*K) x (s*s) matrix of the projector, rows ordered like ``sino.ravel()``."""
    s, K, M = geom.image_side, geom.num_angles, geom.num_bins
    c = (s - 1) / 2.0
    rows_idx, cols_idx = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
    dx = (cols_idx - c).ravel()
    dy = (rows_idx - c).ravel()
    pixel = np.arange(s * s)

    rows, cols, vals = [], [], []
    for k, theta in enumerate(geom.angles):
        pos = dx * math.cos(theta) + dy * math.sin(theta) + (M - 1) / 2.0
        lower = np.clip(np.floor(pos).astype(np.intp), 0, M - 2)
        frac = pos - lower
        # sinogram is M x K, so bin m at angle k sits at m*K + k
        rows += [lower * K + k, (lower + 1) * K + k]
        cols += [pixel, pixel]
        vals += [1.0 - frac, frac]
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(M * K, s * s),
    )
    return A.tocsr()


def radon_forward(image, geom: SinogramGeometry) -> np.ndarray:
    """Parallel-beam projection of an s x s image into an M x K sinogram."""
    image = np.asarray(image, dtype=np.float64)
    s = geom.image_side
    if image.shape != (s, s):
        raise GeometryMismatch(f"image is {image.shape}, geometry expects {(s, s)}")
    return (projection_matrix(geom) @ image.ravel()).reshape(geom.sinogram_shape)


@dataclass(frozen=True)
class RadonOperator:
    geometry: SinogramGeometry

    @property
    def shape(self) -> tuple[int, int]:
        return self.geometry.num_measurements, self.geometry.num_pixels

    def __call__(self, u) -> np.ndarray:
        s = self.geometry.image_side
        u = np.asarray(u, dtype=np.float64)
        if u.size != s * s:
            raise DimensionMismatch(f"vector of length {u.size} is not an {s}x{s} image")
        return radon_forward(u.reshape(s, s), self.geometry).ravel()

    def as_matrix(self) -> np.ndarray:
        return projection_matrix(self.geometry).toarray()


@dataclass(frozen=True)
class MatrixOperator:
    """Explicit operator ``T`` given by an h x k matrix."""

    matrix: np.ndarray
    injective_hint: bool = False

    def __post_init__(self):
        A = np.asarray(self.matrix, dtype=np.float64)
        if A.ndim != 2:
            raise DimensionMismatch("operator matrix must be 2-D")
        object.__setattr__(self, "matrix", A)
        if self.injective_hint:
            if A.shape[0] < A.shape[1]:
                raise InvalidTrainingPair("a wide matrix cannot be injective")
            sv = np.linalg.svd(A, compute_uv=False)
            if sv.size == 0 or sv[-1] <= sv[0] * A.shape[1] * np.finfo(np.float64).eps:
                raise InvalidTrainingPair("operator flagged injective has a numerically zero singular value")

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def __call__(self, u) -> np.ndarray:
        return apply(self, u)

    def as_matrix(self) -> np.ndarray:
        return self.matrix


def apply(op, u) -> np.ndarray:
    """Evaluate ``T u``."""
    u = np.asarray(u, dtype=np.float64)
    if isinstance(op, MatrixOperator):
        if u.ndim != 1 or u.shape[0] != op.matrix.shape[1]:
            raise DimensionMismatch(f"operator is {op.matrix.shape}, vector has shape {u.shape}")
        return op.matrix @ u
    return op(u)


def make_training_set(op, inputs) -> TrainingSet:
    """Pair each input column with its image under ``op``."""
    U = np.asarray(inputs, dtype=np.float64)
    if U.ndim == 1:
        U = U.reshape(-1, 1)
    zero = np.flatnonzero(~np.any(U != 0.0, axis=0))
    if zero.size:
        raise InvalidTrainingPair(f"zero input column(s) at index {zero.tolist()}")
    Y = np.column_stack([apply(op, U[:, i]) for i in range(U.shape[1])])
    return TrainingSet(U, Y)


def _pinv_apply(M, y, rtol=None):
    W, s, Vt = np.linalg.svd(M, full_matrices=False)
    if rtol is None:
        rtol = max(M.shape) * np.finfo(np.float64).eps
    keep = s > rtol * s.max(initial=0.0)
    return Vt[keep].T @ ((W[:, keep].T @ y) / s[keep])


def pseudo_inverse_oracle(op, inputs, y) -> np.ndarray:
    """Minimum-norm solution of ``T P_{U_n} u = y`` via singular value decompositions.

    An orthonormal basis ``V`` of span(inputs) comes from the SVD of the
    inputs; the solution is ``V (T V)^+ y``.
    """
    T = op.as_matrix() if hasattr(op, "as_matrix") else np.asarray(op, dtype=np.float64)
    U = np.asarray(inputs, dtype=np.float64)
    if U.ndim == 1:
        U = U.reshape(-1, 1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if U.shape[0] != T.shape[1] or y.shape[0] != T.shape[0]:
        raise DimensionMismatch(f"operator {T.shape}, inputs {U.shape}, y {y.shape}")
    W, s, _ = np.linalg.svd(U, full_matrices=False)
    rank = int(np.sum(s > max(U.shape) * np.finfo(np.float64).eps * s.max(initial=0.0)))
    V = W[:, :rank]
    return V @ _pinv_apply(T @ V, y)
