"""Finite frames built from training outputs and the Gram-system reconstruction.

For outputs ``y_1..y_n`` with Gram matrix ``G_ij = <y_i, y_j>`` the frame
coefficients ``X_i = <y, S_n^{-1} y_i>`` of the projection ``P_{Y_n} y`` solve

    G X = (<y, y_j>)_j,

and the reconstruction is ``u_n = sum_i X_i u_i``, ``T u_n = sum_i X_i y_i``.
No orthonormalization is involved; redundant outputs are handled by a
truncated eigen-solve that returns the minimum-norm coefficient vector.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as la
from scipy.linalg import lapack

from .errors import DimensionMismatch, NotInSpan, SingularGram, ZeroFamily
from .ortho import Method, Reconstruction, TrainingSet

# Cholesky is trusted down to this reciprocal condition number
CHOLESKY_RCOND = 1e-12
# below this the plain (unregularized) system is refused
SINGULAR_RCOND = 1e-14
DEFAULT_RCOND_CUT = 1e-12
SPAN_TOL = 1e-8


class RegKind(str, enum.Enum):
    NONE = "none"
    TRUNCATE = "truncate"
    RIDGE = "ridge"


@dataclass(frozen=True)
class Regularization:
    kind: RegKind = RegKind.NONE
    value: float = 0.0

    @classmethod
    def none(cls) -> "Regularization":
        return cls(RegKind.NONE, 0.0)

    @classmethod
    def truncate(cls, rcond_cut: float = DEFAULT_RCOND_CUT) -> "Regularization":
        if not rcond_cut > 0:
            raise ValueError("truncation threshold must be positive")
        return cls(RegKind.TRUNCATE, float(rcond_cut))

    @classmethod
    def ridge(cls, lam: float) -> "Regularization":
        if not lam > 0:
            raise ValueError("ridge parameter must be positive")
        return cls(RegKind.RIDGE, float(lam))

    @classmethod
    def parse(cls, text: str) -> "Regularization":
        """Parse ``none``, ``truncate[:<rcond>]`` or ``ridge:<lambda>``."""
        name, _, arg = text.strip().lower().partition(":")
        if name == "none" and not arg:
            return cls.none()
        if name == "truncate":
            return cls.truncate(float(arg)) if arg else cls.truncate()
        if name == "ridge" and arg:
            return cls.ridge(float(arg))
        raise ValueError(f"invalid regularization {text!r}; use none, truncate:<rcond> or ridge:<lambda>")

    def __str__(self) -> str:
        if self.kind is RegKind.NONE:
            return "none"
        return f"{self.kind.value}:{self.value:g}"


def gram_matrix(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=np.float64)
    G = Y.T @ Y
    return 0.5 * (G + G.T)


def _nonzero_spectrum(w, cut):
    w = np.asarray(w)
    wmax = w.max(initial=0.0)
    if wmax <= 0.0:
        return w[:0]
    return w[w > cut * wmax]


def _numerical_zero(n: int) -> float:
    return max(n, 1) * np.finfo(np.float64).eps


@dataclass(frozen=True, eq=False)
class FrameSystem:
    """Gram system of a family of training outputs, factorized for solves.

    ``strategy`` is ``"cholesky"`` or ``"eigen"``; the eigen path stores the
    retained spectrum so that solves return minimum-norm coefficients.
    """

    outputs_ref: np.ndarray
    gram: np.ndarray
    regularization: Regularization
    rcond: float
    strategy: str
    _factor: tuple = field(repr=False)

    @property
    def count(self) -> int:
        return self.gram.shape[0]

    @cached_property
    def spectrum(self) -> np.ndarray:
        """Eigenvalues of the (unregularized) Gram matrix, ascending."""
        if self.strategy == "eigen" and self.regularization.kind is not RegKind.RIDGE:
            return self._factor[2]
        return la.eigh(self.gram, eigvals_only=True)

    @cached_property
    def bounds(self) -> tuple[float, float]:
        """Frame bounds ``(A, B)`` on the span: extreme nonzero Gram eigenvalues."""
        cut = (
            self.regularization.value
            if self.regularization.kind is RegKind.TRUNCATE
            else _numerical_zero(self.count)
        )
        nz = _nonzero_spectrum(self.spectrum, cut)
        if nz.size == 0:
            return 0.0, 0.0
        return float(nz.min()), float(nz.max())

    def solve(self, rhs) -> np.ndarray:
        """Solve ``G X = rhs`` (vector or matrix right-hand side)."""
        rhs = np.asarray(rhs, dtype=np.float64)
        if rhs.shape[0] != self.count:
            raise DimensionMismatch(f"right-hand side has {rhs.shape[0]} rows, Gram is {self.count}x{self.count}")
        if self.strategy == "cholesky":
            return la.cho_solve(self._factor, rhs)
        V, inv_w, _ = self._factor
        if rhs.ndim == 1:
            return V @ (inv_w * (V.T @ rhs))
        return V @ (inv_w[:, None] * (V.T @ rhs))

    def analysis(self, y) -> np.ndarray:
        """Inner products ``<y, y_j>``."""
        y = np.asarray(y, dtype=np.float64)
        if y.shape[0] != self.outputs_ref.shape[0]:
            raise DimensionMismatch(f"y has length {y.shape[0]}, outputs have {self.outputs_ref.shape[0]} rows")
        return self.outputs_ref.T @ y

    def project(self, y) -> np.ndarray:
        """Orthogonal projection of ``y`` onto the span of the outputs."""
        return self.outputs_ref @ self.solve(self.analysis(y))


def _cholesky(G):
    try:
        c, lower = la.cho_factor(G, lower=False, check_finite=False)
    except la.LinAlgError:
        return None, 0.0
    anorm = np.abs(G).sum(axis=0).max()
    rcond, info = lapack.dpocon(c, anorm)
    if info != 0:
        return None, 0.0
    return (c, lower), float(rcond)


def _eigen_factor(G, cut):
    w, V = la.eigh(G)
    wmax = w[-1] if w.size else 0.0
    rcond = max(w[0], 0.0) / wmax if wmax > 0 else 0.0
    keep = w > cut * wmax if wmax > 0 else np.zeros_like(w, dtype=bool)
    inv_w = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    return (V, inv_w, w), rcond


def build_frame_system(ts, reg: Regularization | None = None) -> FrameSystem:
    """Form the Gram matrix of the training outputs and factorize it.

    ``ts`` may be a :class:`TrainingSet` or a bare outputs matrix.

    Strategy: Cholesky when it succeeds with reciprocal condition at least
    1e-12 (and above the truncation threshold, if any); otherwise an
    eigendecomposition. Without regularization a Gram matrix with
    reciprocal condition below 1e-14 raises :class:`SingularGram`.
    """
    reg = reg or Regularization.none()
    Y = ts.outputs if isinstance(ts, TrainingSet) else np.asarray(ts, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    G = gram_matrix(Y)
    n = G.shape[0]

    if reg.kind is RegKind.RIDGE:
        factor, rcond = _cholesky(G + reg.value * np.eye(n))
        if factor is None:
            raise SingularGram("ridge-regularized Gram matrix is not positive definite")
        return FrameSystem(Y, G, reg, rcond, "cholesky", factor)

    threshold = CHOLESKY_RCOND
    if reg.kind is RegKind.TRUNCATE:
        threshold = max(threshold, reg.value)
    factor, rcond = _cholesky(G)
    if factor is not None and rcond >= threshold:
        return FrameSystem(Y, G, reg, rcond, "cholesky", factor)

    if reg.kind is RegKind.TRUNCATE:
        factor, rcond = _eigen_factor(G, reg.value)
        return FrameSystem(Y, G, reg, rcond, "eigen", factor)

    factor, rcond = _eigen_factor(G, 0.0)
    if rcond < SINGULAR_RCOND:
        raise SingularGram(
            f"Gram matrix is numerically singular (rcond={rcond:.3g}); "
            "redundant training outputs need truncation, e.g. --reg truncate:1e-12"
        )
    return FrameSystem(Y, G, reg, rcond, "eigen", factor)


def solve_frame_coefficients(fs: FrameSystem, y) -> np.ndarray:
    """Coefficients ``X`` of ``P_{Y_n} y`` in the family, ``X_i = <y, S_n^{-1} y_i>``."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    return fs.solve(fs.analysis(y))


def _check_pair(fs: FrameSystem, ts: TrainingSet):
    if ts.outputs.shape != fs.outputs_ref.shape:
        raise DimensionMismatch("frame system was not built from this training set")


def reconstruct_frame(fs: FrameSystem, ts: TrainingSet, y) -> Reconstruction:
    _check_pair(fs, ts)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    X = solve_frame_coefficients(fs, y)
    Tu = ts.outputs @ X
    return Reconstruction(
        coefficients=X,
        u_n=ts.inputs @ X,
        Tu_n=Tu,
        residual=float(np.linalg.norm(y - Tu)),
        method=Method.FRAME,
    )


def apply_restricted_frame_operator(fs: FrameSystem, v) -> np.ndarray:
    """``S_n v = sum_i <v, y_i> y_i`` for ``v`` in the span of the outputs."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    coeffs = fs.analysis(v)
    norm = np.linalg.norm(v)
    if norm > 0.0:
        off = np.linalg.norm(v - fs.outputs_ref @ fs.solve(coeffs))
        if off > SPAN_TOL * norm:
            raise NotInSpan(f"vector is {off / norm:.3g} (relative) away from the span")
    return fs.outputs_ref @ coeffs


def frame_bounds(outputs, rcond_cut: float | None = None) -> tuple[float, float]:
    """Extreme nonzero eigenvalues of the Gram matrix of ``outputs``.

    On the span these are the optimal frame bounds; for independent columns
    they are also the Riesz constants ``A ||c||^2 <= ||sum c_i y_i||^2 <= B ||c||^2``.
    """
    Y = np.asarray(outputs, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    if Y.size == 0 or not np.any(Y):
        raise ZeroFamily("frame bounds need at least one nonzero vector")
    w = la.eigh(gram_matrix(Y), eigvals_only=True)
    cut = _numerical_zero(Y.shape[1]) if rcond_cut is None else rcond_cut
    nz = _nonzero_spectrum(w, cut)
    return float(nz.min()), float(nz.max())


def dual_family(fs: FrameSystem) -> np.ndarray:
    """Canonical dual ``d_i = S_n^{-1} y_i = sum_j (G^{-1})_{ji} y_j``, one per column."""
    return fs.outputs_ref @ fs.solve(np.eye(fs.count))


def input_dual_coefficients(inputs, u, reg: Regularization | None = None) -> np.ndarray:
    """``<u, S^{-1} u_i>`` where ``S`` is the frame operator of the given inputs."""
    fs = build_frame_system(np.asarray(inputs, dtype=np.float64), reg)
    return solve_frame_coefficients(fs, u)


def expansion_coefficients(ts_full: TrainingSet, n: int, reg: Regularization | None = None) -> np.ndarray:
    """Matrix ``C`` (n x N) with ``T^{-1} P_{Y_n} y_i = sum_{j<=n} C[j, i] u_j``."""
    if not 1 <= n <= ts_full.count:
        raise ValueError(f"n must lie in 1..{ts_full.count}")
    fs = build_frame_system(ts_full.outputs[:, :n], reg)
    return fs.solve(ts_full.outputs[:, :n].T @ ts_full.outputs)


def riesz_approximation(ts_full: TrainingSet, n: int, u_dagger_coeffs, reg: Regularization | None = None) -> Reconstruction:
    """Riesz-basis approximation ``sum_i a_i T^{-1} P_{Y_n} y_i`` with ``a_i = <u, S^{-1} u_i>``.

    The frame operator of the full input family is replaced by its
    restriction to the N available inputs, so ``a`` must come from
    :func:`input_dual_coefficients` on those inputs. ``extras["expansion"]``
    holds the n x N matrix of expansion coefficients.
    """
    a = np.asarray(u_dagger_coeffs, dtype=np.float64).reshape(-1)
    if a.shape[0] != ts_full.count:
        raise DimensionMismatch(f"{a.shape[0]} coefficients for {ts_full.count} training pairs")
    C = expansion_coefficients(ts_full, n, reg)
    X = C @ a
    Tu = ts_full.outputs[:, :n] @ X
    y = ts_full.outputs @ a
    return Reconstruction(
        coefficients=X,
        u_n=ts_full.inputs[:, :n] @ X,
        Tu_n=Tu,
        residual=float(np.linalg.norm(y - Tu)),
        method=Method.FRAME,
        extras={"expansion": C},
    )
