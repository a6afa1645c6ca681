"""Orthonormalization backends over training outputs.

Every backend turns the training outputs ``y_i`` into an orthonormal family
``ybar_i`` and produces matched preimages ``ubar_i`` with ``T ubar_i = ybar_i``
without ever evaluating ``T``: the preimages are formed from the training
inputs with exactly the linear combination that produced ``ybar_i`` from the
outputs. The projected solution is then

    u_n = sum_i <y, ybar_i> ubar_i,    T u_n = sum_i <y, ybar_i> ybar_i = P_{Y_n} y.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import AllColumnsDependent, DimensionMismatch, InvalidTrainingPair


class Method(str, enum.Enum):
    CLASSICAL_GS = "cgs"
    MODIFIED_GS = "mgs"
    HOUSEHOLDER = "householder"
    QR = "qr"
    FRAME = "frame"

    def __str__(self) -> str:
        return self.value


ORTHO_METHODS = (Method.CLASSICAL_GS, Method.MODIFIED_GS, Method.HOUSEHOLDER, Method.QR)


@dataclass(frozen=True)
class TrainingSet:
    """Paired samples ``T u_i = y_i`` stored column-wise.

    ``inputs`` is k x n, ``outputs`` is h x n.
    """

    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.inputs, dtype=np.float64)
        y = np.asarray(self.outputs, dtype=np.float64)
        if u.ndim == 1:
            u = u.reshape(-1, 1)
        if y.ndim == 1:
            y = y.reshape(-1, 1)
        if u.ndim != 2 or y.ndim != 2:
            raise DimensionMismatch("inputs and outputs must be 2-D (one column per sample)")
        if u.shape[1] != y.shape[1]:
            raise DimensionMismatch(
                f"inputs have {u.shape[1]} columns but outputs have {y.shape[1]}"
            )
        if u.shape[1] < 1:
            raise InvalidTrainingPair("a training set needs at least one pair")
        zero = np.flatnonzero(~np.any(y != 0.0, axis=0))
        if zero.size:
            raise InvalidTrainingPair(f"zero output column(s) at index {zero.tolist()}")
        object.__setattr__(self, "inputs", u)
        object.__setattr__(self, "outputs", y)

    @property
    def count(self) -> int:
        return self.inputs.shape[1]

    def subset(self, indices) -> "TrainingSet":
        indices = np.asarray(indices, dtype=np.intp)
        return TrainingSet(self.inputs[:, indices], self.outputs[:, indices])

    def head(self, n: int) -> "TrainingSet":
        return TrainingSet(self.inputs[:, :n], self.outputs[:, :n])

    def swapped(self) -> "TrainingSet":
        """Exchange the roles of inputs and outputs."""
        return TrainingSet(self.outputs, self.inputs)


@dataclass(frozen=True)
class ToleranceConfig:
    """Numerical thresholds for the orthonormalization backends.

    A column is rejected as dependent when its residual after projection onto
    the previously kept columns is at most ``dependence_tol * ||y_i||``.
    """

    dependence_tol: float = 1e-10
    ortho_assert_tol: float = 1e-8
    reorthogonalize: bool = False

    def __post_init__(self):
        if not 0.0 < self.dependence_tol < 1.0:
            raise ValueError("dependence_tol must lie in (0, 1)")
        if not self.ortho_assert_tol > 0.0:
            raise ValueError("ortho_assert_tol must be positive")


DEFAULT_TOLERANCES = ToleranceConfig()


@dataclass(frozen=True)
class OrthonormalSystem:
    ortho_outputs: np.ndarray
    preimages: np.ndarray
    method: Method
    kept_indices: list[int]
    ortho_error: float

    @property
    def rank(self) -> int:
        return len(self.kept_indices)


@dataclass(frozen=True)
class Reconstruction:
    """Result of a projected reconstruction ``u_n`` for a right-hand side ``y``."""

    coefficients: np.ndarray
    u_n: np.ndarray
    Tu_n: np.ndarray
    residual: float
    method: Method
    extras: dict = field(default_factory=dict, compare=False)


def ortho_error(Q) -> float:
    """Orthonormality error ``||Q^T Q - I||_1`` (maximum absolute column sum)."""
    Q = np.asarray(Q, dtype=np.float64)
    if Q.ndim == 1:
        Q = Q.reshape(-1, 1)
    if Q.shape[1] < 1:
        raise DimensionMismatch("ortho_error needs at least one column")
    E = Q.T @ Q - np.eye(Q.shape[1])
    return float(np.abs(E).sum(axis=0).max())


def _finish(Ybar, Ubar, method, kept) -> OrthonormalSystem:
    if not kept:
        raise AllColumnsDependent("no training output survived the dependence test")
    return OrthonormalSystem(
        ortho_outputs=Ybar,
        preimages=Ubar,
        method=Method(method),
        kept_indices=list(kept),
        ortho_error=ortho_error(Ybar),
    )


def _gram_schmidt(ts: TrainingSet, cfg: ToleranceConfig, modified: bool) -> OrthonormalSystem:
    U, Y = ts.inputs, ts.outputs
    h, n = Y.shape
    Ybar = np.empty((h, n))
    Ubar = np.empty((U.shape[0], n))
    kept: list[int] = []
    passes = 2 if cfg.reorthogonalize else 1
    for i in range(n):
        v = Y[:, i].copy()
        w = U[:, i].copy()
        r = len(kept)
        for _ in range(passes):
            if modified:
                for k in range(r):
                    c = Ybar[:, k] @ v
                    v -= c * Ybar[:, k]
                    w -= c * Ubar[:, k]
            elif r:
                c = Ybar[:, :r].T @ v
                v -= Ybar[:, :r] @ c
                w -= Ubar[:, :r] @ c
        norm = np.linalg.norm(v)
        if norm <= cfg.dependence_tol * np.linalg.norm(Y[:, i]):
            continue
        Ybar[:, r] = v / norm
        Ubar[:, r] = w / norm
        kept.append(i)
    r = len(kept)
    method = Method.MODIFIED_GS if modified else Method.CLASSICAL_GS
    return _finish(Ybar[:, :r], Ubar[:, :r], method, kept)


def classical_gram_schmidt(ts: TrainingSet, cfg: ToleranceConfig = DEFAULT_TOLERANCES) -> OrthonormalSystem:
    """Paired classical Gram-Schmidt.

    All projection coefficients of ``y_i`` are taken against the original
    column, ``c_k = <y_i, ybar_k>``, and the same coefficients update the
    preimage: ``ubar_i = (u_i - sum_k c_k ubar_k) / ||y_i - P y_i||``.
    """
    return _gram_schmidt(ts, cfg, modified=False)


def modified_gram_schmidt(ts: TrainingSet, cfg: ToleranceConfig = DEFAULT_TOLERANCES) -> OrthonormalSystem:
    """Paired modified Gram-Schmidt.

    Projections are removed one at a time from a running residual, which is
    the numerically stable ordering; in exact arithmetic the result equals
    :func:`classical_gram_schmidt`.
    """
    return _gram_schmidt(ts, cfg, modified=True)


def _normalize_signs(Q, R):
    s = np.where(np.diag(R) < 0.0, -1.0, 1.0)
    return Q * s, R * s[:, None]


def _preimages(U_kept, R):
    # Y = Ybar R  =>  Ubar = U R^{-1}, i.e. R^T Ubar^T = U^T
    return la.solve_triangular(R, U_kept.T, trans="T", lower=False).T


def _householder_scan(Y, tol):
    """Column-by-column Householder triangularization with dependence rejection.

    Returns the kept column indices, the unit reflector vectors and the
    reduced matrix (whose leading rows hold R on the kept columns).
    """
    h, n = Y.shape
    A = np.array(Y, dtype=np.float64, order="F")
    col_norms = np.linalg.norm(Y, axis=0)
    vs: list[np.ndarray] = []
    kept: list[int] = []
    for j in range(n):
        r = len(kept)
        if r == h:
            break
        x = A[r:, j]
        alpha = np.linalg.norm(x)
        if alpha <= tol * col_norms[j]:
            continue
        v = x.copy()
        v[0] += np.copysign(alpha, x[0])
        v /= np.linalg.norm(v)
        # reflect the remaining columns, including column j itself
        block = A[r:, j:]
        block -= np.outer(2.0 * v, v @ block)
        vs.append(v)
        kept.append(j)
    return kept, vs, A


def householder_orthonormalize(ts: TrainingSet, cfg: ToleranceConfig = DEFAULT_TOLERANCES) -> OrthonormalSystem:
    """Householder triangularization of the outputs with column rejection.

    Column ``j`` is reduced by the reflectors built so far; if the part of it
    below the current pivot row is at most ``tau ||y_j||`` it is dropped and no
    reflector is formed. ``Ybar`` is the accumulated reflector product applied
    to the leading identity columns, and ``Ubar = U_kept R^{-1}``.
    """
    Y = ts.outputs
    h = Y.shape[0]
    kept, vs, A = _householder_scan(Y, cfg.dependence_tol)
    if not kept:
        raise AllColumnsDependent("no training output survived the dependence test")
    r = len(kept)
    R = np.triu(A[:r, kept])
    Q = np.zeros((h, r), order="F")
    Q[:r, :r] = np.eye(r)
    for p in range(r - 1, -1, -1):
        v = vs[p]
        block = Q[p:, p:]
        block -= np.outer(2.0 * v, v @ block)
    Q, R = _normalize_signs(Q, R)
    return _finish(np.ascontiguousarray(Q), _preimages(ts.inputs[:, kept], R), Method.HOUSEHOLDER, kept)


def _dependent_positions(R, norms, tol):
    diag = np.abs(np.diag(R))
    return [p for p in range(len(norms)) if p >= diag.size or diag[p] <= tol * norms[p]]


def qr_orthonormalize(ts: TrainingSet, cfg: ToleranceConfig = DEFAULT_TOLERANCES) -> OrthonormalSystem:
    """Orthonormalization through the LAPACK economic QR factorization.

    Unpivoted QR gives ``|R_jj| = ||y_j - P_{j-1} y_j||``, so the dependence
    rule is applied to the diagonal. Once a column is dependent, LAPACK builds
    a reflector from rounding noise and every later diagonal entry is
    unreliable; in that case the kept set is decided by the Householder scan
    and the factorization is redone on the kept columns only.
    """
    Y = ts.outputs
    col_norms = np.linalg.norm(Y, axis=0)
    tol = cfg.dependence_tol
    kept = list(range(Y.shape[1]))
    Q, R = la.qr(Y, mode="economic")
    bad = _dependent_positions(R, col_norms, tol)
    if bad:
        kept = _householder_scan(Y, tol)[0]
        while kept:
            Q, R = la.qr(Y[:, kept], mode="economic")
            bad = _dependent_positions(R, col_norms[kept], tol)
            if not bad:
                break
            # borderline column judged differently by the two factorizations
            del kept[bad[0]]
        if not kept:
            raise AllColumnsDependent("no training output survived the dependence test")
    Q, R = _normalize_signs(Q, R)
    return _finish(Q, _preimages(ts.inputs[:, kept], R), Method.QR, kept)


BACKENDS = {
    Method.CLASSICAL_GS: classical_gram_schmidt,
    Method.MODIFIED_GS: modified_gram_schmidt,
    Method.HOUSEHOLDER: householder_orthonormalize,
    Method.QR: qr_orthonormalize,
}


def orthonormalize(ts: TrainingSet, method, cfg: ToleranceConfig = DEFAULT_TOLERANCES) -> OrthonormalSystem:
    method = Method(method)
    if method not in BACKENDS:
        raise ValueError(f"{method} is not an orthonormalization backend")
    return BACKENDS[method](ts, cfg)


def reconstruct_ortho(sys: OrthonormalSystem, y) -> Reconstruction:
    """Projected solution from an orthonormal system: ``c_i = <y, ybar_i>``."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    Ybar = sys.ortho_outputs
    if y.shape[0] != Ybar.shape[0]:
        raise DimensionMismatch(f"y has length {y.shape[0]}, outputs have {Ybar.shape[0]} rows")
    c = Ybar.T @ y
    Tu = Ybar @ c
    return Reconstruction(
        coefficients=c,
        u_n=sys.preimages @ c,
        Tu_n=Tu,
        residual=float(np.linalg.norm(y - Tu)),
        method=sys.method,
    )
