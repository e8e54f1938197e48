"""
Dense Hermitian linear algebra for GP regression.

Cholesky factors are kept in a preallocated, append-only buffer so that a
factor can be extended by one row in O(n^2) without copying the n x n
leading block.  Several factors may share one buffer: a factor of size n
only ever reads the leading n x n block, and rows past the buffer's
committed length are written at most once.  Extending a factor that is not
the newest one on its buffer copies it first.

Triangular solves are done in row blocks so that only BLAS-compatible views
of the buffer are touched (scipy would otherwise copy the whole strided
block on every call).
"""

import threading

import numpy as np
from scipy import linalg as sla

from .errors import DimensionMismatch, NotHermitian, NotPositiveDefinite

HERMITIAN_RTOL = 1e-10
_BLOCK = 512


class _Store:
    __slots__ = ("buf", "filled", "lock")

    def __init__(self, buf, filled):
        self.buf = buf
        self.filled = filled
        self.lock = threading.Lock()


class HermitianFactor:
    """Lower-triangular Cholesky factor ``L`` with ``L @ L^H = A``.

    The diagonal of ``L`` is real and strictly positive.  Real input
    matrices keep a real (float64) factor.
    """

    __slots__ = ("_store", "n")

    def __init__(self, store, n):
        self._store = store
        self.n = n

    @classmethod
    def from_lower(cls, L, capacity=None):
        L = np.asarray(L)
        n = L.shape[0]
        cap = max(n, capacity or 0)
        buf = np.zeros((cap, cap), dtype=L.dtype)
        buf[:n, :n] = np.tril(L)
        return cls(_Store(buf, n), n)

    @property
    def L(self):
        """Read-only view of the factor."""
        view = self._store.buf[: self.n, : self.n]
        view.flags.writeable = False
        return view

    @property
    def dtype(self):
        return self._store.buf.dtype

    @property
    def diag(self):
        return np.diagonal(self._store.buf)[: self.n].real

    def reconstruct(self):
        L = self._store.buf[: self.n, : self.n]
        return L @ L.conj().T

    def __repr__(self):
        return f"HermitianFactor(n={self.n}, dtype={self.dtype})"


def _as_matrix(A):
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    if not (np.issubdtype(A.dtype, np.floating) or np.issubdtype(A.dtype, np.complexfloating)):
        A = A.astype(float)
    return A


def check_hermitian(A, rtol=HERMITIAN_RTOL):
    """Raise `NotHermitian` if ``A`` differs from ``A^H`` by more than ``rtol * max|A|``."""
    A = _as_matrix(A)
    scale = np.max(np.abs(A)) if A.size else 0.0
    err = np.max(np.abs(A - A.conj().T)) if A.size else 0.0
    if err > rtol * scale:
        raise NotHermitian(f"asymmetry {err:.3g} exceeds {rtol:g} * max|A| = {rtol * scale:.3g}")
    return A


def cholesky(A, jitter=0.0, capacity=None):
    """Factor ``A + jitter * I``.

    Parameters
    ----------
    A : (n, n) array_like
        Hermitian matrix.
    jitter : float
        Nonnegative value added to the diagonal before factoring.
    capacity : int, optional
        Preallocate room for extending the factor up to this size.

    Raises
    ------
    NotHermitian
        If ``A`` is not Hermitian within ``1e-10 * max|A|``.
    NotPositiveDefinite
        If an entry is not finite or a pivot is not strictly positive.
    """
    if jitter < 0:
        raise ValueError("jitter must be nonnegative")
    A = _as_matrix(A)
    if not np.all(np.isfinite(A)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    A = check_hermitian(A)
    n = A.shape[0]
    if n == 0:
        raise DimensionMismatch("cannot factor an empty matrix")
    if np.iscomplexobj(A) and not np.any(A.imag):
        A = A.real
    A = 0.5 * (A + A.conj().T)
    if jitter:
        A = A + jitter * np.eye(n)
    try:
        L = sla.cholesky(A, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NotPositiveDefinite(f"matrix is not positive definite ({exc})") from None
    if not np.all(np.diagonal(L).real > 0):
        raise NotPositiveDefinite("nonpositive pivot")
    return HermitianFactor.from_lower(L, capacity)


def jittered_cholesky(A, retries=3, capacity=None):
    """Factor ``A``, retrying with growing diagonal jitter on failure.

    The first retry adds ``1e-10 * mean(diag(A))``; each further retry
    multiplies the jitter by 10.

    Returns
    -------
    factor : HermitianFactor
    jitter : float
        The jitter that was finally applied (0.0 if none was needed).
    """
    A = _as_matrix(A)
    try:
        return cholesky(A, capacity=capacity), 0.0
    except NotPositiveDefinite:
        if retries <= 0:
            raise
    jitter = 1e-10 * float(np.mean(np.diagonal(A).real))
    if jitter <= 0:
        jitter = 1e-10
    for attempt in range(retries):
        try:
            return cholesky(A, jitter=jitter, capacity=capacity), jitter
        except NotPositiveDefinite:
            if attempt == retries - 1:
                raise
            jitter *= 10.0


def _rhs(F, B):
    B = np.asarray(B)
    if B.ndim not in (1, 2) or B.shape[0] != F.n:
        raise DimensionMismatch(f"factor has size {F.n}, right-hand side has shape {B.shape}")
    dtype = np.result_type(F.dtype, B.dtype, np.float64)
    return B.astype(dtype, copy=False)


def solve_lower(F, B):
    """Solve ``L Z = B`` by blocked forward substitution."""
    B = _rhs(F, B)
    buf = F._store.buf
    Z = np.empty_like(B)
    for a in range(0, F.n, _BLOCK):
        b = min(a + _BLOCK, F.n)
        r = B[a:b] - buf[a:b, :a] @ Z[:a] if a else B[a:b]
        Z[a:b] = sla.solve_triangular(buf[a:b, a:b], r, lower=True, check_finite=False)
    return Z


def solve_upper(F, Z):
    """Solve ``L^H X = Z`` by blocked back substitution."""
    Z = _rhs(F, Z)
    buf = F._store.buf
    n = F.n
    X = np.empty_like(Z)
    starts = list(range(0, n, _BLOCK))
    for a in reversed(starts):
        b = min(a + _BLOCK, n)
        r = Z[a:b]
        if b < n:
            # L[b:n, a:b]^H @ X[b:n] without materialising the conjugate transpose
            Xc = X[b:n].conj()
            r = r - (Xc.T @ buf[b:n, a:b]).conj().T if Z.ndim == 2 else r - (Xc @ buf[b:n, a:b]).conj()
        X[a:b] = sla.solve_triangular(buf[a:b, a:b], r, lower=True, trans="C", check_finite=False)
    return X


def solve(F, B):
    """Solve ``(L L^H) X = B``.

    Raises
    ------
    DimensionMismatch
        If ``B`` does not have ``F.n`` rows.
    """
    return solve_upper(F, solve_lower(F, B))


def inverse(F):
    """Explicit ``(L L^H)^{-1}``; only for small n (gradients, tests)."""
    return solve(F, np.eye(F.n, dtype=F.dtype))


def log_det(F):
    """``log det(L L^H) = 2 * sum(log diag L)``, always real."""
    return 2.0 * float(np.sum(np.log(F.diag)))


def extend_factor(F, new_row, new_diag):
    """Factor of the bordered matrix ``[[A, new_row^H], [new_row, new_diag]]``.

    ``new_row`` is the last row of the extended matrix without its diagonal
    entry, i.e. ``A_ext[n, :n]``.

    Raises
    ------
    NotPositiveDefinite
        If the Schur complement ``new_diag - |L^{-1} new_row^H|^2`` is not
        strictly positive.
    """
    new_row = np.asarray(new_row).reshape(-1)
    if new_row.shape[0] != F.n:
        raise DimensionMismatch(f"factor has size {F.n}, new row has length {new_row.shape[0]}")
    z = solve_lower(F, new_row.conj()) if F.n else new_row.conj()
    return extend_factor_solved(F, z, new_diag)


def extend_factor_solved(F, z, new_diag):
    """`extend_factor` given ``z = L^{-1} new_row^H`` already computed.

    GP prediction at a new input needs exactly this ``z``, so the online
    predict-then-append loop shares one triangular solve.
    """
    z = np.asarray(z).reshape(-1)
    if np.iscomplexobj(z) and not np.iscomplexobj(F._store.buf) and not np.any(z.imag):
        z = z.real
    new_diag = float(np.real(new_diag))
    schur = new_diag - float(np.vdot(z, z).real)
    if not schur > 0:
        raise NotPositiveDefinite(f"Schur complement {schur:.3g} is not positive")
    delta = np.sqrt(schur)
    n = F.n
    dtype = np.result_type(F.dtype, z.dtype)
    store = F._store
    with store.lock:
        in_place = store.filled == n and store.buf.shape[0] > n and store.buf.dtype == dtype
        if in_place:
            store.buf[n, :n] = z.conj()
            store.buf[n, n] = delta
            store.filled = n + 1
            return HermitianFactor(store, n + 1)
    cap = max(2 * n, n + 1, 8)
    buf = np.zeros((cap, cap), dtype=dtype)
    buf[:n, :n] = store.buf[:n, :n]
    buf[n, :n] = z.conj()
    buf[n, n] = delta
    return HermitianFactor(_Store(buf, n + 1), n + 1)


def pivoted_cholesky(diag, get_row, rtol=1e-12, max_rank=None):
    """Greedy pivoted Cholesky of a Hermitian PSD matrix given row access.

    Parameters
    ----------
    diag : (n,) array_like
        Diagonal of the matrix.
    get_row : callable
        ``get_row(i)`` returns row ``i`` of the matrix as an (n,) array.
    rtol : float
        Stop once the largest residual diagonal entry is at most
        ``rtol * max(diag)``.
    max_rank : int, optional

    Returns
    -------
    G : (n, r) ndarray
        Low-rank factor with ``A ~= G @ G^H``.  Full rank when ``A`` is
        well conditioned, so it doubles as an exact factor for small n.
    """
    d = np.array(diag, dtype=float)
    n = d.shape[0]
    max_rank = n if max_rank is None else min(max_rank, n)
    stop = rtol * max(float(d.max()), 0.0) if n else 0.0
    rows = None
    k = 0
    while k < max_rank:
        i = int(np.argmax(d))
        if d[i] <= stop or d[i] <= 0:
            break
        col = np.conj(np.asarray(get_row(i)))
        if rows is None:
            rows = np.zeros((min(max_rank, 64), n), dtype=np.result_type(col.dtype, float))
        elif k == rows.shape[0]:
            grown = np.zeros((min(2 * k, max_rank), n), dtype=rows.dtype)
            grown[:k] = rows
            rows = grown
        if k:
            col = col - rows[:k].T @ rows[:k, i].conj()
        g = col / np.sqrt(d[i])
        rows[k] = g
        d -= np.abs(g) ** 2
        d[i] = 0.0
        k += 1
    if rows is None:
        return np.zeros((n, 0))
    return rows[:k].T.copy()
