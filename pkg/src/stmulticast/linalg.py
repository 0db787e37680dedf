"""Dense complex linear algebra kernels.

Matrices are plain 2-D ``numpy`` arrays of dtype ``complex128``; use
:func:`as_cmatrix` to validate and convert user input.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericalFailure, SingularityError

__all__ = [
    "Tolerance",
    "DEFAULT_TOL",
    "as_cmatrix",
    "qr_decompose",
    "svd",
    "hermitian_sqrt_factor",
    "is_unitary",
    "has_orthonormal_columns",
    "is_upper_triangular",
    "geometric_mean_of_diagonal",
]

MAX_SWEEPS = 60


@dataclass(frozen=True)
class Tolerance:
    """Relative and absolute thresholds used by checks and predicates."""

    rel: float = 1e-9
    abs: float = 1e-12

    def __post_init__(self):
        if not (self.rel > 0 and self.abs > 0):
            raise InvalidInputError("tolerances must be positive")


DEFAULT_TOL = Tolerance()


def as_cmatrix(a, name="matrix"):
    """Return ``a`` as a finite, non-empty 2-D complex array."""
    m = np.asarray(a, dtype=complex)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise InvalidInputError(f"{name} must be a non-empty 2-D matrix")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return m


def qr_decompose(a, tol=DEFAULT_TOL):
    """Thin QR with a real, strictly positive diagonal in ``R``.

    Parameters
    ----------
    a : array_like, shape (m, n), m >= n
    tol : Tolerance

    Returns
    -------
    q : ndarray, shape (m, n)
        Orthonormal columns.
    r : ndarray, shape (n, n)
        Upper triangular.

    Raises
    ------
    SingularityError
        If a diagonal entry of ``R`` falls below the absolute tolerance
        (scaled by the norm of ``a``).
    """
    a = as_cmatrix(a)
    rows, cols = a.shape
    if rows < cols:
        raise InvalidInputError("qr_decompose needs rows >= cols")
    q, r = np.linalg.qr(a, mode="reduced")
    d = np.diag(r)
    mag = np.abs(d)
    floor = tol.abs * max(1.0, np.linalg.norm(a))
    if np.any(mag <= floor):
        raise SingularityError("matrix is rank deficient (QR pivot below tolerance)")
    phase = d / mag
    q = q * phase[np.newaxis, :]
    r = np.conj(phase)[:, np.newaxis] * r
    r = np.triu(r)
    r[np.diag_indices(cols)] = mag
    return q, r


def _complete_basis(w, filled):
    """Fill the columns of ``w`` not marked in ``filled`` with an orthonormal
    complement of the filled ones."""
    n = w.shape[0]
    basis = [w[:, k] for k in range(w.shape[1]) if filled[k]]
    cands = iter(np.eye(n, dtype=complex))
    for k in range(w.shape[1]):
        if filled[k]:
            continue
        for e in cands:
            v = e.copy()
            for b in basis:
                v -= (b.conj() @ v) * b
            nv = np.linalg.norm(v)
            if nv > 1e-8:
                v /= nv
                w[:, k] = v
                basis.append(v)
                break
    return w


def svd(a, tol=DEFAULT_TOL):
    """Singular value decomposition of a square matrix by one-sided Jacobi.

    Returns ``(w, sigma, z)`` with ``a = w @ diag(sigma) @ z.conj().T``,
    ``sigma`` non-increasing and ``w``, ``z`` unitary.
    """
    a = as_cmatrix(a)
    n, ncols = a.shape
    if n != ncols:
        raise InvalidInputError("svd expects a square matrix")
    work = a.copy()
    z = np.eye(n, dtype=complex)
    eps = np.finfo(float).eps
    conv = max(n * eps, 1e-15)

    for _ in range(MAX_SWEEPS):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                ap = work[:, p].copy()
                aq = work[:, q].copy()
                alpha = np.vdot(ap, ap).real
                beta = np.vdot(aq, aq).real
                gamma = np.vdot(ap, aq)
                g = abs(gamma)
                if g <= tol.abs * tol.abs or g <= conv * np.sqrt(alpha * beta):
                    continue
                rotated = True
                phase = gamma / g
                zeta = (beta - alpha) / (2.0 * g)
                t = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + np.hypot(1.0, zeta))
                c = 1.0 / np.hypot(1.0, t)
                s = c * t
                bq = aq * np.conj(phase)
                work[:, p] = c * ap - s * bq
                work[:, q] = s * ap + c * bq
                zp = z[:, p].copy()
                zq = z[:, q] * np.conj(phase)
                z[:, p] = c * zp - s * zq
                z[:, q] = s * zp + c * zq
        if not rotated:
            break
    else:
        raise NumericalFailure(f"Jacobi SVD did not converge in {MAX_SWEEPS} sweeps")

    sigma = np.linalg.norm(work, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    work = work[:, order]
    z = z[:, order]
    w = np.zeros((n, n), dtype=complex)
    scale = max(sigma[0], 1.0) if n else 1.0
    filled = sigma > tol.abs * scale
    w[:, filled] = work[:, filled] / sigma[filled]
    if not np.all(filled):
        w = _complete_basis(w, filled)
    return w, sigma, z


def hermitian_sqrt_factor(c, tol=DEFAULT_TOL):
    """Return ``b`` with ``b @ b^H == c`` for Hermitian PSD ``c``.

    Uses Cholesky (lower-triangular ``b``) when ``c`` is positive definite
    and a symmetric eigen-factor otherwise.
    """
    c = as_cmatrix(c, "covariance")
    n, m = c.shape
    if n != m:
        raise InvalidInputError("covariance must be square")
    scale = max(1.0, np.linalg.norm(c))
    if np.linalg.norm(c - c.conj().T) > tol.rel * scale:
        raise InvalidInputError("covariance is not Hermitian")
    c = 0.5 * (c + c.conj().T)
    try:
        return np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        pass
    lam, vec = np.linalg.eigh(c)
    if lam.min() < -tol.rel * scale:
        raise InvalidInputError("covariance is indefinite")
    lam = np.clip(lam, 0.0, None)
    return vec * np.sqrt(lam)[np.newaxis, :]


def _square(a):
    m = np.asarray(a)
    return m.ndim == 2 and m.shape[0] == m.shape[1]


def has_orthonormal_columns(a, tol=DEFAULT_TOL):
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        return False
    gram = m.conj().T @ m
    return bool(np.max(np.abs(gram - np.eye(m.shape[1]))) <= tol.rel * 10)


def is_unitary(a, tol=DEFAULT_TOL):
    return _square(a) and has_orthonormal_columns(a, tol)


def is_upper_triangular(a, tol=DEFAULT_TOL):
    if not _square(a):
        return False
    m = np.asarray(a, dtype=complex)
    low = np.tril(m, -1)
    scale = max(1.0, np.max(np.abs(m)))
    return bool(np.max(np.abs(low), initial=0.0) <= max(tol.abs, tol.rel * scale))


def geometric_mean_of_diagonal(a):
    """Geometric mean of ``|a_kk|`` computed in the log domain."""
    d = np.abs(np.diag(np.asarray(a, dtype=complex)))
    if np.any(d == 0):
        raise InvalidInputError("diagonal has a zero entry")
    return float(np.exp(np.mean(np.log(d))))
