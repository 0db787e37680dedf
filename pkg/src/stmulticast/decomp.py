"""Unitary triangularizations: GMD, two-matrix JET and space-time K-GMD.

All index arguments of :func:`extract` and :func:`embed` are 1-based, as
are ``SpaceTimeDecomp.theta_rows``.
"""

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintViolation, InvalidInputError, NumericalFailure, SingularityError
from .linalg import DEFAULT_TOL, as_cmatrix, qr_decompose, svd

__all__ = [
    "GmdResult",
    "JetResult",
    "SpaceTimeDecomp",
    "DecompReport",
    "gmd",
    "jet2",
    "extract",
    "embed",
    "extend_blockdiag",
    "stage_offsets",
    "min_copies",
    "retained_dimension",
    "kgmd_spacetime",
    "verify_decomp",
]


@dataclass
class GmdResult:
    """``A = U @ T @ V^H`` with a constant positive diagonal in ``T``."""

    U: np.ndarray
    T: np.ndarray
    V: np.ndarray

    @property
    def diagonal(self):
        return np.real(np.diag(self.T))


@dataclass
class JetResult:
    """``A1 = U1 R1 V^H`` and ``A2 = U2 R2 V^H`` with ``diag(R1) == diag(R2)``."""

    U1: np.ndarray
    R1: np.ndarray
    U2: np.ndarray
    R2: np.ndarray
    V: np.ndarray


@dataclass
class SpaceTimeDecomp:
    """Joint triangularization of the ``N``-fold block-diagonal extensions.

    ``U_list[i].conj().T @ extend_blockdiag(A_i, N) @ V == T_list[i]`` where
    every ``T_list[i]`` is ``m x m`` upper triangular with constant diagonal
    ``diag_value_list[i]``.
    """

    n: int
    K: int
    N: int
    m: int
    U_list: list
    V: np.ndarray
    T_list: list
    diag_value_list: list
    theta_rows: list
    stage_pairs: list = field(default_factory=list)
    # untruncated factors over all n*N positions; ``order`` is 0-based and
    # makes every ``T_full_list[i][order][:, order]`` upper triangular
    U_full_list: list = field(default_factory=list, repr=False)
    V_full: np.ndarray = field(default=None, repr=False)
    T_full_list: list = field(default_factory=list, repr=False)
    order: list = field(default_factory=list, repr=False)

    @property
    def capacity_fraction(self):
        return self.m / (self.n * self.N)


@dataclass
class DecompReport:
    reconstruction: float
    diagonal_deviation: float
    below_diagonal: float
    orthonormality: float

    def max_defect(self):
        return max(self.reconstruction, self.diagonal_deviation,
                   self.below_diagonal, self.orthonormality)


def _check_invertible_square(a, tol, name="matrix"):
    a = as_cmatrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise ConstraintViolation(f"{name} must be square, got {a.shape[0]}x{a.shape[1]}")
    w, sigma, z = svd(a, tol)
    if sigma[-1] <= tol.abs * max(1.0, sigma[0]):
        raise SingularityError(f"{name} is singular (smallest singular value {sigma[-1]:.3e})")
    return a, w, sigma, z


def _rotation_to_target(d1, d2, g):
    """Real 2x2 pair ``(left, right)`` so that
    ``left.T @ diag(d1, d2) @ right = [[g, x], [0, d1*d2/g]]``.

    Requires ``g`` to lie between ``d1`` and ``d2``.
    """
    den = d1 * d1 - d2 * d2
    if abs(den) <= 1e-300 or abs(den) <= 1e-15 * max(d1, d2) ** 2:
        c2 = 1.0
    else:
        c2 = (g * g - d2 * d2) / den
    c = math.sqrt(min(max(c2, 0.0), 1.0))
    s = math.sqrt(max(1.0 - c * c, 0.0))
    right = np.array([[c, -s], [s, c]])
    left = np.array([[d1 * c, -d2 * s], [d2 * s, d1 * c]]) / g
    return left, right


def _diag_gmd(d):
    """GMD of a positive diagonal: ``diag(d) = L @ T @ R^H``."""
    d = np.asarray(d, dtype=float)
    n = d.size
    g = float(np.exp(np.mean(np.log(d))))
    t = np.diag(d).astype(complex)
    left = np.eye(n, dtype=complex)
    right = np.eye(n, dtype=complex)
    for k in range(n - 1):
        dk = t[k, k].real
        want_big = dk < g
        # partner on the opposite side of g, moved next to k
        cand = [j for j in range(k + 1, n)
                if (t[j, j].real >= g if want_big else t[j, j].real <= g)]
        j = cand[0] if cand else k + 1
        if j != k + 1:
            perm = np.arange(n)
            perm[[k + 1, j]] = perm[[j, k + 1]]
            t = t[np.ix_(perm, perm)]
            left = left[:, perm]
            right = right[:, perm]
        wl, wr = _rotation_to_target(t[k, k].real, t[k + 1, k + 1].real, g)
        idx = [k, k + 1]
        t[:, idx] = t[:, idx] @ wr
        t[idx, :] = wl.T @ t[idx, :]
        left[:, idx] = left[:, idx] @ wl
        right[:, idx] = right[:, idx] @ wr
        t[k + 1, k] = 0.0
    t = np.triu(t)
    return left, t, right


def gmd(a, tol=DEFAULT_TOL):
    """Geometric mean decomposition ``A = U T V^H`` of a square invertible matrix.

    The diagonal of ``T`` equals the geometric mean of the singular values
    of ``A``.
    """
    a, w, sigma, z = _check_invertible_square(a, tol)
    left, t, right = _diag_gmd(sigma)
    return GmdResult(U=w @ left, T=t, V=z @ right)


def _rq(m, tol):
    """``m = r @ q`` with ``r`` upper triangular (positive diagonal), ``q`` unitary."""
    flip = np.eye(m.shape[0])[::-1]
    q1, r1 = qr_decompose((flip @ m).conj().T, tol)
    r = flip @ r1.conj().T @ flip
    q = flip @ q1.conj().T
    return np.triu(r), q


def jet2(a1, a2, tol=DEFAULT_TOL):
    """Joint equi-diagonal triangularization of two equal-|det| matrices."""
    a1, _, s1, _ = _check_invertible_square(a1, tol, "A1")
    a2, _, s2, _ = _check_invertible_square(a2, tol, "A2")
    if a1.shape != a2.shape:
        raise ConstraintViolation("A1 and A2 must have the same size")
    ld1 = np.sum(np.log(s1))
    ld2 = np.sum(np.log(s2))
    if abs(ld1 - ld2) > tol.rel * max(1.0, abs(ld1), abs(ld2)) * 10:
        raise ConstraintViolation(
            f"|det A1| = {math.exp(ld1):.6g} differs from |det A2| = {math.exp(ld2):.6g}")
    b = a1 @ np.linalg.inv(a2)
    gb = gmd(b, tol)
    u2 = gb.V
    r2, vh = _rq(u2.conj().T @ a2, tol)
    r1 = np.triu(gb.T @ r2)
    return JetResult(U1=gb.U, R1=r1, U2=u2, R2=r2, V=vh.conj().T)


def _check_pair(dim, i, j):
    if not (1 <= i < j <= dim):
        raise InvalidInputError(f"index pair ({i}, {j}) invalid for dimension {dim}")


def extract(a, i, j):
    """The 2x2 submatrix ``[[a_ii, a_ij], [a_ji, a_jj]]`` (1-based indices)."""
    a = np.asarray(a)
    if a.ndim != 2:
        raise InvalidInputError("extract expects a matrix")
    _check_pair(min(a.shape), i, j)
    idx = [i - 1, j - 1]
    return a[np.ix_(idx, idx)].copy()


def embed(n, b, pairs):
    """Write the 2x2 ``b`` into ``I_n`` at every index pair of ``pairs``."""
    b = as_cmatrix(b, "B")
    if b.shape != (2, 2):
        raise InvalidInputError("embedded block must be 2x2")
    seen = set()
    out = np.eye(n, dtype=complex)
    for i, j in pairs:
        _check_pair(n, i, j)
        if i in seen or j in seen:
            raise InvalidInputError("index overlap is forbidden in an embedding")
        seen.update((i, j))
        idx = [i - 1, j - 1]
        out[np.ix_(idx, idx)] = b
    return out


def extend_blockdiag(a, copies):
    a = as_cmatrix(a)
    if a.shape[0] != a.shape[1]:
        raise InvalidInputError("extend_blockdiag expects a square matrix")
    if copies < 1:
        raise InvalidInputError("copies must be >= 1")
    return np.kron(np.eye(copies), a)


def min_copies(n, K):
    return n ** (K - 1)


def retained_dimension(n, K, N):
    return n * (N - (n ** (K - 1) - 1))


def stage_offsets(n, K):
    """Block offsets ``[a_2, ..., a_K]`` of the staged construction.

    At stage ``t`` the diagonal position ``k`` (0-based, within a block)
    of block ``tau + (n - 1 - k) * a_t`` joins group ``tau``.  The
    offsets are chosen so that members of a group never share a connected
    component of the earlier stages and the total number of lost blocks is
    ``n**(K-1) - 1``.
    """
    if K < 2:
        return []
    if n == 1:
        return [1] * (K - 1)
    seq = {2: n ** (K - 2), K: 2 * n ** (K - 2) - (n ** (K - 1) - 1) // (n - 1)}
    for t in range(K - 1, 2, -1):
        base = n ** (K - t)
        u = -(-seq[t + 1] // base)
        while math.gcd(u, n) != 1:
            u += 1
        seq[t] = base * u
    out = [seq[t] for t in range(2, K + 1)]

    g = out[0]
    for a in out[1:]:
        if g // math.gcd(g, a) < n:
            raise NumericalFailure(f"no valid stage schedule for n={n}, K={K}")
        g = math.gcd(g, a)
    loss = out[0] + sum(abs(x - y) for x, y in zip(out, out[1:]))
    if loss != (n ** (K - 1) - 1) // (n - 1):
        raise NumericalFailure(f"stage schedule for n={n}, K={K} loses {loss} blocks")
    return out


class _Stage:
    """Mutable working state of the staged construction (all users)."""

    def __init__(self, t_list, u_list, v, masks):
        self.T = t_list
        self.U = u_list
        self.V = v
        self.mask = masks

    def reaches(self, members):
        """True if some member reaches another in the union sparsity graph."""
        union = np.logical_or.reduce(self.mask)
        np.fill_diagonal(union, False)
        mset = set(members)
        for src in members:
            seen = {src}
            stack = [src]
            while stack:
                p = stack.pop()
                for q in np.flatnonzero(union[p]):
                    q = int(q)
                    if q in mset:
                        return True
                    if q not in seen:
                        seen.add(q)
                        stack.append(q)
        return False

    def apply(self, s, target, tol):
        """GMD user ``target`` on index group ``s``; conjugate earlier users,
        re-triangularize later ones locally."""
        ix = np.ix_(s, s)
        d = np.real(np.diag(self.T[target][ix]))
        left_t, _, right = _diag_gmd(d)
        self.V[:, s] = self.V[:, s] @ right
        size = len(s)
        upper = np.triu(np.ones((size, size), dtype=bool))
        for u, t in enumerate(self.T):
            if u < target:
                left = right
                pattern = np.eye(size, dtype=bool)
            elif u == target:
                left = left_t
                pattern = upper
            else:
                left, _ = qr_decompose(t[ix] @ right, tol)
                pattern = upper
            t[:, s] = t[:, s] @ right
            t[s, :] = left.conj().T @ t[s, :]
            sub = t[ix]
            t[ix] = np.where(pattern, sub, 0.0)
            self.U[u][:, s] = self.U[u][:, s] @ left

            m = self.mask[u]
            rows = m[s, :].any(axis=0)
            cols = m[:, s].any(axis=1)
            m[s, :] = rows[np.newaxis, :]
            m[:, s] = cols[:, np.newaxis]
            m[ix] = pattern


def _topological_order(union):
    n = union.shape[0]
    adj = union.copy()
    np.fill_diagonal(adj, False)
    indeg = adj.sum(axis=0).astype(int)
    heap = [i for i in range(n) if indeg[i] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        p = heapq.heappop(heap)
        order.append(p)
        for q in np.flatnonzero(adj[p]):
            indeg[q] -= 1
            if indeg[q] == 0:
                heapq.heappush(heap, int(q))
    if len(order) != n:
        raise NumericalFailure("staged triangularization produced a cyclic structure")
    return order


def kgmd_spacetime(a_list, copies, tol=DEFAULT_TOL):
    """Nearly-optimal joint GMD of ``K`` square matrices over ``copies`` channel uses.

    Parameters
    ----------
    a_list : sequence of (n, n) array_like
        Invertible matrices.  Each is normalized by ``|det|**(1/n)``
        internally; the scale comes back in ``diag_value_list``.
    copies : int
        Number of channel uses ``N`` processed together; must be at least
        ``n**(K-1)``.

    Returns
    -------
    SpaceTimeDecomp
        With ``m = n * (N - (n**(K-1) - 1))`` retained dimensions.

    Raises
    ------
    ConstraintViolation
        ``copies`` below the minimum, or inputs of mismatched sizes.
    SingularityError
        A singular input.
    NumericalFailure
        The staged schedule could not complete; the message names the stage.
    """
    if len(a_list) < 1:
        raise InvalidInputError("need at least one matrix")
    mats = []
    scales = []
    n = None
    for idx, a in enumerate(a_list):
        a, _, sigma, _ = _check_invertible_square(a, tol, f"A{idx + 1}")
        if n is None:
            n = a.shape[0]
        elif a.shape[0] != n:
            raise ConstraintViolation("all matrices must share the same size")
        scale = float(np.exp(np.mean(np.log(sigma))))
        scales.append(scale)
        mats.append(a / scale)
    K = len(mats)
    N = int(copies)
    need = min_copies(n, K)
    if N < need:
        raise ConstraintViolation(f"N below minimum {need} (n={n}, K={K})")
    dim = n * N
    eye_n = np.eye(N)

    first = gmd(mats[0], tol)
    v1 = first.V
    t_list = [np.kron(eye_n, first.T)]
    u_list = [np.kron(eye_n, first.U)]
    for a in mats[1:]:
        q, r = qr_decompose(a @ v1, tol)
        t_list.append(np.kron(eye_n, r))
        u_list.append(np.kron(eye_n, q))
    block_mask = np.kron(eye_n, np.triu(np.ones((n, n)))).astype(bool)
    state = _Stage(t_list, u_list, np.kron(eye_n, v1), [block_mask.copy() for _ in range(K)])

    live = set(range(dim))
    groups = [list(range(b * n, (b + 1) * n)) for b in range(N)]
    stage_pairs = []
    for t, off in enumerate(stage_offsets(n, K), start=2):
        groups = []
        for tau in range(N):
            members = []
            for k in range(n - 1, -1, -1):
                b = tau + (n - 1 - k) * off
                p = b * n + k
                if b >= N or p not in live:
                    break
                members.append(p)
            if len(members) == n:
                groups.append(members)
        for s in groups:
            for u in range(K):
                sub = state.T[u][np.ix_(s, s)]
                off_diag = sub - np.diag(np.diag(sub))
                if np.max(np.abs(off_diag), initial=0.0) > tol.rel:
                    raise NumericalFailure(f"stage {t}: group {[p + 1 for p in s]} "
                                           f"is not decoupled for user {u + 1}")
            if state.reaches(s):
                raise NumericalFailure(f"stage {t}: group {[p + 1 for p in s]} "
                                       "is connected through earlier stages")
            state.apply(s, t - 1, tol)
        stage_pairs.append([[p + 1 for p in s] for s in groups])
        live = {p for s in groups for p in s}

    m_expected = retained_dimension(n, K, N)
    retained = sorted(live)
    if len(retained) < m_expected:
        raise NumericalFailure(
            f"stage {K}: retained {len(retained)} dimensions, expected {m_expected}")

    order = _topological_order(np.logical_or.reduce(state.mask))
    theta = [p for p in order if p in live]
    ix = np.ix_(theta, theta)
    U_out = [u[:, theta] for u in state.U]
    T_out = []
    for scale, t in zip(scales, state.T):
        sub = np.triu(t[ix]) * scale
        T_out.append(sub)
    return SpaceTimeDecomp(
        n=n, K=K, N=N, m=len(theta), U_list=U_out, V=state.V[:, theta],
        T_list=T_out, diag_value_list=scales, theta_rows=[p + 1 for p in theta],
        stage_pairs=stage_pairs,
        U_full_list=list(state.U), V_full=state.V,
        T_full_list=[t * scale for scale, t in zip(scales, state.T)],
        order=list(order),
    )


def verify_decomp(d, a_list, tol=DEFAULT_TOL):
    """Measure every defect of a :class:`SpaceTimeDecomp` by direct multiplication."""
    if len(a_list) != len(d.U_list) or len(d.T_list) != len(d.U_list):
        raise InvalidInputError("number of matrices does not match the decomposition")
    recon = diag_dev = below = ortho = 0.0
    eye_m = np.eye(d.m)
    v = np.asarray(d.V)
    if v.shape != (d.n * d.N, d.m):
        raise InvalidInputError("V has inconsistent dimensions")
    ortho = float(np.max(np.abs(v.conj().T @ v - eye_m), initial=0.0))
    for a, u, t, g in zip(a_list, d.U_list, d.T_list, d.diag_value_list):
        a = as_cmatrix(a)
        u = np.asarray(u)
        t = np.asarray(t)
        if a.shape != (d.n, d.n) or u.shape != v.shape or t.shape != (d.m, d.m):
            raise InvalidInputError("dimension mismatch between decomposition and inputs")
        big = extend_blockdiag(a, d.N)
        prod = u.conj().T @ big @ v
        scale = max(np.linalg.norm(prod), 1e-300)
        recon = max(recon, float(np.linalg.norm(prod - t) / scale))
        diag_dev = max(diag_dev, float(np.max(np.abs(np.diag(prod) - g)) / g))
        below = max(below, float(np.max(np.abs(np.tril(prod, -1)), initial=0.0) / g))
        ortho = max(ortho, float(np.max(np.abs(u.conj().T @ u - eye_m), initial=0.0)))
    return DecompReport(recon, diag_dev, below, ortho)
