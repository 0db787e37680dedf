"""Rate calculators for the Gaussian MIMO multicast channel.

All rates are in bits per channel use.  Channels have unit-variance noise
per receive element and a total transmit power ``P``.
"""

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import brentq, minimize

from .errors import ConstraintViolation, InvalidInputError, NumericalFailure
from .linalg import as_cmatrix

__all__ = [
    "mutual_information",
    "waterfill_capacity",
    "multicast_capacity",
    "CapacityResult",
    "beamforming_rate",
    "best_beamformer",
    "benchmark_beamforming_rate",
    "timesharing_rate",
    "ExampleScenario",
    "build_example",
    "HIGH_SNR_CP2P",
    "HIGH_SNR_POWER",
    "high_snr_example",
    "as_fraction",
    "achievable_fraction",
    "min_channel_uses",
]

MAX_ITER = 10_000
GAP_TARGET = 1e-4
HIGH_SNR_CP2P = 400.0
HIGH_SNR_POWER = 1e6


def _resolve(channels, P):
    """Accept a channel set (anything with ``H_list`` and ``P``) or a plain
    list of matrices plus ``P``."""
    if hasattr(channels, "H_list"):
        hs = channels.H_list
        P = channels.P if P is None else P
    else:
        hs = channels
    if P is None:
        raise InvalidInputError("power P is required")
    _check_power(P)
    return _channels(hs), float(P)


def _channels(h_list):
    if len(h_list) < 1:
        raise InvalidInputError("need at least one channel")
    hs = [as_cmatrix(h, f"H{i + 1}") for i, h in enumerate(h_list)]
    nt = hs[0].shape[1]
    if any(h.shape[1] != nt for h in hs):
        raise InvalidInputError("channels must share the transmit dimension")
    return hs


def _check_power(P):
    if not (P > 0 and math.isfinite(P)):
        raise InvalidInputError("power must be positive and finite")


def mutual_information(H, Cx):
    """``log2 det(I + H Cx H^H)``."""
    H = as_cmatrix(H, "H")
    Cx = as_cmatrix(Cx, "covariance")
    m = np.eye(H.shape[0]) + H @ Cx @ H.conj().T
    m = 0.5 * (m + m.conj().T)
    sign, logdet = np.linalg.slogdet(m)
    if sign.real <= 0:
        raise InvalidInputError("covariance is not positive semidefinite")
    return float(logdet / math.log(2.0))


def _waterfill(gains, P):
    """Power levels ``max(mu - 1/g, 0)`` summing to ``P``."""
    g = np.asarray(gains, dtype=float)
    pos = g > 0
    inv = np.full_like(g, np.inf)
    inv[pos] = 1.0 / g[pos]
    srt = np.sort(inv[pos])
    for k in range(srt.size, 0, -1):
        mu = (P + srt[:k].sum()) / k
        if mu > srt[k - 1]:
            break
    return np.where(pos, np.maximum(mu - inv, 0.0), 0.0)


def waterfill_capacity(H, P):
    """Point-to-point capacity and its optimal input covariance."""
    _check_power(P)
    H = as_cmatrix(H, "H")
    lam, vec = np.linalg.eigh(H.conj().T @ H)
    lam = np.clip(lam, 0.0, None)
    p = _waterfill(lam, P)
    cx = (vec * p[np.newaxis, :]) @ vec.conj().T
    return float(np.sum(np.log2(1.0 + lam * p))), cx


def _project(c, P):
    """Frobenius projection onto ``{C >= 0, trace C <= P}``."""
    c = 0.5 * (c + c.conj().T)
    lam, vec = np.linalg.eigh(c)
    lam = np.clip(lam, 0.0, None)
    if lam.sum() > P:
        lo, hi = 0.0, float(lam.max())
        shift = brentq(lambda s: np.clip(lam - s, 0.0, None).sum() - P, lo, hi)
        lam = np.clip(lam - shift, 0.0, None)
    return (vec * lam[np.newaxis, :]) @ vec.conj().T


def _rates_grads(hs, c):
    rates, grads = [], []
    for h in hs:
        m = np.eye(h.shape[0]) + h @ c @ h.conj().T
        m = 0.5 * (m + m.conj().T)
        chol = np.linalg.cholesky(m)
        rates.append(2.0 * np.sum(np.log(np.real(np.diag(chol)))) / math.log(2.0))
        x = np.linalg.solve(chol, h)
        grads.append(x.conj().T @ x / math.log(2.0))
    return np.array(rates), grads


def _upper_bound(rates, grads, c, P):
    """Best linearization bound ``min_lambda max_C sum_i lambda_i (f_i + <g_i, C - c>)``.

    Every value returned is a valid upper bound on the max-min rate by
    concavity of each ``f_i``.
    """
    K = len(rates)
    inner = np.array([np.real(np.vdot(g, c)) for g in grads])

    def bound(w):
        w = np.abs(w)
        w = w / w.sum()
        gsum = sum(wi * g for wi, g in zip(w, grads))
        top = max(float(np.linalg.eigvalsh(0.5 * (gsum + gsum.conj().T))[-1]), 0.0)
        return float(w @ (rates - inner) + P * top)

    best = min(bound(np.eye(K)[i]) for i in range(K))
    if K == 1:
        return best
    active = np.exp(-(rates - rates.min()) * 50.0)
    res = minimize(bound, active / active.sum(), method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
    return min(best, float(res.fun))


@dataclass
class CapacityResult:
    """Max-min rate, the covariance attaining it and a certified upper bound."""

    rate: float
    covariance: np.ndarray
    upper_bound: float
    iterations: int

    @property
    def gap(self):
        return self.upper_bound - self.rate


def _factor(c):
    lam, vec = np.linalg.eigh(0.5 * (c + c.conj().T))
    return vec * np.sqrt(np.clip(lam, 0.0, None))[np.newaxis, :]


def _epigraph_solve(hs, P, c0, max_iter):
    """Maximize ``s`` subject to ``f_i(L L^H) >= s`` and ``||L||_F^2 <= P``."""
    nt = hs[0].shape[1]
    size = nt * nt
    scale = max(_rates_grads(hs, c0)[0].min(), 1.0)

    def unpack(x):
        return (x[:size] + 1j * x[size:2 * size]).reshape(nt, nt) * math.sqrt(P)

    def rate_cons(x):
        lf = unpack(x)
        return _rates_grads(hs, lf @ lf.conj().T)[0] / scale - x[-1]

    def rate_jac(x):
        lf = unpack(x)
        _, grads = _rates_grads(hs, lf @ lf.conj().T)
        rows = []
        for g in grads:
            gl = 2.0 * (g @ lf) * math.sqrt(P) / scale
            rows.append(np.concatenate([gl.real.ravel(), gl.imag.ravel(), [-1.0]]))
        return np.array(rows)

    def power_cons(x):
        return np.array([1.0 - np.sum(x[:-1] ** 2)])

    def power_jac(x):
        return np.concatenate([-2.0 * x[:-1], [0.0]])[np.newaxis, :]

    lf0 = _factor(c0) / math.sqrt(P)
    x0 = np.concatenate([lf0.real.ravel(), lf0.imag.ravel(), [0.0]])
    x0[-1] = rate_cons(x0).min() + x0[-1]
    obj_grad = np.zeros_like(x0)
    obj_grad[-1] = -1.0
    res = minimize(lambda x: -x[-1], x0, jac=lambda x: obj_grad, method="SLSQP",
                   constraints=[{"type": "ineq", "fun": rate_cons, "jac": rate_jac},
                                {"type": "ineq", "fun": power_cons, "jac": power_jac}],
                   options={"maxiter": max_iter, "ftol": 1e-15})
    lf = unpack(res.x)
    c = lf @ lf.conj().T
    return _project(c, P), int(res.nit)


def multicast_capacity(channels, P=None, start=None, gap=GAP_TARGET, max_iter=MAX_ITER):
    """Common-message capacity ``max_{C >= 0, tr C <= P} min_i log2 det(I + H_i C H_i^H)``.

    Solved in epigraph form over a factor ``C = L L^H`` with SLSQP, started
    from white input, the best beamformer and ``start`` when given.  A
    linearization bound certifies the result.

    Raises
    ------
    NumericalFailure
        When the certified gap stays above ``gap``; ``best`` holds the best
        :class:`CapacityResult`.
    """
    hs, P = _resolve(channels, P)
    nt = hs[0].shape[1]
    if len(hs) == 1:
        rate, cx = waterfill_capacity(hs[0], P)
        return CapacityResult(rate, cx, rate, 0)

    starts = [np.eye(nt, dtype=complex) * (P / nt)]
    if start is not None:
        starts.append(_project(as_cmatrix(start, "covariance"), P))
    if nt <= 4:
        v, _ = _best_beam(hs, P)
        starts.append(P * np.outer(v, v.conj()))

    best = None
    iters = 0
    for c0 in starts:
        cands = [(c0, 0)]
        try:
            cands.append(_epigraph_solve(hs, P, c0, max_iter))
        except (np.linalg.LinAlgError, ValueError):
            pass
        for c, nit in cands:
            iters += nit
            rates, grads = _rates_grads(hs, c)
            upper = _upper_bound(rates, grads, c, P)
            res = CapacityResult(float(rates.min()), c, float(max(upper, rates.min())), iters)
            if best is None or res.rate > best.rate:
                best = CapacityResult(res.rate, c, min(res.upper_bound,
                                                       best.upper_bound if best else math.inf),
                                      iters)
            else:
                best.upper_bound = min(best.upper_bound, res.upper_bound)
        if best.gap <= gap:
            break
    best.iterations = iters
    if best.gap > gap:
        raise NumericalFailure(
            f"multicast capacity not certified within {gap:g} bits "
            f"(best {best.rate:.6f}, bound {best.upper_bound:.6f})", best=best)
    return best


def _angles_to_vec(theta, phi):
    """Unit vector with magnitudes from hyperspherical angles and the first
    entry real.  ``theta`` and ``phi`` have ``nt - 1`` entries (batched on
    the leading axes)."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    nt = theta.shape[-1] + 1
    mag = np.ones(theta.shape[:-1] + (nt,))
    for k in range(nt - 1):
        mag[..., k] *= np.cos(theta[..., k])
        mag[..., k + 1:] *= np.sin(theta[..., k])[..., np.newaxis]
    ph = np.concatenate([np.zeros(phi.shape[:-1] + (1,)), phi], axis=-1)
    return mag * np.exp(1j * ph)


def _best_beam(hs, P, steps=None):
    nt = hs[0].shape[1]
    if nt == 1:
        v = np.ones(1, dtype=complex)
        return v, min(float(np.linalg.norm(h[:, 0]) ** 2) for h in hs)
    if nt > 4:
        raise InvalidInputError("beamforming search supports at most 4 transmit antennas")
    steps = steps or {2: 48, 3: 14, 4: 7}[nt]
    axes = ([np.linspace(0.0, math.pi / 2, steps)] * (nt - 1)
            + [np.linspace(0.0, 2 * math.pi, 2 * steps, endpoint=False)] * (nt - 1))
    pts = np.array(list(itertools.product(*axes)))
    grid = _angles_to_vec(pts[:, :nt - 1], pts[:, nt - 1:])
    gains = np.min(np.stack([np.sum(np.abs(grid @ h.T) ** 2, axis=1) for h in hs]), axis=0)
    top = np.argsort(-gains)[:6]

    def neg(x):
        v = _angles_to_vec(x[:nt - 1], x[nt - 1:])
        return -min(float(np.linalg.norm(h @ v) ** 2) for h in hs)

    best_x, best_g = pts[top[0]], gains[top[0]]
    for i in top:
        res = minimize(neg, pts[i], method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-13 * max(gains[i], 1e-300),
                                "maxiter": 4000})
        if -res.fun > best_g:
            best_x, best_g = res.x, -res.fun
    return _angles_to_vec(best_x[:nt - 1], best_x[nt - 1:]), float(best_g)


def beamforming_rate(channels, v, P=None):
    """Common rate of the rank-one input ``P v v^H``."""
    hs, P = _resolve(channels, P)
    v = np.asarray(v, dtype=complex).ravel()
    v = v / np.linalg.norm(v)
    return min(float(np.log2(1.0 + P * np.linalg.norm(h @ v) ** 2)) for h in hs)


def best_beamformer(channels, P=None):
    """Unit vector maximizing ``min_i |H_i v|^2`` and the resulting common rate.

    Grid search over the unit sphere refined by Nelder-Mead; up to four
    transmit antennas.
    """
    hs, P = _resolve(channels, P)
    v, g = _best_beam(hs, P)
    return v, float(np.log2(1.0 + P * g))


def benchmark_beamforming_rate(channels, P=None):
    """Best common rate of single-stream beamforming, ``max_v min_i log2(1 + P |H_i v|^2)``."""
    return best_beamformer(channels, P)[1]


def timesharing_rate(channels, P=None):
    """Serve each user alone at its own capacity for ``1/K`` of the time."""
    hs, P = _resolve(channels, P)
    return min(waterfill_capacity(h, P)[0] for h in hs) / len(hs)


@dataclass
class ExampleScenario:
    """Three users, two transmit antennas: ``sqrt(alpha2) I``, ``sqrt(beta2) e1^T``,
    ``sqrt(beta2) e2^T``; each channel has point-to-point capacity ``C_p2p``."""

    C_p2p: float
    P: float
    alpha2: float
    beta2: float

    @property
    def alpha(self):
        return math.sqrt(self.alpha2)

    @property
    def beta(self):
        return math.sqrt(self.beta2)

    @property
    def H_list(self):
        a = math.sqrt(self.alpha2)
        b = math.sqrt(self.beta2)
        return [a * np.eye(2, dtype=complex),
                np.array([[b, 0.0]], dtype=complex),
                np.array([[0.0, b]], dtype=complex)]


def build_example(C_p2p, P=1.0):
    """Gains so that every user's point-to-point capacity is ``C_p2p`` bits."""
    if not (C_p2p > 0 and math.isfinite(C_p2p)):
        raise InvalidInputError("C_p2p must be positive")
    _check_power(P)
    # 2 log2(1 + alpha2 P / 2) = C  and  log2(1 + beta2 P) = C
    alpha2 = 2.0 * math.expm1(C_p2p / 2.0 * math.log(2.0)) / P
    beta2 = math.expm1(C_p2p * math.log(2.0)) / P
    return ExampleScenario(C_p2p=float(C_p2p), P=float(P), alpha2=alpha2, beta2=beta2)


def high_snr_example():
    """The example deep in the high-SNR regime, where rate ratios approach
    their pre-log limits."""
    return build_example(HIGH_SNR_CP2P, HIGH_SNR_POWER)


def as_fraction(f):
    """Exact rational for ``f``; floats are snapped to the nearest simple ratio."""
    if isinstance(f, Fraction):
        return f
    if isinstance(f, (int, str)):
        try:
            return Fraction(f)
        except ValueError:
            raise InvalidInputError(f"not a fraction: {f!r}") from None
    return Fraction(float(f)).limit_denominator(10 ** 9)


def _effective_k(K, variant):
    v = variant.upper()
    if v == "GMD":
        return K
    if v == "JET":
        return K - 1
    raise InvalidInputError("variant must be 'GMD' or 'JET'")


def achievable_fraction(n, K, N, variant="GMD"):
    """Fraction ``m / (nN)`` of the capacity kept with ``N`` channel uses."""
    kk = _effective_k(K, variant)
    floor = n ** max(kk - 1, 0)
    if N < floor:
        raise ConstraintViolation(f"N below minimum {floor} (n={n}, K={K}, {variant})")
    return Fraction(N - (n ** max(kk - 1, 0) - 1), N)


def min_channel_uses(n, K, f, variant="GMD"):
    """Smallest ``N`` reaching capacity fraction ``f`` (exact rational arithmetic)."""
    if n < 1 or K < 1:
        raise InvalidInputError("n and K must be positive")
    f = as_fraction(f)
    if not (0 < f < 1):
        raise InvalidInputError("target fraction must lie in (0, 1)")
    kk = _effective_k(K, variant)
    base = n ** max(kk - 1, 0)
    lost = base - 1
    need = math.ceil(Fraction(lost) / (1 - f))
    return max(base, need, 1)
