"""Transmission scheme: MMSE augmentation, precoding, receiver front end,
successive interference cancellation and Monte-Carlo SINR measurement."""

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .capacity import mutual_information
from .decomp import GmdResult, gmd, kgmd_spacetime
from .errors import ConstraintViolation, InvalidInputError
from .linalg import DEFAULT_TOL, as_cmatrix, hermitian_sqrt_factor, qr_decompose

__all__ = [
    "ChannelSet",
    "AugmentedChannel",
    "P2PScheme",
    "SimReport",
    "augment",
    "p2p_effective_snr",
    "p2p_setup",
    "p2p_transmit_receive",
    "sic_statistics",
    "sic_decode",
    "measured_sinr",
    "MulticastPlan",
    "plan_multicast",
    "multicast_simulate",
]

MIN_TRIALS = 1000
CHUNK = 4096
EQUAL_DET_RTOL = 1e-6


@dataclass
class ChannelSet:
    """Broadcast channel ``y_i = H_i x + z_i`` with unit noise per receive element.

    ``Cx`` defaults to white input ``(P / n_t) I``.
    """

    H_list: List[np.ndarray]
    P: float
    Cx: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.H_list) < 1:
            raise InvalidInputError("channel set needs at least one channel matrix")
        self.H_list = [as_cmatrix(h, f"H{i + 1}") for i, h in enumerate(self.H_list)]
        nt = self.H_list[0].shape[1]
        if any(h.shape[1] != nt for h in self.H_list):
            raise InvalidInputError("all channel matrices must have the same column count")
        if not (self.P > 0 and math.isfinite(self.P)):
            raise InvalidInputError("power must be positive")
        if self.Cx is None:
            self.Cx = np.eye(nt, dtype=complex) * (self.P / nt)
        self.Cx = as_cmatrix(self.Cx, "covariance")
        if self.Cx.shape != (nt, nt):
            raise InvalidInputError(f"covariance must be {nt}x{nt}")
        hermitian_sqrt_factor(self.Cx)
        if np.trace(self.Cx).real > self.P * (1 + 1e-9):
            raise InvalidInputError("trace(Cx) exceeds the power constraint")

    @property
    def n_t(self):
        return self.H_list[0].shape[1]

    @property
    def K(self):
        return len(self.H_list)


@dataclass
class AugmentedChannel:
    G: np.ndarray
    Qtilde: np.ndarray
    Cx_half: np.ndarray

    @property
    def n_t(self):
        return self.G.shape[0]


def augment(H, Cx, tol=DEFAULT_TOL):
    """QR of the stacked matrix ``[H Cx^(1/2); I]``.

    ``G`` is square, upper triangular and always invertible, with
    ``det(G)**2 == det(I + H Cx H^H)``.
    """
    H = as_cmatrix(H, "H")
    Cx = as_cmatrix(Cx, "covariance")
    nr, nt = H.shape
    if Cx.shape != (nt, nt):
        raise InvalidInputError(f"covariance must be {nt}x{nt} to match H")
    half = hermitian_sqrt_factor(Cx, tol)
    stacked = np.vstack([H @ half, np.eye(nt)])
    q, g = qr_decompose(stacked, tol)
    return AugmentedChannel(G=g, Qtilde=q[:nr, :], Cx_half=half)


def _det_root(g):
    """``|det G| ** (1/n)`` computed from the (positive) triangular diagonal."""
    d = np.abs(np.diag(g))
    return float(np.exp(np.mean(np.log(d))))


def p2p_effective_snr(aug):
    """Per-stream SNR ``t**2 - 1`` with ``t = det(G)**(1/n_t)``.

    The squared form is the one whose stream rates add up to
    ``log2 det(I + H Cx H^H)``.
    """
    t = _det_root(aug.G)
    return t * t - 1.0


@dataclass
class P2PScheme:
    """Point-to-point UCD link: augmented channel plus GMD of ``G``."""

    aug: AugmentedChannel
    gmd: GmdResult

    def transmit(self, x_tilde):
        x_tilde = np.asarray(x_tilde, dtype=complex)
        if x_tilde.shape[0] != self.aug.n_t:
            raise InvalidInputError(f"expected {self.aug.n_t} data symbols")
        return self.aug.Cx_half @ self.gmd.V @ x_tilde

    def receive(self, y):
        y = np.asarray(y, dtype=complex)
        if y.shape[0] != self.aug.Qtilde.shape[0]:
            raise InvalidInputError(f"expected {self.aug.Qtilde.shape[0]} received samples")
        return self.gmd.U.conj().T @ self.aug.Qtilde.conj().T @ y


def p2p_setup(H, Cx, tol=DEFAULT_TOL):
    aug = augment(H, Cx, tol)
    return P2PScheme(aug=aug, gmd=gmd(aug.G, tol))


def p2p_transmit_receive(scheme, x_tilde, y=None):
    """Precode ``x_tilde`` and, when ``y`` is given, apply the receiver front end.

    Returns ``(x, y_tilde)``; ``y_tilde`` is ``None`` without ``y``.
    """
    x = scheme.transmit(x_tilde)
    return x, (None if y is None else scheme.receive(y))


def sic_statistics(y_tilde, T, known_symbols=None):
    """Decision statistics ``e_k = y_k - sum_{j>k} T_kj x_j``, last stream first.

    ``x_j`` are the genie symbols when ``known_symbols`` is given, otherwise
    the zero-forcing estimates ``e_j / T_jj`` of the streams already
    processed.  Works on one vector or on an ``(m, trials)`` batch.
    """
    y = np.asarray(y_tilde, dtype=complex)
    T = np.asarray(T, dtype=complex)
    m = T.shape[0]
    if y.shape[0] != m:
        raise InvalidInputError("y_tilde and T have inconsistent sizes")
    e = np.zeros_like(y)
    ref = None if known_symbols is None else np.asarray(known_symbols, dtype=complex)
    est = np.zeros_like(y)
    for k in range(m - 1, -1, -1):
        src = est if ref is None else ref
        e[k] = y[k] - T[k, k + 1:] @ src[k + 1:]
        est[k] = e[k] / T[k, k]
    return e


def sic_decode(y_tilde, T, known_symbols=None):
    """Successive interference cancellation estimates.

    With genie symbols and a batch of samples each stream is scaled by its
    empirical scalar MMSE coefficient; otherwise by ``1 / T_kk``.
    """
    e = sic_statistics(y_tilde, T, known_symbols)
    T = np.asarray(T, dtype=complex)
    if known_symbols is not None and e.ndim == 2 and e.shape[1] > 1:
        x = np.asarray(known_symbols, dtype=complex)
        gamma = np.sum(x * e.conj(), axis=1) / np.sum(np.abs(e) ** 2, axis=1)
        return gamma[:, np.newaxis] * e
    diag = np.diag(T)
    return e / (diag[:, np.newaxis] if e.ndim == 2 else diag)


def measured_sinr(sxx, see, sxe):
    """``1/MMSE - 1`` from accumulated second moments of symbol and statistic."""
    rho = np.abs(sxe) ** 2 / (sxx * see)
    return rho / (1.0 - rho)


@dataclass
class UserReport:
    diag_value: float
    predicted_sinr: List[float]
    predicted_sinr_literal: List[float]
    measured_sinr: List[float]
    stream_rate: List[float]
    full_stream_sinr: List[float]
    mutual_information: float


@dataclass
class SimReport:
    n: int
    K: int
    N: int
    m: int
    trials: int
    seed: int
    edge_streams: str
    users: List[UserReport]
    scheme_rate_per_use: float
    capacity_fraction: float
    power_per_use: float
    power: float
    theta_rows: List[int]
    low_trials: bool = False
    warnings: List[str] = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _cgauss(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def _chunk_rng(seed, index):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


@dataclass
class MulticastPlan:
    """Everything fixed before transmission: augmented channels and the
    joint space-time decomposition of their ``G`` matrices."""

    channels: ChannelSet
    augmented: List[AugmentedChannel]
    decomp: object

    @property
    def predicted_sinr(self):
        """Per user, ``t_kk**2 - 1`` for the ``m`` retained streams."""
        return [np.abs(np.diag(t)) ** 2 - 1.0 for t in self.decomp.T_list]

    @property
    def full_stream_sinr(self):
        """Per user, ``t_kk**2 - 1`` over all ``n N`` streams before truncation."""
        return [np.abs(np.diag(t)) ** 2 - 1.0 for t in self.decomp.T_full_list]

    @property
    def literal_sinr(self):
        """Per user, the unsquared reading ``t - 1``."""
        return [g - 1.0 for g in self.decomp.diag_value_list]


def plan_multicast(channels, copies, allow_unequal=False, tol=DEFAULT_TOL):
    """Augment every channel and jointly triangularize the ``G_i``.

    Raises
    ------
    ConstraintViolation
        Unequal ``det(G_i)`` (relative spread above ``EQUAL_DET_RTOL``)
        unless ``allow_unequal``; also ``copies`` below the minimum.
    """
    augs = [augment(h, channels.Cx, tol) for h in channels.H_list]
    roots = [_det_root(a.G) for a in augs]
    if not allow_unequal and max(roots) - min(roots) > EQUAL_DET_RTOL * max(roots):
        raise ConstraintViolation(
            "augmented channels have unequal determinants "
            f"({', '.join(f'{r:.6g}' for r in roots)}); enable allow_unequal")
    dec = kgmd_spacetime([a.G for a in augs], copies, tol)
    return MulticastPlan(channels=channels, augmented=augs, decomp=dec)


def multicast_simulate(channels, copies, trials, seed=0, allow_unequal=False,
                       edge_streams="filler", tol=DEFAULT_TOL):
    """Monte-Carlo run of the space-time multicast scheme.

    Parameters
    ----------
    channels : ChannelSet
    copies : int
        Channel uses ``N`` processed jointly.
    trials : int
        Number of space-time blocks simulated.
    seed : int
        Every chunk of ``CHUNK`` trials draws from its own Philox stream
        keyed by ``(seed, chunk index)``.
    allow_unequal : bool
        Accept users whose ``det(G_i)`` differ; each user then reports its
        own constant diagonal.
    edge_streams : {"filler", "silent"}
        What the truncated dimensions carry.  ``"filler"`` sends unit-power
        symbols known to the receivers, so retained streams see exactly the
        designed triangular channel.  ``"silent"`` leaves them empty, which
        only removes interference.

    Returns
    -------
    SimReport
    """
    if edge_streams not in ("filler", "silent"):
        raise InvalidInputError("edge_streams must be 'filler' or 'silent'")
    trials = int(trials)
    if trials < 1:
        raise InvalidInputError("trials must be positive")
    plan = plan_multicast(channels, copies, allow_unequal, tol)
    augs, dec = plan.augmented, plan.decomp
    n, N, m = dec.n, dec.N, dec.m
    dim = n * N
    order = dec.order
    pos = [order.index(p - 1) for p in dec.theta_rows]
    eye = np.eye(N)
    tx = np.kron(eye, augs[0].Cx_half) @ dec.V_full[:, order]
    fronts, hbig, t_upper = [], [], []
    for a, h, u_full, t_full in zip(augs, channels.H_list, dec.U_full_list, dec.T_full_list):
        fronts.append(u_full[:, order].conj().T @ np.kron(eye, a.Qtilde.conj().T))
        hbig.append(np.kron(eye, h))
        t_upper.append(np.triu(t_full[np.ix_(order, order)], 1))
    active = np.zeros(dim, dtype=bool)
    active[pos] = True

    K = channels.K
    sxx = np.zeros((K, m))
    see = np.zeros((K, m))
    sxe = np.zeros((K, m), dtype=complex)
    power = 0.0
    done = 0
    chunk = 0
    while done < trials:
        b = min(CHUNK, trials - done)
        rng = _chunk_rng(seed, chunk)
        x = _cgauss(rng, (dim, b))
        if edge_streams == "silent":
            x[~active] = 0.0
        xb = tx @ x
        power += float(np.sum(np.abs(xb) ** 2))
        for i in range(K):
            z = _cgauss(rng, (hbig[i].shape[0], b))
            y_t = fronts[i] @ (hbig[i] @ xb + z)
            # genie cancellation of every later stream in the SIC order
            e = (y_t - t_upper[i] @ x)[pos]
            xs = x[pos]
            sxx[i] += np.sum(np.abs(xs) ** 2, axis=1)
            see[i] += np.sum(np.abs(e) ** 2, axis=1)
            sxe[i] += np.sum(xs * e.conj(), axis=1)
        done += b
        chunk += 1

    users = []
    pred_all = plan.predicted_sinr
    full_all = plan.full_stream_sinr
    for i, h in enumerate(channels.H_list):
        pred = pred_all[i]
        users.append(UserReport(
            diag_value=dec.diag_value_list[i],
            predicted_sinr=pred.tolist(),
            predicted_sinr_literal=[plan.literal_sinr[i]] * m,
            measured_sinr=measured_sinr(sxx[i], see[i], sxe[i]).tolist(),
            stream_rate=np.log2(1.0 + pred).tolist(),
            full_stream_sinr=full_all[i].tolist(),
            mutual_information=mutual_information(h, channels.Cx),
        ))
    worst = min(float(np.min(p)) for p in pred_all)
    notes = []
    if trials < MIN_TRIALS:
        notes.append(f"low trial count ({trials} < {MIN_TRIALS}); SINR estimates are noisy")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
    return SimReport(
        n=n, K=K, N=N, m=m, trials=trials, seed=int(seed), edge_streams=edge_streams,
        users=users,
        scheme_rate_per_use=(m / N) * math.log2(1.0 + worst),
        capacity_fraction=m / dim,
        power_per_use=power / (trials * N),
        power=float(channels.P),
        theta_rows=list(dec.theta_rows),
        low_trials=trials < MIN_TRIALS,
        warnings=notes,
    )
