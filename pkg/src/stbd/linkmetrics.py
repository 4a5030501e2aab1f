"""Link-level figures of merit: power gains, SINR and achievable rates."""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .channel import SystemDims
from .errors import InvalidArgument
from .precoding import TECHNIQUES, PrecoderSet


class LinkGains(NamedTuple):
    """Power gains seen by one user.

    ``alpha_iui`` is already weighted by the other users' powers.
    """

    alpha_d: float
    alpha_isi: float
    alpha_iui: float
    alpha_n: float


class RatePoint(NamedTuple):
    sinr: np.ndarray
    rates: np.ndarray

    @property
    def sum_rate(self) -> float:
        return float(np.sum(self.rates))


class TheoreticalGains(NamedTuple):
    r_k: float
    r: float
    d_k: float


def link_gains(G_k, H_k, precoders: Sequence[np.ndarray], k: int, rho) -> LinkGains:
    """Desired, ISI, IUI and noise gains at user ``k``.

    Parameters
    ----------
    G_k : np.ndarray
        Receiver of user ``k``, shape ``(B, B_r)``.
    H_k : np.ndarray
        Channel of user ``k``, shape ``(B_r, B_t M)``.
    precoders : sequence of np.ndarray
        Precoders of all users, each ``(B_t M, B)``.
    k : int
        Index of the user in ``precoders``.
    rho : array_like
        Per-user transmit powers (only entries ``!= k`` are used).
    """
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (len(precoders),):
        raise InvalidArgument(f"need one power per user ({len(precoders)}), got shape {rho.shape}")
    if G_k.shape[1] != H_k.shape[0] or any(P.shape[0] != H_k.shape[1] for P in precoders):
        raise InvalidArgument(
            f"shape mismatch: G {G_k.shape}, H {H_k.shape}, P {[P.shape for P in precoders]}")
    GH = G_k @ H_k
    D = GH @ precoders[k]
    if D.shape[0] != D.shape[1]:
        raise InvalidArgument(f"desired link must be square, got {D.shape}")
    alpha_d = float(np.sum(np.abs(np.diagonal(D)) ** 2))
    # Off-diagonal energy directly, not total minus diagonal (cancellation).
    alpha_isi = float(np.sum(np.abs(D - np.diag(np.diagonal(D))) ** 2))
    alpha_iui = 0.0
    for j, P in enumerate(precoders):
        if j != k and rho[j] != 0.0:
            alpha_iui += rho[j] * float(np.sum(np.abs(GH @ P) ** 2))
    alpha_n = float(np.sum(np.abs(G_k) ** 2))
    return LinkGains(alpha_d, alpha_isi, alpha_iui, alpha_n)


def interference_gains(G_k, H_k, precoders: Sequence[np.ndarray]) -> np.ndarray:
    """Unweighted leakage ``||G_k H_k P_j||_F^2`` from each user ``j`` into user ``k``."""
    GH = G_k @ H_k
    return np.array([float(np.sum(np.abs(GH @ P) ** 2)) for P in precoders])


def all_link_gains(ps: PrecoderSet, channels: Sequence[np.ndarray], rho) -> list[LinkGains]:
    return [link_gains(ps.receivers[k], channels[k], ps.precoders, k, rho) for k in range(ps.K)]


def sinr(gains: LinkGains, rho_k: float, eta: float) -> float:
    """Effective SINR ``rho a_d / (rho a_isi + a_iui + eta a_n)``."""
    if not eta >= 0:
        raise InvalidArgument(f"noise power must be nonnegative, got {eta!r}")
    num = rho_k * gains.alpha_d
    den = rho_k * gains.alpha_isi + gains.alpha_iui + eta * gains.alpha_n
    if num == 0.0:
        return 0.0
    if den == 0.0:
        return float("inf")
    return num / den


def guard_efficiency(dims: SystemDims) -> float:
    """Fraction of channel uses carrying data, ``B / (B + L + L_p - 2)``."""
    return dims.B / (dims.B + dims.guard)


def achievable_rate(sinr_value, dims: SystemDims):
    """Rate in bits/s/Hz of one block for a given SINR (array accepted)."""
    sinr_value = np.asarray(sinr_value, dtype=float)
    if np.any(sinr_value < 0):
        raise InvalidArgument("SINR must be nonnegative")
    out = guard_efficiency(dims) * np.log2(1.0 + sinr_value)
    return float(out) if out.ndim == 0 else out


def rate_point(gains: Sequence[LinkGains], rho, eta: float, dims: SystemDims) -> RatePoint:
    rho = np.asarray(rho, dtype=float)
    s = np.array([sinr(g, rho[k], eta) for k, g in enumerate(gains)])
    return RatePoint(s, np.asarray(achievable_rate(s, dims)))


def theoretical_gains(dims: SystemDims, technique: str) -> TheoreticalGains:
    """High-SNR multiplexing and diversity gains.

    ISI-limited designs saturate, so both gains are zero; the joint design
    achieves ``r_k = B / (B + L + L_p - 2)`` and ``d_k = 1 - r_k``.
    """
    if technique not in TECHNIQUES:
        raise InvalidArgument(f"unknown technique {technique!r}")
    if technique != "JPBD":
        return TheoreticalGains(0.0, 0.0, 0.0)
    r_k = guard_efficiency(dims)
    return TheoreticalGains(r_k, dims.K * r_k, 1.0 - r_k)


def low_snr_bound(dims: SystemDims, rho_k: float, eta: float) -> float:
    """Upper bound ``(rho/eta) M B_t`` on the mean SINR at low SNR."""
    return rho_k / eta * dims.M * dims.B_t
