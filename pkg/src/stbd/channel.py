"""Frequency-selective multiuser MISO channel model.

A transmitter with ``M`` antennas serves ``K`` single-antenna users. Each
user receives blocks of ``B`` symbols spread by the precoder to ``B_t``
transmitted samples and by the channel to ``B_r`` received samples. The
channel between antenna ``m`` and user ``k`` is an ``L``-tap impulse
response with independent circularly-symmetric Gaussian taps whose
variances follow an exponential power delay profile.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import matcore
from .errors import InvalidArgument


@dataclass(frozen=True)
class SystemDims:
    """Dimension bookkeeping for one block transmission.

    Parameters
    ----------
    M : int
        Transmit antennas.
    K : int
        Users.
    B : int
        Symbols per block.
    L : int
        Channel impulse response length in samples.
    L_p : int
        Precoder redundancy in samples (``L_p = 1`` adds none).
    """

    M: int
    K: int
    B: int
    L: int
    L_p: int = 1

    def __post_init__(self):
        for name in ("M", "K", "B", "L", "L_p"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise InvalidArgument(f"{name} must be a positive integer, got {value!r}")

    @property
    def B_t(self) -> int:
        """Transmitted samples per antenna and block."""
        return self.B + self.L_p - 1

    @property
    def B_r(self) -> int:
        """Received samples per block."""
        return self.B_t + self.L - 1

    @property
    def B_v(self) -> int:
        """Dimension of the null space of each user's interference matrix."""
        return self.B_t * self.M - self.B_r * (self.K - 1)

    @property
    def guard(self) -> int:
        """Guard interval between consecutive blocks."""
        return self.L + self.L_p - 2

    def with_redundancy(self, L_p: int) -> "SystemDims":
        return replace(self, L_p=L_p)


@dataclass(frozen=True)
class PowerDelayProfile:
    """Average tap powers of the channel impulse response (trace one)."""

    taps: np.ndarray
    t_s: float
    sigma_h: float

    @property
    def L(self) -> int:
        return self.taps.size


@dataclass(frozen=True)
class NoiseModel:
    """Receiver noise with power ``eta`` per sample (linear scale)."""

    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise InvalidArgument(f"noise power must be positive, got {self.eta!r}")


def exp_pdp(L: int, t_s: float, sigma_h: float) -> PowerDelayProfile:
    """Exponential power delay profile normalized to unit total power.

    Tap ``l`` (zero based) has power proportional to
    ``exp(-l * t_s / sigma_h)``.
    """
    if int(L) != L or L < 1:
        raise InvalidArgument(f"L must be a positive integer, got {L!r}")
    if not t_s > 0 or not sigma_h > 0:
        raise InvalidArgument(f"t_s and sigma_h must be positive, got {t_s!r}, {sigma_h!r}")
    taps = np.exp(-np.arange(L) * (t_s / sigma_h))
    taps = taps / taps.sum()
    taps.setflags(write=False)
    return PowerDelayProfile(taps=taps, t_s=float(t_s), sigma_h=float(sigma_h))


@dataclass(frozen=True)
class ChannelRealization:
    """One drop of all ``K x M`` impulse responses.

    ``cirs[k, m]`` is the length-``L`` impulse response from antenna ``m``
    to user ``k``. The block matrices are built on demand for the
    dimensions in ``dims``; :meth:`with_redundancy` reuses the same
    impulse responses with a different precoder redundancy.
    """

    cirs: np.ndarray
    dims: SystemDims

    def __post_init__(self):
        d = self.dims
        if self.cirs.shape != (d.K, d.M, d.L):
            raise InvalidArgument(
                f"cirs shape {self.cirs.shape} does not match (K, M, L) = {(d.K, d.M, d.L)}")
        if not np.isfinite(self.cirs).all():
            raise InvalidArgument("channel impulse responses must be finite")

    def with_redundancy(self, L_p: int) -> "ChannelRealization":
        return ChannelRealization(self.cirs, self.dims.with_redundancy(L_p))

    def user_channel(self, k: int) -> np.ndarray:
        return assemble_user_channel(self, k)

    def interference(self, k: int) -> np.ndarray:
        return assemble_interference(self, k)


def draw_channel(dims: SystemDims, pdp: PowerDelayProfile, rng: np.random.Generator) -> ChannelRealization:
    """Draw independent Rayleigh-faded taps for every user/antenna pair."""
    if pdp.L != dims.L:
        raise InvalidArgument(f"profile has {pdp.L} taps but dims.L = {dims.L}")
    shape = (dims.K, dims.M, dims.L)
    x = rng.standard_normal(shape)
    y = rng.standard_normal(shape)
    cirs = np.sqrt(pdp.taps / 2.0) * (x + 1j * y)
    return ChannelRealization(cirs=cirs, dims=dims)


def _check_user(real: ChannelRealization, k: int) -> None:
    if not 0 <= k < real.dims.K:
        raise IndexError(f"user index {k} out of range for K = {real.dims.K}")


def assemble_user_channel(real: ChannelRealization, k: int) -> np.ndarray:
    """Channel matrix ``H_k`` of shape ``(B_r, B_t * M)``."""
    _check_user(real, k)
    B_t = real.dims.B_t
    return np.hstack([matcore.build_convolution_matrix(h, B_t) for h in real.cirs[k]])


def assemble_interference(real: ChannelRealization, k: int) -> np.ndarray:
    """Stack of every other user's channel, shape ``(B_r (K-1), B_t * M)``."""
    _check_user(real, k)
    d = real.dims
    others = [assemble_user_channel(real, j) for j in range(d.K) if j != k]
    if not others:
        return np.zeros((0, d.B_t * d.M), dtype=np.complex128)
    return np.vstack(others)


def assemble_full_channel(real: ChannelRealization) -> np.ndarray:
    """All users stacked, shape ``(K B_r, B_t M)``."""
    return np.vstack([assemble_user_channel(real, k) for k in range(real.dims.K)])
