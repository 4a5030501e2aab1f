"""Gray-coded square QAM mapping, hard-decision demapping and BER counting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidArgument


def _gray(n: np.ndarray) -> np.ndarray:
    return n ^ (n >> 1)


def _gray_inverse(g: np.ndarray) -> np.ndarray:
    n = g.copy()
    shift = g >> 1
    while np.any(shift):
        n ^= shift
        shift >>= 1
    return n


@dataclass(frozen=True)
class QamConstellation:
    """Square ``order``-QAM with Gray labels on each axis and unit mean energy.

    The first half of each symbol's bits selects the in-phase level, the
    second half the quadrature level (most significant bit first).
    """

    order: int

    def __post_init__(self):
        m = int(self.order)
        bits = m.bit_length() - 1
        if m != self.order or m < 4 or 1 << bits != m or bits % 2:
            raise InvalidArgument(f"square QAM needs order 4**n, got {self.order!r}")

    @property
    def bits_per_symbol(self) -> int:
        return self.order.bit_length() - 1

    @property
    def side(self) -> int:
        return math.isqrt(self.order)

    @property
    def norm(self) -> float:
        """Amplitude of one level step relative to unit mean energy."""
        return math.sqrt(2.0 * (self.order - 1) / 3.0)

    @cached_property
    def points(self) -> np.ndarray:
        """Constellation points indexed by the integer value of their bit label."""
        half = self.bits_per_symbol // 2
        labels = np.arange(self.order)
        i_idx = _gray_inverse(labels >> half)
        q_idx = _gray_inverse(labels & (self.side - 1))
        return self._levels(i_idx) + 1j * self._levels(q_idx)

    def _levels(self, idx):
        return (2.0 * idx - (self.side - 1)) / self.norm


def _bits_to_axis_index(bits: np.ndarray) -> np.ndarray:
    weights = 1 << np.arange(bits.shape[-1] - 1, -1, -1)
    return _gray_inverse(bits @ weights)


def _axis_index_to_bits(idx: np.ndarray, nbits: int) -> np.ndarray:
    g = _gray(idx)
    return ((g[:, None] >> np.arange(nbits - 1, -1, -1)) & 1).astype(np.uint8)


def modulate(bits, constellation: QamConstellation, rho_k: float = 1.0) -> np.ndarray:
    """Map a flat bit array to symbols of mean power ``rho_k``."""
    bits = np.asarray(bits).astype(np.int64).ravel()
    nb = constellation.bits_per_symbol
    if bits.size % nb:
        raise InvalidArgument(f"bit count {bits.size} not divisible by {nb}")
    if np.any((bits != 0) & (bits != 1)):
        raise InvalidArgument("bits must be 0 or 1")
    if rho_k < 0:
        raise InvalidArgument(f"symbol power must be nonnegative, got {rho_k!r}")
    b = bits.reshape(-1, nb)
    half = nb // 2
    i_idx = _bits_to_axis_index(b[:, :half])
    q_idx = _bits_to_axis_index(b[:, half:])
    s = constellation._levels(i_idx) + 1j * constellation._levels(q_idx)
    return math.sqrt(rho_k) * s


def demodulate(received, constellation: QamConstellation, scale: float = 1.0) -> np.ndarray:
    """Minimum-distance hard decisions after dividing by ``scale``."""
    if not scale > 0:
        raise InvalidArgument(f"decision scale must be positive, got {scale!r}")
    r = np.asarray(received, dtype=complex).ravel() / scale
    side, half = constellation.side, constellation.bits_per_symbol // 2

    def axis(x):
        idx = np.rint((x * constellation.norm + (side - 1)) / 2.0)
        return np.clip(idx, 0, side - 1).astype(np.int64)

    bi = _axis_index_to_bits(axis(r.real), half)
    bq = _axis_index_to_bits(axis(r.imag), half)
    return np.hstack([bi, bq]).ravel()


@dataclass(frozen=True)
class BERResult:
    bits_sent: int
    bit_errors: int

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_sent if self.bits_sent else 0.0

    def __add__(self, other: "BERResult") -> "BERResult":
        return BERResult(self.bits_sent + other.bits_sent, self.bit_errors + other.bit_errors)

    def wilson_interval(self, z: float = 1.959963984540054) -> tuple[float, float]:
        """Wilson score interval for the error probability (95% by default)."""
        n = self.bits_sent
        if n == 0:
            return 0.0, 1.0
        p = self.ber
        den = 1.0 + z * z / n
        centre = (p + z * z / (2 * n)) / den
        half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
        return max(0.0, centre - half), min(1.0, centre + half)


def count_errors(sent, received) -> BERResult:
    sent = np.asarray(sent).ravel()
    received = np.asarray(received).ravel()
    if sent.shape != received.shape:
        raise InvalidArgument(f"bit arrays differ in length: {sent.size} vs {received.size}")
    return BERResult(int(sent.size), int(np.count_nonzero(sent != received)))


def adaptive_order(r_k: float, pmax_over_eta: float) -> int:
    """QAM order ``2**R`` with ``R`` the largest even integer <= ``r_k log2(P_max/eta)`` (at least 2)."""
    if not pmax_over_eta > 0:
        raise InvalidArgument(f"P_max/eta must be positive, got {pmax_over_eta!r}")
    target = r_k * math.log2(pmax_over_eta)
    R = max(2, 2 * math.floor(target / 2.0 + 1e-12))
    return 1 << R
