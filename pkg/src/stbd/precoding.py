"""Block-diagonalization precoders for frequency-selective broadcast channels.

Every block-diagonalization (BD) precoder for user ``k`` has the form
``P_k = V0_k @ Pbar_k`` where the columns of ``V0_k`` span the null space
of the other users' stacked channels, so inter-user interference vanishes.
The designs differ in how ``Pbar_k`` (and the receiver) handle the
inter-symbol interference left inside the user's own block:

``TRBD``
    projection of the time-reversal prefilter onto the null space;
``EBD``
    regularized least-squares pre-equalizer with a unit-norm constraint;
``JPBD``
    SVD-based joint precoder/receiver that removes ISI entirely.

Plain time reversal (``TR``) is kept as the non-BD baseline.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import matcore
from .channel import ChannelRealization, SystemDims
from .errors import DegenerateChannel, InfeasibleDimensions, InvalidArgument, NumericalFailure

logger = logging.getLogger(__name__)

TECHNIQUES = ("TR", "TRBD", "EBD", "JPBD")

# Relative size (to the largest) below which a used singular value of the
# block-diagonalized channel makes the JPBD design degenerate.
JPBD_SINGULAR_FLOOR = 1e-12

EBD_MAX_ITER = 200


class Feasibility(NamedTuple):
    """Outcome of a feasibility check.

    ``margin`` is the slack of the block-size inequality (nonnegative when
    it holds) and ``dimension_margin`` the slack of the null-space
    dimension requirement it implies (``B_v - B`` or ``B_v - B_r``).
    """

    feasible: bool
    margin: float
    dimension_margin: int
    reason: str

    def __bool__(self) -> bool:
        return self.feasible


def bd_feasible(dims: SystemDims) -> Feasibility:
    """Whether any BD precoder exists for ``dims`` (null space of size >= B)."""
    M, K, B, L, L_p = dims.M, dims.K, dims.B, dims.L, dims.L_p
    dim_margin = dims.B_v - B
    if M < K:
        return Feasibility(False, float("-inf"), dim_margin, f"M >= K violated (M={M}, K={K})")
    lhs = B * (M - K) / (M - K + 1) + L_p - 1
    rhs = (K - 1) * (L - 1) / (M - K + 1)
    margin = lhs - rhs
    if margin < 0:
        return Feasibility(False, margin, dim_margin,
                           f"B(M-K)/(M-K+1) + L_p - 1 >= (K-1)(L-1)/(M-K+1) violated "
                           f"({lhs:.6g} < {rhs:.6g})")
    return Feasibility(True, margin, dim_margin, "")


def jpbd_feasible(dims: SystemDims) -> Feasibility:
    """Whether the joint design applies (null space of size >= B_r)."""
    M, K, L = dims.M, dims.K, dims.L
    dim_margin = dims.B_v - dims.B_r
    if M <= K:
        return Feasibility(False, float("-inf"), dim_margin, f"M > K violated (M={M}, K={K})")
    rhs = K * (L - 1) / (M - K)
    margin = dims.B_t - rhs
    if margin < 0:
        return Feasibility(False, margin, dim_margin,
                           f"B_t >= K(L-1)/(M-K) violated ({dims.B_t} < {rhs:.6g})")
    return Feasibility(True, margin, dim_margin, "")


def check_feasible(dims: SystemDims, technique: str) -> None:
    """Raise :class:`InfeasibleDimensions` if ``technique`` cannot run on ``dims``."""
    if technique not in TECHNIQUES:
        raise InvalidArgument(f"unknown technique {technique!r}; expected one of {TECHNIQUES}")
    if technique in ("TR", "TRBD") and dims.L_p != dims.L:
        raise InfeasibleDimensions(f"{technique} requires L_p = L ({dims.L}), got L_p = {dims.L_p}")
    if technique == "TR":
        return
    verdict = jpbd_feasible(dims) if technique == "JPBD" else bd_feasible(dims)
    if not verdict:
        raise InfeasibleDimensions(f"{technique} infeasible for {dims}: {verdict.reason}")


def sample_drop_receiver(dims: SystemDims) -> np.ndarray:
    """Selection matrix keeping the ``B`` central samples of a received block."""
    lead = math.ceil(dims.guard / 2)
    G = np.zeros((dims.B, dims.B_r), dtype=np.complex128)
    G[np.arange(dims.B), lead + np.arange(dims.B)] = 1.0
    return G


def tr_prefilter(real: ChannelRealization, k: int) -> np.ndarray:
    """Unit-Frobenius-norm time-reversal prefilter for user ``k``.

    Each antenna block convolves the data with the conjugated,
    time-reversed impulse response; ``real.dims.L_p`` must equal ``L``.
    """
    dims = real.dims
    if dims.L_p != dims.L:
        raise InvalidArgument(f"time reversal needs L_p = L ({dims.L}), got L_p = {dims.L_p}")
    if not 0 <= k < dims.K:
        raise IndexError(f"user index {k} out of range for K = {dims.K}")
    blocks = [matcore.build_convolution_matrix(np.conj(h[::-1]), dims.B) for h in real.cirs[k]]
    H_tr = np.vstack(blocks)
    norm = np.linalg.norm(H_tr)
    if norm == 0.0:
        raise DegenerateChannel(f"all-zero impulse responses for user {k}")
    return H_tr / norm


@dataclass(frozen=True)
class PrecoderSet:
    """Per-user precoders ``P_k`` (``B_t M x B``) and receivers ``G_k`` (``B x B_r``)."""

    technique: str
    dims: SystemDims
    precoders: tuple
    receivers: tuple
    diagnostics: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return len(self.precoders)


@dataclass(frozen=True)
class BDWorkspace:
    """Null-space bases and block-diagonalized channels shared by the BD designs.

    ``null_bases[k]`` is ``V0_k`` (``B_t M x B_v``), ``channels[k]`` is
    ``H_k`` and ``block_svds[k]`` the thin SVD of ``H_k @ V0_k``.
    """

    dims: SystemDims
    null_bases: tuple
    channels: tuple
    block_svds: tuple

    def block_channel(self, k: int) -> np.ndarray:
        return self.channels[k] @ self.null_bases[k]


def build_workspace(real: ChannelRealization) -> BDWorkspace:
    dims = real.dims
    verdict = bd_feasible(dims)
    if not verdict:
        raise InfeasibleDimensions(f"block diagonalization infeasible for {dims}: {verdict.reason}")
    bases, channels, svds = [], [], []
    for k in range(dims.K):
        H_k = real.user_channel(k)
        V0 = matcore.null_space_basis(real.interference(k), dims.B_v)
        bases.append(V0)
        channels.append(H_k)
        svds.append(matcore.svd(H_k @ V0, full_matrices=False))
    return BDWorkspace(dims, tuple(bases), tuple(channels), tuple(svds))


def _check_workspace(ws: BDWorkspace, real: ChannelRealization) -> None:
    if ws.dims != real.dims:
        raise InvalidArgument(f"workspace built for {ws.dims}, realization has {real.dims}")


def tr(real: ChannelRealization) -> PrecoderSet:
    """Time-reversal baseline: matched prefilter, sample-drop receiver."""
    G = sample_drop_receiver(real.dims)
    P = tuple(tr_prefilter(real, k) for k in range(real.dims.K))
    return PrecoderSet("TR", real.dims, P, (G,) * real.dims.K)


def trbd(ws: BDWorkspace, real: ChannelRealization) -> PrecoderSet:
    """Closest unit-norm BD precoder to the time-reversal prefilter."""
    _check_workspace(ws, real)
    precoders = []
    for k, V0 in enumerate(ws.null_bases):
        coeffs = V0.conj().T @ tr_prefilter(real, k)
        norm = np.linalg.norm(coeffs)
        if norm <= matcore.RTOL:
            raise DegenerateChannel(f"time-reversal prefilter of user {k} is orthogonal to its null space")
        precoders.append(V0 @ (coeffs / norm))
    G = sample_drop_receiver(real.dims)
    return PrecoderSet("TRBD", real.dims, tuple(precoders), (G,) * real.dims.K)


def ebd_norm_function(mu: float, lams: np.ndarray) -> float:
    """Squared precoder norm ``sum(lam / (lam + mu)**2)`` as a function of ``mu``."""
    return float(np.sum(lams / (lams + mu) ** 2))


def solve_ebd_multiplier(lams, max_iter: int = EBD_MAX_ITER) -> float:
    """Root of ``sum(lam / (lam + mu)**2) = 1`` by bracketed bisection.

    The function is strictly decreasing for ``mu > -min(lam)``. When the
    unconstrained least-squares solution already has norm above one the
    root is positive; otherwise it lies in ``(-min(lam), 0]``.

    Parameters
    ----------
    lams : array_like
        Strictly positive eigenvalues of ``C^H C`` (zero eigenvalues do not
        contribute and must be dropped by the caller).
    """
    lams = np.asarray(lams, dtype=float)
    if lams.size == 0 or not np.all(lams > 0) or not np.isfinite(lams).all():
        raise NumericalFailure(f"EBD multiplier needs positive finite eigenvalues, got {lams!r}")
    f0 = ebd_norm_function(0.0, lams)
    if f0 == 1.0:
        return 0.0
    if f0 > 1.0:
        lo, hi = 0.0, max(1.0, float(lams.max()))
        for _ in range(max_iter):
            if ebd_norm_function(hi, lams) < 1.0:
                break
            lo, hi = hi, 2.0 * hi
        else:
            raise NumericalFailure(f"could not bracket the EBD multiplier; eigenvalues {lams!r}")
    else:
        lo, hi = -float(lams.min()) * (1.0 - 1e-9), 0.0
        if ebd_norm_function(lo, lams) < 1.0:
            raise NumericalFailure(f"could not bracket the EBD multiplier below zero; eigenvalues {lams!r}")
        logger.debug("EBD multiplier is negative (f(0) = %.6g)", f0)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if ebd_norm_function(mid, lams) > 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * (1.0 + abs(mid)):
            break
    return 0.5 * (lo + hi)


def ebd(ws: BDWorkspace, real: ChannelRealization) -> PrecoderSet:
    """Transmit pre-equalizer minimizing ``||C_k Pbar - I||`` at unit power."""
    _check_workspace(ws, real)
    G = sample_drop_receiver(real.dims)
    precoders, mus, spectra = [], [], []
    for k, V0 in enumerate(ws.null_bases):
        C = G @ ws.channels[k] @ V0
        # Nonzero spectrum of C^H C is that of the (B x B) Gram matrix C C^H.
        lams, Q = matcore.hermitian_eig(C @ C.conj().T)
        if lams[-1] <= matcore.RTOL * lams[0]:
            raise DegenerateChannel(f"equalization matrix of user {k} is rank deficient")
        mu = solve_ebd_multiplier(lams)
        inv = (Q / (lams + mu)) @ Q.conj().T
        precoders.append(V0 @ (C.conj().T @ inv))
        mus.append(mu)
        spectra.append(lams)
    return PrecoderSet("EBD", real.dims, tuple(precoders), (G,) * real.dims.K,
                       {"mu": np.array(mus), "eigenvalues": tuple(spectra)})


def jpbd_scale(singular_values) -> float:
    """Gain ``c`` of the equalized link ``G_k H_k P_k = c I`` from the used singular values."""
    s = np.asarray(singular_values, dtype=float)
    return float(np.sum(1.0 / s) ** -0.5)


def jpbd(ws: BDWorkspace, real: ChannelRealization) -> PrecoderSet:
    """Joint SVD precoder/receiver making each user's link a scaled identity.

    The receiver amplitude taper is ``1/sqrt(sigma_i)`` on the ``B``
    strongest singular directions of ``H_k V0_k``, which minimizes the
    noise enhancement among diagonal tapers.
    """
    _check_workspace(ws, real)
    dims = real.dims
    verdict = jpbd_feasible(dims)
    if not verdict:
        raise InfeasibleDimensions(f"JPBD infeasible for {dims}: {verdict.reason}")
    B = dims.B
    precoders, receivers, sigmas = [], [], []
    for k, V0 in enumerate(ws.null_bases):
        fact = ws.block_svds[k]
        s = fact.singular_values
        used = s[:B]
        if used[-1] <= JPBD_SINGULAR_FLOOR * s[0]:
            raise DegenerateChannel(
                f"user {k}: singular value {used[-1]:.3e} negligible against {s[0]:.3e}")
        g = 1.0 / np.sqrt(used)
        # Sigma^+ Gbreve^+ is diagonal with entries 1/sqrt(sigma_i).
        taper = g / np.sqrt(np.sum(1.0 / used))
        precoders.append(V0 @ (fact.V[:, :B] * taper))
        receivers.append(g[:, None] * fact.U[:, :B].conj().T)
        sigmas.append(s.copy())
    return PrecoderSet("JPBD", dims, tuple(precoders), tuple(receivers),
                       {"singular_values": tuple(sigmas)})


def design(technique: str, real: ChannelRealization, ws: BDWorkspace | None = None) -> PrecoderSet:
    """Build the precoder set of ``technique`` for one channel realization."""
    check_feasible(real.dims, technique)
    if technique == "TR":
        return tr(real)
    if ws is None:
        ws = build_workspace(real)
    return {"TRBD": trbd, "EBD": ebd, "JPBD": jpbd}[technique](ws, real)
