"""Sum-rate maximizing power allocation under a total power budget."""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from . import matcore
from .errors import InvalidArgument, NumericalFailure
from .linkmetrics import LinkGains

LN2 = math.log(2.0)
MAX_ITER = 200
BUDGET_RTOL = 1e-10


class AllocationSolution(NamedTuple):
    """Per-user powers, the budget multiplier and ``sum(log2(1 + SINR_k))``."""

    rho: np.ndarray
    lam: float
    sum_rate_achieved: float


def _validate_budget(eta: float, P_max: float) -> None:
    if not P_max > 0:
        raise InvalidArgument(f"P_max must be positive, got {P_max!r}")
    if not eta > 0:
        raise InvalidArgument(f"eta must be positive, got {eta!r}")


def isi_aware_power(lam: float, a_d, a_isi, a_n, eta: float) -> np.ndarray:
    """Stationary powers of the ISI-aware sum-rate problem for multiplier ``lam``.

    Positive root of the per-user quadratic, written in rationalized form
    so it stays finite as ``a_isi -> 0`` (where it becomes the
    waterfilling level ``1/(lam ln 2) - eta a_n / a_d``). Negative values
    are clipped to zero.
    """
    a_d = np.asarray(a_d, dtype=float)
    a_isi = np.asarray(a_isi, dtype=float)
    N = eta * np.asarray(a_n, dtype=float)
    A = a_d + a_isi
    X = (N * a_d) ** 2 + 4.0 * a_d * a_isi * N * A / (lam * LN2)
    Y = N * (a_d + 2.0 * a_isi)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = 2.0 * N * (a_d / (lam * LN2) - N) / (np.sqrt(X) + Y)
    rho = np.where(a_d > 0, rho, 0.0)
    return np.maximum(rho, 0.0)


def sum_rate(rho, a_d, a_isi, a_n, eta: float) -> float:
    rho = np.asarray(rho, dtype=float)
    sinr = rho * a_d / (rho * a_isi + eta * np.asarray(a_n))
    return float(np.sum(np.log2(1.0 + sinr)))


def _unpack(gains: Sequence[LinkGains]):
    g = np.array([[x.alpha_d, x.alpha_isi, x.alpha_iui, x.alpha_n] for x in gains], dtype=float)
    if g.size == 0:
        raise InvalidArgument("need at least one user")
    if np.any(g < 0) or not np.isfinite(g).all():
        raise InvalidArgument("gains must be finite and nonnegative")
    if np.any(g[:, 2] > matcore.RTOL * np.maximum(g[:, 0], 1.0)):
        raise InvalidArgument("ISI-aware allocation assumes zero inter-user interference")
    if np.any(g[:, 3] <= 0):
        raise InvalidArgument("noise gains must be positive")
    return g[:, 0], g[:, 1], g[:, 3]


def allocate_isi_aware(gains: Sequence[LinkGains], eta: float, P_max: float) -> AllocationSolution:
    """Maximize ``sum_k log2(1 + SINR_k)`` with ``sum(rho) = P_max``.

    Each user's SINR is ``rho a_d / (rho a_isi + eta a_n)``. The budget
    multiplier is found by bisection on ``log(lam)``; the returned powers
    satisfy the budget to within ``BUDGET_RTOL``.
    """
    _validate_budget(eta, P_max)
    a_d, a_isi, a_n = _unpack(gains)
    if not np.any(a_d > 0):
        raise InvalidArgument("at least one user needs a positive desired-signal gain")

    def total(lam):
        return float(np.sum(isi_aware_power(lam, a_d, a_isi, a_n, eta)))

    # Above this every user gets zero power.
    active = a_d > 0
    hi = float(np.max(a_d[active] / (eta * a_n[active] * LN2)))
    lo = hi
    for _ in range(4 * MAX_ITER):
        lo *= 0.5
        if total(lo) >= P_max:
            break
    else:
        raise NumericalFailure(f"could not bracket the power multiplier (P_max={P_max!r})")
    lam = lo
    for _ in range(MAX_ITER):
        lam = math.sqrt(lo * hi)
        s = total(lam)
        if abs(s - P_max) <= BUDGET_RTOL * P_max:
            break
        if s > P_max:
            lo = lam
        else:
            hi = lam
    else:
        s = total(lam)
        if abs(s - P_max) > 1e-8 * P_max:
            raise NumericalFailure(f"power bisection stalled: budget residual {s - P_max:.3e}")
    rho = isi_aware_power(lam, a_d, a_isi, a_n, eta)
    return AllocationSolution(rho, lam, sum_rate(rho, a_d, a_isi, a_n, eta))


def allocate_waterfilling(snr_coeffs, eta: float, P_max: float) -> AllocationSolution:
    """Classic waterfilling over parallel channels with gains ``gamma_k``.

    ``rho_k = max(0, 1/(lam ln 2) - eta / gamma_k)``; the water level is
    computed exactly by sorting the channels.
    """
    _validate_budget(eta, P_max)
    gamma = np.asarray(snr_coeffs, dtype=float).ravel()
    if gamma.size == 0 or np.any(gamma < 0) or not np.isfinite(gamma).all():
        raise InvalidArgument("SNR coefficients must be finite and nonnegative")
    if not np.any(gamma > 0):
        raise InvalidArgument("at least one SNR coefficient must be positive")
    with np.errstate(divide="ignore"):
        floors = np.where(gamma > 0, eta / gamma, np.inf)
    order = np.argsort(floors, kind="stable")
    sorted_floors = floors[order]
    level = float("nan")
    for n in range(1, int(np.sum(np.isfinite(floors))) + 1):
        level = (P_max + np.sum(sorted_floors[:n])) / n
        if n == len(floors) or level <= sorted_floors[n]:
            break
    rho = np.maximum(level - floors, 0.0)
    rho[~np.isfinite(floors)] = 0.0
    lam = 1.0 / (level * LN2)
    with np.errstate(invalid="ignore"):
        rate = float(np.sum(np.log2(1.0 + rho * gamma / eta)))
    return AllocationSolution(rho, lam, rate)
