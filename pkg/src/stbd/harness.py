"""Seeded Monte Carlo experiments: rate regions, sum rates, BER and user scaling.

Every experiment draws ``realizations`` independent channel drops. Drop
``i`` uses random streams derived from ``(seed, i, purpose)`` only, so the
numbers do not depend on how many worker threads evaluate the drops or in
which order; per-drop results are reduced in index order.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__, linkmetrics, modem, powerctl, precoding
from .channel import ChannelRealization, SystemDims, draw_channel, exp_pdp
from .errors import DegenerateChannel, InvalidArgument, NumericalFailure, StbdError

logger = logging.getLogger(__name__)

CHANNEL_STREAM, BITS_STREAM, NOISE_STREAM = 0, 1, 2

EXPERIMENTS = ("rate-region", "sum-rate", "ber", "singvals", "alloc-demo")

CSV_HEADER = ("axis", "technique", "user", "mean", "stderr", "n")


# -- configuration ---------------------------------------------------------

@dataclass
class DimsConfig:
    M: int = 8
    K: int = 2
    B: int = 30
    L: int = 9
    L_p: int = 1


@dataclass
class ChannelConfig:
    t_s: float = 10e-9
    sigma_h: float = 15e-9


@dataclass
class SweepConfig:
    """Inclusive sweep of ``P_max/eta`` in dB."""

    start: float = 0.0
    stop: float = 50.0
    step: float = 5.0

    def values(self) -> np.ndarray:
        if self.step == 0 or (self.stop - self.start) * self.step < 0:
            if self.start == self.stop:
                return np.array([float(self.start)])
            raise InvalidArgument(f"empty SNR sweep {self}")
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return self.start + self.step * np.arange(n)


@dataclass
class ExperimentConfig:
    """Everything an experiment needs; mirrors the JSON config file.

    ``pmax_db`` is the operating point of the experiments that are not
    swept in SNR (rate region, user scaling). ``users`` and
    ``redundancies`` parameterize the user-scaling study, ``rho_points``
    the rate-region grid and ``qam_order`` the BER runs (0 selects the
    adaptive order).
    """

    dims: DimsConfig = field(default_factory=DimsConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    techniques: list = field(default_factory=lambda: list(precoding.TECHNIQUES))
    snr_db: SweepConfig = field(default_factory=SweepConfig)
    realizations: int = 1000
    seed: int = 0
    bits_per_point: int = 100_000
    output: str = "results.csv"
    threads: int = 1
    pmax_db: float = 20.0
    rho_points: int = 21
    qam_order: int = 16
    users: list = field(default_factory=lambda: list(range(1, 10)))
    redundancies: list = field(default_factory=lambda: [1, 40])

    @property
    def system_dims(self) -> SystemDims:
        d = self.dims
        return SystemDims(d.M, d.K, d.B, d.L, d.L_p)

    def technique_dims(self, technique: str, dims: SystemDims | None = None) -> SystemDims:
        """Dimensions a technique runs with: time-reversal designs use ``L_p = L``."""
        dims = self.system_dims if dims is None else dims
        return dims.with_redundancy(dims.L) if technique in ("TR", "TRBD") else dims

    def validate(self) -> None:
        if self.realizations < 1:
            raise InvalidArgument(f"realizations must be >= 1, got {self.realizations}")
        if self.threads < 1:
            raise InvalidArgument(f"threads must be >= 1, got {self.threads}")
        if self.bits_per_point < 1:
            raise InvalidArgument(f"bits_per_point must be >= 1, got {self.bits_per_point}")
        if not self.techniques:
            raise InvalidArgument("no techniques selected")
        self.snr_db.values()
        for t in self.techniques:
            precoding.check_feasible(self.technique_dims(t), t)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_NESTED = {"dims": DimsConfig, "channel": ChannelConfig, "snr_db": SweepConfig}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise InvalidArgument(f"{where}: expected an object, got {type(data).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise InvalidArgument(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for key, value in data.items():
        if cls is ExperimentConfig and key in _NESTED:
            value = _build(_NESTED[key], value, f"{where}.{key}")
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config from a JSON-like dict; unknown keys are rejected."""
    return _build(ExperimentConfig, data, "config")


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


# -- random streams --------------------------------------------------------

def substream(seed: int, realization: int, purpose: int) -> np.random.Generator:
    """Counter-based generator for one (realization, purpose) pair."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(realization), int(purpose)))
    return np.random.Generator(np.random.Philox(ss))


def draw_realization(cfg: ExperimentConfig, i: int, dims: SystemDims | None = None) -> ChannelRealization:
    dims = cfg.system_dims if dims is None else dims
    pdp = exp_pdp(dims.L, cfg.channel.t_s, cfg.channel.sigma_h)
    return draw_channel(dims, pdp, substream(cfg.seed, i, CHANNEL_STREAM))


def _guarded(fn: Callable[[int], object]) -> Callable[[int], object]:
    def run(i):
        try:
            return fn(i)
        except (DegenerateChannel, NumericalFailure) as exc:
            logger.warning("realization %d aborted: %s", i, exc)
            return None
    return run


def _map_realizations(cfg: ExperimentConfig, fn: Callable[[int], object]) -> list:
    """Evaluate ``fn`` on every realization index, in index order.

    Realizations hitting a degenerate draw are logged and dropped.
    """
    indices = range(cfg.realizations)
    fn = _guarded(fn)
    if cfg.threads == 1:
        results = [fn(i) for i in indices]
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(fn, indices))
    kept = [r for r in results if r is not None]
    if not kept:
        raise NumericalFailure("every realization was degenerate")
    return kept


# -- results ---------------------------------------------------------------

@dataclass
class Cell:
    axis: float
    technique: str
    user: str
    mean: float
    stderr: float
    n: int
    extras: dict = field(default_factory=dict)


@dataclass
class SweepResult:
    """Flat table of Monte Carlo estimates, one cell per (axis, technique, user)."""

    experiment: str
    axis_name: str
    cells: list = field(default_factory=list)

    def add_samples(self, axis, technique, user, samples) -> None:
        x = np.asarray(samples, dtype=float)
        n = x.size
        mean = float(math.fsum(x) / n)
        stderr = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        self.cells.append(Cell(float(axis), technique, str(user), mean, stderr, n))

    def get(self, technique: str, user="sum") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Axis values, means and standard errors for one series."""
        sel = [c for c in self.cells if c.technique == technique and c.user == str(user)]
        if not sel:
            raise KeyError(f"no cells for technique={technique!r}, user={user!r}")
        return (np.array([c.axis for c in sel]), np.array([c.mean for c in sel]),
                np.array([c.stderr for c in sel]))

    def value(self, technique: str, axis: float, user="sum") -> Cell:
        for c in self.cells:
            if c.technique == technique and c.user == str(user) and c.axis == axis:
                return c
        raise KeyError(f"no cell ({technique!r}, {axis!r}, {user!r})")


# -- per-drop evaluation ---------------------------------------------------

def _design_all(cfg: ExperimentConfig, real: ChannelRealization, techniques: Sequence[str]):
    """Precoder sets and user channels per technique, sharing workspaces."""
    out, workspaces = {}, {}
    for t in techniques:
        r = real.with_redundancy(cfg.technique_dims(t, real.dims).L_p)
        if t == "TR":
            ws = None
        else:
            if r.dims.L_p not in workspaces:
                workspaces[r.dims.L_p] = precoding.build_workspace(r)
            ws = workspaces[r.dims.L_p]
        ps = precoding.design(t, r, ws)
        channels = ws.channels if ws is not None else tuple(r.user_channel(k) for k in range(r.dims.K))
        out[t] = (r, ps, channels)
    return out


def allocate(technique: str, gains, eta: float, P_max: float) -> np.ndarray:
    """Per-draw power allocation used by the sum-rate experiments.

    JPBD links are ISI free and use waterfilling, TRBD/EBD the ISI-aware
    allocator. Time reversal leaks interference between users, which
    neither allocator models, so it gets an equal split.
    """
    K = len(gains)
    if technique == "TR":
        return np.full(K, P_max / K)
    if technique == "JPBD":
        return powerctl.allocate_waterfilling([g.alpha_d / g.alpha_n for g in gains], eta, P_max).rho
    return powerctl.allocate_isi_aware(gains, eta, P_max).rho


def _tr_rates(ps, channels, rho, eta, dims):
    gains = linkmetrics.all_link_gains(ps, channels, rho)
    return linkmetrics.rate_point(gains, rho, eta, dims).rates


# -- experiments -----------------------------------------------------------

def run_rate_region(cfg: ExperimentConfig) -> SweepResult:
    """Ergodic ``(R_1, R_2)`` along ``rho_1 + rho_2 = P_max``; axis is ``rho_1 / P_max``."""
    cfg.validate()
    if cfg.dims.K != 2:
        raise InvalidArgument(f"rate region needs K = 2, got K = {cfg.dims.K}")
    P_max, eta = 10.0 ** (cfg.pmax_db / 10.0), 1.0
    fractions = np.linspace(0.0, 1.0, cfg.rho_points)

    def one(i):
        designs = _design_all(cfg, draw_realization(cfg, i), cfg.techniques)
        out = {}
        for t, (r, ps, H) in designs.items():
            leak = [linkmetrics.interference_gains(ps.receivers[k], H[k], ps.precoders) for k in range(2)]
            zero = linkmetrics.all_link_gains(ps, H, np.zeros(2))
            rates = np.empty((fractions.size, 2))
            for j, f in enumerate(fractions):
                rho = np.array([f * P_max, (1.0 - f) * P_max])
                gains = [z._replace(alpha_iui=float(rho[1 - k] * leak[k][1 - k])) for k, z in enumerate(zero)]
                rates[j] = linkmetrics.rate_point(gains, rho, eta, r.dims).rates
            out[t] = rates
        return out

    per_drop = _map_realizations(cfg, one)
    res = SweepResult("rate-region", "rho1_fraction")
    for j, f in enumerate(fractions):
        for t in cfg.techniques:
            for k in range(2):
                res.add_samples(f, t, k + 1, [d[t][j, k] for d in per_drop])
    return res


def run_sum_rate(cfg: ExperimentConfig) -> SweepResult:
    """Ergodic per-user and sum rates versus ``P_max/eta`` (dB) with per-draw allocation."""
    cfg.validate()
    snrs = cfg.snr_db.values()
    K, eta = cfg.dims.K, 1.0

    def one(i):
        designs = _design_all(cfg, draw_realization(cfg, i), cfg.techniques)
        out = {}
        for t, (r, ps, H) in designs.items():
            zero = linkmetrics.all_link_gains(ps, H, np.zeros(K))
            rates = np.empty((snrs.size, K))
            for j, db in enumerate(snrs):
                P_max = 10.0 ** (db / 10.0)
                rho = allocate(t, zero, eta, P_max)
                if t == "TR":
                    rates[j] = _tr_rates(ps, H, rho, eta, r.dims)
                else:
                    rates[j] = linkmetrics.rate_point(zero, rho, eta, r.dims).rates
            out[t] = rates
        return out

    per_drop = _map_realizations(cfg, one)
    res = SweepResult("sum-rate", "pmax_over_eta_db")
    _emit_user_and_sum(res, snrs, cfg.techniques, per_drop, K)
    return res


def _emit_user_and_sum(res, axis, techniques, per_drop, K, key=lambda t: t, label=lambda t: t):
    for j, a in enumerate(axis):
        for t in techniques:
            stack = np.array([d[key(t)][j] for d in per_drop])
            for k in range(K):
                res.add_samples(a, label(t), k + 1, stack[:, k])
            res.add_samples(a, label(t), "sum", stack.sum(axis=1))


def decision_scale(ps: precoding.PrecoderSet, H_k: np.ndarray, k: int) -> complex:
    """Amplitude reference of one user's link (genie aided).

    JPBD knows its exact gain; sample-drop receivers use the mean diagonal
    of ``G H P``.
    """
    D = ps.receivers[k] @ H_k @ ps.precoders[k]
    if ps.technique == "JPBD":
        return complex(np.real(np.mean(np.diagonal(D))))
    return complex(np.mean(np.diagonal(D)))


def simulate_ber_draw(ps: precoding.PrecoderSet, channels, rho, eta: float,
                      const: modem.QamConstellation, n_blocks: int,
                      rng_bits: np.random.Generator, rng_noise: np.random.Generator) -> list[modem.BERResult]:
    """Send ``n_blocks`` blocks per user through one quasi-static drop."""
    dims = ps.dims
    K, B, nb = ps.K, dims.B, const.bits_per_symbol
    bits = rng_bits.integers(0, 2, size=(K, B * nb * n_blocks), dtype=np.int64)
    tx = np.zeros((dims.B_t * dims.M, n_blocks), dtype=complex)
    for k in range(K):
        s = modem.modulate(bits[k], const, rho[k]).reshape(n_blocks, B).T
        tx += ps.precoders[k] @ s
    out = []
    for k in range(K):
        z = (rng_noise.standard_normal((dims.B_r, n_blocks))
             + 1j * rng_noise.standard_normal((dims.B_r, n_blocks))) * math.sqrt(eta / 2.0)
        y = ps.receivers[k] @ (channels[k] @ tx + z)
        c = decision_scale(ps, channels[k], k) * math.sqrt(rho[k])
        if rho[k] == 0 or c == 0:
            out.append(modem.BERResult(bits[k].size, bits[k].size // 2))
            continue
        est = modem.demodulate((y / c).T.ravel(), const, 1.0)
        out.append(modem.count_errors(bits[k], est))
    return out


def run_ber(cfg: ExperimentConfig, qam_order: int | None = None) -> SweepResult:
    """Bit error rate versus ``P_max/eta`` with an equal power split.

    Each drop carries ``ceil(bits_per_point / (realizations B log2 Q))``
    blocks per user; bit and noise streams are shared across SNR points
    so neighbouring points differ only by the noise scaling.
    """
    cfg.validate()
    order = cfg.qam_order if qam_order is None else qam_order
    snrs = cfg.snr_db.values()
    K = cfg.dims.K

    def constellation(t, db):
        if order:
            return modem.QamConstellation(order)
        r_k = linkmetrics.theoretical_gains(cfg.technique_dims(t), "JPBD").r_k
        return modem.QamConstellation(modem.adaptive_order(r_k, 10.0 ** (db / 10.0)))

    def one(i):
        designs = _design_all(cfg, draw_realization(cfg, i), cfg.techniques)
        out = {}
        for t, (r, ps, H) in designs.items():
            row = []
            for db in snrs:
                const = constellation(t, db)
                n_blocks = max(1, math.ceil(cfg.bits_per_point / (cfg.realizations * r.dims.B * const.bits_per_symbol)))
                P_max = 10.0 ** (db / 10.0)
                rho = np.full(K, P_max / K)
                row.append(simulate_ber_draw(ps, H, rho, 1.0, const, n_blocks,
                                             substream(cfg.seed, i, BITS_STREAM),
                                             substream(cfg.seed, i, NOISE_STREAM)))
            out[t] = row
        return out

    per_drop = _map_realizations(cfg, one)
    res = SweepResult("ber", "pmax_over_eta_db")
    for j, db in enumerate(snrs):
        for t in cfg.techniques:
            totals = [modem.BERResult(0, 0) for _ in range(K)]
            for d in per_drop:
                totals = [a + b for a, b in zip(totals, d[t][j])]
            for k, tot in enumerate(totals + [sum(totals, modem.BERResult(0, 0))]):
                user = k + 1 if k < K else "all"
                p = tot.ber
                se = math.sqrt(p * (1.0 - p) / tot.bits_sent) if tot.bits_sent else 0.0
                cell = Cell(float(db), t, str(user), p, se, tot.bits_sent,
                            {"wilson": tot.wilson_interval(), "errors": tot.bit_errors})
                res.cells.append(cell)
    return res


def run_singular_values(cfg: ExperimentConfig) -> dict[str, SweepResult]:
    """User-scaling study at ``P_max/eta = pmax_db``.

    For every ``K`` in ``cfg.users`` and every redundancy in
    ``cfg.redundancies`` records the sum rate, the JPBD SNR coefficient
    ``alpha_d/alpha_n`` and the ``B`` used singular values of
    ``H_k V0_k`` (averaged over users and drops). Techniques other than
    JPBD and EBD ignore the redundancy list. Returns three tables keyed
    ``"sum_rate"``, ``"snr_coeff"`` and ``"singular_values"``.
    """
    if not cfg.users or not cfg.redundancies:
        raise InvalidArgument("user-scaling study needs non-empty users and redundancies")
    if cfg.realizations < 1 or cfg.threads < 1:
        raise InvalidArgument("realizations and threads must be >= 1")
    base = cfg.system_dims
    P_max, eta = 10.0 ** (cfg.pmax_db / 10.0), 1.0

    series = []
    for t in cfg.techniques:
        lps = [base.L] if t in ("TR", "TRBD") else list(cfg.redundancies)
        series += [(t, lp, f"{t}/Lp={lp}") for lp in lps]

    feasible = {}
    for K in cfg.users:
        for t, lp, label in series:
            dims = dataclasses.replace(base, K=int(K), L_p=int(lp))
            try:
                precoding.check_feasible(dims, t)
                feasible[(K, label)] = dims
            except StbdError as exc:
                logger.info("skipping %s at K=%d: %s", label, K, exc)

    def one(i):
        out = {}
        for K in cfg.users:
            cirs_dims = dataclasses.replace(base, K=int(K))
            real = draw_realization(cfg, i, cirs_dims)
            workspaces = {}
            for t, lp, label in series:
                dims = feasible.get((K, label))
                if dims is None:
                    continue
                r = real.with_redundancy(dims.L_p)
                try:
                    ws = None
                    if t != "TR":
                        ws = workspaces.get(dims.L_p)
                        if ws is None:
                            ws = workspaces[dims.L_p] = precoding.build_workspace(r)
                    ps = precoding.design(t, r, ws)
                except (DegenerateChannel, NumericalFailure) as exc:
                    # Only this (K, series) cell loses the draw; its n column records it.
                    logger.warning("realization %d aborted for %s at K=%d: %s", i, label, K, exc)
                    continue
                H = ws.channels if ws is not None else tuple(r.user_channel(k) for k in range(K))
                gains = linkmetrics.all_link_gains(ps, H, np.zeros(K))
                rho = allocate(t, gains, eta, P_max)
                if t == "TR":
                    rates = _tr_rates(ps, H, rho, eta, r.dims)
                else:
                    rates = linkmetrics.rate_point(gains, rho, eta, r.dims).rates
                entry = {"sum_rate": float(np.sum(rates))}
                if t == "JPBD":
                    entry["snr_coeff"] = float(np.mean([g.alpha_d / g.alpha_n for g in gains]))
                sv = np.mean([ws.block_svds[k].singular_values[:dims.B] for k in range(K)], axis=0) \
                    if ws is not None else None
                entry["singular_values"] = sv
                out[(K, label)] = entry
        return out

    per_drop = _map_realizations(cfg, one)
    tables = {name: SweepResult("singvals", "K") for name in ("sum_rate", "snr_coeff", "singular_values")}
    for K in cfg.users:
        for t, lp, label in series:
            if (K, label) not in feasible:
                continue
            entries = [d[(K, label)] for d in per_drop if (K, label) in d]
            if not entries:
                logger.warning("no usable realization for %s at K=%d", label, K)
                continue
            tables["sum_rate"].add_samples(K, label, "sum", [e["sum_rate"] for e in entries])
            if t == "JPBD":
                tables["snr_coeff"].add_samples(K, label, "mean", [e["snr_coeff"] for e in entries])
            if entries[0]["singular_values"] is not None:
                sv = np.array([e["singular_values"] for e in entries])
                for idx in range(sv.shape[1]):
                    tables["singular_values"].add_samples(K, label, idx + 1, sv[:, idx])
    return tables


def run_alloc_demo(cfg: ExperimentConfig) -> SweepResult:
    """Allocated power fractions ``rho_k / P_max`` on a single seeded drop."""
    cfg.validate()
    snrs = cfg.snr_db.values()
    K = cfg.dims.K
    designs = _design_all(cfg, draw_realization(cfg, 0), cfg.techniques)
    res = SweepResult("alloc-demo", "pmax_over_eta_db")
    for db in snrs:
        P_max = 10.0 ** (db / 10.0)
        for t in cfg.techniques:
            r, ps, H = designs[t]
            gains = linkmetrics.all_link_gains(ps, H, np.zeros(K))
            rho = allocate(t, gains, 1.0, P_max)
            for k in range(K):
                res.add_samples(db, t, k + 1, [rho[k] / P_max])
            res.add_samples(db, t, "sum", [float(np.sum(rho)) / P_max])
    return res


# -- output ----------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.16e}"


def format_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for c in result.cells:
        writer.writerow((_fmt(c.axis), c.technique, c.user, _fmt(c.mean), _fmt(c.stderr), c.n))
    return buf.getvalue()


def emit_csv(result: SweepResult, path: str | os.PathLike) -> Path:
    """Write ``result`` as UTF-8 CSV with LF line endings."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(format_csv(result))
    except OSError as exc:
        raise OSError(f"could not write results to {path}: {exc}") from exc
    return path


def version_string() -> str:
    """``git describe``-style version, falling back to the package version."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_manifest(cfg: ExperimentConfig, experiment: str, csv_paths: Sequence[Path]) -> Path:
    path = Path(csv_paths[0]).with_suffix(".manifest.json")
    manifest = {
        "experiment": experiment,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "version": version_string(),
        "outputs": [Path(p).name for p in csv_paths],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
