"""End-to-end acceptance checks; one PASS/FAIL line per criterion is printed in the summary."""

import math

import numpy as np
import pytest

from stbd import harness, linkmetrics, modem, precoding
from stbd.linkmetrics import LinkGains
from stbd.powerctl import allocate_isi_aware, allocate_waterfilling, sum_rate

criterion = pytest.mark.criterion

# Redundancy used to show that extra precoder redundancy restores growth at K = 9.
RAISED_REDUNDANCY = 40


def default_draws(n, L_p=1, seed=2024):
    cfg = harness.ExperimentConfig(seed=seed)
    dims = cfg.system_dims.with_redundancy(L_p)
    return [harness.draw_realization(cfg, i, dims) for i in range(n)]


@criterion(1, "IUI suppression below 1e-9 for TRBD, EBD, JPBD on 100 draws")
def test_iui_suppression(record_property):
    worst = {}
    for L_p, techniques in ((9, ["TRBD"]), (1, ["EBD", "JPBD"])):
        for real in default_draws(100, L_p):
            ws = precoding.build_workspace(real)
            for t in techniques:
                ps = precoding.design(t, real, ws)
                for k in range(real.dims.K):
                    Hi = real.interference(k)
                    ratio = np.linalg.norm(Hi @ ps.precoders[k]) / np.linalg.norm(Hi)
                    worst[t] = max(worst.get(t, 0.0), ratio)
    record_property("measured", ", ".join(f"{t} max {v:.2e}" for t, v in worst.items()))
    assert all(v < 1e-9 for v in worst.values()), worst


@criterion(2, "JPBD link is a scaled identity with the predicted scale")
def test_jpbd_scaled_identity(record_property):
    off_worst = uni_worst = scale_worst = 0.0
    for real in default_draws(50):
        ps = precoding.design("JPBD", real)
        for k in range(real.dims.K):
            D = ps.receivers[k] @ real.user_channel(k) @ ps.precoders[k]
            d = np.diagonal(D)
            off = np.sum(np.abs(D - np.diag(d)) ** 2) / np.sum(np.abs(d) ** 2)
            uni = np.max(np.abs(d - d.mean())) / abs(d.mean())
            s = ps.diagnostics["singular_values"][k][:real.dims.B]
            c = np.sum(1.0 / s) ** -0.5
            scale = np.max(np.abs(d - c)) / c
            off_worst, uni_worst, scale_worst = max(off_worst, off), max(uni_worst, uni), max(scale_worst, scale)
    record_property("measured", f"offdiag {off_worst:.1e}, uniformity {uni_worst:.1e}, scale {scale_worst:.1e}")
    assert off_worst < 1e-8
    assert uni_worst < 1e-8
    assert scale_worst < 1e-8


@criterion(3, "EBD multiplier KKT residual < 1e-8 and equal-eigenvalue closed form to 1e-10")
def test_ebd_multiplier(record_property):
    residual = 0.0
    for real in default_draws(50):
        ps = precoding.design("EBD", real)
        for mu, lams in zip(ps.diagnostics["mu"], ps.diagnostics["eigenvalues"]):
            residual = max(residual, abs(np.sum(lams / (lams + mu) ** 2) - 1.0))
    closed = max(abs(precoding.solve_ebd_multiplier(np.ones(n)) - (math.sqrt(n) - 1.0))
                 for n in (1, 2, 3, 5, 10, 30, 100, 1000))
    record_property("measured", f"KKT residual {residual:.1e}, closed-form error {closed:.1e}")
    assert residual < 1e-8
    assert closed < 1e-10


@criterion(4, "power allocation meets budget and grid optimum within 0.1%")
def test_power_allocation(record_property):
    rng = np.random.default_rng(77)
    grid = np.linspace(0.0, 1.0, 1000)
    worst_budget = worst_gap = 0.0
    for _ in range(100):
        P = 10 ** rng.uniform(-1, 3)
        eta = 10 ** rng.uniform(-1, 0.5)
        a_d = 10 ** rng.uniform(0, 2, 2)
        a_isi = a_d * 10 ** rng.uniform(-4, -0.5, 2)
        a_n = 10 ** rng.uniform(0, 1.5, 2)
        gains = [LinkGains(a_d[k], a_isi[k], 0.0, a_n[k]) for k in range(2)]
        isi = allocate_isi_aware(gains, eta, P)
        best = max(sum_rate([f * P, (1 - f) * P], a_d, a_isi, a_n, eta) for f in grid)
        gamma = a_d / a_n
        wf = allocate_waterfilling(gamma, eta, P)
        best_wf = max(float(np.sum(np.log2(1 + np.array([f * P, (1 - f) * P]) * gamma / eta))) for f in grid)
        for sol, ref in ((isi, best), (wf, best_wf)):
            worst_budget = max(worst_budget, abs(sol.rho.sum() - P) / P)
            worst_gap = max(worst_gap, (ref - sol.sum_rate_achieved) / ref)
    record_property("measured", f"budget error {worst_budget:.1e}, worst shortfall {worst_gap:.1e}")
    assert worst_budget <= 1e-8
    assert worst_gap <= 1e-3


@pytest.mark.slow
@pytest.mark.parametrize("K", [2, 6])
@criterion(5, "JPBD sum-rate slope 40-50 dB matches r*log2(10) within 10%")
def test_multiplexing_gain(K, record_property):
    cfg = harness.config_from_dict({
        "dims": {"M": 8, "K": K, "B": 30, "L": 9, "L_p": 1}, "techniques": ["JPBD"],
        "snr_db": {"start": 40, "stop": 50, "step": 10}, "realizations": 200, "seed": 5})
    res = harness.run_sum_rate(cfg)
    slope = res.value("JPBD", 50.0).mean - res.value("JPBD", 40.0).mean
    r = linkmetrics.theoretical_gains(cfg.system_dims, "JPBD").r
    predicted = r * math.log2(10.0)
    record_property("measured", f"K={K}: slope {slope:.3f} vs {predicted:.3f} ({slope / predicted - 1:+.1%})")
    assert abs(slope / predicted - 1.0) <= 0.10


@pytest.mark.slow
@criterion(6, "TRBD/EBD saturate (<5% from 40 to 50 dB); TR below TRBD everywhere")
def test_saturation(record_property):
    cfg = harness.config_from_dict({"techniques": ["TR", "TRBD", "EBD"], "realizations": 200, "seed": 6})
    res = harness.run_sum_rate(cfg)
    growth = {t: res.value(t, 50.0).mean / res.value(t, 40.0).mean - 1.0 for t in ("TRBD", "EBD")}
    snrs, tr, _ = res.get("TR")
    _, trbd, _ = res.get("TRBD")
    above = [f"{s:g} dB ({a:.3f} vs {b:.3f})" for s, a, b in zip(snrs, tr, trbd) if a >= b]
    record_property("measured", ", ".join(f"{t} +{g:.2%}" for t, g in growth.items())
                    + (f"; TR >= TRBD at {', '.join(above)}" if above else "; TR below TRBD"))
    assert all(g < 0.05 for g in growth.values()), growth
    assert not above, f"TR not below TRBD at {above}"


def ber_crossing(snrs, ber, target=1e-3):
    """SNR where the BER curve first crosses ``target`` (log-linear interpolation)."""
    for j in range(1, len(snrs)):
        if ber[j - 1] > target >= ber[j] and ber[j] > 0:
            a, b = math.log10(ber[j - 1]), math.log10(ber[j])
            return snrs[j - 1] + (math.log10(target) - a) * (snrs[j] - snrs[j - 1]) / (b - a)
    raise AssertionError(f"BER curve never crosses {target}: {list(zip(snrs, ber))}")


def ber_cfg(M, techniques, snr, realizations, seed):
    return harness.config_from_dict({
        "dims": {"M": M, "K": 2, "B": 100, "L": 9, "L_p": 1}, "techniques": techniques,
        "snr_db": snr, "realizations": realizations, "seed": seed,
        "bits_per_point": 100_000, "qam_order": 16})


@pytest.mark.slow
@criterion(7, "JPBD 16-QAM: SNR for BER 1e-3 improves 6 +/- 1.5 dB from M=4 to M=8")
def test_ber_antenna_gain(record_property):
    snr = {"start": 22, "stop": 46, "step": 1}
    at = {}
    for M in (4, 8):
        res = harness.run_ber(ber_cfg(M, ["JPBD"], snr, 200, 7))
        snrs, ber, _ = res.get("JPBD", "all")
        at[M] = ber_crossing(snrs, ber)
    gain = at[4] - at[8]
    record_property("measured", f"BER 1e-3 at {at[4]:.2f} dB (M=4), {at[8]:.2f} dB (M=8): gain {gain:.2f} dB")
    assert abs(gain - 6.0) <= 1.5


@pytest.mark.slow
@criterion(8, "TRBD/EBD BER floor (45 vs 50 dB < 10%); JPBD falls >= 10x per 10 dB before its floor")
def test_error_floor(record_property):
    res = harness.run_ber(ber_cfg(8, ["TRBD", "EBD", "JPBD"], {"start": 10, "stop": 50, "step": 1}, 100, 8))
    floors = {}
    for t in ("TRBD", "EBD"):
        b45, b50 = res.value(t, 45.0, "all").mean, res.value(t, 50.0, "all").mean
        floors[t] = abs(b45 - b50) / b45
    # Pre-floor: JPBD is in its waterfall (BER <= 1e-2) and a 10x drop is still
    # detectable with the bit budget, i.e. BER(x) is at least 10x the upper Wilson
    # bound of an error-free count. The point 10 dB later may be error free, so the
    # drop is measured against its upper Wilson bound (conservative).
    drops = []
    for lo_db in np.arange(10.0, 41.0, 1.0):
        lo, hi = res.value("JPBD", lo_db, "all"), res.value("JPBD", lo_db + 10.0, "all")
        resolution = modem.BERResult(hi.n, 0).wilson_interval()[1]
        if lo.mean <= 1e-2 and lo.mean >= 10.0 * resolution:
            drops.append((lo_db, lo.mean / hi.extras["wilson"][1]))
    record_property("measured", ", ".join(f"{t} floor change {v:.1%}" for t, v in floors.items())
                    + "; JPBD drops " + ", ".join(f"{d:g} dB x{r:.0f}" for d, r in drops))
    assert all(v < 0.10 for v in floors.values()), floors
    assert drops, "no resolvable pre-floor pair for JPBD"
    assert all(r >= 10.0 for _, r in drops), drops


@criterion(9, "low-SNR mean SINR bound and mean channel energy M*B_t")
def test_low_snr_bound(record_property):
    cfg = harness.ExperimentConfig(seed=9, realizations=1000)
    rho = np.full(2, 0.1)
    sinrs = {t: [] for t in precoding.TECHNIQUES}
    energy = {1: [], 9: []}
    for i in range(cfg.realizations):
        designs = harness._design_all(cfg, harness.draw_realization(cfg, i), precoding.TECHNIQUES)
        for t, (r, ps, H) in designs.items():
            gains = linkmetrics.all_link_gains(ps, H, rho)
            sinrs[t].append([linkmetrics.sinr(g, rho[k], 1.0) for k, g in enumerate(gains)])
            if t in ("EBD", "TRBD"):
                energy[r.dims.L_p].extend(float(np.linalg.norm(h) ** 2) for h in H)
    lines, ok = [], True
    for t, s in sinrs.items():
        bound = linkmetrics.low_snr_bound(cfg.technique_dims(t), 0.1, 1.0)
        mean = np.mean(s, axis=0)
        ok &= bool(np.all(mean <= bound))
        lines.append(f"{t} {mean.max():.2f}<={bound:.1f}")
    dev = {}
    for L_p, e in energy.items():
        B_t = cfg.system_dims.with_redundancy(L_p).B_t
        dev[L_p] = np.mean(e) / (cfg.dims.M * B_t) - 1.0
    lines.append("energy " + ", ".join(f"Lp={lp} {v:+.2%}" for lp, v in dev.items()))
    record_property("measured", "; ".join(lines))
    assert ok
    assert all(abs(v) <= 0.05 for v in dev.values()), dev


@pytest.mark.slow
@criterion(10, "B=80, M=10: JPBD collapses K=8->9 at L_p=1; raised L_p grows monotonically to K=9")
def test_user_scaling(record_property):
    cfg = harness.config_from_dict({
        "dims": {"M": 10, "K": 1, "B": 80, "L": 9, "L_p": 1}, "techniques": ["JPBD"],
        "users": list(range(1, 10)), "redundancies": [1, RAISED_REDUNDANCY],
        "realizations": 8, "seed": 10, "pmax_db": 50.0})
    table = harness.run_singular_values(cfg)["sum_rate"]
    flat = {lp: table.get(f"JPBD/Lp={lp}")[1] for lp in (1, RAISED_REDUNDANCY)}
    drop = 1.0 - flat[1][8] / flat[1][7]
    raised = flat[RAISED_REDUNDANCY]
    record_property("measured", f"L_p=1 drop {drop:.1%}; L_p={RAISED_REDUNDANCY} "
                    + " ".join(f"{v:.2f}" for v in raised))
    assert drop > 0.5
    assert np.all(np.diff(raised) > 0), raised


@criterion(11, "byte-identical CSV across thread counts")
def test_determinism():
    base = {"realizations": 6, "snr_db": {"start": 0, "stop": 30, "step": 10},
            "bits_per_point": 6000, "seed": 11, "rho_points": 5}
    runners = (harness.run_sum_rate, harness.run_ber, harness.run_rate_region, harness.run_alloc_demo)
    for run in runners:
        outputs = {th: harness.format_csv(run(harness.config_from_dict({**base, "threads": th})))
                   for th in (1, 2, 4)}
        assert outputs[1] == outputs[2] == outputs[4], run.__name__
    sv = {"techniques": ["EBD", "JPBD"], "users": [1, 2, 3], "redundancies": [1, 4]}
    tables = {th: harness.run_singular_values(harness.config_from_dict({**base, **sv, "threads": th}))
              for th in (1, 3)}
    for name in tables[1]:
        assert harness.format_csv(tables[1][name]) == harness.format_csv(tables[3][name])
