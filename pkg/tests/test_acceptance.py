"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s``; the lines are also
repeated in the terminal summary. Criteria 5, 7 and 8 take minutes.
"""

import math
from dataclasses import replace

import mpmath
import numpy as np
import pytest
from scipy.stats import norm

from urasparc import potential as pot
from urasparc.amp import (AmpParams, denoise_derivative, extract_support, run_amp,
                          state_evolution, support_vector)
from urasparc.harness import GridSpec, SimOptions, run_campaign
from urasparc.model import config_for, derive_params, inactivity_prob
from urasparc.potential import LOG2E
from urasparc.sbs_map import (DecoupledChannelSpec, enumerate_posterior, scalar_sbs_map)
from urasparc.sparc import generate_dictionary


def inner_instance(seed, n, L, J, K, E_in):
    """Dictionary, whitened observation and true support for K random users."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    snr = 2.0 * E_in * L * J / n
    d = generate_dictionary(n, L, J, snr, seed)
    seqs = rng.integers(0, 1 << J, size=(K, L))
    cols = (seqs + (np.arange(L) << J)[None, :]).ravel()
    y = d.entries[:, cols].sum(axis=1) + rng.standard_normal(n)
    rho = np.zeros(L << J, dtype=bool)
    rho[cols] = True
    return d, y, rho, n * snr / L


# ---------------------------------------------------------------------------

def test_1_closed_form_thresholds(verdict):
    s_alg = pot.threshold_algorithmic(2.0, LOG2E)
    ref = 2 * LOG2E - 1 / LOG2E
    cap = pot.capacity_symmetric(10, 0.1)
    bound = pot.outer_rate_bound(alpha=2.0)
    ok = abs(s_alg - ref) <= 1e-9 and cap == 0.5 and bound == 0.5
    verdict(1, ok, f"S_alg={s_alg:.12f} (ref {ref:.12f}), C_sym={cap}, R_out bound={bound}")
    assert ok


def test_2_asymptotic_potential_structure(verdict):
    a = pot.find_minimizers(pot.limit_curve(5.0, 0.5, 2.0))
    ref_a = math.log2(1 + 2 * 5.0 * 0.5) / (2 * LOG2E)
    b = pot.find_minimizers(pot.limit_curve(0.1, 2.0, 2.0))
    ref_b = 0.1 * (1 - 1 / 2.0) / LOG2E
    ok_a = abs(a.eta_global - 1 / 6) <= 1e-4 and abs(a.value_global - ref_a) <= 1e-6
    ok_b = (b.is_unique and b.eta_global == 1.0 and b.eta_smallest_local == 1.0
            and abs(b.value_global - ref_b) <= 1e-6)
    ok = ok_a and ok_b
    verdict(2, ok, f"(5,0.5,2): eta={a.eta_global:.8f} value={a.value_global:.9f} "
                   f"ref={ref_a:.9f}; (0.1,2,2): eta={b.eta_global} unique={b.is_unique} "
                   f"value={b.value_global:.9f} ref={ref_b:.9f} [{a.unit}]")
    assert ok


def test_3_finite_potential_converges(verdict):
    alpha, S_in, E_in = 2.0, 1.0, 2.0
    eta = np.linspace(1e-3, 1.0, 1000)
    eta = eta[np.abs(eta - pot.eta_bar(E_in, alpha)) >= 0.02]
    ref = pot.rs_potential_limit(eta, S_in, E_in, alpha) * LOG2E
    errs = []
    for J in (8, 12, 16, 20):
        K = round(2 ** (J / alpha))
        v = pot.rs_potential_finite(eta, R_in=S_in / K, J=J, K_a=K, P_hat=2 * J * E_in)
        errs.append(float(np.max(np.abs(v - ref))))
    ok = all(x > y for x, y in zip(errs, errs[1:]))
    verdict(3, ok, "sup error by J=8,12,16,20: " + ", ".join(f"{e:.4f}" for e in errs))
    assert ok


def test_4_denoiser_derivative(verdict):
    mpmath.mp.dps = 40
    rng = np.random.default_rng(4)
    P_hat, p0 = 48.0, inactivity_prob(8, 12)
    params = AmpParams(P_hat, p0, undersampling=1)
    sp = math.sqrt(P_hat)
    tau2 = rng.uniform(0.3, 10.0, 1000)
    g = rng.uniform(-30.0, 30.0, 1000)  # saturation on both sides and the transition
    x = (g + params.log_prior_ratio) * tau2 / sp + sp / 2
    h = mpmath.mpf(1e-6) * sp
    lr = mpmath.log(mpmath.mpf(p0) / (1 - mpmath.mpf(p0)))

    def f(xv, t):
        return sp / (1 + mpmath.exp(-((2 * sp * xv - P_hat) / (2 * t) - lr)))

    fd = np.array([float((f(mpmath.mpf(xi) + h, ti) - f(mpmath.mpf(xi) - h, ti)) / (2 * h))
                   for xi, ti in zip(x, tau2)])
    rel = np.abs(denoise_derivative(x, tau2, params) / fd - 1)
    ok = bool(rel.max() <= 1e-6)
    verdict(4, ok, f"max relative error {rel.max():.2e} over 1000 points, "
                   f"g in [{g.min():.1f}, {g.max():.1f}]")
    assert ok


@pytest.mark.slow
def test_5_amp_matches_state_evolution(verdict):
    L, J, K, E_in, T, seeds = 32, 10, 8, 2.0, 10, 20
    alpha = J / math.log2(K)
    S_in = 0.5 * pot.threshold_algorithmic(alpha, E_in)
    n = round(K * L * J / S_in)
    with_ons, without = [], []
    for seed in range(seeds):
        d, y, _, P_hat = inner_instance(1000 + seed, n, L, J, K, E_in)
        base = AmpParams.for_system(n, L, J, P_hat, inactivity_prob(K, J), max_iters=T,
                                    rel_tol=0.0)
        with_ons.append(run_amp(y, d, base).tau2_history)
        without.append(run_amp(y, d, replace(base, onsager=False)).tau2_history)
        del d
    se = state_evolution(base, T)
    dev = np.abs(np.mean(with_ons, axis=0) / se - 1)
    dev_off = np.abs(np.mean(without, axis=0) / se - 1)
    ok = bool(dev.max() <= 0.05 and dev_off.max() > 0.15)
    verdict(5, ok, f"n={n}, S_in={S_in:.4f}, {seeds} seeds: max |sim/SE-1| = {dev.max():.4f} "
                   f"with Onsager, {dev_off.max():.4f} without")
    assert ok


def test_6_oracle_equivalence(verdict):
    L, J, K, n, P = 2, 2, 2, 16, 0.25
    thresholds = (0.3, 0.4, 0.5, 0.6, 0.7)
    errors = {t: 0.0 for t in thresholds}
    for seed in range(200):
        d, y, rho, _ = inner_instance(seed, n, L, J, K, P * n / (2 * L * J))
        post = enumerate_posterior(y, d, K, 1.0)
        for t in thresholds:
            errors[t] += np.mean((post.marginals >= t) != rho) / 200
    sbs_best = all(errors[0.5] <= errors[t] for t in thresholds)

    rng = np.random.default_rng(6)
    agree = True
    for _ in range(100):
        spec = DecoupledChannelSpec(rng.uniform(0.01, 1.0), rng.uniform(0.1, 100.0),
                                    rng.uniform(0.5, 0.9999))
        r = rng.normal(spec.amplitude / 2, 2.0, 100)
        inactive = math.log(spec.p0) + norm.logpdf(r)
        active = math.log1p(-spec.p0) + norm.logpdf(r, loc=spec.amplitude)
        agree &= bool(np.array_equal(scalar_sbs_map(r, spec), (active > inactive).astype(np.int8)))
    ok = sbs_best and agree
    verdict(6, ok, "component error by threshold: "
            + ", ".join(f"{t}:{e:.4f}" for t, e in errors.items())
            + f"; scalar MAP == argmax on 10^4 draws: {agree}")
    assert ok


def support_error_rate(S_in, seeds, *, L=16, J=12, K=8, E_in=2.0, seed0=0):
    n = round(K * L * J / S_in)
    errs = []
    for s in range(seeds):
        d, y, rho, P_hat = inner_instance(seed0 + s, n, L, J, K, E_in)
        res = run_amp(y, d, AmpParams.for_system(n, L, J, P_hat, inactivity_prob(K, J)))
        del d
        est = support_vector(extract_support(res), L, J)
        errs.append(np.count_nonzero(est != rho) / np.count_nonzero(rho))
    return float(np.mean(errs)), n


@pytest.mark.slow
def test_7_phase_transition(verdict):
    J, K, E_in, L = 12, 8, 2.0, 16
    alpha = J / math.log2(K)
    s_alg = pot.threshold_algorithmic(alpha, E_in)
    onset = pot.algorithmic_onset(alpha, E_in)
    finite_onset = pot.finite_algorithmic_onset(J, K, E_in)
    S0 = 0.5 * min(s_alg, onset)
    low, n_low = support_error_rate(S0, 50, seed0=70000)
    high, n_high = support_error_rate(2 * S0, 50, seed0=71000)
    ok = low < 1e-2 and high > 0.3

    # locate the empirical crossing of the 0.3 level on a ladder of rates
    ladder = [(2 * S0, high)]
    for m in (3.0, 3.5, 4.0, 4.5, 5.0, 6.0):
        ladder.append((m * S0, support_error_rate(m * S0, 10, seed0=72000 + int(10 * m))[0]))
    crossing = math.nan
    for (s1, e1), (s2, e2) in zip(ladder, ladder[1:]):
        if e1 <= 0.3 < e2:
            crossing = math.exp(math.log(s1) + (0.3 - e1) / (e2 - e1) * math.log(s2 / s1))
            break
    refs = {"closed form": s_alg, "find_minimizers onset": onset,
            "finite-J onset": finite_onset}
    nearest = min(refs, key=lambda k: abs(math.log(crossing / refs[k])) if crossing == crossing
                  else math.inf)
    verdict(7, ok, f"S0={S0:.4f}: error {low:.4f} (n={n_low}) at S0, {high:.4f} (n={n_high}) "
                   f"at 2 S0; crossing S_in~{crossing:.3f} vs closed form {s_alg:.4f}, "
                   f"find_minimizers onset {onset:.4f}, finite-J onset {finite_onset:.4f}; "
                   f"nearest: {nearest}; ladder "
                   + ", ".join(f"{s:.3f}:{e:.3f}" for s, e in ladder))
    assert ok


# The blocklength is not fixed by the criterion; S_in = 1.2 sits at 0.83 of the
# closed-form threshold for the resulting inner energy (see the decisions log).
ROUNDTRIP_S_IN = 1.2


def roundtrip_cell(R_out_factor, trials, S_in=ROUNDTRIP_S_IN, master_seed=8):
    K, J, L = 10, 14, 12
    bound = pot.outer_rate_bound(K_a=K, J=J)
    B = round(R_out_factor * bound * L * J)
    S = S_in * B / (L * J)
    eb = 4 * pot.min_eb_n0(S)
    c = config_for(K, L, J, B, S_in=S_in, eb_n0=eb, master_seed=master_seed)
    rep = run_campaign(GridSpec(c, {}), trials, master_seed)
    return rep.cells[0], c


@pytest.mark.slow
def test_8_concatenated_roundtrip(verdict):
    cell, c = roundtrip_cell(0.6, 100)
    row = cell.row()
    dp = derive_params(c)
    ok_low = row["pue_mean"] < 0.05

    hi_cell, hc = roundtrip_cell(1.1, 20)
    hrow = hi_cell.row()
    false_surv = np.mean([r.survivor_count - (r.distinct_sent - r.miss_count)
                          for r in hi_cell.trials])
    overflow = sum(r.overflow for r in hi_cell.trials)
    blowup = overflow > 0 or false_surv >= hc.K_a
    ok_high = blowup or hrow["pue_mean"] > 0.3
    ok = ok_low and ok_high
    verdict(8, ok, f"R_out={dp.R_out:.4f} (B={c.B}, n={c.n}, Eb/N0={dp.eb_n0:.3f}): "
                   f"pue={row['pue_mean']:.4f}+-{row['pue_stderr']:.4f} over {row['trials']}, "
                   f"fa_rate={row['fa_rate']:.4f}; 1.1x bound (B={hc.B}): "
                   f"pue={hrow['pue_mean']:.3f}, mean false survivors={false_surv:.1f}, "
                   f"overflow in {overflow}/{len(hi_cell.trials)}")
    assert ok


def test_9_determinism(verdict):
    base = config_for(4, 8, 6, 30, S_in=0.5, E_in=4.0, master_seed=9)
    grid = GridSpec(base, {"eb_n0_db": [2.0, 5.0, 8.0], "R_out": [0.5, 0.625]})
    a = run_campaign(grid, 4, 99, parallelism=1).to_csv()
    b = run_campaign(grid, 4, 99, parallelism=8).to_csv()
    ok = a == b
    verdict(9, ok, f"{len(grid.cells())} cells x 4 trials, CSV identical under "
                   f"parallelism 1 and 8: {ok}")
    assert ok
