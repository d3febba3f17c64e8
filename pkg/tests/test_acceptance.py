"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import math
import time
import warnings
from fractions import Fraction

import numpy as np
import pytest

from conftest import random_family
from icx.correlations import (
    PoissonFamily,
    mu_expansion,
    pressure_expansion,
    rooted_term,
    split_check,
    tilde_family,
    truncate,
)
from icx.estimation import empirical_family, estimate_density, mu_hat
from icx.exprep import random_site_family, random_site_space, verify_exp_identity
from icx.integrators import Domain, IntegratorConfig
from icx.kirkwood import hard_rod, kirkwood_family, mu_graph_expansion, tilde_closed_form
from icx.partitions import (
    ZETA,
    Poly,
    coefficient_expansion,
    enumerate_total_partitions,
    q0,
    superstable_constants,
    total_partition_sequence,
    w_sequence,
)
from icx.sampler import (
    batch_means_se,
    hard_core,
    ideal_gas,
    run_chain,
    tonks_activity,
    tonks_density,
    tonks_mu_exact,
)


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return report


def test_criterion_1_coefficient_formula(verdict):
    t0 = time.perf_counter()
    w = w_sequence(12, Poly.D(), Poly.q())
    bad = [k for k in range(1, 13) if w[k - 1] != coefficient_expansion(k)]
    dt = time.perf_counter() - t0
    ok = not bad and dt < 10
    verdict(1, ok, f"w_k exact expansion for k<=12, mismatches={bad}, {dt:.2f}s (limit 10s)")
    assert ok


def test_criterion_2_total_partitions(verdict):
    t0 = time.perf_counter()
    b = total_partition_sequence(5)[1:]
    structural = [len(enumerate_total_partitions(m)) for m in range(1, 6)]
    dt = time.perf_counter() - t0
    ok = b == [1, 1, 4, 26, 236] == structural and dt < 5
    verdict(2, ok, f"recursion={b} enumeration={structural}, {dt:.2f}s (limit 5s)")
    assert ok


def test_criterion_3_exponential_representation(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst_float = 0.0
    for trial in range(100):
        sites = 1 + trial % 5
        F = random_site_family(sites, 8, rng)
        S = random_site_space(sites, rng)
        worst_float = max(worst_float, verify_exp_identity(F, S, 8).max_residual)
    exact_ok = True
    for trial in range(20):
        sites = 1 + trial % 5
        F = random_site_family(sites, 8, rng, exact=True)
        S = random_site_space(sites, rng, exact=True)
        exact_ok &= all(r == 0 for r in verify_exp_identity(F, S, 8).residual)
    dt = time.perf_counter() - t0
    ok = exact_ok and worst_float <= 1e-12 and dt < 60
    verdict(3, ok, f"order 8, <=5 sites: exact residuals zero={exact_ok}, "
                   f"float max relative residual={worst_float:.2e} over 100 trials (tol 1e-12), {dt:.1f}s")
    assert ok


def test_criterion_4_split_identity(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        fam = random_family(rng, order=6)
        worst = max(worst, max(split_check(fam, 20, rng, k_max=5).values()))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and dt < 60
    verdict(4, ok, f"F_k = rho_T^(k) + tilde_k, k<=5, 100 families x 20 probes: "
                   f"max relative residual={worst:.2e} (tol 1e-10), {dt:.1f}s")
    assert ok


def test_criterion_5_poisson_collapse(verdict):
    t0 = time.perf_counter()
    rho = 0.05
    fam = PoissonFamily(rho, order=5)
    cfg = IntegratorConfig("quad", nodes=20)
    rep = mu_expansion(tilde_family(truncate(fam)), 2.0, 4, cfg)
    pres = pressure_expansion(truncate(fam), 2.0, 4, cfg)
    worst = max(abs(t) for t in rep.terms + pres.terms)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-14 and rep.mu == math.log(rho) and pres.pressure == rho and dt < 5
    verdict(5, ok, f"max |term|={worst:.1e} (tol 1e-14), mu==log rho: {rep.mu == math.log(rho)}, "
                   f"p==rho: {pres.pressure == rho}, {dt:.2f}s")
    assert ok


def test_criterion_6_kirkwood_routes(verdict):
    t0 = time.perf_counter()
    rho, R = 0.05, 3.0
    g = hard_rod(1.0)
    cfg = IntegratorConfig("quad", nodes=603)  # rod ends fall on cell faces
    fam = kirkwood_family(rho, g, 3)
    rhoT = truncate(fam)
    dom = Domain.ball(R, 1)
    a = mu_expansion(tilde_family(rhoT), R, 2, cfg, check_halved=False).terms
    b = [rooted_term(tilde_closed_form(g, rhoT, k), 1, dom, k, cfg)[0] for k in (1, 2)]
    graph = mu_graph_expansion(rho, g, 2, R, cfg, check_halved=False)
    c = graph.terms
    rel = lambda x, y: abs(x - y) / abs(y)
    analytic = [2 * rho, 4.5 * rho**2]
    checks = {}
    for k in (0, 1):
        checks[f"k={k + 1} a~b"] = rel(a[k], b[k]) <= 1e-6
        checks[f"k={k + 1} a~c"] = rel(a[k], c[k]) <= 1e-6
        checks[f"k={k + 1} b~c"] = rel(b[k], c[k]) <= 1e-6
        for name, v in (("a", a[k]), ("b", b[k]), ("c", c[k])):
            checks[f"k={k + 1} {name}~analytic"] = rel(v, analytic[k]) <= 1e-4
    dt = time.perf_counter() - t0
    ok = all(checks.values()) and dt < 300
    failed = [key for key, v in checks.items() if not v]
    verdict(6, ok, f"a={a} b={b} c={c} analytic={analytic} "
                   f"(log of graph series: {graph.diagnostics['mu_terms_from_log']}); "
                   f"failed checks: {failed or 'none'}; {dt:.1f}s")
    assert ok


def test_criterion_7_sampler_calibration(verdict):
    t0 = time.perf_counter()
    # ideal gas: N ~ Poisson(z L)
    z, L = 0.05, 200.0
    _, st = run_chain(z, ideal_gas(), L, 1, 110_000, 10_000, 1000, seed=7)
    tr = st.n_trace.astype(float)
    mean, var = tr.mean(), tr.var()
    se_mean, se_var = batch_means_se(tr), batch_means_se((tr - mean) ** 2)
    ideal_ok = abs(mean - z * L) <= 3 * se_mean and abs(var - z * L) <= 3 * se_var
    # hard rods: the Tonks activity-density relation
    zr = tonks_activity(0.05)
    _, sr = run_chain(zr, hard_core(1.0), L, 1, 110_000, 10_000, 1000, seed=8)
    rho_hat = sr.density
    se_rho = batch_means_se(sr.n_trace.astype(float)) / L
    rods_ok = abs(rho_hat - tonks_density(zr)) <= 3 * se_rho
    dt = time.perf_counter() - t0
    ok = ideal_ok and rods_ok and dt < 600
    verdict(7, ok, f"ideal: mean={mean:.4f}+-{se_mean:.4f}, var={var:.4f}+-{se_var:.4f} vs {z * L}; "
                   f"rods: rho={rho_hat:.5f}+-{se_rho:.5f} vs {tonks_density(zr):.5f}; "
                   f"{len(tr)} sweeps each, {dt:.1f}s")
    assert ok


def test_criterion_8_end_to_end(verdict):
    t0 = time.perf_counter()
    rho_target, sigma = 0.05, 1.0
    mu_exact = tonks_mu_exact(rho_target, sigma)
    configs, st = run_chain(math.exp(mu_exact), hard_core(sigma), 200.0, 1, 400_000, 10_000, 10, seed=2024)
    fam = empirical_family(configs, bins=200, r_max=10.0, order=3, hard_core=sigma)
    dens = estimate_density(configs)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = mu_hat(fam, K=2, R=20.0, se_rho=dens.std_err)
    err = abs(est.mu_hat - mu_exact)
    allowed = max(3 * est.se_mu, 0.3 * abs(est.terms[-1]))
    exact_excess = mu_exact - math.log(rho_target)
    excess = est.mu_hat - math.log(est.rho_hat)
    excess_ok = abs(excess - exact_excess) <= 0.15 * exact_excess
    dt = time.perf_counter() - t0
    ok = err <= allowed and excess_ok and dt < 1800
    verdict(8, ok, f"mu_hat={est.mu_hat:.5f}+-{est.se_mu:.5f} vs exact {mu_exact:.5f} "
                   f"(|err|={err:.2e}, allowed {allowed:.2e}); terms={[round(t, 6) for t in est.terms]}; "
                   f"excess={excess:.5f} vs {exact_excess:.6f} (15% band); ESS={st.ess:.0f}; {dt:.1f}s")
    assert ok


def test_criterion_9_constants(verdict):
    t0 = time.perf_counter()
    zeta_ok = ZETA == 1 / (2 * math.log(2) - 1) and f"{ZETA:.6f}" == "2.588699"
    q0_ok = q0(0) == 0.25
    edge = superstable_constants(None, 1.0, 0.5, qbar=Fraction(1, 3))
    inside = superstable_constants(None, 1.0, 0.5, qbar=Fraction(1, 4))
    dt = time.perf_counter() - t0
    ok = zeta_ok and q0_ok and not edge.admissible and inside.qbar < Fraction(1, 3) and dt < 1
    verdict(9, ok, f"zeta={ZETA!r}, q0(0)={q0(0)}, qbar=1/3 admissible={edge.admissible}, {dt * 1e3:.1f}ms")
    assert ok
