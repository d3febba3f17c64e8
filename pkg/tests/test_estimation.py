import math
import warnings

import numpy as np
import pytest

from icx.errors import DegenerateDensityError, ValidationError
from icx.estimation import (
    EmpiricalFamily,
    PcfEstimate,
    diagnostics,
    empirical_family,
    estimate_density,
    estimate_pcf,
    first_term_direct,
    interpolate_g,
    mu_hat,
)
from icx.integrators import IntegratorConfig
from icx.kirkwood import hard_rod, kirkwood_family
from icx.sampler import Configuration, hard_core, run_chain, tonks_activity


def poisson_configs(rho, L, n, seed=0, d=1):
    rng = np.random.default_rng(seed)
    return [Configuration(rng.uniform(0, L, (rng.poisson(rho * L**d), d)), L, d, i) for i in range(n)]


@pytest.fixture(scope="module")
def rods():
    configs, _ = run_chain(tonks_activity(0.05), hard_core(1.0), 200.0, 1, 200_000, 5000, 10, seed=3)
    return configs


def test_density_of_empty_stream_is_zero():
    est = estimate_density([Configuration(np.zeros((0, 1)), 10.0, 1)] * 3)
    assert est.rho == 0.0


def test_density_poisson():
    est = estimate_density(poisson_configs(0.05, 200.0, 500))
    assert abs(est.rho - 0.05) <= 3 * est.std_err


def test_density_needs_two_configs():
    with pytest.raises(ValidationError):
        estimate_density(poisson_configs(0.05, 200.0, 1))
    with pytest.raises(ValidationError):
        estimate_density([])


def test_pcf_poisson_is_flat():
    pcf = estimate_pcf(poisson_configs(0.05, 200.0, 2000, seed=1), bins=20, r_max=10.0)
    assert np.all(np.abs(pcf.g - 1) <= 3 * pcf.std_err)


def test_pcf_rmax_guard():
    with pytest.raises(ValidationError):
        estimate_pcf(poisson_configs(0.05, 20.0, 5), r_max=10.5)


def test_pcf_order_invariant():
    configs = poisson_configs(0.1, 50.0, 40, seed=2)
    a = estimate_pcf(configs, bins=25, r_max=5.0)
    b = estimate_pcf(configs[::-1], bins=25, r_max=5.0)
    assert np.array_equal(a.g, b.g)


def test_pcf_hard_rods(rods):
    pcf = estimate_pcf(rods, bins=100, r_max=10.0)
    assert np.all(pcf.g[pcf.mids < 1.0] == 0)
    contact = pcf.g[10]  # bin [1.0, 1.1); the bin average sits ~0.003 below the contact value
    assert abs(contact - 1 / 0.95) <= 3 * pcf.std_err[10] + 0.003


def test_interpolation_rules():
    edges = np.linspace(0, 4, 5)
    g = np.array([0.0, 1.2, 1.1, 1.0])
    fn = interpolate_g(edges, g, hard_core=1.0)
    assert fn(np.array([0.5, 0.99]))[0] == 0 and fn(np.array([0.99]))[0] == 0
    assert fn(np.array([1.0, 1.5, 2.0, 5.0])).tolist() == pytest.approx([1.2, 1.2, 1.15, 1.0])
    soft = interpolate_g(edges, np.array([0.5, 1.2, 1.1, 1.0]))
    assert soft(np.array([0.0]))[0] == 0.5


def test_negative_g_is_rejected():
    pcf = PcfEstimate(np.linspace(0, 2, 3), np.array([-0.1, 1.0]), np.zeros(2), np.zeros(2), 0.1, 2)
    with pytest.raises(DegenerateDensityError):
        EmpiricalFamily(0.1, pcf, 1)


def test_poisson_pipeline_recovers_log_rho():
    configs = poisson_configs(0.05, 200.0, 800, seed=5)
    fam = empirical_family(configs, bins=40, r_max=10.0)
    dens = estimate_density(configs)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = mu_hat(fam, 1, 10.0, IntegratorConfig(nodes=400), se_rho=dens.std_err)
    assert abs(est.mu_hat - math.log(0.05)) <= 3 * est.se_mu


def test_first_term_two_paths(rods):
    fam = empirical_family(rods, bins=200, r_max=10.0, hard_core=1.0)
    est = mu_hat(fam, 1, 10.0, IntegratorConfig(nodes=210), check_halved=False)
    assert abs(est.terms[0] - first_term_direct(fam, 10.0, 210)) <= 1e-12
    assert est.terms[0] > 0


def test_mu_hat_order_guard(rods):
    fam = empirical_family(rods[:50], bins=20, r_max=10.0, hard_core=1.0)
    with pytest.raises(ValidationError):
        mu_hat(fam, 3)


def test_diagnostics_poisson():
    fam = empirical_family(poisson_configs(0.05, 200.0, 200), bins=20, r_max=10.0)
    from icx.correlations import PoissonFamily

    out = diagnostics(PoissonFamily(0.05, 3), 2)
    assert (out["q"], out["convergent"]) == (0.0, True)
    assert out["xi_hat"] == pytest.approx(0.05)
    assert fam.order == 3


def test_diagnostics_hard_rods_low_density():
    fam = kirkwood_family(0.02, hard_rod(1.0), 3)
    out = diagnostics(fam, 2, R=6.0, config=IntegratorConfig(nodes=204))
    assert out["q"] < out["q0"] and out["convergent"]


def test_diagnostics_precondition():
    with pytest.raises(ValidationError):
        diagnostics(kirkwood_family(0.02, hard_rod(1.0), 2), 3)
