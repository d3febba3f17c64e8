import math

import numpy as np
import pytest
from scipy import stats

from icx.errors import JammedError, ValidationError
from icx.sampler import (
    Chain,
    Configuration,
    PairPotential,
    _NO_TAIL,
    _run_moves,
    batch_means_se,
    check_hard_core,
    hard_core,
    ideal_gas,
    integrated_autocorr_time,
    read_jsonl,
    run_chain,
    tonks_activity,
    tonks_box_density,
    tonks_box_weights,
    tonks_density,
    tonks_mu_exact,
    tonks_pair_correlation,
    write_jsonl,
)


def _occupation_check(trace, probs):
    for n, p in enumerate(probs):
        ind = (trace == n).astype(float)
        se = batch_means_se(ind, 50)
        assert abs(ind.mean() - p) <= 3 * se + 1e-12, (n, ind.mean(), p, se)


def test_tonks_values():
    assert tonks_mu_exact(0.05) - math.log(0.05) == pytest.approx(math.log(1 / 0.95) + 0.05 / 0.95, rel=1e-15)
    assert tonks_mu_exact(0.05) - math.log(0.05) == pytest.approx(0.103923, abs=5e-6)
    assert tonks_mu_exact(1e-9) - math.log(1e-9) == pytest.approx(0.0, abs=1e-8)
    with pytest.raises(JammedError):
        tonks_mu_exact(1.0)
    assert tonks_density(tonks_activity(0.3)) == pytest.approx(0.3, rel=1e-13)


def test_tonks_contact_value():
    assert tonks_pair_correlation(np.array([1.0 + 1e-12]), 0.05)[0] == pytest.approx(1 / 0.95, rel=1e-9)
    far = tonks_pair_correlation(np.array([40.0]), 0.05)[0]
    assert far == pytest.approx(1.0, abs=1e-6)


def test_ring_density_matches_tonks():
    z = tonks_activity(0.05)
    assert tonks_box_density(z, 200.0) == pytest.approx(0.05, rel=1e-12)
    assert tonks_box_weights(0.8, 2.5).tolist() == pytest.approx([1 / 3.4, 2 / 3.4, 0.4 / 3.4])


def test_death_on_empty_is_rejected():
    pos = np.zeros((4, 1))
    acc = np.zeros(3, dtype=np.int64)
    tries = np.zeros(3, dtype=np.int64)
    trace = np.zeros(1, dtype=np.int64)
    uni = np.array([[0.5, 0.0, 0.0, 0.5]])  # death, would always accept
    n = _run_moves(pos, 0, 10.0, 1.0, 0.0, _NO_TAIL, 0.0, 1.0, 0.0, 0.5, uni, np.ones((1, 1)),
                   acc, tries, trace, 1)
    assert n == 0 and acc[1] == 0 and tries[1] == 1


def test_detailed_balance_two_rod_ring():
    # at most two rods of length 1 fit on a ring of length 2.5
    chain = Chain(0.8, hard_core(1.0), 2.5, 1, seed=11)
    trace = chain.advance(200_000)
    _occupation_check(trace, tonks_box_weights(0.8, 2.5))


def test_detailed_balance_constant_tail():
    # every pair interacts with energy c, so p(N) ~ (zV)^N/N! exp(-c N(N-1)/2)
    c, z, L = 0.7, 2.0, 2.0
    u = PairPotential(tail=lambda r: np.full_like(r, c), r_cut=1.0)
    trace = Chain(z, u, L, 1, seed=5).advance(200_000)
    w = np.array([(z * L) ** n / math.factorial(n) * math.exp(-c * n * (n - 1) / 2) for n in range(30)])
    _occupation_check(trace, (w / w.sum())[:6])


def test_seeded_chain_is_bit_identical():
    a, sa = run_chain(0.3, hard_core(0.5), 20.0, 1, 2000, 100, 50, seed=9)
    b, sb = run_chain(0.3, hard_core(0.5), 20.0, 1, 2000, 100, 50, seed=9)
    assert len(a) == len(b) == 38
    assert all(np.array_equal(x.points, y.points) for x, y in zip(a, b))
    assert np.array_equal(sa.n_trace, sb.n_trace)


def test_hard_core_holds_2d():
    configs, stats_ = run_chain(0.5, hard_core(1.0), 8.0, 2, 3000, 100, 20, seed=2, debug=True)
    assert all(check_hard_core(c, 1.0) for c in configs)
    assert all(0 <= r <= 1 for r in stats_.accept_rates.values())


def test_ideal_gas_poisson_moments():
    _, st = run_chain(0.05, ideal_gas(), 200.0, 1, 50_000, 2000, 1000, seed=4)
    tr = st.n_trace.astype(float)
    mean = tr.mean()
    assert abs(mean - 10.0) <= 3 * batch_means_se(tr)
    assert abs(tr.var() - 10.0) <= 3 * batch_means_se((tr - mean) ** 2)


def test_positions_uniform():
    configs, _ = run_chain(0.05, hard_core(1.0), 200.0, 1, 20_000, 1000, 20, seed=8)
    x = np.concatenate([c.points[:, 0] for c in configs])
    counts, _ = np.histogram(x, bins=20, range=(0, 200))
    assert stats.chisquare(counts).pvalue > 0.01


def test_ess_default_settings():
    _, st = run_chain(tonks_activity(0.05), hard_core(1.0), 200.0, 1, 100_000, 10_000, 50, seed=42)
    assert st.ess >= 100


def test_autocorr_time_white_noise():
    x = np.random.default_rng(0).standard_normal(20_000)
    assert integrated_autocorr_time(x) == pytest.approx(0.5, abs=0.05)


def test_jsonl_roundtrip(tmp_path):
    configs = [Configuration(np.array([[1.0], [2.5]]), 10.0, 1, 5), Configuration(np.zeros((0, 1)), 10.0, 1, 6)]
    path = tmp_path / "c.jsonl"
    write_jsonl(configs, path)
    back = read_jsonl(path)
    assert back[0].to_json() == {"points": [[1.0], [2.5]], "L": 10.0, "d": 1, "sweep": 5}
    assert back[1].n == 0


def test_run_chain_validation():
    with pytest.raises(ValidationError):
        run_chain(0.1, ideal_gas(), 10.0, 1, 100, 100, 1)
    with pytest.raises(ValidationError):
        run_chain(0.1, ideal_gas(), 10.0, 1, 100, 10, 0)
    with pytest.raises(ValidationError):
        Chain(0.1, hard_core(3.0), 5.0, 1)
