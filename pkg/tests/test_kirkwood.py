import math
import warnings

import numpy as np
import pytest

from icx.correlations import mu_expansion, rooted_term, tilde_family, truncate
from icx.errors import SizeLimitError, ValidationError
from icx.exprep import GradedSeries
from icx.integrators import Domain, IntegratorConfig
from icx.kirkwood import (
    connected_graph_sum,
    connected_graphs,
    existence_bound,
    gaussian,
    graph_series_log,
    hard_rod,
    hard_sphere,
    kirkwood_family,
    mu_graph_expansion,
    pair_function,
    tilde_closed_form,
)

RHO = 0.05
SHARED = IntegratorConfig("quad", nodes=603)


def test_connected_graph_counts():
    assert [len(connected_graphs(v)) for v in range(1, 6)] == [1, 1, 4, 38, 728]
    with pytest.raises(SizeLimitError):
        connected_graphs(7)


def test_graph_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("ICX_CACHE_DIR", str(tmp_path))
    first = connected_graphs(4)
    assert (tmp_path / "connected_graphs_v4.json").exists()
    assert connected_graphs(4) == first


@pytest.mark.parametrize("g", [hard_rod(1.0), gaussian(0.6, 0.8)], ids=["hard-rod", "gaussian"])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_closed_form_matches_recursion(g, k, rng):
    fam = kirkwood_family(0.1, g, k + 1)
    rhoT = truncate(fam)
    pts = rng.uniform(-1.5, 1.5, (200, k + 1, 1))
    rec = tilde_family(rhoT)(pts)
    closed = tilde_closed_form(g, rhoT, k)(pts)
    assert np.allclose(rec, closed, rtol=1e-12, atol=1e-16)


def test_hard_rod_first_term():
    fam = kirkwood_family(RHO, hard_rod(1.0), 2)
    rep = mu_expansion(tilde_family(truncate(fam)), 3.0, 1, SHARED)
    assert rep.terms[0] == pytest.approx(2 * RHO, rel=1e-12)


def test_hard_rod_second_term_routes():
    g = hard_rod(1.0)
    fam = kirkwood_family(RHO, g, 3)
    rec = mu_expansion(tilde_family(truncate(fam)), 3.0, 2, SHARED, check_halved=False).terms[1]
    closed = rooted_term(tilde_closed_form(g, truncate(fam), 2), 1, Domain.ball(3.0), 2, SHARED)[0]
    graph = mu_graph_expansion(RHO, g, 2, 3.0, SHARED, check_halved=False)
    # frozen: overlap geometry gives 5 sigma^2 for the tilde route and 9 sigma^2 for the graph sum
    assert rec == pytest.approx(2.5 * RHO**2, rel=1e-4)
    assert closed == pytest.approx(rec, rel=1e-12)
    assert graph.terms[1] == pytest.approx(4.5 * RHO**2, rel=1e-4)
    assert graph.diagnostics["mu_terms_from_log"][1] == pytest.approx(rec, rel=1e-10)


def test_graph_series_is_exponential_of_tilde_series():
    g = gaussian(0.5, 1.0)
    cfg = IntegratorConfig("quad", nodes=24)
    fam = kirkwood_family(0.1, g, 4)
    tilde = mu_expansion(tilde_family(truncate(fam)), 4.0, 3, cfg, check_halved=False).terms
    graph = mu_graph_expansion(0.1, g, 3, 4.0, cfg, check_halved=False).terms
    expo = GradedSeries([0.0] + tilde).exp().coeffs[1:]
    assert np.allclose(graph, expo, rtol=1e-10)


def test_graph_series_log_inverts_exp():
    terms = [0.1, 0.01125, 0.002]
    assert graph_series_log(GradedSeries([0.0] + terms).exp().coeffs[1:]) == pytest.approx(terms)


def test_connected_graph_sum_two_vertices():
    g = hard_rod(1.0)
    kern = connected_graph_sum(g, 1)
    pts = np.array([[[0.0], [0.5]], [[0.0], [2.0]]])
    assert kern(pts).tolist() == [-1.0, 0.0]


def test_existence_region():
    g = hard_rod(1.0)
    eb = existence_bound(RHO, g)
    assert eb.exists and eb.bound == pytest.approx(1 / (2 * math.e))
    assert eb.strict_bound < eb.bound
    with pytest.warns(UserWarning):
        kirkwood_family(0.5, g, 3)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        kirkwood_family(RHO, g, 3)


def test_pair_functions():
    assert hard_sphere(1.0, 3).C_g == pytest.approx(4 / 3 * math.pi)
    assert gaussian(0.5, 1.0, 1).C_g == pytest.approx(0.5 * math.sqrt(math.pi))
    assert pair_function("one").C_g == 0.0
    with pytest.raises(ValidationError):
        pair_function("square-well")
    with pytest.raises(ValidationError):
        gaussian(1.5)


def test_kirkwood_subset_table_matches_direct(rng):
    fam = kirkwood_family(0.2, gaussian(0.4, 0.7), 4)
    pts = rng.uniform(-1, 1, (7, 4, 1))
    table = fam.subset_table(pts)
    assert np.allclose(table[-1], fam(pts), rtol=1e-14)
    assert np.allclose(table[0b0101], fam(pts[:, [0, 2]]), rtol=1e-14)
