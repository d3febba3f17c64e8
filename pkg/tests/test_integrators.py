import math

import numpy as np
import pytest

from icx.errors import CostGuardError, ValidationError
from icx.exprep import SiteSpace
from icx.integrators import Domain, IntegratorConfig, aligned_nodes, integrate, mc_k, quad_k, site_sum_k


def gauss(pts):
    return np.exp(-np.sum(pts**2, axis=(1, 2)))


def test_quad_gaussian_box():
    est = quad_k(gauss, Domain.box(12.0, 1), 2, nodes_per_axis=200)
    assert est.value == pytest.approx(math.pi, rel=1e-10)


def test_quad_ball_volume():
    est = quad_k(lambda p: np.ones(len(p)), Domain.ball(1.0, 2), 1, nodes_per_axis=400)
    assert est.value == pytest.approx(math.pi, rel=1e-3)


def test_quad_k0_is_point_value():
    assert quad_k(lambda p: np.full(len(p), 3.5), Domain.box(1.0), 0).value == 3.5


def test_quad_guards():
    with pytest.raises(CostGuardError):
        quad_k(gauss, Domain.box(1.0, 3), 3, 4)
    with pytest.raises(CostGuardError):
        quad_k(gauss, Domain.box(1.0, 1), 6, 100)


def test_aligned_nodes_puts_core_on_faces():
    n = aligned_nodes(3.0, 1.0, 600)
    assert n == 603
    h = 6.0 / n
    assert abs((3.0 - 1.0) / h - round((3.0 - 1.0) / h)) < 1e-9


def test_hard_rod_pair_overlap_exact_on_aligned_grid():
    # int_{|y1|,|y2|<=3} 1{|y1 - y2| < 1} = 2*6 - 1 = 11
    est = quad_k(lambda p: (np.abs(p[:, 0, 0] - p[:, 1, 0]) < 1).astype(float), Domain.ball(3.0), 2, 603)
    assert est.value == pytest.approx(11.0, rel=1e-4)


def test_mc_within_error_and_deterministic():
    a = mc_k(gauss, Domain.box(8.0, 1), 2, 200_000, seed=3)
    b = mc_k(gauss, Domain.box(8.0, 1), 2, 200_000, seed=3)
    assert a == b
    assert abs(a.value - math.pi) < 4 * a.std_err


def test_mc_workers_deterministic():
    a = mc_k(gauss, Domain.box(8.0, 1), 1, 50_000, seed=1, workers=3)
    b = mc_k(gauss, Domain.box(8.0, 1), 1, 50_000, seed=1, workers=3)
    assert a.value == b.value
    assert abs(a.value - math.sqrt(math.pi)) < 4 * a.std_err


def test_site_sum():
    S = SiteSpace(np.array([[0.0], [1.0]]), [0.5, 2.0])
    est = site_sum_k(lambda p: np.sum(p[:, :, 0], axis=1), S, 2)
    # sum_{i,j} w_i w_j (x_i + x_j)
    assert est.value == pytest.approx(2 * (0.5 + 2.0) * (2.0 * 1.0))


def test_integrate_dispatch():
    S = SiteSpace(np.zeros((1, 1)), [1.0])
    assert integrate(lambda p: np.ones(len(p)), S, 3).method == "sites"
    assert integrate(gauss, Domain.box(8.0), 1, IntegratorConfig("mc", samples=1000)).method == "mc"
    with pytest.raises(ValidationError):
        IntegratorConfig("simpson")


def test_domain_validation():
    with pytest.raises(ValidationError):
        Domain.box(-1.0)
    with pytest.raises(ValidationError):
        Domain("disc", 2, 1.0)
    assert Domain.ball(2.0, 3).volume == pytest.approx(4 / 3 * math.pi * 8)
