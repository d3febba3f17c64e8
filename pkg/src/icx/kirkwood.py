"""Kirkwood-closure families and their connected-graph expansion.

The closure ``rho^(n) = rho^n prod_{i<j} g(x_i - x_j)`` gives closed forms for
the truncated and tilde families, which makes it the independent oracle for
:mod:`icx.correlations`.

Note on the graph series: summing ``prod (g - 1)`` over all connected graphs
on ``{0} u y_k`` (weighted by ``(-rho)^k / k!``) reproduces the partition sums
of the tilde kernels, so the series exponentiates the tilde expansion: it is
``exp(mu - log rho) = e^mu / rho`` rather than ``mu - log rho``. The first
orders agree; from order 2 on they differ. :func:`graph_series_log` maps graph
terms to chemical-potential terms.
"""
from __future__ import annotations

import itertools
import json
import math
import os
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .correlations import (
    CorrelationFamily,
    ExpansionReport,
    TruncatedFamily,
    _as_pts,
    rooted_term,
)
from .errors import SizeLimitError, ValidationError
from .exprep import GradedSeries
from .integrators import Domain, IntegratorConfig, check_quad_budget
from .partitions import ZETA

MAX_GRAPH_VERTICES = 6


@dataclass(frozen=True)
class PairFunction:
    """Even, non-negative pair function ``g(|r|)`` with ``C_g = int |g - 1|``."""

    name: str
    g: Callable[[np.ndarray], np.ndarray]
    d: int
    C_g: float
    b: float = 1.0
    range_: float = 1.0
    core: float = 0.0

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.g(np.abs(r))

    def pair(self, diff: np.ndarray) -> np.ndarray:
        """``g`` of difference vectors of shape ``(..., d)``."""
        return self.g(np.sqrt(np.sum(diff * diff, axis=-1)))


def _ball_volume(d: int, r: float) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * r**d


def hard_rod(sigma: float = 1.0) -> PairFunction:
    return hard_sphere(sigma, d=1)


def hard_sphere(sigma: float = 1.0, d: int = 3) -> PairFunction:
    if sigma <= 0:
        raise ValidationError("sigma must be positive")
    name = "hard-rod" if d == 1 else "hard-sphere"
    return PairFunction(name, lambda r: (r >= sigma).astype(float), d, _ball_volume(d, sigma),
                        1.0, sigma, sigma)


def gaussian(a: float = 0.5, s: float = 1.0, d: int = 1) -> PairFunction:
    """``g = 1 - a exp(-r^2/s^2)`` with ``0 < a <= 1`` (so ``g <= 1``, ``b = 1``)."""
    if not 0 < a <= 1 or s <= 0:
        raise ValidationError("gaussian g needs 0 < a <= 1 and s > 0")
    return PairFunction("gaussian", lambda r: 1.0 - a * np.exp(-(r * r) / (s * s)), d,
                        a * (math.pi * s * s) ** (d / 2), 1.0, 4.0 * s)


def unit_g(d: int = 1) -> PairFunction:
    return PairFunction("one", lambda r: np.ones_like(r, dtype=float), d, 0.0, 1.0, 0.0)


def pair_function(name: str, d: int = 1, sigma: float = 1.0, a: float = 0.5, s: float = 1.0) -> PairFunction:
    if name in ("hard-rod", "hard-sphere"):
        return hard_sphere(sigma, d)
    if name == "gaussian":
        return gaussian(a, s, d)
    if name in ("one", "ideal"):
        return unit_g(d)
    raise ValidationError(f"unknown pair function {name!r}")


class KirkwoodFamily(CorrelationFamily):
    def __init__(self, rho: float, g: PairFunction, order: int):
        super().__init__(order, g.d, translation_invariant=True, xi=rho * math.sqrt(g.b))
        if rho <= 0:
            raise ValidationError("density must be positive")
        self.rho = float(rho)
        self.g = g

    def rho_n(self, pts):
        n = pts.shape[1]
        out = np.full(pts.shape[0], self.rho**n)
        for i in range(n):
            for j in range(i + 1, n):
                out = out * self.g.pair(pts[:, i, :] - pts[:, j, :])
        return out

    def subset_table(self, pts) -> list:
        """Build ``rho^(|S|)`` on every subset by adding one point at a time."""
        pts = _as_pts(pts)
        m = pts.shape[1]
        if m > self.order:
            raise ValidationError(f"order {m} exceeds {self.order}")
        gm = {(i, j): self.g.pair(pts[:, i, :] - pts[:, j, :]) for i in range(m) for j in range(i + 1, m)}
        table: list = [np.ones(pts.shape[0])]
        for mask in range(1, 1 << m):
            top = mask.bit_length() - 1
            rest = mask ^ (1 << top)
            val = table[rest] * self.rho
            for j in range(top):
                if rest >> j & 1:
                    val = val * gm[(j, top)]
            table.append(val)
        return table


def existence_radius(g: PairFunction) -> float:
    return math.inf if g.C_g == 0 else 1.0 / (math.e * g.b * g.C_g)


def kirkwood_family(rho: float, g: PairFunction, K: int) -> KirkwoodFamily:
    """``rho^(n)(x_n) = rho^n prod_{i<j} g(x_i - x_j)``; warns outside ``rho < 1/(e b C_g)``."""
    if not rho < existence_radius(g):
        warnings.warn(
            f"rho={rho} outside the closure existence region rho < {existence_radius(g):.6g}",
            stacklevel=2,
        )
    return KirkwoodFamily(rho, g, K)


def tilde_closed_form(g: PairFunction, rhoT: TruncatedFamily, k: int) -> Callable[[np.ndarray], np.ndarray]:
    """Kernel ``(x, y_k) -> (prod_m g(x - y_m) - 1) rho_T^(k)(y_k)``, the tilde kernel over ``rho``."""
    if k < 1:
        raise ValidationError("k must be >= 1")

    def kernel(pts):
        pts = _as_pts(pts)
        if pts.shape[1] != k + 1:
            raise ValidationError(f"expected {k + 1} points")
        prod = np.ones(pts.shape[0])
        for m in range(1, k + 1):
            prod = prod * g.pair(pts[:, 0, :] - pts[:, m, :])
        return (prod - 1.0) * rhoT(pts[:, 1:, :])

    return kernel


@dataclass(frozen=True)
class ConnectedGraph:
    v: int
    edges: tuple[tuple[int, int], ...]


def _is_connected(v: int, edges) -> bool:
    parent = list(range(v))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        parent[find(i)] = find(j)
    return len({find(i) for i in range(v)}) == 1


def _cache_path(v: int) -> str | None:
    root = os.environ.get("ICX_CACHE_DIR")
    if not root:
        return None
    os.makedirs(root, exist_ok=True)
    return os.path.join(root, f"connected_graphs_v{v}.json")


def connected_graphs(v: int) -> list[ConnectedGraph]:
    """Every connected labelled simple graph on vertices ``0..v-1``.

    Brute force over edge subsets; tables are memoised in ``$ICX_CACHE_DIR``
    when that variable is set.
    """
    if v < 1:
        raise ValidationError("v must be >= 1")
    if v > MAX_GRAPH_VERTICES:
        raise SizeLimitError(f"graph enumeration capped at {MAX_GRAPH_VERTICES} vertices")
    path = _cache_path(v)
    if path and os.path.exists(path):
        with open(path) as fh:
            return [ConnectedGraph(v, tuple(tuple(e) for e in edges)) for edges in json.load(fh)]
    pairs = list(itertools.combinations(range(v), 2))
    out = []
    for bits in range(1 << len(pairs)):
        edges = tuple(p for i, p in enumerate(pairs) if bits >> i & 1)
        if _is_connected(v, edges):
            out.append(ConnectedGraph(v, edges))
    if path:
        with open(path, "w") as fh:
            json.dump([list(map(list, gr.edges)) for gr in out], fh)
    return out


def connected_graph_sum(g: PairFunction, k: int) -> Callable[[np.ndarray], np.ndarray]:
    """Kernel ``sum_{C in C_{k+1}} prod_{(i,j) in E(C)} (g(y_i - y_j) - 1)`` on ``(x, y_k)``."""
    graphs = connected_graphs(k + 1)

    def kernel(pts):
        pts = _as_pts(pts)
        f = {}
        for i in range(k + 1):
            for j in range(i + 1, k + 1):
                f[(i, j)] = g.pair(pts[:, i, :] - pts[:, j, :]) - 1.0
        total = np.zeros(pts.shape[0])
        for gr in graphs:
            term = np.ones(pts.shape[0])
            for e in gr.edges:
                term = term * f[e]
            total = total + term
        return total

    return kernel


def mu_graph_expansion(rho: float, g: PairFunction, K: int, R: float,
                       config: IntegratorConfig | None = None, check_halved: bool = True) -> ExpansionReport:
    """Graph terms ``(-rho)^k/k! int sum_{C in C_{k+1}} prod_{E(C)} (g - 1) dy_k``.

    The report's ``notes`` carry the log-converted terms (see the module
    docstring); those are the ones comparable with the tilde expansion.
    """
    if K < 0:
        raise ValidationError("K must be >= 0")
    if K + 1 > MAX_GRAPH_VERTICES:
        raise SizeLimitError(f"order {K} needs graphs on {K + 1} vertices")
    config = config or IntegratorConfig()
    check_quad_budget(config, g.d, K)
    domain = Domain.ball(R, g.d)
    terms, errs, halved = [], [], []
    for k in range(1, K + 1):
        kern = connected_graph_sum(g, k)
        scale = rho**k
        t, e = rooted_term(kern, g.d, domain, k, config)
        terms.append(t * scale)
        errs.append(e * scale)
        if check_halved:
            halved.append(rooted_term(kern, g.d, domain.halved(), k, config)[0] * scale)
        else:
            halved.append(terms[-1])
    report = ExpansionReport(math.log(rho), terms, errs, halved, R)
    report.notes.append("graph terms expand e^mu/rho; log-converted terms in diagnostics['mu_terms_from_log']")
    report.diagnostics["mu_terms_from_log"] = graph_series_log(terms)
    return report


def graph_series_log(graph_terms: list) -> list:
    """Order-by-order ``log(1 + sum_k c_k)`` for graph terms ``c_1..c_K``.

    Term ``k`` of the graph series is homogeneous of degree ``k`` in the
    density, so the formal logarithm in a grading parameter is well defined.
    """
    if not graph_terms:
        return []
    return GradedSeries([1.0] + list(graph_terms)).log().coeffs[1:]


@dataclass(frozen=True)
class ExistenceBound:
    exists: bool
    margin: float
    bound: float
    strict_bound: float
    strictly_inside: bool


def existence_bound(rho: float, g: PairFunction, D: float = 1.0) -> ExistenceBound:
    """``rho < 1/(e b C_g)`` (strict) plus the expansion radius ``1/((2 + zeta D) e b C_g)``."""
    bound = existence_radius(g)
    strict = math.inf if g.C_g == 0 else 1.0 / ((2.0 + ZETA * D) * math.e * g.b * g.C_g)
    return ExistenceBound(rho < bound, bound - rho, bound, strict, rho < strict)
