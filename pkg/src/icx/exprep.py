"""Exponential representation on the partition lattice.

Two transforms are inverse to each other:

* ``phi = lattice_exp(F)``: ``phi(S) = sum over partitions of S of prod F(block)``
* ``F = lattice_log(phi)``: the unique family reproducing ``phi``

Both are evaluated with the first-block factorisation
``phi(S) = sum_{A contains min S} F(A) phi(S \\ A)``, which visits every set
partition exactly once. Values may be ints, Fractions, floats or numpy arrays
(one entry per evaluation point), so the same code serves the exact site
checks and the vectorised continuum integrands.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Sequence

import numpy as np

from .errors import SizeLimitError, ValidationError
from .partitions import DEFAULT_PARTITION_CAP

MAX_SITES = 6
MAX_ORDER = 8


def _submasks_with_lowest(mask: int):
    low = mask & -mask
    rest = mask ^ low
    sub = rest
    while True:
        yield sub | low
        if sub == 0:
            return
        sub = (sub - 1) & rest


def lattice_exp(F: Sequence[Any], m: int) -> list[Any]:
    """Partition sums over every subset of an ``m``-element ground set.

    ``F[mask]`` holds the family value on the subset encoded by ``mask``
    (``F[0]`` is ignored). Returns ``phi`` with ``phi[0] = 1``.
    """
    phi: list[Any] = [None] * (1 << m)
    phi[0] = 1
    for mask in range(1, 1 << m):
        acc = None
        for A in _submasks_with_lowest(mask):
            term = F[A] if A == mask else F[A] * phi[mask ^ A]
            acc = term if acc is None else acc + term
        phi[mask] = acc
    return phi


def lattice_log(phi: Sequence[Any], m: int) -> list[Any]:
    """Inverse of :func:`lattice_exp` (``phi[0]`` must be 1)."""
    F: list[Any] = [None] * (1 << m)
    for mask in range(1, 1 << m):
        acc = phi[mask]
        for A in _submasks_with_lowest(mask):
            if A != mask:
                acc = acc - F[A] * phi[mask ^ A]
        F[mask] = acc
    return F


def subset_points(points: tuple, mask: int) -> tuple:
    return tuple(p for i, p in enumerate(points) if mask >> i & 1)


@dataclass
class SymmetricKernelFamily:
    """Symmetric functions ``F_1..F_K`` evaluated on tuples of points.

    ``kernel(points)`` returns ``F_n(points)`` with ``n = len(points)``;
    ``F_0 = 1`` by convention.
    """

    order: int
    kernel: Callable[[tuple], Any]
    f0_is_one: bool = True

    def __call__(self, points: tuple) -> Any:
        n = len(points)
        if n == 0:
            return 1
        if n > self.order:
            raise ValidationError(f"family of order {self.order} evaluated at {n} points")
        return self.kernel(tuple(points))


def phi_from_family(F: SymmetricKernelFamily, eta: tuple, cap: int | None = None) -> Any:
    """``Phi(eta) = sum_k sum_{pi in Pi_k(eta)} prod_i F_{|pi_i|}(pi_i)``."""
    m = len(eta)
    if m < 1:
        raise ValidationError("eta must contain at least one point")
    if m > (DEFAULT_PARTITION_CAP if cap is None else cap):
        raise SizeLimitError(f"{m} points exceed the partition cap")
    vals = [None] + [F(subset_points(eta, mask)) for mask in range(1, 1 << m)]
    return lattice_exp(vals, m)[-1]


def family_from_phi(Phi: Callable[[tuple], Any], K: int) -> SymmetricKernelFamily:
    """The family whose partition sums reproduce ``Phi`` up to order ``K``."""
    if K < 1:
        raise ValidationError("K must be >= 1")

    def kernel(points: tuple):
        m = len(points)
        if m > DEFAULT_PARTITION_CAP:
            raise SizeLimitError(f"{m} points exceed the partition cap")
        vals = [1] + [Phi(subset_points(points, mask)) for mask in range(1, 1 << m)]
        return lattice_log(vals, m)[-1]

    return SymmetricKernelFamily(K, kernel)


class GradedSeries:
    """Truncated power series ``c_0 + c_1 t + ... + c_K t^K``.

    Coefficients may be any field elements (Fraction, float). Nothing above
    order ``K`` is ever computed.
    """

    def __init__(self, coeffs: Sequence[Any], order: int | None = None):
        order = len(coeffs) - 1 if order is None else order
        c = list(coeffs[: order + 1])
        c += [0] * (order + 1 - len(c))
        self.coeffs = c
        self.order = order

    def __len__(self):
        return self.order + 1

    def __getitem__(self, n):
        return self.coeffs[n]

    def __add__(self, other: "GradedSeries") -> "GradedSeries":
        K = min(self.order, other.order)
        return GradedSeries([self[n] + other[n] for n in range(K + 1)])

    def __sub__(self, other: "GradedSeries") -> "GradedSeries":
        K = min(self.order, other.order)
        return GradedSeries([self[n] - other[n] for n in range(K + 1)])

    def __mul__(self, other: "GradedSeries") -> "GradedSeries":
        K = min(self.order, other.order)
        out = []
        for n in range(K + 1):
            acc = 0
            for i in range(n + 1):
                acc = acc + self[i] * other[n - i]
            out.append(acc)
        return GradedSeries(out)

    def graded(self, lam) -> "GradedSeries":
        """Substitute ``t -> lam t``."""
        return GradedSeries([c * lam**n for n, c in enumerate(self.coeffs)])

    def exp(self) -> "GradedSeries":
        """``exp`` of a series with zero constant term."""
        if self[0] != 0:
            raise ValidationError("exp needs a zero constant term")
        out: list[Any] = [1]
        for n in range(1, self.order + 1):
            acc = 0
            for k in range(1, n + 1):
                acc = acc + k * self[k] * out[n - k]
            out.append(acc / n if not isinstance(acc, int) else Fraction(acc, n))
        return GradedSeries(out)

    def log(self) -> "GradedSeries":
        """``log`` of a series with unit constant term."""
        if self[0] != 1:
            raise ValidationError("log needs a unit constant term")
        out: list[Any] = [0]
        for n in range(1, self.order + 1):
            acc = n * self[n]
            for k in range(1, n):
                acc = acc - k * out[k] * self[n - k]
            out.append(acc / n if not isinstance(acc, int) else Fraction(acc, n))
        return GradedSeries(out)

    def __repr__(self):
        return f"GradedSeries({self.coeffs!r})"


@dataclass
class SiteSpace:
    """Finite weighted site set standing in for a bounded window.

    ``coords`` has shape ``(n_sites, d)``; ``weights`` are the quadrature
    weights, their sum playing the role of the window volume.
    """

    coords: np.ndarray
    weights: Sequence[Any]

    def __post_init__(self):
        self.coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        if len(self.weights) != len(self.coords):
            raise ValidationError("one weight per site")
        if any(w <= 0 for w in self.weights):
            raise ValidationError("site weights must be positive")

    @property
    def n_sites(self) -> int:
        return len(self.weights)

    @property
    def volume(self):
        return sum(self.weights)

    @property
    def d(self) -> int:
        return self.coords.shape[1]


def multisets(n_sites: int, n: int):
    """Count vectors of all size-``n`` multisets over ``n_sites`` sites."""
    for combo in itertools.combinations_with_replacement(range(n_sites), n):
        counts = [0] * n_sites
        for s in combo:
            counts[s] += 1
        yield tuple(counts)


def _as_sites(counts: tuple) -> tuple:
    return tuple(s for s, c in enumerate(counts) for _ in range(c))


def _one(x):
    return Fraction(1) if isinstance(x, (int, Fraction)) else 1.0


def _phi_over_multisets(F: SymmetricKernelFamily, n_sites: int, K: int) -> dict:
    """Partition sums of a site family for every multiset of size <= K.

    Labels of repeated sites are distinct elements of the ground set, so a
    block is counted once per choice of positions: fixing one copy of the
    smallest site, a sub-multiset ``a`` of ``M`` arises in
    ``C(M_s0 - 1, a_s0 - 1) prod_{s != s0} C(M_s, a_s)`` ways.
    """
    fvals: dict = {}
    phi: dict = {tuple([0] * n_sites): 1}
    for n in range(1, K + 1):
        for M in multisets(n_sites, n):
            fvals[M] = F(_as_sites(M))
    for n in range(1, K + 1):
        for M in multisets(n_sites, n):
            s0 = next(s for s, c in enumerate(M) if c)
            ranges = [range(1, M[s] + 1) if s == s0 else range(M[s] + 1) for s in range(n_sites)]
            acc = 0
            for a in itertools.product(*ranges):
                ways = math.comb(M[s0] - 1, a[s0] - 1)
                for s in range(n_sites):
                    if s != s0:
                        ways *= math.comb(M[s], a[s])
                rest = tuple(m - x for m, x in zip(M, a))
                acc = acc + ways * fvals[a] * phi[rest]
            phi[M] = acc
    return phi


def _weighted_multiset_sum(values: dict, weights: Sequence[Any], n: int, n_sites: int):
    """``(1/n!) sum over S^n of prod(weights) * value`` via multiset grouping."""
    acc = 0
    for M in multisets(n_sites, n):
        w = 1
        denom = 1
        for s, c in enumerate(M):
            w = w * weights[s] ** c
            denom *= math.factorial(c)
        coef = w / denom if not isinstance(w, int) else Fraction(w, denom)
        acc = acc + coef * values[M]
    return acc


@dataclass
class ExpIdentityReport:
    order: int
    lhs: list
    rhs: list
    residual: list
    scale: list = field(default_factory=list)

    @property
    def max_residual(self):
        return max(self.residual)

    def to_json(self) -> dict:
        return {
            "order": self.order,
            "lhs": [float(x) for x in self.lhs],
            "rhs": [float(x) for x in self.rhs],
            "residual": [float(x) for x in self.residual],
        }


def verify_exp_identity(F: SymmetricKernelFamily, S: SiteSpace, K: int) -> ExpIdentityReport:
    """Check ``sum_n (1/n!) int Phi = exp(sum_n (1/n!) int F_n)`` order by order.

    Grading ``F_n -> t^n F_n`` makes both sides formal series in ``t``; the
    coefficient of ``t^n`` on the left is the weighted sum of ``Phi`` over
    ``S^n`` divided by ``n!``. Exact inputs give exact residuals (all zero);
    float inputs report ``|lhs - rhs|`` relative to the same left side built
    from ``|F_n|``.
    """
    if K < 1 or K > MAX_ORDER:
        raise SizeLimitError(f"order K={K} outside 1..{MAX_ORDER}")
    if S.n_sites > MAX_SITES:
        raise SizeLimitError(f"{S.n_sites} sites exceed the cap of {MAX_SITES}")
    if K > F.order:
        raise ValidationError("family order below the requested check order")
    ns = S.n_sites
    phi = _phi_over_multisets(F, ns, K)
    fvals = {M: F(_as_sites(M)) for n in range(1, K + 1) for M in multisets(ns, n)}
    one = _one(S.weights[0])
    lhs = [one] + [_weighted_multiset_sum(phi, S.weights, n, ns) for n in range(1, K + 1)]
    L = GradedSeries([0] + [_weighted_multiset_sum(fvals, S.weights, n, ns) for n in range(1, K + 1)])
    rhs = L.exp().coeffs
    exact = all(isinstance(x, (int, Fraction)) for x in lhs + rhs)
    if exact:
        residual = [abs(a - b) for a, b in zip(lhs, rhs)]
        scale = [Fraction(1)] * (K + 1)
    else:
        absF = SymmetricKernelFamily(F.order, lambda pts: abs(F(pts)))
        abs_phi = _phi_over_multisets(absF, ns, K)
        scale = [1.0] + [float(_weighted_multiset_sum(abs_phi, S.weights, n, ns)) for n in range(1, K + 1)]
        residual = [
            abs(float(a) - float(b)) / s if s > 0 else abs(float(a) - float(b))
            for a, b, s in zip(lhs, rhs, scale)
        ]
    return ExpIdentityReport(K, lhs, rhs, residual, scale)


def table_family(table: dict, order: int) -> SymmetricKernelFamily:
    """Site family looked up from ``{sorted site tuple: value}``."""
    return SymmetricKernelFamily(order, lambda pts: table[tuple(sorted(pts))])


def random_site_family(n_sites: int, K: int, rng: np.random.Generator, exact: bool = False,
                       scale: float = 1.0) -> SymmetricKernelFamily:
    """Random symmetric family on ``n_sites`` sites: one value per multiset."""
    table = {}
    for n in range(1, K + 1):
        for combo in itertools.combinations_with_replacement(range(n_sites), n):
            if exact:
                table[combo] = Fraction(int(rng.integers(-20, 21)), int(rng.integers(1, 11)))
            else:
                table[combo] = float(scale * rng.uniform(-1.0, 1.0))
    return table_family(table, K)


def random_site_space(n_sites: int, rng: np.random.Generator, exact: bool = False, d: int = 1) -> SiteSpace:
    coords = rng.uniform(0.0, 1.0, size=(n_sites, d))
    if exact:
        weights = [Fraction(int(rng.integers(1, 6)), int(rng.integers(1, 6))) for _ in range(n_sites)]
    else:
        weights = list(rng.uniform(0.1, 1.0, size=n_sites))
    return SiteSpace(coords, weights)


@dataclass
class ExpBoundFit:
    D: float
    c: float
    satisfied: bool
    integrals: list


def fit_expbound(F: SymmetricKernelFamily, S: SiteSpace, K: int | None = None) -> ExpBoundFit:
    """Fit ``int_{S^n} |F_n| <= |S| n! D c^n`` on the available orders.

    ``D`` comes from a least-squares line through ``log(I_n / (|S| n!))``
    against ``n``; ``c`` is then the smallest value making the bound hold at
    every order for that ``D``. All-zero integrals give ``D = c = 0``.
    """
    K = F.order if K is None else K
    if K < 2:
        raise ValidationError("fit_expbound needs at least two orders")
    ns = S.n_sites
    vol = float(S.volume)
    absF = {M: abs(float(F(_as_sites(M)))) for n in range(1, K + 1) for M in multisets(ns, n)}
    w = [float(x) for x in S.weights]
    # _weighted_multiset_sum divides by n!; undo it to get the tuple sum
    I = [float(_weighted_multiset_sum(absF, w, n, ns)) * math.factorial(n) for n in range(1, K + 1)]
    if all(x == 0.0 for x in I):
        return ExpBoundFit(0.0, 0.0, True, I)
    pos = [(n, x) for n, x in zip(range(1, K + 1), I) if x > 0]
    if len(pos) < 2:
        n, x = pos[0]
        D = x / (vol * math.factorial(n))
    else:
        ns_ = np.array([p[0] for p in pos], dtype=float)
        ys = np.array([math.log(p[1] / (vol * math.factorial(p[0]))) for p in pos])
        slope, intercept = np.polyfit(ns_, ys, 1)
        D = math.exp(intercept)
    c = max((x / (vol * math.factorial(n) * D)) ** (1.0 / n) for n, x in zip(range(1, K + 1), I))
    return ExpBoundFit(D, c, c < 0.5, I)
