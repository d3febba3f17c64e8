"""Set partitions, Bell polynomials, total partitions and convergence constants.

Everything here is exact (Python ints, ``fractions.Fraction`` or the small
bivariate :class:`Poly`); floats only appear in the convergence constants,
where the irrational ``ZETA`` enters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Any, Iterator, Sequence

from .errors import SizeLimitError, ValidationError

DEFAULT_PARTITION_CAP = 12

ZETA = 1.0 / (2.0 * math.log(2.0) - 1.0)


@dataclass(frozen=True)
class SetPartition:
    """Partition of ``{1..n}``; blocks sorted by their minimum element."""

    n: int
    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        seen = [x for b in self.blocks for x in b]
        if any(len(b) == 0 for b in self.blocks):
            raise ValidationError("empty block")
        if sorted(seen) != list(range(1, self.n + 1)):
            raise ValidationError(f"blocks {self.blocks} do not partition 1..{self.n}")
        if [b[0] for b in self.blocks] != sorted(b[0] for b in self.blocks):
            raise ValidationError("blocks not in canonical order")

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    def __len__(self):
        return len(self.blocks)

    @classmethod
    def from_rgs(cls, rgs: Sequence[int]) -> "SetPartition":
        blocks: list[list[int]] = []
        for i, label in enumerate(rgs, start=1):
            if label == len(blocks):
                blocks.append([])
            blocks[label].append(i)
        return cls(len(rgs), tuple(tuple(b) for b in blocks))


def _check_cap(n: int, cap: int | None):
    cap = DEFAULT_PARTITION_CAP if cap is None else cap
    if n > cap:
        raise SizeLimitError(f"partition enumeration of n={n} exceeds cap {cap}")


def restricted_growth_strings(n: int, cap: int | None = None) -> Iterator[list[int]]:
    """Yield restricted growth strings of length ``n`` in lexicographic order.

    ``a[0] = 0`` and ``a[i] <= 1 + max(a[:i])``. The yielded list is reused
    between iterations; copy it if you keep it.
    """
    if n <= 0:
        return
    _check_cap(n, cap)
    a = [0] * n
    b = [1] * n  # b[i] = 1 + max(a[:i])
    while True:
        yield a
        i = n - 1
        while i > 0 and a[i] == b[i]:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        nb = max(b[i], a[i] + 1)
        for j in range(i + 1, n):
            a[j] = 0
            b[j] = nb


def enumerate_partitions(n: int, k: int | None = None, cap: int | None = None) -> Iterator[SetPartition]:
    """Stream every partition of ``{1..n}`` (into exactly ``k`` blocks if given).

    Partitions come out in restricted-growth-string order. ``n = 0`` yields
    nothing; ``n`` above ``cap`` (default 12) raises :class:`SizeLimitError`.
    """
    if n <= 0:
        return
    if k is not None and not 1 <= k <= n:
        raise ValidationError(f"block count k={k} outside 1..{n}")
    for rgs in restricted_growth_strings(n, cap):
        if k is None or max(rgs) + 1 == k:
            yield SetPartition.from_rgs(rgs)


def stirling2(n: int, k: int) -> int:
    return _stirling2(n, k)


@lru_cache(maxsize=None)
def _stirling2(n: int, k: int) -> int:
    if n == k:
        return 1
    if k == 0 or k > n:
        return 0
    return k * _stirling2(n - 1, k) + _stirling2(n - 1, k - 1)


def bell_number(n: int) -> int:
    return sum(stirling2(n, k) for k in range(n + 1))


def bell_polynomial(xs: Sequence[Any]) -> Any:
    """Complete Bell polynomial ``B_k(x_1..x_k)`` via the binomial recursion.

    ``B_{j+1} = sum_i C(j, i) B_{j-i} x_{i+1}`` with ``B_0 = 1``. Works for any
    ring elements supporting ``+``, ``*`` and multiplication by ``int``.
    """
    if len(xs) < 1:
        raise ValidationError("bell_polynomial needs at least one argument")
    return bell_polynomials(xs)[-1]


def bell_polynomials(xs: Sequence[Any]) -> list[Any]:
    """Return ``[B_0, B_1, ..., B_k]`` for the arguments ``xs``."""
    k = len(xs)
    B: list[Any] = [1]
    for j in range(k):
        acc = None
        for i in range(j + 1):
            term = math.comb(j, i) * (B[j - i] * xs[i])
            acc = term if acc is None else acc + term
        B.append(acc)
    return B


def bell_polynomial_direct(xs: Sequence[Any], cap: int | None = None) -> Any:
    """Partition-sum definition ``sum_pi prod_blocks x_|block|`` (slow; oracle)."""
    total = None
    for rgs in restricted_growth_strings(len(xs), cap):
        sizes = [0] * (max(rgs) + 1)
        for label in rgs:
            sizes[label] += 1
        term = None
        for s in sizes:
            term = xs[s - 1] if term is None else term * xs[s - 1]
        total = term if total is None else total + term
    return total


def total_partition_sequence(m_max: int) -> list[int]:
    """``b_0..b_{m_max}`` from ``b_0 = 0, b_1 = b_2 = 1`` and, for ``v >= 2``,
    ``b_{v+1} = (v+2) b_v + 2 sum_{j=2}^{v-1} C(v, j) b_j b_{v-j+1}``."""
    if m_max < 0:
        raise ValidationError("m_max must be >= 0")
    b = [0, 1, 1]
    for v in range(2, m_max):
        s = sum(math.comb(v, j) * b[j] * b[v - j + 1] for j in range(2, v))
        b.append((v + 2) * b[v] + 2 * s)
    return b[: m_max + 1]


def enumerate_total_partitions(m: int) -> set:
    """All total partitions (hierarchies) of ``{1..m}`` as nested frozensets.

    A leaf is an element; an internal node is a frozenset of at least two
    children whose leaves partition the node's ground set.
    """
    if m < 1:
        return set()
    if m > 7:
        raise SizeLimitError("structural enumeration of total partitions is capped at m = 7")
    return _hierarchies(frozenset(range(1, m + 1)))


@lru_cache(maxsize=None)
def _hierarchies(ground: frozenset) -> set:
    items = sorted(ground)
    if len(items) == 1:
        return {items[0]}
    out = set()
    for rgs in restricted_growth_strings(len(items)):
        if max(rgs) == 0:
            continue
        blocks: list[list[int]] = [[] for _ in range(max(rgs) + 1)]
        for label, x in zip(rgs, items):
            blocks[label].append(x)
        choices: list[set] = [_hierarchies(frozenset(b)) for b in blocks]
        combos: list[tuple] = [()]
        for ch in choices:
            combos = [c + (h,) for c in combos for h in ch]
        out.update(frozenset(c) for c in combos)
    return out


@dataclass(frozen=True)
class Poly:
    """Polynomial in ``D`` and ``q`` with exact coefficients: ``{(i, j): c}`` for ``c D^i q^j``."""

    terms: dict = field(default_factory=dict)

    @classmethod
    def D(cls) -> "Poly":
        return cls({(1, 0): Fraction(1)})

    @classmethod
    def q(cls) -> "Poly":
        return cls({(0, 1): Fraction(1)})

    @staticmethod
    def _lift(other) -> "Poly":
        if isinstance(other, Poly):
            return other
        if other == 0:
            return Poly({})
        return Poly({(0, 0): Fraction(other)})

    def __add__(self, other):
        other = self._lift(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0) + c
        return Poly({m: c for m, c in out.items() if c != 0})

    __radd__ = __add__

    def __neg__(self):
        return Poly({m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __mul__(self, other):
        other = self._lift(other)
        out: dict = {}
        for (i1, j1), c1 in self.terms.items():
            for (i2, j2), c2 in other.terms.items():
                m = (i1 + i2, j1 + j2)
                out[m] = out.get(m, 0) + c1 * c2
        return Poly({m: c for m, c in out.items() if c != 0})

    __rmul__ = __mul__

    def __pow__(self, n: int):
        out = Poly({(0, 0): Fraction(1)})
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, Poly):
            other = self._lift(other)
        return self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def coefficient(self, d_pow: int, q_pow: int) -> Fraction:
        return self.terms.get((d_pow, q_pow), Fraction(0))

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = [f"{c}*D^{i}*q^{j}" for (i, j), c in sorted(self.terms.items())]
        return " + ".join(parts)


def w_sequence(k_max: int, D: Any, q: Any) -> list[Any]:
    """``[w_1, ..., w_kmax]`` with ``w_1 = D q`` and ``w_k = B_k(w_1..w_{k-1}, k! D q^k)``."""
    if k_max < 1:
        raise ValidationError("k must be >= 1")
    w = [D * q]
    for k in range(2, k_max + 1):
        w.append(bell_polynomial(w + [math.factorial(k) * D * q**k]))
    return w


def w_bound(k: int, D: Any, q: Any) -> Any:
    return w_sequence(k, D, q)[-1]


def a_coefficient(nu: int, k: int) -> int:
    """``(k!/nu!) C(k-1, nu-1) b_nu``; zero when ``nu = 0`` or ``nu > k``."""
    if nu <= 0 or nu > k:
        return 0
    b = total_partition_sequence(nu)[nu]
    return math.factorial(k) // math.factorial(nu) * math.comb(k - 1, nu - 1) * b


def coefficient_expansion(k: int) -> Poly:
    """``q^k sum_nu a_nu^(k) D^nu`` as an exact :class:`Poly`."""
    return Poly({(nu, k): Fraction(a_coefficient(nu, k)) for nu in range(1, k + 1)})


def q0(D: float) -> float:
    if D < 0:
        raise ValidationError("D must be non-negative")
    return 1.0 / (2.0 * (2.0 + ZETA * D))


def calibrate_M(m_max: int = 20) -> float:
    """Smallest ``M`` with ``b_m <= M m^(m-1) zeta^m e^-m`` for ``1 <= m <= m_max``."""
    b = total_partition_sequence(m_max)
    return max(
        b[m] * math.exp(m) / (m ** (m - 1) * ZETA**m) for m in range(1, m_max + 1)
    )


@dataclass(frozen=True)
class ConvergenceConstants:
    D: float
    q: float
    M: float = field(default_factory=calibrate_M)

    def __post_init__(self):
        if self.D < 0 or self.q < 0 or self.M <= 0:
            raise ValidationError("D, q must be >= 0 and M > 0")

    @property
    def zeta(self) -> float:
        return ZETA

    @property
    def q0(self) -> float:
        return q0(self.D)

    @property
    def convergent(self) -> bool:
        return self.q < self.q0


def tilde_integral_bound(k: int, c: ConvergenceConstants) -> float:
    """Upper bound ``(k-1)! M (1 + zeta D)^k q^k`` on the order-k tilde integral."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    return math.factorial(k - 1) * c.M * (1.0 + ZETA * c.D) ** k * c.q**k


def coefficient_sum(k: int, D: Any) -> Any:
    """``sum_nu C(k, nu) (k-1)!/(nu-1)! b_nu D^nu``, the exact left side of the M-bound."""
    b = total_partition_sequence(k)
    total = 0
    for nu in range(1, k + 1):
        total = total + math.comb(k, nu) * (math.factorial(k - 1) // math.factorial(nu - 1)) * b[nu] * D**nu
    return total


@dataclass(frozen=True)
class SuperstableConstants:
    qbar: Any
    D: float
    q: Any
    admissible: bool
    convergent: bool
    activity_limit: float
    note: str = (
        "D read as e^mu e^-2B/(1-2 qbar); the two-fraction product with the shared "
        "(1-qbar) factor reduces to the same value"
    )


def superstable_constants(mu: float | None, B: float, C_u: float, *, qbar: Any = None) -> SuperstableConstants:
    """Assumption-B constants for a superstable pair interaction at activity ``e^mu``.

    ``qbar = e^mu e^(2B+1) C_u``; ``D = e^mu e^-2B / (1 - 2 qbar)``;
    ``q = qbar / (1 - qbar)``. Pass ``qbar`` (an exact ``Fraction`` is fine)
    instead of ``mu`` to pin the dimensionless activity directly. For
    ``qbar >= 1/2`` the constants are undefined: ``D`` and ``q`` come back as
    NaN and the result is inadmissible.
    """
    if B <= 0 or C_u <= 0:
        raise ValidationError("B and C_u must be positive")
    scale = math.exp(2 * B + 1) * C_u
    if qbar is None:
        if mu is None:
            raise ValidationError("give mu or qbar")
        qbar = math.exp(mu) * scale
    else:
        mu = math.log(float(qbar) / scale)
    z = math.exp(mu)
    if qbar >= Fraction(1, 2):
        return SuperstableConstants(qbar, math.nan, math.nan, False, False, 0.0)
    D = z * math.exp(-2 * B) / (1 - 2 * float(qbar))
    q = qbar / (1 - qbar)
    other = 1.0 / (1.0 + 2.0 / (2.0 + ZETA * D))
    admissible = qbar < Fraction(1, 3) and qbar < other
    limit = min(1.0 / 3.0, other)
    return SuperstableConstants(qbar, D, q, bool(admissible), bool(float(q) < q0(D)), limit / scale)
