"""Algebra of correlation families.

Kernels are vectorised: a family evaluated on ``pts`` of shape ``(B, n, d)``
returns the ``n``-point function at each of the ``B`` tuples. Every derived
family (truncated, F, tilde) is computed on demand from subset tables with
the partition-lattice transforms in :mod:`icx.exprep`.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    DegenerateDensityError,
    FitUndeterminedError,
    SizeLimitError,
    UnsupportedFamilyError,
    ValidationError,
)
from .exprep import GradedSeries, lattice_exp, lattice_log
from .integrators import Domain, IntegratorConfig, check_quad_budget, integrate
from .partitions import q0

CONTINUUM_ORDER_CAP = 7
R_DOUBLING_TOL = 0.01


def _as_pts(pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 2:
        pts = pts[None]
    if pts.ndim != 3:
        raise ValidationError("points must have shape (batch, n, d)")
    return pts


def _masks_indices(m: int) -> list[list[int]]:
    return [[i for i in range(m) if mask >> i & 1] for mask in range(1 << m)]


class CorrelationFamily:
    """Correlation functions ``rho^(1..K)`` with ``rho^(0) = 1``."""

    def __init__(self, order: int, d: int = 1, translation_invariant: bool = False,
                 xi: float | None = None):
        if order < 1:
            raise ValidationError("order must be >= 1")
        self.order = order
        self.d = d
        self.translation_invariant = translation_invariant
        self.xi = xi

    def rho_n(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def density(self) -> float:
        """The constant ``rho`` of a translation-invariant family."""
        if not self.translation_invariant:
            raise UnsupportedFamilyError("density is only constant for translation-invariant families")
        return float(self(np.zeros((1, 1, self.d)))[0])

    def __call__(self, pts) -> np.ndarray:
        pts = _as_pts(pts)
        n = pts.shape[1]
        if n == 0:
            return np.ones(pts.shape[0])
        if n > self.order:
            raise ValidationError(f"order-{n} correlation requested from a family of order {self.order}")
        return self.rho_n(pts)

    def subset_table(self, pts) -> list:
        """``rho^(|S|)`` on every subset ``S`` of the tuple (index = bitmask)."""
        pts = _as_pts(pts)
        m = pts.shape[1]
        table: list = [np.ones(pts.shape[0])]
        for idx in _masks_indices(m)[1:]:
            table.append(self(pts[:, idx, :]))
        return table


class PoissonFamily(CorrelationFamily):
    def __init__(self, rho: float, order: int = 8, d: int = 1):
        if rho <= 0:
            raise DegenerateDensityError("Poisson density must be positive")
        super().__init__(order, d, translation_invariant=True, xi=rho)
        self.rho = float(rho)

    def rho_n(self, pts):
        return np.full(pts.shape[0], self.rho ** pts.shape[1])


class KernelFamily(CorrelationFamily):
    """Family given by one vectorised callable ``kernel(pts) -> (B,)``."""

    def __init__(self, kernel: Callable[[np.ndarray], np.ndarray], order: int, d: int = 1,
                 translation_invariant: bool = False, xi: float | None = None):
        super().__init__(order, d, translation_invariant, xi)
        self.kernel = kernel

    def rho_n(self, pts):
        return np.asarray(self.kernel(pts), dtype=float)


def _promote(table: list, extended: bool) -> list:
    """Cast a subset table to long double, which absorbs cancellation in the lattice sums."""
    if not extended:
        return table
    return [np.asarray(v, dtype=np.longdouble) for v in table]


def _root_density(table: list) -> np.ndarray:
    rho_x = table[1]
    if np.any(rho_x == 0):
        raise DegenerateDensityError("density vanishes at the root point")
    return rho_x


class TruncatedFamily:
    """Truncated (Ursell) functions ``rho_T^(1..K)``, ``rho_T^(1) = rho``.

    Built either from a :class:`CorrelationFamily` (``source``) or from an
    explicit vectorised ``kernel``.
    """

    def __init__(self, order: int, d: int = 1, *, source: CorrelationFamily | None = None,
                 kernel: Callable | None = None, translation_invariant: bool | None = None,
                 extended: bool = False):
        if (source is None) == (kernel is None):
            raise ValidationError("give exactly one of source or kernel")
        self.order = order
        self.d = d
        self.source = source
        self.kernel = kernel
        if translation_invariant is None:
            translation_invariant = bool(source and source.translation_invariant)
        self.translation_invariant = translation_invariant
        self.extended = extended

    def subset_table(self, pts) -> list:
        pts = _as_pts(pts)
        m = pts.shape[1]
        if m > self.order:
            raise ValidationError(f"order-{m} truncated function requested from order {self.order}")
        if self.source is not None:
            return lattice_log(_promote(self.source.subset_table(pts), self.extended), m)
        table: list = [np.ones(pts.shape[0])]
        for idx in _masks_indices(m)[1:]:
            table.append(np.asarray(self.kernel(pts[:, idx, :]), dtype=float))
        return table

    def __call__(self, pts) -> np.ndarray:
        pts = _as_pts(pts)
        if pts.shape[1] == 0:
            raise ValidationError("truncated functions start at order 1")
        if self.source is None:
            if pts.shape[1] > self.order:
                raise ValidationError("order exceeds truncation order")
            return np.asarray(self.kernel(pts), dtype=float)
        return self.subset_table(pts)[-1]

    @property
    def density(self) -> float:
        if not self.translation_invariant:
            raise UnsupportedFamilyError("density is only constant for translation-invariant families")
        return float(self(np.zeros((1, 1, self.d)))[0])


def truncate(rho: CorrelationFamily, extended: bool = False) -> TruncatedFamily:
    """``rho_T^(n) = rho^(n) - sum_{k>=2} sum_{pi in Pi_k} prod rho_T(pi_i)``.

    ``extended=True`` runs the lattice sums in long double.
    """
    if rho.order > CONTINUUM_ORDER_CAP:
        raise SizeLimitError(f"order {rho.order} exceeds the continuum cap {CONTINUUM_ORDER_CAP}")
    return TruncatedFamily(rho.order, rho.d, source=rho, extended=extended)


class _Untruncated(CorrelationFamily):
    def __init__(self, rhoT: TruncatedFamily):
        super().__init__(rhoT.order, rhoT.d, rhoT.translation_invariant)
        self.rhoT = rhoT

    def rho_n(self, pts):
        return lattice_exp(self.rhoT.subset_table(pts), pts.shape[1])[-1]

    def subset_table(self, pts):
        pts = _as_pts(pts)
        return lattice_exp(self.rhoT.subset_table(pts), pts.shape[1])


def untruncate(rhoT: TruncatedFamily) -> CorrelationFamily:
    """Inverse of :func:`truncate`: ``rho^(n) = sum over all partitions of prod rho_T``."""
    if rhoT.source is not None:
        return rhoT.source
    return _Untruncated(rhoT)


class _RootedFamily:
    """Family ``G_k(x, y_1..y_k)`` of kernels rooted at the first point."""

    def __init__(self, order: int, d: int, translation_invariant: bool):
        self.order = order
        self.d = d
        self.translation_invariant = translation_invariant

    def rooted_table(self, pts) -> list:
        raise NotImplementedError

    def __call__(self, pts) -> np.ndarray:
        """Evaluate at ``pts = (x, y_1..y_k)`` of shape ``(B, 1+k, d)``."""
        pts = _as_pts(pts)
        k = pts.shape[1] - 1
        if k < 1:
            raise ValidationError("rooted kernels need x and at least one y")
        if k > self.order:
            raise ValidationError(f"order {k} exceeds {self.order}")
        return self.rooted_table(pts)[-1]


class FFamily(_RootedFamily):
    """``F_1 = rho^(2)/rho`` and ``F_k = rho^(1+k)/rho - sum_{l>=2} sum_{Pi_l(y)} prod F``."""

    def __init__(self, rho: CorrelationFamily, extended: bool = False):
        if rho.order < 2:
            raise ValidationError("F family needs order >= 2")
        super().__init__(rho.order - 1, rho.d, rho.translation_invariant)
        self.rho = rho
        self.extended = extended

    def rooted_table(self, pts):
        pts = _as_pts(pts)
        k = pts.shape[1] - 1
        full = _promote(self.rho.subset_table(pts), self.extended)
        rho_x = _root_density(full)
        phi = [np.ones(pts.shape[0])] + [full[1 | (S << 1)] / rho_x for S in range(1, 1 << k)]
        return lattice_log(phi, k)


def f_family(rho: CorrelationFamily, extended: bool = False) -> FFamily:
    return FFamily(rho, extended)


class TildeFamily(_RootedFamily):
    """``tilde_1 = rho_T^(2)/rho``; ``tilde_k = rho_T^(1+k)/rho - sum_{l>=2} sum_{Pi_l(y)} prod tilde``.

    The division uses ``rho^(1)`` at the root point, which is the constant
    ``rho`` for translation-invariant input.
    """

    def __init__(self, rhoT: TruncatedFamily):
        if rhoT.order < 2:
            raise ValidationError("tilde family needs truncation order >= 2")
        super().__init__(rhoT.order - 1, rhoT.d, rhoT.translation_invariant)
        self.rhoT = rhoT

    def rooted_table(self, pts):
        pts = _as_pts(pts)
        k = pts.shape[1] - 1
        full = self.rhoT.subset_table(pts)
        rho_x = _root_density(full)
        phi = [np.ones(pts.shape[0])] + [full[1 | (S << 1)] / rho_x for S in range(1, 1 << k)]
        return lattice_log(phi, k)

    @property
    def density(self) -> float:
        return self.rhoT.density


def tilde_family(rhoT: TruncatedFamily) -> TildeFamily:
    return TildeFamily(rhoT)


def _rel(a: np.ndarray, b: np.ndarray, scale: np.ndarray) -> float:
    return float(np.max(np.abs(a - b) / np.maximum(scale, 1e-300)))


def split_check(rho: CorrelationFamily, n_probes: int = 20, rng: np.random.Generator | None = None,
                box: float = 2.0, k_max: int | None = None) -> dict[int, float]:
    """Max relative residual of ``F_k - rho_T^(k)(y) - tilde_k(x, y)`` per order.

    Probe tuples are uniform in ``[-box, box]^d``. Residuals are relative to
    ``|F_k| + |rho_T^(k)| + |tilde_k|`` pointwise. All three sides are
    computed in long double: at order 5 the partition sums cancel to about
    ``1e-10`` relative in double precision.
    """
    rng = rng or np.random.default_rng(0)
    rhoT = truncate(rho, extended=True)
    F = FFamily(rho, extended=True)
    T = TildeFamily(rhoT)
    k_max = rho.order - 1 if k_max is None else k_max
    out = {}
    for k in range(1, k_max + 1):
        pts = rng.uniform(-box, box, size=(n_probes, 1 + k, rho.d))
        fk = F(pts)
        tk = T(pts)
        rk = rhoT(pts[:, 1:, :])
        out[k] = _rel(fk, rk + tk, np.abs(fk) + np.abs(rk) + np.abs(tk))
    return out


@dataclass
class SeriesTerms:
    terms: list
    std_errs: list
    partial_sums: list


def janossy(rho: CorrelationFamily, space, n: int, K: int, x=None,
            config: IntegratorConfig | None = None) -> SeriesTerms:
    """Partial sums of ``j^(n)(x) = sum_k (-1)^k/k! int_{Lambda^k} rho^(n+k)(x, y_k)``."""
    if n < 0 or K < 0:
        raise ValidationError("n and K must be >= 0")
    if n + K > rho.order:
        raise ValidationError(f"need correlations up to order {n + K}, family has {rho.order}")
    d = rho.d
    x = np.zeros((0, d)) if n == 0 else np.asarray(x, dtype=float).reshape(n, d)

    def integrand(y):
        xs = np.broadcast_to(x, (y.shape[0], n, d))
        return rho(np.concatenate([xs, y], axis=1))

    return _alternating_series(integrand, space, K, config, start=0)


def _alternating_series(integrand, space, K, config, start):
    terms, errs, partial = [], [], []
    acc = 0.0
    for k in range(start, K + 1):
        est = integrate(integrand, space, k, config, seed_offset=k)
        coef = (-1) ** k / math.factorial(k)
        terms.append(coef * est.value)
        errs.append(abs(coef) * est.std_err)
        acc += terms[-1]
        partial.append(acc)
    return SeriesTerms(terms, errs, partial)


def log_j0(rhoT: TruncatedFamily, space, K: int, config: IntegratorConfig | None = None) -> SeriesTerms:
    """Terms ``(-1)^k/k! int_{Lambda^k} rho_T^(k)`` for ``k = 1..K``."""
    if K < 1:
        raise ValidationError("K must be >= 1")
    if K > rhoT.order:
        raise ValidationError("K exceeds the truncation order")
    return _alternating_series(rhoT, space, K, config, start=1)


def graded_j0_residuals(rho: CorrelationFamily, space, K: int,
                        config: IntegratorConfig | None = None) -> list[float]:
    """Order-by-order ``|exp(log j0) - j0|`` as formal series in the order."""
    jt = janossy(rho, space, 0, K, config=config).terms
    lt = log_j0(truncate(rho), space, K, config=config).terms
    rhs = GradedSeries([0.0] + lt).exp()
    return [abs(a - b) / max(1.0, abs(a)) for a, b in zip(jt, rhs.coeffs)]


@dataclass
class ExpansionReport:
    """Per-order terms of ``mu = log rho + sum_k (-1)^k/k! int tilde_k(0, y_k) dy_k``."""

    log_rho: float
    terms: list  # terms[k-1] is order k
    std_errs: list
    halved_terms: list
    radius: float
    diagnostics: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def order(self) -> int:
        return len(self.terms)

    @property
    def partial_sums(self) -> list:
        out = [self.log_rho]
        for t in self.terms:
            out.append(out[-1] + t)
        return out

    @property
    def mu(self) -> float:
        return self.partial_sums[-1]

    @property
    def std_err(self) -> float:
        return math.sqrt(sum(e * e for e in self.std_errs))

    @property
    def r_converged(self) -> list[bool]:
        return [abs(t - h) <= R_DOUBLING_TOL * abs(t) or abs(t - h) < 1e-14
                for t, h in zip(self.terms, self.halved_terms)]

    def rows(self) -> list[tuple]:
        ps = self.partial_sums
        rows = [(0, self.log_rho, ps[0], 0.0, self.log_rho)]
        for k, (t, e, h) in enumerate(zip(self.terms, self.std_errs, self.halved_terms), start=1):
            rows.append((k, t, ps[k], e, h))
        return rows

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "term", "partial_sum", "std_err", "R_halved_term"])
            for k, *vals in self.rows():
                w.writerow([k] + [f"{v:.17g}" for v in vals])

    def to_json(self) -> dict:
        return {
            "log_rho": self.log_rho,
            "terms": self.terms,
            "std_errs": self.std_errs,
            "partial_sums": self.partial_sums,
            "R_halved_terms": self.halved_terms,
            "radius": self.radius,
            "mu": self.mu,
            "r_converged": self.r_converged,
            "diagnostics": self.diagnostics,
            "notes": self.notes,
        }


def rooted_term(kernel: Callable, d: int, domain: Domain, k: int,
                config: IntegratorConfig | None) -> tuple[float, float]:
    """``(-1)^k/k! int_{domain^k} kernel(0, y_k) dy_k`` and its standard error."""

    def integrand(y):
        origin = np.zeros((y.shape[0], 1, d))
        return kernel(np.concatenate([origin, y], axis=1))

    est = integrate(integrand, domain, k, config, seed_offset=k)
    coef = (-1) ** k / math.factorial(k)
    return coef * est.value, abs(coef) * est.std_err


def rooted_terms(kernel: Callable, d: int, domain: Domain, K: int,
                 config: IntegratorConfig | None) -> tuple[list, list]:
    check_quad_budget(config, d, K)
    pairs = [rooted_term(kernel, d, domain, k, config) for k in range(1, K + 1)]
    return [p[0] for p in pairs], [p[1] for p in pairs]


def mu_expansion(tilde: TildeFamily, R: float, K: int, config: IntegratorConfig | None = None,
                 kind: str = "ball", check_halved: bool = True) -> ExpansionReport:
    """Truncated chemical-potential expansion over a ball (or box) of radius ``R``.

    Each term is also evaluated at ``R/2``; a term counts as converged in
    ``R`` when the two differ by less than 1% relative.
    """
    if not tilde.translation_invariant:
        raise UnsupportedFamilyError("mu_expansion needs a translation-invariant family")
    if K < 0:
        raise ValidationError("K must be >= 0")
    if K > tilde.order:
        raise ValidationError(f"K={K} exceeds the tilde order {tilde.order}")
    rho = tilde.density
    if rho <= 0:
        raise DegenerateDensityError("density must be positive")
    domain = Domain.ball(R, tilde.d) if kind == "ball" else Domain.box(2 * R, tilde.d)
    terms, errs = rooted_terms(tilde, tilde.d, domain, K, config)
    if check_halved and K > 0:
        halved, _ = rooted_terms(tilde, tilde.d, domain.halved(), K, config)
    else:
        halved = list(terms)
    return ExpansionReport(math.log(rho), terms, errs, halved, R)


@dataclass
class PressureReport:
    rho: float
    terms: list
    std_errs: list
    halved_terms: list
    radius: float

    @property
    def partial_sums(self) -> list:
        out = [self.rho]
        for t in self.terms:
            out.append(out[-1] + t)
        return out

    @property
    def pressure(self) -> float:
        return self.partial_sums[-1]

    def rows(self) -> list[tuple]:
        ps = self.partial_sums
        rows = [(0, self.rho, ps[0], 0.0, self.rho)]
        for k, (t, e, h) in enumerate(zip(self.terms, self.std_errs, self.halved_terms), start=1):
            rows.append((k, t, ps[k], e, h))
        return rows


def pressure_expansion(rhoT: TruncatedFamily, R: float, K: int,
                       config: IntegratorConfig | None = None, kind: str = "ball") -> PressureReport:
    """``p = rho - sum_k (-1)^(k+1)/(k+1)! int rho_T^(k+1)(0, y_k) dy_k``."""
    if not rhoT.translation_invariant:
        raise UnsupportedFamilyError("pressure_expansion needs a translation-invariant family")
    if K + 1 > rhoT.order and K > 0:
        raise ValidationError(f"need truncated functions up to order {K + 1}")
    rho = rhoT.density
    check_quad_budget(config, rhoT.d, K)
    domain = Domain.ball(R, rhoT.d) if kind == "ball" else Domain.box(2 * R, rhoT.d)

    def run(dom):
        terms, errs = [], []
        for k in range(1, K + 1):
            def integrand(y):
                origin = np.zeros((y.shape[0], 1, rhoT.d))
                return rhoT(np.concatenate([origin, y], axis=1))

            est = integrate(integrand, dom, k, config, seed_offset=k)
            coef = -((-1) ** (k + 1)) / math.factorial(k + 1)
            terms.append(coef * est.value)
            errs.append(abs(coef) * est.std_err)
        return terms, errs

    terms, errs = run(domain)
    halved, _ = run(domain.halved()) if K > 0 else ([], [])
    return PressureReport(rho, terms, errs, halved, R)


@dataclass
class AssumptionBFit:
    D: float
    q: float
    q0: float
    convergent: bool
    integrals: list
    per_probe: dict = field(default_factory=dict)


def default_probes(d: int, spread: float = 1.0) -> np.ndarray:
    """The origin followed by 8 grid points in ``[-spread, spread]^d``."""
    if d == 1:
        grid = np.linspace(-spread, spread, 8).reshape(8, 1)
    else:
        side = int(math.ceil(8 ** (1.0 / d)))
        axes = np.meshgrid(*[np.linspace(-spread, spread, side)] * d, indexing="ij")
        grid = np.stack([a.ravel() for a in axes], axis=1)[:8]
    return np.concatenate([np.zeros((1, d)), grid], axis=0)


def fit_log_linear(integrals: list) -> tuple[float, float]:
    """Least squares ``log(I_n / n!) = log D + n log q`` over the positive ``I_n``."""
    pts = [(n, I) for n, I in enumerate(integrals, start=1) if I > 0]
    if all(I == 0 for I in integrals):
        return 0.0, 0.0
    if len(pts) < 2:
        raise FitUndeterminedError("fewer than two usable orders for the (D, q) fit")
    ns = np.array([p[0] for p in pts], dtype=float)
    ys = np.array([math.log(p[1] / math.factorial(p[0])) for p in pts])
    slope, intercept = np.polyfit(ns, ys, 1)
    return math.exp(intercept), math.exp(slope)


def assumption_b_diagnostic(rhoT: TruncatedFamily, space, N: int,
                            config: IntegratorConfig | None = None,
                            probes: np.ndarray | None = None) -> AssumptionBFit:
    """Fit ``(D, q)`` in ``sup_x int |rho_T^(1+n)(x, y_n)| / rho dy_n <= n! D q^n``.

    The supremum is a maximum over probe points: the origin alone for
    translation-invariant families, otherwise the origin plus an 8-point grid.
    """
    if N < 1 or N > rhoT.order - 1:
        raise ValidationError(f"N={N} must lie in 1..{rhoT.order - 1}")
    d = rhoT.d
    if probes is None:
        probes = np.zeros((1, d)) if rhoT.translation_invariant else default_probes(d)
    probes = np.asarray(probes, dtype=float).reshape(-1, d)
    per_probe: dict = {}
    integrals = []
    for n in range(1, N + 1):
        best = 0.0
        for p_i, x in enumerate(probes):
            rho_x = float(rhoT(x.reshape(1, 1, d))[0])
            if rho_x <= 0:
                raise DegenerateDensityError("density must be positive at the probe")

            def integrand(y, _x=x, _r=rho_x):
                xs = np.broadcast_to(_x, (y.shape[0], 1, d))
                return np.abs(rhoT(np.concatenate([xs, y], axis=1))) / _r

            val = integrate(integrand, space, n, config, seed_offset=n).value
            per_probe[(p_i, n)] = val
            best = max(best, val)
        integrals.append(best)
    D, q = fit_log_linear(integrals)
    return AssumptionBFit(D, q, q0(D), q < q0(D), integrals, per_probe)
