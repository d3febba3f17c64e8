"""From sampled configurations to an estimated chemical potential.

Pipeline: density and pair correlation from a configuration stream, a
Kirkwood-closed empirical family built on the interpolated ``g``, then the
chemical-potential expansion up to second order. Standard errors come from
batch means over the configuration stream.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .correlations import (
    AssumptionBFit,
    CorrelationFamily,
    ExpansionReport,
    assumption_b_diagnostic,
    mu_expansion,
    tilde_family,
    truncate,
)
from .errors import DegenerateDensityError, ValidationError
from .integrators import Domain, IntegratorConfig, aligned_nodes, quad_k
from .kirkwood import KirkwoodFamily, PairFunction, _ball_volume
from .sampler import Configuration, batch_means_se, min_image_distances

DEFAULT_BATCHES = 20
MAX_EMPIRICAL_ORDER = 2


def _check_stream(configs) -> tuple[list[Configuration], float, int]:
    configs = list(configs)
    if not configs:
        raise ValidationError("empty configuration stream")
    L, d = configs[0].L, configs[0].d
    if any(c.L != L or c.d != d for c in configs):
        raise ValidationError("configurations must share box size and dimension")
    return configs, L, d


def _batch_layout(n: int, n_batches: int) -> list[slice]:
    n_batches = max(2, min(n_batches, n))
    edges = np.linspace(0, n, n_batches + 1).astype(int)
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]


@dataclass(frozen=True)
class DensityEstimate:
    rho: float
    std_err: float
    n_configs: int


def estimate_density(configs, n_batches: int = DEFAULT_BATCHES) -> DensityEstimate:
    """``rho_hat = mean(N) / |Lambda|`` with a batch-means standard error."""
    configs, L, d = _check_stream(configs)
    if len(configs) < 2:
        raise ValidationError("a standard error needs at least 2 configurations")
    vol = L**d
    counts = np.array([c.n for c in configs], dtype=float)
    return DensityEstimate(float(counts.mean() / vol), batch_means_se(counts, n_batches) / vol, len(configs))


def _shell_volumes(edges: np.ndarray, d: int) -> np.ndarray:
    return _ball_volume(d, 1.0) * (edges[1:] ** d - edges[:-1] ** d)


@dataclass
class PcfEstimate:
    edges: np.ndarray
    g: np.ndarray
    counts: np.ndarray
    std_err: np.ndarray
    rho: float
    n_configs: int
    batch_g: np.ndarray = field(repr=False, default=None)

    @property
    def mids(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def r_max(self) -> float:
        return float(self.edges[-1])


def _pair_histogram(c: Configuration, edges: np.ndarray) -> np.ndarray:
    r = min_image_distances(c.points, c.L)
    h, _ = np.histogram(r, bins=edges)
    return 2.0 * h  # ordered pairs


def estimate_pcf(configs, bins: int = 200, r_max: float = 10.0,
                 n_batches: int = DEFAULT_BATCHES) -> PcfEstimate:
    """Histogram estimator of ``g`` on ``[0, r_max]``.

    Ordered pair counts per bin, divided by ``rho_hat^2 |Lambda|`` times the
    shell volume, averaged over configurations. The periodic box needs no
    edge correction as long as ``r_max <= L/2``.
    """
    configs, L, d = _check_stream(configs)
    if not 0 < r_max <= L / 2:
        raise ValidationError(f"r_max={r_max} must lie in (0, L/2] for L={L}")
    if bins < 1:
        raise ValidationError("bins must be >= 1")
    edges = np.linspace(0.0, r_max, bins + 1)
    shell = _shell_volumes(edges, d)
    vol = L**d
    hist = np.array([_pair_histogram(c, edges) for c in configs])
    n = np.array([c.n for c in configs], dtype=float)
    rho = n.mean() / vol
    if rho <= 0:
        raise DegenerateDensityError("no particles in the stream; g is undefined")
    g = hist.sum(axis=0) / (len(configs) * rho**2 * vol * shell)
    batches = []
    for sl in _batch_layout(len(configs), n_batches):
        rb = n[sl].mean() / vol
        batches.append(hist[sl].sum(axis=0) / ((sl.stop - sl.start) * max(rb, 1e-300) ** 2 * vol * shell))
    batches = np.array(batches)
    se = batches.std(axis=0, ddof=1) / math.sqrt(len(batches))
    return PcfEstimate(edges, g, hist.sum(axis=0), se, float(rho), len(configs), batches)


def interpolate_g(edges: np.ndarray, g: np.ndarray, hard_core: float | None = None):
    """Piecewise-linear ``g`` through bin midpoints.

    ``g = 1`` beyond the last edge. With a declared hard core, ``g = 0`` below
    the left edge of the first non-empty bin and constant from that edge to
    its midpoint; otherwise the first value is held down to ``r = 0``.
    """
    edges = np.asarray(edges, dtype=float)
    g = np.asarray(g, dtype=float)
    mids = 0.5 * (edges[1:] + edges[:-1])
    r_max = float(edges[-1])
    start = 0
    if hard_core:
        nz = np.nonzero(g > 0)[0]
        start = int(nz[0]) if len(nz) else len(g)
    lo = float(edges[start]) if start < len(g) else r_max

    def fn(r):
        r = np.asarray(r, dtype=float)
        out = np.interp(r, mids[start:], g[start:]) if start < len(g) else np.ones_like(r)
        out = np.where(r > r_max, 1.0, out)
        if hard_core:
            out = np.where(r < lo, 0.0, out)
        return out

    return fn


class EmpiricalFamily(KirkwoodFamily):
    """Kirkwood closure built on ``rho_hat`` and an interpolated ``g_hat``."""

    def __init__(self, rho: float, pcf: PcfEstimate, d: int, order: int = 3,
                 hard_core: float | None = None, provenance: dict | None = None):
        if not rho > 0:
            raise DegenerateDensityError("rho_hat must be positive")
        if np.any(pcf.g < 0):
            raise DegenerateDensityError("negative pair-correlation estimate")
        fn = interpolate_g(pcf.edges, pcf.g, hard_core)
        fine = np.linspace(0, pcf.r_max, 20 * len(pcf.g) + 1)
        gf = fn(fine)
        shell = _ball_volume(d, 1.0) * d * fine ** (d - 1)
        C_g = float(np.trapezoid(np.abs(gf - 1.0) * shell, fine)) if hasattr(np, "trapezoid") \
            else float(np.trapz(np.abs(gf - 1.0) * shell, fine))
        pair = PairFunction("empirical", fn, d, C_g, max(1.0, float(gf.max())), pcf.r_max, hard_core or 0.0)
        super().__init__(rho, pair, order)
        self.pcf = pcf
        self.hard_core = hard_core
        self.provenance = provenance or {}


def empirical_family(configs, bins: int = 200, r_max: float = 10.0, order: int = 3,
                     hard_core: float | None = None, n_batches: int = DEFAULT_BATCHES) -> EmpiricalFamily:
    configs = list(configs)
    dens = estimate_density(configs, n_batches)
    pcf = estimate_pcf(configs, bins, r_max, n_batches)
    prov = {"n_configs": len(configs), "bins": bins, "r_max": r_max,
            "sweeps": [configs[0].sweep, configs[-1].sweep]}
    return EmpiricalFamily(dens.rho, pcf, configs[0].d, order, hard_core, prov)


@dataclass
class MuEstimate:
    rho_hat: float
    se_rho: float
    report: ExpansionReport
    se_mu: float
    truncation_err: float
    term_se: list
    direct_first_term: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def terms(self) -> list:
        return list(self.report.terms)

    @property
    def mu_hat(self) -> float:
        return self.report.mu

    def to_json(self) -> dict:
        return {
            "rho_hat": self.rho_hat,
            "se_rho": self.se_rho,
            "terms": self.terms,
            "term_se": self.term_se,
            "mu_hat": self.mu_hat,
            "se_mu": self.se_mu,
            "truncation_err": self.truncation_err,
            "R_halved_terms": list(self.report.halved_terms),
            "diagnostics": self.diagnostics,
        }


def first_term_direct(fam: EmpiricalFamily, R: float, nodes: int) -> float:
    """``-rho int_{|y|<=R} (g(y) - 1) dy`` straight from the pair function."""
    dom = Domain.ball(R, fam.d)
    est = quad_k(lambda y: fam.g.pair(y[:, 0, :]) - 1.0, dom, 1, nodes)
    return -fam.rho * est.value


def _default_nodes(R: float, sigma: float | None, d: int, target: int) -> int:
    if sigma:
        return aligned_nodes(R, sigma, target)
    return target


def mu_hat(fam: EmpiricalFamily, K: int = 2, R: float = 20.0, config: IntegratorConfig | None = None,
           se_rho: float = 0.0, batch_nodes: int | None = None, check_halved: bool = True) -> MuEstimate:
    """``mu_hat = log rho_hat + sum_{k<=K}`` tilde-expansion terms of the closed family.

    The first-order term only needs ``rho_T^(2) = rho^2 (g - 1)``; it is also
    computed directly as a cross-check. Standard errors repeat the expansion
    on each batch estimate of ``g`` (on a coarser grid) and combine with the
    density error to first order.
    """
    if K < 1 or K > MAX_EMPIRICAL_ORDER:
        raise ValidationError(f"K must be 1 or 2 for an empirical family (got {K})")
    if fam.order < K + 1:
        raise ValidationError("closure order must be >= K + 1")
    if not fam.rho > 0:
        raise DegenerateDensityError("rho_hat must be positive")
    if R > fam.pcf.r_max:
        warnings.warn(f"g_hat is only estimated up to r={fam.pcf.r_max}; taken as 1 out to R={R}",
                      stacklevel=2)
    sigma = fam.hard_core
    if config is None:
        config = IntegratorConfig("quad", nodes=_default_nodes(R, sigma, fam.d, int(60 * R)))
    if config.method == "quad" and fam.d * K > 6:
        raise ValidationError("quadrature limited to d*K <= 6")
    report = mu_expansion(tilde_family(truncate(fam)), R, K, config, check_halved=check_halved)
    direct = first_term_direct(fam, R, config.nodes)
    report.diagnostics["first_term_direct"] = direct
    report.diagnostics["first_term_gap"] = abs(direct - report.terms[0])

    # batch replicates for the statistical error
    batch_g = fam.pcf.batch_g
    term_se = [0.0] * K
    se_terms_total = 0.0
    if batch_g is not None and len(batch_g) >= 2:
        nodes_b = batch_nodes or _default_nodes(R, sigma, fam.d, int(10 * R))
        cfg_b = IntegratorConfig("quad", nodes=nodes_b)
        reps = []
        for gb in batch_g:
            pcf_b = PcfEstimate(fam.pcf.edges, np.maximum(gb, 0.0), fam.pcf.counts, fam.pcf.std_err,
                                fam.rho, fam.pcf.n_configs)
            fb = EmpiricalFamily(fam.rho, pcf_b, fam.d, fam.order, sigma)
            reps.append(mu_expansion(tilde_family(truncate(fb)), R, K, cfg_b, check_halved=False).terms)
        reps = np.array(reps)
        nb = len(reps)
        term_se = list(reps.std(axis=0, ddof=1) / math.sqrt(nb))
        se_terms_total = float(reps.sum(axis=1).std(ddof=1) / math.sqrt(nb))
    # d(mu)/d(rho) ~ 1/rho from the log term; the terms' own rho dependence is second order here
    se_mu = math.sqrt((se_rho / fam.rho) ** 2 + se_terms_total**2)
    report.std_errs = list(term_se)
    return MuEstimate(fam.rho, se_rho, report, se_mu, abs(report.terms[-1]), term_se, direct)


def diagnostics(fam: CorrelationFamily, N_orders: int = 2, R: float = 10.0,
                config: IntegratorConfig | None = None, probes: np.ndarray | None = None,
                ruelle_samples: int = 256, seed: int = 0) -> dict:
    """Assumption-B fit on the closed family, the ``q0`` comparison and a Ruelle estimate.

    ``xi_hat`` is the largest sampled ``rho^(n)(x_n)^(1/n)`` over ``n <= order``.
    """
    if fam.order < N_orders + 1:
        raise ValidationError(f"closure order {fam.order} < N_orders + 1 = {N_orders + 1}")
    core = getattr(getattr(fam, "g", None), "core", 0.0) or None
    config = config or IntegratorConfig("quad", nodes=_default_nodes(R, core, fam.d, 200))
    fit: AssumptionBFit = assumption_b_diagnostic(truncate(fam), Domain.ball(R, fam.d), N_orders,
                                                  config, probes)
    rng = np.random.Generator(np.random.Philox(seed))
    xi = 0.0
    for n in range(1, fam.order + 1):
        pts = rng.uniform(-R, R, size=(ruelle_samples, n, fam.d))
        vals = fam(pts)
        xi = max(xi, float(np.max(vals)) ** (1.0 / n))
    return {"D": fit.D, "q": fit.q, "q0": fit.q0, "convergent": bool(fit.convergent),
            "integrals": list(fit.integrals), "xi_hat": xi}
