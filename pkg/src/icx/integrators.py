"""Tensor midpoint quadrature and seeded Monte Carlo over ``Lambda^k``.

Integrands take an array of shape ``(batch, k, d)`` (``k`` points in ``d``
dimensions per row) and return shape ``(batch,)``.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import CostGuardError, ValidationError
from .exprep import SiteSpace

Integrand = Callable[[np.ndarray], np.ndarray]

MAX_QUAD_DIM = 6
MAX_QUAD_EVALS = 400_000_000
CHUNK = 1 << 16


@dataclass(frozen=True)
class Domain:
    """Box ``center + [-L/2, L/2]^d`` or ball of radius ``R`` about ``center``."""

    kind: str
    d: int
    extent: float
    periodic: bool = False
    center: float = 0.0

    def __post_init__(self):
        if self.kind not in ("box", "ball"):
            raise ValidationError(f"unknown domain kind {self.kind!r}")
        if self.d not in (1, 2, 3):
            raise ValidationError("dimension must be 1, 2 or 3")
        if not self.extent > 0:
            raise ValidationError("extent must be positive")

    @classmethod
    def box(cls, L: float, d: int = 1, periodic: bool = False, center: float = 0.0) -> "Domain":
        return cls("box", d, float(L), periodic, center)

    @classmethod
    def ball(cls, R: float, d: int = 1) -> "Domain":
        return cls("ball", d, float(R))

    @property
    def half_width(self) -> float:
        return self.extent / 2 if self.kind == "box" else self.extent

    @property
    def volume(self) -> float:
        if self.kind == "box":
            return self.extent**self.d
        return math.pi ** (self.d / 2) / math.gamma(self.d / 2 + 1) * self.extent**self.d

    def bounds(self) -> tuple[float, float]:
        return self.center - self.half_width, self.center + self.half_width

    def inside(self, pts: np.ndarray) -> np.ndarray:
        """Boolean mask, ``pts`` of shape ``(..., d)``."""
        if self.kind == "box":
            lo, hi = self.bounds()
            return np.all((pts >= lo) & (pts <= hi), axis=-1)
        return np.sum((pts - self.center) ** 2, axis=-1) <= self.extent**2

    def halved(self) -> "Domain":
        return Domain(self.kind, self.d, self.extent / 2, self.periodic, self.center)


@dataclass(frozen=True)
class IntegralEstimate:
    value: float
    std_err: float
    n_evals: int
    method: str
    seed: int | None = None


def quad_k(f: Integrand, domain: Domain, k: int, nodes_per_axis: int = 64,
           chunk: int = CHUNK) -> IntegralEstimate:
    """Midpoint tensor rule for ``int_{domain^k} f``.

    Ball domains integrate over the bounding box with the ball indicator.
    The rule is exact for integrands that are constant on grid cells, so
    place discontinuities on cell faces when possible (see
    :func:`aligned_nodes`). Guarded by ``d * k <= 6``.
    """
    d = domain.d
    if k < 0:
        raise ValidationError("k must be >= 0")
    if k == 0:
        return IntegralEstimate(float(f(np.zeros((1, 0, d)))[0]), 0.0, 1, "quad")
    dim = d * k
    if dim > MAX_QUAD_DIM:
        raise CostGuardError(f"quadrature dimension d*k={dim} exceeds {MAX_QUAD_DIM}")
    n = int(nodes_per_axis)
    total = n**dim
    if total > MAX_QUAD_EVALS:
        raise CostGuardError(f"{total} quadrature evaluations exceed {MAX_QUAD_EVALS}")
    lo, hi = domain.bounds()
    h = (hi - lo) / n
    mids = lo + (np.arange(n) + 0.5) * h
    radix = n ** np.arange(dim - 1, -1, -1, dtype=np.int64)
    acc = 0.0
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = (idx[:, None] // radix[None, :]) % n
        pts = mids[digits].reshape(-1, k, d)
        vals = np.asarray(f(pts), dtype=float)
        if domain.kind == "ball":
            vals = np.where(np.all(domain.inside(pts), axis=-1), vals, 0.0)
        acc += float(np.sum(vals))
    return IntegralEstimate(acc * h**dim, 0.0, total, "quad")


def aligned_nodes(radius: float, sigma: float, target: int, search: int = 20000) -> int:
    """Node count on ``[-radius, radius]`` that keeps ``|y| = sigma`` on cell
    faces and puts ``|y_i - y_j| = sigma`` at half-cell offsets.

    With spacing ``h`` this needs ``(radius - sigma)/h`` integral and
    ``sigma/h`` half-integral; errors along the diagonal discontinuities then
    cancel in pairs. Returns ``target`` unchanged if no such count exists
    within ``search`` steps.
    """
    for n in range(max(1, target), target + search):
        h = 2 * radius / n
        a, b = (radius - sigma) / h, sigma / h - 0.5
        if abs(a - round(a)) < 1e-9 and abs(b - round(b)) < 1e-9:
            return n
    return target


def _sample_domain(domain: Domain, rng: np.random.Generator, size: int) -> np.ndarray:
    lo, hi = domain.bounds()
    if domain.kind == "box":
        return rng.uniform(lo, hi, size=(size, domain.d))
    out = np.empty((0, domain.d))
    while len(out) < size:
        cand = rng.uniform(lo, hi, size=(2 * (size - len(out)) + 8, domain.d))
        out = np.concatenate([out, cand[domain.inside(cand)]])
    return out[:size]


def _worker_moments(f: Integrand, domain: Domain, k: int, n: int, seed_seq, chunk: int):
    rng = np.random.Generator(np.random.Philox(seed_seq))
    count, mean, m2 = 0, 0.0, 0.0
    done = 0
    while done < n:
        b = min(chunk, n - done)
        pts = _sample_domain(domain, rng, b * k).reshape(b, k, domain.d)
        vals = np.asarray(f(pts), dtype=float)
        bm = float(np.mean(vals))
        bm2 = float(np.sum((vals - bm) ** 2))
        tot = count + b
        delta = bm - mean
        mean += delta * b / tot
        m2 += bm2 + delta**2 * count * b / tot
        count = tot
        done += b
    return count, mean, m2


def mc_k(f: Integrand, domain: Domain, k: int, n_samples: int, seed: int = 0,
         workers: int = 1, chunk: int = CHUNK) -> IntegralEstimate:
    """Uniform Monte Carlo estimate of ``int_{domain^k} f`` with standard error.

    Worker ``w`` draws from its own Philox stream spawned from ``seed``;
    per-worker moments are merged in worker order, so the result is
    bit-identical for a given ``(seed, workers)``.
    """
    if n_samples < 2:
        raise ValidationError("n_samples must be >= 2")
    if workers < 1:
        raise ValidationError("workers must be >= 1")
    vol_k = domain.volume**k
    streams = np.random.SeedSequence(seed).spawn(workers)
    sizes = [n_samples // workers + (1 if w < n_samples % workers else 0) for w in range(workers)]
    jobs = [(f, domain, k, sizes[w], streams[w], chunk) for w in range(workers) if sizes[w] > 0]
    if workers == 1:
        parts = [_worker_moments(*job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: _worker_moments(*job), jobs))
    count, mean, m2 = 0, 0.0, 0.0
    for c, m, s in parts:
        tot = count + c
        delta = m - mean
        mean += delta * c / tot
        m2 += s + delta**2 * count * c / tot
        count = tot
    sd = math.sqrt(m2 / (count - 1))
    return IntegralEstimate(vol_k * mean, vol_k * sd / math.sqrt(count), count, "mc", seed)


def site_sum_k(f: Integrand, space: SiteSpace, k: int) -> IntegralEstimate:
    """Exact weighted sum of ``f`` over all ``k``-tuples of sites."""
    ns = space.n_sites
    if k == 0:
        return IntegralEstimate(float(f(np.zeros((1, 0, space.d)))[0]), 0.0, 1, "sites")
    idx = np.array(list(itertools.product(range(ns), repeat=k)), dtype=np.int64)
    w = np.asarray([float(x) for x in space.weights])
    pts = space.coords[idx]
    vals = np.asarray(f(pts), dtype=float)
    return IntegralEstimate(float(np.sum(vals * np.prod(w[idx], axis=1))), 0.0, len(idx), "sites")


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "quad"
    nodes: int = 64
    samples: int = 100_000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.method not in ("quad", "mc"):
            raise ValidationError(f"unknown integration method {self.method!r}")


def check_quad_budget(config: IntegratorConfig | None, d: int, K: int) -> None:
    """Fail before any work if order ``K`` would trip the quadrature guards."""
    config = config or IntegratorConfig()
    if config.method != "quad" or K < 1:
        return
    if d * K > MAX_QUAD_DIM:
        raise CostGuardError(f"quadrature dimension d*K={d * K} exceeds {MAX_QUAD_DIM}")
    if config.nodes ** (d * K) > MAX_QUAD_EVALS:
        raise CostGuardError(f"{config.nodes}^{d * K} quadrature evaluations exceed {MAX_QUAD_EVALS}")


def integrate(f: Integrand, space, k: int, config: IntegratorConfig | None = None,
              seed_offset: int = 0) -> IntegralEstimate:
    """Dispatch to site sums, quadrature or Monte Carlo."""
    config = config or IntegratorConfig()
    if isinstance(space, SiteSpace):
        return site_sum_k(f, space, k)
    if k == 0:
        return quad_k(f, space, 0)
    if config.method == "quad":
        return quad_k(f, space, k, config.nodes)
    return mc_k(f, space, k, config.samples, config.seed + seed_offset, config.workers)
