"""Grand-canonical Metropolis sampler in a periodic box (beta = 1).

Moves are birth, death and translate with probability 1/3 each. The inner
loop is compiled with numba and consumes uniforms and normals drawn ahead of
time from a Philox stream, so a chain is bit-identical for a fixed seed.
A sweep is ``max(1, ceil(z |Lambda|))`` attempted moves.

Energies are evaluated by brute force over all other particles.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numba
import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

from .errors import JammedError, ValidationError

BIRTH, DEATH, TRANSLATE = 0, 1, 2
_NO_TAIL = np.zeros(0)


@dataclass(frozen=True)
class PairPotential:
    """Hard core ``sigma`` plus an optional smooth tail ``u(r)`` for ``sigma <= r <= r_cut``.

    The tail is tabulated on ``n_table`` points and interpolated linearly in
    the compiled loop. ``B`` is the declared stability constant.
    """

    sigma: float = 0.0
    tail: Callable[[np.ndarray], np.ndarray] | None = None
    r_cut: float = 0.0
    B: float = 0.0
    name: str = "custom"
    n_table: int = 4096

    def __post_init__(self):
        if self.sigma < 0:
            raise ValidationError("hard-core radius must be >= 0")
        if self.tail is not None and not self.r_cut > self.sigma:
            raise ValidationError("tail needs r_cut > sigma")

    def table(self) -> tuple[np.ndarray, float, float]:
        if self.tail is None:
            return _NO_TAIL, 0.0, 1.0
        r = np.linspace(self.sigma, self.r_cut, self.n_table)
        return np.asarray(self.tail(r), dtype=float), self.sigma, (self.r_cut - self.sigma) / (self.n_table - 1)

    def energy(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        if self.tail is not None:
            inside = (r >= self.sigma) & (r <= self.r_cut)
            out[inside] = self.tail(r[inside])
        out[r < self.sigma] = np.inf
        return out


def ideal_gas() -> PairPotential:
    return PairPotential(name="ideal")


def hard_core(sigma: float = 1.0) -> PairPotential:
    if sigma <= 0:
        raise ValidationError("sigma must be positive")
    return PairPotential(sigma=sigma, name="hard-rod")


def potential(name: str, sigma: float = 1.0) -> PairPotential:
    if name in ("ideal", "none", "zero"):
        return ideal_gas()
    if name in ("hard-rod", "hard-sphere", "hard-core"):
        return hard_core(sigma)
    raise ValidationError(f"unknown potential {name!r}")


@dataclass
class Configuration:
    points: np.ndarray
    L: float
    d: int
    sweep: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, self.d)

    @property
    def n(self) -> int:
        return len(self.points)

    def to_json(self) -> dict:
        return {"points": self.points.tolist(), "L": float(self.L), "d": int(self.d), "sweep": int(self.sweep)}

    @classmethod
    def from_json(cls, rec: dict) -> "Configuration":
        d = int(rec["d"])
        pts = np.asarray(rec["points"], dtype=float).reshape(-1, d)
        return cls(pts, float(rec["L"]), d, int(rec.get("sweep", 0)))


def min_image_distances(points: np.ndarray, L: float) -> np.ndarray:
    """All unordered pair distances under the minimum-image convention."""
    n = len(points)
    if n < 2:
        return np.zeros(0)
    i, j = np.triu_indices(n, 1)
    diff = points[i] - points[j]
    diff -= L * np.round(diff / L)
    return np.sqrt(np.sum(diff * diff, axis=1))


def check_hard_core(c: Configuration, sigma: float) -> bool:
    if np.any((c.points < 0) | (c.points >= c.L)):
        return False
    if sigma <= 0:
        return True
    return bool(np.all(min_image_distances(c.points, c.L) >= sigma))


@numba.njit(cache=True)
def _point_energy(pos, n, skip, p, L, sigma2, tail, r0, dr, rc2):
    e = 0.0
    d = pos.shape[1]
    for j in range(n):
        if j == skip:
            continue
        r2 = 0.0
        for a in range(d):
            x = pos[j, a] - p[a]
            x -= L * np.floor(x / L + 0.5)
            r2 += x * x
        if r2 < sigma2:
            return np.inf
        if tail.shape[0] > 0 and r2 <= rc2:
            t = (math.sqrt(r2) - r0) / dr
            i = int(t)
            if i >= tail.shape[0] - 1:
                e += tail[tail.shape[0] - 1]
            else:
                f = t - i
                e += tail[i] * (1.0 - f) + tail[i + 1] * f
    return e


@numba.njit(cache=True)
def _run_moves(pos, n, L, zV, sigma2, tail, r0, dr, rc2, step, uni, nor, accepts, tries, n_trace, per_sweep):
    """Apply ``uni.shape[0]`` moves; returns the final particle count."""
    d = pos.shape[1]
    p = np.empty(d)
    for m in range(uni.shape[0]):
        u = uni[m]
        kind = min(int(u[0] * 3.0), 2)
        tries[kind] += 1
        if kind == 0:
            for a in range(d):
                p[a] = u[3 + a] * L
            de = _point_energy(pos, n, -1, p, L, sigma2, tail, r0, dr, rc2)
            if de < np.inf:
                ratio = zV / (n + 1) * math.exp(-de)
                if u[1] < ratio:
                    for a in range(d):
                        pos[n, a] = p[a]
                    n += 1
                    accepts[0] += 1
        elif kind == 1:
            if n > 0:
                i = min(int(u[2] * n), n - 1)
                de = -_point_energy(pos, n, i, pos[i], L, sigma2, tail, r0, dr, rc2)
                ratio = n / zV * math.exp(-de)
                if u[1] < ratio:
                    for a in range(d):
                        pos[i, a] = pos[n - 1, a]
                    n -= 1
                    accepts[1] += 1
        else:
            if n > 0:
                i = min(int(u[2] * n), n - 1)
                g = nor[m]
                norm = 0.0
                for a in range(d):
                    norm += g[a] * g[a]
                norm = math.sqrt(norm)
                rad = step * u[3] ** (1.0 / d)
                for a in range(d):
                    x = pos[i, a] + rad * g[a] / norm
                    p[a] = x - L * math.floor(x / L)
                    if p[a] >= L:
                        p[a] = 0.0
                e_new = _point_energy(pos, n, i, p, L, sigma2, tail, r0, dr, rc2)
                if e_new < np.inf:
                    e_old = _point_energy(pos, n, i, pos[i], L, sigma2, tail, r0, dr, rc2)
                    if u[1] < math.exp(-(e_new - e_old)):
                        for a in range(d):
                            pos[i, a] = p[a]
                        accepts[2] += 1
        if (m + 1) % per_sweep == 0:
            n_trace[(m + 1) // per_sweep - 1] = n
    return n


def moves_per_sweep(z: float, L: float, d: int) -> int:
    return max(1, math.ceil(z * L**d))


@dataclass
class ChainStats:
    accept_rates: dict
    n_trace: np.ndarray
    tau_int: float
    ess: float
    seed: int
    moves_per_sweep: int
    volume: float
    extra: dict = field(default_factory=dict)

    @property
    def density(self) -> float:
        return float(np.mean(self.n_trace)) / self.volume

    def to_json(self) -> dict:
        return {
            "accept_rates": self.accept_rates,
            "tau_int": self.tau_int,
            "ess": self.ess,
            "seed": self.seed,
            "moves_per_sweep": self.moves_per_sweep,
            "mean_N": float(np.mean(self.n_trace)),
            "n_sweeps": int(len(self.n_trace)),
        }


def integrated_autocorr_time(x: np.ndarray, c: float = 5.0) -> float:
    """``tau = 1/2 + sum_t rho(t)`` with Sokal's self-consistent window (so ESS = n/(2 tau))."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 2:
        return 0.5
    y = x - x.mean()
    var = float(np.dot(y, y)) / n
    if var == 0:
        return 0.5
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(y, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:n] / (n * var)
    tau = 0.5
    for t in range(1, n):
        tau += acf[t]
        if t >= c * tau:
            break
    return max(tau, 0.5)


def batch_means_se(x: np.ndarray, n_batches: int = 50) -> float:
    """Standard error of the mean of a correlated series by non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    n_batches = min(n_batches, len(x))
    if n_batches < 2:
        raise ValidationError("need at least 2 values for a standard error")
    size = len(x) // n_batches
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(n_batches))


class Chain:
    """Stateful chain. ``advance(sweeps)`` runs whole sweeps and returns the per-sweep N trace."""

    def __init__(self, z: float, u: PairPotential, L: float, d: int, seed: int = 0,
                 init: Configuration | None = None):
        if z <= 0:
            raise ValidationError("activity must be positive")
        if d not in (1, 2, 3) or L <= 0:
            raise ValidationError("need d in {1,2,3} and L > 0")
        if u.sigma > 0 and 2 * u.sigma > L:
            raise ValidationError("box must be at least twice the hard core")
        self.z, self.u, self.L, self.d, self.seed = z, u, float(L), d, seed
        self.volume = self.L**d
        self.per_sweep = moves_per_sweep(z, self.L, d)
        self.rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        self.tail, self.r0, self.dr = u.table()
        self.rc2 = u.r_cut**2 if u.tail is not None else 0.0
        self.step = u.sigma if u.sigma > 0 else self.L / 20
        cap = int(4 * z * self.volume + 64)
        self.pos = np.zeros((cap, d))
        self.n = 0
        if init is not None:
            self.pos[: init.n] = init.points
            self.n = init.n
        self.accepts = np.zeros(3, dtype=np.int64)
        self.tries = np.zeros(3, dtype=np.int64)
        self.sweep = 0

    def advance(self, sweeps: int) -> np.ndarray:
        trace = np.empty(sweeps, dtype=np.int64)
        done = 0
        block = max(1, 20000 // self.per_sweep)
        while done < sweeps:
            s = min(block, sweeps - done)
            moves = s * self.per_sweep
            if self.n + moves >= len(self.pos):
                # every move could be a birth; keep room so none is refused
                bigger = np.zeros((self.n + moves + 1, self.d))
                bigger[: self.n] = self.pos[: self.n]
                self.pos = bigger
            uni = self.rng.random((moves, 3 + self.d))
            nor = self.rng.standard_normal((moves, self.d))
            self.n = _run_moves(self.pos, self.n, self.L, self.z * self.volume, self.u.sigma**2,
                                self.tail, self.r0, self.dr, self.rc2, self.step, uni, nor,
                                self.accepts, self.tries, trace[done: done + s], self.per_sweep)
            done += s
        self.sweep += sweeps
        return trace

    def configuration(self) -> Configuration:
        return Configuration(self.pos[: self.n].copy(), self.L, self.d, self.sweep)

    def accept_rates(self) -> dict:
        names = ("birth", "death", "translate")
        return {k: (int(a) / int(t) if t else 0.0) for k, a, t in zip(names, self.accepts, self.tries)}


def run_chain(z: float, u: PairPotential, L: float, d: int = 1, sweeps: int = 100_000,
              burn_in: int = 10_000, thin: int = 50, seed: int = 0,
              debug: bool = False) -> tuple[list[Configuration], ChainStats]:
    """Run ``sweeps`` sweeps, discard ``burn_in``, keep every ``thin``-th configuration.

    Returns the kept configurations and statistics of the post-burn-in N trace.
    """
    sink: dict = {}
    configs = list(iter_chain(z, u, L, d, sweeps, burn_in, thin, seed, debug, sink))
    return configs, sink["stats"]


def iter_chain(z, u, L, d, sweeps, burn_in, thin, seed, debug=False, sink: dict | None = None
               ) -> Iterator[Configuration]:
    if thin < 1 or burn_in < 0:
        raise ValidationError("thin must be >= 1 and burn_in >= 0")
    if not sweeps > burn_in:
        raise ValidationError("sweeps must exceed burn_in")
    chain = Chain(z, u, L, d, seed)
    chain.advance(burn_in)
    traces = []
    remaining = sweeps - burn_in
    while remaining > 0:
        s = min(thin, remaining)
        traces.append(chain.advance(s))
        remaining -= s
        if s == thin:
            c = chain.configuration()
            if debug and not check_hard_core(c, u.sigma):
                raise AssertionError(f"hard-core violated at sweep {chain.sweep}")
            yield c
    trace = np.concatenate(traces)
    tau = integrated_autocorr_time(trace)
    stats = ChainStats(chain.accept_rates(), trace, tau, len(trace) / (2 * tau), seed,
                       chain.per_sweep, chain.volume)
    if sink is not None:
        sink["stats"] = stats


def write_jsonl(configs, path: str) -> int:
    count = 0
    with open(path, "w") as fh:
        for c in configs:
            fh.write(json.dumps(c.to_json()) + "\n")
            count += 1
    return count


def read_jsonl(path: str) -> list[Configuration]:
    with open(path) as fh:
        return [Configuration.from_json(json.loads(line)) for line in fh if line.strip()]


# Tonks gas: 1D hard rods of length sigma, beta = 1, thermal wavelength 1.

def tonks_mu_exact(rho: float, sigma: float = 1.0) -> float:
    """Chemical potential ``log(rho/(1 - rho sigma)) + rho sigma/(1 - rho sigma)``."""
    if rho <= 0:
        raise ValidationError("density must be positive")
    eta = rho * sigma
    if eta >= 1:
        raise JammedError(f"rho*sigma = {eta} >= 1 is jammed")
    return math.log(rho / (1 - eta)) + eta / (1 - eta)


def tonks_activity(rho: float, sigma: float = 1.0) -> float:
    return math.exp(tonks_mu_exact(rho, sigma))


def tonks_density(z: float, sigma: float = 1.0) -> float:
    """Invert the Tonks activity relation for ``rho``."""
    if z <= 0:
        raise ValidationError("activity must be positive")
    hi = (1 - 1e-15) / sigma
    return brentq(lambda r: tonks_mu_exact(r, sigma) - math.log(z), 1e-300, hi, xtol=1e-300, rtol=1e-15)


def tonks_box_weights(z: float, L: float, sigma: float = 1.0) -> np.ndarray:
    """Normalised probabilities of N = 0, 1, ... for hard rods on a ring of length L.

    The ring partition function is ``z^N/N! L (L - N sigma)^(N-1)``.
    """
    nmax = int(math.ceil(L / sigma)) - 1
    logw = [0.0]
    for n in range(1, nmax + 1):
        logw.append(n * math.log(z) - gammaln(n + 1) + math.log(L) + (n - 1) * math.log(L - n * sigma))
    logw = np.array(logw)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def tonks_box_density(z: float, L: float, sigma: float = 1.0) -> float:
    w = tonks_box_weights(z, L, sigma)
    return float(np.dot(np.arange(len(w)), w)) / L


def tonks_pair_correlation(r: np.ndarray, rho: float, sigma: float = 1.0, terms: int | None = None) -> np.ndarray:
    """Exact infinite-volume Tonks ``g(r)`` as the sum over gamma-distributed neighbour gaps."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    eta = rho * sigma
    if eta >= 1:
        raise JammedError("jammed density")
    lam = rho / (1 - eta)
    kmax = terms or int(np.max(r) / sigma) + 1
    out = np.zeros_like(r)
    for k in range(1, kmax + 1):
        s = r - k * sigma
        ok = s > 0
        out[ok] += lam**k * s[ok] ** (k - 1) / math.factorial(k - 1) * np.exp(-lam * s[ok])
    return out / rho
