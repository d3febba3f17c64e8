import numpy as np
import pytest

from icx.correlations import KernelFamily


def smooth_pair(alpha, s, beta, r0):
    """Positive pair factor with a soft dip and a bump."""
    def g(r):
        return 1.0 - alpha * np.exp(-(r / s) ** 2) + beta * np.exp(-((r - r0) / s) ** 2)
    return g


def random_family(rng: np.random.Generator, order: int = 6, d: int = 1) -> KernelFamily:
    """Positive, symmetric, not translation invariant, with a genuine three-body factor.

    Parameters are drawn from ``rng`` so each call gives a new family.
    """
    rho0 = rng.uniform(0.05, 1.0)
    bump = rng.uniform(0.0, 0.5)
    width = rng.uniform(0.5, 2.0)
    g = smooth_pair(rng.uniform(0.1, 0.9), rng.uniform(0.3, 1.5), rng.uniform(0.0, 0.5), rng.uniform(0.5, 2.0))
    three = rng.uniform(0.0, 0.3)

    def kernel(pts):
        n = pts.shape[1]
        dens = rho0 * (1.0 + bump * np.exp(-np.sum(pts**2, axis=-1) / width**2))
        out = np.prod(dens, axis=1)
        for i in range(n):
            for j in range(i + 1, n):
                out = out * g(np.linalg.norm(pts[:, i] - pts[:, j], axis=-1))
                for k in range(j + 1, n):
                    spread = (np.linalg.norm(pts[:, i] - pts[:, j], axis=-1)
                              + np.linalg.norm(pts[:, j] - pts[:, k], axis=-1))
                    out = out * (1.0 + three * np.exp(-spread))
        return out

    return KernelFamily(kernel, order, d)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
