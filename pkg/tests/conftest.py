import numpy as np
import pytest

import gainops as g


@pytest.fixture(scope="session")
def gamma1():
    return g.gamma_family(1.0)


@pytest.fixture(scope="session")
def gamma5():
    return g.gamma_family(5.0)


@pytest.fixture(scope="session")
def kernels_g1_n100(gamma1):
    ks = g.solve_kernels(gamma1, g.TriangularGrid(100))
    ks = g.solve_kappa_c(gamma1, ks)
    return g.solve_inverse_kernels(ks)


@pytest.fixture(scope="session")
def kernels_g1_n50(gamma1):
    return g.solve_kernels(gamma1, g.TriangularGrid(50))


def make_coeffs(m=101, lam=None, mu=None, sigma=None, omega=None, theta=None, q=0.5):
    """Coefficient set from callables (constants fill in for None)."""
    grid = g.IntervalGrid(m - 1)
    x = grid.points

    def arr(fn, default):
        if fn is None:
            return np.full(m, default), np.zeros(m)
        eps = 1e-6
        vals = np.array([fn(t) for t in x])
        dvals = np.array([(fn(min(t + eps, 1.0)) - fn(max(t - eps, 0.0))) / (min(t + eps, 1.0) - max(t - eps, 0.0)) for t in x])
        return vals, dvals

    lam_v, dlam_v = arr(lam, 1.0)
    mu_v, dmu_v = arr(mu, 1.0)
    sig_v, _ = arr(sigma, 0.0)
    omg_v, _ = arr(omega, 0.0)
    tht_v, _ = arr(theta, 0.0)
    return g.CoefficientSet(
        grid=grid, lam=lam_v, dlam=dlam_v, mu=mu_v, dmu=dmu_v,
        sigma=sig_v, omega=omg_v, theta=tht_v, q=q,
    )


def random_smooth_state(grid, rng, modes=3):
    """Seeded band-limited (u, v) pair for transform and norm tests."""
    x = grid.points
    u = np.zeros_like(x)
    v = np.zeros_like(x)
    for k in range(modes + 1):
        u += rng.normal() * np.cos(k * np.pi * x) / (k + 1) + rng.normal() * np.sin(k * np.pi * x) / (k + 1)
        v += rng.normal() * np.cos(k * np.pi * x) / (k + 1) + rng.normal() * np.sin(k * np.pi * x) / (k + 1)
    return g.PlantState(grid, u, v)
