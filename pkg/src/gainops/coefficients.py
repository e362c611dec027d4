"""Plant coefficient data: sampled functions with derivatives and random families.

The plant carries two positive transport speeds lam, mu (C1), three coupling
coefficients sigma, omega, theta (C0) and a boundary reflection q.  Everything
downstream consumes them as value arrays on a shared uniform grid plus stored
derivative arrays for lam and mu.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import IntervalGrid, interp_linear

MASK64 = (1 << 64) - 1


def splitmix64(z: int) -> int:
    """Standard splitmix64 finalizer; used to derive per-sample seeds."""
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Nodal samples of (lam, mu, sigma, omega, theta) plus q on one grid.

    lam and mu must be positive everywhere; their derivative arrays are stored
    explicitly because the kernel equations contain lam'(xi) and mu'(xi).
    """

    grid: IntervalGrid
    lam: np.ndarray
    dlam: np.ndarray
    mu: np.ndarray
    dmu: np.ndarray
    sigma: np.ndarray
    omega: np.ndarray
    theta: np.ndarray
    q: float

    def __post_init__(self):
        m = self.grid.n + 1
        arrays = (self.lam, self.dlam, self.mu, self.dmu, self.sigma, self.omega, self.theta)
        for a in arrays:
            if a.shape != (m,):
                raise ValueError("coefficient arrays must all live on the shared grid")
            if not np.all(np.isfinite(a)):
                raise ValueError("coefficient arrays must be finite")
        if not np.isfinite(self.q):
            raise ValueError("q must be finite")
        if np.any(self.lam <= 0) or np.any(self.mu <= 0):
            raise ValueError("transport speeds lam, mu must be positive at every node")


@dataclass(frozen=True)
class CoefficientFamily:
    """Distribution over coefficient sets.

    kind "gamma": the one-parameter family with Gamma drawn uniformly from
    gamma_range.  kind "random_smooth": cosine/linear perturbations of that
    shape, amplitudes capped so lam, mu stay well above 0.1.
    """

    kind: str
    gamma_range: tuple[float, float] = (0.5, 5.0)
    amplitude: float = 0.5
    m: int = 101

    def __post_init__(self):
        if self.kind not in ("gamma", "random_smooth"):
            raise ValueError(f"unknown family kind {self.kind!r}")
        lo, hi = self.gamma_range
        if not (0 < lo <= hi):
            raise ValueError("gamma_range must be a subset of (0, inf)")
        if self.amplitude < 0:
            raise ValueError("amplitude must be nonnegative")


def gamma_family(gamma: float, m: int = 101) -> CoefficientSet:
    """The one-parameter test family used throughout the experiments.

    lam = Gamma*x + 1, mu = exp(Gamma*x) + 1, sigma = theta = Gamma*(x + 1),
    omega = 5*(cosh(x) + 1), q = Gamma/2.  Derivatives are filled analytically.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if m < 2:
        raise ValueError("need at least 2 coefficient nodes")
    grid = IntervalGrid(m - 1)
    x = grid.points
    return CoefficientSet(
        grid=grid,
        lam=gamma * x + 1.0,
        dlam=np.full(m, gamma),
        mu=np.exp(gamma * x) + 1.0,
        dmu=gamma * np.exp(gamma * x),
        sigma=gamma * (x + 1.0),
        omega=5.0 * (np.cosh(x) + 1.0),
        theta=gamma * (x + 1.0),
        q=gamma / 2.0,
    )


def sample_random(family: CoefficientFamily, seed: int) -> CoefficientSet:
    """Deterministic draw from a family; a pure function of (family, seed)."""
    rng = np.random.default_rng(splitmix64(seed & MASK64))
    lo, hi = family.gamma_range
    gamma = lo + (hi - lo) * rng.uniform()
    if family.kind == "gamma":
        return gamma_family(gamma, family.m)

    m = family.m
    grid = IntervalGrid(m - 1)
    x = grid.points
    # sup of each perturbation is capped at 0.8 so lam >= 0.2 and mu >= 1.2
    cap = min(family.amplitude, 0.8)

    def perturbation():
        a = 0.7 * cap * rng.uniform(-1.0, 1.0)
        b = 0.6 * cap * rng.uniform(-1.0, 1.0)
        f = rng.integers(1, 4)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        vals = a * np.cos(np.pi * f * x + phase) + b * (x - 0.5)
        deriv = -a * np.pi * f * np.sin(np.pi * f * x + phase) + b
        return vals, deriv

    p_lam, dp_lam = perturbation()
    p_mu, dp_mu = perturbation()
    p_sig, _ = perturbation()
    p_omg, _ = perturbation()
    p_tht, _ = perturbation()
    q = gamma / 2.0 + 0.5 * family.amplitude * rng.uniform(-1.0, 1.0)
    return CoefficientSet(
        grid=grid,
        lam=gamma * x + 1.0 + p_lam,
        dlam=np.full(m, gamma) + dp_lam,
        mu=np.exp(gamma * x) + 1.0 + p_mu,
        dmu=gamma * np.exp(gamma * x) + dp_mu,
        sigma=gamma * (x + 1.0) + 2.0 * p_sig,
        omega=5.0 * (np.cosh(x) + 1.0) + 2.0 * p_omg,
        theta=gamma * (x + 1.0) + 2.0 * p_tht,
        q=q,
    )


@dataclass(frozen=True)
class SupBounds:
    lam_max: float
    lam_min: float
    mu_max: float
    mu_min: float
    sigma_max: float
    omega_max: float
    theta_max: float
    dlam_sup: float
    dmu_sup: float


def sup_bounds(c: CoefficientSet) -> SupBounds:
    """Nodal extrema of the coefficient arrays."""
    return SupBounds(
        lam_max=float(c.lam.max()),
        lam_min=float(c.lam.min()),
        mu_max=float(c.mu.max()),
        mu_min=float(c.mu.min()),
        sigma_max=float(c.sigma.max()),
        omega_max=float(c.omega.max()),
        theta_max=float(c.theta.max()),
        dlam_sup=float(np.abs(c.dlam).max()),
        dmu_sup=float(np.abs(c.dmu).max()),
    )


def resample(c: CoefficientSet, n: int) -> dict[str, np.ndarray]:
    """Coefficient arrays linearly interpolated onto an n-cell grid."""
    x = np.arange(n + 1) / n
    names = ("lam", "dlam", "mu", "dmu", "sigma", "omega", "theta")
    return {name: np.asarray(interp_linear(getattr(c, name), x)) for name in names}
