"""Solvers for the coupled gain-kernel equations on the triangular domain.

The pair (k1, k2) satisfies a coupled Goursat-form first-order system

    mu(x) dk1/dx - lam(xi) dk1/dxi = (lam'(xi) + sigma(xi)) k1 + theta(xi) k2
    mu(x) dk2/dx + mu(xi)  dk2/dxi = -mu'(xi) k2 + omega(xi) k1

on T = {0 <= xi <= x <= 1}, with data on the diagonal for k1,

    k1(x, x) = -theta(x) / (lam(x) + mu(x)),

and on the bottom edge for k2,

    mu(0) k2(x, 0) = q lam(0) k1(x, 0).

The auxiliary fields kappa, c and the inverse kernels l1, l2 solve Volterra
equations of the second kind driven by (k1, k2).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .coefficients import CoefficientSet, resample
from .controller import GainVector
from .numerics import IntervalGrid, TriangularGrid, flatten_lower, unflatten_lower

PIVOT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class KernelField:
    """Scalar field on a TriangularGrid, stored in canonical flat order."""

    grid: TriangularGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.node_count,):
            raise ValueError("field length does not match the grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("kernel field contains non-finite values")

    @classmethod
    def from_matrix(cls, grid: TriangularGrid, dense: np.ndarray) -> "KernelField":
        return cls(grid, flatten_lower(dense))

    def as_matrix(self) -> np.ndarray:
        return unflatten_lower(self.values, self.grid.n)

    def row(self, i: int) -> np.ndarray:
        start = i * (i + 1) // 2
        return self.values[start : start + i + 1]

    def sup(self) -> float:
        return float(np.abs(self.values).max())


@dataclass(frozen=True, eq=False)
class KernelSet:
    """Solved kernels on one grid; kappa, c, l1, l2 are filled on demand."""

    k1: KernelField
    k2: KernelField
    kappa: KernelField | None = None
    c: KernelField | None = None
    l1: KernelField | None = None
    l2: KernelField | None = None

    def __post_init__(self):
        for f in (self.kappa, self.c, self.l1, self.l2):
            if f is not None and f.grid.n != self.grid.n:
                raise ValueError("all kernel fields must share one grid")
        if self.k1.grid.n != self.k2.grid.n:
            raise ValueError("k1 and k2 must share one grid")

    @property
    def grid(self) -> TriangularGrid:
        return self.k1.grid


def _gather(row: np.ndarray, pos: np.ndarray, h: float):
    """Linear interpolation of a row (uniform spacing h starting at 0)."""
    t = pos / h
    idx = np.minimum(t.astype(int), row.size - 2)
    frac = t - idx
    return row[idx] * (1.0 - frac) + row[idx + 1] * frac


def solve_kernels(coeffs: CoefficientSet, grid: TriangularGrid) -> KernelSet:
    """March the coupled Goursat system in x with a semi-Lagrangian step.

    At level i every node traces its characteristic back one step to level
    i-1.  The k1 characteristic has slope -lam(xi)/mu(x); a foot beyond the
    previous diagonal means the characteristic entered through the diagonal,
    so the diagonal data is evaluated at the crossing point and the source is
    integrated over the remaining arc.  The k2 characteristic (slope
    +mu(xi)/mu(x)) can only leave through the bottom edge; its crossing uses
    the bottom data, interpolating the current k1 bottom values in x.  Both
    boundary conditions are imposed exactly on their nodes.  Source terms use
    values at the foot, which makes the scheme first-order and keeps all
    updates functions of the previous level only.
    """
    n, h = grid.n, grid.h
    cf = resample(coeffs, n)
    lam, dlam, mu, dmu = cf["lam"], cf["dlam"], cf["mu"], cf["dmu"]
    sig, omg, tht = cf["sigma"], cf["omega"], cf["theta"]
    if np.any(lam + mu <= 0):
        raise ValueError("lam + mu must be positive on the whole grid")
    q = coeffs.q
    x = grid.points
    bc_ratio = q * lam[0] / mu[0]

    diag_bc = -tht / (lam + mu)
    k1 = np.zeros((n + 1, n + 1))
    k2 = np.zeros((n + 1, n + 1))
    k1[0, 0] = diag_bc[0]
    k2[0, 0] = bc_ratio * k1[0, 0]

    def coef_at(arr, pos):
        return _gather(arr, pos, h)

    for i in range(1, n + 1):
        mu_i = mu[i]
        old1 = k1[i - 1, :i]
        old2 = k2[i - 1, :i]
        x_prev = x[i - 1]

        # --- k1: interior nodes j = 0..i-1, diagonal node imposed ---
        j = np.arange(i)
        foot = x[j] + h * lam[j] / mu_i
        crossed = foot > x_prev
        if i >= 2:
            fc = np.clip(foot, 0.0, x_prev)
            k1f = _gather(old1, fc, h)
            k2f = _gather(old2, fc, h)
            src = (coef_at(dlam, fc) + coef_at(sig, fc)) * k1f + coef_at(tht, fc) * k2f
            regular = k1f + (h / mu_i) * src
        else:
            regular = np.zeros(i)
        # diagonal crossing: data at (xc, xc), source over the remaining arc
        slope = lam[j] / mu_i
        xc = (x[j] + slope * x[i]) / (1.0 + slope)
        bc = -coef_at(tht, xc) / (coef_at(lam, xc) + coef_at(mu, xc))
        k2c = old2[-1]  # nearest available value for the coupling term
        src_c = (coef_at(dlam, xc) + coef_at(sig, xc)) * bc + coef_at(tht, xc) * k2c
        from_bc = bc + ((x[i] - xc) / mu_i) * src_c
        k1[i, :i] = np.where(crossed, from_bc, regular)
        k1[i, i] = diag_bc[i]

        # --- k2: nodes j = 1..i, bottom node imposed from this level's k1 ---
        j = np.arange(1, i + 1)
        foot = x[j] - h * mu[j] / mu_i
        crossed = foot < 0.0
        fc = np.clip(foot, 0.0, x_prev)
        if i >= 2:
            k1f = _gather(old1, fc, h)
            k2f = _gather(old2, fc, h)
        else:
            k1f = np.full(i, old1[0])
            k2f = np.full(i, old2[0])
        src = -coef_at(dmu, fc) * k2f + coef_at(omg, fc) * k1f
        regular = k2f + (h / mu_i) * src

        k1_bottom_new = k1[i, 0]
        xc = x[i] - x[j] * mu_i / mu[j]
        frac = np.clip((xc - x_prev) / h, 0.0, 1.0)
        k1b = k1[i - 1, 0] * (1.0 - frac) + k1_bottom_new * frac
        bc = bc_ratio * k1b
        src_c = -dmu[0] * bc + omg[0] * k1b
        from_bc = bc + ((x[i] - xc) / mu_i) * src_c
        k2[i, 1 : i + 1] = np.where(crossed, from_bc, regular)
        k2[i, 0] = bc_ratio * k1_bottom_new

    if not (np.all(np.isfinite(k1)) and np.all(np.isfinite(k2))):
        raise FloatingPointError("kernel marching produced non-finite values")
    return KernelSet(
        k1=KernelField.from_matrix(grid, k1),
        k2=KernelField.from_matrix(grid, k2),
    )


def check_boundary_conditions(coeffs: CoefficientSet, ks: KernelSet):
    """Max residual of the diagonal and bottom-edge identities."""
    n = ks.grid.n
    cf = resample(coeffs, n)
    k1m, k2m = ks.k1.as_matrix(), ks.k2.as_matrix()
    diag = np.array([k1m[i, i] for i in range(n + 1)])
    r_diag = np.abs(diag + cf["theta"] / (cf["lam"] + cf["mu"]))
    r_bottom = np.abs(cf["mu"][0] * k2m[:, 0] - coeffs.q * cf["lam"][0] * k1m[:, 0])
    return float(r_diag.max()), float(r_bottom.max())


def solve_kappa_c(coeffs: CoefficientSet, ks: KernelSet, c_self_coupled: bool = False) -> KernelSet:
    """Fill kappa and c by row-wise Volterra solves.

    Per row (fixed x) kappa satisfies

        kappa(x, xi) = omega(x) k2(x, xi) + int_xi^x kappa(x, s) k2(s, xi) ds

    which back-substitution in xi turns into a lower-triangular solve with
    trapezoid weights.  c uses k1 with kappa in the integrand; the variant
    with c itself in its own integrand sits behind ``c_self_coupled`` (the two
    competing definitions only affect diagnostics, never the control law).
    """
    n, h = ks.grid.n, ks.grid.h
    cf = resample(coeffs, n)
    omg = cf["omega"]
    k1m, k2m = ks.k1.as_matrix(), ks.k2.as_matrix()
    kap = np.zeros((n + 1, n + 1))
    cm = np.zeros((n + 1, n + 1))

    for i in range(n + 1):
        kap[i, i] = omg[i] * k2m[i, i]
        for j in range(i - 1, -1, -1):
            pivot = 1.0 - 0.5 * h * k2m[j, j]
            if abs(pivot) < PIVOT_TOL:
                raise ZeroDivisionError(f"singular Volterra pivot at row {i}, xi index {j}")
            w = _segment_weights(j, i, h)
            acc = w[1:] @ (kap[i, j + 1 : i + 1] * k2m[j + 1 : i + 1, j])
            kap[i, j] = (omg[i] * k2m[i, j] + acc) / pivot
        if c_self_coupled:
            cm[i, i] = omg[i] * k1m[i, i]
            for j in range(i - 1, -1, -1):
                pivot = 1.0 - 0.5 * h * k1m[j, j]
                if abs(pivot) < PIVOT_TOL:
                    raise ZeroDivisionError(f"singular Volterra pivot at row {i}, xi index {j}")
                w = _segment_weights(j, i, h)
                acc = w[1:] @ (cm[i, j + 1 : i + 1] * k1m[j + 1 : i + 1, j])
                cm[i, j] = (omg[i] * k1m[i, j] + acc) / pivot
        else:
            for j in range(i, -1, -1):
                w = _segment_weights(j, i, h)
                acc = w @ (kap[i, j : i + 1] * k1m[j : i + 1, j])
                cm[i, j] = omg[i] * k1m[i, j] + acc

    grid = ks.grid
    return replace(
        ks,
        kappa=KernelField.from_matrix(grid, kap),
        c=KernelField.from_matrix(grid, cm),
    )


def _segment_weights(j: int, i: int, h: float) -> np.ndarray:
    """Trapezoid weights on nodes j..i (zero-length segments integrate to 0)."""
    m = i - j + 1
    if m == 1:
        return np.zeros(1)
    w = np.full(m, h)
    w[0] = w[-1] = 0.5 * h
    return w


def solve_inverse_kernels(ks: KernelSet) -> KernelSet:
    """Fill the inverse-transformation kernels l1, l2.

    For each fixed xi the pair satisfies

        l_i(x, xi) = k_i(x, xi) + int_xi^x k2(x, s) l_i(s, xi) ds,

    marched in x; the newest node enters its own integral through the
    trapezoid endpoint, giving a scalar implicit equation per step.
    """
    n, h = ks.grid.n, ks.grid.h
    k1m, k2m = ks.k1.as_matrix(), ks.k2.as_matrix()
    l1 = np.zeros((n + 1, n + 1))
    l2 = np.zeros((n + 1, n + 1))
    for j in range(n + 1):
        l1[j, j] = k1m[j, j]
        l2[j, j] = k2m[j, j]
        for m in range(j + 1, n + 1):
            pivot = 1.0 - 0.5 * h * k2m[m, m]
            if abs(pivot) < PIVOT_TOL:
                raise ZeroDivisionError(f"singular inverse-kernel pivot at x index {m}")
            w = _segment_weights(j, m, h)
            row_k2 = k2m[m, j:m]
            l1[m, j] = (k1m[m, j] + w[:-1] @ (row_k2 * l1[j:m, j])) / pivot
            l2[m, j] = (k2m[m, j] + w[:-1] @ (row_k2 * l2[j:m, j])) / pivot
    grid = ks.grid
    return replace(
        ks,
        l1=KernelField.from_matrix(grid, l1),
        l2=KernelField.from_matrix(grid, l2),
    )


def gain_slice(ks: KernelSet) -> GainVector:
    """Feedback gains: the top row x = 1 of both kernels over xi in [0, 1]."""
    n = ks.grid.n
    return GainVector(
        grid=IntervalGrid(n),
        g1=ks.k1.row(n).copy(),
        g2=ks.k2.row(n).copy(),
    )
