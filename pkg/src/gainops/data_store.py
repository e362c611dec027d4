"""Generation and bit-exact binary persistence of coefficient/kernel datasets.

File layout (little-endian): magic "HKDS", version u32, n_samples u32,
m_coeff u32, n_grid u32, then per sample in index order: q f64, the five
coefficient arrays (m_coeff f64 each, order lam mu sigma omega theta), then
k1 and k2 in canonical triangular flattening.
"""

from __future__ import annotations

import concurrent.futures
import json
import struct
from dataclasses import dataclass

import numpy as np

from .coefficients import (
    CoefficientFamily,
    CoefficientSet,
    sample_random,
    splitmix64,
)
from .kernel_solver import solve_kernels
from .numerics import IntervalGrid, TriangularGrid

MAGIC = b"HKDS"
VERSION = 1


@dataclass(eq=False)
class SampleRecord:
    q: float
    lam: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    omega: np.ndarray
    theta: np.ndarray
    k1: np.ndarray
    k2: np.ndarray

    def coefficient_set(self) -> CoefficientSet:
        """Rebuild a CoefficientSet; derivatives come from centered differences."""
        m = self.lam.size
        grid = IntervalGrid(m - 1)
        return CoefficientSet(
            grid=grid,
            lam=self.lam,
            dlam=np.gradient(self.lam, grid.h),
            mu=self.mu,
            dmu=np.gradient(self.mu, grid.h),
            sigma=self.sigma,
            omega=self.omega,
            theta=self.theta,
            q=self.q,
        )


@dataclass(eq=False)
class Dataset:
    m_coeff: int
    n_grid: int
    samples: list[SampleRecord]

    def __post_init__(self):
        t = (self.n_grid + 1) * (self.n_grid + 2) // 2
        for k, r in enumerate(self.samples):
            if r.lam.size != self.m_coeff or r.k1.size != t or r.k2.size != t:
                raise ValueError(f"sample {k} does not match the dataset shapes")


def _make_sample(family: CoefficientFamily, seed: int, index: int, grid: TriangularGrid) -> SampleRecord:
    child = splitmix64((seed ^ index) & ((1 << 64) - 1))
    coeffs = sample_random(family, child)
    ks = solve_kernels(coeffs, grid)
    return SampleRecord(
        q=coeffs.q,
        lam=coeffs.lam.copy(),
        mu=coeffs.mu.copy(),
        sigma=coeffs.sigma.copy(),
        omega=coeffs.omega.copy(),
        theta=coeffs.theta.copy(),
        k1=ks.k1.values,
        k2=ks.k2.values,
    )


def generate(
    family: CoefficientFamily,
    n_samples: int,
    m_coeff: int = 101,
    n_grid: int = 50,
    seed: int = 0,
    threads: int = 1,
) -> Dataset:
    """Draw coefficients and solve their kernels, one derived seed per sample.

    Sample i uses splitmix64(seed XOR i), so generation order (and any
    parallelism) cannot change the content.  Solver failures abort with the
    failing index.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    family = CoefficientFamily(family.kind, family.gamma_range, family.amplitude, m_coeff)
    grid = TriangularGrid(n_grid)
    samples: list[SampleRecord | None] = [None] * n_samples
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {
                pool.submit(_make_sample, family, seed, i, grid): i for i in range(n_samples)
            }
            for fut in concurrent.futures.as_completed(futures):
                i = futures[fut]
                try:
                    samples[i] = fut.result()
                except Exception as exc:
                    raise RuntimeError(f"sample {i} failed: {exc}") from exc
    else:
        for i in range(n_samples):
            try:
                samples[i] = _make_sample(family, seed, i, grid)
            except Exception as exc:
                raise RuntimeError(f"sample {i} failed: {exc}") from exc
    return Dataset(m_coeff=m_coeff, n_grid=n_grid, samples=samples)


def write(dataset: Dataset, path, manifest: dict | None = None) -> None:
    """Serialize to the binary format; optionally drop a JSON sidecar."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIII", VERSION, len(dataset.samples), dataset.m_coeff, dataset.n_grid))
        for r in dataset.samples:
            f.write(struct.pack("<d", r.q))
            for arr in (r.lam, r.mu, r.sigma, r.omega, r.theta, r.k1, r.k2):
                f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    if manifest is not None:
        with open(str(path) + ".manifest.json", "w") as f:
            json.dump(manifest, f, indent=2)


def _read_exact(f, nbytes, what):
    buf = f.read(nbytes)
    if len(buf) != nbytes:
        raise ValueError(f"dataset file truncated while reading {what}")
    return buf


def read(path) -> Dataset:
    """Load a dataset file, validating magic, version and exact length."""
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != MAGIC:
            raise ValueError("not a dataset file (bad magic)")
        version, n_samples, m_coeff, n_grid = struct.unpack("<IIII", _read_exact(f, 16, "header"))
        if version != VERSION:
            raise ValueError(f"unsupported dataset version {version}")
        t = (n_grid + 1) * (n_grid + 2) // 2
        samples = []
        for i in range(n_samples):
            try:
                (q,) = struct.unpack("<d", _read_exact(f, 8, "q"))
                arrs = [
                    np.frombuffer(_read_exact(f, 8 * m_coeff, "coefficients"), dtype="<f8").copy()
                    for _ in range(5)
                ]
                k1 = np.frombuffer(_read_exact(f, 8 * t, "k1"), dtype="<f8").copy()
                k2 = np.frombuffer(_read_exact(f, 8 * t, "k2"), dtype="<f8").copy()
            except ValueError as exc:
                raise ValueError(f"dataset file truncated inside record {i}: {exc}") from exc
            samples.append(SampleRecord(q, *arrs, k1, k2))
        if f.read(1):
            raise ValueError("dataset file has trailing bytes")
    return Dataset(m_coeff=m_coeff, n_grid=n_grid, samples=samples)


def expected_file_size(n_samples: int, m_coeff: int, n_grid: int) -> int:
    t = (n_grid + 1) * (n_grid + 2) // 2
    return 20 + n_samples * 8 * (1 + 5 * m_coeff + 2 * t)


def validate_boundary_identities(dataset: Dataset, tol: float = 1e-12) -> None:
    """Check both kernel boundary identities on every record."""
    from .kernel_solver import KernelField, KernelSet, check_boundary_conditions

    grid = TriangularGrid(dataset.n_grid)
    for i, r in enumerate(dataset.samples):
        ks = KernelSet(k1=KernelField(grid, r.k1), k2=KernelField(grid, r.k2))
        d, b = check_boundary_conditions(r.coefficient_set(), ks)
        if d > tol or b > tol:
            raise ValueError(f"sample {i} violates a boundary identity ({d:.2e}, {b:.2e})")
