"""Steady states and time evolution of the eight-level master equation."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .atom import N_LEVELS, liouvillian_matrix

# Relative residual allowed on ||L rho_ss|| and on trace conservation.
RESIDUAL_TOL = 1e-10


class NumericalError(RuntimeError):
    """A linear-algebra step failed to meet its accuracy contract."""


class DegenerateSteadyStateError(NumericalError):
    """The generator has more than one stationary state.

    Happens for decoupled parameter corners, e.g. gamma_dp = 0 with a
    polarization that leaves part of the D manifold dark.
    """


def steady_state(lv, check_unique: bool = False) -> np.ndarray:
    """Unique stationary density matrix of the generator.

    Solves L v = 0 with one row replaced by the trace condition.  The
    result is verified to be stationary to RESIDUAL_TOL (relative to the
    spectral scale of L); a failed check raises NumericalError.  With
    check_unique=True an SVD confirms the nullspace is one-dimensional
    first, raising DegenerateSteadyStateError otherwise.
    """
    mat = liouvillian_matrix(lv)
    n = N_LEVELS
    scale = np.linalg.norm(mat, ord=np.inf)
    if check_unique:
        s = np.linalg.svd(mat, compute_uv=False)
        # one singular value ~0 is the steady state itself
        if s[-2] < 1e-8 * s[0]:
            raise DegenerateSteadyStateError(
                "steady state is not unique (second singular value "
                f"{s[-2]:.3e} vs largest {s[0]:.3e})")
    a = mat.copy()
    trace_row = np.zeros(n * n, dtype=complex)
    trace_row[:: n + 1] = 1.0
    a[0] = trace_row
    b = np.zeros(n * n, dtype=complex)
    b[0] = 1.0
    try:
        v = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise DegenerateSteadyStateError(f"singular steady-state system: {exc}")
    rho = v.reshape(n, n)
    rho = 0.5 * (rho + rho.conj().T)
    resid = np.linalg.norm(mat @ rho.reshape(-1)) / max(scale, 1.0)
    if not np.isfinite(resid) or resid > RESIDUAL_TOL:
        raise NumericalError(
            f"steady-state residual {resid:.3e} exceeds {RESIDUAL_TOL:.0e}")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > RESIDUAL_TOL:
        raise NumericalError(f"steady-state trace {tr} deviates from 1")
    return rho


def _check_grid(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("time grid must be a non-empty 1-D array")
    if grid[0] != 0.0:
        raise ValueError("time grid must start at t = 0")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return grid


def propagate(lv, rho0: np.ndarray, grid) -> np.ndarray:
    """Evolve rho0 over the given time grid; returns shape (n, 8, 8).

    The grid must start at zero and increase strictly.  Steps are taken
    with the exact matrix exponential; exponentials are cached per
    distinct step size, so uniform grids cost a single expm.
    """
    mat = liouvillian_matrix(lv)
    grid = _check_grid(grid)
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (N_LEVELS, N_LEVELS):
        raise ValueError(f"rho0 must be 8x8, got {rho0.shape}")
    tr0 = np.trace(rho0).real
    if abs(tr0 - 1.0) > 1e-9:
        raise ValueError(f"rho0 trace {tr0} is not 1")

    out = np.empty((grid.size, N_LEVELS, N_LEVELS), dtype=complex)
    v = rho0.reshape(-1).copy()
    out[0] = rho0
    cache: dict[float, np.ndarray] = {}
    for k in range(1, grid.size):
        dt = grid[k] - grid[k - 1]
        step = cache.get(dt)
        if step is None:
            step = scipy.linalg.expm(mat * dt)
            cache[dt] = step
        v = step @ v
        out[k] = v.reshape(N_LEVELS, N_LEVELS)

    drift = np.abs(np.einsum("kii->k", out).real - 1.0).max()
    if drift > RESIDUAL_TOL:
        raise NumericalError(
            f"trace drift {drift:.3e} exceeds {RESIDUAL_TOL:.0e} during propagation")
    return out


def populations(states: np.ndarray) -> np.ndarray:
    """Real diagonal of each density matrix in a propagate() result."""
    return np.einsum("kii->ki", states).real
