"""Dirichlet solvers: linear problems -Lap v + c v = g and the semilinear
problem -Lap u + V(x,u) = 0 via Newton iteration.

The nonlinear solve enforces a smallness gate on the boundary data
(default max-norm radius 0.1) under which Newton, started from the harmonic
extension of the data, stays in its quadratic basin for unit-size
coefficient fields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Grid2D, check_field, check_trace, trace_to_field
from .potential import PotentialSeries
from .sparse_linalg import SolverError, SparseOperator, assemble, solve_spd

DEFAULT_SMALLNESS_RADIUS = 0.1
DEFAULT_NEWTON_TOL = 1e-11
DEFAULT_MAX_NEWTON = 25
LINEAR_TOL = 1e-12  # relative CG tolerance for the inner solves


class SmallnessError(ValueError):
    """Boundary data exceeds the well-posedness radius."""


class NewtonError(SolverError):
    """Newton iteration failed to converge."""


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    final_residual: float   # discrete L2 norm of -Lap u + V(x,u) on interior nodes
    boundary_norm: float    # max-norm of the Dirichlet data
    solution_norm: float    # max-norm of the computed solution
    converged: bool
    residual_history: tuple[float, ...] = ()  # per-iterate residual norms, initial first


_poisson_cache: dict[int, SparseOperator] = {}


def poisson_operator(grid: Grid2D) -> SparseOperator:
    """The c = 0 stencil operator, cached per grid size (it is reused heavily)."""
    op = _poisson_cache.get(grid.n)
    if op is None:
        op = assemble(np.zeros(grid.num_nodes), grid)
        _poisson_cache[grid.n] = op
    return op


def _interior(a: np.ndarray, grid: Grid2D) -> np.ndarray:
    return a.reshape(grid.n + 1, grid.n + 1)[1:-1, 1:-1].ravel()


def _with_interior(boundary_field: np.ndarray, interior: np.ndarray, grid: Grid2D) -> np.ndarray:
    out = boundary_field.copy().reshape(grid.n + 1, grid.n + 1)
    out[1:-1, 1:-1] = interior.reshape(grid.n - 1, grid.n - 1)
    return out.ravel()


def _neighbor_sum(a: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Sum of the four stencil neighbors at each interior node."""
    A = a.reshape(grid.n + 1, grid.n + 1)
    return (A[:-2, 1:-1] + A[2:, 1:-1] + A[1:-1, :-2] + A[1:-1, 2:]).ravel()


def stencil_laplacian(u: np.ndarray, grid: Grid2D) -> np.ndarray:
    """(-Lap_h u) on interior nodes, using all stored node values."""
    u2 = u.reshape(grid.n + 1, grid.n + 1)
    lap = 4.0 * u2[1:-1, 1:-1] - (u2[:-2, 1:-1] + u2[2:, 1:-1] + u2[1:-1, :-2] + u2[1:-1, 2:])
    return lap.ravel() / (grid.h * grid.h)


def semilinear_residual(P: PotentialSeries, u: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Interior residual field of -Lap u + V(x,u)."""
    return stencil_laplacian(u, grid) + _interior(P.value_field(u), grid)


def _l2(r: np.ndarray, grid: Grid2D) -> float:
    return float(grid.h * np.linalg.norm(r))


def solve_linear(c: np.ndarray | None, g: np.ndarray | None, f: np.ndarray,
                 grid: Grid2D, tol: float = LINEAR_TOL,
                 _allow_negative: bool = False) -> np.ndarray:
    """Solve -Lap v + c v = g with v = f on the boundary.

    ``c`` and ``g`` may be None for zero. c must be >= 0 (SPD gate) unless
    the Newton path explicitly relaxes it. Returns the full nodal field;
    boundary nodes carry f exactly.
    """
    f = check_trace(f, grid)
    if c is None and not _allow_negative:
        A = poisson_operator(grid)
    else:
        A = assemble(np.zeros(grid.num_nodes) if c is None else check_field(c, grid),
                     grid, allow_negative=_allow_negative)
    lift = trace_to_field(f, grid)
    b = _neighbor_sum(lift, grid) / (grid.h * grid.h)
    if g is not None:
        b = b + _interior(check_field(g, grid), grid)
    x = solve_spd(A, b, tol=tol)
    return _with_interior(lift, x, grid)


def harmonic_extension(f: np.ndarray, grid: Grid2D, tol: float = LINEAR_TOL) -> np.ndarray:
    """Discrete harmonic field with boundary trace f."""
    return solve_linear(None, None, f, grid, tol=tol)


def solve_semilinear(P: PotentialSeries, f: np.ndarray, grid: Grid2D,
                     newton_tol: float = DEFAULT_NEWTON_TOL,
                     max_newton: int = DEFAULT_MAX_NEWTON,
                     smallness_radius: float = DEFAULT_SMALLNESS_RADIUS,
                     ) -> tuple[np.ndarray, SolveReport]:
    """Newton solve of -Lap u + V(x,u) = 0, u = f on the boundary.

    Starts from the harmonic extension of f (the exact first linearization,
    so the first correction is already quadratically small). Diverging
    residuals (3 consecutive increases) or the iteration cap raise
    NewtonError; data outside the smallness gate raises SmallnessError.
    """
    if newton_tol <= 0.0:
        raise ValueError("newton_tol must be positive")
    f = check_trace(f, grid)
    fnorm = float(np.max(np.abs(f))) if f.size else 0.0
    if fnorm > smallness_radius:
        raise SmallnessError(
            f"boundary data max-norm {fnorm:.4g} exceeds smallness radius {smallness_radius}")

    u = harmonic_extension(f, grid)
    res = semilinear_residual(P, u, grid)
    res_norm = _l2(res, grid)
    history = [res_norm]
    increases = 0
    for it in range(max_newton):
        if res_norm <= newton_tol:
            return u, SolveReport(it, res_norm, fnorm, float(np.max(np.abs(u))), True,
                                  tuple(history))
        slope = P.slope_field(u)
        A = assemble(slope, grid, allow_negative=True)
        delta = solve_spd(A, -res, tol=LINEAR_TOL)
        u = _with_interior(u, _interior(u, grid) + delta, grid)
        new_res = semilinear_residual(P, u, grid)
        new_norm = _l2(new_res, grid)
        history.append(new_norm)
        increases = increases + 1 if new_norm > res_norm else 0
        if increases >= 3:
            raise NewtonError(f"Newton diverging: residual rose 3 times, now {new_norm:.3e}",
                              residual=new_norm)
        res, res_norm = new_res, new_norm
    if res_norm <= newton_tol:
        return u, SolveReport(max_newton, res_norm, fnorm, float(np.max(np.abs(u))), True,
                              tuple(history))
    raise NewtonError(f"Newton did not reach {newton_tol} in {max_newton} iterations "
                      f"(residual {res_norm:.3e})", residual=res_norm)


def newton_jacobian_check(P: PotentialSeries, u: np.ndarray, grid: Grid2D,
                          relative: bool = False, n_directions: int = 10,
                          tau: float = 1e-4, seed: int = 0) -> float:
    """Certify the analytic Jacobian -Lap + dV/dz against finite differences.

    Default mode returns the worst Taylor-remainder curvature
    max ||R(u + tau d) - R(u) - tau J d||_inf / tau^2 over unit max-norm
    interior directions d (bounded by half the second z-derivative of V).
    ``relative`` instead returns the worst relative gap between the
    divided difference (R(u + tau d) - R(u)) / tau and J d.
    """
    u = check_field(u, grid)
    rng = np.random.default_rng(seed)
    res0 = semilinear_residual(P, u, grid)
    slope = _interior(P.slope_field(u), grid)
    worst = 0.0
    for _ in range(n_directions):
        d_int = rng.uniform(-1.0, 1.0, grid.num_interior)
        d_int /= np.max(np.abs(d_int))
        d_field = _with_interior(np.zeros(grid.num_nodes), d_int, grid)
        jd = stencil_laplacian(d_field, grid) + slope * d_int
        res1 = semilinear_residual(P, u + tau * d_field, grid)
        if relative:
            gap = np.max(np.abs((res1 - res0) / tau - jd)) / max(np.max(np.abs(jd)), 1e-300)
        else:
            gap = np.max(np.abs(res1 - res0 - tau * jd)) / (tau * tau)
        worst = max(worst, float(gap))
    return worst
