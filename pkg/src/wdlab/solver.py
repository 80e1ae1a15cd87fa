"""Dirichlet solves for the regularized problem by convex energy
minimization.

The discrete objective over nodal fields v with fixed non-interior values
is

    J(v) = integrate(g_eps(Dv)) - integrate(f_c * v_c),

with Dv the cell-center Q1 gradient and f_c, v_c the center-interpolated
factors.  Its gradient is exactly the weak residual assembled by
``divergence_weak``, so "residual" below always means the max-norm of the
reduced energy gradient.

The minimizer is found by damped Newton with Armijo backtracking; the
Hessian is assembled cell-wise from ``d2g_eps`` with a configurable
diagonal floor, and the loop falls back to preconditioned conjugate
gradient directions whenever the factorization fails or loses descent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from . import kernel
from .grid import (
    BoundaryMask,
    GridSpec,
    ScalarField,
    VectorField,
    divergence_weak,
    gradient,
    integrate,
    interior_mask,
    node_to_center,
)

__all__ = [
    "SolveConfig",
    "SolveReport",
    "SolverFailure",
    "energy",
    "energy_parts",
    "residual",
    "load_vector",
    "solve",
    "harmonic_extension",
    "sobolev_conjugate_norms",
    "lp_norm_cells",
    "report_to_json",
]


class SolverFailure(RuntimeError):
    """Raised when the line search meets non-finite energies."""


@dataclass(frozen=True)
class SolveConfig:
    grad_tol: float = 1e-10
    max_iters: int = 200
    hessian_floor: float = 1e-12
    armijo_slope: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.hessian_floor < 0:
            raise ValueError("hessian_floor must be >= 0")


@dataclass(frozen=True)
class SolveReport:
    solution: ScalarField
    energy: float
    residual_history: tuple[float, ...]
    iterations: int
    converged: bool
    warnings: tuple[str, ...] = field(default_factory=tuple)

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1]


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


def energy_parts(v: ScalarField, f: ScalarField, params: kernel.Params):
    """(density part, load part) of the objective, reported separately."""
    _check_same_grid(v, f)
    dens = kernel.g_eps(gradient(v).values, params)
    gpart = integrate(v.grid, dens)
    lpart = integrate(v.grid, node_to_center(f) * node_to_center(v))
    return gpart, lpart


def energy(v: ScalarField, f: ScalarField, params: kernel.Params) -> float:
    gpart, lpart = energy_parts(v, f, params)
    return gpart - lpart


def load_vector(f: ScalarField) -> np.ndarray:
    """Nodal vector of integrals of f against the Q1 basis under one-point
    quadrature: each cell sends spacing^2 * f_center / 4 to its corners."""
    h = f.grid.spacing
    q = 0.25 * h * h * node_to_center(f)
    m = f.grid.cells + 1
    b = np.zeros((m, m))
    b[:-1, :-1] += q
    b[1:, :-1] += q
    b[:-1, 1:] += q
    b[1:, 1:] += q
    return b


def _energy_gradient(values, grid, f_load, params, mask):
    u = ScalarField(grid, values)
    flux = kernel.dg_eps(gradient(u).values, params)
    b = divergence_weak(VectorField(grid, flux), mask).values - f_load
    b = b.copy()
    b[~mask.interior] = 0.0
    return b


def residual(v: ScalarField, f: ScalarField, params: kernel.Params) -> float:
    """Max over interior nodes of the weak residual; zero (to round-off)
    iff v is a discrete critical point of the energy."""
    _check_same_grid(v, f)
    mask = interior_mask(v.grid)
    g = _energy_gradient(v.values, v.grid, load_vector(f), params, mask)
    return float(np.max(np.abs(g[mask.interior]))) if mask.interior.any() else 0.0


# corner ordering LL, LR, UL, UR; gradient signs of the Q1 basis at the center
_SX = np.array([-1.0, 1.0, -1.0, 1.0])
_SY = np.array([-1.0, -1.0, 1.0, 1.0])


def _corner_ids(grid: GridSpec):
    m = grid.cells + 1
    ci, cj = np.meshgrid(np.arange(grid.cells), np.arange(grid.cells), indexing="ij")
    ll = (ci * m + cj).ravel()
    return np.stack([ll, ll + m, ll + 1, ll + m + 1])  # LL, LR, UL, UR


def _assemble_hessian(grid: GridSpec, z_cells, params, floor_cells):
    """Sparse nodal Hessian from cell-wise 2x2 blocks of d2g_eps.

    Cells with |z| under the kernel's radius floor fall back to the
    regular part of the Hessian there (eps times identity), which is its
    true limit at the origin for lam > 0.
    """
    s = np.sqrt(np.sum(z_cells**2, axis=-1)).ravel()
    z = z_cells.reshape(-1, 2)
    ok = s >= kernel.HESSIAN_RADIUS_FLOOR
    # limit of the regular Hessian part at z = 0: eps * a(0) = eps, plus the
    # degenerate part's limit s^(p-2) when lam = 0 and p = 2 (it vanishes for
    # p > 2 and has none for p < 2, where the floor takes over)
    iso0 = params.eps + (1.0 if (params.lam == 0.0 and params.p == 2.0) else 0.0)
    m11 = np.full(s.shape, iso0)
    m22 = np.full(s.shape, iso0)
    m12 = np.zeros(s.shape)
    if ok.any():
        M = kernel.d2g_eps(z[ok], params)
        m11[ok] = M[:, 0, 0]
        m12[ok] = M[:, 0, 1]
        m22[ok] = M[:, 1, 1]
    m11 += floor_cells
    m22 += floor_cells
    ids = _corner_ids(grid)
    nn = (grid.cells + 1) ** 2
    rows, cols, data = [], [], []
    for a in range(4):
        for b in range(4):
            coef = 0.25 * (
                _SX[a] * _SX[b] * m11 + (_SX[a] * _SY[b] + _SY[a] * _SX[b]) * m12 + _SY[a] * _SY[b] * m22
            )
            rows.append(ids[a])
            cols.append(ids[b])
            data.append(coef)
    K = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(nn, nn)
    )
    return K.tocsr()


def _reduced(K, interior_flat):
    return K[interior_flat][:, interior_flat].tocsc()


def solve(
    u_boundary: ScalarField,
    f: ScalarField,
    params: kernel.Params,
    cfg: SolveConfig = SolveConfig(),
    initial: ScalarField | None = None,
) -> SolveReport:
    """Minimize the discrete energy over fields matching ``u_boundary`` on
    the non-interior nodes.

    Non-convergence within ``max_iters`` yields a report with
    ``converged=False`` (not an exception); non-finite energies during the
    line search raise :class:`SolverFailure`.  For eps = 0 the report
    carries a non-uniqueness warning: every field with |Dv| <= lam solves
    the homogeneous problem, so the minimizer need not be unique.
    """
    _check_same_grid(u_boundary, f)
    grid = u_boundary.grid
    mask = interior_mask(grid)
    interior_flat = mask.interior.ravel()

    if initial is None:
        start = harmonic_extension(u_boundary)
    else:
        _check_same_grid(initial, u_boundary)
        vals = initial.values.copy()
        vals[~mask.interior] = u_boundary.values[~mask.interior]
        start = ScalarField(grid, vals)

    v = start.values.copy()
    f_load = load_vector(f)
    warnings = ()
    if params.eps == 0.0:
        warnings = ("eps=0: minimizer may be non-unique on the degenerate set",)

    def J(values):
        dens = kernel.g_eps(gradient(ScalarField(grid, values)).values, params)
        return integrate(grid, dens) - float(np.sum(f_load * values))

    history = []
    converged = False
    iterations = 0
    current_J = J(v)
    prev_dir = None
    prev_g = None
    for iterations in range(cfg.max_iters + 1):
        g = _energy_gradient(v, grid, f_load, params, mask)
        res = float(np.max(np.abs(g[mask.interior])))
        history.append(res)
        if res <= cfg.grad_tol:
            converged = True
            break
        if iterations == cfg.max_iters:
            break

        z = gradient(ScalarField(grid, v)).values
        K = _assemble_hessian(grid, z, params, cfg.hessian_floor)
        g_int = g.ravel()[interior_flat]
        d_int = None
        try:
            lu = splu(_reduced(K, interior_flat))
            d_int = lu.solve(-g_int)
            if not np.all(np.isfinite(d_int)) or float(d_int @ g_int) >= 0.0:
                d_int = None
        except RuntimeError:
            d_int = None
        if d_int is None:
            # preconditioned nonlinear CG direction (Polak-Ribiere, restarts
            # on loss of descent)
            diag = np.maximum(_reduced(K, interior_flat).diagonal(), 1e-30)
            pg = -g_int / diag
            if prev_dir is not None and prev_g is not None:
                beta = max(0.0, float(g_int @ (g_int - prev_g)) / max(float(prev_g @ prev_g), 1e-300))
                d_int = pg + beta * prev_dir
                if float(d_int @ g_int) >= 0.0:
                    d_int = pg
            else:
                d_int = pg
            prev_dir, prev_g = d_int, g_int.copy()
        else:
            prev_dir, prev_g = None, None

        d = np.zeros_like(v).ravel()
        d[interior_flat] = d_int
        d = d.reshape(v.shape)
        slope = float(d_int @ g_int)

        t = 1.0
        accepted = None
        fallback = None
        for _ in range(cfg.max_backtracks):
            trial = v + t * d
            Jt = J(trial)
            if np.isnan(Jt):
                raise SolverFailure("NaN energy in line search")
            if Jt <= current_J + cfg.armijo_slope * t * slope:
                res_t = float(
                    np.max(np.abs(_energy_gradient(trial, grid, f_load, params, mask)[mask.interior]))
                )
                if fallback is None:
                    fallback = (trial, Jt)
                if res_t <= res * (1.0 + 1e-12):
                    accepted = (trial, Jt)
                    break
            t *= cfg.backtrack
        if accepted is None:
            accepted = fallback
        if accepted is None:
            break  # line search exhausted; report non-convergence
        v, current_J = accepted

    sol = ScalarField(grid, v)
    return SolveReport(
        solution=sol,
        energy=float(current_J),
        residual_history=tuple(history),
        iterations=iterations,
        converged=converged,
        warnings=warnings,
    )


def harmonic_extension(u_boundary: ScalarField) -> ScalarField:
    """Q1 harmonic extension of the boundary values (the p=2, eps=1,
    lam=0 minimizer with zero load), used as the default initial iterate."""
    grid = u_boundary.grid
    mask = interior_mask(grid)
    interior_flat = mask.interior.ravel()
    params = kernel.Params(n=2, p=2.0, lam=0.0, eps=1.0)
    z = gradient(u_boundary).values
    K = _assemble_hessian(grid, np.zeros_like(z), params, 0.0)
    g = _energy_gradient(u_boundary.values, grid, np.zeros_like(u_boundary.values), params, mask)
    lu = splu(_reduced(K, interior_flat))
    delta = lu.solve(-g.ravel()[interior_flat])
    vals = u_boundary.values.copy()
    vals.ravel()[interior_flat] += delta
    return ScalarField(grid, vals)


def lp_norm_cells(grid: GridSpec, cell_values: np.ndarray, q: float) -> float:
    """L^q norm of a cell-wise quantity under one-point quadrature."""
    return float(integrate(grid, np.abs(cell_values) ** q) ** (1.0 / q))


def sobolev_conjugate_norms(
    report: SolveReport, f: ScalarField, params: kernel.Params
) -> dict[str, float]:
    """The norms entering the uniform estimates, all under the cell-sum
    quadrature: the gradient's L^p norm and the datum's L^{p'},
    L^{(p*)'} and sub-quadratic-exponent norms."""
    du = gradient(report.solution).magnitude()
    fc = node_to_center(f)
    grid = report.solution.grid
    p_star = kernel.sobolev_conjugate(params)
    return {
        "du_p": lp_norm_cells(grid, du, params.p),
        "f_pprime": lp_norm_cells(grid, fc, params.p_prime),
        "f_pstar_conj": lp_norm_cells(grid, fc, p_star / (p_star - 1.0)),
        "f_datum": lp_norm_cells(grid, fc, params.datum_exponent),
    }


def report_to_json(report: SolveReport) -> str:
    return json.dumps(
        {
            "energy": report.energy,
            "iterations": report.iterations,
            "converged": report.converged,
            "residual_history": list(report.residual_history),
        }
    )
