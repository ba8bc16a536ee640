"""Computable pieces of the convergence analysis of the linearly implicit scheme.

* discrete L2 norm and truncation error of an exact solution,
* the split ``G = G0 + G1`` for one-sided differences, with ``G0`` block
  diagonalized by the discrete sine basis, the bound on ``||G1||`` and the
  smallness margin ``delta0 = ||G0^{-1}|| ||G1||``,
* monitoring of the global error recursion ``eta^{m+1} = H^m eta^m + R^{m+1}``,
* grid refinement studies with successive-level differences.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .blocktri import BlockTridiagonal, SingularSystemError
from .core import (
    BoundarySpec,
    Dirichlet,
    InputError,
    PDAESystem,
    Problem,
    SourceTerm,
    SpaceGrid,
    StateField,
    TimeGrid,
    eval_C_field,
)
from .discretization import (
    BACKWARD,
    FORWARD,
    DiffScheme,
    assemble_G,
    assemble_Qh,
    build_Ctilde,
    build_P,
    laplacian_eigenvalues,
)
from .splitting import FULL, StepFailure, Trajectory, integrate

POWER_ITERATIONS = 20
POWER_SEED = 12345


def discrete_l2_norm(v, h: float) -> float:
    """``sqrt(h * sum v_k^2)``."""
    if h <= 0:
        raise InputError("h must be positive")
    v = np.asarray(v, dtype=float).ravel()
    return float(np.sqrt(h * np.dot(v, v)))


def _spectral(mat: np.ndarray) -> float:
    return float(np.linalg.norm(mat, 2)) if mat.size else 0.0


# truncation error ----------------------------------------------------------


def exact_boundary(v_exact: Callable, n: int) -> BoundarySpec:
    """Time dependent Dirichlet data taken from an exact solution ``v(t, x)``."""

    def entry(i, x):
        return Dirichlet(lambda t: float(np.asarray(v_exact(t, np.array([x])))[0, i]))

    return BoundarySpec(tuple(entry(i, 0.0) for i in range(n)), tuple(entry(i, 1.0) for i in range(n)))


def manufactured_source(system: PDAESystem, v_t, v_x, v_xx, v) -> SourceTerm:
    """``f = A v_t + B v_xx + C[v] v_x + D v`` from callables ``(t, x) -> (len(x), n)``."""

    def f(t, x):
        V = np.asarray(v(t, x), dtype=float)
        Cv = eval_C_field(system, V)
        conv = np.einsum("pij,pj->pi", Cv, np.asarray(v_x(t, x), dtype=float))
        return (
            np.asarray(v_t(t, x), dtype=float) @ system.A.T
            + np.asarray(v_xx(t, x), dtype=float) @ system.B.T
            + conv
            + V @ system.D.T
        )

    return SourceTerm(f, system.n)


def truncation_error(
    system: PDAESystem,
    v_exact: Callable,
    f: SourceTerm | None,
    grid: SpaceGrid,
    tgrid: TimeGrid,
    scheme: DiffScheme,
    m: int,
    bv: BoundarySpec | None = None,
) -> StateField:
    """``alpha^{m+1} = A (v^{m+1} - v^m)/tau + L_h[v^m] v^{m+1} - f^{m+1}`` at the interior points.

    Boundary values come from ``bv`` or, by default, from ``v_exact`` itself.
    """
    n, tau = system.n, tgrid.tau
    bv = bv or exact_boundary(v_exact, n)
    f = f or SourceTerm.zero(n)
    x = grid.interior
    t0, t1 = m * tau, (m + 1) * tau
    V0 = np.asarray(v_exact(t0, x), dtype=float)
    V1 = np.asarray(v_exact(t1, x), dtype=float)
    Q, g = assemble_Qh(system, V0, grid, scheme, bv, t1)
    alpha = ((V1 - V0) @ system.A.T / tau).ravel() + Q @ V1.ravel() + g - f(t1, x).ravel()
    return StateField(alpha, n, m + 1)


# G0 / G1 split -------------------------------------------------------------


def _one_sided_sign(scheme) -> tuple[str, float]:
    kind = scheme if isinstance(scheme, str) else (scheme.default if scheme.uniform else None)
    if kind == FORWARD:
        return kind, -1.0
    if kind == BACKWARD:
        return kind, 1.0
    raise InputError("the G0/G1 split needs a uniform one-sided scheme (forward or backward)")


def G0_blocks(system: PDAESystem, C0, tau: float, M: int, scheme=FORWARD) -> np.ndarray:
    """``G0k = A/tau + s C0/h + D + lambda_k B`` with ``s = -1`` (forward) or ``+1`` (backward)."""
    _, s = _one_sided_sign(scheme)
    h = 1.0 / M
    C0 = np.asarray(C0, dtype=float)
    base = system.A / tau + s * C0 / h + system.D
    lam = laplacian_eigenvalues(M)
    return base[None] + lam[:, None, None] * system.B[None]


def split_G(system: PDAESystem, C0, U, tau: float, grid: SpaceGrid, scheme=FORWARD) -> tuple[np.ndarray, np.ndarray]:
    """Dense ``(G0, G1)`` with ``G0 + G1 = G`` for homogeneous boundary data."""
    kind, s = _one_sided_sign(scheme)
    n, N, h = system.n, grid.n_interior, grid.h
    C0 = np.asarray(C0, dtype=float)
    Ub = U.blocks if isinstance(U, StateField) else np.asarray(U, dtype=float).reshape(N, n)
    Cj = eval_C_field(system, Ub)
    G0 = np.kron(np.eye(N), system.A / tau + system.D + s * C0 / h) + np.kron(build_P(grid.M), system.B) / h**2
    G1 = np.zeros_like(G0)
    off = 1 if kind == FORWARD else -1
    for j in range(N):
        r = slice(j * n, (j + 1) * n)
        G1[r, r] = s * (Cj[j] - C0) / h
        k = j + off
        if 0 <= k < N:
            G1[r, k * n : (k + 1) * n] = -s * Cj[j] / h
    return G0, G1


@dataclass
class StabilityReport:
    C0_choice: np.ndarray
    tau: float
    h: float
    scheme: str
    G0k: np.ndarray
    sigma_min: np.ndarray
    failing_k: list[int]
    norm_G0_inv: float
    norm_G1_bound: float
    delta0: float
    passed: bool
    norm_G_inv_bound: float | None
    norm_G0k_inv_A: np.ndarray
    norm_G0k_inv_B: np.ndarray
    norm_E: dict = field(default_factory=dict)
    courant: float = 0.0

    def to_dict(self) -> dict:
        def fin(x):
            return float(x) if x is not None and np.isfinite(x) else None

        return {
            "C0_choice": self.C0_choice.tolist(),
            "tau": self.tau,
            "h": self.h,
            "scheme": self.scheme,
            "sigma_min": [float(s) for s in self.sigma_min],
            "failing_k": list(self.failing_k),
            "norm_G0_inv": fin(self.norm_G0_inv),
            "norm_G1_bound": fin(self.norm_G1_bound),
            "delta0": fin(self.delta0),
            "pass": bool(self.passed),
            "norm_G_inv_bound": fin(self.norm_G_inv_bound),
            "norm_G0_inv_A": fin(self.norm_G0k_inv_A.max(initial=0.0)),
            "norm_G0_inv_B": fin(self.norm_G0k_inv_B.max(initial=0.0)),
            "norm_E": {k: fin(v) for k, v in self.norm_E.items()},
            "courant": fin(self.courant),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def stability_report(
    system: PDAESystem,
    C0,
    U_j,
    tau: float,
    h: float,
    scheme=FORWARD,
    singular_tol: float = 1e-14,
) -> StabilityReport:
    """Evaluate ``||G0^{-1}||``, the bound on ``||G1^j||`` and ``delta0`` at the state ``U_j``.

    ``||G1^j|| <= (1/h) (max_k ||C[u_k] - C0||_n + max_k' ||C[u_k']||_n)`` where
    ``k'`` runs over the points with an off-diagonal neighbour block.
    """
    kind, _ = _one_sided_sign(scheme)
    M = int(round(1.0 / h))
    if M < 2 or not math.isclose(M * h, 1.0, rel_tol=1e-12):
        raise InputError("h must be 1/M for an integer M >= 2")
    n, N = system.n, M - 1
    C0 = np.asarray(C0, dtype=float)
    Ub = U_j.blocks if isinstance(U_j, StateField) else np.asarray(U_j, dtype=float).reshape(N, n)

    blocks = G0_blocks(system, C0, tau, M, kind)
    svals = np.linalg.svd(blocks, compute_uv=False)
    smin, smax = svals[:, -1], svals[:, 0]
    failing = [int(k) + 1 for k in np.flatnonzero(smin <= singular_tol * np.maximum(smax, 1.0))]
    inv_A = np.full(N, np.inf)
    inv_B = np.full(N, np.inf)
    for k in range(N):
        if k + 1 in failing:
            continue
        inv_A[k] = _spectral(np.linalg.solve(blocks[k], system.A))
        inv_B[k] = _spectral(np.linalg.solve(blocks[k], system.B))
    norm_G0_inv = np.inf if failing else float(np.max(1.0 / smin))

    Cj = eval_C_field(system, Ub)
    c_norms = np.linalg.norm(Cj, 2, axis=(1, 2))
    c1_norms = np.linalg.norm(Cj - C0, 2, axis=(1, 2))
    coupled = c_norms[:-1] if kind == FORWARD else c_norms[1:]
    G1_bound = (c1_norms.max() + coupled.max(initial=0.0)) / h
    delta0 = norm_G0_inv * G1_bound if np.isfinite(norm_G0_inv) else np.inf
    passed = bool(delta0 < 1.0)
    G_inv_bound = norm_G0_inv / (1.0 - delta0) if passed else None
    norm_E = {"E1": _spectral(system.A), "E2": _spectral(system.B), "E3": float(c_norms.max())}
    return StabilityReport(
        C0_choice=C0,
        tau=tau,
        h=h,
        scheme=kind,
        G0k=blocks,
        sigma_min=smin,
        failing_k=failing,
        norm_G0_inv=norm_G0_inv,
        norm_G1_bound=float(G1_bound),
        delta0=float(delta0),
        passed=passed,
        norm_G_inv_bound=G_inv_bound,
        norm_G0k_inv_A=inv_A,
        norm_G0k_inv_B=inv_B,
        norm_E=norm_E,
        courant=float(tau / h * c_norms.max()),
    )


# error recursion ---------------------------------------------------------


@dataclass
class ErrorRecursionReport:
    """``product_norms[m]`` estimates ``||H^m ... H^0||``; ``residual_norms[m] = ||R^{m+1}||``."""

    times: np.ndarray
    product_norms: np.ndarray
    residual_norms: np.ndarray
    error_norms: np.ndarray

    @property
    def running_sup(self) -> np.ndarray:
        return np.maximum.accumulate(self.product_norms)

    @property
    def sup(self) -> float:
        return float(self.product_norms.max(initial=0.0))


class _Step:
    """``H = G^{-1} (I kron A/tau - Ctilde)`` with a stored factorization."""

    def __init__(self, lu, K: BlockTridiagonal):
        self.lu, self.K = lu, K

    def apply(self, v):
        return self.lu.solve(self.K @ v)

    def apply_T(self, v):
        w = self.lu.solve(v, trans=1)
        return _transpose_matvec(self.K, w)


def _transpose_matvec(op: BlockTridiagonal, v) -> np.ndarray:
    V = np.asarray(v, dtype=float).reshape(op.N, op.n)
    out = np.einsum("jba,jb->ja", op.diag, V)
    out[:-1] += np.einsum("jba,jb->ja", op.lower[1:], V[1:])
    out[1:] += np.einsum("jba,jb->ja", op.upper[:-1], V[:-1])
    return out.ravel()


def _product_norm(steps: Sequence[_Step], size: int, rng, iters: int) -> float:
    v = rng.standard_normal(size)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = v
        for s in steps:
            w = s.apply(w)
        for s in reversed(steps):
            w = s.apply_T(w)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        est = np.sqrt(nrm)
        v = w / nrm
    return float(est)


def monitor_error_recursion(
    traj_exact_proxy: Trajectory,
    traj: Trajectory,
    system: PDAESystem,
    scheme: DiffScheme | None = None,
    iterations: int = POWER_ITERATIONS,
    seed: int = POWER_SEED,
) -> ErrorRecursionReport:
    """Product norms of ``H^m = G^{-m} (I kron A/tau - Ctilde[V^{m+1}])`` and residual norms.

    ``V`` is the proxy for the exact solution, ``U`` the computed one,
    ``eta = V - U``. ``R^{m+1}`` is taken as ``eta^{m+1} - H^m eta^m`` so no
    source term is needed. Norms of vectors are discrete L2 norms.
    """
    if traj.values.shape != traj_exact_proxy.values.shape or not np.allclose(traj.times, traj_exact_proxy.times):
        raise InputError("trajectories must share their grids")
    scheme = scheme or traj.scheme
    grid, bv = traj.grid, traj.bv
    n, N, h = system.n, grid.n_interior, grid.h
    size = n * N
    T = len(traj) - 1
    tau = float(traj.times[1] - traj.times[0]) if T else 1.0
    rng = np.random.default_rng(seed)
    IA = BlockTridiagonal.block_identity(N, system.A / tau)
    steps, prods, resid = [], np.zeros(T), np.zeros(T)
    eta = traj_exact_proxy.values - traj.values
    for m in range(T):
        t1 = float(traj.times[m + 1])
        U = traj.values[m]
        G, _ = assemble_G(system, U, tau, grid, scheme, bv, t1)
        try:
            lu = G.factorize()
        except SingularSystemError as exc:
            raise StepFailure(f"G: {exc}", time_index=m, condition=exc.condition, factor="G") from None
        Ct = build_Ctilde(system, traj_exact_proxy.values[m + 1], grid, scheme, U=U, bv=bv, t=t1)
        step = _Step(lu, IA - Ct)
        steps.append(step)
        prods[m] = _product_norm(steps, size, rng, iterations)
        resid[m] = discrete_l2_norm(eta[m + 1].ravel() - step.apply(eta[m].ravel()), h)
    errs = np.array([discrete_l2_norm(e, h) for e in eta])
    return ErrorRecursionReport(traj.times[1:], prods, resid, errs)


# refinement study ----------------------------------------------------------


@dataclass
class RefinementRow:
    N: int
    CFL2: float
    e: list[float]
    order: list[float]
    failure: str | None = None

    def as_list(self) -> list:
        return [self.N, self.CFL2, *self.e, *self.order]


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return ""
    return f"{v:.9g}"


def refinement_csv(rows: Sequence[RefinementRow], path, tracked: Sequence[int] = (0, 1)) -> None:
    header = ["N", "CFL2"] + [f"e{i + 1}" for i in tracked] + [f"order{i + 1}" for i in tracked]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([str(r.N)] + [_fmt(v) for v in r.as_list()[1:]])


def check_levels(levels: Sequence[int]) -> list[int]:
    levels = [int(N) for N in levels]
    if len(levels) < 2:
        raise InputError("at least two levels are needed to form differences")
    if levels[0] < 2:
        raise InputError("levels must be at least 2")
    if any(b != 2 * a for a, b in zip(levels, levels[1:])):
        raise InputError(f"levels must double: {levels}")
    return levels


def refinement_study(
    problem: Problem,
    levels: Sequence[int],
    tracked_components: Sequence[int] = (0, 1),
    K0: float = 0.5,
    t_e: float = 1.0,
    scheme: DiffScheme | None = None,
    solver: str = FULL,
    cfl_component: int = 1,
    extra_level: bool = True,
    workers: int = 1,
) -> list[RefinementRow]:
    """Successive-level differences ``e_i(N) = ||U_i^N - U_i^{2N}||`` at ``t_e`` with ``tau = K0 h``.

    The fine solution is restricted to the coarse points (``x_k = x_{2k}``) and
    the norm uses the coarse weight ``h``. With ``extra_level`` the last row
    gets its difference from one more doubled run. ``CFL2`` is
    ``(tau/h) max_k |u_{cfl,k}|`` at the final time.
    """
    levels = check_levels(levels)
    runs = levels + [2 * levels[-1]] if extra_level else list(levels)
    if scheme is None:
        from .plasma import plasma_scheme

        scheme = plasma_scheme()

    def run(N):
        grid = SpaceGrid(N)
        try:
            traj = integrate(problem.system, problem.iv, problem.bv, problem.source, grid,
                             TimeGrid.from_ratio(K0, grid, t_e), scheme, solver)
        except StepFailure as exc:
            return None, f"N={N}: step {exc.time_index} failed: {exc}"
        return traj.values[-1], None

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, runs))
    else:
        results = [run(N) for N in runs]
    finals = dict(zip(runs, (r[0] for r in results)))
    failures = {N: r[1] for N, r in zip(runs, results) if r[1]}

    rows = []
    for N in levels:
        grid = SpaceGrid(N)
        tau = K0 * grid.h
        U, fine = finals[N], finals.get(2 * N)
        cfl = tau / grid.h * np.abs(U[:, cfl_component]).max() if U is not None else np.nan
        e = []
        for i in tracked_components:
            if U is None or fine is None:
                e.append(np.nan)
            else:
                e.append(discrete_l2_norm(U[:, i] - fine[1::2, i], grid.h))
        rows.append(RefinementRow(N, float(cfl), e, [], failures.get(N) or failures.get(2 * N)))
    for r, nxt in zip(rows, rows[1:] + [None]):
        r.order = [
            math.log2(a / b) if nxt is not None and a > 0 and b > 0 else np.nan for a, b in zip(r.e, nxt.e if nxt else r.e)
        ]
    return rows
