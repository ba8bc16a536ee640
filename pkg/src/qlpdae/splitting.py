"""Linearly implicit time stepping: the full scheme and the fractional-step split.

Full scheme, with ``C`` frozen at the old level::

    (I kron A/tau + Q_h[U^m]) U^{m+1} = (I kron A/tau) U^m + F^{m+1} - g^{m+1}

Split scheme, with ``A = diag(I_n1, 0)`` and ``L_h = L_h1 + L_h2`` split by
rows (algebraic rows into ``L_h1``, differential rows into ``L_h2``)::

    (A + tau L_h1) U^{m+1/2} = F^{m+1} - g^{m+1} - L_h U^m
    (I + tau L_h2) (U^{m+1} - U^m) / tau = U^{m+1/2}

Both factors decouple: the first only couples algebraic components, the
second only differential ones.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .blocktri import BlockTridiagonal, SingularSystemError
from .core import (
    BoundarySpec,
    ConfigurationError,
    InitialSpec,
    PDAESystem,
    SourceTerm,
    SpaceGrid,
    StateField,
    TimeGrid,
    check_compatibility,
    sample_initial,
    with_boundary,
)
from .discretization import DiffScheme, assemble_Qh

FULL, SPLIT = "full", "split"


class PreconditionError(ValueError):
    """``A`` is not in the normalized form ``diag(I_n1, 0)``."""

    def __init__(self, message: str, permutation=None):
        super().__init__(message)
        self.permutation = permutation


class StepFailure(RuntimeError):
    """A linear solve inside a time step failed."""

    def __init__(self, message: str, time_index: int | None = None, condition: float = np.inf, factor: str | None = None):
        super().__init__(message)
        self.time_index = time_index
        self.condition = condition
        self.factor = factor

    def to_dict(self) -> dict:
        return {
            "error": "solver",
            "message": str(self),
            "time_index": self.time_index,
            "condition": None if not np.isfinite(self.condition) else float(self.condition),
            "factor": self.factor,
        }


def normalized_rank(A: np.ndarray) -> int:
    """``n1`` if ``A == diag(I_n1, 0)``; raise ``PreconditionError`` otherwise."""
    A = np.asarray(A, dtype=float)
    d = np.diag(A)
    diag_ok = np.array_equal(A, np.diag(d)) and np.all((d == 0) | (d == 1))
    n1 = int(np.count_nonzero(d)) if diag_ok else 0
    if diag_ok and n1 > 0 and np.all(d[:n1] == 1) and np.all(d[n1:] == 0):
        return n1
    perm = None
    if diag_ok and n1 > 0:
        perm = [int(i) for i in np.argsort(d == 0, kind="stable")]
        hint = f"; reorder components as {[p + 1 for p in perm]}"
    else:
        hint = "; transform A to a 0/1 diagonal first"
    raise PreconditionError(f"A is not of the form diag(I_n1, 0){hint}", perm)


@dataclass(eq=False)
class SplitPartition:
    """Row partition of the discrete operator at one linearization state."""

    n1: int
    Q: BlockTridiagonal
    L1: BlockTridiagonal
    L2: BlockTridiagonal
    g: np.ndarray

    @property
    def n(self) -> int:
        return self.Q.n

    @property
    def differential(self) -> list[int]:
        return list(range(self.n1))

    @property
    def algebraic(self) -> list[int]:
        return list(range(self.n1, self.n))

    @property
    def coupled_sizes(self) -> dict[str, int]:
        """Order of the coupled linear system in each solve."""
        N = self.Q.N
        return {FULL: self.n * N, "factor1": len(self.algebraic) * N, "factor2": self.n1 * N}


def partition_L(
    system: PDAESystem,
    U,
    grid: SpaceGrid,
    scheme: DiffScheme,
    bv: BoundarySpec | None = None,
    t: float = 0.0,
) -> SplitPartition:
    n1 = normalized_rank(system.A)
    Q, g = assemble_Qh(system, U, grid, scheme, bv, t)
    L1 = Q.row_mask(range(n1, system.n))
    L2 = Q.row_mask(range(n1))
    return SplitPartition(n1, Q, L1, L2, g)


def factorization_residual(partition: SplitPartition, A: np.ndarray, tau: float) -> float:
    """Spectral norm of ``(A + tau L1)(I + tau L2) - (A + tau L)``."""
    N = partition.Q.N
    IA = np.kron(np.eye(N), A)
    L1, L2, L = partition.L1.to_dense(), partition.L2.to_dense(), partition.Q.to_dense()
    lhs = (IA + tau * L1) @ (np.eye(IA.shape[0]) + tau * L2)
    return float(np.linalg.norm(lhs - (IA + tau * L), 2))


def _as_blocks(f, N: int, n: int) -> np.ndarray:
    return np.zeros((N, n)) if f is None else np.asarray(f, dtype=float).reshape(N, n)


def _solve(op: BlockTridiagonal, rhs: np.ndarray, factor: str) -> np.ndarray:
    try:
        return op.solve(rhs)
    except SingularSystemError as exc:
        raise StepFailure(f"{factor}: {exc}", condition=exc.condition, factor=factor) from None


def step_full(
    system: PDAESystem,
    U_m: StateField,
    f_next,
    tau: float,
    grid: SpaceGrid,
    scheme: DiffScheme,
    bv: BoundarySpec | None = None,
    t_next: float = 0.0,
) -> StateField:
    """One step of the linearly implicit scheme; ``f_next`` is ``f(t_{m+1}, x_k)`` per block."""
    n, N = system.n, grid.n_interior
    Q, g = assemble_Qh(system, U_m, grid, scheme, bv, t_next)
    G = Q + BlockTridiagonal.block_identity(N, system.A / tau)
    Um = U_m.blocks
    rhs = (Um @ system.A.T / tau + _as_blocks(f_next, N, n)).ravel() - g
    new = _solve(G, rhs, "G")
    return StateField(new, n, U_m.m + 1)


def step_split(
    system: PDAESystem,
    partition: SplitPartition | None,
    U_m: StateField,
    f_next,
    tau: float,
    grid: SpaceGrid,
    scheme: DiffScheme,
    bv: BoundarySpec | None = None,
    t_next: float = 0.0,
) -> StateField:
    """One fractional step; ``partition`` must be built at ``U_m`` and ``t_next`` (or None)."""
    if partition is None:
        partition = partition_L(system, U_m, grid, scheme, bv, t_next)
    n, N = system.n, grid.n_interior
    d, a = partition.differential, partition.algebraic
    Um = U_m.values
    r1 = (_as_blocks(f_next, N, n).ravel() - partition.g - partition.Q @ Um).reshape(N, n)

    # (A + tau L1) X = r1: differential rows are X_d = r1_d
    X = np.zeros((N, n))
    X[:, d] = r1[:, d]
    if a:
        coupling = (partition.L1 @ X.ravel()).reshape(N, n)[:, a]
        sub = partition.L1.submatrix(a) * tau
        X[:, a] = _solve(sub, (r1[:, a] - tau * coupling).ravel(), "factor1 (A + tau L_h1)").reshape(N, len(a))

    # (I + tau L2) W = X: algebraic rows are W_a = X_a
    W = np.zeros((N, n))
    W[:, a] = X[:, a]
    if d:
        coupling = (partition.L2 @ W.ravel()).reshape(N, n)[:, d]
        sub = partition.L2.submatrix(d) * tau + BlockTridiagonal.block_identity(N, np.eye(len(d)))
        W[:, d] = _solve(sub, (X[:, d] - tau * coupling).ravel(), "factor2 (I + tau L_h2)").reshape(N, len(d))
    return StateField(Um + tau * W.ravel(), n, U_m.m + 1)


def _fmt(v: float) -> str:
    s = f"{v:.9g}"
    return "0" if s in ("-0", "0") else s


@dataclass(eq=False)
class Trajectory:
    """Interior states at ``t_m = m tau``; ``values[m]`` has shape ``(M-1, n)``."""

    times: np.ndarray
    values: np.ndarray
    grid: SpaceGrid
    bv: BoundarySpec | None
    scheme: DiffScheme
    solver: str
    timings: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def n(self) -> int:
        return self.values.shape[2]

    def state(self, m: int) -> StateField:
        m = m % len(self)
        return StateField(self.values[m].ravel(), self.n, m)

    @property
    def final(self) -> StateField:
        return self.state(len(self) - 1)

    def full(self, m: int) -> np.ndarray:
        """``(M+1, n)`` values including boundary points."""
        bv = self.bv
        if bv is None:
            out = np.zeros((self.grid.M + 1, self.n))
            out[1:-1] = self.values[m]
            return out
        return with_boundary(self.values[m], bv, float(self.times[m]))

    def to_csv(self, path, every: int = 1) -> None:
        """Rows ``t,x,u1..un`` for every stored level and every grid point."""
        x = self.grid.x
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x"] + [f"u{i + 1}" for i in range(self.n)])
            for m in range(0, len(self), every):
                full = self.full(m)
                t = _fmt(float(self.times[m]))
                for k in range(len(x)):
                    w.writerow([t, _fmt(float(x[k]))] + [_fmt(float(v)) for v in full[k]])


def integrate(
    system: PDAESystem,
    iv: InitialSpec,
    bv: BoundarySpec,
    f: SourceTerm | None,
    grid: SpaceGrid,
    tgrid: TimeGrid,
    scheme: DiffScheme,
    solver_kind: str = FULL,
    compat_tol: float = 1e-12,
) -> Trajectory:
    """Run the full or split scheme from ``U^0 = iv`` to ``t_e``."""
    if solver_kind not in (FULL, SPLIT):
        raise ConfigurationError(f"solver must be {FULL!r} or {SPLIT!r}")
    report = check_compatibility(iv, bv, compat_tol)
    if not report:
        worst = max(report.residuals.items(), key=lambda kv: kv[1])
        raise ConfigurationError(
            f"initial and boundary data are incompatible: component {worst[0][0] + 1} "
            f"({worst[0][1]}) differs by {worst[1]:.3e}"
        )
    if solver_kind == SPLIT:
        normalized_rank(system.A)
    f = f if f is not None else SourceTerm.zero(system.n)
    xs = grid.interior
    steps, tau = tgrid.steps, tgrid.tau
    values = np.empty((steps + 1, grid.n_interior, system.n))
    U = sample_initial(iv, grid)
    values[0] = U.blocks
    start = time.perf_counter()
    for m in range(steps):
        t_next = (m + 1) * tau
        f_next = f(t_next, xs)
        try:
            if solver_kind == FULL:
                U = step_full(system, U, f_next, tau, grid, scheme, bv, t_next)
            else:
                U = step_split(system, None, U, f_next, tau, grid, scheme, bv, t_next)
        except StepFailure as exc:
            exc.time_index = m
            raise
        values[m + 1] = U.blocks
    elapsed = time.perf_counter() - start
    return Trajectory(tgrid.times, values, grid, bv, scheme, solver_kind, {"integrate_s": elapsed, "steps": steps})
