"""Numerical time-index certification and the kernel test for the plasma operator.

With ``u`` frozen, one time differentiation of the PDAE gives the array ::

    [ A  0 ] [u_t ]   [f - L u - C[u] u_x]
    [ M  A ] [u_tt] = [f_t               ]

with ``M[u, u_x] = B d_xx + D + C1[u_x] + C[u] d_x``. A row plan picks, per
equation, the block row it is taken from. If the selected rows close a
square system ``P u_t = F`` whose discretization keeps ``sigma_min(P)``
bounded away from zero under grid refinement, the index is certified.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (
    BoundarySpec,
    InputError,
    PDAESystem,
    SpaceGrid,
    StateField,
    eval_C1_dir_field,
    with_boundary,
)
from .discretization import BACKWARD, CENTRAL, DiffScheme, assemble_Qh, difference_field

A_REGULAR_TOL = 1e-10
SIGMA_TOL = 1e-10
RATIO_BAND = (0.8, 1.25)
UNDETERMINED = "undetermined"


class StructuralError(ValueError):
    """The row plan does not yield a square system for ``u_t``."""


class NumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class DerivativeArraySpec:
    """``order`` time differentiations; ``row_plan[i]`` is the block row used for equation ``i``.

    ``row_plan=None`` takes differential equations undifferentiated and
    algebraic ones (zero rows of ``A``) from the last block row.
    """

    order: int = 1
    row_plan: tuple[int, ...] | None = None
    scheme: str = BACKWARD

    def __post_init__(self):
        if self.order not in (1, 2):
            raise InputError("order must be 1 or 2")
        if self.row_plan is not None:
            plan = tuple(int(r) for r in self.row_plan)
            if any(r < 0 or r > self.order for r in plan):
                raise InputError(f"row_plan entries must lie in 0..{self.order}")
            object.__setattr__(self, "row_plan", plan)

    def plan_for(self, A: np.ndarray) -> tuple[int, ...]:
        if self.row_plan is not None:
            if len(self.row_plan) != A.shape[0]:
                raise StructuralError("row_plan needs one entry per equation")
            return self.row_plan
        return tuple(self.order if not np.any(row) else 0 for row in A)


@dataclass
class IndexCertificate:
    verdict: int | str
    sigma_min: list[float] = field(default_factory=list)
    grids: list[int] = field(default_factory=list)
    ratio: float | None = None
    band: tuple[float, float] = RATIO_BAND
    lemma2_det: float | None = None

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "sigma_min": [float(s) for s in self.sigma_min],
            "grids": list(self.grids),
            "ratio": None if self.ratio is None else float(self.ratio),
            "band": list(self.band),
            "lemma2_det": self.lemma2_det,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# probes ------------------------------------------------------------------


Probe = Callable[[np.ndarray], np.ndarray]


def _probe_full(probe, grid: SpaceGrid, n: int, bv: BoundarySpec | None) -> np.ndarray:
    """Probe values on all ``M+1`` points, shape ``(M+1, n)``."""
    if callable(probe):
        return np.asarray(probe(grid.x), dtype=float).reshape(grid.M + 1, n)
    if isinstance(probe, StateField):
        if probe.M != grid.M:
            raise InputError("probe state lives on a different grid")
        if bv is None:
            full = np.zeros((grid.M + 1, n))
            full[1:-1] = probe.blocks
            return full
        return with_boundary(probe, bv, 0.0)
    full = np.asarray(probe, dtype=float)
    if full.shape != (grid.M + 1, n):
        raise InputError("probe array must have shape (M+1, n)")
    return full


def _interpolator(probe, grid: SpaceGrid, n: int, bv) -> Probe:
    if callable(probe):
        return probe
    full = _probe_full(probe, grid, n, bv)
    return lambda x: np.stack([np.interp(x, grid.x, full[:, i]) for i in range(n)], axis=-1)


# derivative array ----------------------------------------------------------


def frozen_M(system: PDAESystem, probe_full: np.ndarray, grid: SpaceGrid, scheme: str = BACKWARD) -> np.ndarray:
    """Dense discrete ``M[u, u_x]`` with homogeneous Dirichlet data, ``(n(M-1))^2``."""
    Q, _ = assemble_Qh(system, probe_full[1:-1], grid, DiffScheme(scheme), None)
    ux = difference_field(probe_full, grid.h, CENTRAL)
    dense = Q.to_dense()
    n = system.n
    for j, blk in enumerate(eval_C1_dir_field(system, ux)):
        dense[j * n : (j + 1) * n, j * n : (j + 1) * n] += blk
    return dense


def derivative_array_P(
    system: PDAESystem, probe_full: np.ndarray, grid: SpaceGrid, spec: DerivativeArraySpec
) -> np.ndarray:
    """Closed coefficient matrix ``P`` of ``u_t`` selected by the row plan.

    The ``2 C1[u_tx]`` coupling of the second derivative array is not
    linear in ``u_t`` for a frozen ``u`` and is omitted.
    """
    n, N = system.n, grid.n_interior
    plan = spec.plan_for(system.A)
    size = n * N
    k = spec.order
    IA = np.kron(np.eye(N), system.A)
    Mh = frozen_M(system, probe_full, grid, spec.scheme)
    big = np.zeros(((k + 1) * size, (k + 1) * size))
    for r in range(k + 1):
        big[r * size : (r + 1) * size, r * size : (r + 1) * size] = IA
        if r >= 1:
            big[r * size : (r + 1) * size, (r - 1) * size : r * size] = Mh
    rows = np.array([plan[i] * size + j * n + i for j in range(N) for i in range(n)])
    sel = big[rows]
    if np.any(sel[:, size:]):
        raise StructuralError("row plan leaves higher time derivatives in the system for u_t")
    P = sel[:, :size]
    if not np.any(P, axis=1).all():
        raise StructuralError("row plan produces empty rows; the system for u_t is not closed")
    return P


def _sigma_extremes(P: np.ndarray) -> tuple[float, float]:
    s = np.linalg.svd(P, compute_uv=False)
    return float(s[-1]), float(s[0])


def time_index(
    system: PDAESystem,
    probe,
    grid: SpaceGrid,
    spec: DerivativeArraySpec | None = None,
    bv: BoundarySpec | None = None,
    band: tuple[float, float] = RATIO_BAND,
) -> IndexCertificate:
    """Certify the time index at a frozen probe state.

    ``probe`` is a callable ``x -> (len(x), n)``, a ``StateField`` on
    ``grid`` (completed with ``bv``) or a full ``(M+1, n)`` array. Non-callable
    probes are interpolated linearly onto the doubled grid.
    """
    spec = spec or DerivativeArraySpec()
    s = np.linalg.svd(system.A, compute_uv=False)
    if s[-1] > A_REGULAR_TOL * s[0]:
        return IndexCertificate(0, [float(s[-1])], [], None, band)

    n = system.n
    interp = _interpolator(probe, grid, n, bv)
    sigmas, grids = [], []
    regular = True
    for M in (grid.M, 2 * grid.M):
        g = SpaceGrid(M)
        full = _probe_full(probe, g, n, bv) if M == grid.M else np.asarray(interp(g.x), dtype=float)
        smin, smax = _sigma_extremes(derivative_array_P(system, full, g, spec))
        sigmas.append(smin)
        grids.append(M)
        regular &= smin > SIGMA_TOL * smax
    ratio = sigmas[0] / sigmas[1] if sigmas[1] > 0 else np.inf
    ok = regular and band[0] <= ratio <= band[1]
    verdict = max(spec.plan_for(system.A)) if ok else UNDETERMINED
    return IndexCertificate(verdict, sigmas, grids, float(ratio), band)


# plasma operator ---------------------------------------------------------


def _plasma_coefficients(u, grid: SpaceGrid, bv):
    full = _probe_full(u, grid, 4, bv)
    u3 = full[1:-1, 2]
    u4x = difference_field(full, grid.h, CENTRAL)[:, 3]
    return u3, u4x


def plasma_P_matrix(u, grid: SpaceGrid, bv: BoundarySpec | None = None) -> np.ndarray:
    """Dense plasma ``P`` (interlaced block layout) with backward ``d_x``.

    Rows: ``z1``; ``z2``; ``-d_x z3 + u4x z3 + u3 d_x z4``; ``z1 - z3 + d_xx z4``.
    """
    N, h = grid.n_interior, grid.h
    u3, u4x = _plasma_coefficients(u, grid, bv)
    I = np.eye(N)
    Dx = (I - np.eye(N, k=-1)) / h
    Dxx = (np.eye(N, k=1) - 2 * I + np.eye(N, k=-1)) / h**2
    Z = np.zeros((N, N))
    byfield = np.block(
        [
            [I, Z, Z, Z],
            [Z, I, Z, Z],
            [Z, Z, -Dx + np.diag(u4x), np.diag(u3) @ Dx],
            [I, Z, -I, Dxx],
        ]
    )
    perm = np.arange(4 * N).reshape(4, N).T.ravel()  # interlaced <- component-major
    return byfield[np.ix_(perm, perm)]


def plasma_P_apply(u, grid: SpaceGrid, z: StateField, bv: BoundarySpec | None = None) -> StateField:
    """Matrix-free application of the plasma ``P`` to ``z`` (homogeneous data on ``z``)."""
    if not isinstance(z, StateField) or z.n != 4:
        raise InputError("z must be a StateField with n = 4")
    if z.M != grid.M:
        raise InputError("z lives on a different grid")
    h = grid.h
    u3, u4x = _plasma_coefficients(u, grid, bv)
    zb = z.blocks
    full = np.zeros((grid.M + 1, 4))
    full[1:-1] = zb
    dx = (full[1:-1] - full[:-2]) / h
    dxx = (full[2:] - 2 * full[1:-1] + full[:-2]) / h**2
    out = np.empty_like(zb)
    out[:, 0] = zb[:, 0]
    out[:, 1] = zb[:, 1]
    out[:, 2] = -dx[:, 2] + u4x * zb[:, 2] + u3 * dx[:, 3]
    out[:, 3] = zb[:, 0] - zb[:, 2] + dxx[:, 3]
    return StateField(out.ravel(), 4, z.m)


# kernel determinant ------------------------------------------------------


def _rk4_fundamental(u3, u4x, step: float) -> np.ndarray:
    """Integrate ``y'' = u4x y' + u3 y`` for both fundamental solutions plus ``int y``.

    Returns ``[[phi1'(0), phi2'(0)], [int phi1, int phi2]]``.
    """
    steps = int(round(1.0 / step))
    dx = 1.0 / steps

    def rhs(x, Y):
        a, b = float(u3(x)), float(u4x(x))
        return np.stack([Y[1], b * Y[1] + a * Y[0], Y[0]])

    Y = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])  # rows y, y', int y
    x = 0.0
    for i in range(steps):
        x = i * dx
        k1 = rhs(x, Y)
        k2 = rhs(x + dx / 2, Y + dx / 2 * k1)
        k3 = rhs(x + dx / 2, Y + dx / 2 * k2)
        k4 = rhs(x + dx, Y + dx * k3)
        Y = Y + dx / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(Y)):
            raise NumericalError(f"fundamental solutions overflow near x = {x:.4g}")
    return np.array([[0.0, 1.0], Y[2]])


def lemma2_determinant(u3, u4x, step: float = 1e-4, rtol: float = 1e-8, min_step: float = 1e-7) -> float:
    """Kernel determinant ``phi1'(0) int phi2 - phi2'(0) int phi1`` on ``[0, 1]``.

    ``phi1, phi2`` solve ``-y'' + u4x y' + u3 y = 0`` with ``(y, y')(0) = (1, 0)``
    and ``(0, 1)``. Classical RK4 at fixed ``step``; the step is halved until
    two successive values agree to ``rtol``.
    """
    prev = np.linalg.det(_rk4_fundamental(u3, u4x, step))
    while True:
        step /= 2
        if step < min_step:
            raise NumericalError("step halving did not converge above the minimum step")
        cur = np.linalg.det(_rk4_fundamental(u3, u4x, step))
        if abs(cur - prev) <= rtol * max(1.0, abs(cur)):
            return float(cur)
        prev = cur


def plasma_lemma2_determinant(params=None, step: float = 1e-4) -> float:
    """Determinant at the plasma initial state."""
    from .plasma import PlasmaParams

    p = params or PlasmaParams()
    K4 = p.K4

    def u4x(x):
        return -2 * np.pi * K4 * np.sin(2 * np.pi * x)

    def u3(x):
        return p.u30 * np.exp(K4 * np.cos(2 * np.pi * x) - K4)

    return lemma2_determinant(u3, u4x, step)


# B normalization ---------------------------------------------------------


def normalize_B(B, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray, int]:
    """Regular ``S0, S1`` with ``S0 B S1^{-1} = diag(I_m, 0)`` and ``m = rank(B)``."""
    B = np.asarray(B, dtype=float)
    n = B.shape[0]
    U, s, Vt = np.linalg.svd(B)
    m = int(np.count_nonzero(s > tol * s[0])) if s[0] > 0 else 0
    scale = np.ones(n)
    scale[:m] = 1.0 / s[:m]
    S0 = scale[:, None] * U.T
    S1 = Vt
    return S0, S1, m
