"""Finite-difference operators and the assembled block form of the scheme.

The discrete operator at linearization state ``U`` is

    Q_h[U] = (1/h^2) P kron B + (first-derivative stencils weighted by C[u_j]) + I kron D

stored block-tridiagonally. With a single stencil for every component the
convection part is exactly ``(1/(q h)) Ptilde_q kron C[U]``; per-component
stencils and sign-based upwinding generalize it entry by entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .blocktri import BlockTridiagonal
from .core import (
    LEFT,
    RIGHT,
    BoundarySpec,
    ConfigurationError,
    Free,
    InputError,
    PDAESystem,
    SpaceGrid,
    StateField,
    eval_C_field,
)

CENTRAL, FORWARD, BACKWARD, UPWIND = "central", "forward", "backward", "upwind"
KINDS = (CENTRAL, FORWARD, BACKWARD, UPWIND)

# (coefficient of u_{k-1}, u_k, u_{k+1}) for the first derivative, times 1/h
STENCILS = {
    CENTRAL: np.array([-0.5, 0.0, 0.5]),
    FORWARD: np.array([0.0, -1.0, 1.0]),
    BACKWARD: np.array([-1.0, 1.0, 0.0]),
}
_CODES = {CENTRAL: 0, FORWARD: 1, BACKWARD: 2}
_STENCIL_TABLE = np.stack([STENCILS[CENTRAL], STENCILS[FORWARD], STENCILS[BACKWARD]])


@dataclass(frozen=True)
class DiffScheme:
    """First-derivative differencing, chosen per differentiated component.

    ``upwind`` picks backward/forward from the sign of the diagonal convection
    coefficient ``C_ll`` at each point; couplings ``C_il`` with ``i != l`` and
    points where ``C_ll == 0`` use ``upwind_fallback``.
    """

    default: str = CENTRAL
    overrides: Mapping[int, str] = field(default_factory=dict)
    upwind_fallback: str = CENTRAL

    def __post_init__(self):
        object.__setattr__(self, "overrides", dict(self.overrides))
        for k in (self.default, *self.overrides.values()):
            if k not in KINDS:
                raise InputError(f"unknown differencing {k!r}; expected one of {KINDS}")
        if self.upwind_fallback not in STENCILS:
            raise InputError("upwind_fallback must be central, forward or backward")

    def kind_for(self, component: int) -> str:
        return self.overrides.get(component, self.default)

    @property
    def uniform(self) -> bool:
        return not self.overrides or all(v == self.default for v in self.overrides.values())

    @property
    def q(self) -> int:
        """2 for central, 1 for one-sided; only defined for a uniform fixed scheme."""
        if not self.uniform or self.default == UPWIND:
            raise ValueError("q is only defined for a uniform central/forward/backward scheme")
        return 2 if self.default == CENTRAL else 1

    def to_dict(self) -> dict:
        return {
            "default": self.default,
            "overrides": {str(k): v for k, v in self.overrides.items()},
            "upwind_fallback": self.upwind_fallback,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DiffScheme":
        return cls(
            d.get("default", CENTRAL),
            {int(k): v for k, v in d.get("overrides", {}).items()},
            d.get("upwind_fallback", CENTRAL),
        )


# auxiliary matrices ----------------------------------------------------


def build_P(M: int) -> np.ndarray:
    """Tridiagonal ``(1, -2, 1)`` matrix of order ``M - 1``."""
    if M < 2:
        raise InputError("M must be >= 2")
    N = M - 1
    return -2.0 * np.eye(N) + np.eye(N, k=1) + np.eye(N, k=-1)


def build_H(M: int) -> np.ndarray:
    """Superdiagonal shift of order ``M - 1``."""
    if M < 2:
        raise InputError("M must be >= 2")
    return np.eye(M - 1, k=1)


def build_Ptilde(M: int, kind: str = CENTRAL) -> tuple[np.ndarray, int]:
    """First-derivative pattern matrix and its divisor ``q``.

    ``u_x ~ Ptilde @ u / (q h)`` with homogeneous boundary values.
    """
    if M < 2:
        raise InputError("M must be >= 2")
    N = M - 1
    H = np.eye(N, k=1)
    if kind == CENTRAL:
        return H - H.T, 2
    if kind == FORWARD:
        return -np.eye(N) + H, 1
    if kind == BACKWARD:
        return np.eye(N) - H.T, 1
    raise InputError(f"no fixed pattern matrix for differencing {kind!r}")


@dataclass(frozen=True, eq=False)
class LaplacianSpectrum:
    """Eigen-decomposition of ``P / h^2``; ``Phi`` is symmetric and involutory."""

    M: int
    eigenvalues: np.ndarray
    Phi: np.ndarray

    @property
    def h(self) -> float:
        return 1.0 / self.M


def laplacian_eigenvalues(M: int) -> np.ndarray:
    k = np.arange(1, M)
    return -4.0 * M**2 * np.sin(k * np.pi / (2 * M)) ** 2


def laplacian_spectrum(M: int) -> LaplacianSpectrum:
    """Closed-form eigenpairs: the discrete sine basis ``sqrt(2h) sin(j k pi h)``."""
    if M < 2:
        raise InputError("M must be >= 2")
    jk = np.outer(np.arange(1, M), np.arange(1, M))
    Phi = np.sqrt(2.0 / M) * np.sin(jk * np.pi / M)
    return LaplacianSpectrum(M, laplacian_eigenvalues(M), Phi)


# stencil resolution ----------------------------------------------------


def _boundary_values(bv: BoundarySpec | None, n: int, t: float):
    if bv is None:
        z = np.zeros(n)
        return z, z.copy(), np.zeros(n, bool), np.zeros(n, bool)
    if bv.n != n:
        raise InputError("boundary specification does not match the system size")
    left, right = bv.values(LEFT, t), bv.values(RIGHT, t)
    return np.nan_to_num(left), np.nan_to_num(right), np.isnan(left), np.isnan(right)


def _check_closure(bv: BoundarySpec | None, comp: int, side: str):
    entry = bv.entries(side)[comp] if bv is not None else None
    if not isinstance(entry, Free) or entry.closure != "onesided":
        raise ConfigurationError(
            f"component {comp + 1} has a free {side} boundary without a usable closure rule"
        )


def stencil_codes(Cj: np.ndarray, scheme: DiffScheme, bv: BoundarySpec | None, needed=None) -> np.ndarray:
    """Per point ``j`` and coupling ``(i, l)`` the stencil code (0 central, 1 forward, 2 backward).

    ``Cj`` holds the convection matrices at every interior point and drives
    upwinding. Free boundary entries force one-sided differences pointing
    into the interior at the adjacent point; a closure rule is demanded only
    where ``needed`` (default ``Cj != 0``) is set.
    """
    N, n = Cj.shape[0], Cj.shape[1]
    needed = (Cj != 0) if needed is None else np.broadcast_to(needed, Cj.shape)
    codes = np.zeros((N, n, n), dtype=int)
    for l in range(n):
        kind = scheme.kind_for(l)
        if kind == UPWIND:
            codes[:, :, l] = _CODES[scheme.upwind_fallback]
            c = Cj[:, l, l]
            codes[c > 0, l, l] = _CODES[BACKWARD]
            codes[c < 0, l, l] = _CODES[FORWARD]
        else:
            codes[:, :, l] = _CODES[kind]
        if bv is None:
            continue
        for side, j, keep in ((RIGHT, N - 1, BACKWARD), (LEFT, 0, FORWARD)):
            if not bv.is_free(l, side):
                continue
            row = codes[j, :, l]
            if N == 1 and bv.is_free(l, LEFT) and bv.is_free(l, RIGHT) and needed[0, :, l].any():
                raise ConfigurationError(f"component {l + 1} is free on both sides of a single interior point")
            touch = (row != _CODES[keep]) & needed[j, :, l]
            if touch.any():
                _check_closure(bv, l, side)
            codes[j, :, l] = _CODES[keep]
    return codes


def _convection_blocks(Cj, codes, h):
    """Lower/diag/upper contributions of ``sum_l C_il(u_j) (stencil u_l)_j``."""
    coef = _STENCIL_TABLE[codes] / h  # (N, n, n, 3)
    weighted = Cj[..., None] * coef
    return weighted[..., 0], weighted[..., 1], weighted[..., 2]


# assembly ---------------------------------------------------------------


def _state_blocks(U, n: int, N: int) -> np.ndarray:
    blocks = U.blocks if isinstance(U, StateField) else np.asarray(U, dtype=float).reshape(-1, n)
    if blocks.shape != (N, n):
        raise InputError(f"state has {blocks.shape[0]} blocks, grid needs {N}")
    return blocks


def assemble_Qh(
    system: PDAESystem,
    U,
    grid: SpaceGrid,
    scheme: DiffScheme,
    bv: BoundarySpec | None = None,
    t: float = 0.0,
) -> tuple[BlockTridiagonal, np.ndarray]:
    """Discrete ``L_h[U]`` as a block-tridiagonal matrix plus boundary vector.

    For a full grid function ``u`` with interior part ``V`` the discrete
    operator satisfies ``L_h[U] u = Q @ V + g`` where ``g`` collects the
    Dirichlet values at time ``t``. ``bv=None`` means homogeneous Dirichlet
    data for every component.
    """
    n, N, h = system.n, grid.n_interior, grid.h
    Ub = _state_blocks(U, n, N)
    left, right, free_l, free_r = _boundary_values(bv, n, t)

    Bcols = np.any(system.B != 0, axis=0)
    for side, free in ((LEFT, free_l), (RIGHT, free_r)):
        bad = np.flatnonzero(free & Bcols)
        if bad.size:
            raise ConfigurationError(
                f"component {bad[0] + 1} is free at the {side} boundary but enters a second derivative"
            )

    Q = BlockTridiagonal.zeros(N, n)
    Bh = system.B / h**2
    Q.diag[:] = system.D - 2.0 * Bh
    Q.lower[1:] = Bh
    Q.upper[:-1] = Bh
    g = np.zeros((N, n))
    g[0] += Bh @ left
    g[-1] += Bh @ right

    Cj = eval_C_field(system, Ub)
    codes = stencil_codes(Cj, scheme, bv)
    lo, di, up = _convection_blocks(Cj, codes, h)
    Q.diag += di
    Q.lower[1:] += lo[1:]
    Q.upper[:-1] += up[:-1]
    g[0] += lo[0] @ left
    g[-1] += up[-1] @ right

    Q.meta.update(kind="Q_h", M=grid.M, scheme=scheme, t=t)
    return Q, g.ravel()


def assemble_G(
    system: PDAESystem,
    U,
    tau: float,
    grid: SpaceGrid,
    scheme: DiffScheme,
    bv: BoundarySpec | None = None,
    t: float = 0.0,
) -> tuple[BlockTridiagonal, np.ndarray]:
    """``G = I kron (A / tau) + Q_h[U]`` and the boundary vector of ``Q_h``."""
    Q, g = assemble_Qh(system, U, grid, scheme, bv, t)
    G = Q + BlockTridiagonal.block_identity(grid.n_interior, system.A / tau)
    G.meta.update(Q.meta, kind="G", tau=tau)
    return G, g


def difference_field(full: np.ndarray, h: float, kind: str = BACKWARD) -> np.ndarray:
    """First differences of a full-grid ``(M+1, n)`` array at the interior points."""
    c = STENCILS[kind] / h
    return c[0] * full[:-2] + c[1] * full[1:-1] + c[2] * full[2:]


def build_Ctilde(
    system: PDAESystem,
    V_next,
    grid: SpaceGrid,
    scheme: DiffScheme,
    U=None,
    bv: BoundarySpec | None = None,
    t: float = 0.0,
) -> BlockTridiagonal:
    """Block-diagonal ``Ctilde`` with ``(Q_h[U + eta] - Q_h[U]) v = Ctilde @ eta``.

    Here ``v`` is the full grid function with interior ``V_next`` and
    boundary values from ``bv``; the identity includes the boundary vector.
    For a uniform fixed scheme and homogeneous boundary data this is
    ``((1/(q h)) Ptilde_q kron C1[eta]) V_next = Ctilde @ eta``.
    Stencils are resolved at ``U`` (needed for ``upwind``).
    """
    n, N = system.n, grid.n_interior
    V = _state_blocks(V_next, n, N)
    if U is None:
        if any(scheme.kind_for(l) == UPWIND for l in range(n)):
            raise ValueError("upwind stencils depend on the linearization state; pass U")
        U = V
    Ub = _state_blocks(U, n, N)
    Cj = eval_C_field(system, Ub)
    codes = stencil_codes(Cj, scheme, bv, needed=np.any(system.C1 != 0, axis=2))
    h = grid.h
    left, right, *_ = _boundary_values(bv, n, t)
    full = np.vstack([left, V, right])
    coef = _STENCIL_TABLE[codes] / h
    neigh = np.stack([full[:-2], full[1:-1], full[2:]], axis=-1)
    W = np.einsum("jils,jls->jil", coef, neigh)  # stencil of v_l as used in row i
    out = BlockTridiagonal.zeros(N, n)
    # Ctilde_j[i, k] = sum_l C1[i, l, k] * (S^{(i,l)} v_l)_j
    out.diag[:] = np.einsum("ilk,jil->jik", system.C1, W)
    out.meta.update(kind="Ctilde")
    return out


# dense Kronecker form (small grids) ----------------------------------------


def assemble_Qh_kron(system: PDAESystem, U, grid: SpaceGrid, kind: str) -> np.ndarray:
    """Dense ``(1/h^2) P kron B + (1/(q h)) Ptilde kron C[U] + I kron D``.

    Homogeneous boundary data; ``kind`` is a single fixed stencil.
    """
    n, N, h = system.n, grid.n_interior, grid.h
    Ub = _state_blocks(U, n, N)
    P = build_P(grid.M)
    Pt, q = build_Ptilde(grid.M, kind)
    Cj = eval_C_field(system, Ub)
    conv = np.zeros((N * n, N * n))
    for j in range(N):
        for k in range(N):
            if Pt[j, k]:
                conv[j * n : (j + 1) * n, k * n : (k + 1) * n] = Pt[j, k] * Cj[j]
    return np.kron(P, system.B) / h**2 + conv / (q * h) + np.kron(np.eye(N), system.D)
