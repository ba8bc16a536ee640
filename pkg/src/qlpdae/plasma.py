"""Ion-acoustic plasma model in first-order-in-time PDAE form.

Components: ``u1 ~ n_i`` (ion density), ``u2 ~ v_i`` (ion velocity),
``u3 ~ n_e`` (electron density), ``u4 ~ phi`` (potential). With
``A = diag(1, 1, 0, 0)`` the first two rows are evolution equations, the
last two are constraints (Boltzmann relation and Poisson equation).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .core import (
    ARBITRARY,
    CONSISTENT,
    BoundarySpec,
    Dirichlet,
    Free,
    InitialSpec,
    InputError,
    PDAESystem,
    Problem,
)
from .discretization import BACKWARD, UPWIND, DiffScheme

FOUR_PI2 = 4.0 * np.pi**2


@dataclass(frozen=True)
class PlasmaParams:
    b0: float = 0.02
    d1: float = 1.0
    u30: float = 0.2
    K2: float = 0.4
    K0: float = 0.5

    def __post_init__(self):
        for name in ("b0", "d1", "u30", "K2", "K0"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise InputError(f"{name} must be finite")
        if self.b0 < 0:
            raise InputError("b0 must be nonnegative")
        if self.d1 <= 0:
            raise InputError("d1 must be positive")
        if self.u30 == 0:
            raise InputError("u30 must be nonzero")
        if self.K0 <= 0:
            raise InputError("K0 must be positive")

    @property
    def K4(self) -> float:
        return -self.u30 / FOUR_PI2

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "PlasmaParams":
        keys = cls.__dataclass_fields__.keys()
        return cls(**{k: float(d[k]) for k in keys if k in d})

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def plasma_C0(d1: float = 1.0) -> np.ndarray:
    """Constant convection part; also the default ``C0`` of the stability analysis."""
    C0 = np.zeros((4, 4))
    C0[1, 3] = d1
    C0[2, 2] = -1.0
    return C0


def build_plasma_system(p: PlasmaParams | None = None) -> PDAESystem:
    p = p or PlasmaParams()
    A = np.diag([1.0, 1.0, 0.0, 0.0])
    B = np.diag([-p.b0, 0.0, 0.0, 1.0])
    D = np.zeros((4, 4))
    D[3, 0], D[3, 2] = 1.0, -1.0
    C1 = np.zeros((4, 4, 4))
    # C[u] = [[u2, u1, 0, 0], [0, u2, 0, d1], [0, 0, -1, u3], [0, 0, 0, 0]]
    C1[0, 0, 1] = 1.0
    C1[0, 1, 0] = 1.0
    C1[1, 1, 1] = 1.0
    C1[2, 3, 2] = 1.0
    return PDAESystem(A=A, B=B, D=D, C0=plasma_C0(p.d1), C1=C1)


def consistent_initial_values(p: PlasmaParams | None = None) -> InitialSpec:
    """Profiles ``g1..g4``; ``g2`` and ``g4`` are free choices, ``g1`` and ``g3`` follow."""
    p = p or PlasmaParams()
    K4, u30, K2 = p.K4, p.u30, p.K2

    def g4(x):
        return K4 * np.cos(2 * np.pi * np.asarray(x, dtype=float))

    def g3(x):
        return u30 * np.exp(g4(x) - K4)

    def g1(x):
        # g4'' = -4 pi^2 g4 in closed form
        return g3(x) + FOUR_PI2 * g4(x)

    def g2(x):
        x = np.asarray(x, dtype=float)
        return K2 * x * (x - 0.5)

    return InitialSpec((g1, g2, g3, g4), (CONSISTENT, ARBITRARY, CONSISTENT, ARBITRARY))


def plasma_boundary_spec(p: PlasmaParams | None = None) -> BoundarySpec:
    p = p or PlasmaParams()
    K4 = p.K4
    left = (
        Dirichlet(0.0, CONSISTENT),
        Dirichlet(0.0, ARBITRARY),
        Dirichlet(p.u30, CONSISTENT),
        Dirichlet(K4, ARBITRARY),
    )
    right = (Dirichlet(0.0, CONSISTENT), Free(), Free(), Dirichlet(K4, ARBITRARY))
    return BoundarySpec(left, right)


def plasma_scheme() -> DiffScheme:
    """Upwind ``u1``, ``u2`` by the sign of ``u2``; backward differences otherwise.

    Backward differences alone are downwind where ``u2 < 0`` and the run
    blows up on fine grids. ``u3`` and ``u4`` only carry left boundary
    information into the constraint rows, so they stay backward.
    """
    return DiffScheme(BACKWARD, {0: UPWIND, 1: UPWIND}, BACKWARD)


@dataclass(frozen=True)
class PlasmaModel:
    params: PlasmaParams
    system: PDAESystem
    iv: InitialSpec
    bv: BoundarySpec

    @property
    def K4(self) -> float:
        return self.params.K4

    @property
    def problem(self) -> Problem:
        return Problem(self.system, self.iv, self.bv)


def plasma_model(p: PlasmaParams | None = None) -> PlasmaModel:
    p = p or PlasmaParams()
    return PlasmaModel(p, build_plasma_system(p), consistent_initial_values(p), plasma_boundary_spec(p))
