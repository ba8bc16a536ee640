"""System definition, grids, fields and initial/boundary data.

A quasi-linear PDAE on the unit interval has the form

    A u_t + B u_xx + C[u] u_x + D u = f(t, x)

with constant ``A``, ``B``, ``D`` and a convection matrix that is affine in
``u``: ``C[u] = C0 + sum_k C1[:, :, k] u_k``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

ARBITRARY = "arbitrary"
CONSISTENT = "consistent"
LEFT, RIGHT = "left", "right"


class InputError(ValueError):
    """Malformed input: wrong dimensions, invalid parameters."""


class ConfigurationError(ValueError):
    """Inconsistent problem configuration, e.g. a free boundary without closure."""


def _as_matrix(a, n: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.shape != (n, n):
        raise InputError(f"{name} must have shape ({n}, {n}), got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PDAESystem:
    """Constant-coefficient matrices plus the affine convection law.

    ``C1[i, j, k]`` is the derivative of ``C_ij`` with respect to ``u_k``.
    ``A`` and ``B`` must be nonzero unless ``degenerate=True`` (used for
    purely algebraic test systems in the index analysis).
    """

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    C0: np.ndarray
    C1: np.ndarray
    degenerate: bool = field(default=False, repr=False)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise InputError(f"A must be a square matrix, got shape {A.shape}")
        n = A.shape[0]
        for name in ("A", "B", "D", "C0"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name), n, name))
        C1 = np.array(self.C1, dtype=float)
        if C1.shape != (n, n, n):
            raise InputError(f"C1 must have shape ({n}, {n}, {n}), got {C1.shape}")
        C1.setflags(write=False)
        object.__setattr__(self, "C1", C1)
        if self.degenerate:
            return
        if not np.any(self.A):
            raise InputError("A must not be the zero matrix")
        if not np.any(self.B):
            raise InputError("B must not be the zero matrix")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def eval_C(self, u) -> np.ndarray:
        return eval_C(self, u)

    def eval_C1_dir(self, w) -> np.ndarray:
        return eval_C1_dir(self, w)

    # serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "n": self.n,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "D": self.D.tolist(),
            "C0": self.C0.tolist(),
            "C1": self.C1.tolist(),
        }
        if self.degenerate:
            d["degenerate"] = True
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "PDAESystem":
        try:
            n = int(d["n"])
            system = cls(A=d["A"], B=d["B"], D=d["D"], C0=d["C0"], C1=d["C1"],
                         degenerate=bool(d.get("degenerate", False)))
        except KeyError as exc:
            raise InputError(f"system definition lacks key {exc}") from None
        if system.n != n:
            raise InputError(f"declared n={n} but matrices have size {system.n}")
        return system

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PDAESystem":
        return cls.from_dict(json.loads(text))


def eval_C(system: PDAESystem, u) -> np.ndarray:
    """Convection matrix ``C0 + sum_k C1[:, :, k] u_k``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (system.n,):
        raise InputError(f"state must have length {system.n}, got shape {u.shape}")
    return system.C0 + system.C1 @ u


def eval_C1_dir(system: PDAESystem, w) -> np.ndarray:
    """Directional matrix with entries ``sum_j C1[i, j, k] w_j``.

    This is the matrix multiplying ``u_t`` when ``C[u] u_x`` is differentiated
    in time with ``w = u_x``.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (system.n,):
        raise InputError(f"vector must have length {system.n}, got shape {w.shape}")
    return np.einsum("ijk,j->ik", system.C1, w)


def eval_C_field(system: PDAESystem, U: np.ndarray) -> np.ndarray:
    """``eval_C`` at every row of an ``(npts, n)`` array."""
    return system.C0 + np.einsum("ijk,pk->pij", system.C1, U)


def eval_C1_dir_field(system: PDAESystem, W: np.ndarray) -> np.ndarray:
    return np.einsum("ijk,pj->pik", system.C1, W)


# grids -------------------------------------------------------------------


@dataclass(frozen=True)
class SpaceGrid:
    M: int

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise InputError(f"M must be an integer >= 2, got {self.M}")

    @property
    def h(self) -> float:
        return 1.0 / self.M

    @property
    def x(self) -> np.ndarray:
        """All grid points ``x_0 = 0, ..., x_M = 1``."""
        return np.arange(self.M + 1) / self.M

    @property
    def interior(self) -> np.ndarray:
        return np.arange(1, self.M) / self.M

    @property
    def n_interior(self) -> int:
        return self.M - 1


@dataclass(frozen=True)
class TimeGrid:
    tau: float
    t_e: float

    def __post_init__(self):
        if not (self.tau > 0 and self.t_e > 0):
            raise InputError("tau and t_e must be positive")
        if abs(self.steps * self.tau - self.t_e) > self.tau:
            raise InputError("t_e is not reachable in whole steps")

    @classmethod
    def from_ratio(cls, K0: float, grid: SpaceGrid, t_e: float) -> "TimeGrid":
        """Time grid with ``tau = K0 * h``."""
        if not K0 > 0:
            raise InputError("K0 must be positive")
        return cls(K0 * grid.h, t_e)

    @property
    def steps(self) -> int:
        return int(round(self.t_e / self.tau))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.tau


# fields ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StateField:
    """Block vector of interior values; block ``k`` (1-based) is ``u(x_k)``."""

    values: np.ndarray
    n: int
    m: int = 0

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size == 0 or v.size % self.n:
            raise InputError(f"length {v.size} is not a positive multiple of n={self.n}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_blocks(cls, blocks, m: int = 0) -> "StateField":
        blocks = np.asarray(blocks, dtype=float)
        return cls(blocks.ravel(), blocks.shape[1], m)

    @classmethod
    def from_function(cls, func: Callable, grid: SpaceGrid, n: int, m: int = 0) -> "StateField":
        """Sample ``func(x) -> (len(x), n)`` at the interior points."""
        vals = np.asarray(func(grid.interior), dtype=float).reshape(grid.n_interior, n)
        return cls(vals.ravel(), n, m)

    @property
    def M(self) -> int:
        return self.values.size // self.n + 1

    @property
    def blocks(self) -> np.ndarray:
        return self.values.reshape(-1, self.n)

    def block(self, k: int) -> np.ndarray:
        if not 1 <= k <= self.M - 1:
            raise IndexError(f"block index {k} outside 1..{self.M - 1}")
        return self.blocks[k - 1].copy()

    def with_block(self, k: int, value) -> "StateField":
        if not 1 <= k <= self.M - 1:
            raise IndexError(f"block index {k} outside 1..{self.M - 1}")
        b = self.blocks.copy()
        b[k - 1] = value
        return StateField(b.ravel(), self.n, self.m)

    def component(self, i: int) -> np.ndarray:
        return self.blocks[:, i].copy()


# initial and boundary data -----------------------------------------------


@dataclass(frozen=True)
class Dirichlet:
    """Prescribed boundary value, constant or a function of time."""

    value: float | Callable[[float], float] = 0.0
    tag: str = ARBITRARY

    def __call__(self, t: float) -> float:
        return float(self.value(t)) if callable(self.value) else float(self.value)


@dataclass(frozen=True)
class Free:
    """No boundary value; first derivatives are closed one-sidedly from the interior."""

    closure: str | None = "onesided"


BoundaryEntry = Dirichlet | Free


@dataclass(frozen=True)
class BoundarySpec:
    left: tuple[BoundaryEntry, ...]
    right: tuple[BoundaryEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "left", tuple(self.left))
        object.__setattr__(self, "right", tuple(self.right))
        if len(self.left) != len(self.right):
            raise InputError("left and right boundary lists differ in length")
        for e in self.left + self.right:
            if not isinstance(e, (Dirichlet, Free)):
                raise InputError(f"boundary entry {e!r} is neither Dirichlet nor Free")

    @classmethod
    def dirichlet(cls, left, right, tag: str = ARBITRARY) -> "BoundarySpec":
        return cls(tuple(Dirichlet(v, tag) for v in left), tuple(Dirichlet(v, tag) for v in right))

    @classmethod
    def homogeneous(cls, n: int) -> "BoundarySpec":
        return cls.dirichlet([0.0] * n, [0.0] * n)

    @property
    def n(self) -> int:
        return len(self.left)

    def entries(self, side: str) -> tuple[BoundaryEntry, ...]:
        return self.left if side == LEFT else self.right

    def values(self, side: str, t: float) -> np.ndarray:
        """Boundary values at time ``t``; ``nan`` marks free entries."""
        return np.array([e(t) if isinstance(e, Dirichlet) else np.nan for e in self.entries(side)])

    def is_free(self, i: int, side: str) -> bool:
        return isinstance(self.entries(side)[i], Free)

    def homogenized(self) -> "BoundarySpec":
        """Same kinds, all Dirichlet values replaced by zero."""

        def z(e):
            return Dirichlet(0.0, e.tag) if isinstance(e, Dirichlet) else e

        return BoundarySpec(tuple(map(z, self.left)), tuple(map(z, self.right)))


@dataclass(frozen=True)
class InitialSpec:
    """Per-component profiles ``g_i(x)`` with an arbitrary/consistent tag."""

    profiles: tuple[Callable, ...]
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "profiles", tuple(self.profiles))
        tags = tuple(self.tags) or (ARBITRARY,) * len(self.profiles)
        if len(tags) != len(self.profiles):
            raise InputError("one tag per profile required")
        if any(t not in (ARBITRARY, CONSISTENT) for t in tags):
            raise InputError(f"tags must be {ARBITRARY!r} or {CONSISTENT!r}")
        object.__setattr__(self, "tags", tags)

    @classmethod
    def zeros(cls, n: int) -> "InitialSpec":
        return cls(tuple(lambda x: np.zeros_like(x) for _ in range(n)))

    @property
    def n(self) -> int:
        return len(self.profiles)

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.stack([np.broadcast_to(np.asarray(g(x), dtype=float), x.shape) for g in self.profiles], axis=-1)

    def split(self, x) -> tuple[np.ndarray, np.ndarray]:
        """``(Phi_a(x), Phi_c(x))``: the same values sorted by tag."""
        vals = self.evaluate(x)
        mask = np.array([t == ARBITRARY for t in self.tags])
        return np.where(mask, vals, 0.0), np.where(mask, 0.0, vals)


@dataclass(frozen=True)
class SourceTerm:
    """Right-hand side ``f(t, x)`` returning an array of shape ``(len(x), n)``."""

    func: Callable[[float, np.ndarray], np.ndarray] | None
    n: int

    @classmethod
    def zero(cls, n: int) -> "SourceTerm":
        return cls(None, n)

    def __call__(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.func is None:
            return np.zeros((x.size, self.n))
        return np.asarray(self.func(t, x), dtype=float).reshape(x.size, self.n)


@dataclass(frozen=True)
class Problem:
    """An initial boundary value problem for a PDAE system."""

    system: PDAESystem
    iv: InitialSpec
    bv: BoundarySpec
    source: SourceTerm = None

    def __post_init__(self):
        n = self.system.n
        if self.iv.n != n or self.bv.n != n:
            raise InputError("initial/boundary data do not match the system size")
        if self.source is None:
            object.__setattr__(self, "source", SourceTerm.zero(n))
        elif self.source.n != n:
            raise InputError("source term does not match the system size")


# compatibility -----------------------------------------------------------


@dataclass
class CompatibilityReport:
    passed: bool
    residuals: dict[tuple[int, str], float] = field(default_factory=dict)

    def __bool__(self):
        return self.passed


def check_compatibility(iv: InitialSpec, bv: BoundarySpec, tol: float = 1e-12) -> CompatibilityReport:
    """Compare initial profiles with the boundary values at ``t = 0``.

    Residuals are keyed by ``(component, side)`` and only exist where a
    Dirichlet value is prescribed.
    """
    if iv.n != bv.n:
        raise InputError("initial and boundary specifications differ in size")
    residuals = {}
    for side, x in ((LEFT, 0.0), (RIGHT, 1.0)):
        at_x = iv.evaluate(np.array([x]))[0]
        for i, entry in enumerate(bv.entries(side)):
            if isinstance(entry, Dirichlet):
                residuals[(i, side)] = abs(at_x[i] - entry(0.0))
    passed = all(r <= tol for r in residuals.values())
    return CompatibilityReport(passed, residuals)


def sample_initial(iv: InitialSpec, grid: SpaceGrid) -> StateField:
    return StateField(iv.evaluate(grid.interior).ravel(), iv.n, 0)


def with_boundary(U: StateField | np.ndarray, bv: BoundarySpec, t: float) -> np.ndarray:
    """Full-grid ``(M+1, n)`` array; free boundary values are linearly extrapolated."""
    blocks = U.blocks if isinstance(U, StateField) else np.asarray(U).reshape(-1, bv.n)
    n = blocks.shape[1]
    full = np.empty((blocks.shape[0] + 2, n))
    full[1:-1] = blocks
    for side, b, i1, i2 in ((LEFT, 0, 1, 2), (RIGHT, -1, -2, -3)):
        vals = bv.values(side, t)
        free = np.isnan(vals)
        full[b] = vals
        if free.any():
            if blocks.shape[0] >= 2:
                full[b, free] = 2 * full[i1, free] - full[i2, free]
            else:
                full[b, free] = full[i1, free]
    return full


def scalar_system(
    A: float, B: float, D: float = 0.0, C0: float = 0.0, C1: float = 0.0, degenerate: bool = False
) -> PDAESystem:
    return PDAESystem(A=[[A]], B=[[B]], D=[[D]], C0=[[C0]], C1=[[[C1]]], degenerate=degenerate)

