"""Block-tridiagonal matrices and their LU solution via LAPACK band routines."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack
from scipy.sparse.linalg import LinearOperator, onenormest

PIVOT_TOL = 1e-12


class SingularSystemError(RuntimeError):
    """A factorization hit a (numerically) zero pivot."""

    def __init__(self, message: str, condition: float = np.inf):
        super().__init__(message)
        self.condition = condition


@dataclass(eq=False)
class BlockTridiagonal:
    """``N`` block rows of ``n x n`` blocks.

    ``lower[j]`` couples block row ``j`` to column ``j-1`` and ``upper[j]`` to
    column ``j+1``; ``lower[0]`` and ``upper[-1]`` are ignored and kept zero.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.diag = np.asarray(self.diag, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if not (self.lower.shape == self.diag.shape == self.upper.shape) or self.diag.ndim != 3:
            raise ValueError("block arrays must share the shape (N, n, n)")
        self.lower[0] = 0.0
        self.upper[-1] = 0.0

    @classmethod
    def zeros(cls, N: int, n: int) -> "BlockTridiagonal":
        return cls(np.zeros((N, n, n)), np.zeros((N, n, n)), np.zeros((N, n, n)))

    @classmethod
    def block_identity(cls, N: int, block) -> "BlockTridiagonal":
        """``I_N kron block``."""
        block = np.asarray(block, dtype=float)
        out = cls.zeros(N, block.shape[0])
        out.diag[:] = block
        return out

    @property
    def N(self) -> int:
        return self.diag.shape[0]

    @property
    def n(self) -> int:
        return self.diag.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        s = self.N * self.n
        return s, s

    def copy(self) -> "BlockTridiagonal":
        return BlockTridiagonal(self.lower.copy(), self.diag.copy(), self.upper.copy(), dict(self.meta))

    def __add__(self, other: "BlockTridiagonal") -> "BlockTridiagonal":
        return BlockTridiagonal(self.lower + other.lower, self.diag + other.diag, self.upper + other.upper)

    def __sub__(self, other: "BlockTridiagonal") -> "BlockTridiagonal":
        return BlockTridiagonal(self.lower - other.lower, self.diag - other.diag, self.upper - other.upper)

    def __mul__(self, s: float) -> "BlockTridiagonal":
        return BlockTridiagonal(s * self.lower, s * self.diag, s * self.upper)

    __rmul__ = __mul__

    def left_multiply_blockdiag(self, block) -> "BlockTridiagonal":
        """``(I kron block) @ self``."""
        block = np.asarray(block, dtype=float)
        return BlockTridiagonal(block @ self.lower, block @ self.diag, block @ self.upper)

    def row_mask(self, rows) -> "BlockTridiagonal":
        """Keep only the in-block rows listed in ``rows``; zero the others."""
        keep = np.zeros(self.n)
        keep[list(rows)] = 1.0
        P = np.diag(keep)
        return self.left_multiply_blockdiag(P)

    def matvec(self, v) -> np.ndarray:
        V = np.asarray(v, dtype=float).reshape(self.N, self.n)
        out = np.einsum("jab,jb->ja", self.diag, V)
        out[1:] += np.einsum("jab,jb->ja", self.lower[1:], V[:-1])
        out[:-1] += np.einsum("jab,jb->ja", self.upper[:-1], V[1:])
        return out.ravel()

    def __matmul__(self, v):
        return self.matvec(v)

    def to_dense(self) -> np.ndarray:
        N, n = self.N, self.n
        out = np.zeros((N * n, N * n))
        for j in range(N):
            r = slice(j * n, (j + 1) * n)
            out[r, r] = self.diag[j]
            if j > 0:
                out[r, (j - 1) * n : j * n] = self.lower[j]
            if j < N - 1:
                out[r, (j + 1) * n : (j + 2) * n] = self.upper[j]
        return out

    def submatrix(self, comps) -> "BlockTridiagonal":
        """Restriction to the in-block components ``comps`` (rows and columns)."""
        ix = np.ix_(range(self.N), comps, comps)
        return BlockTridiagonal(self.lower[ix], self.diag[ix], self.upper[ix])

    def to_csv(self, path) -> None:
        """Dense row-major dump with header ``i,j,value``."""
        dense = self.to_dense()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "value"])
            for i, row in enumerate(dense):
                for j, val in enumerate(row):
                    w.writerow([i, j, repr(float(val))])

    # solving -------------------------------------------------------------

    def _banded(self):
        N, n = self.N, self.n
        kl = ku = 2 * n - 1
        size = N * n
        ab = np.zeros((2 * kl + ku + 1, size))
        jj, a, b = np.meshgrid(np.arange(N), np.arange(n), np.arange(n), indexing="ij")
        rows = jj * n + a
        for blocks, off in ((self.diag, 0), (self.lower, -1), (self.upper, 1)):
            cols = (jj + off) * n + b
            valid = (cols >= 0) & (cols < size)
            ab[kl + ku + rows[valid] - cols[valid], cols[valid]] = blocks[valid]
        return ab, kl, ku

    def factorize(self) -> "BandLU":
        return BandLU(self)

    def solve(self, rhs) -> np.ndarray:
        return self.factorize().solve(rhs)


class BandLU:
    """LU factorization with partial pivoting of a block-tridiagonal matrix."""

    def __init__(self, op: BlockTridiagonal, pivot_tol: float = PIVOT_TOL):
        self.op = op
        ab, kl, ku = op._banded()
        self.kl, self.ku = kl, ku
        self.size = ab.shape[1]
        row_scale = np.zeros(self.size)
        for blocks in (op.lower, op.diag, op.upper):
            row_scale = np.maximum(row_scale, np.abs(blocks).max(axis=2).ravel())
        self.lu, self.piv, info = lapack.dgbtrf(ab, kl, ku)
        self.pivots = np.abs(self.lu[kl + ku])
        scale = row_scale.max() if row_scale.size else 0.0
        if info > 0 or scale == 0.0 or self.pivots.min() < pivot_tol * scale:
            cond = np.inf if info > 0 or scale == 0.0 else self.condition_estimate()
            raise SingularSystemError(
                f"matrix is singular to working precision (min pivot {self.pivots.min():.3e}, "
                f"row scale {scale:.3e})",
                condition=cond,
            )

    def solve(self, rhs, trans: int = 0) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        x, info = lapack.dgbtrs(self.lu, self.kl, self.ku, rhs, self.piv, trans=trans)
        if info != 0:
            raise RuntimeError(f"dgbtrs failed with info={info}")
        return x

    def condition_estimate(self) -> float:
        """1-norm condition number estimate (Hager/Higham estimator on the inverse)."""
        dense_norm = np.abs(self.op.to_dense()).sum(axis=0).max()
        inv = LinearOperator(
            (self.size, self.size),
            matvec=lambda v: self.solve(np.ravel(v)),
            rmatvec=lambda v: self.solve(np.ravel(v), trans=1),
            dtype=float,
        )
        with np.errstate(all="ignore"):
            est = onenormest(inv)
        return float(dense_norm * est) if np.isfinite(est) else np.inf
