import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlpdae.core import (
    BoundarySpec,
    ConfigurationError,
    Dirichlet,
    Free,
    InputError,
    PDAESystem,
    SpaceGrid,
    sample_initial,
    scalar_system,
)
from qlpdae.discretization import (
    BACKWARD,
    CENTRAL,
    FORWARD,
    UPWIND,
    DiffScheme,
    assemble_G,
    assemble_Qh,
    assemble_Qh_kron,
    build_Ctilde,
    build_P,
    build_Ptilde,
    laplacian_spectrum,
)
from qlpdae.plasma import plasma_scheme

# one-sided/central stencil weights on (u_{k-1}, u_k, u_{k+1}), divided by h
WEIGHTS = {CENTRAL: (-0.5, 0.0, 0.5), FORWARD: (0.0, -1.0, 1.0), BACKWARD: (-1.0, 1.0, 0.0)}


def brute_force_apply(system, U, V_full, h, kind_of):
    """``L_h[U] v`` pointwise from the definition; ``kind_of(j, i, l)`` picks the stencil."""
    N, n = U.shape
    out = np.zeros((N, n))
    for j in range(N):
        C = system.C0 + system.C1 @ U[j]
        vm, v0, vp = V_full[j], V_full[j + 1], V_full[j + 2]
        for i in range(n):
            acc = 0.0
            for l in range(n):
                acc += system.B[i, l] * (vm[l] - 2 * v0[l] + vp[l]) / h**2
                w = WEIGHTS[kind_of(j, i, l)]
                acc += C[i, l] * (w[0] * vm[l] + w[1] * v0[l] + w[2] * vp[l]) / h
                acc += system.D[i, l] * v0[l]
            out[j, i] = acc
    return out


def brute_force_matrix(system, U, grid, bv_left, bv_right, kind_of):
    """Columns of ``Q`` and the boundary vector ``g`` by probing the pointwise formula."""
    N, n = U.shape
    size = N * n
    g = brute_force_apply(system, U, np.vstack([bv_left, np.zeros((N, n)), bv_right]), grid.h, kind_of)
    Q = np.zeros((size, size))
    for c in range(size):
        e = np.zeros(size)
        e[c] = 1.0
        full = np.vstack([np.zeros(n), e.reshape(N, n), np.zeros(n)])
        Q[:, c] = brute_force_apply(system, U, full, grid.h, kind_of).ravel()
    return Q, g.ravel()


def random_system(rng, n):
    return PDAESystem(
        A=np.eye(n),
        B=rng.standard_normal((n, n)),
        D=rng.standard_normal((n, n)),
        C0=rng.standard_normal((n, n)),
        C1=rng.standard_normal((n, n, n)),
    )


# pattern matrices ----------------------------------------------------------


def test_build_P_examples():
    np.testing.assert_array_equal(build_P(3), [[-2, 1], [1, -2]])
    np.testing.assert_array_equal(build_P(2), [[-2]])
    P5 = build_P(5)
    assert P5.shape == (4, 4)
    np.testing.assert_array_equal(np.diag(P5), -2)
    np.testing.assert_array_equal(np.diag(P5, 1), 1)
    np.testing.assert_array_equal(np.diag(P5, -1), 1)
    with pytest.raises(InputError):
        build_P(1)


@pytest.mark.parametrize(
    "kind, expected, q",
    [
        (CENTRAL, [[0, 1], [-1, 0]], 2),
        (FORWARD, [[-1, 1], [0, -1]], 1),
        (BACKWARD, [[1, 0], [-1, 1]], 1),
    ],
)
def test_build_Ptilde_M3(kind, expected, q):
    Pt, qq = build_Ptilde(3, kind)
    np.testing.assert_array_equal(Pt, expected)
    assert qq == q


@pytest.mark.parametrize("kind, value", [(CENTRAL, 0), (FORWARD, -1), (BACKWARD, 1)])
def test_build_Ptilde_M2(kind, value):
    np.testing.assert_array_equal(build_Ptilde(2, kind)[0], [[value]])


def test_build_Ptilde_rejects_small_grid():
    with pytest.raises(InputError):
        build_Ptilde(1, CENTRAL)


# spectrum --------------------------------------------------------------------


def test_eigenvalue_examples():
    assert laplacian_spectrum(2).eigenvalues[0] == pytest.approx(-8.0, rel=1e-14)
    assert laplacian_spectrum(4).eigenvalues[1] == pytest.approx(-32.0, rel=1e-14)


@pytest.mark.parametrize("M", [2, 3, 4, 7, 8, 16, 31, 32, 64])
def test_spectral_identities(M):
    sp = laplacian_spectrum(M)
    Phi, lam = sp.Phi, sp.eigenvalues
    I = np.eye(M - 1)
    np.testing.assert_allclose(Phi, Phi.T, atol=1e-15)
    np.testing.assert_allclose(Phi @ Phi, I, atol=1e-12)
    Lam = Phi @ (build_P(M) * M**2) @ Phi
    scale = np.abs(lam).max()
    assert np.abs(Lam - np.diag(lam)).max() <= 1e-12 * scale


def test_lambda1_converges_quadratically():
    errs = [abs(laplacian_spectrum(M).eigenvalues[0] + np.pi**2) for M in (10, 20, 40, 80)]
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    np.testing.assert_allclose(rates, 2.0, atol=0.02)


@pytest.mark.parametrize("M", [3, 6, 9])
def test_kronecker_diagonalization(M, rng):
    n = 3
    B, A, D = rng.standard_normal((3, n, n))
    tau, h = 0.1, 1.0 / M
    sp = laplacian_spectrum(M)
    Psi = np.kron(sp.Phi, np.eye(n))
    np.testing.assert_allclose(
        np.kron(build_P(M), B) / h**2, Psi @ np.kron(np.diag(sp.eigenvalues), B) @ Psi, atol=1e-11 * M**2
    )
    blk = np.kron(np.eye(M - 1), A / tau + D)
    np.testing.assert_allclose(blk, Psi @ blk @ Psi, atol=1e-11)


# assembly --------------------------------------------------------------------


def test_heat_block():
    s = scalar_system(1.0, -1.0)
    Q, g = assemble_Qh(s, np.zeros(2), SpaceGrid(3), DiffScheme(CENTRAL))
    np.testing.assert_allclose(Q.to_dense(), -9.0 * np.array([[-2, 1], [1, -2]]))
    assert not g.any()


def test_zero_state_without_C0_has_no_convection(rng):
    s = random_system(rng, 2)
    s = PDAESystem(A=s.A, B=s.B, D=s.D, C0=np.zeros((2, 2)), C1=s.C1)
    grid = SpaceGrid(5)
    Q, _ = assemble_Qh(s, np.zeros(8), grid, DiffScheme(CENTRAL))
    bare = np.kron(build_P(5), s.B) * 25 + np.kron(np.eye(4), s.D)
    np.testing.assert_allclose(Q.to_dense(), bare, atol=1e-13)


def _plasma_kind_of(U, bv_right_free):
    """Stencil choice of the plasma default scheme, written out by hand."""
    N = U.shape[0]

    def kind_of(j, i, l):
        if l in (0, 1):
            if i == l and U[j, 1] != 0:
                kind = BACKWARD if U[j, 1] > 0 else FORWARD
            else:
                kind = BACKWARD
        else:
            kind = BACKWARD
        if j == N - 1 and bv_right_free[l]:
            kind = BACKWARD
        return kind

    return kind_of


def test_plasma_initial_state_matches_brute_force(plasma):
    grid = SpaceGrid(20)
    U = sample_initial(plasma.iv, grid).blocks
    left, right = plasma.bv.values("left", 0.0), plasma.bv.values("right", 0.0)
    free_r = np.isnan(right)
    right = np.nan_to_num(right)
    Q, g = assemble_Qh(plasma.system, U, grid, plasma_scheme(), plasma.bv, 0.0)
    Qb, gb = brute_force_matrix(plasma.system, U, grid, left, right, _plasma_kind_of(U, free_r))
    scale = np.abs(Qb).max()
    assert np.abs(Q.to_dense() - Qb).max() <= 1e-13 * scale
    np.testing.assert_allclose(g, gb, atol=1e-13 * scale)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(2, 6), st.sampled_from([CENTRAL, FORWARD, BACKWARD]), st.integers(0, 2**31))
def test_block_assembly_matches_kronecker(n, M, kind, seed):
    rng = np.random.default_rng(seed)
    s = random_system(rng, n)
    grid = SpaceGrid(M)
    U = rng.standard_normal((M - 1) * n)
    Q, _ = assemble_Qh(s, U, grid, DiffScheme(kind))
    dense = assemble_Qh_kron(s, U, grid, kind)
    np.testing.assert_allclose(Q.to_dense(), dense, atol=1e-10 * max(1.0, np.abs(dense).max()))
    Qb, _ = brute_force_matrix(s, U.reshape(M - 1, n), grid, np.zeros(n), np.zeros(n), lambda j, i, l: kind)
    np.testing.assert_allclose(dense, Qb, atol=1e-10 * max(1.0, np.abs(dense).max()))


def test_boundary_vector_reproduces_full_operator(rng):
    s = random_system(rng, 2)
    grid = SpaceGrid(7)
    U = rng.standard_normal((6, 2))
    V = rng.standard_normal((6, 2))
    bv = BoundarySpec.dirichlet([0.3, -0.2], [1.1, 0.4])
    Q, g = assemble_Qh(s, U, grid, DiffScheme(CENTRAL), bv, 0.0)
    full = np.vstack([[0.3, -0.2], V, [1.1, 0.4]])
    expected = brute_force_apply(s, U, full, grid.h, lambda j, i, l: CENTRAL)
    np.testing.assert_allclose(Q @ V.ravel() + g, expected.ravel(), atol=1e-11)


def test_G_examples(plasma):
    tau = 0.05
    s = scalar_system(1.0, 0.0, degenerate=True)
    G, _ = assemble_G(s, np.zeros(4), tau, SpaceGrid(5), DiffScheme(CENTRAL))
    np.testing.assert_array_equal(G.to_dense(), np.eye(4) / tau)

    C0 = -0.7
    ex1 = scalar_system(1.0, -1.0, 0.0, C0)
    M, h = 8, 1 / 8
    G, _ = assemble_G(ex1, np.zeros(M - 1), tau, SpaceGrid(M), DiffScheme(FORWARD))
    Pt, _ = build_Ptilde(M, FORWARD)
    expected = np.eye(M - 1) / tau - build_P(M) / h**2 + C0 / h * Pt
    np.testing.assert_allclose(G.to_dense(), expected, atol=1e-12)

    grid = SpaceGrid(10)
    U = sample_initial(plasma.iv, grid)
    G, g1 = assemble_G(plasma.system, U, tau, grid, plasma_scheme(), plasma.bv)
    Q, g2 = assemble_Qh(plasma.system, U, grid, plasma_scheme(), plasma.bv)
    np.testing.assert_array_equal(G.to_dense(), Q.to_dense() + np.kron(np.eye(9), plasma.system.A / tau))
    np.testing.assert_array_equal(g1, g2)


def test_free_boundary_in_second_derivative_rejected():
    s = scalar_system(1.0, -1.0)
    bv = BoundarySpec((Dirichlet(0.0),), (Free(),))
    with pytest.raises(ConfigurationError):
        assemble_Qh(s, np.zeros(3), SpaceGrid(4), DiffScheme(CENTRAL), bv)


def test_free_boundary_without_closure_rejected():
    s = PDAESystem(A=[[1.0]], B=[[0.0]], D=[[0.0]], C0=[[1.0]], C1=[[[0.0]]], degenerate=True)
    bv = BoundarySpec((Dirichlet(0.0),), (Free(closure=None),))
    with pytest.raises(ConfigurationError):
        assemble_Qh(s, np.zeros(3), SpaceGrid(4), DiffScheme(CENTRAL), bv)
    # with the one-sided rule the last point switches to backward differences
    bv = BoundarySpec((Dirichlet(0.0),), (Free(),))
    Q, _ = assemble_Qh(s, np.zeros(3), SpaceGrid(4), DiffScheme(CENTRAL), bv)
    np.testing.assert_allclose(Q.to_dense()[-1], [0.0, -4.0, 4.0])


def test_upwind_follows_sign():
    s = PDAESystem(A=[[1.0]], B=[[0.0]], D=[[0.0]], C0=[[0.0]], C1=[[[1.0]]], degenerate=True)
    U = np.array([1.0, -1.0, 2.0])
    Q, _ = assemble_Qh(s, U, SpaceGrid(4), DiffScheme(UPWIND))
    expected = 4 * np.array([[1.0, 0.0, 0.0], [0.0, 1.0, -1.0], [0.0, -2.0, 2.0]])
    np.testing.assert_allclose(Q.to_dense(), expected)


# Ctilde ----------------------------------------------------------------------


@pytest.mark.parametrize("kind", [CENTRAL, FORWARD, BACKWARD])
def test_ctilde_defining_property_homogeneous(kind, plasma, rng):
    M = 4
    grid = SpaceGrid(M)
    Pt, q = build_Ptilde(M, kind)
    for _ in range(100):
        V = rng.standard_normal((M - 1) * 4)
        eta = rng.standard_normal((M - 1, 4))
        Ct = build_Ctilde(plasma.system, V, grid, DiffScheme(kind))
        lhs = np.zeros((M - 1) * 4)
        blocks = [plasma.system.C1 @ e for e in eta]  # C1[eta_j]
        for j in range(M - 1):
            for k in range(M - 1):
                lhs[j * 4 : (j + 1) * 4] += Pt[j, k] * blocks[j] @ V[k * 4 : (k + 1) * 4]
        lhs /= q * grid.h
        np.testing.assert_allclose(Ct @ eta.ravel(), lhs, atol=1e-13 * max(1, np.abs(lhs).max()))


def test_ctilde_with_boundary_and_upwind(plasma, rng):
    grid = SpaceGrid(9)
    for _ in range(100):
        U = rng.standard_normal((8, 4)) * 0.3
        V = rng.standard_normal((8, 4)) * 0.3
        eta = rng.standard_normal((8, 4)) * 0.3
        Ct = build_Ctilde(plasma.system, V, grid, plasma_scheme(), U=U, bv=plasma.bv)
        Qa, ga = assemble_Qh(plasma.system, U + eta, grid, plasma_scheme(), plasma.bv)
        Qb, gb = assemble_Qh(plasma.system, U, grid, plasma_scheme(), plasma.bv)
        # stencils stay those chosen at U where the sign of u2 does not flip
        same = np.sign(U[:, 1]) == np.sign(U[:, 1] + eta[:, 1])
        if not same.all():
            continue
        lhs = (Qa @ V.ravel() + ga) - (Qb @ V.ravel() + gb)
        np.testing.assert_allclose(Ct @ eta.ravel(), lhs, atol=1e-12)


def test_ctilde_trivial_cases(plasma):
    grid = SpaceGrid(6)
    V = np.linspace(0, 1, 20)
    Ct = build_Ctilde(plasma.system, V, grid, DiffScheme(CENTRAL))
    assert not (Ct @ np.zeros(20)).any()
    s = PDAESystem(A=np.eye(2), B=np.eye(2), D=np.zeros((2, 2)), C0=np.ones((2, 2)), C1=np.zeros((2, 2, 2)))
    assert not build_Ctilde(s, np.ones(10), grid, DiffScheme(CENTRAL)).to_dense().any()


def test_ctilde_upwind_needs_state(plasma):
    with pytest.raises(ValueError):
        build_Ctilde(plasma.system, np.zeros(20), SpaceGrid(6), DiffScheme(UPWIND))


def test_scheme_roundtrip():
    sc = plasma_scheme()
    assert DiffScheme.from_dict(sc.to_dict()) == sc
    assert DiffScheme(CENTRAL).q == 2 and DiffScheme(BACKWARD).q == 1
    with pytest.raises(InputError):
        DiffScheme("spline")


def test_csv_export(tmp_path, plasma):
    Q, _ = assemble_Qh(plasma.system, np.zeros(8), SpaceGrid(3), DiffScheme(CENTRAL))
    path = tmp_path / "q.csv"
    Q.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "i,j,value" and len(lines) == 1 + 64
    i, j, v = lines[1 + 8 * 1 + 3].split(",")
    assert (int(i), int(j)) == (1, 3) and float(v) == Q.to_dense()[1, 3]
