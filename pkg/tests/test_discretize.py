import numpy as np
import pytest
import scipy.sparse as sp

from spectralflex import discretize as dz
from spectralflex import quasikahler as qk
from spectralflex import symexpr as se
from spectralflex import vectorfield as vf
from spectralflex.vectorfield import VectorField

COORDS = [VectorField.coordinate(4, i) for i in range(4)]
BASE = qk.base_structure(4)


def test_grid_basics():
    g = dz.make_grid(4, 4)
    assert g.size == 256
    assert dz.make_grid(4, 16).h == pytest.approx(0.39269908169872414)
    flat = np.arange(g.size)
    assert np.array_equal(g.index(g.multi_index(flat)), flat)
    node = g.index([3, 1, 2, 0])
    assert g.multi_index(g.neighbor(node, 0, 1)).tolist() == [0, 1, 2, 0]


def test_every_node_has_2n_distinct_neighbours():
    g = dz.make_grid(3, 4)
    flat = np.arange(g.size)
    nbrs = np.stack([g.neighbor(flat, a, s) for a in range(3) for s in (1, -1)])
    assert all(len(set(nbrs[:, k])) == 6 for k in flat)


@pytest.mark.parametrize("N", [3, 2, 7])
def test_grid_rejects_bad_N(N):
    with pytest.raises(ValueError):
        dz.make_grid(4, N)


def test_shift_matches_roll():
    g = dz.make_grid(3, 6)
    u = np.random.default_rng(0).standard_normal(g.size)
    for axis in range(3):
        for step in (1, -1):
            assert np.array_equal(g.shift(axis, step) @ u, g.roll(u, axis, step))


def test_centered_derivative_symbol():
    g = dz.make_grid(4, 16)
    D = dz.assemble_vector_derivative(g, COORDS[0])
    x = g.points[:, 0]
    assert np.allclose(D @ np.sin(x), np.cos(x) * np.sin(g.h) / g.h, atol=1e-13)
    assert np.array_equal(D @ np.ones(g.size), np.zeros(g.size))


def test_vector_derivative_adjoint():
    g = dz.make_grid(4, 6)
    W = vf.preset("t4-d2-singular").W
    D = dz.assemble_vector_derivative(g, W)
    rng = np.random.default_rng(1)
    u, v = rng.standard_normal((2, g.size))
    assert abs((D @ u) @ v - u @ (D.T @ v)) < 1e-12 * np.abs(D @ u).sum()
    assert np.abs(D @ np.ones(g.size)).max() < 1e-13


def test_covectors_count_and_values():
    g = dz.make_grid(2, 8)
    x = g.points[:, 0]
    xis = list(dz.covectors(g, x))
    assert len(xis) == 4
    fwd = (np.roll(x.reshape(8, 8), -1, 0).ravel() - x) / g.h
    assert np.allclose(xis[0][:, 0], fwd)


def brute_force_matrix(grid, coeff):
    """Matrix of the orientation-averaged form, built column by column from
    the covectors of each basis vector.  No sparse stencil is involved."""
    n, size = grid.n, grid.size
    G = {s: np.zeros((size, n, size)) for s in dz.orientations(n)}
    for k in range(size):
        e = np.zeros(size)
        e[k] = 1.0
        for s, xi in zip(dz.orientations(n), dz.covectors(grid, e)):
            G[s][:, :, k] = xi
    A = np.zeros((size, size))
    for s, Gs in G.items():
        MG = np.einsum("pij,pjk->pik", coeff, Gs)
        A += np.einsum("pik,pil->kl", Gs, MG)
    return A / 2 ** n


@pytest.mark.parametrize("which", ["metric", "sub"])
def test_dense_brute_force_oracle(which):
    grid = dz.make_grid(4, 4)
    spec = vf.preset("t4-d1")
    if which == "metric":
        m = qk.metric_field(grid, spec.fields, np.full(grid.size, 4.0), BASE)
        coeff, A = m.ginv, dz.assemble_laplace_beltrami(grid, m)
    else:
        coeff = dz.sub_laplacian_coefficients(grid, spec.fields)
        A = dz.assemble_sub_laplacian(grid, spec.fields)
    ref = brute_force_matrix(grid, coeff)
    assert np.abs(A.dense() - ref).max() <= 1e-12 * np.abs(ref).max()


def test_quadratic_form_normalization():
    grid = dz.make_grid(3, 6)
    rng = np.random.default_rng(2)
    B = rng.standard_normal((grid.size, 3, 3))
    coeff = B @ np.swapaxes(B, 1, 2)
    A = dz.assemble_gram_form(grid, coeff)
    u = rng.standard_normal(grid.size)
    Q = sum(np.einsum("pi,pij,pj->", xi, coeff, xi)
            for xi in dz.covectors(grid, u)) / 8 * grid.cell_volume
    assert grid.cell_volume * u @ (A @ u) == pytest.approx(Q, rel=1e-12)


def test_flat_laplacian_spectrum():
    grid = dz.make_grid(4, 4)
    m = qk.metric_field(grid, COORDS[:2], np.ones(grid.size), BASE)
    A = dz.assemble_laplace_beltrami(grid, m)
    ev = np.linalg.eigvalsh(A.dense())
    assert np.allclose(ev, dz.flat_eigenvalues(grid), atol=1e-12)
    # connected grid: one-dimensional kernel
    assert np.sum(ev < 1e-10) == 1


def test_coordinate_sub_laplacian_is_flat_laplacian():
    grid = dz.make_grid(4, 6)
    S = dz.assemble_sub_laplacian(grid, COORDS)
    m = qk.metric_field(grid, COORDS[:2], np.ones(grid.size), BASE)
    L = dz.assemble_laplace_beltrami(grid, m)
    assert abs(S.matrix - L.matrix).max() < 1e-13
    lap = sum((2 * sp.identity(grid.size) - grid.shift(i, 1) - grid.shift(i, -1))
              / grid.h ** 2 for i in range(4))
    assert abs(S.matrix - lap).max() < 1e-12


@pytest.mark.parametrize("name", vf.PRESETS)
def test_symmetry_psd_constants(name):
    grid = dz.make_grid(4, 6)
    A = dz.assemble_sub_laplacian(grid, vf.preset(name).fields)
    assert A.symmetric
    assert A.row_sum_defect() < 1e-12
    x = np.random.default_rng(3).standard_normal((100, grid.size))
    assert np.all(np.einsum("ki,ki->k", x, (A.matrix @ x.T).T) >= -1e-10)


def test_stencil_width():
    grid = dz.make_grid(4, 8)
    rng = np.random.default_rng(4)
    B = rng.standard_normal((grid.size, 4, 4))
    A = dz.assemble_gram_form(grid, B @ np.swapaxes(B, 1, 2))
    assert np.diff(A.matrix.indptr).max() == 1 + 2 * 4 + 2 * 4 * 3


def test_flat_lambda1_refinement():
    vals = [dz.flat_lambda1(N) for N in (4, 8, 16, 32, 64)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert abs(vals[-1] - 1) < 1e-3
    assert dz.flat_lambda1(16) == pytest.approx(0.98722, abs=1e-5)


def _x_metric(grid, a):
    """Unit-determinant metric g = diag(1/a, a, 1, 1) with a = a(x)."""
    g = np.zeros((grid.size, 4, 4))
    g[:, 0, 0], g[:, 1, 1], g[:, 2, 2], g[:, 3, 3] = 1 / a, a, 1, 1
    ginv = np.linalg.inv(g)
    return qk.MetricField(grid, g, ginv, np.ones(grid.size))


def test_rayleigh_quadrature_oracle():
    from scipy.integrate import quad

    ax = lambda x: 2 + np.sin(x)
    exact = quad(lambda x: ax(x) * np.cos(x) ** 2, 0, 2 * np.pi)[0] / np.pi
    errs = []
    for N in (8, 16, 32):
        grid = dz.make_grid(4, N)
        A = dz.assemble_laplace_beltrami(grid, _x_metric(grid, ax(grid.points[:, 0])))
        u = np.sin(grid.points[:, 0])
        errs.append(abs(u @ (A @ u) / (u @ u) - exact))
    assert errs[-1] < 10 * (2 * np.pi / 32) ** 2
    assert errs[1] / errs[2] > 3.5


def test_assembly_rejects_volume_change():
    grid = dz.make_grid(4, 4)
    m = _x_metric(grid, np.full(grid.size, 2.0))
    m.g[5] *= 1.01
    with pytest.raises(dz.AssemblyError, match="node 5"):
        dz.assemble_laplace_beltrami(grid, m)


def test_assembly_rejects_non_spd():
    grid = dz.make_grid(4, 4)
    m = _x_metric(grid, np.full(grid.size, 2.0))
    m.ginv[7] = np.diag([1.0, -1.0, -1.0, 1.0])
    with pytest.raises(dz.AssemblyError, match="node 7"):
        dz.assemble_laplace_beltrami(grid, m)


def test_assembly_rejects_wrong_grid():
    g4, g6 = dz.make_grid(4, 4), dz.make_grid(4, 6)
    m = _x_metric(g4, np.ones(g4.size))
    with pytest.raises(dz.AssemblyError):
        dz.assemble_laplace_beltrami(g6, m)


def test_triplet_export(tmp_path):
    grid = dz.make_grid(4, 4)
    A = dz.assemble_sub_laplacian(grid, vf.preset("t4-d1").fields)
    path = tmp_path / "A.txt"
    A.export_triplets(path)
    lines = path.read_text().splitlines()
    assert lines[0] == f"# 256 256 {A.matrix.nnz}"
    data = np.loadtxt(path, comments="#")
    B = sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
                      shape=A.shape)
    assert abs(B - A.matrix).max() == 0.0


def test_field_dimension_checked():
    with pytest.raises(dz.AssemblyError):
        dz.assemble_sub_laplacian(dz.make_grid(3, 4), COORDS)
