import numpy as np
import pytest
from scipy.integrate import quad

from nlspectra.discretization import (DIRICHLET, NEUMANN, PERIODIC,
                                      DiscretizationError, DomainSpec,
                                      assemble_nonlocal, build_grid,
                                      build_kernel)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def test_kernel_unit_mass_by_construction():
    kernel = build_kernel("bump", delta=1.0, dim=1)
    assert abs(kernel.discrete_mass(4001) - 1.0) < 1e-8
    assert kernel.support_radius == 1.0


def test_kernel_rescaling_value_at_origin():
    base = build_kernel("bump", delta=1.0, dim=1)
    half = build_kernel("bump", delta=0.5, dim=1)
    z = np.zeros((1, 1))
    assert half(z)[0] == pytest.approx(2.0 * base(z)[0], rel=0, abs=0)
    assert half.support_radius == 0.5
    assert half(np.array([[0.6]]))[0] == 0.0


def test_kernel_symmetry_2d():
    kernel = build_kernel("bump", delta=1.0, dim=2)
    z = np.array([[0.3, -0.4]])
    assert kernel(z)[0] == kernel(-z)[0]
    assert abs(kernel.discrete_mass(801) - 1.0) < 1e-8


def test_kernel_errors():
    with pytest.raises(DiscretizationError):
        build_kernel("unknown", delta=1.0, dim=1)
    with pytest.raises(DiscretizationError):
        build_kernel("bump", delta=0.0, dim=1)
    with pytest.raises(DiscretizationError):
        build_kernel("bump", delta=-2.0, dim=1)


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

def test_midpoint_grid_unit_interval():
    domain = DomainSpec(boundary=NEUMANN, box=((0.0, 1.0),))
    grid = build_grid(domain, 4)
    np.testing.assert_array_equal(grid.nodes.ravel(),
                                  [0.125, 0.375, 0.625, 0.875])
    np.testing.assert_array_equal(grid.weights, [0.25] * 4)


def test_periodic_cell_weights_sum_to_volume():
    domain = DomainSpec(boundary=PERIODIC, box=((0.0, 2 * np.pi),))
    grid = build_grid(domain, 8)
    assert grid.weights.sum() == pytest.approx(2 * np.pi, rel=1e-14)
    assert np.all(grid.nodes < 2 * np.pi)


def test_tensor_grid_2d():
    domain = DomainSpec(boundary=DIRICHLET, box=((0.0, 1.0), (0.0, 1.0)))
    grid = build_grid(domain, 3)
    assert grid.size == 9
    np.testing.assert_allclose(grid.weights, 1.0 / 9.0)
    assert grid.weights.sum() == pytest.approx(1.0)


def test_grid_errors():
    domain = DomainSpec(boundary=DIRICHLET, box=((0.0, 1.0),))
    with pytest.raises(DiscretizationError):
        build_grid(domain, 1)
    with pytest.raises(DiscretizationError):
        DomainSpec(boundary=DIRICHLET, box=((1.0, 1.0),))
    with pytest.raises(DiscretizationError):
        DomainSpec(boundary="robin", box=((0.0, 1.0),))


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def test_neumann_annihilates_constants_exactly():
    domain = DomainSpec(boundary=NEUMANN, box=((0.0, 1.0),))
    grid = build_grid(domain, 16)
    kernel = build_kernel("bump", delta=0.3, dim=1)
    op = assemble_nonlocal(kernel, grid, domain)
    result = op.apply(np.ones(16))
    assert np.all(result == 0.0)


def test_periodic_rows_have_unit_mass():
    domain = DomainSpec(boundary=PERIODIC, box=((0.0, 2 * np.pi),))
    grid = build_grid(domain, 8)
    kernel = build_kernel("bump", delta=1.0, dim=1)
    op = assemble_nonlocal(kernel, grid, domain)
    assert np.max(np.abs(op.row_mass + op.diagonal_part)) < 1e-8
    assert np.all(op.diagonal_part == -1.0)


def test_dirichlet_entries_match_brute_force():
    domain = DomainSpec(boundary=DIRICHLET, box=((0.0, 1.0),))
    grid = build_grid(domain, 16)
    kernel = build_kernel("bump", delta=0.3, dim=1)
    op = assemble_nonlocal(kernel, grid, domain)
    dense = op.kernel_part.toarray()
    brute = np.zeros((16, 16))
    for m in range(16):
        for n in range(16):
            brute[m, n] = kernel(grid.nodes[n] - grid.nodes[m])[()] * grid.weights[n]
    assert np.max(np.abs(dense - brute)) < 1e-10
    assert np.all(op.diagonal_part == -1.0)


def test_kernel_part_nonnegative_and_banded():
    domain = DomainSpec(boundary=DIRICHLET, box=((0.0, 1.0),))
    grid = build_grid(domain, 32)
    kernel = build_kernel("bump", delta=0.2, dim=1)
    op = assemble_nonlocal(kernel, grid, domain)
    dense = op.kernel_part.toarray()
    assert np.all(dense >= 0.0)
    for m in range(32):
        far = np.abs(grid.nodes[:, 0] - grid.nodes[m, 0]) >= kernel.support_radius
        assert np.all(dense[m, far] == 0.0)


def test_assembly_preconditions():
    kernel = build_kernel("bump", delta=0.6, dim=1)
    domain = DomainSpec(boundary=PERIODIC, box=((0.0, 1.0),))
    grid = build_grid(domain, 8)
    with pytest.raises(DiscretizationError):
        assemble_nonlocal(kernel, grid, domain)  # support >= half period
    kernel2 = build_kernel("bump", delta=0.3, dim=2)
    dom1 = DomainSpec(boundary=DIRICHLET, box=((0.0, 1.0),))
    with pytest.raises(DiscretizationError):
        assemble_nonlocal(kernel2, build_grid(dom1, 8), dom1)


def test_refinement_consistency_second_order():
    domain = DomainSpec(boundary=DIRICHLET, box=((0.0, 1.0),))
    kernel = build_kernel("bump", delta=0.4, dim=1)

    def u(y):
        return np.sin(2.3 * y) + 0.5 * y ** 2

    errors = []
    for res in (8, 16, 32, 64):
        grid = build_grid(domain, res)
        op = assemble_nonlocal(kernel, grid, domain)
        disc = op.kernel_part @ u(grid.nodes[:, 0])
        exact = np.array([
            quad(lambda y, xm=xm: kernel(np.array([y - xm]))[()] * u(y),
                 max(0.0, xm - 0.4), min(1.0, xm + 0.4), limit=200)[0]
            for xm in grid.nodes[:, 0]
        ])
        errors.append(np.max(np.abs(disc - exact)))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(orders > 1.9)


def test_periodic_circulant_structure_and_equivariance():
    domain = DomainSpec(boundary=PERIODIC, box=((0.0, 2.0),))
    grid = build_grid(domain, 12)
    kernel = build_kernel("bump", delta=0.5, dim=1)
    op = assemble_nonlocal(kernel, grid, domain)
    dense = op.kernel_part.toarray()
    # exact circulant: every row is the rotated first row, bit for bit
    for s in range(12):
        np.testing.assert_array_equal(dense[s], np.roll(dense[0], s))
    rng = np.random.default_rng(0)
    u = rng.random(12)
    shifted = np.roll(u, 3)
    lhs = op.apply(shifted)
    rhs = np.roll(op.apply(u), 3)
    # application commutes with shifts up to summation-order roundoff
    assert np.max(np.abs(lhs - rhs)) < 1e-14


def test_apply_shapes():
    domain = DomainSpec(boundary=NEUMANN, box=((0.0, 1.0),))
    grid = build_grid(domain, 8)
    kernel = build_kernel("bump", delta=0.3, dim=1)
    op = assemble_nonlocal(kernel, grid, domain)
    rng = np.random.default_rng(1)
    u = rng.random((8, 2))
    out2 = op.apply(u)
    out3 = op.apply(u[:, :, None])
    np.testing.assert_allclose(out2, out3[:, :, 0], rtol=0, atol=0)
