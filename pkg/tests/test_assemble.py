import numpy as np
import pytest
import scipy.sparse

import nitschefem.formlib as fl
from nitschefem.assemble import (AssembledSystem, DofMap, StudySpec, assemble,
                                 best_approximation, bilinear_action_on_exact,
                                 error_norms, evaluate_solution,
                                 flux_pairing_of_exact, run_convergence, solve,
                                 _energy_gram_and_load)
from nitschefem.errors import NotPositiveDefiniteError
from nitschefem.formlib import EnforcementVariant as EV
from nitschefem.mesh import BoundaryPartition, RectDomain, build_mesh
from nitschefem.spline import tensor_space_for_mesh
from nitschefem.traceconst import NitscheConstants, constants_for

PARAMS = fl.MaterialParams()


def _setup(kind, degree, n, dirichlet=None, gamma=2.0):
    mesh = build_mesh(RectDomain(1.0, 1.0), n, n)
    space = tensor_space_for_mesh(mesh, degree, kind.components)
    if dirichlet is None:
        part = BoundaryPartition.all_dirichlet(kind.n_partition_sets)
    else:
        part = BoundaryPartition.from_dirichlet_sides(*dirichlet)
    consts = constants_for(kind, PARAMS, mesh, space, part, gamma)
    return mesh, space, part, consts


def test_dof_map_is_bijective():
    dm = DofMap(3, 10)
    seen = {dm.offset(c) + s for c in range(3) for s in range(10)}
    assert seen == set(range(dm.ndofs))


def test_zero_data_gives_zero_rhs():
    kind = fl.biharmonic()
    mesh, space, part, consts = _setup(kind, 2, 3)
    data = fl.BoundaryData.homogeneous(kind)
    system = assemble(kind, PARAMS, mesh, space, part, data, consts)
    assert np.allclose(system.rhs, 0.0)


def test_single_cell_poisson_structure():
    kind = fl.poisson()
    mesh, space, part, consts = _setup(kind, 1, 1)
    data = fl.BoundaryData.homogeneous(kind)
    system = assemble(kind, PARAMS, mesh, space, part, data, consts)
    assert system.matrix.shape == (4, 4)
    assert system.symmetry_error() < 1e-14


def test_penalty_free_stiffness_has_constant_kernel():
    kind = fl.poisson()
    mesh, space, part, _ = _setup(kind, 2, 3)
    zero_pen = NitscheConstants.explicit((1.0,), (0.0,))
    data = fl.BoundaryData.homogeneous(kind)
    system = assemble(kind, PARAMS, mesh, space, part, data, zero_pen,
                      EV.PENALTY)
    ones = np.ones(system.dofmap.ndofs)
    scale = np.abs(system.matrix.data).max()
    assert np.abs(system.matrix @ ones).max() < 1e-12 * scale


def test_solve_single_unknown():
    system = AssembledSystem(scipy.sparse.csr_matrix(np.array([[2.0]])),
                             np.array([4.0]), fl.poisson(), EV.NITSCHE,
                             None, DofMap(1, 1))
    assert solve(system) == pytest.approx([2.0])


def test_cg_fallback_matches_direct_solve():
    kind = fl.poisson()
    mesh, space, part, consts = _setup(kind, 2, 6)
    data = fl.manufactured(kind, PARAMS, "trig").boundary_data()
    system = assemble(kind, PARAMS, mesh, space, part, data, consts)
    direct = solve(system)
    iterative = solve(system, dense_limit=1)
    assert np.abs(direct - iterative).max() < 1e-8 * np.abs(direct).max()


def test_patch_on_rectangle_with_anisotropic_cells():
    kind = fl.poisson()
    mesh = build_mesh(RectDomain(2.0, 1.0), 4, 2)
    space = tensor_space_for_mesh(mesh, 2)
    part = BoundaryPartition.from_dirichlet_sides(("south", "east", "west"))
    consts = constants_for(kind, PARAMS, mesh, space, part, 2.0)
    exact = fl.manufactured(kind, PARAMS, "poly_2")
    coeffs = solve(assemble(kind, PARAMS, mesh, space, part,
                            exact.boundary_data(), consts))
    errs = error_norms(kind, PARAMS, coeffs, exact, mesh, space, part, consts)
    assert errs["l2"] < 1e-9


def test_nitsche_system_is_spd_at_gamma_two():
    kind = fl.poisson()
    mesh, space, part, consts = _setup(kind, 2, 8)
    data = fl.manufactured(kind, PARAMS, "trig").boundary_data()
    system = assemble(kind, PARAMS, mesh, space, part, data, consts)
    solve(system)  # factorization succeeds


def test_under_penalized_system_fails_to_factor():
    kind = fl.poisson()
    mesh, space, part, consts = _setup(kind, 2, 16)
    bad = NitscheConstants.explicit(consts.c_tr,
                                    tuple(0.01 * c for c in consts.c_tr))
    data = fl.manufactured(kind, PARAMS, "trig").boundary_data()
    system = assemble(kind, PARAMS, mesh, space, part, data, bad)
    with pytest.raises(NotPositiveDefiniteError):
        solve(system)


@pytest.mark.parametrize("kind,degree,choice", [
    (fl.poisson(1), 1, "poly_1"),
    (fl.poisson(2), 2, "poly_1"),
    (fl.biharmonic(1), 2, "poly_2"),
    (fl.biharmonic(1), 3, "poly_3"),
    (fl.kirchhoff_plate(), 2, "poly_2"),
    (fl.kirchhoff_plate(), 3, "poly_3"),
])
def test_patch_reproduction(kind, degree, choice):
    mesh, space, part, consts = _setup(kind, degree, 4)
    exact = fl.manufactured(kind, PARAMS, choice)
    coeffs = solve(assemble(kind, PARAMS, mesh, space, part,
                            exact.boundary_data(), consts))
    errs = error_norms(kind, PARAMS, coeffs, exact, mesh, space, part, consts)
    assert errs["l2"] < 1e-9


def test_zero_solution_l2_error_is_half():
    kind = fl.poisson()
    mesh, space, part, consts = _setup(kind, 2, 8)
    exact = fl.manufactured(kind, PARAMS, "trig")
    zero = np.zeros(space.dim)
    errs = error_norms(kind, PARAMS, zero, exact, mesh, space, part, consts)
    assert errs["l2"] == pytest.approx(0.5, rel=1e-10)


@pytest.mark.parametrize("kind,degree", [(fl.poisson(2), 2),
                                         (fl.biharmonic(1), 3),
                                         (fl.kirchhoff_plate(), 3)])
def test_galerkin_orthogonality_and_penalty_inconsistency(kind, degree):
    # mixed partitions so Neumann data paths participate as well
    dirichlet = [("south", "west")] * kind.n_partition_sets
    mesh, space, part, consts = _setup(kind, degree, 5, dirichlet=dirichlet)
    exact = fl.manufactured(kind, PARAMS, "trig")
    data = exact.boundary_data()
    nq = degree + 7
    bracket = flux_pairing_of_exact(kind, PARAMS, exact, mesh, space, part,
                                    n_points=nq)
    scale = np.linalg.norm(bracket)
    rng = np.random.default_rng(17)
    vs = rng.standard_normal((bracket.size, 50))
    vs /= np.linalg.norm(vs, axis=0)

    nit = assemble(kind, PARAMS, mesh, space, part, data, consts, EV.NITSCHE,
                   n_points=nq)
    resid_nit = bilinear_action_on_exact(kind, PARAMS, exact, mesh, space,
                                         part, consts, EV.NITSCHE,
                                         n_points=nq) - nit.rhs
    assert np.abs(vs.T @ resid_nit).max() < 1e-10 * scale

    pen = assemble(kind, PARAMS, mesh, space, part, data, consts, EV.PENALTY,
                   n_points=nq)
    resid_pen = bilinear_action_on_exact(kind, PARAMS, exact, mesh, space,
                                         part, consts, EV.PENALTY,
                                         n_points=nq) - pen.rhs
    assert np.abs(vs.T @ (resid_pen - bracket)).max() < 1e-8 * scale
    # the inconsistency itself is a genuinely nonzero boundary-flux pairing
    assert np.abs(vs.T @ resid_pen).max() > 1e-4 * scale


def test_energy_norm_axioms_on_discrete_fields():
    kind = fl.biharmonic()
    mesh, space, part, consts = _setup(kind, 3, 3)
    exact = fl.manufactured(kind, PARAMS, "trig")
    gram, _ = _energy_gram_and_load(kind, PARAMS, exact, mesh, space, part,
                                    consts, 6)
    rng = np.random.default_rng(2)

    def norm(vec):
        return np.sqrt(vec @ (gram @ vec))

    for _ in range(20):
        u = rng.standard_normal(space.n_scalar)
        v = rng.standard_normal(space.n_scalar)
        alpha = rng.standard_normal()
        assert norm(alpha * u) == pytest.approx(abs(alpha) * norm(u), rel=1e-10)
        assert norm(u + v) <= norm(u) + norm(v) + 1e-10 * norm(u)


def test_best_approximation_recovers_in_space_solution():
    kind = fl.poisson()
    mesh, space, part, consts = _setup(kind, 2, 4)
    exact = fl.manufactured(kind, PARAMS, "poly_2")
    best = best_approximation(kind, PARAMS, exact, mesh, space, part, consts)
    errs = error_norms(kind, PARAMS, best, exact, mesh, space, part, consts)
    assert errs["l2"] < 1e-9
    direct = space.interpolate(lambda x, y: exact.value(x, y)[0])
    assert np.abs(best - direct).max() < 1e-8


def test_best_approximation_minimality_and_quasi_optimality():
    kind = fl.poisson()
    mesh, space, part, consts = _setup(kind, 2, 8)
    exact = fl.manufactured(kind, PARAMS, "trig")
    coeffs = solve(assemble(kind, PARAMS, mesh, space, part,
                            exact.boundary_data(), consts))
    nit = error_norms(kind, PARAMS, coeffs, exact, mesh, space, part, consts)
    best = best_approximation(kind, PARAMS, exact, mesh, space, part, consts)
    opt = error_norms(kind, PARAMS, best, exact, mesh, space, part, consts)
    ratio = nit["energy"] / opt["energy"]
    assert opt["energy"] <= nit["energy"] * (1 + 1e-12)
    assert 1.0 - 1e-10 <= ratio <= 5.0


@pytest.mark.parametrize("kind,degree", [(fl.biharmonic(1), 3),
                                         (fl.kirchhoff_plate(), 3)])
def test_quasi_optimality_fourth_order(kind, degree):
    dirichlet = [("south", "west")] * kind.n_partition_sets
    mesh, space, part, consts = _setup(kind, degree, 6, dirichlet=dirichlet)
    exact = fl.manufactured(kind, PARAMS, "trig")
    coeffs = solve(assemble(kind, PARAMS, mesh, space, part,
                            exact.boundary_data(), consts))
    nit = error_norms(kind, PARAMS, coeffs, exact, mesh, space, part, consts)
    best = best_approximation(kind, PARAMS, exact, mesh, space, part, consts)
    opt = error_norms(kind, PARAMS, best, exact, mesh, space, part, consts)
    ratio = nit["energy"] / opt["energy"]
    assert 1.0 - 1e-10 <= ratio <= 5.0


def test_point_evaluation_of_solution():
    kind = fl.poisson(2)
    mesh, space, part, consts = _setup(kind, 2, 4)
    exact = fl.manufactured(kind, PARAMS, "poly_1")
    coeffs = solve(assemble(kind, PARAMS, mesh, space, part,
                            exact.boundary_data(), consts))
    for comp in (0, 1):
        got = evaluate_solution(space, coeffs, 0.3, 0.6, comp=comp)
        assert got == pytest.approx(exact.value(0.3, 0.6)[comp], rel=1e-9)


def test_study_structure_and_failed_rows():
    kind = fl.poisson()
    part = BoundaryPartition.all_dirichlet(1)
    spec = StudySpec(kind=kind, degree=2, meshes=[(4, 4), (8, 8), (16, 16)],
                     partition=part, variants=(EV.NITSCHE,), quasi_opt=False)
    report = run_convergence(spec)[EV.NITSCHE]
    assert len(report.rows) == 3
    rates = [r for r in report.rates("l2") if r is not None]
    assert len(rates) == 2

    bad = NitscheConstants.explicit((1.0,), (1e-4,))
    spec_bad = StudySpec(kind=kind, degree=2, meshes=[(4, 4), (8, 8), (16, 16)],
                         partition=part, variants=(EV.NITSCHE,),
                         constants_mode="explicit", explicit_constants=bad,
                         quasi_opt=False)
    report_bad = run_convergence(spec_bad)[EV.NITSCHE]
    assert report_bad.n_failed >= 1
    assert all(row.status in ("ok", "indefinite") for row in report_bad.rows)


def test_study_rejects_bad_mesh_sequences():
    kind = fl.poisson()
    part = BoundaryPartition.all_dirichlet(1)
    with pytest.raises(ValueError):
        run_convergence(StudySpec(kind=kind, degree=2, meshes=[(4, 4), (8, 8)],
                                  partition=part))
    with pytest.raises(ValueError):
        run_convergence(StudySpec(kind=kind, degree=2,
                                  meshes=[(8, 8), (4, 4), (16, 16)],
                                  partition=part))


def test_threaded_study_matches_serial():
    kind = fl.poisson()
    part = BoundaryPartition.all_dirichlet(1)
    spec = StudySpec(kind=kind, degree=2, meshes=[(4, 4), (8, 8), (16, 16)],
                     partition=part, quasi_opt=False)
    serial = run_convergence(spec, threads=1)[EV.NITSCHE]
    threaded = run_convergence(spec, threads=3)[EV.NITSCHE]
    for a, b in zip(serial.rows, threaded.rows):
        assert a.l2 == b.l2 and a.h1_semi == b.h1_semi and a.energy == b.energy


def test_assembly_validates_inputs():
    kind = fl.biharmonic()
    mesh = build_mesh(RectDomain(1.0, 1.0), 3, 3)
    space = tensor_space_for_mesh(mesh, 1)  # too low for a fourth-order form
    part = BoundaryPartition.all_dirichlet(2)
    consts = NitscheConstants.from_gamma((1.0, 1.0), (2.0, 2.0))
    data = fl.BoundaryData.homogeneous(kind)
    with pytest.raises(ValueError):
        assemble(kind, PARAMS, mesh, space, part, data, consts)
    space_ok = tensor_space_for_mesh(mesh, 2)
    with pytest.raises(ValueError):
        assemble(kind, PARAMS, mesh, space_ok,
                 BoundaryPartition.all_dirichlet(1), data, consts)
