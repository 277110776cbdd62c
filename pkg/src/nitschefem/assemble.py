"""Global assembly, linear solve, error norms and convergence studies.

Dirichlet data enters only through the Nitsche (or penalty) boundary
terms; there is no strong-constraint path anywhere.  The assembled matrix
is symmetric by construction and, for the full Nitsche variant with
C_pen = gamma^2 C_tr and gamma > 1, positive definite.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from . import formlib
from .errors import (DegeneratePencilError, NotPositiveDefiniteError,
                     PencilSizeError, SolveError)
from .formlib import EnforcementVariant
from .mesh import (RectDomain, SIDE_NORMAL, SIDE_TANGENT, build_mesh,
                   classify_corners, dirichlet_edge_mesh, neumann_edge_mesh)
from .spline import tensor_space_for_mesh
from .tables import cell_tables, edge_tables, field_partials
from .traceconst import constants_for

DENSE_SOLVE_LIMIT = 6000


@dataclass(frozen=True)
class DofMap:
    """Component-major layout: global dof = component * n_scalar + scalar."""

    n_components: int
    n_scalar: int

    @property
    def ndofs(self):
        return self.n_components * self.n_scalar

    def offset(self, comp):
        return comp * self.n_scalar


@dataclass
class AssembledSystem:
    matrix: scipy.sparse.csr_matrix
    rhs: np.ndarray
    kind: formlib.ProblemKind
    variant: EnforcementVariant
    constants: object
    dofmap: DofMap

    def symmetry_error(self):
        diff = self.matrix - self.matrix.T
        scale = np.abs(self.matrix.data).max() if self.matrix.nnz else 1.0
        return float(np.abs(diff.data).max() / scale) if diff.nnz else 0.0


def default_points(space):
    return max(space.degrees) + 1


class _Accumulator:
    def __init__(self, ndofs):
        self.ndofs = ndofs
        self.rows = []
        self.cols = []
        self.vals = []

    def add_blocks(self, dofs, blocks, offset=0):
        """Scatter batched local matrices; dofs (C, I), blocks (C, I, I)."""
        nact = dofs.shape[1]
        rows = np.repeat(dofs + offset, nact, axis=1)
        cols = np.tile(dofs + offset, (1, nact))
        self.rows.append(rows.ravel())
        self.cols.append(cols.ravel())
        self.vals.append(blocks.reshape(-1))

    def matrix(self):
        rows = np.concatenate(self.rows)
        cols = np.concatenate(self.cols)
        vals = np.concatenate(self.vals)
        coo = scipy.sparse.coo_matrix((vals, (rows, cols)),
                                      shape=(self.ndofs, self.ndofs))
        return coo.tocsr()


def _scatter_rhs(rhs, dofs, values, dofmap):
    """values (m, C, I) accumulated into the global load vector."""
    for comp in range(values.shape[0]):
        np.add.at(rhs, dofs + dofmap.offset(comp), values[comp])


def _edge_data_values(fn, edge_mesh, coords, m):
    """Evaluate an edge-data callable, grouping edges that share a side."""
    n_edges, n_q = coords.shape[:2]
    out = np.empty((m, n_edges, n_q))
    i = 0
    edges = list(edge_mesh)
    while i < n_edges:
        side = edges[i].side
        j = i
        while j < n_edges and edges[j].side == side:
            j += 1
        x = coords[i:j, :, 0].ravel()
        y = coords[i:j, :, 1].ravel()
        vals = fn(x, y, SIDE_NORMAL[side], SIDE_TANGENT[side])
        out[:, i:j, :] = np.asarray(vals, dtype=float).reshape(m, j - i, n_q)
        i = j
    return out


def _corner_geometry(corner):
    return ((SIDE_NORMAL[corner.side_in], SIDE_TANGENT[corner.side_in]),
            (SIDE_NORMAL[corner.side_out], SIDE_TANGENT[corner.side_out]))


def _validate_setup(kind, space, partition, constants):
    if space.n_components != kind.components:
        raise ValueError("space component count does not match the problem kind")
    if partition.n_sets != kind.n_partition_sets:
        raise ValueError(f"{kind.name} needs {kind.n_partition_sets}"
                         " boundary condition set(s)")
    for p in space.degrees:
        if p < kind.min_degree:
            raise ValueError(f"{kind.name} needs spline degree >= {kind.min_degree}")
    if constants.n_sets != kind.n_constant_sets:
        raise ValueError(f"{kind.name} carries {kind.n_constant_sets}"
                         " trace/penalty constants")


def assemble(kind, params, mesh, space, partition, data, constants,
             variant=EnforcementVariant.NITSCHE, n_points=None) -> AssembledSystem:
    """Assemble the weak-boundary system for the given enforcement variant."""
    _validate_setup(kind, space, partition, constants)
    if len(data.dirichlet) != len(formlib.edge_sets(kind)):
        raise ValueError("boundary data does not match the problem kind")
    m = kind.components
    dm = DofMap(m, space.n_scalar)
    nq = n_points or default_points(space)
    acc = _Accumulator(dm.ndofs)
    rhs = np.zeros(dm.ndofs)
    pref = formlib.penalty_prefactor(kind, params)
    nitsche = variant is EnforcementVariant.NITSCHE

    # interior stiffness and body load
    ct = cell_tables(space, mesh, kind.interior_order, nq)
    blocks = formlib.interior_matrix_blocks(kind, params, ct.weights, ct.partials)
    body = np.asarray(data.body(ct.coords[..., 0], ct.coords[..., 1]), dtype=float)
    load = np.einsum("cq,mcq,cqi->mci", ct.weights, body, ct.partials[(0, 0)])
    for comp in range(m):
        acc.add_blocks(ct.dofs, blocks, dm.offset(comp))
    _scatter_rhs(rhs, ct.dofs, load, dm)

    # Dirichlet edge terms per condition slot
    for slot, spec in enumerate(formlib.edge_sets(kind)):
        em = dirichlet_edge_mesh(mesh, partition, spec.partition_set)
        if len(em) == 0:
            continue
        et = edge_tables(space, mesh, em, kind.edge_order, nq)
        n0, n1, t0, t1 = et.geom()
        trace = spec.trace(et.partials, n0, n1, t0, t1, params)
        coef = pref * constants.c_pen[spec.constant_index] / et.h ** spec.h_power
        local = np.einsum("e,eq,eqi,eqj->eij", coef, et.weights, trace, trace)
        g = _edge_data_values(data.dirichlet[slot], em, et.coords, m)
        edge_rhs = np.einsum("e,eq,meq,eqi->mei", coef, et.weights, g, trace)
        if nitsche:
            flux = spec.flux(et.partials, n0, n1, t0, t1, params)
            cons = -np.einsum("eq,eqi,eqj->eij", et.weights, trace, flux)
            local = local + cons + cons.transpose(0, 2, 1)
            edge_rhs -= np.einsum("eq,meq,eqi->mei", et.weights, g, flux)
        for comp in range(m):
            acc.add_blocks(et.dofs, local, dm.offset(comp))
        _scatter_rhs(rhs, et.dofs, edge_rhs, dm)

    # Neumann natural terms
    for slot, spec in enumerate(formlib.edge_sets(kind)):
        em = neumann_edge_mesh(mesh, partition, spec.partition_set)
        if len(em) == 0:
            continue
        et = edge_tables(space, mesh, em, 1, nq)
        n0, n1, t0, t1 = et.geom()
        pair = spec.neumann_pair(et.partials, n0, n1, t0, t1, params)
        h_data = _edge_data_values(data.neumann[slot], em, et.coords, m)
        nat = spec.neumann_sign * np.einsum("eq,meq,eqi->mei", et.weights,
                                            h_data, pair)
        _scatter_rhs(rhs, et.dofs, nat, dm)

    # plate corner terms
    cspec = formlib.corner_spec(kind)
    if cspec is not None:
        corners = classify_corners(mesh, partition)
        for corner in corners.dirichlet_corners:
            be = space.eval_tensor(corner.point, max_deriv=2)
            vals = be.values
            coef = pref * constants.c_pen[cspec.constant_index] / corner.h_c ** cspec.h_power
            local = coef * np.outer(vals, vals)
            g = float(data.corner_dirichlet(corner))
            crhs = coef * g * vals
            if nitsche:
                jump = cspec.flux(be.partials, _corner_geometry(corner), params)
                cons = -np.outer(vals, jump)
                local = local + cons + cons.T
                crhs = crhs - g * jump
            acc.add_blocks(be.indices[None, :], local[None])
            np.add.at(rhs, be.indices, crhs)
        for corner in corners.neumann_corners:
            be = space.eval_tensor(corner.point, max_deriv=0)
            np.add.at(rhs, be.indices,
                      float(data.corner_neumann(corner)) * be.values)

    return AssembledSystem(acc.matrix(), rhs, kind, variant, constants, dm)


def solve(system: AssembledSystem, dense_limit=DENSE_SOLVE_LIMIT):
    """Direct SPD factorization, falling back to CG for large systems."""
    k = system.matrix
    f = system.rhs
    n = k.shape[0]
    if n <= dense_limit:
        try:
            factor = scipy.linalg.cho_factor(k.toarray(), check_finite=False)
        except scipy.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(
                "symmetric factorization failed; for a Nitsche system this"
                " signals a penalty below the coercivity threshold") from exc
        x = scipy.linalg.cho_solve(factor, f, check_finite=False)
    else:
        diag = k.diagonal()
        if np.any(diag <= 0):
            raise NotPositiveDefiniteError("system diagonal is not positive")
        precond = scipy.sparse.diags(1.0 / diag)
        x, info = scipy.sparse.linalg.cg(k, f, rtol=1e-12, atol=0.0, M=precond)
        if info != 0:
            raise SolveError(f"conjugate gradients did not converge (info={info})")
    resid = np.linalg.norm(k @ x - f)
    scale = scipy.sparse.linalg.norm(k) * np.linalg.norm(x) + np.linalg.norm(f)
    if resid > 1e-10 * max(scale, 1e-300):
        raise SolveError(f"solver residual {resid:.3e} exceeds contract")
    return x


def _eta_coef(spec_or_corner, constants, pref, h):
    ci = spec_or_corner.constant_index
    return h ** spec_or_corner.h_power / (pref * constants.c_tr[ci])


def _pen_coef(spec_or_corner, constants, pref, h):
    ci = spec_or_corner.constant_index
    return pref * constants.c_pen[ci] / h ** spec_or_corner.h_power


def _exact_edge_fields(exact, coords, order):
    return exact.fields(formlib.deriv_orders(order),
                        coords[..., 0], coords[..., 1])


def error_norms(kind, params, coeffs, exact, mesh, space, partition,
                constants, n_points=None):
    """L2, H1-seminorm and triple-bar energy norm of u - u_h.

    The energy norm is the Nitsche analysis norm: interior energy plus the
    trace-weighted boundary-operator terms plus twice the penalty-weighted
    trace terms.
    """
    m = kind.components
    coeffs2 = np.asarray(coeffs, dtype=float).reshape(m, space.n_scalar)
    nq = n_points or (max(space.degrees) + 3)
    pref = formlib.penalty_prefactor(kind, params)

    ct = cell_tables(space, mesh, kind.interior_order, nq)
    uh = field_partials(ct, coeffs2)
    ue = _exact_edge_fields(exact, ct.coords, kind.interior_order)
    err = {key: ue[key] - uh[key] for key in uh}
    w = ct.weights
    l2 = float(np.einsum("cq,cq->", w, (err[(0, 0)] ** 2).sum(axis=0)))
    h1 = float(np.einsum("cq,cq->", w,
                         (err[(1, 0)] ** 2 + err[(0, 1)] ** 2).sum(axis=0)))
    energy = float(np.einsum("cq,cq->", w,
                             formlib.interior_energy_density(kind, params, err)))

    for spec in formlib.edge_sets(kind):
        em = dirichlet_edge_mesh(mesh, partition, spec.partition_set)
        if len(em) == 0:
            continue
        et = edge_tables(space, mesh, em, kind.edge_order, nq)
        uh_e = field_partials(et, coeffs2)
        ue_e = _exact_edge_fields(exact, et.coords, kind.edge_order)
        err_e = {key: ue_e[key] - uh_e[key] for key in uh_e}
        n0, n1, t0, t1 = et.geom_points()
        flux = spec.flux(err_e, n0, n1, t0, t1, params)
        trace = spec.trace(err_e, n0, n1, t0, t1, params)
        eta = _eta_coef(spec, constants, pref, et.h)
        pen = _pen_coef(spec, constants, pref, et.h)
        energy += float(np.einsum("e,eq,eq->", eta, et.weights,
                                  (flux ** 2).sum(axis=0)))
        energy += 2.0 * float(np.einsum("e,eq,eq->", pen, et.weights,
                                        (trace ** 2).sum(axis=0)))

    cspec = formlib.corner_spec(kind)
    if cspec is not None:
        for corner in classify_corners(mesh, partition).dirichlet_corners:
            be = space.eval_tensor(corner.point, max_deriv=2)
            geom = _corner_geometry(corner)
            d_err = {}
            for key in be.partials:
                exact_val = exact.deriv(0, key[0], key[1], *corner.point)
                d_err[key] = float(exact_val) - float(coeffs2[0, be.indices]
                                                      @ be.partials[key])
            jump = cspec.flux(d_err, geom, params)
            energy += _eta_coef(cspec, constants, pref, corner.h_c) * jump ** 2
            energy += 2.0 * _pen_coef(cspec, constants, pref, corner.h_c) \
                * d_err[(0, 0)] ** 2

    return {"l2": np.sqrt(l2), "h1_semi": np.sqrt(h1), "energy": np.sqrt(energy)}


def _energy_gram_and_load(kind, params, exact, mesh, space, partition,
                          constants, nq):
    """Gram matrix of the energy inner product and its pairing with u."""
    m = kind.components
    n = space.n_scalar
    pref = formlib.penalty_prefactor(kind, params)
    gram = np.zeros((n, n))
    b = np.zeros((m, n))

    ct = cell_tables(space, mesh, kind.interior_order, nq)
    blocks = formlib.interior_matrix_blocks(kind, params, ct.weights, ct.partials)
    ue = _exact_edge_fields(exact, ct.coords, kind.interior_order)
    pair = formlib.interior_pair_density(kind, params, ue, ct.partials)
    b_cells = np.einsum("cq,mcqi->mci", ct.weights, pair)
    for c in range(blocks.shape[0]):
        idx = ct.dofs[c]
        gram[np.ix_(idx, idx)] += blocks[c]
        b[:, idx] += b_cells[:, c]

    for spec in formlib.edge_sets(kind):
        em = dirichlet_edge_mesh(mesh, partition, spec.partition_set)
        if len(em) == 0:
            continue
        et = edge_tables(space, mesh, em, kind.edge_order, nq)
        n0, n1, t0, t1 = et.geom()
        trace_b = spec.trace(et.partials, n0, n1, t0, t1, params)
        flux_b = spec.flux(et.partials, n0, n1, t0, t1, params)
        ue_e = _exact_edge_fields(exact, et.coords, kind.edge_order)
        p0, p1, q0, q1 = et.geom_points()
        trace_u = spec.trace(ue_e, p0, p1, q0, q1, params)
        flux_u = spec.flux(ue_e, p0, p1, q0, q1, params)
        eta = _eta_coef(spec, constants, pref, et.h)
        pen = _pen_coef(spec, constants, pref, et.h)
        local = (np.einsum("e,eq,eqi,eqj->eij", eta, et.weights, flux_b, flux_b)
                 + 2.0 * np.einsum("e,eq,eqi,eqj->eij", pen, et.weights,
                                   trace_b, trace_b))
        b_loc = (np.einsum("e,eq,meq,eqi->mei", eta, et.weights, flux_u, flux_b)
                 + 2.0 * np.einsum("e,eq,meq,eqi->mei", pen, et.weights,
                                   trace_u, trace_b))
        for e in range(local.shape[0]):
            idx = et.dofs[e]
            gram[np.ix_(idx, idx)] += local[e]
            b[:, idx] += b_loc[:, e]

    cspec = formlib.corner_spec(kind)
    if cspec is not None:
        for corner in classify_corners(mesh, partition).dirichlet_corners:
            be = space.eval_tensor(corner.point, max_deriv=2)
            geom = _corner_geometry(corner)
            jump_b = cspec.flux(be.partials, geom, params)
            d_u = {key: float(exact.deriv(0, key[0], key[1], *corner.point))
                   for key in be.partials}
            jump_u = cspec.flux(d_u, geom, params)
            u_val = d_u[(0, 0)]
            eta = _eta_coef(cspec, constants, pref, corner.h_c)
            pen = _pen_coef(cspec, constants, pref, corner.h_c)
            idx = be.indices
            gram[np.ix_(idx, idx)] += (eta * np.outer(jump_b, jump_b)
                                       + 2.0 * pen * np.outer(be.values, be.values))
            b[:, idx] += eta * jump_u * jump_b + 2.0 * pen * u_val * be.values
    return gram, b


def best_approximation(kind, params, exact, mesh, space, partition, constants,
                       n_points=None):
    """Energy-norm-best coefficients: argmin over the space of |||u - v|||."""
    nq = n_points or (max(space.degrees) + 3)
    gram, b = _energy_gram_and_load(kind, params, exact, mesh, space,
                                    partition, constants, nq)
    factor = scipy.linalg.cho_factor(gram, check_finite=False)
    coeffs = np.stack([scipy.linalg.cho_solve(factor, b[c], check_finite=False)
                       for c in range(b.shape[0])])
    return coeffs.ravel()


def bilinear_action_on_exact(kind, params, exact, mesh, space, partition,
                             constants, variant=EnforcementVariant.NITSCHE,
                             n_points=None):
    """Vector r with r_i = a_h(u, N_i) for the exact manufactured field u.

    Together with the assembled load this exposes the variational
    consistency residual a_h(u, v_h) - f_h(v_h) without discretizing u.
    """
    m = kind.components
    dm = DofMap(m, space.n_scalar)
    nq = n_points or (max(space.degrees) + 4)
    pref = formlib.penalty_prefactor(kind, params)
    nitsche = variant is EnforcementVariant.NITSCHE
    r = np.zeros(dm.ndofs)

    ct = cell_tables(space, mesh, kind.interior_order, nq)
    ue = _exact_edge_fields(exact, ct.coords, kind.interior_order)
    pair = formlib.interior_pair_density(kind, params, ue, ct.partials)
    _scatter_rhs(r, ct.dofs, np.einsum("cq,mcqi->mci", ct.weights, pair), dm)

    for spec in formlib.edge_sets(kind):
        em = dirichlet_edge_mesh(mesh, partition, spec.partition_set)
        if len(em) == 0:
            continue
        et = edge_tables(space, mesh, em, kind.edge_order, nq)
        n0, n1, t0, t1 = et.geom()
        trace_b = spec.trace(et.partials, n0, n1, t0, t1, params)
        flux_b = spec.flux(et.partials, n0, n1, t0, t1, params)
        ue_e = _exact_edge_fields(exact, et.coords, kind.edge_order)
        p0, p1, q0, q1 = et.geom_points()
        trace_u = spec.trace(ue_e, p0, p1, q0, q1, params)
        flux_u = spec.flux(ue_e, p0, p1, q0, q1, params)
        pen = _pen_coef(spec, constants, pref, et.h)
        contrib = np.einsum("e,eq,meq,eqi->mei", pen, et.weights, trace_u, trace_b)
        if nitsche:
            contrib -= np.einsum("eq,meq,eqi->mei", et.weights, flux_u, trace_b)
            contrib -= np.einsum("eq,meq,eqi->mei", et.weights, trace_u, flux_b)
        _scatter_rhs(r, et.dofs, contrib, dm)

    cspec = formlib.corner_spec(kind)
    if cspec is not None:
        for corner in classify_corners(mesh, partition).dirichlet_corners:
            be = space.eval_tensor(corner.point, max_deriv=2)
            geom = _corner_geometry(corner)
            jump_b = cspec.flux(be.partials, geom, params)
            d_u = {key: float(exact.deriv(0, key[0], key[1], *corner.point))
                   for key in be.partials}
            jump_u = cspec.flux(d_u, geom, params)
            u_val = d_u[(0, 0)]
            pen = _pen_coef(cspec, constants, pref, corner.h_c)
            contrib = pen * u_val * be.values
            if nitsche:
                contrib = contrib - jump_u * be.values - u_val * jump_b
            np.add.at(r, be.indices, contrib)
    return r


def flux_pairing_of_exact(kind, params, exact, mesh, space, partition,
                          n_points=None):
    """Vector b with b_i = <B u, T N_i>, the Dirichlet boundary bracket.

    This is the exact-solution residual left behind by the penalty-only
    variant; for the Poisson problem it is the boundary flux integral of
    grad(u).n against the test function.
    """
    m = kind.components
    dm = DofMap(m, space.n_scalar)
    nq = n_points or (max(space.degrees) + 4)
    b = np.zeros(dm.ndofs)
    for spec in formlib.edge_sets(kind):
        em = dirichlet_edge_mesh(mesh, partition, spec.partition_set)
        if len(em) == 0:
            continue
        et = edge_tables(space, mesh, em, kind.edge_order, nq)
        n0, n1, t0, t1 = et.geom()
        trace_b = spec.trace(et.partials, n0, n1, t0, t1, params)
        ue_e = _exact_edge_fields(exact, et.coords, kind.edge_order)
        p0, p1, q0, q1 = et.geom_points()
        flux_u = spec.flux(ue_e, p0, p1, q0, q1, params)
        _scatter_rhs(b, et.dofs,
                     np.einsum("eq,meq,eqi->mei", et.weights, flux_u, trace_b),
                     dm)
    cspec = formlib.corner_spec(kind)
    if cspec is not None:
        for corner in classify_corners(mesh, partition).dirichlet_corners:
            be = space.eval_tensor(corner.point, max_deriv=0)
            d_u = {key: float(exact.deriv(0, key[0], key[1], *corner.point))
                   for key in formlib.deriv_orders(2)}
            jump_u = cspec.flux(d_u, _corner_geometry(corner), params)
            np.add.at(b, be.indices, jump_u * be.values)
    return b


def greens_identity_parts(kind, params, exact, mesh, space, partition,
                          n_points=None):
    """Vectors witnessing the generalized Green's identity against V_h.

    Returns a dict with per-dof vectors: 'a' pairs the exact field through
    the interior bilinear form, 'interior' through the strong-form volume
    operator (the body force of the manufactured field), 'neumann' through
    the natural boundary terms, and 'dirichlet' through the boundary
    bracket <B u, T v>.  The identity states a = interior + neumann +
    dirichlet up to quadrature error.
    """
    m = kind.components
    dm = DofMap(m, space.n_scalar)
    nq = n_points or (max(space.degrees) + 4)

    a_vec = np.zeros(dm.ndofs)
    ct = cell_tables(space, mesh, kind.interior_order, nq)
    ue = _exact_edge_fields(exact, ct.coords, kind.interior_order)
    pair = formlib.interior_pair_density(kind, params, ue, ct.partials)
    _scatter_rhs(a_vec, ct.dofs, np.einsum("cq,mcqi->mci", ct.weights, pair), dm)

    interior = np.zeros(dm.ndofs)
    body = exact.body_force(ct.coords[..., 0], ct.coords[..., 1])
    _scatter_rhs(interior, ct.dofs,
                 np.einsum("cq,mcq,cqi->mci", ct.weights, body,
                           ct.partials[(0, 0)]), dm)

    neumann = np.zeros(dm.ndofs)
    for spec in formlib.edge_sets(kind):
        em = neumann_edge_mesh(mesh, partition, spec.partition_set)
        if len(em) == 0:
            continue
        et = edge_tables(space, mesh, em, kind.edge_order, nq)
        n0, n1, t0, t1 = et.geom()
        pair_b = spec.neumann_pair(et.partials, n0, n1, t0, t1, params)
        ue_e = _exact_edge_fields(exact, et.coords, kind.edge_order)
        p0, p1, q0, q1 = et.geom_points()
        nat_u = spec.natural(ue_e, p0, p1, q0, q1, params)
        _scatter_rhs(neumann, et.dofs,
                     spec.neumann_sign * np.einsum("eq,meq,eqi->mei",
                                                   et.weights, nat_u, pair_b),
                     dm)
    cspec = formlib.corner_spec(kind)
    if cspec is not None:
        for corner in classify_corners(mesh, partition).neumann_corners:
            be = space.eval_tensor(corner.point, max_deriv=0)
            np.add.at(neumann, be.indices,
                      exact.corner_jump_value(corner) * be.values)

    dirichlet = flux_pairing_of_exact(kind, params, exact, mesh, space,
                                      partition, nq)
    return {"a": a_vec, "interior": interior, "neumann": neumann,
            "dirichlet": dirichlet}


def evaluate_solution(space, coeffs, x, y, comp=0, deriv=(0, 0)):
    """Point values of one component of a solved coefficient vector."""
    coeffs2 = np.asarray(coeffs, dtype=float).reshape(space.n_components,
                                                      space.n_scalar)
    return space.evaluate(coeffs2[comp], x, y, deriv)


# ---------------------------------------------------------------------------
# convergence studies

CONSTANTS_MODES = ("estimate-coarsest", "estimate-each", "explicit")


@dataclass
class StudySpec:
    kind: formlib.ProblemKind
    degree: int
    meshes: list
    partition: object
    solution: str = "trig"
    solution_args: dict = field(default_factory=dict)
    params: formlib.MaterialParams = field(default_factory=formlib.MaterialParams)
    domain: RectDomain = field(default_factory=lambda: RectDomain(1.0, 1.0))
    gamma: object = 2.0
    variants: tuple = (EnforcementVariant.NITSCHE,)
    constants_mode: str = "estimate-coarsest"
    explicit_constants: object = None
    n_points: int = None
    quasi_opt: bool = True


@dataclass
class RowResult:
    nx: int
    ny: int
    h: float
    dofs: int
    c_tr: tuple
    c_pen: tuple
    l2: float = None
    h1_semi: float = None
    energy: float = None
    quasi_ratio: float = None
    status: str = "ok"
    l2_rate: float = None
    h1_rate: float = None
    energy_rate: float = None


@dataclass
class ConvergenceReport:
    kind_name: str
    components: int
    degree: int
    variant: EnforcementVariant
    constants_mode: str
    rows: list

    def rates(self, norm):
        return [getattr(row, f"{norm}_rate") for row in self.rows]

    def final_rate(self, norm):
        vals = [r for r in self.rates(norm) if r is not None]
        return vals[-1] if vals else None

    @property
    def n_failed(self):
        return sum(1 for row in self.rows if row.status != "ok")


def _fill_rates(rows):
    for prev, row in zip(rows, rows[1:]):
        if prev.status != "ok" or row.status != "ok":
            continue
        ratio = np.log(prev.h / row.h)
        for norm in ("l2", "h1", "energy"):
            attr = "h1_semi" if norm == "h1" else norm
            e0, e1 = getattr(prev, attr), getattr(row, attr)
            if e0 and e1 and e0 > 0 and e1 > 0:
                setattr(row, f"{norm}_rate", float(np.log(e0 / e1) / ratio))


def run_convergence(study: StudySpec, threads: int = 1):
    """Run the study per variant; returns {variant: ConvergenceReport}.

    Rows that fail to factor (e.g. deliberately under-penalized constants)
    are recorded with their failure status and do not abort the study.
    """
    if len(study.meshes) < 3:
        raise ValueError("a convergence study needs at least three meshes")
    meshes = [build_mesh(study.domain, nx, ny) for nx, ny in study.meshes]
    hs = [msh.h for msh in meshes]
    if any(h1 >= h0 for h0, h1 in zip(hs, hs[1:])):
        raise ValueError("mesh sequence must have strictly decreasing h")
    if study.constants_mode not in CONSTANTS_MODES:
        raise ValueError(f"unknown constants mode {study.constants_mode!r}")

    kind = study.kind
    exact = formlib.manufactured(kind, study.params, study.solution,
                                 **study.solution_args)
    data = exact.boundary_data()

    shared_constants = None
    if study.constants_mode == "estimate-coarsest":
        space0 = tensor_space_for_mesh(meshes[0], study.degree, kind.components)
        shared_constants = constants_for(kind, study.params, meshes[0], space0,
                                         study.partition, study.gamma)
    elif study.constants_mode == "explicit":
        if study.explicit_constants is None:
            raise ValueError("explicit constants mode needs constant values")
        shared_constants = study.explicit_constants

    def run_row(mesh):
        space = tensor_space_for_mesh(mesh, study.degree, kind.components)
        constants = shared_constants
        row_failure = None
        if constants is None:
            try:
                constants = constants_for(kind, study.params, mesh, space,
                                          study.partition, study.gamma)
            except (PencilSizeError, DegeneratePencilError) as exc:
                row_failure = f"constants-failed: {exc}"
        none_consts = (None,) * kind.n_constant_sets
        base = dict(nx=mesh.nx, ny=mesh.ny, h=mesh.h,
                    dofs=space.n_scalar * kind.components,
                    c_tr=constants.c_tr if constants else none_consts,
                    c_pen=constants.c_pen if constants else none_consts)
        if row_failure is not None:
            return {variant: RowResult(**base, status=row_failure)
                    for variant in study.variants}
        best_errs = None
        if study.quasi_opt:
            best = best_approximation(kind, study.params, exact, mesh, space,
                                      study.partition, constants,
                                      study.n_points)
            best_errs = error_norms(kind, study.params, best, exact, mesh,
                                    space, study.partition, constants,
                                    study.n_points)
        per_variant = {}
        for variant in study.variants:
            row = RowResult(**base)
            try:
                system = assemble(kind, study.params, mesh, space,
                                  study.partition, data, constants, variant,
                                  study.n_points)
                coeffs = solve(system)
            except NotPositiveDefiniteError:
                row.status = "indefinite"
            except SolveError as exc:
                row.status = f"solve-failed: {exc}"
            else:
                errs = error_norms(kind, study.params, coeffs, exact, mesh,
                                   space, study.partition, constants,
                                   study.n_points)
                row.l2 = errs["l2"]
                row.h1_semi = errs["h1_semi"]
                row.energy = errs["energy"]
                if best_errs is not None and best_errs["energy"] > 0:
                    row.quasi_ratio = errs["energy"] / best_errs["energy"]
            per_variant[variant] = row
        return per_variant

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            row_maps = list(pool.map(run_row, meshes))
    else:
        row_maps = [run_row(mesh) for mesh in meshes]

    reports = {}
    for variant in study.variants:
        rows = [rm[variant] for rm in row_maps]
        _fill_rates(rows)
        reports[variant] = ConvergenceReport(kind.name, kind.components,
                                             study.degree, variant,
                                             study.constants_mode, rows)
    return reports
