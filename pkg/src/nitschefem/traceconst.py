"""Trace-inequality constants from generalized matrix eigenproblems.

For each boundary operator of a problem the mesh-scaled boundary energy is
bounded by the interior energy over the discrete space.  The sharpest
constant is the largest finite eigenvalue of the pencil B x = lambda A x,
where A is the interior matrix and B the mesh-weighted boundary matrix.
The pencil is assembled over the whole (scalar) discrete space; kernel
directions of A produce spurious infinite/indeterminate pairs that the
eigensolver classifies away.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import formlib
from .errors import DegeneratePencilError, PencilSizeError
from .mesh import SIDE_NORMAL, SIDE_TANGENT, classify_corners, dirichlet_edge_mesh
from .tables import cell_tables, edge_tables

PENCIL_SIZE_LIMIT = 5000
INFINITE_CUTOFF = 1e-10


@dataclass(frozen=True)
class TracePencil:
    """Symmetric PSD pencil (B, A) encoding one trace inequality."""

    bmat: np.ndarray
    amat: np.ndarray
    label: str

    @property
    def n(self):
        return self.amat.shape[0]


@dataclass(frozen=True)
class NitscheConstants:
    """Per-condition-set trace constants and penalties.

    Constructed through from_gamma the invariant C_pen = gamma^2 C_tr with
    gamma > 1 guarantees C_pen > C_tr; explicit construction bypasses the
    guarantee (used to demonstrate under-penalized failures).
    """

    c_tr: tuple
    gamma: tuple
    c_pen: tuple
    lambda_max: tuple = None

    @classmethod
    def from_gamma(cls, c_tr, gamma, lambda_max=None):
        c_tr = tuple(float(c) for c in c_tr)
        gamma = tuple(float(g) for g in gamma)
        if len(gamma) != len(c_tr):
            raise ValueError("need one gamma per condition set")
        for g in gamma:
            if not g > 1.0:
                raise ValueError("gamma must lie in the open interval (1, inf)")
        c_pen = tuple(g * g * c for g, c in zip(gamma, c_tr))
        return cls(c_tr, gamma, c_pen,
                   None if lambda_max is None else tuple(lambda_max))

    @classmethod
    def explicit(cls, c_tr, c_pen):
        c_tr = tuple(float(c) for c in c_tr)
        c_pen = tuple(float(c) for c in c_pen)
        if len(c_pen) != len(c_tr):
            raise ValueError("c_tr and c_pen must have matching lengths")
        gamma = tuple(np.sqrt(p / t) if t > 0 else float("nan")
                      for p, t in zip(c_pen, c_tr))
        return cls(c_tr, gamma, c_pen)

    @property
    def n_sets(self):
        return len(self.c_tr)


def _interior_matrix(kind, params, mesh, space, n_points):
    ct = cell_tables(space, mesh, kind.interior_order, n_points)
    blocks = formlib.interior_matrix_blocks(kind, params, ct.weights, ct.partials)
    n = space.n_scalar
    amat = np.zeros((n, n))
    for c in range(blocks.shape[0]):
        idx = ct.dofs[c]
        amat[np.ix_(idx, idx)] += blocks[c]
    return amat


def _edge_operator_matrix(spec, kind, params, mesh, space, partition, n_points):
    em = dirichlet_edge_mesh(mesh, partition, spec.partition_set)
    et = edge_tables(space, mesh, em, kind.edge_order, n_points)
    n0, n1, t0, t1 = et.geom()
    op = spec.flux(et.partials, n0, n1, t0, t1, params)       # (e, q, i)
    scale = et.h ** spec.h_power
    local = np.einsum("e,eq,eqi,eqj->eij", scale, et.weights, op, op)
    n = space.n_scalar
    bmat = np.zeros((n, n))
    for e in range(local.shape[0]):
        idx = et.dofs[e]
        bmat[np.ix_(idx, idx)] += local[e]
    return bmat


def _corner_operator_matrix(spec, kind, params, mesh, space, partition):
    corners = classify_corners(mesh, partition)
    n = space.n_scalar
    bmat = np.zeros((n, n))
    for corner in corners.dirichlet_corners:
        be = space.eval_tensor(corner.point, max_deriv=2)
        geom = ((SIDE_NORMAL[corner.side_in], SIDE_TANGENT[corner.side_in]),
                (SIDE_NORMAL[corner.side_out], SIDE_TANGENT[corner.side_out]))
        jump = spec.flux(be.partials, geom, params)
        idx = be.indices
        bmat[np.ix_(idx, idx)] += corner.h_c ** spec.h_power * np.outer(jump, jump)
    return bmat


def assemble_trace_pencil(kind, params, mesh, space, partition,
                          component: int = 1, n_points=None) -> TracePencil:
    """Assemble the pencil for one boundary operator (1-based component).

    Vector components decouple in every supported interior form, so the
    pencil is assembled once over the scalar tensor space; its eigenvalues
    are shared by all components.
    """
    if space.n_scalar > PENCIL_SIZE_LIMIT:
        raise PencilSizeError(
            f"pencil dimension {space.n_scalar} exceeds the dense-solve budget"
            f" ({PENCIL_SIZE_LIMIT}); estimate constants on a coarser mesh and"
            " reuse them (they are dimensionless)")
    if not 1 <= component <= kind.n_constant_sets:
        raise ValueError(f"component must lie in [1, {kind.n_constant_sets}]")
    for p in space.degrees:
        if p < kind.min_degree:
            raise ValueError(
                f"{kind.name} needs spline degree >= {kind.min_degree}")
    if n_points is None:
        n_points = max(space.degrees) + 1
    label = formlib.constant_labels(kind)[component - 1]

    amat = _interior_matrix(kind, params, mesh, space, n_points)
    corner = formlib.corner_spec(kind)
    if corner is not None and component - 1 == corner.constant_index:
        bmat = _corner_operator_matrix(corner, kind, params, mesh, space, partition)
    else:
        spec = next(s for s in formlib.edge_sets(kind)
                    if s.constant_index == component - 1)
        bmat = _edge_operator_matrix(spec, kind, params, mesh, space,
                                     partition, n_points)
    pref = formlib.penalty_prefactor(kind, params)
    if pref != 1.0:
        bmat = bmat / pref
    # enforce exact symmetry before handing the pencil to the QZ solver
    amat = 0.5 * (amat + amat.T)
    bmat = 0.5 * (bmat + bmat.T)
    return TracePencil(bmat, amat, label)


def largest_finite_eigenvalue(pencil: TracePencil, cutoff: float = INFINITE_CUTOFF):
    """Largest finite eigenvalue of B x = lambda A x.

    The pencil is solved in homogeneous (alpha, beta) pair form; a pair is
    classified infinite (or indeterminate, for shared kernel directions of
    A and B) when |beta| <= cutoff * max matrix norm, and excluded.
    """
    alpha, beta = _pair_eigenvalues(pencil)
    scale = max(np.linalg.norm(pencil.amat), np.linalg.norm(pencil.bmat), 1e-300)
    finite = np.abs(beta) > cutoff * scale
    if not np.any(finite):
        raise DegeneratePencilError(
            f"pencil {pencil.label!r} has no finite eigenvalue")
    lam = np.real(alpha[finite] / beta[finite])
    return float(np.max(lam))


def _pair_eigenvalues(pencil):
    try:
        alpha, beta = scipy.linalg.eig(pencil.bmat, pencil.amat,
                                       homogeneous_eigvals=True)[0]
        return alpha, beta
    except (scipy.linalg.LinAlgError, ValueError):
        return _shifted_pair_eigenvalues(pencil)


def _shifted_pair_eigenvalues(pencil):
    """Fallback spectral transformation B x = mu (A + B + delta I) x.

    Approximate by construction (documented): the regularized pencil is
    definite, mu = lambda / (1 + lambda) recovers lambda = mu / (1 - mu).
    """
    a, b = pencil.amat, pencil.bmat
    delta = 1e-12 * max(np.linalg.norm(a + b), 1.0)
    shifted = a + b + delta * np.eye(a.shape[0])
    mu = scipy.linalg.eigh(b, shifted, eigvals_only=True)
    mu = np.clip(mu, 0.0, 1.0 - 1e-14)
    lam = mu / (1.0 - mu)
    # report as (alpha, beta) pairs so the caller's cutoff still applies
    return lam, np.ones_like(lam)


def rayleigh_sample(pencil: TracePencil, n_samples: int, rng,
                    kernel_basis=None):
    """Max Rayleigh quotient x'Bx / x'Ax over random vectors.

    A lower bound for the largest finite eigenvalue; kernel_basis columns
    (e.g. the constant function for the Poisson pencil) are projected out
    of every sample first.
    """
    n = pencil.n
    x = rng.standard_normal((n, n_samples))
    if kernel_basis is not None:
        kb = np.atleast_2d(np.asarray(kernel_basis, dtype=float))
        if kb.shape[0] != n:
            kb = kb.T
        q, _ = np.linalg.qr(kb)
        x -= q @ (q.T @ x)
    num = np.einsum("ij,ij->j", x, pencil.bmat @ x)
    den = np.einsum("ij,ij->j", x, pencil.amat @ x)
    keep = den > 1e-12 * np.einsum("ij,ij->j", x, x) * np.linalg.norm(pencil.amat)
    if not np.any(keep):
        raise DegeneratePencilError("all samples fell in the pencil kernel")
    return float(np.max(num[keep] / den[keep]))


def rayleigh_refine(pencil: TracePencil, n_samples: int, rng, iterations=30,
                    kernel_basis=None):
    """Sampled Rayleigh bound tightened by pencil power iterations.

    Uses least-squares solves with A (independent of the QZ route) to push
    the best random sample toward the top generalized eigenvector; still a
    lower bound on the largest finite eigenvalue.
    """
    best = rayleigh_sample(pencil, n_samples, rng, kernel_basis)
    x = rng.standard_normal(pencil.n)
    a_pinv = np.linalg.pinv(pencil.amat, rcond=1e-12, hermitian=True)
    for _ in range(iterations):
        x = a_pinv @ (pencil.bmat @ x)
        nrm = np.linalg.norm(x)
        if nrm == 0.0:
            break
        x /= nrm
        den = x @ (pencil.amat @ x)
        if den > 0:
            best = max(best, float(x @ (pencil.bmat @ x) / den))
    return best


def constants_for(kind, params, mesh, space, partition, gamma=2.0,
                  n_points=None, cutoff=INFINITE_CUTOFF) -> NitscheConstants:
    """Estimate C_tr per condition set and derive C_pen = gamma^2 C_tr."""
    n_sets = kind.n_constant_sets
    gammas = _expand_gamma(gamma, n_sets)
    factor = formlib.trace_constant_factor(kind)
    lams = []
    for comp in range(1, n_sets + 1):
        pencil = assemble_trace_pencil(kind, params, mesh, space, partition,
                                       comp, n_points)
        lams.append(largest_finite_eigenvalue(pencil, cutoff))
    c_tr = [factor * lam for lam in lams]
    return NitscheConstants.from_gamma(c_tr, gammas, lambda_max=lams)


def combined_constants(kind, params, mesh, space, partition, alphas,
                       gamma=2.0, n_points=None,
                       cutoff=INFINITE_CUTOFF) -> NitscheConstants:
    """Single-constant alternative with user-chosen slot weights.

    The per-slot boundary matrices are combined as sum_i B_i / alpha_i and
    one constant C is estimated for the combined inequality; the slot
    constants are then C_tr,i = alpha_i * C.  Only meaningful for problems
    with several condition slots; the weights must be supplied (there is no
    principled default).
    """
    n_sets = kind.n_constant_sets
    if n_sets < 2:
        raise ValueError("the combined route needs at least two condition sets")
    alphas = tuple(float(a) for a in alphas)
    if len(alphas) != n_sets:
        raise ValueError(f"need {n_sets} alpha weights")
    if any(a <= 0 for a in alphas):
        raise ValueError("alpha weights must be positive")
    gammas = _expand_gamma(gamma, n_sets)
    pencils = [assemble_trace_pencil(kind, params, mesh, space, partition,
                                     comp, n_points)
               for comp in range(1, n_sets + 1)]
    bmat = sum(p.bmat / a for p, a in zip(pencils, alphas))
    combined = TracePencil(bmat, pencils[0].amat, "combined")
    lam = largest_finite_eigenvalue(combined, cutoff)
    c_tr = [a * lam for a in alphas]
    return NitscheConstants.from_gamma(c_tr, gammas, lambda_max=(lam,) * n_sets)


def _expand_gamma(gamma, n_sets):
    if np.isscalar(gamma):
        return (float(gamma),) * n_sets
    gammas = tuple(float(g) for g in gamma)
    if len(gammas) != n_sets:
        raise ValueError(f"need {n_sets} gamma values")
    return gammas
