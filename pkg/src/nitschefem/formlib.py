"""Variational ingredients for the supported problems.

For each problem kind this module supplies the interior bilinear kernel,
the boundary trace/flux operator pairs per condition set, the Nitsche
consistency/symmetry/penalty edge kernels, right-hand-side kernels, the
plate corner machinery, and a catalog of manufactured solutions with
analytically consistent data.

Derivative data is passed around as a mapping (dx, dy) -> array of partial
derivative values; all operator helpers broadcast over leading axes so the
same formulas serve pointwise checks and batched assembly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import sympy as sp

from .mesh import SIDE_NORMAL, SIDE_TANGENT
from .spline import deriv_combos as deriv_orders

MAX_DATA_ORDER = 4

POISSON = "poisson"
BIHARMONIC = "biharmonic"
PLATE = "plate"


@dataclass(frozen=True)
class ProblemKind:
    """One of the supported PDEs with its vector dimension."""

    name: str
    components: int = 1

    def __post_init__(self):
        if self.name not in (POISSON, BIHARMONIC, PLATE):
            raise ValueError(f"unknown problem kind {self.name!r}")
        if self.components < 1:
            raise ValueError("components must be positive")
        if self.name == PLATE and self.components != 1:
            raise ValueError("the plate problem is scalar valued")

    @property
    def min_degree(self):
        return 1 if self.name == POISSON else 2

    @property
    def interior_order(self):
        return 1 if self.name == POISSON else 2

    @property
    def edge_order(self):
        return 1 if self.name == POISSON else 3

    @property
    def n_partition_sets(self):
        return 1 if self.name == POISSON else 2

    @property
    def has_corner_terms(self):
        return self.name == PLATE

    @property
    def n_constant_sets(self):
        return {POISSON: 1, BIHARMONIC: 2, PLATE: 3}[self.name]


def poisson(components: int = 1) -> ProblemKind:
    """Vector Poisson problem; components=1 recovers the scalar case."""
    return ProblemKind(POISSON, components)


def biharmonic(components: int = 1) -> ProblemKind:
    return ProblemKind(BIHARMONIC, components)


def kirchhoff_plate() -> ProblemKind:
    return ProblemKind(PLATE, 1)


@dataclass(frozen=True)
class MaterialParams:
    """Isotropic plate material; rigidity is derived, not stored."""

    youngs_modulus: float = 1.0
    poisson_ratio: float = 0.3
    thickness: float = 0.1

    def __post_init__(self):
        if self.youngs_modulus <= 0:
            raise ValueError("Young's modulus must be positive")
        if not -1.0 < self.poisson_ratio < 0.5:
            raise ValueError("Poisson ratio must lie in (-1, 0.5)")
        if self.thickness <= 0:
            raise ValueError("thickness must be positive")

    @property
    def rigidity(self):
        e, nu, t = self.youngs_modulus, self.poisson_ratio, self.thickness
        return t ** 3 * e / (12.0 * (1.0 - nu ** 2))


class EnforcementVariant(enum.Enum):
    """Weak Dirichlet enforcement: full Nitsche terms, or penalty only."""

    NITSCHE = "nitsche"
    PENALTY = "penalty"


# ---------------------------------------------------------------------------
# differential operators on derivative dictionaries

def op_value(d, n0, n1, t0, t1, params):
    return d[(0, 0)]


def op_normal_derivative(d, n0, n1, t0, t1, params):
    return n0 * d[(1, 0)] + n1 * d[(0, 1)]


def op_rotation_normal(d, n0, n1, t0, t1, params):
    """Normal rotation theta_n = -grad(w).n of the plate kinematics."""
    return -(n0 * d[(1, 0)] + n1 * d[(0, 1)])


def op_laplacian(d, n0, n1, t0, t1, params):
    return d[(2, 0)] + d[(0, 2)]


def op_grad_laplacian_normal(d, n0, n1, t0, t1, params):
    return n0 * (d[(3, 0)] + d[(1, 2)]) + n1 * (d[(2, 1)] + d[(0, 3)])


def op_neg_grad_laplacian_normal(d, n0, n1, t0, t1, params):
    return -op_grad_laplacian_normal(d, n0, n1, t0, t1, params)


def op_bending_moment_nn(d, n0, n1, t0, t1, params):
    """Normal-normal bending stress B_nn = n.B(w).n."""
    rig = params.rigidity
    nu = params.poisson_ratio
    hess_nn = n0 * n0 * d[(2, 0)] + 2.0 * n0 * n1 * d[(1, 1)] + n1 * n1 * d[(0, 2)]
    return -rig * (nu * (d[(2, 0)] + d[(0, 2)]) + (1.0 - nu) * hess_nn)


def op_twisting_moment_nt(d, n0, n1, t0, t1, params):
    """Normal-tangent twisting stress B_nt = n.B(w).t."""
    rig = params.rigidity
    nu = params.poisson_ratio
    hess_nt = n0 * t0 * d[(2, 0)] + (n0 * t1 + n1 * t0) * d[(1, 1)] + n1 * t1 * d[(0, 2)]
    return -rig * (1.0 - nu) * hess_nt


def op_ersatz_shear(d, n0, n1, t0, t1, params):
    """Ersatz traction T_z(w) = (div B(w)).n + d/dt B_nt(w)."""
    rig = params.rigidity
    nu = params.poisson_ratio
    grad_lap_n = n0 * (d[(3, 0)] + d[(1, 2)]) + n1 * (d[(2, 1)] + d[(0, 3)])
    # n_i t_j t_k w_,ijk with the third-derivative tensor fully symmetric
    ntt = (n0 * t0 * t0 * d[(3, 0)]
           + (2.0 * n0 * t0 * t1 + n1 * t0 * t0) * d[(2, 1)]
           + (n0 * t1 * t1 + 2.0 * n1 * t0 * t1) * d[(1, 2)]
           + n1 * t1 * t1 * d[(0, 3)])
    return -rig * (grad_lap_n + (1.0 - nu) * ntt)


def twisting_jump(d, corner_geom, params):
    """Jump of B_nt across a corner: outgoing-side value minus incoming."""
    (ni, ti), (no, to) = corner_geom
    inc = op_twisting_moment_nt(d, ni[0], ni[1], ti[0], ti[1], params)
    out = op_twisting_moment_nt(d, no[0], no[1], to[0], to[1], params)
    return out - inc


# ---------------------------------------------------------------------------
# condition-set descriptors

@dataclass(frozen=True)
class EdgeSetSpec:
    """One Dirichlet condition slot living on boundary edges.

    partition_set picks which side-label set controls edge membership;
    constant_index addresses the trace/penalty constants; h_power is the
    exponent k in the penalty scaling C_pen / h^k (and the matching h^k in
    the generalized trace weight).  natural is the strong-form datum
    prescribed on the Neumann side of this slot; neumann_sign and
    neumann_pair describe how it enters the load functional.  flux carries
    the signs of the Green's identity bracket, so natural and flux may
    differ by a sign.
    """

    partition_set: int
    constant_index: int
    h_power: int
    trace: callable
    flux: callable
    natural: callable
    neumann_sign: float
    neumann_pair: callable


@dataclass(frozen=True)
class CornerSetSpec:
    constant_index: int
    h_power: int
    trace: callable
    flux: callable


_POISSON_SETS = (
    EdgeSetSpec(1, 0, 1, op_value, op_normal_derivative,
                op_normal_derivative, +1.0, op_value),
)
_BIHARMONIC_SETS = (
    EdgeSetSpec(1, 0, 3, op_value, op_neg_grad_laplacian_normal,
                op_grad_laplacian_normal, -1.0, op_value),
    EdgeSetSpec(2, 1, 1, op_normal_derivative, op_laplacian,
                op_laplacian, +1.0, op_normal_derivative),
)
_PLATE_SETS = (
    EdgeSetSpec(1, 0, 3, op_value, op_ersatz_shear,
                op_ersatz_shear, +1.0, op_value),
    EdgeSetSpec(2, 2, 1, op_rotation_normal, op_bending_moment_nn,
                op_bending_moment_nn, +1.0, op_rotation_normal),
)
_PLATE_CORNER = CornerSetSpec(1, 2, op_value, twisting_jump)


def edge_sets(kind: ProblemKind):
    return {POISSON: _POISSON_SETS, BIHARMONIC: _BIHARMONIC_SETS,
            PLATE: _PLATE_SETS}[kind.name]


def corner_spec(kind: ProblemKind):
    return _PLATE_CORNER if kind.name == PLATE else None


def penalty_prefactor(kind: ProblemKind, params: MaterialParams):
    """Scaling in front of all penalty terms; t^3 E for the plate."""
    if kind.name == PLATE:
        return params.thickness ** 3 * params.youngs_modulus
    return 1.0


def constant_labels(kind: ProblemKind):
    """Names of the boundary operators behind each trace constant."""
    return {POISSON: ("flux",),
            BIHARMONIC: ("grad_lap", "lap"),
            PLATE: ("ersatz", "corner", "moment")}[kind.name]


def trace_constant_factor(kind: ProblemKind):
    """C_tr = factor * lambda_max of the associated pencil.

    The factor reflects how many condition slots share the interior energy:
    the two fourth-order slots are each bounded by a/2 and the three plate
    slots by a/3.
    """
    return {POISSON: 1.0, BIHARMONIC: 2.0, PLATE: 3.0}[kind.name]


# ---------------------------------------------------------------------------
# interior kernels

def interior_matrix_blocks(kind, params, weights, derivs):
    """Local interior matrices, batched over cells.

    weights has shape (C, Q) and each derivative array (C, Q, I); returns
    the per-cell matrices of shape (C, I, I).
    """
    if kind.name == POISSON:
        gx, gy = derivs[(1, 0)], derivs[(0, 1)]
        return (np.einsum("cq,cqi,cqj->cij", weights, gx, gx)
                + np.einsum("cq,cqi,cqj->cij", weights, gy, gy))
    lap = derivs[(2, 0)] + derivs[(0, 2)]
    if kind.name == BIHARMONIC:
        return np.einsum("cq,cqi,cqj->cij", weights, lap, lap)
    rig, nu = params.rigidity, params.poisson_ratio
    xx, xy, yy = derivs[(2, 0)], derivs[(1, 1)], derivs[(0, 2)]
    out = nu * np.einsum("cq,cqi,cqj->cij", weights, lap, lap)
    out += (1.0 - nu) * (np.einsum("cq,cqi,cqj->cij", weights, xx, xx)
                         + 2.0 * np.einsum("cq,cqi,cqj->cij", weights, xy, xy)
                         + np.einsum("cq,cqi,cqj->cij", weights, yy, yy))
    return rig * out


def interior_energy_density(kind, params, fields):
    """Pointwise a-energy density of a (possibly vector) field.

    fields maps (dx, dy) to arrays with a leading component axis.
    """
    if kind.name == POISSON:
        dens = fields[(1, 0)] ** 2 + fields[(0, 1)] ** 2
    else:
        lap = fields[(2, 0)] + fields[(0, 2)]
        if kind.name == BIHARMONIC:
            dens = lap ** 2
        else:
            rig, nu = params.rigidity, params.poisson_ratio
            dens = rig * (nu * lap ** 2
                          + (1.0 - nu) * (fields[(2, 0)] ** 2
                                          + 2.0 * fields[(1, 1)] ** 2
                                          + fields[(0, 2)] ** 2))
    return dens.sum(axis=0)


def interior_pair_density(kind, params, fields, basis):
    """Pointwise a-pairing of an exact field against basis derivatives.

    fields arrays have shape (m, C, Q); basis arrays (C, Q, I); the result
    has shape (m, C, Q, I).
    """
    if kind.name == POISSON:
        return (fields[(1, 0)][..., None] * basis[(1, 0)]
                + fields[(0, 1)][..., None] * basis[(0, 1)])
    lap_f = fields[(2, 0)] + fields[(0, 2)]
    lap_b = basis[(2, 0)] + basis[(0, 2)]
    if kind.name == BIHARMONIC:
        return lap_f[..., None] * lap_b
    rig, nu = params.rigidity, params.poisson_ratio
    out = nu * lap_f[..., None] * lap_b
    out += (1.0 - nu) * (fields[(2, 0)][..., None] * basis[(2, 0)]
                         + 2.0 * fields[(1, 1)][..., None] * basis[(1, 1)]
                         + fields[(0, 2)][..., None] * basis[(0, 2)])
    return rig * out


def interior_kernel(kind: ProblemKind, params, w, v):
    """Interior integrand for one (trial, test) pair at one point."""
    wf = {k: np.asarray(val)[None] for k, val in w.items()}
    pair = interior_pair_density(kind, params, wf,
                                 {k: np.asarray(val) for k, val in v.items()})
    return float(np.asarray(pair).reshape(-1)[0])


# ---------------------------------------------------------------------------
# pointwise boundary kernels (reference forms of the assembled terms)

def boundary_operator(kind: ProblemKind, params, w, n, t):
    """Per-condition-set boundary flux values B_alpha(w) at one point."""
    n0, n1 = n
    t0, t1 = t
    return tuple(s.flux(w, n0, n1, t0, t1, params) for s in edge_sets(kind))


def corner_jump(params: MaterialParams, w, corner_geom):
    """Twisting-moment jump at a corner from the incident side geometry."""
    return twisting_jump(w, corner_geom, params)


def nitsche_edge_kernels(kind, params, variant, w, v, n, t, h_e, constants,
                         active_sets=None):
    """(consistency, symmetry, penalty) integrand triple at one edge point.

    active_sets restricts to a subset of the edge condition slots (by
    constant index); by default every slot of the kind contributes.
    """
    n0, n1 = n
    t0, t1 = t
    pref = penalty_prefactor(kind, params)
    cons = sym = pen = 0.0
    for s in edge_sets(kind):
        if active_sets is not None and s.constant_index not in active_sets:
            continue
        tw = s.trace(w, n0, n1, t0, t1, params)
        tv = s.trace(v, n0, n1, t0, t1, params)
        pen += pref * constants.c_pen[s.constant_index] / h_e ** s.h_power * tw * tv
        if variant is EnforcementVariant.NITSCHE:
            cons -= s.flux(w, n0, n1, t0, t1, params) * tv
            sym -= s.flux(v, n0, n1, t0, t1, params) * tw
    return cons, sym, pen


def rhs_kernels(kind, params, variant, v, data, constants, *, point=None,
                n=None, t=None, h_e=None, corner=None, corner_value=None):
    """Reference load contributions for a single test-function evaluation.

    Returns a dict with entries body, neumann, symmetry, penalty and corner,
    each an array over components.  Edge entries need point/n/t/h_e; the
    corner entry needs a mesh corner plus the test-function value there.
    """
    m = kind.components
    out = {k: np.zeros(m) for k in ("body", "neumann", "symmetry", "penalty",
                                    "corner")}
    if point is not None:
        x = np.atleast_1d(np.asarray(point[0], dtype=float))
        y = np.atleast_1d(np.asarray(point[1], dtype=float))
        out["body"] = data.body(x, y)[:, 0]
        if n is not None:
            n0, n1 = n
            t0, t1 = t
            pref = penalty_prefactor(kind, params)
            for i, s in enumerate(edge_sets(kind)):
                tv = s.trace(v, n0, n1, t0, t1, params)
                g = data.dirichlet[i](x, y, n, t)[:, 0]
                h = data.neumann[i](x, y, n, t)[:, 0]
                out["neumann"] += s.neumann_sign * h * s.neumann_pair(
                    v, n0, n1, t0, t1, params)
                scale = pref * constants.c_pen[s.constant_index] / h_e ** s.h_power
                out["penalty"] += scale * g * tv
                if variant is EnforcementVariant.NITSCHE:
                    out["symmetry"] -= s.flux(v, n0, n1, t0, t1, params) * g
    if corner is not None and kind.has_corner_terms:
        jump = data.corner_neumann(corner)
        out["corner"] += jump * corner_value
    return out


# ---------------------------------------------------------------------------
# boundary data and manufactured solutions

@dataclass
class BoundaryData:
    """Prescribed data with analytic point evaluation.

    dirichlet and neumann hold one callable per condition slot with
    signature f(x, y, n, t) -> (components, n_points); body is f(x, y).
    The neumann slot carries the strong-form natural datum (e.g. the flux
    grad(u).n for Poisson, (grad lap u).n and lap u for the biharmonic,
    the ersatz traction and bending moment for the plate).
    corner_dirichlet gives the prescribed displacement at a corner point,
    corner_neumann the prescribed twisting-moment jump at a Neumann corner.
    """

    kind: ProblemKind
    body: callable
    dirichlet: tuple
    neumann: tuple
    corner_dirichlet: callable = None
    corner_neumann: callable = None

    @classmethod
    def homogeneous(cls, kind: ProblemKind):
        m = kind.components

        def zero_body(x, y):
            return np.zeros((m,) + np.shape(np.asarray(x)))

        def zero_edge(x, y, n, t):
            return np.zeros((m,) + np.shape(np.asarray(x)))

        n_slots = len(edge_sets(kind))
        return cls(kind, zero_body, (zero_edge,) * n_slots, (zero_edge,) * n_slots,
                   corner_dirichlet=(lambda c: 0.0),
                   corner_neumann=(lambda c: 0.0))


_CATALOG = ("trig", "poly_1", "poly_2", "poly_3")


class ManufacturedSolution:
    """Exact field with derivatives through order 4 and consistent data.

    The body force follows the strong form of the chosen problem
    (-lap u for Poisson, lap^2 u for the biharmonic, D lap^2 u for the
    plate) and every boundary datum is evaluated from the exact field.
    """

    def __init__(self, kind: ProblemKind, params: MaterialParams, exprs, name):
        self.kind = kind
        self.params = params
        self.name = name
        x, y = sp.symbols("x y")
        self._fns = []
        for expr in exprs:
            per_comp = {}
            for ox in range(MAX_DATA_ORDER + 1):
                for oy in range(MAX_DATA_ORDER + 1 - ox):
                    der = sp.diff(expr, x, ox, y, oy)
                    per_comp[(ox, oy)] = sp.lambdify((x, y), der, "numpy")
            self._fns.append(per_comp)

    @property
    def components(self):
        return self.kind.components

    def deriv(self, comp, ox, oy, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast(x, y).shape
        out = self._fns[comp][(ox, oy)](x, y)
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()

    def fields(self, orders, x, y):
        """Derivative dictionary over all components at the given points."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast(x, y).shape
        m = self.components
        out = {}
        for (ox, oy) in orders:
            arr = np.empty((m,) + shape)
            for c in range(m):
                arr[c] = self.deriv(c, ox, oy, x, y)
            out[(ox, oy)] = arr
        return out

    def value(self, x, y):
        return self.fields(((0, 0),), x, y)[(0, 0)]

    def body_force(self, x, y):
        orders = (((2, 0), (0, 2)) if self.kind.name == POISSON
                  else ((4, 0), (2, 2), (0, 4)))
        f = self.fields(orders, x, y)
        if self.kind.name == POISSON:
            return -(f[(2, 0)] + f[(0, 2)])
        bilap = f[(4, 0)] + 2.0 * f[(2, 2)] + f[(0, 4)]
        if self.kind.name == BIHARMONIC:
            return bilap
        return self.params.rigidity * bilap

    def _edge_callable(self, op, order):
        orders = deriv_orders(order)

        def fn(x, y, n, t):
            d = self.fields(orders, x, y)
            return op(d, n[0], n[1], t[0], t[1], self.params)

        return fn

    def corner_jump_value(self, corner):
        x, y = corner.point
        d = self.fields(deriv_orders(2), x, y)
        geom = ((SIDE_NORMAL[corner.side_in], SIDE_TANGENT[corner.side_in]),
                (SIDE_NORMAL[corner.side_out], SIDE_TANGENT[corner.side_out]))
        return float(twisting_jump(d, geom, self.params)[0])

    def boundary_data(self) -> BoundaryData:
        sets = edge_sets(self.kind)
        dirichlet = tuple(self._edge_callable(s.trace, _op_order(s.trace))
                          for s in sets)
        neumann = tuple(self._edge_callable(s.natural, _op_order(s.natural))
                        for s in sets)

        def body(x, y):
            return self.body_force(x, y)

        cd = None
        cn = None
        if self.kind.has_corner_terms:
            def cd(corner):
                return float(self.value(*corner.point)[0])

            cn = self.corner_jump_value
        return BoundaryData(self.kind, body, dirichlet, neumann,
                            corner_dirichlet=cd, corner_neumann=cn)


def _op_order(op):
    return {op_value: 0, op_normal_derivative: 1, op_rotation_normal: 1,
            op_laplacian: 2, op_bending_moment_nn: 2,
            op_twisting_moment_nt: 2, op_grad_laplacian_normal: 3,
            op_neg_grad_laplacian_normal: 3, op_ersatz_shear: 3}[op]


def manufactured(kind: ProblemKind, params: MaterialParams, choice: str,
                 a: int = 1, b: int = 1, amplitude: float = 1.0) -> ManufacturedSolution:
    """Build a catalog solution: 'trig' or 'poly_1' / 'poly_2' / 'poly_3'.

    Components of a vector field share the base shape with a per-component
    amplitude so that coefficient bookkeeping is exercised.
    """
    if choice not in _CATALOG:
        raise ValueError(f"unknown manufactured solution {choice!r};"
                         f" catalog: {_CATALOG}")
    x, y = sp.symbols("x y")
    if choice == "trig":
        base = sp.sin(a * sp.pi * x) * sp.sin(b * sp.pi * y)
    elif choice == "poly_1":
        base = 1 + 2 * x + 3 * y
    elif choice == "poly_2":
        base = 1 + x + y + x ** 2 + x * y + y ** 2
    else:
        base = 1 + x + x * y + x ** 2 + x ** 3 + y ** 3 + x ** 2 * y + x * y ** 2
    exprs = [amplitude * (1 + sp.Rational(c, 2)) * base
             for c in range(kind.components)]
    return ManufacturedSolution(kind, params, exprs, choice)
