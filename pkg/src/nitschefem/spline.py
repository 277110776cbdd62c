"""Open-knot B-spline bases and tensor-product spaces.

1D bases are evaluated with the Cox-de Boor recursion and the standard
derivative algorithm, giving values and derivatives through order 3.
Tensor-product spaces combine two 1D bases and optionally carry several
identical vector components.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_DERIV = 3


@dataclass(frozen=True)
class KnotVector:
    """Clamped knot vector of degree p with interior multiplicity 1."""

    degree: int
    knots: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = self.degree
        knots = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", knots)
        if p < 1:
            raise ValueError("degree must be at least 1")
        if knots.size < 2 * (p + 1):
            raise ValueError("knot vector too short for the requested degree")
        if np.any(np.diff(knots) < 0):
            raise ValueError("knots must be nondecreasing")
        if not (np.all(knots[: p + 1] == knots[0])
                and np.all(knots[-p - 1:] == knots[-1])):
            raise ValueError("knot vector must be clamped (open)")

    @property
    def n(self):
        """Number of basis functions."""
        return self.knots.size - self.degree - 1

    @property
    def a(self):
        return float(self.knots[0])

    @property
    def b(self):
        return float(self.knots[-1])

    @property
    def n_spans(self):
        return self.n - self.degree

    @property
    def breakpoints(self):
        return self.knots[self.degree: self.n + 1]

    def span_of_cell(self, cell):
        """Knot-span index of the given nonempty span (cell) index."""
        return self.degree + cell

    def find_span(self, x):
        if x < self.a or x > self.b:
            raise ValueError(f"point {x} outside knot range [{self.a}, {self.b}]")
        if x >= self.b:
            return self.n - 1
        return int(np.searchsorted(self.knots, x, side="right")) - 1


def open_knot_vector(p: int, n_elem: int, a: float, b: float) -> KnotVector:
    """Uniform clamped knot vector on [a, b] with n_elem spans.

    The resulting basis has dimension n_elem + p.
    """
    if p < 1:
        raise ValueError("degree must be at least 1")
    if n_elem < 1:
        raise ValueError("need at least one element")
    if not a < b:
        raise ValueError("interval must satisfy a < b")
    knots = np.concatenate([np.full(p, a), np.linspace(a, b, n_elem + 1), np.full(p, b)])
    return KnotVector(p, knots)


def _ders_basis_funs(span, x, p, n_der, knots):
    """Values and derivatives of the p+1 active functions at x.

    Standard triangular-table algorithm; returns ders[k, j] = d^k N_{span-p+j}.
    Derivative orders above p are zero.
    """
    left = np.empty(p + 1)
    right = np.empty(p + 1)
    ndu = np.empty((p + 1, p + 1))
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = x - knots[span + 1 - j]
        right[j] = knots[span + j] - x
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((n_der + 1, p + 1))
    ders[0, :] = ndu[:, p]
    a = np.empty((2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, min(n_der, p) + 1):
            d = 0.0
            rk = r - k
            pk = p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1
    r = float(p)
    for k in range(1, min(n_der, p) + 1):
        ders[k, :] *= r
        r *= p - k
    return ders


def eval_basis_1d(kv: KnotVector, x: float, max_deriv: int = MAX_DERIV, span=None):
    """Evaluate the active 1D basis functions and derivatives at x.

    Returns (first_active, ders) where ders[k, j] holds the k-th derivative
    of basis function first_active + j.  Passing an explicit span selects
    the one-sided evaluation at a knot.
    """
    if not 0 <= max_deriv <= MAX_DERIV:
        raise ValueError(f"max_deriv must lie in [0, {MAX_DERIV}]")
    if span is None:
        span = kv.find_span(x)
    ders = _ders_basis_funs(span, x, kv.degree, max_deriv, kv.knots)
    return span - kv.degree, ders


def basis_table_1d(kv: KnotVector, points, cells, max_deriv: int):
    """Tabulate 1D basis derivatives at points grouped by cell.

    points has shape (n_cells, n_pts); returns ders of shape
    (n_cells, n_pts, max_deriv + 1, p + 1) plus first-active indices.
    """
    points = np.asarray(points, dtype=float)
    n_cells, n_pts = points.shape
    p = kv.degree
    ders = np.empty((n_cells, n_pts, max_deriv + 1, p + 1))
    first = np.empty(n_cells, dtype=int)
    for c, cell in enumerate(cells):
        span = kv.span_of_cell(cell)
        first[c] = span - p
        for q in range(n_pts):
            ders[c, q] = _ders_basis_funs(span, points[c, q], p, max_deriv, kv.knots)
    return first, ders


def greville_points(kv: KnotVector):
    """Greville abscissae, the standard collocation sites for spline interpolation."""
    p = kv.degree
    return np.array([kv.knots[i + 1: i + p + 1].mean() for i in range(kv.n)])


@dataclass(frozen=True)
class BasisEval:
    """Active tensor-product basis functions at one point.

    partials maps a derivative multi-index (dx, dy) to the per-function
    values; indices holds the scalar global index of each active function.
    """

    indices: np.ndarray
    partials: dict

    @property
    def n_active(self):
        return self.indices.size

    @property
    def values(self):
        return self.partials[(0, 0)]

    @property
    def grad(self):
        return np.stack([self.partials[(1, 0)], self.partials[(0, 1)]], axis=-1)

    @property
    def hessian(self):
        d20, d11, d02 = (self.partials[k] for k in ((2, 0), (1, 1), (0, 2)))
        h = np.empty(d20.shape + (2, 2))
        h[..., 0, 0] = d20
        h[..., 0, 1] = h[..., 1, 0] = d11
        h[..., 1, 1] = d02
        return h

    @property
    def third(self):
        t = np.empty(self.partials[(3, 0)].shape + (2, 2, 2))
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    dx = (i == 0) + (j == 0) + (k == 0)
                    t[..., i, j, k] = self.partials[(dx, 3 - dx)]
        return t


def deriv_combos(max_order: int):
    return tuple((dx, dy) for total in range(max_order + 1)
                 for dx in range(total, -1, -1) for dy in (total - dx,))


@dataclass(frozen=True)
class TensorSplineSpace:
    """Tensor-product B-spline space, optionally vector valued."""

    kv_x: KnotVector
    kv_y: KnotVector
    n_components: int = 1

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("need at least one component")

    @property
    def degrees(self):
        return (self.kv_x.degree, self.kv_y.degree)

    @property
    def n_scalar(self):
        return self.kv_x.n * self.kv_y.n

    @property
    def dim(self):
        return self.n_components * self.n_scalar

    @property
    def n_active(self):
        return (self.kv_x.degree + 1) * (self.kv_y.degree + 1)

    def scalar_index(self, ix, iy):
        return ix * self.kv_y.n + iy

    def eval_tensor(self, point, max_deriv: int = MAX_DERIV) -> BasisEval:
        """Active functions with all partial derivatives up to max_deriv."""
        x, y = point
        fx, dx = eval_basis_1d(self.kv_x, x, max_deriv)
        fy, dy = eval_basis_1d(self.kv_y, y, max_deriv)
        px, py = self.degrees
        ax = fx + np.arange(px + 1)
        ay = fy + np.arange(py + 1)
        indices = (ax[:, None] * self.kv_y.n + ay[None, :]).ravel()
        partials = {}
        for (ox, oy) in deriv_combos(max_deriv):
            partials[(ox, oy)] = np.outer(dx[ox], dy[oy]).ravel()
        return BasisEval(indices, partials)

    def interpolate(self, func):
        """Greville-point tensor interpolation of a callable func(x, y).

        Exact (to roundoff) for any function already in the space, e.g.
        polynomials of coordinate degree at most (p_x, p_y).
        """
        gx, gy = greville_points(self.kv_x), greville_points(self.kv_y)
        ax = _collocation_matrix(self.kv_x, gx)
        ay = _collocation_matrix(self.kv_y, gy)
        xx, yy = np.meshgrid(gx, gy, indexing="ij")
        vals = np.asarray(func(xx, yy), dtype=float)
        coef = np.linalg.solve(ax, vals)
        coef = np.linalg.solve(ay, coef.T).T
        return coef.ravel()

    def evaluate(self, coeffs, x, y, deriv=(0, 0)):
        """Evaluate the spline with the given scalar coefficients at points."""
        coeffs = np.asarray(coeffs, dtype=float)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.empty(np.broadcast(x, y).shape)
        xb, yb = np.broadcast_arrays(x, y)
        flat = out.reshape(-1)
        for i, (xi, yi) in enumerate(zip(xb.ravel(), yb.ravel())):
            be = self.eval_tensor((xi, yi), max_deriv=max(deriv))
            flat[i] = coeffs[be.indices] @ be.partials[deriv]
        return out if out.size > 1 else float(out.reshape(()))


def _collocation_matrix(kv, pts):
    mat = np.zeros((pts.size, kv.n))
    for i, x in enumerate(pts):
        first, ders = eval_basis_1d(kv, float(x), 0)
        mat[i, first: first + kv.degree + 1] = ders[0]
    return mat


def tensor_space_for_mesh(mesh, degree: int, n_components: int = 1) -> TensorSplineSpace:
    """Uniform tensor spline space whose spans coincide with the mesh cells."""
    kv_x = open_knot_vector(degree, mesh.nx, 0.0, mesh.domain.length_x)
    kv_y = open_knot_vector(degree, mesh.ny, 0.0, mesh.domain.length_y)
    return TensorSplineSpace(kv_x, kv_y, n_components)
