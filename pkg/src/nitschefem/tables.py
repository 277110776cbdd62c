"""Batched basis/quadrature tables over cells, edges and corners.

These back both the global assembly and the trace-constant pencils.  Every
table stores partial-derivative values of the active scalar basis functions
at mapped quadrature points, keyed by the derivative multi-index (dx, dy).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quadrature import gauss_rule_1d, map_to_edge, map_to_interval
from .spline import basis_table_1d, deriv_combos, eval_basis_1d


@dataclass
class CellTables:
    weights: np.ndarray          # (cells, q)
    coords: np.ndarray           # (cells, q, 2)
    partials: dict               # (dx, dy) -> (cells, q, active)
    dofs: np.ndarray             # (cells, active) scalar dof indices


@dataclass
class EdgeTables:
    weights: np.ndarray          # (edges, q)
    coords: np.ndarray           # (edges, q, 2)
    partials: dict               # (dx, dy) -> (edges, q, active)
    dofs: np.ndarray             # (edges, active)
    normals: np.ndarray          # (edges, 2)
    tangents: np.ndarray         # (edges, 2)
    h: np.ndarray                # (edges,)

    def geom(self):
        """Normal/tangent components shaped to broadcast over (e, q, i)."""
        n0 = self.normals[:, 0][:, None, None]
        n1 = self.normals[:, 1][:, None, None]
        t0 = self.tangents[:, 0][:, None, None]
        t1 = self.tangents[:, 1][:, None, None]
        return n0, n1, t0, t1

    def geom_points(self):
        """Same, broadcastable over data arrays of shape (m, e, q)."""
        n0 = self.normals[:, 0][None, :, None]
        n1 = self.normals[:, 1][None, :, None]
        t0 = self.tangents[:, 0][None, :, None]
        t1 = self.tangents[:, 1][None, :, None]
        return n0, n1, t0, t1


def cell_tables(space, mesh, max_order, n_points) -> CellTables:
    rule = gauss_rule_1d(n_points)
    combos = deriv_combos(max_order)

    def direction(kv, n_cells, width):
        pts = np.empty((n_cells, n_points))
        wts = np.empty((n_cells, n_points))
        for c in range(n_cells):
            pts[c], wts[c] = map_to_interval(rule, c * width, (c + 1) * width)
        first, ders = basis_table_1d(kv, pts, range(n_cells), max_order)
        return pts, wts, first, ders

    px, py = space.degrees
    pts_x, wts_x, first_x, ders_x = direction(space.kv_x, mesh.nx, mesh.dx)
    pts_y, wts_y, first_y, ders_y = direction(space.kv_y, mesh.ny, mesh.dy)

    n_cells = mesh.nx * mesh.ny
    nq2 = n_points * n_points
    nact = (px + 1) * (py + 1)

    weights = np.einsum("xq,ys->xyqs", wts_x, wts_y).reshape(n_cells, nq2)
    coords = np.empty((mesh.nx, mesh.ny, n_points, n_points, 2))
    coords[..., 0] = pts_x[:, None, :, None]
    coords[..., 1] = pts_y[None, :, None, :]
    coords = coords.reshape(n_cells, nq2, 2)

    partials = {}
    for (ox, oy) in combos:
        arr = np.einsum("xqa,ysb->xyqsab", ders_x[:, :, ox, :], ders_y[:, :, oy, :])
        partials[(ox, oy)] = arr.reshape(n_cells, nq2, nact)

    ax = np.arange(px + 1)
    ay = np.arange(py + 1)
    gx = first_x[:, None] + ax[None, :]                      # (nx, px+1)
    gy = first_y[:, None] + ay[None, :]                      # (ny, py+1)
    dofs = (gx[:, None, :, None] * space.kv_y.n + gy[None, :, None, :])
    dofs = dofs.reshape(n_cells, nact)
    return CellTables(weights, coords, partials, dofs)


def edge_tables(space, mesh, edge_mesh, max_order, n_points) -> EdgeTables:
    rule = gauss_rule_1d(n_points)
    combos = deriv_combos(max_order)
    px, py = space.degrees
    nact = (px + 1) * (py + 1)
    n_edges = len(edge_mesh)

    weights = np.empty((n_edges, n_points))
    coords = np.empty((n_edges, n_points, 2))
    partials = {c: np.empty((n_edges, n_points, nact)) for c in combos}
    dofs = np.empty((n_edges, nact), dtype=int)
    normals = np.empty((n_edges, 2))
    tangents = np.empty((n_edges, 2))
    h = np.empty(n_edges)

    for e, edge in enumerate(edge_mesh):
        pts, wts = map_to_edge(rule, edge.p0, edge.p1)
        weights[e] = wts
        coords[e] = pts
        normals[e] = edge.normal
        tangents[e] = edge.tangent
        h[e] = edge.h_e
        for q in range(n_points):
            fx, dx = eval_basis_1d(space.kv_x, float(pts[q, 0]), max_order)
            fy, dy = eval_basis_1d(space.kv_y, float(pts[q, 1]), max_order)
            if q == 0:
                gx = fx + np.arange(px + 1)
                gy = fy + np.arange(py + 1)
                dofs[e] = (gx[:, None] * space.kv_y.n + gy[None, :]).ravel()
            for (ox, oy) in combos:
                partials[(ox, oy)][e, q] = np.outer(dx[ox], dy[oy]).ravel()
    return EdgeTables(weights, coords, partials, dofs, normals, tangents, h)


def field_partials(tables, coeffs):
    """Partial-derivative values of the discrete field at table points.

    coeffs has shape (components, n_scalar); returns arrays of shape
    (components, cells-or-edges, q) per derivative multi-index.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    gathered = coeffs[:, tables.dofs]                         # (m, C, I)
    return {key: np.einsum("cqi,mci->mcq", arr, gathered)
            for key, arr in tables.partials.items()}
