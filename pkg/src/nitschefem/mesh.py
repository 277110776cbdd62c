"""Cartesian meshes on axis-aligned rectangles.

Provides the rectangle domain, the uniform cell mesh, Dirichlet/Neumann
side assignments per condition set, boundary edge meshes, and the corner
set used by the plate formulation.  Geometry is restricted to axis-aligned
rectangles so normals and tangents are exact and the domain is convex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SIDES = ("south", "east", "north", "west")

# Outward normal and positively-oriented (counterclockwise) tangent per side.
SIDE_NORMAL = {
    "south": (0.0, -1.0),
    "east": (1.0, 0.0),
    "north": (0.0, 1.0),
    "west": (-1.0, 0.0),
}
SIDE_TANGENT = {
    "south": (1.0, 0.0),
    "east": (0.0, 1.0),
    "north": (-1.0, 0.0),
    "west": (0.0, -1.0),
}

DIRICHLET = "dirichlet"
NEUMANN = "neumann"


@dataclass(frozen=True)
class RectDomain:
    """Axis-aligned rectangle [0, length_x] x [0, length_y]."""

    length_x: float
    length_y: float

    def __post_init__(self):
        if not (self.length_x > 0 and self.length_y > 0):
            raise ValueError("domain side lengths must be positive")

    @property
    def area(self):
        return self.length_x * self.length_y


@dataclass(frozen=True)
class CartesianMesh:
    """Uniform nx-by-ny cell tiling of a rectangle.

    Cells are indexed x-major: cell (cx, cy) has id cx * ny + cy and covers
    [cx*dx, (cx+1)*dx] x [cy*dy, (cy+1)*dy].  The element size h_k is the
    cell diagonal (diam of the cell), identical for every cell, and the
    global mesh size h equals h_k.
    """

    domain: RectDomain
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("nx and ny must be positive integers")

    @property
    def dx(self):
        return self.domain.length_x / self.nx

    @property
    def dy(self):
        return self.domain.length_y / self.ny

    @property
    def h_k(self):
        return math.hypot(self.dx, self.dy)

    @property
    def h(self):
        return self.h_k

    @property
    def n_cells(self):
        return self.nx * self.ny

    def cell_id(self, cx, cy):
        return cx * self.ny + cy

    def cell_bounds(self, cx, cy):
        return (cx * self.dx, cy * self.dy, (cx + 1) * self.dx, (cy + 1) * self.dy)

    def cell_areas(self):
        return np.full(self.n_cells, self.dx * self.dy)


def build_mesh(domain: RectDomain, nx: int, ny: int) -> CartesianMesh:
    """Build a uniform Cartesian mesh with nx*ny cells over the rectangle."""
    return CartesianMesh(domain, nx, ny)


class BoundaryPartition:
    """Dirichlet/Neumann label per side and per condition set.

    Second-order problems use a single condition set; fourth-order problems
    (biharmonic, plate) carry two independent sets.  Each set must mark at
    least one side Dirichlet so the associated trace constraint is active.
    """

    def __init__(self, *sets):
        if len(sets) not in (1, 2):
            raise ValueError("expected one or two condition sets")
        checked = []
        for labels in sets:
            labels = dict(labels)
            if set(labels) != set(SIDES):
                raise ValueError(f"each set must label exactly the sides {SIDES}")
            for side, lab in labels.items():
                if lab not in (DIRICHLET, NEUMANN):
                    raise ValueError(f"unknown label {lab!r} on side {side!r}")
            if not any(lab == DIRICHLET for lab in labels.values()):
                raise ValueError("each condition set needs at least one Dirichlet side")
            checked.append(labels)
        self.sets = tuple(checked)

    @property
    def n_sets(self):
        return len(self.sets)

    def dirichlet_sides(self, alpha):
        return tuple(s for s in SIDES if self.sets[alpha - 1][s] == DIRICHLET)

    def neumann_sides(self, alpha):
        return tuple(s for s in SIDES if self.sets[alpha - 1][s] == NEUMANN)

    @classmethod
    def from_dirichlet_sides(cls, *dirichlet_per_set):
        """Build a partition from per-set lists of Dirichlet sides."""
        sets = []
        for dsides in dirichlet_per_set:
            dsides = tuple(dsides)
            for s in dsides:
                if s not in SIDES:
                    raise ValueError(f"unknown side {s!r}")
            sets.append({s: DIRICHLET if s in dsides else NEUMANN for s in SIDES})
        return cls(*sets)

    @classmethod
    def all_dirichlet(cls, n_sets=1):
        return cls.from_dirichlet_sides(*(SIDES for _ in range(n_sets)))


@dataclass(frozen=True)
class Edge:
    """One boundary edge: a cell face lying on the domain boundary.

    p0 -> p1 runs along the counterclockwise tangent; the edge size h_e is
    the diameter h_k of the owning cell, not the edge length.
    """

    cell: int
    side: str
    p0: tuple
    p1: tuple
    normal: tuple
    tangent: tuple
    h_e: float


@dataclass(frozen=True)
class EdgeMesh:
    edges: tuple

    def __len__(self):
        return len(self.edges)

    def __iter__(self):
        return iter(self.edges)


def _side_edges(mesh: CartesianMesh, side: str):
    dx, dy = mesh.dx, mesh.dy
    lx, ly = mesh.domain.length_x, mesh.domain.length_y
    n = SIDE_NORMAL[side]
    t = SIDE_TANGENT[side]
    h_e = mesh.h_k
    edges = []
    if side == "south":
        for cx in range(mesh.nx):
            edges.append(Edge(mesh.cell_id(cx, 0), side, (cx * dx, 0.0),
                              ((cx + 1) * dx, 0.0), n, t, h_e))
    elif side == "east":
        for cy in range(mesh.ny):
            edges.append(Edge(mesh.cell_id(mesh.nx - 1, cy), side, (lx, cy * dy),
                              (lx, (cy + 1) * dy), n, t, h_e))
    elif side == "north":
        for cx in reversed(range(mesh.nx)):
            edges.append(Edge(mesh.cell_id(cx, mesh.ny - 1), side,
                              ((cx + 1) * dx, ly), (cx * dx, ly), n, t, h_e))
    elif side == "west":
        for cy in reversed(range(mesh.ny)):
            edges.append(Edge(mesh.cell_id(0, cy), side, (0.0, (cy + 1) * dy),
                              (0.0, cy * dy), n, t, h_e))
    return edges


def boundary_edge_mesh(mesh: CartesianMesh, sides=SIDES) -> EdgeMesh:
    """Collect the boundary edges of the given sides in traversal order."""
    edges = []
    for side in SIDES:
        if side in sides:
            edges.extend(_side_edges(mesh, side))
    return EdgeMesh(tuple(edges))


def dirichlet_edge_mesh(mesh: CartesianMesh, partition: BoundaryPartition,
                        alpha: int = 1) -> EdgeMesh:
    """Edges lying on the sides labeled Dirichlet for condition set alpha."""
    if not (1 <= alpha <= partition.n_sets):
        raise ValueError(f"condition set {alpha} not present in partition")
    return boundary_edge_mesh(mesh, partition.dirichlet_sides(alpha))


def neumann_edge_mesh(mesh: CartesianMesh, partition: BoundaryPartition,
                      alpha: int = 1) -> EdgeMesh:
    if not (1 <= alpha <= partition.n_sets):
        raise ValueError(f"condition set {alpha} not present in partition")
    return boundary_edge_mesh(mesh, partition.neumann_sides(alpha))


@dataclass(frozen=True)
class Corner:
    """A domain corner with its two incident sides in traversal order.

    side_in is traversed into the corner, side_out away from it; the
    twisting-moment jump is evaluated as (outgoing value) - (incoming value).
    """

    name: str
    point: tuple
    side_in: str
    side_out: str
    dirichlet: bool
    h_c: float
    cell: int


@dataclass(frozen=True)
class CornerSet:
    corners: tuple

    @property
    def dirichlet_corners(self):
        return tuple(c for c in self.corners if c.dirichlet)

    @property
    def neumann_corners(self):
        return tuple(c for c in self.corners if not c.dirichlet)


def classify_corners(mesh: CartesianMesh, partition: BoundaryPartition) -> CornerSet:
    """Split the four corners by the closure of the set-1 Dirichlet boundary.

    A corner belongs to the Dirichlet corner set when at least one incident
    side is Dirichlet in set 1 (the shared endpoint lies in the closure of
    that side); otherwise it is a Neumann corner.
    """
    lx, ly = mesh.domain.length_x, mesh.domain.length_y
    layout = (
        ("sw", (0.0, 0.0), "west", "south", (0, 0)),
        ("se", (lx, 0.0), "south", "east", (mesh.nx - 1, 0)),
        ("ne", (lx, ly), "east", "north", (mesh.nx - 1, mesh.ny - 1)),
        ("nw", (0.0, ly), "north", "west", (0, mesh.ny - 1)),
    )
    labels = partition.sets[0]
    corners = []
    for name, pt, side_in, side_out, (cx, cy) in layout:
        dir_flag = labels[side_in] == DIRICHLET or labels[side_out] == DIRICHLET
        corners.append(Corner(name, pt, side_in, side_out, dir_flag,
                              mesh.h_k, mesh.cell_id(cx, cy)))
    return CornerSet(tuple(corners))
