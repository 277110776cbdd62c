"""Gauss-Legendre rules on the reference interval/square and affine mappings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_POINTS = 20


@dataclass(frozen=True)
class QuadRule:
    """Points in [-1, 1] (or pairs in the square) with positive weights."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def n(self):
        return self.weights.size


def gauss_rule_1d(n: int) -> QuadRule:
    """n-point Gauss-Legendre rule, exact for polynomials of degree 2n - 1."""
    if not 1 <= n <= MAX_POINTS:
        raise ValueError(f"point count must lie in [1, {MAX_POINTS}]")
    pts, wts = np.polynomial.legendre.leggauss(n)
    return QuadRule(pts, wts)


def gauss_rule_2d(n: int) -> QuadRule:
    """Tensor-product rule on [-1, 1]^2 with n points per direction."""
    r = gauss_rule_1d(n)
    px, py = np.meshgrid(r.points, r.points, indexing="ij")
    wx, wy = np.meshgrid(r.weights, r.weights, indexing="ij")
    return QuadRule(np.column_stack([px.ravel(), py.ravel()]),
                    (wx * wy).ravel())


def map_to_interval(rule: QuadRule, a: float, b: float):
    """Map a 1D rule to [a, b]; weights scale by the interval length / 2."""
    pts = 0.5 * (b - a) * (rule.points + 1.0) + a
    return pts, 0.5 * (b - a) * rule.weights


def map_to_cell(rule: QuadRule, bounds):
    """Map a 2D rule to the cell (x0, y0, x1, y1); weights scale by area / 4."""
    x0, y0, x1, y1 = bounds
    pts = np.empty_like(rule.points)
    pts[:, 0] = 0.5 * (x1 - x0) * (rule.points[:, 0] + 1.0) + x0
    pts[:, 1] = 0.5 * (y1 - y0) * (rule.points[:, 1] + 1.0) + y0
    return pts, 0.25 * (x1 - x0) * (y1 - y0) * rule.weights


def map_to_edge(rule: QuadRule, p0, p1):
    """Map a 1D rule to the segment p0 -> p1; weights scale by length / 2."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    s = 0.5 * (rule.points + 1.0)
    pts = p0[None, :] + s[:, None] * (p1 - p0)[None, :]
    length = float(np.hypot(*(p1 - p0)))
    return pts, 0.5 * length * rule.weights
