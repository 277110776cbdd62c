import numpy as np
import pytest

from nitschefem.quadrature import (gauss_rule_1d, gauss_rule_2d, map_to_cell,
                                   map_to_edge, map_to_interval)


def test_one_point_rule():
    r = gauss_rule_1d(1)
    assert np.allclose(r.points, [0.0])
    assert np.allclose(r.weights, [2.0])


def test_two_point_rule():
    r = gauss_rule_1d(2)
    assert np.allclose(sorted(r.points), [-1 / np.sqrt(3), 1 / np.sqrt(3)])
    assert np.allclose(r.weights, [1.0, 1.0])


def test_two_point_rule_integrates_x_squared():
    r = gauss_rule_1d(2)
    assert (r.weights @ r.points ** 2) == pytest.approx(2.0 / 3.0)


def test_rule_bounds():
    with pytest.raises(ValueError):
        gauss_rule_1d(0)
    with pytest.raises(ValueError):
        gauss_rule_1d(21)


def test_weights_sum_to_reference_measure():
    for n in (1, 3, 7):
        assert gauss_rule_1d(n).weights.sum() == pytest.approx(2.0)
        assert gauss_rule_2d(n).weights.sum() == pytest.approx(4.0)


def test_map_one_point_to_half_cell():
    pts, wts = map_to_cell(gauss_rule_2d(1), (0.0, 0.0, 0.5, 0.5))
    assert np.allclose(pts, [[0.25, 0.25]])
    assert np.allclose(wts, [0.25])


def test_map_two_points_to_short_edge():
    pts, wts = map_to_edge(gauss_rule_1d(2), (0.0, 0.0), (0.5, 0.0))
    assert np.allclose(wts, [0.25, 0.25])
    assert np.allclose(pts[:, 1], 0.0)


def test_mapped_2x2_rule_integrates_xy_on_unit_square():
    pts, wts = map_to_cell(gauss_rule_2d(2), (0.0, 0.0, 1.0, 1.0))
    assert (wts @ (pts[:, 0] * pts[:, 1])) == pytest.approx(0.25)


@pytest.mark.parametrize("n", [2, 4, 6])
def test_mapped_rule_exactness_degree(n):
    # n-point rule must integrate monomials through degree 2n-1 per direction
    bounds = (0.2, -0.3, 0.9, 0.4)
    x0, y0, x1, y1 = bounds
    pts, wts = map_to_cell(gauss_rule_2d(n), bounds)
    for dx in range(2 * n):
        for dy in range(2 * n):
            got = wts @ (pts[:, 0] ** dx * pts[:, 1] ** dy)
            want = ((x1 ** (dx + 1) - x0 ** (dx + 1)) / (dx + 1)
                    * (y1 ** (dy + 1) - y0 ** (dy + 1)) / (dy + 1))
            assert got == pytest.approx(want, rel=1e-13, abs=1e-15)


def test_map_to_interval():
    pts, wts = map_to_interval(gauss_rule_1d(3), 1.0, 3.0)
    assert wts.sum() == pytest.approx(2.0)
    assert (wts @ pts ** 2) == pytest.approx((27 - 1) / 3.0)
