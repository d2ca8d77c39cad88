import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from c0mass_lab.quadrature import (AnnulusQuadrature, gauss_legendre,
                                   pairwise_sum, sphere_quadrature,
                                   unit_sphere_area)


@given(st.lists(st.floats(min_value=-1e12, max_value=1e12,
                          allow_nan=False), min_size=1, max_size=400))
@settings(max_examples=200, deadline=None)
def test_pairwise_sum_matches_fsum(values):
    arr = np.asarray(values, dtype=float)
    exact = math.fsum(values)
    scale = max(1.0, np.sum(np.abs(arr)))
    assert abs(pairwise_sum(arr) - exact) <= 1e-12 * scale


def test_pairwise_sum_empty_and_single():
    assert pairwise_sum(np.array([])) == 0.0
    assert pairwise_sum(np.array([3.5])) == 3.5


@pytest.mark.parametrize("order", [2, 5, 16])
def test_gauss_legendre_polynomial_exactness(order):
    # an order-k rule integrates polynomials of degree 2k-1 exactly
    x, w = gauss_legendre(-1.0, 2.0, order)
    for deg in range(2 * order):
        exact = (2.0 ** (deg + 1) - (-1.0) ** (deg + 1)) / (deg + 1)
        assert abs(pairwise_sum(x ** deg * w) - exact) <= 1e-12 * abs(exact) + 1e-13


@pytest.mark.parametrize("n,area", [(2, 2 * np.pi), (3, 4 * np.pi)])
def test_unit_sphere_area(n, area):
    assert abs(unit_sphere_area(n) - area) <= 1e-14 * area


def test_sphere_quadrature_weight_total_and_moment():
    r = 2.5
    pts, w = sphere_quadrature(3, r, degree=23)
    assert abs(pairwise_sum(w) - 4 * np.pi * r ** 2) <= 1e-10
    # int_{S(r)} x_1^2 dS = (4 pi / 3) r^4
    moment = pairwise_sum(pts[:, 0] ** 2 * w)
    assert abs(moment - 4 * np.pi * r ** 4 / 3) <= 1e-9


def test_sphere_quadrature_rotation_reorders_nodes_only():
    from scipy.stats import special_ortho_group
    O = special_ortho_group.rvs(3, random_state=0)
    pts, w = sphere_quadrature(3, 1.0, degree=11)
    rpts, rw = sphere_quadrature(3, 1.0, degree=11, rotation=O)
    assert np.array_equal(w, rw)
    assert np.max(np.abs(np.linalg.norm(rpts, axis=1) - 1.0)) <= 1e-12


def test_annulus_quadrature_volume_and_boundary():
    n, r = 3, 2.0
    quad = AnnulusQuadrature(n, r, radial_order=64, sphere_degree=11)
    _, w, rho = quad.volume_nodes()
    vol = 4 * np.pi / 3 * ((1.1 * r) ** 3 - (0.9 * r) ** 3)
    assert abs(pairwise_sum(w) - vol) <= 1e-9 * vol
    assert rho.min() >= 0.9 * r - 1e-12 and rho.max() <= 1.1 * r + 1e-12
    bpts, bw, bnu = quad.boundary_nodes()
    area = 4 * np.pi * ((1.1 * r) ** 2 + (0.9 * r) ** 2)
    assert abs(pairwise_sum(bw) - area) <= 1e-9 * area
    # outward normals point away from the annulus on both spheres
    brho = np.linalg.norm(bpts, axis=1)
    sgn = np.einsum("pi,pi->p", bpts / brho[:, None], bnu)
    outer = brho > r
    assert np.all(sgn[outer] > 0.99) and np.all(sgn[~outer] < -0.99)
