from math import pi

import numpy as np
import pytest

from c0mass_lab import geometry as G
from c0mass_lab import mass as M
from c0mass_lab import testfn as T

PHI = T.make_bump(0.95, 1.05)


def test_surface_integral_schwarzschild_exact():
    fld = G.schwarzschild_leading(1.0)
    for r in (10.0, 20.0, 80.0):
        assert abs(M.local_mass_c2(fld, r) - 16 * pi) <= 1e-9 * 16 * pi


def test_surface_integral_isotropic_oracle():
    m = 1.0
    fld = G.schwarzschild_isotropic(m)
    for r in (10.0, 40.0):
        exact = 16 * pi * m * (1 + m / (2 * r)) ** 3
        assert abs(M.local_mass_c2(fld, r) - exact) <= 1e-8 * exact


def test_flat_mass_is_exactly_zero():
    rep = M.c0_local_mass(G.flat_metric(3), PHI, 20.0)
    assert rep.raw_volume == 0.0
    assert rep.raw_boundary == 0.0
    assert rep.unnormalized == 0.0


def test_annulus_functional_is_linear_in_h():
    # the functional touches g only through h = g - delta, linearly
    f1 = G.schwarzschild_leading(1.0)
    f2 = G.conformal_metric(
        3, lambda x: 1.0 + 0.5 / np.linalg.norm(x, axis=-1) ** 2)
    f12 = G.MetricField.from_matrix_function(
        3, lambda x: f1.matrix(x) + f2.matrix(x) - np.eye(3))
    r = 20.0
    m1 = M.c0_local_mass(f1, PHI, r).unnormalized
    m2 = M.c0_local_mass(f2, PHI, r).unnormalized
    m12 = M.c0_local_mass(f12, PHI, r).unnormalized
    assert abs(m12 - (m1 + m2)) <= 1e-9 * (abs(m1) + abs(m2) + 1)


def test_identity_with_weighted_average_single_combo():
    fld = G.schwarzschild_isotropic(1.0)
    a = M.c0_local_mass(fld, PHI, 25.0).unnormalized
    b = M.weighted_average_mass(fld, PHI, 25.0)
    assert abs(a - b) <= 1e-6 * (1 + abs(b))


def test_normalization_bookkeeping():
    fld = G.schwarzschild_leading(1.0)
    rep_paper = M.c0_local_mass(fld, PHI, 20.0)
    rep_unit = M.c0_local_mass(fld, PHI, 20.0, normalization=1.0)
    rep_custom = M.c0_local_mass(fld, PHI, 20.0, normalization=2.5)
    assert rep_paper.normalization == M.paper_normalization(3)
    assert rep_unit.normalized == rep_unit.unnormalized
    assert rep_custom.normalized == rep_custom.unnormalized * 2.5
    assert rep_paper.unnormalized == rep_unit.unnormalized


def test_paper_normalization_value():
    # (4 pi (n-1) omega_{n-1})^{-1} with omega_2 = 4 pi
    assert abs(M.paper_normalization(3) - 1.0 / (32 * pi ** 2)) <= 1e-18


def test_rotation_invariance_single_case():
    from scipy.stats import special_ortho_group
    O = special_ortho_group.rvs(3, random_state=0)
    fld = G.translated_field(G.schwarzschild_isotropic(1.0),
                             np.array([3.0, 0.0, 0.0]))
    m1 = M.c0_local_mass(fld, PHI, 20.0).normalized
    m2 = M.c0_local_mass(G.rotated_field(fld, O), PHI, 20.0,
                         rotation=O).normalized
    assert abs(m1 - m2) <= 1e-9 * abs(m1)


def test_zero_profile_rejected():
    class Zero:
        def __call__(self, u):
            return np.zeros_like(np.asarray(u, dtype=float))

        def derivative(self, u):
            return np.zeros_like(np.asarray(u, dtype=float))

        def integral(self, lo, hi):
            return 0.0

    with pytest.raises(ValueError):
        M.c0_local_mass(G.flat_metric(3), Zero(), 10.0)


def test_adm_limit_flat_converges_to_zero():
    radii = [25.0 * 2 ** k for k in range(4)]
    reports, converged, limit = M.adm_limit_extract(
        G.flat_metric(3), lambda r: PHI, radii, eta=0.5)
    assert converged
    assert abs(limit) <= 1e-10
    assert all(rep.unnormalized == 0.0 for rep in reports)


def test_adm_limit_requires_increasing_radii():
    with pytest.raises(ValueError):
        M.adm_limit_extract(G.flat_metric(3), lambda r: PHI,
                            [10.0, 5.0, 20.0], eta=0.5)
