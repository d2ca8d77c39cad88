import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from c0mass_lab import testfn as T


@st.composite
def supports(draw):
    a = draw(st.floats(min_value=0.905, max_value=1.05))
    b = draw(st.floats(min_value=a + 0.02, max_value=1.095))
    return a, b


@given(supports())
@settings(max_examples=60, deadline=None)
def test_bump_invariants(ab):
    a, b = ab
    phi = T.make_bump(a, b)
    mid = 0.5 * (a + b)
    assert phi(a) == 0.0 and phi(b) == 0.0
    assert phi(a - 0.001) == 0.0 and phi(b + 0.001) == 0.0
    assert abs(phi(mid) - 1.0) <= 1e-12         # normalized peak
    xs = np.linspace(a + 1e-6, b - 1e-6, 101)
    assert np.all(phi(xs) >= 0.0)
    assert phi.integral(0.9, 1.1) > 0.0


@given(supports())
@settings(max_examples=30, deadline=None)
def test_bump_derivative_matches_finite_difference(ab):
    a, b = ab
    phi = T.make_bump(a, b)
    xs = np.linspace(a + 0.1 * (b - a), b - 0.1 * (b - a), 17)
    h = 1e-6
    fd = (phi(xs + h) - phi(xs - h)) / (2 * h)
    assert np.max(np.abs(phi.derivative(xs) - fd)) <= 1e-5


def test_bump_support_validation():
    with pytest.raises(ValueError):
        T.make_bump(0.9, 1.1)       # must lie strictly inside (.9, 1.1)
    with pytest.raises(ValueError):
        T.make_bump(1.05, 0.95)


def test_theta_threshold_formula():
    phi = T.make_bump(0.95, 1.03)
    # d_ab is the distance from the support to the annulus edge
    d = min(0.95 - 0.9, 1.1 - 1.03)
    assert abs(phi.d_ab - d) <= 1e-15
    assert abs(T.theta_threshold(phi, 3) - d * d / 6.0) <= 1e-18


def test_terminal_slice_is_exact():
    phi = T.make_bump(0.95, 1.05)
    theta = T.theta_threshold(phi, 3)
    flw = T.evolve_testfn(phi, theta, 3)
    assert np.array_equal(flw.values[-1], phi(flw.ell))
    assert np.array_equal(flw.dvalues[-1], phi.derivative(flw.ell))


def test_family_stays_nonnegative_to_roundoff():
    phi = T.make_bump(0.95, 1.05)
    theta = T.theta_threshold(phi, 3)
    flw = T.evolve_testfn(phi, theta, 3)
    assert flw.min_value >= -1e-10


def test_slice_lookup_rejects_off_lattice_times():
    phi = T.make_bump(0.95, 1.05)
    theta = T.theta_threshold(phi, 3)
    flw = T.evolve_testfn(phi, theta, 3,
                          store_times=np.linspace(0.0, theta, 5))
    flw.slice(0.0)
    with pytest.raises(ValueError):
        flw.slice(0.37 * theta, tol=1e-12)


def test_convolution_oracle_agreement_spot():
    phi = T.make_bump(0.95, 1.05)
    theta = T.theta_threshold(phi, 3)
    flw = T.evolve_testfn(phi, theta, 3)
    for t_frac, ell in ((0.0, 1.0), (0.5, 0.97), (0.9, 1.06)):
        sl = flw.slice(t_frac * theta, tol=theta)
        assert abs(sl(ell) - T.convolution_oracle(phi, theta, sl.t, ell)) \
            <= 1e-4


def test_residual_refinement_second_order():
    phi = T.make_bump(0.95, 1.05)
    theta = T.theta_threshold(phi, 3)
    _, residuals, orders = T.residual_refinement(
        phi, theta, 3, node_counts=(512, 1024))
    assert residuals[1] < residuals[0]
    assert orders[0] >= 1.8


def test_slice_integral_matches_profile_integral_at_terminal():
    phi = T.make_bump(0.96, 1.04)
    theta = 4e-5
    flw = T.evolve_testfn(phi, theta, 3)
    term = flw.slice(theta)
    # the denominator of the mass functional is this integral; the two
    # quadrature routes (restricted-support vs full-interval) must agree
    assert abs(term.integral(0.9, 1.1) - phi.integral(0.9, 1.1)) <= 1e-9


def test_boundary_decay_bound_shape():
    phi = T.make_bump(0.95, 1.05)
    b1 = T.boundary_decay_bound(phi, 1e-4, 3)
    b2 = T.boundary_decay_bound(phi, 2e-4, 3)
    assert 0.0 < b1 < b2    # larger theta leaks more
