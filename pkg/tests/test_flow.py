import os

import numpy as np
import pytest

from c0mass_lab import flow as F
from c0mass_lab import geometry as G
from c0mass_lab import testfn as T

DATA = os.path.join(os.path.dirname(__file__), "data_rdtf_oracle.npz")


def test_rhs_matches_frozen_symbolic_target():
    # dual route: the implementation assembles the right-hand side from
    # jets term by term; the fixture holds -2 Ric + L_W g evaluated
    # symbolically for the same metric at the same point
    data = np.load(DATA)
    rhs = F.rdtf_rhs_from_jets(data["g"], data["dg"], data["d2g"])
    assert np.max(np.abs(rhs - data["target"])) <= 1e-12


def test_grid_rhs_matches_jet_route_on_quadratic_data():
    # second differences of quadratic data are exact, so the lattice
    # assembly must agree with the jet assembly to roundoff
    data = np.load(DATA)
    from test_geometry import ORACLE_POINT, polynomial_field
    field = polynomial_field()
    N = 7
    dx = 0.05
    ax = np.arange(N) - (N - 1) / 2
    h = np.empty((N, N, N, 3, 3))
    for i in range(N):
        for j in range(N):
            for k in range(N):
                x = ORACLE_POINT + dx * np.array([ax[i], ax[j], ax[k]])
                h[i, j, k] = field.matrix(x) - np.eye(3)
    c = (N - 1) // 2
    lattice = F.grid_rhs(h, dx)[c, c, c]
    assert np.max(np.abs(lattice - data["target"])) <= 1e-10


def test_flat_is_a_fixed_point_of_every_stepper():
    zero = np.zeros((10, 10, 10, 3, 3))
    stepped = F.rdtf_step(zero, 0.1, 1e-3)
    assert np.array_equal(stepped, zero)
    ell = np.linspace(0.0, 2.0, 33) + 0.5 * (2.0 / 32)
    a = np.ones_like(ell)
    b = np.ones_like(ell)
    a2, b2 = F.radial_rdtf_step(ell, a, b, 3, 1e-4, reflect=True)
    assert np.array_equal(a2, a) and np.array_equal(b2, b)


def test_heat_rhs_is_the_componentwise_laplacian():
    rng = np.random.default_rng(0)
    h = rng.standard_normal((8, 8, 8, 3, 3))
    dx = 0.2
    out = F.heat_rhs(h, dx)
    lap = np.zeros_like(h)
    for k in range(3):
        lap += (np.roll(h, -1, axis=k) + np.roll(h, 1, axis=k)
                - 2.0 * h) / dx ** 2
    # the two assemblies accumulate in different orders
    assert np.max(np.abs(out[2:-2, 2:-2, 2:-2] - lap[2:-2, 2:-2, 2:-2])) \
        <= 1e-11


def test_extend_metric_windows():
    fld = F._as_radial(G.schwarzschild_leading(0.1))
    ext = F.extend_metric(fld, (0.7, 1.3), (0.45, 1.55))
    # untouched inside the inner window
    x = np.array([1.0, 0.0, 0.0])
    assert np.max(np.abs(ext.matrix(x) - fld.matrix(x))) <= 1e-14
    # exactly flat outside the outer window
    for u in (0.3, 1.8):
        y = np.array([u, 0.0, 0.0])
        assert np.array_equal(ext.matrix(y), np.eye(3))


def test_trajectory_records_solver_step():
    fld = F.extend_metric(F._as_radial(G.schwarzschild_leading(0.02)),
                          (0.7, 1.3), (0.45, 1.55))
    traj = F.rdtf_solve(fld, 0.01, solver="radial", radial_nodes=128,
                        ell_range=(0.0, 2.0), output_times=[0.01])
    assert traj.dt > 0.0
    for state in traj.states:
        assert abs(state.t / traj.dt - round(state.t / traj.dt)) <= 1e-6


def test_aligned_testfn_flow_lands_on_snapshot_times():
    fld = F.extend_metric(F._as_radial(G.schwarzschild_leading(0.02)),
                          (0.85, 1.15), (0.7, 1.3))
    theta = 2e-4
    traj = F.rdtf_solve(fld, theta, solver="radial", radial_nodes=200,
                        ell_range=(0.0, 1.6),
                        output_times=np.linspace(0.0, theta, 5))
    phi = T.make_bump(0.96, 1.04)
    fam = F.aligned_testfn_flow(traj, phi, theta, 3, n_nodes=512,
                                dt_target=1e-6)
    for state in traj.states:
        fam.slice(state.t)      # raises if off-lattice


def test_solver_rejects_large_initial_data():
    fld = G.MetricField.from_radial_profiles(
        3, lambda l: 4.0 + 0 * l, lambda l: 1.0 + 0 * l,
        domain=G.Domain.ball_complement(0.0))
    with pytest.raises(ValueError):
        F.rdtf_solve(fld, 0.01, solver="radial", radial_nodes=64,
                     ell_range=(0.0, 2.0))


def test_scalar_l1_annulus_flat_is_small():
    # |R| of the flat field is finite-difference roundoff, which the
    # absolute value prevents from cancelling; the statistic integrates
    # that noise over the (large) annulus volume, so "zero" means small
    # against the Schwarzschild signal at the same radii, not 1e-16
    flat_vals = F.scalar_l1_annulus(G.flat_metric(3), 20.0, [30.0, 60.0])
    sch_vals = F.scalar_l1_annulus(G.schwarzschild_leading(1.0), 20.0,
                                   [30.0, 60.0])
    assert np.max(np.abs(flat_vals)) <= 1e-3 * np.max(np.abs(sch_vals))


def test_bartnik_identity_flat():
    # same finite-difference noise floor in the volume term
    lhs, rhs, gap = F.bartnik_identity_check(G.flat_metric(3), 20.0, 40.0)
    assert gap <= 1e-4 * (abs(lhs) + 1.0)


def test_grid_and_radial_solvers_agree_quickly():
    # a cheap version of the full cross-validation: coarse settings,
    # loose tolerance, but the same two independent discretizations
    ext = F.extend_metric(G.schwarzschild_leading(0.02),
                          (0.7, 1.3), (0.45, 1.55))
    T_final = 0.02
    tr = F.rdtf_solve(ext, T_final, solver="radial", radial_nodes=300,
                      ell_range=(0.0, 3.0), output_times=[T_final])
    tg = F.rdtf_solve(ext, T_final, solver="grid", grid_n=32,
                      half_width=1.6, output_times=[T_final])
    pts = np.array([[0.6, 0.0, 0.0], [0.0, 0.9, 0.0], [0.5, 0.5, 0.5]])
    h_r = tr.state_at(T_final).to_field().matrix(pts) - np.eye(3)
    h_g = tg.state_at(T_final).to_field().matrix(pts) - np.eye(3)
    den = np.max(np.abs(h_r))
    assert np.max(np.abs(h_g - h_r)) / den <= 0.05


def test_beta_probe_reports_structure():
    ext = F.extend_metric(F._as_radial(G.schwarzschild_leading(0.02)),
                          (0.7, 1.3), (0.45, 1.55))
    probe = F.beta_weak_probe(ext, np.zeros(3), beta=0.5, solver="radial",
                              radial_nodes=128, ell_range=(0.0, 2.0))
    assert isinstance(probe.passed, (bool, np.bool_))
    assert probe.beta == 0.5
    assert len(probe.records) > 0
