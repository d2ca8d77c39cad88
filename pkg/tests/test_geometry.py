import os

import numpy as np
import pytest

from c0mass_lab import geometry as G

DATA = os.path.join(os.path.dirname(__file__), "data_rdtf_oracle.npz")
FIELD = os.path.join(os.path.dirname(__file__), "data_rdtf_field.npz")

ORACLE_POINT = np.array([0.2, -0.3, 0.4])


def polynomial_field():
    """The random quadratic h frozen into the oracle fixtures."""
    coefs = np.load(FIELD)

    def fn(x):
        x0, x1, x2 = x
        terms = np.array([1.0, x0, x1, x2, x0 * x1, x0 * x2, x1 * x2,
                          x0 ** 2, x1 ** 2, x2 ** 2])
        h = np.zeros((3, 3))
        for i in range(3):
            for j in range(i, 3):
                h[i, j] = h[j, i] = float(coefs[f"c{i}{j}"] @ terms)
        return np.eye(3) + h

    return G.MetricField.from_matrix_function(3, fn, name="poly-oracle")


def test_metric_jet_matches_frozen_symbolic_jet():
    # FD jets of a quadratic polynomial are exact up to roundoff, so the
    # comparison validates the stencil plumbing, index order included
    data = np.load(DATA)
    field = polynomial_field()
    g, dg, d2g = G.metric_jet(field, ORACLE_POINT)
    assert np.max(np.abs(g - data["g"])) <= 1e-12
    assert np.max(np.abs(dg - data["dg"])) <= 1e-8
    assert np.max(np.abs(d2g - data["d2g"])) <= 1e-6


def test_scalar_curvature_matches_frozen_symbolic_value():
    data = np.load(DATA)
    field = polynomial_field()
    val = G.scalar_curvature(field, ORACLE_POINT)
    assert abs(val - float(data["scalar"])) <= 1e-7


def test_scalar_curvature_split_sums_to_total():
    field = polynomial_field()
    lin, quad = G.scalar_curvature_split(field, ORACLE_POINT)
    total = G.scalar_curvature(field, ORACLE_POINT)
    assert abs((lin + quad) - total) <= 1e-10


def test_flat_metric_is_identity_and_flat():
    fl = G.flat_metric(3)
    x = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(fl.matrix(x), np.eye(3))
    # jets come from finite differences of the closed form, so flatness
    # holds to stencil roundoff rather than exactly
    assert abs(G.scalar_curvature(fl, x)) <= 1e-8


def test_isotropic_schwarzschild_is_scalar_flat():
    iso = G.schwarzschild_isotropic(1.0)
    for x in ([5.0, 0.0, 0.0], [3.0, -4.0, 1.0], [0.0, 0.0, 8.0]):
        assert abs(G.scalar_curvature(iso, np.asarray(x))) <= 1e-8


def test_radial_field_matrix_structure():
    fld = G.MetricField.from_radial_profiles(
        3, lambda l: 1.0 + 1.0 / l, lambda l: 1.0 - 0.1 / l,
        domain=G.Domain.ball_complement(0.5))
    x = np.array([2.0, 0.0, 0.0])
    g = fld.matrix(x)
    assert abs(g[0, 0] - 1.5) <= 1e-14          # radial direction: a(2)
    assert abs(g[1, 1] - 0.95) <= 1e-14         # tangential: b(2)
    assert abs(g[0, 1]) <= 1e-14


def test_radial_jet_matches_closed_form_route():
    a = lambda l: 1.0 + 0.3 / l
    b = lambda l: 1.0 + 0.1 / l ** 2
    rad = G.MetricField.from_radial_profiles(
        3, a, b, domain=G.Domain.ball_complement(0.1))
    closed = G.MetricField.from_matrix_function(
        3, lambda x: rad.matrix(x))
    pts = np.array([[1.3, 0.4, -0.2], [0.5, 0.5, 0.5]])
    g1, dg1, d2g1 = G.metric_jet_batch(rad, pts)
    g2, dg2, d2g2 = G.metric_jet_batch(closed, pts)
    assert np.max(np.abs(g1 - g2)) <= 1e-12
    assert np.max(np.abs(dg1 - dg2)) <= 1e-7
    assert np.max(np.abs(d2g1 - d2g2)) <= 1e-5


def test_rotated_field_pullback_pointwise():
    from scipy.stats import special_ortho_group
    O = special_ortho_group.rvs(3, random_state=3)
    fld = G.schwarzschild_isotropic(0.5)
    rot = G.rotated_field(fld, O)
    x = np.array([1.0, 2.0, -0.5])
    assert np.max(np.abs(rot.matrix(x) - O.T @ fld.matrix(O @ x) @ O)) == 0.0


def test_translated_field_pointwise():
    fld = G.schwarzschild_leading(1.0)
    v = np.array([1.0, 0.0, -2.0])
    tr = G.translated_field(fld, v)
    x = np.array([4.0, 4.0, 4.0])
    assert np.array_equal(tr.matrix(x), fld.matrix(x + v))


def test_rescaled_field_decay_transforms():
    # rescaling by r maps h(x) = c |x|^{-tau} to r^{-tau} c |y|^{-tau}
    fld = G.power_decay_metric(2.0, 1.0)
    r = 8.0
    sc = G.rescaled_field(fld, r)
    y = np.array([1.0, 0.3, -0.2])
    h_scaled = sc.matrix(y) - np.eye(3)
    h_orig = fld.matrix(r * y) - np.eye(3)
    assert np.max(np.abs(h_scaled - h_orig)) <= 1e-13


def test_domain_errors():
    fld = G.MetricField.from_radial_profiles(
        3, lambda l: 1.0 + 0 * l, lambda l: 1.0 + 0 * l,
        domain=G.Domain.ball_complement(1.0))
    with pytest.raises(G.OutOfDomainError):
        fld.matrix(np.array([0.1, 0.0, 0.0]))


def test_degenerate_metric_detected():
    fld = G.MetricField.from_matrix_function(
        3, lambda x: np.diag([1.0, 1.0, -0.5]))
    with pytest.raises(G.DegenerateMetricError):
        fld.check_positive_definite(np.array([[1.0, 0.0, 0.0]]))


def test_grid_field_interpolates_smooth_data():
    ax = np.linspace(-2.0, 2.0, 33)
    mesh = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
    r2 = np.sum(mesh ** 2, axis=-1)
    vals = np.eye(3) + 0.1 * np.exp(-r2)[..., None, None] * np.eye(3)
    fld = G.MetricField.from_grid(vals, origin=[-2.0, -2.0, -2.0],
                                  spacing=ax[1] - ax[0])
    x = np.array([0.3, -0.7, 0.45])
    exact = 1.0 + 0.1 * np.exp(-np.sum(x ** 2))
    assert abs(fld.matrix(x)[0, 0] - exact) <= 1e-5


def test_grid_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    vals = np.eye(3) + 0.01 * rng.standard_normal((6, 7, 8, 3, 3))
    path = tmp_path / "field.bin"
    G.write_grid_file(path, vals, origin=[-1.0, 0.0, 0.5], spacing=0.25)
    back = G.read_grid_file(path)
    assert np.array_equal(back.grid_values, vals)
    assert back.grid_spacing == 0.25
    assert np.array_equal(back.grid_origin, [-1.0, 0.0, 0.5])


def test_grid_file_rejects_garbage(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"not a grid file at all")
    with pytest.raises(ValueError):
        G.read_grid_file(path)
