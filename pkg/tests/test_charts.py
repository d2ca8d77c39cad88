import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import special_ortho_group

from c0mass_lab import charts as C


def seeded_isometry(seed, n=3, with_translation=True):
    O = special_ortho_group.rvs(n, random_state=seed)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) if with_translation else np.zeros(n)
    return C.EuclideanIsometry(O, v)


@given(st.integers(min_value=0, max_value=500),
       st.integers(min_value=501, max_value=1000))
@settings(max_examples=40, deadline=None)
def test_isometry_composition_and_inverse(s1, s2):
    L1, L2 = seeded_isometry(s1), seeded_isometry(s2)
    x = np.random.default_rng(s1 + s2).standard_normal((5, 3))
    comp = L1.compose(L2)
    assert np.max(np.abs(comp(x) - L1(L2(x)))) <= 1e-12
    ident = L1.compose(L1.inverse())
    assert np.max(np.abs(ident.O - np.eye(3))) <= 1e-14
    assert np.max(np.abs(ident.v)) <= 1e-13


def test_isometry_preserves_distances_exactly():
    L = seeded_isometry(7)
    x = np.random.default_rng(7).standard_normal((20, 3))
    d0 = np.linalg.norm(x[:, None] - x[None, :], axis=2)
    fx = L(x)
    d1 = np.linalg.norm(fx[:, None] - fx[None, :], axis=2)
    assert np.max(np.abs(d1 - d0)) <= 1e-12


def test_fit_isometry_recovers_exact_isometry():
    L = seeded_isometry(11)
    fitted = C.fit_isometry(L.as_map(), np.array([2.0, 1.0, 0.0]), 0.5)
    assert np.max(np.abs(fitted.O - L.O)) <= 1e-10
    assert np.max(np.abs(fitted.v - L.v)) <= 1e-10


def test_fit_isometry_anchor_is_exact():
    L = seeded_isometry(13)
    F = C.perturbed_isometry_map(L, 1e-3)
    x0 = np.array([2.0, 1.0, 0.0])
    fitted = C.fit_isometry(F, x0, 0.5)
    assert np.max(np.abs(fitted(x0[None])[0] - F(x0[None])[0])) <= 1e-13


def test_mollification_reproduces_affine_maps():
    prof = C.MollifierProfile.constant(3, 0.3)
    x = np.array([[0.5, 0.2, -0.1], [2.0, 0.0, 0.0]])
    # constant map
    Fc = C.SmoothMap(
        n=3, func=lambda p: np.broadcast_to([1.0, 2.0, 3.0], p.shape).copy())
    assert np.max(np.abs(C.mollify_map(Fc, prof, x) - [1, 2, 3])) <= 1e-9
    # isometry
    L = seeded_isometry(1)
    assert np.max(np.abs(C.mollify_map(L.as_map(), prof, x) - L(x))) <= 1e-9
    # general linear map (first moment of the kernel vanishes)
    A = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 3.0], [0.5, 0.0, 1.0]])
    Fa = C.SmoothMap(n=3, func=lambda p: p @ A.T)
    assert np.max(np.abs(C.mollify_map(Fa, prof, x) - x @ A.T)) <= 1e-9


def test_mollified_differential_of_isometry():
    L = seeded_isometry(1)
    ramp = C.MollifierProfile.ramp(3, 1.0)
    x = np.array([[3.0, 0.5, 0.2], [7.0, 0.0, 0.0]])
    dL = C.mollify_differential(L.as_map(), ramp, x)
    assert np.max(np.abs(dL - L.O)) <= 1e-8


def test_smooth_map_fd_differential_matches_exact_jacobian():
    Fs = C.synthetic_transition_map(1.0, 0.05)
    pts = np.array([[2.0, 1.0, -0.5], [5.0, 0.0, 1.0]])
    exact = Fs.differential(pts)
    fd = C.SmoothMap(n=3, func=Fs.func).differential(pts)
    assert np.max(np.abs(exact - fd)) <= 1e-6


def test_glue_pure_isometry_is_lossless():
    L = seeded_isometry(1)
    res = C.glue_to_isometry(L.as_map(), 1.0)
    assert res.delta_input <= 1e-12
    assert res.pullback_sup <= 1e-8
    pts = C.annulus_sample(3, 0.3, 12.0, 50, seed=5)
    assert np.max(np.abs(res.map(pts) - L(pts))) <= 1e-8


def test_glue_agreement_regions():
    O = special_ortho_group.rvs(3, random_state=2)
    L = C.EuclideanIsometry(O, np.zeros(3))
    F = C.perturbed_isometry_map(L, 0.05, bump="compact", bump_radius=0.5)
    res = C.glue_to_isometry(F, 1.0)
    pts_in = C.annulus_sample(3, 0.15, 1.0, 100, seed=3)
    assert np.max(np.abs(res.map(pts_in) - F(pts_in))) <= 1e-12
    pts_out = C.annulus_sample(3, 10.0, 15.0, 100, seed=4)
    assert np.array_equal(res.map(pts_out), res.isometry(pts_out))


def test_injectivity_probe_verdicts():
    L = seeded_isometry(1)
    assert C.injectivity_probe(L.as_map(), (0.2, 2.0),
                               n_pairs=20000).passed
    fold = C.SmoothMap(
        n=3,
        func=lambda p: np.column_stack([np.abs(p[:, 0]), p[:, 1], p[:, 2]]))
    rep = C.injectivity_probe(fold, (0.2, 2.0), n_pairs=20000)
    assert not rep.passed
    assert rep.collision is not None


def test_bilipschitz_profile_of_isometry():
    L = seeded_isometry(5)
    rep = C.bilipschitz_profile(
        L.as_map(), points=C.ball_sample(np.array([2.0, 1.0, 0.0]), 1.0, 100))
    assert rep.delta <= 1e-10


def test_synthetic_transition_decay_exponent():
    Fs = C.synthetic_transition_map(1.0, 0.5)
    rep = C.bilipschitz_profile(Fs, annuli=[10, 20, 40, 80, 160])
    # decay_exponent is the positive rate p in delta(r) ~ r^{-p}
    assert abs(rep.decay_exponent - 1.0) <= 0.15


def test_distance_distortion_bound_quick():
    L = seeded_isometry(2, with_translation=False)
    delta, r = 1e-2, 2.0
    F = C.perturbed_isometry_map(L, delta)
    x0 = np.array([3.0, 1.0, 0.0])
    X = C.ball_sample(x0, r, 60)
    Y = C.ball_sample(x0 + 0.01, 0.99 * r, 60)
    d0 = np.linalg.norm(X[:, None] - Y[None, :], axis=2)
    d1 = np.linalg.norm(F(X)[:, None] - F(Y)[None, :], axis=2)
    assert np.max(np.abs(d1 - d0)) <= 4 * delta * r


def test_pullback_of_flat_under_isometry_is_flat():
    from c0mass_lab.geometry import flat_metric
    L = seeded_isometry(4)
    pb = C.pullback_metric(L.as_map(), flat_metric(3))
    x = np.array([[1.0, 2.0, 3.0]])
    assert np.max(np.abs(pb.matrix(x) - np.eye(3))) <= 1e-10
