"""Acceptance gate: the oracle- and property-based checks the artifact
must pass, runnable as a filtered suite.

Each criterion is a zero-argument function returning a
:class:`CriterionResult` whose ``measured`` dictionary records every
number the verdict was derived from, so a report can be audited without
re-running.  ``run_acceptance`` selects criteria by regular expression
(empty pattern = full suite) and executes them sequentially.

The heavyweight flow criteria pin the exact configurations at which
their tolerances were established (grid sizes, node counts, extension
windows); see the individual docstrings for why each knob is set where
it is.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field as dc_field
from math import pi
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.stats import special_ortho_group

from . import charts as C
from . import flow as F
from . import geometry as G
from . import mass as M
from . import testfn as T


@dataclass
class CriterionResult:
    """Outcome of one acceptance criterion.

    ``measured`` maps quantity names to the values the verdict was
    computed from; ``checks`` maps individual sub-check names to their
    booleans (``passed`` is their conjunction).
    """

    name: str
    passed: bool
    runtime_s: float
    measured: Dict[str, object] = dc_field(default_factory=dict)
    checks: Dict[str, bool] = dc_field(default_factory=dict)


def _result(name: str, t0: float, measured: Dict[str, object],
            checks: Dict[str, bool]) -> CriterionResult:
    return CriterionResult(name=name, passed=all(checks.values()),
                           runtime_s=time.time() - t0,
                           measured=measured, checks=checks)


# ---------------------------------------------------------------------------
# 1. derivative-free mass agrees with the weighted surface-integral average


def check_mass_identity() -> CriterionResult:
    """|c0_local_mass.unnormalized - weighted_average_mass| small across
    20 (field, profile, radius) combinations.

    The two routes share no code beyond the quadrature primitives: one
    integrates pointwise values of h over the annulus, the other
    averages the derivative-based surface integral over the same radii.
    """
    t0 = time.time()

    def radial_profiles_field():
        return G.MetricField.from_radial_profiles(
            3, lambda l: 1.0 + 1.0 / l, lambda l: 1.0 + 0.5 / l ** 2,
            domain=G.Domain.ball_complement(1.0), name="radial-1/l")

    fields = [G.schwarzschild_leading(1.0),
              G.schwarzschild_isotropic(1.0),
              G.power_decay_metric(2.0, 1.0),
              G.conformal_metric(
                  3, lambda x: 1.0 + 1.0 / np.linalg.norm(x, axis=-1)),
              radial_profiles_field()]
    profiles = [T.make_bump(0.95, 1.05), T.make_bump(0.92, 1.08)]
    radii = (20.0, 35.0)

    worst = 0.0
    combos = 0
    for fld in fields:
        for phi in profiles:
            for r in radii:
                a = M.c0_local_mass(fld, phi, r).unnormalized
                b = M.weighted_average_mass(fld, phi, r)
                worst = max(worst, abs(a - b) / (1.0 + abs(b)))
                combos += 1
    measured = {"combos": combos, "worst_scaled_gap": worst}
    checks = {"n_combos>=20": combos >= 20,
              "gap<=1e-6*(1+|v|)": worst <= 1e-6}
    return _result("mass.identity", t0, measured, checks)


# ---------------------------------------------------------------------------
# 2. Schwarzschild oracle for the surface integral and the large-r limit


def check_schwarzschild_oracle() -> CriterionResult:
    """m_{C^2} of (1 + 2m/|x|) delta equals 16 pi m exactly at every
    radius; the limit extraction on (1 + m/(2|x|))^4 delta lands within
    2% of 16 pi over radii 25 * 2^k.
    """
    t0 = time.time()
    target = 16.0 * pi
    lead = G.schwarzschild_leading(1.0)
    rels = {r: abs(M.local_mass_c2(lead, r) - target) / target
            for r in (20.0, 50.0, 100.0)}

    iso = G.schwarzschild_isotropic(1.0)
    phi = T.make_bump(0.95, 1.05)
    radii = [25.0 * 2 ** k for k in range(5)]
    reports, converged, limit = M.adm_limit_extract(
        iso, lambda r: phi, radii, eta=0.5, tau=1.0)
    limit_rel = abs(limit - target) / target

    measured = {"surface_rel_errors": rels,
                "limit_unnormalized": limit,
                "limit_rel_error": limit_rel,
                "sequence": [rep.unnormalized for rep in reports]}
    checks = {"surface=16pi@1e-6": max(rels.values()) <= 1e-6,
              "limit_converged": bool(converged),
              "limit_within_2pct": limit_rel <= 0.02}
    return _result("mass.schwarzschild-oracle", t0, measured, checks)


# ---------------------------------------------------------------------------
# 3. rotation invariance with rotated quadrature


def check_rotation_invariance() -> CriterionResult:
    """Normalized masses of g and O^* g agree to 1e-9 relative when the
    quadrature frame is rotated along with the field, for 5 seeded
    rotations x 3 genuinely non-symmetric fields."""
    t0 = time.time()

    def offset_conformal():
        p = np.array([2.0, -1.0, 0.5])

        def f(x):
            d2 = np.sum((np.atleast_2d(x) - p) ** 2, axis=-1)
            return 1.0 + 0.3 * np.exp(-d2 / 50.0)
        return G.conformal_metric(3, f)

    def anisotropic():
        A = np.array([[0.2, 0.05, 0.0],
                      [0.05, 0.1, 0.02],
                      [0.0, 0.02, 0.3]])

        def fn(x):
            return np.eye(3) + A / (1.0 + np.linalg.norm(x))
        return G.MetricField.from_matrix_function(3, fn, name="aniso")

    fields = [G.translated_field(G.schwarzschild_isotropic(1.0),
                                 np.array([3.0, 0.0, 0.0])),
              offset_conformal(), anisotropic()]
    phi = T.make_bump(0.95, 1.05)
    worst = 0.0
    for k in range(5):
        O = special_ortho_group.rvs(3, random_state=10 + k)
        for fld in fields:
            m1 = M.c0_local_mass(fld, phi, 20.0).normalized
            m2 = M.c0_local_mass(G.rotated_field(fld, O), phi, 20.0,
                                 rotation=O).normalized
            worst = max(worst, abs(m1 - m2) / abs(m1))
    measured = {"worst_rel_gap": worst, "rotations": 5, "fields": 3}
    checks = {"rel<=1e-9": worst <= 1e-9}
    return _result("mass.rotation-invariance", t0, measured, checks)


# ---------------------------------------------------------------------------
# 4. evolved test-function family


def check_evolved_testfn() -> CriterionResult:
    """Terminal slice exact at the lattice nodes, no negative values
    beyond roundoff, second-order PDE residual decay under spatial
    halving, and agreement with the closed-kernel convolution oracle."""
    t0 = time.time()
    phi = T.make_bump(0.95, 1.05)
    theta = T.theta_threshold(phi, 3)
    flw = T.evolve_testfn(phi, theta, 3)

    terminal_exact = bool(np.array_equal(flw.values[-1], phi(flw.ell)))
    min_val = flw.min_value

    counts, residuals, orders = T.residual_refinement(phi, theta, 3)

    rng = np.random.default_rng(7)
    oracle_worst = 0.0
    for _ in range(10):
        t = float(rng.uniform(0.0, 0.95 * theta))
        ell = float(rng.uniform(0.85, 1.15))
        sl = flw.slice(t, tol=theta)
        oracle_worst = max(oracle_worst, abs(
            sl(ell) - T.convolution_oracle(phi, theta, sl.t, ell)))

    measured = {"theta": theta, "min_value": min_val,
                "residuals": residuals, "orders": orders,
                "oracle_worst": oracle_worst}
    checks = {"terminal_exact": terminal_exact,
              "min>=-1e-10": min_val >= -1e-10,
              "order>=1.8": min(orders) >= 1.8,
              "oracle<=1e-4": oracle_worst <= 1e-4}
    return _result("testfn.evolved-family", t0, measured, checks)


# ---------------------------------------------------------------------------
# 5. flat fixed point and quadratic closeness to the heat flow


def check_flow_fixed_point_quadratic() -> CriterionResult:
    """h = 0 is preserved bitwise over 100 steps; the gap between the
    nonlinear flow and componentwise heat flow of eps * h0 scales like
    eps^2 (the ratio is stable within +-30% under eps halving)."""
    t0 = time.time()
    zero = np.zeros((24, 24, 24, 3, 3))
    dx0 = 0.1
    cur = zero
    for _ in range(100):
        cur = F.rdtf_step(cur, dx0, 0.2 * dx0 * dx0)
    flat_bitwise = bool(np.array_equal(cur, zero))

    n_grid, half_width, T_final = 48, 2.0, 0.1
    ax = np.linspace(-half_width, half_width, n_grid)
    dx = ax[1] - ax[0]
    mesh = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
    r2 = np.sum(mesh ** 2, axis=-1)
    R = 1.5
    s = np.clip(r2 / R ** 2, 0.0, 1.0 - 1e-12)
    psi = np.where(r2 < R ** 2, np.exp(1.0 - 1.0 / (1.0 - s)), 0.0)
    A = np.array([[1.0, 0.3, 0.1], [0.3, 0.7, 0.2], [0.1, 0.2, 1.2]])
    shape = psi[..., None, None] * A

    ratios = []
    for eps in (1e-2, 5e-3, 2.5e-3):
        h0 = eps * shape
        h_flow = F.rk2_grid_evolve(h0, dx, T_final, rhs=F.grid_rhs)
        h_heat = F.rk2_grid_evolve(h0, dx, T_final, rhs=F.heat_rhs)
        ratios.append(float(np.max(np.abs(h_flow - h_heat)) / eps ** 2))
    ratios_arr = np.array(ratios)
    mid = float(np.mean(ratios_arr))
    stable = bool(ratios_arr.min() >= 0.7 * mid
                  and ratios_arr.max() <= 1.3 * mid)

    measured = {"ratios": ratios, "mean_ratio": mid}
    checks = {"flat_bitwise_100_steps": flat_bitwise,
              "quadratic_ratio_stable_30pct": stable}
    return _result("flow.fixed-point-quadratic", t0, measured, checks)


# ---------------------------------------------------------------------------
# 6. radial vs grid solver cross-validation


def check_radial_grid_crosscheck() -> CriterionResult:
    """Spherically symmetric initial data evolved by both solvers agrees
    to 1e-2 relative sup norm on the shell 0.4 < |x| < 1.2 at T = 0.1.

    The radial reference is run at 800 nodes with the 400-node solution
    confirming its own convergence; the grid runs at 48^3 on a box of
    half-width 2 so the pinned boundary ring stays away from the shell.
    """
    t0 = time.time()
    ext = F.extend_metric(G.schwarzschild_leading(0.02),
                          (0.7, 1.3), (0.45, 1.55))
    T_final = 0.1
    axes = [np.linspace(-1.5, 1.5, 48)] * 3
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    rad = np.linalg.norm(mesh, axis=-1)
    pts = mesh[(rad > 0.4) & (rad < 1.2)]

    tr_ref = F.rdtf_solve(ext, T_final, solver="radial", radial_nodes=800,
                          ell_range=(0.0, 5.0), output_times=[T_final])
    h_ref = tr_ref.state_at(T_final).to_field().matrix(pts) - np.eye(3)
    den = float(np.max(np.abs(h_ref)))

    tr_coarse = F.rdtf_solve(ext, T_final, solver="radial", radial_nodes=400,
                             ell_range=(0.0, 5.0), output_times=[T_final])
    h_coarse = tr_coarse.state_at(T_final).to_field().matrix(pts) - np.eye(3)
    radial_self = float(np.max(np.abs(h_coarse - h_ref)) / den)

    tg = F.rdtf_solve(ext, T_final, solver="grid", grid_n=48, half_width=2.0,
                      output_times=[T_final])
    h_grid = tg.state_at(T_final).to_field().matrix(pts) - np.eye(3)
    cross = float(np.max(np.abs(h_grid - h_ref)) / den)

    measured = {"radial_self_rel": radial_self, "cross_rel": cross}
    checks = {"radial_converged": radial_self <= 1e-3,
              "cross<=1e-2": cross <= 1e-2}
    return _result("flow.radial-grid-crosscheck", t0, measured, checks)


# ---------------------------------------------------------------------------
# 7. derivative-decay diagnostic


def check_gradient_decay() -> CriterionResult:
    """sup|grad h(t)| sqrt(t) / eps0 varies by less than 3x over
    t in [0.01, 0.5] on the extended Schwarzschild run."""
    t0 = time.time()
    ext = F.extend_metric(F._as_radial(G.schwarzschild_leading(0.02)),
                          (0.7, 1.3), (0.45, 1.55))
    traj = F.rdtf_solve(ext, 0.5, solver="radial", radial_nodes=320,
                        ell_range=(0.0, 4.0),
                        output_times=[0.1, 0.3, 0.5], diag_every=50)
    ratios = traj.grad_ratio_series()
    mask = (traj.diag_times >= 0.01) & (traj.diag_times <= 0.5)
    vals = ratios[mask]
    factor = float(vals.max() / vals.min())
    measured = {"min": float(vals.min()), "max": float(vals.max()),
                "factor": factor, "n_samples": int(mask.sum())}
    checks = {"factor<3": factor < 3.0}
    return _result("flow.gradient-decay", t0, measured, checks)


# ---------------------------------------------------------------------------
# 8. two-radius surface-integral identity


def check_bartnik_identity() -> CriterionResult:
    """The two-radius integral identity closes to 1e-4 * (|lhs| + 1) on
    isotropic Schwarzschild over (20, 40), and the gap shrinks at order
    >= 1.8 under halving of the derivative-stencil spacing."""
    t0 = time.time()
    iso = G.schwarzschild_isotropic(1.0)
    lhs, rhs, gap = F.bartnik_identity_check(iso, 20.0, 40.0)
    g_coarse = F.bartnik_identity_check(
        iso, 20.0, 40.0,
        stencil=G.DerivativeStencil(order=2, spacing=0.5))[2]
    g_fine = F.bartnik_identity_check(
        iso, 20.0, 40.0,
        stencil=G.DerivativeStencil(order=2, spacing=0.25))[2]
    order = float(np.log2(g_coarse / g_fine))
    measured = {"lhs": lhs, "rhs": rhs, "gap": gap,
                "gap_coarse": g_coarse, "gap_fine": g_fine, "order": order}
    checks = {"gap<=1e-4*(|lhs|+1)": gap <= 1e-4 * (abs(lhs) + 1.0),
              "order>=1.8": order >= 1.8}
    return _result("flow.bartnik-identity", t0, measured, checks)


# ---------------------------------------------------------------------------
# 9. coupled mass-trajectory distortion exponents


def check_mass_distortion() -> CriterionResult:
    """Total variation of the coupled mass series scales like eps^2 at
    fixed r and like r^{n-2-2tau} = r^{-1} across r (n = 3, tau = 1).

    The family time theta is held fixed across r (theta = 4e-5, i.e. a
    per-run decoupling exponent eta = log(1/theta)/log r) so the
    boundary-leakage term exp(-d^2/(4 theta)) stays negligible and the
    measured r-exponent is not contaminated by a theta(r) dependence.
    The wide profile (0.96, 1.04) keeps the denominator quadrature
    converged; the tightened domain (diffusion length sqrt(4 theta)
    ~ 0.013 << the margin to the annulus) removes far-field cost.
    """
    t0 = time.time()
    phi = T.make_bump(0.96, 1.04)
    theta0 = 4e-5
    kw = dict(radial_nodes=6400, ell_range=(0.0, 3.2),
              extension_inner=(0.85, 2.5), extension_outer=(0.78, 3.0),
              testfn_nodes=8192)

    def total_variation(c0, r):
        series = F.distortion_experiment(
            G.power_decay_metric(c0, 1.0), r, theta0, phi, **kw)
        return r * series.total_variation

    eps_tvs = [total_variation(2.0 * fac, 30.0) for fac in (1.0, 0.5, 0.25)]
    r_tvs = [eps_tvs[0], total_variation(2.0, 60.0),
             total_variation(2.0, 120.0)]
    eps_exp = float(np.polyfit(np.log([1.0, 0.5, 0.25]),
                               np.log(eps_tvs), 1)[0])
    r_exp = float(np.polyfit(np.log([30.0, 60.0, 120.0]),
                             np.log(r_tvs), 1)[0])
    measured = {"eps_total_variations": eps_tvs,
                "r_total_variations": r_tvs,
                "eps_exponent": eps_exp, "r_exponent": r_exp}
    checks = {"eps_exp=2+-0.3": abs(eps_exp - 2.0) <= 0.3,
              "r_exp=-1+-0.3": abs(r_exp - (-1.0)) <= 0.3}
    return _result("flow.mass-distortion", t0, measured, checks)


# ---------------------------------------------------------------------------
# 10. monotonicity up to a power-law allowance


def check_monotonicity() -> CriterionResult:
    """On scalar-flat Schwarzschild the mass increments over the coupled
    flow satisfy Delta M >= -c r^{n-2-2tau+eta} with the fitted c stable
    under r doubling; the flat field has Delta M = 0 to 1e-8."""
    t0 = time.time()
    phi = T.make_bump(0.92, 1.08)
    iso = G.schwarzschild_isotropic(1.0)
    c_fits = {}
    deltas = {}
    for r in (40.0, 80.0):
        res = F.monotonicity_experiment(
            iso, r, [1.1 * r / 0.9, 2 * r, 5 * r, 10 * r],
            phi, phi, eta=0.5, radial_nodes=768)
        c_fits[r] = res.c_fit
        deltas[r] = list(res.delta_m)
    tiny = 1e-12
    c40, c80 = c_fits[40.0], c_fits[80.0]
    stable = (c80 <= 2.0 * c40 + tiny) and (c40 <= 2.0 * c80 + tiny)

    flat_res = F.monotonicity_experiment(
        G.flat_metric(3), 40.0, [80.0], phi, phi, eta=0.5, radial_nodes=512)
    flat_gap = float(np.max(np.abs(flat_res.delta_m)))

    measured = {"c_fits": c_fits, "delta_m": deltas, "flat_gap": flat_gap}
    checks = {"c_stable_2x": bool(stable),
              "flat_delta<=1e-8": flat_gap <= 1e-8}
    return _result("flow.monotonicity", t0, measured, checks)


# ---------------------------------------------------------------------------
# 11. gluing a near-isometry to an exact one


def check_gluing() -> CriterionResult:
    """Mollification reproduces an exact isometry to 1e-8; the glued map
    equals the fitted isometry bitwise beyond 10r and the input map
    inside r; the metric-deviation-per-input-defect ratio is stable
    within 2x over three decades of defect; the injectivity probe finds
    no witness on 1e5 pairs."""
    t0 = time.time()
    O = special_ortho_group.rvs(3, random_state=2)
    L = C.EuclideanIsometry(O, np.zeros(3))

    prof = C.MollifierProfile.constant(3, 0.3)
    x_probe = C.ball_sample(np.array([2.0, 0.5, -0.3]), 1.0, 64)
    moll_gap = float(np.max(np.abs(
        C.mollify_map(L.as_map(), prof, x_probe) - L(x_probe))))

    r = 1.0
    Fc = C.perturbed_isometry_map(L, 0.05, bump="compact",
                                  bump_radius=0.5 * r)
    res = C.glue_to_isometry(Fc, r)
    pts_in = C.annulus_sample(3, 0.15, r, 200, seed=3)
    inner_gap = float(np.max(np.abs(res.map(pts_in) - Fc(pts_in))))
    pts_out = C.annulus_sample(3, 10.0 * r, 15.0 * r, 200, seed=4)
    outer_bitwise = bool(np.array_equal(res.map(pts_out),
                                        res.isometry(pts_out)))

    ratios = []
    for eps in (1e-2, 1e-3, 1e-4):
        g = C.glue_to_isometry(C.perturbed_isometry_map(L, eps), 1.0)
        ratios.append(g.loss_ratio)
    spread = float(max(ratios) / min(ratios))

    inj = C.injectivity_probe(res.map, (0.2, 12.0), n_pairs=100_000)

    measured = {"mollified_isometry_gap": moll_gap,
                "inner_gap": inner_gap, "loss_ratios": ratios,
                "loss_spread": spread, "min_ratio": inj.min_ratio}
    checks = {"mollified=L@1e-8": moll_gap <= 1e-8,
              "matches_F_inside": inner_gap <= 1e-12,
              "equals_L_bitwise_outside": outer_bitwise,
              "loss_ratio_within_2x": spread <= 2.0,
              "injectivity_1e5_pairs": bool(inj.passed)}
    return _result("charts.gluing", t0, measured, checks)


# ---------------------------------------------------------------------------
# 12. almost-isometry distance distortion bound


def check_delta_isometry_bound() -> CriterionResult:
    """For three synthetic (1+delta)-bilipschitz maps the sampled
    distance distortion stays below 4 delta r over 1e4 point pairs."""
    t0 = time.time()
    O = special_ortho_group.rvs(3, random_state=2)
    L = C.EuclideanIsometry(O, np.zeros(3))
    x0 = np.array([3.0, 1.0, 0.0])
    r = 2.0
    worst_margin = np.inf
    sups = {}
    for delta in (1e-2, 1e-3):
        maps = {
            "perturbed-sin": C.perturbed_isometry_map(L, delta, bump="sin"),
            "perturbed-compact": C.perturbed_isometry_map(
                L, delta, bump="compact", bump_radius=2.0 * r),
            "dilation": C.SmoothMap(
                n=3, func=lambda p, d=delta: (1.0 + d) * p),
        }
        X = C.ball_sample(x0, r, 100)
        Y = C.ball_sample(x0 + 0.01, 0.99 * r, 100)
        d0 = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=2)
        for name, mp in maps.items():
            d1 = np.linalg.norm(mp(X)[:, None, :] - mp(Y)[None, :, :],
                                axis=2)
            sup = float(np.max(np.abs(d1 - d0)))
            sups[f"{name}@{delta:g}"] = sup
            worst_margin = min(worst_margin, 4.0 * delta * r - sup)
    measured = {"sup_distortion": sups, "n_pairs": 100 * 100,
                "worst_margin": worst_margin}
    checks = {"within_4_delta_r": worst_margin >= 0.0}
    return _result("charts.delta-isometry", t0, measured, checks)


# ---------------------------------------------------------------------------
# 13. scalar-curvature finiteness condition along the flow


def check_finiteness() -> CriterionResult:
    """The flowed annulus L^1 scalar statistic is bounded and decreasing
    over dyadic radii for the extended Schwarzschild field, while the
    tau = 0.4 slow-decay field grows and its limit extraction diverges."""
    t0 = time.time()
    eta = 0.5
    sch = F._as_radial(G.schwarzschild_leading(0.5))
    series = []
    for rk in (16.0, 32.0, 64.0):
        scaled = F.extend_metric(G.rescaled_field(sch, rk),
                                 (0.95, 11.5), (0.88, 12.3))
        s_k = (0.9 / 1.1) ** (2.0 - eta) * rk ** (-eta)
        traj = F.rdtf_solve(scaled, s_k, solver="radial", radial_nodes=640,
                            ell_range=(0.0, 12.5), output_times=[s_k])
        vals = F.scalar_l1_annulus(traj.state_at(s_k), 1.0,
                                   [1.1 / 0.9, 2.0, 5.0, 10.0])
        series.append(float(rk * np.max(np.abs(vals))))
    decreasing = bool(np.all(np.diff(series) < 0.0))

    slow = G.power_decay_metric(1.0, 0.4)
    slow_vals = [float(np.max(np.abs(F.scalar_l1_annulus(
        slow, rk, [1.5 * rk, 3.0 * rk])))) * rk for rk in (16.0, 32.0, 64.0)]
    slow_grows = bool(np.all(np.diff(slow_vals) > 0.0))

    phi = T.make_bump(0.95, 1.05)
    radii = [25.0 * 2 ** k for k in range(5)]
    _, converged, _ = M.adm_limit_extract(slow, lambda r: phi, radii,
                                          eta=0.5, tau=0.4)

    measured = {"flowed_series": series, "slow_decay_series": slow_vals,
                "slow_limit_converged": bool(converged)}
    checks = {"bounded_decreasing": decreasing,
              "slow_decay_flagged": slow_grows,
              "limit_extract_divergent": not converged}
    return _result("flow.finiteness", t0, measured, checks)


# ---------------------------------------------------------------------------
# registry


CRITERIA: Dict[str, Callable[[], CriterionResult]] = {
    "mass.identity": check_mass_identity,
    "mass.schwarzschild-oracle": check_schwarzschild_oracle,
    "mass.rotation-invariance": check_rotation_invariance,
    "testfn.evolved-family": check_evolved_testfn,
    "flow.fixed-point-quadratic": check_flow_fixed_point_quadratic,
    "flow.radial-grid-crosscheck": check_radial_grid_crosscheck,
    "flow.gradient-decay": check_gradient_decay,
    "flow.bartnik-identity": check_bartnik_identity,
    "flow.mass-distortion": check_mass_distortion,
    "flow.monotonicity": check_monotonicity,
    "charts.gluing": check_gluing,
    "charts.delta-isometry": check_delta_isometry_bound,
    "flow.finiteness": check_finiteness,
}


def select_criteria(pattern: str = "") -> List[str]:
    """Names matching the anchored regular expression (empty = all)."""
    if not pattern:
        return list(CRITERIA)
    rx = re.compile(pattern)
    names = [name for name in CRITERIA if rx.fullmatch(name)]
    if not names:
        raise ValueError(
            f"filter {pattern!r} matches no criterion; available: "
            + ", ".join(CRITERIA))
    return names


def run_acceptance(pattern: str = "",
                   progress: Optional[Callable[[CriterionResult], None]]
                   = None) -> List[CriterionResult]:
    """Run the selected criteria sequentially and return their results."""
    results = []
    for name in select_criteria(pattern):
        result = CRITERIA[name]()
        results.append(result)
        if progress is not None:
            progress(result)
    return results


def summary_lines(results: List[CriterionResult]) -> List[str]:
    lines = []
    for res in results:
        verdict = "PASS" if res.passed else "FAIL"
        lines.append(f"{verdict} {res.name} ({res.runtime_s:.1f}s)")
        if not res.passed:
            for check, ok in res.checks.items():
                if not ok:
                    lines.append(f"  failed: {check}")
    n_pass = sum(r.passed for r in results)
    lines.append(f"{n_pass}/{len(results)} criteria passed")
    return lines
