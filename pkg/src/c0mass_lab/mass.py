"""Annulus-based local mass functionals.

Two routes to the same quantity:

* ``local_mass_c2``: the classical surface integral
  int_{S(r)} (d_i g_ij - d_j g_ii) nu^j dS, requiring one derivative of g.
* ``c0_local_mass``: the derivative-free annulus functional -- a volume
  integral over A(0, .9r, 1.1r) weighted by a radial test profile plus a
  boundary integral over the two spheres.  It depends on g only through
  pointwise values of h = g - delta.

``weighted_average_mass`` evaluates the radial average of the surface
integral, which agrees with the annulus functional's unnormalized total
for C^2 fields; that identity is the main cross-check between the routes.
``adm_limit_extract`` drives either route over an increasing radius
sequence and decides convergence by an almost-monotonicity criterion.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import pi
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import MetricField, metric_jet_batch
from .quadrature import (AnnulusQuadrature, gauss_legendre, pairwise_sum,
                         sphere_quadrature, unit_sphere_area)


def paper_normalization(n: int) -> float:
    """The suppressed constant (4 pi (n-1) omega_{n-1})^{-1}, with
    omega_{n-1} the Euclidean volume of the unit (n-1)-sphere.

    Note: applied to the standard n = 3 surface integral 16 pi m this gives
    m / (2 pi), not m; reports therefore always carry the unnormalized
    total as well, and no physical-mass identification is asserted.
    """
    return 1.0 / (4.0 * pi * (n - 1) * unit_sphere_area(n))


@dataclass(frozen=True)
class MassReport:
    """One evaluation of the annulus mass functional at radius r.

    ``unnormalized`` is (raw_volume + raw_boundary) / (r * int phi), i.e.
    the weighted average of the classical surface integral; ``normalized``
    is exactly ``unnormalized * normalization`` as stored.
    """

    raw_volume: float
    raw_boundary: float
    unnormalized: float
    normalized: float
    normalization: float
    r: float
    testfn_id: str = ""


def local_mass_c2(field: MetricField, r: float, sphere_degree: int = 23,
                  rotation: Optional[np.ndarray] = None,
                  stencil=None) -> float:
    """Surface integral int_{S(r)} (d_i g_ij - d_j g_ii) nu^j dS."""
    n = field.n
    pts, w = sphere_quadrature(n, r, sphere_degree, rotation)
    if stencil is None:
        _, dg, _ = metric_jet_batch(field, pts)
    else:
        _, dg, _ = metric_jet_batch(field, pts, stencil)
    nu = pts / r
    div = np.einsum("piij->pj", dg) - np.einsum("pjii->pj", dg)
    return pairwise_sum(np.einsum("pj,pj->p", div, nu) * w)


def _h_values(field: MetricField, pts: np.ndarray) -> np.ndarray:
    return field.matrix(pts) - np.eye(field.n)


def c0_local_mass(field: MetricField, phi, r: float,
                  radial_order: int = 128, sphere_degree: int = 23,
                  rotation: Optional[np.ndarray] = None,
                  normalization: Optional[float] = None,
                  testfn_id: str = "") -> MassReport:
    """Annulus mass functional at radius r with radial test profile phi.

    phi must be callable on (0.9, 1.1) with ``derivative`` and ``integral``
    methods (bump profiles and evolved-family slices both qualify).  Only
    pointwise values of h = g - delta enter; no derivatives of the metric
    are taken.
    """
    n = field.n
    total_phi = phi.integral(0.9, 1.1)
    if abs(total_phi) < 1e-300:
        raise ValueError("test profile integrates to zero on (.9, 1.1)")
    quad = AnnulusQuadrature(n, r, radial_order=radial_order,
                             sphere_degree=sphere_degree,
                             rotation=() if rotation is None
                             else tuple(np.asarray(rotation).ravel()))

    pts, w, rho = quad.volume_nodes()
    h = _h_values(field, pts)
    tr = np.einsum("pii->p", h)
    xhat = pts / rho[:, None]
    quad_form = np.einsum("pi,pij,pj->p", xhat, h, xhat)
    pv = phi(rho / r)
    pd = phi.derivative(rho / r)
    c_tr = (n - 2) / rho * pv + pd / r
    c_quad = pv / rho - pd / r
    raw_volume = pairwise_sum((c_tr * tr + c_quad * quad_form) * w)

    bpts, bw, bnu = quad.boundary_nodes()
    brho = np.linalg.norm(bpts, axis=1)
    bh = _h_values(field, bpts)
    btr = np.einsum("pii->p", bh)
    bxhat = bpts / brho[:, None]
    bphi = phi(brho / r)
    integrand = (np.einsum("pi,pij,pj->p", bxhat, bh, bnu)
                 - btr * np.einsum("pi,pi->p", bxhat, bnu)) * bphi
    raw_boundary = pairwise_sum(integrand * bw)

    unnormalized = (raw_volume + raw_boundary) / (r * total_phi)
    norm = paper_normalization(n) if normalization is None else normalization
    return MassReport(raw_volume=raw_volume, raw_boundary=raw_boundary,
                      unnormalized=unnormalized,
                      normalized=unnormalized * norm,
                      normalization=norm, r=r, testfn_id=testfn_id)


def weighted_average_mass(field: MetricField, phi, r: float,
                          radial_order: int = 128,
                          sphere_degree: int = 23) -> float:
    """Independent evaluation of the radial average
    int_{.9r}^{1.1r} phi(u/r) m_{C^2}(g, u) du / (r int phi)."""
    total_phi = phi.integral(0.9, 1.1)
    if abs(total_phi) < 1e-300:
        raise ValueError("test profile integrates to zero on (.9, 1.1)")
    u, wu = gauss_legendre(0.9 * r, 1.1 * r, radial_order)
    vals = np.array([local_mass_c2(field, ui, sphere_degree) for ui in u])
    return pairwise_sum(vals * phi(u / r) * wu) / (r * total_phi)


def adm_limit_extract(field: MetricField, phi_family: Callable[[float], object],
                      radii: Sequence[float], eta: float,
                      tau: float = 1.0,
                      increment_tol: float = 1e-3,
                      **mass_kwargs):
    """Mass sequence over increasing radii with an almost-monotone
    convergence decision.

    phi_family maps a radius to the radial test profile used at that
    radius.  The correction series b_k = c * r_k^{n-2-2 tau + eta} is the
    admissible-decrease allowance of the almost-monotone criterion
    (a_{k+1} >= a_k - b_k): c is fitted as the smallest value covering
    every observed decrease.  Divergence is decided on the increments
    after subtracting the allowance -- three consecutive corrected
    increments above +increment_tol * |current value| whose trend does not
    decay (a bounded sequence rebounding within its allowance has decaying
    increments and is not flagged).  Returns (reports, converged,
    extrapolated unnormalized limit).
    """
    radii = np.asarray(list(radii), dtype=float)
    if len(radii) < 3:
        raise ValueError("need at least 3 radii")
    if np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be strictly increasing")
    n = field.n
    reports = [c0_local_mass(field, phi_family(r), r, **mass_kwargs)
               for r in radii]
    a = np.array([rep.unnormalized for rep in reports])

    p = n - 2 - 2.0 * tau + eta
    inc = a[1:] - a[:-1]
    scale = radii[:-1] ** p
    c_fit = max(0.0, float(np.max(-inc / scale)))
    corrected = inc - c_fit * scale

    divergent = False
    thresh = increment_tol * (np.abs(a[1:]) + 1e-300)
    for k in range(len(corrected) - 2):
        window = corrected[k:k + 3]
        if np.all(window > thresh[k:k + 3]) and window[2] > 0.5 * window[0]:
            divergent = True
            break

    if divergent:
        return reports, False, float("inf")
    # extrapolate a_k = a_inf + A / r_k on the tail
    tail = min(len(a), 4)
    M = np.stack([np.ones(tail), 1.0 / radii[-tail:]], axis=1)
    coef, *_ = np.linalg.lstsq(M, a[-tail:], rcond=None)
    return reports, True, float(coef[0])
