"""Metric tensor fields on Euclidean domains.

A :class:`MetricField` evaluates g_ij(x) pointwise from a closed-form matrix
function, a pair of radial profile functions, or grid samples.  Derivatives
are produced by one configurable finite-difference pathway
(:class:`DerivativeStencil`); radial-profile fields difference their 1D
profiles and apply the exact algebraic chain rule.  On top of the derivative
jet sit Christoffel symbols and the scalar curvature, the latter both in
intrinsic form and split into a linear part plus quadratic remainder.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np


# ---------------------------------------------------------------------------
# domains


@dataclass(frozen=True)
class Domain:
    """Radially symmetric domain descriptor: annulus, ball complement or all
    of R^n.  Bounds are radii; ``None`` means unbounded on that side."""

    r_in: Optional[float] = None
    r_out: Optional[float] = None

    def contains(self, x: np.ndarray) -> bool:
        ell = float(np.linalg.norm(x))
        if self.r_in is not None and ell < self.r_in:
            return False
        if self.r_out is not None and ell > self.r_out:
            return False
        return True

    @staticmethod
    def annulus(r_in: float, r_out: float) -> "Domain":
        return Domain(r_in, r_out)

    @staticmethod
    def ball_complement(r_in: float) -> "Domain":
        return Domain(r_in, None)

    @staticmethod
    def full() -> "Domain":
        return Domain(None, None)


class OutOfDomainError(ValueError):
    pass


class DegenerateMetricError(ValueError):
    pass


# ---------------------------------------------------------------------------
# derivative stencils

# central-difference coefficients for first and second derivatives
_FD1 = {
    2: (np.array([-0.5, 0.0, 0.5]), 1),
    4: (np.array([1.0 / 12, -2.0 / 3, 0.0, 2.0 / 3, -1.0 / 12]), 2),
}
_FD2 = {
    2: (np.array([1.0, -2.0, 1.0]), 1),
    4: (np.array([-1.0 / 12, 4.0 / 3, -2.5, 4.0 / 3, -1.0 / 12]), 2),
}


@dataclass(frozen=True)
class DerivativeStencil:
    """Central-difference stencil of consistency order 2 or 4."""

    order: int = 4
    spacing: float = 1e-3

    def __post_init__(self):
        if self.order not in (2, 4):
            raise ValueError(f"unsupported stencil order {self.order}")
        if self.spacing <= 0:
            raise ValueError("stencil spacing must be positive")

    @property
    def reach(self) -> int:
        return _FD1[self.order][1]


DEFAULT_STENCIL = DerivativeStencil()


# ---------------------------------------------------------------------------
# metric fields


@dataclass(frozen=True)
class MetricField:
    """A Riemannian metric g on a region of R^n.

    kind is one of ``closed-form`` (``matrix_fn(x) -> (n, n)`` array),
    ``radial`` (profiles a, b with g = a dr^2 + b r^2 g_{S^{n-1}}, i.e.
    h_ij = (a-1) x_i x_j / |x|^2 + (b-1)(delta_ij - x_i x_j / |x|^2)), or
    ``grid`` (lattice samples of the n(n+1)/2 independent components).
    """

    n: int
    kind: str
    domain: Domain = dc_field(default_factory=Domain.full)
    matrix_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    profile_a: Optional[Callable[[np.ndarray], np.ndarray]] = None
    profile_b: Optional[Callable[[np.ndarray], np.ndarray]] = None
    grid_values: Optional[np.ndarray] = None  # (N1..Nn, n, n)
    grid_origin: Optional[np.ndarray] = None
    grid_spacing: Optional[float] = None
    name: str = ""

    # -- constructors -------------------------------------------------------

    @staticmethod
    def from_matrix_function(n, fn, domain=None, name=""):
        return MetricField(n=n, kind="closed-form", matrix_fn=fn,
                           domain=domain or Domain.full(), name=name)

    @staticmethod
    def from_radial_profiles(n, a, b, domain=None, name=""):
        return MetricField(n=n, kind="radial", profile_a=a, profile_b=b,
                           domain=domain or Domain.ball_complement(0.0),
                           name=name)

    @staticmethod
    def from_grid(values, origin, spacing, name=""):
        values = np.asarray(values, dtype=float)
        n = values.shape[-1]
        if values.shape[-2] != n or values.ndim != n + 2:
            raise ValueError("grid values must have shape (N1..Nn, n, n)")
        return MetricField(n=n, kind="grid", grid_values=values,
                           grid_origin=np.asarray(origin, dtype=float),
                           grid_spacing=float(spacing),
                           domain=Domain.full(), name=name)

    # -- evaluation ---------------------------------------------------------

    def _radial_matrix(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        ell = np.linalg.norm(x, axis=-1, keepdims=True)
        nv = x / ell
        a = np.asarray(self.profile_a(ell[..., 0]))
        b = np.asarray(self.profile_b(ell[..., 0]))
        proj = nv[..., :, None] * nv[..., None, :]
        eye = np.eye(self.n)
        return (b[..., None, None] * eye
                + (a - b)[..., None, None] * proj)

    def _grid_matrix(self, x: np.ndarray) -> np.ndarray:
        # cubic-spline interpolation of each independent component
        from scipy.interpolate import RegularGridInterpolator
        interp = self._grid_interpolator()
        x = np.asarray(x, dtype=float)
        vals = interp(x.reshape(-1, self.n)).reshape(x.shape[:-1] + (self.n, self.n))
        return vals

    def _grid_interpolator(self):
        if not hasattr(self, "_interp_cache"):
            from scipy.interpolate import RegularGridInterpolator
            axes = [self.grid_origin[k] + self.grid_spacing * np.arange(s)
                    for k, s in enumerate(self.grid_values.shape[:self.n])]
            interp = RegularGridInterpolator(
                axes, self.grid_values, method="cubic",
                bounds_error=True)
            object.__setattr__(self, "_interp_cache", interp)
        return self._interp_cache

    def matrix(self, x: np.ndarray) -> np.ndarray:
        """g_ij at one point or a batch of points (vectorized over leading
        axes).  Domain membership is checked for single points only."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1 and not self.domain.contains(x):
            raise OutOfDomainError(f"point {x} outside field domain")
        if self.kind == "closed-form":
            if x.ndim == 1:
                return np.asarray(self.matrix_fn(x), dtype=float)
            flat = x.reshape(-1, self.n)
            out = np.empty((flat.shape[0], self.n, self.n))
            for i, xi in enumerate(flat):
                out[i] = self.matrix_fn(xi)
            return out.reshape(x.shape[:-1] + (self.n, self.n))
        if self.kind == "radial":
            return self._radial_matrix(x)
        if self.kind == "grid":
            return self._grid_matrix(x)
        raise ValueError(f"unknown field kind {self.kind}")

    def check_positive_definite(self, points: np.ndarray) -> None:
        g = self.matrix(points)
        w = np.linalg.eigvalsh(g)
        if np.min(w) <= 0:
            raise DegenerateMetricError(
                f"metric not positive definite (min eigenvalue {np.min(w)})")


def eval_metric(field: MetricField, x) -> np.ndarray:
    """Symmetric positive-definite matrix g_ij(x)."""
    g = field.matrix(np.asarray(x, dtype=float))
    if g.ndim == 2:
        w = np.linalg.eigvalsh(0.5 * (g + g.T))
        if w[0] <= 0:
            raise DegenerateMetricError(
                f"metric sample at {x} not positive definite")
    return g


# ---------------------------------------------------------------------------
# derivative jets


def _fd_profile_jet(fn, ell, spacing, order):
    """Value, first and second derivative of a scalar radial profile by
    central differences.  ``ell`` may be an array."""
    c1, reach = _FD1[order]
    c2, _ = _FD2[order]
    offs = np.arange(-reach, reach + 1) * spacing
    samples = np.stack([np.asarray(fn(np.asarray(ell) + o), dtype=float)
                        for o in offs])
    val = samples[reach]
    d1 = np.tensordot(c1, samples, axes=(0, 0)) / spacing
    d2 = np.tensordot(c2, samples, axes=(0, 0)) / spacing**2
    return val, d1, d2


def _axis_jet_basis(n: int):
    """Constant tensors for the on-axis radial jet.

    At x = ell e_1 the jet of g = b delta + (a-b) nhat (x) nhat is linear
    in (a, da, d2a, b, db, d2b) with coefficients that are polynomials in
    1/ell of degree <= 2, so it decomposes over 18 constant basis tensors.
    They are recovered from the general chain-rule jet by solving the
    Vandermonde system in 1/ell at ell = 1, 2, 4 (exact: the polynomial
    degree is 2).  Returns (Bg, Bdg, Bd2g) with rows indexed by
    (input, power of 1/ell)."""
    cached = _AXIS_JET_BASES.get(n)
    if cached is not None:
        return cached
    ells = np.array([1.0, 2.0, 4.0])
    V = np.stack([ells ** 0, ells ** -1, ells ** -2], axis=1)
    Vinv = np.linalg.inv(V)
    Bg = np.zeros((18, n * n))
    Bdg = np.zeros((18, n ** 3))
    Bd2g = np.zeros((18, n ** 4))
    for u in range(6):
        vals = [np.array([1.0 if k == u else 0.0]) for k in range(6)]
        gs, dgs, d2gs = [], [], []
        for l in ells:
            nv = np.zeros((1, n))
            nv[0, 0] = 1.0
            g, dg, d2g = _radial_jet_at(np.array([l]), nv, *vals, n)
            gs.append(g[0].ravel())
            dgs.append(dg[0].ravel())
            d2gs.append(d2g[0].ravel())
        for p in range(3):
            Bg[3 * u + p] = Vinv[p] @ np.array(gs)
            Bdg[3 * u + p] = Vinv[p] @ np.array(dgs)
            Bd2g[3 * u + p] = Vinv[p] @ np.array(d2gs)
    _AXIS_JET_BASES[n] = (Bg, Bdg, Bd2g)
    return _AXIS_JET_BASES[n]


_AXIS_JET_BASES: dict = {}


def radial_jet(ell, a, da, d2a, b, db, d2b, n):
    """Exact chain rule for the jet of g = b delta + (a-b) n (x) n along
    the first coordinate axis, batched over radii.

    Returns (g, dg, d2g) with dg[..., k, i, j] = d_k g_ij and
    d2g[..., l, k, i, j] = d_l d_k g_ij, for x = ell e_1.  Evaluated
    through the precomputed constant-tensor basis (one matmul per jet
    order); agrees with the general off-axis path to rounding.
    """
    ell = np.atleast_1d(np.asarray(ell, dtype=float))
    m = ell.shape[0]
    Bg, Bdg, Bd2g = _axis_jet_basis(n)
    inv = 1.0 / ell
    C = np.empty((m, 18))
    for u, vals in enumerate((a, da, d2a, b, db, d2b)):
        vals = np.asarray(vals, dtype=float)
        C[:, 3 * u] = vals
        C[:, 3 * u + 1] = vals * inv
        C[:, 3 * u + 2] = vals * inv * inv
    return ((C @ Bg).reshape(m, n, n),
            (C @ Bdg).reshape(m, n, n, n),
            (C @ Bd2g).reshape(m, n, n, n, n))


def _radial_jet_at(ell, nv, a, da, d2a, b, db, d2b, n):
    """Jet of the radial metric at points with radius ``ell`` and unit
    direction ``nv`` (batched)."""
    ell = np.asarray(ell, dtype=float)
    eye = np.eye(n)
    P = nv[..., :, None] * nv[..., None, :]
    c = a - b
    dc, d2c = da - db, d2a - d2b
    inv_l = 1.0 / ell

    # dn[..., k, i] = d_k n_i = (delta_ki - n_k n_i) / ell
    dn = (eye - P) * inv_l[..., None, None]
    # dP[..., k, i, j] = (delta_ki n_j + delta_kj n_i - 2 n_k P_ij) / ell
    dP = (eye[None, :, :, None] * nv[..., None, None, :]
          + eye[None, :, None, :] * nv[..., None, :, None]
          - 2.0 * nv[..., :, None, None] * P[..., None, :, :])
    dP = dP * inv_l[..., None, None, None]

    g = (b[..., None, None] * eye + c[..., None, None] * P)
    dg = (db[..., None, None, None] * nv[..., :, None, None] * eye
          + dc[..., None, None, None] * nv[..., :, None, None] * P[..., None, :, :]
          + c[..., None, None, None] * dP)

    # d2P[..., l, k, i, j] = d_l dP[k, i, j]
    d2P = (eye[None, None, :, :, None] * dn[..., :, None, None, :]
           + eye[None, None, :, None, :] * dn[..., :, None, :, None]
           - 2.0 * dn[..., :, :, None, None] * P[..., None, None, :, :]
           - 2.0 * nv[..., None, :, None, None] * dP[..., :, None, :, :]) \
        * inv_l[..., None, None, None, None]
    d2P = d2P - dP[..., None, :, :, :] * (nv * inv_l[..., None])[..., :, None, None, None]

    nl = nv[..., :, None, None, None] * nv[..., None, :, None, None]  # n_l n_k
    d2g = (d2b[..., None, None, None, None] * nl * eye
           + db[..., None, None, None, None] * dn[..., :, :, None, None] * eye
           + d2c[..., None, None, None, None] * nl * P[..., None, None, :, :]
           + dc[..., None, None, None, None] * (
               dn[..., :, :, None, None] * P[..., None, None, :, :]
               + nv[..., None, :, None, None] * dP[..., :, None, :, :]
               + nv[..., :, None, None, None] * dP[..., None, :, :, :])
           + c[..., None, None, None, None] * d2P)
    return g, dg, d2g


def metric_jet(field: MetricField, x, stencil: DerivativeStencil = DEFAULT_STENCIL):
    """(g, dg, d2g) at point x with dg[k, i, j] = d_k g_ij and
    d2g[l, k, i, j] = d_l d_k g_ij."""
    x = np.asarray(x, dtype=float)
    n = field.n
    if field.kind == "radial":
        ell = float(np.linalg.norm(x))
        if ell == 0.0:
            raise OutOfDomainError("radial jet undefined at the origin")
        a, da, d2a = _fd_profile_jet(field.profile_a, ell, stencil.spacing,
                                     stencil.order)
        b, db, d2b = _fd_profile_jet(field.profile_b, ell, stencil.spacing,
                                     stencil.order)
        nv = (x / ell)[None, :]
        g, dg, d2g = _radial_jet_at(np.array([ell]), nv,
                                    np.atleast_1d(a), np.atleast_1d(da),
                                    np.atleast_1d(d2a), np.atleast_1d(b),
                                    np.atleast_1d(db), np.atleast_1d(d2b), n)
        return g[0], dg[0], d2g[0]
    if field.kind == "grid":
        return _grid_jet(field, x, stencil)
    return _closed_form_jet(field, x, stencil)


def metric_jet_batch(field: MetricField, pts,
                     stencil: DerivativeStencil = DEFAULT_STENCIL):
    """Jets at a batch of points: (g, dg, d2g) with leading batch axis.

    Radial fields are fully vectorized (one profile-jet evaluation for the
    whole batch plus the algebraic chain rule); other kinds fall back to a
    per-point loop.
    """
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        return metric_jet(field, pts, stencil)
    n = field.n
    if field.kind == "radial":
        ell = np.linalg.norm(pts, axis=-1)
        if np.any(ell == 0.0):
            raise OutOfDomainError("radial jet undefined at the origin")
        a, da, d2a = _fd_profile_jet(field.profile_a, ell, stencil.spacing,
                                     stencil.order)
        b, db, d2b = _fd_profile_jet(field.profile_b, ell, stencil.spacing,
                                     stencil.order)
        nv = pts / ell[:, None]
        return _radial_jet_at(ell, nv, a, da, d2a, b, db, d2b, n)
    m = pts.shape[0]
    g = np.empty((m, n, n))
    dg = np.empty((m, n, n, n))
    d2g = np.empty((m, n, n, n, n))
    for i in range(m):
        g[i], dg[i], d2g[i] = metric_jet(field, pts[i], stencil)
    return g, dg, d2g


def _closed_form_jet(field, x, stencil):
    n = field.n
    h = stencil.spacing
    c1, reach = _FD1[stencil.order]
    c2, _ = _FD2[stencil.order]
    offs = np.arange(-reach, reach + 1)

    g0 = field.matrix(x)
    dg = np.zeros((n, n, n))
    d2g = np.zeros((n, n, n, n))

    # axis-aligned samples, reused for first and pure second derivatives
    axis_samples = np.empty((n, len(offs), n, n))
    for k in range(n):
        for s, o in enumerate(offs):
            if o == 0:
                axis_samples[k, s] = g0
            else:
                xp = x.copy()
                xp[k] += o * h
                axis_samples[k, s] = field.matrix(xp)
        dg[k] = np.tensordot(c1, axis_samples[k], axes=(0, 0)) / h
        d2g[k, k] = np.tensordot(c2, axis_samples[k], axes=(0, 0)) / h**2

    # mixed second derivatives as nested first differences
    for k in range(n):
        for l in range(k + 1, n):
            acc = np.zeros((n, n))
            for sk, ok in enumerate(offs):
                if c1[sk] == 0.0:
                    continue
                for sl, ol in enumerate(offs):
                    if c1[sl] == 0.0:
                        continue
                    xp = x.copy()
                    xp[k] += ok * h
                    xp[l] += ol * h
                    acc += c1[sk] * c1[sl] * field.matrix(xp)
            d2g[k, l] = acc / h**2
            d2g[l, k] = d2g[k, l]
    return g0, dg, d2g


def _grid_jet(field, x, stencil):
    """Jet at the lattice point nearest to x, by array stencils on the
    stored samples."""
    n = field.n
    dx = field.grid_spacing
    idx = np.rint((x - field.grid_origin) / dx).astype(int)
    shape = field.grid_values.shape[:n]
    reach = _FD1[stencil.order][1]
    for k in range(n):
        if idx[k] - reach < 0 or idx[k] + reach >= shape[k]:
            raise OutOfDomainError(
                "insufficient stencil room near grid boundary")
    c1, _ = _FD1[stencil.order]
    c2, _ = _FD2[stencil.order]
    offs = np.arange(-reach, reach + 1)

    def sample(off_vec):
        j = tuple(idx + off_vec)
        return field.grid_values[j]

    g0 = sample(np.zeros(n, dtype=int))
    dg = np.zeros((n, n, n))
    d2g = np.zeros((n, n, n, n))
    for k in range(n):
        line = np.stack([sample(np.eye(n, dtype=int)[k] * o) for o in offs])
        dg[k] = np.tensordot(c1, line, axes=(0, 0)) / dx
        d2g[k, k] = np.tensordot(c2, line, axes=(0, 0)) / dx**2
    for k in range(n):
        for l in range(k + 1, n):
            acc = np.zeros((n, n))
            for sk, ok in enumerate(offs):
                if c1[sk] == 0.0:
                    continue
                for sl, ol in enumerate(offs):
                    if c1[sl] == 0.0:
                        continue
                    ov = np.zeros(n, dtype=int)
                    ov[k], ov[l] = ok, ol
                    acc += c1[sk] * c1[sl] * sample(ov)
            d2g[k, l] = acc / dx**2
            d2g[l, k] = d2g[k, l]
    return g0, dg, d2g


# ---------------------------------------------------------------------------
# curvature


def christoffels_from_jet(g, dg):
    """Gamma[k, i, j] = Gamma^k_ij from the metric and its first
    derivatives; batched over leading axes."""
    ginv = np.linalg.inv(g)
    # sym[m, i, j] = d_i g_mj + d_j g_mi - d_m g_ij
    sym = (np.einsum("...imj->...mij", dg)
           + np.einsum("...jmi->...mij", dg)
           - dg)
    return 0.5 * np.einsum("...km,...mij->...kij", ginv, sym)


def christoffels(field: MetricField, x, stencil: DerivativeStencil = DEFAULT_STENCIL):
    """Christoffel symbols Gamma^k_ij(x), symmetric in (i, j)."""
    g, dg, _ = metric_jet(field, x, stencil)
    return christoffels_from_jet(g, dg)


def _curvature_pieces(g, dg, d2g):
    """Shared contractions; batched over leading axes."""
    ginv = np.linalg.inv(g)
    # d ginv[l, k, m] = -g^{ka} d_l g_ab g^{bm}
    dginv = -np.einsum("...ka,...lab,...bm->...lkm", ginv, dg, ginv)
    Gamma = christoffels_from_jet(g, dg)
    # dGamma[l, k, i, j] = d_l Gamma^k_ij
    sym = (np.einsum("...imj->...mij", dg)
           + np.einsum("...jmi->...mij", dg)
           - dg)
    dsym = (np.einsum("...limj->...lmij", d2g)
            + np.einsum("...ljmi->...lmij", d2g)
            - np.einsum("...lmij->...lmij", d2g))
    dGamma = (0.5 * np.einsum("...lkm,...mij->...lkij", dginv, sym)
              + 0.5 * np.einsum("...km,...lmij->...lkij", ginv, dsym))
    return ginv, dginv, Gamma, dGamma


def scalar_curvature_from_jet(g, dg, d2g):
    """Intrinsic scalar curvature
    R = g^{kl}(d_m Gamma^m_kl - d_l Gamma^m_km) + g^{kl}(Gamma^q_kl
    Gamma^m_qm - Gamma^q_mk Gamma^m_lq); batched."""
    ginv, _, Gamma, dGamma = _curvature_pieces(g, dg, d2g)
    term1 = (np.einsum("...kl,...mmkl->...", ginv, dGamma)
             - np.einsum("...kl,...lmkm->...", ginv, dGamma))
    term2 = (np.einsum("...kl,...qkl,...mqm->...", ginv, Gamma, Gamma)
             - np.einsum("...kl,...qmk,...mlq->...", ginv, Gamma, Gamma))
    return term1 + term2


def scalar_curvature_split_from_jet(g, dg, d2g):
    """(linear part, quadratic remainder) of the expanded scalar curvature:
    R = sum_ij d_j d_i g_ij - d_j^2 g_ii + Q[g]."""
    n = g.shape[-1]
    eye = np.eye(n)
    linear = (np.einsum("...jiij->...", d2g)
              - np.einsum("...jjii->...", d2g))

    ginv = np.linalg.inv(g)
    dginv = -np.einsum("...ka,...lab,...bm->...lkm", ginv, dg, ginv)
    Gamma = christoffels_from_jet(g, dg)

    gg = np.einsum("...kl,...mp->...klmp", ginv, ginv)
    dd = np.einsum("kl,mp->klmp", eye, eye)
    bracket = (np.einsum("...mkpl->...klmp", d2g)
               + np.einsum("...mlpk->...klmp", d2g)
               - np.einsum("...mpkl->...klmp", d2g)
               - np.einsum("...lkpm->...klmp", d2g)
               - np.einsum("...lmpk->...klmp", d2g)
               + np.einsum("...lpkm->...klmp", d2g))
    q_second = 0.5 * np.einsum("...klmp,...klmp->...", gg - dd, bracket)

    # first-order block: (g^{kl}/2)[(d_m g^{mp})(d_k g_lp + d_l g_kp - d_p g_kl)
    #                               - (d_l g^{mp})(d_k g_mp + d_m g_kp - d_p g_km)]
    div_ginv = np.einsum("...mmp->...p", dginv)
    # dg has layout [deriv, i, j]; assemble the combinations by index renames
    comb1 = (np.einsum("...klp->...klp", dg)  # d_k g_lp
             + np.einsum("...lkp->...klp", dg)  # d_l g_kp
             - np.einsum("...pkl->...klp", dg))  # d_p g_kl
    comb2 = (np.einsum("...kmp->...kmp", dg)  # d_k g_mp
             + np.einsum("...mkp->...kmp", dg)  # d_m g_kp
             - np.einsum("...pkm->...kmp", dg))  # d_p g_km
    q_first = 0.5 * (np.einsum("...kl,...p,...klp->...", ginv, div_ginv, comb1)
                     - np.einsum("...kl,...lmp,...kmp->...", ginv, dginv, comb2))

    q_gamma = (np.einsum("...kl,...qkl,...mqm->...", ginv, Gamma, Gamma)
               - np.einsum("...kl,...qmk,...mlq->...", ginv, Gamma, Gamma))
    quadratic = q_second + q_first + q_gamma
    return linear, quadratic


def scalar_curvature(field: MetricField, x,
                     stencil: DerivativeStencil = DEFAULT_STENCIL,
                     method: str = "intrinsic") -> float:
    """Scalar curvature R(g)(x).

    ``method`` selects the intrinsic contraction or the expanded
    (linear + quadratic) form; the two agree within stencil tolerance.
    """
    g, dg, d2g = metric_jet(field, x, stencil)
    if method == "intrinsic":
        return float(scalar_curvature_from_jet(g, dg, d2g))
    if method == "expanded":
        lin, quad = scalar_curvature_split_from_jet(g, dg, d2g)
        return float(lin + quad)
    raise ValueError(f"unknown method {method}")


def scalar_curvature_split(field: MetricField, x,
                           stencil: DerivativeStencil = DEFAULT_STENCIL):
    """(linear part, quadratic part) of the expanded scalar curvature at x."""
    g, dg, d2g = metric_jet(field, x, stencil)
    lin, quad = scalar_curvature_split_from_jet(g, dg, d2g)
    return float(lin), float(quad)


# ---------------------------------------------------------------------------
# standard metric families


def flat_metric(n: int) -> MetricField:
    eye = np.eye(n)
    return MetricField.from_matrix_function(n, lambda x: eye, name="flat")


def schwarzschild_leading(m: float, n: int = 3) -> MetricField:
    """g = (1 + 2m/|x|) delta."""
    return MetricField.from_radial_profiles(
        n, lambda l: 1.0 + 2.0 * m / l, lambda l: 1.0 + 2.0 * m / l,
        domain=Domain.ball_complement(1e-8),
        name=f"schwarzschild-leading(m={m})")


def schwarzschild_isotropic(m: float, n: int = 3) -> MetricField:
    """Scalar-flat g = (1 + m/(2|x|))^4 delta (n = 3)."""
    def conf(l):
        return (1.0 + m / (2.0 * l)) ** 4
    return MetricField.from_radial_profiles(
        n, conf, conf, domain=Domain.ball_complement(1e-8),
        name=f"schwarzschild-isotropic(m={m})")


def conformal_metric(n: int, f: Callable[[np.ndarray], float],
                     name: str = "conformal") -> MetricField:
    """g = e^{2 f(x)} delta for a scalar function f."""
    eye = np.eye(n)

    def fn(x):
        return np.exp(2.0 * f(x)) * eye
    return MetricField.from_matrix_function(n, fn, name=name)


def power_decay_metric(c0: float, tau: float, n: int = 3) -> MetricField:
    """h = c0 |x|^{-tau} delta: slow-decay family."""
    def prof(l):
        return 1.0 + c0 * l ** (-tau)
    return MetricField.from_radial_profiles(
        n, prof, prof, domain=Domain.ball_complement(1e-8),
        name=f"power-decay(c0={c0},tau={tau})")


def rescaled_field(field: MetricField, r: float) -> MetricField:
    """g_r(x) = g(r x): the metric viewed near radius 1 instead of r.

    Radial fields stay radial (profiles composed with ell -> r ell), so
    the rescaled field keeps the fast radial evaluation paths.
    """
    if r <= 0:
        raise ValueError("scale must be positive")
    if field.kind == "radial":
        pa, pb = field.profile_a, field.profile_b

        def sa(l):
            return pa(np.asarray(l, dtype=float) * r)

        def sb(l):
            return pb(np.asarray(l, dtype=float) * r)

        d = field.domain
        dom = Domain(None if d.r_in is None else d.r_in / r,
                     None if d.r_out is None else d.r_out / r)
        return MetricField.from_radial_profiles(
            field.n, sa, sb, domain=dom, name=f"scaled({field.name},{r:g})")

    def fn(x):
        return field.matrix(np.asarray(x, dtype=float) * r)

    return MetricField.from_matrix_function(
        field.n, fn, name=f"scaled({field.name},{r:g})")


def translated_field(field: MetricField, v: np.ndarray) -> MetricField:
    """Pullback under L(x) = x + v, i.e. x -> g(x + v) (the differential of
    a translation is the identity)."""
    v = np.asarray(v, dtype=float)

    def fn(x):
        return field.matrix(np.asarray(x, dtype=float) + v)

    return MetricField.from_matrix_function(
        field.n, fn, name=f"translated({field.name})")


def rotated_field(field: MetricField, O: np.ndarray) -> MetricField:
    """Pullback O^* g, i.e. x -> O^T g(O x) O."""
    O = np.asarray(O, dtype=float)

    def fn(x):
        return O.T @ field.matrix(O @ x) @ O
    return MetricField.from_matrix_function(
        field.n, fn, domain=field.domain, name=f"rotated({field.name})")


# ---------------------------------------------------------------------------
# binary grid-file interchange format


_GRID_MAGIC = 0x43304D47  # "C0MG"


def write_grid_file(path, field_or_values, origin=None, spacing=None) -> None:
    """Write lattice metric samples as a flat binary file.

    Layout: int64 magic, int64 n, n x int64 axis extents, float64
    spacing, int64 component count (= n*n), n x float64 lattice origin,
    then the samples as row-major float64 (extents..., n, n).
    """
    if isinstance(field_or_values, MetricField):
        if field_or_values.kind != "grid":
            raise ValueError("only grid-kind fields can be dumped directly")
        values = field_or_values.grid_values
        origin = field_or_values.grid_origin
        spacing = field_or_values.grid_spacing
    else:
        values = np.asarray(field_or_values, dtype=float)
        if origin is None or spacing is None:
            raise ValueError("raw arrays need explicit origin and spacing")
    n = values.shape[-1]
    with open(path, "wb") as fh:
        np.array([_GRID_MAGIC, n], dtype=np.int64).tofile(fh)
        np.array(values.shape[:n], dtype=np.int64).tofile(fh)
        np.array([spacing], dtype=np.float64).tofile(fh)
        np.array([n * n], dtype=np.int64).tofile(fh)
        np.asarray(origin, dtype=np.float64).tofile(fh)
        np.ascontiguousarray(values, dtype=np.float64).tofile(fh)


def read_grid_file(path) -> MetricField:
    """Read a grid metric written by :func:`write_grid_file`."""
    with open(path, "rb") as fh:
        head = np.fromfile(fh, dtype=np.int64, count=2)
        if len(head) != 2 or head[0] != _GRID_MAGIC:
            raise ValueError(f"{path}: not a grid metric file")
        n = int(head[1])
        extents = np.fromfile(fh, dtype=np.int64, count=n)
        spacing = float(np.fromfile(fh, dtype=np.float64, count=1)[0])
        n_comp = int(np.fromfile(fh, dtype=np.int64, count=1)[0])
        if n_comp != n * n:
            raise ValueError(
                f"{path}: component count {n_comp} != n*n = {n * n}")
        origin = np.fromfile(fh, dtype=np.float64, count=n)
        count = int(np.prod(extents)) * n_comp
        data = np.fromfile(fh, dtype=np.float64, count=count)
        if data.size != count:
            raise ValueError(f"{path}: truncated grid data")
    values = data.reshape(tuple(extents) + (n, n))
    return MetricField.from_grid(values, origin, spacing, name=f"grid({path})")
