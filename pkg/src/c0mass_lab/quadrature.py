"""Deterministic quadrature rules: Gauss-Legendre radial rules, product
rules on spheres (exact to high polynomial degree), annulus and ball rules,
and a fixed-order pairwise-tree reduction so sums are bit-identical
regardless of how work is chunked."""

from __future__ import annotations

from dataclasses import dataclass
from math import gamma, pi

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi


def pairwise_sum(values: np.ndarray) -> float:
    """Sum with a fixed pairwise tree (pad to a power of two, halve).

    The reduction order depends only on the length of ``values``, never on
    thread count or chunking, so results are reproducible bit-for-bit.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        return 0.0
    size = 1
    while size < v.size:
        size *= 2
    if size != v.size:
        v = np.concatenate([v, np.zeros(size - v.size)])
    while v.size > 1:
        v = v[0::2] + v[1::2]
    return float(v[0])


def unit_sphere_area(n: int) -> float:
    """omega_{n-1}: Euclidean volume of the unit (n-1)-sphere in R^n."""
    return 2.0 * pi ** (n / 2.0) / gamma(n / 2.0)


def gauss_legendre(a: float, b: float, order: int):
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = leggauss(order)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def sphere_rule(n: int, degree: int = 23):
    """Product rule on the unit sphere S^{n-1}, exact for spherical
    polynomials up to the given degree.

    n = 2: uniform trapezoid on the circle.
    n = 3: Gauss-Legendre in cos(theta) x uniform azimuth.
    n > 3: Gauss-Jacobi in the polar cosine x recursive rule on S^{n-2}.

    Returns (nodes (N, n), weights (N,)); weights are positive and sum to
    the exact sphere area.
    """
    if n < 2:
        raise ValueError("sphere rule needs n >= 2")
    if n == 2:
        m = degree + 1
        ang = 2.0 * pi * np.arange(m) / m
        nodes = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        weights = np.full(m, 2.0 * pi / m)
        return nodes, weights
    # polar direction: integrate f(u) (1-u^2)^{(n-3)/2} du exactly
    q = degree // 2 + 1
    if n == 3:
        u, wu = leggauss(q)
    else:
        alpha = (n - 3) / 2.0
        u, wu = roots_jacobi(q, alpha, alpha)
    sub_nodes, sub_weights = sphere_rule(n - 1, degree)
    s = np.sqrt(np.maximum(0.0, 1.0 - u ** 2))
    nodes = np.empty((q * sub_nodes.shape[0], n))
    weights = np.empty(q * sub_nodes.shape[0])
    m = sub_nodes.shape[0]
    for i in range(q):
        nodes[i * m:(i + 1) * m, 0] = u[i]
        nodes[i * m:(i + 1) * m, 1:] = s[i] * sub_nodes
        weights[i * m:(i + 1) * m] = wu[i] * sub_weights
    return nodes, weights


@dataclass(frozen=True)
class AnnulusQuadrature:
    """Quadrature over the annulus A(0, a*r, b*r) and its boundary spheres.

    Radial rule: Gauss-Legendre of the given order on [a*r, b*r] with the
    r^{n-1} volume factor folded into the weights.  Spherical rule: product
    rule of the given exactness degree.  Boundary rules reuse the spherical
    nodes at the two boundary radii with outward normals -/+ the radial
    direction.
    """

    n: int
    r: float
    a: float = 0.9
    b: float = 1.1
    radial_order: int = 32
    sphere_degree: int = 23
    rotation: tuple = ()

    def _sphere(self):
        nodes, weights = sphere_rule(self.n, self.sphere_degree)
        if self.rotation:
            O = np.asarray(self.rotation, dtype=float).reshape(self.n, self.n)
            nodes = nodes @ O.T
        return nodes, weights

    def volume_nodes(self):
        """(points (N, n), weights (N,), radii (N,)) for the solid annulus."""
        u, wu = gauss_legendre(self.a * self.r, self.b * self.r,
                               self.radial_order)
        snodes, sweights = self._sphere()
        pts = u[:, None, None] * snodes[None, :, :]
        w = (wu * u ** (self.n - 1))[:, None] * sweights[None, :]
        radii = np.broadcast_to(u[:, None], w.shape)
        m = pts.shape[0] * pts.shape[1]
        return pts.reshape(m, self.n), w.reshape(m), radii.reshape(m).copy()

    def boundary_nodes(self):
        """(points, weights, normals) over both boundary spheres; the
        outward normal of the annulus points inward at a*r and outward at
        b*r."""
        snodes, sweights = self._sphere()
        pts, wts, nrm = [], [], []
        for radius, sign in ((self.a * self.r, -1.0), (self.b * self.r, 1.0)):
            pts.append(radius * snodes)
            wts.append(sweights * radius ** (self.n - 1))
            nrm.append(sign * snodes)
        return (np.concatenate(pts), np.concatenate(wts),
                np.concatenate(nrm))

    def integrate_volume(self, values: np.ndarray) -> float:
        _, w, _ = self.volume_nodes()
        return pairwise_sum(values * w)

    def volume(self) -> float:
        _, w, _ = self.volume_nodes()
        return pairwise_sum(w)

    def exact_volume(self) -> float:
        return (unit_sphere_area(self.n) / self.n
                * ((self.b * self.r) ** self.n - (self.a * self.r) ** self.n))


def sphere_quadrature(n: int, r: float, degree: int = 23, rotation=None):
    """(points, weights) on the sphere of radius r, weights including the
    r^{n-1} surface factor."""
    nodes, weights = sphere_rule(n, degree)
    if rotation is not None:
        O = np.asarray(rotation, dtype=float)
        nodes = nodes @ O.T
    return r * nodes, weights * r ** (n - 1)


def ball_rule(n: int, radial_order: int = 16, sphere_degree: int = 11):
    """Product rule on the closed unit ball (for mollifier integrals)."""
    u, wu = gauss_legendre(0.0, 1.0, radial_order)
    snodes, sweights = sphere_rule(n, sphere_degree)
    pts = u[:, None, None] * snodes[None, :, :]
    w = (wu * u ** (n - 1))[:, None] * sweights[None, :]
    m = pts.shape[0] * pts.shape[1]
    return pts.reshape(m, n), w.reshape(m)
