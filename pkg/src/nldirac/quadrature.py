"""Sphere and principal-value quadrature rules."""
from __future__ import annotations

import numpy as np


def sphere_quadrature(radius: float, order: int = 14):
    """Product rule on the sphere |xi| = radius.

    Gauss-Legendre in cos(theta) with `order` nodes crossed with 2*order
    equispaced azimuthal nodes: exact for spherical harmonics of degree
    <= 2*order - 1 (>= 27 at the default), comparable to a Lebedev rule of
    that order.  Returns (points (m, 3), weights (m,)) with the weights
    carrying the surface measure radius^2 dOmega.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    t, wt = np.polynomial.legendre.leggauss(order)  # cos(theta) nodes
    nphi = 2 * order
    phi = 2.0 * np.pi * np.arange(nphi) / nphi
    st = np.sqrt(1.0 - t ** 2)
    pts = np.empty((order * nphi, 3))
    w = np.empty(order * nphi)
    for i in range(order):
        s = slice(i * nphi, (i + 1) * nphi)
        pts[s, 0] = radius * st[i] * np.cos(phi)
        pts[s, 1] = radius * st[i] * np.sin(phi)
        pts[s, 2] = radius * t[i]
        w[s] = radius ** 2 * wt[i] * (2.0 * np.pi / nphi)
    return pts, w


def pv_energy_nodes(lam: float, mass: float, omega_max: float,
                    n_outer: int = 10, n_inner: int = 8,
                    eps: float | None = None):
    """Nodes/weights for PV int_M^Omega g(w)/(w - lam) dw when lam is inside.

    Returns (nodes, weights, pair_nodes, pair_weights): the outer part is
    plain Gauss-Legendre on [M, lam-eps] and [lam+eps, Omega]; the inner
    part is the symmetrized form PV int = int_0^eps (g(lam+t)-g(lam-t))/t dt,
    listed as pairs (lam+t, lam-t) with weight w/t applied as (+, -).
    If lam is outside [M, omega_max] everything is plain quadrature.
    """
    lam = float(lam)
    if not (mass < lam < omega_max):
        x, w = np.polynomial.legendre.leggauss(2 * n_outer)
        a, b = mass, omega_max
        nodes = 0.5 * (b - a) * x + 0.5 * (a + b)
        wts = 0.5 * (b - a) * w / (nodes - lam)
        return nodes, wts, np.zeros((0, 2)), np.zeros(0)
    if eps is None:
        eps = min(lam - mass, omega_max - lam) * 0.5
    nodes, wts = [], []
    for a, b in ((mass, lam - eps), (lam + eps, omega_max)):
        if b <= a:
            continue
        x, w = np.polynomial.legendre.leggauss(n_outer)
        nd = 0.5 * (b - a) * x + 0.5 * (a + b)
        nodes.append(nd)
        wts.append(0.5 * (b - a) * w / (nd - lam))
    nodes = np.concatenate(nodes)
    wts = np.concatenate(wts)
    x, w = np.polynomial.legendre.leggauss(n_inner)
    t = 0.5 * eps * x + 0.5 * eps  # (0, eps)
    tw = 0.5 * eps * w
    pair_nodes = np.stack([lam + t, lam - t], axis=1)
    pair_weights = tw / t
    return nodes, wts, pair_nodes, pair_weights
