"""Series solution for a homogeneous circular cylinder (TM, ``exp(+i w t)``).

Used as an independent oracle for the FDFD forward solver.
"""

import math

import numpy as np
from scipy.special import hankel2, h2vp, jv, jve, jvp

from .core import EPS0, MU0, BackgroundModel
from .errors import SolverError


def _interior_log_derivative(n, z):
    """``J_n'(z) / J_n(z)`` computed from exponentially scaled Bessels."""
    jm = jve(n - 1, z)
    jp = jve(n + 1, z)
    j0 = jve(n, z)
    return 0.5 * (jm - jp) / j0


def mie_reference(center, radius, eps_r, freq, points, source=None, direction=None, sigma=0.0,
                  background=BackgroundModel(), extra_orders=15, tol=1e-12):
    """Scattered field of a circular cylinder at ``points``.

    Illumination is either a unit line current at ``source`` (incident field
    ``-(omega mu0/4) H0^(2)(k |x - x_s|)``) or a unit plane wave
    ``exp(-i k d.x)`` travelling along ``direction``. Points inside the
    cylinder receive ``e_tot - e_inc``. The series is truncated at order
    ``ceil(|k| a) + extra_orders`` and must satisfy a last-term ratio below
    ``tol``.
    """
    if (source is None) == (direction is None):
        raise ValueError("give exactly one of source / direction")
    omega = 2 * np.pi * freq
    k = background.wavenumber(omega)
    eps_in = EPS0 * eps_r - 1j * sigma / omega
    k1 = omega * np.sqrt(MU0 * eps_in + 0j)
    if abs(k1.imag) > 0:
        k1 = complex(k1.real, -abs(k1.imag))
    a = float(radius)
    pts = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(center, dtype=float)
    rho = np.hypot(pts[:, 0], pts[:, 1])
    phi = np.arctan2(pts[:, 1], pts[:, 0])

    if source is not None:
        s = np.asarray(source, dtype=float) - np.asarray(center, dtype=float)
        rho_s = math.hypot(*s)
        if rho_s <= a:
            raise ValueError("line source must lie outside the cylinder")
        phi_s = math.atan2(s[1], s[0])
        amp = -0.25 * omega * MU0
    else:
        d = np.asarray(direction, dtype=float)
        phi_s = math.atan2(d[1], d[0])
        # phase of the incident wave at the cylinder centre
        amp = np.exp(-1j * k * np.dot(d / np.linalg.norm(d), np.asarray(center, dtype=float)))

    n_max = int(math.ceil(abs(k) * a)) + extra_orders
    orders = np.arange(-n_max, n_max + 1)
    out = np.zeros(rho.shape, dtype=complex)
    outside = rho >= a
    eps_bg = background.permittivity(omega)
    if abs(eps_in - eps_bg) <= 1e-14 * abs(eps_bg):
        return out

    ka, k1a = k * a, k1 * a
    L = np.array([_interior_log_derivative(n, k1a) for n in orders])
    Jn, dJn = jv(orders, ka), jvp(orders, ka)
    Hn, dHn = hankel2(orders, ka), h2vp(orders, ka)
    # scattered / incident modal ratio from continuity of E and dE/drho
    c = (k1 * L * Jn - k * dJn) / (k * dHn - k1 * L * Hn)
    if source is not None:
        weights = hankel2(orders, k * rho_s)   # Graf: H0(k|x-xs|) = sum J_n(k rho) H_n(k rho_s) e^{in(phi-phis)}
    else:
        weights = (-1j) ** orders                # exp(-i k rho cos(phi - phi_d)) = sum (-i)^n J_n e^{in(.)}

    ang = np.exp(1j * np.outer(phi - phi_s, orders))
    if np.any(outside):
        terms = (c * weights)[None, :] * hankel2(orders[None, :], k * rho[outside, None]) * ang[outside]
        _check_convergence(terms, tol)
        out[outside] = amp * terms.sum(axis=1)
    inside = ~outside
    if np.any(inside):
        # interior total field b_n J_n(k1 rho) with b_n = (J_n(ka) + c_n H_n(ka)) / J_n(k1 a)
        ratio = jve(orders[None, :], k1 * rho[inside, None]) / jve(orders, k1a)[None, :]
        scale = np.exp(np.abs((k1 * rho[inside, None]).imag) - abs(k1a.imag))
        tot = ((Jn + c * Hn) * weights)[None, :] * ratio * scale * ang[inside]
        inc = weights[None, :] * jv(orders[None, :], k * rho[inside, None]) * ang[inside]
        _check_convergence(tot, tol)
        out[inside] = amp * (tot.sum(axis=1) - inc.sum(axis=1))
    return out


def _check_convergence(terms, tol):
    total = np.abs(terms.sum(axis=1))
    last = np.maximum(np.abs(terms[:, 0]), np.abs(terms[:, -1]))
    scale = np.maximum(total, np.abs(terms).max(axis=1))
    bad = last > tol * np.where(scale > 0, scale, 1.0)
    if np.any(bad):
        raise SolverError(f"series did not converge at {int(bad.sum())} points", code="NO_CONVERGENCE")
