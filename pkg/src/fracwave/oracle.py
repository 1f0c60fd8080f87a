"""Closed-form reference solution of the damped relaxation equation

    w'' + A * d_t^(1/2) w + B * w = 0,   w(0) = 1, w'(0) = 0,

for the special constants A = 4/3^(3/4), B = 1, and the separable 2D field
w(t) sin(pi x) sin(pi y) built from it.  These are the ground truth for all
convergence tests.

The solution splits into an oscillatory residue term and a completely
monotone spectral integral int_0^inf exp(-r t) H(r) dr.  The integral is
evaluated with the substitution r = s^2 (removing the r^(-1/2) endpoint
singularity) by adaptive Gauss-Kronrod quadrature on [0, S] plus an analytic
tail bound; S is chosen so the tail is below 1e-12.
"""

import numpy as np
from scipy.integrate import quad

__all__ = ["ALPHA", "A_COEFF", "B_COEFF", "exact_w_half", "exact_dw_half", "exact_field"]

ALPHA = 0.5
A_COEFF = 4.0 / 3.0 ** 0.75
B_COEFF = 1.0

# zeros of omega(s) = s^2 + A s^(1/2) + 1 on the principal branch
P_PLUS = (-np.sqrt(3.0) + 2.0j * np.sqrt(6.0)) / 3.0
# residue coefficient of the pole pair; evaluates to 1/6 - i/(6 sqrt 2)
_KAPPA = (P_PLUS + A_COEFF * P_PLUS ** -0.5) / (2.0 * P_PLUS + 0.5 * A_COEFF * P_PLUS ** -0.5)

_SPECTRAL_PREF = 8.0 / (3.0 ** 0.75 * np.pi)
_QUAD_OPTS = dict(epsabs=1e-13, epsrel=1e-12, limit=400)


def _spectral_density_s(s):
    # 2 s H(s^2) / pref with H the spectral function of the Laplace inversion
    s2 = s * s
    return 1.0 / ((s2 * s2 + 1.0) ** 2 + 16.0 * s2 / (3.0 * np.sqrt(3.0)))


def _spectral_integral(t, moment=0, cutoff=None):
    """int_0^inf r^moment exp(-r t) H(r) dr via r = s^2.

    Integrand decays like s^(2*moment - 8); the cutoff keeps the dropped
    tail below 1e-12 (moment 0) resp. 1e-9 (moment 1, 2).
    """
    if cutoff is None:
        cutoff = (60.0, 120.0, 400.0)[moment]

    def f(s):
        val = _spectral_density_s(s)
        if moment:
            val = val * s ** (2 * moment)
        return val * np.exp(-s * s * t)

    val, _ = quad(f, 0.0, cutoff, **_QUAD_OPTS)
    return _SPECTRAL_PREF * val


def _residue_term(t, order=0):
    return 2.0 * np.real(_KAPPA * P_PLUS ** order * np.exp(P_PLUS * t))


def exact_w_half(t):
    """Exact relaxation solution w(t); absolute accuracy around 1e-12."""
    t = float(t)
    if t < 0.0:
        raise ValueError(f"need t >= 0, got {t}")
    return _residue_term(t) + _spectral_integral(t)


def exact_dw_half(t):
    """Time derivative w'(t) for t > 0 (differentiation under the integral)."""
    t = float(t)
    if t <= 0.0:
        raise ValueError(f"need t > 0, got {t}")
    return _residue_term(t, order=1) - _spectral_integral(t, moment=1)


def exact_ddw_half(t):
    """Second derivative w''(t) for t > 0, used by residual checks."""
    t = float(t)
    if t <= 0.0:
        raise ValueError(f"need t > 0, got {t}")
    return _residue_term(t, order=2) + _spectral_integral(t, moment=2)


def exact_field(x, y, t):
    """Separable 2D reference field w(t) sin(pi x) sin(pi y) on the unit square."""
    return exact_w_half(t) * np.sin(np.pi * np.asarray(x)) * np.sin(np.pi * np.asarray(y))
