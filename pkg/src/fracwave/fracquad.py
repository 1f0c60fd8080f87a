"""Discrete convolution approximations of the Caputo derivative and the Abel
integral operator, plus the singular-kernel time integrals used on the adjoint
side.

Two weight families are provided. The trapezoid-of-velocities family has a
step-dependent tail weight; the piecewise-constant Galerkin family is a
stationary convolution whose quadratic form is coercive, which is what the
stability analysis of the time stepper relies on.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma

__all__ = [
    "TimeGrid",
    "ConvolutionWeights",
    "l1_weights",
    "galerkin_weights",
    "apply_frac_convolution",
    "quadrature_gram",
    "tilde_weights",
    "hat_weights",
    "tilde_I_alpha",
    "hat_I_alpha",
]


def check_alpha(alpha):
    """Validate a fractional order, returning it as a float in (0, 1)."""
    a = float(alpha)
    if not 0.0 < a < 1.0:
        raise ValueError(f"fractional order must lie in (0, 1), got {alpha}")
    return a


def _check_dt(dt):
    dt = float(dt)
    if dt <= 0.0:
        raise ValueError(f"time step must be positive, got {dt}")
    return dt


@dataclass(frozen=True)
class TimeGrid:
    """Equidistant time grid t_i = i*dt, i = 0..n_steps."""

    dt: float
    n_steps: int

    def __post_init__(self):
        _check_dt(self.dt)
        if self.n_steps < 1:
            raise ValueError(f"need at least one step, got {self.n_steps}")

    @property
    def horizon(self):
        return self.n_steps * self.dt

    @property
    def times(self):
        return self.dt * np.arange(self.n_steps + 1)


def l1_weights(alpha, dt, n):
    """Weights b_0^n .. b_n^n of the trapezoid (L1-type) velocity convolution.

    b_0 = dt^(1-a)/(2 Gamma(2-a)), interior lags j use
    (j+1)^(1-a) - (j-1)^(1-a), and the lag-n tail uses
    n^(1-a) - (n-1)^(1-a); only the tail depends on n.
    """
    a = check_alpha(alpha)
    dt = _check_dt(dt)
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    pre = dt ** (1.0 - a) / (2.0 * gamma(2.0 - a))
    j = np.arange(n + 1, dtype=float)
    w = np.empty(n + 1)
    w[0] = 1.0
    if n >= 2:
        jj = j[1:n]
        w[1:n] = (jj + 1.0) ** (1.0 - a) - (jj - 1.0) ** (1.0 - a)
    w[n] = n ** (1.0 - a) - (n - 1.0) ** (1.0 - a)
    return pre * w


def galerkin_weights(alpha, dt, max_lag):
    """Stationary weights b^_0 .. b^_L of the piecewise-constant Galerkin
    discretization of the Abel operator: second differences of l^(2-a)."""
    a = check_alpha(alpha)
    dt = _check_dt(dt)
    if max_lag < 0:
        raise ValueError(f"need max_lag >= 0, got {max_lag}")
    pre = dt ** (1.0 - a) / gamma(3.0 - a)
    w = np.empty(max_lag + 1)
    w[0] = 1.0
    if max_lag >= 1:
        ll = np.arange(1, max_lag + 1, dtype=float)
        w[1:] = (ll + 1.0) ** (2.0 - a) - 2.0 * ll ** (2.0 - a) + (ll - 1.0) ** (2.0 - a)
    return pre * w


@dataclass(frozen=True)
class ConvolutionWeights:
    """Precomputed convolution weights for one (scheme, alpha, dt, horizon).

    ``scheme`` is "galerkin" or "l1".  The stored table covers lags
    0..max_lag and is immutable; for the L1 scheme the step-dependent tail
    weight is computed on demand by :meth:`step_weights`.
    """

    scheme: str
    alpha: float
    dt: float
    table: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.scheme not in ("galerkin", "l1"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        self.table.setflags(write=False)

    @classmethod
    def galerkin(cls, alpha, dt, max_lag):
        return cls("galerkin", check_alpha(alpha), _check_dt(dt),
                   galerkin_weights(alpha, dt, max_lag))

    @classmethod
    def l1(cls, alpha, dt, max_lag):
        # interior rule, valid for lags 0..max_lag-1 of any step n > lag;
        # the lag-n entry is replaced by the tail rule per step
        a = check_alpha(alpha)
        dt = _check_dt(dt)
        pre = dt ** (1.0 - a) / (2.0 * gamma(2.0 - a))
        w = np.empty(max_lag + 1)
        w[0] = 1.0
        if max_lag >= 1:
            jj = np.arange(1, max_lag + 1, dtype=float)
            w[1:] = (jj + 1.0) ** (1.0 - a) - (jj - 1.0) ** (1.0 - a)
        return cls("l1", a, dt, pre * w)

    @property
    def max_lag(self):
        return len(self.table) - 1

    @property
    def b0(self):
        """Lag-zero weight, step independent in both schemes."""
        return float(self.table[0])

    def _l1_tail(self, n):
        a = self.alpha
        pre = self.dt ** (1.0 - a) / (2.0 * gamma(2.0 - a))
        return pre * (n ** (1.0 - a) - (n - 1.0) ** (1.0 - a))

    def step_weights(self, n):
        """Weights b_0^n .. b_n^n entering the discrete equation at step n."""
        if n < 0:
            raise ValueError("step index must be nonnegative")
        if n > self.max_lag:
            raise ValueError(f"step {n} exceeds precomputed horizon {self.max_lag}")
        if self.scheme == "galerkin" or n == 0:
            return self.table[: n + 1]
        w = np.array(self.table[: n + 1])
        w[n] = self._l1_tail(n)
        return w


def apply_frac_convolution(weights, velocity_history, n):
    """Evaluate sum_j b_j^n v_{n-j} over the stored velocity history.

    ``velocity_history`` holds v_0..v_n (at least) as rows; the result has
    the shape of a single row.
    """
    hist = np.asarray(velocity_history, dtype=float)
    if hist.ndim == 1:
        hist = hist[:, None]
        squeeze = True
    else:
        squeeze = False
    if len(hist) < n + 1:
        raise ValueError(f"history holds {len(hist)} states, need {n + 1}")
    w = weights.step_weights(n)
    out = np.tensordot(w[::-1], hist[: n + 1], axes=(0, 0))
    return out[0] if squeeze and out.shape == (1,) else out


def quadrature_gram(alpha, dt, J):
    """Lower-triangular matrix A with A[n, n-l] = b^_l (Galerkin weights).

    dt * v^T A v is the discrete realization of the Abel bilinear form on
    piecewise constants and is nonnegative for every real v.
    """
    if J < 1:
        raise ValueError(f"need J >= 1, got {J}")
    b = galerkin_weights(alpha, dt, J - 1)
    A = np.zeros((J, J))
    for n in range(J):
        A[n, : n + 1] = b[: n + 1][::-1]
    return A


def _kernel_cell_moments(alpha, lo, hi):
    # int_lo^hi t^-a dt and int_lo^hi t^(1-a) dt, exact (lo >= 0 allowed)
    a = alpha
    i0 = (hi ** (1.0 - a) - lo ** (1.0 - a)) / (1.0 - a)
    i1 = (hi ** (2.0 - a) - lo ** (2.0 - a)) / (2.0 - a)
    return i0, i1


def tilde_weights(alpha, grid):
    """Nodal weights of (1/Gamma(1-a)) int_0^T t^-a u(t) dt for the
    piecewise-linear interpolant of nodal samples u_i; exact integration of
    the singular kernel against each hat function."""
    a = check_alpha(alpha)
    t = grid.times
    dt = grid.dt
    w = np.zeros(len(t))
    i0, i1 = _kernel_cell_moments(a, t[:-1], t[1:])
    # falling part of the left node's hat, rising part of the right node's
    w[:-1] += (t[1:] * i0 - i1) / dt
    w[1:] += (i1 - t[:-1] * i0) / dt
    return w / gamma(1.0 - a)


def hat_weights(alpha, grid):
    """Weights for the kernel (T-s)^-a: the time reflection of tilde_weights."""
    return tilde_weights(alpha, grid)[::-1]


def _apply_time_weights(w, samples, n_nodes):
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 0 or len(samples) == 0:
        raise ValueError("empty sample sequence")
    if len(samples) != n_nodes:
        raise ValueError(f"expected samples at {n_nodes} grid nodes, got {len(samples)}")
    return np.tensordot(w, samples, axes=(0, 0))


def tilde_I_alpha(alpha, grid, samples):
    """Weighted time integral with kernel t^-a of nodal samples (vectors)."""
    return _apply_time_weights(tilde_weights(alpha, grid), samples, grid.n_steps + 1)


def hat_I_alpha(alpha, grid, samples):
    """Weighted time integral with kernel (T-s)^-a of nodal samples."""
    return _apply_time_weights(hat_weights(alpha, grid), samples, grid.n_steps + 1)
