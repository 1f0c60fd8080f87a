"""Newmark time integration of M u'' + C (discrete d_t^alpha u) + K u = f
with the fractional damping realized as a velocity convolution.

Both classical algebraic arrangements of the implicit step are provided
(solving for the acceleration with an effective mass, or for the
displacement with an effective stiffness); they are algebraically
equivalent and tested against each other.  The effective matrix is constant
over the run because the lag-zero convolution weight does not depend on the
step, so it is factored once per run.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import issparse
from scipy.sparse.linalg import LinearOperator, cg, splu

from .fracquad import TimeGrid

__all__ = [
    "NewmarkParams",
    "SemidiscreteSystem",
    "StateHistory",
    "make_solver",
    "initial_acceleration",
    "step_effective_mass",
    "step_effective_stiffness",
    "run_forward",
    "three_stage_residual",
]

# above this many unknowns, fall back from a direct factorization to CG
DIRECT_SOLVER_LIMIT = 60_000


@dataclass(frozen=True)
class NewmarkParams:
    """Newmark parameters; (1/4, 1/2) is the second-order unconditionally
    stable choice all stability statements assume."""

    beta: float = 0.25
    gamma: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.beta <= 0.5 and 0.0 <= self.gamma <= 1.0):
            raise ValueError(f"invalid Newmark parameters {self}")

    @property
    def is_trapezoidal(self):
        return abs(self.beta - 0.25) < 1e-14 and abs(self.gamma - 0.5) < 1e-14


@dataclass
class SemidiscreteSystem:
    """Matrices of the second-order system plus optional forcing.

    ``forcing`` may be None (free vibration), an array with one row per time
    node, or a callable (step_index, time) -> load vector.  Physical factors
    (wave speed squared, diffusivity) are expected to be folded into K and C.
    """

    M: object
    C: object
    K: object
    forcing: object = None

    @property
    def n_dof(self):
        return self.M.shape[0]

    def load(self, n, t):
        if self.forcing is None:
            return None
        if callable(self.forcing):
            return np.asarray(self.forcing(n, t), dtype=float)
        return np.asarray(self.forcing[n], dtype=float)


@dataclass
class StateHistory:
    """Displacement/velocity/acceleration trajectories, one row per node.

    The full history is kept on purpose: the damping convolution and the
    adjoint functionals need every past velocity.
    """

    grid: TimeGrid
    d: np.ndarray
    v: np.ndarray
    a: np.ndarray
    filled: int = field(default=0)

    @classmethod
    def allocate(cls, grid, n_dof):
        shape = (grid.n_steps + 1, n_dof)
        return cls(grid, np.zeros(shape), np.zeros(shape), np.zeros(shape))

    def set_state(self, n, d, v, a):
        self.d[n], self.v[n], self.a[n] = d, v, a
        self.filled = max(self.filled, n + 1)

    @property
    def n_dof(self):
        return self.d.shape[1]


def make_solver(A):
    """Reusable solve for an SPD(ish) operator: direct factorization at desk
    scale, Jacobi-preconditioned CG above DIRECT_SOLVER_LIMIT unknowns."""
    n = A.shape[0]
    if not issparse(A):
        from scipy.linalg import lu_factor, lu_solve

        lu = lu_factor(np.asarray(A, dtype=float))
        return lambda rhs: lu_solve(lu, rhs)
    A = A.tocsc()
    if n <= DIRECT_SOLVER_LIMIT:
        lu = splu(A)
        return lambda rhs: lu.solve(rhs)
    dinv = 1.0 / A.diagonal()
    prec = LinearOperator((n, n), matvec=lambda x: dinv * x)

    def solve(rhs):
        x, info = cg(A, rhs, rtol=1e-12, atol=0.0, maxiter=10 * n, M=prec)
        if info != 0:
            res = np.linalg.norm(A @ x - rhs)
            raise RuntimeError(f"CG failed to converge (info={info}, residual {res:.3e})")
        return x

    return solve


def initial_acceleration(system, u0, v0, f0=None):
    """Consistent initial acceleration M a0 = f0 - K u0.

    The damping term carries no contribution at t = 0: the Caputo history
    integral over an empty interval vanishes regardless of v0.
    """
    rhs = -(system.K @ u0)
    if f0 is not None:
        rhs = rhs + f0
    return make_solver(system.M)(rhs)


def _effective_mass(system, params, b0, dt):
    return system.M + (b0 * params.gamma * dt) * system.C + (params.beta * dt * dt) * system.K


def _effective_stiffness(system, params, b0, dt):
    if params.beta <= 0.0:
        raise ValueError("effective stiffness formulation requires beta > 0")
    return (
        system.K
        + (b0 * params.gamma / (params.beta * dt)) * system.C
        + (1.0 / (params.beta * dt * dt)) * system.M
    )


def _predict(params, dt, d_n, v_n, a_n):
    d_tilde = d_n + dt * v_n + (1.0 - 2.0 * params.beta) * dt * dt / 2.0 * a_n
    v_tilde = v_n + (1.0 - params.gamma) * dt * a_n
    return d_tilde, v_tilde


def _history_convolution(weights, history, n_next):
    """sum_{j=1}^{n+1} b_j^{n+1} v_{n+1-j}: the explicit part of the memory."""
    w = weights.step_weights(n_next)
    return np.tensordot(w[1:][::-1], history.v[:n_next], axes=(0, 0))


def step_effective_mass(system, params, weights, history, n, f_next=None, solver=None):
    """Advance step n -> n+1 solving for the acceleration.

    ``history`` must hold states 0..n; returns (d, v, a) at n+1 and records
    them in the history.
    """
    if history.filled < n + 1:
        raise ValueError(f"history filled to {history.filled}, need state at step {n}")
    dt = history.grid.dt
    if solver is None:
        solver = make_solver(_effective_mass(system, params, weights.b0, dt))
    d_tilde, v_tilde = _predict(params, dt, history.d[n], history.v[n], history.a[n])
    rhs = -(system.K @ d_tilde) - system.C @ (weights.b0 * v_tilde + _history_convolution(weights, history, n + 1))
    if f_next is not None:
        rhs = rhs + f_next
    a_next = solver(rhs)
    d_next = d_tilde + params.beta * dt * dt * a_next
    v_next = v_tilde + params.gamma * dt * a_next
    history.set_state(n + 1, d_next, v_next, a_next)
    return d_next, v_next, a_next


def step_effective_stiffness(system, params, weights, history, n, f_next=None, solver=None):
    """Advance step n -> n+1 solving for the displacement; same contract as
    the effective-mass step."""
    if history.filled < n + 1:
        raise ValueError(f"history filled to {history.filled}, need state at step {n}")
    dt = history.grid.dt
    beta, gam = params.beta, params.gamma
    if beta <= 0.0:
        raise ValueError("effective stiffness formulation requires beta > 0")
    if solver is None:
        solver = make_solver(_effective_stiffness(system, params, weights.b0, dt))
    d_tilde, v_tilde = _predict(params, dt, history.d[n], history.v[n], history.a[n])
    conv = _history_convolution(weights, history, n + 1)
    rhs = (
        -(system.C @ (weights.b0 * (v_tilde - gam / (beta * dt) * d_tilde) + conv))
        + system.M @ (d_tilde / (beta * dt * dt))
    )
    if f_next is not None:
        rhs = rhs + f_next
    d_next = solver(rhs)
    v_next = v_tilde + gam / (beta * dt) * (d_next - d_tilde)
    a_next = (d_next - d_tilde) / (beta * dt * dt)
    history.set_state(n + 1, d_next, v_next, a_next)
    return d_next, v_next, a_next


def run_forward(system, params, weights, grid, u0, v0=None, formulation="mass", solver=None):
    """Integrate the full time window and return the complete StateHistory.

    ``solver`` may carry a prefactored effective matrix of the matching
    formulation; it is rebuilt otherwise.
    """
    n_dof = system.n_dof
    u0 = np.asarray(u0, dtype=float)
    v0 = np.zeros(n_dof) if v0 is None else np.asarray(v0, dtype=float)
    if u0.shape != (n_dof,) or v0.shape != (n_dof,):
        raise ValueError("initial data dimension does not match the system")
    if weights.max_lag < grid.n_steps:
        raise ValueError("convolution weights do not cover the time horizon")

    history = StateHistory.allocate(grid, n_dof)
    a0 = initial_acceleration(system, u0, v0, system.load(0, 0.0))
    history.set_state(0, u0, v0, a0)

    if formulation == "mass":
        step, matrix = step_effective_mass, _effective_mass
    elif formulation == "stiffness":
        step, matrix = step_effective_stiffness, _effective_stiffness
    else:
        raise ValueError(f"unknown formulation {formulation!r}")
    if solver is None:
        solver = make_solver(matrix(system, params, weights.b0, grid.dt))

    for n in range(grid.n_steps):
        t_next = (n + 1) * grid.dt
        try:
            step(system, params, weights, history, n, system.load(n + 1, t_next), solver)
        except Exception as exc:
            raise RuntimeError(f"time step {n + 1} failed: {exc}") from exc
    return history


def equation_residuals(history, system, weights):
    """Norm of M a_n + C sum_j b_j^n v_{n-j} + K d_n - f_n for n = 1..N."""
    grid = history.grid
    out = np.zeros(grid.n_steps)
    for n in range(1, grid.n_steps + 1):
        w = weights.step_weights(n)
        conv = np.tensordot(w[::-1], history.v[: n + 1], axes=(0, 0))
        r = system.M @ history.a[n] + system.C @ conv + system.K @ history.d[n]
        f = system.load(n, n * grid.dt)
        if f is not None:
            r = r - f
        out[n - 1] = np.linalg.norm(r)
    return out


def averaged_forcing(f, grid, n_quad=5):
    """Load samples whose consecutive means match the exact cell averages of
    ``f`` (the alternative to plain nodal sampling): the recursion
    f_{n+1} = (2/dt) int_{t_n}^{t_{n+1}} f dt - f_n started at f(0).

    ``f`` maps a time to a load vector (or scalar); returns one row per node.
    """
    xg, wg = np.polynomial.legendre.leggauss(n_quad)
    t = grid.times
    rows = [np.atleast_1d(np.asarray(f(t[0]), dtype=float))]
    for n in range(grid.n_steps):
        mid = 0.5 * (t[n] + t[n + 1])
        half = 0.5 * grid.dt
        cell = sum(w * np.atleast_1d(np.asarray(f(mid + half * x), dtype=float))
                   for x, w in zip(xg, wg)) * half
        rows.append(2.0 / grid.dt * cell - rows[-1])
    return np.array(rows)


def _smoothed(v, i):
    # 1/4-1/2-1/4 velocity average; the first entry is the two-point mean
    return (v[i + 1] + 2.0 * v[i] + v[i - 1]) / 4.0 if i >= 1 else (v[1] + v[0]) / 2.0


def three_stage_residual(history, system, weights, params=NewmarkParams()):
    """Residual norms of the velocity-only three-stage identity, n = 1..N-1.

    The identity is the exact 1/4-1/2-1/4 combination of the discrete
    equation at three consecutive steps; it holds only for the trapezoidal
    Newmark pair and stationary (Galerkin) weights, and its boundary term is
    (b_{n+1} v_0 - b_n v_1)/4.  Requires v_0 = 0, matching the model's zero
    initial velocity, because the step-zero equation carries no damping term.
    """
    if not params.is_trapezoidal:
        raise ValueError("three-stage identity requires gamma=1/2, beta=1/4")
    if weights.scheme != "galerkin":
        raise ValueError("three-stage identity requires stationary (galerkin) weights")
    if np.linalg.norm(history.v[0]) != 0.0:
        raise ValueError("three-stage identity requires a zero initial velocity")

    grid = history.grid
    dt = grid.dt
    N = grid.n_steps
    v, d = history.v, history.d
    b = weights.table
    vt = np.array([_smoothed(v, i) for i in range(N)])  # vt[0..N-1]

    out = np.zeros(max(N - 1, 0))
    k_accum = np.zeros(history.n_dof)
    for n in range(1, N):
        k_accum = k_accum + dt * 0.5 * (vt[n] + vt[n - 1])
        conv = np.tensordot(b[: n + 1][::-1], vt[: n + 1], axes=(0, 0))
        conv = conv + (b[n + 1] * v[0] - b[n] * v[1]) / 4.0
        r = (
            system.M @ ((v[n + 1] - v[n - 1]) / (2.0 * dt))
            + system.C @ conv
            + system.K @ (d[0] + k_accum)
        )
        fm = system.load(n - 1, (n - 1) * dt)
        f0 = system.load(n, n * dt)
        fp = system.load(n + 1, (n + 1) * dt)
        if f0 is not None:
            r = r - (fp + 2.0 * f0 + fm) / 4.0
        out[n - 1] = np.linalg.norm(r)
    return out
