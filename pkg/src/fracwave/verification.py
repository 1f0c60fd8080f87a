"""Executable checks of the analysis behind the scheme: the two summation
identities used in the discrete stability proof, coercivity of the
convolution quadrature, non-blowup of the discrete energy, and
convergence-order studies against the closed-form relaxation solution.
"""

from dataclasses import dataclass

import numpy as np

from . import oracle
from .fracquad import ConvolutionWeights, TimeGrid, quadrature_gram
from .timestepper import NewmarkParams, SemidiscreteSystem, run_forward

__all__ = [
    "lemma1_check",
    "lemma2_check",
    "lemma_suite",
    "coercivity_suite",
    "ConvergenceReport",
    "convergence_study",
    "scalar_relaxation_run",
    "stability_sweep",
]


def lemma1_check(w):
    """Telescoping identity: sum of (w_{n+1}-w_{n-1}, smoothed w) equals the
    difference of endpoint-average norms.  Returns (lhs, rhs, gap)."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    if len(w) < 3:
        raise ValueError("need w_0..w_{N+1} with N >= 1")
    N = len(w) - 2
    lhs = sum(
        float(np.dot(w[n + 1] - w[n - 1], (w[n + 1] + 2 * w[n] + w[n - 1]) / 4.0))
        for n in range(1, N + 1)
    )
    rhs = float(np.dot(w[N + 1] + w[N], w[N + 1] + w[N]) / 4.0
                - np.dot(w[1] + w[0], w[1] + w[0]) / 4.0)
    return lhs, rhs, abs(lhs - rhs)


def lemma2_check(w):
    """Lower bound of the summed midpoint products by the squared total sum.
    Returns (lhs, rhs_bound, slack) with slack = lhs - rhs_bound >= 0."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    N = len(w) - 1
    lhs = 0.0
    acc = np.zeros(w.shape[1])
    for n in range(N + 1):
        if n >= 1:
            acc = acc + (w[n] + w[n - 1]) / 2.0
        lhs += float(np.dot(acc, w[n]))
    total = w.sum(axis=0)
    rhs = 0.25 * (float(np.dot(total, total)) - float(np.dot(w[0], w[0])))
    return lhs, rhs, lhs - rhs


def lemma_suite(trials=100, seed=0, max_len=50, max_dim=8):
    """Seeded random sequences through both identities; returns result rows
    (trial, lemma, gap_or_slack, scale)."""
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(trials):
        N = int(rng.integers(1, max_len + 1))
        dim = int(rng.integers(1, max_dim + 1))
        w = rng.standard_normal((N + 2, dim))
        scale = float(np.sum(w * w)) + 1.0
        _, _, gap = lemma1_check(w)
        rows.append((k, 1, gap, scale))
        _, _, slack = lemma2_check(w[: N + 1])
        rows.append((k, 2, slack, scale))
    return rows


def coercivity_suite(J_list=(8, 32, 64), alphas=(0.1, 0.5, 0.9), dt=0.08):
    """Minimum eigenvalue of the symmetric part of the convolution Gram
    matrix for each (J, alpha); all must be nonnegative to roundoff."""
    rows = []
    for J in J_list:
        for a in alphas:
            A = quadrature_gram(a, dt, J)
            lam = np.linalg.eigvalsh(0.5 * (A + A.T))
            rows.append({"J": J, "alpha": a, "min_eig": float(lam[0]),
                         "scale": float(np.abs(A).max())})
    return rows


def scalar_relaxation_run(dt, t_final=4.0, scheme="galerkin", a_coeff=None, b_coeff=None,
                          newmark=NewmarkParams()):
    """Integrate w'' + A d_t^(1/2) w + B w = 0, w(0)=1, w'(0)=0 as a 1-dof
    system; returns (grid, history)."""
    A = oracle.A_COEFF if a_coeff is None else a_coeff
    B = oracle.B_COEFF if b_coeff is None else b_coeff
    n = int(round(t_final / dt))
    grid = TimeGrid(dt, n)
    weights = (ConvolutionWeights.galerkin if scheme == "galerkin" else ConvolutionWeights.l1)(
        0.5, dt, n + 1)
    system = SemidiscreteSystem(np.array([[1.0]]), np.array([[A]]), np.array([[B]]))
    hist = run_forward(system, newmark, weights, grid, np.array([1.0]), np.array([0.0]))
    return grid, hist


def _energy_errors(grid, hist, w_exact, dw_exact, m_half=1.0, k_half=1.0):
    """Error quantities of the global-error bound: max_n |M^(1/2) avg(e'_n)|
    and |K^(1/2) (e_N + e_{N+1})/2|, plus the plain max displacement error."""
    t = grid.times
    ve = np.array([dw_exact(tt) if tt > 0 else 0.0 for tt in t])
    de = np.array([w_exact(tt) for tt in t])
    ev = ve - hist.v[:, 0]
    ed = de - hist.d[:, 0]
    e_hat = 0.5 * (ev[1:] + ev[:-1])
    vel_term = m_half * np.max(np.abs(e_hat))
    disp_term = k_half * abs(0.5 * (ed[-1] + ed[-2]))
    return vel_term, disp_term, np.max(np.abs(ed))


@dataclass
class ConvergenceReport:
    family: str
    dts: list
    energy_errors: list
    velocity_errors: list
    displacement_errors: list
    max_errors: list
    fitted_order: float

    def rows(self):
        for k in range(len(self.dts)):
            yield (self.dts[k], self.energy_errors[k], self.velocity_errors[k],
                   self.displacement_errors[k], self.max_errors[k])


def _fit_order(dts, errors):
    if len(dts) < 3:
        raise ValueError("need at least 3 refinement levels")
    lo = np.log(np.asarray(dts))
    le = np.log(np.asarray(errors))
    return float(np.polyfit(lo, le, 1)[0])


def convergence_study(family, dt_list, t_final=4.0, scheme="galerkin"):
    """Refinement study against the closed-form solution.

    ``family`` is "relaxation" (fractionally damped, alpha = 1/2) or
    "undamped" (b = 0, exact solution cos(sqrt(B) t)).  The fitted order is
    the least-squares slope of the combined energy error.
    """
    errs_e, errs_v, errs_d, errs_m = [], [], [], []
    for dt in dt_list:
        if family == "relaxation":
            grid, hist = scalar_relaxation_run(dt, t_final, scheme=scheme)
            w, dw = oracle.exact_w_half, oracle.exact_dw_half
        elif family == "undamped":
            grid, hist = scalar_relaxation_run(dt, t_final, scheme=scheme, a_coeff=0.0)
            om = np.sqrt(oracle.B_COEFF)
            w = lambda t: np.cos(om * t)
            dw = lambda t: -om * np.sin(om * t)
        else:
            raise ValueError(f"unknown study family {family!r}")
        vel, disp, mx = _energy_errors(grid, hist, w, dw)
        errs_v.append(vel)
        errs_d.append(disp)
        errs_e.append(float(np.hypot(vel, disp)))
        errs_m.append(mx)
    order = _fit_order(dt_list, errs_e)
    return ConvergenceReport(family, list(dt_list), errs_e, errs_v, errs_d, errs_m, order)


def stability_sweep(dt_values, t_final=4.0, a_coeff=None, b_coeff=None):
    """Zero-forcing discrete energy |M^(1/2) v^_N|^2 + |K^(1/2) dt sum vt_n|^2
    against its initial-data bound, per time step size; the ratio must stay
    bounded as dt is refined."""
    A = oracle.A_COEFF if a_coeff is None else a_coeff
    B = oracle.B_COEFF if b_coeff is None else b_coeff
    out = []
    for dt in dt_values:
        grid, hist = scalar_relaxation_run(dt, t_final, a_coeff=A, b_coeff=B)
        v = hist.v[:, 0]
        d0 = hist.d[0, 0]
        vt = np.array([(v[1] + v[0]) / 2.0]
                      + [(v[i + 1] + 2 * v[i] + v[i - 1]) / 4.0 for i in range(1, grid.n_steps)])
        vhat_N = 0.5 * (v[-1] + v[-2])
        energy = vhat_N**2 + B * (dt * vt.sum()) ** 2
        vhat_0 = 0.5 * (v[1] + v[0])
        data = vhat_0**2 + B * d0**2 + B * (dt * vt[0]) ** 2 + 1e-30
        out.append({"dt": dt, "energy": float(energy), "data_bound": float(data),
                    "ratio": float(energy / data)})
    return out
