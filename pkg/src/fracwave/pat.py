"""Photoacoustic model problem: domain, observation circle, assembled
operators, and the linear forward map from an initial pressure supported
inside the observation circle to its time trace on the circle.
"""

from dataclasses import dataclass, field

import numpy as np

from . import fem
from .fracquad import ConvolutionWeights, TimeGrid
from .timestepper import NewmarkParams, SemidiscreteSystem, run_forward

__all__ = ["PATModel", "build_pat_model", "ObservationTrace"]


@dataclass(frozen=True)
class ObservationTrace:
    """Boundary time traces: values[k, n] is the k-th Sigma node at step n."""

    values: np.ndarray
    grid: TimeGrid
    sampler: fem.SurfaceSampler

    def __post_init__(self):
        expect = (self.sampler.n_nodes, self.grid.n_steps + 1)
        if self.values.shape != expect:
            raise ValueError(f"trace shape {self.values.shape} does not match {expect}")

    @property
    def n_sigma(self):
        return self.sampler.n_nodes


@dataclass
class PATModel:
    """Everything one reconstruction problem needs: geometry, operators,
    time discretization, and physics coefficients."""

    mesh: fem.StructuredMesh
    sampler: fem.SurfaceSampler
    omega_nodes: np.ndarray
    grid: TimeGrid
    alpha: float
    c_squared: float
    b_damping: float
    newmark: NewmarkParams
    weights: ConvolutionWeights
    system: SemidiscreteSystem          # Dirichlet-eliminated, physics folded in
    mass_raw: object                    # plain assembled matrices, no elimination
    stiffness_raw: object
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_omega(self):
        return len(self.omega_nodes)

    def embed(self, u_omega):
        """Zero-extend an interior-of-Sigma field to the full mesh."""
        full = np.zeros(self.mesh.n_nodes)
        full[self.omega_nodes] = u_omega
        return full

    def restrict(self, full):
        return np.asarray(full)[self.omega_nodes]

    def submatrix_omega(self, A):
        return A.tocsr()[np.ix_(self.omega_nodes, self.omega_nodes)]

    @property
    def mass_omega(self):
        if "M_omega" not in self._cache:
            self._cache["M_omega"] = self.submatrix_omega(self.mass_raw)
        return self._cache["M_omega"]

    @property
    def stiffness_omega(self):
        if "K_omega" not in self._cache:
            self._cache["K_omega"] = self.submatrix_omega(self.stiffness_raw)
        return self._cache["K_omega"]

    def effective_mass_solver(self):
        if "mstar" not in self._cache:
            from .timestepper import _effective_mass, make_solver

            mstar = _effective_mass(self.system, self.newmark, self.weights.b0, self.grid.dt)
            self._cache["mstar"] = make_solver(mstar)
        return self._cache["mstar"]

    def mass_solver(self):
        if "mass" not in self._cache:
            from .timestepper import make_solver

            self._cache["mass"] = make_solver(self.system.M)
        return self._cache["mass"]

    def forward(self, u0_omega, forcing=None, full_initial=None):
        """Run the wave solve from an interior-of-Sigma initial pressure.

        ``full_initial`` bypasses the zero-extension for callers that already
        have a whole-mesh field (data generation on refined meshes).
        """
        system = self.system
        if forcing is not None:
            system = SemidiscreteSystem(system.M, system.C, system.K, forcing)
        u0_full = self.embed(u0_omega) if full_initial is None else np.asarray(full_initial, dtype=float)
        return run_forward(system, self.newmark, self.weights, self.grid, u0_full,
                           solver=self.effective_mass_solver())

    def trace(self, history):
        values = fem.trace_on_sigma(self.mesh, self.sampler, history.d).T
        return ObservationTrace(values, self.grid, self.sampler)

    def forward_trace(self, u0_omega):
        return self.trace(self.forward(u0_omega))


def build_pat_model(
    nx=16,
    ny=None,
    lower=(-1.0, -1.0),
    upper=(1.0, 1.0),
    sigma_radius=0.8,
    n_steps=50,
    t_final=1.0,
    alpha=0.5,
    c_squared=1.0,
    b_damping=0.1,
    scheme="galerkin",
    newmark=NewmarkParams(),
):
    """Assemble the standard square-domain model problem.

    Homogeneous Dirichlet conditions on the outer boundary are eliminated
    symmetrically from all three operators; c^2 scales the stiffness and b
    the damping (the damping operator equals the Laplacian one).
    """
    ny = nx if ny is None else ny
    mesh = fem.rectangle_mesh(lower, upper, nx, ny)
    sampler = fem.circle_sampler(mesh, sigma_radius)
    omega = fem.omega_interior_nodes(mesh, sampler)
    if len(omega) == 0:
        raise ValueError("no parameter nodes inside the observation circle; refine the mesh")

    M = fem.assemble_mass(mesh)
    K = fem.assemble_stiffness(mesh)
    bnodes = mesh.boundary_nodes
    M_e, _ = fem.apply_dirichlet(M, None, bnodes)
    K_e, _ = fem.apply_dirichlet(K, None, bnodes)
    system = SemidiscreteSystem(M_e, b_damping * K_e, c_squared * K_e)

    grid = TimeGrid(t_final / n_steps, n_steps)
    if scheme == "galerkin":
        weights = ConvolutionWeights.galerkin(alpha, grid.dt, n_steps + 1)
    elif scheme == "l1":
        weights = ConvolutionWeights.l1(alpha, grid.dt, n_steps + 1)
    else:
        raise ValueError(f"unknown weight scheme {scheme!r}")

    return PATModel(
        mesh=mesh,
        sampler=sampler,
        omega_nodes=omega,
        grid=grid,
        alpha=float(alpha),
        c_squared=float(c_squared),
        b_damping=float(b_damping),
        newmark=newmark,
        weights=weights,
        system=system,
        mass_raw=M,
        stiffness_raw=K,
    )
