"""P1 finite elements on a structured triangulated rectangle: mass/stiffness
assembly, symmetric Dirichlet elimination, and the observation-circle
machinery (polygon sampler, line quadrature, trace and surface loads).
"""

from dataclasses import dataclass, field

import numpy as np
from matplotlib.path import Path
from scipy.sparse import coo_matrix, diags

__all__ = [
    "StructuredMesh",
    "rectangle_mesh",
    "assemble_mass",
    "assemble_stiffness",
    "apply_dirichlet",
    "SurfaceSampler",
    "circle_sampler",
    "surface_load",
    "trace_on_sigma",
    "omega_interior_nodes",
    "save_field_csv",
    "save_field_vtk",
]


@dataclass(frozen=True)
class StructuredMesh:
    """Structured triangulation of [x0,x1] x [y0,y1], two triangles per cell.

    Nodes are stored row-major (x fastest); both triangles of each cell are
    positively oriented.
    """

    x0: float
    x1: float
    y0: float
    y1: float
    nx: int
    ny: int
    points: np.ndarray = field(repr=False)
    triangles: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)  # bool mask over nodes

    @property
    def n_nodes(self):
        return len(self.points)

    @property
    def dx(self):
        return (self.x1 - self.x0) / self.nx

    @property
    def dy(self):
        return (self.y1 - self.y0) / self.ny

    @property
    def h(self):
        return max(self.dx, self.dy)

    @property
    def boundary_nodes(self):
        return np.flatnonzero(self.boundary)

    @property
    def interior_nodes(self):
        return np.flatnonzero(~self.boundary)

    def node_index(self, i, j):
        return j * (self.nx + 1) + i


def rectangle_mesh(lower, upper, nx, ny):
    """Build the structured mesh of [lower, upper] with nx x ny cells."""
    x0, y0 = map(float, lower)
    x1, y1 = map(float, upper)
    if not (x1 > x0 and y1 > y0) or nx < 1 or ny < 1:
        raise ValueError("degenerate rectangle or cell counts")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    points = np.column_stack([X.ravel(), Y.ravel()])

    tris = []
    for j in range(ny):
        for i in range(nx):
            n00 = j * (nx + 1) + i
            n10 = n00 + 1
            n01 = n00 + (nx + 1)
            n11 = n01 + 1
            tris.append((n00, n10, n11))
            tris.append((n00, n11, n01))
    triangles = np.asarray(tris, dtype=np.int64)

    boundary = np.zeros(len(points), dtype=bool)
    I, J = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
    on_edge = (I == 0) | (I == nx) | (J == 0) | (J == ny)
    boundary[on_edge.ravel()] = True
    return StructuredMesh(x0, x1, y0, y1, nx, ny, points, triangles, boundary)


def _triangle_geometry(mesh):
    p = mesh.points[mesh.triangles]  # (ntri, 3, 2)
    v1 = p[:, 1] - p[:, 0]
    v2 = p[:, 2] - p[:, 0]
    area = 0.5 * (v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0])
    if np.any(area <= 0):
        raise ValueError("mesh contains a non-positively-oriented or degenerate triangle")
    return p, area


_M_LOCAL = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def assemble_mass(mesh):
    """Exact P1 mass matrix, element blocks (area/12) [[2,1,1],[1,2,1],[1,1,2]]."""
    _, area = _triangle_geometry(mesh)
    tri = mesh.triangles
    blocks = area[:, None, None] * _M_LOCAL[None, :, :]
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_nodes
    return coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_stiffness(mesh):
    """P1 stiffness matrix from constant element gradients."""
    p, area = _triangle_geometry(mesh)
    tri = mesh.triangles
    # grad N_i = perpendicular of opposite edge / (2 area)
    e0 = p[:, 2] - p[:, 1]
    e1 = p[:, 0] - p[:, 2]
    e2 = p[:, 1] - p[:, 0]
    grads = np.stack([e0, e1, e2], axis=1)  # (ntri, 3, 2), rotate below
    grads = np.stack([-grads[:, :, 1], grads[:, :, 0]], axis=2)
    grads /= (2.0 * area)[:, None, None]
    blocks = np.einsum("tid,tjd->tij", grads, grads) * area[:, None, None]
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_nodes
    return coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def apply_dirichlet(matrix, rhs, boundary_nodes):
    """Symmetric elimination: zero rows/columns, unit diagonal, zero rhs
    entries at the given nodes.  Returns (matrix, rhs) as new objects."""
    n = matrix.shape[0]
    mask = np.ones(n)
    mask[boundary_nodes] = 0.0
    keep = diags(mask)
    marker = np.zeros(n)
    marker[boundary_nodes] = 1.0
    out = (keep @ matrix @ keep + diags(marker)).tocsr()
    new_rhs = None
    if rhs is not None:
        new_rhs = np.asarray(rhs, dtype=float).copy()
        new_rhs[boundary_nodes] = 0.0
    return out, new_rhs


@dataclass(frozen=True)
class SurfaceSampler:
    """Closed node polygon approximating the observation circle.

    ``nodes`` are mesh node indices in loop order; ``weights`` are the
    trapezoidal line-quadrature weights (half the two adjacent segment
    lengths), so they sum to the polygon perimeter.
    """

    nodes: np.ndarray
    weights: np.ndarray
    radius: float
    center: tuple

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def perimeter(self):
        return float(self.weights.sum())

    def polygon_points(self, mesh):
        return mesh.points[self.nodes]


def circle_sampler(mesh, radius, center=(0.0, 0.0)):
    """Select the node polygon nearest the circle of given radius.

    Sweeps targets along the circle (spacing ~ the cell size) and keeps, per
    target, the closest interior node within a radial band of half a cell;
    consecutive duplicates are dropped.  Selected nodes never lie on the
    outer boundary.
    """
    cx, cy = center
    pts = mesh.points
    r = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)
    band = 0.499 * mesh.h
    candidates = np.flatnonzero((np.abs(r - radius) <= band) & ~mesh.boundary)
    if len(candidates) == 0:
        raise ValueError("no interior mesh nodes near the observation circle")

    n_seg = max(8, int(np.ceil(2.0 * np.pi * radius / min(mesh.dx, mesh.dy))) * 2)
    thetas = 2.0 * np.pi * np.arange(n_seg) / n_seg
    cand_pts = pts[candidates]
    loop = []
    used = set()
    for th in thetas:
        tgt = np.array([cx + radius * np.cos(th), cy + radius * np.sin(th)])
        k = int(candidates[np.argmin(np.sum((cand_pts - tgt) ** 2, axis=1))])
        if k not in used:
            loop.append(k)
            used.add(k)
    if len(loop) < 3:
        raise ValueError("observation polygon degenerated; refine the mesh")
    nodes = np.asarray(loop, dtype=np.int64)

    poly = pts[nodes]
    seg = np.linalg.norm(np.roll(poly, -1, axis=0) - poly, axis=1)  # seg[k]: k -> k+1
    weights = 0.5 * (seg + np.roll(seg, 1))
    return SurfaceSampler(nodes, weights, float(radius), (float(cx), float(cy)))


def surface_load(mesh, sampler, w_values):
    """Load vector of int_Sigma w N_i dS by nodal (trapezoidal) quadrature;
    support is exactly the Sigma nodes."""
    w = np.asarray(w_values, dtype=float)
    if sampler.n_nodes == 0:
        raise ValueError("empty observation surface")
    if w.shape != (sampler.n_nodes,):
        raise ValueError(f"expected {sampler.n_nodes} surface values, got {w.shape}")
    out = np.zeros(mesh.n_nodes)
    out[sampler.nodes] = sampler.weights * w
    return out


def trace_on_sigma(mesh, sampler, field_vector):
    """Restriction of a nodal field to the Sigma nodes (loop order)."""
    return np.asarray(field_vector)[..., sampler.nodes]


def omega_interior_nodes(mesh, sampler):
    """Mesh nodes strictly inside the Sigma polygon (the reconstruction
    domain); the polygon nodes themselves count as its Dirichlet boundary."""
    poly = Path(sampler.polygon_points(mesh))
    inside = poly.contains_points(mesh.points, radius=-1e-12)
    inside[sampler.nodes] = False
    return np.flatnonzero(inside)


def save_field_csv(mesh, field, path):
    """Write one node per line as ``x,y,value`` in row-major node order."""
    data = np.column_stack([mesh.points, np.asarray(field, dtype=float)])
    with open(path, "w") as fh:
        fh.write("x,y,value\n")
        for x, y, v in data:
            fh.write(f"{x:.17g},{y:.17g},{v:.17g}\n")


def save_field_vtk(mesh, field, path, name="field"):
    """Legacy-VTK ASCII unstructured grid dump for external viewers."""
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{name}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_nodes} double\n")
        for x, y in mesh.points:
            fh.write(f"{x:.17g} {y:.17g} 0\n")
        ntri = len(mesh.triangles)
        fh.write(f"CELLS {ntri} {4 * ntri}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"3 {a} {b} {c}\n")
        fh.write(f"CELL_TYPES {ntri}\n")
        fh.write("5\n" * ntri)
        fh.write(f"POINT_DATA {mesh.n_nodes}\nSCALARS {name} double 1\nLOOKUP_TABLE default\n")
        for v in np.asarray(field, dtype=float):
            fh.write(f"{v:.17g}\n")
