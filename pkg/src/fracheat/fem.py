"""P1 finite elements on the truncation box (-2, 2) for the fractional Laplacian.

Functions are extended by zero outside the box, so the hats at x = +-2 are not
part of the discrete space (their energy is infinite once 2s >= 1).  Matrices
are still indexed over all N+1 mesh nodes; stiffness rows and columns of the
two box endpoints are identically zero and ``Mesh1D.free_ids`` lists the
nodes that carry unknowns.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import AssemblyError, ConfigurationError, DomainError
from .special import FracParams

MIN_ELEMENTS = 8


@dataclass(frozen=True)
class Mesh1D:
    nodes: np.ndarray
    h: float
    interior_ids: np.ndarray
    exterior_ids: np.ndarray
    control_ids: np.ndarray
    free_ids: np.ndarray

    @property
    def num_elements(self) -> int:
        return len(self.nodes) - 1

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def boundary_is_nodal(self) -> bool:
        """True when x = -1 and x = 1 are mesh nodes."""
        return self.num_elements % 4 == 0


def build_mesh(num_elements: int, control_window=(1.7, 1.9)) -> Mesh1D:
    """Uniform partition of (-2, 2) into ``num_elements`` cells.

    When ``num_elements`` is a multiple of 4 the points +-1 are nodes.  Other
    counts (the reference experiments use 210) are accepted.  ``interior_ids``
    holds the nodes whose hat is supported in [-1, 1], which for 4 | N is
    exactly the set -1 < x < 1; the cells straddling +-1 are split exactly
    in the interior/exterior mass integrals.  ``control_window=None`` gives
    a mesh without control nodes.
    """
    n = int(num_elements)
    if n != num_elements or n < MIN_ELEMENTS:
        raise ConfigurationError(f"need an integer element count >= {MIN_ELEMENTS}, got {num_elements!r}")
    # integer numerator keeps +-1 exact when 4 | n
    nodes = -2.0 + 4.0 * np.arange(n + 1) / n
    ids = np.arange(n + 1)
    h = 4.0 / n
    # conforming: the whole hat support [x-h, x+h] lies in [-1, 1]
    inside = (nodes - h >= -1.0 - 1e-12) & (nodes + h <= 1.0 + 1e-12)
    interior = ids[inside]
    exterior = ids[~inside]
    if control_window is None:
        control = ids[:0]
    else:
        a, b = control_window
        control = ids[(nodes > a) & (nodes < b)]
    if control_window is not None and control.size == 0:
        raise ConfigurationError(f"control window {control_window} contains no mesh node at N={n}")
    if np.any(np.abs(nodes[control]) <= 1.0):
        raise ConfigurationError("control nodes must be exterior")
    return Mesh1D(
        nodes=nodes,
        h=h,
        interior_ids=interior,
        exterior_ids=exterior,
        control_ids=control,
        free_ids=ids[1:-1],
    )


@dataclass(frozen=True)
class NonlocalAssembly:
    stiffness: np.ndarray
    mass: np.ndarray
    mass_lumped: np.ndarray
    mass_interior: np.ndarray
    mass_exterior: np.ndarray
    tail: np.ndarray
    tail_weights: np.ndarray
    s: float

    def interior_mass(self, lumped: bool) -> np.ndarray:
        return _lump(self.mass_interior) if lumped else self.mass_interior

    def exterior_mass(self, lumped: bool) -> np.ndarray:
        return _lump(self.mass_exterior) if lumped else self.mass_exterior


def _lump(m: np.ndarray) -> np.ndarray:
    return np.diag(m.sum(axis=1))


# ---------------------------------------------------------------------------
# mass matrices


def _element_mass(lo: float, hi: float, xl: float, h: float) -> np.ndarray:
    """2x2 matrix of int_lo^hi phi_a phi_b for the element starting at xl."""
    if hi <= lo:
        return np.zeros((2, 2))
    pts, wts = leggauss(2)
    x = 0.5 * (hi - lo) * pts + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * wts
    right = (x - xl) / h
    phi = np.vstack([1.0 - right, right])
    return (phi * w) @ phi.T


def assemble_mass(mesh: Mesh1D, lumped: bool = False, region: str = "box") -> np.ndarray:
    """Consistent (or row-sum lumped) P1 mass matrix over ``region``.

    ``region`` is ``"box"`` for (-2, 2), ``"interior"`` for (-1, 1) or
    ``"exterior"`` for (-2, 2) minus (-1, 1).
    """
    if region not in ("box", "interior", "exterior"):
        raise ConfigurationError(f"unknown mass region {region!r}")
    n = mesh.num_nodes
    m = np.zeros((n, n))
    for e in range(mesh.num_elements):
        xl, xr = mesh.nodes[e], mesh.nodes[e + 1]
        if region == "box":
            pieces = [(xl, xr)]
        else:
            lo, hi = max(xl, -1.0), min(xr, 1.0)
            inner = (lo, hi) if hi > lo else None
            if region == "interior":
                pieces = [inner] if inner else []
            else:
                pieces = [(xl, min(xr, -1.0)), (max(xl, 1.0), xr)]
        for lo, hi in pieces:
            m[e:e + 2, e:e + 2] += _element_mass(lo, hi, xl, mesh.h)
    return _lump(m) if lumped else m


# ---------------------------------------------------------------------------
# stiffness


def _same_element(h: float, s: float) -> np.ndarray:
    # phi_a(x) - phi_a(y) = -+(x - y)/h on a single cell
    integral = 2.0 * h ** (3 - 2 * s) / ((2 - 2 * s) * (3 - 2 * s))
    return integral / h**2 * np.array([[1.0, -1.0], [-1.0, 1.0]])


def _touching_elements(h: float, s: float, order: int = 24) -> np.ndarray:
    """Local 3x3 matrix for cells [p-h, p] x [p, p+h], nodes (p-h, p, p+h).

    With xi = p - x and eta = y - p the integrand is homogeneous of degree
    1 - 2s, so a Duffy split reduces it to smooth 1-D integrals.
    """
    t, w = leggauss(order)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w

    def diffs(xi, eta):
        return np.stack([xi, eta - xi, -eta])

    out = np.zeros((3, 3))
    for xi, eta in ((np.ones_like(t), t), (t, np.ones_like(t))):
        d = diffs(xi, eta)
        ker = (xi + eta) ** (-1 - 2 * s)
        out += (d * (w * ker)) @ d.T
    return out * h ** (3 - 2 * s) / (3 - 2 * s) / h**2


def _separated_elements(d: int, h: float, s: float, order: int) -> np.ndarray:
    """Local 4x4 matrix for cells [0, h] and [dh, (d+1)h], d >= 2."""
    g, w = leggauss(order)
    u = 0.5 * (g + 1.0)
    w = 0.5 * w
    x = h * u
    y = h * (d + u)
    X, Y = np.meshgrid(x, y, indexing="ij")
    W = np.outer(w, w) * h * h
    K = (Y - X) ** (-1 - 2 * s) * W
    ux = np.stack([1.0 - u, u])  # cell-1 basis at x
    uy = np.stack([1.0 - u, u])  # cell-2 basis at y
    k_sum_y = K.sum(axis=1)
    k_sum_x = K.sum(axis=0)
    out = np.zeros((4, 4))
    out[:2, :2] = (ux * k_sum_y) @ ux.T
    out[2:, 2:] = (uy * k_sum_x) @ uy.T
    cross = -ux @ K @ uy.T
    out[:2, 2:] = cross
    out[2:, :2] = cross.T
    return out


def _separated_order(d: int) -> int:
    return 10 if d <= 3 else 6


def _tail_matrix(mesh: Mesh1D, s: float, order: int = 10) -> np.ndarray:
    """int_box phi_a phi_b w with w(x) = int_{|y|>2} |x-y|^{-1-2s} dy."""
    n = mesh.num_nodes
    h = mesh.h
    tail = np.zeros((n, n))
    g, wg = leggauss(order)

    def weight(x):
        return ((2.0 - x) ** (-2 * s) + (2.0 + x) ** (-2 * s)) / (2 * s)

    for e in range(mesh.num_elements):
        xl = mesh.nodes[e]
        if e == 0 or e == mesh.num_elements - 1:
            # only the free hat survives on an edge cell: int_0^h (r/h)^2 r^{-2s} dr
            sing = h ** (1 - 2 * s) / ((3 - 2 * s) * 2 * s)
            # far-side weight is smooth on this cell
            x = xl + 0.5 * h * (g + 1.0)
            far = (2.0 + x) ** (-2 * s) if e == mesh.num_elements - 1 else (2.0 - x) ** (-2 * s)
            hat = 1.0 - (x - xl) / h if e == mesh.num_elements - 1 else (x - xl) / h
            smooth = 0.5 * h * np.sum(wg * hat * hat * far) / (2 * s)
            k = e if e == mesh.num_elements - 1 else 1
            tail[k, k] += sing + smooth
            continue
        x = xl + 0.5 * h * (g + 1.0)
        r = (x - xl) / h
        phi = np.vstack([1.0 - r, r])
        tail[e:e + 2, e:e + 2] += (phi * (0.5 * h * wg * weight(x))) @ phi.T
    return tail


def assemble_stiffness(mesh: Mesh1D, params: FracParams) -> np.ndarray:
    """Matrix of F(phi_i, phi_j) = C_s/2 int int (phi_i(x)-phi_i(y))(phi_j(x)-phi_j(y))/|x-y|^{1+2s}.

    The box x box part is assembled pair by pair of cells; the interaction with
    the complement of the box enters through :func:`_tail_matrix`.
    """
    s, h = params.s, mesh.h
    ne = mesh.num_elements
    n = mesh.num_nodes
    box = np.zeros((n, n))

    same = _same_element(h, s)
    e = np.arange(ne)
    idx = np.stack([e, e + 1], axis=1)
    np.add.at(box, (idx[:, :, None], idx[:, None, :]), same)

    touch = 2.0 * _touching_elements(h, s)
    e = np.arange(ne - 1)
    idx = np.stack([e, e + 1, e + 2], axis=1)
    np.add.at(box, (idx[:, :, None], idx[:, None, :]), touch)

    for d in range(2, ne):
        local = 2.0 * _separated_elements(d, h, s, _separated_order(d))
        if not np.all(np.isfinite(local)):
            raise AssemblyError(f"non-finite local matrix for cell pair at distance {d}")
        e = np.arange(ne - d)
        idx = np.stack([e, e + 1, e + d, e + d + 1], axis=1)
        np.add.at(box, (idx[:, :, None], idx[:, None, :]), local)

    stiff = 0.5 * params.c_s * box + params.c_s * _tail_matrix(mesh, s)
    stiff[[0, -1], :] = 0.0
    stiff[:, [0, -1]] = 0.0
    return 0.5 * (stiff + stiff.T)


def assemble(mesh: Mesh1D, params: FracParams) -> NonlocalAssembly:
    """Stiffness plus the box, interior and exterior mass matrices."""
    mass = assemble_mass(mesh)
    tail = params.c_s * _tail_matrix(mesh, params.s)
    return NonlocalAssembly(
        stiffness=assemble_stiffness(mesh, params),
        mass=mass,
        mass_lumped=_lump(mass),
        mass_interior=assemble_mass(mesh, region="interior"),
        mass_exterior=assemble_mass(mesh, region="exterior"),
        tail=tail,
        tail_weights=tail.sum(axis=1),
        s=params.s,
    )


# ---------------------------------------------------------------------------
# nonlocal normal derivative


def _power_antiderivative(r, p):
    r = np.asarray(r, dtype=float)
    if p == 0:
        return np.log(r)
    return r**p / p


def normal_derivative_matrix(mesh: Mesh1D, params: FracParams, points) -> np.ndarray:
    """Matrix D with (D v)_p = N_s u_h(points[p]) for u_h = sum_i v_i phi_i over interior hats.

    N_s u(x) = C_s int (u(x) - u(y)) |x-y|^{-1-2s} dy with u(x) = 0, integrated
    cell by cell in closed form.  Columns are indexed by ``mesh.interior_ids``.
    """
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    if np.any(np.abs(pts) <= 1.0):
        raise DomainError("normal derivative is only defined at exterior points |x| > 1")
    ids = mesh.interior_ids
    lo_node, hi_node = ids[0] - 1, ids[-1] + 1
    support = (mesh.nodes[lo_node], mesh.nodes[hi_node])
    if np.any((pts > support[0]) & (pts < support[1])):
        raise DomainError("evaluation point lies inside the support of the interior hats")
    s, h = params.s, mesh.h
    q1, q2 = -2 * s, 1 - 2 * s
    full = np.zeros((pts.size, mesh.num_nodes))
    for e in range(lo_node, hi_node):
        a, b = mesh.nodes[e], mesh.nodes[e + 1]
        for p, x in enumerate(pts):
            if x > b:
                # r = x - y, y in [a, b]  ->  r in [x-b, x-a]; phi_left = (b-y)/h = (r-(x-b))/h
                r0, r1 = x - b, x - a
                m0 = _power_antiderivative(r1, q1) - _power_antiderivative(r0, q1)
                m1 = _power_antiderivative(r1, q2) - _power_antiderivative(r0, q2)
                left = (m1 - r0 * m0) / h
                right = (r1 * m0 - m1) / h
            else:
                r0, r1 = a - x, b - x
                m0 = _power_antiderivative(r1, q1) - _power_antiderivative(r0, q1)
                m1 = _power_antiderivative(r1, q2) - _power_antiderivative(r0, q2)
                left = (r1 * m0 - m1) / h
                right = (m1 - r0 * m0) / h
            full[p, e] += left
            full[p, e + 1] += right
    return -params.c_s * full[:, ids]


def discrete_normal_derivative(mesh: Mesh1D, params: FracParams, interior_values) -> np.ndarray:
    """N_s u_h sampled at the control nodes; ``interior_values`` lives on ``interior_ids``."""
    v = np.asarray(interior_values, dtype=float)
    if v.shape[0] != mesh.interior_ids.size:
        raise ConfigurationError("interior_values must have one entry per interior node")
    return normal_derivative_matrix(mesh, params, mesh.nodes[mesh.control_ids]) @ v


def write_matrix_csv(path, matrix) -> Path:
    """Dump the nonzero entries of ``matrix`` as ``i,j,value`` triplets."""
    path = Path(path)
    rows, cols = np.nonzero(matrix)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "value"])
        for i, j in zip(rows, cols):
            w.writerow([int(i), int(j), f"{matrix[i, j]:.17g}"])
    return path
