"""Structured hexahedral meshes for the reference beam and plate.

The beam occupies ``omega_a x (0, 1)`` and the plate ``omega_b x (-1, 0)``;
both cross sections are axis-aligned rectangles centered at the origin, so
the first moments and the mixed moment of the beam section vanish exactly.
Beam and plate carry disjoint node sets; the only coupling is the junction
map that ties each beam bottom node to a bilinear interpolation point on
the plate top face at the shrunk location ``r * x'``.

Everything is tensor-product: meshes are defined by their coordinate lines,
elements are axis-aligned boxes, and all quadrature is Gauss 2x2(x2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_G1 = 1.0 / np.sqrt(3.0)
#: tensor-product signs of the 8 hex corners, matching node ordering
_HEX_SIGNS = np.array(
    [
        [-1, -1, -1],
        [1, -1, -1],
        [1, 1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
        [1, -1, 1],
        [1, 1, 1],
        [-1, 1, 1],
    ],
    dtype=float,
)


@dataclass(frozen=True)
class CrossSection:
    """Axis-aligned rectangle (-hx, hx) x (-hy, hy) centered at the origin."""

    hx: float
    hy: float

    def __post_init__(self):
        if self.hx <= 0.0 or self.hy <= 0.0:
            raise ValueError("cross-section half-widths must be positive")

    @property
    def area(self):
        return 4.0 * self.hx * self.hy

    @property
    def polar_moment(self):
        """Exact integral of x1^2 + x2^2 over the rectangle."""
        return 4.0 / 3.0 * self.hx * self.hy * (self.hx**2 + self.hy**2)

    def contains_scaled(self, other: "CrossSection", r: float) -> bool:
        """True when ``r * other`` fits strictly inside this rectangle."""
        return r * other.hx < self.hx and r * other.hy < self.hy


def uniform_lines(half_width, n):
    """Symmetric coordinate lines on (-half_width, half_width), n elements."""
    return np.linspace(-half_width, half_width, n + 1)


def graded_lines(half_width, n_half, ratio):
    """Symmetric lines with geometrically growing widths away from 0.

    ``ratio`` is the width ratio of consecutive elements; 1 reproduces the
    uniform grid.  The origin is always a grid line.
    """
    if n_half < 1:
        raise ValueError("need at least one element per half-width")
    if ratio <= 0.0:
        raise ValueError("grading ratio must be positive")
    widths = ratio ** np.arange(n_half, dtype=float)
    widths = widths / widths.sum() * half_width
    pos = np.concatenate([[0.0], np.cumsum(widths)])
    pos[-1] = half_width
    return np.concatenate([-pos[::-1][:-1], pos])


def interval_lines(a, b, n):
    return np.linspace(a, b, n + 1)


def _gauss_points_1d(lines):
    """Per-interval 2-point Gauss abscissae and weights for given lines."""
    lo = lines[:-1]
    hi = lines[1:]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    pts = np.stack([mid - _G1 * half, mid + _G1 * half], axis=1)
    wts = np.stack([half, half], axis=1)
    return pts, wts


def quad_shape(gx, gy):
    """Bilinear shape values at local points, node order (00, 10, 11, 01)."""
    gx = np.asarray(gx)
    gy = np.asarray(gy)
    return 0.25 * np.stack(
        [
            (1 - gx) * (1 - gy),
            (1 + gx) * (1 - gy),
            (1 + gx) * (1 + gy),
            (1 - gx) * (1 + gy),
        ],
        axis=1,
    )


#: local 2x2 Gauss coordinates of a quad, x fastest
_QUAD_GX = np.array([-_G1, _G1, -_G1, _G1])
_QUAD_GY = np.array([-_G1, -_G1, _G1, _G1])
QUAD_SHAPE_Q = quad_shape(_QUAD_GX, _QUAD_GY)  # (4 gauss, 4 nodes)


class Grid2D:
    """Tensor-product quadrilateral grid with Gauss 2x2 quadrature."""

    def __init__(self, x_lines, y_lines):
        self.x_lines = np.asarray(x_lines, dtype=float)
        self.y_lines = np.asarray(y_lines, dtype=float)
        self.nx = len(self.x_lines) - 1
        self.ny = len(self.y_lines) - 1
        # node id = ix + (nx + 1) * iy  (x fastest)
        Y, X = np.meshgrid(self.y_lines, self.x_lines, indexing="ij")
        self.nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
        self.n_nodes = len(self.nodes)

        iy, ix = np.meshgrid(np.arange(self.ny), np.arange(self.nx), indexing="ij")
        ix = ix.ravel()
        iy = iy.ravel()
        n0 = ix + (self.nx + 1) * iy
        self.quads = np.stack(
            [n0, n0 + 1, n0 + 1 + (self.nx + 1), n0 + (self.nx + 1)], axis=1
        )
        self.cell_hx = self.x_lines[ix + 1] - self.x_lines[ix]
        self.cell_hy = self.y_lines[iy + 1] - self.y_lines[iy]
        cx = 0.5 * (self.x_lines[ix + 1] + self.x_lines[ix])
        cy = 0.5 * (self.y_lines[iy + 1] + self.y_lines[iy])
        self.qpoints = np.stack(
            [
                cx[:, None] + 0.5 * self.cell_hx[:, None] * _QUAD_GX[None, :],
                cy[:, None] + 0.5 * self.cell_hy[:, None] * _QUAD_GY[None, :],
            ],
            axis=2,
        )  # (C, 4, 2)
        self.qweights = 0.25 * (self.cell_hx * self.cell_hy)[:, None] * np.ones(4)
        self.shape_q = QUAD_SHAPE_Q

    def node_id(self, ix, iy):
        return ix + (self.nx + 1) * iy

    @property
    def area(self):
        return float(self.qweights.sum())

    def locate(self, pts):
        """Containing cell corners and bilinear weights for interior points.

        Returns ``(quads, weights)``: the 4 corner node ids of the cell
        containing each point and the bilinear interpolation weights there
        (nonnegative, summing to 1).
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if (
            np.any(pts[:, 0] < self.x_lines[0] - 1e-12)
            or np.any(pts[:, 0] > self.x_lines[-1] + 1e-12)
            or np.any(pts[:, 1] < self.y_lines[0] - 1e-12)
            or np.any(pts[:, 1] > self.y_lines[-1] + 1e-12)
        ):
            raise ValueError("point outside the grid")
        ix = np.clip(np.searchsorted(self.x_lines, pts[:, 0]) - 1, 0, self.nx - 1)
        iy = np.clip(np.searchsorted(self.y_lines, pts[:, 1]) - 1, 0, self.ny - 1)
        x0 = self.x_lines[ix]
        y0 = self.y_lines[iy]
        s = np.clip((pts[:, 0] - x0) / (self.x_lines[ix + 1] - x0), 0.0, 1.0)
        t = np.clip((pts[:, 1] - y0) / (self.y_lines[iy + 1] - y0), 0.0, 1.0)
        n0 = ix + (self.nx + 1) * iy
        quads = np.stack(
            [n0, n0 + 1, n0 + 1 + self.nx + 1, n0 + self.nx + 1], axis=1
        )
        weights = np.stack(
            [(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t], axis=1
        )
        return quads, weights

    def interpolate(self, nodal, pts):
        """Evaluate the bilinear interpolant of nodal values at points."""
        quads, weights = self.locate(pts)
        nodal = np.asarray(nodal)
        return np.einsum("pk,pk...->p...", weights, nodal[quads])

    def boundary_edge_quadrature(self):
        """Gauss points and weights along the four boundary sides."""
        pts = []
        wts = []
        xq, xw = _gauss_points_1d(self.x_lines)
        yq, yw = _gauss_points_1d(self.y_lines)
        for y in (self.y_lines[0], self.y_lines[-1]):
            pts.append(np.stack([xq.ravel(), np.full(xq.size, y)], axis=1))
            wts.append(xw.ravel())
        for x in (self.x_lines[0], self.x_lines[-1]):
            pts.append(np.stack([np.full(yq.size, x), yq.ravel()], axis=1))
            wts.append(yw.ravel())
        return np.concatenate(pts), np.concatenate(wts)


def hex_shape(local):
    """Trilinear shape values at local points (n, 3) in [-1, 1]^3."""
    local = np.atleast_2d(local)
    return 0.125 * np.prod(1.0 + local[:, None, :] * _HEX_SIGNS[None, :, :], axis=2)


def hex_shape_ref_gradients(local):
    """Reference gradients dN/dxi at local points: (n, 8, 3)."""
    local = np.atleast_2d(local)
    n = len(local)
    grads = np.empty((n, 8, 3))
    for d in range(3):
        term = 0.125 * np.ones((n, 8)) * _HEX_SIGNS[None, :, d]
        for o in range(3):
            if o != d:
                term = term * (1.0 + local[:, None, o] * _HEX_SIGNS[None, :, o])
        grads[:, :, d] = term
    return grads


#: the 8 tensor-product Gauss points of the reference hex
HEX_GAUSS = _HEX_SIGNS * _G1
HEX_SHAPE_Q = hex_shape(HEX_GAUSS)  # (8 gauss, 8 nodes)
HEX_GRAD_Q = hex_shape_ref_gradients(HEX_GAUSS)  # (8 gauss, 8 nodes, 3)


@dataclass
class FaceSet:
    """Tagged boundary faces with their surface Gauss rule.

    ``quads`` holds the 4 corner node ids per face (ordering consistent
    with :func:`quad_shape`), ``points``/``weights`` the 2x2 Gauss rule on
    each face, and ``shape`` the bilinear shape values at those points.
    """

    tag: str
    quads: np.ndarray  # (F, 4)
    points: np.ndarray  # (F, 4, 3)
    weights: np.ndarray  # (F, 4)
    shape: np.ndarray  # (4 gauss, 4 nodes)

    @property
    def area(self):
        return float(self.weights.sum())


class MeshPart:
    """Tensor-product hexahedral mesh of a box, with tagged boundary."""

    def __init__(self, x_lines, y_lines, z_lines):
        self.x_lines = np.asarray(x_lines, dtype=float)
        self.y_lines = np.asarray(y_lines, dtype=float)
        self.z_lines = np.asarray(z_lines, dtype=float)
        self.nx = len(self.x_lines) - 1
        self.ny = len(self.y_lines) - 1
        self.nz = len(self.z_lines) - 1
        self.grid = Grid2D(self.x_lines, self.y_lines)
        nxy = (self.nx + 1) * (self.ny + 1)
        self.n_nodes = nxy * (self.nz + 1)
        self.n_elems = self.nx * self.ny * self.nz

        # node id = ix + (nx+1) * (iy + (ny+1) * iz): x fastest, z slowest
        Z, Y, X = np.meshgrid(self.z_lines, self.y_lines, self.x_lines, indexing="ij")
        self.nodes = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

        iz, iy, ix = np.meshgrid(
            np.arange(self.nz), np.arange(self.ny), np.arange(self.nx), indexing="ij"
        )
        ix = ix.ravel()
        iy = iy.ravel()
        iz = iz.ravel()
        n0 = self.node_id(ix, iy, iz)
        dx, dy, dz = 1, self.nx + 1, nxy
        self.hexes = np.stack(
            [
                n0,
                n0 + dx,
                n0 + dx + dy,
                n0 + dy,
                n0 + dz,
                n0 + dx + dz,
                n0 + dx + dy + dz,
                n0 + dy + dz,
            ],
            axis=1,
        )
        self.elem_sizes = np.stack(
            [
                self.x_lines[ix + 1] - self.x_lines[ix],
                self.y_lines[iy + 1] - self.y_lines[iy],
                self.z_lines[iz + 1] - self.z_lines[iz],
            ],
            axis=1,
        )
        centers = np.stack(
            [
                0.5 * (self.x_lines[ix + 1] + self.x_lines[ix]),
                0.5 * (self.y_lines[iy + 1] + self.y_lines[iy]),
                0.5 * (self.z_lines[iz + 1] + self.z_lines[iz]),
            ],
            axis=1,
        )
        self.qpoints = (
            centers[:, None, :] + 0.5 * self.elem_sizes[:, None, :] * HEX_GAUSS[None]
        )
        detj = np.prod(self.elem_sizes, axis=1) / 8.0
        self.qweights = np.repeat(detj[:, None], 8, axis=1)
        self.face_sets: dict[str, FaceSet] = {}

    def node_id(self, ix, iy, iz):
        return ix + (self.nx + 1) * (iy + (self.ny + 1) * iz)

    @property
    def volume(self):
        return float(self.qweights.sum())

    def level_node_ids(self, iz):
        """Node ids of the full horizontal slice at z-line ``iz``."""
        nxy = (self.nx + 1) * (self.ny + 1)
        return np.arange(nxy) + nxy * iz

    def _face_z(self, tag, iz):
        g = self.grid
        quads = g.quads + (self.nx + 1) * (self.ny + 1) * iz
        pts = np.concatenate(
            [g.qpoints, np.full((g.qpoints.shape[0], 4, 1), self.z_lines[iz])], axis=2
        )
        return FaceSet(tag, quads, pts, g.qweights.copy(), g.shape_q)

    def _faces_lateral(self, tag):
        quads = []
        pts = []
        wts = []
        zq, _ = _gauss_points_1d(self.z_lines)
        gl = np.array([-_G1, _G1])

        def add_strip(axis, fixed_idx, fixed_val, lines):
            # faces on the plane {x_axis = fixed_val}, spanning lines x z
            for j in range(len(lines) - 1):
                for k in range(self.nz):
                    if axis == 0:
                        ids = [
                            self.node_id(fixed_idx, j, k),
                            self.node_id(fixed_idx, j + 1, k),
                            self.node_id(fixed_idx, j + 1, k + 1),
                            self.node_id(fixed_idx, j, k + 1),
                        ]
                    else:
                        ids = [
                            self.node_id(j, fixed_idx, k),
                            self.node_id(j + 1, fixed_idx, k),
                            self.node_id(j + 1, fixed_idx, k + 1),
                            self.node_id(j, fixed_idx, k + 1),
                        ]
                    quads.append(ids)
                    h_u = lines[j + 1] - lines[j]
                    u = 0.5 * (lines[j + 1] + lines[j]) + 0.5 * h_u * gl
                    uu = np.array([u[0], u[1], u[0], u[1]])
                    zz = np.array([zq[k, 0], zq[k, 0], zq[k, 1], zq[k, 1]])
                    if axis == 0:
                        p = np.stack([np.full(4, fixed_val), uu, zz], axis=1)
                    else:
                        p = np.stack([uu, np.full(4, fixed_val), zz], axis=1)
                    pts.append(p)
                    w = 0.25 * h_u * (self.z_lines[k + 1] - self.z_lines[k])
                    wts.append(np.full(4, w))

        add_strip(0, 0, self.x_lines[0], self.y_lines)
        add_strip(0, self.nx, self.x_lines[-1], self.y_lines)
        add_strip(1, 0, self.y_lines[0], self.x_lines)
        add_strip(1, self.ny, self.y_lines[-1], self.x_lines)

        return FaceSet(
            tag,
            np.asarray(quads, dtype=int),
            np.asarray(pts),
            np.asarray(wts),
            QUAD_SHAPE_Q,
        )


def build_beam_mesh(nx, ny, nz, omega_a: CrossSection) -> MeshPart:
    """Q1 hex mesh of ``omega_a x (0, 1)`` with tags ``beam_top`` (clamped),
    ``beam_bottom`` (junction trace) and ``beam_lateral``."""
    if min(nx, ny, nz) < 1:
        raise ValueError("beam mesh needs at least one element per direction")
    part = MeshPart(
        uniform_lines(omega_a.hx, nx),
        uniform_lines(omega_a.hy, ny),
        interval_lines(0.0, 1.0, nz),
    )
    part.face_sets["beam_top"] = part._face_z("beam_top", part.nz)
    part.face_sets["beam_bottom"] = part._face_z("beam_bottom", 0)
    part.face_sets["beam_lateral"] = part._faces_lateral("beam_lateral")
    return part


def build_plate_mesh(
    nx_half,
    nz,
    omega_b: CrossSection,
    grading_ratio=1.0,
    r_min=None,
    patch_section: CrossSection | None = None,
) -> MeshPart:
    """Graded Q1 hex mesh of ``omega_b x (-1, 0)``.

    ``nx_half`` elements per half-width in each horizontal direction, with
    widths growing geometrically away from the origin by ``grading_ratio``.
    When ``r_min`` (the smallest scheduled junction radius) and
    ``patch_section`` are given, the two element widths next to the origin
    must not exceed the patch half-extent ``r_min * half_width``, so the
    shrunk patch is always resolved by at least two elements across.
    """
    x_lines = graded_lines(omega_b.hx, nx_half, grading_ratio)
    y_lines = graded_lines(omega_b.hy, nx_half, grading_ratio)
    if r_min is not None:
        if patch_section is None:
            raise ValueError("r_min check needs the beam cross section")
        i0 = nx_half  # index of the origin line
        wx = np.diff(x_lines)[i0 : i0 + 2]
        wy = np.diff(y_lines)[i0 : i0 + 2]
        if np.any(wx > r_min * patch_section.hx) or np.any(
            wy > r_min * patch_section.hy
        ):
            raise ValueError(
                "plate grading too coarse near the origin for the smallest "
                f"scheduled junction patch (widths {wx}, patch half-extents "
                f"({r_min * patch_section.hx:g}, {r_min * patch_section.hy:g}))"
            )
    part = MeshPart(x_lines, y_lines, interval_lines(-1.0, 0.0, nz))
    part.face_sets["plate_top"] = part._face_z("plate_top", part.nz)
    part.face_sets["plate_bottom"] = part._face_z("plate_bottom", 0)
    part.face_sets["plate_lateral"] = part._faces_lateral("plate_lateral")
    return part


@dataclass
class JunctionMap:
    """Bilinear plate-trace interpolation at the shrunk beam footprint.

    For beam bottom node ``i`` (coordinates ``x'``), ``plate_quads[i]`` are
    the plate top-face corner node ids of the cell containing ``r x'`` and
    ``weights[i]`` the bilinear weights there.
    """

    r: float
    beam_nodes: np.ndarray  # (K,) beam node ids on x3 = 0
    plate_quads: np.ndarray  # (K, 4) plate node ids on x3 = 0
    weights: np.ndarray  # (K, 4)

    def interpolate(self, plate_nodal):
        """Interpolated plate values at the mapped beam footprint points."""
        vals = np.asarray(plate_nodal)
        return np.einsum("pk,pk...->p...", self.weights, vals[self.plate_quads])


class MultidomainMesh:
    """The beam and plate meshes plus the junction machinery."""

    def __init__(self, beam: MeshPart, plate: MeshPart,
                 omega_a: CrossSection, omega_b: CrossSection):
        self.beam = beam
        self.plate = plate
        self.omega_a = omega_a
        self.omega_b = omega_b

    def surface_quadrature(self, tag) -> FaceSet:
        for part in (self.beam, self.plate):
            if tag in part.face_sets:
                return part.face_sets[tag]
        raise KeyError(f"unknown boundary tag {tag!r}")

    def build_junction_map(self, r) -> JunctionMap:
        if not self.omega_b.contains_scaled(self.omega_a, r):
            raise ValueError(
                f"junction patch r*omega_a with r={r:g} escapes the plate "
                "cross section"
            )
        beam_nodes = self.beam.level_node_ids(0)
        pts = r * self.beam.nodes[beam_nodes, :2]
        quads2d, weights = self.plate.grid.locate(pts)
        # lift 2D grid ids to 3D plate node ids on the top level
        offset = (self.plate.nx + 1) * (self.plate.ny + 1) * self.plate.nz
        return JunctionMap(r, beam_nodes, quads2d + offset, weights)


def build_multidomain_mesh(
    omega_a: CrossSection,
    omega_b: CrossSection,
    beam_divisions=(6, 6, 24),
    plate_half_divisions=20,
    plate_nz=4,
    plate_grading=1.25,
    r_min=None,
) -> MultidomainMesh:
    beam = build_beam_mesh(*beam_divisions, omega_a)
    plate = build_plate_mesh(
        plate_half_divisions,
        plate_nz,
        omega_b,
        grading_ratio=plate_grading,
        r_min=r_min,
        patch_section=omega_a,
    )
    return MultidomainMesh(beam, plate, omega_a, omega_b)


def dump_mesh(part: MeshPart) -> str:
    """Plain-text node/element listing for external visualization."""
    lines = [f"# nodes {part.n_nodes}"]
    for i, (x, y, z) in enumerate(part.nodes):
        lines.append(f"{i} {x:.17g} {y:.17g} {z:.17g}")
    lines.append(f"# elements {part.n_elems}")
    for i, conn in enumerate(part.hexes):
        lines.append(str(i) + " " + " ".join(str(int(c)) for c in conn))
    return "\n".join(lines) + "\n"
