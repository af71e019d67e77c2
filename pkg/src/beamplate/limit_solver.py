"""Discretization and solution of the three limit models.

Unknowns follow the limit-space structure: the beam carries two bending
profiles (1D cubic Hermite, clamped at both ends), a stretch profile and a
twist profile (1D linear), a warping field and two in-plane corrector
fields (bilinear in the cross section, linear along the axis, with
per-slice mean/rotation-moment constraints); the plate carries two membrane
fields (bilinear, pinned at the rim), a deflection (Bogner-Fox-Schmit
bicubic Hermite rectangles, clamped at the rim), two shear correctors and a
transverse-compression corrector (bilinear in plan, linear through the
thickness, with per-column zero-mean constraints).  All integral
constraints are enforced by scalar Lagrange multipliers, one per slice or
column, so the multiplier count is an auditable invariant.

The junction couples only the scalar pair ``zeta(0)`` / ``u3(0)``:
identified for finite stiffness ratio, pinned to zero in the beam-only and
plate-only regimes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import CrossSection, Grid2D, graded_lines, interval_lines, uniform_lines
from .tensors import Tensor4

_G2 = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_W2 = np.array([0.5, 0.5])
_G3 = np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6)])
_W3 = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])

BEAM_BLOCKS = ("u_a_1", "u_a_2", "zeta_a", "c", "v_a_3", "w_a_1", "w_a_2")
PLATE_BLOCKS = ("zeta_b_1", "zeta_b_2", "u_b_3", "v_b_1", "v_b_2", "w_b_3")


def hermite_basis(t, h, deriv=0):
    """Cubic Hermite shape values on an interval of length h, t in [0,1].

    Order: value-left, slope-left, value-right, slope-right.  ``t`` and
    ``h`` broadcast against each other (per-cell sizes are supported).
    """
    t = np.asarray(t, dtype=float)
    h = np.asarray(h, dtype=float)
    one = np.ones(np.broadcast_shapes(t.shape, h.shape))
    t = t * one
    h = h * one
    if deriv == 0:
        comps = [
            1 - 3 * t**2 + 2 * t**3,
            h * (t - 2 * t**2 + t**3),
            3 * t**2 - 2 * t**3,
            h * (-(t**2) + t**3),
        ]
    elif deriv == 1:
        comps = [
            (-6 * t + 6 * t**2) / h,
            1 - 4 * t + 3 * t**2,
            (6 * t - 6 * t**2) / h,
            -2 * t + 3 * t**2,
        ]
    elif deriv == 2:
        comps = [
            (-6 + 12 * t) / h**2,
            (-4 + 6 * t) / h,
            (6 - 12 * t) / h**2,
            (-2 + 6 * t) / h,
        ]
    else:
        raise ValueError("deriv must be 0, 1 or 2")
    return np.stack(comps, axis=-1)


def p1_basis(t, h, deriv=0):
    t = np.asarray(t, dtype=float)
    if deriv == 0:
        return np.stack([1 - t, t], axis=-1)
    if deriv == 1:
        return np.stack([-np.ones_like(t) / h, np.ones_like(t) / h], axis=-1)
    raise ValueError("deriv must be 0 or 1")


def q1_basis(s, t, hx=1.0, hy=1.0, dx=0, dy=0):
    """Bilinear shapes on [0,1]^2 (corner order 00, 10, 11, 01).

    ``s, t`` broadcast against the cell sizes ``hx, hy``.
    """
    shape = np.broadcast_shapes(
        np.shape(s), np.shape(t), np.shape(hx), np.shape(hy)
    )
    one = np.ones(shape)
    s = np.asarray(s, dtype=float) * one
    t = np.asarray(t, dtype=float) * one
    hx = np.asarray(hx, dtype=float) * one
    hy = np.asarray(hy, dtype=float) * one
    fs = np.stack([1 - s, s], -1) if dx == 0 else np.stack([-1 / hx, 1 / hx], -1)
    ft = np.stack([1 - t, t], -1) if dy == 0 else np.stack([-1 / hy, 1 / hy], -1)
    corners = ((0, 0), (1, 0), (1, 1), (0, 1))
    return np.stack([fs[..., i] * ft[..., j] for i, j in corners], axis=-1)


def bfs_basis(s, t, hx, hy, dx=0, dy=0):
    """Bogner-Fox-Schmit shapes on a rectangle, local coords in [0,1]^2.

    16 values per point: corner-major in the order (00, 10, 11, 01), with
    dof order (value, d/dx, d/dy, d2/dxdy) at each corner.
    """
    fx = hermite_basis(s, hx, deriv=dx)  # (..., 4): vl, sl, vr, sr
    fy = hermite_basis(t, hy, deriv=dy)
    corners = ((0, 0), (1, 0), (1, 1), (0, 1))
    out = []
    for ci, cj in corners:
        vx, sx = fx[..., 2 * ci], fx[..., 2 * ci + 1]
        vy, sy = fy[..., 2 * cj], fy[..., 2 * cj + 1]
        out.extend([vx * vy, sx * vy, vx * sy, sx * sy])
    return np.stack(out, axis=-1)


class _Blocks:
    """Named contiguous dof blocks within one domain's primal vector."""

    def __init__(self, sizes: dict):
        self.offsets = {}
        total = 0
        for name, size in sizes.items():
            self.offsets[name] = total
            total += size
        self.sizes = dict(sizes)
        self.n = total

    def sl(self, name):
        o = self.offsets[name]
        return slice(o, o + self.sizes[name])

    def idx(self, name, local):
        return self.offsets[name] + np.asarray(local, dtype=int)


class BeamLimitDiscretization:
    """Conforming discretization of the beam limit space on omega_a x (0,1)."""

    def __init__(self, omega_a: CrossSection, n_levels=24, n_xy=6):
        self.omega_a = omega_a
        self.z = interval_lines(0.0, 1.0, n_levels)
        self.n_int = n_levels
        self.grid = Grid2D(
            uniform_lines(omega_a.hx, n_xy), uniform_lines(omega_a.hy, n_xy)
        )
        m = self.grid.n_nodes
        L = n_levels + 1
        self.n_levels = L
        self.m2d = m
        self.blocks = _Blocks(
            {
                "u_a_1": 2 * L,
                "u_a_2": 2 * L,
                "zeta_a": L,
                "c": L,
                "v_a_3": m * L,
                "w_a_1": m * L,
                "w_a_2": m * L,
            }
        )
        # per-level moments of the bilinear shape functions
        g = self.grid
        self._m_shape = np.zeros(m)
        self._mx1_shape = np.zeros(m)
        self._mx2_shape = np.zeros(m)
        wsh = g.qweights[:, :, None] * g.shape_q[None, :, :]
        np.add.at(self._m_shape, g.quads, np.sum(wsh, axis=1))
        np.add.at(
            self._mx1_shape,
            g.quads,
            np.einsum("cq,qn->cn", g.qweights * g.qpoints[:, :, 0], g.shape_q),
        )
        np.add.at(
            self._mx2_shape,
            g.quads,
            np.einsum("cq,qn->cn", g.qweights * g.qpoints[:, :, 1], g.shape_q),
        )

    # -- local cell machinery -------------------------------------------------

    def _field_dofs(self, name, cell_corners, lev):
        """Q1xP1 local dofs (8) of a field block, level-major storage."""
        lo = self.blocks.offsets[name]
        return np.concatenate(
            [lo + cell_corners + self.m2d * lev, lo + cell_corners + self.m2d * (lev + 1)]
        )

    def cell_tables(self):
        """Global dof map (ncells, 36) and strain operator (ncells, 8, 6, 36).

        Local order: u1 (4 Hermite), u2 (4), zeta (2), c (2), v3 (8),
        w1 (8), w2 (8).
        """
        g = self.grid
        ncell2d = len(g.quads)
        nz = self.n_int
        hz = np.diff(self.z)
        dofmap = np.zeros((ncell2d * nz, 36), dtype=int)
        E = np.zeros((ncell2d * nz, 8, 6, 36))
        # local x'-quadrature (2x2) per 2D cell, z-quadrature 2 per interval
        s_loc = np.array([0.5 - 0.5 / np.sqrt(3), 0.5 + 0.5 / np.sqrt(3)])
        x1q = g.qpoints[:, :, 0]  # (c, 4)
        x2q = g.qpoints[:, :, 1]
        w2d = g.qweights  # (c, 4)
        b = self.blocks
        sg = np.array([s_loc[0], s_loc[1], s_loc[0], s_loc[1]])
        tg = np.array([s_loc[0], s_loc[0], s_loc[1], s_loc[1]])
        row = 0
        for l in range(nz):
            h = hz[l]
            H2 = hermite_basis(_G2, h, 2)
            Lv = p1_basis(_G2, h, 0)
            L1 = p1_basis(_G2, h, 1)
            for c2 in range(ncell2d):
                corners = g.quads[c2]
                dofmap[row] = np.concatenate(
                    [
                        b.idx("u_a_1", [2 * l, 2 * l + 1, 2 * l + 2, 2 * l + 3]),
                        b.idx("u_a_2", [2 * l, 2 * l + 1, 2 * l + 2, 2 * l + 3]),
                        b.idx("zeta_a", [l, l + 1]),
                        b.idx("c", [l, l + 1]),
                        self._field_dofs("v_a_3", corners, l),
                        self._field_dofs("w_a_1", corners, l),
                        self._field_dofs("w_a_2", corners, l),
                    ]
                )
                hx = g.cell_hx[c2]
                hy = g.cell_hy[c2]
                Nx = q1_basis(sg, tg, hx, hy, dx=1)
                Ny = q1_basis(sg, tg, hx, hy, dy=1)
                qp = 0
                for gz in range(2):
                    for g2 in range(4):
                        x1 = x1q[c2, g2]
                        x2 = x2q[c2, g2]
                        Erow = E[row, qp]
                        # e33 = zeta' - x1 u1'' - x2 u2''
                        Erow[2, 8:10] = L1[gz]
                        Erow[2, 0:4] = -x1 * H2[gz]
                        Erow[2, 4:8] = -x2 * H2[gz]
                        # 2 e13 = -c' x2 + dv3/dx1 ; 2 e23 = c' x1 + dv3/dx2
                        v3q1 = np.concatenate([Nx[g2] * Lv[gz, 0], Nx[g2] * Lv[gz, 1]])
                        v3q2 = np.concatenate([Ny[g2] * Lv[gz, 0], Ny[g2] * Lv[gz, 1]])
                        Erow[4, 10:12] = -x2 * L1[gz]
                        Erow[4, 12:20] = v3q1
                        Erow[5, 10:12] = x1 * L1[gz]
                        Erow[5, 12:20] = v3q2
                        # in-plane strains of (w1, w2)
                        w1x = np.concatenate([Nx[g2] * Lv[gz, 0], Nx[g2] * Lv[gz, 1]])
                        w1y = np.concatenate([Ny[g2] * Lv[gz, 0], Ny[g2] * Lv[gz, 1]])
                        Erow[0, 20:28] = w1x
                        Erow[1, 28:36] = w1y
                        Erow[3, 20:28] = w1y
                        Erow[3, 28:36] = w1x
                        qp += 1
                row += 1
        # quadrature weights (ncells, 8): w2d x (hz/2)
        wq = np.zeros((ncell2d * nz, 8))
        row = 0
        for l in range(nz):
            for c2 in range(ncell2d):
                wq[row, :4] = w2d[c2] * hz[l] * _W2[0]
                wq[row, 4:] = w2d[c2] * hz[l] * _W2[1]
                row += 1
        return dofmap, E, wq

    def displacement_tables(self):
        """Volume displacement operator U (ncells, 8, 3, 36) matching
        :meth:`cell_tables` (components of (u1, u2, zeta - x_alpha u_alpha'))."""
        g = self.grid
        ncell2d = len(g.quads)
        nz = self.n_int
        hz = np.diff(self.z)
        U = np.zeros((ncell2d * nz, 8, 3, 36))
        x1q = g.qpoints[:, :, 0]
        x2q = g.qpoints[:, :, 1]
        row = 0
        for l in range(nz):
            h = hz[l]
            Hv = hermite_basis(_G2, h, 0)
            H1 = hermite_basis(_G2, h, 1)
            Lv = p1_basis(_G2, h, 0)
            for c2 in range(ncell2d):
                qp = 0
                for gz in range(2):
                    for g2 in range(4):
                        x1 = x1q[c2, g2]
                        x2 = x2q[c2, g2]
                        Urow = U[row, qp]
                        Urow[0, 0:4] = Hv[gz]
                        Urow[1, 4:8] = Hv[gz]
                        Urow[2, 8:10] = Lv[gz]
                        Urow[2, 0:4] = -x1 * H1[gz]
                        Urow[2, 4:8] = -x2 * H1[gz]
                        qp += 1
                row += 1
        return U

    def constraint_rows(self):
        """Per-slice mean and rotation-moment rows; returns (B, labels)."""
        b = self.blocks
        rows = []
        cols = []
        vals = []
        labels = []
        m = self.m2d
        nrow = 0
        for l in range(self.n_levels):
            lev = self.m2d * l
            # mean of v3
            rows.extend([nrow] * m)
            cols.extend((b.offsets["v_a_3"] + lev + np.arange(m)).tolist())
            vals.extend(self._m_shape.tolist())
            labels.append(("v_a_3_mean", l))
            nrow += 1
            for name in ("w_a_1", "w_a_2"):
                rows.extend([nrow] * m)
                cols.extend((b.offsets[name] + lev + np.arange(m)).tolist())
                vals.extend(self._m_shape.tolist())
                labels.append((name + "_mean", l))
                nrow += 1
            # rotation moment int(x1 w2 - x2 w1)
            rows.extend([nrow] * (2 * m))
            cols.extend((b.offsets["w_a_2"] + lev + np.arange(m)).tolist())
            vals.extend(self._mx1_shape.tolist())
            cols.extend((b.offsets["w_a_1"] + lev + np.arange(m)).tolist())
            vals.extend((-self._mx2_shape).tolist())
            labels.append(("w_a_rotation", l))
            nrow += 1
        B = sp.coo_matrix((vals, (rows, cols)), shape=(nrow, b.n)).tocsr()
        return B, labels

    def fixed_dofs(self, regime):
        """Eliminated (zero) dofs for the given regime tie."""
        b = self.blocks
        L = self.n_levels
        fixed = []
        for name in ("u_a_1", "u_a_2"):
            fixed.extend(b.idx(name, [0, 1, 2 * L - 2, 2 * L - 1]).tolist())
        fixed.append(b.idx("zeta_a", [L - 1])[0])
        fixed.extend(b.idx("c", [0, L - 1]).tolist())
        if regime == "infinite":
            fixed.append(b.idx("zeta_a", [0])[0])
        return sorted(set(fixed))


class PlateLimitDiscretization:
    """Conforming discretization of the plate limit space on omega_b x (-1,0)."""

    def __init__(self, omega_b: CrossSection, n_half=20, grading=1.25, n_levels=4):
        self.omega_b = omega_b
        self.grid = Grid2D(
            graded_lines(omega_b.hx, n_half, grading),
            graded_lines(omega_b.hy, n_half, grading),
        )
        self.z = interval_lines(-1.0, 0.0, n_levels)
        self.n_int = n_levels
        self.n_levels = n_levels + 1
        m = self.grid.n_nodes
        self.m2d = m
        # origin must be a grid node so the junction value is a stored dof
        self.origin_node = self.grid.node_id(n_half, n_half)
        if not np.allclose(self.grid.nodes[self.origin_node], 0.0):
            raise ValueError("plate limit grid must contain the origin node")
        L = self.n_levels
        self.blocks = _Blocks(
            {
                "zeta_b_1": m,
                "zeta_b_2": m,
                "u_b_3": 4 * m,
                "v_b_1": m * L,
                "v_b_2": m * L,
                "w_b_3": m * L,
            }
        )
        self._trapz = np.zeros(L)
        dz = np.diff(self.z)
        self._trapz[:-1] += 0.5 * dz
        self._trapz[1:] += 0.5 * dz

    def _col_dofs(self, name, node, lev):
        """v/w fields are stored column-contiguous: index = lev + L*node."""
        return self.blocks.offsets[name] + lev + self.n_levels * np.asarray(node)

    def cell_tables(self, z_interval):
        """Dof map (C, 48) and strain operator (C, 18, 6, 48) for the slab
        of 3D cells over one z interval.

        Local order: zeta1 (4), zeta2 (4), u3 (16 BFS), v1 (8), v2 (8),
        w3 (8).  Quadrature is 3x3 in plan and 2 through the interval.
        """
        g = self.grid
        b = self.blocks
        C = len(g.quads)
        l = z_interval
        hz = self.z[l + 1] - self.z[l]
        zq = self.z[l] + _G2 * hz
        Lv = p1_basis(_G2, hz, 0)  # (2, 2)
        L1 = p1_basis(_G2, hz, 1)

        sg, tg = np.meshgrid(_G3, _G3, indexing="xy")
        sg = sg.ravel()
        tg = tg.ravel()  # 9 plan points
        wplan = np.outer(_W3, _W3).ravel()

        hx = g.cell_hx[:, None]
        hy = g.cell_hy[:, None]
        N = q1_basis(sg[None, :], tg[None, :])  # (1, 9, 4) -> broadcast
        Nx = q1_basis(sg[None, :], tg[None, :], hx, hy, dx=1)
        Ny = q1_basis(sg[None, :], tg[None, :], hx, hy, dy=1)
        Pxx = bfs_basis(sg[None, :], tg[None, :], hx, hy, dx=2)
        Pyy = bfs_basis(sg[None, :], tg[None, :], hx, hy, dy=2)
        Pxy = bfs_basis(sg[None, :], tg[None, :], hx, hy, dx=1, dy=1)

        dofmap = np.zeros((C, 48), dtype=int)
        corners = g.quads
        dofmap[:, 0:4] = b.offsets["zeta_b_1"] + corners
        dofmap[:, 4:8] = b.offsets["zeta_b_2"] + corners
        dofmap[:, 8:24] = (
            b.offsets["u_b_3"] + 4 * corners[:, :, None] + np.arange(4)[None, None, :]
        ).reshape(C, 16)
        for j, name in enumerate(("v_b_1", "v_b_2", "w_b_3")):
            lo = 24 + 8 * j
            dofmap[:, lo : lo + 4] = self._col_dofs(name, corners, l)
            dofmap[:, lo + 4 : lo + 8] = self._col_dofs(name, corners, l + 1)

        E = np.zeros((C, 18, 6, 48))
        qp = 0
        for gz in range(2):
            x3 = zq[gz]
            for gp in range(9):
                Erow = E[:, qp]  # (C, 6, 48)
                NB = np.broadcast_to(N[:, gp], (C, 4))
                # membrane minus x3-curvature
                Erow[:, 0, 0:4] = Nx[:, gp]
                Erow[:, 0, 8:24] = -x3 * Pxx[:, gp]
                Erow[:, 1, 4:8] = Ny[:, gp]
                Erow[:, 1, 8:24] = -x3 * Pyy[:, gp]
                Erow[:, 3, 0:4] = Ny[:, gp]
                Erow[:, 3, 4:8] = Nx[:, gp]
                Erow[:, 3, 8:24] = -2.0 * x3 * Pxy[:, gp]
                # transverse shear of (v1, v2) and compression of w3
                vcol = np.concatenate(
                    [NB * L1[gz, 0], NB * L1[gz, 1]], axis=1
                )  # (C, 8)
                Erow[:, 4, 24:32] = vcol
                Erow[:, 5, 32:40] = vcol
                Erow[:, 2, 40:48] = vcol
                qp += 1
        wq = np.empty((C, 18))
        area = (g.cell_hx * g.cell_hy)[:, None]
        wq[:, :9] = area * wplan[None, :] * hz * _W2[0]
        wq[:, 9:] = area * wplan[None, :] * hz * _W2[1]
        return dofmap, E, wq

    def constraint_rows(self):
        """Per-column zero-mean rows for the three corrector fields."""
        b = self.blocks
        m = self.m2d
        L = self.n_levels
        rows = []
        cols = []
        vals = []
        labels = []
        nrow = 0
        for name in ("v_b_1", "v_b_2", "w_b_3"):
            for n in range(m):
                rows.extend([nrow] * L)
                cols.extend(
                    (b.offsets[name] + np.arange(L) + L * n).tolist()
                )
                vals.extend(self._trapz.tolist())
                labels.append((name + "_mean", n))
                nrow += 1
        B = sp.coo_matrix((vals, (rows, cols)), shape=(nrow, b.n)).tocsr()
        return B, labels

    def boundary_nodes(self):
        g = self.grid
        x = g.nodes[:, 0]
        y = g.nodes[:, 1]
        return np.where(
            (np.abs(x - g.x_lines[0]) < 1e-12)
            | (np.abs(x - g.x_lines[-1]) < 1e-12)
            | (np.abs(y - g.y_lines[0]) < 1e-12)
            | (np.abs(y - g.y_lines[-1]) < 1e-12)
        )[0]

    def fixed_dofs(self, regime):
        b = self.blocks
        rim = self.boundary_nodes()
        fixed = []
        fixed.extend(b.idx("zeta_b_1", rim).tolist())
        fixed.extend(b.idx("zeta_b_2", rim).tolist())
        fixed.extend(
            (b.offsets["u_b_3"] + (4 * rim[:, None] + np.arange(4)).ravel()).tolist()
        )
        if regime == "zero":
            fixed.append(b.offsets["u_b_3"] + 4 * self.origin_node)
        return sorted(set(fixed))


def _scatter(dofmap, local_mats, n):
    """Accumulate local matrices (C, d, d) into a CSR matrix."""
    d = dofmap.shape[1]
    rows = np.repeat(dofmap, d, axis=1).ravel()
    cols = np.tile(dofmap, (1, d)).ravel()
    return sp.coo_matrix(
        (local_mats.ravel(), (rows, cols)), shape=(n, n)
    ).tocsr()


def _scatter_vec(dofmap, local_vecs, n):
    out = np.zeros(n)
    np.add.at(out, dofmap, local_vecs)
    return out


def _plan_points(grid: Grid2D):
    """Global coordinates of the 3x3 plan Gauss points: (C, 9, 2)."""
    sg, tg = np.meshgrid(_G3, _G3, indexing="xy")
    sg = sg.ravel()
    tg = tg.ravel()
    x0 = grid.nodes[grid.quads[:, 0]]
    pts = np.empty((len(grid.quads), 9, 2))
    pts[:, :, 0] = x0[:, None, 0] + sg[None, :] * grid.cell_hx[:, None]
    pts[:, :, 1] = x0[:, None, 1] + tg[None, :] * grid.cell_hy[:, None]
    return pts, np.outer(_W3, _W3).ravel()


class LimitModel:
    """Assembled limit forms shared by the three regime solves."""

    def __init__(self, omega_a: CrossSection, omega_b: CrossSection,
                 A_a: Tensor4, A_b: Tensor4, beam_levels=24, beam_xy=6,
                 plate_half=20, plate_grading=1.25, plate_levels=4):
        self.beam = BeamLimitDiscretization(omega_a, beam_levels, beam_xy)
        self.plate = PlateLimitDiscretization(
            omega_b, plate_half, plate_grading, plate_levels
        )
        self.A_a = A_a
        self.A_b = A_b
        self.K_beam = self._assemble_beam_stiffness()
        self.K_plate = self._assemble_plate_stiffness()
        self.B_beam, self.beam_constraint_labels = self.beam.constraint_rows()
        self.B_plate, self.plate_constraint_labels = self.plate.constraint_rows()

    # -- stiffness -------------------------------------------------------

    def _assemble_beam_stiffness(self):
        dofmap, E, wq = self.beam.cell_tables()
        D = self.A_a.voigt6()
        Ke = np.einsum("kqia,ij,kqjb,kq->kab", E, D, E, wq, optimize=True)
        return _scatter(dofmap, Ke, self.beam.blocks.n)

    def _assemble_plate_stiffness(self):
        D = self.A_b.voigt6()
        n = self.plate.blocks.n
        K = sp.csr_matrix((n, n))
        for l in range(self.plate.n_int):
            dofmap, E, wq = self.plate.cell_tables(l)
            Ke = np.einsum("kqia,ij,kqjb,kq->kab", E, D, E, wq, optimize=True)
            K = K + _scatter(dofmap, Ke, n)
        return K.tocsr()

    # -- loads -----------------------------------------------------------

    def beam_load(self, srcs):
        """Load vector over the beam primal dofs from limit source fields."""
        disc = self.beam
        n = disc.blocks.n
        dofmap, E, wq = disc.cell_tables()
        U = disc.displacement_tables()
        g = disc.grid
        ncell2d = len(g.quads)
        nz = disc.n_int
        hz = np.diff(disc.z)
        # volume quadrature points (ncells, 8, 3)
        pts = np.zeros((ncell2d * nz, 8, 3))
        row = 0
        for l in range(nz):
            zq = disc.z[l] + _G2 * hz[l]
            for c2 in range(ncell2d):
                pts[row, :4, :2] = g.qpoints[c2]
                pts[row, 4:, :2] = g.qpoints[c2]
                pts[row, :4, 2] = zq[0]
                pts[row, 4:, 2] = zq[1]
                row += 1
        fvals = srcs.f_a(pts)
        gvals = srcs.g_a(pts)
        F = _scatter_vec(
            dofmap,
            np.einsum("kqcd,kqc,kq->kd", U, fvals, wq, optimize=True)
            + np.einsum("kqid,kqi,kq->kd", E, gvals, wq, optimize=True),
            n,
        )
        # lateral surface load
        epts, ewts = g.boundary_edge_quadrature()
        b = disc.blocks
        for l in range(nz):
            h = hz[l]
            zq = disc.z[l] + _G2 * h
            Hv = hermite_basis(_G2, h, 0)
            H1 = hermite_basis(_G2, h, 1)
            Lv = p1_basis(_G2, h, 0)
            dm = np.concatenate(
                [
                    b.idx("u_a_1", [2 * l, 2 * l + 1, 2 * l + 2, 2 * l + 3]),
                    b.idx("u_a_2", [2 * l, 2 * l + 1, 2 * l + 2, 2 * l + 3]),
                    b.idx("zeta_a", [l, l + 1]),
                ]
            )
            for gz in range(2):
                p3 = np.concatenate(
                    [epts, np.full((len(epts), 1), zq[gz])], axis=1
                )
                hvals = srcs.h_a(p3)  # (m, 3)
                w = ewts * h * _W2[gz]
                Usurf = np.zeros((len(epts), 3, 10))
                Usurf[:, 0, 0:4] = Hv[gz]
                Usurf[:, 1, 4:8] = Hv[gz]
                Usurf[:, 2, 8:10] = Lv[gz]
                Usurf[:, 2, 0:4] = -epts[:, 0:1] * H1[gz]
                Usurf[:, 2, 4:8] = -epts[:, 1:2] * H1[gz]
                fe = np.einsum("mcd,mc,m->d", Usurf, hvals, w)
                F[dm] += fe
        return F

    def plate_load(self, srcs):
        disc = self.plate
        n = disc.blocks.n
        g = disc.grid
        F = np.zeros(n)
        plan_pts, wplan = _plan_points(g)
        C = len(g.quads)
        sg, tg = np.meshgrid(_G3, _G3, indexing="xy")
        sg = sg.ravel()[None, :]
        tg = tg.ravel()[None, :]
        hx = g.cell_hx[:, None]
        hy = g.cell_hy[:, None]
        N = np.broadcast_to(q1_basis(sg, tg), (C, 9, 4))
        Px = bfs_basis(sg, tg, hx, hy, dx=1)
        Py = bfs_basis(sg, tg, hx, hy, dy=1)
        # value shapes still scale the slope dofs by the cell sizes
        Pv = bfs_basis(sg, tg, hx, hy)
        for l in range(disc.n_int):
            dofmap, E, wq = disc.cell_tables(l)
            hz = disc.z[l + 1] - disc.z[l]
            zq = disc.z[l] + _G2 * hz
            U = np.zeros((C, 18, 3, 48))
            pts = np.zeros((C, 18, 3))
            for gz in range(2):
                x3 = zq[gz]
                slab = slice(9 * gz, 9 * (gz + 1))
                U[:, slab, 0, 0:4] = N
                U[:, slab, 0, 8:24] = -x3 * Px
                U[:, slab, 1, 4:8] = N
                U[:, slab, 1, 8:24] = -x3 * Py
                U[:, slab, 2, 8:24] = Pv
                pts[:, slab, :2] = plan_pts
                pts[:, slab, 2] = x3
            fvals = srcs.f_b(pts)
            gvals = srcs.g_b(pts)
            F += _scatter_vec(
                dofmap,
                np.einsum("kqcd,kqc,kq->kd", U, fvals, wq, optimize=True)
                + np.einsum("kqid,kqi,kq->kd", E, gvals, wq, optimize=True),
                n,
            )
        # face loads at x3 = 0 and x3 = -1
        b = disc.blocks
        dof_face = np.zeros((C, 24), dtype=int)
        dof_face[:, 0:4] = b.offsets["zeta_b_1"] + g.quads
        dof_face[:, 4:8] = b.offsets["zeta_b_2"] + g.quads
        dof_face[:, 8:24] = (
            b.offsets["u_b_3"] + 4 * g.quads[:, :, None] + np.arange(4)[None, None, :]
        ).reshape(C, 16)
        wface = (g.cell_hx * g.cell_hy)[:, None] * wplan[None, :]
        for x3, trace, field in (
            (0.0, "top", srcs.h_b_plus),
            (-1.0, "bottom", srcs.h_b_minus),
        ):
            pts = np.concatenate(
                [plan_pts, np.full((C, 9, 1), x3)], axis=2
            )
            hvals = field(pts)
            U = np.zeros((C, 9, 3, 24))
            U[:, :, 0, 0:4] = N
            U[:, :, 1, 4:8] = N
            U[:, :, 2, 8:24] = Pv
            if trace == "bottom":
                U[:, :, 0, 8:24] = Px
                U[:, :, 1, 8:24] = Py
            F += _scatter_vec(
                dof_face,
                np.einsum("kqcd,kqc,kq->kd", U, hvals, wface, optimize=True),
                n,
            )
        return F

    # -- regime systems ----------------------------------------------------

    def _regime_layout(self, regime):
        if regime == "finite":
            return ("beam", "plate")
        if regime == "infinite":
            return ("beam",)
        if regime == "zero":
            return ("plate",)
        raise ValueError(f"unknown regime {regime!r}")

    def solve(self, regime, q, srcs, rtol=1e-9):
        """Solve the limit problem of the given regime.

        ``q`` is the stiffness-ratio limit (used only in the finite
        regime).  Returns a :class:`LimitState`.
        """
        domains = self._regime_layout(regime)
        mats = []
        cons = []
        loads = []
        offsets = {}
        total = 0
        for d in domains:
            offsets[d] = total
            if d == "beam":
                mats.append(self.K_beam)
                cons.append(self.B_beam)
                loads.append(self.beam_load(srcs))
                total += self.beam.blocks.n
            else:
                w = q if regime == "finite" else 1.0
                mats.append(w * self.K_plate)
                cons.append(self.B_plate)
                loads.append(self.plate_load(srcs))
                total += self.plate.blocks.n
        K = sp.block_diag(mats, format="csr")
        B = sp.block_diag(cons, format="csr")
        F = np.concatenate(loads)

        fixed = []
        for d in domains:
            disc = self.beam if d == "beam" else self.plate
            fixed.extend(offsets[d] + np.asarray(disc.fixed_dofs(regime), dtype=int))
        ties = {}
        if regime == "finite":
            slave = offsets["beam"] + self.beam.blocks.idx("zeta_a", [0])[0]
            master = (
                offsets["plate"]
                + self.plate.blocks.offsets["u_b_3"]
                + 4 * self.plate.origin_node
            )
            ties[slave] = [(master, 1.0)]
        C = _reduction_matrix(total, fixed, ties)

        K_red = (C.T @ K @ C).tocsr()
        B_red = (B @ C).tocsr()
        n_mult = B_red.shape[0]
        sys_mat = sp.bmat([[K_red, B_red.T], [B_red, None]], format="csr")
        rhs = np.concatenate([C.T @ F, np.zeros(n_mult)])
        # iterated symmetric row-norm (Ruiz) equilibration -- the saddle
        # matrix mixes curvature, corrector and multiplier scales -- then a
        # direct solve plus iterative refinement
        dscale = np.ones(sys_mat.shape[0])
        scaled = sys_mat
        for _ in range(6):
            row_max = np.abs(scaled).max(axis=1).toarray().ravel()
            row_max = np.where(row_max > 0, row_max, 1.0)
            if np.max(np.abs(np.log(row_max))) < 0.5:
                break
            step = 1.0 / np.sqrt(row_max)
            dscale = dscale * step
            D = sp.diags(step)
            scaled = (D @ scaled @ D).tocsr()
        D = sp.diags(dscale)
        lu = spla.splu((D @ sys_mat @ D).tocsc(), permc_spec="COLAMD")

        abs_mat = np.abs(sys_mat)

        def backward_error(x):
            # componentwise Oettli-Prager backward error: insensitive to the
            # curvature/multiplier scale spread of the saddle matrix; the
            # floor keeps all-but-zero rows from producing noise ratios
            res = sys_mat @ x - rhs
            denom = abs_mat @ np.abs(x) + np.abs(rhs)
            floor = np.finfo(float).eps * max(
                float(denom.max()), float(np.max(np.abs(rhs))), 1e-300
            )
            return float(np.max(np.abs(res) / (denom + floor)))

        sol = dscale * lu.solve(dscale * rhs)
        res = backward_error(sol)
        for _ in range(3):
            if res <= rtol:
                break
            sol = sol + dscale * lu.solve(dscale * (rhs - sys_mat @ sol))
            res = backward_error(sol)
        if not np.isfinite(res) or res > rtol:
            raise RuntimeError(
                f"limit saddle solve stalled at backward error {res:.3e}"
            )
        z_free = sol[: K_red.shape[0]]
        mult = sol[K_red.shape[0] :]
        z_full = C @ z_free

        coeffs = {}
        for d in domains:
            disc = self.beam if d == "beam" else self.plate
            for name in disc.blocks.sizes:
                coeffs[name] = z_full[offsets[d] + np.arange(disc.blocks.n)][
                    disc.blocks.sl(name)
                ].copy()
        energy = float(z_full @ (K @ z_full))
        load_value = float(F @ z_full)
        return LimitState(
            regime=regime,
            q=q if regime == "finite" else None,
            beam=self.beam if "beam" in domains else None,
            plate=self.plate if "plate" in domains else None,
            coeffs=coeffs,
            multipliers=mult,
            energy=energy,
            load_value=load_value,
            solve_residual=float(res),
        )

    def n_multipliers(self, regime):
        out = 0
        for d in self._regime_layout(regime):
            out += (self.B_beam if d == "beam" else self.B_plate).shape[0]
        return out


def _reduction_matrix(n, fixed, ties):
    """Map from free dofs to full dofs: identity plus tie rows."""
    fixed = set(int(i) for i in fixed)
    ties = {int(k): v for k, v in ties.items()}
    free = [i for i in range(n) if i not in fixed and i not in ties]
    col_of = {d: j for j, d in enumerate(free)}
    rows = list(free)
    cols = list(range(len(free)))
    vals = [1.0] * len(free)
    for slave, entries in ties.items():
        for master, coef in entries:
            if master in fixed:
                continue
            rows.append(slave)
            cols.append(col_of[master])
            vals.append(coef)
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, len(free))).tocsr()


@dataclass
class LimitState:
    """Solution of one limit problem with named coefficient blocks."""

    regime: str
    q: float | None
    beam: BeamLimitDiscretization | None
    plate: PlateLimitDiscretization | None
    coeffs: dict
    multipliers: np.ndarray
    energy: float
    load_value: float
    solve_residual: float

    # -- beam evaluators --------------------------------------------------

    def _hermite_eval(self, name, z, deriv=0):
        disc = self.beam
        c = self.coeffs[name]
        z = np.atleast_1d(np.asarray(z, dtype=float))
        iv = np.clip(np.searchsorted(disc.z, z) - 1, 0, disc.n_int - 1)
        h = disc.z[iv + 1] - disc.z[iv]
        t = (z - disc.z[iv]) / h
        out = np.empty_like(z)
        for k in range(len(z)):
            Hk = hermite_basis(np.array([t[k]]), h[k], deriv)[0]
            dofs = c[2 * iv[k] : 2 * iv[k] + 4]
            out[k] = Hk @ dofs
        return out

    def beam_bending(self, alpha, z, deriv=0):
        """Bending profile u_a_alpha (alpha in (1, 2)) or its derivatives."""
        return self._hermite_eval(f"u_a_{alpha}", z, deriv)

    def _p1_eval(self, name, z, deriv=0):
        disc = self.beam
        c = self.coeffs[name]
        z = np.atleast_1d(np.asarray(z, dtype=float))
        iv = np.clip(np.searchsorted(disc.z, z) - 1, 0, disc.n_int - 1)
        h = disc.z[iv + 1] - disc.z[iv]
        t = (z - disc.z[iv]) / h
        if deriv == 0:
            return (1 - t) * c[iv] + t * c[iv + 1]
        return (c[iv + 1] - c[iv]) / h

    def stretch(self, z, deriv=0):
        return self._p1_eval("zeta_a", z, deriv)

    def twist(self, z, deriv=0):
        return self._p1_eval("c", z, deriv)

    def _q1p1_eval(self, name, disc_grid, levels, column_major, pts):
        """Evaluate a bilinear-in-plan, linear-in-x3 field at (n, 3) points."""
        c = self.coeffs[name]
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        L = len(levels)
        m = disc_grid.n_nodes
        field = c.reshape(m, L).T if column_major else c.reshape(L, m)
        iv = np.clip(np.searchsorted(levels, pts[:, 2]) - 1, 0, L - 2)
        t = (pts[:, 2] - levels[iv]) / (levels[iv + 1] - levels[iv])
        quads, w = disc_grid.locate(pts[:, :2])
        lo = np.einsum("pk,pk->p", w, field[iv[:, None], quads])
        hi = np.einsum("pk,pk->p", w, field[iv[:, None] + 1, quads])
        return (1 - t) * lo + t * hi

    def beam_v3(self, pts):
        return self._q1p1_eval("v_a_3", self.beam.grid, self.beam.z, False, pts)

    def beam_w(self, alpha, pts):
        return self._q1p1_eval(
            f"w_a_{alpha}", self.beam.grid, self.beam.z, False, pts
        )

    # -- plate evaluators -------------------------------------------------

    def plate_membrane(self, alpha, pts2):
        g = self.plate.grid
        return g.interpolate(self.coeffs[f"zeta_b_{alpha}"], pts2)

    def plate_deflection(self, pts2, dx=0, dy=0):
        g = self.plate.grid
        c = self.coeffs["u_b_3"].reshape(g.n_nodes, 4)
        pts2 = np.atleast_2d(np.asarray(pts2, dtype=float))
        quads, _ = g.locate(pts2)
        # local coordinates within the located cells
        x0 = g.nodes[quads[:, 0]]
        hx = g.nodes[quads[:, 1], 0] - x0[:, 0]
        hy = g.nodes[quads[:, 3], 1] - x0[:, 1]
        s = (pts2[:, 0] - x0[:, 0]) / hx
        t = (pts2[:, 1] - x0[:, 1]) / hy
        shapes = bfs_basis(s, t, hx, hy, dx=dx, dy=dy)  # (n, 16)
        dofs = c[quads].reshape(len(pts2), 16)
        return np.sum(shapes * dofs, axis=1)

    def plate_v(self, alpha, pts):
        return self._q1p1_eval(
            f"v_b_{alpha}", self.plate.grid, self.plate.z, True, pts
        )

    def plate_w3(self, pts):
        return self._q1p1_eval("w_b_3", self.plate.grid, self.plate.z, True, pts)

    def junction_value(self):
        """The shared junction value: stretch at 0 / deflection at origin."""
        if self.beam is not None:
            return float(self.coeffs["zeta_a"][0])
        return float(self.coeffs["u_b_3"][4 * self.plate.origin_node])

    def to_json(self):
        out = {
            "regime": self.regime,
            "q": self.q,
            "energy": self.energy,
            "blocks": {k: v.tolist() for k, v in self.coeffs.items()},
        }
        if self.beam is not None:
            out["beam_levels"] = self.beam.z.tolist()
            out["beam_grid"] = {
                "x": self.beam.grid.x_lines.tolist(),
                "y": self.beam.grid.y_lines.tolist(),
            }
        if self.plate is not None:
            out["plate_levels"] = self.plate.z.tolist()
            out["plate_grid"] = {
                "x": self.plate.grid.x_lines.tolist(),
                "y": self.plate.grid.y_lines.tolist(),
            }
        return out


def junction_audit(state: LimitState) -> dict:
    """Coefficient-level residuals of the junction conditions.

    For the coupled regime these are the six conditions (two bending
    values, two bending slopes, the twist value, and the stretch/deflection
    tie); the one-domain regimes audit their tie replacement.
    """
    out = {}
    if state.beam is not None:
        for alpha in (1, 2):
            c = state.coeffs[f"u_a_{alpha}"]
            out[f"u_a_{alpha}(0)"] = abs(float(c[0]))
            out[f"u_a_{alpha}'(0)"] = abs(float(c[1]))
        out["c(0)"] = abs(float(state.coeffs["c"][0]))
    if state.regime == "finite":
        out["zeta_a(0)-u_b_3(0)"] = abs(
            float(
                state.coeffs["zeta_a"][0]
                - state.coeffs["u_b_3"][4 * state.plate.origin_node]
            )
        )
    elif state.regime == "infinite":
        out["zeta_a(0)"] = abs(float(state.coeffs["zeta_a"][0]))
    else:
        out["u_b_3(0)"] = abs(
            float(state.coeffs["u_b_3"][4 * state.plate.origin_node])
        )
    return out


def limit_energy(state: LimitState) -> float:
    """Limit energy of the solved state (already regime-weighted)."""
    return state.energy


def make_limit_state(model: LimitModel, fns: dict, q=1.0,
                     project_constraints=True) -> LimitState:
    """Sample closed-form fields into a coupled limit state.

    ``fns`` maps block names to callables: axial profiles take ``z``
    (bending profiles also need ``<name>_p`` for the slope dofs), plan
    fields take ``(x1, x2)`` (the deflection also needs ``_x``, ``_y`` and
    ``_xy``), volume fields take ``(x1, x2, z)``.  Missing entries sample
    as zero.  Used to drive round-trip and admissibility tests with states
    of known smoothness.

    With ``project_constraints`` the sampled corrector fields get their
    per-slice means, the per-slice rotation moment and the per-column
    means removed at quadrature level, exactly as the multipliers enforce
    them on solved states.
    """
    beam = model.beam
    plate = model.plate
    zero1 = lambda z: np.zeros_like(np.asarray(z, dtype=float))
    zero2 = lambda x1, x2: np.zeros_like(np.asarray(x1, dtype=float))
    zero3 = lambda x1, x2, z: np.zeros_like(np.asarray(x1, dtype=float))
    coeffs = {}
    z = beam.z
    for name in ("u_a_1", "u_a_2"):
        vals = fns.get(name, zero1)(z)
        slopes = fns.get(name + "_p", zero1)(z)
        arr = np.empty(2 * len(z))
        arr[0::2] = vals
        arr[1::2] = slopes
        coeffs[name] = arr
    coeffs["zeta_a"] = np.asarray(fns.get("zeta_a", zero1)(z), dtype=float)
    coeffs["c"] = np.asarray(fns.get("c", zero1)(z), dtype=float)
    ga = beam.grid
    for name in ("v_a_3", "w_a_1", "w_a_2"):
        f = fns.get(name, zero3)
        arr = np.empty(beam.m2d * beam.n_levels)
        for l, zl in enumerate(z):
            arr[beam.m2d * l : beam.m2d * (l + 1)] = f(
                ga.nodes[:, 0], ga.nodes[:, 1], np.full(ga.n_nodes, zl)
            )
        coeffs[name] = arr
    gb = plate.grid
    for name in ("zeta_b_1", "zeta_b_2"):
        coeffs[name] = np.asarray(
            fns.get(name, zero2)(gb.nodes[:, 0], gb.nodes[:, 1]), dtype=float
        )
    u3 = np.zeros((gb.n_nodes, 4))
    u3[:, 0] = fns.get("u_b_3", zero2)(gb.nodes[:, 0], gb.nodes[:, 1])
    u3[:, 1] = fns.get("u_b_3_x", zero2)(gb.nodes[:, 0], gb.nodes[:, 1])
    u3[:, 2] = fns.get("u_b_3_y", zero2)(gb.nodes[:, 0], gb.nodes[:, 1])
    u3[:, 3] = fns.get("u_b_3_xy", zero2)(gb.nodes[:, 0], gb.nodes[:, 1])
    coeffs["u_b_3"] = u3.ravel()
    L = plate.n_levels
    for name in ("v_b_1", "v_b_2", "w_b_3"):
        f = fns.get(name, zero3)
        arr = np.empty(plate.m2d * L)
        for n in range(plate.m2d):
            arr[L * n : L * (n + 1)] = f(
                np.full(L, gb.nodes[n, 0]), np.full(L, gb.nodes[n, 1]), plate.z
            )
        coeffs[name] = arr
    if project_constraints:
        _project_state_constraints(beam, plate, coeffs)
    return LimitState(
        regime="finite",
        q=q,
        beam=beam,
        plate=plate,
        coeffs=coeffs,
        multipliers=np.zeros(0),
        energy=float("nan"),
        load_value=float("nan"),
        solve_residual=0.0,
    )


def _project_state_constraints(beam, plate, coeffs):
    """Remove the discrete slice/column means (and the slice rotation) that
    the Lagrange multipliers annihilate on solved states."""
    m = beam.m2d
    area = float(beam._m_shape.sum())
    xy = beam.grid.nodes
    xr = np.stack([-xy[:, 1], xy[:, 0]], axis=1)
    # discrete polar moment of the rotation field
    polar = float(beam._mx1_shape @ xr[:, 1] - beam._mx2_shape @ xr[:, 0])
    for l in range(beam.n_levels):
        sl = slice(m * l, m * (l + 1))
        v = coeffs["v_a_3"][sl]
        v -= (beam._m_shape @ v) / area
        w1 = coeffs["w_a_1"][sl]
        w2 = coeffs["w_a_2"][sl]
        rho = (beam._mx1_shape @ w2 - beam._mx2_shape @ w1) / polar
        w1 -= rho * xr[:, 0]
        w2 -= rho * xr[:, 1]
        w1 -= (beam._m_shape @ w1) / area
        w2 -= (beam._m_shape @ w2) / area
    L = plate.n_levels
    for name in ("v_b_1", "v_b_2", "w_b_3"):
        arr = coeffs[name].reshape(plate.m2d, L)
        arr -= (arr @ plate._trapz)[:, None]
