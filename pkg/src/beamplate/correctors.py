"""Extraction of corrector fields from 3D solutions, and the lifting map.

The extraction operators recover the twist, per-slice mean, warping and
in-plane corrector profiles of a beam field (and the shear/compression
correctors of a plate field) from plain nodal data; along a schedule these
converge to the corresponding limit fields.  The lifting map goes the
other way: it turns a limit state into an admissible rescaled displacement
pair, with a linear interpolation layer above the junction whose height
snaps to the closest mesh level at or below the junction radius.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .limit_solver import LimitState
from .mesh import MeshPart, MultidomainMesh
from .scaling import ScalingParams
from .solver3d import RescaledDisplacement


@dataclass
class BeamCorrectors:
    """Per-level twist and mean profiles plus nodal corrector fields."""

    levels: np.ndarray  # (L,)
    c: np.ndarray  # (L,)
    d: np.ndarray  # (L, 2)
    v3: np.ndarray  # (N,) nodal
    w: np.ndarray  # (N, 2) nodal


@dataclass
class PlateCorrectors:
    """Nodal shear/compression corrector candidates of a plate field."""

    u_tilde: np.ndarray  # (N, 2)
    v: np.ndarray  # (N, 2)
    w3: np.ndarray  # (N,)


def _level_trace(part: MeshPart, nodal, level):
    return np.asarray(nodal)[part.level_node_ids(level)]


def _section_integral(part: MeshPart, trace_nodal):
    """Integral of a (possibly vector) nodal trace over the cross section."""
    g = part.grid
    vals = np.einsum("qn,cn...->cq...", g.shape_q, np.asarray(trace_nodal)[g.quads])
    return np.einsum("cq,cq...->...", g.qweights, vals)


def _section_moment(part: MeshPart, trace_nodal, axis):
    g = part.grid
    vals = np.einsum("qn,cn->cq", g.shape_q, np.asarray(trace_nodal)[g.quads])
    return float(np.sum(g.qweights * g.qpoints[:, :, axis] * vals))


def _polar_weight(part: MeshPart):
    g = part.grid
    rho = g.qpoints[:, :, 0] ** 2 + g.qpoints[:, :, 1] ** 2
    return float(np.sum(g.qweights * rho))


def extract_twist(u_a, mesh: MultidomainMesh, r) -> np.ndarray:
    """Per-level twist profile: rotation moment over polar moment / r."""
    beam = mesh.beam
    den = r * _polar_weight(beam)
    out = np.empty(beam.nz + 1)
    for l in range(beam.nz + 1):
        tr = _level_trace(beam, u_a, l)
        num = _section_moment(beam, tr[:, 1], 0) - _section_moment(beam, tr[:, 0], 1)
        out[l] = num / den
    return out


def extract_mean(u_a, mesh: MultidomainMesh, r) -> np.ndarray:
    """Per-level cross-section averages of the horizontal components / r."""
    beam = mesh.beam
    area = mesh.omega_a.area
    out = np.empty((beam.nz + 1, 2))
    for l in range(beam.nz + 1):
        tr = _level_trace(beam, u_a, l)
        out[l] = _section_integral(beam, tr[:, :2]) / (r * area)
    return out


def extract_v3(u_a, mesh: MultidomainMesh, r) -> np.ndarray:
    """Axial corrector candidate: slice-centered u3/r plus the tilt made by
    the slice-mean slopes (axial derivatives by centered differences)."""
    beam = mesh.beam
    area = mesh.omega_a.area
    d = extract_mean(u_a, mesh, r)
    dprime = np.gradient(d, beam.z_lines, axis=0, edge_order=2)
    u3 = np.asarray(u_a)[:, 2] / r
    out = np.empty_like(u3)
    nxy = (beam.nx + 1) * (beam.ny + 1)
    for l in range(beam.nz + 1):
        ids = beam.level_node_ids(l)
        tr = u3[ids]
        mean = float(_section_integral(beam, tr)) / area
        xy = beam.nodes[ids, :2]
        out[ids] = tr - mean + xy[:, 0] * dprime[l, 0] + xy[:, 1] * dprime[l, 1]
    return out


def extract_w_beam(u_a, c_eps, d_eps, r, mesh: MultidomainMesh) -> np.ndarray:
    """In-plane corrector candidate: horizontal components with the rigid
    slice motion (rotation + translation) removed."""
    beam = mesh.beam
    out = np.empty((beam.n_nodes, 2))
    for l in range(beam.nz + 1):
        ids = beam.level_node_ids(l)
        xy = beam.nodes[ids, :2]
        xr = np.stack([-xy[:, 1], xy[:, 0]], axis=1)
        rigid = c_eps[l] * xr + d_eps[l][None, :]
        out[ids] = np.asarray(u_a)[ids, :2] / r**2 - rigid / r
    return out


def extract_beam(u_a, mesh: MultidomainMesh, r) -> BeamCorrectors:
    c = extract_twist(u_a, mesh, r)
    d = extract_mean(u_a, mesh, r)
    return BeamCorrectors(
        levels=mesh.beam.z_lines.copy(),
        c=c,
        d=d,
        v3=extract_v3(u_a, mesh, r),
        w=extract_w_beam(u_a, c, d, r, mesh),
    )


def extract_plate(u_b, mesh: MultidomainMesh, eps) -> PlateCorrectors:
    """Shear and compression corrector candidates of a plate field.

    Horizontal gradients of the vertical component use centered finite
    differences on the (graded) grid lines; the through-thickness integral
    uses the trapezoid rule on the mesh levels; column means are removed.
    """
    plate = mesh.plate
    L = plate.nz + 1
    shape = (L, plate.ny + 1, plate.nx + 1)
    u = np.asarray(u_b)
    u1 = u[:, 0].reshape(shape)
    u2 = u[:, 1].reshape(shape)
    u3 = u[:, 2].reshape(shape)
    du3_dx = np.gradient(u3, plate.x_lines, axis=2, edge_order=2)
    du3_dy = np.gradient(u3, plate.y_lines, axis=1, edge_order=2)
    z = plate.z_lines  # ascending from -1 to 0

    def tail_trapz(f):
        # T[l] = integral of f over (z_l, 0)
        seg = 0.5 * (f[1:] + f[:-1]) * np.diff(z)[:, None, None]
        T = np.zeros_like(f)
        T[:-1] = np.cumsum(seg[::-1], axis=0)[::-1]
        return T

    def col_mean(f):
        w = np.zeros(L)
        w[:-1] += 0.5 * np.diff(z)
        w[1:] += 0.5 * np.diff(z)
        return np.tensordot(w, f, axes=(0, 0))

    u_tilde = np.stack(
        [tail_trapz(du3_dx) / eps, tail_trapz(du3_dy) / eps], axis=-1
    )
    v = np.stack([u1 / eps, u2 / eps], axis=-1) - u_tilde
    v = v - col_mean(v)[None]
    w3 = u3 / eps**2
    w3 = w3 - col_mean(w3)[None]
    n = plate.n_nodes
    return PlateCorrectors(
        u_tilde=u_tilde.reshape(n, 2), v=v.reshape(n, 2), w3=w3.reshape(n)
    )


def decomposition_residuals(u_a, mesh: MultidomainMesh, r):
    """Per-slice mean and rotation moment of u'/r minus its rigid part.

    Both vanish identically (to roundoff) by construction of the twist and
    mean extractions; this is the discrete rigid-displacement split.
    """
    beam = mesh.beam
    c = extract_twist(u_a, mesh, r)
    d = extract_mean(u_a, mesh, r)
    worst_mean = 0.0
    worst_rot = 0.0
    for l in range(beam.nz + 1):
        ids = beam.level_node_ids(l)
        xy = beam.nodes[ids, :2]
        xr = np.stack([-xy[:, 1], xy[:, 0]], axis=1)
        res = np.asarray(u_a)[ids, :2] / r - c[l] * xr - d[l][None, :]
        m = _section_integral(beam, res)
        rot = _section_moment(beam, res[:, 1], 0) - _section_moment(beam, res[:, 0], 1)
        worst_mean = max(worst_mean, float(np.max(np.abs(m))))
        worst_rot = max(worst_rot, abs(rot))
    return worst_mean, worst_rot


def snap_layer_level(mesh: MultidomainMesh, r) -> int:
    """Mesh level index of the interpolation layer top: the largest level
    at or below the junction radius (there must be one above 0)."""
    z = mesh.beam.z_lines
    candidates = np.where((z > 0.0) & (z <= r * (1 + 1e-12)))[0]
    if len(candidates) == 0:
        raise ValueError(
            f"no beam mesh level in (0, {r:g}]: refine the beam mesh or "
            "enlarge the junction radius"
        )
    return int(candidates[-1])


def lift(state: LimitState, p: ScalingParams, mesh: MultidomainMesh
         ) -> RescaledDisplacement:
    """Admissible rescaled displacement built from a coupled limit state.

    Plate: membrane/bending displacement plus eps-weighted correctors.
    Beam above the layer: limit displacement plus r-weighted correctors.
    Beam bottom: the values forced by the transmission ties (evaluated
    from the analytic plate fields at the shrunk footprint).  In between:
    linear interpolation in the axial variable.
    """
    if state.beam is None or state.plate is None:
        raise ValueError("lifting needs a coupled (finite-regime) limit state")
    beam, plate = mesh.beam, mesh.plate
    eps, r = p.eps, p.r

    # plate part
    xy_b = plate.nodes[:, :2]
    z_b = plate.nodes[:, 2]
    zeta1 = state.plate_membrane(1, xy_b)
    zeta2 = state.plate_membrane(2, xy_b)
    u3 = state.plate_deflection(xy_b)
    u3x = state.plate_deflection(xy_b, dx=1)
    u3y = state.plate_deflection(xy_b, dy=1)
    vb1 = state.plate_v(1, plate.nodes)
    vb2 = state.plate_v(2, plate.nodes)
    wb3 = state.plate_w3(plate.nodes)
    u_b = np.stack(
        [
            zeta1 - z_b * u3x + eps * vb1,
            zeta2 - z_b * u3y + eps * vb2,
            u3 + eps**2 * wb3,
        ],
        axis=1,
    )

    # beam part above the interpolation layer
    xy_a = beam.nodes[:, :2]
    z_a = beam.nodes[:, 2]
    u1 = state.beam_bending(1, z_a)
    u2 = state.beam_bending(2, z_a)
    u1p = state.beam_bending(1, z_a, deriv=1)
    u2p = state.beam_bending(2, z_a, deriv=1)
    zeta = state.stretch(z_a)
    c = state.twist(z_a)
    v3 = state.beam_v3(beam.nodes)
    w1 = state.beam_w(1, beam.nodes)
    w2 = state.beam_w(2, beam.nodes)
    u_a = np.stack(
        [
            u1 - r * c * xy_a[:, 1] + r**2 * w1,
            u2 + r * c * xy_a[:, 0] + r**2 * w2,
            zeta - xy_a[:, 0] * u1p - xy_a[:, 1] * u2p + r * v3,
        ],
        axis=1,
    )

    # bottom values forced by the ties
    bottom = beam.level_node_ids(0)
    foot = r * beam.nodes[bottom, :2]
    foot3 = np.concatenate([foot, np.zeros((len(foot), 1))], axis=1)
    zb1_f = state.plate_membrane(1, foot)
    zb2_f = state.plate_membrane(2, foot)
    u3_f = state.plate_deflection(foot)
    vb1_f = state.plate_v(1, foot3)
    vb2_f = state.plate_v(2, foot3)
    wb3_f = state.plate_w3(foot3)
    u_a[bottom, 0] = eps * r * (zb1_f + eps * vb1_f)
    u_a[bottom, 1] = eps * r * (zb2_f + eps * vb2_f)
    u_a[bottom, 2] = u3_f + eps**2 * wb3_f

    # linear interpolation inside the layer
    layer = snap_layer_level(mesh, r)
    z_layer = beam.z_lines[layer]
    top_ids = beam.level_node_ids(layer)
    for l in range(1, layer):
        ids = beam.level_node_ids(l)
        t = beam.z_lines[l] / z_layer
        u_a[ids] = t * u_a[top_ids] + (1.0 - t) * u_a[bottom]

    return RescaledDisplacement(u_a=u_a, u_b=u_b)


def layer_strain_norm(u: RescaledDisplacement, mesh: MultidomainMesh,
                      p: ScalingParams) -> float:
    """L2 norm of the scaled beam strain restricted to the layer elements."""
    from .solver3d import element_b_matrices
    from .tensors import beam_scale_voigt

    beam = mesh.beam
    layer = snap_layer_level(mesh, p.r)
    z_low = beam.nodes[beam.hexes[:, 0], 2]
    sel = z_low < beam.z_lines[layer] - 1e-14
    B = element_b_matrices(beam)[sel]
    ue = u.u_a[beam.hexes[sel]].reshape(-1, 24)
    strains = np.einsum("egia,ea->egi", B, ue) * beam_scale_voigt(p.r)[None, None, :]
    sq = np.sum(strains[..., :3] ** 2, axis=-1) + 0.5 * np.sum(
        strains[..., 3:] ** 2, axis=-1
    )
    return float(np.sqrt(np.sum(beam.qweights[sel] * sq)))


def profiles_csv(levels, columns: dict) -> str:
    """CSV text of per-level profiles (x3 plus named value columns)."""
    names = list(columns)
    lines = ["x3," + ",".join(names)]
    for i, z in enumerate(levels):
        row = [format(z, ".17g")] + [format(columns[n][i], ".17g") for n in names]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
