"""Assembly and solution of the rescaled problem on the multidomain.

The bilinear form is the block-scaled elasticity form: beam strains are
scaled by ``(1/r^2, 1/r, 1)`` per block, plate strains by ``(1, 1/eps,
1/eps^2)``, and the plate contribution carries the stiffness-ratio weight
``q``.  Scaling a strain in Voigt components is a diagonal operation, so
the scaled constitutive matrix ``S D S`` feeds the standard ``B^T D B``
element loop unchanged; the divergence-form load reuses the same ``B`` and
``S``, which keeps stiffness and load on one code path.

Kinematic constraints (clamped beam top, clamped plate rim, and the two
junction trace ties) are eliminated master-slave: the reduced operator
``C^T K C`` stays symmetric positive definite and the ties hold exactly by
construction.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import HEX_GRAD_Q, HEX_SHAPE_Q, JunctionMap, MeshPart, MultidomainMesh
from .scaling import RescaledSources, ScalingParams
from .tensors import Tensor4, beam_scale_voigt, plate_scale_voigt


class SolveError(RuntimeError):
    """Linear solve failed to reach the residual tolerance."""


@dataclass
class RescaledDisplacement:
    """Nodal displacement pair on the reference beam and plate meshes."""

    u_a: np.ndarray  # (Na, 3)
    u_b: np.ndarray  # (Nb, 3)

    @classmethod
    def zero(cls, mesh: MultidomainMesh):
        return cls(
            np.zeros((mesh.beam.n_nodes, 3)), np.zeros((mesh.plate.n_nodes, 3))
        )

    @classmethod
    def from_full(cls, vec, mesh: MultidomainMesh):
        na = mesh.beam.n_nodes
        return cls(
            vec[: 3 * na].reshape(na, 3).copy(),
            vec[3 * na :].reshape(mesh.plate.n_nodes, 3).copy(),
        )

    def to_full(self):
        return np.concatenate([self.u_a.ravel(), self.u_b.ravel()])


def element_gradients(part: MeshPart):
    """Physical shape gradients at the 8 Gauss points: (E, 8, 8, 3)."""
    return HEX_GRAD_Q[None] * (2.0 / part.elem_sizes)[:, None, None, :]


def element_b_matrices(part: MeshPart):
    """Engineering strain-displacement matrices: (E, 8 gauss, 6, 24).

    Local dof order is node-major, ``3 * node + component``.
    """
    dndx = element_gradients(part)
    ne = part.n_elems
    B = np.zeros((ne, 8, 6, 24))
    n3 = 3 * np.arange(8)
    B[:, :, 0, n3 + 0] = dndx[..., 0]
    B[:, :, 1, n3 + 1] = dndx[..., 1]
    B[:, :, 2, n3 + 2] = dndx[..., 2]
    B[:, :, 3, n3 + 0] = dndx[..., 1]
    B[:, :, 3, n3 + 1] = dndx[..., 0]
    B[:, :, 4, n3 + 0] = dndx[..., 2]
    B[:, :, 4, n3 + 2] = dndx[..., 0]
    B[:, :, 5, n3 + 1] = dndx[..., 2]
    B[:, :, 5, n3 + 2] = dndx[..., 1]
    return B


def _elem_dofs(part: MeshPart):
    """(E, 24) global dof indices, node-major."""
    return (3 * part.hexes[:, :, None] + np.arange(3)[None, None, :]).reshape(
        part.n_elems, 24
    )


def assemble_part_stiffness(part: MeshPart, D6, scale6, weight=1.0) -> sp.csr_matrix:
    """Stiffness of one mesh part with scaled constitutive matrix."""
    S = np.asarray(scale6, dtype=float)
    Deff = weight * (S[:, None] * np.asarray(D6) * S[None, :])
    B = element_b_matrices(part)
    w = part.qweights
    Ke = np.einsum("egia,ij,egjb,eg->eab", B, Deff, B, w, optimize=True)
    dofs = _elem_dofs(part)
    rows = np.repeat(dofs, 24, axis=1).ravel()
    cols = np.tile(dofs, (1, 24)).ravel()
    n = 3 * part.n_nodes
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))
    return K.tocsr()


def assemble(mesh: MultidomainMesh, A_a: Tensor4, A_b: Tensor4,
             p: ScalingParams) -> sp.csr_matrix:
    """Full stiffness on beam + plate dofs (beam block first)."""
    Ka = assemble_part_stiffness(
        mesh.beam, A_a.voigt6(), beam_scale_voigt(p.r)
    )
    Kb = assemble_part_stiffness(
        mesh.plate, A_b.voigt6(), plate_scale_voigt(p.eps), weight=p.q
    )
    return sp.block_diag([Ka, Kb], format="csr")


def _volume_load(part: MeshPart, f_vals):
    """Consistent nodal load of a volume force given at quadrature points."""
    w = part.qweights
    fe = np.einsum("gn,egc,eg->enc", HEX_SHAPE_Q, f_vals, w)
    out = np.zeros(3 * part.n_nodes)
    np.add.at(out, _elem_dofs(part).reshape(part.n_elems, 8, 3), fe)
    return out


def _divergence_load(part: MeshPart, g_vals, scale6):
    """Load of the divergence-form term, paired through the scaled strains."""
    S = np.asarray(scale6, dtype=float)
    B = element_b_matrices(part)
    w = part.qweights
    fe = np.einsum("egia,egi,eg->ea", B, g_vals * S[None, None, :], w, optimize=True)
    out = np.zeros(3 * part.n_nodes)
    np.add.at(out, _elem_dofs(part), fe)
    return out


def _surface_load(part: MeshPart, faceset, h_vals):
    fe = np.einsum("gn,fgc,fg->fnc", faceset.shape, h_vals, faceset.weights)
    out = np.zeros(3 * part.n_nodes)
    dofs = 3 * faceset.quads[:, :, None] + np.arange(3)[None, None, :]
    np.add.at(out, dofs, fe)
    return out


def assemble_load(mesh: MultidomainMesh, rs: RescaledSources) -> np.ndarray:
    """Right-hand side of the rescaled problem on beam + plate dofs."""
    p = rs.params
    beam, plate = mesh.beam, mesh.plate
    fa = _volume_load(beam, rs.f_a(beam.qpoints))
    fa += _divergence_load(beam, rs.g_a(beam.qpoints), beam_scale_voigt(p.r))
    lat = beam.face_sets["beam_lateral"]
    fa += _surface_load(beam, lat, rs.h_a(lat.points))

    fb = _volume_load(plate, rs.f_b(plate.qpoints))
    fb += _divergence_load(plate, rs.g_b(plate.qpoints), plate_scale_voigt(p.eps))
    top = plate.face_sets["plate_top"]
    bot = plate.face_sets["plate_bottom"]
    fb += _surface_load(plate, top, rs.h_b_plus(top.points))
    fb += _surface_load(plate, bot, rs.h_b_minus(bot.points))
    return np.concatenate([fa, fb])


@dataclass
class ConstrainedSystem:
    """Reduced SPD system plus the affine map back to full dofs."""

    K_red: sp.csr_matrix
    f_red: np.ndarray
    C: sp.csr_matrix  # (n_full, n_free)
    n_full: int


def dirichlet_dofs(mesh: MultidomainMesh):
    """Zeroed dofs: all components on the beam top and the plate rim."""
    beam, plate = mesh.beam, mesh.plate
    top_nodes = beam.level_node_ids(beam.nz)
    fixed = [3 * top_nodes[:, None] + np.arange(3)]
    xb = plate.nodes[:, 0]
    yb = plate.nodes[:, 1]
    rim = np.where(
        (np.abs(xb - plate.x_lines[0]) < 1e-12)
        | (np.abs(xb - plate.x_lines[-1]) < 1e-12)
        | (np.abs(yb - plate.y_lines[0]) < 1e-12)
        | (np.abs(yb - plate.y_lines[-1]) < 1e-12)
    )[0]
    offset = 3 * beam.n_nodes
    fixed.append(offset + 3 * rim[:, None] + np.arange(3))
    return np.unique(np.concatenate([f.ravel() for f in fixed]))


def build_constraint_matrix(mesh: MultidomainMesh, junction: JunctionMap,
                            p: ScalingParams, tie_scale=None) -> sp.csr_matrix:
    """Affine map C from free dofs to full dofs.

    Beam bottom dofs are slaves: horizontal components carry the factor
    ``eps * r`` against the bilinearly interpolated plate trace dofs, the
    vertical component the factor 1.  ``tie_scale`` overrides ``eps * r``
    (used by degenerate-tie unit tests).
    """
    if abs(junction.r - p.r) > 1e-12 * max(1.0, p.r):
        raise ValueError(
            f"junction map was built for r={junction.r:g}, params have r={p.r:g}"
        )
    n_full = 3 * (mesh.beam.n_nodes + mesh.plate.n_nodes)
    offset = 3 * mesh.beam.n_nodes
    fixed = set(dirichlet_dofs(mesh).tolist())
    slave_rows = {}
    horiz = p.eps * p.r if tie_scale is None else tie_scale
    for i, bnode in enumerate(junction.beam_nodes):
        masters = junction.plate_quads[i]
        weights = junction.weights[i]
        for c in range(3):
            coef = horiz if c < 2 else 1.0
            entries = [
                (offset + 3 * m + c, coef * w)
                for m, w in zip(masters, weights)
                if coef * w != 0.0
            ]
            slave_rows[3 * bnode + c] = entries

    free = [
        d for d in range(n_full) if d not in fixed and d not in slave_rows
    ]
    col_of = {d: j for j, d in enumerate(free)}
    rows = list(range(len(free)))
    cols = list(range(len(free)))
    vals = [1.0] * len(free)
    rows = [free[j] for j in rows]
    for slave, entries in slave_rows.items():
        for master, coef in entries:
            if master in fixed:
                continue  # clamped master contributes zero
            rows.append(slave)
            cols.append(col_of[master])
            vals.append(coef)
    C = sp.coo_matrix((vals, (rows, cols)), shape=(n_full, len(free)))
    return C.tocsr()


def apply_constraints(K: sp.csr_matrix, f: np.ndarray,
                      C: sp.csr_matrix) -> ConstrainedSystem:
    """Congruence reduction to the free dofs; symmetry is preserved."""
    K_red = (C.T @ K @ C).tocsr()
    return ConstrainedSystem(K_red=K_red, f_red=C.T @ f, C=C, n_full=K.shape[0])


def solve(system: ConstrainedSystem, mesh: MultidomainMesh, rtol=1e-10):
    """Direct sparse solve with diagonal equilibration.

    Falls back to diagonally preconditioned CG when the factorization does
    not meet the residual tolerance; reports the residual either way.
    """
    K = system.K_red
    f = system.f_red
    t0 = time.perf_counter()
    diag = K.diagonal()
    if np.any(diag <= 0.0):
        raise SolveError("reduced stiffness has nonpositive diagonal entries")
    d = 1.0 / np.sqrt(diag)
    Dscale = sp.diags(d)
    Ks = (Dscale @ K @ Dscale).tocsc()
    fnorm = np.linalg.norm(f)
    if fnorm == 0.0:
        u_free = np.zeros_like(f)
        residual = 0.0
    else:
        lu = spla.splu(Ks, permc_spec="COLAMD")
        u_free = d * lu.solve(d * f)
        residual = np.linalg.norm(K @ u_free - f) / fnorm
        if not np.isfinite(residual) or residual > rtol:
            x0 = u_free if np.all(np.isfinite(u_free)) else None
            u_s, info = spla.cg(
                Ks, d * f, x0=None if x0 is None else (1.0 / d) * x0,
                rtol=rtol * 1e-2, maxiter=20000,
            )
            if info == 0:
                u_free = d * u_s
                residual = np.linalg.norm(K @ u_free - f) / fnorm
        if not np.isfinite(residual) or residual > rtol:
            raise SolveError(
                f"linear solve stalled at relative residual {residual:.3e}"
            )
    u_full = system.C @ u_free
    stats = {
        "dofs": int(K.shape[0]),
        "residual": float(residual),
        "solve_seconds": time.perf_counter() - t0,
    }
    return RescaledDisplacement.from_full(u_full, mesh), stats


def solve_case(mesh: MultidomainMesh, A_a: Tensor4, A_b: Tensor4,
               p: ScalingParams, rs: RescaledSources, rtol=1e-10):
    """Assemble, constrain and solve one scheduled case."""
    junction = mesh.build_junction_map(p.r)
    K = assemble(mesh, A_a, A_b, p)
    f = assemble_load(mesh, rs)
    C = build_constraint_matrix(mesh, junction, p)
    system = apply_constraints(K, f, C)
    u, stats = solve(system, mesh, rtol=rtol)
    stats["load_functional"] = float(f @ u.to_full())
    return u, stats


def strain_energy(part: MeshPart, nodal, D6, scale6) -> float:
    """Energy integral of one part: nodal field against scaled tensor."""
    B = element_b_matrices(part)
    dofs = part.hexes
    ue = np.asarray(nodal)[dofs].reshape(part.n_elems, 24)
    strains = np.einsum("egia,ea->egi", B, ue)
    S = np.asarray(scale6, dtype=float)
    Deff = S[:, None] * np.asarray(D6) * S[None, :]
    dens = np.einsum("egi,ij,egj->eg", strains, Deff, strains)
    return float(np.sum(part.qweights * dens))


def rescaled_energy_of_fields(u_a, u_b, mesh: MultidomainMesh,
                              A_a: Tensor4, A_b: Tensor4,
                              p: ScalingParams) -> float:
    """The two-domain rescaled energy (beam part plus q times plate part)."""
    E = strain_energy(mesh.beam, u_a, A_a.voigt6(), beam_scale_voigt(p.r))
    E += p.q * strain_energy(
        mesh.plate, u_b, A_b.voigt6(), plate_scale_voigt(p.eps)
    )
    return E


def rescaled_energy(u: RescaledDisplacement, mesh: MultidomainMesh,
                    A_a: Tensor4, A_b: Tensor4, p: ScalingParams) -> float:
    return rescaled_energy_of_fields(u.u_a, u.u_b, mesh, A_a, A_b, p)


def scaled_strain_norm(part: MeshPart, nodal, scale6) -> float:
    """L2 norm of the block-scaled strain of a nodal field."""
    B = element_b_matrices(part)
    ue = np.asarray(nodal)[part.hexes].reshape(part.n_elems, 24)
    strains = np.einsum("egia,ea->egi", B, ue) * np.asarray(scale6)[None, None, :]
    # engineering components carry 2*e_ij on the shear slots
    sq = np.sum(strains[..., :3] ** 2, axis=-1) + 0.5 * np.sum(
        strains[..., 3:] ** 2, axis=-1
    )
    return float(np.sqrt(np.sum(part.qweights * sq)))


def l2_norm(part: MeshPart, nodal) -> float:
    """L2 norm of a nodal field (scalar or vector) over one mesh part."""
    nodal = np.asarray(nodal)
    if nodal.ndim == 1:
        nodal = nodal[:, None]
    vals = np.einsum("gn,enc->egc", HEX_SHAPE_Q, nodal[part.hexes])
    return float(np.sqrt(np.sum(part.qweights * np.sum(vals**2, axis=2))))


def h1_norm(part: MeshPart, nodal) -> float:
    """Full H1 norm (field plus all first derivatives) of a nodal field."""
    dndx = element_gradients(part)
    ue = np.asarray(nodal)[part.hexes]  # (E, 8, 3)
    grads = np.einsum("egnd,enc->egcd", dndx, ue)
    vals = np.einsum("gn,enc->egc", HEX_SHAPE_Q, ue)
    dens = np.sum(grads**2, axis=(2, 3)) + np.sum(vals**2, axis=2)
    return float(np.sqrt(np.sum(part.qweights * dens)))


def diagnostics(u: RescaledDisplacement, mesh: MultidomainMesh,
                p: ScalingParams) -> dict:
    """A-priori bound report: scaled strain norms and H1 norms.

    Along a schedule these stay bounded (coercivity plus the normalized
    sources); the plate strain norm carries the sqrt(q) weight that appears
    in the energy estimate.
    """
    n_ea = scaled_strain_norm(mesh.beam, u.u_a, beam_scale_voigt(p.r))
    n_eb = scaled_strain_norm(mesh.plate, u.u_b, plate_scale_voigt(p.eps))
    return {
        "norm_ea": n_ea,
        "norm_eb_weighted": float(np.sqrt(p.q) * n_eb),
        "h1_a": h1_norm(mesh.beam, u.u_a),
        "h1_b": h1_norm(mesh.plate, u.u_b),
    }


def tie_residuals(u: RescaledDisplacement, mesh: MultidomainMesh,
                  junction: JunctionMap, p: ScalingParams):
    """Max violation of the two transmission ties at beam bottom nodes."""
    interp = junction.interpolate(
        u.u_b.reshape(mesh.plate.n_nodes, 3)
    )
    bottom = u.u_a[junction.beam_nodes]
    horiz = np.max(np.abs(bottom[:, :2] - p.eps * p.r * interp[:, :2]))
    vert = np.max(np.abs(bottom[:, 2] - interp[:, 2]))
    return float(horiz), float(vert)


def dump_solution(u: RescaledDisplacement) -> dict:
    """JSON-ready nodal field export keyed by node id."""
    return {
        "beam": {str(i): [float(v) for v in row] for i, row in enumerate(u.u_a)},
        "plate": {str(i): [float(v) for v in row] for i, row in enumerate(u.u_b)},
    }
