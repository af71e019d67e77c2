"""Batch driver: schedule generation, per-case solves, trend report.

One study fixes geometry, materials and a physical source family, then
walks a strictly decreasing eps schedule.  Each case is normalized,
rescaled, solved in 3D and post-processed (energies, a-priori norms,
junction residuals, corrector distances to the limit solution); a single
limit solve provides the reference energy of the regime.  Rows are
assembled in schedule order with fixed reduction orders throughout, so a
repeated run reproduces the report bit for bit.
"""

from __future__ import annotations

import concurrent.futures
import json
from dataclasses import dataclass, field

import numpy as np

from . import __version__, correctors, scaling, solver3d
from .limit_solver import LimitModel, LimitState, junction_audit
from .mesh import CrossSection, MultidomainMesh, build_multidomain_mesh
from .scaling import PhysicalSources, ScalingParams
from .solver3d import RescaledDisplacement
from .tensors import Tensor4, isotropic

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

REGIMES = ("finite", "infinite", "zero")

CSV_COLUMNS = [
    "eps", "r", "k", "q_eps", "lambda", "E_eps", "E_limit", "gap",
    "J1", "J2", "J3", "J4", "J5", "J6",
    "n_ea", "n_eb_w", "h1_a", "h1_b",
    "corr_c", "corr_v3", "corr_w", "corr_vb", "corr_wb3",
    "dofs", "residual",
]


@dataclass
class StudyConfig:
    """Validated study description (see the README for the file grammar)."""

    omega_a: CrossSection = CrossSection(0.5, 0.5)
    omega_b: CrossSection = CrossSection(1.0, 1.0)
    beam_mesh: tuple = (6, 6, 24)
    plate_half_divisions: int = 20
    plate_nz: int = 4
    plate_grading: float = 1.25
    tensor_a_spec: dict = field(default_factory=lambda: {"type": "isotropic", "lam": 1.0, "mu": 1.0})
    tensor_b_spec: dict = field(default_factory=lambda: {"type": "isotropic", "lam": 1.0, "mu": 1.0})
    eps_list: tuple = (0.4, 0.3, 0.2)
    regime: str = "finite"
    q_target: float = 1.0
    limit_beam_levels: int = 36
    limit_beam_xy: int = 8
    limit_plate_half: int = 28
    limit_plate_grading: float = 1.18
    limit_plate_levels: int = 6
    sources: dict = field(default_factory=dict)
    solver_rtol: float = 1e-10
    write_profiles: bool = False

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        eps = list(self.eps_list)
        if any(b >= a for a, b in zip(eps, eps[1:])) or any(e <= 0 for e in eps):
            raise ValueError("eps_list must be positive and strictly decreasing")
        r_max = max(eps) ** scaling.SCHEDULE_EXPONENT
        if not self.omega_b.contains_scaled(self.omega_a, r_max):
            raise ValueError("largest scheduled junction patch escapes the plate")

    @property
    def r_min(self):
        return min(self.eps_list) ** scaling.SCHEDULE_EXPONENT

    @classmethod
    def from_dict(cls, cfg: dict) -> "StudyConfig":
        geo = cfg.get("geometry", {})
        mat = cfg.get("materials", {})
        sch = cfg.get("schedule", {})
        lim = cfg.get("limit", {})
        tol = cfg.get("tolerances", {})
        out = cfg.get("output", {})
        kw = {}
        if "omega_a" in geo:
            kw["omega_a"] = CrossSection(*geo["omega_a"])
        if "omega_b" in geo:
            kw["omega_b"] = CrossSection(*geo["omega_b"])
        if "beam_mesh" in geo:
            kw["beam_mesh"] = tuple(geo["beam_mesh"])
        for src_key, dst_key in (
            ("plate_half_divisions", "plate_half_divisions"),
            ("plate_nz", "plate_nz"),
            ("plate_grading", "plate_grading"),
        ):
            if src_key in geo:
                kw[dst_key] = geo[src_key]
        if "beam" in mat:
            kw["tensor_a_spec"] = dict(mat["beam"])
        if "plate" in mat:
            kw["tensor_b_spec"] = dict(mat["plate"])
        if "eps_list" in sch:
            kw["eps_list"] = tuple(float(e) for e in sch["eps_list"])
        if "regime" in sch:
            kw["regime"] = sch["regime"]
        if "q_target" in sch:
            kw["q_target"] = float(sch["q_target"])
        for src_key, dst_key in (
            ("beam_levels", "limit_beam_levels"),
            ("beam_xy", "limit_beam_xy"),
            ("plate_half_divisions", "limit_plate_half"),
            ("plate_grading", "limit_plate_grading"),
            ("plate_levels", "limit_plate_levels"),
        ):
            if src_key in lim:
                kw[dst_key] = lim[src_key]
        kw["sources"] = cfg.get("sources", {})
        if "solver_rtol" in tol:
            kw["solver_rtol"] = float(tol["solver_rtol"])
        if "profiles" in out:
            kw["write_profiles"] = bool(out["profiles"])
        return cls(**kw)


def load_config(path) -> StudyConfig:
    with open(path, "rb") as fh:
        return StudyConfig.from_dict(tomllib.load(fh))


def build_tensor(spec: dict) -> Tensor4:
    kind = spec.get("type", "isotropic")
    if kind == "isotropic":
        return isotropic(float(spec["lam"]), float(spec["mu"]))
    if kind == "voigt":
        return Tensor4.from_voigt_upper(spec["upper"])
    raise ValueError(f"unknown tensor spec type {kind!r}")


def default_sources() -> dict:
    """Desk-scale default family: a vertical plate-face pressure (the
    surviving load), plus a beam body force and a lateral twisting traction
    that fade along the schedule and feed the junction residuals."""
    return {
        "F": {"beam": ["1.0", "0.6", "0"]},
        "H": {
            "beam_lateral": ["-2.0*(1-x3)*x2", "2.0*(1-x3)*x1", "0"],
            "plate_bottom": ["0", "0", "1 + 0.3*x1 + 0.2*x2"],
        },
    }


def default_config(regime="finite", **overrides) -> StudyConfig:
    kw = dict(sources=default_sources(), regime=regime)
    kw.update(overrides)
    return StudyConfig(**kw)


@dataclass
class CaseResult:
    """One row of the convergence report."""

    eps: float
    r: float
    k: float
    q_eps: float
    lam: float
    E_eps: float
    E_limit: float
    gap: float
    residuals: tuple  # J1..J6
    norms: dict
    corrector_errors: dict
    dofs: int
    solve_residual: float
    solve_seconds: float
    profiles: dict | None = None

    def csv_values(self):
        vals = [
            self.eps, self.r, self.k, self.q_eps, self.lam,
            self.E_eps, self.E_limit, self.gap, *self.residuals,
            self.norms["norm_ea"], self.norms["norm_eb_weighted"],
            self.norms["h1_a"], self.norms["h1_b"],
            self.corrector_errors["c"], self.corrector_errors["v3"],
            self.corrector_errors["w"], self.corrector_errors["vb"],
            self.corrector_errors["wb3"],
        ]
        return vals + [self.dofs, self.solve_residual]


@dataclass
class ConvergenceReport:
    regime: str
    rows: list
    limit_energy: float
    limit_audit: dict
    config_echo: dict

    def gaps(self):
        return [row.gap for row in self.rows]


def junction_residuals(u: RescaledDisplacement, mesh: MultidomainMesh,
                       p: ScalingParams, scale=1.0):
    """The six junction residuals of a solved case.

    J1/J2: footprint traces of the horizontal beam components; J3/J4:
    first-level slopes of their cross-section averages; J5: twist at the
    first interior level; J6: flatness of the plate trace over the shrunk
    footprint.  ``scale`` multiplies the displacement (the vanishing-q
    regime measures the q-weighted field).
    """
    beam = mesh.beam
    u_a = scale * u.u_a
    u_b = scale * u.u_b
    g = beam.grid
    bottom = u_a[beam.level_node_ids(0)]
    j12 = []
    for comp in range(2):
        vals = np.einsum("qn,cn->cq", g.shape_q, bottom[:, comp][g.quads])
        j12.append(float(np.sqrt(np.sum(g.qweights * vals**2))))
    area = mesh.omega_a.area
    avg0 = correctors._section_integral(beam, bottom[:, :2]) / area
    avg1 = (
        correctors._section_integral(
            beam, u_a[beam.level_node_ids(1)][:, :2]
        )
        / area
    )
    dz = beam.z_lines[1] - beam.z_lines[0]
    j34 = np.abs(avg1 - avg0) / dz
    c_eps = correctors.extract_twist(u_a, mesh, p.r)
    j5 = abs(float(c_eps[1]))
    top_grid = mesh.plate.grid
    top_vals = u_b[mesh.plate.level_node_ids(mesh.plate.nz), 2]
    pts = p.r * g.qpoints.reshape(-1, 2)
    trace = top_grid.interpolate(top_vals, pts).reshape(g.qpoints.shape[:2])
    origin = float(top_grid.interpolate(top_vals, np.zeros((1, 2)))[0])
    j6 = float(np.sqrt(np.sum(g.qweights * (trace - origin) ** 2)))
    return (j12[0], j12[1], float(j34[0]), float(j34[1]), j5, j6)


def _corrector_errors(u: RescaledDisplacement, mesh: MultidomainMesh,
                      p: ScalingParams, state: LimitState, regime: str):
    """L2 distances between extracted correctors and the limit fields."""
    beam, plate = mesh.beam, mesh.plate
    scale = p.q if regime == "zero" else 1.0
    bc = correctors.extract_beam(scale * u.u_a, mesh, p.r)
    pc = correctors.extract_plate(scale * u.u_b, mesh, p.eps)
    if state.beam is not None:
        c_ref = state.twist(bc.levels)
        v3_ref = state.beam_v3(beam.nodes)
        w_ref = np.stack(
            [state.beam_w(1, beam.nodes), state.beam_w(2, beam.nodes)], axis=1
        )
    else:
        c_ref = np.zeros_like(bc.c)
        v3_ref = np.zeros(beam.n_nodes)
        w_ref = np.zeros((beam.n_nodes, 2))
    if state.plate is not None:
        vb_ref = np.stack(
            [state.plate_v(1, plate.nodes), state.plate_v(2, plate.nodes)], axis=1
        )
        wb_ref = state.plate_w3(plate.nodes)
    else:
        vb_ref = np.zeros((plate.n_nodes, 2))
        wb_ref = np.zeros(plate.n_nodes)
    err_c = float(np.sqrt(np.trapezoid((bc.c - c_ref) ** 2, bc.levels)))
    return {
        "c": err_c,
        "v3": solver3d.l2_norm(beam, bc.v3 - v3_ref),
        "w": solver3d.l2_norm(beam, bc.w - w_ref),
        "vb": solver3d.l2_norm(plate, pc.v - vb_ref),
        "wb3": solver3d.l2_norm(plate, pc.w3 - wb_ref),
    }


def run_case(mesh, A_a, A_b, src, p, state, regime, rtol, want_profiles=False):
    lam = scaling.compute_lambda(src, p, mesh)
    rs = scaling.rescale_sources(src, p, mesh)
    u, stats = solver3d.solve_case(mesh, A_a, A_b, p, rs, rtol=rtol)
    E_eps = solver3d.rescaled_energy(u, mesh, A_a, A_b, p)
    E_limit = state.energy
    if regime == "zero":
        gap = abs(p.q * E_eps - E_limit)
    else:
        gap = abs(E_eps - E_limit)
    norms = solver3d.diagnostics(u, mesh, p)
    res = junction_residuals(u, mesh, p, scale=p.q if regime == "zero" else 1.0)
    errs = _corrector_errors(u, mesh, p, state, regime)
    profiles = None
    if want_profiles:
        scale = p.q if regime == "zero" else 1.0
        bc = correctors.extract_beam(scale * u.u_a, mesh, p.r)
        profiles = {
            "levels": bc.levels,
            "c": bc.c,
            "d1": bc.d[:, 0],
            "d2": bc.d[:, 1],
        }
    return CaseResult(
        eps=p.eps,
        r=p.r,
        k=p.k,
        q_eps=p.q,
        lam=lam,
        E_eps=E_eps,
        E_limit=E_limit,
        gap=gap,
        residuals=res,
        norms=norms,
        corrector_errors=errs,
        dofs=stats["dofs"],
        solve_residual=stats["residual"],
        solve_seconds=stats["solve_seconds"],
        profiles=profiles,
    )


def run_study(cfg: StudyConfig, threads=1) -> ConvergenceReport:
    """Full pipeline: schedule, limit solve, per-case solves, report rows."""
    mesh = build_multidomain_mesh(
        cfg.omega_a,
        cfg.omega_b,
        beam_divisions=cfg.beam_mesh,
        plate_half_divisions=cfg.plate_half_divisions,
        plate_nz=cfg.plate_nz,
        plate_grading=cfg.plate_grading,
        r_min=cfg.r_min,
    )
    A_a = build_tensor(cfg.tensor_a_spec)
    A_b = build_tensor(cfg.tensor_b_spec)
    src = PhysicalSources.from_dict(cfg.sources)
    if src.is_zero:
        raise ValueError("study sources are identically zero")
    params = scaling.schedule(cfg.eps_list, cfg.regime, cfg.q_target)

    lim_src = scaling.limit_sources(src, mesh)
    model = LimitModel(
        cfg.omega_a,
        cfg.omega_b,
        A_a,
        A_b,
        beam_levels=cfg.limit_beam_levels,
        beam_xy=cfg.limit_beam_xy,
        plate_half=cfg.limit_plate_half,
        plate_grading=cfg.limit_plate_grading,
        plate_levels=cfg.limit_plate_levels,
    )
    state = model.solve(cfg.regime, cfg.q_target, lim_src)

    def one(p):
        return run_case(
            mesh, A_a, A_b, src, p, state, cfg.regime, cfg.solver_rtol,
            want_profiles=cfg.write_profiles,
        )

    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, params))
    else:
        rows = [one(p) for p in params]

    return ConvergenceReport(
        regime=cfg.regime,
        rows=rows,
        limit_energy=state.energy,
        limit_audit=junction_audit(state),
        config_echo=_config_echo(cfg),
    )


def _config_echo(cfg: StudyConfig) -> dict:
    return {
        "geometry": {
            "omega_a": [cfg.omega_a.hx, cfg.omega_a.hy],
            "omega_b": [cfg.omega_b.hx, cfg.omega_b.hy],
            "beam_mesh": list(cfg.beam_mesh),
            "plate_half_divisions": cfg.plate_half_divisions,
            "plate_nz": cfg.plate_nz,
            "plate_grading": cfg.plate_grading,
        },
        "materials": {"beam": cfg.tensor_a_spec, "plate": cfg.tensor_b_spec},
        "schedule": {
            "eps_list": list(cfg.eps_list),
            "regime": cfg.regime,
            "q_target": cfg.q_target,
        },
        "limit": {
            "beam_levels": cfg.limit_beam_levels,
            "beam_xy": cfg.limit_beam_xy,
            "plate_half_divisions": cfg.limit_plate_half,
            "plate_grading": cfg.limit_plate_grading,
            "plate_levels": cfg.limit_plate_levels,
        },
        "sources": cfg.sources,
    }


def emit_csv(report: ConvergenceReport) -> str:
    """Fixed-header CSV, one row per scheduled eps, full float precision."""
    lines = [",".join(CSV_COLUMNS)]
    for row in report.rows:
        vals = row.csv_values()
        cells = []
        for v in vals:
            if isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            else:
                cells.append(format(float(v), ".17g"))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def emit_json(report: ConvergenceReport) -> dict:
    import scipy

    rows = []
    for row in report.rows:
        rows.append(
            {
                "eps": row.eps,
                "r": row.r,
                "k": row.k,
                "q_eps": row.q_eps,
                "lambda": row.lam,
                "E_eps": row.E_eps,
                "E_limit": row.E_limit,
                "gap": row.gap,
                "junction_residuals": list(row.residuals),
                "norms": row.norms,
                "corrector_errors": row.corrector_errors,
                "solve_stats": {
                    "dofs": row.dofs,
                    "residual": row.solve_residual,
                    "seconds": row.solve_seconds,
                },
            }
        )
    return {
        "regime": report.regime,
        "limit_energy": report.limit_energy,
        "limit_audit": report.limit_audit,
        "rows": rows,
        "config": report.config_echo,
        "versions": {
            "beamplate": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }


def write_report(report: ConvergenceReport, out_dir, fmt="both",
                 figures=True) -> list:
    """Write report files (and figures) under ``out_dir``; returns paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    written = []
    if fmt in ("csv", "both"):
        path = os.path.join(out_dir, "report.csv")
        with open(path, "w") as fh:
            fh.write(emit_csv(report))
        written.append(path)
    if fmt in ("json", "both"):
        path = os.path.join(out_dir, "report.json")
        with open(path, "w") as fh:
            json.dump(emit_json(report), fh, indent=2)
        written.append(path)
    for row in report.rows:
        if row.profiles is None:
            continue
        pdir = os.path.join(out_dir, "profiles")
        os.makedirs(pdir, exist_ok=True)
        path = os.path.join(pdir, f"beam_profiles_eps{row.eps:g}.csv")
        cols = {k: v for k, v in row.profiles.items() if k != "levels"}
        with open(path, "w") as fh:
            fh.write(correctors.profiles_csv(row.profiles["levels"], cols))
        written.append(path)
    if figures:
        from .report import render_figures

        written.extend(render_figures(report, os.path.join(out_dir, "figures")))
    return written
