"""Command line interface.

``beamplate study --config study.toml --out results/`` runs a full
convergence study and writes ``report.csv``/``report.json``, figures and
optional corrector profiles.  ``beamplate dump-mesh`` writes the plain-text
node/element listings of the reference meshes.
"""

from __future__ import annotations

import argparse
import sys

from . import study as study_mod
from .mesh import build_multidomain_mesh, dump_mesh


def _add_study_parser(sub):
    p = sub.add_parser("study", help="run a convergence study")
    p.add_argument("--config", required=True, help="TOML study config")
    p.add_argument("--out", default="study_out", help="output directory")
    p.add_argument(
        "--format", choices=("csv", "json", "both"), default="both",
        help="report format(s) to write",
    )
    p.add_argument(
        "--regime", choices=study_mod.REGIMES, default=None,
        help="override the regime from the config",
    )
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-figures", action="store_true")
    return p


def _add_dump_parser(sub):
    p = sub.add_parser("dump-mesh", help="write plain-text mesh listings")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="mesh_out")
    return p


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="beamplate")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_study_parser(sub)
    _add_dump_parser(sub)
    args = parser.parse_args(argv)

    cfg = study_mod.load_config(args.config)
    if args.command == "study":
        if args.regime is not None and args.regime != cfg.regime:
            cfg = study_mod.StudyConfig(
                **{**cfg.__dict__, "regime": args.regime}
            )
        report = study_mod.run_study(cfg, threads=args.threads)
        written = study_mod.write_report(
            report, args.out, fmt=args.format, figures=not args.no_figures
        )
        for row in report.rows:
            print(
                f"eps={row.eps:g} q={row.q_eps:g} E={row.E_eps:.6g} "
                f"gap={row.gap:.3e} J=({', '.join(f'{j:.2e}' for j in row.residuals)})"
            )
        print(f"limit energy: {report.limit_energy:.6g}")
        for path in written:
            print("wrote", path)
        return 0

    if args.command == "dump-mesh":
        import os

        mesh = build_multidomain_mesh(
            cfg.omega_a,
            cfg.omega_b,
            beam_divisions=cfg.beam_mesh,
            plate_half_divisions=cfg.plate_half_divisions,
            plate_nz=cfg.plate_nz,
            plate_grading=cfg.plate_grading,
            r_min=cfg.r_min,
        )
        os.makedirs(args.out, exist_ok=True)
        for name, part in (("beam", mesh.beam), ("plate", mesh.plate)):
            path = os.path.join(args.out, f"{name}_mesh.txt")
            with open(path, "w") as fh:
                fh.write(dump_mesh(part))
            print("wrote", path)
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
