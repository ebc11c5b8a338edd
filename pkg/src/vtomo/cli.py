"""
Command-line interface.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io, pipeline
from .errors import SolverError, VtomoError
from .geometry import build_disk_mesh, read_mesh, write_mesh
from .plot import STYLES
from .rays import write_triplets

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args) -> io.ExperimentConfig:
    if not args.config:
        raise VtomoError("this command needs --config")
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    return io.load_config(args.config, overrides)


def cmd_mesh_gen(args):
    if args.h is None and not args.config:
        raise VtomoError("mesh-gen needs --h or --config")
    if args.h is not None:
        mesh = build_disk_mesh(args.radius, args.h, args.sigma)
    else:
        cfg = _config(args)
        mesh = build_disk_mesh(cfg.radius, cfg.fine_h if args.which == "fine" else cfg.coarse_h, cfg.sigma)
    path = Path(args.output)
    write_mesh(mesh, path)
    logging.info("wrote %s (%d nodes, %d elements)", path, mesh.n_nodes, mesh.n_elements)


def cmd_mesh_info(args):
    mesh = read_mesh(args.mesh)
    lengths = mesh.edge_lengths
    print(f"nodes = {mesh.n_nodes}")
    print(f"elements = {mesh.n_elements}")
    print(f"boundary_nodes = {len(mesh.boundary_nodes)}")
    print(f"edges = {len(lengths)}")
    print(f"mean_edge = {io.fmt(lengths.mean())}")
    print(f"max_edge = {io.fmt(lengths.max())}")
    print(f"min_area = {io.fmt(mesh.areas.min())}")
    print(f"total_area = {io.fmt(mesh.areas.sum())}")


def cmd_simulate(args):
    cfg = _config(args)
    for p in pipeline.simulate(cfg, cfg.output_dir):
        logging.info("wrote %s", p)


def cmd_assemble(args):
    cfg = _config(args)
    ops = pipeline.operators(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_mesh(ops.setup.mesh, out / "coarse_mesh.txt")
    write_triplets(ops.R_long, out / "R_long.txt")
    write_triplets(ops.R_trans, out / "R_trans.txt")
    logging.info("ray matrices %s written to %s", ops.R_long.shape, out)


def cmd_reconstruct(args):
    cfg = _config(args)
    for p in pipeline.reconstruct(cfg, cfg.output_dir):
        logging.info("wrote %s", p)


def cmd_evaluate(args):
    cfg = _config(args)
    path, rows = pipeline.evaluate_outputs(cfg, cfg.output_dir)
    for label, r in rows:
        logging.info("%s: MR %.4g  CS %.4g  loc_error %.4g", label, r.mr, r.cs, r.loc_error)
    logging.info("wrote %s", path)


def cmd_plot(args):
    pipeline.plot_field(args.field, args.output, args.style, title=args.title or "")
    logging.info("wrote %s", args.output)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vtomo", description="Vector field tomography experiments.")
    p.add_argument("--config", help="experiment config file (key = value lines)")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--seed", type=int, help="base noise seed (overrides seed)")
    p.add_argument("--quiet", action="store_true", help="only report errors")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("mesh-gen", help="write a disk mesh")
    s.add_argument("output")
    s.add_argument("--h", type=float, help="target edge length (otherwise taken from the config)")
    s.add_argument("--radius", type=float, default=1.0)
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--which", choices=("fine", "coarse"), default="coarse")
    s.set_defaults(func=cmd_mesh_gen)

    s = sub.add_parser("mesh-info", help="print mesh statistics")
    s.add_argument("mesh")
    s.set_defaults(func=cmd_mesh_info)

    sub.add_parser("simulate", help="forward solve and noisy measurements").set_defaults(func=cmd_simulate)
    sub.add_parser("assemble", help="write coarse-mesh ray matrices").set_defaults(func=cmd_assemble)
    sub.add_parser("reconstruct", help="invert every realization").set_defaults(func=cmd_reconstruct)
    sub.add_parser("evaluate", help="MR, CS and localization per realization").set_defaults(func=cmd_evaluate)

    s = sub.add_parser("plot", help="render a field CSV as SVG")
    s.add_argument("field")
    s.add_argument("output")
    s.add_argument("--style", choices=STYLES, default="both")
    s.add_argument("--title")
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s", force=True)
    try:
        args.func(args)
    except (SolverError, np.linalg.LinAlgError) as exc:
        logging.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (VtomoError, OSError) as exc:
        logging.error("%s", exc)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
