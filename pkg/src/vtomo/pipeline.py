"""
End-to-end experiment steps operating on an output directory.

``simulate`` -> ``reconstruct`` -> ``evaluate`` each read what the previous
step wrote; meshes and chords are rebuilt deterministically from the config.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np

from . import io
from .errors import GeometryError, SolverError
from .forward import (DipoleSource, add_noise, build_projection, gradient_field, longitudinal_data,
                      project, solve_potential)
from .geometry import Chord, ElectrodeLayout, TriMesh, build_disk_mesh, enumerate_chords, place_electrodes
from .inverse import ADMMSolver, build_laplacian, build_weights, weighted_laplacian
from .metrics import EvalResult, evaluate
from .plot import render_svg
from .rays import Flavor, RayMatrix, assemble

logger = logging.getLogger(__name__)

POTENTIALS = "potentials.csv"
TRUE_FIELD = "true_field.csv"
CLEAN = "measurements_clean.csv"
MEAN_FIELD = "recon_mean.csv"
EVALUATION = "evaluation.csv"


def measurement_name(k: int) -> str:
    return f"measurements_{k:03d}.csv"


def recon_name(k: int) -> str:
    return f"recon_{k:03d}.csv"


def report_name(k: int) -> str:
    return f"report_{k:03d}.txt"


@dataclass
class Setup:
    mesh: TriMesh
    layout: ElectrodeLayout
    chords: List[Chord]


def setup(cfg: io.ExperimentConfig, h: float) -> Setup:
    mesh = build_disk_mesh(cfg.radius, h, cfg.sigma)
    layout = place_electrodes(mesh, cfg.n_electrodes)
    return Setup(mesh, layout, enumerate_chords(layout, mesh))


def source(cfg: io.ExperimentConfig) -> DipoleSource:
    return DipoleSource(cfg.dipole, cfg.moment)


def simulate(cfg: io.ExperimentConfig, out) -> List[Path]:
    """Fine-mesh forward solve, projected true field and noisy measurements."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    fine = setup(cfg, cfg.fine_h)
    coarse_mesh = build_disk_mesh(cfg.radius, cfg.coarse_h, cfg.sigma)
    src = source(cfg)
    u = solve_potential(fine.mesh, src)
    clean = longitudinal_data(u, fine.layout, fine.chords)
    e_true = project(build_projection(fine.mesh, coarse_mesh), gradient_field(fine.mesh, u))

    written = [out / POTENTIALS, out / TRUE_FIELD, out / CLEAN]
    io.write_potentials(written[0], fine.mesh, u)
    io.write_field(written[1], coarse_mesh, e_true)
    io.write_measurements(written[2], fine.chords, clean)
    for k in range(cfg.realizations):
        noisy, _ = add_noise(clean, cfg.snr_db, cfg.seed + k)
        path = out / measurement_name(k)
        io.write_measurements(path, fine.chords, noisy)
        written.append(path)
    logger.info("simulated %d realizations on %d fine nodes", cfg.realizations, fine.mesh.n_nodes)
    return written


@dataclass
class Operators:
    setup: Setup
    R_long: RayMatrix
    R_trans: RayMatrix
    W: object


def operators(cfg: io.ExperimentConfig) -> Operators:
    coarse = setup(cfg, cfg.coarse_h)
    R_long = assemble(coarse.mesh, coarse.chords, Flavor.LONGITUDINAL)
    R_trans = assemble(coarse.mesh, coarse.chords, Flavor.TRANSVERSE)
    W = weighted_laplacian(build_laplacian(coarse.mesh), build_weights(R_long))
    return Operators(coarse, R_long, R_trans, W)


def reconstruct(cfg: io.ExperimentConfig, out) -> List[Path]:
    """Solve every realization on the coarse mesh and write the nodewise mean."""
    out = Path(out)
    ops = operators(cfg)
    solver = ADMMSolver(ops.R_long, ops.R_trans, ops.W)
    data = np.column_stack([io.read_measurements(out / measurement_name(k), ops.setup.chords)
                            for k in range(cfg.realizations)])
    # all realizations share the operators, so they are iterated as one batch
    try:
        results = solver.solve_many(data, cfg.alpha, cfg.beta)
    except SolverError as exc:
        raise SolverError(f"reconstruction failed: {exc}", exc.residuals) from exc
    fields = []
    written = []
    for k, (e, rep) in enumerate(results):
        logger.info("realization %d: objective %.6g after %d iterations (%.1f s)",
                    k, rep.objective, rep.iterations, rep.seconds)
        io.write_field(out / recon_name(k), ops.setup.mesh, e)
        (out / report_name(k)).write_text(io.format_report(rep))
        written += [out / recon_name(k), out / report_name(k)]
        fields.append(e)
    io.write_field(out / MEAN_FIELD, ops.setup.mesh, np.mean(fields, axis=0))
    written.append(out / MEAN_FIELD)
    return written


def _field_on(mesh: TriMesh, path) -> np.ndarray:
    nodes, e = io.read_field(path)
    if nodes.shape != mesh.nodes.shape or not np.allclose(nodes, mesh.nodes, rtol=0, atol=1e-12):
        raise GeometryError(f"{path}: field nodes do not match the coarse mesh")
    return e


def evaluate_outputs(cfg: io.ExperimentConfig, out) -> Tuple[Path, List[Tuple[str, EvalResult]]]:
    out = Path(out)
    mesh = build_disk_mesh(cfg.radius, cfg.coarse_h, cfg.sigma)
    src = source(cfg)
    e_true = _field_on(mesh, out / TRUE_FIELD)
    rows = []
    for k in range(cfg.realizations):
        rows.append((str(k), evaluate(_field_on(mesh, out / recon_name(k)), e_true, mesh, src)))
    rows.append(("mean", evaluate(_field_on(mesh, out / MEAN_FIELD), e_true, mesh, src)))
    io.write_evaluation(out / EVALUATION, rows)
    return out / EVALUATION, rows


def plot_field(field_csv, out_svg, style: str = "both", title: str = "") -> Path:
    nodes, e = io.read_field(field_csv)
    Path(out_svg).write_text(render_svg(nodes, e, style, title=title))
    return Path(out_svg)

