"""
Acceptance criteria for the complete reconstruction workflow.

Each test records one PASS/FAIL line; the lines are printed together at the
end of the pytest run (see ``conftest.py``).
"""
import math
import time

import numpy as np
import pytest

from oracles import affine_chord_integral, affine_field, disk_dipole_potential, rotate_field
from test_inverse import ALPHA, BETA, _reference_objective, _tiny_instance
from vtomo import io, pipeline
from vtomo.forward import DipoleSource, assemble_stiffness, dipole_rhs, gradient_field, longitudinal_data, solve_potential
from vtomo.geometry import build_disk_mesh, clip_chord, enumerate_chords, place_electrodes
from vtomo.inverse import build_laplacian, build_weights, solve, transverse_profile, weighted_laplacian
from vtomo.metrics import cosine_similarity, localize, magnitude_ratio, magnitudes
from vtomo.rays import apply, assemble

VERDICTS = []

# pinned tolerances
AFFINE_RTOL = 1e-10
ENDPOINT_ATOL = 1e-12
ORDER, ORDER_SLACK = 2.0, 0.3
ANALYTIC_3K, ANALYTIC_12K = 0.05, 0.02
ORACLE_RTOL = 1e-6
MAX_RATIO_RANGE = (0.01, 1.0)
SPARSE_LEVEL, SPARSE_FRACTION = 0.05, 0.10
METRIC_TOL = 1e-12
PROTOCOL_SECONDS = 300.0
ORACLE_SECONDS = 60.0

# protocol geometry
FINE_H, COARSE_H = 1 / 32, 1 / 16
THETA = math.pi / 8
SOURCE = 0.6 * np.array([math.cos(THETA), math.sin(THETA)])
ORIENTATIONS = {
    "radial": (math.cos(THETA), math.sin(THETA)),
    "tangential": (-math.sin(THETA), math.cos(THETA)),
}
SNRS = (40.0, 20.0)
REALIZATIONS = 10


def verdict(label, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
    VERDICTS.append(line)
    print(line)
    assert ok, line


# -- 1 -----------------------------------------------------------------------

def test_criterion_1_chord_count():
    mesh = build_disk_mesh(1.0, COARSE_H)
    m = len(enumerate_chords(place_electrodes(mesh, 32), mesh))
    verdict("1 chord count", m == 496, f"n=32 gives m={m} (expected 496)")


# -- 2 -----------------------------------------------------------------------

def test_criterion_2_affine_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst_l = worst_t = worst_rot = 0.0
    for h, n in ((0.25, 12), (0.1, 16), (COARSE_H, 32)):
        mesh = build_disk_mesh(1.0, h)
        chords = enumerate_chords(place_electrodes(mesh, n), mesh)
        Rl, Rt = assemble(mesh, chords), assemble(mesh, chords, "transverse")
        A, c = rng.normal(size=(2, 2)), rng.normal(size=2)
        e = affine_field(mesh, A, c)
        gl, gt = apply(Rl, e), apply(Rt, e)
        scale = np.abs(e).max()
        for i, ch in enumerate(chords):
            # relative to the integral, floored at length * field scale for near-zero integrals
            ref = affine_chord_integral(ch.a, ch.b, ch.s_hat, A, c)
            worst_l = max(worst_l, abs(gl[i] - ref) / max(abs(ref), ch.length * scale))
            ref = affine_chord_integral(ch.a, ch.b, ch.s_perp, A, c)
            worst_t = max(worst_t, abs(gt[i] - ref) / max(abs(ref), ch.length * scale))
        rot = apply(Rl, rotate_field(e, 1))
        worst_rot = max(worst_rot, np.abs(gt - rot).max() / np.abs(gt).max())
    secs = time.perf_counter() - t0
    ok = max(worst_l, worst_t, worst_rot) <= AFFINE_RTOL and secs < 1.0
    verdict("2 ray-matrix exactness", ok,
            f"max rel err longitudinal {worst_l:.1e}, transverse {worst_t:.1e}, "
            f"rotation identity {worst_rot:.1e} (tol {AFFINE_RTOL:g}); {secs:.2f} s for 3 meshes")


# -- 3 -----------------------------------------------------------------------

def _quadratic_endpoint_error(h):
    mesh = build_disk_mesh(1.0, h)
    layout = place_electrodes(mesh, 32)
    chords = enumerate_chords(layout, mesh)
    u = (mesh.nodes ** 2).sum(axis=1)
    got = apply(assemble(mesh, chords), gradient_field(mesh, u))
    return np.abs(got - longitudinal_data(u, layout, chords)).max()


def test_criterion_3_endpoint_identity():
    mesh = build_disk_mesh(1.0, COARSE_H)
    layout = place_electrodes(mesh, 32)
    chords = enumerate_chords(layout, mesh)
    u = mesh.nodes[:, 0].copy()
    lin = np.abs(apply(assemble(mesh, chords), gradient_field(mesh, u))
                 - longitudinal_data(u, layout, chords)).max()
    e1, e2 = _quadratic_endpoint_error(COARSE_H), _quadratic_endpoint_error(COARSE_H / 2)
    order = math.log2(e1 / e2)
    ok = lin <= ENDPOINT_ATOL and abs(order - ORDER) <= ORDER_SLACK
    verdict("3 endpoint identity", ok,
            f"u=x max err {lin:.1e} (tol {ENDPOINT_ATOL:g}); u=x^2+y^2 err {e1:.3e} -> {e2:.3e}, "
            f"order {order:.2f} (need {ORDER} +- {ORDER_SLACK})")


# -- 4 -----------------------------------------------------------------------

def _analytic_error(h):
    mesh = build_disk_mesh(1.0, h)
    u = solve_potential(mesh, DipoleSource([0.0, 0.0], [1.0, 0.0]))
    b = mesh.boundary_nodes
    ref = disk_dipole_potential(mesh.nodes[b], [0.0, 0.0], [1.0, 0.0])
    return mesh.n_nodes, np.linalg.norm(u[b] - ref) / np.linalg.norm(ref)


def test_criterion_4_forward_analytic():
    t0 = time.perf_counter()
    n1, err1 = _analytic_error(1 / 32)
    n2, err2 = _analytic_error(1 / 64)
    secs = time.perf_counter() - t0
    ok = err1 < ANALYTIC_3K and err2 < ANALYTIC_12K and secs < 10
    verdict("4 forward analytic oracle", ok,
            f"{n1} nodes rel L2 {err1:.3%} (< {ANALYTIC_3K:.0%}), {n2} nodes {err2:.3%} "
            f"(< {ANALYTIC_12K:.0%}); {secs:.1f} s")


# -- 5 -----------------------------------------------------------------------

def test_criterion_5_solver_oracle():
    t0 = time.perf_counter()
    errs = []
    for seed in range(20):
        Rl, Rt, W, I = _tiny_instance(seed)
        _, rep = solve(Rl, Rt, W, I, ALPHA, BETA)
        ref = _reference_objective(Rl, Rt, W, I, ALPHA, BETA)
        errs.append(abs(rep.objective - ref) / ref)
    secs = time.perf_counter() - t0
    ok = max(errs) <= ORACLE_RTOL and secs < ORACLE_SECONDS
    verdict("5 solver oracle", ok,
            f"20 instances, max rel objective gap {max(errs):.1e} (tol {ORACLE_RTOL:g}); {secs:.1f} s")


# -- 6 -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def protocol(tmp_path_factory):
    """Run simulate / reconstruct / evaluate for both orientations at both noise levels."""
    root = tmp_path_factory.mktemp("protocol")
    t0 = time.perf_counter()
    runs = {}
    for name, q in ORIENTATIONS.items():
        for snr in SNRS:
            cfg = io.ExperimentConfig(fine_h=FINE_H, coarse_h=COARSE_H, dipole_x=SOURCE[0],
                                      dipole_y=SOURCE[1], qx=q[0], qy=q[1], snr_db=snr,
                                      alpha=ALPHA, beta=BETA, realizations=REALIZATIONS)
            out = root / f"{name}_{int(snr)}"
            pipeline.simulate(cfg, out)
            pipeline.reconstruct(cfg, out)
            _, rows = pipeline.evaluate_outputs(cfg, out)
            runs[name, snr] = (cfg, out, rows)
    seconds = time.perf_counter() - t0
    ops = pipeline.operators(runs["radial", 40.0][0])
    return runs, ops, seconds


def _mean_field(out):
    return io.read_field(out / pipeline.MEAN_FIELD)[1]


def test_criterion_6a_localization(protocol):
    runs, ops, _ = protocol
    mesh = ops.setup.mesh
    edge = mesh.mean_edge_length
    parts, ok = [], True
    for name in ORIENTATIONS:
        cfg, out, _ = runs[name, 40.0]
        k, err = localize(_mean_field(out), mesh, pipeline.source(cfg))
        ok &= err <= edge
        parts.append(f"{name} argmax node {k} at |x|={np.linalg.norm(mesh.nodes[k]):.3f}, error {err:.4f}")
    verdict("6a localization at 40 dB", ok, "; ".join(parts) + f" (tol one coarse edge = {edge:.4f})")


def test_criterion_6b_magnitude_ratio(protocol):
    runs, _, _ = protocol
    lo, hi = MAX_RATIO_RANGE
    parts, ok = [], True
    for (name, snr), (_, _, rows) in runs.items():
        ratio = dict(rows)["mean"].max_mag_ratio
        ok &= lo <= ratio < hi
        parts.append(f"{name} {snr:g} dB {ratio:.3f}")
    verdict("6b max magnitude ratio", ok, ", ".join(parts) + f" (need [{lo}, {hi}))")


def test_criterion_6c_noise_degradation(protocol):
    runs, _, _ = protocol
    parts, ok = [], True
    for name in ORIENTATIONS:
        stats = {}
        for snr in SNRS:
            rows = [r for label, r in runs[name, snr][2] if label != "mean"]
            stats[snr] = (np.mean([r.mr for r in rows]), np.mean([r.cs for r in rows]))
        (mr40, cs40), (mr20, cs20) = stats[40.0], stats[20.0]
        good = cs20 < cs40 and abs(mr20 - 1) > abs(mr40 - 1)
        ok &= good
        parts.append(f"{name} CS {cs40:.4f} -> {cs20:.4f}, MR {mr40:.4f} -> {mr20:.4f}")
    verdict("6c degradation 40 -> 20 dB", ok, "; ".join(parts) + " (CS must drop, |MR-1| must grow)")


def test_criterion_6d_transverse_sparsity(protocol):
    runs, ops, _ = protocol
    parts, ok = [], True
    for name in ORIENTATIONS:
        p = np.abs(transverse_profile(ops.R_trans, _mean_field(runs[name, 40.0][1])))
        frac = float(np.mean(p > SPARSE_LEVEL * p.max()))
        ok &= frac <= SPARSE_FRACTION
        parts.append(f"{name} {frac:.1%}")
    verdict("6d transverse sparsity at 40 dB", ok,
            ", ".join(parts) + f" of entries above {SPARSE_LEVEL:.0%} of max (need <= {SPARSE_FRACTION:.0%})")


def test_criterion_6_runtime(protocol):
    runs, ops, seconds = protocol
    mesh = ops.setup.mesh
    fine_nodes = build_disk_mesh(1.0, FINE_H).n_nodes
    verdict("6 protocol runtime", seconds < PROTOCOL_SECONDS,
            f"{len(runs)} runs x {REALIZATIONS} realizations in {seconds:.0f} s (< {PROTOCOL_SECONDS:.0f} s); "
            f"coarse {mesh.n_nodes} nodes, fine {fine_nodes} nodes")


# -- 7 -----------------------------------------------------------------------

def test_criterion_7_metric_identities():
    mesh = build_disk_mesh(1.0, COARSE_H)
    e = gradient_field(mesh, solve_potential(mesh, DipoleSource(SOURCE, ORIENTATIONS["radial"])))
    vals = {
        "MR(e,e)-1": magnitude_ratio(e, e)[0] - 1,
        "CS(e,e)-1": cosine_similarity(e, e)[0] - 1,
        "CS(e,-e)+1": cosine_similarity(e, -e)[0] + 1,
        "CS(e,rot90 e)": cosine_similarity(e, rotate_field(e, 1))[0],
    }
    worst = max(abs(v) for v in vals.values())
    verdict("7 metric identities", worst <= METRIC_TOL,
            ", ".join(f"{k} {v:.1e}" for k, v in vals.items()) + f" (tol {METRIC_TOL:g})")


# -- 8 -----------------------------------------------------------------------

def test_criterion_8_invariants():
    mesh = build_disk_mesh(1.0, COARSE_H)
    layout = place_electrodes(mesh, 32)
    chords = enumerate_chords(layout, mesh)
    N = mesh.n_nodes
    checks = {}
    checks["stiffness row sums"] = (np.abs(assemble_stiffness(mesh) @ np.ones(N)).max(), 1e-12)
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(20):
        r, t = 0.9 * rng.random(), 2 * math.pi * rng.random()
        b = dipole_rhs(mesh, DipoleSource([r * math.cos(t), r * math.sin(t)], rng.normal(size=2)))
        worst = max(worst, abs(b.sum()))
    checks["dipole rhs sums"] = (worst, 1e-12)
    D = build_laplacian(mesh)
    W = weighted_laplacian(D, build_weights(assemble(mesh, chords)))
    const = np.concatenate([np.full(N, 1.7), np.full(N, -0.4)])
    checks["D constants"] = (np.abs(D @ const).max(), 1e-12)
    checks["W constants"] = (np.abs(W @ const).max(), 1e-12)
    worst = 0.0
    for ch in chords:
        total = sum(s.length for s in clip_chord(ch, mesh))
        worst = max(worst, abs(total - ch.length) / ch.length)
    checks["chord length conservation"] = (worst, 1e-9)
    ok = all(v <= tol for v, tol in checks.values())
    verdict("8 invariant suites", ok, ", ".join(f"{k} {v:.1e} (tol {t:g})" for k, (v, t) in checks.items()))
