"""
Plain-text file formats: experiment config, CSV tables and solver reports.

Floats are written with ``repr`` (shortest round-trip decimal) so that
identical inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import math
from dataclasses import MISSING, dataclass, fields
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DimensionMismatchError, ParseError
from .geometry import Chord, ElectrodeLayout, TriMesh
from .inverse import DEFAULT_ALPHA, DEFAULT_BETA, SolveReport
from .metrics import EvalResult

MEASUREMENT_HEADER = ["chord_index", "electrode_a", "electrode_b", "value"]
POTENTIAL_HEADER = ["node", "x", "y", "u"]
FIELD_HEADER = ["node", "x", "y", "ex", "ey"]
EVAL_HEADER = ["realization", "mr", "cs", "loc_node", "loc_error", "max_mag_ratio"]


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


# -- config ----------------------------------------------------------------

@dataclass
class ExperimentConfig:
    fine_h: float
    coarse_h: float
    dipole_x: float
    dipole_y: float
    qx: float
    qy: float
    radius: float = 1.0
    n_electrodes: int = 32
    sigma: float = 1.0
    snr_db: float = 40.0
    seed: int = 0
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    realizations: int = 10
    output_dir: str = "out"

    def __post_init__(self):
        for name in ("fine_h", "coarse_h", "radius", "sigma"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive finite number, got {v!r}")
        if self.fine_h > self.coarse_h:
            raise ConfigError("fine_h must not exceed coarse_h")
        if self.n_electrodes < 3:
            raise ConfigError("n_electrodes must be at least 3")
        if self.realizations < 1:
            raise ConfigError("realizations must be at least 1")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be non-negative")
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ConfigError(f"snr_db must be a number or inf, got {self.snr_db!r}")
        if not (math.isfinite(self.qx) and math.isfinite(self.qy)) or (self.qx == 0 and self.qy == 0):
            raise ConfigError("dipole moment (qx, qy) must be finite and non-zero")

    @property
    def dipole(self) -> np.ndarray:
        return np.array([self.dipole_x, self.dipole_y])

    @property
    def moment(self) -> np.ndarray:
        return np.array([self.qx, self.qy])


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_REQUIRED = [f.name for f in fields(ExperimentConfig) if f.default is MISSING]


def _convert(key, raw, path, lineno):
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{path}:{lineno}: cannot parse {key} = {raw!r} as {kind}") from None


def parse_config(text: str, path="<config>", overrides: Optional[Dict[str, object]] = None) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values: Dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = _convert(key, val, path, lineno)
    values.update(overrides or {})
    missing = [k for k in _TYPES if k in _REQUIRED and k not in values]
    if missing:
        raise ConfigError(f"{path}: missing required key {missing[0]!r}")
    return ExperimentConfig(**values)


def load_config(path, overrides=None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path), overrides)


def dump_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{f.name} = {fmt(v)}\n"
                   for f in fields(cfg) for v in [getattr(cfg, f.name)])


# -- CSV tables --------------------------------------------------------------

def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def _read_csv(path, header, types) -> List[list]:
    out = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ParseError(f"cannot open: {exc}", path) from exc
    with fh:
        reader = csv.reader(fh)
        head = next(reader, None)
        if head is None or [h.strip() for h in head] != header:
            raise ParseError(f"expected header {','.join(header)}", path, 1)
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} columns, got {len(row)}", path, lineno)
            try:
                vals = [t(c) for t, c in zip(types, row)]
            except ValueError:
                raise ParseError("malformed number", path, lineno) from None
            if any(isinstance(v, float) and math.isnan(v) for v in vals):
                raise ParseError("NaN value", path, lineno)
            out.append(vals)
    return out


def write_measurements(path, chords: Sequence[Chord], values) -> None:
    values = np.asarray(values, dtype=float)
    if len(values) != len(chords):
        raise DimensionMismatchError(f"{len(values)} values for {len(chords)} chords")
    _write_csv(path, MEASUREMENT_HEADER,
               ([i, c.endpoints[0], c.endpoints[1], v] for i, (c, v) in enumerate(zip(chords, values))))


def read_measurements(path, chords: Optional[Sequence[Chord]] = None) -> np.ndarray:
    """Measurement values in chord order; checks indices against ``chords`` if given."""
    rows = _read_csv(path, MEASUREMENT_HEADER, [int, int, int, float])
    for k, (i, a, b, _) in enumerate(rows):
        if i != k:
            raise ParseError(f"chord index {i} out of sequence (expected {k})", path, k + 2)
        if chords is not None:
            if k >= len(chords) or tuple(chords[k].endpoints) != (a, b):
                raise ParseError(f"row does not match chord {k}", path, k + 2)
    if chords is not None and len(rows) != len(chords):
        raise ParseError(f"{len(rows)} measurements for {len(chords)} chords", path)
    return np.array([r[3] for r in rows])


def write_potentials(path, mesh: TriMesh, u) -> None:
    _write_csv(path, POTENTIAL_HEADER,
               ([i, x, y, v] for i, ((x, y), v) in enumerate(zip(mesh.nodes, np.asarray(u)))))


def read_potentials(path) -> Tuple[np.ndarray, np.ndarray]:
    rows = _read_csv(path, POTENTIAL_HEADER, [int, float, float, float])
    _check_nodes(rows, path)
    a = np.array([r[1:] for r in rows]).reshape(-1, 3)
    return a[:, :2], a[:, 2]


def write_field(path, mesh: TriMesh, e) -> None:
    e = np.asarray(e, dtype=float)
    N = mesh.n_nodes
    if len(e) != 2 * N:
        raise DimensionMismatchError(f"field has length {len(e)}, expected {2 * N}")
    _write_csv(path, FIELD_HEADER,
               ([i, x, y, e[i], e[N + i]] for i, (x, y) in enumerate(mesh.nodes)))


def read_field(path) -> Tuple[np.ndarray, np.ndarray]:
    """Returns ``(node coordinates, stacked field)``."""
    rows = _read_csv(path, FIELD_HEADER, [int, float, float, float, float])
    _check_nodes(rows, path)
    a = np.array([r[1:] for r in rows]).reshape(-1, 4)
    return a[:, :2], np.concatenate([a[:, 2], a[:, 3]])


def _check_nodes(rows, path):
    for k, r in enumerate(rows):
        if r[0] != k:
            raise ParseError(f"node index {r[0]} out of sequence (expected {k})", path, k + 2)


def write_evaluation(path, results: Iterable[Tuple[str, EvalResult]]) -> None:
    _write_csv(path, EVAL_HEADER,
               ([label, r.mr, r.cs, r.loc_node, r.loc_error, r.max_mag_ratio] for label, r in results))


def read_evaluation(path) -> List[Tuple[str, EvalResult]]:
    rows = _read_csv(path, EVAL_HEADER, [str, float, float, int, float, float])
    return [(r[0], EvalResult(*r[1:])) for r in rows]


# -- solver report -----------------------------------------------------------

def format_report(rep: SolveReport) -> str:
    items = [("objective", rep.objective), ("fidelity", rep.fidelity),
             ("l1_transverse", rep.l1_transverse), ("l1_laplace", rep.l1_laplace),
             ("iters", rep.iterations), ("primal_residual", rep.primal_residual),
             ("dual_residual", rep.dual_residual), ("seconds", rep.seconds)]
    return "".join(f"{k} = {fmt(v)}\n" for k, v in items)


def parse_report(text: str) -> Dict[str, float]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", line=lineno)
        k, v = (s.strip() for s in line.split("=", 1))
        try:
            out[k] = float(v)
        except ValueError:
            raise ParseError(f"malformed value for {k}", line=lineno) from None
    return out
