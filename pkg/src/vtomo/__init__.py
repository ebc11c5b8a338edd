"""Vector field tomography on triangulated disks.

Chord integrals of a planar vector field (longitudinal and transverse
components) are simulated from a finite-element dipole model and inverted
with a sparsity-regularised least-squares solver.
"""
from .errors import (ConfigError, DegenerateElementError, DimensionMismatchError, GeometryError,
                     InvalidParameterError, ParseError, SolverError, VtomoError)
from .geometry import (Chord, ElectrodeLayout, Segment, TriMesh, build_disk_mesh, clip_chord,
                       enumerate_chords, place_electrodes, read_mesh, write_mesh)
from .rays import Flavor, RayMatrix, assemble
from .forward import (DipoleSource, add_noise, build_projection, gradient_field, longitudinal_data,
                      project, solve_potential)
from .inverse import (ADMMSolver, SolverOptions, SolveReport, build_laplacian, build_weights, solve,
                      weighted_laplacian)
from .metrics import EvalResult, cosine_similarity, evaluate, localize, magnitude_ratio

__version__ = "0.1.0"
