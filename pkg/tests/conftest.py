import numpy as np
import pytest

from vtomo.geometry import TriMesh, build_disk_mesh, enumerate_chords, place_electrodes

# Geometry of the reference experiment: unit disk, 32 electrodes, nested meshes.
FINE_H = 1 / 32
COARSE_H = 1 / 16
N_ELECTRODES = 32


@pytest.fixture(scope="session")
def unit_triangle():
    return TriMesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]),
                   np.array([0, 1, 2]))


@pytest.fixture(scope="session")
def small_disk():
    return build_disk_mesh(1.0, 0.25)


@pytest.fixture(scope="session")
def coarse():
    return build_disk_mesh(1.0, COARSE_H)


@pytest.fixture(scope="session")
def fine():
    return build_disk_mesh(1.0, FINE_H)


@pytest.fixture(scope="session")
def coarse_chords(coarse):
    layout = place_electrodes(coarse, N_ELECTRODES)
    return layout, enumerate_chords(layout, coarse)


@pytest.fixture(scope="session")
def fine_chords(fine):
    layout = place_electrodes(fine, N_ELECTRODES)
    return layout, enumerate_chords(layout, fine)



def pytest_terminal_summary(terminalreporter):
    # one line per acceptance criterion, in the order they ran
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
