import contextlib
import functools
import math
import shutil
import tempfile

import numpy as np

from hotspot_forge import analysis, fem, geometry, mesh as meshing


@contextlib.contextmanager
def assert_raises(exc_class, message=None):
    """Like TestCase.assertRaises, optionally checking the message."""
    try:
        yield
    except exc_class as e:
        if message is not None:
            assert message in str(e), '%r not in %r' % (message, str(e))
    else:
        assert False, "%s not raised" % exc_class


@contextlib.contextmanager
def temp_dir():
    path = tempfile.mkdtemp(prefix='hotspot_forge_test_')
    try:
        yield path
    finally:
        shutil.rmtree(path, ignore_errors=True)


def read_lines(path):
    with open(path) as f:
        return f.read().splitlines()


# Fixture domains.

def square_domain(half=1.0):
    return geometry.PolygonWithSlit([(-half, -half), (half, -half),
                                     (half, half), (-half, half)])


def thin_rectangle(half_length=1.0, half_height=0.05):
    return geometry.PolygonWithSlit(
        [(-half_length, -half_height), (half_length, -half_height),
         (half_length, half_height), (-half_length, half_height)])


def hexagon_domain(radius=1.0):
    return geometry.PolygonWithSlit(
        [(radius * math.cos(k * math.pi / 3),
          radius * math.sin(k * math.pi / 3)) for k in range(6)])


def slit_square_domain():
    # The slit runs from the vertex (1, 0) of the outer loop to the center.
    return geometry.PolygonWithSlit(
        [(-1, -1), (1, -1), (1, 0), (1, 1), (-1, 1)],
        slit=[(1, 0), (0, 0)])


@functools.lru_cache(maxsize=None)
def hexagon_mesh(h=0.15):
    return meshing.triangulate(hexagon_domain(), meshing.SizeField(h))


def eigenpairs(mesh, k=4, method='dense'):
    K, M = fem.assemble(mesh)
    return fem.smallest_eigenpairs(K, M, k, tol=1e-8, method=method)


# A coarse D(epsilon) pipeline shared by the slower tests. Coarse enough to
# run in seconds; nothing here is claimed about the hot spot itself.

COARSE_SPEC = geometry.DomainSpec(1.0 / 2000, 40.0)
COARSE_SIZE = meshing.SizeField(8.0, 1.0 / 6000, 2.5, 0.2)
COARSE_SOLVER = fem.SolverParams(k=4, tol=1e-6)


@functools.lru_cache(maxsize=None)
def coarse_solution():
    return analysis.solve(COARSE_SPEC, COARSE_SIZE, COARSE_SOLVER)


def coarse_mesh():
    return coarse_solution().mesh


def cone_direction(spec):
    """Unit vector at the middle of the cone of monotone directions."""
    alpha1, alpha2 = geometry.angle_bounds(spec)
    middle = 0.5 * ((alpha2 - math.pi / 2) + (alpha1 + math.pi / 2))
    return np.array([math.cos(middle), math.sin(middle)])
