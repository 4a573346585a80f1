"""The domain D(epsilon): vertices, symmetry group, regions, test functions.

D(epsilon) is built from the fundamental polygon D1 with vertices A1..A10.
The six elements of the dihedral group G (generated by the reflection ``s``
across the horizontal axis and the rotation by 2*pi/3) tile the plane
sector by sector; gluing the six images of D1 along their shared seams
gives a domain with three holes, and cutting the segment from (-18, 0) to
(-16, 0) joins one of the holes to the outer boundary.

Vertex coordinates are kept exact in the field Q(sqrt(3)) until they are
converted to floats, so seam points such as (-16, 0) come out exact.
"""

import collections
import enum
import functools
import json
import logging
import math
from fractions import Fraction

import numpy as np
import shapely
from shapely import geometry as shapely_geometry

from hotspot_forge.errors import ConstructionError, DomainError, \
    EvaluationError, ParameterError

logger = logging.getLogger(__name__)

__all__ = [
    'EPSILON_MAX', 'EPSILON_LEMMA1', 'HOT_DISC_RADIUS', 'GAMMA_DIAMETER_MIN',
    'CUTOFF_DIAMETER', 'POINT_TOL',
    'Sqrt3Number', 'Point2', 'SymmetryElement', 'GROUP', 'DomainSpec',
    'PolygonWithSlit', 'RegionLabel', 'TestFunctionKind',
    'vertices', 'apply_symmetry', 'compose', 'inverse', 'orbit',
    'canonical_representative', 'canonicalize', 'build_domain',
    'fundamental_region', 'region_of', 'region_codes', 'inner_region',
    'k_segment', 'neck_centers', 'test_function', 'test_function_values',
    'angle_bounds', 'sample_points', 'write_domain_json',
]

EPSILON_MAX = Fraction(1, 200)
"""Upper bound (exclusive) on epsilon for D(epsilon) to be defined."""

EPSILON_LEMMA1 = Fraction(1, 1600)
"""Upper bound (exclusive) on epsilon for the Lemma-1 test functions."""

HOT_DISC_RADIUS = 0.1
"""Radius of the disc A = B(0, 1/10) carrying the initial heat."""

GAMMA_DIAMETER_MIN = 1e-10
"""Smallest diameter of a nodal component reaching the hub."""

CUTOFF_DIAMETER = 1e-6
"""Diameter bound of a domain cut off by a tiny nodal component."""

POINT_TOL = 1e-12

SQRT3 = math.sqrt(3.0)

# Seam edges of D1 as index pairs into vertices(): A10-A1 on the x axis,
# A1-A2 and A8-A9 on the 60-degree ray.
SEAM_EDGES = ((9, 0), (0, 1), (7, 8))


class Sqrt3Number(collections.namedtuple('Sqrt3Number', 'a b')):
    """The exact number ``a + b*sqrt(3)`` with rational ``a`` and ``b``."""

    __slots__ = ()

    def __new__(cls, a, b=0):
        return super(Sqrt3Number, cls).__new__(cls, Fraction(a), Fraction(b))

    @classmethod
    def coerce(cls, value):
        if isinstance(value, Sqrt3Number):
            return value
        return cls(value, 0)

    def __add__(self, other):
        other = Sqrt3Number.coerce(other)
        return Sqrt3Number(self.a + other.a, self.b + other.b)

    __radd__ = __add__

    def __sub__(self, other):
        other = Sqrt3Number.coerce(other)
        return Sqrt3Number(self.a - other.a, self.b - other.b)

    def __neg__(self):
        return Sqrt3Number(-self.a, -self.b)

    def __mul__(self, other):
        other = Sqrt3Number.coerce(other)
        return Sqrt3Number(self.a * other.a + 3 * self.b * other.b,
                           self.a * other.b + self.b * other.a)

    __rmul__ = __mul__

    def __float__(self):
        return float(self.a) + float(self.b) * SQRT3

    def __str__(self):
        if not self.b:
            return str(self.a)
        return '%s + %s*sqrt(3)' % (self.a, self.b)


class Point2(collections.namedtuple('Point2', 'x y')):
    """A point of the plane with finite float coordinates."""

    __slots__ = ()

    def __new__(cls, x, y):
        x, y = float(x), float(y)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ParameterError('point coordinates must be finite: (%r, %r)'
                                 % (x, y))
        return super(Point2, cls).__new__(cls, x, y)

    def __abs__(self):
        return math.hypot(self.x, self.y)

    def distance(self, other):
        return math.hypot(self.x - other[0], self.y - other[1])


class _ExactPoint(collections.namedtuple('_ExactPoint', 'x y')):
    __slots__ = ()

    def point(self):
        return Point2(float(self.x), float(self.y))


# cos and sin of k * 2*pi/3, exactly and in floating point.
_EXACT_TRIG = (
    (Sqrt3Number(1), Sqrt3Number(0)),
    (Sqrt3Number(Fraction(-1, 2)), Sqrt3Number(0, Fraction(1, 2))),
    (Sqrt3Number(Fraction(-1, 2)), Sqrt3Number(0, Fraction(-1, 2))),
)
_FLOAT_TRIG = ((1.0, 0.0), (-0.5, SQRT3 / 2), (-0.5, -SQRT3 / 2))


class SymmetryElement(collections.namedtuple('SymmetryElement',
                                             'rotation_index reflect')):
    """An element of G: reflect across the x axis (if ``reflect``), then
    rotate by ``rotation_index * 2*pi/3``.
    """

    __slots__ = ()

    def __new__(cls, rotation_index=0, reflect=False):
        if rotation_index not in (0, 1, 2):
            raise ParameterError('rotation_index must be 0, 1 or 2')
        return super(SymmetryElement, cls).__new__(
            cls, int(rotation_index), bool(reflect))

    def __str__(self):
        if self.reflect:
            return '<r^%d s>' % self.rotation_index
        return '<r^%d>' % self.rotation_index

    def matrix(self):
        """The 2x2 orthogonal matrix of this element."""
        c, s = _FLOAT_TRIG[self.rotation_index]
        rotation = np.array([[c, -s], [s, c]])
        if self.reflect:
            return rotation.dot(np.diag([1.0, -1.0]))
        return rotation

    def apply_many(self, points):
        """Apply to an ``(n, 2)`` array of points."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        return points.dot(self.matrix().T)

    def apply_exact(self, p):
        x, y = p
        if self.reflect:
            y = -y
        c, s = _EXACT_TRIG[self.rotation_index]
        return _ExactPoint(c * x - s * y, s * x + c * y)


GROUP = tuple(SymmetryElement(k, reflect)
              for reflect in (False, True) for k in range(3))
"""The six elements of G, identity first."""

IDENTITY = GROUP[0]

# Reflection across the line through 0 at angle pi/3.
MIRROR_60 = SymmetryElement(1, True)


def compose(sigma, tau):
    """Return the element ``sigma o tau`` (apply `tau` first)."""
    if sigma.reflect:
        rotation = sigma.rotation_index - tau.rotation_index
    else:
        rotation = sigma.rotation_index + tau.rotation_index
    return SymmetryElement(rotation % 3, sigma.reflect != tau.reflect)


def inverse(sigma):
    """Return the inverse of `sigma` in G."""
    if sigma.reflect:
        return sigma
    return SymmetryElement((-sigma.rotation_index) % 3, False)


def apply_symmetry(sigma, p):
    """Apply the group element `sigma` to the point `p`."""
    x, y = p
    if sigma.reflect:
        y = -y
    c, s = _FLOAT_TRIG[sigma.rotation_index]
    return Point2(c * x - s * y, s * x + c * y)


def orbit(p, tol=POINT_TOL):
    """The distinct points of ``T p = {sigma(p), sigma in G}``.

    Images closer than `tol` are merged; the first image in
    :data:`GROUP` order is kept.
    """
    images = []
    for sigma in GROUP:
        q = apply_symmetry(sigma, p)
        if all(q.distance(other) > tol for other in images):
            images.append(q)
    return tuple(images)


def _canonical_elements(points):
    # Index into GROUP of the element mapping each point into the closed
    # sector 0 <= angle <= pi/3.
    theta = np.mod(np.arctan2(points[:, 1], points[:, 0]), 2 * np.pi)
    k = np.floor(theta / (2 * np.pi / 3)).astype(int) % 3
    mirror = theta - k * (2 * np.pi / 3) > np.pi / 3 + 1e-15
    element_index = np.empty(len(points), dtype=int)
    for kk in range(3):
        plain = SymmetryElement((-kk) % 3, False)
        flipped = compose(MIRROR_60, plain)
        element_index[(k == kk) & ~mirror] = GROUP.index(plain)
        element_index[(k == kk) & mirror] = GROUP.index(flipped)
    return element_index


def canonicalize(points):
    """Map each row of an ``(n, 2)`` array to its orbit representative in
    the closed sector ``0 <= angle <= pi/3``.

    Returns ``(representatives, element_indices)``; ``GROUP[i]`` maps the
    input point to its representative.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    element_index = _canonical_elements(points)
    out = np.empty_like(points)
    for i, sigma in enumerate(GROUP):
        mask = element_index == i
        if mask.any():
            out[mask] = sigma.apply_many(points[mask])
    # The representative lies on or above the x axis.
    out[:, 1] = np.maximum(out[:, 1], 0.0)
    return out, element_index


def canonical_representative(p):
    """Return ``(q, sigma)`` with ``q = sigma(p)`` in the closed sector
    ``0 <= angle <= pi/3``, ``y >= 0``.
    """
    out, index = canonicalize([p])
    return Point2(*out[0]), GROUP[index[0]]


class DomainSpec(collections.namedtuple('DomainSpec',
                                        'epsilon outer_x slit')):
    """Parameters of D(epsilon).

    :Parameters:
      - `epsilon`: Neck half-width, in (0, 1/200).
      - `outer_x`: Abscissa of A10 (default 235); must exceed 18.
      - `slit`: Optional pair of points; defaults to the images of A9 and
        A8 under the rotation by 2*pi/3, i.e. (-18, 0) and (-16, 0).
    """

    __slots__ = ()

    def __new__(cls, epsilon=1.0 / 3200, outer_x=235.0, slit=None):
        try:
            epsilon = float(epsilon)
            outer_x = float(outer_x)
        except (TypeError, ValueError):
            raise ParameterError('epsilon and outer_x must be numbers')
        if not math.isfinite(epsilon) or epsilon <= 0:
            raise ParameterError('epsilon must be > 0')
        if Fraction(epsilon) >= EPSILON_MAX:
            raise ParameterError('epsilon must be < 1/200')
        if not math.isfinite(outer_x) or outer_x <= 18:
            raise ParameterError('outer_x must be > 18')
        if slit is None:
            rotation = GROUP[1]
            a8, a9 = _exact_vertices(epsilon, outer_x)[7:9]
            slit = (rotation.apply_exact(a9).point(),
                    rotation.apply_exact(a8).point())
        else:
            slit = tuple(Point2(*p) for p in slit)
            if len(slit) != 2:
                raise ParameterError('slit must be a pair of points')
        return super(DomainSpec, cls).__new__(cls, epsilon, outer_x, slit)

    def __str__(self):
        return '<DomainSpec epsilon=%r outer_x=%r>' % (self.epsilon,
                                                      self.outer_x)

    @property
    def default_slit(self):
        rotation = GROUP[1]
        a8, a9 = _exact_vertices(self.epsilon, self.outer_x)[7:9]
        return (rotation.apply_exact(a9).point(),
                rotation.apply_exact(a8).point())


@functools.lru_cache(maxsize=64)
def _exact_vertices(epsilon, outer_x):
    eps = Fraction(epsilon)
    q = Sqrt3Number
    return (
        _ExactPoint(q(0), q(0)),
        _ExactPoint(q(Fraction(1, 7)), q(0, Fraction(1, 7))),
        _ExactPoint(q(5), q(Fraction(1, 100))),
        _ExactPoint(q(Fraction(11, 2)), q(Fraction(1, 200))),
        _ExactPoint(q(6), q(eps)),
        _ExactPoint(q(Fraction(13, 2)), q(Fraction(1, 200))),
        _ExactPoint(q(7), q(Fraction(1, 100))),
        _ExactPoint(q(8), q(0, 8)),
        _ExactPoint(q(9), q(0, 9)),
        _ExactPoint(q(Fraction(outer_x)), q(0)),
    )


def vertices(spec):
    """The ten vertices A1..A10 of the fundamental polygon D1."""
    return [p.point() for p in _exact_vertices(spec.epsilon, spec.outer_x)]


def fundamental_region(spec):
    """The closed vertex chain A1..A10 of D1.

    The chain runs clockwise: out along A2..A9 and back along the x axis.
    The seam edges shared with neighbouring images are listed in
    :data:`SEAM_EDGES`.
    """
    return tuple(vertices(spec))


class PolygonWithSlit(object):
    """A polygon with holes and one slit.

    :Parameters:
      - `outer_loop`: Counterclockwise vertex chain (not repeated at the end).
      - `hole_loops`: Clockwise vertex chains.
      - `slit`: Open polyline; endpoints on the outer loop and on a hole
        (or anywhere in the closure, for fixtures). May be empty.
      - `spec`: The :class:`DomainSpec` this polygon was built from, if any.
    """

    def __init__(self, outer_loop, hole_loops=(), slit=(), spec=None):
        self.outer_loop = tuple(Point2(*p) for p in outer_loop)
        self.hole_loops = tuple(tuple(Point2(*p) for p in loop)
                                for loop in hole_loops)
        self.slit = tuple(Point2(*p) for p in slit)
        self.spec = spec
        self._polygon = None
        self._validate()

    def __str__(self):
        return '<%s outer=%d holes=%d slit=%d>' % (
            self.__class__.__name__, len(self.outer_loop),
            len(self.hole_loops), len(self.slit))

    __repr__ = __str__

    def _validate(self):
        if len(self.outer_loop) < 3:
            raise ConstructionError('outer loop needs at least 3 vertices')
        rings = [shapely_geometry.LinearRing(self.outer_loop)]
        for loop in self.hole_loops:
            if len(loop) < 3:
                raise ConstructionError('hole loop needs at least 3 vertices')
            rings.append(shapely_geometry.LinearRing(loop))
        for i, ring in enumerate(rings):
            if not ring.is_simple:
                raise ConstructionError('loop %d is not simple' % i)
        if _signed_area(self.outer_loop) <= 0:
            raise ConstructionError('outer loop must be counterclockwise')
        outer = shapely_geometry.Polygon(self.outer_loop)
        for i, loop in enumerate(self.hole_loops):
            if _signed_area(loop) >= 0:
                raise ConstructionError('hole %d must be clockwise' % i)
            if not outer.contains(shapely_geometry.Polygon(loop)):
                raise ConstructionError('hole %d is not inside the outer loop'
                                        % i)
        for i in range(1, len(rings)):
            for j in range(i + 1, len(rings)):
                if rings[i].intersects(rings[j]):
                    raise ConstructionError('holes %d and %d intersect'
                                            % (i - 1, j - 1))
        if self.slit:
            if len(self.slit) < 2:
                raise ConstructionError('slit needs two endpoints')
            line = shapely_geometry.LineString(self.slit)
            if not line.is_simple:
                raise ConstructionError('slit is not simple')
            interior = line.difference(
                shapely_geometry.MultiPoint([self.slit[0], self.slit[-1]])
                .buffer(1e-9 * max(1.0, line.length)))
            for ring in rings:
                if interior.intersects(ring):
                    raise ConstructionError('slit interior meets a loop')
            if not self.polygon.buffer(1e-9).covers(line):
                raise ConstructionError('slit leaves the domain')

    @property
    def polygon(self):
        """The shapely polygon of the un-slit domain."""
        if self._polygon is None:
            self._polygon = shapely_geometry.Polygon(
                self.outer_loop, self.hole_loops)
            shapely.prepare(self._polygon)
        return self._polygon

    def loops(self):
        """``[(loop_id, vertices, closed)]``: 0 is the outer loop, holes
        follow, the slit (open) comes last.
        """
        result = [(0, self.outer_loop, True)]
        for i, loop in enumerate(self.hole_loops):
            result.append((i + 1, loop, True))
        if self.slit:
            result.append((len(self.hole_loops) + 1, self.slit, False))
        return result

    @property
    def slit_loop_id(self):
        return len(self.hole_loops) + 1 if self.slit else None

    def segments(self):
        """``(segments, loop_ids)``: an ``(S, 2, 2)`` array of every
        boundary segment, slit included, and the loop id of each.
        """
        starts, ends, ids = [], [], []
        for loop_id, loop, closed in self.loops():
            pts = np.asarray(loop, dtype=float)
            nxt = np.roll(pts, -1, axis=0) if closed else pts[1:]
            cur = pts if closed else pts[:-1]
            starts.append(cur)
            ends.append(nxt)
            ids.extend([loop_id] * len(cur))
        segments = np.stack([np.concatenate(starts), np.concatenate(ends)],
                            axis=1)
        return segments, np.asarray(ids, dtype=int)

    def slit_end_loops(self, tol=1e-9):
        """Loop ids of the closed loops each slit endpoint lies on, as a
        pair of frozensets (empty for an endpoint inside the domain).
        """
        if not self.slit:
            return ()
        rings = [(loop_id, shapely_geometry.LinearRing(loop))
                 for loop_id, loop, closed in self.loops() if closed]
        result = []
        for end in (self.slit[0], self.slit[-1]):
            point = shapely_geometry.Point(end)
            scale = max(1.0, abs(end.x), abs(end.y))
            result.append(frozenset(loop_id for loop_id, ring in rings
                                    if ring.distance(point) <= tol * scale))
        return tuple(result)

    def boundary_components(self):
        """Number of boundary curves of the domain once it is cut along the
        slit, or None when the slit runs from a loop back to the same loop.

        A slit hanging off one loop only lengthens that curve; a slit
        joining two loops merges them; a slit with both ends inside the
        domain adds a curve of its own.
        """
        count = 1 + len(self.hole_loops)
        if not self.slit:
            return count
        first, last = self.slit_end_loops()
        if first and last:
            if first & last:
                return None
            return count - 1
        if not first and not last:
            return count + 1
        return count

    def area(self):
        """Area by the shoelace formula (outer minus holes)."""
        return _signed_area(self.outer_loop) + sum(
            _signed_area(loop) for loop in self.hole_loops)

    def contains_many(self, points, tol=POINT_TOL):
        """Boolean mask of rows of `points` in the closure of the domain,
        up to distance `tol`.
        """
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        inside = shapely.intersects_xy(self.polygon, points[:, 0],
                                       points[:, 1])
        if tol > 0 and not inside.all():
            missing = np.flatnonzero(~inside)
            near = shapely.distance(
                self.polygon, shapely.points(points[missing])) <= tol
            inside[missing[near]] = True
        return inside

    def contains(self, p, tol=POINT_TOL):
        return bool(self.contains_many([p], tol)[0])

    def bounds(self):
        pts = np.asarray(self.outer_loop)
        return pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), \
            pts[:, 1].max()


def _signed_area(loop):
    pts = np.asarray(loop, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@functools.lru_cache(maxsize=32)
def build_domain(spec):
    """Build D(epsilon) as a :class:`PolygonWithSlit`.

    The outer loop stitches the six images of the chain A9-A10; each hole
    is the chain A2..A8 joined to its mirror image across the 60-degree
    axis, rotated into place.
    """
    exact = _exact_vertices(spec.epsilon, spec.outer_x)
    a2_to_a8 = exact[1:8]
    a9, a10 = exact[8], exact[9]

    outer = []
    for k in range(3):
        rotation = GROUP[k]
        outer.append(rotation.apply_exact(a10).point())
        outer.append(rotation.apply_exact(a9).point())

    # A2 and A8 lie on the mirror axis, so the mirrored half adds only the
    # images of A7..A3.
    half = list(a2_to_a8) + [MIRROR_60.apply_exact(p)
                             for p in reversed(a2_to_a8[1:-1])]
    holes = []
    for k in range(3):
        rotation = GROUP[k]
        loop = [rotation.apply_exact(p).point() for p in half]
        holes.append(tuple(reversed(loop)))

    domain = PolygonWithSlit(outer, holes, spec.slit, spec=spec)
    logger.debug('built %s for %s', domain, spec)
    return domain


class RegionLabel(enum.Enum):
    """Where a point sits relative to the three bridges."""
    INNER = 'I'
    BRIDGE_INNER = 'M_i'
    BRIDGE_OUTER = 'M_e'
    EXTERIOR = 'E'
    OUTSIDE = 'outside'


# region_codes() values, in RegionLabel order.
REGION_CODES = {
    0: RegionLabel.INNER,
    1: RegionLabel.BRIDGE_INNER,
    2: RegionLabel.BRIDGE_OUTER,
    3: RegionLabel.EXTERIOR,
    -1: RegionLabel.OUTSIDE,
}


def region_codes(spec, points, tol=POINT_TOL):
    """Vectorized :func:`region_of`: an int array of
    :data:`REGION_CODES` keys.

    In the canonical sector D1 the bridge is the part of D between the
    vertical segments K3 (x = 5) and K7 (x = 7); K5 (x = 6) splits it.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    domain = build_domain(spec)
    inside = domain.contains_many(points, tol)
    canonical, _ = canonicalize(points)
    x = canonical[:, 0]
    codes = np.full(len(points), 3, dtype=int)
    codes[x < 7.0 + tol] = 2
    codes[x < 6.0] = 1
    codes[x < 5.0] = 0
    codes[~inside] = -1
    return codes


def region_of(spec, p):
    """The :class:`RegionLabel` of `p` in D(epsilon)."""
    return REGION_CODES[int(region_codes(spec, [p])[0])]


@functools.lru_cache(maxsize=32)
def inner_region(spec):
    """The region I as a prepared shapely polygon.

    The canonical abscissa of a point is its largest projection on the
    three arm directions, so ``x < 5`` in the canonical sector is the
    equilateral triangle bounded by K3 and its two rotations.
    """
    corner = 10.0
    triangle = shapely_geometry.Polygon(
        [(corner * math.cos(a), corner * math.sin(a))
         for a in (math.pi / 3, math.pi, 5 * math.pi / 3)])
    region = build_domain(spec).polygon.intersection(triangle)
    shapely.prepare(region)
    return region


def k_segment(spec, j):
    """The vertical segment ``K_j = A_j s(A_j)`` for j in 3..7."""
    if j not in (3, 4, 5, 6, 7):
        raise ParameterError('j must be in 3..7, got %r' % (j, ))
    a = vertices(spec)[j - 1]
    return a, Point2(a.x, -a.y)


def neck_centers(spec):
    """The points A11 and A12 where the neck walls meet the x axis.

    A11 follows the printed formula ``6 + 100 eps / (1 - 200 eps)``; A12 is
    computed as the intersection of the line through A5 and A6 with the
    horizontal axis.
    """
    eps = Fraction(spec.epsilon)
    a11 = Point2(float(6 + 100 * eps / (1 - 200 * eps)), 0.0)
    exact = _exact_vertices(spec.epsilon, spec.outer_x)
    x5, y5 = exact[4].x.a, exact[4].y.a
    x6, y6 = exact[5].x.a, exact[5].y.a
    a12 = Point2(float(x5 - y5 * (x6 - x5) / (y6 - y5)), 0.0)
    return a11, a12


class TestFunctionKind(enum.Enum):
    """The Lemma-1 test functions."""
    F1 = 'f1'
    F2 = 'f2'
    F = 'f'

    __test__ = False


def _check_lemma1_regime(spec):
    if Fraction(spec.epsilon) >= EPSILON_LEMMA1:
        raise ParameterError('test functions need epsilon < 1/1600')


def test_function_values(spec, kind, points, integrals=None):
    """Vectorized :func:`test_function` on an ``(n, 2)`` array.

    Points are mapped to their canonical representative first, which makes
    the result G-invariant. Membership in D is not checked here.
    """
    _check_lemma1_regime(spec)
    kind = TestFunctionKind(kind)
    if kind is TestFunctionKind.F:
        if integrals is None:
            raise ParameterError('kind f needs the integrals of f1 and f2')
        i1, i2 = integrals
        if i1 == 0 or i2 == 0:
            raise ParameterError('integrals of f1 and f2 must be nonzero')
        return (test_function_values(spec, 'f1', points) / i1
                - test_function_values(spec, 'f2', points) / i2)

    z, _ = canonicalize(points)
    eps = spec.epsilon
    a11, a12 = neck_centers(spec)
    center = a11 if kind is TestFunctionKind.F1 else a12
    r = np.hypot(z[:, 0], z[:, 1])
    d = np.hypot(z[:, 0] - center.x, z[:, 1] - center.y)
    low = 400 * eps
    slope = np.log(np.maximum(d, low) / low) / math.log(1.0 / (800 * eps))

    values = np.full(len(z), np.nan)
    if kind is TestFunctionKind.F1:
        zero = (r > 6) | (d < low)
        ramp = (r <= 6) & (d <= 0.5)
        one = (r < 6) & (d > 0.5)
    else:
        zero = (r < 6) | (d < low)
        ramp = (r > 6) & (d <= 0.5)
        one = (r > 6) & (d > 0.5)
    values[one] = 1.0
    values[ramp] = slope[ramp]
    values[zero] = 0.0

    # |z| = 6 only happens inside a neck, where d < 400 eps.
    on_circle = np.abs(r - 6) <= 1e-9
    if np.any(on_circle & (d >= low)):
        raise EvaluationError('point with |z| = 6 outside the neck core')
    if np.isnan(values).any():
        raise EvaluationError('test function case analysis is incomplete')
    return values


def test_function(spec, kind, p, integrals=None, check_domain=True):
    """Evaluate the Lemma-1 test function `kind` at the point `p` of D.

    :Parameters:
      - `spec`: A :class:`DomainSpec` with epsilon < 1/1600.
      - `kind`: ``'f1'``, ``'f2'`` or ``'f'`` (or a :class:`TestFunctionKind`).
      - `p`: A point of D.
      - `integrals`: ``(integral of f1, integral of f2)``, required for
        kind ``f``.
      - `check_domain`: Raise :exc:`DomainError` when `p` is not in D.
    """
    _check_lemma1_regime(spec)
    if check_domain and not build_domain(spec).contains(p, tol=1e-9):
        raise DomainError(p)
    return float(test_function_values(spec, kind, [p], integrals)[0])


test_function.__test__ = False
test_function_values.__test__ = False


def angle_bounds(spec):
    """``(alpha1, alpha2)``: min and max over j = 1..9 of the angle of the
    vector A_j A_{j+1} with the horizontal axis.
    """
    pts = vertices(spec)
    angles = [math.atan2(b.y - a.y, b.x - a.x) for a, b in zip(pts, pts[1:])]
    return min(angles), max(angles)


def sample_points(spec, n, rng, region='D'):
    """Draw `n` uniform points of D (``region='D'``) or of the closed
    fundamental polygon D1 (``region='D1'``) by rejection sampling.
    """
    if region == 'D':
        domain = build_domain(spec)
        contains = domain.contains_many
        xmin, ymin, xmax, ymax = domain.bounds()
    elif region == 'D1':
        polygon = shapely_geometry.Polygon(fundamental_region(spec))
        shapely.prepare(polygon)
        xmin, ymin, xmax, ymax = polygon.bounds

        def contains(pts):
            return shapely.intersects_xy(polygon, pts[:, 0], pts[:, 1])
    else:
        raise ParameterError('region must be D or D1')
    out = []
    count = 0
    while count < n:
        batch = rng.uniform((xmin, ymin), (xmax, ymax), size=(4 * n + 64, 2))
        keep = batch[contains(batch)]
        out.append(keep)
        count += len(keep)
    return np.concatenate(out)[:n]


def write_domain_json(domain, path):
    """Write the ``domain.json`` artifact for a built D(epsilon)."""
    spec = domain.spec
    names = ['A%d' % (i + 1) for i in range(10)]
    document = collections.OrderedDict([
        ('epsilon', spec.epsilon if spec else None),
        ('outer_loop', [list(p) for p in domain.outer_loop]),
        ('holes', [[list(p) for p in loop] for loop in domain.hole_loops]),
        ('slit', [list(p) for p in domain.slit]),
        ('vertices', collections.OrderedDict(
            zip(names, [list(p) for p in vertices(spec)])) if spec else {}),
    ])
    with open(path, 'w') as f:
        json.dump(document, f, indent=2)
        f.write('\n')
