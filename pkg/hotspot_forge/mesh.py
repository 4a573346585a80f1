"""Conforming triangulations of :class:`~hotspot_forge.geometry.PolygonWithSlit`.

D(epsilon) is meshed by triangulating the fundamental polygon D1 once with
Triangle (through :mod:`meshpy.triangle`) and replicating the result under
the six elements of G. Seam nodes of neighbouring copies coincide and are
merged; the copies meeting along the slit keep separate nodes there, which
cuts the mesh open along the slit. Any other polygon (test fixtures, custom
slits) is triangulated in one piece and cut afterwards.
"""

import collections
import hashlib
import json
import logging
import math

import numpy as np
from meshpy import triangle
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree
from shapely import geometry as shapely_geometry

from hotspot_forge import geometry
from hotspot_forge.errors import ArtifactError, ConstructionError, \
    ParameterError, RefinementError

logger = logging.getLogger(__name__)

__all__ = [
    'SizeField', 'MeshPolicy', 'Mesh', 'TopologyReport', 'triangulate',
    'triangulate_fundamental', 'rectangle_mesh', 'locate', 'topology_report',
    'write_mesh_json', 'write_vtk', 'save_mesh', 'load_mesh',
]

MERGE_TOL = 1e-9
BARYCENTRIC_TOL = 1e-9
# Triangles inside a sharp input corner, where the corner is at most this
# many longest edges wide, are exempt from the angle bound.
SHARP_WEDGE_FACTOR = 2.0


class SizeField(collections.namedtuple(
        'SizeField', 'h_max h_neck grading_ratio h_hub')):
    """Target edge length as a function of position.

    :Parameters:
      - `h_max`: Global maximum edge length.
      - `h_neck`: Edge length at the neck pinch points.
      - `grading_ratio`: Growth of the size away from the pinch points and
        the origin; ``h`` grows by ``grading_ratio - 1`` per unit distance.
      - `h_hub`: Edge length at the origin.
    """

    __slots__ = ()

    def __new__(cls, h_max, h_neck=None, grading_ratio=2.0, h_hub=None):
        h_max = float(h_max)
        h_neck = h_max if h_neck is None else float(h_neck)
        h_hub = h_max if h_hub is None else float(h_hub)
        grading_ratio = float(grading_ratio)
        if not 0 < h_neck <= h_max:
            raise ParameterError('need 0 < h_neck <= h_max')
        if not 0 < h_hub:
            raise ParameterError('h_hub must be > 0')
        if not 1.2 <= grading_ratio <= 2.5:
            raise ParameterError('grading_ratio must be in [1.2, 2.5]')
        return super(SizeField, cls).__new__(
            cls, h_max, h_neck, grading_ratio, min(h_hub, h_max))

    def refined(self, factor):
        """All lengths scaled by `factor`, grading unchanged."""
        return SizeField(self.h_max * factor, self.h_neck * factor,
                         self.grading_ratio, self.h_hub * factor)

    def evaluate(self, points, neck_points=(), hub=None):
        """Target size at each row of `points`."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        slope = self.grading_ratio - 1.0
        h = np.full(len(points), self.h_max)
        for q in neck_points:
            d = np.hypot(points[:, 0] - q[0], points[:, 1] - q[1])
            h = np.minimum(h, self.h_neck + slope * d)
        if hub is not None:
            d = np.hypot(points[:, 0] - hub[0], points[:, 1] - hub[1])
            h = np.minimum(h, self.h_hub + slope * d)
        return h


class MeshPolicy(collections.namedtuple(
        'MeshPolicy', 'h_max h_hub grading_ratio neck_fraction min_angle')):
    """A mesh recipe that scales with epsilon: ``h_neck = neck_fraction *
    epsilon``. Used to keep the policy constant across a sweep.
    """

    __slots__ = ()

    def __new__(cls, h_max=2.0, h_hub=0.05, grading_ratio=2.0,
                neck_fraction=1.0 / 3, min_angle=20.0):
        if not 0 < neck_fraction <= 1.0 / 3:
            raise ParameterError('neck_fraction must be in (0, 1/3]')
        return super(MeshPolicy, cls).__new__(
            cls, float(h_max), float(h_hub), float(grading_ratio),
            float(neck_fraction), float(min_angle))

    def size_field(self, epsilon):
        return SizeField(self.h_max, self.neck_fraction * epsilon,
                         self.grading_ratio, self.h_hub)


class Mesh(object):
    """A conforming triangulation.

    :Parameters:
      - `nodes`: ``(n, 2)`` float array.
      - `triangles`: ``(m, 3)`` int array, counterclockwise.
      - `domain`: The :class:`~hotspot_forge.geometry.PolygonWithSlit`
        that was meshed, or None for a mesh loaded from disk.
      - `boundary_loop_ids`: Loop id of each row of :attr:`boundary_edges`;
        computed from `domain` when omitted.
      - `slit_twins`: Dict mapping a slit-bank node to its twin on the
        other bank.
      - `sector_source`: For a replicated mesh, the node of the fundamental
        mesh each node was copied from.
      - `fundamental`: The mesh of D1 a replicated mesh was built from.
    """

    def __init__(self, nodes, triangles, domain=None, boundary_loop_ids=None,
                 slit_twins=None, sector_source=None, fundamental=None,
                 spec=None):
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.domain = domain
        self.spec = spec if spec is not None else getattr(domain, 'spec',
                                                           None)
        self.slit_twins = dict(slit_twins or {})
        self.sector_source = (None if sector_source is None
                              else np.asarray(sector_source, dtype=np.int64))
        self.fundamental = fundamental
        self._edges = None
        self._edge_triangle_count = None
        self._tree = None
        self._transforms = None
        self._cache = {}
        self.boundary_edges = self._find_boundary_edges()
        if boundary_loop_ids is None:
            boundary_loop_ids = self._classify_boundary_edges()
        self.boundary_loop_ids = np.asarray(boundary_loop_ids, dtype=np.int64)

    def __str__(self):
        return '<Mesh nodes=%d triangles=%d id=%s>' % (
            self.n_nodes, self.n_triangles, self.mesh_id)

    __repr__ = __str__

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def mesh_id(self):
        """Short sha1 of the node coordinates and triangle list."""
        if 'mesh_id' not in self._cache:
            digest = hashlib.sha1(self.nodes.tobytes())
            digest.update(self.triangles.astype('<i8').tobytes())
            self._cache['mesh_id'] = digest.hexdigest()[:16]
        return self._cache['mesh_id']

    def _compute_edges(self):
        t = self.triangles
        all_edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        all_edges.sort(axis=1)
        edges, counts = np.unique(all_edges, axis=0, return_counts=True)
        self._edges = edges
        self._edge_triangle_count = counts

    def edges(self):
        """Unique edges as an ``(E, 2)`` array with sorted node pairs."""
        if self._edges is None:
            self._compute_edges()
        return self._edges

    def edge_triangle_counts(self):
        if self._edge_triangle_count is None:
            self._compute_edges()
        return self._edge_triangle_count

    def _find_boundary_edges(self):
        edges = self.edges()
        return edges[self.edge_triangle_counts() == 1]

    def _classify_boundary_edges(self):
        if self.domain is None or not len(self.boundary_edges):
            return np.zeros(len(self.boundary_edges), dtype=np.int64)
        segments, loop_ids = self.domain.segments()
        mid = self.nodes[self.boundary_edges].mean(axis=1)
        distance = _point_segment_distances(mid, segments)
        return loop_ids[np.argmin(distance, axis=1)]

    def boundary_nodes(self):
        """Sorted array of nodes on any boundary loop or slit bank."""
        return np.unique(self.boundary_edges)

    def triangle_areas(self):
        p = self.nodes[self.triangles]
        return 0.5 * _cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    def triangle_angles(self):
        """``(m, 3)`` interior angles in degrees, per corner."""
        p = self.nodes[self.triangles]
        out = np.empty((self.n_triangles, 3))
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            out[:, i] = np.degrees(np.arctan2(np.abs(_cross(a, b)),
                                              np.einsum('ij,ij->i', a, b)))
        return out

    def edge_lengths(self):
        e = self.edges()
        d = self.nodes[e[:, 1]] - self.nodes[e[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def node_sizes(self):
        """Local mesh size per node: the longest incident edge."""
        if 'node_sizes' not in self._cache:
            e = self.edges()
            h = np.zeros(self.n_nodes)
            lengths = self.edge_lengths()
            np.maximum.at(h, e[:, 0], lengths)
            np.maximum.at(h, e[:, 1], lengths)
            self._cache['node_sizes'] = h
        return self._cache['node_sizes']

    def adjacency(self):
        """Node adjacency as a symmetric CSR matrix."""
        e = self.edges()
        n = self.n_nodes
        data = np.ones(2 * len(e))
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))

    def _barycentric_transforms(self):
        if self._transforms is None:
            p = self.nodes[self.triangles]
            t = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
            self._transforms = (p[:, 0], np.linalg.inv(t))
        return self._transforms

    def _barycentric(self, tri, points):
        origin, inv = self._barycentric_transforms()
        local = np.einsum('ijk,ik->ij', inv[tri], points - origin[tri])
        return np.column_stack([1.0 - local.sum(axis=1), local])

    def locate_many(self, points, candidates=8):
        """Vectorized :func:`locate`.

        Returns ``(triangle_indices, barycentric)``; the index is -1 where
        the point is not in the mesh.
        """
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        n = len(points)
        found = np.full(n, -1, dtype=np.int64)
        bary = np.zeros((n, 3))
        if self._tree is None:
            centroids = self.nodes[self.triangles].mean(axis=1)
            self._tree = cKDTree(centroids)
        k = min(candidates, self.n_triangles)
        _, near = self._tree.query(points, k=k)
        near = np.asarray(near).reshape(n, k)
        # Check candidates in increasing triangle index for the tie rule.
        near.sort(axis=1)
        for column in range(k):
            todo = np.flatnonzero(found < 0)
            if not len(todo):
                break
            tri = near[todo, column]
            b = self._barycentric(tri, points[todo])
            inside = (b >= -BARYCENTRIC_TOL).all(axis=1)
            found[todo[inside]] = tri[inside]
            bary[todo[inside]] = b[inside]
        todo = np.flatnonzero(found < 0)
        if len(todo) and self.domain is not None:
            todo = todo[self.domain.contains_many(points[todo], tol=1e-9)]
        if len(todo):
            # The nearest centroids can all miss a point next to a long
            # thin triangle; scan every triangle for the stragglers.
            for i in todo:
                all_tri = np.arange(self.n_triangles)
                b = self._barycentric(
                    all_tri, np.broadcast_to(points[i], (self.n_triangles, 2)))
                inside = np.flatnonzero((b >= -BARYCENTRIC_TOL).all(axis=1))
                if len(inside):
                    found[i] = inside[0]
                    bary[i] = b[inside[0]]
        hit = found >= 0
        bary[hit] = np.clip(bary[hit], 0.0, 1.0)
        bary[hit] /= bary[hit].sum(axis=1)[:, None]
        return found, bary

    def interpolate_at(self, values, points):
        """Evaluate the P1 interpolant of nodal `values` at `points`
        (NaN where a point is not in the mesh).
        """
        values = np.asarray(values, dtype=float)
        tri, bary = self.locate_many(points)
        out = np.full(len(tri), np.nan)
        hit = tri >= 0
        out[hit] = np.einsum('ij,ij->i', bary[hit],
                             values[self.triangles[tri[hit]]])
        return out


def locate(mesh, p):
    """Return ``(triangle index, barycentric coordinates)`` of the point `p`,
    or None when `p` is not in the mesh. Points on shared edges go to the
    lowest triangle index.
    """
    tri, bary = mesh.locate_many([p])
    if tri[0] < 0:
        return None
    return int(tri[0]), tuple(bary[0])


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _point_segment_distances(points, segments):
    # (n, S) distances from each point to each segment.
    a = segments[:, 0][None, :, :]
    b = segments[:, 1][None, :, :]
    p = points[:, None, :]
    ab = b - a
    denom = np.maximum((ab ** 2).sum(axis=2), 1e-300)
    t = np.clip(((p - a) * ab).sum(axis=2) / denom, 0.0, 1.0)
    q = a + t[..., None] * ab
    return np.hypot(p[..., 0] - q[..., 0], p[..., 1] - q[..., 1])


def _orient_ccw(nodes, triangles):
    p = nodes[triangles]
    area = _cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    flip = area < 0
    triangles = triangles.copy()
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    return triangles


def _refinement_callback(size, neck_points, hub):
    def needs_refinement(vertices, area):
        center = np.mean(np.asarray(vertices, dtype=float), axis=0)
        h = size.evaluate(center, neck_points, hub)[0]
        return bool(area > math.sqrt(3.0) / 4.0 * h * h)
    return needs_refinement


def _index_point(points, p):
    for i, q in enumerate(points):
        if math.hypot(q[0] - p[0], q[1] - p[1]) <= geometry.POINT_TOL:
            return i
    points.append(tuple(p))
    return len(points) - 1


def _build_triangle_input(domain):
    points, facets, markers = [], [], []
    for loop_id, loop, closed in domain.loops():
        index = [_index_point(points, p) for p in loop]
        pairs = list(zip(index, index[1:]))
        if closed:
            pairs.append((index[-1], index[0]))
        facets.extend(pairs)
        markers.extend([loop_id + 1] * len(pairs))
    holes = [shapely_geometry.Polygon(loop).representative_point().coords[0]
             for loop in domain.hole_loops]
    return points, facets, markers, holes


def _run_triangle(domain, size, min_angle, neck_points=(), hub=None):
    points, facets, markers, holes = _build_triangle_input(domain)
    info = triangle.MeshInfo()
    info.set_points(points)
    info.set_facets(facets, facet_markers=markers)
    if holes:
        info.set_holes(holes)
    built = triangle.build(
        info, refinement_func=_refinement_callback(size, neck_points, hub),
        min_angle=min_angle, allow_boundary_steiner=True)
    nodes = np.array(built.points, dtype=float)
    triangles = np.array(built.elements, dtype=np.int64)
    if not len(triangles):
        raise ConstructionError('triangulation produced no triangles')
    logger.debug('Triangle: %d nodes, %d triangles', len(nodes),
                 len(triangles))
    return nodes, _orient_ccw(nodes, triangles)


def _cut_slit(nodes, triangles, slit):
    """Duplicate the slit nodes so that no triangle crosses the slit.

    Every node on the slit whose fan of triangles falls into two sides is
    split in two; this includes an endpoint lying on a boundary loop. A
    slit tip inside the domain has a single side and is kept. Returns
    ``(nodes, triangles, twins)``.
    """
    slit_segments = np.stack([np.asarray(slit[:-1]), np.asarray(slit[1:])],
                             axis=1)
    scale = max(1.0, float(np.abs(slit_segments).max()))
    tol = 1e-9 * scale
    on_slit = _point_segment_distances(nodes, slit_segments).min(axis=1) \
        <= tol
    ends = np.zeros(len(nodes), dtype=bool)
    for e in (slit[0], slit[-1]):
        ends |= np.hypot(*(nodes - np.asarray(e)).T) <= tol

    t = triangles
    edge_list = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    mid = nodes[edge_list].mean(axis=1)
    edge_on_slit = on_slit[edge_list].all(axis=1) & (
        _point_segment_distances(mid, slit_segments).min(axis=1) <= tol)
    slit_edges = set(map(tuple, np.sort(edge_list[edge_on_slit], axis=1)))

    nodes = list(map(tuple, nodes))
    triangles = t.copy()
    twins = {}
    incident = collections.defaultdict(list)
    for ti, tri in enumerate(triangles):
        for v in tri:
            incident[v].append(ti)
    for v in np.flatnonzero(on_slit):
        tris = incident[v]
        # Group the fan around v by adjacency across non-slit edges.
        component = {}
        for start in tris:
            if start in component:
                continue
            label = len(set(component.values()))
            stack = [start]
            component[start] = label
            while stack:
                cur = stack.pop()
                for other in tris:
                    if other in component:
                        continue
                    shared = set(triangles[cur]) & set(triangles[other])
                    if len(shared) == 2 and v in shared:
                        edge = tuple(sorted(shared))
                        if edge not in slit_edges:
                            component[other] = label
                            stack.append(other)
        labels = sorted(set(component.values()))
        if len(labels) == 1 and ends[v]:
            continue
        if len(labels) != 2:
            raise ConstructionError('slit node %d has %d sides'
                                    % (v, len(labels)))
        new = len(nodes)
        nodes.append(nodes[v])
        for ti, label in component.items():
            if label == labels[1]:
                row = triangles[ti]
                row[row == v] = new
        twins[int(v)] = new
        twins[new] = int(v)
    return np.array(nodes, dtype=float), triangles, twins


def triangulate(domain, size, min_angle=20.0):
    """Triangulate `domain` with edge lengths bounded by `size`.

    :Parameters:
      - `domain`: A :class:`~hotspot_forge.geometry.PolygonWithSlit`. A
        D(epsilon) instance with the default slit is meshed by replicating
        the mesh of D1 under G.
      - `size`: A :class:`SizeField`.
      - `min_angle`: Minimum triangle angle in degrees, away from input
        corners sharper than that.

    Raises :exc:`RefinementError` when the angle or size contract is not
    met and :exc:`ConstructionError` for degenerate input.
    """
    spec = domain.spec
    if spec is not None and _is_default_slit(spec):
        mesh = _replicate(triangulate_fundamental(spec, size, min_angle),
                          domain)
    else:
        nodes, triangles = _run_triangle(domain, size, min_angle)
        twins = {}
        if domain.slit:
            nodes, triangles, twins = _cut_slit(nodes, triangles,
                                                domain.slit)
        mesh = Mesh(nodes, triangles, domain=domain, slit_twins=twins)
    _check_contract(mesh, size, min_angle)
    logger.info('meshed %s: %d nodes, %d triangles', domain, mesh.n_nodes,
                mesh.n_triangles)
    return mesh


def _is_default_slit(spec):
    return all(geometry.Point2(*a).distance(b) <= geometry.POINT_TOL
               for a, b in zip(spec.slit, spec.default_slit))


def _check_neck_size(spec, size):
    if size.h_neck > spec.epsilon / 3.0 * (1 + 1e-12):
        raise ParameterError('h_neck must be <= epsilon/3 (%.6g)'
                             % (spec.epsilon / 3.0))


def triangulate_fundamental(spec, size, min_angle=20.0):
    """Triangulate the fundamental polygon D1 alone."""
    _check_neck_size(spec, size)
    chain = geometry.fundamental_region(spec)
    loop = [chain[0]] + list(reversed(chain[1:]))
    region = geometry.PolygonWithSlit(loop)
    neck = (6.0, 0.0)
    nodes, triangles = _run_triangle(region, size, min_angle,
                                     neck_points=[neck], hub=(0.0, 0.0))
    return Mesh(nodes, triangles, domain=region, spec=spec)


def _replicate(fundamental, domain):
    spec = domain.spec
    n0 = fundamental.n_nodes
    nodes0 = fundamental.nodes
    # The A8-A9 seam of the copies r(D1) and r^2 s(D1) is the slit; none of
    # its nodes are merged between those two copies, endpoints included.
    radius = np.hypot(nodes0[:, 0], nodes0[:, 1])
    on_ray = np.abs(nodes0[:, 1] - math.sqrt(3.0) * nodes0[:, 0]) \
        <= MERGE_TOL * np.maximum(1.0, radius)
    slit_nodes = on_ray & (radius >= 16.0 - MERGE_TOL) & \
        (radius <= 18.0 + MERGE_TOL)
    slit_copies = (geometry.GROUP.index(geometry.SymmetryElement(1, False)),
                   geometry.GROUP.index(geometry.SymmetryElement(2, True)))

    all_nodes, all_triangles = [], []
    for i, sigma in enumerate(geometry.GROUP):
        all_nodes.append(sigma.apply_many(nodes0))
        tri = fundamental.triangles + i * n0
        if sigma.reflect:
            tri = tri[:, [0, 2, 1]]
        all_triangles.append(tri)
    stacked = np.concatenate(all_nodes)
    copy_of = np.repeat(np.arange(len(geometry.GROUP)), n0)
    source = np.tile(np.arange(n0), len(geometry.GROUP))

    parent = np.arange(len(stacked))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    pairs = cKDTree(stacked).query_pairs(MERGE_TOL, output_type='ndarray')
    for a, b in pairs:
        if slit_nodes[source[a]] and slit_nodes[source[b]] and \
                {copy_of[a], copy_of[b]} == set(slit_copies):
            continue
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(len(stacked))])
    unique_roots, renumber = np.unique(roots, return_inverse=True)
    nodes = stacked[unique_roots]
    triangles = renumber[np.concatenate(all_triangles)]

    twins = {}
    for i in np.flatnonzero(slit_nodes):
        a = renumber[slit_copies[0] * n0 + i]
        b = renumber[slit_copies[1] * n0 + i]
        if a != b:
            twins[int(a)] = int(b)
            twins[int(b)] = int(a)
    logger.debug('replicated %d sector nodes into %d nodes (%d slit twins)',
                 n0, len(nodes), len(twins) // 2)
    return Mesh(nodes, triangles, domain=domain, slit_twins=twins,
                sector_source=source[unique_roots], fundamental=fundamental)


def rectangle_mesh(x0, y0, x1, y1, nx, ny):
    """A structured mesh of the rectangle [x0, x1] x [y0, y1] with
    ``2 * nx * ny`` right triangles, all diagonals parallel to the line
    through (x0, y0) and (x1, y1).
    """
    if nx < 1 or ny < 1:
        raise ParameterError('nx and ny must be >= 1')
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    xx, yy = np.meshgrid(xs, ys)
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    def node(i, j):
        return j * (nx + 1) + i

    triangles = []
    for j in range(ny):
        for i in range(nx):
            a, b = node(i, j), node(i + 1, j)
            c, d = node(i + 1, j + 1), node(i, j + 1)
            triangles.append((a, b, c))
            triangles.append((a, c, d))
    domain = geometry.PolygonWithSlit([(x0, y0), (x1, y0), (x1, y1),
                                       (x0, y1)])
    return Mesh(nodes, np.array(triangles), domain=domain)


TopologyReport = collections.namedtuple('TopologyReport', [
    'n_nodes', 'n_edges', 'n_triangles', 'boundary_components',
    'euler_characteristic', 'min_angle', 'min_angle_global', 'max_edge',
    'min_edge', 'min_edge_in_bridge', 'area', 'max_edge_sharing',
    'slit_twins',
])


def _corner_wedge(mesh, v, segments, tol):
    # The two input segments meeting at node v, as unit directions away
    # from v plus a mask of the nodes on each (v excluded).
    apex = mesh.nodes[v]
    starts = np.hypot(*(segments[:, 0] - apex).T) <= tol
    ends = np.hypot(*(segments[:, 1] - apex).T) <= tol
    incident = np.flatnonzero(starts | ends)
    if len(incident) != 2:
        return None
    sides = []
    for s in incident:
        far = segments[s, 1] if starts[s] else segments[s, 0]
        direction = (far - apex) / np.hypot(*(far - apex))
        on = _point_segment_distances(mesh.nodes, segments[s][None])[:, 0] \
            <= tol
        on[v] = False
        sides.append((direction, on))
    return sides


def _sharp_corner_triangles(mesh, min_angle):
    """Mask of the triangles Triangle is not asked to improve: those near an
    input corner whose angle is below `min_angle`.

    A triangle is exempt when it touches the corner node or one of its
    neighbours, when it has vertices on both segments of the corner, or
    when it lies inside the corner's wedge where the wedge is no wider than
    :data:`SHARP_WEDGE_FACTOR` times the triangle's longest edge.
    """
    if mesh.fundamental is not None:
        copies = mesh.n_triangles // mesh.fundamental.n_triangles
        return np.tile(_sharp_corner_triangles(mesh.fundamental, min_angle),
                       copies)
    angles = mesh.triangle_angles()
    total = np.zeros(mesh.n_nodes)
    np.add.at(total, mesh.triangles.ravel(), angles.ravel())
    sharp = total < min_angle - 1e-9
    if not sharp.any():
        return np.zeros(mesh.n_triangles, dtype=bool)
    near = sharp.copy()
    e = mesh.edges()
    near[e[sharp[e[:, 0]], 1]] = True
    near[e[sharp[e[:, 1]], 0]] = True
    exempt = near[mesh.triangles].any(axis=1)
    if mesh.domain is None:
        return exempt

    segments, _ = mesh.domain.segments()
    tol = 1e-9 * max(1.0, float(np.abs(segments).max()))
    t = mesh.triangles
    corners = mesh.nodes[t]
    longest = np.max([np.hypot(*(corners[:, i] - corners[:, i - 1]).T)
                      for i in range(3)], axis=0)
    for v in np.flatnonzero(sharp):
        sides = _corner_wedge(mesh, v, segments, tol)
        if sides is None:
            continue
        (u_a, on_a), (u_b, on_b) = sides
        exempt |= on_a[t].any(axis=1) & on_b[t].any(axis=1)
        half = 0.5 * math.acos(float(np.clip(u_a.dot(u_b), -1.0, 1.0)))
        bisector = (u_a + u_b) / np.hypot(*(u_a + u_b))
        offsets = corners - mesh.nodes[v]
        distance = np.hypot(offsets[..., 0], offsets[..., 1])
        inside = (offsets.dot(bisector) >=
                  distance * math.cos(half) - tol).all(axis=1)
        width = 2.0 * distance.max(axis=1) * math.tan(half)
        exempt |= inside & (width <= SHARP_WEDGE_FACTOR * longest)
    return exempt


def topology_report(mesh, min_angle=20.0):
    """Counts and quality statistics of `mesh` (a :class:`TopologyReport`)."""
    edges = mesh.edges()
    n_boundary = len(mesh.boundary_edges)
    if n_boundary:
        b = mesh.boundary_edges
        graph = sparse.coo_matrix((np.ones(n_boundary), (b[:, 0], b[:, 1])),
                                  shape=(mesh.n_nodes, mesh.n_nodes))
        _, labels = csgraph.connected_components(graph, directed=False)
        components = len(np.unique(labels[np.unique(b)]))
    else:
        components = 0
    angles = mesh.triangle_angles().min(axis=1)
    exempt = _sharp_corner_triangles(mesh, min_angle)
    contract = angles[~exempt]
    lengths = mesh.edge_lengths()
    min_bridge = float('nan')
    if mesh.spec is not None:
        mid = mesh.nodes[edges].mean(axis=1)
        codes = geometry.region_codes(mesh.spec, mid, tol=1e-6)
        bridge = (codes == 1) | (codes == 2)
        if bridge.any():
            min_bridge = float(lengths[bridge].min())
    return TopologyReport(
        n_nodes=mesh.n_nodes,
        n_edges=len(edges),
        n_triangles=mesh.n_triangles,
        boundary_components=int(components),
        euler_characteristic=int(mesh.n_nodes - len(edges) +
                                 mesh.n_triangles),
        min_angle=float(contract.min()) if len(contract) else float('nan'),
        min_angle_global=float(angles.min()),
        max_edge=float(lengths.max()),
        min_edge=float(lengths.min()),
        min_edge_in_bridge=min_bridge,
        area=float(mesh.triangle_areas().sum()),
        max_edge_sharing=int(mesh.edge_triangle_counts().max()),
        slit_twins=len(mesh.slit_twins) // 2,
    )


def _check_contract(mesh, size, min_angle):
    areas = mesh.triangle_areas()
    if (areas <= 0).any():
        raise RefinementError('mesh has inverted triangles',
                              {'inverted': int((areas <= 0).sum())})
    report = topology_report(mesh, min_angle)
    diagnostics = {'min_angle': round(report.min_angle, 3),
                   'min_angle_global': round(report.min_angle_global, 3)}
    if report.max_edge_sharing > 2:
        raise RefinementError('mesh is not edge-manifold', diagnostics)
    curves = (mesh.domain.boundary_components()
              if mesh.domain is not None else None)
    if curves is not None and (
            report.boundary_components != curves or
            report.euler_characteristic != 2 - curves):
        diagnostics.update(
            boundary_components=report.boundary_components,
            euler_characteristic=report.euler_characteristic,
            expected_boundary_components=curves)
        raise RefinementError('mesh topology does not match the domain',
                              diagnostics)
    if report.min_angle < min_angle - 1e-6:
        raise RefinementError('minimum angle target not reached',
                              diagnostics)
    if mesh.domain is not None:
        expected = mesh.domain.area()
        if abs(report.area - expected) > 1e-9 * abs(expected):
            diagnostics.update(area=report.area, expected=expected)
            raise RefinementError('mesh area does not match the domain',
                                  diagnostics)


def write_mesh_json(mesh, path, min_angle=20.0):
    """Write ``mesh.json``: counts and quality statistics."""
    report = topology_report(mesh, min_angle)
    document = collections.OrderedDict(mesh_id=mesh.mesh_id)
    for key, value in report._asdict().items():
        if isinstance(value, float) and not math.isfinite(value):
            value = None
        document[key] = value
    with open(path, 'w') as f:
        json.dump(document, f, indent=2)
        f.write('\n')
    return report


def write_vtk(mesh, path, point_data=None):
    """Write `mesh` as a legacy ASCII VTK unstructured grid.

    :Parameters:
      - `point_data`: Optional dict of name -> nodal vector.
    """
    lines = ['# vtk DataFile Version 2.0', 'hotspot_forge mesh %s'
             % mesh.mesh_id, 'ASCII', 'DATASET UNSTRUCTURED_GRID',
             'POINTS %d double' % mesh.n_nodes]
    lines.extend('%.17g %.17g 0' % tuple(p) for p in mesh.nodes)
    lines.append('CELLS %d %d' % (mesh.n_triangles, 4 * mesh.n_triangles))
    lines.extend('3 %d %d %d' % tuple(t) for t in mesh.triangles)
    lines.append('CELL_TYPES %d' % mesh.n_triangles)
    lines.extend(['5'] * mesh.n_triangles)
    if point_data:
        lines.append('POINT_DATA %d' % mesh.n_nodes)
        for name, values in sorted(point_data.items()):
            lines.append('SCALARS %s double 1' % name)
            lines.append('LOOKUP_TABLE default')
            lines.extend('%.17g' % v for v in values)
    with open(path, 'w') as f:
        f.write('\n'.join(lines))
        f.write('\n')


def save_mesh(mesh, path):
    """Save `mesh` to an ``.npz`` file."""
    twins = np.array(sorted(mesh.slit_twins.items()),
                     dtype=np.int64).reshape(-1, 2)
    arrays = dict(nodes=mesh.nodes, triangles=mesh.triangles,
                  boundary_loop_ids=mesh.boundary_loop_ids, slit_twins=twins)
    if mesh.sector_source is not None:
        arrays['sector_source'] = mesh.sector_source
    if mesh.spec is not None:
        arrays['epsilon'] = np.float64(mesh.spec.epsilon)
        arrays['outer_x'] = np.float64(mesh.spec.outer_x)
    np.savez(path, **arrays)


def load_mesh(path):
    """Load a mesh written by :func:`save_mesh`."""
    try:
        data = np.load(path)
    except (IOError, OSError, ValueError) as e:
        raise ArtifactError('cannot read mesh %s: %s' % (path, e))
    with data:
        spec = domain = None
        if 'epsilon' in data:
            spec = geometry.DomainSpec(float(data['epsilon']),
                                       float(data['outer_x']))
            domain = geometry.build_domain(spec)
        return Mesh(data['nodes'], data['triangles'], domain=domain,
                    boundary_loop_ids=data['boundary_loop_ids'],
                    slit_twins=dict(map(tuple, data['slit_twins'].tolist())),
                    sector_source=data['sector_source']
                    if 'sector_source' in data else None,
                    spec=spec)
