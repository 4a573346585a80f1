"""Checks of the hot-spots counterexample claims on computed eigenpairs.

:func:`verify` runs every check for one epsilon and returns a
:class:`VerificationReport`. A failed claim is a value in that report,
never an exception; exceptions are reserved for operational trouble.
"""

import collections
import csv
import json
import logging
import math
from fractions import Fraction

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from hotspot_forge import fem, geometry, mesh as meshing
from hotspot_forge.errors import AmbiguousSignError, \
    DegenerateEigenvectorError, ParameterError
from hotspot_forge.pool import JobFailure, run_jobs

logger = logging.getLogger(__name__)

__all__ = [
    'Solution', 'NodalCurve', 'NodalCheck', 'SimplicityGap',
    'ExtremumReport', 'ConeCheck', 'ErrorEstimate', 'InvariantSpectrum',
    'CheckResult', 'VerificationReport', 'SweepRow',
    'solve', 'lemma1_test_vector', 'lemma1_bound', 'lemma1_slack',
    'level_curves', 'nodal_curves', 'check_nodal_in_M', 'k6_excursion',
    'nodal_domain_count', 'simplicity_gap', 'disc_integral',
    'sign_normalize', 'extremum_report', 'symmetry_residual',
    'cone_monotonicity_check', 'invariant_spectrum', 'lift_invariant',
    'discretization_error', 'verify', 'epsilon_sweep', 'sweep_checks',
    'contour_levels', 'merge_reports', 'write_report_json',
    'write_nodal_csv', 'write_sweep_csv', 'write_contours_csv',
]

ZERO_TOL = 1e-12
SIGN_TOL = 1e-10
ARGMAX_RADIUS = 0.05
SYMMETRY_TOL = 1e-2
CONE_VIOLATION_RATE = 1e-3
SIMPLICITY_FACTOR = 10.0
MARGIN_FACTOR = 5.0
SCALING_FACTOR = 2.0


Solution = collections.namedtuple(
    'Solution', 'spec domain mesh K M pairs size params min_angle')


def solve(spec, size, params=None, min_angle=20.0):
    """Mesh D(epsilon), assemble and compute the low spectrum.

    Returns a :class:`Solution`.
    """
    params = params or fem.SolverParams()
    domain = geometry.build_domain(spec)
    mesh = meshing.triangulate(domain, size, min_angle)
    K, M = fem.assemble(mesh, lump=params.lump)
    pairs = fem.smallest_eigenpairs(K, M, params.k, params.tol,
                                    params.max_iter, params.method,
                                    params.seed)
    logger.info('epsilon=%.6g: mu2=%.10g mu3=%.10g', spec.epsilon,
                pairs[1].value, pairs[2].value if len(pairs) > 2
                else float('nan'))
    return Solution(spec, domain, mesh, K, M, pairs, size, params, min_angle)


# Lemma-1 bound.

def lemma1_test_vector(spec, mesh, M=None):
    """Interpolated ``f = f1 / int(f1) - f2 / int(f2)`` with the discrete
    mean removed. Returns ``(f, int(f1), int(f2))``.
    """
    if Fraction(spec.epsilon) >= geometry.EPSILON_LEMMA1:
        raise ParameterError('test functions need epsilon < 1/1600')
    if M is None:
        M = fem.mass_matrix(mesh)
    f1 = fem.interpolate(mesh, lambda points: geometry.test_function_values(
        spec, 'f1', points), vectorized=True)
    f2 = fem.interpolate(mesh, lambda points: geometry.test_function_values(
        spec, 'f2', points), vectorized=True)
    i1 = fem.integrate(mesh, f1, M)
    i2 = fem.integrate(mesh, f2, M)
    if i1 <= 0 or i2 <= 0:
        raise ParameterError('mesh too coarse: integrals of f1, f2 are '
                             '%.3g, %.3g' % (i1, i2))
    f = f1 / i1 - f2 / i2
    c = fem.constant_mode(M)
    f = f - c * c.dot(M.dot(f))
    return f, i1, i2


def lemma1_bound(spec, mesh, K, M):
    """Rayleigh quotient of the mean-free Lemma-1 test function, an upper
    bound for the discrete mu2.
    """
    f, _, _ = lemma1_test_vector(spec, mesh, M)
    return fem.rayleigh_quotient(K, M, f)


def lemma1_slack(mu2, residual):
    """Allowance on ``mu2 <= bound`` for a pair solved to `residual`."""
    return 10.0 * max(residual, 1e-15) * mu2


# Nodal lines.

class NodalCurve(object):
    """Polylines of a level set of a P1 function.

    :Parameters:
      - `polylines`: List of ``(n_i, 2)`` point arrays.
      - `sizes`: Per-point length of the mesh edge the point lies on.
      - `level`: The level that was extracted.
    """

    def __init__(self, polylines=(), sizes=(), level=0.0):
        self.polylines = [np.asarray(p, dtype=float) for p in polylines]
        self.sizes = [np.asarray(h, dtype=float) for h in sizes]
        self.level = level

    def __str__(self):
        return '<%s level=%g components=%d points=%d>' % (
            self.__class__.__name__, self.level, len(self.polylines),
            self.n_points)

    def __len__(self):
        return len(self.polylines)

    @property
    def component_ids(self):
        return list(range(len(self.polylines)))

    @property
    def n_points(self):
        return sum(len(p) for p in self.polylines)

    def points(self):
        if not self.polylines:
            return np.zeros((0, 2))
        return np.concatenate(self.polylines)

    def point_sizes(self):
        if not self.sizes:
            return np.zeros(0)
        return np.concatenate(self.sizes)

    def is_empty(self):
        return not self.polylines


_TRIANGLE_EDGES = ((0, 1), (1, 2), (2, 0))


def level_curves(mesh, values, level=0.0):
    """Extract the `level` set of the P1 function `values` by marching
    triangles. A node counts as above the level when its value is strictly
    greater; crossings on a shared edge are chained into polylines.
    """
    values = np.asarray(values, dtype=float)
    above = values > level
    t = mesh.triangles
    flags = above[t]
    count = flags.sum(axis=1)
    cut = np.flatnonzero((count == 1) | (count == 2))

    segments = []
    for ti in cut:
        keys = []
        for i, j in _TRIANGLE_EDGES:
            if flags[ti, i] != flags[ti, j]:
                a, b = t[ti, i], t[ti, j]
                keys.append((a, b) if a < b else (b, a))
        segments.append(tuple(keys))

    incident = collections.defaultdict(list)
    for s, (ka, kb) in enumerate(segments):
        incident[ka].append(s)
        incident[kb].append(s)

    visited = np.zeros(len(segments), dtype=bool)

    def walk(key, segment):
        keys = []
        while True:
            following = [s for s in incident[key]
                         if s != segment and not visited[s]]
            if not following:
                return keys
            segment = following[0]
            visited[segment] = True
            ka, kb = segments[segment]
            key = kb if ka == key else ka
            keys.append(key)

    polylines, sizes = [], []
    for s, (ka, kb) in enumerate(segments):
        if visited[s]:
            continue
        visited[s] = True
        chain = walk(ka, s)[::-1] + [ka, kb] + walk(kb, s)
        edge = np.asarray(chain, dtype=np.int64)
        va, vb = values[edge[:, 0]], values[edge[:, 1]]
        frac = (level - va) / (vb - va)
        pa, pb = mesh.nodes[edge[:, 0]], mesh.nodes[edge[:, 1]]
        polylines.append(pa + frac[:, None] * (pb - pa))
        sizes.append(np.hypot(*(pb - pa).T))
    return NodalCurve(polylines, sizes, level)


def nodal_curves(mesh, phi2):
    """The nodal line of `phi2` as a :class:`NodalCurve`."""
    phi2 = np.asarray(phi2, dtype=float)
    scale = np.abs(phi2).max() if len(phi2) else 0.0
    if scale == 0:
        raise DegenerateEigenvectorError('eigenvector is identically zero')
    flat = (np.abs(phi2[mesh.triangles]) <= 1e-14 * scale).all(axis=1)
    if flat.any():
        raise DegenerateEigenvectorError(
            'eigenvector vanishes on triangle %d' % np.flatnonzero(flat)[0])
    return level_curves(mesh, phi2, 0.0)


NodalCheck = collections.namedtuple(
    'NodalCheck', 'passed max_excursion max_excess n_points diagnostic')


def _distance_to_strip(points, x_low, x_high, half_height):
    # Distance, in the canonical sector, from the strip between two
    # vertical segments of half-height `half_height`.
    canonical, _ = geometry.canonicalize(points)
    x, y = canonical[:, 0], canonical[:, 1]
    rise = np.maximum(0.0, y - half_height)
    out = np.zeros(len(x))
    left = x < x_low
    right = x > x_high
    out[left] = np.hypot(x_low - x[left], rise[left])
    out[right] = np.hypot(x[right] - x_high, rise[right])
    return out


def bridge_excursion(points):
    """Distance of each point from the bridges M (zero inside M)."""
    return _distance_to_strip(points, 5.0, 7.0, 0.01)


def check_nodal_in_M(spec, curve, h=None):
    """Check that every point of `curve` lies in M inflated by the local
    mesh size (`h`, or the length of the edge the point lies on).
    """
    if curve.is_empty():
        return NodalCheck(False, float('inf'), float('inf'), 0,
                          'no nodal line')
    points = curve.points()
    sizes = curve.point_sizes() if h is None else np.full(len(points),
                                                           float(h))
    excursion = bridge_excursion(points)
    excess = excursion - sizes
    worst = int(np.argmax(excess))
    passed = bool(excess[worst] <= 0)
    diagnostic = '' if passed else 'point %r is %.3g outside M' % (
        tuple(points[worst]), excursion[worst])
    return NodalCheck(passed, float(excursion.max()), float(excess[worst]),
                      len(points), diagnostic)


def k6_excursion(curve):
    """Largest distance of a nodal point from the segments T K6."""
    if curve.is_empty():
        return float('nan')
    return float(_distance_to_strip(curve.points(), 6.5, 6.5, 0.005).max())


def nodal_domain_count(mesh, phi2):
    """Connected components of ``{phi2 > 0}`` and ``{phi2 < 0}`` over the
    mesh edges, ignoring nodes with ``|phi2| <= 1e-12 max|phi2|``.
    """
    phi2 = np.asarray(phi2, dtype=float)
    scale = np.abs(phi2).max()
    if scale == 0:
        return 0
    significant = np.abs(phi2) > ZERO_TOL * scale
    sign = np.sign(phi2)
    e = mesh.edges()
    keep = significant[e[:, 0]] & significant[e[:, 1]] & \
        (sign[e[:, 0]] == sign[e[:, 1]])
    e = e[keep]
    graph = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])),
                              shape=(mesh.n_nodes, mesh.n_nodes))
    _, labels = csgraph.connected_components(graph, directed=False)
    return len(np.unique(labels[significant]))


# Simplicity, sign and extremum.

SimplicityGap = collections.namedtuple('SimplicityGap',
                                       'gap relative_gap passed')


def simplicity_gap(eigs, err_est):
    """``mu3 - mu2`` against ten times the discretization error estimate."""
    if len(eigs) < 3:
        raise ParameterError('need at least 3 eigenpairs')
    mu2, mu3 = eigs[1].value, eigs[2].value
    gap = mu3 - mu2
    relative = gap / mu2 if mu2 > 0 else float('inf')
    return SimplicityGap(gap, relative,
                         bool(gap > SIMPLICITY_FACTOR * err_est))


def disc_integral(mesh, phi, center=(0.0, 0.0),
                  radius=geometry.HOT_DISC_RADIUS, n_radial=16,
                  n_angular=64):
    """Integral of the P1 interpolant of `phi` over a disc, by
    Gauss-Legendre quadrature in the radius and the trapezoidal rule in the
    angle. Parts of the disc outside the mesh contribute nothing.
    """
    x, w = np.polynomial.legendre.leggauss(n_radial)
    r = 0.5 * radius * (x + 1.0)
    wr = 0.5 * radius * w
    theta = 2.0 * math.pi * np.arange(n_angular) / n_angular
    rr, tt = np.meshgrid(r, theta, indexing='ij')
    points = np.column_stack([center[0] + (rr * np.cos(tt)).ravel(),
                              center[1] + (rr * np.sin(tt)).ravel()])
    values = mesh.interpolate_at(phi, points)
    missing = np.isnan(values)
    if missing.any():
        logger.warning('%d quadrature points of the disc are outside the '
                       'mesh', missing.sum())
        values[missing] = 0.0
    weights = (wr[:, None] * r[:, None] *
               np.full(n_angular, 2.0 * math.pi / n_angular)[None, :])
    return float(values.dot(weights.ravel()))


def sign_normalize(mesh, phi2):
    """Return `phi2` or ``-phi2``, whichever has a positive integral over
    the disc A = B(0, 1/10).
    """
    phi2 = np.asarray(phi2, dtype=float)
    c2 = disc_integral(mesh, phi2)
    area = math.pi * geometry.HOT_DISC_RADIUS ** 2
    if abs(c2) <= SIGN_TOL * np.abs(phi2).max() * area:
        raise AmbiguousSignError('integral of phi2 over A is %.3g' % c2)
    return phi2 if c2 > 0 else -phi2


ExtremumReport = collections.namedtuple('ExtremumReport', [
    'argmax_node', 'argmax_point', 'interior', 'distance_to_origin',
    'phi_at_origin', 'boundary_max', 'margin'])


def extremum_report(mesh, phi2):
    """Where the maximum of `phi2` sits and how far it clears the boundary."""
    phi2 = np.asarray(phi2, dtype=float)
    node = int(np.argmax(phi2))
    boundary = mesh.boundary_nodes()
    boundary_max = float(phi2[boundary].max())
    point = mesh.nodes[node]
    return ExtremumReport(
        argmax_node=node,
        argmax_point=(float(point[0]), float(point[1])),
        interior=bool(node not in set(boundary.tolist())),
        distance_to_origin=float(math.hypot(*point)),
        phi_at_origin=float(mesh.interpolate_at(phi2, [(0.0, 0.0)])[0]),
        boundary_max=boundary_max,
        margin=float(phi2[node] - boundary_max),
    )


def symmetry_residual(mesh, phi2):
    """``max |phi2(sigma p) - phi2(p)| / max|phi2|`` over nodes and G.

    A node whose image cannot be located counts as a violation of size 1.
    """
    phi2 = np.asarray(phi2, dtype=float)
    scale = np.abs(phi2).max()
    if scale == 0:
        return 0.0
    worst = 0.0
    failures = 0
    for sigma in geometry.GROUP[1:]:
        images = mesh.interpolate_at(phi2, sigma.apply_many(mesh.nodes))
        lost = np.isnan(images)
        failures += int(lost.sum())
        if (~lost).any():
            worst = max(worst, float(np.abs(images[~lost] -
                                            phi2[~lost]).max() / scale))
    if failures:
        logger.warning('symmetry residual: %d node images not located',
                       failures)
        worst = max(worst, 1.0)
    return worst


ConeCheck = collections.namedtuple(
    'ConeCheck', 'violations total worst_pair worst_excess')


def cone_monotonicity_check(spec, mesh, phi2, n_samples=10000, tol=1e-3,
                            seed=0):
    """Count sampled pairs ``(x, y)`` of D1 with the direction of ``y - x``
    inside the open cone ``(alpha2 - pi/2, alpha1 + pi/2)`` (shrunk by
    `tol`) where ``phi2(x) < phi2(y) - tol * max|phi2|``. Pairs starting at
    the origin are included.
    """
    phi2 = np.asarray(phi2, dtype=float)
    alpha1, alpha2 = geometry.angle_bounds(spec)
    low = alpha2 - math.pi / 2 + tol
    high = alpha1 + math.pi / 2 - tol
    rng = np.random.default_rng(seed)
    x = geometry.sample_points(spec, n_samples, rng, region='D1')
    y = geometry.sample_points(spec, n_samples, rng, region='D1')
    x = np.concatenate([x, np.zeros((n_samples, 2))])
    y = np.concatenate([y, y])
    d = y - x
    angle = np.arctan2(d[:, 1], d[:, 0])
    admissible = (angle > low) & (angle < high)
    x, y = x[admissible], y[admissible]
    fx = mesh.interpolate_at(phi2, x)
    fy = mesh.interpolate_at(phi2, y)
    valid = np.isfinite(fx) & np.isfinite(fy)
    x, y, fx, fy = x[valid], y[valid], fx[valid], fy[valid]
    excess = fy - fx
    bad = excess > tol * np.abs(phi2).max()
    worst_pair, worst_excess = None, 0.0
    if len(excess):
        i = int(np.argmax(excess))
        worst_pair = (tuple(x[i]), tuple(y[i]))
        worst_excess = float(excess[i])
    return ConeCheck(int(bad.sum()), int(len(excess)), worst_pair,
                     worst_excess)


# The G-invariant sub-problem.

InvariantSpectrum = collections.namedtuple(
    'InvariantSpectrum', 'mesh pairs lowest rank')


def invariant_spectrum(spec, size, params=None, min_angle=20.0,
                       fundamental=None, full_pairs=None):
    """Neumann spectrum of D1 alone.

    On a replicated mesh these are exactly the G-invariant discrete
    eigenpairs of D. ``rank`` is the 1-based position of the lowest
    nonzero invariant eigenvalue in `full_pairs` (None without them).
    """
    params = params or fem.SolverParams()
    if fundamental is None:
        fundamental = meshing.triangulate_fundamental(spec, size, min_angle)
    K, M = fem.assemble(fundamental, lump=params.lump)
    k = min(params.k, fundamental.n_nodes - 1)
    pairs = fem.smallest_eigenpairs(K, M, k, params.tol, params.max_iter,
                                    params.method, params.seed)
    lowest = pairs[1].value
    rank = None
    if full_pairs is not None:
        rank = 1 + sum(1 for p in full_pairs
                       if p.value < lowest * (1 - 1e-6))
    return InvariantSpectrum(fundamental, pairs, lowest, rank)


def lift_invariant(mesh, v_sector):
    """Lift a nodal vector of the fundamental mesh to a replicated mesh."""
    if mesh.sector_source is None:
        raise ParameterError('mesh was not built by replication')
    v_sector = np.asarray(v_sector, dtype=float)
    if mesh.fundamental is not None and \
            len(v_sector) != mesh.fundamental.n_nodes:
        raise ParameterError('vector does not match the fundamental mesh')
    return v_sector[mesh.sector_source]


# Discretization error.

ErrorEstimate = collections.namedtuple('ErrorEstimate',
                                       'mu2 mu3 margin fine')


def _margin(solution):
    try:
        phi = sign_normalize(solution.mesh, solution.pairs[1].vector)
    except AmbiguousSignError:
        return float('nan')
    return extremum_report(solution.mesh, phi).margin


def discretization_error(spec, size, params=None, min_angle=20.0,
                         coarse=None):
    """Richardson estimates from the meshes `size` and ``size.refined(0.5)``.
    """
    if coarse is None:
        coarse = solve(spec, size, params, min_angle)
    fine = solve(spec, size.refined(0.5), coarse.params, min_angle)
    estimate = ErrorEstimate(
        mu2=fem.richardson_estimate(coarse.pairs[1].value,
                                    fine.pairs[1].value),
        mu3=fem.richardson_estimate(coarse.pairs[2].value,
                                    fine.pairs[2].value),
        margin=fem.richardson_estimate(_margin(coarse), _margin(fine)),
        fine=fine)
    logger.info('discretization error: mu2 %.3g, mu3 %.3g, margin %.3g',
                estimate.mu2, estimate.mu3, estimate.margin)
    return estimate


# Reports.

CheckResult = collections.namedtuple(
    'CheckResult', 'name passed measured threshold margin')

_RELATIONS = {
    '<=': (lambda m, t: m <= t, lambda m, t: t - m),
    '<': (lambda m, t: m < t, lambda m, t: t - m),
    '>=': (lambda m, t: m >= t, lambda m, t: m - t),
    '>': (lambda m, t: m > t, lambda m, t: m - t),
    '==': (lambda m, t: m == t, lambda m, t: -abs(m - t)),
}


def _json_value(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return collections.OrderedDict((k, _json_value(v))
                                       for k, v in value.items())
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_json_value(v) for v in value]
    return value


class VerificationReport(object):
    """Pass/fail record of every check run for one epsilon (or a sweep).

    :Parameters:
      - `epsilon`: The epsilon checked, or None for a sweep report.
      - `mesh_id`: Id of the mesh the eigenpairs live on.
      - `eigenvalues`: The computed eigenvalues, kernel first.
    """

    def __init__(self, epsilon=None, mesh_id=None, eigenvalues=()):
        self.epsilon = epsilon
        self.mesh_id = mesh_id
        self.eigenvalues = [float(v) for v in eigenvalues]
        self.checks = []
        self.diagnostics = collections.OrderedDict()

    def __str__(self):
        return '<%s epsilon=%r checks=%d failed=%s>' % (
            self.__class__.__name__, self.epsilon, len(self.checks),
            ','.join(self.failed_checks()) or 'none')

    def add_check(self, name, measured, threshold, relation='<='):
        """Record a check; passes when ``measured relation threshold``."""
        test, margin = _RELATIONS[relation]
        measured = float(measured)
        threshold = float(threshold)
        if math.isnan(measured) or math.isnan(threshold):
            passed, slack = False, float('nan')
        else:
            passed, slack = bool(test(measured, threshold)), \
                float(margin(measured, threshold))
        result = CheckResult(name, passed, measured, threshold, slack)
        self.checks.append(result)
        log = logger.info if passed else logger.warning
        log('check %s: %s (measured %.6g %s %.6g)', name,
            'pass' if passed else 'FAIL', measured, relation, threshold)
        return result

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failed_checks(self):
        return [c.name for c in self.checks if not c.passed]

    def check(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self):
        return _json_value(collections.OrderedDict([
            ('epsilon', self.epsilon),
            ('mesh_id', self.mesh_id),
            ('eigenvalues', self.eigenvalues),
            ('passed', self.passed),
            ('failed_checks', self.failed_checks()),
            ('checks', [collections.OrderedDict(c._asdict())
                        for c in self.checks]),
            ('diagnostics', self.diagnostics),
        ]))


def _record_constants(report):
    report.diagnostics['constants'] = collections.OrderedDict([
        ('epsilon_max', '1/200'),
        ('epsilon_lemma1', '1/1600'),
        ('hot_disc', 'A = B(0, 1/10)'),
        ('gamma_diameter_min', geometry.GAMMA_DIAMETER_MIN),
        ('cutoff_diameter', geometry.CUTOFF_DIAMETER),
    ])


def verify(solution, error=None, estimate_error=True, cone_samples=10000,
           cone_tol=1e-3, seed=0, invariant=True):
    """Run every check on `solution` and return a
    :class:`VerificationReport`.

    :Parameters:
      - `solution`: A :class:`Solution` for D(epsilon).
      - `error`: A precomputed :class:`ErrorEstimate`; computed from a
        second, refined solve when omitted and `estimate_error` is set.
      - `cone_samples`, `cone_tol`, `seed`: Cone-monotonicity sampling.
      - `invariant`: Also solve the G-invariant sub-problem on D1.
    """
    spec, mesh, K, M, pairs = (solution.spec, solution.mesh, solution.K,
                               solution.M, solution.pairs)
    report = VerificationReport(spec.epsilon, mesh.mesh_id,
                                [p.value for p in pairs])
    _record_constants(report)
    topology = meshing.topology_report(mesh, solution.min_angle)
    report.diagnostics['topology'] = collections.OrderedDict(
        topology._asdict())

    if error is None and estimate_error:
        error = discretization_error(spec, solution.size, solution.params,
                                     solution.min_angle, coarse=solution)
    if error is not None:
        report.diagnostics['error_estimate'] = collections.OrderedDict([
            ('mu2', error.mu2), ('mu3', error.mu3),
            ('margin', error.margin),
            ('mu2_fine', error.fine.pairs[1].value)])
        err_mu2, err_margin = error.mu2, error.margin
    else:
        report.diagnostics['error_estimate'] = None
        err_mu2 = err_margin = 0.0

    mu1, mu2 = pairs[0].value, pairs[1].value
    kernel = pairs[0].vector
    report.add_check('kernel', mu1 / mu2 if mu2 > 0 else float('inf'),
                     1e-10)
    report.add_check('kernel_constancy',
                     np.std(kernel) / abs(np.mean(kernel)), 1e-6)
    report.add_check('solver_residual', max(p.residual for p in pairs),
                     solution.params.tol)

    if Fraction(spec.epsilon) < geometry.EPSILON_LEMMA1:
        bound = lemma1_bound(spec, mesh, K, M)
        report.add_check('lemma1_bound', mu2,
                         bound + lemma1_slack(mu2, pairs[1].residual))
        report.diagnostics['lemma1_bound'] = bound
        report.diagnostics['lemma1_scaled'] = bound * math.log(
            1.0 / (800 * spec.epsilon))
    else:
        report.diagnostics['lemma1_bound'] = 'epsilon >= 1/1600'

    phi = pairs[1].vector
    try:
        phi = sign_normalize(mesh, phi)
        c2 = disc_integral(mesh, phi)
    except AmbiguousSignError as e:
        logger.warning('%s', e)
        c2 = disc_integral(mesh, phi)
        report.add_check('sign_normalization', abs(c2), SIGN_TOL * np.abs(
            phi).max() * math.pi * geometry.HOT_DISC_RADIUS ** 2, '>')
    report.diagnostics['c2'] = c2

    curve = nodal_curves(mesh, phi)
    nodal = check_nodal_in_M(spec, curve)
    report.add_check('nodal_in_M', nodal.max_excess, 0.0)
    report.diagnostics['nodal_max_excursion'] = nodal.max_excursion
    report.diagnostics['nodal_components'] = len(curve)
    report.diagnostics['k6_excursion'] = k6_excursion(curve)
    if nodal.diagnostic:
        report.diagnostics['nodal_diagnostic'] = nodal.diagnostic
    report.add_check('nodal_domains', nodal_domain_count(mesh, phi), 2,
                     '==')

    if len(pairs) >= 3:
        gap = simplicity_gap(pairs, err_mu2)
        report.add_check('simplicity', gap.gap,
                         SIMPLICITY_FACTOR * err_mu2, '>')
        report.diagnostics['relative_gap'] = gap.relative_gap

    extremum = extremum_report(mesh, phi)
    report.diagnostics['extremum'] = collections.OrderedDict(
        extremum._asdict())
    report.add_check('argmax_interior', float(extremum.interior), 1.0, '==')
    report.add_check('argmax_near_origin', extremum.distance_to_origin,
                     ARGMAX_RADIUS)
    report.add_check('strict_maximum', extremum.margin,
                     MARGIN_FACTOR * err_margin, '>')

    report.add_check('symmetry', symmetry_residual(mesh, phi), SYMMETRY_TOL)

    cone = cone_monotonicity_check(spec, mesh, phi, cone_samples, cone_tol,
                                   seed)
    rate = cone.violations / cone.total if cone.total else float('nan')
    report.add_check('cone_monotonicity', rate, CONE_VIOLATION_RATE)
    report.diagnostics['cone'] = collections.OrderedDict(cone._asdict())

    if invariant and mesh.fundamental is not None:
        inv = invariant_spectrum(spec, solution.size, solution.params,
                                 solution.min_angle, mesh.fundamental,
                                 pairs)
        report.diagnostics['invariant_mu'] = inv.lowest
        report.diagnostics['invariant_rank'] = inv.rank

    logger.info('epsilon=%.6g: %d checks, failed: %s', spec.epsilon,
                len(report.checks), ', '.join(report.failed_checks())
                or 'none')
    return report


# Epsilon sweep.

SweepRow = collections.namedtuple(
    'SweepRow', 'epsilon mu2 mu3 bound nodal_pass margin error residual',
    defaults=(0.0, ))


def _sweep_row(job):
    epsilon, outer_x, policy, params = job
    spec = geometry.DomainSpec(epsilon, outer_x)
    solution = solve(spec, policy.size_field(epsilon), params,
                     policy.min_angle)
    bound = lemma1_bound(spec, solution.mesh, solution.K, solution.M)
    phi = solution.pairs[1].vector
    try:
        phi = sign_normalize(solution.mesh, phi)
        margin = extremum_report(solution.mesh, phi).margin
    except AmbiguousSignError:
        margin = float('nan')
    nodal = check_nodal_in_M(spec, nodal_curves(solution.mesh, phi))
    return SweepRow(epsilon, solution.pairs[1].value,
                    solution.pairs[2].value, bound, nodal.passed, margin,
                    '', solution.pairs[1].residual)


def epsilon_sweep(eps_list, policy=None, params=None, concurrency=None,
                  outer_x=235.0):
    """One pipeline run per epsilon with a constant :class:`MeshPolicy`;
    rows sorted by epsilon, descending. A failing row keeps its epsilon and
    the error message, and the sweep goes on. Every domain has its A10 at
    `outer_x`.
    """
    policy = policy or meshing.MeshPolicy()
    params = params or fem.SolverParams()
    eps_list = sorted((float(e) for e in eps_list), reverse=True)
    for epsilon in eps_list:
        if Fraction(epsilon) >= geometry.EPSILON_LEMMA1 or \
                epsilon <= 0:
            raise ParameterError('sweep epsilons must be in (0, 1/1600)')
    results = run_jobs(_sweep_row,
                       [(e, outer_x, policy, params) for e in eps_list],
                       concurrency)
    rows = []
    nan = float('nan')
    for epsilon, result in zip(eps_list, results):
        if isinstance(result, JobFailure):
            rows.append(SweepRow(epsilon, nan, nan, nan, False, nan,
                                 str(result.exception)))
        else:
            rows.append(result)
    return rows


def sweep_checks(rows):
    """Cross-row checks of a sweep as a :class:`VerificationReport`."""
    report = VerificationReport()
    _record_constants(report)
    failed_rows = sum(1 for r in rows if r.error)
    report.add_check('sweep_rows_completed', failed_rows, 0, '==')
    mu2 = [r.mu2 for r in rows]
    steps = [a - b for a, b in zip(mu2, mu2[1:])]
    report.add_check('sweep_mu2_decreasing',
                     min(steps) if steps else float('nan'), 0.0, '>')
    report.add_check('sweep_lemma1_bound',
                     max(r.mu2 - r.bound - lemma1_slack(r.mu2, r.residual)
                         for r in rows), 0.0)
    scaled = [r.bound * math.log(1.0 / (800 * r.epsilon)) for r in rows]
    report.diagnostics['lemma1_scaled'] = scaled
    spread = max(scaled) / min(scaled) if min(scaled) > 0 else float('nan')
    report.add_check('sweep_log_scaling', spread, SCALING_FACTOR, '<')
    report.add_check('sweep_nodal_in_M',
                     sum(1 for r in rows if not r.nodal_pass), 0, '==')
    return report


# Artifacts.

def contour_levels(phi, n_levels=21):
    """`n_levels` evenly spaced levels strictly inside the range of `phi`.

    When the range straddles zero, 0 is one of the levels: a level within
    rounding of zero is set to 0, otherwise 0 is added as an extra level.
    """
    phi = np.asarray(phi, dtype=float)
    low, high = float(phi.min()), float(phi.max())
    levels = np.linspace(low, high, n_levels + 2)[1:-1]
    if low < 0 < high:
        nearest = np.argmin(np.abs(levels))
        if abs(levels[nearest]) <= 1e-12 * (high - low):
            levels[nearest] = 0.0
        else:
            levels = np.sort(np.append(levels, 0.0))
    return levels


def write_report_json(report, path):
    with open(path, 'w') as f:
        json.dump(report.to_dict(), f, indent=2)
        f.write('\n')


def merge_reports(parts):
    """One report holding the checks of every ``(prefix, report)`` in
    `parts`.

    Check names get their prefix (``'sweep.'``, ``'rbm.'``); the diagnostics
    of a prefixed report are nested under the prefix without its dot. The
    epsilon, mesh id and eigenvalues come from the first report.
    """
    parts = list(parts)
    if not parts:
        raise ParameterError('no reports to merge')
    first = parts[0][1]
    merged = VerificationReport(first.epsilon, first.mesh_id,
                                first.eigenvalues)
    for prefix, report in parts:
        merged.checks.extend(c._replace(name=prefix + c.name)
                             for c in report.checks)
        if prefix:
            merged.diagnostics[prefix.rstrip('.')] = report.diagnostics
        else:
            merged.diagnostics.update(report.diagnostics)
    return merged


def _write_polylines(writer, curve, prefix=()):
    for component, line in enumerate(curve.polylines):
        for x, y in line:
            writer.writerow(list(prefix) + [component, '%.17g' % x,
                                            '%.17g' % y])


def write_nodal_csv(curve, path):
    """Write ``nodal.csv``: component, x, y."""
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['component', 'x', 'y'])
        _write_polylines(writer, curve)


def write_sweep_csv(rows, path):
    """Write ``sweep.csv``: epsilon, mu2, mu3, bound, nodal_pass, margin."""
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['epsilon', 'mu2', 'mu3', 'bound', 'nodal_pass',
                         'margin'])
        for r in rows:
            writer.writerow(['%.17g' % r.epsilon, '%.17g' % r.mu2,
                             '%.17g' % r.mu3, '%.17g' % r.bound,
                             'true' if r.nodal_pass else 'false',
                             '%.17g' % r.margin])


def write_contours_csv(mesh, phi, path, n_levels=21):
    """Write ``contours.csv`` (level, component, x, y); returns the levels.
    """
    levels = contour_levels(phi, n_levels)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['level', 'component', 'x', 'y'])
        for level in levels:
            curve = level_curves(mesh, phi, level)
            _write_polylines(writer, curve, prefix=['%.17g' % level])
    return levels
