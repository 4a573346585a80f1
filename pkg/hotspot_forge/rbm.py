"""Monte Carlo for normally reflected Brownian motion in D(epsilon).

Paths take Euler-Maruyama steps ``x + sqrt(dt) * noise`` (standard planar
Brownian motion, ``E|X_t - X_0|^2 = 2t``) and are reflected specularly
across every boundary segment they cross; the slit reflects from both
sides. A target is hit when a step leg crosses one of its segments.

Paths are simulated in blocks. Block ``i`` always draws its noise from
child ``i`` of ``SeedSequence(seed)``, and blocks are reduced in order, so
estimates do not depend on the number of worker threads.
"""

import collections
import csv
import logging
import math

import numpy as np
import shapely
from scipy.spatial.distance import pdist
from shapely import geometry as shapely_geometry

from hotspot_forge import geometry
from hotspot_forge.errors import HotspotError, ParameterError
from hotspot_forge.pool import JobFailure, run_jobs

logger = logging.getLogger(__name__)

__all__ = [
    'RBMConfig', 'Target', 'HitTimes', 'HitEstimate', 'RBMRow', 'dt_bound',
    'check_dt', 'simulate_step', 'simulate_paths', 'hitting_probability',
    'wilson_interval', 'normal_interval', 'estimate_from_hits',
    'exit_probability_series', 'p1_targets', 'p1_estimates', 'estimate_p1',
    'default_gamma', 'nodal_gamma', 'p2_estimates', 'estimate_p2',
    'mu2_lower_bound', 'write_rbm_csv',
]

MAX_REFLECTIONS = 8
CROSSING_TOL = 1e-9
Z_95 = 1.959963984540054

P1_INNER_STARTS = ((5.25, 0.0), (5.5, 0.0), (5.75, 0.0))
P1_OUTER_STARTS = ((6.25, 0.0), (6.5, 0.0), (6.75, 0.0))
P2_STARTS = ((3.5, 0.0), (4.0, 0.0), (4.25, 0.0))
P2_GAMMA_X = 4.5


class RBMConfig(collections.namedtuple('RBMConfig', [
        'dt', 'horizon', 'n_paths', 'seed', 'reflection', 'block_size',
        'check_containment', 'allow_coarse_dt'])):
    """Simulation settings.

    :Parameters:
      - `dt`: Time step; None picks :func:`dt_bound` of the domain.
      - `horizon`: Default simulated time.
      - `n_paths`: Paths per start point (>= 1000).
      - `seed`: Root of the per-block seed sequence.
      - `reflection`: Only ``'specular'``.
      - `block_size`: Paths per pool job.
      - `check_containment`: Verify every position lies in the closure of D.
      - `allow_coarse_dt`: Let :func:`check_dt` warn instead of raise when
        `dt` does not resolve the necks.
    """

    __slots__ = ()

    def __new__(cls, dt=None, horizon=0.5, n_paths=10000, seed=0,
                reflection='specular', block_size=2000,
                check_containment=False, allow_coarse_dt=False):
        if dt is not None and not dt > 0:
            raise ParameterError('dt must be > 0')
        if not horizon > 0:
            raise ParameterError('horizon must be > 0')
        if int(n_paths) != n_paths or n_paths < 1000:
            raise ParameterError('n_paths must be an integer >= 1000')
        if int(seed) != seed or seed < 0:
            raise ParameterError('seed must be a non-negative integer')
        if reflection != 'specular':
            raise ParameterError('unknown reflection %r' % (reflection, ))
        if block_size < 1:
            raise ParameterError('block_size must be >= 1')
        return super(RBMConfig, cls).__new__(
            cls, None if dt is None else float(dt), float(horizon),
            int(n_paths), int(seed), reflection, int(block_size),
            bool(check_containment), bool(allow_coarse_dt))


def dt_bound(spec):
    """``min(eps^2 / 4, 1e-4)``: the largest step that resolves necks of
    width ``2 eps``.
    """
    return min(spec.epsilon ** 2 / 4.0, 1e-4)


def check_dt(spec, cfg, warn=True):
    """Return `cfg` with its step resolved for D(epsilon).

    An unset ``cfg.dt`` becomes :func:`dt_bound`. A larger step raises
    :exc:`ParameterError` unless ``cfg.allow_coarse_dt`` is set, in which
    case it is logged (when `warn`) and kept.
    """
    bound = dt_bound(spec)
    if cfg.dt is None:
        return cfg._replace(dt=bound)
    if cfg.dt > bound * (1 + 1e-12):
        message = 'dt = %.3g exceeds %.3g, the step that resolves the ' \
                  'necks' % (cfg.dt, bound)
        if not cfg.allow_coarse_dt:
            raise ParameterError(message)
        if warn:
            logger.warning(message)
    return cfg


class Target(collections.namedtuple('Target', 'name segments regions')):
    """A set of segments to hit.

    :Parameters:
      - `name`: Label used in reports.
      - `segments`: ``(T, 2, 2)`` array of segment endpoints.
      - `regions`: Region codes (see :func:`geometry.region_codes`) that
        count as already hit at time 0; empty for none.
    """

    __slots__ = ()

    def __new__(cls, name, segments, regions=()):
        segments = np.asarray(segments, dtype=float).reshape(-1, 2, 2)
        if not len(segments):
            raise ParameterError('target %r has no segments' % (name, ))
        return super(Target, cls).__new__(cls, name, segments,
                                          frozenset(regions))

    def geometry(self):
        lines = shapely_geometry.MultiLineString(
            [tuple(map(tuple, s)) for s in self.segments])
        shapely.prepare(lines)
        return lines


HitTimes = collections.namedtuple(
    'HitTimes', 'times targets positions clamps n_steps')
HitTimes.__doc__ = """Result of :func:`simulate_paths`.

``times[i, j]`` is the end of the step in which path ``i`` first hit target
``j`` (0 for a start in the target, ``inf`` when never hit); ``positions``
are the final positions and ``clamps`` counts steps whose reflection did
not settle within the iteration limit.
"""


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


class _Boundary(object):
    # Segment arrays and a prepared shapely geometry of the boundary.

    def __init__(self, domain):
        self.domain = domain
        segments, loop_ids = domain.segments()
        self.start = segments[:, 0]
        self.direction = segments[:, 1] - segments[:, 0]
        length = np.hypot(self.direction[:, 0], self.direction[:, 1])
        self.normal = np.column_stack([-self.direction[:, 1],
                                       self.direction[:, 0]]) / length[:, None]
        self.two_sided = loop_ids == domain.slit_loop_id \
            if domain.slit_loop_id is not None \
            else np.zeros(len(segments), dtype=bool)
        self.lines = shapely_geometry.MultiLineString(
            [tuple(map(tuple, s)) for s in segments])
        shapely.prepare(self.lines)

    def first_crossing(self, a, b, skip):
        """Leg parameter and segment of the first exit crossing of each
        leg ``a -> b`` (``inf`` and -1 where there is none).
        """
        d = b - a
        w = self.start[None, :, :] - a[:, None, :]
        e = self.direction[None, :, :]
        denom = _cross(d[:, None, :], e)
        with np.errstate(divide='ignore', invalid='ignore'):
            t = _cross(w, e) / denom
            u = _cross(w, d[:, None, :]) / denom
        exits = (_cross(e, d[:, None, :]) < 0) | self.two_sided[None, :]
        ok = (denom != 0) & (t >= -CROSSING_TOL) & (t <= 1) & \
            (u >= -CROSSING_TOL) & (u <= 1 + CROSSING_TOL) & exits
        ok[np.arange(len(a)), skip] &= skip < 0
        t = np.where(ok, t, np.inf)
        j = np.argmin(t, axis=1)
        tmin = t[np.arange(len(a)), j]
        j[~np.isfinite(tmin)] = -1
        return np.clip(tmin, 0.0, None), j


def _legs(a, b):
    return shapely.linestrings(np.stack([a, b], axis=1))


def _advance(boundary, a, b, target_geoms):
    """Move ``a -> b`` with specular reflection.

    Returns the final positions, the per-target boolean hit masks of the
    legs travelled, and the number of clamped paths.
    """
    n = len(a)
    a = a.copy()
    b = b.copy()
    hits = [np.zeros(n, dtype=bool) for _ in target_geoms]
    active = np.arange(n)
    skip = np.full(n, -1)
    clamps = 0
    for iteration in range(MAX_REFLECTIONS + 1):
        legs = _legs(a[active], b[active])
        for mask, geom in zip(hits, target_geoms):
            mask[active] |= shapely.intersects(geom, legs)
        near = shapely.intersects(boundary.lines, legs)
        active = active[near]
        if not len(active):
            break
        t, j = boundary.first_crossing(a[active], b[active], skip[active])
        crossing = j >= 0
        active, t, j = active[crossing], t[crossing], j[crossing]
        if not len(active):
            break
        q = a[active] + t[:, None] * (b[active] - a[active])
        if iteration == MAX_REFLECTIONS:
            b[active] = q
            clamps = len(active)
            break
        normal = boundary.normal[j]
        excess = np.einsum('ij,ij->i', b[active] - q, normal)
        b[active] = b[active] - 2.0 * excess[:, None] * normal
        a[active] = q
        skip[active] = j
    return b, hits, clamps


def simulate_step(domain, p, dt, noise):
    """One reflected step from `p` with the 2D standard normal `noise`."""
    boundary = _Boundary(domain)
    a = np.asarray(p, dtype=float).reshape(1, 2)
    b = a + math.sqrt(dt) * np.asarray(noise, dtype=float).reshape(1, 2)
    final, _, clamps = _advance(boundary, a, b, [])
    if clamps:
        logger.warning('reflection from %r clamped', tuple(p))
    return geometry.Point2(*final[0])


def _initial_hits(domain, starts, target):
    hit = shapely.distance(target.geometry(),
                           shapely.points(starts)) <= geometry.POINT_TOL
    if target.regions:
        if domain.spec is None:
            raise ParameterError('region targets need a D(epsilon) domain')
        codes = geometry.region_codes(domain.spec, starts)
        hit |= np.isin(codes, list(target.regions))
    return hit


def _simulate_block(job):
    domain, starts, targets, horizon, cfg, seed = job
    rng = np.random.default_rng(seed)
    boundary = _Boundary(domain)
    geoms = [target.geometry() for target in targets]
    n = len(starts)
    times = np.full((n, len(targets)), np.inf)
    for k, target in enumerate(targets):
        times[_initial_hits(domain, starts, target), k] = 0.0
    n_steps = int(math.ceil(horizon / cfg.dt - 1e-9))
    scale = math.sqrt(cfg.dt)
    position = starts.copy()
    clamps = 0
    for step in range(n_steps):
        if targets and np.isfinite(times).all():
            break
        proposal = position + scale * rng.standard_normal((n, 2))
        position, hits, clamped = _advance(boundary, position, proposal,
                                           geoms)
        clamps += clamped
        now = min((step + 1) * cfg.dt, horizon)
        for k, mask in enumerate(hits):
            times[mask & np.isinf(times[:, k]), k] = now
        if cfg.check_containment and not domain.contains_many(
                position, tol=1e-9).all():
            raise HotspotError('reflected path left the domain at step %d'
                               % step)
    return times, position, clamps, n_steps


def simulate_paths(domain, starts, targets, horizon, cfg, concurrency=None):
    """Simulate one path per row of `starts` up to `horizon`.

    :Parameters:
      - `domain`: A :class:`geometry.PolygonWithSlit`.
      - `starts`: ``(n, 2)`` start points in the closure of the domain.
      - `targets`: Sequence of :class:`Target`.
      - `horizon`: Simulated time.
      - `cfg`: An :class:`RBMConfig`; ``cfg.n_paths`` is not used here.
      - `concurrency`: Worker count of the block pool.

    Returns :class:`HitTimes`.
    """
    starts = np.asarray(starts, dtype=float).reshape(-1, 2)
    if not domain.contains_many(starts, tol=1e-9).all():
        raise ParameterError('start points must lie in the domain')
    if domain.spec is not None:
        cfg = check_dt(domain.spec, cfg, warn=False)
    elif cfg.dt is None:
        raise ParameterError('dt must be set for a domain without epsilon')
    targets = list(targets)
    blocks = range(0, len(starts), cfg.block_size)
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(blocks))
    jobs = [(domain, starts[i:i + cfg.block_size], targets, horizon, cfg,
             seed) for i, seed in zip(blocks, seeds)]
    results = run_jobs(_simulate_block, jobs, concurrency)
    for result in results:
        if isinstance(result, JobFailure):
            raise result.exception
    times = np.concatenate([r[0] for r in results])
    positions = np.concatenate([r[1] for r in results])
    clamps = sum(r[2] for r in results)
    if clamps:
        logger.warning('%d reflections clamped to the boundary', clamps)
    return HitTimes(times, [t.name for t in targets], positions, clamps,
                    results[0][3] if results else 0)


# Estimates.

HitEstimate = collections.namedtuple('HitEstimate', [
    'probability', 'half_width', 'low', 'high', 'n_paths', 'target',
    'horizon', 'method'])
HitEstimate.__doc__ = """A hitting probability with its 95% interval
``[low, high]``; ``method`` is ``'normal'`` or
``'wilson'``.
"""


def normal_interval(successes, n, z=Z_95):
    p = successes / float(n)
    half = z * math.sqrt(p * (1 - p) / n)
    return p, half, max(0.0, p - half), min(1.0, p + half)


def wilson_interval(successes, n, z=Z_95):
    """Wilson score interval; returns ``(p, half_width, low, high)`` with
    the half-width of the score interval around its own center.
    """
    p = successes / float(n)
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / n + z * z / (4.0 * n * n))
    return p, half, max(0.0, center - half), min(1.0, center + half)


def estimate_from_hits(hits, target='', horizon=float('nan')):
    """:class:`HitEstimate` from a boolean array of per-path successes.

    The normal approximation is used unless fewer than 5 successes or
    failures were seen, where the Wilson interval takes over.
    """
    hits = np.asarray(hits, dtype=bool)
    n = len(hits)
    if not n:
        raise ParameterError('no paths')
    k = int(hits.sum())
    if k < 5 or n - k < 5:
        p, half, low, high = wilson_interval(k, n)
        method = 'wilson'
    else:
        p, half, low, high = normal_interval(k, n)
        method = 'normal'
    return HitEstimate(p, half, low, high, n, target, horizon, method)


def hitting_probability(domain, start, target, horizon, cfg,
                        concurrency=None):
    """Probability that the path from `start` hits `target` before
    `horizon`, from ``cfg.n_paths`` paths.
    """
    starts = np.tile(np.asarray(start, dtype=float), (cfg.n_paths, 1))
    result = simulate_paths(domain, starts, [target], horizon, cfg,
                            concurrency)
    return estimate_from_hits(result.times[:, 0] <= horizon, target.name,
                              horizon)


def exit_probability_series(t, half_width=1.0, terms=200):
    """Probability that standard 1D Brownian motion from 0 leaves
    ``(-a, a)`` by time `t`, by the eigenfunction series of the interval.
    """
    if half_width <= 0:
        raise ParameterError('half_width must be > 0')
    if t < 0:
        raise ParameterError('t must be >= 0')
    if t == 0:
        return 0.0
    k = np.arange(terms)
    odd = 2 * k + 1
    stay = 4.0 / math.pi * np.sum(
        (-1.0) ** k / odd *
        np.exp(-odd ** 2 * math.pi ** 2 * t / (8.0 * half_width ** 2)))
    return float(min(1.0, max(0.0, 1.0 - stay)))


# The constants p1 and p2.

RBMRow = collections.namedtuple('RBMRow',
                                'target start_id start estimate dt seed')


def _rotations():
    return [sigma for sigma in geometry.GROUP if not sigma.reflect]


def _images(segment):
    segment = np.asarray(segment, dtype=float)
    return np.stack([sigma.apply_many(segment) for sigma in _rotations()])


def p1_targets(spec):
    """The targets ``T K3`` (entry into I) and ``T K7`` (entry into E)."""
    inner = Target('T K3', _images(geometry.k_segment(spec, 3)),
                   regions=(0, ))
    outer = Target('T K7', _images(geometry.k_segment(spec, 7)),
                   regions=(3, ))
    return inner, outer


def _estimate_rows(spec, cfg, groups, horizon, success, concurrency):
    # groups: [(label, starts, targets)]
    rows = []
    for label, starts, targets in groups:
        for start_id, start in enumerate(starts):
            result = simulate_paths(
                geometry.build_domain(spec),
                np.tile(start, (cfg.n_paths, 1)), targets, horizon, cfg,
                concurrency)
            estimate = estimate_from_hits(success(result.times), label,
                                          horizon)
            logger.info('%s from %r: %.4f +- %.4f', label, tuple(start),
                        estimate.probability, estimate.half_width)
            rows.append(RBMRow(label, start_id, tuple(start), estimate,
                               cfg.dt, cfg.seed))
    return rows


def p1_estimates(spec, cfg, bridge=0, concurrency=None):
    """Per-start estimates of ``P(tau_I < 1/2)`` from M_i and of
    ``P(tau_E < 1/2)`` from M_e in the bridge rotated by `bridge` thirds of
    a turn.
    """
    if bridge not in (0, 1, 2):
        raise ParameterError('bridge must be 0, 1 or 2')
    cfg = check_dt(spec, cfg)
    rotation = geometry.GROUP[bridge]
    inner, outer = p1_targets(spec)
    groups = [
        ('p1 M_i -> T K3', rotation.apply_many(P1_INNER_STARTS), [inner]),
        ('p1 M_e -> T K7', rotation.apply_many(P1_OUTER_STARTS), [outer]),
    ]
    return _estimate_rows(spec, cfg, groups, 0.5,
                          lambda times: times[:, 0] <= 0.5, concurrency)


def estimate_p1(spec, cfg, bridge=0, concurrency=None):
    """The smallest per-start estimate of :func:`p1_estimates`."""
    rows = p1_estimates(spec, cfg, bridge, concurrency)
    return min((row.estimate for row in rows),
               key=lambda e: e.probability)


def default_gamma(spec):
    """A segment across the hub arm at ``x = 4.5``, for runs without a
    computed nodal line.
    """
    a2, a3 = geometry.vertices(spec)[1:3]
    height = a2.y + (P2_GAMMA_X - a2.x) * (a3.y - a2.y) / (a3.x - a2.x)
    return np.array([(P2_GAMMA_X, -0.9 * height), (P2_GAMMA_X, 0.9 * height)])


def nodal_gamma(spec, curve):
    """The curve gamma of p2 built from a computed nodal line.

    Takes the first component of `curve` (a NodalCurve) lying in a bridge,
    rotates it into the bridge on the positive x axis and joins its endpoint
    nearer the hub to I: straight down to the axis, then along the axis to
    ``x = 4.5``. Raises :exc:`ParameterError` when no component lies in a
    bridge or the joined curve fails the checks of an explicit gamma.
    """
    component = None
    for line in curve.polylines:
        if len(line) < 2:
            continue
        codes = geometry.region_codes(spec, line, tol=1e-9)
        if np.isin(codes, (1, 2)).all():
            component = line
            break
    if component is None:
        raise ParameterError('no nodal component lies in a bridge')
    line = max((sigma.apply_many(component) for sigma in _rotations()),
               key=lambda points: points[:, 0].mean())
    if line[0, 0] < line[-1, 0]:
        line = line[::-1]
    points = [tuple(p) for p in line]
    for p in ((line[-1, 0], 0.0), (P2_GAMMA_X, 0.0)):
        if math.hypot(p[0] - points[-1][0], p[1] - points[-1][1]) > 0:
            points.append(p)
    return _check_gamma(spec, points)


def _check_gamma(spec, gamma):
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim != 2 or gamma.shape[1] != 2 or len(gamma) < 2:
        raise ParameterError('gamma must be a polyline of at least 2 points')
    if not np.isfinite(gamma).all():
        raise ParameterError('gamma has non-finite points')
    if pdist(gamma).max() < geometry.GAMMA_DIAMETER_MIN:
        raise ParameterError('gamma diameter is below %g'
                             % geometry.GAMMA_DIAMETER_MIN)
    line = shapely_geometry.LineString(gamma)
    domain = geometry.build_domain(spec)
    if not domain.polygon.buffer(1e-9).covers(line):
        raise ParameterError('gamma leaves the domain')
    if not line.intersects(geometry.inner_region(spec)):
        raise ParameterError('gamma does not intersect I')
    return gamma


def p2_estimates(spec, cfg, gamma=None, starts=None, concurrency=None):
    """Per-start estimates of ``P(tau_gamma < 1/2, tau_{T K4} > 1)`` for
    starts in I.
    """
    gamma = _check_gamma(spec, default_gamma(spec) if gamma is None
                         else gamma)
    if starts is None:
        starts = np.asarray(P2_STARTS)
    starts = np.asarray(starts, dtype=float).reshape(-1, 2)
    if not (geometry.region_codes(spec, starts) == 0).all():
        raise ParameterError('p2 starts must lie in I')
    cfg = check_dt(spec, cfg)
    targets = [Target('gamma', np.stack([gamma[:-1], gamma[1:]], axis=1)),
               Target('T K4', _images(geometry.k_segment(spec, 4)))]

    def success(times):
        return (times[:, 0] <= 0.5) & (times[:, 1] > 1.0)

    return _estimate_rows(spec, cfg, [('p2 I -> gamma', starts, targets)],
                          1.0, success, concurrency)


def estimate_p2(spec, cfg, gamma=None, starts=None, concurrency=None):
    """The smallest per-start estimate of :func:`p2_estimates`."""
    rows = p2_estimates(spec, cfg, gamma, starts, concurrency)
    return min((row.estimate for row in rows),
               key=lambda e: e.probability)


def mu2_lower_bound(p1, p2):
    """``-log(1 - p1 p2)``; infinite (and logged as saturated) when
    ``p1 p2 = 1``.
    """
    for name, value in (('p1', p1), ('p2', p2)):
        if not 0 <= value <= 1:
            raise ParameterError('%s must be in [0, 1], got %r'
                                 % (name, value))
    product = p1 * p2
    if product >= 1:
        logger.warning('mu2 lower bound saturated: p1 p2 = 1')
        return float('inf')
    return -math.log1p(-product)


def write_rbm_csv(rows, path):
    """Write ``rbm.csv``: target, start grid id, estimate, ci_halfwidth,
    n_paths, dt, seed.
    """
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['target', 'start_id', 'estimate', 'ci_halfwidth',
                         'n_paths', 'dt', 'seed'])
        for row in rows:
            writer.writerow([row.target, row.start_id,
                             '%.17g' % row.estimate.probability,
                             '%.17g' % row.estimate.half_width,
                             row.estimate.n_paths, '%.17g' % row.dt,
                             row.seed])
