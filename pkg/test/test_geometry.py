import json
import math
import os
import unittest
from fractions import Fraction

import numpy as np
from shapely import geometry as shapely_geometry

from hotspot_forge import geometry
from hotspot_forge.errors import ConstructionError, DomainError, \
    ParameterError
from test import assert_raises, slit_square_domain, square_domain, \
    temp_dir


class DomainSpecTest(unittest.TestCase):
    def test_defaults(self):
        spec = geometry.DomainSpec()
        self.assertEqual(1.0 / 3200, spec.epsilon)
        self.assertEqual(235.0, spec.outer_x)
        self.assertEqual([(-18.0, 0.0), (-16.0, 0.0)],
                         [tuple(p) for p in spec.slit])

    def test_epsilon_range(self):
        with assert_raises(ParameterError, 'epsilon must be < 1/200'):
            geometry.DomainSpec(0.01)
        with assert_raises(ParameterError, 'epsilon must be < 1/200'):
            geometry.DomainSpec(1.0 / 200)
        with assert_raises(ParameterError):
            geometry.DomainSpec(0)
        with assert_raises(ParameterError):
            geometry.DomainSpec(float('nan'))
        geometry.DomainSpec(0.00499)

    def test_outer_x(self):
        with assert_raises(ParameterError, 'outer_x must be > 18'):
            geometry.DomainSpec(1e-3, 18)

    def test_vertices(self):
        spec = geometry.DomainSpec(1.0 / 3200)
        a = geometry.vertices(spec)
        self.assertEqual(10, len(a))
        self.assertEqual((0.0, 0.0), tuple(a[0]))
        self.assertEqual((6.0, 1.0 / 3200), tuple(a[4]))
        self.assertEqual((235.0, 0.0), tuple(a[9]))
        # A2, A8 and A9 lie on the 60-degree ray.
        for p in (a[1], a[7], a[8]):
            self.assertAlmostEqual(math.pi / 3, math.atan2(p.y, p.x),
                                   places=14)

    def test_sqrt3_arithmetic(self):
        x = geometry.Sqrt3Number(Fraction(1, 2), Fraction(1, 2))
        self.assertEqual(geometry.Sqrt3Number(1, Fraction(1, 2)),
                         x * x)
        self.assertAlmostEqual(0.5 + 0.5 * math.sqrt(3), float(x))


class SymmetryTest(unittest.TestCase):
    def test_group(self):
        self.assertEqual(6, len(set(geometry.GROUP)))
        self.assertEqual(geometry.IDENTITY, geometry.GROUP[0])
        for sigma in geometry.GROUP:
            m = sigma.matrix()
            np.testing.assert_allclose(np.eye(2), m.dot(m.T), atol=1e-15)
            self.assertEqual(
                geometry.IDENTITY,
                geometry.compose(sigma, geometry.inverse(sigma)))

    def test_compose_matches_matrices(self):
        for sigma in geometry.GROUP:
            for tau in geometry.GROUP:
                np.testing.assert_allclose(
                    sigma.matrix().dot(tau.matrix()),
                    geometry.compose(sigma, tau).matrix(), atol=1e-15)

    def test_orbit(self):
        self.assertEqual(1, len(geometry.orbit((0.0, 0.0))))
        self.assertEqual(3, len(geometry.orbit((1.0, 0.0))))
        self.assertEqual(6, len(geometry.orbit((1.0, 0.2))))

    def test_canonical_representative(self):
        rng = np.random.default_rng(1)
        for p in rng.uniform(-10, 10, size=(50, 2)):
            q, sigma = geometry.canonical_representative(p)
            angle = math.atan2(q.y, q.x)
            self.assertTrue(-1e-12 <= angle <= math.pi / 3 + 1e-12)
            self.assertAlmostEqual(math.hypot(*p), abs(q))
            image = geometry.apply_symmetry(sigma, p)
            self.assertAlmostEqual(q.x, image.x)
            self.assertAlmostEqual(q.y, image.y)

    def test_point_must_be_finite(self):
        with assert_raises(ParameterError):
            geometry.Point2(float('inf'), 0)


class DomainTest(unittest.TestCase):
    spec = geometry.DomainSpec(1.0 / 3200)

    def test_area_is_six_sectors(self):
        domain = geometry.build_domain(self.spec)
        sector = shapely_geometry.Polygon(
            geometry.fundamental_region(self.spec)).area
        self.assertAlmostEqual(6 * sector, domain.area(), delta=1e-9 * sector)

    def test_holes_and_slit(self):
        domain = geometry.build_domain(self.spec)
        self.assertEqual(3, len(domain.hole_loops))
        self.assertEqual(4, domain.slit_loop_id)
        segments, loop_ids = domain.segments()
        self.assertEqual(len(segments), len(loop_ids))
        self.assertEqual(1, (loop_ids == domain.slit_loop_id).sum())

    def test_contains(self):
        domain = geometry.build_domain(self.spec)
        self.assertTrue(domain.contains((0.0, 0.0)))
        self.assertTrue(domain.contains((6.0, 0.0)))
        self.assertFalse(domain.contains((6.0, 0.01)))
        self.assertFalse(domain.contains((3.0, 3.0)))
        self.assertFalse(domain.contains((300.0, 0.0)))
        # Symmetric under G.
        for sigma in geometry.GROUP:
            self.assertTrue(domain.contains(
                geometry.apply_symmetry(sigma, (5.5, 0.002))))

    def test_bad_polygon(self):
        with assert_raises(ConstructionError):
            geometry.PolygonWithSlit([(0, 0), (1, 1), (1, 0), (0, 1)])
        with assert_raises(ConstructionError, 'counterclockwise'):
            geometry.PolygonWithSlit([(0, 0), (0, 1), (1, 1), (1, 0)])

    def test_regions(self):
        points = [(0.0, 0.0), (5.5, 0.0), (6.5, 0.0), (20.0, 0.0),
                  (3.0, 3.0)]
        codes = geometry.region_codes(self.spec, points)
        self.assertEqual([0, 1, 2, 3, -1], codes.tolist())
        self.assertEqual(geometry.RegionLabel.BRIDGE_INNER,
                         geometry.region_of(self.spec, geometry.apply_symmetry(
                             geometry.GROUP[1], (5.5, 0.0))))

    def test_k_segment(self):
        a, b = geometry.k_segment(self.spec, 3)
        self.assertEqual((5.0, 0.01), tuple(a))
        self.assertEqual((5.0, -0.01), tuple(b))
        with assert_raises(ParameterError):
            geometry.k_segment(self.spec, 2)

    def test_angle_bounds(self):
        alpha1, alpha2 = geometry.angle_bounds(self.spec)
        # Steepest descent on A9 A10, steepest climb on A7 A8.
        self.assertAlmostEqual(math.atan2(-9 * math.sqrt(3), 226.0), alpha1,
                               places=12)
        self.assertAlmostEqual(math.atan2(8 * math.sqrt(3) - 0.01, 1.0),
                               alpha2, places=12)
        self.assertLess(alpha2 - alpha1, math.pi / 2)

    def test_neck_centers(self):
        a11, a12 = geometry.neck_centers(self.spec)
        self.assertAlmostEqual(6.0 + 1.0 / 30, a11.x, places=12)
        self.assertAlmostEqual(6.0 - 1.0 / 30, a12.x, places=12)
        self.assertEqual(0.0, a11.y)
        self.assertEqual(0.0, a12.y)

    def test_region_partition(self):
        rng = np.random.default_rng(5)
        points = np.concatenate([
            geometry.sample_points(self.spec, 300, rng),
            [(0.0, 0.0), (5.5, 0.001), (6.5, -0.001), (6.9, 0.0)]])
        codes = geometry.region_codes(self.spec, points)
        self.assertTrue(set(codes.tolist()) <= {0, 1, 2, 3})
        self.assertEqual([0, 1, 2, 2], codes[-4:].tolist())
        for sigma in geometry.GROUP:
            np.testing.assert_array_equal(
                codes, geometry.region_codes(self.spec,
                                             sigma.apply_many(points)))

    def test_boundary_components(self):
        domain = geometry.build_domain(self.spec)
        outer, hole = domain.slit_end_loops()
        self.assertEqual(frozenset([0]), outer)
        self.assertEqual(1, len(hole))
        self.assertNotIn(0, hole)
        self.assertEqual(3, domain.boundary_components())
        self.assertEqual(1, slit_square_domain().boundary_components())
        self.assertEqual(1, square_domain().boundary_components())
        floating = geometry.PolygonWithSlit(
            [(-1, -1), (1, -1), (1, 1), (-1, 1)],
            slit=[(-0.5, 0), (0.5, 0)])
        self.assertEqual(2, floating.boundary_components())

    def test_sample_points(self):
        rng = np.random.default_rng(0)
        points = geometry.sample_points(self.spec, 200, rng, region='D1')
        self.assertEqual((200, 2), points.shape)
        polygon = shapely_geometry.Polygon(
            geometry.fundamental_region(self.spec))
        for p in points[:20]:
            self.assertTrue(polygon.buffer(1e-9).contains(
                shapely_geometry.Point(p)))
        points = geometry.sample_points(self.spec, 100, rng)
        self.assertTrue(geometry.build_domain(self.spec)
                        .contains_many(points).all())
        with assert_raises(ParameterError):
            geometry.sample_points(self.spec, 1, rng, region='E')

    def test_write_domain_json(self):
        with temp_dir() as tmp:
            path = os.path.join(tmp, 'domain.json')
            geometry.write_domain_json(geometry.build_domain(self.spec),
                                       path)
            with open(path) as f:
                document = json.load(f)
        self.assertEqual(1.0 / 3200, document['epsilon'])
        self.assertEqual(3, len(document['holes']))
        self.assertEqual([6.0, 1.0 / 3200], document['vertices']['A5'])


class TestFunctionsTest(unittest.TestCase):
    spec = geometry.DomainSpec(1.0 / 3200)

    def test_values(self):
        f1 = geometry.test_function_values(self.spec, 'f1',
                                           [(0, 0), (20, 0)])
        f2 = geometry.test_function_values(self.spec, 'f2',
                                           [(0, 0), (20, 0)])
        self.assertEqual([1.0, 0.0], f1.tolist())
        self.assertEqual([0.0, 1.0], f2.tolist())

    def test_ramp(self):
        a11, _ = geometry.neck_centers(self.spec)
        # Halfway between 400 eps and 1/2 on a log scale.
        eps = self.spec.epsilon
        d = math.sqrt(400 * eps * 0.5)
        value = geometry.test_function(self.spec, 'f1', (a11.x - d, 0.0))
        self.assertAlmostEqual(0.5, value)

    def test_disjoint_supports(self):
        rng = np.random.default_rng(4)
        points = geometry.sample_points(self.spec, 500, rng)
        f1 = geometry.test_function_values(self.spec, 'f1', points)
        f2 = geometry.test_function_values(self.spec, 'f2', points)
        np.testing.assert_array_equal(np.zeros(len(points)), f1 * f2)
        self.assertTrue(((f1 >= 0) & (f1 <= 1)).all())

    def test_continuous_across_neck(self):
        xs = np.linspace(5.0, 7.0, 20001)
        points = np.column_stack([xs, np.zeros_like(xs)])
        for kind in ('f1', 'f2'):
            values = geometry.test_function_values(self.spec, kind, points)
            self.assertLess(np.abs(np.diff(values)).max(), 1e-3)
        f1 = geometry.test_function_values(self.spec, 'f1', points)
        self.assertEqual(1.0, f1[0])
        self.assertEqual(0.0, f1[-1])

    def test_invariant(self):
        rng = np.random.default_rng(3)
        points = geometry.sample_points(self.spec, 200, rng)
        values = geometry.test_function_values(self.spec, 'f1', points)
        for sigma in geometry.GROUP:
            np.testing.assert_allclose(
                values, geometry.test_function_values(
                    self.spec, 'f1', sigma.apply_many(points)), atol=1e-12)

    def test_combined(self):
        value = geometry.test_function(self.spec, 'f', (0, 0),
                                       integrals=(2.0, 4.0))
        self.assertEqual(0.5, value)
        with assert_raises(ParameterError):
            geometry.test_function(self.spec, 'f', (0, 0))

    def test_regime(self):
        with assert_raises(ParameterError):
            geometry.test_function(geometry.DomainSpec(1.0 / 1000), 'f1',
                                   (0, 0))

    def test_outside(self):
        with assert_raises(DomainError):
            geometry.test_function(self.spec, 'f1', (3.0, 3.0))


class FixtureDomainTest(unittest.TestCase):
    def test_square(self):
        domain = square_domain(2.0)
        self.assertEqual(16.0, domain.area())
        self.assertIsNone(domain.slit_loop_id)
        self.assertEqual((-2.0, -2.0, 2.0, 2.0), domain.bounds())


if __name__ == '__main__':
    unittest.main()
