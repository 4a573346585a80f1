import math
import os
import unittest

import numpy as np

from hotspot_forge import analysis, geometry, rbm
from hotspot_forge.errors import ParameterError
from test import COARSE_SPEC, assert_raises, coarse_mesh, read_lines, \
    slit_square_domain, square_domain, temp_dir, thin_rectangle


class ConfigTest(unittest.TestCase):
    def test_defaults(self):
        cfg = rbm.RBMConfig()
        self.assertIsNone(cfg.dt)
        self.assertFalse(cfg.allow_coarse_dt)
        self.assertEqual(10000, cfg.n_paths)
        self.assertEqual('specular', cfg.reflection)

    def test_validation(self):
        with assert_raises(ParameterError, 'n_paths'):
            rbm.RBMConfig(n_paths=999)
        with assert_raises(ParameterError, 'dt'):
            rbm.RBMConfig(dt=0)
        with assert_raises(ParameterError, 'reflection'):
            rbm.RBMConfig(reflection='absorbing')
        with assert_raises(ParameterError, 'seed'):
            rbm.RBMConfig(seed=-1)

    def test_check_dt(self):
        spec = geometry.DomainSpec(1.0 / 3200)
        bound = spec.epsilon ** 2 / 4
        self.assertEqual(bound, rbm.dt_bound(spec))
        self.assertEqual(1e-4, rbm.dt_bound(geometry.DomainSpec(1.0 / 201)))
        self.assertEqual(bound, rbm.check_dt(spec, rbm.RBMConfig()).dt)
        with assert_raises(ParameterError, 'exceeds'):
            rbm.check_dt(spec, rbm.RBMConfig(dt=1e-4))
        with self.assertLogs('hotspot_forge.rbm', 'WARNING'):
            cfg = rbm.check_dt(spec, rbm.RBMConfig(dt=1e-4,
                                                   allow_coarse_dt=True))
        self.assertEqual(1e-4, cfg.dt)
        cfg = rbm.RBMConfig(dt=bound)
        self.assertIs(cfg, rbm.check_dt(spec, cfg))

    def test_coarse_dt_in_domain(self):
        spec = geometry.DomainSpec(1.0 / 3200)
        inner, _ = rbm.p1_targets(spec)
        with assert_raises(ParameterError, 'exceeds'):
            rbm.hitting_probability(geometry.build_domain(spec), (5.25, 0.0),
                                    inner, 0.1,
                                    rbm.RBMConfig(dt=1e-4, n_paths=1000))
        with assert_raises(ParameterError, 'dt must be set'):
            rbm.simulate_paths(square_domain(1.0), [(0.0, 0.0)], [], 0.1,
                               rbm.RBMConfig(n_paths=1000))

    def test_target(self):
        with assert_raises(ParameterError, 'no segments'):
            rbm.Target('empty', [])
        target = rbm.Target('one', [(0, 0), (1, 0)], regions=[0])
        self.assertEqual((1, 2, 2), target.segments.shape)
        self.assertEqual(frozenset([0]), target.regions)


class StepTest(unittest.TestCase):
    def test_interior(self):
        p = rbm.simulate_step(square_domain(1.0), (0.0, 0.0), 0.01,
                              (0.1, 0.2))
        self.assertAlmostEqual(0.01, p.x)
        self.assertAlmostEqual(0.02, p.y)

    def test_wall(self):
        p = rbm.simulate_step(square_domain(1.0), (0.2, -0.95), 0.01,
                              (0.5, -1.0))
        self.assertAlmostEqual(0.25, p.x)
        self.assertAlmostEqual(-0.95, p.y)

    def test_corner(self):
        p = rbm.simulate_step(square_domain(1.0), (0.95, 0.95), 0.01,
                              (1.0, 1.0))
        self.assertAlmostEqual(0.95, p.x)
        self.assertAlmostEqual(0.95, p.y)

    def test_slit_reflects_both_sides(self):
        domain = slit_square_domain()
        p = rbm.simulate_step(domain, (0.5, 0.05), 0.01, (0.0, -1.0))
        self.assertAlmostEqual(0.05, p.y)
        p = rbm.simulate_step(domain, (0.5, -0.05), 0.01, (0.0, 1.0))
        self.assertAlmostEqual(-0.05, p.y)
        # Past the tip the step is free.
        p = rbm.simulate_step(domain, (-0.5, 0.05), 0.01, (0.0, -1.0))
        self.assertAlmostEqual(-0.05, p.y)


class SimulateTest(unittest.TestCase):
    def test_mean_square_displacement(self):
        cfg = rbm.RBMConfig(dt=1e-3, n_paths=1000, seed=7)
        result = rbm.simulate_paths(square_domain(10.0),
                                    np.zeros((40000, 2)), [], 0.1, cfg)
        self.assertEqual(100, result.n_steps)
        msd = (result.positions ** 2).sum(axis=1).mean()
        self.assertAlmostEqual(0.2, msd, delta=0.004)

    def test_independent_of_concurrency(self):
        cfg = rbm.RBMConfig(dt=1e-3, n_paths=1000, seed=3, block_size=500)
        target = rbm.Target('right', [(0.3, -1.0), (0.3, 1.0)])
        runs = [rbm.simulate_paths(square_domain(1.0), np.zeros((2000, 2)),
                                   [target], 0.05, cfg, concurrency)
                for concurrency in (1, 3)]
        np.testing.assert_array_equal(runs[0].times, runs[1].times)
        np.testing.assert_array_equal(runs[0].positions, runs[1].positions)
        self.assertEqual(['right'], runs[0].targets)

    def test_start_outside(self):
        with assert_raises(ParameterError, 'start points'):
            rbm.simulate_paths(square_domain(1.0), [(2.0, 0.0)], [], 0.1,
                               rbm.RBMConfig(n_paths=1000))

    def test_stays_in_domain(self):
        domain = slit_square_domain()
        cfg = rbm.RBMConfig(dt=1e-3, n_paths=1000, check_containment=True)
        starts = np.tile([(0.5, 0.02)], (1000, 1))
        result = rbm.simulate_paths(domain, starts, [], 0.05, cfg)
        self.assertTrue(domain.contains_many(result.positions,
                                             tol=1e-9).all())


class EstimateTest(unittest.TestCase):
    def test_normal(self):
        estimate = rbm.estimate_from_hits([True] * 50 + [False] * 50, 'x')
        self.assertEqual('normal', estimate.method)
        self.assertEqual(0.5, estimate.probability)
        self.assertAlmostEqual(rbm.Z_95 * 0.05, estimate.half_width)
        self.assertEqual(100, estimate.n_paths)

    def test_wilson(self):
        estimate = rbm.estimate_from_hits([True] * 2 + [False] * 98)
        self.assertEqual('wilson', estimate.method)
        self.assertGreater(estimate.low, 0)
        self.assertLess(estimate.low, 0.02)
        self.assertGreater(estimate.high, 0.02)
        with assert_raises(ParameterError):
            rbm.estimate_from_hits([])

    def test_exit_series(self):
        self.assertAlmostEqual(0.3146, rbm.exit_probability_series(0.5),
                               places=3)
        self.assertEqual(0.0, rbm.exit_probability_series(0.0))
        # Brownian scaling.
        self.assertAlmostEqual(rbm.exit_probability_series(0.5),
                               rbm.exit_probability_series(2.0, 2.0))
        with assert_raises(ParameterError):
            rbm.exit_probability_series(1.0, 0.0)

    def test_exit_probability_of_thin_rectangle(self):
        # The horizontal coordinate is a 1D Brownian motion; leaving the
        # rectangle through its short ends is the exit of (-1, 1).
        domain = thin_rectangle(1.0, 0.05)
        ends = rbm.Target('ends', [[(1.0, -0.05), (1.0, 0.05)],
                                   [(-1.0, -0.05), (-1.0, 0.05)]])
        cfg = rbm.RBMConfig(dt=5e-4, n_paths=4000, seed=11)
        estimate = rbm.hitting_probability(domain, (0.0, 0.0), ends, 0.5,
                                           cfg)
        exact = rbm.exit_probability_series(0.5)
        self.assertLess(abs(estimate.probability - exact),
                        3 * estimate.half_width)

    def test_start_on_target(self):
        target = rbm.Target('here', [(0.0, -0.5), (0.0, 0.5)])
        cfg = rbm.RBMConfig(dt=1e-3, n_paths=1000)
        estimate = rbm.hitting_probability(square_domain(1.0), (0.0, 0.0),
                                           target, 0.01, cfg)
        self.assertEqual(1.0, estimate.probability)
        self.assertEqual('wilson', estimate.method)
        self.assertAlmostEqual(1.0, estimate.high)
        self.assertLess(estimate.low, 1.0)


class BoundTest(unittest.TestCase):
    def test_mu2_lower_bound(self):
        self.assertAlmostEqual(0.2876820724517809,
                               rbm.mu2_lower_bound(0.5, 0.5))
        self.assertEqual(0.0, rbm.mu2_lower_bound(0.0, 0.7))
        with self.assertLogs('hotspot_forge.rbm', 'WARNING'):
            self.assertEqual(float('inf'), rbm.mu2_lower_bound(1.0, 1.0))
        with assert_raises(ParameterError, 'p1 must be in [0, 1]'):
            rbm.mu2_lower_bound(1.5, 0.5)
        with assert_raises(ParameterError, 'p2'):
            rbm.mu2_lower_bound(0.5, -0.1)


class DomainTargetTest(unittest.TestCase):
    spec = geometry.DomainSpec(1.0 / 3200)

    def test_p1_targets(self):
        inner, outer = rbm.p1_targets(self.spec)
        self.assertEqual((3, 2, 2), inner.segments.shape)
        self.assertEqual('T K3', inner.name)
        self.assertEqual('T K7', outer.name)
        np.testing.assert_allclose([(5.0, 0.01), (5.0, -0.01)],
                                   inner.segments[0])

    def test_p1_from_bridge(self):
        domain = geometry.build_domain(self.spec)
        inner, _ = rbm.p1_targets(self.spec)
        cfg = rbm.RBMConfig(dt=2.5e-4, n_paths=1000, seed=5,
                            allow_coarse_dt=True)
        estimate = rbm.hitting_probability(domain, (5.25, 0.0), inner, 0.1,
                                           cfg)
        self.assertGreater(estimate.probability, 0)
        # A start in I has already entered I.
        estimate = rbm.hitting_probability(domain, (1.0, 0.0), inner, 0.1,
                                           cfg)
        self.assertEqual(1.0, estimate.probability)

    def test_bridge_index(self):
        with assert_raises(ParameterError, 'bridge'):
            rbm.p1_estimates(self.spec, rbm.RBMConfig(), bridge=3)

    def test_default_gamma(self):
        gamma = rbm.default_gamma(self.spec)
        self.assertEqual((2, 2), gamma.shape)
        np.testing.assert_array_equal([4.5, 4.5], gamma[:, 0])
        self.assertAlmostEqual(-gamma[0, 1], gamma[1, 1])
        domain = geometry.build_domain(self.spec)
        self.assertTrue(domain.contains_many(gamma).all())

    def test_gamma_validation(self):
        cfg = rbm.RBMConfig()
        with assert_raises(ParameterError, 'at least 2 points'):
            rbm.p2_estimates(self.spec, cfg, gamma=[(4.5, 0.0)])
        with assert_raises(ParameterError, 'non-finite'):
            rbm.p2_estimates(self.spec, cfg,
                             gamma=[(4.5, 0.0), (4.5, float('nan'))])
        with assert_raises(ParameterError, 'diameter'):
            rbm.p2_estimates(self.spec, cfg,
                             gamma=[(4.5, 0.0), (4.5, 1e-12)])
        with assert_raises(ParameterError, 'does not intersect I'):
            rbm.p2_estimates(self.spec, cfg,
                             gamma=[(20.0, 0.0), (21.0, 0.0)])
        with assert_raises(ParameterError, 'must lie in I'):
            rbm.p2_estimates(self.spec, cfg, starts=[(5.5, 0.0)])
        with assert_raises(ParameterError, 'leaves the domain'):
            rbm.p2_estimates(self.spec, cfg, gamma=[(0.0, 0.0), (3.0, 3.0)])


class NodalGammaTest(unittest.TestCase):
    def setUp(self):
        self.mesh = coarse_mesh()
        canonical, _ = geometry.canonicalize(self.mesh.nodes)
        self.x = canonical[:, 0]

    def test_from_bridge_crossing(self):
        curve = analysis.nodal_curves(self.mesh, self.x - 5.4321)
        gamma = rbm.nodal_gamma(COARSE_SPEC, curve)
        np.testing.assert_allclose([4.5, 0.0], gamma[-1])
        np.testing.assert_allclose([5.4321, 0.0], gamma[-2], atol=1e-9)
        np.testing.assert_allclose(5.4321, gamma[:-1, 0], atol=1e-9)
        codes = geometry.region_codes(COARSE_SPEC, gamma[:-2], tol=1e-9)
        self.assertTrue(np.isin(codes, (1, 2)).all())
        checked = rbm._check_gamma(COARSE_SPEC, gamma)
        np.testing.assert_array_equal(gamma, checked)

    def test_no_bridge_component(self):
        radius = np.hypot(self.mesh.nodes[:, 0], self.mesh.nodes[:, 1])
        curve = analysis.nodal_curves(self.mesh, radius - 20.0)
        with assert_raises(ParameterError, 'no nodal component'):
            rbm.nodal_gamma(COARSE_SPEC, curve)


class CsvTest(unittest.TestCase):
    def test_rbm_csv(self):
        estimate = rbm.estimate_from_hits([True] * 30 + [False] * 70, 'T K3')
        rows = [rbm.RBMRow('T K3', 0, (5.25, 0.0), estimate, 1e-4, 0)]
        with temp_dir() as tmp:
            path = os.path.join(tmp, 'rbm.csv')
            rbm.write_rbm_csv(rows, path)
            lines = read_lines(path)
        self.assertEqual(
            'target,start_id,estimate,ci_halfwidth,n_paths,dt,seed',
            lines[0])
        fields = lines[1].split(',')
        self.assertEqual(['T K3', '0', '0.29999999999999999'], fields[:3])
        self.assertAlmostEqual(estimate.half_width, float(fields[3]))
        self.assertEqual(['100', '0.0001', '0'], fields[4:])
        self.assertTrue(math.isfinite(float(fields[3])))


if __name__ == '__main__':
    unittest.main()
