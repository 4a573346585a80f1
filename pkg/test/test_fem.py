import math
import os
import unittest
from unittest import mock

import numpy as np
import scipy.io

from hotspot_forge import fem, mesh as meshing
from hotspot_forge.errors import ArtifactError, AssemblyError, \
    EvaluationError, ParameterError, SolverError
from test import assert_raises, eigenpairs, hexagon_mesh, read_lines, \
    temp_dir


class AssemblyTest(unittest.TestCase):
    def setUp(self):
        self.mesh = meshing.rectangle_mesh(0, 0, 1, 1, 6, 6)
        self.K, self.M = fem.assemble(self.mesh)

    def test_symmetric(self):
        self.assertTrue(fem.is_symmetric(self.K))
        self.assertTrue(fem.is_symmetric(self.M))

    def test_constants_in_kernel(self):
        ones = np.ones(self.mesh.n_nodes)
        self.assertLess(np.abs(self.K.dot(ones)).max(), 1e-12)
        self.assertAlmostEqual(1.0, self.M.sum())

    def test_rayleigh_quotient_of_linear_function(self):
        x = self.mesh.nodes[:, 0]
        # |grad x|^2 integrates to 1 and x^2 to 1/3, both exactly in P1.
        self.assertAlmostEqual(3.0, fem.rayleigh_quotient(self.K, self.M, x))
        with assert_raises(ParameterError):
            fem.rayleigh_quotient(self.K, self.M, np.zeros(len(x)))

    def test_integrate(self):
        x = self.mesh.nodes[:, 0]
        self.assertAlmostEqual(0.5, fem.integrate(self.mesh, x, self.M))
        self.assertAlmostEqual(0.5, fem.integrate(self.mesh, x))
        with assert_raises(ParameterError):
            fem.integrate(self.mesh, x[:-1])

    def test_lumped(self):
        lumped = fem.mass_matrix(self.mesh, lump=True)
        self.assertEqual(self.mesh.n_nodes, lumped.nnz)
        self.assertAlmostEqual(1.0, lumped.sum())

    def test_degenerate_triangle(self):
        flat = meshing.Mesh([(0, 0), (1, 0), (2, 0)], [(0, 1, 2)])
        with assert_raises(AssemblyError, 'degenerate'):
            fem.assemble(flat)

    def test_single_triangle(self):
        mesh = meshing.Mesh([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)])
        K, M = fem.assemble(mesh)
        np.testing.assert_allclose(
            0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]),
            K.toarray(), atol=1e-15)
        np.testing.assert_allclose(
            np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24.0,
            M.toarray(), atol=1e-15)

    def test_constant_mode(self):
        c = fem.constant_mode(self.M)
        self.assertAlmostEqual(1.0, c.dot(self.M.dot(c)))
        self.assertTrue(np.allclose(c, c[0]))


class InterpolateTest(unittest.TestCase):
    def setUp(self):
        self.mesh = meshing.rectangle_mesh(0, 0, 1, 1, 2, 2)

    def test_pointwise(self):
        values = fem.interpolate(self.mesh, lambda p: p.x - p.y)
        np.testing.assert_allclose(
            self.mesh.nodes[:, 0] - self.mesh.nodes[:, 1], values)

    def test_vectorized(self):
        values = fem.interpolate(self.mesh, lambda nodes: nodes[:, 1],
                                 vectorized=True)
        np.testing.assert_allclose(self.mesh.nodes[:, 1], values)

    def test_not_finite(self):
        with assert_raises(EvaluationError, 'not finite'):
            fem.interpolate(self.mesh, lambda p: 1.0 / p.x if p.x else
                            float('inf'))

    def test_raises(self):
        def g(p):
            raise ValueError('boom')

        with assert_raises(EvaluationError, 'boom'):
            fem.interpolate(self.mesh, g)

    def test_wrong_shape(self):
        with assert_raises(EvaluationError, 'shape'):
            fem.interpolate(self.mesh, lambda nodes: np.zeros(3),
                            vectorized=True)


class SolverParamsTest(unittest.TestCase):
    def test_validation(self):
        with assert_raises(ParameterError, 'k must be'):
            fem.SolverParams(k=1)
        with assert_raises(ParameterError, 'tol'):
            fem.SolverParams(tol=0)
        with assert_raises(ParameterError, 'method'):
            fem.SolverParams(method='arnoldi')

    def test_defaults(self):
        params = fem.SolverParams()
        self.assertEqual(6, params.k)
        self.assertEqual('lobpcg', params.method)
        self.assertFalse(params.lump)


class EigenTest(unittest.TestCase):
    def test_unit_square(self):
        mesh = meshing.rectangle_mesh(0, 0, 1, 1, 64, 64)
        K, M = fem.assemble(mesh)
        pairs = fem.smallest_eigenpairs(K, M, k=6, tol=1e-6,
                                        method='shift-invert')
        self.assertAlmostEqual(0.0, pairs[0].value, places=8)
        expected = math.pi ** 2 * np.array([1, 1, 2, 4, 4])
        measured = np.array([p.value for p in pairs[1:]])
        np.testing.assert_allclose(expected, measured, rtol=1e-2)
        self.assertTrue(all(p.residual <= 1e-6 for p in pairs))

    def test_hexagon_dense(self):
        pairs = eigenpairs(hexagon_mesh(), k=5)
        values = [p.value for p in pairs]
        self.assertEqual(sorted(values), values)
        self.assertLess(abs(values[0]), 1e-8)
        self.assertGreater(values[1], 1.0)
        # The first vector is the normalized constant.
        self.assertTrue(np.allclose(pairs[0].vector, pairs[0].vector[0]))
        _, M = fem.assemble(hexagon_mesh())
        V = np.column_stack([p.vector for p in pairs])
        np.testing.assert_allclose(np.eye(5), V.T.dot(M.dot(V)), atol=1e-8)

    def test_sign_convention(self):
        for pair in eigenpairs(hexagon_mesh(), k=4):
            v = pair.vector
            self.assertGreater(v[np.argmax(np.abs(v))], 0)

    def test_too_many_pairs(self):
        mesh = meshing.rectangle_mesh(0, 0, 1, 1, 1, 1)
        K, M = fem.assemble(mesh)
        with assert_raises(ParameterError):
            fem.smallest_eigenpairs(K, M, k=4)

    def test_tolerance_not_met(self):
        mesh = meshing.rectangle_mesh(0, 0, 1, 1, 4, 4)
        K, M = fem.assemble(mesh)
        try:
            fem.smallest_eigenpairs(K, M, k=3, tol=1e-30, method='dense')
        except SolverError as e:
            self.assertIn('no eigensolver met tol', str(e))
            self.assertEqual(3, len(e.residuals))
        else:
            self.fail('SolverError not raised')

    def test_lobpcg_miss_falls_back(self):
        mesh = meshing.rectangle_mesh(0, 0, 2, 1, 30, 15)
        self.assertGreater(mesh.n_nodes, fem.DENSE_LIMIT)
        K, M = fem.assemble(mesh)
        expected = fem.smallest_eigenpairs(K, M, k=4, tol=1e-8,
                                           method='shift-invert')

        def unconverged(K, M, c, k, params, rng):
            return rng.standard_normal((K.shape[0], k - 1))

        with mock.patch.object(fem, '_lobpcg', unconverged):
            with self.assertLogs('hotspot_forge.fem', 'WARNING') as logs:
                pairs = fem.smallest_eigenpairs(K, M, k=4, tol=1e-8,
                                                method='lobpcg')
        self.assertIn('falling back to shift-invert', logs.output[0])
        self.assertTrue(all(p.residual <= 1e-8 for p in pairs))
        np.testing.assert_allclose([p.value for p in expected],
                                   [p.value for p in pairs], rtol=1e-7,
                                   atol=1e-10)

    def test_richardson(self):
        self.assertAlmostEqual(0.1, fem.richardson_estimate(1.3, 1.0))
        self.assertAlmostEqual(0.3, fem.richardson_estimate(1.3, 1.0,
                                                            order=1))


class ArtifactTest(unittest.TestCase):
    def setUp(self):
        self.mesh = meshing.rectangle_mesh(0, 0, 1, 1, 4, 4)
        self.K, self.M = fem.assemble(self.mesh)
        self.pairs = fem.smallest_eigenpairs(self.K, self.M, k=3,
                                             method='dense')

    def test_eigen_csv(self):
        with temp_dir() as tmp:
            path = os.path.join(tmp, 'eigen.csv')
            fem.write_eigen_csv(self.pairs, path)
            lines = read_lines(path)
        self.assertEqual('index,eigenvalue,residual', lines[0])
        self.assertEqual(4, len(lines))
        index, value, _ = lines[2].split(',')
        self.assertEqual('2', index)
        self.assertEqual(self.pairs[1].value, float(value))

    def test_save_and_load(self):
        with temp_dir() as tmp:
            path = os.path.join(tmp, 'eigen.npz')
            fem.save_eigen(self.pairs, path)
            loaded = fem.load_eigen(path)
            with assert_raises(ArtifactError):
                fem.load_eigen(os.path.join(tmp, 'missing.npz'))
        self.assertEqual([p.value for p in self.pairs],
                         [p.value for p in loaded])
        np.testing.assert_array_equal(self.pairs[2].vector,
                                      loaded[2].vector)

    def test_matrix_market(self):
        with temp_dir() as tmp:
            paths = fem.write_matrices(self.K, self.M, tmp)
            self.assertEqual(['stiffness.mtx', 'mass.mtx'],
                             [os.path.basename(p) for p in paths])
            K = scipy.io.mmread(paths[0])
        np.testing.assert_allclose(self.K.toarray(), K.toarray(),
                                   rtol=1e-15, atol=1e-15)


if __name__ == '__main__':
    unittest.main()
