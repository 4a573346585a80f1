"""P1 finite elements for the Neumann Laplacian.

The stiffness matrix ``K`` and mass matrix ``M`` are plain
:class:`scipy.sparse.csr_matrix` objects. With natural (Neumann) boundary
conditions no boundary terms are assembled, so ``K`` has the constants in
its kernel. :func:`smallest_eigenpairs` deflates that kernel explicitly and
returns it as the first pair.
"""

import collections
import csv
import logging
import math
import os
import warnings

import numpy as np
import scipy.io
import scipy.linalg
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from hotspot_forge import geometry
from hotspot_forge.errors import ArtifactError, AssemblyError, \
    EvaluationError, HotspotError, ParameterError, SolverError

logger = logging.getLogger(__name__)

__all__ = [
    'EigenPair', 'SolverParams', 'assemble', 'stiffness_matrix',
    'mass_matrix', 'is_symmetric', 'rayleigh_quotient', 'interpolate',
    'integrate', 'constant_mode', 'smallest_eigenpairs',
    'richardson_estimate', 'write_eigen_csv', 'save_eigen', 'load_eigen',
    'write_matrices',
]

# Below this many unknowns the eigenproblem is solved densely.
DENSE_LIMIT = 400

EigenPair = collections.namedtuple('EigenPair', 'value vector residual')
EigenPair.__doc__ = """An eigenpair ``K v = value M v`` with ``v`` M-normalized.

``residual`` is ``|K v - value M v| / |K v|``.
"""

METHODS = ('lobpcg', 'shift-invert', 'dense')


class SolverParams(collections.namedtuple(
        'SolverParams', 'k tol max_iter method seed lump')):
    """Eigensolver settings.

    :Parameters:
      - `k`: Number of eigenpairs, kernel included (>= 2).
      - `tol`: Relative residual every returned pair must meet.
      - `max_iter`: Iteration budget of the iterative solvers.
      - `method`: ``'lobpcg'`` (falls back to shift-invert),
        ``'shift-invert'`` or ``'dense'``.
      - `seed`: Seed of the random starting block.
      - `lump`: Use the lumped (diagonal) mass matrix.
    """

    __slots__ = ()

    def __new__(cls, k=6, tol=1e-8, max_iter=500, method='lobpcg', seed=0,
                lump=False):
        if int(k) != k or k < 2:
            raise ParameterError('k must be an integer >= 2')
        if not tol > 0:
            raise ParameterError('tol must be > 0')
        if max_iter < 1:
            raise ParameterError('max_iter must be >= 1')
        if method not in METHODS:
            raise ParameterError('method must be one of %s'
                                 % ', '.join(METHODS))
        return super(SolverParams, cls).__new__(
            cls, int(k), float(tol), int(max_iter), method, int(seed),
            bool(lump))


def _local_geometry(mesh):
    t = mesh.triangles
    v0, v1, v2 = (mesh.nodes[t[:, i]] for i in range(3))
    # Edge i is opposite corner i.
    e0, e1, e2 = v2 - v1, v0 - v2, v1 - v0
    area = 0.5 * (e2[:, 0] * (-e1[:, 1]) - e2[:, 1] * (-e1[:, 0]))
    longest = np.max([(e ** 2).sum(axis=1) for e in (e0, e1, e2)], axis=0)
    bad = area <= 1e-14 * longest
    if bad.any():
        raise AssemblyError('%d degenerate or inverted triangles (first: %d)'
                            % (bad.sum(), np.flatnonzero(bad)[0]))
    return (e0, e1, e2), area


def _scatter(t, local, n):
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    return sparse.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def stiffness_matrix(mesh):
    """P1 stiffness ``K_ij = sum_T grad(phi_i) . grad(phi_j) |T|``."""
    edges, area = _local_geometry(mesh)
    local = np.empty((mesh.n_triangles, 3, 3))
    for i in range(3):
        for j in range(3):
            local[:, i, j] = np.einsum('ij,ij->i', edges[i], edges[j]) \
                / (4.0 * area)
    return _scatter(mesh.triangles, local, mesh.n_nodes)


def mass_matrix(mesh, lump=False):
    """Consistent P1 mass matrix, or its row-sum lumping when `lump`."""
    _, area = _local_geometry(mesh)
    n = mesh.n_nodes
    if lump:
        diagonal = np.zeros(n)
        np.add.at(diagonal, mesh.triangles.ravel(),
                  np.repeat(area / 3.0, 3))
        return sparse.diags(diagonal).tocsr()
    pattern = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = area[:, None, None] * pattern[None, :, :]
    return _scatter(mesh.triangles, local, n)


def assemble(mesh, lump=False):
    """Return ``(K, M)`` for `mesh`."""
    K = stiffness_matrix(mesh)
    M = mass_matrix(mesh, lump)
    logger.debug('assembled %d x %d system, nnz(K) = %d', K.shape[0],
                 K.shape[1], K.nnz)
    return K, M


def is_symmetric(A, tol=1e-12):
    """True when ``A`` equals its transpose up to ``tol * max|A|``."""
    difference = abs(A - A.T)
    scale = abs(A).max() if A.nnz else 0.0
    return difference.nnz == 0 or difference.max() <= tol * scale


def rayleigh_quotient(K, M, v):
    """``(v' K v) / (v' M v)``."""
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise ParameterError('Rayleigh quotient of the zero vector')
    return float(v.dot(K.dot(v)) / v.dot(M.dot(v)))


def interpolate(mesh, g, vectorized=False):
    """Nodal values of the pointwise function `g`.

    :Parameters:
      - `g`: Called as ``g(Point2)`` per node, or once with the ``(n, 2)``
        node array when `vectorized`.
    """
    try:
        if vectorized:
            values = np.asarray(g(mesh.nodes), dtype=float)
        else:
            values = np.array([g(geometry.Point2(x, y))
                               for x, y in mesh.nodes], dtype=float)
    except (HotspotError, ValueError, ArithmeticError, TypeError) as e:
        raise EvaluationError('cannot evaluate function at the nodes: %s'
                              % e)
    if values.shape != (mesh.n_nodes, ):
        raise EvaluationError('function returned shape %r for %d nodes'
                              % (values.shape, mesh.n_nodes))
    bad = ~np.isfinite(values)
    if bad.any():
        i = np.flatnonzero(bad)[0]
        raise EvaluationError('function is not finite at node %d %r'
                              % (i, tuple(mesh.nodes[i])))
    return values


def integrate(mesh, v, M=None):
    """Integral of the P1 interpolant of `v`, ``1' M v``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (mesh.n_nodes, ):
        raise ParameterError('vector has shape %r, mesh has %d nodes'
                             % (v.shape, mesh.n_nodes))
    if M is None:
        M = mass_matrix(mesh)
    return float(np.asarray(M.sum(axis=0)).ravel().dot(v))


def constant_mode(M):
    """The M-normalized constant vector."""
    ones = np.ones(M.shape[0])
    return ones / math.sqrt(ones.dot(M.dot(ones)))


def _fix_sign(v):
    # Largest-magnitude entry positive; np.argmax picks the first on ties.
    if v[np.argmax(np.abs(v))] < 0:
        return -v
    return v


def _residuals(K, M, values, vectors):
    norm_k = abs(K).sum(axis=1).max()
    out = []
    for value, v in zip(values, vectors.T):
        kv = K.dot(v)
        denominator = np.linalg.norm(kv)
        if denominator <= 1e-8 * norm_k * np.linalg.norm(v):
            # Kernel vectors: measure against the size of K instead.
            denominator = norm_k * np.linalg.norm(v)
        out.append(float(np.linalg.norm(kv - value * M.dot(v))
                         / denominator))
    return out


def _rayleigh_ritz(K, M, c, X):
    Mc = M.dot(c)
    X = X - np.outer(c, Mc.dot(X))
    reduced_k = X.T.dot(K.dot(X))
    reduced_m = X.T.dot(M.dot(X))
    reduced_k = 0.5 * (reduced_k + reduced_k.T)
    reduced_m = 0.5 * (reduced_m + reduced_m.T)
    try:
        theta, Z = scipy.linalg.eigh(reduced_k, reduced_m)
    except np.linalg.LinAlgError as e:
        raise SolverError('Rayleigh-Ritz step failed: %s' % e)
    V = X.dot(Z)
    V = V - np.outer(c, Mc.dot(V))
    return theta, V


def _assemble_pairs(K, M, c, X):
    theta, V = _rayleigh_ritz(K, M, c, X)
    values = np.concatenate([[max(c.dot(K.dot(c)), 0.0)], theta])
    vectors = np.column_stack([c, V])
    for i in range(vectors.shape[1]):
        v = vectors[:, i]
        v = v / math.sqrt(v.dot(M.dot(v)))
        vectors[:, i] = _fix_sign(v)
    residuals = _residuals(K, M, values, vectors)
    order = np.argsort(values, kind='stable')
    return [EigenPair(float(values[i]), vectors[:, i], residuals[i])
            for i in order]


def _dense(K, M, k):
    values, vectors = scipy.linalg.eigh(K.toarray(), M.toarray(),
                                        subset_by_index=[0, k - 1])
    return vectors[:, 1:]


def _lobpcg(K, M, c, k, params, rng):
    n = K.shape[0]
    X = rng.standard_normal((n, k - 1))
    X -= np.outer(c, M.dot(c).dot(X))
    diagonal = K.diagonal()
    preconditioner = sparse.diags(1.0 / np.where(diagonal > 0, diagonal,
                                                 1.0))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always')
        _, vectors = sparse_linalg.lobpcg(
            K, X, B=M, M=preconditioner, Y=c[:, None], tol=params.tol,
            maxiter=params.max_iter, largest=False)
    for w in caught:
        logger.debug('lobpcg: %s', w.message)
    return vectors


def _shift_invert(K, M, c, k, params, rng):
    n = K.shape[0]
    area = float(M.sum())
    scale = 4.0 * math.pi * k / area
    sigma = -1e-6 * scale
    lu = sparse_linalg.splu((K - sigma * M).tocsc())
    Mc = M.dot(c)

    def apply(b):
        b = np.ravel(b)
        b = b - Mc * c.dot(b)
        x = lu.solve(b)
        return x - c * Mc.dot(x)

    operator = sparse_linalg.LinearOperator((n, n), matvec=apply,
                                            dtype=float)
    v0 = rng.standard_normal(n)
    v0 -= c * Mc.dot(v0)
    try:
        _, vectors = sparse_linalg.eigsh(
            K, k=k - 1, M=M, sigma=sigma, which='LM', OPinv=operator,
            v0=v0, maxiter=params.max_iter * k)
    except sparse_linalg.ArpackNoConvergence as e:
        if e.eigenvectors is None or not e.eigenvectors.shape[1]:
            raise SolverError('shift-invert Lanczos did not converge')
        pairs = _assemble_pairs(K, M, c, e.eigenvectors)
        raise SolverError('shift-invert Lanczos did not converge',
                          [p.residual for p in pairs])
    return vectors


def smallest_eigenpairs(K, M, k=6, tol=1e-8, max_iter=500, method='lobpcg',
                        seed=0):
    """The `k` smallest eigenpairs of ``K v = mu M v``, ascending.

    The first pair is the kernel (the M-normalized constant vector). The
    other ``k - 1`` are computed M-orthogonal to it, then cleaned up by a
    Rayleigh-Ritz step. Every pair must meet the relative residual `tol`;
    :exc:`SolverError` carries the best residuals otherwise.
    """
    params = SolverParams(k, tol, max_iter, method, seed)
    K = sparse.csr_matrix(K)
    M = sparse.csr_matrix(M)
    n = K.shape[0]
    if k >= n:
        raise ParameterError('k = %d needs more than %d unknowns' % (k, n))
    c = constant_mode(M)
    rng = np.random.default_rng(seed)

    if method == 'dense' or n <= DENSE_LIMIT:
        attempts = [('dense', _dense(K, M, k))]
    elif method == 'lobpcg':
        attempts = [('lobpcg', None), ('shift-invert', None)]
    else:
        attempts = [('shift-invert', None)]

    best = None
    for name, vectors in attempts:
        try:
            if name == 'lobpcg':
                vectors = _lobpcg(K, M, c, k, params, rng)
            elif name == 'shift-invert':
                vectors = _shift_invert(K, M, c, k, params, rng)
            pairs = _assemble_pairs(K, M, c, vectors)
        except SolverError as e:
            logger.warning('%s eigensolver failed: %s', name, e)
            best = e.residuals or best
            continue
        residuals = [p.residual for p in pairs]
        if max(residuals) <= tol:
            logger.info('%s eigensolver: mu = %s', name, ', '.join(
                '%.10g' % p.value for p in pairs))
            return pairs
        logger.warning('%s eigensolver missed tol %.3g (worst residual '
                       '%.3g)%s', name, tol, max(residuals),
                       '' if name == attempts[-1][0] else
                       '; falling back to %s' % attempts[-1][0])
        if best is None or max(residuals) < max(best):
            best = residuals
    raise SolverError('no eigensolver met tol %.3g' % tol, best or ())


def richardson_estimate(coarse, fine, order=2):
    """Error estimate of `fine` from two levels whose mesh sizes differ by a
    factor 2, for a method of the given convergence `order`.
    """
    return abs(coarse - fine) / (2.0 ** order - 1.0)


def write_eigen_csv(pairs, path):
    """Write ``eigen.csv``: index, eigenvalue, residual."""
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['index', 'eigenvalue', 'residual'])
        for i, pair in enumerate(pairs):
            writer.writerow([i + 1, '%.17g' % pair.value,
                             '%.17g' % pair.residual])


def save_eigen(pairs, path):
    """Save eigenpairs to an ``.npz`` file."""
    np.savez(path, values=np.array([p.value for p in pairs]),
             vectors=np.column_stack([p.vector for p in pairs]),
             residuals=np.array([p.residual for p in pairs]))


def load_eigen(path):
    """Load eigenpairs written by :func:`save_eigen`."""
    try:
        data = np.load(path)
    except (IOError, OSError, ValueError) as e:
        raise ArtifactError('cannot read eigenpairs %s: %s' % (path, e))
    with data:
        return [EigenPair(float(value), data['vectors'][:, i].copy(),
                          float(residual))
                for i, (value, residual) in enumerate(
                    zip(data['values'], data['residuals']))]


def write_matrices(K, M, out_dir):
    """Write ``stiffness.mtx`` and ``mass.mtx`` (Matrix Market coordinate
    format) into `out_dir`; returns the two paths.
    """
    paths = []
    for name, matrix in (('stiffness', K), ('mass', M)):
        path = os.path.join(out_dir, '%s.mtx' % name)
        scipy.io.mmwrite(path, sparse.coo_matrix(matrix), precision=17)
        paths.append(path)
    return paths
