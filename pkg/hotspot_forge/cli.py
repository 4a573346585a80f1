"""The ``hotspot-forge`` command.

    hotspot-forge COMMAND [--config=FILE] [--flag=value ...]

COMMAND is one of ``domain``, ``mesh``, ``solve``, ``analyze``, ``sweep``,
``rbm``, ``all`` or ``plot``. Options come from a flat ``key = value``
file given with ``--config`` and are overridden by flags. Flags may use
dots or dashes (``--mesh.h-neck 1e-4`` is ``--mesh-h-neck=1e-4``).

Exit status is 0 on success, 1 on an operational error and 2 when a
verification check fails; report.json is complete in that case.
"""

import collections
import json
import logging
import os
import sys

from tornado import log as tornado_log
from tornado.options import Error as OptionsError, OptionParser

from hotspot_forge import analysis, fem, geometry, mesh as meshing, rbm
from hotspot_forge import version
from hotspot_forge.errors import ArtifactError, \
    DegenerateEigenvectorError, HotspotError, ParameterError
from hotspot_forge.pool import default_concurrency

logger = logging.getLogger(__name__)

__all__ = ['COMMANDS', 'RunConfig', 'make_option_parser', 'parse_args',
           'run', 'export_plot_data', 'version_report', 'main']

COMMANDS = ('domain', 'mesh', 'solve', 'analyze', 'sweep', 'rbm', 'all',
            'plot')

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILED_CHECK = 2

DEFAULT_SWEEP = [1.0 / 2000, 1.0 / 4000, 1.0 / 8000]

# (name, default, type, multiple, help); names are RunConfig keys with
# the dots written as underscores.
OPTIONS = [
    ('out_dir', 'run', str, False, 'directory for artifacts'),
    ('epsilon', 1.0 / 3200, float, False, 'neck half-width, < 1/200'),
    ('outer_x', 235.0, float, False, 'abscissa of A10'),
    ('mesh_h_max', 2.0, float, False, 'maximum edge length'),
    ('mesh_h_neck', None, float, False,
     'edge length at the necks (default: mesh_neck_fraction * epsilon)'),
    ('mesh_neck_fraction', 1.0 / 3, float, False,
     'h_neck / epsilon when mesh_h_neck is unset, at most 1/3'),
    ('mesh_h_hub', 0.05, float, False, 'edge length at the origin'),
    ('mesh_grading_ratio', 2.0, float, False, 'size growth per unit length'),
    ('mesh_min_angle_deg', 20.0, float, False, 'minimum triangle angle'),
    ('solver_k', 6, int, False, 'number of eigenpairs, kernel included'),
    ('solver_tol', 1e-8, float, False, 'relative residual tolerance'),
    ('solver_max_iter', 500, int, False, 'iterative solver budget'),
    ('solver_method', 'lobpcg', str, False,
     'lobpcg, shift-invert or dense'),
    ('solver_seed', 0, int, False, 'seed of the starting block'),
    ('solver_lump', False, bool, False, 'use the lumped mass matrix'),
    ('sweep_epsilons', DEFAULT_SWEEP, float, True,
     'comma separated epsilons for the sweep'),
    ('analyze_cone_samples', 10000, int, False,
     'sampled pairs for the cone check'),
    ('analyze_cone_tol', 1e-3, float, False, 'cone check tolerance'),
    ('analyze_estimate_error', True, bool, False,
     'estimate the discretization error on a refined mesh'),
    ('rbm_n_paths', 10000, int, False, 'paths per start point'),
    ('rbm_dt', None, float, False,
     'time step (default: min(epsilon**2 / 4, 1e-4))'),
    ('rbm_horizon', 0.5, float, False, 'simulated time for p1'),
    ('rbm_seed', 0, int, False, 'root seed'),
    ('rbm_block_size', 2000, int, False, 'paths per worker job'),
    ('rbm_allow_coarse_dt', False, bool, False,
     'warn instead of failing when dt does not resolve the necks'),
    ('rbm_bridge', 0, int, False, 'bridge (0, 1 or 2) for p1'),
    ('export_matrices', False, bool, False,
     'write stiffness.mtx and mass.mtx'),
]

# Options that are not part of a run's configuration.
CONTROL_OPTIONS = [
    ('config', None, str, False, 'flat key = value configuration file'),
    ('threads', None, int, False,
     'worker threads (default $HOTSPOT_FORGE_THREADS or the CPU count)'),
    ('version', False, bool, False, 'print version and constants'),
]

BOOL_FLAGS = frozenset(
    [name for name, _, kind, _, _ in OPTIONS + CONTROL_OPTIONS
     if kind is bool] + ['help', 'log_to_stderr'])

# Short spellings accepted on the command line.
ALIASES = {'epsilons': 'sweep-epsilons'}


def make_option_parser():
    """A fresh :class:`tornado.options.OptionParser` with every
    hotspot-forge option and Tornado's logging options.
    """
    parser = OptionParser()
    for name, default, kind, multiple, help_text in \
            OPTIONS + CONTROL_OPTIONS:
        group = name.split('_', 1)[0] if name.split('_', 1)[0] in (
            'mesh', 'solver', 'sweep', 'analyze', 'rbm') else 'run'
        parser.define(name, default=default, type=kind, multiple=multiple,
                      help=help_text, group=group)
    tornado_log.define_logging_options(parser)
    return parser


def _normalize_argv(args):
    # --a.b-c value  ->  --a-b-c=value (not for flags that take no value)
    out = []
    i = 0
    while i < len(args):
        arg = args[i]
        if arg.startswith('--') and len(arg) > 2:
            name, eq, value = arg[2:].partition('=')
            name = name.replace('.', '-').replace('_', '-')
            name = ALIASES.get(name, name)
            if not eq and name.replace('-', '_') not in BOOL_FLAGS and \
                    i + 1 < len(args) and not args[i + 1].startswith('--'):
                eq, value = '=', args[i + 1]
                i += 1
            arg = '--%s%s%s' % (name, eq, value)
        out.append(arg)
        i += 1
    return out


class RunConfig(collections.namedtuple('RunConfig', [
        'spec', 'size', 'policy', 'min_angle', 'solver', 'sweep_epsilons',
        'rbm', 'rbm_bridge', 'cone_samples', 'cone_tol', 'estimate_error',
        'out_dir', 'export_matrices', 'concurrency', 'values'])):
    """Validated settings of one run.

    ``values`` holds the flat option values the config was built from;
    :meth:`echo` writes them back as a config file. ``concurrency``, the
    worker count, is not echoed.
    """

    __slots__ = ()

    @classmethod
    def from_options(cls, options):
        values = collections.OrderedDict(
            (name, options[name]) for name, _, _, _, _ in OPTIONS)
        spec = geometry.DomainSpec(values['epsilon'], values['outer_x'])
        policy = meshing.MeshPolicy(
            values['mesh_h_max'], values['mesh_h_hub'],
            values['mesh_grading_ratio'], values['mesh_neck_fraction'],
            values['mesh_min_angle_deg'])
        h_neck = values['mesh_h_neck']
        if h_neck is None:
            size = policy.size_field(spec.epsilon)
        else:
            size = meshing.SizeField(values['mesh_h_max'], h_neck,
                                     values['mesh_grading_ratio'],
                                     values['mesh_h_hub'])
        solver = fem.SolverParams(
            values['solver_k'], values['solver_tol'],
            values['solver_max_iter'], values['solver_method'],
            values['solver_seed'], values['solver_lump'])
        cfg = rbm.RBMConfig(
            dt=values['rbm_dt'], horizon=values['rbm_horizon'],
            n_paths=values['rbm_n_paths'], seed=values['rbm_seed'],
            block_size=values['rbm_block_size'],
            allow_coarse_dt=values['rbm_allow_coarse_dt'])
        if values['rbm_bridge'] not in (0, 1, 2):
            raise ParameterError('rbm_bridge must be 0, 1 or 2')
        if not values['sweep_epsilons']:
            raise ParameterError('sweep_epsilons is empty')
        if values['analyze_cone_samples'] < 1:
            raise ParameterError('analyze_cone_samples must be >= 1')
        concurrency = options.threads
        if concurrency is None:
            concurrency = default_concurrency()
        elif concurrency < 1:
            raise ParameterError('threads must be >= 1')
        return cls(spec, size, policy, values['mesh_min_angle_deg'], solver,
                   tuple(values['sweep_epsilons']), cfg,
                   values['rbm_bridge'], values['analyze_cone_samples'],
                   values['analyze_cone_tol'],
                   values['analyze_estimate_error'], values['out_dir'],
                   values['export_matrices'], concurrency, values)

    def echo(self):
        """The configuration as a flat file that parses back to it."""
        return ''.join('%s = %r\n' % item for item in self.values.items())

    def path(self, name):
        return os.path.join(self.out_dir, name)


def parse_args(argv):
    """Return ``(command, options)`` for the argument list `argv`
    (without the program name).
    """
    args = list(argv)
    command = None
    if args and not args[0].startswith('-'):
        command = args.pop(0)
    args = ['hotspot-forge'] + _normalize_argv(args)
    parser = make_option_parser()
    parser.parse_command_line(args, final=False)
    if parser.config:
        if not os.path.exists(parser.config):
            raise ParameterError('config file %s not found' % parser.config)
        try:
            parser.parse_config_file(parser.config, final=False)
        except (SyntaxError, NameError, TypeError) as e:
            raise ParameterError('cannot read config file %s: %s'
                                 % (parser.config, e))
    rest = parser.parse_command_line(args, final=True)
    if rest:
        raise ParameterError('unexpected arguments: %s' % ' '.join(rest))
    if command is not None and command not in COMMANDS:
        raise ParameterError('unknown command %r, expected one of %s'
                             % (command, ', '.join(COMMANDS)))
    return command, parser


def _prepare_out_dir(config):
    try:
        os.makedirs(config.out_dir, exist_ok=True)
    except OSError as e:
        raise ParameterError('cannot create %s: %s' % (config.out_dir, e))
    if not os.access(config.out_dir, os.W_OK):
        raise ParameterError('%s is not writable' % config.out_dir)


def _write_json(document, path):
    with open(path, 'w') as f:
        json.dump(document, f, indent=2)
        f.write('\n')


def _solution_from_artifacts(config):
    # Reuse mesh.npz and eigen.npz when they belong to this epsilon.
    mesh_path, eigen_path = config.path('mesh.npz'), config.path('eigen.npz')
    if not (os.path.exists(mesh_path) and os.path.exists(eigen_path)):
        return None
    mesh = meshing.load_mesh(mesh_path)
    if mesh.spec is None or mesh.spec != config.spec:
        return None
    pairs = fem.load_eigen(eigen_path)
    K, M = fem.assemble(mesh, lump=config.solver.lump)
    logger.info('reusing %s and %s', mesh_path, eigen_path)
    return analysis.Solution(config.spec, mesh.domain, mesh, K, M, pairs,
                             config.size, config.solver, config.min_angle)


def _run_domain(config):
    domain = geometry.build_domain(config.spec)
    geometry.write_domain_json(domain, config.path('domain.json'))
    logger.info('domain: area %.6f, %d holes', domain.area(),
                len(domain.hole_loops))
    return EXIT_OK


def _run_mesh(config):
    _run_domain(config)
    domain = geometry.build_domain(config.spec)
    mesh = meshing.triangulate(domain, config.size, config.min_angle)
    meshing.write_mesh_json(mesh, config.path('mesh.json'), config.min_angle)
    meshing.save_mesh(mesh, config.path('mesh.npz'))
    return mesh


def _run_solve(config):
    _run_domain(config)
    solution = analysis.solve(config.spec, config.size, config.solver,
                              config.min_angle)
    meshing.write_mesh_json(solution.mesh, config.path('mesh.json'),
                            config.min_angle)
    meshing.save_mesh(solution.mesh, config.path('mesh.npz'))
    fem.write_eigen_csv(solution.pairs, config.path('eigen.csv'))
    fem.save_eigen(solution.pairs, config.path('eigen.npz'))
    if config.export_matrices:
        fem.write_matrices(solution.K, solution.M, config.out_dir)
    return solution


def _run_analyze(config, solution=None):
    if solution is None:
        solution = _solution_from_artifacts(config) or _run_solve(config)
    report = analysis.verify(
        solution, estimate_error=config.estimate_error,
        cone_samples=config.cone_samples, cone_tol=config.cone_tol)
    phi = solution.pairs[1].vector
    try:
        phi = analysis.sign_normalize(solution.mesh, phi)
    except HotspotError:
        pass
    analysis.write_nodal_csv(analysis.nodal_curves(solution.mesh, phi),
                             config.path('nodal.csv'))
    return report


def _run_sweep(config):
    rows = analysis.epsilon_sweep(config.sweep_epsilons, config.policy,
                                  config.solver, config.concurrency,
                                  config.spec.outer_x)
    analysis.write_sweep_csv(rows, config.path('sweep.csv'))
    report = analysis.sweep_checks(rows)
    analysis.write_report_json(report, config.path('sweep_report.json'))
    return report


def _gamma(config, solution):
    # The nodal component in a bridge joined to I, or the fixed segment
    # when there is no usable nodal line.
    if solution is None:
        solution = _solution_from_artifacts(config) or _run_solve(config)
    phi = solution.pairs[1].vector
    try:
        phi = analysis.sign_normalize(solution.mesh, phi)
    except HotspotError:
        pass
    try:
        curve = analysis.nodal_curves(solution.mesh, phi)
        return rbm.nodal_gamma(config.spec, curve), 'nodal_line'
    except (ParameterError, DegenerateEigenvectorError) as e:
        logger.warning('%s; using the segment x = %g as gamma', e,
                       rbm.P2_GAMMA_X)
        return rbm.default_gamma(config.spec), 'default'


def _run_rbm(config, solution=None):
    spec, cfg = config.spec, config.rbm
    gamma, source = _gamma(config, solution)
    rows = rbm.p1_estimates(spec, cfg, config.rbm_bridge,
                            concurrency=config.concurrency)
    rows += rbm.p2_estimates(spec, cfg, gamma=gamma,
                             concurrency=config.concurrency)
    rbm.write_rbm_csv(rows, config.path('rbm.csv'))
    p1 = min((r.estimate for r in rows if r.target.startswith('p1')),
             key=lambda e: e.probability)
    p2 = min((r.estimate for r in rows if r.target.startswith('p2')),
             key=lambda e: e.probability)
    report = analysis.VerificationReport(spec.epsilon)
    report.add_check('p1_positive', p1.low, 0.0, '>')
    report.add_check('p2_positive', p2.low, 0.0, '>')
    report.diagnostics['p1'] = p1.probability
    report.diagnostics['p2'] = p2.probability
    report.diagnostics['mu2_lower_bound'] = rbm.mu2_lower_bound(
        p1.probability, p2.probability)
    report.diagnostics['dt'] = rbm.check_dt(spec, cfg, warn=False).dt
    report.diagnostics['dt_bound'] = rbm.dt_bound(spec)
    report.diagnostics['gamma_source'] = source
    report.diagnostics['gamma'] = gamma
    analysis.write_report_json(report, config.path('rbm_report.json'))
    return report


def export_plot_data(out_dir, n_levels=21):
    """Write contours.csv, nodal.csv and mesh.vtk from the mesh.npz and
    eigen.npz of a completed solve in `out_dir`; returns the paths.
    """
    mesh_path = os.path.join(out_dir, 'mesh.npz')
    eigen_path = os.path.join(out_dir, 'eigen.npz')
    for path in (mesh_path, eigen_path):
        if not os.path.exists(path):
            raise ArtifactError('%s is missing; run solve first' % path)
    mesh = meshing.load_mesh(mesh_path)
    pairs = fem.load_eigen(eigen_path)
    if len(pairs) < 2 or len(pairs[1].vector) != mesh.n_nodes:
        raise ArtifactError('eigen.npz does not match mesh.npz')
    phi = pairs[1].vector
    if mesh.domain is not None:
        try:
            phi = analysis.sign_normalize(mesh, phi)
        except HotspotError as e:
            logger.warning('%s; plotting phi2 as computed', e)
    paths = [os.path.join(out_dir, name)
             for name in ('contours.csv', 'nodal.csv', 'mesh.vtk')]
    analysis.write_contours_csv(mesh, phi, paths[0], n_levels)
    analysis.write_nodal_csv(analysis.nodal_curves(mesh, phi), paths[1])
    meshing.write_vtk(mesh, paths[2], {'phi2': phi})
    return paths


def version_report(config=None):
    """Version, the fixed constants, and the config echo."""
    lines = [
        'hotspot-forge %s' % version,
        'constants:',
        '  epsilon < 1/200',
        '  Lemma 1 regime: epsilon < 1/1600',
        '  test function cutoffs: 400 epsilon, 800 epsilon',
        '  A = B(0, 1/10)',
        '  gamma diameter >= %g' % geometry.GAMMA_DIAMETER_MIN,
        '  cutoff diameter %g' % geometry.CUTOFF_DIAMETER,
    ]
    text = '\n'.join(lines) + '\n'
    if config is not None:
        text += 'config:\n' + config.echo()
    return text


def run(command, config):
    """Run `command` with `config`; returns the exit status."""
    _prepare_out_dir(config)
    reports = []
    if command == 'domain':
        _run_domain(config)
    elif command == 'mesh':
        _run_mesh(config)
    elif command == 'solve':
        _run_solve(config)
    elif command == 'analyze':
        reports.append(('', _run_analyze(config)))
    elif command == 'sweep':
        reports.append(('sweep.', _run_sweep(config)))
    elif command == 'rbm':
        reports.append(('rbm.', _run_rbm(config)))
    elif command == 'plot':
        export_plot_data(config.out_dir)
    elif command == 'all':
        solution = _run_solve(config)
        reports.append(('', _run_analyze(config, solution)))
        export_plot_data(config.out_dir)
        reports.append(('sweep.', _run_sweep(config)))
        reports.append(('rbm.', _run_rbm(config, solution)))
    else:
        raise ParameterError('unknown command %r' % (command, ))
    with open(config.path('config.cfg'), 'w') as f:
        f.write(config.echo())

    if not reports:
        return EXIT_OK
    # report.json names every failed check of the run.
    report = analysis.merge_reports(reports)
    analysis.write_report_json(report, config.path('report.json'))
    failed = report.failed_checks()
    if failed:
        sys.stderr.write('verification failed: %s\n' % ', '.join(failed))
        return EXIT_FAILED_CHECK
    return EXIT_OK


def main(argv=None):
    """Console entry point; returns the exit status."""
    if argv is None:
        argv = sys.argv[1:]
    try:
        command, options = parse_args(argv)
        config = RunConfig.from_options(options)
        if options.version:
            sys.stdout.write(version_report(config))
            return EXIT_OK
        if command is None:
            raise ParameterError('no command given, expected one of %s'
                                 % ', '.join(COMMANDS))
        logger.debug('config:\n%s', config.echo())
        return run(command, config)
    except (HotspotError, OptionsError) as e:
        sys.stderr.write('hotspot-forge: %s\n' % e)
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
