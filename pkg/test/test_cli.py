import contextlib
import glob
import importlib.util
import io
import json
import math
import os
import shutil
import tempfile
import unittest

import numpy as np

from zoegd.cli import parse_and_dispatch, parse_experiment_config
from zoegd.utils.output import write_results

FAST_RUN = ['--epsilon', '0.01', '--eps-hat', '1e-3', '--no-eps-hat-ceiling', '--budget', '16',
            '--max-iterations', '200']


def invoke(argv):
    """Run the CLI, returning (exit code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = parse_and_dispatch(argv)
    return code, out.getvalue(), err.getvalue()


class TestCommands(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def path(self, name):
        return os.path.join(self.tmp, name)

    def test_tailbound(self):
        code, out, err = invoke(['tailbound', '--dim', '5', '--a2', '20', '--format', 'json'])
        self.assertEqual(0, code)
        doc = json.loads(out)
        self.assertEqual('1', doc['schema_version'])
        self.assertAlmostEqual(0.017699, doc['summary']['bound'], places=6)
        self.assertIsNone(doc['summary']['empirical'])
        self.assertIn('analytic bound 0.01770', err)

    def test_tailbound_monte_carlo(self):
        code, out, _ = invoke(['tailbound', '--dim', '5', '--a2', '20', '--mc', '1000000', '--seed', '3',
                               '--format', 'json'])
        self.assertEqual(0, code)
        row = json.loads(out)['records'][0]
        self.assertAlmostEqual(0.00125, row['empirical'], delta=0.0003)
        self.assertLessEqual(row['empirical'], row['bound'])

    def test_missing_epsilon(self):
        code, _, err = invoke(['run', '--problem', 'bowl'])
        self.assertEqual(2, code)
        self.assertIn('epsilon', err)

    def test_unknown_problem(self):
        code, _, err = invoke(['run', '--problem', 'rosenbrock', '--epsilon', '0.1'])
        self.assertEqual(2, code)
        self.assertIn('bowl', err)
        self.assertIn('saddle_quartic', err)

    def test_unknown_command(self):
        code, _, _ = invoke(['fly'])
        self.assertEqual(2, code)

    def test_unknown_format(self):
        code, _, err = invoke(['tailbound', '--dim', '5', '--a2', '20', '--format', 'xml'])
        self.assertEqual(2, code)
        self.assertIn('format', err)

    def test_bad_parameter_names_field(self):
        code, _, err = invoke(['run', '--epsilon', '0.1', '--c', '0.3'])
        self.assertEqual(2, code)
        self.assertIn('c:', err)

    def test_underflowing_ceiling_names_eps_hat(self):
        code, _, err = invoke(['run', '--problem', 'bowl', '--epsilon', '0.1', '--theta', '100', '--exact-gradient',
                               '--out', self.path('trace.json')])
        self.assertEqual(2, code)
        self.assertIn('eps_hat', err)

    def test_intractable_sample_count_needs_budget(self):
        target = self.path('trace.json')
        code, _, err = invoke(['run', '--problem', 'saddle_quadratic', '--dim', '2', '--epsilon', '0.01',
                               '--seed', '7', '--out', target])
        self.assertEqual(2, code)
        self.assertIn('budget', err)
        self.assertFalse(os.path.exists(target))
        code, _, err = invoke(['escape', '--epsilon', '0.01', '--seeds', '2'])
        self.assertEqual(2, code)
        self.assertIn('budget', err)
        code, _, err = invoke(['scaling', '--problem', 'bowl', '--epsilons', '0.1', '0.05'])
        self.assertEqual(2, code)
        self.assertIn('budget', err)

    def test_run_json(self):
        target = self.path('trace.json')
        code, _, err = invoke(['run', '--problem', 'saddle_quadratic', '--dim', '2', '--seed', '7', *FAST_RUN,
                               '--out', target, '--format', 'json'])
        self.assertEqual(0, code)
        self.assertIn('effective eps_hat', err)
        with open(target, encoding='utf-8') as f:
            doc = json.load(f)
        summary = doc['summary']
        self.assertEqual('MaxIterationsExceeded', summary['termination'])
        self.assertEqual('NotStationary', summary['classification']['class'])
        self.assertEqual(summary['oracle_queries'], summary['total_queries'])
        self.assertEqual(200 * 17 + 17 * len(summary['perturbation_events']), summary['total_queries'])
        self.assertEqual(200, len(doc['records']))
        self.assertEqual(0.01, doc['config']['egd']['epsilon'])
        self.assertIn('t_thres', doc['config']['schedule'])
        self.assertEqual(2, len(doc['records'][0]['x']))

    def test_run_is_reproducible(self):
        target = self.path('trace.csv')
        argv = ['run', '--seed', '11', *FAST_RUN, '--out', target]
        contents = []
        for _ in range(2):
            self.assertEqual(0, invoke(argv)[0])
            with open(target, 'rb') as f:
                contents.append(f.read())
        self.assertEqual(contents[0], contents[1])
        self.assertTrue(contents[0].startswith(b't,f,g_hat_norm,perturbed,queries,in_domain,x\r\n'))

    def test_thinned_trace(self):
        code, out, _ = invoke(['run', *FAST_RUN, '--thin', '50', '--format', 'json'])
        self.assertEqual(0, code)
        self.assertEqual([0, 50, 100, 150, 199], [rec['t'] for rec in json.loads(out)['records']])

    def test_unwritable_output(self):
        code, _, err = invoke(['tailbound', '--dim', '5', '--a2', '20',
                               '--out', self.path('missing/dir/out.csv')])
        self.assertEqual(1, code)
        self.assertIn('failed', err)

    def test_escape(self):
        code, out, _ = invoke(['escape', '--problem', 'bowl', '--epsilon', '0.1', '--c', '0.2', '--exact-gradient',
                               '--max-iterations', '50', '--seeds', '3', '--format', 'json'])
        self.assertEqual(0, code)
        doc = json.loads(out)
        self.assertEqual(3, doc['summary']['seeds'])
        self.assertEqual(1.0, doc['summary']['escape_rate'])
        self.assertEqual([0, 1, 2], [rec['seed'] for rec in doc['records']])

    def test_estimate(self):
        code, out, _ = invoke(['estimate', '--problem', 'bowl', '--x0', '1', '0', '--eps-hat', '0.5',
                               '--budget', '2000', '--trials', '20', '--format', 'json'])
        self.assertEqual(0, code)
        doc = json.loads(out)
        self.assertEqual(20, len(doc['records']))
        self.assertGreaterEqual(doc['summary']['accuracy'], 0.9)
        self.assertEqual(2000, doc['summary']['samples_per_estimate'])

    def test_coupling(self):
        code, out, _ = invoke(['coupling', '--steps', '10'])
        self.assertEqual(0, code)
        lines = out.splitlines()
        self.assertEqual('t,psi,growth_ratio,distance', lines[0])
        self.assertEqual(12, len(lines))

    def test_scaling_needs_epsilons(self):
        code, _, err = invoke(['scaling', '--problem', 'bowl'])
        self.assertEqual(2, code)
        self.assertIn('epsilons', err)


class TestConfig(unittest.TestCase):

    def test_to_argv_round_trip(self):
        argv = ['scaling', '--problem', 'bowl', '--dim', '3', '--epsilons', '0.1', '0.05', '--seeds', '4',
                '--c', '0.2', '--exact-gradient', '--x0', '1', '2', '3', '--format', 'json']
        exp = parse_experiment_config(argv)
        self.assertEqual((0.1, 0.05), exp.epsilons)
        self.assertTrue(exp.exact_gradient)
        self.assertFalse(exp.stale_gradient)
        self.assertEqual(exp, parse_experiment_config(exp.to_argv()))

    def test_flags_are_per_command(self):
        with contextlib.redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit):
                parse_experiment_config(['tailbound', '--epsilon', '0.1'])


class TestWriters(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def read(self, name):
        with open(os.path.join(self.tmp, name), encoding='utf-8', newline='') as f:
            return f.read()

    def test_empty_csv(self):
        write_results(os.path.join(self.tmp, 'e.csv'), [], columns=('t', 'f'))
        self.assertEqual('t,f\r\n', self.read('e.csv'))

    def test_csv_cells(self):
        rows = [{'t': 1, 'f': 0.1, 'ok': True, 'x': np.array([1.0, 2.0]), 'n': None}]
        write_results(os.path.join(self.tmp, 'c.csv'), rows)
        self.assertEqual('t,f,ok,x,n\r\n1,0.1,true,"[1.0, 2.0]",\r\n', self.read('c.csv'))

    def test_json(self):
        rows = [{'t': 0, 'f': 1.5, 'g': math.nan}, {'t': 1, 'f': np.float64(0.25), 'g': np.int64(3)}]
        write_results(os.path.join(self.tmp, 'r.json'), rows, fmt='json', config={'seed': 1},
                      summary={'best': math.inf})
        doc = json.loads(self.read('r.json'))
        self.assertEqual({'seed': 1}, doc['config'])
        self.assertEqual([{'t': 0, 'f': 1.5, 'g': None}, {'t': 1, 'f': 0.25, 'g': 3}], doc['records'])
        self.assertIsNone(doc['summary']['best'])

    def test_thinning(self):
        rows = [{'t': t} for t in range(26)]
        write_results(os.path.join(self.tmp, 't.json'), rows, fmt='json', thin=10)
        self.assertEqual([0, 10, 20, 25], [rec['t'] for rec in json.loads(self.read('t.json'))['records']])

    def test_unknown_format(self):
        with self.assertRaises(ValueError):
            write_results(os.path.join(self.tmp, 'x'), [], fmt='xml')

    def test_collect_summaries(self):
        script = os.path.join(os.path.dirname(__file__), '..', 'scripts', 'collect_summaries.py')
        spec = importlib.util.spec_from_file_location('collect_summaries', script)
        module = importlib.util.module_from_spec(spec)
        spec.loader.exec_module(module)
        for seed in (1, 2):
            write_results(os.path.join(self.tmp, f'run{seed}.json'), [], fmt='json',
                          summary={'seed': seed, 'classification': {'class': 'SecondOrder'}})
        rows = module.collect(glob.glob(os.path.join(self.tmp, '*.json')))
        self.assertEqual([{'file': 'run1.json', 'seed': 1, 'classification.class': 'SecondOrder'},
                          {'file': 'run2.json', 'seed': 2, 'classification.class': 'SecondOrder'}], rows)


if __name__ == '__main__':
    unittest.main()
