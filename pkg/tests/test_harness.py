"""Tests for :mod:`sdq.sdq_harness` and the entry scripts"""

import json

import numpy as np
import pytest

import compareRuns
import runExperiment
import sweepRuns
from sdq import (
    OptimizerKind, ScheduleKind, StepSchedule, RunFlag, Recursion, Problem, RunConfig,
    UsageError, InvalidConfigError, LogisticRegressionOracle, QuadraticOracle,
    parse_config, build_problem, run_experiment, run_sweep, read_csv, compare_runs, select_best,
    synthetic_blobs, write_idx_images, write_idx_labels, EXIT_OK, EXIT_USAGE, EXIT_IO,
)
from sdq.sdq_cfg import LR_GRID
from sdq.sdq_harness import ProblemInstance


class NonFiniteOracle:
    """Objective that overflows everywhere."""
    dim = 2

    def eval(self, x, batch_seed=0):
        return float('nan'), np.full(2, np.nan)

    def full_eval(self, x):
        return self.eval(x)

    def initial_point(self):
        return np.zeros(2)


def _cfg(optimizer=OptimizerKind.SDLBFGS, problem=Problem.ROSENBROCK2D, schedule=None, **kwargs):
    return RunConfig(optimizer=optimizer, problem=problem, schedule=schedule or StepSchedule(), **kwargs)


@pytest.fixture
def clean_env(monkeypatch, tmp_path):
    for name in ('SDQ_MNIST_DIR', 'SDQ_OUT_DIR', 'SDQ_DEBUG', 'SDQ_LOG_LEVEL', 'SDQ_WORKERS'):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.chdir(tmp_path)
    return tmp_path


def test_parse_config_defaults():
    cfg = parse_config('--optimizer sdlbfgs --problem rosenbrock2d --iters 1000000 --seed 1'.split())
    assert cfg.optimizer is OptimizerKind.SDLBFGS
    assert cfg.problem is Problem.ROSENBROCK2D
    assert cfg.schedule == StepSchedule(ScheduleKind.INVERSE_SQRT, 1.0)
    assert cfg.memory_size == 100 and cfg.batch_size == 64
    assert cfg.iters == 1000000 and cfg.seed == 1
    assert cfg.recursion is Recursion.TWO_LOOP
    assert cfg.out_path.endswith('sdlbfgs_rosenbrock2d_lr1_seed1.csv')


def test_parse_config_baseline_defaults_to_constant_rate():
    cfg = parse_config(['--optimizer', 'sgd', '--lr', '0.01'])
    assert cfg.schedule.kind is ScheduleKind.CONSTANT
    assert cfg.schedule.base == 0.01


def test_parse_config_names_the_bad_flag():
    with pytest.raises(UsageError) as excinfo:
        parse_config(['--optimizer', 'sdlbfgs', '--memory-size', '0'])
    assert excinfo.value.flag == '--memory-size'

    with pytest.raises(UsageError) as excinfo:
        parse_config(['--optimizer', 'sdlbfgs', '--frobnicate', '3'])
    assert excinfo.value.flag == '--frobnicate'

    with pytest.raises(UsageError) as excinfo:
        parse_config(['--optimizer', 'sdlbfgs', '--schedule', 'inv-power', '--beta', '0.4'])
    assert excinfo.value.flag == '--beta'


@pytest.mark.parametrize('argv', [
    [],
    ['--optimizer', 'newton'],
    ['--optimizer', 'sgd', '--lr', '0'],
    ['--optimizer', 'sgd', '--lr', 'nan'],
    ['--optimizer', 'sdlbfgs0', '--delta', '-1'],
    ['--optimizer', 'sgd', '--iters', 'many'],
    ['--optimizer', 'sgd', '--log-level', 'LOUD'],
])
def test_parse_config_rejects(argv):
    with pytest.raises(UsageError):
        parse_config(argv)


def test_parse_config_environment_fallback():
    env = {'out_dir': 'results', 'mnist_dir': '/data/mnist', 'debug': True, 'log_level': 'DEBUG'}
    cfg = parse_config(['--optimizer', 'adagrad', '--problem', 'logreg-mnist'], env)
    assert cfg.out_path.replace('\\', '/') == 'results/adagrad_logreg-mnist_lr0.01_seed0.csv'
    assert cfg.mnist_dir == '/data/mnist'
    assert cfg.debug and cfg.log_level == 'DEBUG'

    explicit = parse_config(['--optimizer', 'adagrad', '--mnist-dir', 'here', '--out', 'x.csv'], env)
    assert explicit.mnist_dir == 'here' and explicit.out_path == 'x.csv'


def test_run_config_validation():
    with pytest.raises(InvalidConfigError):
        _cfg(memory_size=0)
    with pytest.raises(InvalidConfigError):
        _cfg(epochs=0)


def test_zero_learning_rate_freezes_the_objective(tmp_path):
    cfg = _cfg(OptimizerKind.SGD, schedule=StepSchedule(ScheduleKind.CONSTANT, 0.0), iters=50,
               out_path=str(tmp_path / 'frozen.csv'))
    records = run_experiment(cfg)
    assert len(records) == 50
    assert records[0].objective == pytest.approx(24.2)
    assert len({r.objective for r in records}) == 1


def test_rosenbrock_run_writes_one_row_per_iteration(tmp_path):
    path = tmp_path / 'run.csv'
    records = run_experiment(_cfg(iters=200, out_path=str(path)))
    assert [r.iter for r in records] == list(range(1, 201))
    assert read_csv(str(path)) == records
    assert records[0].objective == pytest.approx(24.2)
    assert records[1].alpha == pytest.approx(1.0 / np.sqrt(2))
    assert all(r.test_accuracy is None for r in records)


@pytest.mark.parametrize('cfg_kwargs', [
    dict(optimizer=OptimizerKind.SDLBFGS, iters=300),
    dict(optimizer=OptimizerKind.SDLBFGS0, iters=300),
    dict(optimizer=OptimizerKind.SDLBFGS, problem=Problem.LOGREG_SYNTH, epochs=1, seed=3),
    dict(optimizer=OptimizerKind.ADAGRAD, problem=Problem.LOGREG_SYNTH, epochs=1, seed=3,
         schedule=StepSchedule(ScheduleKind.CONSTANT, 0.1)),
])
def test_runs_are_byte_reproducible(tmp_path, cfg_kwargs):
    first, second = tmp_path / 'a.csv', tmp_path / 'b.csv'
    run_experiment(_cfg(out_path=str(first), **cfg_kwargs))
    run_experiment(_cfg(out_path=str(second), **cfg_kwargs))
    assert first.read_bytes() == second.read_bytes()


def test_run_stops_early_when_converged(tmp_path):
    oracle = QuadraticOracle(2, start=(0.0, 0.0))
    problem = ProblemInstance(oracle, oracle.initial_point())
    path = tmp_path / 'converged.csv'
    records = run_experiment(_cfg(iters=10, out_path=str(path)), problem=problem)
    assert len(records) == 1
    assert records[0].flag is RunFlag.CONVERGED
    assert path.read_text().splitlines()[1].endswith(',converged')


@pytest.mark.parametrize('optimizer', list(OptimizerKind))
def test_nonfinite_values_end_the_run_with_a_record(tmp_path, optimizer):
    oracle = NonFiniteOracle()
    path = tmp_path / 'nan.csv'
    records = run_experiment(_cfg(optimizer, schedule=StepSchedule(ScheduleKind.CONSTANT, 0.1),
                                  iters=10, out_path=str(path)),
                             problem=ProblemInstance(oracle, oracle.initial_point()))
    assert len(records) == 1
    assert records[0].flag is RunFlag.NONFINITE
    assert path.read_text().splitlines()[1].startswith('1,nan,nan,')


def test_keep_records_false_returns_the_final_record(tmp_path):
    path = tmp_path / 'run.csv'
    final = run_experiment(_cfg(iters=30, out_path=str(path)), keep_records=False)
    assert len(final) == 1 and final[0].iter == 30
    assert len(read_csv(str(path))) == 30


def test_learning_run_evaluates_once_per_epoch(tmp_path):
    cfg = _cfg(problem=Problem.LOGREG_SYNTH, epochs=2, out_path=str(tmp_path / 'synth.csv'))
    records = run_experiment(cfg)
    # 1600 training samples in batches of 64
    assert len(records) == 50
    evaluated = [r.iter for r in records if r.test_accuracy is not None]
    assert evaluated == [25, 50]
    assert all(0.0 <= r.test_accuracy <= 1.0 for r in records if r.test_accuracy is not None)


def test_learning_run_custom_cadence(tmp_path):
    cfg = _cfg(problem=Problem.LOGREG_SYNTH, iters=25, eval_every=10)
    records = run_experiment(cfg)
    assert [r.iter for r in records if r.test_accuracy is not None] == [10, 20, 25]


def test_separable_blobs_are_learned_by_sgd():
    data = synthetic_blobs(100, 2, 2, 10.0, seed=0)
    oracle = LogisticRegressionOracle(data, 0.0, 20)
    problem = ProblemInstance(oracle, oracle.initial_point(), data, data)
    cfg = _cfg(OptimizerKind.SGD, problem=Problem.LOGREG_SYNTH,
               schedule=StepSchedule(ScheduleKind.CONSTANT, 0.5), iters=200)
    records = run_experiment(cfg, problem=problem)
    assert records[-1].test_accuracy >= 0.99


def test_mnist_problem_without_data_fails_before_running(tmp_path):
    path = tmp_path / 'mnist.csv'
    with pytest.raises(FileNotFoundError):
        run_experiment(_cfg(problem=Problem.MLP_MNIST, out_path=str(path)))
    with pytest.raises(FileNotFoundError):
        build_problem(_cfg(problem=Problem.LOGREG_MNIST, mnist_dir=str(tmp_path / 'missing')))
    assert not path.exists()


def test_debug_artifacts(clean_env):
    run_experiment(_cfg(iters=5, out_path='dbg.csv', debug=True))
    config = json.loads((clean_env / 'debug' / 'dbg' / 'config.json').read_text())
    summary = json.loads((clean_env / 'debug' / 'dbg' / 'summary.json').read_text())
    assert config['optimizer'] == 'sdlbfgs'
    assert config['schedule']['kind'] == 'inv-sqrt'
    assert summary['k'] == 6 and summary['final_flag'] == 'ok'


def test_no_debug_artifacts_by_default(clean_env):
    run_experiment(_cfg(iters=5, out_path='plain.csv'))
    assert not (clean_env / 'debug').exists()


def test_entry_script_exit_codes(clean_env):
    assert runExperiment.main(['--optimizer', 'sdlbfgs', '--iters', '20', '--out', 'ok.csv']) == EXIT_OK
    assert len(read_csv(str(clean_env / 'ok.csv'))) == 20

    assert runExperiment.main(['--optimizer', 'sdlbfgs', '--memory-size', '0']) == EXIT_USAGE
    assert runExperiment.main(['--optimizer', 'sdlbfgs', '--bogus']) == EXIT_USAGE

    missing = str(clean_env / 'no-mnist-here')
    assert runExperiment.main(['--optimizer', 'sdlbfgs', '--problem', 'mlp-mnist',
                               '--mnist-dir', missing, '--out', 'mnist.csv']) == EXIT_IO


def test_entry_script_reports_bad_mnist_labels(clean_env):
    data_dir = clean_env / 'mnist'
    data_dir.mkdir()
    write_idx_images(data_dir / 'train-images-idx3-ubyte', np.zeros((40, 784)), 28, 28)
    write_idx_labels(data_dir / 'train-labels-idx1-ubyte', np.full(40, 12))
    assert runExperiment.main(['--optimizer', 'sgd', '--problem', 'logreg-mnist', '--iters', '5',
                               '--mnist-dir', str(data_dir), '--out', 'bad.csv']) == EXIT_IO
    assert not (clean_env / 'bad.csv').exists()


def test_run_sweep(tmp_path):
    cfg = _cfg(iters=20)
    paths = run_sweep(cfg, [OptimizerKind.SGD, OptimizerKind.SDLBFGS], lrs=(1e-3, 1e-2),
                      out_dir=str(tmp_path), workers=1)
    names = [p.replace('\\', '/').rsplit('/', 1)[-1] for p in paths]
    assert names == [
        'sgd_rosenbrock2d_lr0.001_seed0.csv',
        'sgd_rosenbrock2d_lr0.01_seed0.csv',
        'sdlbfgs_rosenbrock2d_lr0.001_seed0.csv',
        'sdlbfgs_rosenbrock2d_lr0.01_seed0.csv',
    ]
    sgd = read_csv(paths[0])
    assert {r.alpha for r in sgd} == {1e-3}
    sdlbfgs = read_csv(paths[3])
    assert sdlbfgs[1].alpha == pytest.approx(1e-2 / np.sqrt(2))
    assert len(compare_runs(paths)) == 4


@pytest.mark.slow
def test_mnist_mlp_beats_sgd_grid(mnist_dir, tmp_path):
    """784-32-10 MLP on a 10k/2k subset, three epochs."""
    common = dict(problem=Problem.MLP_MNIST, epochs=3, mnist_dir=mnist_dir, seed=0)
    qn = run_experiment(_cfg(OptimizerKind.SDLBFGS, out_path=str(tmp_path / 'sdlbfgs.csv'), **common),
                        keep_records=False)[-1]
    assert qn.flag is not RunFlag.NONFINITE
    assert qn.test_accuracy >= 0.90

    paths = []
    for lr in LR_GRID:
        path = str(tmp_path / f'sgd_{lr:g}.csv')
        run_experiment(_cfg(OptimizerKind.SGD, schedule=StepSchedule(ScheduleKind.CONSTANT, lr),
                            out_path=path, **common), keep_records=False)
        paths.append(path)
    best_sgd = select_best(compare_runs(paths))
    assert qn.test_accuracy >= best_sgd['final_accuracy'] - 0.02


def test_compare_script_exit_codes(clean_env):
    run_experiment(_cfg(iters=10, out_path='a.csv'))
    run_experiment(_cfg(OptimizerKind.SGD, schedule=StepSchedule(ScheduleKind.CONSTANT, 1e-3),
                        iters=10, out_path='b.csv'))
    assert compareRuns.main(['a.csv', 'b.csv', '--xlsx', 'summary.xlsx']) == EXIT_OK
    assert (clean_env / 'summary.xlsx').exists()
    assert compareRuns.main(['a.csv', '--labels', 'x', 'y']) == EXIT_USAGE
    assert compareRuns.main(['missing.csv']) == EXIT_IO
    assert compareRuns.main([]) == EXIT_USAGE


def test_sweep_script(clean_env):
    argv = ['--optimizers', 'sgd', 'sdlbfgs', '--lrs', '0.01', '--workers', '1',
            '--out-dir', 'grid', '--iters', '10']
    assert sweepRuns.main(argv) == EXIT_OK
    assert sorted(p.name for p in (clean_env / 'grid').iterdir()) == [
        'sdlbfgs_rosenbrock2d_lr0.01_seed0.csv',
        'sgd_rosenbrock2d_lr0.01_seed0.csv',
    ]
    assert sweepRuns.main(['--lrs', '0', '--workers', '1']) == EXIT_USAGE
