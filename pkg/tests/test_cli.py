import json
import math
import os
import sys
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

# Add the project root to the path so we can import our modules
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from main import main
from src.trailer_planner.config.logging_config import parse_level
from src.trailer_planner.config.settings import AppSettings, apply_overrides, load_config_overrides
from src.trailer_planner.errors import InvalidParamsError, LibraryFormatError, ScenarioError, UnsupportedVersionError
from src.trailer_planner.heuristics.cost_net import load_net
from src.trailer_planner.heuristics.dataset import DATASET_COLUMNS, CostDataset, save_dataset
from src.trailer_planner.pipeline import PlanningPipeline
from src.trailer_planner.planner.distance import Tolerances
from src.trailer_planner.planner.search import PlanResult
from src.trailer_planner.primitives.library import load_library, save_library
from src.trailer_planner.scenario import load_corpus, load_scenario, save_scenario
from src.trailer_planner.utils.cli_utils import parse_args
from src.trailer_planner.utils.io_utils import check_format_version, load_json_data, save_results
from src.trailer_planner.utils.metrics import BENCH_COLUMNS, NOT_AVAILABLE, bench_row, build_report, save_bench_csv
from src.trailer_planner.utils.plotting import plot_plan
from src.trailer_planner.vehicle.model import VehicleParams

CORPUS_DIR = os.path.join(os.path.dirname(__file__), '..', 'data', 'scenarios')


def fake_result(planner, success=True, time_s=1.0, mps=10):
    return SimpleNamespace(planner=planner, success=success, wall_time_s=time_s, mps_explored=mps,
                           path_length=12.5, terminal_error=np.array([0.01, 0.02, 0.001, 0.0, 0.0, 0.0]))


@pytest.fixture
def workspace(tmp_path, params, toy_library, open_scenario):
    """Toy library plus one open-field scenario file that references it."""
    library_path = os.path.join(tmp_path, 'library.json.gz')
    save_library(toy_library, library_path)
    corpus = os.path.join(tmp_path, 'corpus')
    scenario = replace(open_scenario, library_path=library_path)
    scenario_path = os.path.join(corpus, 'open_field.json')
    save_scenario(scenario, scenario_path)
    return SimpleNamespace(root=str(tmp_path), library=library_path, corpus=corpus, scenario=scenario_path)


# ---- command line ----

def test_parse_args_defaults():
    args = parse_args(['plan', 'case.json'])
    assert args.command == 'plan'
    assert args.planner == 'deagt'
    assert args.out == 'data/output/plans'
    assert args.dump_tree is False

    args = parse_args(['bench', 'corpus', '--planners', 'deagt', 'iagt_nn_full', '--threads', '2'])
    assert args.planners == ['deagt', 'iagt_nn_full']
    assert args.threads == 2


def test_parse_args_rejects_bad_values():
    with pytest.raises(SystemExit):
        parse_args(['plan', 'case.json', '--planner', 'astar'])
    with pytest.raises(SystemExit):
        parse_args(['gen-mps', '--threads', '0'])
    with pytest.raises(SystemExit):
        parse_args(['train'])


def test_parse_level():
    assert parse_level('debug') == 10
    with pytest.raises(ValueError):
        parse_level('chatty')


# ---- configuration ----

def test_config_overrides(tmp_path):
    path = os.path.join(tmp_path, 'config.json')
    save_results({'tolerances': {'eps1': 0.5}, 'lqr': {'q_diag': [1, 1, 1, 1, 1, 1]}}, path)
    overrides = load_config_overrides(path)
    tol = apply_overrides(Tolerances(), overrides['tolerances'])
    assert tol.eps1 == 0.5 and tol.eps2 == 3.0

    save_results({'bogus': {}}, path)
    with pytest.raises(InvalidParamsError):
        load_config_overrides(path)
    with pytest.raises(InvalidParamsError):
        apply_overrides(Tolerances(), {'eps9': 1.0})


def test_pipeline_rejects_invalid_vehicle():
    with pytest.raises(InvalidParamsError):
        PlanningPipeline(AppSettings(), {'vehicle': {'R': 3.0}})


def test_format_version_checks():
    check_format_version({'format_version': '1.4'}, 1, 'Thing')
    with pytest.raises(UnsupportedVersionError):
        check_format_version({'format_version': '2.0'}, 1, 'Thing')
    with pytest.raises(LibraryFormatError):
        check_format_version({}, 1, 'Thing')


def test_gzip_output_is_byte_identical(tmp_path):
    a, b = os.path.join(tmp_path, 'a.json.gz'), os.path.join(tmp_path, 'b.json.gz')
    save_results({'z': 1, 'a': [1.5, 2.5]}, a)
    save_results({'a': [1.5, 2.5], 'z': 1}, b)
    with open(a, 'rb') as fa, open(b, 'rb') as fb:
        assert fa.read() == fb.read()
    assert load_json_data(a) == {'a': [1.5, 2.5], 'z': 1}


# ---- scenarios ----

def test_scenario_round_trip(tmp_path, open_scenario):
    first = os.path.join(tmp_path, 'first.json')
    second = os.path.join(tmp_path, 'second.json')
    scenario = replace(open_scenario, params=VehicleParams(R=6.0), tolerances=Tolerances(eps1=0.3))
    save_scenario(scenario, first)
    loaded = load_scenario(first)
    assert loaded.params == scenario.params
    assert loaded.tolerances == scenario.tolerances
    assert loaded.planner == scenario.planner
    assert loaded.lqr == scenario.lqr
    save_scenario(loaded, second)
    with open(first, 'rb') as fa, open(second, 'rb') as fb:
        assert fa.read() == fb.read()


def test_scenario_rejects_bad_documents(tmp_path, open_scenario):
    path = os.path.join(tmp_path, 'bad.json')
    data = open_scenario.to_dict()
    data['format_version'] = '2.0'
    save_results(data, path)
    with pytest.raises(UnsupportedVersionError):
        load_scenario(path)

    data = open_scenario.to_dict()
    del data['start']
    save_results(data, path)
    with pytest.raises(ScenarioError):
        load_scenario(path)

    data = open_scenario.to_dict()
    data['goal']['x_m'] = 58.0
    save_results(data, path)
    with pytest.raises(ScenarioError):
        load_scenario(path)


def test_shipped_corpus_is_valid():
    scenarios = load_corpus(CORPUS_DIR)
    assert len(scenarios) == 10
    assert [s.name for s in scenarios] == [f"case{i:02d}" for i in range(1, 11)]
    for scenario in scenarios:
        assert scenario.library_path.endswith(os.path.join('output', 'library.json.gz'))
        assert scenario.environment.margin == pytest.approx(0.1)


def test_empty_corpus_raises(tmp_path):
    with pytest.raises(ScenarioError):
        load_corpus(str(tmp_path))


# ---- benchmark report ----

def test_bench_rows_and_report(tmp_path):
    rows = [
        bench_row('case01', fake_result('deagt', time_s=1.0, mps=10)),
        bench_row('case01', fake_result('iagt_rs', time_s=4.0, mps=40)),
        bench_row('case02', fake_result('deagt', time_s=2.0, mps=30)),
        bench_row('case02', fake_result('iagt_rs', time_s=2.0, mps=20)),
        bench_row('case03', fake_result('deagt', time_s=1.0)),
        bench_row('case03', fake_result('iagt_rs', success=False, time_s=500.0)),
    ]
    report = build_report(rows)
    assert report.mutually_solved == 2
    assert report.speedup == {'case01': pytest.approx(4.0), 'case02': pytest.approx(1.0)}
    assert report.geometric_mean_speedup == pytest.approx(2.0)
    assert report.mps_win_rate == pytest.approx(0.5)
    assert report.mps_tie_rate == 0.0
    assert 'Geometric-mean speedup' in report.to_text()

    path = os.path.join(tmp_path, 'bench.csv')
    save_bench_csv(report, path)
    frame = pd.read_csv(path, keep_default_na=False)
    assert list(frame.columns) == BENCH_COLUMNS
    failed = frame[(frame['case'] == 'case03') & (frame['planner'] == 'iagt_rs')].iloc[0]
    assert failed['status'] == NOT_AVAILABLE
    assert failed['path_len_m'] == NOT_AVAILABLE
    assert failed['err_x'] == NOT_AVAILABLE


def test_equal_mp_counts_are_ties_not_wins():
    rows = [
        bench_row('case01', fake_result('deagt', time_s=1.0, mps=25)),
        bench_row('case01', fake_result('iagt_rs', time_s=3.0, mps=25)),
        bench_row('case02', fake_result('deagt', time_s=1.0, mps=12)),
        bench_row('case02', fake_result('iagt_rs', time_s=2.0, mps=12)),
    ]
    report = build_report(rows)
    assert report.mps_win_rate == 0.0
    assert report.mps_tie_rate == 1.0
    assert report.summary()['mps_tie_rate'] == 1.0
    assert 'as many on 100%' in report.to_text()


def test_report_without_common_cases():
    report = build_report([bench_row('case01', fake_result('deagt', success=False))])
    assert report.mutually_solved == 0
    assert report.geometric_mean_speedup is None
    assert report.summary()['rows'] == 1


# ---- plotting and end to end ----

def test_plot_is_deterministic(tmp_path, open_scenario):
    a, b = os.path.join(tmp_path, 'a.svg'), os.path.join(tmp_path, 'b.svg')
    plot_plan(open_scenario, None, a)
    plot_plan(open_scenario, None, b)
    with open(a, 'rb') as fa, open(b, 'rb') as fb:
        content = fa.read()
        assert content == fb.read()
    assert b'<svg' in content
    assert b'#9e9e9e' not in content


def test_pipeline_plan_writes_artifacts(workspace):
    pipeline = PlanningPipeline(AppSettings())
    out_dir = os.path.join(workspace.root, 'plans')
    result = pipeline.plan(workspace.scenario, 'iagt_rs', out_dir, dump_tree=True)
    assert result.success
    base = os.path.join(out_dir, 'open_field_iagt_rs')
    for suffix in ('.json', '.verify.json', '.svg'):
        assert os.path.exists(base + suffix)
    assert load_json_data(base + '.verify.json') == {'issues': [], 'ok': True}

    stored = PlanResult.from_dict(load_json_data(base + '.json'))
    assert stored.path_length == pytest.approx(result.path_length)
    assert stored.tree

    svg = pipeline.plot(workspace.scenario, base + '.json', os.path.join(workspace.root, 'replot.svg'))
    with open(svg, 'rb') as f:
        assert b'#1f4fd8' in f.read()


def test_pipeline_bench(workspace):
    pipeline = PlanningPipeline(AppSettings(), time_cap_s=60.0)
    out_path = os.path.join(workspace.root, 'bench', 'bench.csv')
    report = pipeline.bench(workspace.corpus, ['deagt', 'iagt_rs'], out_path)
    assert len(report.frame) == 2
    assert (report.frame['status'] == 'ok').all()
    assert report.mutually_solved == 1
    assert os.path.exists(os.path.join(workspace.root, 'bench', 'bench.txt'))
    summary = load_json_data(os.path.join(workspace.root, 'bench', 'bench.summary.json'))
    assert summary['cases'] == 1
    assert math.isfinite(summary['geometric_mean_speedup'])


def test_pipeline_requires_network_for_learned_heuristic(workspace):
    pipeline = PlanningPipeline(AppSettings(), {'heuristic': {'kind': 'nn_rs'}})
    with pytest.raises(ScenarioError):
        pipeline.plan(workspace.scenario, 'deagt', os.path.join(workspace.root, 'plans'))


def test_main_exit_codes(workspace):
    out_dir = os.path.join(workspace.root, 'cli_plans')
    assert main(['plan', workspace.scenario, '--planner', 'iagt_rs', '--out', out_dir]) == 0
    assert os.path.exists(os.path.join(out_dir, 'open_field_iagt_rs.json'))
    assert main(['plan', workspace.scenario, '--out', out_dir, '--time-cap-s', '1e-9']) == 2
    assert main(['plot', os.path.join(workspace.root, 'missing.json'), '--out', out_dir]) == 1
    with open(os.path.join(out_dir, 'open_field_iagt_rs.json'), 'r', encoding='utf-8') as f:
        assert json.load(f)['success'] is True


def test_pipeline_gen_mps_on_tiny_lattice(tmp_path, params):
    # Targets (-2, 0, 0, 0), (0, 0, 0, 0) and (2, 0, 0, 0); the origin is skipped
    overrides = {'lattice': {'Lx': 2.0, 'Ly': 1.0, 'n_x': 3, 'n_y': 1, 'n_theta': 4, 'theta_limit': 0.0, 'n_s': 1}}
    pipeline = PlanningPipeline(AppSettings(), overrides)
    out_path = os.path.join(tmp_path, 'tiny.json.gz')
    library, report = pipeline.gen_mps(out_path)

    assert report.attempted == 2
    assert report.feasible == 2
    assert report.mirrored_added == 0
    assert len(library) == 2
    assert library.mode_counts()[0.0] == {'ForwardLeft': 1, 'ForwardRight': 0, 'BackwardLeft': 1, 'BackwardRight': 0}
    assert os.path.exists(os.path.join(tmp_path, 'tiny.report.json'))
    assert len(load_library(out_path, params, check_fraction=1.0)) == 2


def test_pipeline_train_writes_network_and_metrics(tmp_path):
    rng = np.random.default_rng(3)
    x = rng.uniform(-8, 8, 300)
    frame = pd.DataFrame({'x': x, 'y': rng.uniform(-8, 8, 300), 'theta0': rng.uniform(-math.pi, math.pi, 300),
                          's': rng.uniform(-1, 1, 300), 'cost_to_go': 10.0 + 0.5 * x, 'fidelity': 'solve'})
    dataset_path = os.path.join(tmp_path, 'costdata.csv')
    save_dataset(CostDataset(frame[DATASET_COLUMNS], {'seed': 3}), dataset_path)

    pipeline = PlanningPipeline(AppSettings(), {'net': {'hidden_layers': [16], 'max_epochs': 50, 'min_samples': 100}})
    out_path = os.path.join(tmp_path, 'costnet.json')
    net = pipeline.train(dataset_path, out_path)
    assert load_net(out_path).layer_sizes == net.layer_sizes
    metrics = load_json_data(os.path.join(tmp_path, 'costnet.metrics.json'))
    assert 'val_rmse' in metrics
    assert 'loss_curve' not in metrics

    with pytest.raises(FileNotFoundError):
        pipeline.train(os.path.join(tmp_path, 'missing.csv'), out_path)
