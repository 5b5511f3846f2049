"""
Command orchestration: artifact generation, training, planning, benchmarking and plotting.
"""

import dataclasses
import logging
import os
from typing import Any, Dict, List, Optional, Sequence, Tuple

from src.trailer_planner.config.settings import AppSettings, apply_overrides
from src.trailer_planner.errors import InvalidParamsError, ScenarioError
from src.trailer_planner.heuristics.cost_net import CostNet, NetSpec, load_net, save_net, train
from src.trailer_planner.heuristics.dataset import CostDataset, DatasetSpec, generate_dataset, load_dataset, save_dataset
from src.trailer_planner.planner.search import PLANNER_IDS, PlanResult, plan, verify_plan
from src.trailer_planner.primitives.lattice import LatticeSpec, build_lattice
from src.trailer_planner.primitives.library import (
    GenerationReport,
    MPLibrary,
    generate_library,
    load_library,
    save_library,
)
from src.trailer_planner.primitives.ocp import OCPConfig
from src.trailer_planner.scenario import Scenario, load_corpus, load_scenario
from src.trailer_planner.utils.io_utils import ensure_directory_exists, load_json_data, save_results
from src.trailer_planner.utils.metrics import BenchReport, bench_row, build_report, save_bench_csv
from src.trailer_planner.utils.plotting import plot_plan
from src.trailer_planner.vehicle.model import VehicleParams

logger = logging.getLogger('TrailerPlanner')


def _stem(file_path: str) -> str:
    base = file_path[:-3] if file_path.endswith('.gz') else file_path
    return os.path.splitext(base)[0]


class PlanningPipeline:
    def __init__(self, settings: Optional[AppSettings] = None, overrides: Optional[Dict[str, Dict[str, Any]]] = None,
                 seed: Optional[int] = None, threads: Optional[int] = None, time_cap_s: Optional[float] = None):
        """
        Initialize the pipeline.

        Args:
            settings: Process-wide settings from the environment
            overrides: Per-section config overrides from --config
            seed: Seed for sampling and training; falls back to the settings seed
            threads: Worker count; falls back to the settings value
            time_cap_s: Planning wall-clock cap overriding scenario and config values
        """
        self.settings = settings or AppSettings()
        self.overrides = overrides or {}
        self.seed = self.settings.seed if seed is None else seed
        self.threads = self.settings.threads if threads is None else threads
        self.time_cap_s = time_cap_s
        if self.threads < 1:
            raise InvalidParamsError("threads must be at least 1")

        self.params = apply_overrides(VehicleParams(), self.overrides.get('vehicle')).validate()
        self.ocp_config = apply_overrides(OCPConfig(), self.overrides.get('ocp')).validate()
        self.lattice_spec = apply_overrides(LatticeSpec(), self.overrides.get('lattice')).validate()
        self.dataset_spec = apply_overrides(DatasetSpec(), self.overrides.get('dataset')).validate()
        self.net_spec = apply_overrides(NetSpec(), self.overrides.get('net')).validate()
        self._libraries: Dict[Tuple[str, str], MPLibrary] = {}
        self._nets: Dict[str, CostNet] = {}
        logger.info(f"Planning pipeline initialized (seed={self.seed}, threads={self.threads}, "
                    f"params {self.params.params_hash()})")

    def gen_mps(self, out_path: str) -> Tuple[MPLibrary, GenerationReport]:
        """
        Generate the motion-primitive library and its generation report

        Args:
            out_path: Library file (.json or .json.gz); the report is written next to it

        Returns:
            Tuple of (library, report)
        """
        lattice = build_lattice(self.lattice_spec)
        library, report = generate_library(lattice, self.params, self.ocp_config, self.threads)
        save_library(library, out_path)
        save_results(report.to_dict(), f"{_stem(out_path)}.report.json")
        return library, report

    def gen_costdata(self, out_path: str) -> CostDataset:
        dataset = generate_dataset(self.dataset_spec, self.params, self.ocp_config, self.seed, self.threads)
        save_dataset(dataset, out_path)
        return dataset

    def train(self, dataset_path: str, out_path: str) -> CostNet:
        """
        Train the cost-to-go network on a stored dataset

        Args:
            dataset_path: Dataset CSV
            out_path: Network file; training metrics are written next to it

        Returns:
            Trained CostNet
        """
        if not os.path.exists(dataset_path):
            logger.error(f"Dataset file {dataset_path} not found")
            raise FileNotFoundError(f"Dataset file {dataset_path} not found; run gen-costdata first")
        dataset = load_dataset(dataset_path)
        stored_hash = dataset.metadata.get('params_hash')
        if stored_hash and stored_hash != self.params.params_hash():
            logger.warning(f"Dataset {dataset_path} was generated for parameters {stored_hash}")
        net = train(dataset, self.net_spec, self.seed)
        save_net(net, out_path)
        metrics = {k: v for k, v in net.metadata.items() if k != 'loss_curve'}
        save_results(metrics, f"{_stem(out_path)}.metrics.json")
        return net

    def prepare_scenario(self, scenario: Scenario) -> Scenario:
        """Apply config overrides and command-line caps to a loaded scenario."""
        params = apply_overrides(scenario.params, self.overrides.get('vehicle')).validate()
        planner = apply_overrides(scenario.planner, self.overrides.get('planner'))
        heuristic = self.overrides.get('heuristic', {})
        renamed = {'alpha': 'alpha', 'kind': 'heuristic_kind', 'cap': 'cap'}
        unknown = set(heuristic) - set(renamed)
        if unknown:
            raise InvalidParamsError(f"Unknown fields for HeuristicConfig: {sorted(unknown)}")
        planner = dataclasses.replace(planner, **{renamed[k]: v for k, v in heuristic.items()})
        if self.time_cap_s is not None:
            planner = dataclasses.replace(planner, time_cap_s=float(self.time_cap_s))
        if self.threads > 1:
            planner = dataclasses.replace(planner, threads=self.threads)
        return dataclasses.replace(
            scenario,
            params=params,
            planner=planner.validate(),
            tolerances=apply_overrides(scenario.tolerances, self.overrides.get('tolerances')).validate(),
            lqr=apply_overrides(scenario.lqr, self.overrides.get('lqr')).validate(),
        )

    def library_for(self, scenario: Scenario, library_path: Optional[str]) -> MPLibrary:
        path = library_path or scenario.library_path
        if not path:
            raise ScenarioError(f"Scenario {scenario.name} names no library; pass --library")
        key = (os.path.abspath(path), scenario.params.params_hash())
        if key not in self._libraries:
            self._libraries[key] = load_library(path, scenario.params, seed=self.seed)
        return self._libraries[key]

    def net_for(self, scenario: Scenario, planner_id: str, net_path: Optional[str]) -> Optional[CostNet]:
        if planner_id == 'iagt_rs' or scenario.planner.heuristic_kind == 'rs':
            return None
        path = net_path or scenario.net_path
        if not path:
            raise ScenarioError(f"Planner {planner_id} needs a cost-to-go network; pass --net")
        key = os.path.abspath(path)
        if key not in self._nets:
            self._nets[key] = load_net(path)
        return self._nets[key]

    def plan(self, scenario_path: str, planner_id: str, out_dir: str, library_path: Optional[str] = None,
             net_path: Optional[str] = None, dump_tree: bool = False) -> PlanResult:
        """
        Plan one scenario and write the result JSON and SVG

        Args:
            scenario_path: Scenario file
            planner_id: One of PLANNER_IDS
            out_dir: Output directory
            library_path: Library file, overriding the scenario's reference
            net_path: Network file, overriding the scenario's reference
            dump_tree: Store the search tree in the result and draw it

        Returns:
            PlanResult
        """
        scenario = self.prepare_scenario(load_scenario(scenario_path))
        if dump_tree:
            scenario = dataclasses.replace(scenario, planner=dataclasses.replace(scenario.planner, dump_tree=True))
        result = self._run(scenario, planner_id, library_path, net_path)

        ensure_directory_exists(out_dir)
        base = os.path.join(out_dir, f"{scenario.name}_{planner_id}")
        save_results(result.to_dict(), f"{base}.json")
        if result.success:
            report = verify_plan(result, scenario)
            save_results({'issues': report.issues, 'ok': report.ok}, f"{base}.verify.json")
        if result.success or dump_tree:
            plot_plan(scenario, result, f"{base}.svg", tree=result.tree)
        return result

    def _run(self, scenario: Scenario, planner_id: str, library_path: Optional[str],
             net_path: Optional[str]) -> PlanResult:
        if planner_id not in PLANNER_IDS:
            raise InvalidParamsError(f"Unknown planner {planner_id}; expected one of {PLANNER_IDS}")
        library = self.library_for(scenario, library_path)
        net = self.net_for(scenario, planner_id, net_path)
        return plan(planner_id, scenario, library, net)

    def bench(self, corpus_dir: str, planners: Sequence[str], out_path: str, library_path: Optional[str] = None,
              net_path: Optional[str] = None) -> BenchReport:
        """
        Run every planner on every corpus scenario, sequentially

        Args:
            corpus_dir: Directory of scenario files
            planners: Planner ids to run
            out_path: Bench CSV; the text table and summary are written next to it

        Returns:
            BenchReport
        """
        scenarios = [self.prepare_scenario(s) for s in load_corpus(corpus_dir)]
        rows: List[Dict] = []
        for scenario in scenarios:
            for planner_id in planners:
                logger.info(f"====== {scenario.name} / {planner_id} ======")
                result = self._run(scenario, planner_id, library_path, net_path)
                rows.append(bench_row(scenario.name, result))

        baseline = 'iagt_rs' if 'iagt_rs' in planners else planners[-1]
        report = build_report(rows, planner=planners[0], baseline=baseline)
        ensure_directory_exists(os.path.dirname(out_path))
        save_bench_csv(report, out_path)
        stem = _stem(out_path)
        with open(f"{stem}.txt", 'w', encoding='utf-8') as f:
            f.write(report.to_text() + "\n")
        save_results(report.summary(), f"{stem}.summary.json")
        return report

    def plot(self, scenario_path: str, result_path: Optional[str], out_path: str) -> str:
        scenario = load_scenario(scenario_path)
        result = PlanResult.from_dict(load_json_data(result_path)) if result_path else None
        return plot_plan(scenario, result, out_path, tree=result.tree if result is not None else None)
