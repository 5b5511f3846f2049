from dataclasses import dataclass, field
from typing import Dict, List, Optional
import logging

import numpy as np
import pandas as pd
from scipy.stats import gmean

logger = logging.getLogger('TrailerPlanner')

BENCH_COLUMNS = ['case', 'planner', 'time_s', 'mps_explored', 'path_len_m',
                 'err_x', 'err_y', 'err_t0', 'err_x4', 'err_x5', 'err_x6', 'status']
ERROR_COLUMNS = BENCH_COLUMNS[5:11]
NOT_AVAILABLE = 'N/A'


def bench_row(case: str, result) -> Dict:
    """
    One benchmark row for a PlanResult

    Args:
        case: Scenario name
        result: PlanResult of one planner on that scenario

    Returns:
        Row dictionary; failed or timed-out plans keep their metrics blank and status N/A
    """
    row = {'case': case, 'planner': result.planner, 'time_s': float(result.wall_time_s),
           'mps_explored': int(result.mps_explored)}
    if result.success:
        row['path_len_m'] = float(result.path_length)
        row.update({col: float(v) for col, v in zip(ERROR_COLUMNS, result.terminal_error)})
        row['status'] = 'ok'
    else:
        row['path_len_m'] = np.nan
        row.update({col: np.nan for col in ERROR_COLUMNS})
        row['status'] = NOT_AVAILABLE
    return row


@dataclass
class BenchReport:
    """
    Benchmark table plus the DE-AGT versus baseline summary

    `speedup` maps each mutually solved case to baseline time / DE-AGT time.
    """
    frame: pd.DataFrame
    speedup: Dict[str, float] = field(default_factory=dict)
    geometric_mean_speedup: Optional[float] = None
    mps_win_rate: Optional[float] = None
    mps_tie_rate: Optional[float] = None
    mutually_solved: int = 0

    def summary(self) -> Dict:
        return {
            'cases': int(self.frame['case'].nunique()) if len(self.frame) else 0,
            'geometric_mean_speedup': self.geometric_mean_speedup,
            'mps_tie_rate': self.mps_tie_rate,
            'mps_win_rate': self.mps_win_rate,
            'mutually_solved': self.mutually_solved,
            'rows': int(len(self.frame)),
            'speedup': self.speedup,
        }

    def to_text(self) -> str:
        lines = [self.frame.to_string(index=False, na_rep=NOT_AVAILABLE)]
        if self.geometric_mean_speedup is not None:
            lines.append(f"Geometric-mean speedup over {self.mutually_solved} mutually solved case(s): "
                         f"{self.geometric_mean_speedup:.2f}x")
        if self.mps_win_rate is not None:
            lines.append(f"Fewer MPs explored than the baseline on {self.mps_win_rate:.0%} of mutually solved cases, "
                         f"as many on {self.mps_tie_rate or 0.0:.0%}")
        return '\n'.join(lines)


def build_report(rows: List[Dict], planner: str = 'deagt', baseline: str = 'iagt_rs') -> BenchReport:
    """
    Assemble the benchmark table and compare `planner` against `baseline`

    Args:
        rows: Rows produced by bench_row
        planner: Planner id whose speedup is reported
        baseline: Planner id it is compared against

    Returns:
        BenchReport
    """
    frame = pd.DataFrame(rows, columns=BENCH_COLUMNS)
    report = BenchReport(frame)
    if frame.empty:
        return report

    solved = frame[frame['status'] != NOT_AVAILABLE]
    ours = solved[solved['planner'] == planner].set_index('case')
    theirs = solved[solved['planner'] == baseline].set_index('case')
    common = [case for case in ours.index if case in theirs.index]
    report.mutually_solved = len(common)
    if not common:
        logger.warning(f"No case solved by both {planner} and {baseline}; no speedup reported")
        return report

    ratios = {case: float(theirs.at[case, 'time_s']) / max(float(ours.at[case, 'time_s']), 1e-9) for case in common}
    report.speedup = ratios
    report.geometric_mean_speedup = float(gmean(list(ratios.values())))
    wins = sum(1 for case in common if ours.at[case, 'mps_explored'] < theirs.at[case, 'mps_explored'])
    ties = sum(1 for case in common if ours.at[case, 'mps_explored'] == theirs.at[case, 'mps_explored'])
    report.mps_win_rate = wins / len(common)
    report.mps_tie_rate = ties / len(common)
    logger.info(f"Benchmark: {len(common)} mutually solved, geometric-mean speedup "
                f"{report.geometric_mean_speedup:.2f}x, MP win rate {report.mps_win_rate:.0%}")
    return report


def save_bench_csv(report: BenchReport, file_path: str) -> None:
    report.frame.to_csv(file_path, index=False, na_rep=NOT_AVAILABLE, float_format='%.6g')
