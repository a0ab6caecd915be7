#!/usr/bin/env python3
"""
Exploratory coarse runs over the focusing suite.

For every sign-changing initial datum this reports whether the L-infinity
cap was reached, when, and where the slope monitors attained their minimum.
Use it to retune amplitudes, widths or caps in src/verify.py:focusing_suite.
"""

import os
import sys
import argparse
from typing import Optional

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from src.blowup import case1_observer, case2_observer
from src.dynamics import ReductionKind, run_simulation
from src.utils.errors import NumericalFailureError
from src.utils.logger import setup_logger
from src.verify import focusing_depth, focusing_suite


def calibrate(quick: bool, t_end: Optional[float], logger) -> pd.DataFrame:
    """Run each focusing datum once and tabulate the outcome."""
    rows = []
    for label, state, sim in focusing_suite(quick):
        if t_end is not None:
            sim = sim.model_copy(update={"t_end": t_end})
        observer = case2_observer if state.reduction is ReductionKind.CASE2 else case1_observer
        column = "case2_min_drift" if state.reduction is ReductionKind.CASE2 else "case1_min_uxv"
        try:
            result = run_simulation(state, sim, [observer], record_history=False, run_logger=logger)
        except NumericalFailureError as e:
            logger.warning(f"{label}: {e}")
            rows.append({"label": label, "termination": "numerical_failure"})
            continue
        values = result.series.column(column)
        times = result.series.times
        growth = np.nan
        if state.reduction is ReductionKind.CASE2:
            wronskian = result.series.column("case2_max_wronskian")
            growth = float(np.max(wronskian) / max(wronskian[0], np.finfo(float).tiny))
        rows.append({
            "label": label,
            "termination": result.termination.value,
            "final_time": result.state.time,
            "linf_final": result.state.linf(),
            "monitor_initial": values[0],
            "monitor_min": float(np.min(values)),
            "time_of_min": float(times[int(np.argmin(values))]),
            "depth": focusing_depth(values),
            "wronskian_growth": growth,
        })
    return pd.DataFrame(rows)


def main():
    parser = argparse.ArgumentParser(description="Calibrate the focusing suite with coarse runs")
    parser.add_argument('--quick', action='store_true', help='Coarser grid')
    parser.add_argument('--t-end', type=float, default=None, help="Horizon for each run (default: the family horizon)")
    parser.add_argument('--output', default='results/focusing_calibration.csv', help='CSV summary path')
    args = parser.parse_args()

    load_dotenv()
    logger = setup_logger("calibrate")

    print("🎯 Calibrating focusing suite...")
    table = calibrate(args.quick, args.t_end, logger)
    os.makedirs(os.path.dirname(args.output) or ".", exist_ok=True)
    table.to_csv(args.output, index=False, float_format="%.17g")
    print(table.to_string(index=False))
    print(f"✅ Summary saved to {args.output}")


if __name__ == "__main__":
    main()
