"""
Trailer Planner - Main Entry Point

Commands:
1. gen-mps       solve the lattice boundary-value problems into a motion-primitive library
2. gen-costdata  solve sampled obstacle-free problems into a cost-to-go dataset
3. train         fit the cost-to-go network
4. plan          plan one scenario with DE-AGT or a baseline
5. bench         run planners over a scenario corpus and compare them
6. plot          render a scenario and plan to SVG
"""

import os
import sys

# Add project root to path for imports
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from src.trailer_planner.config.logging_config import parse_level, setup_logging
from src.trailer_planner.config.settings import load_config_overrides, load_settings
from src.trailer_planner.errors import TrailerPlannerError
from src.trailer_planner.pipeline import PlanningPipeline
from src.trailer_planner.utils.cli_utils import display_summary, parse_args

# Setup basic logging
logger = setup_logging('TrailerPlanner')


def main(argv=None) -> int:
    """Main entry point for the trailer planner."""
    args = parse_args(argv)
    try:
        settings = load_settings()
        logger.setLevel(parse_level(args.log_level or settings.log_level))
        pipeline = PlanningPipeline(settings, load_config_overrides(args.config), seed=args.seed,
                                    threads=args.threads, time_cap_s=args.time_cap_s)

        if args.command == 'gen-mps':
            result = pipeline.gen_mps(args.out)
        elif args.command == 'gen-costdata':
            result = pipeline.gen_costdata(args.out)
        elif args.command == 'train':
            result = pipeline.train(args.dataset, args.out)
        elif args.command == 'plan':
            result = pipeline.plan(args.scenario, args.planner, args.out, args.library, args.net, args.dump_tree)
        elif args.command == 'bench':
            result = pipeline.bench(args.corpus, args.planners, args.out, args.library, args.net)
        else:
            result = pipeline.plot(args.scenario, args.result, args.out)

        display_summary(args.command, result, args.out)
        if args.command == 'plan' and not result.success:
            return 2
        return 0

    except KeyboardInterrupt:
        print("\nProcess interrupted by user. Exiting gracefully...")
        return 0
    except (TrailerPlannerError, FileNotFoundError, ValueError) as e:
        logger.error(f"Error in main execution: {str(e)}")
        print(f"\nError: {str(e)}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
