#!/usr/bin/env python3
"""Run the desk-scale hybrid sim-and-real demo and print its report.

Example:
    python scripts/run_hysr.py --duration 2.0 --stats /tmp/hysr_stats.txt
"""

import argparse

from synchro80 import run_hysr_demo


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--duration", type=float, default=2.0, help="seconds of env time")
    parser.add_argument("--real-hz", type=float, default=500.0)
    parser.add_argument("--env-hz", type=float, default=100.0)
    parser.add_argument("--sim-steps", type=int, default=5,
                        help="simulator iterations per env step")
    parser.add_argument("--ndof", type=int, default=2)
    parser.add_argument("--lockstep", action="store_true",
                        help="drive the real side in bursting mode too (bit-reproducible)")
    parser.add_argument("--no-sim", action="store_true", help="baseline run without the simulator")
    parser.add_argument("--stats", default=None, help="write key=value stats to this file")
    args = parser.parse_args()

    report = run_hysr_demo(
        args.duration,
        real_hz=args.real_hz,
        env_hz=args.env_hz,
        sim_steps_per_env_step=args.sim_steps,
        ndof=args.ndof,
        enable_sim=not args.no_sim,
        lockstep=args.lockstep,
    )
    print(report.summary_text())
    if args.stats:
        report.write_stats(args.stats)
        print(f"stats written to {args.stats}")


if __name__ == "__main__":
    main()
