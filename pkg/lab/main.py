#!/usr/bin/env python3
"""
Main entry point for the Novikov peakon lab.

Usage:
    python main.py simulate <config> [--out DIR] [--seed N] [--quiet]
    python main.py verify-identities <config> [--out DIR] [--seed N] [--quiet]
    python main.py stability-sweep <config> [--out DIR] [--seed N] [--quiet]
    python main.py train-experiment <config> [--out DIR] [--seed N] [--quiet]
    python main.py check-weights <K>

Exit code is 0 only when every enabled assertion passed.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

# lab/ for shared and batch, the repository root for novikov
current_dir = Path(__file__).parent
sys.path.insert(0, str(current_dir))
sys.path.insert(0, str(current_dir.parent))

import numpy as np  # noqa: E402

from batch.runner import run  # noqa: E402
from novikov.diagnostics.weights import build_weight, partition_phi  # noqa: E402
from novikov.grid.grid_field import Grid  # noqa: E402
from shared.run_config import ConfigError, parse_config  # noqa: E402

# experiment each run subcommand expects in its config
COMMANDS = {
    "simulate": ("simulate", "🌊", "Running simulation"),
    "verify-identities": ("identities", "🧮", "Verifying identities"),
    "stability-sweep": ("stability-sweep", "📈", "Running stability sweep"),
    "train-experiment": ("train", "🚂", "Running train experiment"),
}

# two peakons at -12.5 and 12.5, split at their midpoint
ACCEPTANCE_TRAIN_GRID = Grid(-40.0, 80.0, 6145)
ACCEPTANCE_TRAIN_SPLIT = (0.0,)


def check_weights(K):
    """Print the weight checks and the partition sum on the acceptance geometry"""
    print(f"⚖️  Checking weight family for K={K:g}...")
    wf = build_weight(K)
    check = wf.check
    samples = wf.psi_samples
    print(f"   samples: {samples.grid.n} on [-1, 1], min psi' {float(np.min(samples.slope)):.3e}")
    print(f"   monotone: {check.monotone}")
    print(f"   seams continuous: {check.seams_continuous}")
    print(f"   max |psi'''/psi'|: {check.ratio:.3f} (ok: {check.ratio_ok})")
    print(f"   ratio < K^2: {check.virial_margin}")

    phi = partition_phi(wf, ACCEPTANCE_TRAIN_SPLIT, ACCEPTANCE_TRAIN_GRID)
    total = np.sum([p.values for p in phi], axis=0)
    partition_error = float(np.max(np.abs(total - 1.0)))
    print(f"   partition sum error: {partition_error:.3e}")

    success = check.monotone and check.seams_continuous and check.ratio_ok and partition_error <= 1e-12
    print("✅ Weight family OK" if success else "❌ Weight family check failed")
    return success


def run_experiment(args):
    experiment, icon, title = COMMANDS[args.command]
    config = parse_config(args.config)
    if config.experiment != experiment:
        print(f"❌ {args.config} is a '{config.experiment}' config; {args.command} needs '{experiment}'")
        return False
    if args.seed is not None:
        config = config.with_seed(args.seed)
    if args.out:
        config = replace(config, output=replace(config.output, directory=args.out))

    print(f"{icon} {title}...")
    print(f"   Config: {args.config}")
    print(f"   Seed: {config.seed}")

    output = run(config, silent=args.quiet)
    summary = output.summary
    print(f"   Output: {output.directory}")
    print(f"   Runtime: {summary.get('runtime_seconds', 0.0):.1f}s")
    if summary.get("failure"):
        failure = summary["failure"]
        print(f"💥 {failure['type']}: {failure['message']}")
    for item in summary.get("assertions", []):
        if not item["passed"]:
            print(f"   ✗ {item['name']}: {item['value']} > {item['threshold']}")

    print("✅ All assertions passed" if output.passed else "❌ Run failed")
    return output.passed


def main():
    """Main entry point with argument parsing"""
    parser = argparse.ArgumentParser(description="Novikov Peakon Lab")
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    for name, (experiment, _, title) in COMMANDS.items():
        run_parser = subparsers.add_parser(name, help=f"{title} ({experiment} config)")
        run_parser.add_argument("config", help="YAML run config")
        run_parser.add_argument("--out", help="Output directory (overrides the config)")
        run_parser.add_argument("--seed", type=int, help="Random seed (overrides the config)")
        run_parser.add_argument("--quiet", action="store_true", help="Silence the run log")

    weights_parser = subparsers.add_parser("check-weights", help="Verify the weight family for a scale K")
    weights_parser.add_argument("K", type=float, help="Weight scale, at least 4")

    args = parser.parse_args()

    try:
        if args.command in COMMANDS:
            success = run_experiment(args)
            return 0 if success else 1

        elif args.command == "check-weights":
            success = check_weights(args.K)
            return 0 if success else 1

        else:
            parser.print_help()
            return 1

    except ConfigError as e:
        print(f"❌ Config error: {e}")
        return 1
    except KeyboardInterrupt:
        print("\n🛑 Operation cancelled")
        return 1
    except Exception as e:
        print(f"💥 Error: {e}")
        import traceback

        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
