#!/usr/bin/env python3
"""
CLI for the adiabatic factorization toolkit
"""
import argparse
import logging
import sys
import time
from typing import Dict, List, Optional, Sequence

from config import Config
from factorization_pipeline import FactorizationPipeline
from modules.config_manager import ConfigManager, RunConfig, replay_snapshot
from modules.logger import LogLevel, PipelineLogger
from modules.sac_agent import REWARD_TYPES
from modules.sac_trainer import TRANSFER_MODES


def parse_span(text: str) -> List[int]:
    """'49..633' -> [49, 633]"""
    try:
        start, stop = (int(part) for part in text.split('..'))
    except ValueError:
        raise argparse.ArgumentTypeError(f"range must look like 49..633, got '{text}'")
    if start > stop:
        raise argparse.ArgumentTypeError(f"empty range {text}")
    return [start, stop]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Encode factorization as Ising problems, profile hardness and train AQC schedules'
    )
    parser.add_argument('--seed', type=int, help='Master seed (default: AQC_SEED or 20220101)')
    parser.add_argument('--out', help='Output directory (default: AQC_OUTPUT_DIR or output/)')
    parser.add_argument('--workers', type=int, help='Parallel workers for SA runs and evolutions')
    parser.add_argument('--config', help='JSON config file (see templates/run_config.json)')
    parser.add_argument('--replay', help='Rerun a saved <command>_config.json snapshot')
    parser.add_argument('--quiet', action='store_true', help='No console echo of session events')

    sub = parser.add_subparsers(dest='command')

    encode = sub.add_parser('encode', help='Write instance JSON files and class manifests')
    encode.add_argument('--range', dest='span', type=parse_span, help='Inclusive N range, e.g. 49..633')
    encode.add_argument('--n', dest='numbers', type=int, nargs='+', help='Explicit N values')
    encode.add_argument('--qubits', type=int, help='Keep only the class with this qubit count')
    encode.add_argument('--width', dest='encoder.block_width', type=int, help='Block width W')
    encode.add_argument('--all-odd', dest='encoder.semiprimes_only', action='store_const', const=False,
                        help='Admit odd composites with more than two prime factors')
    encode.add_argument('--coupler-text', action='store_true', default=None,
                        help='Also write the flat "i j value" coupler list')

    profile = sub.add_parser('profile', help='Simulated annealing hardness profile')
    profile.add_argument('--qubits', type=int, required=True)
    profile.add_argument('--runs', dest='hardness.runs', type=int, help='Independent SA runs per instance')
    profile.add_argument('--beta0', dest='hardness.beta0', type=float)
    profile.add_argument('--j0-cap', dest='hardness.j0_cap', type=int)

    calibrate = sub.add_parser('calibrate', help='Find T(n) for a qubit class')
    calibrate.add_argument('--qubits', type=int, required=True)
    calibrate.add_argument('--p-th', dest='dynamics.p_th', type=float)

    classify = sub.add_parser('classify', help='Split a class into easy and hard instances')
    classify.add_argument('--qubits', type=int, required=True)
    classify.add_argument('--p-th', dest='dynamics.p_th', type=float)
    classify.add_argument('--T', type=float, help='Evolution time (default: calibrated T)')

    train = sub.add_parser('train', help='Train a SAC agent on the hard set')
    train.add_argument('--qubits', type=int, required=True)
    train.add_argument('--reward', choices=REWARD_TYPES)
    train.add_argument('--episodes', type=int)

    transfer = sub.add_parser('transfer', help='Warm-start training from another checkpoint')
    transfer.add_argument('--from', dest='source', required=True, help='Source checkpoint JSON')
    transfer.add_argument('--mode', choices=TRANSFER_MODES, default='both')
    transfer.add_argument('--qubits', type=int, required=True)
    transfer.add_argument('--reward', choices=REWARD_TYPES)
    transfer.add_argument('--episodes', type=int)

    evaluate = sub.add_parser('evaluate', help='Success probabilities for a schedule')
    evaluate.add_argument('--qubits', type=int, required=True)
    evaluate.add_argument('--schedule', default=None, help="'linear', 'quadratic' or a schedule JSON file")
    evaluate.add_argument('--hard-only', action='store_true', default=None)
    evaluate.add_argument('--T', type=float, help='Evolution time (default: calibrated T)')
    evaluate.add_argument('--bins', type=int)
    evaluate.add_argument('--compare-rewards', dest='compare', nargs='+', metavar='RUN_DIR',
                          help='Trained run directories to compare on the same instances')
    return parser


GLOBAL_FLAGS = ('seed', 'out', 'workers', 'config', 'replay', 'quiet', 'command')


def overrides_from_args(args: argparse.Namespace) -> Dict:
    values = dict(vars(args))
    overrides = {k: values[k] for k in ('seed', 'out', 'workers')}
    overrides.update({k: v for k, v in values.items() if k not in GLOBAL_FLAGS})
    return overrides


def resolve_run_config(args: argparse.Namespace) -> RunConfig:
    if args.replay:
        return replay_snapshot(args.replay)
    return ConfigManager(args.config).resolve(args.command, overrides_from_args(args))


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main CLI entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command and not args.replay:
        parser.print_help()
        return 2

    logging.basicConfig(level=getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO),
                        format='%(asctime)s | %(levelname)-8s | %(name)s | %(message)s')

    try:
        rc = resolve_run_config(args)
    except (ValueError, FileNotFoundError) as e:
        print(f"✗ {e}", file=sys.stderr)
        return 1

    Config.create_directories(rc.output_dir)
    session = PipelineLogger(f"{rc.command}_{int(time.time())}", log_root=rc.output_dir / 'logs',
                             console=not args.quiet)
    try:
        snapshot = rc.save_snapshot()
        session.log(LogLevel.VERBOSE, "Resolved config", {'snapshot': str(snapshot), 'seed': rc.seed})
        result = FactorizationPipeline(rc, session).run()
        session.complete_pipeline({'artifacts': [str(snapshot)], 'result': result})
        return 0
    except (ValueError, RuntimeError, FileNotFoundError) as e:
        session.fail_stage(rc.command, f"{type(e).__name__}: {e}")
        return 1
    finally:
        session.close()


if __name__ == "__main__":
    sys.exit(main())
