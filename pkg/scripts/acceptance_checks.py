"""
Statistical acceptance runs
Long-running checks with committed seeds: SA hardness ordering, integrator accuracy,
hard-set identification, SAC sanity, configuration gain and transfer advantage.

Usage:
    python scripts/acceptance_checks.py hardness
    python scripts/acceptance_checks.py all --workers 8
"""
import argparse
import logging
import statistics
import sys
from pathlib import Path

import numpy as np
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

sys.path.append(str(Path(__file__).parent.parent))

from config import Config
from modules.aqc_environment import AqcEnvironment, ToyBackend
from modules.checkpoint import Checkpoint
from modules.dynamics import (
    AqcMeasurement,
    EvolutionSpec,
    IntegratorSettings,
    calibrate_T,
    classify_instances,
    dense_reference_evolve,
    evolve_fixed,
    fidelity,
)
from modules.encoder import IsingHamiltonian, build_size_class, class_numbers
from modules.hardness import estimate_j0_star
from modules.sac_agent import SacConfig
from modules.sac_trainer import (
    SacTrainer,
    evaluate_schedule,
    measurements_to_plateau,
    measurements_to_reach,
    transfer_init,
)
from modules.schedule import Schedule

SEEDS = (20220101, 20220102, 20220103)
RANGE = (49, 633)
P_TH = 0.1

logger = logging.getLogger('acceptance')


def report(name: str, passed: bool, detail: str) -> bool:
    print(f"{'✓' if passed else '✗'} {name}: {detail}")
    return passed


def load_class(n: int):
    return build_size_class(class_numbers(*RANGE, n), n)


def check_hardness(workers: int) -> bool:
    """77 and 91 each exceed the class median mean-j0* by > 2 standard errors"""
    size_class = load_class(7)
    reports = {inst.N: estimate_j0_star(inst, size_class.norm_constant, runs=500, beta0=0.1,
                                        master_seed=SEEDS[0], workers=workers)
               for inst in size_class.instances}
    median = statistics.median(r.mean for r in reports.values())
    ok = all(reports[N].mean - median > 2 * reports[N].stderr for N in (77, 91))
    return report('SA hardness ordering', ok,
                  f"median {median:.1f}, 77: {reports[77].mean:.1f}±{reports[77].stderr:.1f}, "
                  f"91: {reports[91].mean:.1f}±{reports[91].stderr:.1f}")


def _aligned_error(state, reference) -> float:
    overlap = np.vdot(reference.amplitudes, state.amplitudes)
    return float(np.linalg.norm(state.amplitudes - overlap / abs(overlap) * reference.amplitudes))


def check_integrator() -> bool:
    """
    3-qubit dense reference, convergence order, norm drift, rescaling

    Every reference is a dense slice-wise propagator at 10x the resolution of the
    run it is compared with. Rescaling pairs (T, H) with (zeta T, H / zeta), i.e.
    normConstant and T multiplied by zeta together.
    """
    H = IsingHamiltonian(3, np.array([0.5, -0.75, 0.25]), {(0, 1): 1.0, (1, 2): -0.5, (0, 2): 0.25}, 0.0)
    spec = EvolutionSpec(H, [0], 1.0, Schedule.quadratic(), 2.0)
    split = evolve_fixed(spec, 4000)
    dense_ok = fidelity(dense_reference_evolve(spec, 40000), split) >= 1 - 1e-6

    reference = dense_reference_evolve(spec, 4000)
    e1 = _aligned_error(evolve_fixed(spec, 200), reference)
    e2 = _aligned_error(evolve_fixed(spec, 400), reference)
    order = float(np.log2(e1 / e2))
    order_ok = abs(order - 2.0) <= 0.3

    drift_ok = abs(split.norm() - 1.0) <= 1e-9
    base = evolve_fixed(spec, 2000)
    rescale_ok = all(
        fidelity(evolve_fixed(EvolutionSpec(H, [0], zeta, Schedule.quadratic(), 2.0 * zeta), 2000), base)
        >= 1 - 1e-8
        for zeta in (0.5, 2.0)
    )
    return report('Integrator correctness', dense_ok and order_ok and drift_ok and rescale_ok,
                  f"order {order:.2f}, dense {dense_ok}, drift {drift_ok}, rescale {rescale_ok}")


def check_hard_set(workers: int) -> bool:
    """77 and 91 are hard at calibrated T(7); T within 10^3..10^4"""
    size_class = load_class(7)
    calibration = calibrate_T(size_class, P_TH, workers=workers)
    split = classify_instances(size_class, calibration.T, P_TH, workers=workers)
    ok = {77, 91} <= set(split.hard) and 1e3 <= calibration.T <= 1e4
    return report('Hard-instance identification', ok, f"T={calibration.T:.1f}, hard={split.hard}")


def check_toy_sac() -> bool:
    """Best toy reward > -1e-2 within 200 episodes for every seed"""
    target = [0.15, 0.05, 0.0, 0.0, 0.0, 0.0]
    cfg = SacConfig.from_dict({'reward_type': 'R5', 'reward_scale': 1.0, 'episodes': 200})
    best = []
    for seed in SEEDS:
        trainer = SacTrainer(AqcEnvironment(ToyBackend(target), cfg), cfg, master_seed=seed)
        best.append(trainer.train().best_reward)
    return report('SAC toy sanity', all(r > -1e-2 for r in best), f"best rewards {best}")


def train_class(n: int, seed: int, reward: str, episodes: int, workers: int, agent=None, b0=None):
    size_class = load_class(n)
    T = calibrate_T(size_class, P_TH, workers=workers).T
    split = classify_instances(size_class, T, P_TH, workers=workers)
    hard = [size_class.by_number(N) for N in split.hard]
    cfg = SacConfig.from_dict({'reward_type': reward, 'episodes': episodes})
    backend = AqcMeasurement(hard, size_class.norm_constant, T, IntegratorSettings(), workers)
    trainer = SacTrainer(AqcEnvironment(backend, cfg), cfg, master_seed=seed, agent=agent, b0=b0)
    return trainer, trainer.train(), size_class, hard, T


def check_gain(episodes: int, workers: int) -> bool:
    """Trained R1 schedule lifts the hard-set minimum above P_th and above the quadratic baseline"""
    outcomes = []
    for seed in SEEDS:
        _, result, size_class, hard, T = train_class(5, seed, 'R1', episodes, workers)
        trained = evaluate_schedule(result.best_b, hard, size_class.norm_constant, T, workers=workers)
        baseline = evaluate_schedule(Schedule.quadratic(), hard, size_class.norm_constant, T, workers=workers)
        outcomes.append((min(trained.values()), min(baseline.values()),
                         measurements_to_plateau(result.rewards())))
    ok = any(t >= P_TH and t > b and k <= 1600 for t, b, k in outcomes)

    spread = {}
    for reward in ('R1', 'R2', 'R5'):
        _, result, size_class, _, T = train_class(5, SEEDS[0], reward, episodes, workers)
        probs = list(evaluate_schedule(result.best_b, size_class.instances, size_class.norm_constant, T,
                                       workers=workers).values())
        spread[reward] = (float(np.mean(probs)), float(np.std(probs)))
    ordering_ok = spread['R1'][1] < spread['R2'][1] and spread['R5'][0] < spread['R1'][0]
    return report('Configuration gain', ok and ordering_ok,
                  f"(trained min, quadratic min, plateau index) {outcomes}; (mean, std) {spread}")


def check_transfer(episodes: int, workers: int) -> bool:
    """
    5 -> 7 transfer (mode both) reaches the fresh plateau sooner; mode actor does not

    Best of 3 seeds both ways: mode both passes if any seed beats fresh training,
    mode actor counts as non-superior if at least one seed fails to beat it.
    """
    wins, actor_wins = [], []
    for seed in SEEDS:
        source_trainer, *_ = train_class(5, seed, 'R1', episodes, workers)
        source = Checkpoint.capture(source_trainer, 5)
        _, fresh, *_ = train_class(7, seed, 'R1', episodes, workers)
        plateau = float(np.mean(fresh.rewards()[-max(1, len(fresh.trace) // 10):]))
        fresh_k = measurements_to_reach(fresh.rewards(), plateau) or len(fresh.trace) + 1

        cfg = SacConfig.from_dict({'reward_type': 'R1', 'episodes': episodes})
        steps = {}
        for mode in ('both', 'actor'):
            agent, b0 = transfer_init(source, mode, cfg, master_seed=seed)
            _, result, *_ = train_class(7, seed, 'R1', episodes, workers, agent=agent, b0=b0)
            steps[mode] = measurements_to_reach(result.rewards(), plateau) or len(result.trace) + 1
        wins.append(steps['both'] < fresh_k)
        actor_wins.append(steps['actor'] < fresh_k)
        print(f"  seed {seed}: fresh {fresh_k}, both {steps['both']}, actor {steps['actor']}")
    return report('Transfer advantage', any(wins) and not all(actor_wins),
                  f"both faster {wins}, actor faster {actor_wins}")


def main() -> int:
    parser = argparse.ArgumentParser(description='Long-running acceptance checks')
    parser.add_argument('check', choices=['hardness', 'integrator', 'hardset', 'toy', 'gain', 'transfer', 'all'])
    parser.add_argument('--workers', type=int, default=Config.WORKERS)
    parser.add_argument('--episodes', type=int, default=Config.SAC_DEFAULTS['episodes'])
    args = parser.parse_args()
    logging.basicConfig(level=Config.LOG_LEVEL, format='%(asctime)s | %(levelname)-8s | %(message)s')

    checks = {
        'hardness': lambda: check_hardness(args.workers),
        'integrator': check_integrator,
        'hardset': lambda: check_hard_set(args.workers),
        'toy': check_toy_sac,
        'gain': lambda: check_gain(args.episodes, args.workers),
        'transfer': lambda: check_transfer(args.episodes, args.workers),
    }
    selected = list(checks) if args.check == 'all' else [args.check]
    results = [checks[name]() for name in selected]
    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
