"""
Adiabatic Factorization Pipeline - Main Orchestrator
encode -> profile -> calibrate -> classify -> train / transfer -> evaluate
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from modules.aqc_environment import AqcEnvironment
from modules.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from modules.config_manager import RunConfig
from modules.dynamics import (
    AqcMeasurement,
    IntegratorSettings,
    SplitReport,
    calibrate_T,
    classify_instances,
    t_grid,
    write_evaluation_csv,
)
from modules.encoder import (
    EncodingError,
    SizeClass,
    build_size_class,
    choose_split,
    coupler_lines,
    export_instance,
    is_semiprime_instance,
)
from modules.hardness import estimate_j0_star, rank_hardness, write_hardness_csv, write_hardness_summary
from modules.logger import LogLevel, PipelineLogger
from modules.persistence import atomic_write_text, load_json, save_json, write_csv
from modules.sac_agent import SacConfig
from modules.sac_trainer import (
    SacTrainer,
    TrainingResult,
    evaluate_schedule,
    measurements_to_plateau,
    reward_summary,
    success_histogram,
    transfer_init,
    write_training_csv,
)
from modules.schedule import Schedule
from modules.utils import is_prime

logger = logging.getLogger(__name__)

HISTOGRAM_CSV_HEADER = ('bin_low', 'bin_high', 'count')
COMPARE_CSV_HEADER = ('run', 'bin_low', 'bin_high', 'count')


def admissibility(N: int, semiprimes_only: bool = True) -> Optional[str]:
    """Reason N cannot be encoded, or None"""
    if N % 2 == 0:
        return 'even'
    if N < 9:
        return 'too small'
    if is_prime(N):
        return 'prime'
    if semiprimes_only and not is_semiprime_instance(N):
        return 'not a semiprime'
    return None


class FactorizationPipeline:
    """Runs one CLI command against the output directory of a RunConfig"""

    def __init__(self, run_config: RunConfig, logger: Optional[PipelineLogger] = None):
        """
        Args:
            run_config: Resolved configuration (command, sections, seed, paths)
            logger: Optional PipelineLogger session for stage tracking
        """
        self.rc = run_config
        self.out = Path(run_config.output_dir)
        self.logger = logger
        self.settings = IntegratorSettings.from_dict(run_config.dynamics)

    def run(self) -> Dict:
        """Dispatch rc.command with rc.args"""
        method = getattr(self, self.rc.command, None)
        if method is None:
            raise ValueError(f"Unknown command '{self.rc.command}'")
        return method(**self.rc.args)

    # ------------------------------------------------------------------
    # Stage helpers
    # ------------------------------------------------------------------

    def _start(self, stage: str, total: Optional[int] = None):
        print("=" * 70)
        print(stage.upper())
        print("=" * 70)
        if self.logger:
            self.logger.start_stage(stage, total)

    def _progress(self, stage: str, done: int, total: int, message: Optional[str] = None):
        if self.logger:
            self.logger.update_stage_progress(stage, int(100 * done / max(total, 1)), message)

    def _complete(self, stage: str, result: Dict) -> Dict:
        if self.logger:
            self.logger.complete_stage(stage, result)
        return result

    def _note(self, level: LogLevel, message: str, data: Optional[Dict] = None):
        if self.logger:
            self.logger.log(level, message, data)
        else:
            print(message)

    # ------------------------------------------------------------------
    # Paths
    # ------------------------------------------------------------------

    def manifest_path(self, n: int) -> Path:
        return self.out / f"class_n{n}.json"

    def instance_path(self, n: int, N: int) -> Path:
        return self.out / 'instances' / f"n{n}" / f"N{N}.json"

    def calibration_path(self, n: int) -> Path:
        return self.out / f"calibration_n{n}.json"

    def split_path(self, n: int) -> Path:
        return self.out / f"split_n{n}.json"

    # ------------------------------------------------------------------
    # Loading
    # ------------------------------------------------------------------

    def load_class(self, n: int) -> SizeClass:
        """Re-encode the class listed in its manifest"""
        manifest = load_json(self.manifest_path(n))
        if manifest is None:
            raise ValueError(f"No manifest for the {n}-qubit class, run encode first")
        numbers = [entry['N'] for entry in manifest['instances']]
        size_class = build_size_class(numbers, n, manifest['W'], manifest.get('semiprimesOnly', True))
        if size_class.numbers() != numbers:
            raise ValueError(f"Manifest {self.manifest_path(n)} lists {numbers}, "
                             f"encoding gives {size_class.numbers()}")
        if size_class.norm_constant != manifest['normConstant']:
            raise ValueError(f"normConstant drifted: {manifest['normConstant']} vs {size_class.norm_constant}")
        if size_class.is_empty:
            raise ValueError(f"The {n}-qubit class is empty")
        return size_class

    def load_calibrated_t(self, n: int, T: Optional[float] = None) -> float:
        if T is not None:
            return float(T)
        calibration = load_json(self.calibration_path(n))
        if calibration is None:
            raise ValueError(f"No calibration for n={n}, run calibrate first or pass --T")
        return float(calibration['T'])

    def load_split(self, n: int) -> SplitReport:
        data = load_json(self.split_path(n))
        if data is None:
            raise ValueError(f"No split report for n={n}, run classify first")
        return SplitReport.from_dict(data)

    def hard_instances(self, n: int) -> Tuple[SizeClass, SplitReport, List]:
        size_class = self.load_class(n)
        split = self.load_split(n)
        if not split.hard:
            raise ValueError(f"Hard set for n={n} is empty at P_th={split.p_th}; nothing to train on")
        return size_class, split, [size_class.by_number(N) for N in split.hard]

    # ------------------------------------------------------------------
    # Commands
    # ------------------------------------------------------------------

    def encode(self, numbers: Optional[Sequence[int]] = None, span: Optional[Sequence[int]] = None,
               qubits: Optional[int] = None, coupler_text: bool = False) -> Dict:
        """
        Encode N values into per-instance JSON files and one manifest per qubit class

        Args:
            numbers: Explicit N list
            span: [start, stop] inclusive
            qubits: Keep only the class with this T_Q
            coupler_text: Also write the flat coupler listing
        """
        cfg = self.rc.encoder
        width = int(cfg['block_width'])
        semiprimes_only = bool(cfg.get('semiprimes_only', True))
        if numbers:
            candidates = sorted(set(int(N) for N in numbers))
        else:
            start, stop = span or (cfg['range_start'], cfg['range_stop'])
            candidates = list(range(int(start), int(stop) + 1))
        self._start('encode', len(candidates))

        skipped, table = [], []
        classes: Dict[int, List[int]] = {}
        for N in candidates:
            reason = admissibility(N, semiprimes_only)
            if reason is None:
                try:
                    split, layout = choose_split(N, width)
                except EncodingError as e:
                    reason = str(e)
            if reason is not None:
                # Ranges walk every integer; only explicit lists report evens
                if numbers or reason != 'even':
                    skipped.append({'N': N, 'reason': reason})
                continue
            table.append((N, split, layout.total_qubits))
            if qubits is None or layout.total_qubits == qubits:
                classes.setdefault(layout.total_qubits, []).append(N)

        if qubits is not None:
            classes.setdefault(qubits, [])

        print(f"\n{'N':>6}  {'L_p':>3}  {'L_q':>3}  {'T_Q':>4}")
        for N, split, n in table:
            print(f"{N:>6}  {split.l_p:>3}  {split.l_q:>3}  {n:>4}")
        if skipped:
            reasons: Dict[str, List[int]] = {}
            for entry in skipped:
                reasons.setdefault(entry['reason'], []).append(entry['N'])
            self._note(LogLevel.WARNING, f"Skipped {len(skipped)} values of N", reasons)

        manifests = {}
        for n in sorted(classes):
            size_class = build_size_class(classes[n], n, width, semiprimes_only)
            entries = []
            for inst in size_class.instances:
                path = self.instance_path(n, inst.N)
                save_json(export_instance(inst, size_class.norm_constant), path)
                if coupler_text:
                    atomic_write_text(coupler_lines(inst), path.with_suffix('.couplers.txt'))
                entries.append({'N': inst.N, 'split': inst.split.to_dict(),
                                'file': str(path.relative_to(self.out))})
            manifest = {
                'n': n,
                'W': width,
                'semiprimesOnly': semiprimes_only,
                'normConstant': size_class.norm_constant,
                'instances': entries,
                'skipped': skipped,
            }
            save_json(manifest, self.manifest_path(n))
            manifests[n] = str(self.manifest_path(n))
            print(f"✓ {n}-qubit class: {size_class.numbers()} (normConstant {size_class.norm_constant:g})")

        return self._complete('encode', {
            'classes': {str(n): classes[n] for n in sorted(classes)},
            'manifests': manifests,
            'skipped': skipped,
        })

    def profile(self, qubits: int) -> Dict:
        """SA hardness profile: j0* per run for every class member"""
        cfg = self.rc.hardness
        size_class = self.load_class(qubits)
        self._start('profile', len(size_class.instances))

        reports = {}
        for k, inst in enumerate(size_class.instances):
            reports[inst.N] = estimate_j0_star(
                inst, size_class.norm_constant,
                runs=int(cfg['runs']),
                beta0=float(cfg['beta0']),
                master_seed=self.rc.seed,
                j0_cap=int(cfg['j0_cap']),
                workers=self.rc.workers,
                tolerance=float(cfg['success_tolerance']),
            )
            self._progress('profile', k + 1, len(size_class.instances), f"N={inst.N}")
        ranking = rank_hardness(size_class, reports)

        csv_path = self.out / f"hardness_n{qubits}.csv"
        summary_path = self.out / f"hardness_n{qubits}_summary.json"
        write_hardness_csv(csv_path, list(reports.values()))
        write_hardness_summary(summary_path, ranking, reports, float(cfg['beta0']), int(cfg['j0_cap']),
                               seed=self.rc.seed)

        print(f"\nHardness ranking (mean j0*): "
              + ", ".join(f"{N}:{reports[N].mean:.1f}" for N in ranking))
        censored = sum(r.censored_runs for r in reports.values())
        if censored:
            self._note(LogLevel.WARNING, f"{censored} runs hit j0_cap", {'j0_cap': int(cfg['j0_cap'])})
        return self._complete('profile', {
            'ranking': ranking,
            'csv': str(csv_path),
            'summary': str(summary_path),
            'censored_runs': censored,
        })

    def calibrate(self, qubits: int) -> Dict:
        """Smallest grid T where the class mean success reaches P_th"""
        cfg = self.rc.dynamics
        size_class = self.load_class(qubits)
        grid = t_grid(float(cfg['t_start']), float(cfg['t_ratio']), int(cfg['t_grid_size']))
        self._start('calibrate', len(grid))

        result = calibrate_T(size_class, float(cfg['p_th']), grid, self.settings, self.rc.workers)
        path = self.calibration_path(qubits)
        save_json(result.to_dict(), path)
        print(f"\n✓ T({qubits}) = {result.T:.4f}, mean success {result.mean_success:.4f}")
        return self._complete('calibrate', {'T': result.T, 'mean_success': result.mean_success,
                                            'file': str(path)})

    def classify(self, qubits: int, T: Optional[float] = None) -> Dict:
        """Easy / hard split at the calibrated T"""
        size_class = self.load_class(qubits)
        T = self.load_calibrated_t(qubits, T)
        p_th = float(self.rc.dynamics['p_th'])
        self._start('classify', len(size_class.instances))

        split = classify_instances(size_class, T, p_th, self.settings, self.rc.workers)
        path = self.split_path(qubits)
        save_json(split.to_dict(), path)
        print(f"\n✓ easy: {split.easy}\n✓ hard: {split.hard}")
        if not split.hard:
            self._note(LogLevel.WARNING, f"Hard set is empty at P_th={p_th}; training will refuse this class")
        return self._complete('classify', {'easy': split.easy, 'hard': split.hard, 'file': str(path)})

    def _sac_config(self, reward: Optional[str], episodes: Optional[int]) -> SacConfig:
        values = dict(self.rc.sac)
        if reward:
            values['reward_type'] = reward
        if episodes:
            values['episodes'] = int(episodes)
        return SacConfig.from_dict(values)

    def _write_training(self, run_dir: Path, trainer: SacTrainer, result: TrainingResult,
                        qubits: int, extra: Dict) -> Dict:
        save_checkpoint(Checkpoint.capture(trainer, qubits), run_dir / 'checkpoint.json')
        save_json(Schedule.fourier(result.best_b).to_dict(), run_dir / 'schedule.json')
        write_training_csv(run_dir / 'training.csv', result.trace)
        rewards = result.rewards()
        summary = {
            'qubits': qubits,
            'reward_type': trainer.cfg.reward_type,
            'best_reward': result.best_reward,
            'best_b': [float(v) for v in result.best_b],
            'measurements': len(rewards),
            'measurements_to_plateau': measurements_to_plateau(rewards) if rewards else None,
            'resample_exhaustions': result.resample_exhaustions,
        }
        summary.update(extra)
        save_json(summary, run_dir / 'summary.json')
        print(f"\n✓ best reward {result.best_reward:.5f}, schedule saved to {run_dir / 'schedule.json'}")
        return summary

    def _train_loop(self, stage: str, trainer: SacTrainer) -> TrainingResult:
        episodes = trainer.cfg.episodes
        step = max(1, episodes // 10)

        def progress(done: int, total: int):
            if done % step == 0 or done == total:
                self._progress(stage, done, total, f"best reward {trainer.best_reward:.5f}")

        return trainer.train(episodes, progress)

    def train(self, qubits: int, reward: Optional[str] = None, episodes: Optional[int] = None) -> Dict:
        """SAC training on the hard set of a class"""
        size_class, split, instances = self.hard_instances(qubits)
        cfg = self._sac_config(reward, episodes)
        self._start('train', cfg.episodes)

        backend = AqcMeasurement(instances, size_class.norm_constant, split.T, self.settings, self.rc.workers)
        trainer = SacTrainer(AqcEnvironment(backend, cfg), cfg, master_seed=self.rc.seed)
        result = self._train_loop('train', trainer)

        run_dir = self.out / f"train_n{qubits}_{cfg.reward_type}"
        summary = self._write_training(run_dir, trainer, result, qubits,
                                       {'T': split.T, 'hard': split.hard, 'evolutions': backend.calls})
        return self._complete('train', {'run_dir': str(run_dir), 'best_reward': summary['best_reward']})

    def transfer(self, qubits: int, source: str, mode: str = 'both', reward: Optional[str] = None,
                 episodes: Optional[int] = None) -> Dict:
        """Warm-started training on a new class from another checkpoint"""
        size_class, split, instances = self.hard_instances(qubits)
        cfg = self._sac_config(reward, episodes)
        checkpoint = load_checkpoint(source)
        self._start('transfer', cfg.episodes)

        agent, b0 = transfer_init(checkpoint, mode, cfg, master_seed=self.rc.seed)
        backend = AqcMeasurement(instances, size_class.norm_constant, split.T, self.settings, self.rc.workers)
        trainer = SacTrainer(AqcEnvironment(backend, cfg), cfg, master_seed=self.rc.seed, agent=agent, b0=b0)
        result = self._train_loop('transfer', trainer)

        run_dir = self.out / f"transfer_n{qubits}_{mode}"
        summary = self._write_training(run_dir, trainer, result, qubits, {
            'T': split.T,
            'hard': split.hard,
            'transfer_mode': mode,
            'source': str(source),
            'source_qubits': checkpoint.qubits,
        })
        return self._complete('transfer', {'run_dir': str(run_dir), 'best_reward': summary['best_reward']})

    def _resolve_schedule(self, schedule: str) -> Tuple[str, Schedule]:
        if schedule in ('linear', 'quadratic'):
            return schedule, getattr(Schedule, schedule)()
        data = load_json(schedule)
        if data is None:
            raise ValueError(f"Schedule must be 'linear', 'quadratic' or a schedule JSON file, got '{schedule}'")
        return Path(schedule).parent.name or Path(schedule).stem, Schedule.from_dict(data)

    def evaluate(self, qubits: int, schedule: str = 'linear', hard_only: bool = False,
                 T: Optional[float] = None, compare: Optional[Sequence[str]] = None,
                 bins: int = 10) -> Dict:
        """Per-instance success table and histogram data for one schedule or several trained runs"""
        size_class = self.load_class(qubits)
        T = self.load_calibrated_t(qubits, T)
        instances = size_class.instances
        if hard_only:
            instances = [size_class.by_number(N) for N in self.load_split(qubits).hard]
            if not instances:
                raise ValueError(f"Hard set for n={qubits} is empty")
        self._start('evaluate', len(compare) if compare else 1)

        if compare:
            return self._complete('evaluate', self._compare_rewards(qubits, instances, size_class, T,
                                                                    compare, bins))

        label, sched = self._resolve_schedule(schedule)
        success = evaluate_schedule(sched, instances, size_class.norm_constant, T,
                                    self.settings, self.rc.workers)
        rows = [(N, qubits, T, sched.form, p) for N, p in sorted(success.items())]
        evaluation_path = self.out / f"evaluation_n{qubits}_{label}.csv"
        write_evaluation_csv(evaluation_path, rows)

        probs = [p for _, p in sorted(success.items())]
        counts, edges = success_histogram(probs, bins)
        histogram_path = self.out / f"histogram_n{qubits}_{label}.csv"
        write_csv(histogram_path, HISTOGRAM_CSV_HEADER,
                  [(edges[k], edges[k + 1], counts[k]) for k in range(len(counts))])
        save_json({'schedule': sched.to_dict(), 'T': T, 'stats': reward_summary(probs)},
                  self.out / f"evaluation_n{qubits}_{label}.json")

        for N, p in sorted(success.items()):
            print(f"  N={N:>5}  P={p:.5f}")
        return self._complete('evaluate', {'csv': str(evaluation_path), 'histogram': str(histogram_path),
                                           **reward_summary(probs)})

    def _compare_rewards(self, qubits: int, instances, size_class: SizeClass, T: float,
                         run_dirs: Sequence[str], bins: int) -> Dict:
        """Evaluate each run's schedule.json on the same instances"""
        rows, stats = [], {}
        for k, run_dir in enumerate(run_dirs):
            run_dir = Path(run_dir)
            schedule_data = load_json(run_dir / 'schedule.json')
            if schedule_data is None:
                raise ValueError(f"{run_dir} has no schedule.json")
            summary = load_json(run_dir / 'summary.json', default={})
            label = summary.get('reward_type', run_dir.name)
            if label in stats:
                label = run_dir.name

            success = evaluate_schedule(Schedule.from_dict(schedule_data), instances,
                                        size_class.norm_constant, T, self.settings, self.rc.workers)
            probs = [p for _, p in sorted(success.items())]
            counts, edges = success_histogram(probs, bins)
            rows += [(label, edges[i], edges[i + 1], counts[i]) for i in range(len(counts))]
            stats[label] = dict(reward_summary(probs), run_dir=str(run_dir),
                                per_instance={str(N): p for N, p in sorted(success.items())})
            self._progress('evaluate', k + 1, len(run_dirs), label)
            print(f"  {label:>12}: mean {stats[label]['mean']:.4f}  min {stats[label]['min']:.4f}")

        csv_path = self.out / f"compare_rewards_n{qubits}.csv"
        json_path = self.out / f"compare_rewards_n{qubits}.json"
        write_csv(csv_path, COMPARE_CSV_HEADER, rows)
        save_json({'T': T, 'instances': [inst.N for inst in instances], 'runs': stats}, json_path)
        return {'csv': str(csv_path), 'stats': str(json_path)}
