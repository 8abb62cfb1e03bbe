"""
SAC-configured AQC training loop
Episodes over the schedule environment, best-schedule tracking, transfer protocols
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from modules.aqc_environment import AqcEnvironment, EnvState
from modules.dynamics import IntegratorSettings, evaluate_instances
from modules.encoder import EncodedInstance
from modules.persistence import write_csv
from modules.sac_agent import ReplayBuffer, SacAgent, SacConfig, Transition
from modules.schedule import Schedule, ScheduleDomainError, is_monotone
from modules.utils import substream, substream_seed

logger = logging.getLogger(__name__)

TRAINING_CSV_HEADER = ('episode', 'step', 'measurement_index', 'reward', 'best_reward',
                       'min_success', 'mean_success')
TRANSFER_MODES = ('actor', 'critic', 'both', 'schedule')


class TransferError(ValueError):
    """Source checkpoint does not fit the target configuration"""


@dataclass
class TraceRow:
    episode: int
    step: int
    measurement_index: int
    reward: float
    best_reward: float
    min_success: float
    mean_success: float

    def as_row(self) -> Tuple:
        return (self.episode, self.step, self.measurement_index, self.reward, self.best_reward,
                self.min_success, self.mean_success)


@dataclass
class TrainingResult:
    best_b: np.ndarray
    best_reward: float
    trace: List[TraceRow] = field(default_factory=list)
    resample_exhaustions: int = 0

    def rewards(self) -> List[float]:
        return [row.reward for row in self.trace]


class SacTrainer:
    """
    Runs episodes, stores every transition and updates the agent at episode end

    b carries over between episodes; only the first episode starts at b0.
    """

    def __init__(self, env: AqcEnvironment, cfg: SacConfig, master_seed: int = 0,
                 agent: Optional[SacAgent] = None, b0: Optional[Sequence[float]] = None):
        self.env = env
        self.cfg = cfg
        self.master_seed = master_seed
        self.agent = agent or SacAgent(cfg, seed=substream_seed(master_seed, 'actor'))
        self.buffer = ReplayBuffer(cfg.state_dim, cfg.schedule_terms, cfg.buffer_size,
                                   substream(master_seed, 'buffer'))
        self.env_rng = substream(master_seed, 'env')

        self.b = np.zeros(cfg.schedule_terms) if b0 is None else np.asarray(b0, dtype=float).copy()
        self.best_b = self.b.copy()
        self.best_reward = -math.inf
        self.trace: List[TraceRow] = []
        self.episode = 0
        self.total_steps = 0
        self.resample_exhaustions = 0

    def select_action(self, state: EnvState) -> np.ndarray:
        """Sample until b + a is monotone; zero action after max_resamples failures"""
        for _ in range(1 + self.cfg.max_resamples):
            if self.total_steps < self.cfg.random_steps:
                action = self.env_rng.uniform(-self.cfg.action_bound, self.cfg.action_bound,
                                              self.cfg.schedule_terms)
            else:
                action, _ = self.agent.act(state.encoded)
            if self.env.is_valid(self.env.propose(state, action)):
                return action
        self.resample_exhaustions += 1
        logger.warning("Episode %d step %d: no monotone action after %d resamples, using zero action",
                       self.episode, state.t, self.cfg.max_resamples)
        return np.zeros(self.cfg.schedule_terms)

    def _record(self, step: int, reward: float, b_next: np.ndarray, probs: List[float]):
        if reward > self.best_reward:
            self.best_reward = reward
            self.best_b = b_next.copy()
        self.trace.append(TraceRow(
            episode=self.episode,
            step=step,
            measurement_index=len(self.trace) + 1,
            reward=reward,
            best_reward=self.best_reward,
            min_success=float(min(probs)),
            mean_success=float(np.mean(probs)),
        ))

    def run_episode(self) -> Dict[str, float]:
        self.episode += 1
        state = self.env.reset(self.b)
        while True:
            action = self.select_action(state)
            result = self.env.step(state, action)
            self.buffer.add(Transition(state.encoded, action, result.reward,
                                       result.state.encoded, result.done))
            self.total_steps += 1
            if result.measurement is not None:
                self._record(state.t, result.reward, result.state.b, result.measurement.probabilities())
            state = result.state
            if result.done:
                break
        self.b = state.b.copy()

        losses: Dict[str, float] = {}
        if len(self.buffer) >= self.cfg.batch_size:
            for _ in range(self.cfg.gradient_steps):
                losses = self.agent.update(self.buffer.sample(self.cfg.batch_size))
        return losses

    def train(self, episodes: Optional[int] = None,
              progress: Optional[Callable[[int, int], None]] = None) -> TrainingResult:
        episodes = self.cfg.episodes if episodes is None else episodes
        for k in range(episodes):
            losses = self.run_episode()
            if progress:
                progress(k + 1, episodes)
            if (k + 1) % max(1, episodes // 10) == 0:
                logger.info("Episode %d/%d best reward %.5f %s", k + 1, episodes, self.best_reward,
                            {name: round(v, 6) for name, v in losses.items()})
        return self.result()

    def result(self) -> TrainingResult:
        return TrainingResult(self.best_b.copy(), self.best_reward, list(self.trace),
                              self.resample_exhaustions)

    def rng_state(self) -> Dict:
        return {
            'buffer': self.buffer.rng.bit_generator.state,
            'env': self.env_rng.bit_generator.state,
        }

    def set_rng_state(self, state: Dict):
        self.buffer.rng.bit_generator.state = state['buffer']
        self.env_rng.bit_generator.state = state['env']


def transfer_init(source, mode: str, cfg: SacConfig,
                  master_seed: int = 0) -> Tuple[SacAgent, np.ndarray]:
    """
    Fresh agent seeded with parts of a source checkpoint

    actor:    actor weights only
    critic:   both critics and their targets
    both:     all four critic nets plus the actor
    schedule: fresh networks, b0 = source best schedule
    Optimizer moments always start fresh.
    """
    if mode not in TRANSFER_MODES:
        raise TransferError(f"Unknown transfer mode '{mode}'")
    if source.state_dim != cfg.state_dim or source.action_dim != cfg.schedule_terms:
        raise TransferError(
            f"Source dims ({source.state_dim}, {source.action_dim}) do not match "
            f"({cfg.state_dim}, {cfg.schedule_terms})"
        )

    agent = SacAgent(cfg, seed=substream_seed(master_seed, 'actor'))
    names = {
        'actor': ['actor'],
        'critic': ['critic1', 'critic2', 'target1', 'target2'],
        'both': ['actor', 'critic1', 'critic2', 'target1', 'target2'],
        'schedule': [],
    }[mode]
    try:
        source.load_networks(agent, names)
    except ValueError as e:
        raise TransferError(str(e)) from e

    b0 = np.asarray(source.best_b, dtype=float) if mode == 'schedule' else np.zeros(cfg.schedule_terms)
    logger.info("Transfer mode '%s' from %d-qubit checkpoint", mode, source.qubits)
    return agent, b0


def evaluate_schedule(b, instances: Sequence[EncodedInstance], norm_constant: float, T: float,
                      settings: IntegratorSettings = IntegratorSettings(),
                      workers: int = 1) -> Dict[int, float]:
    """Success probability per instance for one schedule at the class T"""
    schedule = b if isinstance(b, Schedule) else Schedule.fourier(b)
    if schedule.form == 'fourier' and not is_monotone(schedule):
        raise ScheduleDomainError("Schedule violates the monotonic constraint")
    outcomes = evaluate_instances(instances, norm_constant, schedule, T, settings, workers)
    return {N: p for N, (p, _) in outcomes.items()}


def measurements_to_plateau(rewards: Sequence[float], tolerance: float = 0.05,
                            tail_fraction: float = 0.1) -> int:
    """
    Measurements until the trace stays within tolerance of its plateau

    The plateau is the mean of the last tail_fraction of the trace. Returns
    len(rewards) + 1 when the final measurement is still outside the band.
    """
    r = np.asarray(rewards, dtype=float)
    if r.size == 0:
        raise ValueError("Empty reward trace")
    tail = max(1, int(math.ceil(tail_fraction * r.size)))
    plateau = float(r[-tail:].mean())
    band = tolerance * abs(plateau) if plateau != 0 else tolerance
    outside = np.flatnonzero(np.abs(r - plateau) > band)
    return 1 if outside.size == 0 else int(outside[-1]) + 2


def measurements_to_reach(rewards: Sequence[float], level: float,
                          tolerance: float = 0.05) -> Optional[int]:
    """First measurement (1-based) with reward >= level - tolerance * |level|"""
    threshold = level - tolerance * abs(level)
    for k, value in enumerate(rewards):
        if value >= threshold:
            return k + 1
    return None


def success_histogram(probabilities: Sequence[float], bins: int = 10) -> Tuple[List[int], List[float]]:
    counts, edges = np.histogram(np.asarray(probabilities, dtype=float), bins=bins, range=(0.0, 1.0))
    return counts.tolist(), edges.tolist()


def reward_summary(probabilities: Sequence[float]) -> Dict[str, float]:
    p = np.asarray(probabilities, dtype=float)
    return {
        'mean': float(p.mean()),
        'std': float(p.std()),
        'min': float(p.min()),
        'max': float(p.max()),
    }


def write_training_csv(path, trace: Sequence[TraceRow]) -> None:
    write_csv(path, TRAINING_CSV_HEADER, [row.as_row() for row in trace])
