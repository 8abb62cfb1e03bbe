"""
AQC schedule environment
State = double-one-hot(t) + schedule coefficients b; actions nudge b.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Protocol, Sequence, Tuple

import numpy as np

from modules.dynamics import Measurement
from modules.sac_agent import SacConfig
from modules.schedule import Schedule, ScheduleDomainError, clamp_coefficients, is_monotone

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-12


def double_one_hot(t: int, slots: int = 10) -> np.ndarray:
    """one-hot(t // 10) followed by one-hot(t % 10)"""
    if not 0 <= t < slots * slots:
        raise ValueError(f"Step {t} does not fit a {slots}x{slots} double one-hot code")
    code = np.zeros(2 * slots)
    code[t // slots] = 1.0
    code[slots + t % slots] = 1.0
    return code


@dataclass
class EnvState:
    t: int
    b: np.ndarray

    @property
    def encoded(self) -> np.ndarray:
        return np.concatenate([double_one_hot(self.t), self.b])


def _logs(probs: Sequence[float]) -> Tuple[np.ndarray, int]:
    p = np.asarray(probs, dtype=float)
    zeros = int(np.sum(p <= 0.0))
    return np.log(np.maximum(p, LOG_FLOOR)), zeros


def reward_fn(probs: Sequence[float], reward_type: str = 'R1',
              energies: Optional[Sequence[float]] = None) -> float:
    """
    R1 min ln p, R2 mean ln p, R3 min p, R4 mean p, R5 -mean energy

    Zero probabilities under log rewards use ln(1e-12) and are logged.
    """
    if reward_type == 'R5':
        if energies is None or len(energies) == 0:
            raise ValueError("R5 needs the final mean energy of every instance")
        return -float(np.mean(energies))
    if len(probs) == 0:
        raise ValueError("reward needs at least one success probability")
    if reward_type in ('R1', 'R2'):
        logs, zeros = _logs(probs)
        if zeros:
            logger.warning("%d zero success probabilities replaced by %g under %s", zeros, LOG_FLOOR, reward_type)
        return float(logs.min() if reward_type == 'R1' else logs.mean())
    if reward_type == 'R3':
        return float(np.min(probs))
    if reward_type == 'R4':
        return float(np.mean(probs))
    raise ValueError(f"Unknown reward type '{reward_type}'")


class MeasurementBackend(Protocol):
    def measure(self, b) -> Measurement:
        ...


class ToyBackend:
    """
    Analytic stand-in for the AQC measurement

    Energies are ||b - b*||^2 for every listed instance, so R5 with unit
    scale gives reward -||b - b*||^2.
    """

    def __init__(self, target: Sequence[float], numbers: Sequence[int] = (0,)):
        self.target = np.asarray(target, dtype=float)
        self.numbers = list(numbers)
        self.calls = 0

    def measure(self, b) -> Measurement:
        self.calls += 1
        coeffs = b.b if isinstance(b, Schedule) else np.asarray(b, dtype=float)
        distance = float(np.sum((coeffs - self.target) ** 2))
        return Measurement(
            success={N: math.exp(-distance) for N in self.numbers},
            energies={N: distance for N in self.numbers},
        )


@dataclass
class StepResult:
    state: EnvState
    reward: float
    done: bool
    measurement: Optional[Measurement] = None


class AqcEnvironment:
    """Episodic schedule-tuning environment over a measurement backend"""

    def __init__(self, backend: MeasurementBackend, cfg: SacConfig, grid_size: int = 1024):
        self.backend = backend
        self.cfg = cfg
        self.grid_size = grid_size

    def reset(self, b0: Sequence[float]) -> EnvState:
        b0 = np.asarray(b0, dtype=float)
        if b0.shape != (self.cfg.schedule_terms,):
            raise ScheduleDomainError(f"b0 must have {self.cfg.schedule_terms} coefficients")
        if np.any(np.abs(b0) > 1.0):
            raise ScheduleDomainError("b0 must lie in [-1, 1]")
        if not is_monotone(Schedule.fourier(b0), self.grid_size):
            raise ScheduleDomainError("b0 violates the monotonic constraint")
        return EnvState(1, b0.copy())

    def propose(self, state: EnvState, action: np.ndarray) -> np.ndarray:
        return clamp_coefficients(state.b + np.asarray(action, dtype=float))

    def is_valid(self, b: np.ndarray) -> bool:
        return is_monotone(Schedule.fourier(b), self.grid_size)

    def measure(self, b: np.ndarray) -> Tuple[float, Measurement]:
        measurement = self.backend.measure(b)
        value = reward_fn(measurement.probabilities(), self.cfg.reward_type, measurement.energy_values())
        return self.cfg.reward_scale * value, measurement

    def step(self, state: EnvState, action: np.ndarray) -> StepResult:
        """
        Apply the action; reward only on measurement steps

        The caller guarantees validity (see SacTrainer resampling).
        """
        action = np.asarray(action, dtype=float)
        if np.any(np.abs(action) > self.cfg.action_bound + 1e-15):
            raise ValueError(f"Action outside +-{self.cfg.action_bound}: {action.tolist()}")
        b_next = self.propose(state, action)

        reward, measurement = 0.0, None
        if state.t % self.cfg.measure_every == 0:
            reward, measurement = self.measure(b_next)

        done = state.t >= self.cfg.episode_length
        return StepResult(EnvState(state.t + 1, b_next), reward, done, measurement)
