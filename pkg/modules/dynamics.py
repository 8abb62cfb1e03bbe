"""
Adiabatic evolution
State-vector simulation of H(s) = [(1 - lambda(s)) H_B + lambda(s) H_P] / normConstant
with H_B = -sum_k X_k, success probabilities, T calibration and easy/hard splits.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import joblib
import numpy as np
from scipy.linalg import expm

from modules.encoder import EncodedInstance, IsingHamiltonian, SizeClass
from modules.persistence import write_csv
from modules.schedule import Schedule

logger = logging.getLogger(__name__)

DRIVER = 'transverse_field'
EVALUATION_CSV_HEADER = ('N', 'n', 'T', 'schedule_form', 'success_probability')


class DynamicsConvergenceError(RuntimeError):
    """Step doubling did not stabilize the success probability"""


class CalibrationError(RuntimeError):
    """T grid exhausted before the class reached the threshold"""

    def __init__(self, message: str, best_t: float, best_mean: float):
        super().__init__(message)
        self.best_t = best_t
        self.best_mean = best_mean


@dataclass(frozen=True)
class IntegratorSettings:
    min_steps: int = 1000
    steps_per_unit_time: float = 10.0
    refine_tolerance: float = 1e-6
    max_refinements: int = 6

    @classmethod
    def from_dict(cls, data: Dict) -> 'IntegratorSettings':
        return cls(
            min_steps=int(data.get('min_steps', cls.min_steps)),
            steps_per_unit_time=float(data.get('steps_per_unit_time', cls.steps_per_unit_time)),
            refine_tolerance=float(data.get('refine_tolerance', cls.refine_tolerance)),
            max_refinements=int(data.get('max_refinements', cls.max_refinements)),
        )

    def initial_steps(self, T: float) -> int:
        return max(self.min_steps, int(math.ceil(self.steps_per_unit_time * T)))


@dataclass
class StateVector:
    n: int
    amplitudes: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass
class EvolutionSpec:
    """
    One evolution: problem energies, ground set, schedule and time

    steps=None selects adaptive step doubling.
    """
    hamiltonian: IsingHamiltonian
    ground_indices: List[int]
    norm_constant: float
    schedule: Schedule
    T: float
    steps: Optional[int] = None
    _diagonal: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if self.steps is not None and self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if not self.norm_constant > 0:
            raise ValueError(f"normConstant must be positive, got {self.norm_constant}")

    @classmethod
    def from_instance(cls, instance: EncodedInstance, norm_constant: float, schedule: Schedule,
                      T: float, steps: Optional[int] = None) -> 'EvolutionSpec':
        return cls(instance.ising, instance.ground_indices(), norm_constant, schedule, T, steps)

    @property
    def n(self) -> int:
        return self.hamiltonian.n

    @property
    def diagonal(self) -> np.ndarray:
        """Problem energies divided by normConstant"""
        if self._diagonal is None:
            self._diagonal = self.hamiltonian.diagonal() / self.norm_constant
        return self._diagonal


def initial_state(n: int) -> StateVector:
    """|+>^n, ground state of -sum_k X_k"""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    dim = 1 << n
    return StateVector(n, np.full(dim, 1.0 / math.sqrt(dim), dtype=complex))


def _apply_x_rotation(psi: np.ndarray, n: int, angle: float) -> np.ndarray:
    """exp(i angle X_k) on every qubit"""
    c, s = math.cos(angle), 1j * math.sin(angle)
    for k in range(n):
        view = psi.reshape(1 << (n - k - 1), 2, 1 << k)
        psi = (c * view + s * view[:, ::-1, :]).reshape(-1)
    return psi


def _split_step(spec: EvolutionSpec, steps: int) -> np.ndarray:
    """
    Strang splitting: half diagonal phase, x-rotations, half diagonal phase

    The schedule is sampled at slice midpoints; adjacent half phases are fused.
    """
    n, T = spec.n, spec.T
    diag = spec.diagonal
    dt = T / steps
    psi = initial_state(n).amplitudes

    midpoints = (np.arange(steps) + 0.5) / steps
    lambdas = np.broadcast_to(np.asarray(spec.schedule.evaluate(midpoints), dtype=float), (steps,))
    pending = 0.5 * lambdas[0]
    for k in range(steps):
        psi = psi * np.exp(-1j * dt * pending * diag)
        psi = _apply_x_rotation(psi, n, dt * (1.0 - lambdas[k]) / spec.norm_constant)
        pending = 0.5 * lambdas[k] + (0.5 * lambdas[k + 1] if k + 1 < steps else 0.0)
    return psi * np.exp(-1j * dt * pending * diag)


def success_probability(state: StateVector, ground_indices: Sequence[int]) -> float:
    """Weight on the full ground set"""
    idx = np.asarray(list(ground_indices), dtype=np.int64)
    return float(np.sum(np.abs(state.amplitudes[idx]) ** 2))


def mean_energy(state: StateVector, spec: EvolutionSpec) -> float:
    """<psi|H_P|psi> / normConstant"""
    return float(state.probabilities() @ spec.diagonal)


def fidelity(a: StateVector, b: StateVector) -> float:
    """|<a|b>|, global phase ignored"""
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)))


def evolve_fixed(spec: EvolutionSpec, steps: int) -> StateVector:
    """Split-step propagation with an explicit slice count"""
    psi = _split_step(spec, steps)
    state = StateVector(spec.n, psi)
    drift = abs(state.norm() - 1.0)
    if drift > 1e-9:
        logger.warning("Norm drift %.3e after %d steps", drift, steps)
    return state


def evolve_adaptive(spec: EvolutionSpec,
                    settings: IntegratorSettings = IntegratorSettings()) -> Tuple[StateVector, int]:
    """
    Double the slice count until the success probability moves by < tolerance

    Returns:
        (final state, slice count used)
    """
    steps = settings.initial_steps(spec.T)
    state = evolve_fixed(spec, steps)
    previous = success_probability(state, spec.ground_indices)
    for _ in range(settings.max_refinements):
        steps *= 2
        state = evolve_fixed(spec, steps)
        current = success_probability(state, spec.ground_indices)
        if abs(current - previous) < settings.refine_tolerance:
            return state, steps
        previous = current
    raise DynamicsConvergenceError(
        f"Success probability not stable within {settings.refine_tolerance} "
        f"after {settings.max_refinements} refinements (T={spec.T}, steps={steps})"
    )


def evolve(spec: EvolutionSpec, settings: IntegratorSettings = IntegratorSettings()) -> StateVector:
    """Final state of the evolution; fixed slices when spec.steps is set"""
    if spec.steps is not None:
        return evolve_fixed(spec, spec.steps)
    return evolve_adaptive(spec, settings)[0]


def driver_matrix(n: int) -> np.ndarray:
    """Dense -sum_k X_k"""
    dim = 1 << n
    matrix = np.zeros((dim, dim))
    z = np.arange(dim)
    for k in range(n):
        matrix[z, z ^ (1 << k)] -= 1.0
    return matrix


def dense_reference_evolve(spec: EvolutionSpec, steps: int) -> StateVector:
    """Exact matrix exponential per slice at the slice midpoint (small n only)"""
    H_B = driver_matrix(spec.n) / spec.norm_constant
    H_P = np.diag(spec.diagonal)
    dt = spec.T / steps
    psi = initial_state(spec.n).amplitudes
    for k in range(steps):
        lam = float(spec.schedule.evaluate((k + 0.5) / steps))
        psi = expm(-1j * dt * ((1.0 - lam) * H_B + lam * H_P)) @ psi
    return StateVector(spec.n, psi)


def repetitions_for_target(p_min: float, p_star: float = 0.99) -> int:
    """Repeated runs M so that 1 - (1 - p_min)^M >= p_star"""
    if not 0.0 < p_min <= 1.0:
        raise ValueError(f"p_min must lie in (0, 1], got {p_min}")
    if not 0.0 < p_star < 1.0:
        raise ValueError(f"p_star must lie in (0, 1), got {p_star}")
    if p_min == 1.0:
        return 1
    return int(math.ceil(math.log(1.0 - p_star) / math.log(1.0 - p_min)))


# ---------------------------------------------------------------------------
# Class-level operations
# ---------------------------------------------------------------------------

def _instance_outcome(instance: EncodedInstance, norm_constant: float, schedule: Schedule,
                      T: float, settings: IntegratorSettings,
                      steps: Optional[int] = None) -> Tuple[float, float]:
    spec = EvolutionSpec.from_instance(instance, norm_constant, schedule, T, steps)
    state = evolve(spec, settings)
    return success_probability(state, spec.ground_indices), mean_energy(state, spec)


def evaluate_instances(instances: Sequence[EncodedInstance], norm_constant: float,
                       schedule: Schedule, T: float,
                       settings: IntegratorSettings = IntegratorSettings(),
                       workers: int = 1, steps: Optional[int] = None) -> Dict[int, Tuple[float, float]]:
    """N -> (success probability, mean normalized energy), one evolution per instance"""
    outcomes = joblib.Parallel(n_jobs=workers)(
        joblib.delayed(_instance_outcome)(inst, norm_constant, schedule, T, settings, steps)
        for inst in instances
    )
    return {inst.N: outcome for inst, outcome in zip(instances, outcomes)}


@dataclass
class Measurement:
    success: Dict[int, float]
    energies: Dict[int, float]

    def probabilities(self) -> List[float]:
        return [self.success[N] for N in sorted(self.success)]

    def energy_values(self) -> List[float]:
        return [self.energies[N] for N in sorted(self.energies)]


class AqcMeasurement:
    """Binds instances, T and normalization; measure(b) runs every evolution"""

    def __init__(self, instances: Sequence[EncodedInstance], norm_constant: float, T: float,
                 settings: IntegratorSettings = IntegratorSettings(), workers: int = 1,
                 steps: Optional[int] = None):
        if not instances:
            raise ValueError("AqcMeasurement needs at least one instance")
        self.instances = list(instances)
        self.norm_constant = norm_constant
        self.T = T
        self.settings = settings
        self.workers = workers
        self.steps = steps
        self.calls = 0

    def measure(self, b) -> Measurement:
        schedule = b if isinstance(b, Schedule) else Schedule.fourier(b)
        self.calls += 1
        outcomes = evaluate_instances(self.instances, self.norm_constant, schedule, self.T,
                                      self.settings, self.workers, self.steps)
        return Measurement(
            success={N: p for N, (p, _) in outcomes.items()},
            energies={N: e for N, (_, e) in outcomes.items()},
        )


def t_grid(start: float = 10.0, ratio: float = 1.2, size: int = 40) -> List[float]:
    return [start * ratio ** k for k in range(size)]


@dataclass
class CalibrationResult:
    n: int
    T: float
    p_th: float
    grid: List[float]
    per_instance: Dict[int, float]
    mean_success: float

    def to_dict(self) -> Dict:
        return {
            'n': self.n,
            'T': self.T,
            'P_th': self.p_th,
            'grid': self.grid,
            'per_instance': [{'N': N, 'success_probability': p}
                             for N, p in sorted(self.per_instance.items())],
            'mean_success': self.mean_success,
            'H_B': DRIVER,
        }


def calibrate_T(size_class: SizeClass, p_th: float = 0.1, grid: Optional[Sequence[float]] = None,
                settings: IntegratorSettings = IntegratorSettings(), workers: int = 1) -> CalibrationResult:
    """
    Smallest grid T where the class mean success under the quadratic schedule reaches P_th

    Raises:
        CalibrationError: grid exhausted, carrying the best T found
    """
    if size_class.is_empty:
        raise ValueError(f"Cannot calibrate the empty {size_class.n}-qubit class")
    grid = list(grid) if grid is not None else t_grid()
    schedule = Schedule.quadratic()
    best_t, best_mean = grid[0], -1.0

    for T in grid:
        outcomes = evaluate_instances(size_class.instances, size_class.norm_constant, schedule, T,
                                      settings, workers)
        per_instance = {N: p for N, (p, _) in outcomes.items()}
        mean = float(np.mean(list(per_instance.values())))
        logger.info("n=%d T=%.2f mean success %.4f", size_class.n, T, mean)
        if mean > best_mean:
            best_t, best_mean = T, mean
        if mean >= p_th:
            size_class.calibrated_t = T
            return CalibrationResult(size_class.n, T, p_th, grid, per_instance, mean)

    raise CalibrationError(
        f"Mean success never reached {p_th} on the T grid (best {best_mean:.4f} at T={best_t:.2f})",
        best_t, best_mean,
    )


@dataclass
class SplitReport:
    easy: List[int]
    hard: List[int]
    per_instance_success: Dict[int, float]
    p_th: float
    T: float

    def to_dict(self) -> Dict:
        return {
            'T': self.T,
            'P_th': self.p_th,
            'easy': self.easy,
            'hard': self.hard,
            'per_instance': [{'N': N, 'success_probability': p}
                             for N, p in sorted(self.per_instance_success.items())],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'SplitReport':
        return cls(
            easy=list(data['easy']),
            hard=list(data['hard']),
            per_instance_success={row['N']: row['success_probability'] for row in data['per_instance']},
            p_th=data['P_th'],
            T=data['T'],
        )


def classify_instances(size_class: SizeClass, T: float, p_th: float = 0.1,
                       settings: IntegratorSettings = IntegratorSettings(), workers: int = 1,
                       schedule: Optional[Schedule] = None) -> SplitReport:
    """Hard instances have success < P_th at T under the quadratic schedule"""
    schedule = schedule or Schedule.quadratic()
    outcomes = evaluate_instances(size_class.instances, size_class.norm_constant, schedule, T,
                                  settings, workers)
    per_instance = {N: p for N, (p, _) in outcomes.items()}
    hard = sorted(N for N, p in per_instance.items() if p < p_th)
    easy = sorted(N for N, p in per_instance.items() if p >= p_th)
    return SplitReport(easy, hard, per_instance, p_th, T)


def write_evaluation_csv(path, rows: Sequence[Tuple[int, int, float, str, float]]) -> None:
    write_csv(path, EVALUATION_CSV_HEADER, rows)
