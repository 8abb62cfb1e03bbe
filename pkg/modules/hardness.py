"""
Classical hardness profile
Exponential-temperature simulated annealing and the j0* statistic per instance
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import joblib
import numpy as np
from numba import njit
from scipy import stats

from modules.encoder import EncodedInstance, IsingHamiltonian, SizeClass
from modules.persistence import save_json, write_csv
from modules.utils import substream_seed

logger = logging.getLogger(__name__)

HARDNESS_CSV_HEADER = ('N', 'n', 'run', 'j0_star', 'censored')


@dataclass(frozen=True)
class AnnealConfig:
    """beta(j) = beta0 * exp(j / j0) for j in [0, 10 j0)"""
    beta0: float
    j0: int
    seed: int = 0

    def __post_init__(self):
        if not self.beta0 > 0:
            raise ValueError(f"beta0 must be positive, got {self.beta0}")
        if self.j0 < 1:
            raise ValueError(f"j0 must be >= 1, got {self.j0}")

    @property
    def total_steps(self) -> int:
        return 10 * self.j0


@njit(cache=True)
def metropolis_accept(delta_e: float, beta: float, u: float) -> bool:
    """min(1, exp(-beta dE)) acceptance against a uniform draw u in [0, 1)"""
    if delta_e <= 0.0:
        return True
    return u < math.exp(-beta * delta_e)


@njit(cache=True)
def _anneal_kernel(fields, couplings, beta0, j0, seed):
    np.random.seed(seed)
    n = fields.shape[0]
    spins = np.empty(n, dtype=np.float64)
    for k in range(n):
        spins[k] = 1.0 if np.random.random() < 0.5 else -1.0

    for j in range(10 * j0):
        k = np.random.randint(0, n)
        local = fields[k]
        for m in range(n):
            local += couplings[k, m] * spins[m]
        delta_e = -2.0 * spins[k] * local
        beta = beta0 * math.exp(j / j0)
        if metropolis_accept(delta_e, beta, np.random.random()):
            spins[k] = -spins[k]
    return spins


def sa_run(H: IsingHamiltonian, cfg: AnnealConfig, ground_energy: float = 0.0,
           tolerance: float = 1e-12) -> Tuple[float, bool]:
    """
    One annealing run from a uniformly random spin state

    Args:
        H: Normalized Ising Hamiltonian
        cfg: Schedule parameters and run seed
        ground_energy: Known minimum of H (0 for normalized factorization instances)
        tolerance: Success window on the final energy

    Returns:
        (final energy, success flag)
    """
    if H.n == 0:
        return float(H.offset), abs(H.offset - ground_energy) <= tolerance
    spins = _anneal_kernel(np.asarray(H.fields, dtype=np.float64), H.coupling_matrix(),
                           float(cfg.beta0), int(cfg.j0), int(cfg.seed))
    bits = tuple(int(s < 0) for s in spins)
    energy = H.energy(bits)
    return energy, abs(energy - ground_energy) <= tolerance


def final_spins(H: IsingHamiltonian, cfg: AnnealConfig) -> np.ndarray:
    """Final spin configuration of a run (trajectory determinism checks)"""
    return _anneal_kernel(np.asarray(H.fields, dtype=np.float64), H.coupling_matrix(),
                          float(cfg.beta0), int(cfg.j0), int(cfg.seed))


def j0_grid(cap: int) -> List[int]:
    """Doubling sweep 1, 2, 4, ... up to cap"""
    grid, j0 = [], 1
    while j0 <= cap:
        grid.append(j0)
        j0 *= 2
    return grid


def _sweep_run(H: IsingHamiltonian, beta0: float, cap: int, master_seed: int,
               N: int, run: int, ground_energy: float, tolerance: float) -> Tuple[int, bool]:
    """First j0 on the doubling grid that reaches the ground state, fresh seed per attempt"""
    for j0 in j0_grid(cap):
        cfg = AnnealConfig(beta0, j0, substream_seed(master_seed, 'sa', N, run, j0))
        _, success = sa_run(H, cfg, ground_energy, tolerance)
        if success:
            return j0, False
    return cap, True


@dataclass
class HardnessReport:
    """j0* samples of one instance over independent runs"""
    N: int
    n: int
    samples: List[int]
    censored: List[bool] = field(default_factory=list)

    @property
    def runs(self) -> int:
        return len(self.samples)

    @property
    def mean(self) -> float:
        return float(np.mean(self.samples))

    @property
    def median(self) -> float:
        return float(np.median(self.samples))

    @property
    def max(self) -> int:
        return int(np.max(self.samples))

    @property
    def stderr(self) -> float:
        if self.runs < 2:
            return 0.0
        return float(np.std(self.samples, ddof=1) / math.sqrt(self.runs))

    @property
    def censored_runs(self) -> int:
        return int(sum(self.censored))

    def summary(self, ci_seed: int = 0) -> Dict:
        data = {
            'N': self.N,
            'n': self.n,
            'runs': self.runs,
            'mean': self.mean,
            'median': self.median,
            'max': self.max,
            'censored_runs': self.censored_runs,
        }
        if self.runs > 1:
            data['stderr'] = self.stderr
            data['ci95'] = list(bootstrap_ci(self.samples, 0.95, seed=ci_seed))
        return data


def bootstrap_ci(samples: Sequence[float], level: float = 0.95, resamples: int = 2000,
                 seed: int = 0) -> Tuple[float, float]:
    """Percentile bootstrap interval of the mean"""
    values = np.asarray(samples, dtype=float)
    if len(values) < 2 or np.all(values == values[0]):
        return float(values.mean()), float(values.mean())
    result = stats.bootstrap((values,), np.mean, confidence_level=level, n_resamples=resamples,
                             method='percentile', random_state=np.random.default_rng(seed))
    return float(result.confidence_interval.low), float(result.confidence_interval.high)


def normalized_hamiltonian(instance: EncodedInstance, norm_constant: float) -> IsingHamiltonian:
    return instance.ising.scaled(1.0 / norm_constant)


def estimate_j0_star(instance: EncodedInstance, norm_constant: float, runs: int = 500,
                     beta0: float = 0.1, master_seed: int = 0, j0_cap: int = 2 ** 20,
                     workers: int = 1, tolerance: float = 1e-12) -> HardnessReport:
    """
    Independent per-run j0 sweeps over a doubling grid

    Runs that never succeed up to j0_cap are recorded at the cap and flagged.
    """
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")
    H = normalized_hamiltonian(instance, norm_constant)
    ground_energy = instance.min_energy / norm_constant

    results = joblib.Parallel(n_jobs=workers)(
        joblib.delayed(_sweep_run)(H, beta0, j0_cap, master_seed, instance.N, run,
                                   ground_energy, tolerance)
        for run in range(runs)
    )
    samples = [j0 for j0, _ in results]
    censored = [flag for _, flag in results]

    report = HardnessReport(N=instance.N, n=instance.n, samples=samples, censored=censored)
    if report.censored_runs:
        logger.warning("N=%d: %d/%d runs censored at j0=%d", instance.N,
                       report.censored_runs, runs, j0_cap)
    logger.info("N=%d: mean j0* %.1f over %d runs", instance.N, report.mean, runs)
    return report


def success_rate(H: IsingHamiltonian, beta0: float, j0: int, repeats: int,
                 master_seed: int = 0, ground_energy: float = 0.0,
                 label: str = 'rate') -> float:
    """Empirical SA success probability at fixed j0"""
    hits = 0
    for r in range(repeats):
        cfg = AnnealConfig(beta0, j0, substream_seed(master_seed, 'sa', label, j0, r))
        hits += sa_run(H, cfg, ground_energy)[1]
    return hits / repeats


def rank_hardness(size_class: SizeClass, reports: Dict[int, HardnessReport]) -> List[int]:
    """Class members by descending mean j0*, ties by ascending N"""
    missing = [N for N in size_class.numbers() if N not in reports]
    if missing:
        raise ValueError(f"Missing hardness reports for {missing}")
    return sorted(size_class.numbers(), key=lambda N: (-reports[N].mean, N))


def write_hardness_csv(path, reports: Sequence[HardnessReport]) -> None:
    rows = []
    for report in sorted(reports, key=lambda r: r.N):
        for run, (j0, flag) in enumerate(zip(report.samples, report.censored)):
            rows.append((report.N, report.n, run, j0, flag))
    write_csv(path, HARDNESS_CSV_HEADER, rows)


def write_hardness_summary(path, ranking: List[int], reports: Dict[int, HardnessReport],
                           beta0: float, j0_cap: int, seed: Optional[int] = 0) -> Dict:
    data = {
        'beta0': beta0,
        'j0_cap': j0_cap,
        'ranking': ranking,
        'instances': [reports[N].summary(ci_seed=seed or 0) for N in ranking],
    }
    save_json(data, path)
    return data
