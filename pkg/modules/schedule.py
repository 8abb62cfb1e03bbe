"""
Hamiltonian schedule lambda(s)

fourier:   s + sum_m b_m sin(m pi s)
linear:    s
quadratic: s^2
"""
from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np

DEFAULT_TERMS = 6
MONOTONE_GRID = 1024
MONOTONE_TOLERANCE = -1e-12

FORMS = ('fourier', 'linear', 'quadratic')


class ScheduleDomainError(ValueError):
    """Schedule evaluated outside [0, 1] or built from bad coefficients"""


def clamp_coefficients(b: Sequence[float]) -> np.ndarray:
    """Componentwise clamp to the schedule space [-1, 1]"""
    return np.clip(np.asarray(b, dtype=float), -1.0, 1.0)


@dataclass(frozen=True, eq=False)
class Schedule:
    form: str
    b: np.ndarray

    def __post_init__(self):
        if self.form not in FORMS:
            raise ScheduleDomainError(f"Unknown schedule form '{self.form}'")
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if np.any(np.abs(b) > 1.0):
            raise ScheduleDomainError(f"Coefficients must lie in [-1, 1], got {b.tolist()}")
        object.__setattr__(self, 'b', b)

    @classmethod
    def fourier(cls, b: Sequence[float]) -> 'Schedule':
        return cls('fourier', np.asarray(b, dtype=float))

    @classmethod
    def linear(cls, terms: int = DEFAULT_TERMS) -> 'Schedule':
        return cls('linear', np.zeros(terms))

    @classmethod
    def quadratic(cls, terms: int = DEFAULT_TERMS) -> 'Schedule':
        return cls('quadratic', np.zeros(terms))

    @property
    def terms(self) -> int:
        return len(self.b)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Schedule) and self.form == other.form
                and np.array_equal(self.b, other.b))

    def __hash__(self) -> int:
        return hash((self.form, tuple(self.b.tolist())))

    def evaluate(self, s):
        return evaluate(self, s)

    def to_dict(self) -> Dict:
        return {'form': self.form, 'C': self.terms, 'b': [float(v) for v in self.b]}

    @classmethod
    def from_dict(cls, data: Dict) -> 'Schedule':
        b = list(data.get('b', []))
        if 'C' in data and len(b) != int(data['C']):
            raise ScheduleDomainError(f"Schedule C={data['C']} but {len(b)} coefficients")
        return cls(data['form'], np.asarray(b, dtype=float))


def _check_domain(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if np.any((s < 0.0) | (s > 1.0)) or np.any(np.isnan(s)):
        raise ScheduleDomainError("Schedule argument must lie in [0, 1]")
    return s


def evaluate(sched: Schedule, s):
    """
    lambda(s) for scalar or array s in [0, 1]

    The Fourier form hits 0 and 1 exactly at the end points.
    """
    s_arr = _check_domain(s)
    if sched.form == 'linear':
        value = s_arr.copy()
    elif sched.form == 'quadratic':
        value = s_arr * s_arr
    else:
        m = np.arange(1, sched.terms + 1)
        value = s_arr + np.sin(np.pi * np.multiply.outer(s_arr, m)) @ sched.b
        value = np.where(s_arr == 0.0, 0.0, np.where(s_arr == 1.0, 1.0, value))
    return float(value) if value.ndim == 0 else value


def derivative(sched: Schedule, s):
    """Analytic lambda'(s)"""
    s_arr = _check_domain(s)
    if sched.form == 'linear':
        value = np.ones_like(s_arr)
    elif sched.form == 'quadratic':
        value = 2.0 * s_arr
    else:
        m = np.arange(1, sched.terms + 1)
        value = 1.0 + np.cos(np.pi * np.multiply.outer(s_arr, m)) @ (np.pi * m * sched.b)
    return float(value) if value.ndim == 0 else value


def is_monotone(sched: Schedule, grid_size: int = MONOTONE_GRID) -> bool:
    """lambda non-decreasing on {k / grid_size}, successive differences >= -1e-12"""
    if grid_size < 2:
        raise ScheduleDomainError(f"grid_size must be >= 2, got {grid_size}")
    values = evaluate(sched, np.linspace(0.0, 1.0, grid_size + 1))
    return bool(np.all(np.diff(values) >= MONOTONE_TOLERANCE))
