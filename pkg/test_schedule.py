#!/usr/bin/env python3
"""
Test Hamiltonian schedule evaluation and the monotonic constraint
"""
import sys

import numpy as np
import pytest

from modules.schedule import (
    Schedule,
    ScheduleDomainError,
    clamp_coefficients,
    derivative,
    evaluate,
    is_monotone,
)


def test_linear_recovery():
    s = np.linspace(0, 1, 101)
    assert np.max(np.abs(evaluate(Schedule.fourier(np.zeros(6)), s) - s)) == 0.0
    assert evaluate(Schedule.fourier(np.zeros(6)), 0.5) == 0.5


def test_single_coefficient_midpoint():
    assert evaluate(Schedule.fourier([0.1, 0, 0, 0, 0, 0]), 0.5) == pytest.approx(0.6, abs=1e-15)


def test_boundaries_exact():
    rng = np.random.default_rng(5)
    for _ in range(20):
        sched = Schedule.fourier(rng.uniform(-1, 1, 6))
        assert evaluate(sched, 0.0) == 0.0
        assert evaluate(sched, 1.0) == 1.0


def test_baseline_forms():
    assert evaluate(Schedule.quadratic(), 0.5) == 0.25
    assert evaluate(Schedule.linear(), 0.3) == 0.3
    assert derivative(Schedule.quadratic(), 0.5) == 1.0


def test_domain_guard():
    with pytest.raises(ScheduleDomainError):
        evaluate(Schedule.linear(), 1.5)
    with pytest.raises(ScheduleDomainError):
        evaluate(Schedule.linear(), -0.1)
    with pytest.raises(ScheduleDomainError):
        Schedule('cubic', np.zeros(6))
    with pytest.raises(ScheduleDomainError):
        Schedule.fourier([1.2, 0, 0, 0, 0, 0])


def test_monotone_examples():
    assert is_monotone(Schedule.fourier(np.zeros(6)))
    assert not is_monotone(Schedule.fourier([-0.5, 0, 0, 0, 0, 0]))
    assert is_monotone(Schedule.fourier([0.05, 0.02, 0, 0, 0, 0]))
    assert is_monotone(Schedule.quadratic())
    with pytest.raises(ScheduleDomainError):
        is_monotone(Schedule.linear(), 1)


def test_monotone_checker_agrees_with_derivative():
    rng = np.random.default_rng(17)
    dense = np.linspace(0, 1, 10001)
    for _ in range(200):
        sched = Schedule.fourier(rng.uniform(-0.06, 0.06, 6))
        if np.all(derivative(sched, dense) >= 0):
            assert is_monotone(sched, 1000)


def test_derivative_matches_finite_difference():
    sched = Schedule.fourier([0.05, -0.02, 0.01, 0, 0.003, 0])
    s = np.linspace(0.1, 0.9, 9)
    h = 1e-6
    numeric = (evaluate(sched, s + h) - evaluate(sched, s - h)) / (2 * h)
    assert np.allclose(derivative(sched, s), numeric, atol=1e-7)


def test_clamp():
    assert clamp_coefficients([1.2, 0, 0, 0, 0, 0]).tolist() == [1.0, 0, 0, 0, 0, 0]
    assert clamp_coefficients([-3, 3, 0, 0, 0, 0]).tolist() == [-1.0, 1.0, 0, 0, 0, 0]
    b = [0.1, -0.2, 0.3, 0, 0, 0]
    assert clamp_coefficients(b).tolist() == b


def test_serialization():
    sched = Schedule.fourier([0.1, 0, 0, 0, -0.05, 0])
    data = sched.to_dict()
    assert list(data) == ['form', 'C', 'b']
    assert data['C'] == 6
    assert Schedule.from_dict(data) == sched
    with pytest.raises(ScheduleDomainError):
        Schedule.from_dict({'form': 'fourier', 'C': 3, 'b': [0, 0]})


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
