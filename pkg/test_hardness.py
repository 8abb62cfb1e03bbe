#!/usr/bin/env python3
"""
Test the simulated-annealing hardness profile
"""
import math
import sys

import numpy as np
import pytest

from modules.encoder import IsingHamiltonian, brute_force_ground, build_size_class, encode_instance
from modules.hardness import (
    AnnealConfig,
    HARDNESS_CSV_HEADER,
    HardnessReport,
    bootstrap_ci,
    estimate_j0_star,
    final_spins,
    j0_grid,
    metropolis_accept,
    rank_hardness,
    sa_run,
    success_rate,
    write_hardness_csv,
)
from modules.persistence import read_csv

TWO_SPIN = IsingHamiltonian(n=2, fields=np.array([0.5, -0.25]), couplings={(0, 1): 0.5}, offset=0.0)


def test_downhill_always_accepted():
    assert metropolis_accept(-1.0, 5.0, 0.999999)
    assert metropolis_accept(0.0, 5.0, 0.999999)


def test_uphill_acceptance_frequency():
    rng = np.random.default_rng(7)
    beta, delta_e, trials = 0.5, 1.0, 20000
    accepted = sum(metropolis_accept(delta_e, beta, u) for u in rng.random(trials))
    p = math.exp(-beta * delta_e)
    sigma = math.sqrt(trials * p * (1 - p))
    assert abs(accepted - trials * p) < 4 * sigma


def test_anneal_config_validation():
    assert AnnealConfig(0.1, 3).total_steps == 30
    with pytest.raises(ValueError):
        AnnealConfig(0.0, 1)
    with pytest.raises(ValueError):
        AnnealConfig(0.1, 0)


def test_j0_grid():
    assert j0_grid(16) == [1, 2, 4, 8, 16]
    assert j0_grid(20) == [1, 2, 4, 8, 16]


def test_same_seed_same_trajectory():
    cfg = AnnealConfig(0.1, 64, seed=1234)
    assert np.array_equal(final_spins(TWO_SPIN, cfg), final_spins(TWO_SPIN, cfg))
    assert sa_run(TWO_SPIN, cfg, -1.25) == sa_run(TWO_SPIN, cfg, -1.25)


def test_slow_anneal_finds_two_spin_ground():
    ground_energy, _ = brute_force_ground(TWO_SPIN)
    assert ground_energy == -1.25
    assert success_rate(TWO_SPIN, 0.1, 256, 50, master_seed=3, ground_energy=ground_energy) >= 0.95


@pytest.mark.parametrize("N", [49, 111, 77])
def test_success_rate_non_decreasing_in_j0(N):
    inst = encode_instance(N, 3)
    norm = float(inst.qubo.max_coefficient())
    H = inst.ising.scaled(1.0 / norm)
    repeats = 200
    rates = [success_rate(H, 0.1, j0, repeats, master_seed=5, ground_energy=inst.min_energy / norm)
             for j0 in (1, 4, 16, 64, 256)]
    for shorter, longer in zip(rates, rates[1:]):
        sigma = math.sqrt((shorter * (1 - shorter) + longer * (1 - longer)) / repeats)
        assert longer >= shorter - 3 * sigma - 1e-9


def test_trivial_instance_j0_star_is_one():
    inst = encode_instance(15, 3)
    assert inst.n == 1
    norm = float(inst.qubo.max_coefficient())
    report = estimate_j0_star(inst, norm, runs=20, beta0=0.1, master_seed=11)
    assert report.samples == [1] * 20
    assert report.censored_runs == 0
    assert report.max == 1


def test_run_count_validation():
    inst = encode_instance(15, 3)
    with pytest.raises(ValueError):
        estimate_j0_star(inst, 9.0, runs=0)


def test_rank_tie_break_by_number():
    size_class = build_size_class([55, 65, 77], 7, 3)
    reports = {N: HardnessReport(N, 7, [4, 8]) for N in size_class.numbers()}
    assert rank_hardness(size_class, reports) == [55, 65, 77]

    reports[77] = HardnessReport(77, 7, [64, 128])
    ranking = rank_hardness(size_class, reports)
    assert ranking[0] == 77
    assert sorted(ranking) == size_class.numbers()

    del reports[55]
    with pytest.raises(ValueError):
        rank_hardness(size_class, reports)


def test_report_statistics():
    report = HardnessReport(91, 7, [1, 2, 4, 8], [False, False, False, True])
    assert report.mean == 3.75
    assert report.median == 3.0
    assert report.censored_runs == 1
    summary = report.summary()
    low, high = summary['ci95']
    assert low <= report.mean <= high


def test_single_sample_summary():
    summary = HardnessReport(77, 7, [32], [False]).summary()
    assert 'stderr' not in summary
    assert summary['mean'] == 32.0


def test_bootstrap_degenerate_samples():
    assert bootstrap_ci([5, 5, 5]) == (5.0, 5.0)


def test_hardness_csv(tmp_path):
    path = tmp_path / "hardness.csv"
    write_hardness_csv(path, [HardnessReport(65, 7, [2, 4], [False, True]),
                              HardnessReport(55, 7, [1], [False])])
    rows = read_csv(path)
    assert list(rows[0]) == list(HARDNESS_CSV_HEADER)
    assert [r['N'] for r in rows] == ['55', '65', '65']
    assert rows[2]['censored'] == 'true'


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
