#!/usr/bin/env python3
"""
Test the schedule environment, reward functions and the training loop
"""
import math
import sys

import numpy as np
import pytest

from modules.aqc_environment import (
    LOG_FLOOR,
    AqcEnvironment,
    EnvState,
    ToyBackend,
    double_one_hot,
    reward_fn,
)
from modules.dynamics import IntegratorSettings, Measurement
from modules.sac_agent import SacConfig
from modules.sac_trainer import (
    SacTrainer,
    evaluate_schedule,
    measurements_to_plateau,
    measurements_to_reach,
    reward_summary,
    success_histogram,
    write_training_csv,
)
from modules.persistence import read_csv
from modules.schedule import ScheduleDomainError

TARGET = [0.15, 0.05, 0.0, 0.0, 0.0, 0.0]
TOY = dict(actor_hidden=16, critic_hidden=16, batch_size=16, episode_length=20,
           episodes=4, reward_type='R5', reward_scale=1.0)


class FixedBackend:
    def __init__(self, success, energies=None):
        self.success = success
        self.energies = energies or {N: 0.0 for N in success}
        self.calls = 0

    def measure(self, b) -> Measurement:
        self.calls += 1
        return Measurement(dict(self.success), dict(self.energies))


def toy_trainer(seed: int = 7, **overrides) -> SacTrainer:
    cfg = SacConfig(**{**TOY, **overrides})
    return SacTrainer(AqcEnvironment(ToyBackend(TARGET), cfg), cfg, master_seed=seed)


def test_double_one_hot():
    code = double_one_hot(1)
    assert code.sum() == 2
    assert code[0] == 1 and code[11] == 1
    code = double_one_hot(40)
    assert code[4] == 1 and code[10] == 1
    with pytest.raises(ValueError):
        double_one_hot(100)


def test_reset_encodes_first_step():
    env = AqcEnvironment(ToyBackend(TARGET), SacConfig())
    state = env.reset(np.zeros(6))
    assert state.t == 1
    assert np.array_equal(state.encoded, np.concatenate([double_one_hot(1), np.zeros(6)]))
    assert state.encoded.shape == (26,)


def test_reset_rejects_bad_b0():
    env = AqcEnvironment(ToyBackend(TARGET), SacConfig())
    with pytest.raises(ScheduleDomainError):
        env.reset([-1.0, 0, 0, 0, 0, 0])
    with pytest.raises(ScheduleDomainError):
        env.reset(np.zeros(5))
    with pytest.raises(ScheduleDomainError):
        env.reset([1.5, 0, 0, 0, 0, 0])


def test_reward_only_on_measurement_steps():
    backend = FixedBackend({55: 0.1, 77: 0.2})
    env = AqcEnvironment(backend, SacConfig())
    quiet = env.step(EnvState(5, np.zeros(6)), np.zeros(6))
    assert quiet.reward == 0.0 and quiet.measurement is None
    assert backend.calls == 0
    assert quiet.state.t == 6

    measured = env.step(EnvState(10, np.zeros(6)), np.zeros(6))
    assert measured.reward == pytest.approx(5 * math.log(0.1))
    assert measured.reward == pytest.approx(-11.5129, abs=1e-4)
    assert backend.calls == 1
    assert not measured.done


def test_episode_ends_at_length():
    env = AqcEnvironment(FixedBackend({55: 0.5}), SacConfig())
    assert env.step(EnvState(40, np.zeros(6)), np.zeros(6)).done
    assert not env.step(EnvState(39, np.zeros(6)), np.zeros(6)).done


def test_step_clamps_and_checks_bound():
    env = AqcEnvironment(FixedBackend({55: 0.5}), SacConfig())
    b = np.array([-0.995, 0, 0, 0, 0, 0])
    result = env.step(EnvState(1, b), np.array([-0.01, 0, 0, 0, 0, 0]))
    assert result.state.b[0] == -1.0
    with pytest.raises(ValueError):
        env.step(EnvState(1, np.zeros(6)), np.full(6, 0.02))


def test_reward_types():
    probs = [0.1, 0.2]
    assert reward_fn(probs, 'R1') == pytest.approx(math.log(0.1))
    assert reward_fn(probs, 'R2') == pytest.approx(0.5 * (math.log(0.1) + math.log(0.2)))
    assert reward_fn(probs, 'R3') == 0.1
    assert reward_fn(probs, 'R4') == pytest.approx(0.15)
    assert reward_fn(probs, 'R5', energies=[-1.0, -3.0]) == 2.0
    with pytest.raises(ValueError):
        reward_fn(probs, 'R5')
    with pytest.raises(ValueError):
        reward_fn(probs, 'R7')


def test_zero_probability_uses_floor():
    assert reward_fn([0.0, 0.5], 'R1') == pytest.approx(math.log(LOG_FLOOR))


def test_reward_orderings():
    rng = np.random.default_rng(3)
    for _ in range(50):
        probs = rng.uniform(0.0, 1.0, rng.integers(1, 8))
        assert reward_fn(probs, 'R1') <= reward_fn(probs, 'R2') + 1e-12
        assert reward_fn(probs, 'R3') <= reward_fn(probs, 'R4') + 1e-12


def test_toy_backend_energy_is_distance():
    backend = ToyBackend(TARGET, numbers=(15, 21))
    m = backend.measure(np.zeros(6))
    assert m.energy_values() == [pytest.approx(0.025)] * 2
    assert m.probabilities()[0] == pytest.approx(math.exp(-0.025))


def test_trainer_trace_and_best_schedule():
    trainer = toy_trainer()
    result = trainer.train()
    assert len(result.trace) == 4 * 2
    assert [row.measurement_index for row in result.trace] == list(range(1, 9))
    assert result.best_reward == max(result.rewards())
    assert result.best_reward == pytest.approx(-np.sum((result.best_b - TARGET) ** 2))
    assert trainer.agent.gradient_steps == 4 * 2
    assert len(trainer.buffer) == 4 * 20


def test_schedule_carries_over_between_episodes():
    trainer = toy_trainer()
    trainer.train(1)
    carried = trainer.b.copy()
    assert -trainer.trace[-1].reward == pytest.approx(np.sum((carried - TARGET) ** 2))
    first = trainer.env.reset(trainer.b)
    assert np.array_equal(first.b, carried)


def test_trainer_is_deterministic():
    a = toy_trainer(seed=11).train(2)
    b = toy_trainer(seed=11).train(2)
    assert a.rewards() == b.rewards()
    assert np.array_equal(a.best_b, b.best_b)


def test_random_warmup_steps():
    trainer = toy_trainer(random_steps=20)
    trainer.train(1)
    assert np.all(np.abs(trainer.b) <= 20 * 0.01 + 1e-12)


def test_exhausted_resampling_falls_back_to_zero_action():
    class RejectingEnv(AqcEnvironment):
        def is_valid(self, b):
            return False

    cfg = SacConfig(**{**TOY, 'max_resamples': 3})
    trainer = SacTrainer(RejectingEnv(ToyBackend(TARGET), cfg), cfg, master_seed=0)
    action = trainer.select_action(EnvState(1, np.zeros(6)))
    assert np.array_equal(action, np.zeros(6))
    assert trainer.resample_exhaustions == 1


def test_training_csv(tmp_path):
    trainer = toy_trainer()
    trainer.train(1)
    path = tmp_path / 'training.csv'
    write_training_csv(path, trainer.trace)
    rows = read_csv(path)
    assert len(rows) == 2
    assert rows[0]['step'] == '10' and rows[1]['step'] == '20'


def test_measurements_to_plateau():
    assert measurements_to_plateau([-10.0, -5.0, -2.0] + [-1.0] * 20) == 4
    assert measurements_to_plateau([-1.0] * 10) == 1
    with pytest.raises(ValueError):
        measurements_to_plateau([])


def test_measurements_to_reach():
    assert measurements_to_reach([-10.0, -3.0, -1.02, -1.0], -1.0) == 3
    assert measurements_to_reach([-10.0, -3.0], -1.0) is None


def test_success_histogram_and_summary():
    counts, edges = success_histogram([0.05, 0.15, 0.95, 1.0], bins=10)
    assert sum(counts) == 4
    assert counts[0] == 1 and counts[-1] == 2
    assert edges[0] == 0.0 and edges[-1] == 1.0
    summary = reward_summary([0.2, 0.4])
    assert summary['mean'] == pytest.approx(0.3)
    assert summary['min'] == 0.2 and summary['max'] == 0.4


def test_evaluate_schedule_rejects_non_monotone():
    with pytest.raises(ScheduleDomainError):
        evaluate_schedule([-1.0, 0, 0, 0, 0, 0], [], 1.0, 10.0, IntegratorSettings())


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
