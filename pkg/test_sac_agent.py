#!/usr/bin/env python3
"""
Test the soft actor-critic networks, updates and replay buffer
"""
import math
import sys

import numpy as np
import pytest
import torch
from scipy.integrate import trapezoid

from modules.sac_agent import (
    DTYPE,
    Batch,
    Mlp,
    ReplayBuffer,
    SacAgent,
    SacConfig,
    Transition,
    polyak_update,
)

SMALL = dict(actor_hidden=4, critic_hidden=4, hidden_layers=1, batch_size=8)


def small_agent(activation: str = 'tanh', seed: int = 0, **overrides) -> SacAgent:
    cfg = SacConfig(**{**SMALL, **overrides})
    return SacAgent(cfg, seed=seed, state_dim=2, action_dim=1, activation=activation)


def random_batch(size: int = 6, state_dim: int = 2, action_dim: int = 1, seed: int = 0) -> Batch:
    rng = np.random.default_rng(seed)
    return Batch(
        states=rng.normal(size=(size, state_dim)),
        actions=rng.uniform(-0.01, 0.01, (size, action_dim)),
        rewards=rng.normal(size=size),
        next_states=rng.normal(size=(size, state_dim)),
        dones=np.zeros(size),
    )


def assert_gradients_match(params, loss_fn, h: float = 1e-5, floor: float = 1e-3):
    """Autograd against central differences, relative error < 1e-5"""
    grads = torch.autograd.grad(loss_fn(), params)
    for p, g in zip(params, grads):
        flat, analytic = p.data.view(-1), g.reshape(-1)
        for i in range(flat.numel()):
            original = flat[i].item()
            flat[i] = original + h
            plus = loss_fn().item()
            flat[i] = original - h
            minus = loss_fn().item()
            flat[i] = original
            numeric = (plus - minus) / (2 * h)
            scale = max(abs(numeric), abs(analytic[i].item()), floor)
            assert abs(numeric - analytic[i].item()) / scale < 1e-5


def set_actor_head(agent: SacAgent, mean: float, log_std: float):
    last = agent.actor.net.layers[-1]
    with torch.no_grad():
        last.weight.zero_()
        last.bias.copy_(torch.tensor([mean, log_std], dtype=DTYPE))


def test_default_config_matches_table():
    cfg = SacConfig.from_dict()
    assert (cfg.learning_rate, cfg.discount, cfg.alpha, cfg.polyak) == (3e-4, 0.9, 0.02, 0.995)
    assert (cfg.batch_size, cfg.episode_length, cfg.measure_every) == (128, 40, 10)
    assert cfg.state_dim == 26
    with pytest.raises(ValueError):
        SacConfig(polyak_mode='fast')
    with pytest.raises(ValueError):
        SacConfig(reward_type='R9')


def test_network_shapes():
    agent = SacAgent(SacConfig(), seed=1)
    assert agent.actor.net.sizes == [26, 256, 256, 12]
    assert agent.critic1.net.sizes == [32, 512, 512, 1]
    assert all(torch.equal(a, b) for a, b in zip(agent.critic1.parameters(), agent.target1.parameters()))


def test_weight_init_bounds():
    net = Mlp([5, 7, 3])
    for layer in net.layers:
        fan_out, fan_in = layer.weight.shape
        assert layer.weight.abs().max().item() <= math.sqrt(6.0 / (fan_in + fan_out))
        assert layer.bias.abs().max().item() == 0.0


def test_actions_within_bound():
    agent = SacAgent(SacConfig(), seed=2)
    for k in range(20):
        action, log_prob = agent.act(np.random.default_rng(k).normal(size=26))
        assert action.shape == (6,)
        assert np.all(np.abs(action) <= 0.01)
        assert math.isfinite(log_prob)


def test_vanishing_noise_limit():
    agent = small_agent()
    set_actor_head(agent, 0.3, -20.0)
    state = torch.zeros(1, 2, dtype=DTYPE)
    for _ in range(10):
        action, _ = agent.actor.sample(state, generator=agent.generator)
        assert abs(action.item() - 0.01 * math.tanh(0.3)) < 1e-5


def test_log_prob_matches_sampled_density():
    agent = small_agent(seed=4)
    set_actor_head(agent, 0.3, -0.5)
    count, bins = 100000, 20
    states = torch.zeros(count, 2, dtype=DTYPE)
    with torch.no_grad():
        actions, _ = agent.actor.sample(states, generator=agent.generator)
    hist, edges = np.histogram(actions.numpy().ravel(), bins=bins, range=(-0.01, 0.01))

    total = 0.0
    for k in range(bins):
        grid = np.linspace(edges[k], edges[k + 1], 401)
        with torch.no_grad():
            log_p = agent.actor.log_prob(torch.zeros(len(grid), 2, dtype=DTYPE),
                                         torch.as_tensor(grid, dtype=DTYPE).unsqueeze(-1))
        p = trapezoid(np.exp(log_p.numpy()), grid)
        total += p
        sigma = math.sqrt(count * p * (1 - p))
        assert abs(hist[k] - count * p) <= 3 * sigma + 1e-3 * count
    assert total == pytest.approx(1.0, abs=1e-3)


def test_critic_target_reduces_to_reward():
    agent = small_agent(discount=0.0, alpha=0.0)
    batch = random_batch()
    y = agent.critic_targets(batch)
    assert torch.equal(y, torch.as_tensor(batch.rewards, dtype=DTYPE))


def test_identical_twins_have_equal_losses():
    agent = small_agent()
    agent.critic2.load_state_dict(agent.critic1.state_dict())
    agent.target2.load_state_dict(agent.target1.state_dict())
    noise = torch.zeros(6, 1, dtype=DTYPE)
    loss1, loss2 = agent.critic_loss(random_batch(), noise)
    assert loss1.item() == loss2.item()


def test_critic_gradient_check():
    agent = small_agent()
    batch = random_batch()
    noise = torch.as_tensor(np.random.default_rng(1).normal(size=(6, 1)), dtype=DTYPE)
    params = list(agent.critic1.parameters())
    assert_gradients_match(params, lambda: sum(agent.critic_loss(batch, noise)))


def test_actor_gradient_check():
    agent = small_agent(alpha=0.5)
    batch = random_batch(seed=3)
    noise = torch.as_tensor(np.random.default_rng(2).normal(size=(6, 1)), dtype=DTYPE)
    params = list(agent.actor.parameters())
    assert_gradients_match(params, lambda: agent.actor_loss(batch, noise))


def test_zero_critic_gives_entropy_loss():
    agent = small_agent(activation='relu')
    for critic in (agent.critic1, agent.critic2):
        with torch.no_grad():
            critic.net.layers[-1].weight.zero_()
            critic.net.layers[-1].bias.zero_()
    batch = random_batch()
    noise = torch.as_tensor(np.random.default_rng(5).normal(size=(6, 1)), dtype=DTYPE)
    _, log_prob = agent.actor.sample(torch.as_tensor(batch.states, dtype=DTYPE), noise)
    expected = agent.cfg.alpha * log_prob.mean()
    assert agent.actor_loss(batch, noise).item() == pytest.approx(expected.item(), rel=1e-12)


def test_entropy_domination_raises_log_std():
    agent = small_agent(activation='relu', alpha=1000.0)
    set_actor_head(agent, 0.0, -3.0)
    batch = random_batch(size=32)
    trace = [agent.mean_log_std(batch.states)]
    for step in range(100):
        agent.actor_update(batch)
        if (step + 1) % 10 == 0:
            trace.append(agent.mean_log_std(batch.states))
    assert all(b > a for a, b in zip(trace, trace[1:]))


def test_polyak_fixed_point_and_step():
    online = Mlp([2, 3, 1])
    target = Mlp([2, 3, 1])
    target.load_state_dict(online.state_dict())
    polyak_update(target, online)
    for t, o in zip(target.parameters(), online.parameters()):
        assert torch.allclose(t, o, rtol=1e-14, atol=0)

    with torch.no_grad():
        for p in online.parameters():
            p.fill_(1.0)
        for p in target.parameters():
            p.fill_(0.0)
    polyak_update(target, online, 0.995)
    assert all(torch.allclose(p, torch.full_like(p, 0.005)) for p in target.parameters())

    for _ in range(99):
        polyak_update(target, online, 0.995)
    assert all(torch.allclose(p, torch.full_like(p, 1 - 0.995 ** 100)) for p in target.parameters())


def test_polyak_literal_mode_and_shape_guard():
    online, target = Mlp([2, 1]), Mlp([2, 1])
    with torch.no_grad():
        for p in online.parameters():
            p.fill_(1.0)
        for p in target.parameters():
            p.fill_(0.0)
    polyak_update(target, online, 0.995, mode='literal')
    assert all(torch.allclose(p, torch.full_like(p, 0.995)) for p in target.parameters())
    with pytest.raises(ValueError):
        polyak_update(Mlp([2, 1]), Mlp([3, 1]))


def test_targets_move_every_second_step():
    agent = small_agent()
    before = [p.clone() for p in agent.target1.parameters()]
    batch = random_batch(size=8)
    losses = agent.update(batch)
    assert set(losses) == {'critic1', 'critic2', 'actor'}
    assert all(torch.equal(a, b) for a, b in zip(before, agent.target1.parameters()))
    agent.update(batch)
    assert not all(torch.equal(a, b) for a, b in zip(before, agent.target1.parameters()))


def test_buffer_fifo_and_sampling():
    buffer = ReplayBuffer(2, 1, capacity=5, rng=np.random.default_rng(0))
    for k in range(12):
        buffer.add(Transition(np.full(2, k), np.zeros(1), float(k), np.full(2, k + 1), False))
        assert len(buffer) == min(k + 1, 5)
    batch = buffer.sample(5)
    assert sorted(batch.rewards.tolist()) == [7.0, 8.0, 9.0, 10.0, 11.0]
    assert np.array_equal(batch.states[:, 0], batch.rewards)
    with pytest.raises(ValueError):
        buffer.sample(6)


def test_buffer_grows_lazily():
    buffer = ReplayBuffer(2, 1, capacity=3000)
    assert buffer.states.shape[0] == 1024
    for k in range(1500):
        buffer.add(Transition(np.zeros(2), np.zeros(1), float(k), np.zeros(2), False))
    assert buffer.states.shape[0] == 2048
    assert buffer.rewards[1499] == 1499.0
    assert buffer.rewards[0] == 0.0


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
