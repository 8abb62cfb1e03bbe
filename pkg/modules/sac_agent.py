"""
Soft actor-critic agent
Squashed-Gaussian actor, twin critics with Polyak-averaged targets, replay buffer
"""
import copy
import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from config import Config

logger = logging.getLogger(__name__)

DTYPE = torch.float64
POLYAK_MODES = ('slow_target', 'literal')
REWARD_TYPES = ('R1', 'R2', 'R3', 'R4', 'R5')


@dataclass
class SacConfig:
    """Hyperparameters, defaults from Config.SAC_DEFAULTS"""
    learning_rate: float = 3e-4
    discount: float = 0.9
    alpha: float = 0.02
    polyak: float = 0.995
    polyak_mode: str = 'slow_target'
    target_update_interval: int = 2
    gradient_steps: int = 2
    batch_size: int = 128
    episodes: int = 1000
    episode_length: int = 40
    measure_every: int = 10
    reward_scale: float = 5.0
    reward_type: str = 'R1'
    log_std_min: float = -10.0
    log_std_max: float = 1.0
    random_steps: int = 0
    buffer_size: int = 10 ** 6
    actor_hidden: int = 256
    critic_hidden: int = 512
    hidden_layers: int = 2
    action_bound: float = 0.01
    schedule_terms: int = 6
    max_resamples: int = 100

    def __post_init__(self):
        if self.polyak_mode not in POLYAK_MODES:
            raise ValueError(f"polyak_mode must be one of {POLYAK_MODES}, got '{self.polyak_mode}'")
        if self.reward_type not in REWARD_TYPES:
            raise ValueError(f"reward_type must be one of {REWARD_TYPES}, got '{self.reward_type}'")
        if not 1 <= self.episode_length <= 98:
            raise ValueError("episode_length must fit the two-digit step encoding")

    @classmethod
    def from_dict(cls, data: Optional[Dict] = None) -> 'SacConfig':
        values = dict(Config.SAC_DEFAULTS)
        values.update(data or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            logger.warning("Ignoring unknown SAC settings: %s", unknown)
        return cls(**{k: v for k, v in values.items() if k in known})

    def to_dict(self) -> Dict:
        return asdict(self)

    @property
    def state_dim(self) -> int:
        return 20 + self.schedule_terms


class Mlp(nn.Module):
    """Fully connected net; hidden activation 'relu' or 'tanh', linear output"""

    def __init__(self, sizes: Sequence[int], activation: str = 'relu',
                 generator: Optional[torch.Generator] = None):
        super().__init__()
        if activation not in ('relu', 'tanh'):
            raise ValueError(f"Unknown activation '{activation}'")
        self.sizes = list(sizes)
        self.activation = activation
        self.layers = nn.ModuleList([
            nn.Linear(fan_in, fan_out, dtype=DTYPE)
            for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:])
        ])
        self.init_param(generator)

    def init_param(self, generator: Optional[torch.Generator] = None):
        """Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero"""
        with torch.no_grad():
            for layer in self.layers:
                fan_out, fan_in = layer.weight.shape
                bound = math.sqrt(6.0 / (fan_in + fan_out))
                draw = torch.rand(layer.weight.shape, generator=generator, dtype=DTYPE)
                layer.weight.copy_((2.0 * draw - 1.0) * bound)
                layer.bias.zero_()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        act = torch.relu if self.activation == 'relu' else torch.tanh
        for layer in self.layers[:-1]:
            x = act(layer(x))
        return self.layers[-1](x)


def _log_squash_jacobian(u: torch.Tensor, bound: float) -> torch.Tensor:
    """log(bound * (1 - tanh(u)^2)), stable for large |u|"""
    return math.log(bound) + 2.0 * (math.log(2.0) - u - nn.functional.softplus(-2.0 * u))


class Actor(nn.Module):
    """Gaussian head (mean, log-std), tanh squash scaled to +-bound"""

    def __init__(self, state_dim: int, action_dim: int, hidden: int, layers: int = 2,
                 bound: float = 0.01, log_std_range: Tuple[float, float] = (-10.0, 1.0),
                 activation: str = 'relu', generator: Optional[torch.Generator] = None):
        super().__init__()
        self.action_dim = action_dim
        self.bound = bound
        self.log_std_min, self.log_std_max = log_std_range
        self.net = Mlp([state_dim] + [hidden] * layers + [2 * action_dim], activation, generator)

    def forward(self, state: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        out = self.net(state)
        mean, log_std = out[..., :self.action_dim], out[..., self.action_dim:]
        return mean, torch.clamp(log_std, self.log_std_min, self.log_std_max)

    def sample(self, state: torch.Tensor, noise: Optional[torch.Tensor] = None,
               generator: Optional[torch.Generator] = None) -> Tuple[torch.Tensor, torch.Tensor]:
        """Reparameterized sample and its log-density including the squash correction"""
        mean, log_std = self(state)
        if noise is None:
            noise = torch.randn(mean.shape, generator=generator, dtype=DTYPE)
        u = mean + torch.exp(log_std) * noise
        action = self.bound * torch.tanh(u)
        log_prob = self._gaussian_log_prob(u, mean, log_std) - _log_squash_jacobian(u, self.bound).sum(-1)
        return action, log_prob

    def log_prob(self, state: torch.Tensor, action: torch.Tensor) -> torch.Tensor:
        mean, log_std = self(state)
        ratio = torch.clamp(action / self.bound, -1.0 + 1e-12, 1.0 - 1e-12)
        u = torch.atanh(ratio)
        return self._gaussian_log_prob(u, mean, log_std) - _log_squash_jacobian(u, self.bound).sum(-1)

    def deterministic(self, state: torch.Tensor) -> torch.Tensor:
        mean, _ = self(state)
        return self.bound * torch.tanh(mean)

    @staticmethod
    def _gaussian_log_prob(u, mean, log_std) -> torch.Tensor:
        z = (u - mean) * torch.exp(-log_std)
        return (-0.5 * z ** 2 - log_std - 0.5 * math.log(2.0 * math.pi)).sum(-1)


class Critic(nn.Module):
    """Q(s, a) on the concatenated state and action"""

    def __init__(self, state_dim: int, action_dim: int, hidden: int, layers: int = 2,
                 activation: str = 'relu', generator: Optional[torch.Generator] = None):
        super().__init__()
        self.net = Mlp([state_dim + action_dim] + [hidden] * layers + [1], activation, generator)

    def forward(self, state: torch.Tensor, action: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat([state, action], dim=-1)).squeeze(-1)


def polyak_update(target: nn.Module, online: nn.Module, eta: float = 0.995,
                  mode: str = 'slow_target') -> nn.Module:
    """
    slow_target: target <- eta * target + (1 - eta) * online
    literal:     target <- eta * online + (1 - eta) * target
    """
    if mode not in POLYAK_MODES:
        raise ValueError(f"Unknown polyak mode '{mode}'")
    target_params = list(target.parameters())
    online_params = list(online.parameters())
    if len(target_params) != len(online_params):
        raise ValueError("Target and online networks have different layouts")
    with torch.no_grad():
        for t, o in zip(target_params, online_params):
            if t.shape != o.shape:
                raise ValueError(f"Shape mismatch {tuple(t.shape)} vs {tuple(o.shape)}")
            if mode == 'slow_target':
                t.mul_(eta).add_(o, alpha=1.0 - eta)
            else:
                t.mul_(1.0 - eta).add_(o, alpha=eta)
    return target


class Batch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


class ReplayBuffer:
    """FIFO ring buffer; storage grows on demand up to capacity"""

    def __init__(self, state_dim: int, action_dim: int, capacity: int = 10 ** 6,
                 rng: Optional[np.random.Generator] = None):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.capacity = capacity
        self.rng = rng or np.random.default_rng()
        self._allocated = 0
        self._next = 0
        self.size = 0
        self.inserted = 0
        self._grow(min(capacity, 1024))

    def _grow(self, allocated: int):
        def resize(old, shape):
            new = np.zeros(shape, dtype=float)
            if old is not None:
                new[:len(old)] = old
            return new

        self.states = resize(getattr(self, 'states', None), (allocated, self.state_dim))
        self.actions = resize(getattr(self, 'actions', None), (allocated, self.action_dim))
        self.rewards = resize(getattr(self, 'rewards', None), (allocated,))
        self.next_states = resize(getattr(self, 'next_states', None), (allocated, self.state_dim))
        self.dones = resize(getattr(self, 'dones', None), (allocated,))
        self._allocated = allocated

    def __len__(self) -> int:
        return self.size

    def add(self, transition: Transition):
        if self._next >= self._allocated and self._allocated < self.capacity:
            self._grow(min(self.capacity, 2 * self._allocated))
        i = self._next
        self.states[i] = transition.state
        self.actions[i] = transition.action
        self.rewards[i] = transition.reward
        self.next_states[i] = transition.next_state
        self.dones[i] = float(transition.done)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.inserted += 1

    def sample(self, batch_size: int) -> Batch:
        """Uniform sample without replacement"""
        if batch_size > self.size:
            raise ValueError(f"Cannot sample {batch_size} from {self.size} transitions")
        idx = self.rng.choice(self.size, size=batch_size, replace=False)
        return Batch(self.states[idx].copy(), self.actions[idx].copy(), self.rewards[idx].copy(),
                     self.next_states[idx].copy(), self.dones[idx].copy())


def _tensors(batch: Batch) -> Tuple[torch.Tensor, ...]:
    return tuple(torch.as_tensor(np.asarray(x), dtype=DTYPE) for x in batch)


class SacAgent:
    """Actor, twin critics and targets with their optimizers"""

    def __init__(self, cfg: SacConfig, seed: int = 0, state_dim: Optional[int] = None,
                 action_dim: Optional[int] = None, activation: str = 'relu'):
        self.cfg = cfg
        self.state_dim = state_dim or cfg.state_dim
        self.action_dim = action_dim or cfg.schedule_terms
        self.activation = activation
        self.generator = torch.Generator().manual_seed(int(seed))

        self.actor = Actor(self.state_dim, self.action_dim, cfg.actor_hidden, cfg.hidden_layers,
                           cfg.action_bound, (cfg.log_std_min, cfg.log_std_max), activation, self.generator)
        self.critic1 = Critic(self.state_dim, self.action_dim, cfg.critic_hidden, cfg.hidden_layers,
                              activation, self.generator)
        self.critic2 = Critic(self.state_dim, self.action_dim, cfg.critic_hidden, cfg.hidden_layers,
                              activation, self.generator)
        self.target1 = copy.deepcopy(self.critic1)
        self.target2 = copy.deepcopy(self.critic2)
        for p in list(self.target1.parameters()) + list(self.target2.parameters()):
            p.requires_grad_(False)

        self.reset_optimizers()
        self.gradient_steps = 0

    def reset_optimizers(self):
        self.actor_optimizer = torch.optim.Adam(self.actor.parameters(), lr=self.cfg.learning_rate)
        self.critic_optimizer = torch.optim.Adam(
            list(self.critic1.parameters()) + list(self.critic2.parameters()), lr=self.cfg.learning_rate
        )

    def networks(self) -> Dict[str, nn.Module]:
        return {
            'actor': self.actor,
            'critic1': self.critic1,
            'critic2': self.critic2,
            'target1': self.target1,
            'target2': self.target2,
        }

    def optimizers(self) -> Dict[str, torch.optim.Optimizer]:
        return {'actor': self.actor_optimizer, 'critic': self.critic_optimizer}

    def act(self, state: np.ndarray) -> Tuple[np.ndarray, float]:
        with torch.no_grad():
            action, log_prob = self.actor.sample(torch.as_tensor(state, dtype=DTYPE).unsqueeze(0),
                                                 generator=self.generator)
        return action.squeeze(0).numpy(), float(log_prob.item())

    def critic_targets(self, batch: Batch, noise: Optional[torch.Tensor] = None) -> torch.Tensor:
        """y = r + gamma * (min target Q(s', a') - alpha log pi(a'|s')), a' from the current actor"""
        _, _, rewards, next_states, _ = _tensors(batch)
        with torch.no_grad():
            next_actions, next_log_prob = self.actor.sample(next_states, noise, self.generator)
            q_next = torch.min(self.target1(next_states, next_actions), self.target2(next_states, next_actions))
            return rewards + self.cfg.discount * (q_next - self.cfg.alpha * next_log_prob)

    def critic_loss(self, batch: Batch, noise: Optional[torch.Tensor] = None) -> Tuple[torch.Tensor, torch.Tensor]:
        states, actions, _, _, _ = _tensors(batch)
        y = self.critic_targets(batch, noise)
        loss1 = ((self.critic1(states, actions) - y) ** 2).mean()
        loss2 = ((self.critic2(states, actions) - y) ** 2).mean()
        return loss1, loss2

    def actor_loss(self, batch: Batch, noise: Optional[torch.Tensor] = None) -> torch.Tensor:
        """mean(alpha log pi(a~|s) - min Q(s, a~)) with reparameterized a~"""
        states = _tensors(batch)[0]
        actions, log_prob = self.actor.sample(states, noise, self.generator)
        q = torch.min(self.critic1(states, actions), self.critic2(states, actions))
        return (self.cfg.alpha * log_prob - q).mean()

    def critic_update(self, batch: Batch) -> Tuple[float, float]:
        loss1, loss2 = self.critic_loss(batch)
        self.critic_optimizer.zero_grad()
        (loss1 + loss2).backward()
        self.critic_optimizer.step()
        return float(loss1.item()), float(loss2.item())

    def actor_update(self, batch: Batch) -> float:
        for p in list(self.critic1.parameters()) + list(self.critic2.parameters()):
            p.requires_grad_(False)
        try:
            loss = self.actor_loss(batch)
            self.actor_optimizer.zero_grad()
            loss.backward()
            self.actor_optimizer.step()
        finally:
            for p in list(self.critic1.parameters()) + list(self.critic2.parameters()):
                p.requires_grad_(True)
        return float(loss.item())

    def update(self, batch: Batch) -> Dict[str, float]:
        """One gradient step: critics, then actor, then targets every interval"""
        loss1, loss2 = self.critic_update(batch)
        actor_loss = self.actor_update(batch)
        self.gradient_steps += 1
        if self.gradient_steps % self.cfg.target_update_interval == 0:
            polyak_update(self.target1, self.critic1, self.cfg.polyak, self.cfg.polyak_mode)
            polyak_update(self.target2, self.critic2, self.cfg.polyak, self.cfg.polyak_mode)
        return {'critic1': loss1, 'critic2': loss2, 'actor': actor_loss}

    def mean_log_std(self, states: np.ndarray) -> float:
        with torch.no_grad():
            _, log_std = self.actor(torch.as_tensor(states, dtype=DTYPE))
        return float(log_std.mean().item())
