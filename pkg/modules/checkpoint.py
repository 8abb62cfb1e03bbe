"""
Training checkpoints
Self-describing JSON container: little-endian float64 arrays (base64) with shapes,
Adam moments, RNG state, config snapshot and the best schedule found.
"""
import base64
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np
import torch

from modules.persistence import atomic_write_text, dumps_json, load_json
from modules.sac_agent import DTYPE, SacAgent

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 'aqc-sac-1'
WEIGHT_INIT = 'uniform +-sqrt(6/(fan_in+fan_out)), zero bias'


class CheckpointError(ValueError):
    """Unreadable or incompatible checkpoint"""


def encode_array(array: np.ndarray, dtype: str = '<f8') -> Dict[str, Any]:
    data = np.ascontiguousarray(np.asarray(array).astype(dtype))
    return {
        'dtype': dtype,
        'shape': list(data.shape),
        'data': base64.b64encode(data.tobytes()).decode('ascii'),
    }


def decode_array(blob: Dict[str, Any]) -> np.ndarray:
    if blob.get('dtype') not in ('<f8', '|u1'):
        raise CheckpointError(f"Unsupported array dtype {blob.get('dtype')}")
    raw = base64.b64decode(blob['data'])
    array = np.frombuffer(raw, dtype=np.dtype(blob['dtype']))
    expected = int(np.prod(blob['shape'])) if blob['shape'] else 1
    if array.size != expected:
        raise CheckpointError(f"Array holds {array.size} values, shape {blob['shape']} needs {expected}")
    return array.reshape(blob['shape']).copy()


def _optimizer_to_dict(optimizer: torch.optim.Optimizer) -> Dict[str, Any]:
    state = optimizer.state_dict()
    moments = {}
    for index, slot in state['state'].items():
        moments[str(index)] = {
            'step': float(slot['step']),
            'exp_avg': encode_array(slot['exp_avg'].detach().numpy()),
            'exp_avg_sq': encode_array(slot['exp_avg_sq'].detach().numpy()),
        }
    groups = []
    for group in state['param_groups']:
        groups.append({k: (list(v) if isinstance(v, tuple) else v) for k, v in group.items()})
    return {'state': moments, 'param_groups': groups}


def _optimizer_from_dict(data: Dict[str, Any]) -> Dict[str, Any]:
    state = {}
    for index, slot in data['state'].items():
        state[int(index)] = {
            'step': torch.tensor(slot['step']),
            'exp_avg': torch.as_tensor(decode_array(slot['exp_avg']), dtype=DTYPE),
            'exp_avg_sq': torch.as_tensor(decode_array(slot['exp_avg_sq']), dtype=DTYPE),
        }
    groups = [dict(g, betas=tuple(g['betas'])) if 'betas' in g else dict(g) for g in data['param_groups']]
    return {'state': state, 'param_groups': groups}


@dataclass
class Checkpoint:
    C: int
    qubits: int
    state_dim: int
    action_dim: int
    networks: Dict[str, Dict[str, np.ndarray]]
    optimizers: Dict[str, Dict[str, Any]]
    best_b: List[float]
    best_reward: float
    rng: Dict[str, Any]
    config: Dict[str, Any]
    episode: int = 0
    b: List[float] = field(default_factory=list)
    activation: str = 'relu'
    version: str = CHECKPOINT_VERSION

    @classmethod
    def capture(cls, trainer, qubits: int) -> 'Checkpoint':
        """Snapshot a SacTrainer (networks, optimizers, RNG, best schedule)"""
        agent: SacAgent = trainer.agent
        networks = {
            name: {key: value.detach().numpy().copy() for key, value in net.state_dict().items()}
            for name, net in agent.networks().items()
        }
        rng = dict(trainer.rng_state())
        rng['torch'] = agent.generator.get_state().numpy().copy()
        return cls(
            C=trainer.cfg.schedule_terms,
            qubits=qubits,
            state_dim=agent.state_dim,
            action_dim=agent.action_dim,
            networks=networks,
            optimizers={name: _optimizer_to_dict(opt) for name, opt in agent.optimizers().items()},
            best_b=[float(v) for v in trainer.best_b],
            best_reward=float(trainer.best_reward),
            rng=rng,
            config=trainer.cfg.to_dict(),
            episode=trainer.episode,
            b=[float(v) for v in trainer.b],
            activation=agent.activation,
        )

    def load_networks(self, agent: SacAgent, names: List[str]):
        """Copy the named networks into an agent, shapes checked"""
        targets = agent.networks()
        for name in names:
            if name not in self.networks:
                raise CheckpointError(f"Checkpoint has no network '{name}'")
            module = targets[name]
            current = module.state_dict()
            stored = self.networks[name]
            if list(current) != list(stored):
                raise ValueError(f"Network '{name}' layout differs: {list(stored)} vs {list(current)}")
            for key, array in stored.items():
                if tuple(current[key].shape) != array.shape:
                    raise ValueError(f"{name}.{key}: shape {array.shape} vs {tuple(current[key].shape)}")
            module.load_state_dict({k: torch.as_tensor(v, dtype=DTYPE) for k, v in stored.items()})

    def restore(self, trainer):
        """Resume a trainer exactly where the snapshot was taken"""
        agent: SacAgent = trainer.agent
        self.load_networks(agent, list(agent.networks()))
        for name, optimizer in agent.optimizers().items():
            optimizer.load_state_dict(_optimizer_from_dict(self.optimizers[name]))
        agent.generator.set_state(torch.from_numpy(np.asarray(self.rng['torch'], dtype=np.uint8)))
        trainer.set_rng_state(self.rng)
        trainer.best_b = np.asarray(self.best_b, dtype=float)
        trainer.best_reward = self.best_reward
        trainer.episode = self.episode
        if self.b:
            trainer.b = np.asarray(self.b, dtype=float)

    def to_dict(self) -> Dict[str, Any]:
        rng = {k: (encode_array(v, '|u1') if k == 'torch' else v) for k, v in self.rng.items()}
        return {
            'version': self.version,
            'C': self.C,
            'qubits': self.qubits,
            'state_dim': self.state_dim,
            'action_dim': self.action_dim,
            'activation': self.activation,
            'weight_init': WEIGHT_INIT,
            'layer_shapes': {name: {k: list(v.shape) for k, v in net.items()}
                             for name, net in self.networks.items()},
            'networks': {name: {k: encode_array(v) for k, v in net.items()}
                         for name, net in self.networks.items()},
            'optimizers': self.optimizers,
            'best_b': self.best_b,
            'best_reward': self.best_reward,
            'episode': self.episode,
            'b': self.b,
            'rng': rng,
            'config': self.config,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Checkpoint':
        version = data.get('version')
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"Unknown checkpoint version '{version}'")
        try:
            networks = {name: {k: decode_array(v) for k, v in net.items()}
                        for name, net in data['networks'].items()}
            for name, shapes in data.get('layer_shapes', {}).items():
                for key, shape in shapes.items():
                    if list(networks[name][key].shape) != shape:
                        raise CheckpointError(f"{name}.{key} does not match its shape table")
            rng = {k: (decode_array(v) if k == 'torch' else v) for k, v in data['rng'].items()}
            return cls(
                C=data['C'],
                qubits=data['qubits'],
                state_dim=data['state_dim'],
                action_dim=data['action_dim'],
                networks=networks,
                optimizers=data['optimizers'],
                best_b=data['best_b'],
                best_reward=data['best_reward'],
                rng=rng,
                config=data['config'],
                episode=data.get('episode', 0),
                b=data.get('b', []),
                activation=data.get('activation', 'relu'),
                version=version,
            )
        except KeyError as e:
            raise CheckpointError(f"Checkpoint is missing field {e}") from e


def save_checkpoint(checkpoint: Checkpoint, path) -> None:
    """Atomic write (temp file then rename)"""
    atomic_write_text(dumps_json(checkpoint.to_dict()), path)
    logger.info("Checkpoint saved: %s", path)


def load_checkpoint(path) -> Checkpoint:
    data = load_json(path)
    if data is None:
        raise CheckpointError(f"Checkpoint not found: {path}")
    return Checkpoint.from_dict(data)
