"""
Unified Configuration Manager
Resolves run parameters from CLI flags, environment, config file and defaults
Priority: CLI → ENV → Config file → Defaults
"""
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

from config import Config
from modules.persistence import load_json, save_json

logger = logging.getLogger(__name__)

SECTIONS = ('encoder', 'hardness', 'dynamics', 'sac')


def _coerce(value: str, like: Any) -> Any:
    """Parse an environment string to the type of the default it overrides"""
    if isinstance(like, bool):
        return value.strip().lower() in ('1', 'true', 'yes', 'on')
    if isinstance(like, int):
        return int(float(value))
    if isinstance(like, float):
        return float(value)
    if isinstance(like, (list, dict)):
        return json.loads(value)
    return value


@dataclass
class RunConfig:
    """Resolved parameters for one CLI command"""
    command: str
    seed: int
    output_dir: Path
    workers: int
    encoder: Dict[str, Any] = field(default_factory=dict)
    hardness: Dict[str, Any] = field(default_factory=dict)
    dynamics: Dict[str, Any] = field(default_factory=dict)
    sac: Dict[str, Any] = field(default_factory=dict)
    args: Dict[str, Any] = field(default_factory=dict)

    def section(self, name: str) -> Dict[str, Any]:
        return getattr(self, name)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'command': self.command,
            'seed': self.seed,
            'output_dir': str(self.output_dir),
            'workers': self.workers,
            'encoder': self.encoder,
            'hardness': self.hardness,
            'dynamics': self.dynamics,
            'sac': self.sac,
            'args': self.args,
        }

    def snapshot_path(self) -> Path:
        return Path(self.output_dir) / f"{self.command}_config.json"

    def save_snapshot(self) -> Path:
        """Write `<out>/<command>_config.json`"""
        path = self.snapshot_path()
        save_json(self.to_dict(), path)
        return path


class ConfigManager:
    """
    Centralized configuration management

    Load hierarchy:
    1. CLI flags (highest priority)
    2. Environment variables AQC_<SECTION>_<KEY>
    3. JSON config file (same layout as templates/run_config.json)
    4. Default values from Config (fallback)
    """

    def __init__(self, config_file: Optional[str] = None, environ: Optional[Dict[str, str]] = None):
        """
        Initialize configuration manager

        Args:
            config_file: Optional JSON config path
            environ: Environment mapping (default: os.environ)
        """
        self._environ = os.environ if environ is None else environ
        self._file_settings: Dict[str, Any] = {}
        self._defaults = Config.defaults()

        if config_file:
            data = load_json(config_file)
            if data is None:
                raise FileNotFoundError(f"Config file not found: {config_file}")
            if not isinstance(data, dict):
                raise ValueError(f"Config file {config_file} must hold a JSON object")
            self._file_settings = data

    def get(self, section: str, key: str, default: Any = None) -> Any:
        """
        Get configuration value with priority hierarchy (CLI excluded)

        Args:
            section: Config section (e.g., 'hardness', 'sac')
            key: Config key
            default: Default value if not found

        Returns:
            Configuration value
        """
        fallback = self._defaults.get(section, {}).get(key, default)

        # Priority 1: Environment variable
        env_value = self._environ.get(f"AQC_{section.upper()}_{key.upper()}")
        if env_value is not None:
            return _coerce(env_value, fallback) if fallback is not None else env_value

        # Priority 2: Config file
        file_section = self._file_settings.get(section, {})
        if key in file_section:
            return file_section[key]

        # Priority 3: Defaults
        return fallback

    def get_section(self, section: str) -> Dict[str, Any]:
        """Get a complete section"""
        keys = list(self._defaults.get(section, {}))
        keys += [k for k in self._file_settings.get(section, {}) if k not in keys]
        return {key: self.get(section, key) for key in keys}

    def _global(self, key: str, env_key: str, default: Any) -> Any:
        if env_key in self._environ:
            return _coerce(self._environ[env_key], default)
        return self._file_settings.get(key, default)

    def resolve(self, command: str, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """
        Build the RunConfig for a command

        Args:
            command: CLI command name
            overrides: CLI values; 'seed', 'out', 'workers' plus
                '<section>.<key>' entries and free command args. None values
                are ignored.

        Returns:
            RunConfig with every layer applied
        """
        overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

        seed = int(overrides.pop('seed', self._global('seed', 'AQC_SEED', Config.MASTER_SEED)))
        out = Path(overrides.pop('out', self._global('output_dir', 'AQC_OUTPUT_DIR', str(Config.OUTPUT_DIR))))
        workers = int(overrides.pop('workers', self._global('workers', 'AQC_WORKERS', Config.WORKERS)))

        sections = {name: self.get_section(name) for name in SECTIONS}
        args = {}
        for key, value in overrides.items():
            if '.' in key:
                section, name = key.split('.', 1)
                if section not in sections:
                    raise ValueError(f"Unknown config section '{section}'")
                sections[section][name] = value
            else:
                args[key] = value

        if workers < 1:
            raise ValueError(f"workers must be >= 1, got {workers}")

        logger.debug("Resolved %s config (seed=%d, out=%s, workers=%d)", command, seed, out, workers)
        return RunConfig(command=command, seed=seed, output_dir=out, workers=workers, args=args, **sections)


def replay_snapshot(path: str) -> RunConfig:
    """Rebuild a RunConfig from a saved snapshot"""
    data = load_json(path)
    if data is None:
        raise FileNotFoundError(f"Snapshot not found: {path}")
    return RunConfig(
        command=data['command'],
        seed=int(data['seed']),
        output_dir=Path(data['output_dir']),
        workers=int(data['workers']),
        encoder=data.get('encoder', {}),
        hardness=data.get('hardness', {}),
        dynamics=data.get('dynamics', {}),
        sac=data.get('sac', {}),
        args=data.get('args', {}),
    )

