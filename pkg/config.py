"""
Configuration management for the adiabatic factorization toolkit
"""
import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


class Config:
    """Application configuration"""

    # Run settings
    MASTER_SEED = int(os.getenv('AQC_SEED', 20220101))
    WORKERS = int(os.getenv('AQC_WORKERS', 1))
    LOG_LEVEL = os.getenv('AQC_LOG_LEVEL', 'INFO')

    # Project paths
    BASE_DIR = Path(__file__).parent
    OUTPUT_DIR = Path(os.getenv('AQC_OUTPUT_DIR', BASE_DIR / 'output'))
    LOGS_DIR = OUTPUT_DIR / 'logs'
    INSTANCES_DIR = OUTPUT_DIR / 'instances'
    TEMPLATES_DIR = BASE_DIR / 'templates'

    # Encoder settings
    ENCODER_DEFAULTS = {
        'block_width': 3,           # W, matches the 143 = 11 x 13 worked example
        'range_start': 49,
        'range_stop': 633,
        'max_brute_force_qubits': 24,
        'semiprimes_only': True,    # classes hold N = p * q with p, q prime
    }

    # Simulated annealing hardness profile
    HARDNESS_DEFAULTS = {
        'runs': 500,
        'beta0': 0.1,               # on normalized energies
        'j0_cap': 2 ** 20,
        'success_tolerance': 1e-12,
    }

    # Adiabatic evolution
    DYNAMICS_DEFAULTS = {
        'p_th': 0.1,
        't_start': 10.0,
        't_ratio': 1.2,
        't_grid_size': 40,
        'min_steps': 1000,
        'steps_per_unit_time': 10,
        'refine_tolerance': 1e-6,
        'max_refinements': 6,
        'driver': 'transverse_field',   # H_B = -sum_i sigma_x_i
    }

    # Soft actor-critic table
    SAC_DEFAULTS = {
        'learning_rate': 3e-4,
        'discount': 0.9,
        'alpha': 0.02,
        'polyak': 0.995,
        'polyak_mode': 'slow_target',
        'target_update_interval': 2,
        'gradient_steps': 2,
        'batch_size': 128,
        'episodes': 1000,
        'episode_length': 40,
        'measure_every': 10,
        'reward_scale': 5.0,
        'reward_type': 'R1',
        'log_std_min': -10.0,
        'log_std_max': 1.0,
        'random_steps': 0,
        'buffer_size': 10 ** 6,
        'actor_hidden': 256,
        'critic_hidden': 512,
        'hidden_layers': 2,
        'action_bound': 0.01,
        'schedule_terms': 6,
        'max_resamples': 100,
    }

    @classmethod
    def create_directories(cls, output_dir: Path = None):
        """Create necessary directories if they don't exist"""
        base = Path(output_dir) if output_dir else cls.OUTPUT_DIR
        for directory in [base, base / 'logs', base / 'instances']:
            directory.mkdir(parents=True, exist_ok=True)

    @classmethod
    def defaults(cls) -> dict:
        """All section defaults keyed by section name"""
        return {
            'encoder': dict(cls.ENCODER_DEFAULTS),
            'hardness': dict(cls.HARDNESS_DEFAULTS),
            'dynamics': dict(cls.DYNAMICS_DEFAULTS),
            'sac': dict(cls.SAC_DEFAULTS),
        }
