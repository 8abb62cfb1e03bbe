"""
Session Logging
One session per CLI invocation: a plain-text log, a JSON event stream and a
progress file with one entry per pipeline command.
"""
import json
import logging
import time
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional

from config import Config
from modules.persistence import atomic_write_text


PIPELINE_STAGES = ('encode', 'profile', 'calibrate', 'classify', 'train', 'transfer', 'evaluate')

GLYPHS = {
    'SUCCESS': "✓",
    'ERROR': "✗",
    'WARNING': "⚠",
    'INFO': "ℹ",
    'PROGRESS': "→",
    'DEBUG': "·",
    'VERBOSE': "▸",
}


class LogLevel(Enum):
    DEBUG = "DEBUG"
    INFO = "INFO"
    SUCCESS = "SUCCESS"
    WARNING = "WARNING"
    ERROR = "ERROR"
    PROGRESS = "PROGRESS"
    VERBOSE = "VERBOSE"  # payload echoed to the console

    @property
    def python_level(self) -> int:
        return {
            LogLevel.DEBUG: logging.DEBUG,
            LogLevel.WARNING: logging.WARNING,
            LogLevel.ERROR: logging.ERROR,
        }.get(self, logging.INFO)


def _now() -> str:
    return datetime.now().isoformat()


def _json(data, indent: Optional[int] = 2) -> str:
    return json.dumps(data, indent=indent, default=str)


class PipelineLogger:
    """
    Session log for one pipeline command

    Files under <log_root>/<session_id>/:
        pipeline.log   - timestamped text lines
        events.json    - every event with its data payload
        progress.json  - status per stage, errors, final results
    """

    def __init__(self, session_id: Optional[str] = None, log_root: Optional[Path] = None,
                 console: bool = True):
        """
        Args:
            session_id: Session folder name, defaults to a time-based id
            log_root: Directory holding session folders (default: Config.LOGS_DIR)
            console: Echo events to stdout
        """
        self.session_id = session_id or f"session_{int(time.time())}"
        self.session_start = time.time()
        self.console = console

        self.log_dir = Path(log_root or Config.LOGS_DIR) / self.session_id
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.main_log = self.log_dir / "pipeline.log"
        self.progress_log = self.log_dir / "progress.json"
        self.events_log = self.log_dir / "events.json"

        self.progress = {
            'session_id': self.session_id,
            'started_at': _now(),
            'status': 'initializing',
            'current_stage': None,
            'stages': {},
            'errors': [],
            'completed_at': None,
        }
        self.events: List[Dict] = []
        self._stage_clock: Dict[str, float] = {}

        self.file_logger = logging.getLogger(f'pipeline_{self.session_id}')
        self.file_logger.setLevel(logging.DEBUG)
        self.file_logger.propagate = False
        self._handler = logging.FileHandler(self.main_log)
        self._handler.setFormatter(logging.Formatter('%(asctime)s | %(levelname)-8s | %(message)s',
                                                     datefmt='%Y-%m-%d %H:%M:%S'))
        self.file_logger.addHandler(self._handler)

        self.log(LogLevel.INFO, "Session started", {'session_id': self.session_id,
                                                    'log_dir': str(self.log_dir)})

    def close(self):
        """Flush progress and detach the file handler"""
        self._save_progress()
        self.file_logger.removeHandler(self._handler)
        self._handler.close()

    def log(self, level: LogLevel, message: str, data: Optional[Dict] = None):
        event = {'timestamp': _now(), 'level': level.value, 'message': message, 'data': data or {}}
        self.events.append(event)

        line = message if not data else f"{message} | {_json(data, indent=None)}"
        self.file_logger.log(level.python_level, line)

        if self.console:
            print(f"{GLYPHS.get(level.value, '•')} {message}")
            if data and level in (LogLevel.ERROR, LogLevel.WARNING, LogLevel.VERBOSE):
                print(f"  {_json(data)}")

        atomic_write_text(_json(self.events), self.events_log)

    def _stage(self, name: str) -> Dict:
        return self.progress['stages'].setdefault(name, {
            'status': 'pending', 'progress': 0, 'started_at': None, 'completed_at': None,
        })

    def start_stage(self, stage_name: str, total_items: Optional[int] = None):
        """
        Args:
            stage_name: Pipeline command, one of PIPELINE_STAGES
            total_items: Instances, runs or episodes the stage will go through
        """
        if stage_name not in PIPELINE_STAGES:
            raise ValueError(f"Unknown stage '{stage_name}'")
        stage = self._stage(stage_name)
        stage.update(status='in_progress', progress=0, started_at=_now())
        if total_items:
            stage['total_items'] = total_items
        self.progress['current_stage'] = stage_name
        self.progress['status'] = 'running'
        self._stage_clock[stage_name] = time.time()

        self.log(LogLevel.INFO, f"Stage started: {stage_name}", {'total_items': total_items})
        self._save_progress()

    def update_stage_progress(self, stage_name: str, progress: int, message: Optional[str] = None):
        """progress is a percentage, clipped to 0..100"""
        progress = max(0, min(100, int(progress)))
        self._stage(stage_name)['progress'] = progress
        data = {'stage': stage_name, 'progress': progress}
        if message:
            data['message'] = message
        self.log(LogLevel.PROGRESS, f"{stage_name}: {progress}%" + (f" ({message})" if message else ""), data)
        self._save_progress()

    def complete_stage(self, stage_name: str, result: Optional[Dict] = None):
        stage = self._stage(stage_name)
        stage.update(status='completed', progress=100, completed_at=_now())
        if stage_name in self._stage_clock:
            stage['elapsed_seconds'] = round(time.time() - self._stage_clock[stage_name], 3)
        if result:
            stage['result'] = result
        self.log(LogLevel.SUCCESS, f"Stage completed: {stage_name}", result)
        self._save_progress()

    def fail_stage(self, stage_name: str, error: str):
        self._stage(stage_name).update(status='failed', error=error)
        self.progress['status'] = 'failed'
        self.progress['errors'].append({'stage': stage_name, 'error': error, 'timestamp': _now()})
        self.log(LogLevel.ERROR, f"Stage failed: {stage_name}", {'error': error})
        self._save_progress()

    def complete_pipeline(self, final_results: Dict):
        """Mark the session complete; final_results lands in progress.json"""
        elapsed = time.time() - self.session_start
        self.progress.update(status='completed', completed_at=_now(), final_results=final_results,
                             elapsed_time=elapsed)
        self.log(LogLevel.SUCCESS, "Session completed", {
            'elapsed_seconds': round(elapsed, 1),
            'artifacts': len(final_results.get('artifacts', [])),
        })
        self._save_progress()

    def summary(self) -> Dict:
        """Status and elapsed seconds per stage touched in this session"""
        return {
            'session_id': self.session_id,
            'status': self.progress['status'],
            'stages': {name: {'status': s['status'], 'elapsed_seconds': s.get('elapsed_seconds')}
                       for name, s in self.progress['stages'].items()},
            'errors': len(self.progress['errors']),
        }

    def _save_progress(self):
        atomic_write_text(_json(self.progress), self.progress_log)
