"""
Run-manifest logging.

Every completed pipeline stage appends one JSON object to a JSON-lines file:
which stage ran, under which config hash and seed, how long it took and what
it produced. The same events are mirrored to the standard logger.
"""

import json
import logging
import time
import traceback
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

from filelock import FileLock

logger = logging.getLogger(__name__)


class RunEventType(Enum):
    """Kinds of run-manifest events."""
    STAGE_STARTED = "stage_started"
    STAGE_COMPLETED = "stage_completed"
    STAGE_FAILED = "stage_failed"
    ARTIFACT_WRITTEN = "artifact_written"
    WARNING = "warning"


class RunSeverity(Enum):
    DEBUG = "debug"
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"


_LEVELS = {
    RunSeverity.DEBUG: logging.DEBUG,
    RunSeverity.INFO: logging.INFO,
    RunSeverity.WARNING: logging.WARNING,
    RunSeverity.ERROR: logging.ERROR,
}


@dataclass
class RunEvent:
    """One line of the run manifest."""
    event_type: RunEventType
    severity: RunSeverity
    message: str
    timestamp: str

    stage: Optional[str] = None
    stage_id: Optional[str] = None
    config_hash: Optional[str] = None
    seed: Optional[int] = None

    duration_ms: Optional[float] = None
    record_count: Optional[int] = None
    metrics: Optional[Dict[str, Any]] = None
    artifact: Optional[str] = None

    error_type: Optional[str] = None
    error_details: Optional[str] = None
    stack_trace: Optional[str] = None


class RunLogger:
    """Appends RunEvents to a JSON-lines file, serialised by a file lock."""

    def __init__(self, log_path: Path):
        self.log_path = Path(log_path)
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = FileLock(str(self.log_path) + ".lock")
        self._stage_starts: Dict[str, float] = {}
        self._stage_meta: Dict[str, Dict[str, Any]] = {}

    def log_event(self, event: RunEvent) -> None:
        """Append one event and mirror it to the standard logger"""
        event_dict = asdict(event)
        event_dict['event_type'] = event.event_type.value
        event_dict['severity'] = event.severity.value
        # Drop unset fields to keep lines short
        event_dict = {k: v for k, v in event_dict.items() if v is not None}

        with self._lock:
            with open(self.log_path, 'a', encoding='utf-8') as f:
                f.write(json.dumps(event_dict, default=str, sort_keys=True) + '\n')

        logger.log(_LEVELS[event.severity], f"[{event.event_type.value}] {event.message}")

    def start_stage(self, stage: str, config_hash: Optional[str] = None, seed: Optional[int] = None) -> str:
        """Start timing a stage and return its id"""
        stage_id = f"{stage}_{datetime.now().strftime('%H%M%S_%f')}"
        self._stage_starts[stage_id] = time.perf_counter()
        self._stage_meta[stage_id] = {"stage": stage, "config_hash": config_hash, "seed": seed}
        logger.info(f"Started stage {stage} (config {config_hash}, seed {seed})")
        return stage_id

    def complete_stage(self, stage_id: str,
                       success: bool = True,
                       message: Optional[str] = None,
                       record_count: Optional[int] = None,
                       metrics: Optional[Dict[str, Any]] = None,
                       artifact: Optional[Path] = None,
                       error: Optional[BaseException] = None) -> None:
        """Write the completion (or failure) line with wall time"""
        start = self._stage_starts.pop(stage_id, None)
        meta = self._stage_meta.pop(stage_id, {})
        duration_ms = (time.perf_counter() - start) * 1000 if start is not None else None
        stage = meta.get("stage", stage_id)

        event = RunEvent(
            event_type=RunEventType.STAGE_COMPLETED if success else RunEventType.STAGE_FAILED,
            severity=RunSeverity.INFO if success else RunSeverity.ERROR,
            message=message or f"{'Completed' if success else 'Failed'} stage: {stage}",
            timestamp=datetime.now(timezone.utc).isoformat(),
            stage=stage,
            stage_id=stage_id,
            config_hash=meta.get("config_hash"),
            seed=meta.get("seed"),
            duration_ms=duration_ms,
            record_count=record_count,
            metrics=metrics,
            artifact=str(artifact) if artifact is not None else None,
        )
        if error is not None:
            event.error_type = type(error).__name__
            event.error_details = str(error)
            event.stack_trace = "".join(traceback.format_exception(type(error), error, error.__traceback__))
        self.log_event(event)

    def read_events(self) -> List[Dict[str, Any]]:
        """Read back every event in the log"""
        if not self.log_path.exists():
            return []
        with self._lock:
            lines = self.log_path.read_text(encoding='utf-8').splitlines()
        return [json.loads(line) for line in lines if line.strip()]
