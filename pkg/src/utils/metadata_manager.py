"""Run manifest management for simulation artifacts."""

import json
import logging
from pathlib import Path
from datetime import datetime, timezone
from typing import Optional, Dict, Any, Iterable

from src.utils.errors import ArtifactIOError


class RunManifest:
    """JSON record of one scenario run: config echo, outcome and artifacts."""

    def __init__(self, manifest_path: str = "results/manifest.json", logger: Optional[logging.Logger] = None):
        """
        Initialize run manifest.

        Args:
            manifest_path: Path to manifest JSON file
            logger: Optional logger instance
        """
        self.manifest_path = Path(manifest_path)
        self.logger = logger or logging.getLogger(__name__)
        self.manifest = self._load()

    def _load(self) -> Dict[str, Any]:
        """Load an existing manifest (e.g. from an earlier run in the same directory)."""
        if self.manifest_path.exists():
            try:
                with open(self.manifest_path, 'r') as f:
                    return json.load(f)
            except Exception as e:
                self.logger.warning(f"Error loading manifest: {e}. Starting fresh.")
                return self._default_manifest()
        return self._default_manifest()

    def _default_manifest(self) -> Dict[str, Any]:
        """Return default manifest structure."""
        return {
            "config": None,
            "termination": None,
            "exit_code": None,
            "wall_time_seconds": None,
            "steps": 0,
            "samples": 0,
            "final_time": None,
            "flags": [],
            "artifacts": [],
            "error": None,
            "created_at": datetime.now(timezone.utc).isoformat()
        }

    def save(self):
        """Save manifest to file."""
        try:
            self.manifest_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.manifest_path, 'w') as f:
                json.dump(self.manifest, f, indent=2, sort_keys=True)
            self.logger.debug(f"Saved manifest to {self.manifest_path}")
        except OSError as e:
            raise ArtifactIOError(f"cannot write manifest {self.manifest_path}: {e}") from e

    def record_config(self, config: Dict[str, Any]):
        """Echo the validated configuration."""
        self.manifest["config"] = config

    def record_outcome(self, termination: str, exit_code: int, wall_time: float, steps: int,
                       samples: int, final_time: Optional[float], flags: Iterable[str]):
        """
        Record how the run ended.

        Args:
            termination: 't_end', 'blowup_suspected' or a failure reason
            exit_code: Process exit status
            wall_time: Seconds spent simulating
            steps: RK4 steps taken
            samples: Monitor samples recorded
            final_time: Simulation time reached
            flags: Detection flags raised
        """
        self.manifest.update({
            "termination": termination,
            "exit_code": int(exit_code),
            "wall_time_seconds": float(wall_time),
            "steps": int(steps),
            "samples": int(samples),
            "final_time": None if final_time is None else float(final_time),
            "flags": sorted(set(flags)),
            "finished_at": datetime.now(timezone.utc).isoformat()
        })
        self.logger.info(f"Run finished: {termination} (exit {exit_code}) after {steps} steps")

    def record_error(self, error: Exception):
        self.manifest["error"] = f"{type(error).__name__}: {error}"

    def add_artifact(self, path: Path):
        name = str(path)
        if name not in self.manifest["artifacts"]:
            self.manifest["artifacts"].append(name)

