import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union


class RunDirectory:
    """
    Layout of one experiment run and its stage bookkeeping.

    <run_dir>/config.yml             resolved configuration
    <run_dir>/dataset.xmds           generated dataset
    <run_dir>/anchor.xmck            trained anchor network
    <run_dir>/densities/             XMDM1 blobs per kind and layer
    <run_dir>/checkpoints/<s>.xmck   one checkpoint per strategy
    <run_dir>/logs/                  xmodal.log and train_<s>.jsonl
    <run_dir>/reports/               JSON and text reports, embedding CSVs
    <run_dir>/state.json             completed stages with input fingerprints
    """

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.logger = logging.getLogger(__name__)
        self.state_file = self.root / "state.json"
        self.stages: Dict[str, Dict[str, Any]] = {}
        self._load_state()

    def ensure(self) -> "RunDirectory":
        for directory in (self.root, self.densities_dir, self.checkpoints_dir, self.logs_dir,
                          self.reports_dir):
            directory.mkdir(parents=True, exist_ok=True)
        return self

    @property
    def config_path(self) -> Path:
        return self.root / "config.yml"

    @property
    def dataset_path(self) -> Path:
        return self.root / "dataset.xmds"

    @property
    def anchor_path(self) -> Path:
        return self.root / "anchor.xmck"

    @property
    def densities_dir(self) -> Path:
        return self.root / "densities"

    @property
    def checkpoints_dir(self) -> Path:
        return self.root / "checkpoints"

    @property
    def logs_dir(self) -> Path:
        return self.root / "logs"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    def checkpoint_path(self, strategy: str) -> Path:
        return self.checkpoints_dir / f"{strategy}.xmck"

    def training_log_path(self, strategy: str) -> Path:
        return self.logs_dir / f"train_{strategy}.jsonl"

    def trained_strategies(self) -> List[str]:
        if not self.checkpoints_dir.exists():
            return []
        return sorted(path.stem for path in self.checkpoints_dir.glob("*.xmck"))

    def _load_state(self) -> None:
        if not self.state_file.exists():
            return
        try:
            with open(self.state_file, "r", encoding="utf-8") as f:
                self.stages = json.load(f).get("stages", {})
            self.logger.debug(f"Loaded run state from {self.state_file}")
        except (OSError, json.JSONDecodeError) as e:
            self.logger.warning(f"Ignoring unreadable run state {self.state_file}: {e}")
            self.stages = {}

    def _save_state(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        with open(self.state_file, "w", encoding="utf-8") as f:
            json.dump({"stages": self.stages}, f, sort_keys=True, indent=2)

    def is_complete(self, stage: str, fingerprint: str,
                    artifacts: Optional[List[Path]] = None) -> bool:
        """A stage is complete when its fingerprint matches and its artifacts exist."""
        entry = self.stages.get(stage)
        if entry is None or entry.get("fingerprint") != fingerprint:
            return False
        return all(Path(path).exists() for path in (artifacts or []))

    def mark_complete(self, stage: str, fingerprint: str) -> None:
        self.stages[stage] = {"fingerprint": fingerprint}
        self._save_state()
        self.logger.info(f"Stage {stage} complete")

    def invalidate(self, prefix: str) -> None:
        """Forget every stage whose name starts with ``prefix``."""
        stale = [name for name in self.stages if name.startswith(prefix)]
        for name in stale:
            del self.stages[name]
        if stale:
            self._save_state()
