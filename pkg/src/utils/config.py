"""
Run configuration: one YAML mapping per section, every key with a default.

    seed: 0
    data:     synthetic dataset spec (see synthdata.DataSpec)
    arch:     layer widths and initialization
    train:    curriculum, SGD and anchor-training settings
    reg:      regularization weights, mixture size and EM settings
    eval:     retrieval, unit and export settings
    zeroshot: class holdout
    acceptance: trend floors for the slow end-to-end tests

Unknown sections or keys are rejected. The resolved configuration, defaults
materialized, is stored in every run directory.
"""

import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Union, get_args, get_type_hints

import yaml

from ..crossmodal import ArchConfig, CurriculumSchedule, RegConfig
from ..density import EmConfig
from ..errors import ConfigError
from ..synthdata import DataSpec, ModalitySpec

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = Path(__file__).resolve().parents[2] / "config" / "config.yml"


@dataclass
class TrainSection:
    total_iters: int = 2000
    freeze_iters: int = 1000
    lr: float = 0.05
    batch_size: int = 32
    weight_decay: float = 5e-4
    anchor_iters: int = 2000
    anchor_lr: float = 0.05
    log_every: int = 50
    replay_anchor: bool = True

    def schedule(self) -> CurriculumSchedule:
        return CurriculumSchedule(total_iters=self.total_iters, freeze_iters=self.freeze_iters,
                                  lr=self.lr, batch_size=self.batch_size,
                                  weight_decay=self.weight_decay)

    def anchor_schedule(self) -> CurriculumSchedule:
        return CurriculumSchedule(total_iters=self.anchor_iters, freeze_iters=0, lr=self.anchor_lr,
                                  batch_size=self.batch_size, weight_decay=self.weight_decay)


@dataclass
class RegSection:
    lambda_shared_in: float = 0.1
    lambda_fc6: float = 0.1
    lambda_fc7: float = 0.1
    K: int = 8
    variance_floor: float = 0.05
    em_tol: float = 1e-6
    em_max_iters: int = 200
    max_samples: int = 1000
    regularize_anchor: bool = False

    def reg_config(self) -> RegConfig:
        return RegConfig(lambdas={"shared_in": self.lambda_shared_in, "fc6": self.lambda_fc6,
                                  "fc7": self.lambda_fc7},
                         n_components=self.K, regularize_anchor=self.regularize_anchor)

    def em_config(self) -> EmConfig:
        return EmConfig(n_components=self.K, max_iters=self.em_max_iters, tol=self.em_tol,
                        variance_floor=self.variance_floor)


@dataclass
class EvalSection:
    n_queries: int = 1000
    layer: str = "fc7"
    pr_k: int = 10
    top_k: int = 5
    units_layer: str = "shared_in"
    min_anchor_agree: int = 4
    n_permutations: int = 20
    export_cap: int = 1000
    purity_k: int = 10
    chance_trials: int = 20
    gradcheck_tol: float = 1e-5
    gradcheck_seeds: int = 10


@dataclass
class ZeroShotSection:
    holdout_frac: float = 0.0


@dataclass
class AcceptanceSection:
    """Trend floors checked by the slow acceptance tests, averaged over ``seeds`` runs"""

    seeds: int = 5
    map_over_chance: float = 2.0
    joint_gain: float = 0.0
    holdout_frac: float = 0.3
    zeroshot_deficit: float = 0.05
    zeroshot_map_over_chance: float = 1.0
    units_margin: float = 0.0


SECTIONS = {
    "data": DataSpec,
    "arch": ArchConfig,
    "train": TrainSection,
    "reg": RegSection,
    "eval": EvalSection,
    "zeroshot": ZeroShotSection,
    "acceptance": AcceptanceSection,
}


@dataclass
class RunConfig:
    seed: int = 0
    data: DataSpec = field(default_factory=DataSpec)
    arch: ArchConfig = field(default_factory=ArchConfig)
    train: TrainSection = field(default_factory=TrainSection)
    reg: RegSection = field(default_factory=RegSection)
    eval: EvalSection = field(default_factory=EvalSection)
    zeroshot: ZeroShotSection = field(default_factory=ZeroShotSection)
    acceptance: AcceptanceSection = field(default_factory=AcceptanceSection)

    def validate(self) -> None:
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"must be a 64-bit unsigned integer, got {self.seed}", key="seed")
        self.data.validate()
        try:
            self.arch.validate()
        except ValueError as e:
            raise ConfigError(str(e), key="arch") from e
        self.train.schedule().validate()
        self.reg.reg_config().validate()
        if self.train.anchor_iters < 0 or self.train.anchor_lr <= 0:
            raise ConfigError("anchor_iters must be >= 0 and anchor_lr positive", key="train")
        if self.reg.variance_floor <= 0:
            raise ConfigError(f"must be positive, got {self.reg.variance_floor}", key="reg.variance_floor")
        if self.eval.n_queries < 1:
            raise ConfigError(f"must be >= 1, got {self.eval.n_queries}", key="eval.n_queries")
        if not 0.0 <= self.zeroshot.holdout_frac < 1.0:
            raise ConfigError(f"must lie in [0, 1), got {self.zeroshot.holdout_frac}",
                              key="zeroshot.holdout_frac")
        if self.acceptance.seeds < 1:
            raise ConfigError(f"must be >= 1, got {self.acceptance.seeds}", key="acceptance.seeds")
        if not 0.0 < self.acceptance.holdout_frac < 1.0:
            raise ConfigError(f"must lie in (0, 1), got {self.acceptance.holdout_frac}",
                              key="acceptance.holdout_frac")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def fingerprint(self, sections: Iterable[str], extra: Optional[Mapping[str, Any]] = None) -> str:
        """Hash of the seed, the named sections and ``extra``, identifying a stage's inputs."""
        resolved = self.to_dict()
        selected = {"seed": self.seed, **{name: resolved[name] for name in sorted(sections)}}
        if extra:
            selected["extra"] = dict(extra)
        return hashlib.sha256(json.dumps(selected, sort_keys=True).encode("utf-8")).hexdigest()


def _coerce(value: Any, annotation: Any, key: str) -> Any:
    args = get_args(annotation)
    optional = type(None) in args
    base = next(a for a in args if a is not type(None)) if optional else annotation
    if value is None:
        if optional:
            return None
        raise ConfigError("must not be null", key=key)
    if base is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", key=key)
        return value
    if base is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", key=key)
        return value
    if base is float:
        if isinstance(value, bool):
            raise ConfigError(f"expected a number, got {value!r}", key=key)
        try:
            # YAML 1.1 reads "1e-3" as a string
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"expected a number, got {value!r}", key=key) from None
    if base is str and not isinstance(value, str):
        raise ConfigError(f"expected a string, got {value!r}", key=key)
    return value


def _build(cls, values: Optional[Mapping[str, Any]], section: str):
    if values is None:
        return cls()
    if not isinstance(values, Mapping):
        raise ConfigError(f"expected a mapping, got {type(values).__name__}", key=section)
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f"unknown keys {unknown}", key=section)
    missing = sorted(f.name for f in dataclasses.fields(cls)
                     if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
                     and f.name not in values)
    if missing:
        raise ConfigError(f"missing required keys {missing}", key=section)
    kwargs = {}
    for name, value in values.items():
        key = f"{section}.{name}"
        if cls is DataSpec and name == "modalities":
            if not isinstance(value, list) or not value:
                raise ConfigError("expected a non-empty list of modality mappings", key=key)
            kwargs[name] = [_build(ModalitySpec, item, f"{key}[{i}]") for i, item in enumerate(value)]
        else:
            kwargs[name] = _coerce(value, hints[name], key)
    return cls(**kwargs)


def config_from_dict(raw: Optional[Mapping[str, Any]]) -> RunConfig:
    raw = dict(raw or {})
    unknown = sorted(set(raw) - set(SECTIONS) - {"seed"})
    if unknown:
        raise ConfigError(f"unknown sections {unknown}")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"expected an integer, got {seed!r}", key="seed")
    config = RunConfig(seed=seed, **{name: _build(cls, raw.get(name), name)
                                     for name, cls in SECTIONS.items()})
    config.validate()
    return config


def resolve_config_path(path: Optional[Union[str, Path]] = None) -> Path:
    if path is not None:
        return Path(path)
    return Path(os.environ.get("XMODAL_CONFIG") or DEFAULT_CONFIG)


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Load and validate a YAML run configuration

    Args:
        path: Config file; XMODAL_CONFIG or config/config.yml when None

    Returns:
        Validated RunConfig with every default materialized
    """
    path = resolve_config_path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from e
    if raw is not None and not isinstance(raw, Mapping):
        raise ConfigError(f"{path} must contain a mapping of sections")
    config = config_from_dict(raw)
    logger.debug(f"Loaded configuration from {path}")
    return config


def save_config(config: RunConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(config.to_dict(), f, sort_keys=True, default_flow_style=False)
    return path
